//! Experiments behind the command-line tool: model generation, sweeps,
//! phase scans, kernel-design comparisons, the image patch pipeline and EM.

pub mod design;
pub mod em;
pub mod generate;
pub mod image;
pub mod phase;
pub mod sweep;
pub mod table;

pub use design::{design_compare, design_table, DesignCompareSpec, DesignRow};
pub use em::{fit_em, load_patches, EmFit, EmSpec};
pub use generate::{gen_model, GenModelSpec, ModelKind};
pub use image::{
    assemble_patches, extract_patches, pipeline_table, projection_psnr, psnr, read_pgm,
    run_image_pipeline, truncate_covariance, truncate_prior, write_pgm, Image, PipelineResult,
    PipelineSpec, PsnrRow,
};
pub use phase::{phase_scan, phase_table, PhaseRow, PhaseScanSpec};
pub use sweep::{run_sweep, sweep_table, QuantityRegistry, SweepQuantity, SweepRow, SweepSpec};
pub use table::{Cell, Table};
