//! Grayscale image patch pipeline.
//!
//! Pixel intensities are held on `[0, 1]` (8-bit value / 255), so a PSNR
//! with peak 1 here equals the usual peak-255 PSNR on raw pixels. Model
//! files used with images must be on the same scale.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageReader};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::table::Table;
use crate::error::{Error, Result};
use crate::estimators::MixtureDecoder;
use crate::kernel::{KernelStrategy, RandomKernel};
use crate::model::linalg::symmetrize;
use crate::model::sampling::draw_noise;
use crate::model::{eig_psd, GaussianSource, GmmSource, MeasurementSystem};
use crate::rng::{derive_seed, rng_from_seed};

/// Noise variance used when assigning clean patches to classes.
pub const ASSIGNMENT_NOISE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities on `[0, 1]`.
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "pixel count must match the size");
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { width, height, data }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Rounds to the 8-bit grid after clamping to `[0, 1]`.
    pub fn quantized(&self) -> Image {
        let data = self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0).collect();
        Image::new(self.width, self.height, data)
    }

    /// Top-left region whose sides are multiples of `patch`.
    pub fn crop_to(&self, patch: usize) -> Result<Image> {
        if patch == 0 || self.width < patch || self.height < patch {
            return Err(Error::invalid(format!(
                "a {}x{} image holds no {patch}x{patch} patch",
                self.width, self.height
            )));
        }
        let w = self.width / patch * patch;
        let h = self.height / patch * patch;
        Ok(Image::from_fn(w, h, |r, c| self.get(r, c)))
    }
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader.with_guessed_format().map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })?;
    let gray = decoded.to_luma8();
    let (w, h) = gray.dimensions();
    let data = gray.as_raw().iter().map(|&p| p as f64 / 255.0).collect();
    Ok(Image::new(w as usize, h as usize, data))
}

/// Binary (P5) 8-bit output; intensities are clamped and rounded.
pub fn write_pgm(image: &Image, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = image
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let encoder = PnmEncoder::new(BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    encoder
        .write_image(&bytes, image.width as u32, image.height as u32, ExtendedColorType::L8)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::format(path, other.to_string()),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchLayout {
    pub patch: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PatchLayout {
    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn dim(&self) -> usize {
        self.patch * self.patch
    }
}

/// Non-overlapping `patch×patch` blocks of the cropped image as columns
/// (pixels row-major inside a block, blocks row-major over the grid).
pub fn extract_patches(image: &Image, patch: usize) -> Result<(DMatrix<f64>, PatchLayout)> {
    let img = image.crop_to(patch)?;
    let layout = PatchLayout {
        patch,
        rows: img.height / patch,
        cols: img.width / patch,
    };
    let mut out = DMatrix::zeros(layout.dim(), layout.count());
    for br in 0..layout.rows {
        for bc in 0..layout.cols {
            let j = br * layout.cols + bc;
            for r in 0..patch {
                for c in 0..patch {
                    out[(r * patch + c, j)] = img.get(br * patch + r, bc * patch + c);
                }
            }
        }
    }
    Ok((out, layout))
}

pub fn assemble_patches(patches: &DMatrix<f64>, layout: &PatchLayout) -> Result<Image> {
    if patches.nrows() != layout.dim() || patches.ncols() != layout.count() {
        return Err(Error::DimensionMismatch {
            what: "patch matrix vs layout",
            expected: layout.dim() * layout.count(),
            got: patches.nrows() * patches.ncols(),
        });
    }
    let p = layout.patch;
    Ok(Image::from_fn(layout.cols * p, layout.rows * p, |r, c| {
        patches[((r % p) * p + c % p, (r / p) * layout.cols + c / p)]
    }))
}

/// `10·log10(1 / mse)` on the unit intensity scale.
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    if reference.width != test.width || reference.height != test.height {
        return Err(Error::invalid("PSNR needs images of equal size"));
    }
    let mse = reference
        .data
        .iter()
        .zip(&test.data)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / reference.data.len() as f64;
    Ok(10.0 * (1.0 / mse).log10())
}

/// Keeps the top `s_max` principal components: `U diag(λ₁..λ_{s_max}, 0..0) Uᵀ`.
pub fn truncate_covariance(covariance: &DMatrix<f64>, s_max: usize) -> Result<DMatrix<f64>> {
    let n = covariance.nrows();
    if s_max > n {
        return Err(Error::invalid(format!("s_max = {s_max} exceeds the dimension {n}")));
    }
    if s_max == n {
        return Ok(covariance.clone());
    }
    let eig = eig_psd(covariance)?;
    let u = eig.vectors.columns(0, s_max);
    let scaled = DMatrix::from_fn(n, s_max, |i, j| u[(i, j)] * eig.values[j]);
    Ok(symmetrize(&(scaled * u.transpose())))
}

pub fn truncate_prior(gmm: &GmmSource, s_max: usize) -> Result<GmmSource> {
    let components = gmm
        .components()
        .iter()
        .map(|c| GaussianSource::new(c.mean().clone(), truncate_covariance(c.covariance(), s_max)?))
        .collect::<Result<Vec<_>>>()?;
    GmmSource::new(gmm.weights().to_vec(), components)
}

/// Projects each column onto `μ_k + Im(Σ_k)` of its MAP class, the class
/// being decided from the clean patch observed at [`ASSIGNMENT_NOISE`].
pub fn project_patches(patches: &DMatrix<f64>, prior: &GmmSource) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let n = prior.dim();
    if patches.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "patch dimension vs prior dimension",
            expected: n,
            got: patches.nrows(),
        });
    }
    let system = MeasurementSystem::new(DMatrix::identity(n, n), ASSIGNMENT_NOISE)?;
    let decoder = MixtureDecoder::new(prior, &system)?;
    let bases: Vec<DMatrix<f64>> = prior.components().iter().map(|c| c.image_basis()).collect();
    let mut out = DMatrix::zeros(n, patches.ncols());
    let mut labels = Vec::with_capacity(patches.ncols());
    for (j, col) in patches.column_iter().enumerate() {
        let x: DVector<f64> = col.into_owned();
        let k = decoder.posterior(&x)?.map_class();
        let mean = prior.components()[k].mean();
        let d = &x - mean;
        let b = &bases[k];
        out.set_column(j, &(mean + b * (b.transpose() * d)));
        labels.push(k);
    }
    Ok((out, labels))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSpec {
    pub patch_size: usize,
    pub s_max: usize,
    pub ells: Vec<usize>,
    pub sigma2_grid: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsnrRow {
    pub sigma2: f64,
    pub ell: usize,
    pub psnr: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    /// PSNR of the projected image against the cropped input.
    pub projection_psnr: f64,
    pub projected: Image,
    pub rows: Vec<PsnrRow>,
    /// `(ℓ, σ², reconstruction)` in row order.
    pub reconstructions: Vec<(usize, f64, Image)>,
}

/// PSNR of the projection onto the `s_max`-truncated prior against the image.
pub fn projection_psnr(image: &Image, prior: &GmmSource, patch: usize, s_max: usize) -> Result<f64> {
    let (patches, layout) = extract_patches(image, patch)?;
    let truncated = truncate_prior(prior, s_max)?;
    let (projected, _) = project_patches(&patches, &truncated)?;
    psnr(&image.crop_to(patch)?, &assemble_patches(&projected, &layout)?)
}

/// Measures every projected patch through one random kernel per `ℓ` and
/// reconstructs it with the conditional mean of the truncated prior.
///
/// For a given `ℓ` the same standard-normal noise draws are scaled by `σ`
/// at every grid value, so PSNR differences across σ² are not masked by
/// fresh noise.
pub fn run_image_pipeline(image: &Image, prior: &GmmSource, spec: &PipelineSpec) -> Result<PipelineResult> {
    if spec.ells.is_empty() || spec.sigma2_grid.is_empty() || spec.ells.contains(&0) {
        return Err(Error::invalid("ℓ list and σ² grid must be nonempty with ℓ ≥ 1"));
    }
    if let Some(bad) = spec.sigma2_grid.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::invalid(format!("σ² values must be positive, got {bad}")));
    }
    let (patches, layout) = extract_patches(image, spec.patch_size)?;
    if prior.dim() != layout.dim() {
        return Err(Error::DimensionMismatch {
            what: "prior dimension vs patch size squared",
            expected: layout.dim(),
            got: prior.dim(),
        });
    }
    let truncated = truncate_prior(prior, spec.s_max)?;
    let (truth, _) = project_patches(&patches, &truncated)?;
    let projected = assemble_patches(&truth, &layout)?;
    let projection_psnr = psnr(&image.crop_to(spec.patch_size)?, &projected)?;

    let mut rows = Vec::new();
    let mut reconstructions = Vec::new();
    for &ell in &spec.ells {
        let kernel = RandomKernel.build(&truncated, ell, spec.sigma2_grid[0], spec.seed)?;
        let mut rng = rng_from_seed(derive_seed(spec.seed, &[0x696d_6167, ell as u64]));
        let unit_noise: Vec<DVector<f64>> = (0..layout.count()).map(|_| draw_noise(ell, 1.0, &mut rng)).collect();
        let clean = &kernel * &truth;
        for &s2 in &spec.sigma2_grid {
            let system = MeasurementSystem::new(kernel.clone(), s2)?;
            let decoder = MixtureDecoder::new(&truncated, &system)?;
            let sigma = s2.sqrt();
            let mut recon = DMatrix::zeros(layout.dim(), layout.count());
            for j in 0..layout.count() {
                let y = clean.column(j) + &unit_noise[j] * sigma;
                recon.set_column(j, &decoder.conditional_mean(&y)?);
            }
            let img = assemble_patches(&recon, &layout)?;
            rows.push(PsnrRow {
                sigma2: s2,
                ell,
                psnr: psnr(&projected, &img)?,
            });
            reconstructions.push((ell, s2, img));
        }
    }
    Ok(PipelineResult {
        projection_psnr,
        projected,
        rows,
        reconstructions,
    })
}

pub fn pipeline_table(spec: &PipelineSpec, label: &str, result: &PipelineResult) -> Table {
    let mut t = Table::new(vec!["sigma2", "ell", "psnr"]);
    t.meta("seed", spec.seed)
        .meta("image", label)
        .meta("projection_psnr", super::table::format_float(result.projection_psnr))
        .meta("spec", serde_json::to_string(spec).expect("specs serialize"));
    for r in &result.rows {
        t.push(vec![r.sigma2.into(), r.ell.into(), r.psnr.into()]);
    }
    t
}
