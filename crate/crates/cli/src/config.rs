//! TOML run configuration: one document describes the metric, the surface,
//! the optimizer, and the experiment ladders; the command picks which parts
//! it needs. Unknown keys are rejected so typos surface as one-line errors
//! naming the key instead of silently falling back to defaults.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use willmore_core::error::{Error, Result};
use willmore_core::experiments::{SweepMode, SweepSpec};
use willmore_core::verify::VerifyConfig;
use willmore_core::{MetricModel, OptimizeOptions, SphereParam};

use crate::files;

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub metric: MetricSection,
    pub surface: SurfaceSection,
    pub optimizer: OptimizeOptions,
    pub sweep: SweepSection,
    pub gradient: GradientSection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

/// A parsed configuration plus the provenance that goes into output
/// headers: the SHA-256 of the raw document and the directory it lives in
/// (file references inside the document resolve relative to it).
pub struct Loaded {
    pub cfg: RunConfig,
    pub base_dir: PathBuf,
    pub hash: String,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::Parse(format!("config {}: {e}", path.display())))?;
    let cfg: RunConfig = toml::from_str(text)
        .map_err(|e| Error::Parse(format!("config {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let hash = format!("{:x}", hasher.finalize());
    let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    Ok(Loaded { cfg, base_dir, hash })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSection {
    /// One of `flat`, `space_form`, `quadratic_curvature`.
    pub kind: String,
    /// Sectional curvature for `space_form`.
    pub k: f64,
    /// Chart radius: every surface must stay inside the ball of this radius.
    pub rho: f64,
    /// Ricci tensor at the origin for `quadratic_curvature`, row major.
    pub ric0: [[f64; 3]; 3],
    /// Scalar-curvature gradient at the origin for `quadratic_curvature`.
    pub scal_grad0: [f64; 3],
}

impl Default for MetricSection {
    fn default() -> Self {
        MetricSection {
            kind: "flat".into(),
            k: 0.0,
            rho: 1.0,
            ric0: [[0.0; 3]; 3],
            scal_grad0: [0.0; 3],
        }
    }
}

impl MetricSection {
    pub fn build(&self) -> Result<MetricModel> {
        match self.kind.as_str() {
            "flat" => MetricModel::flat(self.rho),
            "space_form" => MetricModel::space_form(self.k, self.rho),
            "quadratic_curvature" => MetricModel::quadratic_curvature(
                Matrix3::from_fn(|i, j| self.ric0[i][j]),
                Vector3::from(self.scal_grad0),
                self.rho,
            ),
            other => Err(Error::Validation(format!(
                "metric.kind: unknown value \"{other}\" (expected flat, space_form, or quadratic_curvature)"
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSection {
    /// Path to a surface file written by `minimize`; mutually exclusive
    /// with the inline round-sphere fields below.
    pub file: Option<PathBuf>,
    pub radius: f64,
    pub center: [f64; 3],
    pub band_limit: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        SurfaceSection {
            file: None,
            radius: 0.1,
            center: [0.0; 3],
            band_limit: 4,
            n_theta: 16,
            n_phi: 32,
        }
    }
}

impl SurfaceSection {
    pub fn build(
        &self,
        base_dir: &Path,
        radius_override: Option<f64>,
        band_override: Option<usize>,
    ) -> Result<SphereParam> {
        if let Some(file) = &self.file {
            if radius_override.is_some() || band_override.is_some() {
                return Err(Error::Validation(
                    "surface.file cannot be combined with --radius or --band-limit overrides"
                        .into(),
                ));
            }
            let path = if file.is_absolute() { file.clone() } else { base_dir.join(file) };
            return files::read_surface(&path);
        }
        SphereParam::round_sphere(
            Vector3::from(self.center),
            radius_override.unwrap_or(self.radius),
            band_override.unwrap_or(self.band_limit),
            self.n_theta,
            self.n_phi,
        )
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Strictly descending ladder.
    pub radii: Vec<f64>,
    pub mode: SweepMode,
    pub band_limit: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            radii: vec![0.16, 0.08, 0.04, 0.02],
            mode: SweepMode::GeodesicSpheres,
            band_limit: 4,
            n_theta: 24,
            n_phi: 48,
        }
    }
}

impl SweepSection {
    pub fn to_spec(
        &self,
        model: MetricModel,
        optimizer: OptimizeOptions,
        band_override: Option<usize>,
    ) -> SweepSpec {
        SweepSpec {
            model,
            radii: self.radii.clone(),
            mode: self.mode,
            l_max: band_override.unwrap_or(self.band_limit),
            n_theta: self.n_theta,
            n_phi: self.n_phi,
            optimizer,
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct GradientSection {
    /// Direction of the variation field; defaults to the normalized
    /// scalar-curvature gradient of the model.
    pub b: Option<[f64; 3]>,
    /// Ladder for the gradient experiment; defaults to `sweep.radii`.
    pub radii: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub surfaces: usize,
    pub pairs: usize,
    pub seed: u64,
    pub radius: f64,
    pub amplitude: f64,
    pub band_limit: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        let d = VerifyConfig::default();
        VerifySection {
            surfaces: d.surfaces,
            pairs: d.pairs,
            seed: d.seed,
            radius: d.radius,
            amplitude: d.amplitude,
            band_limit: d.l_max,
            n_theta: d.n_theta,
            n_phi: d.n_phi,
        }
    }
}

impl VerifySection {
    pub fn build(&self) -> VerifyConfig {
        VerifyConfig {
            surfaces: self.surfaces,
            pairs: self.pairs,
            seed: self.seed,
            radius: self.radius,
            amplitude: self.amplitude,
            l_max: self.band_limit,
            n_theta: self.n_theta,
            n_phi: self.n_phi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    StructuredText,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), format: OutputFormat::StructuredText }
    }
}
