//! Experiment configuration: a single JSON document, with individual fields
//! overridable from the command line.

use anyhow::{bail, Context, Result};
use minktens::estimate::GWeight;
use minktens::profile::Psf;
use minktens::shapes::Shape;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Ellipse {
        center: Vec<f64>,
        semi_axes: [f64; 2],
    },
    RoundedBox {
        center: Vec<f64>,
        half_widths: [f64; 2],
        corner_radius: f64,
    },
}

impl ShapeSpec {
    pub fn build(&self, dim: usize) -> Result<Shape> {
        Ok(match self {
            ShapeSpec::Ball { center, radius } => Shape::ball(dim, center, *radius)?,
            ShapeSpec::Ellipse { center, semi_axes } => {
                Shape::ellipse(center, semi_axes[0], semi_axes[1])?
            }
            ShapeSpec::RoundedBox {
                center,
                half_widths,
                corner_radius,
            } => Shape::rounded_box(center, *half_widths, *corner_radius)?,
        })
    }

    pub fn label(&self) -> String {
        match self {
            ShapeSpec::Ball { radius, .. } => format!("ball_r{radius}"),
            ShapeSpec::Ellipse { semi_axes, .. } => {
                format!("ellipse_{}x{}", semi_axes[0], semi_axes[1])
            }
            ShapeSpec::RoundedBox {
                half_widths,
                corner_radius,
                ..
            } => format!(
                "rounded_box_{}x{}_r{corner_radius}",
                half_widths[0], half_widths[1]
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsfSpec {
    Gaussian,
    Ball { radius: f64 },
}

impl PsfSpec {
    pub fn build(&self, dim: usize) -> Result<Psf> {
        Ok(match self {
            PsfSpec::Gaussian => Psf::gaussian(dim),
            PsfSpec::Ball { radius } => Psf::ball(dim, *radius)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GWeightSpec {
    CenteredLinear,
    StepSign,
}

impl GWeightSpec {
    pub fn build(&self) -> GWeight {
        match self {
            GWeightSpec::CenteredLinear => GWeight::CenteredLinear,
            GWeightSpec::StepSign => GWeight::StepSign,
        }
    }
}

fn default_beta() -> f64 {
    0.1
}
fn default_omega() -> f64 {
    0.9
}
fn default_epsilon() -> f64 {
    0.01
}
fn default_gweight() -> GWeightSpec {
    GWeightSpec::CenteredLinear
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Volume {
        r: u32,
        #[serde(default = "default_beta")]
        beta: f64,
    },
    Surface2 {
        r: u32,
        s: u32,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_omega")]
        omega: f64,
    },
    Surface3 {
        r: u32,
        s: u32,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    Curvature {
        r: u32,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_gweight")]
        g: GWeightSpec,
    },
}

impl EstimatorSpec {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorSpec::Volume { .. } => "volume",
            EstimatorSpec::Surface2 { .. } => "surface2",
            EstimatorSpec::Surface3 { .. } => "surface3",
            EstimatorSpec::Curvature { .. } => "curvature",
        }
    }
}

/// Pass/fail gates applied by `sweep` and `verify`; the process exit code
/// reports them.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Gates {
    /// Maximum relative bias at the finest resolution.
    pub max_rel_bias: Option<f64>,
    /// Minimum fitted log-log bias slope.
    pub min_slope: Option<f64>,
    /// Maximum relative first-order mismatch (verify).
    pub max_first_order_rel: Option<f64>,
    /// Maximum relative second-order mismatch (verify).
    pub max_second_order_rel: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationSpec {
    #[serde(default = "default_calib_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "default_calib_schedule")]
    pub a_schedule: Vec<f64>,
    #[serde(default = "default_calib_translations")]
    pub translations: usize,
}

fn default_calib_radii() -> Vec<f64> {
    vec![1.0]
}
fn default_calib_schedule() -> Vec<f64> {
    vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]
}
fn default_calib_translations() -> usize {
    2048
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        CalibrationSpec {
            radii: default_calib_radii(),
            a_schedule: default_calib_schedule(),
            translations: default_calib_translations(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub shape: ShapeSpec,
    pub psf: PsfSpec,
    pub estimator: Option<EstimatorSpec>,
    /// Strictly decreasing resolutions.
    pub a_schedule: Vec<f64>,
    #[serde(default = "default_translations")]
    pub translations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Read the intensity data from this image instead of synthesizing
    /// (forces a single translation).
    #[serde(default)]
    pub image: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub gates: Gates,
    #[serde(default)]
    pub calibration: CalibrationSpec,
    /// Margin of the render window in units of a * D_eff.
    #[serde(default = "default_margin")]
    pub window_margin: f64,
}

fn default_dim() -> usize {
    2
}
fn default_translations() -> usize {
    32
}
fn default_margin() -> f64 {
    2.0
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).context("parsing config JSON")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a_schedule.is_empty() {
            bail!("a_schedule must not be empty");
        }
        if self.a_schedule.windows(2).any(|w| w[1] >= w[0]) {
            bail!("a_schedule must be strictly decreasing");
        }
        if self.a_schedule.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            bail!("resolutions must be positive");
        }
        if self.translations < 1 {
            bail!("translations must be at least 1");
        }
        if self.dim != 2 && self.dim != 3 {
            bail!("dim must be 2 or 3");
        }
        Ok(())
    }

    /// Field-level overrides from the command line.
    pub fn apply_overrides(
        &mut self,
        a: Option<f64>,
        seed: Option<u64>,
        translations: Option<usize>,
        output: Option<PathBuf>,
    ) -> Result<()> {
        if let Some(a) = a {
            self.a_schedule = vec![a];
        }
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if let Some(t) = translations {
            self.translations = t;
        }
        if let Some(o) = output {
            self.output = Some(o);
        }
        self.validate()
    }

    /// Estimator-parameter overrides; parameters that do not apply to the
    /// configured estimator kind are rejected.
    pub fn apply_estimator_overrides(
        &mut self,
        r: Option<u32>,
        s: Option<u32>,
        beta: Option<f64>,
        omega: Option<f64>,
        epsilon: Option<f64>,
    ) -> Result<()> {
        if r.is_none() && s.is_none() && beta.is_none() && omega.is_none() && epsilon.is_none() {
            return Ok(());
        }
        let Some(est) = self.estimator.as_mut() else {
            bail!("estimator overrides need an estimator in the config");
        };
        match est {
            EstimatorSpec::Volume { r: er, beta: eb } => {
                if s.is_some() || omega.is_some() || epsilon.is_some() {
                    bail!("volume estimators take only --r and --beta");
                }
                *er = r.unwrap_or(*er);
                *eb = beta.unwrap_or(*eb);
            }
            EstimatorSpec::Surface2 {
                r: er,
                s: es,
                beta: eb,
                omega: eo,
            } => {
                if epsilon.is_some() {
                    bail!("--epsilon applies to the 3-block estimator");
                }
                *er = r.unwrap_or(*er);
                *es = s.unwrap_or(*es);
                *eb = beta.unwrap_or(*eb);
                *eo = omega.unwrap_or(*eo);
            }
            EstimatorSpec::Surface3 {
                r: er,
                s: es,
                beta: eb,
                epsilon: ee,
            } => {
                if omega.is_some() {
                    bail!("the 3-block upper threshold is 1 - beta; --omega does not apply");
                }
                *er = r.unwrap_or(*er);
                *es = s.unwrap_or(*es);
                *eb = beta.unwrap_or(*eb);
                *ee = epsilon.unwrap_or(*ee);
            }
            EstimatorSpec::Curvature { r: er, beta: eb, .. } => {
                if s.is_some() || omega.is_some() || epsilon.is_some() {
                    bail!("curvature estimators take only --r and --beta");
                }
                *er = r.unwrap_or(*er);
                *eb = beta.unwrap_or(*eb);
            }
        }
        Ok(())
    }
}
