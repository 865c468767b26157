//! Run configuration, read from TOML. Every section and field is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimension::DimensionConfig;
use crate::group::{
    cyclic, punctured_torus, schottky, symmetric_schottky, DedupMode, EnumerateConfig, GroupError, GroupSpec,
    SchottkyCircle,
};
use crate::hyperbolic::{Isometry, Tolerances};
use crate::semigroup::{ConstantsMode, DeepSearchConfig, StageConfig, SyntheticParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid group: {0}")]
    Group(#[from] GroupError),
    #[error("invalid value for {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GroupConfig {
    Schottky {
        #[serde(default = "default_generators")]
        generators: usize,
        #[serde(default = "default_length")]
        length: f64,
    },
    PuncturedTorus,
    Cyclic {
        #[serde(default = "default_translation")]
        translation: f64,
    },
    Circles {
        circles: Vec<SchottkyCircle>,
    },
    /// Row-major `(d + 1) x (d + 1)` matrices.
    Matrices {
        dim: usize,
        matrices: Vec<Vec<f64>>,
    },
}

fn default_generators() -> usize {
    2
}

fn default_length() -> f64 {
    2.0
}

fn default_translation() -> f64 {
    1.0
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig::Schottky { generators: 2, length: 2.0 }
    }
}

impl GroupConfig {
    pub fn build(&self, tol: &Tolerances) -> Result<GroupSpec, ConfigError> {
        Ok(match self {
            GroupConfig::Schottky { generators, length } => symmetric_schottky(*generators, *length, tol)?,
            GroupConfig::PuncturedTorus => punctured_torus(tol)?,
            GroupConfig::Cyclic { translation } => cyclic(*translation, tol)?,
            GroupConfig::Circles { circles } => schottky(circles, tol)?,
            GroupConfig::Matrices { dim, matrices } => {
                let generators = matrices
                    .iter()
                    .enumerate()
                    .map(|(i, m)| Isometry::from_matrix(m.clone(), vec![i as i32 + 1], tol.iso))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| ConfigError::Invalid { field: "group.matrices", reason: e.to_string() })?;
                GroupSpec::new(*dim, generators, "matrices", false, tol)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Enumeration radius for `enumerate`, `exponent` and `verify-lemmas`.
    pub radius: f64,
    pub max_elements: usize,
    /// Phases of `all` are skipped once this many seconds have passed.
    pub time_cap_secs: Option<f64>,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { radius: 12.0, max_elements: 4_000_000, time_cap_secs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    pub point: f64,
    pub iso: f64,
    pub dedup: f64,
    pub dedup_mode: DedupMode,
    /// Defaults to twice the largest generator norm.
    pub prune_margin: Option<f64>,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        let t = Tolerances::default();
        Self { point: t.point, iso: t.iso, dedup: 1e-7, dedup_mode: DedupMode::OrbitPoint, prune_margin: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentConfig {
    pub window_fraction: f64,
}

impl Default for ExponentConfig {
    fn default() -> Self {
        Self { window_fraction: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaConfig {
    pub four_point_cases: usize,
    pub max_norm: f64,
    pub chains: usize,
    pub tuples: usize,
    pub min_tuple: usize,
    pub max_tuple: usize,
    pub extension_slack: f64,
    /// Ball radius and `R0` of the alphabet used by the extension and
    /// injectivity checks.
    pub alphabet_radius: f64,
    pub epsilon: f64,
    pub injectivity_letters: usize,
    pub phi_radius: f64,
    pub synthetic: SyntheticParams,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        Self {
            four_point_cases: 10_000,
            max_norm: 15.0,
            chains: 1000,
            tuples: 1000,
            min_tuple: 2,
            max_tuple: 5,
            extension_slack: 1e-8,
            alphabet_radius: 9.0,
            epsilon: 0.5,
            injectivity_letters: 3,
            phi_radius: 12.0,
            synthetic: SyntheticParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeepConfig {
    pub m: f64,
    pub radius: f64,
    pub search: DeepSearchConfig,
}

impl Default for DeepConfig {
    fn default() -> Self {
        Self { m: 2.0, radius: 11.0, search: DeepSearchConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    pub r0: f64,
    /// Ball used for the alphabet and for deep elements.
    pub ball_radius: f64,
    pub epsilon: f64,
    pub stages: usize,
    pub synthetic: SyntheticParams,
    pub stage: StageConfig,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            r0: 10.0,
            ball_radius: 11.0,
            epsilon: 0.5,
            stages: 2,
            synthetic: SyntheticParams::default(),
            stage: StageConfig { truncation_radius: 36.0, ..StageConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    pub r0: f64,
    pub epsilon: f64,
    pub truncation_radius: f64,
    pub word_cap: usize,
    pub max_words: usize,
    pub window_fraction: f64,
    /// Offsets `s - delta_F` for the convergence trend.
    pub eps_s: Vec<f64>,
    /// Offset at which the shadow principle and the tail are asserted.
    pub check_eps: f64,
    pub shadow_factor: f64,
    pub max_letters: usize,
    pub upper_tol: f64,
    pub etas: Vec<f64>,
    /// Required tail decay as a multiple of `delta_F * eta`.
    pub decay_factor: f64,
    pub synthetic: SyntheticParams,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            r0: 10.0,
            epsilon: 0.5,
            truncation_radius: 28.0,
            word_cap: 12,
            max_words: 30_000_000,
            window_fraction: 0.8,
            eps_s: vec![0.2, 0.1, 0.05],
            check_eps: 0.1,
            shadow_factor: 8.0,
            max_letters: 3,
            upper_tol: 1e-4,
            etas: vec![0.2, 0.4],
            decay_factor: 0.25,
            synthetic: SyntheticParams {
                c_divisor: 20.0,
                annulus_frac: 1.0,
                separation_factor: 32.0,
                ..SyntheticParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DimensionRunConfig {
    pub radius: f64,
    pub max_gap: Option<f64>,
    pub max_residual: Option<f64>,
    #[serde(flatten)]
    pub estimator: DimensionConfig,
}

impl Default for DimensionRunConfig {
    fn default() -> Self {
        Self { radius: 14.0, max_gap: Some(0.1), max_residual: Some(0.1), estimator: DimensionConfig::default() }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub group: GroupConfig,
    pub mode: ConstantsMode,
    pub seed: u64,
    pub output: Option<String>,
    pub budgets: Budgets,
    pub tolerances: ToleranceConfig,
    pub exponent: ExponentConfig,
    pub lemmas: LemmaConfig,
    pub deep: DeepConfig,
    pub build: BuildConfig,
    pub measure: MeasureConfig,
    pub dimension: DimensionRunConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid { field, reason: format!("{v} is not a positive number") })
            }
        };
        positive("budgets.radius", self.budgets.radius)?;
        positive("tolerances.point", self.tolerances.point)?;
        positive("tolerances.dedup", self.tolerances.dedup)?;
        positive("dimension.radius", self.dimension.radius)?;
        positive("measure.truncation_radius", self.measure.truncation_radius)?;
        for (field, f) in [
            ("exponent.window_fraction", self.exponent.window_fraction),
            ("build.stage.window_fraction", self.build.stage.window_fraction),
            ("measure.window_fraction", self.measure.window_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(ConfigError::Invalid { field, reason: format!("{f} outside (0, 1)") });
            }
        }
        if self.lemmas.min_tuple < 1 || self.lemmas.min_tuple > self.lemmas.max_tuple {
            return Err(ConfigError::Invalid {
                field: "lemmas.min_tuple",
                reason: format!("empty range {}..={}", self.lemmas.min_tuple, self.lemmas.max_tuple),
            });
        }
        if self.measure.etas.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(ConfigError::Invalid { field: "measure.etas", reason: "each eta must lie in (0, 1)".into() });
        }
        self.group.build(&self.tolerances())?;
        Ok(())
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances { point: self.tolerances.point, iso: self.tolerances.iso }
    }

    pub fn enumerate_config(&self) -> EnumerateConfig {
        EnumerateConfig {
            dedup_tol: self.tolerances.dedup,
            prune_margin: self.tolerances.prune_margin,
            max_elements: self.budgets.max_elements,
            dedup_mode: self.tolerances.dedup_mode,
            tol: self.tolerances(),
        }
    }
}
