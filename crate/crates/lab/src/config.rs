//! Run configuration: a TOML tree describing the model, the schedule and the experiment.

use std::collections::BTreeMap;
use std::path::Path;

use heavybrw::brw::Prune;
use heavybrw::harness::{Case, InnerTail, RChoice, Schedule, TChoice};
use heavybrw::models::{BroodOutcome, CountAtom, CountLaw, PointProcessModel};
use heavybrw::regvar::SlowlyVarying;
use serde::{Deserialize, Serialize};

use crate::error::LabError;

/// Largest accepted seed; TOML integers are signed 64-bit.
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Assumptions,
    Nagaev,
    Spine,
    Theorem,
    ErrorTerms,
    DumpPopulation,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Assumptions => "assumptions",
            ExperimentKind::Nagaev => "nagaev",
            ExperimentKind::Spine => "spine",
            ExperimentKind::Theorem => "theorem",
            ExperimentKind::ErrorTerms => "error-terms",
            ExperimentKind::DumpPopulation => "dump-population",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EllSpec {
    #[default]
    One,
    LogPow { beta: f64 },
}

impl EllSpec {
    fn to_core(self) -> SlowlyVarying {
        match self {
            EllSpec::One => SlowlyVarying::One,
            EllSpec::LogPow { beta } => SlowlyVarying::LogPow { beta },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub count: u64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSpec {
    pub prob: f64,
    pub displacements: Vec<f64>,
}

/// Point-process family. A missing `b` selects the value with `m(1) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LawSpec {
    Poisson {
        p: f64,
        #[serde(default)]
        ell: EllSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<f64>,
    },
    Cox {
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<f64>,
        #[serde(default = "one")]
        gap_scale: f64,
    },
    Atoms {
        atoms: Vec<AtomSpec>,
    },
    LogLattice {
        p: f64,
    },
    Custom {
        outcomes: Vec<OutcomeSpec>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub law: LawSpec,
    /// Position cap `L` for sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    /// Rescale/shift so that `m(1) = 1`, starting from this `θ0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize_from: Option<f64>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<PointProcessModel, LabError> {
        let mut model = match &self.law {
            LawSpec::Poisson { p, ell, b: Some(b) } => PointProcessModel::poisson_regvar(*p, ell.to_core(), *b)?,
            LawSpec::Poisson { p, ell, b: None } => PointProcessModel::poisson_normalized(*p, ell.to_core())?,
            LawSpec::Cox { p, b: Some(b), gap_scale } => PointProcessModel::cox_exp_tilt(*p, *b, *gap_scale)?,
            LawSpec::Cox { p, b: None, gap_scale } => PointProcessModel::cox_normalized(*p, *gap_scale)?,
            LawSpec::Atoms { atoms } => PointProcessModel::atomic(CountLaw::Atoms(
                atoms.iter().map(|a| CountAtom { count: a.count, prob: a.prob }).collect(),
            ))?,
            LawSpec::LogLattice { p } => PointProcessModel::example_log_lattice(*p)?,
            LawSpec::Custom { outcomes } => PointProcessModel::custom(
                outcomes.iter().map(|o| BroodOutcome { prob: o.prob, displacements: o.displacements.clone() }).collect(),
            )?,
        };
        if let Some(theta0) = self.normalize_from {
            model = model.malthusian_normalize(theta0)?;
        }
        if let Some(cap) = self.cap {
            model = model.with_cap(cap)?;
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RSpec {
    MinOverLog,
    Sqrt,
    Log,
    Constant { value: f64 },
    Power { coef: f64, exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseSpec {
    I,
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Nagaev constant; must exceed `√(p-2)`.
    pub a: f64,
    /// `t_n = t_multiplier · a σ √(n log n)` unless `t_fixed` is set.
    #[serde(default = "one")]
    pub t_multiplier: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_fixed: Option<f64>,
    /// Overshoot cutoff `T`.
    pub cutoff: f64,
    pub case: CaseSpec,
    pub r: RSpec,
}

impl ScheduleConfig {
    pub fn build(&self, model: &PointProcessModel) -> Result<Schedule, LabError> {
        let t = match self.t_fixed {
            Some(t) => TChoice::Fixed(t),
            None => TChoice::Nagaev { multiplier: self.t_multiplier },
        };
        let case = match self.case {
            CaseSpec::I => Case::I,
            CaseSpec::II => Case::II,
        };
        let r = match self.r {
            RSpec::MinOverLog => RChoice::MinOverLog,
            RSpec::Sqrt => RChoice::Sqrt,
            RSpec::Log => RChoice::Log,
            RSpec::Constant { value } => RChoice::Constant(value),
            RSpec::Power { coef, exponent } => RChoice::Power { coef, exponent },
        };
        Ok(Schedule::for_model(model, self.a, t, self.cutoff, case, r)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AssumptionsConfig {
    /// Expected statuses (`holds`, `fails`, `unknown`) checked under `--assert`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub expect: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NagaevConfig {
    #[serde(default = "defensive")]
    pub defensive: f64,
    /// Accepted `|ratio - 1|` at the last grid point.
    #[serde(default = "tolerance")]
    pub tolerance: f64,
}

impl Default for NagaevConfig {
    fn default() -> Self {
        NagaevConfig { defensive: defensive(), tolerance: tolerance() }
    }
}

fn defensive() -> f64 {
    heavybrw::harness::DEFENSIVE
}

fn tolerance() -> f64 {
    0.3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpineConfig {
    /// Spine length for the marginal test.
    #[serde(default = "spine_length")]
    pub generations: u32,
    #[serde(default = "half")]
    pub theta: f64,
    /// Spine length for the exponential-moment test.
    #[serde(default = "moment_length")]
    pub moment_generations: u32,
    /// Siblings beyond this position are not materialized.
    #[serde(default = "horizon")]
    pub sibling_horizon: f64,
    /// Depth of the conditional frequency check (finite broods only).
    #[serde(default = "conditional_depth")]
    pub conditional_generations: u32,
    #[serde(default = "significance")]
    pub significance: f64,
}

impl Default for SpineConfig {
    fn default() -> Self {
        SpineConfig {
            generations: spine_length(),
            theta: half(),
            moment_generations: moment_length(),
            sibling_horizon: horizon(),
            conditional_generations: conditional_depth(),
            significance: significance(),
        }
    }
}

fn spine_length() -> u32 {
    20
}
fn moment_length() -> u32 {
    10
}
fn half() -> f64 {
    0.5
}
fn horizon() -> f64 {
    8.0
}
fn conditional_depth() -> u32 {
    2
}
fn significance() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerSpec {
    Auto,
    Sampled,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremConfig {
    #[serde(default = "inner_auto")]
    pub inner: InnerSpec,
    #[serde(default = "inner_reps")]
    pub inner_reps: u64,
    #[serde(default = "tolerance")]
    pub tolerance: f64,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        TheoremConfig { inner: inner_auto(), inner_reps: inner_reps(), tolerance: tolerance() }
    }
}

impl TheoremConfig {
    pub fn inner_tail(&self) -> InnerTail {
        match self.inner {
            InnerSpec::Auto => InnerTail::Auto,
            InnerSpec::Sampled => InnerTail::Sampled,
            InnerSpec::Exact => InnerTail::Exact,
        }
    }
}

fn inner_auto() -> InnerSpec {
    InnerSpec::Auto
}
fn inner_reps() -> u64 {
    heavybrw::harness::INNER_REPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorTermsConfig {
    #[serde(default = "cutoffs")]
    pub cutoffs: Vec<f64>,
    /// Lines per grid point for the line remainder; 0 skips it.
    #[serde(default)]
    pub line_reps: u64,
}

impl Default for ErrorTermsConfig {
    fn default() -> Self {
        ErrorTermsConfig { cutoffs: cutoffs(), line_reps: 0 }
    }
}

fn cutoffs() -> Vec<f64> {
    vec![1.0, 5.0, 20.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PruneSpec {
    None,
    RelativeToW { fraction: f64 },
    Absolute { weight: f64 },
}

impl PruneSpec {
    pub fn to_core(self) -> Prune {
        match self {
            PruneSpec::None => Prune::None,
            PruneSpec::RelativeToW { fraction } => Prune::RelativeToW(fraction),
            PruneSpec::Absolute { weight } => Prune::Absolute(weight),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub generations: u32,
    #[serde(default = "default_prune")]
    pub prune: PruneSpec,
    #[serde(default = "max_bytes")]
    pub max_bytes: u64,
}

fn default_prune() -> PruneSpec {
    PruneSpec::RelativeToW { fraction: 1e-12 }
}
fn max_bytes() -> u64 {
    1 << 30
}

/// A complete run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must match the subcommand when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    pub seed: u64,
    #[serde(default = "one_rep")]
    pub reps: u64,
    #[serde(default)]
    pub n_grid: Vec<u64>,
    #[serde(default = "out_dir")]
    pub out: String,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assumptions: Option<AssumptionsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nagaev: Option<NagaevConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spine: Option<SpineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem: Option<TheoremConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_terms: Option<ErrorTermsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationConfig>,
}

fn one_rep() -> u64 {
    1
}
fn out_dir() -> String {
    "out".into()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, LabError> {
        toml::to_string(self).map_err(|e| LabError::Config(e.to_string()))
    }

    /// Checks the structural invariants shared by all experiments.
    pub fn validate(&self) -> Result<(), LabError> {
        if self.seed > MAX_SEED {
            return Err(LabError::Config(format!("seed {} exceeds {MAX_SEED}", self.seed)));
        }
        if self.reps == 0 {
            return Err(LabError::Config("reps must be at least 1".into()));
        }
        if let Some(cap) = self.model.cap {
            if !cap.is_finite() {
                return Err(LabError::Config(format!("cap must be finite, got {cap}")));
            }
        }
        Ok(())
    }

    /// Structural checks for `kind`, on top of [`RunConfig::validate`].
    pub fn validate_for(&self, kind: ExperimentKind) -> Result<(), LabError> {
        self.validate()?;
        if let Some(declared) = self.experiment {
            if declared != kind {
                return Err(LabError::Config(format!(
                    "config declares experiment `{}` but `{}` was requested",
                    declared.name(),
                    kind.name()
                )));
            }
        }
        let needs_grid = matches!(kind, ExperimentKind::Nagaev | ExperimentKind::Theorem | ExperimentKind::ErrorTerms);
        if needs_grid {
            if self.n_grid.is_empty() {
                return Err(LabError::Config("n_grid must be nonempty".into()));
            }
            if self.n_grid.iter().any(|&n| n < 2) {
                return Err(LabError::Config("grid points must be at least 2".into()));
            }
            if self.schedule.is_none() {
                return Err(LabError::Config(format!("`{}` needs a [schedule] section", kind.name())));
            }
        }
        match kind {
            ExperimentKind::ErrorTerms => {
                let et = self.error_terms.clone().unwrap_or_default();
                if et.cutoffs.is_empty() || et.cutoffs.iter().any(|c| c.is_nan() || *c <= 0.0) {
                    return Err(LabError::Config("error_terms.cutoffs must be nonempty and positive".into()));
                }
            }
            ExperimentKind::DumpPopulation if self.population.is_none() => {
                return Err(LabError::Config("`dump-population` needs a [population] section".into()));
            }
            ExperimentKind::Spine => {
                let s = self.spine.unwrap_or_default();
                if s.generations == 0 || s.moment_generations == 0 {
                    return Err(LabError::Config("spine lengths must be at least 1".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}
