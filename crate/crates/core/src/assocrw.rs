//! The associated random walk with increment law `F`: paths, first passage,
//! and rare-event estimation of `P(S_n > nc + t)`.

use alloc::vec::Vec;

use rand::RngCore;

use crate::error::{bail, Error, Result};
use crate::models::PointProcessModel;
use crate::rng::{index, open01};
use crate::stats::RunningStats;

/// Default step limit for [`first_passage`].
pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

/// First crossing of a level: `τ = inf{n : S_n > level}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstPassage {
    pub tau: u64,
    pub position: f64,
    pub overshoot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodTag {
    Naive,
    OneBigJumpIs,
}

impl MethodTag {
    pub fn name(&self) -> &'static str {
        match self {
            MethodTag::Naive => "naive",
            MethodTag::OneBigJumpIs => "one_big_jump_is",
        }
    }
}

/// Estimation method for walk functionals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailMethod {
    Naive,
    /// One increment (at a uniform step) is drawn from `F(· | · > threshold)`; with
    /// probability `defensive` the path is drawn without forcing.
    OneBigJump { threshold: f64, defensive: f64 },
}

impl TailMethod {
    pub fn tag(&self) -> MethodTag {
        match self {
            TailMethod::Naive => MethodTag::Naive,
            TailMethod::OneBigJump { .. } => MethodTag::OneBigJumpIs,
        }
    }
}

/// Monte-Carlo estimate with pooled replicate statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub value: f64,
    pub std_error: f64,
    pub replicates: u64,
    pub method: MethodTag,
    /// Number of replicates with a nonzero contribution.
    pub hits: u64,
    stats: RunningStats,
}

impl TailEstimate {
    pub fn from_stats(stats: RunningStats, hits: u64, method: MethodTag) -> Self {
        Self {
            value: stats.mean().max(0.0),
            std_error: stats.std_error(),
            replicates: stats.count(),
            method,
            hits,
            stats,
        }
    }

    pub fn stats(&self) -> &RunningStats {
        &self.stats
    }

    /// Fewer than ten contributing replicates.
    pub fn unreliable(&self) -> bool {
        self.hits < 10
    }

    pub fn relative_error(&self) -> f64 {
        if self.value > 0.0 {
            self.std_error / self.value
        } else {
            f64::INFINITY
        }
    }

    /// Pools two estimates of the same quantity made with the same method.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.method != other.method {
            bail!(Config, "cannot pool {} with {} estimates", self.method.name(), other.method.name());
        }
        Ok(Self::from_stats(self.stats.merge(&other.stats), self.hits + other.hits, self.method))
    }

    /// The same estimate multiplied by a constant.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = *self;
        s.value *= factor;
        s.std_error *= factor.abs();
        s
    }
}

/// Partial sums `S_1, …, S_n`.
pub fn simulate_path<R: RngCore + ?Sized>(model: &PointProcessModel, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        bail!(Domain, "path length must be at least 1");
    }
    let mut s = 0.0;
    Ok((0..n)
        .map(|_| {
            s += model.sample_increment(rng);
            s
        })
        .collect())
}

pub fn first_passage<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    level: f64,
    rng: &mut R,
    max_steps: u64,
) -> Result<FirstPassage> {
    if !(level >= 0.0) || !level.is_finite() {
        bail!(Domain, "level must be finite and nonnegative, got {level}");
    }
    let mut s = 0.0;
    for k in 1..=max_steps {
        s += model.sample_increment(rng);
        if s > level {
            return Ok(FirstPassage { tau: k, position: s, overshoot: s - level });
        }
    }
    Err(Error::Truncated { steps: max_steps, what: alloc::format!("first passage above {level}") })
}

/// `a σ √(n log n)`.
pub fn nagaev_threshold(n: u64, a: f64, sigma: f64) -> f64 {
    let nf = n as f64;
    a * sigma * libm::sqrt(nf * libm::log(nf))
}

/// `σ √(n / (a log n))`.
pub fn big_jump_threshold(n: u64, a: f64, sigma: f64) -> f64 {
    let nf = n as f64;
    sigma * libm::sqrt(nf / (a * libm::log(nf)))
}

/// Likelihood ratio of the defensive one-big-jump proposal for a path with
/// `k_big` increments above the threshold, where `tail_h = F̄(threshold)`.
pub fn is_weight(k_big: usize, n: usize, tail_h: f64, defensive: f64) -> f64 {
    1.0 / (defensive + (1.0 - defensive) * k_big as f64 / (n as f64 * tail_h))
}

/// Summary of one walk passed to event predicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSummary {
    /// `S_n`.
    pub sum: f64,
    /// First passage above the probe level within `n` steps.
    pub passage: Option<FirstPassage>,
    /// Number of increments above the probe's jump threshold.
    pub big_jumps: u32,
    /// Largest increment.
    pub max_increment: f64,
}

/// What to record along each path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathProbe {
    pub level: Option<f64>,
    pub jump_threshold: Option<f64>,
}

/// Importance-sampling estimates of `P(event_i)` for several events on the same
/// simulated paths (common random numbers).
pub fn estimate_path_events<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    n: usize,
    reps: u64,
    rng: &mut R,
    method: TailMethod,
    probe: PathProbe,
    events: &[&dyn Fn(&PathSummary) -> bool],
) -> Result<Vec<TailEstimate>> {
    if n == 0 {
        bail!(Domain, "path length must be at least 1");
    }
    if reps == 0 {
        bail!(Config, "need at least one replicate");
    }
    let mass = model.laplace_m(1.0);
    let (threshold, alpha, tail_h) = match method {
        TailMethod::Naive => (f64::INFINITY, 1.0, 0.0),
        TailMethod::OneBigJump { threshold, defensive } => {
            if !(0.0..1.0).contains(&defensive) {
                bail!(Config, "defensive mixture weight must lie in [0, 1), got {defensive}");
            }
            let tail_h = model.tail_f(threshold) / mass;
            if !(tail_h > 0.0) {
                bail!(Domain, "increment law has no mass above the jump threshold {threshold}");
            }
            (threshold, defensive, tail_h)
        }
    };
    let mut stats: Vec<RunningStats> = alloc::vec![RunningStats::new(); events.len()];
    let mut hits = alloc::vec![0u64; events.len()];
    for _ in 0..reps {
        let forced = if alpha < 1.0 && open01(rng) >= alpha { Some(index(rng, n)) } else { None };
        let mut s = 0.0;
        let mut k_big = 0usize;
        let mut probe_big = 0u32;
        let mut passage = None;
        let mut max_inc = f64::NEG_INFINITY;
        for step in 0..n {
            let x = if forced == Some(step) {
                model.sample_increment_above(threshold, rng)?
            } else {
                model.sample_increment(rng)
            };
            s += x;
            if x > threshold {
                k_big += 1;
            }
            if probe.jump_threshold.is_some_and(|h| x > h) {
                probe_big += 1;
            }
            max_inc = max_inc.max(x);
            if passage.is_none() {
                if let Some(level) = probe.level {
                    if s > level {
                        passage = Some(FirstPassage { tau: step as u64 + 1, position: s, overshoot: s - level });
                    }
                }
            }
        }
        let w = if alpha >= 1.0 { 1.0 } else { is_weight(k_big, n, tail_h, alpha) };
        let summary = PathSummary { sum: s, passage, big_jumps: probe_big, max_increment: max_inc };
        for (i, ev) in events.iter().enumerate() {
            if ev(&summary) {
                stats[i].push(w);
                hits[i] += 1;
            } else {
                stats[i].push(0.0);
            }
        }
    }
    Ok(stats
        .into_iter()
        .zip(hits)
        .map(|(s, h)| TailEstimate::from_stats(s, h, method.tag()))
        .collect())
}

/// Estimate of `P(S_n > nc + t)`.
pub fn rw_tail_estimate<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    n: usize,
    t: f64,
    reps: u64,
    rng: &mut R,
    method: TailMethod,
) -> Result<TailEstimate> {
    let c = model.increment_moments()?.c;
    let level = n as f64 * c + t;
    let ev = |p: &PathSummary| p.sum > level;
    let mut out = estimate_path_events(model, n, reps, rng, method, PathProbe::default(), &[&ev])?;
    Ok(out.remove(0))
}

/// Estimate of `P(S_n > t) / (n F̄(t))` for a small number of steps.
///
/// Uses one-big-jump sampling above `t/n` without a defensive stratum: the
/// event forces some increment above `t/n`, so the estimator stays unbiased.
pub fn subexp_ratio<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    n: usize,
    t: f64,
    reps: u64,
    rng: &mut R,
) -> Result<TailEstimate> {
    if n == 0 || n > 5 {
        bail!(Precondition, "subexponential ratio is meant for 1 <= n <= 5, got {n}");
    }
    let tail = model.tail_f(t) / model.laplace_m(1.0);
    if !(tail > 0.0) {
        bail!(Domain, "F̄({t}) vanishes");
    }
    let ev = |p: &PathSummary| p.sum > t;
    let method = TailMethod::OneBigJump { threshold: t / n as f64, defensive: 0.0 };
    let mut out = estimate_path_events(model, n, reps, rng, method, PathProbe::default(), &[&ev])?;
    Ok(out.remove(0).scaled(1.0 / (n as f64 * tail)))
}
