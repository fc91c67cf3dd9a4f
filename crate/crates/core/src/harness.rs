//! Schedules, the stopping-line estimator of `Z̄_n(nc + t_n)` and the grid experiments.

use alloc::string::String;
use alloc::vec::Vec;

use rand::RngCore;

use crate::assocrw::{
    big_jump_threshold, estimate_path_events, nagaev_threshold, PathProbe, PathSummary, TailMethod,
};
use crate::brw::{coming_generation, LineCaps, StoppingLine};
use crate::error::{bail, Error, Result};
use crate::models::{check_assumptions, Assumption, PointProcessModel};
use crate::rng::{replicate_rng, stream_id};
use crate::stats::{ols_slope, RunningStats};

/// Brood depth below which the inner tail is estimated instead of approximated by `k F̄`.
pub const SURROGATE_MIN_STEPS: usize = 50;
/// Replicates of the inner importance-sampling estimate per line entry.
pub const INNER_REPS: u64 = 64;
/// Defensive mixture weight used by the inner and error-term estimators.
pub const DEFENSIVE: f64 = 0.2;

/// Runs independent replicates; results come back in index order.
pub trait ReplicateRunner: Sync {
    fn map_replicates<T, F>(&self, count: u64, task: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send;
}

/// Runs replicates one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ReplicateRunner for Sequential {
    fn map_replicates<T, F>(&self, count: u64, task: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        (0..count).map(task).collect()
    }
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    I,
    II,
}

/// Choice of the line level `r(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RChoice {
    /// `(n ∧ t_n) / log n`.
    MinOverLog,
    Sqrt,
    Log,
    Constant(f64),
    /// `coef · n^exponent`.
    Power { coef: f64, exponent: f64 },
}

/// Choice of the deviation sequence `t_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TChoice {
    /// `multiplier · a σ √(n log n)`.
    Nagaev { multiplier: f64 },
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub a: f64,
    pub t: TChoice,
    /// Overshoot cutoff `T`.
    pub cutoff: f64,
    pub case: Case,
    pub r: RChoice,
    /// Drift `c` and spread `σ` of the associated walk.
    pub c: f64,
    pub sigma: f64,
    /// Tail index `p`.
    pub p: f64,
}

impl Schedule {
    /// Validates `a > √(p-2)` and a nondegenerate walk with finite variance.
    pub fn for_model(model: &PointProcessModel, a: f64, t: TChoice, cutoff: f64, case: Case, r: RChoice) -> Result<Self> {
        let mom = model.increment_moments()?;
        let Some(s2) = mom.sigma2 else {
            bail!(Precondition, "the increment law has infinite variance");
        };
        if mom.degenerate || !(s2 > 0.0) {
            bail!(Precondition, "the increment law is degenerate (σ² = {s2})");
        }
        let Some(p) = model.tail_index() else {
            bail!(Precondition, "the model has no regularly varying tail index");
        };
        if !(p > 2.0) {
            bail!(Precondition, "tail index p = {p} must exceed 2");
        }
        let s = Schedule { a, t, cutoff, case, r, c: mom.c, sigma: libm::sqrt(s2), p };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let floor = libm::sqrt((self.p - 2.0).max(0.0));
        if !(self.a > floor) {
            bail!(Precondition, "a = {} must exceed √(p-2) = {floor}", self.a);
        }
        if !(self.cutoff > 0.0) {
            bail!(Config, "overshoot cutoff must be positive, got {}", self.cutoff);
        }
        if let TChoice::Nagaev { multiplier } = self.t {
            if !(multiplier >= 1.0) {
                bail!(Config, "t multiplier must be at least 1, got {multiplier}");
            }
        }
        if !(self.c > 0.0) {
            bail!(Precondition, "walk drift must be positive, got {}", self.c);
        }
        Ok(())
    }

    pub fn t_n(&self, n: u64) -> f64 {
        match self.t {
            TChoice::Nagaev { multiplier } => multiplier * nagaev_threshold(n, self.a, self.sigma),
            TChoice::Fixed(t) => t,
        }
    }

    pub fn r_n(&self, n: u64) -> f64 {
        let nf = n as f64;
        match self.r {
            RChoice::MinOverLog => nf.min(self.t_n(n)) / libm::log(nf),
            RChoice::Sqrt => libm::sqrt(nf),
            RChoice::Log => libm::log(nf),
            RChoice::Constant(r) => r,
            RChoice::Power { coef, exponent } => coef * libm::pow(nf, exponent),
        }
    }

    /// `⌈2 r(n) / c⌉`.
    pub fn m_n(&self, n: u64) -> u32 {
        libm::ceil(2.0 * self.r_n(n) / self.c) as u32
    }

    /// `ε = (1 - √(p-2)/a) / 2`, so that `(1-ε) a > √(p-2)`.
    pub fn epsilon(&self) -> f64 {
        0.5 * (1.0 - libm::sqrt((self.p - 2.0).max(0.0)) / self.a)
    }

    /// `F̄((1-ε) t_n) / F̄(t_n)`.
    pub fn potter_constant(&self, model: &PointProcessModel, n: u64) -> f64 {
        let t = self.t_n(n);
        model.tail_f((1.0 - self.epsilon()) * t) / model.tail_f(t)
    }

    /// `n F̄(t_n)`.
    pub fn normalizer(&self, model: &PointProcessModel, n: u64) -> f64 {
        n as f64 * model.tail_f(self.t_n(n)) / model.laplace_m(1.0)
    }
}

/// Pass/fail of a grid evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Plausible,
    Failing,
}

/// One condition evaluated on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionTrace {
    pub name: &'static str,
    pub n: Vec<u64>,
    pub value: Vec<f64>,
    pub running_max: Vec<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case1Report {
    pub r_growth: ConditionTrace,
    pub r2t: ConditionTrace,
    /// `e^{-δ r(n)} n`, whose decay (with increasing `r`) suffices for the growth condition.
    pub growth_sufficient: ConditionTrace,
    /// `r(n)/log t_n` at the last grid point against `p / (1 - (1+δ)/γ)`.
    pub r_over_log_t: f64,
    pub r_over_log_t_threshold: f64,
    pub r_increasing: bool,
}

fn trace(name: &'static str, grid: Vec<u64>, value: Vec<f64>) -> ConditionTrace {
    let mut running = Vec::with_capacity(value.len());
    let mut mx = f64::NEG_INFINITY;
    for v in &value {
        mx = mx.max(*v);
        running.push(mx);
    }
    // Bounded if the second half never exceeds what the first half reached.
    let half = value.len() / 2;
    let early = value[..half.max(1)].iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let late = value[half..].iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let verdict = if late.is_finite() && late <= early * (1.0 + 1e-9) { Verdict::Plausible } else { Verdict::Failing };
    ConditionTrace { name, n: grid, value, running_max: running, verdict }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let m = a.max(b);
    m + libm::log(libm::exp(a - m) + libm::exp(b - m))
}

/// Evaluates the two case-(I) growth conditions on `2 ≤ n ≤ n_max`.
///
/// Requires `δ ∈ (0, γ-1)` and `q ∈ (1+δ, γ)`.
pub fn schedule_check_case1(
    model: &PointProcessModel,
    schedule: &Schedule,
    gamma: f64,
    delta: f64,
    q: f64,
    n_max: u64,
) -> Result<Case1Report> {
    if !(delta > 0.0 && delta < gamma - 1.0) {
        bail!(Precondition, "δ = {delta} must lie in (0, γ-1) = (0, {})", gamma - 1.0);
    }
    if !(q > 1.0 + delta && q < gamma) {
        bail!(Precondition, "q = {q} must lie in (1+δ, γ) = ({}, {gamma})", 1.0 + delta);
    }
    if n_max < 16 {
        bail!(Config, "grid end {n_max} is too short");
    }
    let mut grid = Vec::new();
    let mut growth = Vec::new();
    let mut r2t = Vec::new();
    let mut suff = Vec::new();
    let mut log_sum = f64::NEG_INFINITY; // log Σ_{j<n} e^{r(j)}
    let mut r_increasing = true;
    let mut prev_r = f64::NEG_INFINITY;
    let mut next_grid = 4u64;
    for n in 2..=n_max {
        log_sum = log_sum_exp(log_sum, schedule.r_n(n - 1));
        let r = schedule.r_n(n);
        r_increasing &= r >= prev_r;
        prev_r = r;
        if n == next_grid || n == n_max {
            grid.push(n);
            growth.push(libm::exp(log_sum - (1.0 + delta) * r));
            let norm = schedule.normalizer(model, n);
            r2t.push(libm::exp(-r * (1.0 - (1.0 + delta) / q)) / norm);
            suff.push(libm::exp(-delta * r) * n as f64);
            next_grid = libm::ceil(next_grid as f64 * 1.25) as u64;
        }
    }
    let t_last = schedule.t_n(n_max);
    Ok(Case1Report {
        r_growth: trace("r-growth", grid.clone(), growth),
        r2t: trace("r2t", grid.clone(), r2t),
        growth_sufficient: trace("exp(-delta r) n", grid, suff),
        r_over_log_t: schedule.r_n(n_max) / libm::log(t_last),
        r_over_log_t_threshold: schedule.p / (1.0 - (1.0 + delta) / gamma),
        r_increasing,
    })
}

/// How `F̄_k(s) = P(S_k - kc > s)` is evaluated in the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerTail {
    /// `k F̄(s)` for `k > 50`, importance sampling below.
    Auto,
    /// Importance sampling for every `k`.
    Sampled,
    /// Exact enumeration (finite broods only).
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionOptions {
    pub inner: InnerTail,
    pub inner_reps: u64,
    pub caps: LineCaps,
}

impl Default for DecompositionOptions {
    fn default() -> Self {
        DecompositionOptions { inner: InnerTail::Auto, inner_reps: INNER_REPS, caps: LineCaps::default() }
    }
}

/// One replicate of the stopping-line estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionSample {
    /// `D_n`.
    pub d: f64,
    /// `Y_{r(n)}` of the same line.
    pub y: f64,
    /// `Y_{r(n)} - Σ_{𝒞^T, |u| ≤ m} e^{-V_u}`.
    pub line_remainder: f64,
    /// Expected weight booked instead of sampled (floor and cap).
    pub bookkeeping: f64,
    pub entries: u32,
    pub surrogate_entries: u32,
}

fn inner_tail<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    k: usize,
    s: f64,
    c: f64,
    mode: InnerTail,
    reps: u64,
    rng: &mut R,
    exact_cache: &mut Option<Vec<Vec<(f64, f64)>>>,
) -> Result<(f64, bool)> {
    let mass = model.laplace_m(1.0);
    if k == 0 {
        return Ok((if 0.0 > s { 1.0 } else { 0.0 }, false));
    }
    match mode {
        InnerTail::Exact => {
            let cache = exact_cache.get_or_insert_with(Vec::new);
            while cache.len() <= k {
                let law = crate::exact::walk_sum_law(model, cache.len())?;
                cache.push(law);
            }
            let level = s + k as f64 * c;
            Ok((cache[k].iter().filter(|(v, _)| *v > level).map(|(_, p)| p).sum(), false))
        }
        _ if k == 1 => Ok((model.tail_f(s + c) / mass, false)),
        InnerTail::Auto if k > SURROGATE_MIN_STEPS => Ok((k as f64 * model.tail_f(s) / mass, true)),
        _ => {
            let level = s + k as f64 * c;
            let method = if s > 0.0 {
                TailMethod::OneBigJump { threshold: 0.5 * s, defensive: DEFENSIVE }
            } else {
                TailMethod::Naive
            };
            let ev = |p: &PathSummary| p.sum > level;
            let est = estimate_path_events(model, k, reps, rng, method, PathProbe::default(), &[&ev])?;
            Ok((est[0].value, false))
        }
    }
}

fn line_caps_for(schedule: &Schedule, n: u64, caps: &LineCaps) -> LineCaps {
    let mut caps = *caps;
    if caps.weight_floor.is_none() {
        caps.weight_floor = Some(libm::exp(-(schedule.r_n(n) + schedule.cutoff)));
    }
    caps
}

/// Gives infinite-brood models the cap they need for the line sampler.
pub fn sampling_model(model: &PointProcessModel, schedule: &Schedule, n: u64) -> Result<PointProcessModel> {
    if model.has_finite_broods() || model.cap().is_some() || matches!(model.kind(), crate::models::ModelKind::AtomicSizeBiased { .. }) {
        return Ok(model.clone());
    }
    model.clone().with_cap(schedule.r_n(n) + schedule.cutoff + 1.0)
}

/// `D_n = Σ_{u ∈ 𝒞^T_{r}, |u| ≤ m} e^{-V_u} F̄_{n-|u|}(t_n - (V_u - |u| c))` on one line.
pub fn decomposition_from_line<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    schedule: &Schedule,
    n: u64,
    line: &StoppingLine,
    options: &DecompositionOptions,
    rng: &mut R,
) -> Result<DecompositionSample> {
    let t = schedule.t_n(n);
    let m = schedule.m_n(n);
    let c = schedule.c;
    let mut d = 0.0;
    let mut surrogate = 0;
    let mut cache = None;
    for e in line.entries() {
        if e.generation > m || e.generation as u64 > n {
            continue;
        }
        let k = (n - e.generation as u64) as usize;
        let s = t - (e.position - e.generation as f64 * c);
        let (f, used) = inner_tail(model, k, s, c, options.inner, options.inner_reps, rng, &mut cache)?;
        surrogate += u32::from(used);
        d += e.weight() * f;
    }
    let y = line.nerman_y();
    Ok(DecompositionSample {
        d,
        y,
        line_remainder: line.remainder_beyond(m),
        bookkeeping: line.unresolved() + line.unfollowed() + line.ledger(),
        entries: line.len() as u32,
        surrogate_entries: surrogate,
    })
}

/// Grows `𝒞^T_{r(n)}` and evaluates `D_n` on it.
pub fn decomposition_estimate<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    schedule: &Schedule,
    n: u64,
    rng: &mut R,
    options: &DecompositionOptions,
) -> Result<DecompositionSample> {
    let r = schedule.r_n(n);
    let t = schedule.t_n(n);
    if !(r < n as f64 * schedule.c + t) {
        bail!(Precondition, "line level r = {r} must stay below nc + t_n = {}", n as f64 * schedule.c + t);
    }
    let sampler = sampling_model(model, schedule, n)?;
    decomposition_with_sampler(model, &sampler, schedule, n, rng, options)
}

fn decomposition_with_sampler<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    sampler: &PointProcessModel,
    schedule: &Schedule,
    n: u64,
    rng: &mut R,
    options: &DecompositionOptions,
) -> Result<DecompositionSample> {
    let caps = line_caps_for(schedule, n, &options.caps);
    let line = coming_generation(sampler, schedule.r_n(n), Some(schedule.cutoff), rng, &caps)?;
    decomposition_from_line(model, schedule, n, &line, options, rng)
}

/// Mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let mut s = RunningStats::new();
        for x in xs {
            s.push(x);
        }
        MeanSe { mean: s.mean(), se: s.std_error() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremRow {
    pub n: u64,
    pub t_n: f64,
    pub r_n: f64,
    pub m_n: u32,
    /// `D_n / (n F̄(t_n))`.
    pub ratio: MeanSe,
    /// `|D_n / (n F̄(t_n)) - Y_{r(n)}|`.
    pub abs_diff: MeanSe,
    pub y: MeanSe,
    /// Mean of line remainder plus booked expectations.
    pub remainder_bound: f64,
    pub potter_constant: f64,
    /// Share of line entries whose inner tail used `k F̄`.
    pub surrogate_share: f64,
    pub reps: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremRunResult {
    pub rows: Vec<TheoremRow>,
    pub master_seed: u64,
}

/// Refuses models outside the theorem's scope.
pub fn theorem_preconditions(model: &PointProcessModel) -> Result<()> {
    let report = check_assumptions(model);
    let mut missing = Vec::new();
    for a in [Assumption::A1, Assumption::A2, Assumption::A4] {
        if !report.holds(a) {
            missing.push(alloc::format!("{} {}", a.name(), report.status(a).name()));
        }
    }
    if !missing.is_empty() {
        let mut msg = String::from("model violates ");
        msg.push_str(&missing.join(", "));
        return Err(Error::Precondition(msg));
    }
    Ok(())
}

/// Per-replicate decomposition samples for one grid point.
pub fn grid_point_samples<P: ReplicateRunner>(
    model: &PointProcessModel,
    schedule: &Schedule,
    n: u64,
    block: u64,
    reps: u64,
    master_seed: u64,
    runner: &P,
    options: &DecompositionOptions,
) -> Result<Vec<DecompositionSample>> {
    let r = schedule.r_n(n);
    if !(r < n as f64 * schedule.c + schedule.t_n(n)) {
        bail!(Precondition, "line level r = {r} must stay below nc + t_n");
    }
    let sampler = sampling_model(model, schedule, n)?;
    collect(runner.map_replicates(reps, |i| {
        let mut rng = replicate_rng(master_seed, stream_id(block, i));
        decomposition_with_sampler(model, &sampler, schedule, n, &mut rng, options)
    }))
}

/// Mean ratio and mean distance to Nerman's martingale along the grid.
pub fn theorem_experiment<P: ReplicateRunner>(
    model: &PointProcessModel,
    schedule: &Schedule,
    n_grid: &[u64],
    reps: u64,
    master_seed: u64,
    runner: &P,
    options: &DecompositionOptions,
) -> Result<TheoremRunResult> {
    theorem_preconditions(model)?;
    schedule.validate()?;
    if n_grid.is_empty() || reps == 0 {
        bail!(Config, "grid and replicate count must be nonempty");
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for (g, &n) in n_grid.iter().enumerate() {
        let samples = grid_point_samples(model, schedule, n, g as u64 + 1, reps, master_seed, runner, options)?;
        let norm = schedule.normalizer(model, n);
        let entries: u64 = samples.iter().map(|s| u64::from(s.entries)).sum();
        let surrogate: u64 = samples.iter().map(|s| u64::from(s.surrogate_entries)).sum();
        rows.push(TheoremRow {
            n,
            t_n: schedule.t_n(n),
            r_n: schedule.r_n(n),
            m_n: schedule.m_n(n),
            ratio: MeanSe::of(samples.iter().map(|s| s.d / norm)),
            abs_diff: MeanSe::of(samples.iter().map(|s| (s.d / norm - s.y).abs())),
            y: MeanSe::of(samples.iter().map(|s| s.y)),
            remainder_bound: MeanSe::of(samples.iter().map(|s| s.line_remainder + s.bookkeeping)).mean,
            potter_constant: schedule.potter_constant(model, n),
            surrogate_share: if entries == 0 { 0.0 } else { surrogate as f64 / entries as f64 },
            reps,
            seed: master_seed,
        });
    }
    Ok(TheoremRunResult { rows, master_seed })
}

/// Which error term a row reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorTerm {
    /// `P(S_n > nc + t_n, τ_r > m) / (n F̄(t_n))`.
    LatePassage,
    /// `P(S_n > nc + t_n, τ_r ≤ m, R_r > T) / (n F̄(t_n))`.
    Overshoot { cutoff: f64 },
    /// `E[Y_r - Σ_{𝒞^T, |u| ≤ m} e^{-V_u}]`.
    LineRemainder { cutoff: f64 },
}

impl ErrorTerm {
    pub fn name(&self) -> &'static str {
        match self {
            ErrorTerm::LatePassage => "late_passage",
            ErrorTerm::Overshoot { .. } => "overshoot",
            ErrorTerm::LineRemainder { .. } => "line_remainder",
        }
    }

    pub fn cutoff(&self) -> Option<f64> {
        match self {
            ErrorTerm::LatePassage => None,
            ErrorTerm::Overshoot { cutoff } | ErrorTerm::LineRemainder { cutoff } => Some(*cutoff),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTermRow {
    pub n: u64,
    pub t_n: f64,
    pub r_n: f64,
    pub m_n: u32,
    pub term: ErrorTerm,
    pub estimate: MeanSe,
    pub reps: u64,
    pub seed: u64,
}

/// Normalized error terms of the reduction along the `n` and `T` grids.
///
/// Walk terms use `path_reps` one-big-jump samples; the line remainder uses
/// `line_reps` lazily grown lines.
pub fn error_term_experiment<P: ReplicateRunner>(
    model: &PointProcessModel,
    schedule: &Schedule,
    n_grid: &[u64],
    cutoffs: &[f64],
    path_reps: u64,
    line_reps: u64,
    master_seed: u64,
    runner: &P,
) -> Result<Vec<ErrorTermRow>> {
    theorem_preconditions(model)?;
    schedule.validate()?;
    if n_grid.is_empty() || cutoffs.is_empty() || path_reps == 0 {
        bail!(Config, "grids and replicate counts must be nonempty");
    }
    const BATCH: u64 = 1000;
    let mut rows = Vec::new();
    for (g, &n) in n_grid.iter().enumerate() {
        let t = schedule.t_n(n);
        let r = schedule.r_n(n);
        let m = schedule.m_n(n);
        let level = n as f64 * schedule.c + t;
        let norm = schedule.normalizer(model, n);
        let h = big_jump_threshold(n, schedule.a, schedule.sigma);
        let probe = PathProbe { level: Some(r), jump_threshold: None };
        let method = TailMethod::OneBigJump { threshold: h, defensive: DEFENSIVE };
        let late = move |p: &PathSummary| p.sum > level && p.passage.is_none_or(|f| f.tau > m as u64);
        let overs: Vec<_> = cutoffs
            .iter()
            .map(|&cut| move |p: &PathSummary| p.sum > level && p.passage.is_some_and(|f| f.tau <= m as u64 && f.overshoot > cut))
            .collect();
        let batches = path_reps.div_ceil(BATCH);
        let block = 2 * g as u64 + 1;
        let parts = collect(runner.map_replicates(batches, |b| {
            let mut rng = replicate_rng(master_seed, stream_id(block, b));
            let count = BATCH.min(path_reps - b * BATCH);
            let mut events: Vec<&dyn Fn(&PathSummary) -> bool> = alloc::vec![&late];
            for o in &overs {
                events.push(o);
            }
            estimate_path_events(model, n as usize, count, &mut rng, method, probe, &events)
        }))?;
        let mut pooled = parts[0].clone();
        for part in &parts[1..] {
            for (acc, p) in pooled.iter_mut().zip(part) {
                *acc = acc.merge(p)?;
            }
        }
        let row = |term, est: &crate::assocrw::TailEstimate| ErrorTermRow {
            n,
            t_n: t,
            r_n: r,
            m_n: m,
            term,
            estimate: MeanSe { mean: est.value / norm, se: est.std_error / norm },
            reps: path_reps,
            seed: master_seed,
        };
        rows.push(row(ErrorTerm::LatePassage, &pooled[0]));
        for (i, &cut) in cutoffs.iter().enumerate() {
            rows.push(row(ErrorTerm::Overshoot { cutoff: cut }, &pooled[i + 1]));
        }
        if line_reps > 0 {
            for (i, &cut) in cutoffs.iter().enumerate() {
                // Window entries deeper than the decomposition's cutoff are booked, not sampled.
                let sch = Schedule { cutoff: cut.min(schedule.cutoff), ..*schedule };
                let caps = line_caps_for(&sch, n, &LineCaps::default());
                let sampler = sampling_model(model, &Schedule { cutoff: cut, ..*schedule }, n)?;
                let block = 2 * g as u64 + 2 + (i as u64) * 1_000_000;
                let vals = collect(runner.map_replicates(line_reps, |k| {
                    let mut rng = replicate_rng(master_seed, stream_id(block, k));
                    let line = coming_generation(&sampler, r, Some(cut), &mut rng, &caps)?;
                    Ok(line.remainder_beyond(m))
                }))?;
                rows.push(ErrorTermRow {
                    n,
                    t_n: t,
                    r_n: r,
                    m_n: m,
                    term: ErrorTerm::LineRemainder { cutoff: cut },
                    estimate: MeanSe::of(vals),
                    reps: line_reps,
                    seed: master_seed,
                });
            }
        }
    }
    Ok(rows)
}

/// Growth check of `E[D_n^{1+η}] / (n F̄(t_n))^{1+η}` along the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTrend {
    pub n: Vec<u64>,
    pub ratio: Vec<f64>,
    /// OLS slope of `log ratio` against `log n`.
    pub slope: f64,
}

impl MomentTrend {
    pub fn no_increasing_trend(&self, tolerance: f64) -> bool {
        self.slope <= tolerance
    }
}

pub fn moment_trend<P: ReplicateRunner>(
    model: &PointProcessModel,
    schedule: &Schedule,
    n_grid: &[u64],
    eta: f64,
    reps: u64,
    master_seed: u64,
    runner: &P,
    options: &DecompositionOptions,
) -> Result<MomentTrend> {
    if n_grid.len() < 2 {
        bail!(Config, "moment trend needs at least two grid points");
    }
    let mut ratio = Vec::new();
    for (g, &n) in n_grid.iter().enumerate() {
        let samples = grid_point_samples(model, schedule, n, g as u64 + 1, reps, master_seed, runner, options)?;
        let norm = schedule.normalizer(model, n);
        let mean = MeanSe::of(samples.iter().map(|s| libm::pow(s.d / norm, 1.0 + eta))).mean;
        ratio.push(mean);
    }
    let xs: Vec<f64> = n_grid.iter().map(|n| libm::log(*n as f64)).collect();
    let ys: Vec<f64> = ratio.iter().map(|r| libm::log(*r)).collect();
    let slope = ols_slope(&xs, &ys)?;
    Ok(MomentTrend { n: n_grid.to_vec(), ratio, slope })
}
