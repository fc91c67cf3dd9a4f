//! Experiment drivers: each turns a validated config into result rows and checks.

use heavybrw::assocrw::{big_jump_threshold, rw_tail_estimate, TailEstimate, TailMethod};
use heavybrw::brw::{grow_population, GrowthConfig};
use heavybrw::exact::walk_sum_law;
use heavybrw::harness::{
    error_term_experiment, theorem_experiment, DecompositionOptions, ErrorTerm, MeanSe, ReplicateRunner,
};
use heavybrw::models::check_assumptions;
use heavybrw::models::PointProcessModel;
use heavybrw::rng::{replicate_rng, stream_id};
use heavybrw::spine::{sample_spine, spine_conditional_check, spine_exp_moment, SiblingMode};
use heavybrw::stats::{ks_two_sample, RunningStats};

use crate::config::{ExperimentKind, RunConfig};
use crate::error::LabError;
use crate::output::{Check, ResultRow};

/// Walk replicates drawn from one random stream.
pub const PATH_BATCH: u64 = 1000;

/// Outcome of one experiment before it is written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ResultRow>,
    pub checks: Vec<Check>,
    /// Additional named files (name, bytes).
    pub files: Vec<(String, Vec<u8>)>,
}

impl Report {
    fn new() -> Self {
        Report { rows: Vec::new(), checks: Vec::new(), files: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    hash: &'a str,
    experiment: &'static str,
}

impl Ctx<'_> {
    fn row(&self, quantity: impl Into<String>, estimate: f64, reps: u64) -> ResultRow {
        ResultRow {
            experiment: self.experiment.to_string(),
            quantity: quantity.into(),
            estimate,
            reps,
            seed: self.cfg.seed,
            config_hash: self.hash.to_string(),
            ..Default::default()
        }
    }
}

pub fn run_experiment<P: ReplicateRunner>(
    kind: ExperimentKind,
    cfg: &RunConfig,
    hash: &str,
    runner: &P,
) -> Result<Report, LabError> {
    cfg.validate_for(kind)?;
    let model = cfg.model.build()?;
    let ctx = Ctx { cfg, hash, experiment: kind.name() };
    match kind {
        ExperimentKind::Assumptions => assumptions(&ctx, &model),
        ExperimentKind::Nagaev => nagaev(&ctx, &model, runner),
        ExperimentKind::Spine => spine(&ctx, &model, runner),
        ExperimentKind::Theorem => theorem(&ctx, &model, runner),
        ExperimentKind::ErrorTerms => error_terms(&ctx, &model, runner),
        ExperimentKind::DumpPopulation => dump_population(&ctx, &model),
    }
}

fn assumptions(ctx: &Ctx, model: &PointProcessModel) -> Result<Report, LabError> {
    let report = check_assumptions(model);
    let mut out = Report::new();
    let base = ctx.row("gamma", report.gamma, 1);
    out.rows.push(base);
    for flag in &report.flags {
        let status = Some(flag.status.name().to_string());
        out.rows.push(ResultRow { status: status.clone(), ..ctx.row(flag.assumption.name(), f64::NAN, 1) });
        for e in &flag.evidence {
            out.rows.push(ResultRow {
                parameter: Some(e.argument),
                status: status.clone(),
                ..ctx.row(format!("{}:{}", flag.assumption.name(), e.probe), e.value, 1)
            });
        }
    }
    let expect = ctx.cfg.assumptions.clone().unwrap_or_default().expect;
    for (name, want) in &expect {
        let got = report.flags.iter().find(|f| f.assumption.name() == name).map(|f| f.status.name());
        let Some(got) = got else {
            return Err(LabError::Config(format!("unknown assumption `{name}` in assumptions.expect")));
        };
        out.checks.push(Check::new(format!("{name} {want}"), got == want, format!("classified as {got}")));
    }
    Ok(out)
}

fn pooled_tail<P: ReplicateRunner>(
    runner: &P,
    reps: u64,
    block: u64,
    task: impl Fn(u64, u64) -> heavybrw::Result<TailEstimate> + Sync + Send,
) -> Result<TailEstimate, LabError> {
    let batches = reps.div_ceil(PATH_BATCH);
    let parts = runner.map_replicates(batches, |b| task(PATH_BATCH.min(reps - b * PATH_BATCH), stream_id(block, b)));
    let mut parts = parts.into_iter();
    let mut acc = parts.next().expect("at least one batch")?;
    for p in parts {
        acc = acc.merge(&p?)?;
    }
    Ok(acc)
}

fn nagaev<P: ReplicateRunner>(ctx: &Ctx, model: &PointProcessModel, runner: &P) -> Result<Report, LabError> {
    let cfg = ctx.cfg;
    let schedule = cfg.schedule.expect("validated").build(model)?;
    let opts = cfg.nagaev.unwrap_or_default();
    let mut out = Report::new();
    let mut deviations = Vec::new();
    for (g, &n) in cfg.n_grid.iter().enumerate() {
        let t = schedule.t_n(n);
        let h = big_jump_threshold(n, schedule.a, schedule.sigma);
        let method = TailMethod::OneBigJump { threshold: h, defensive: opts.defensive };
        let est = pooled_tail(runner, cfg.reps, g as u64 + 1, |count, stream| {
            rw_tail_estimate(model, n as usize, t, count, &mut replicate_rng(cfg.seed, stream), method)
        })?;
        let norm = schedule.normalizer(model, n);
        let ratio = est.value / norm;
        deviations.push((ratio - 1.0).abs());
        let base = ResultRow { n: Some(n), t_n: Some(t), parameter: Some(h), ..ctx.row("", 0.0, cfg.reps) };
        out.rows.push(ResultRow {
            quantity: "tail".into(),
            estimate: est.value,
            se: Some(est.std_error),
            reference: Some(norm),
            ..base.clone()
        });
        out.rows.push(ResultRow {
            quantity: "tail_ratio".into(),
            estimate: ratio,
            se: Some(est.std_error / norm),
            reference: Some(1.0),
            ..base
        });
    }
    let last = *deviations.last().expect("nonempty grid");
    out.checks.push(Check::new(
        "ratio within tolerance at the largest n",
        last <= opts.tolerance,
        format!("|ratio - 1| = {last:.4}, tolerance {}", opts.tolerance),
    ));
    let monotone = deviations.windows(2).all(|w| w[1] <= w[0]);
    out.checks.push(Check::new("deviation nonincreasing in n", monotone, format!("{deviations:?}")));
    Ok(out)
}

/// `√(ln(2/α) / (2k))`: the DKW band for one empirical CDF at level `α`.
pub fn dkw_band(k: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * k as f64)).sqrt()
}

/// Sup distance between the empirical CDF of `xs` and a discrete law.
///
/// Both step functions only jump at samples or atoms, so it suffices to compare
/// them and their left limits there (atoms are matched up to `1e-9`).
fn discrete_cdf_gap(xs: &[f64], law: &[(f64, f64)]) -> f64 {
    const TOL: f64 = 1e-9;
    let mut samples = xs.to_vec();
    samples.sort_by(f64::total_cmp);
    let mut atoms = law.to_vec();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cum = Vec::with_capacity(atoms.len());
    let mut acc = 0.0;
    for (_, p) in &atoms {
        acc += p;
        cum.push(acc);
    }
    let k = samples.len() as f64;
    let law_at = |z: f64| {
        let i = atoms.partition_point(|a| a.0 <= z);
        if i == 0 { 0.0 } else { cum[i - 1] }
    };
    let emp_at = |z: f64| samples.partition_point(|s| *s <= z) as f64 / k;
    samples
        .iter()
        .copied()
        .chain(atoms.iter().map(|a| a.0))
        .map(|z| (emp_at(z + TOL) - law_at(z + TOL)).abs().max((emp_at(z - TOL) - law_at(z - TOL)).abs()))
        .fold(0.0, f64::max)
}

fn spine<P: ReplicateRunner>(ctx: &Ctx, model: &PointProcessModel, runner: &P) -> Result<Report, LabError> {
    let cfg = ctx.cfg;
    let sc = cfg.spine.unwrap_or_default();
    let n = sc.generations as usize;
    let reps = cfg.reps;
    let mode = SiblingMode::Sample { horizon: sc.sibling_horizon };
    let mut out = Report::new();

    let ends = runner.map_replicates(reps, |i| {
        let mut rng = replicate_rng(cfg.seed, stream_id(1, i));
        sample_spine(model, n, &mut rng, mode).map(|s| s.end())
    });
    let ends = ends.into_iter().collect::<heavybrw::Result<Vec<f64>>>()?;
    let base = ResultRow { n: Some(n as u64), ..ctx.row("", 0.0, reps) };

    if model.has_finite_broods() {
        let law = walk_sum_law(model, n)?;
        let gap = discrete_cdf_gap(&ends, &law);
        let band = dkw_band(ends.len(), sc.significance);
        out.rows.push(ResultRow {
            quantity: "marginal_cdf_gap".into(),
            estimate: gap,
            reference: Some(band),
            ..base.clone()
        });
        out.checks.push(Check::new(
            "spine marginal equals the walk law",
            gap <= band,
            format!("sup CDF gap {gap:.5} vs DKW band {band:.5}"),
        ));
    } else {
        let walks = runner.map_replicates(reps, |i| {
            let mut rng = replicate_rng(cfg.seed, stream_id(2, i));
            heavybrw::assocrw::simulate_path(model, n, &mut rng).map(|p| p[n - 1])
        });
        let walks = walks.into_iter().collect::<heavybrw::Result<Vec<f64>>>()?;
        let ks = ks_two_sample(&ends, &walks)?;
        out.rows.push(ResultRow {
            quantity: "marginal_ks".into(),
            estimate: ks.statistic,
            reference: Some(ks.p_value),
            ..base.clone()
        });
        out.checks.push(Check::new(
            "spine marginal matches the walk (KS)",
            ks.passes(sc.significance),
            format!("D = {:.5}, p = {:.4}", ks.statistic, ks.p_value),
        ));
    }

    let expo_n = sc.moment_generations as usize;
    let oracle_n = model.laplace_m(1.0 + sc.theta).powi(expo_n as i32);
    let parts = runner.map_replicates(reps.div_ceil(PATH_BATCH), |b| {
        let mut rng = replicate_rng(cfg.seed, stream_id(3, b));
        spine_exp_moment(model, sc.theta, expo_n, PATH_BATCH.min(reps - b * PATH_BATCH), &mut rng)
    });
    let mut stats = RunningStats::new();
    for p in parts {
        stats = stats.merge(&p?);
    }
    let z = (stats.mean() - oracle_n).abs() / stats.std_error();
    out.rows.push(ResultRow {
        quantity: "exp_moment".into(),
        n: Some(expo_n as u64),
        parameter: Some(sc.theta),
        estimate: stats.mean(),
        se: Some(stats.std_error()),
        reference: Some(oracle_n),
        ..base.clone()
    });
    let tight = stats.std_error() == 0.0 && (stats.mean() - oracle_n).abs() <= 1e-12 * oracle_n;
    out.checks.push(Check::new(
        "exponential moment within 3 SE",
        tight || z <= 3.0,
        format!("{} ± {} vs {oracle_n}", stats.mean(), stats.std_error()),
    ));

    if model.has_finite_broods() {
        let depth = sc.conditional_generations as usize;
        let mut rng = replicate_rng(cfg.seed, stream_id(4, 0));
        let check = spine_conditional_check(model, depth, reps, &mut rng)?;
        let max_z = check.max_z();
        // Bonferroni over cells at the configured level, normal approximation.
        let cells = check.cells.len().max(1) as f64;
        let bound = normal_quantile(1.0 - sc.significance / (2.0 * cells));
        out.rows.push(ResultRow {
            quantity: "conditional_max_z".into(),
            n: Some(depth as u64),
            parameter: Some(check.distinct_trees as f64),
            estimate: max_z,
            reference: Some(bound),
            ..base
        });
        out.checks.push(Check::new(
            "spine picks u with probability e^{-V_u}/W_n",
            max_z <= bound,
            format!("max |z| = {max_z:.3} over {} cells, bound {bound:.3}", check.cells.len()),
        ));
    }
    Ok(out)
}

/// Standard normal quantile for `q ≥ 1/2`, by bisection on `Φ(x) = (1 + P(1/2, x²/2)) / 2`.
fn normal_quantile(q: f64) -> f64 {
    let cdf = |x: f64| 0.5 * (1.0 + heavybrw::numeric::gamma_p(0.5, 0.5 * x * x));
    let (mut lo, mut hi) = (0.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn theorem<P: ReplicateRunner>(ctx: &Ctx, model: &PointProcessModel, runner: &P) -> Result<Report, LabError> {
    let cfg = ctx.cfg;
    let schedule = cfg.schedule.expect("validated").build(model)?;
    let tc = cfg.theorem.unwrap_or_default();
    let opts = DecompositionOptions { inner: tc.inner_tail(), inner_reps: tc.inner_reps, ..Default::default() };
    let res = theorem_experiment(model, &schedule, &cfg.n_grid, cfg.reps, cfg.seed, runner, &opts)?;
    let mut out = Report::new();
    for row in &res.rows {
        let base = ResultRow {
            n: Some(row.n),
            t_n: Some(row.t_n),
            r_n: Some(row.r_n),
            m_n: Some(row.m_n),
            remainder_bound: Some(row.remainder_bound),
            ..ctx.row("", 0.0, row.reps)
        };
        let put = |q: &str, v: MeanSe, reference: Option<f64>| ResultRow {
            quantity: q.into(),
            estimate: v.mean,
            se: Some(v.se),
            reference,
            ..base.clone()
        };
        out.rows.push(put("ratio", row.ratio, Some(row.y.mean)));
        out.rows.push(put("abs_diff", row.abs_diff, None));
        out.rows.push(put("nerman_y", row.y, Some(1.0)));
        out.rows.push(ResultRow { quantity: "potter_constant".into(), estimate: row.potter_constant, se: None, ..base.clone() });
        out.rows.push(ResultRow { quantity: "surrogate_share".into(), estimate: row.surrogate_share, se: None, ..base });
    }
    let diffs: Vec<f64> = res.rows.iter().map(|r| r.abs_diff.mean).collect();
    out.checks.push(Check::new(
        "mean |D_n/(nF(t_n)) - Y_r| strictly decreasing",
        diffs.windows(2).all(|w| w[1] < w[0]),
        format!("{diffs:?}"),
    ));
    let last = res.rows.last().expect("nonempty grid").ratio.mean;
    out.checks.push(Check::new(
        "grand mean ratio within tolerance at the largest n",
        (last - 1.0).abs() <= tc.tolerance,
        format!("ratio {last:.4}, tolerance {}", tc.tolerance),
    ));
    Ok(out)
}

fn error_terms<P: ReplicateRunner>(ctx: &Ctx, model: &PointProcessModel, runner: &P) -> Result<Report, LabError> {
    let cfg = ctx.cfg;
    let schedule = cfg.schedule.expect("validated").build(model)?;
    let ec = cfg.error_terms.clone().unwrap_or_default();
    let rows = error_term_experiment(model, &schedule, &cfg.n_grid, &ec.cutoffs, cfg.reps, ec.line_reps, cfg.seed, runner)?;
    let mut out = Report::new();
    for r in &rows {
        out.rows.push(ResultRow {
            n: Some(r.n),
            t_n: Some(r.t_n),
            r_n: Some(r.r_n),
            m_n: Some(r.m_n),
            parameter: r.term.cutoff(),
            se: Some(r.estimate.se),
            ..ctx.row(r.term.name(), r.estimate.mean, r.reps)
        });
    }
    let late: Vec<f64> =
        rows.iter().filter(|r| matches!(r.term, ErrorTerm::LatePassage)).map(|r| r.estimate.mean).collect();
    out.checks.push(Check::new(
        "late-passage term decreasing in n",
        late.windows(2).all(|w| w[1] < w[0]),
        format!("{late:?}"),
    ));
    for &n in &cfg.n_grid {
        for name in ["overshoot", "line_remainder"] {
            let vals: Vec<f64> =
                rows.iter().filter(|r| r.n == n && r.term.name() == name).map(|r| r.estimate.mean).collect();
            if vals.is_empty() {
                continue;
            }
            out.checks.push(Check::new(
                format!("{name} term decreasing in T at n = {n}"),
                vals.windows(2).all(|w| w[1] < w[0]),
                format!("{vals:?}"),
            ));
        }
    }
    Ok(out)
}

fn dump_population(ctx: &Ctx, model: &PointProcessModel) -> Result<Report, LabError> {
    let cfg = ctx.cfg;
    let pc = cfg.population.expect("validated");
    let growth = GrowthConfig { prune: pc.prune.to_core(), max_bytes: pc.max_bytes as usize };
    let mut rng = replicate_rng(cfg.seed, stream_id(0, 0));
    let depth = pc.generations as usize;
    let pop = grow_population(model, depth, &mut rng, &growth)?.with_seed(cfg.seed);
    let mut out = Report::new();

    let mut text = Vec::new();
    let ledger = pop.ledger(depth)?;
    text.extend_from_slice(
        format!("# seed={} config_hash={} generations={depth} ledger={ledger}\n", cfg.seed, ctx.hash).as_bytes(),
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["generation", "index", "label", "parent", "position", "weight", "ledger", "seed", "config_hash"])?;
    for g in 0..=depth {
        let led = pop.ledger(g)?;
        for (i, p) in pop.generation(g)?.iter().enumerate() {
            let label = pop.label(g, i)?.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(".");
            let parent = if g == 0 { String::new() } else { p.parent().to_string() };
            w.write_record([
                g.to_string(),
                i.to_string(),
                label,
                parent,
                p.position().to_string(),
                p.weight().to_string(),
                led.to_string(),
                cfg.seed.to_string(),
                ctx.hash.to_string(),
            ])?;
        }
    }
    w.flush()?;
    text.extend(w.into_inner().map_err(|e| LabError::Io(e.into_error()))?);
    out.files.push(("population.csv".into(), text));

    for g in 0..=depth {
        let w = pop.biggins_w(g)?;
        out.rows.push(ResultRow {
            n: Some(g as u64),
            remainder_bound: Some(w.ledger),
            parameter: Some(pop.generation(g)?.len() as f64),
            ..ctx.row("biggins_w", w.value, 1)
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_gap_is_zero_on_exact_samples() {
        let law = [(0.0, 0.5), (1.0, 0.5)];
        assert_eq!(discrete_cdf_gap(&[0.0, 1.0, 0.0, 1.0], &law), 0.0);
        assert!((discrete_cdf_gap(&[0.0, 0.0, 0.0, 1.0], &law) - 0.25).abs() < 1e-12);
        assert!((discrete_cdf_gap(&[0.5, 1.0], &law) - 0.5).abs() < 1e-12);
        assert!((discrete_cdf_gap(&[2.0, 2.0], &law) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dkw_and_quantile() {
        assert!((dkw_band(10_000, 0.01) - 0.016_276).abs() < 1e-5);
        assert!((normal_quantile(0.975) - 1.959_964).abs() < 1e-5);
        assert!((normal_quantile(0.995) - 2.575_829).abs() < 1e-5);
    }
}
