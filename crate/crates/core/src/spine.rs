//! Size-biased broods, the spine, and change-of-measure checks.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use rand::RngCore;

use crate::assocrw::{estimate_path_events, PathProbe, PathSummary, TailEstimate, TailMethod};
use crate::brw::{GrowthConfig, Population};
use crate::error::{bail, Result};
use crate::models::{Brood, CountLaw, ModelKind, PointProcessModel};
use crate::rng::{index, open01};
use crate::stats::RunningStats;

/// Attempts before rejection sampling of a size-biased brood gives up.
pub const MAX_REJECTIONS: u32 = 1_000_000;

/// Whether spine siblings are materialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SiblingMode {
    /// Only the spine positions (distributed as the associated walk).
    Skip,
    /// Siblings with displacement up to `horizon` (and the model cap).
    Sample { horizon: f64 },
}

/// The spine `w_0, …, w_n` with the siblings met along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct SpineTrajectory {
    /// `V(w_0) = 0, …, V(w_n)`.
    pub positions: Vec<f64>,
    /// Displacements of the spine's siblings at each step (empty under [`SiblingMode::Skip`]).
    pub siblings: Vec<Vec<f64>>,
    /// 1-based brood index of the spine child at each step.
    pub spine_child: Vec<u32>,
}

impl SpineTrajectory {
    pub fn len(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn end(&self) -> f64 {
        *self.positions.last().expect("root position")
    }

    /// `e^{-V(w_n)}`.
    pub fn final_weight(&self) -> f64 {
        libm::exp(-self.end())
    }

    pub fn displacements(&self) -> Vec<f64> {
        self.positions.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

fn spine_increment<R: RngCore + ?Sized>(model: &PointProcessModel, rng: &mut R) -> Result<f64> {
    match model.cap() {
        Some(cap) => model.sample_increment_below(cap, rng),
        None => Ok(model.sample_increment(rng)),
    }
}

/// One size-biased brood with its spine child.
///
/// Siblings beyond `horizon` are not materialized; returns the spine's index
/// in `out` and the expected per-unit weight left out.
fn size_biased_step<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    horizon: f64,
    rng: &mut R,
    out: &mut Vec<f64>,
) -> Result<(usize, f64)> {
    out.clear();
    let cap = model.cap().unwrap_or(f64::INFINITY);
    match model.kind() {
        ModelKind::PoissonRegVar { .. } => {
            let spine = spine_increment(model, rng)?;
            let dropped = model.sample_brood_into(horizon, rng, out)?;
            let j = index(rng, out.len() + 1);
            out.insert(j, spine);
            Ok((j, dropped))
        }
        ModelKind::CoxExpTilt { p, b, gap_scale } => {
            // The tilted gap has density ∝ s^{p-1}; given it, the spine point is Exp(s).
            let raw_cap = cap - model.shift();
            let (s, x) = loop {
                let s = gap_scale * libm::pow(open01(rng), 1.0 / p);
                let x = crate::rng::exp1(rng) / s;
                if x <= raw_cap {
                    break (s, x + model.shift());
                }
            };
            let limit = horizon.min(cap);
            model.cox_brood_given_gap(*b, s, limit, rng, out)?;
            let j = index(rng, out.len() + 1);
            out.insert(j, x);
            Ok((j, if limit == f64::INFINITY { 0.0 } else { model.tail_f(limit) }))
        }
        ModelKind::AtomicSizeBiased { law: CountLaw::LogLattice { .. } } => {
            // The size-biased level is the increment level; all 4^k children are tied.
            let x = spine_increment(model, rng)?;
            let k = libm::round((x - model.shift()) / LN_2) as u32;
            let count = if k >= 32 { u64::MAX } else { 1u64 << (2 * k) };
            if count > 1 << 26 {
                bail!(Resource, "size-biased brood with {count} points");
            }
            let j = index(rng, count as usize);
            if x <= horizon {
                out.resize(count as usize, x);
                Ok((j, 0.0))
            } else {
                out.push(x);
                Ok((0, (count - 1) as f64 * libm::exp(-x)))
            }
        }
        _ => {
            let Some(bound) = model.brood_weight_bound() else {
                bail!(Config, "no a.s. bound on the brood weight for rejection sampling");
            };
            for _ in 0..MAX_REJECTIONS {
                model.sample_brood_into(f64::INFINITY, rng, out)?;
                let w: f64 = out.iter().map(|x| libm::exp(-x)).sum();
                if open01(rng) * bound <= w {
                    let mut u = open01(rng) * w;
                    let mut j = out.len() - 1;
                    for (i, x) in out.iter().enumerate() {
                        u -= libm::exp(-x);
                        if u <= 0.0 {
                            j = i;
                            break;
                        }
                    }
                    // Siblings beyond the horizon are dropped with their realized weight.
                    let spine = out[j];
                    let mut lost = 0.0;
                    let mut kept = Vec::with_capacity(out.len());
                    let mut spine_at = 0;
                    for (i, &x) in out.iter().enumerate() {
                        if i == j {
                            spine_at = kept.len();
                            kept.push(spine);
                        } else if x <= horizon {
                            kept.push(x);
                        } else {
                            lost += libm::exp(-x);
                        }
                    }
                    *out = kept;
                    return Ok((spine_at, lost));
                }
            }
            bail!(Config, "size-biased rejection with bound W1 <= {bound} failed after {MAX_REJECTIONS} attempts")
        }
    }
}

/// A brood drawn from the size-biased law `W_1 dP`.
pub fn sample_size_biased_brood<R: RngCore + ?Sized>(model: &PointProcessModel, rng: &mut R) -> Result<Brood> {
    let mut out = Vec::new();
    let (_, truncated_weight) = size_biased_step(model, f64::INFINITY, rng, &mut out)?;
    Ok(Brood { displacements: out, truncated_weight })
}

/// The spine trajectory over `n` steps; off-spine subtrees are left to the caller.
pub fn sample_spine<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    n: usize,
    rng: &mut R,
    mode: SiblingMode,
) -> Result<SpineTrajectory> {
    if n == 0 {
        bail!(Precondition, "spine length must be at least 1");
    }
    let mut traj = SpineTrajectory {
        positions: Vec::with_capacity(n + 1),
        siblings: Vec::with_capacity(n),
        spine_child: Vec::with_capacity(n),
    };
    traj.positions.push(0.0);
    let mut v = 0.0;
    let mut buf = Vec::new();
    for _ in 0..n {
        match mode {
            SiblingMode::Skip => {
                v += spine_increment(model, rng)?;
                traj.siblings.push(Vec::new());
                traj.spine_child.push(1);
            }
            SiblingMode::Sample { horizon } => {
                let (j, _) = size_biased_step(model, horizon, rng, &mut buf)?;
                v += buf[j];
                let mut sib = buf.clone();
                sib.remove(j);
                traj.siblings.push(sib);
                traj.spine_child.push(j as u32 + 1);
            }
        }
        traj.positions.push(v);
    }
    Ok(traj)
}

/// Estimate of `E_Q[e^{-θ V(w_n)}]`, which equals `m(1+θ)^n` for a normalized model.
pub fn spine_exp_moment<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    theta: f64,
    n: usize,
    reps: u64,
    rng: &mut R,
) -> Result<RunningStats> {
    if !model.laplace_m(1.0 + theta).is_finite() {
        bail!(Domain, "m(1 + {theta}) is infinite");
    }
    if reps == 0 {
        bail!(Config, "need at least one replicate");
    }
    let mut stats = RunningStats::new();
    for _ in 0..reps {
        let mut v = 0.0;
        for _ in 0..n {
            v += spine_increment(model, rng)?;
        }
        stats.push(libm::exp(-theta * v));
    }
    Ok(stats)
}

/// A population grown under `Q`: the spine reproduces size-biased, everyone else plainly.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinalPopulation {
    pub population: Population,
    /// Index of the spine particle in each generation.
    pub spine: Vec<usize>,
}

pub fn grow_spinal_population<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    n: usize,
    rng: &mut R,
    config: &GrowthConfig,
) -> Result<SpinalPopulation> {
    let mut pop = Population::new();
    let mut spine = alloc::vec![0usize];
    let mass = model.laplace_m(1.0);
    for k in 0..n {
        let s = spine[k];
        let mut spine_child = 0usize;
        pop.extend_with(config, mass, Some(s), |i, horizon, buf| {
            if i == s {
                let (j, dropped) = size_biased_step(model, horizon, &mut *rng, buf)?;
                spine_child = j;
                Ok(dropped)
            } else {
                model.sample_brood_into(horizon, &mut *rng, buf)
            }
        })?;
        let first = pop.generation(k)?[s].children().start;
        spine.push(first + spine_child);
    }
    Ok(SpinalPopulation { population: pop, spine })
}

/// Minimum number of identical realized trees for a conditional cell.
pub const MIN_COINCIDENT: u64 = 30;

/// Observed spine frequency at one particle of one realized tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalCell {
    pub tree: usize,
    pub label: Vec<u32>,
    /// `e^{-V_u} / W_n`.
    pub expected: f64,
    pub observed: f64,
    /// Binomial standard error at the expected frequency.
    pub std_error: f64,
    /// Replicates that realized this tree.
    pub trees_seen: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalCheck {
    pub cells: Vec<ConditionalCell>,
    pub distinct_trees: usize,
}

impl ConditionalCheck {
    /// Largest `|observed - expected| / std_error` over cells with nonzero error.
    pub fn max_z(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| {
                let d = (c.observed - c.expected).abs();
                if c.std_error > 0.0 {
                    d / c.std_error
                } else if d < 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Groups spinal trees up to generation `n` by their realized shape and compares
/// spine frequencies with `e^{-V_u}/W_n`.
pub fn spine_conditional_check<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    n: usize,
    reps: u64,
    rng: &mut R,
) -> Result<ConditionalCheck> {
    if !model.has_finite_broods() {
        bail!(Precondition, "conditional spine check needs a.s. finite broods");
    }
    struct Tally {
        count: u64,
        hits: Vec<u64>,
        first_seen: usize,
        pop: Population,
    }
    let cfg = GrowthConfig::with_prune(crate::brw::Prune::None);
    let mut trees: BTreeMap<Vec<(u32, u32, i64)>, Tally> = BTreeMap::new();
    for r in 0..reps {
        let sp = grow_spinal_population(model, n, rng, &cfg)?;
        let mut key = Vec::new();
        for g in 1..=n {
            for p in sp.population.generation(g)? {
                key.push((g as u32, p.parent(), libm::round(p.position() * (1u64 << 36) as f64) as i64));
            }
        }
        let size = sp.population.generation(n)?.len();
        let t = trees.entry(key).or_insert_with(|| Tally {
            count: 0,
            hits: alloc::vec![0; size],
            first_seen: r as usize,
            pop: sp.population.clone(),
        });
        t.count += 1;
        t.hits[sp.spine[n]] += 1;
    }
    let mut tallies: Vec<&Tally> = trees.values().filter(|t| t.count >= MIN_COINCIDENT).collect();
    if tallies.is_empty() {
        bail!(
            InsufficientData,
            "no realized tree occurred {MIN_COINCIDENT} times in {reps} replicates ({} distinct)",
            trees.len()
        );
    }
    tallies.sort_by_key(|t| t.first_seen);
    let mut cells = Vec::new();
    for (id, t) in tallies.iter().enumerate() {
        let gen = t.pop.generation(n)?;
        let w: f64 = t.pop.biggins_w(n)?.value;
        for (i, p) in gen.iter().enumerate() {
            let expected = p.weight() / w;
            cells.push(ConditionalCell {
                tree: id,
                label: t.pop.label(n, i)?,
                expected,
                observed: t.hits[i] as f64 / t.count as f64,
                std_error: libm::sqrt(expected * (1.0 - expected) / t.count as f64),
                trees_seen: t.count,
            });
        }
    }
    Ok(ConditionalCheck { cells, distinct_trees: trees.len() })
}

/// Weight of `{V_u > t}` in generation `n` split by the number of ancestral
/// jumps above `h`, in expectation.
///
/// Along the spine the positions form the associated walk, so each bucket is
/// a walk probability and is estimated by path sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CensusEstimate {
    pub none: TailEstimate,
    pub one: TailEstimate,
    pub several: TailEstimate,
}

impl CensusEstimate {
    pub fn total(&self) -> f64 {
        self.none.value + self.one.value + self.several.value
    }

    /// Share of the `exactly one big jump` bucket.
    pub fn one_share(&self) -> f64 {
        self.one.value / self.total()
    }
}

pub fn census_estimate<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    n: usize,
    t: f64,
    h: f64,
    reps: u64,
    rng: &mut R,
    method: TailMethod,
) -> Result<CensusEstimate> {
    let probe = PathProbe { level: None, jump_threshold: Some(h) };
    let none = |p: &PathSummary| p.sum > t && p.big_jumps == 0;
    let one = |p: &PathSummary| p.sum > t && p.big_jumps == 1;
    let several = |p: &PathSummary| p.sum > t && p.big_jumps >= 2;
    let est = estimate_path_events(model, n, reps, rng, method, probe, &[&none, &one, &several])?;
    Ok(CensusEstimate { none: est[0], one: est[1], several: est[2] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brw::{grow_population, Prune};
    use crate::exact::enumerate_generation_law;
    use crate::models::BroodOutcome;
    use crate::rng::{replicate_rng, ChaCha8Rng};
    use crate::stats::ks_two_sample;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn desk_size_biased_brood_is_always_four() {
        let m = PointProcessModel::desk_atomic();
        let mut stats = RunningStats::new();
        for s in 0..500 {
            let b = sample_size_biased_brood(&m, &mut rng(s)).unwrap();
            assert_eq!(b.displacements.len(), 4);
            assert!(b.displacements.iter().all(|x| (x - LN_2).abs() < 1e-15));
            stats.push(b.weight());
        }
        assert!((stats.mean() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn size_biased_weight_mean_is_second_moment() {
        // Custom model: E[W1^2] / E[W1] by enumeration.
        let m = PointProcessModel::custom(alloc::vec![
            BroodOutcome { prob: 0.3, displacements: alloc::vec![0.2, 1.0] },
            BroodOutcome { prob: 0.7, displacements: alloc::vec![1.5] },
        ])
        .unwrap();
        let w = |d: &[f64]| d.iter().map(|x| (-x).exp()).sum::<f64>();
        let (w1, w2) = (w(&[0.2, 1.0]), w(&[1.5]));
        let oracle = (0.3 * w1 * w1 + 0.7 * w2 * w2) / (0.3 * w1 + 0.7 * w2);
        let mut stats = RunningStats::new();
        let mut r = rng(3);
        for _ in 0..40_000 {
            let b = sample_size_biased_brood(&m, &mut r).unwrap();
            assert!(!b.displacements.is_empty());
            stats.push(b.weight());
        }
        assert!((stats.mean() - oracle).abs() < 3.0 * stats.std_error(), "{} vs {oracle}", stats.mean());
    }

    #[test]
    fn poisson_size_biased_weight_mean() {
        // E[W1^2] = Var W1 + 1 = ∫ e^{-2x} μ(dx) + (∫ e^{-x} μ)^2 on the capped model.
        let m = PointProcessModel::example_poisson().with_cap(8.0).unwrap();
        let mass = m.laplace_m(1.0) - m.tail_f(8.0);
        let second = m.second_weight_tail(1.0) - m.second_weight_tail(8.0);
        let oracle = (second + mass * mass) / mass;
        let mut stats = RunningStats::new();
        let mut r = rng(4);
        for _ in 0..40_000 {
            let b = sample_size_biased_brood(&m, &mut r).unwrap();
            assert!(!b.displacements.is_empty());
            stats.push(b.weight());
        }
        assert!((stats.mean() - oracle).abs() < 3.0 * stats.std_error(), "{} vs {oracle}", stats.mean());
    }

    #[test]
    fn desk_spine_is_deterministic() {
        let m = PointProcessModel::desk_atomic();
        let t = sample_spine(&m, 5, &mut rng(1), SiblingMode::Sample { horizon: f64::INFINITY }).unwrap();
        for (k, v) in t.positions.iter().enumerate() {
            assert!((v - k as f64 * LN_2).abs() < 1e-13);
        }
        for sib in &t.siblings {
            assert_eq!(sib.len(), 3);
            assert!(sib.iter().all(|x| (x - LN_2).abs() < 1e-15));
        }
        let e = spine_exp_moment(&m, 1.0, 3, 10, &mut rng(2)).unwrap();
        assert!((e.mean() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn spine_marginal_matches_walk() {
        let m = PointProcessModel::example_poisson().with_cap(40.0).unwrap();
        let mut r = rng(9);
        let spine: Vec<f64> = (0..3000).map(|_| sample_spine(&m, 20, &mut r, SiblingMode::Sample { horizon: 8.0 }).unwrap().end()).collect();
        let walk: Vec<f64> = (0..3000)
            .map(|_| crate::assocrw::simulate_path(&m, 20, &mut r).unwrap()[19])
            .collect();
        // The capped walk differs from the plain one only beyond the cap.
        let ks = ks_two_sample(&spine, &walk).unwrap();
        assert!(ks.passes(0.01), "{ks:?}");
    }

    #[test]
    fn one_step_spine_is_increment_law() {
        let m = PointProcessModel::example_cox(3.0).unwrap().with_cap(12.0).unwrap();
        let mut r = rng(10);
        let a: Vec<f64> = (0..4000)
            .map(|_| sample_spine(&m, 1, &mut r, SiblingMode::Sample { horizon: 12.0 }).unwrap().end())
            .collect();
        let b: Vec<f64> = (0..4000).map(|_| m.sample_increment_below(12.0, &mut r).unwrap()).collect();
        assert!(ks_two_sample(&a, &b).unwrap().passes(0.01));
    }

    #[test]
    fn exp_moment_matches_laplace() {
        let m = PointProcessModel::example_poisson();
        let e = spine_exp_moment(&m, 0.5, 10, 20_000, &mut rng(5)).unwrap();
        let oracle = libm::pow(m.laplace_m(1.5), 10.0);
        assert!((e.mean() - oracle).abs() < 3.0 * e.std_error());
        let z = spine_exp_moment(&m, 0.0, 10, 10, &mut rng(5)).unwrap();
        assert_eq!(z.mean(), 1.0);
        let bad = PointProcessModel::example_log_lattice(1.5).unwrap();
        assert!(matches!(spine_exp_moment(&bad, -0.5, 3, 10, &mut rng(5)), Err(crate::Error::Domain(_))));
    }

    #[test]
    fn conditional_spine_frequencies() {
        let m = PointProcessModel::desk_atomic();
        let c1 = spine_conditional_check(&m, 1, 4000, &mut rng(6)).unwrap();
        assert_eq!(c1.cells.len(), 4);
        assert!(c1.cells.iter().all(|c| (c.expected - 0.25).abs() < 1e-15));
        assert!(c1.max_z() < 3.0, "{c1:?}");
        let c0 = spine_conditional_check(&m, 0, 40, &mut rng(6)).unwrap();
        assert_eq!(c0.cells.len(), 1);
        assert_eq!(c0.cells[0].observed, 1.0);
        let c2 = spine_conditional_check(&m, 2, 8000, &mut rng(7)).unwrap();
        let full: Vec<_> = c2.cells.iter().filter(|c| c.trees_seen > 0 && c.expected == 1.0 / 16.0).collect();
        assert_eq!(full.len(), 16);
        assert!(c2.max_z() < 3.5, "{}", c2.max_z());
        let poisson = PointProcessModel::example_poisson();
        assert!(spine_conditional_check(&poisson, 1, 10, &mut rng(1)).is_err());
        let custom = PointProcessModel::custom(alloc::vec![BroodOutcome { prob: 1.0, displacements: alloc::vec![0.1, 0.2] }])
            .unwrap()
            .malthusian_normalize(1.0)
            .unwrap();
        let many = spine_conditional_check(&custom, 2, 4000, &mut rng(8)).unwrap();
        assert!(many.max_z() < 4.0);
    }

    #[test]
    fn change_of_measure_on_desk_model() {
        let m = PointProcessModel::desk_atomic();
        let law = enumerate_generation_law(&m, 2, 10_000).unwrap();
        let cfg = GrowthConfig::with_prune(Prune::None);
        let reps = 20_000;
        let mut counts = [0u64; 5];
        let mut r = rng(11);
        for _ in 0..reps {
            let sp = grow_spinal_population(&m, 2, &mut r, &cfg).unwrap();
            counts[libm::round(sp.population.biggins_w(2).unwrap().value) as usize] += 1;
        }
        for k in 0..5 {
            let plain: f64 = law
                .iter()
                .filter(|o| (o.positions.len() as f64 / 4.0 - k as f64).abs() < 1e-9)
                .map(|o| o.prob * k as f64)
                .sum();
            let q = counts[k] as f64 / reps as f64;
            let se = (plain * (1.0 - plain) / reps as f64).sqrt();
            assert!((q - plain).abs() <= 3.0 * se + 1e-15, "k={k}: {q} vs {plain}");
        }
    }

    #[test]
    fn change_of_measure_on_poisson_model() {
        let m = PointProcessModel::example_poisson().with_cap(12.0).unwrap();
        let cfg = GrowthConfig::with_prune(Prune::Absolute((-11.0f64).exp()));
        let n = 3;
        let mut plain = RunningStats::new();
        let mut q = RunningStats::new();
        for s in 0..6000 {
            let pop = grow_population(&m, n, &mut replicate_rng(60, s), &cfg).unwrap();
            let w = pop.biggins_w(n).unwrap().value;
            plain.push(if w > 1.0 { w } else { 0.0 });
            let sp = grow_spinal_population(&m, n, &mut replicate_rng(61, s), &cfg).unwrap();
            q.push(f64::from(u8::from(sp.population.biggins_w(n).unwrap().value > 1.0)));
        }
        let se = (plain.std_error().powi(2) + q.std_error().powi(2)).sqrt();
        assert!((plain.mean() - q.mean()).abs() < 3.0 * se + 0.01, "{} vs {}", plain.mean(), q.mean());
    }

    #[test]
    fn census_buckets_sum_to_tail() {
        let m = PointProcessModel::example_poisson();
        let est = census_estimate(&m, 10, 25.0, 5.0, 20_000, &mut rng(12), TailMethod::OneBigJump { threshold: 10.0, defensive: 0.2 })
            .unwrap();
        let tail = crate::assocrw::rw_tail_estimate(
            &m,
            10,
            25.0 - 10.0 * m.increment_moments().unwrap().c,
            20_000,
            &mut rng(12),
            TailMethod::OneBigJump { threshold: 10.0, defensive: 0.2 },
        )
        .unwrap();
        assert!((est.total() - tail.value).abs() <= 1e-12 * tail.value);
        assert!(est.one_share() > 0.5);
    }
}
