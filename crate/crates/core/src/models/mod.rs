//! Displacement point processes: analytic interface (`m`, `m'`, `F`) and samplers.
//!
//! A model is a raw kind together with an affine map `x ↦ scale·x + shift`
//! applied to every displacement. Kinds whose Laplace transform has a finite
//! domain boundary (Poisson, Cox, log-lattice) always have `scale = 1`.

mod assumptions;
mod intensity;

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use rand::RngCore;
use rand_distr::Distribution;

use crate::error::{bail, Error, Result};
use crate::numeric;
use crate::regvar::SlowlyVarying;
use crate::rng::{exp1, open01};

pub use assumptions::{
    check_assumptions, cox_laplace_asymptotic, Assumption, AssumptionFlag, AssumptionReport, CoxLaplaceRatio,
    Evidence, FlagStatus, GapDistribution,
};
use intensity::IntensityTable;

/// Default bound on the number of points in a single sampled brood.
pub const DEFAULT_MAX_BROOD_POINTS: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountAtom {
    pub count: u64,
    pub prob: f64,
}

/// Law of the offspring count `N` for `ξ = N δ_{(log N)/2}`.
#[derive(Debug, Clone, PartialEq)]
pub enum CountLaw {
    /// Finitely many atoms; `count = 0` is allowed.
    Atoms(Vec<CountAtom>),
    /// `N ∈ {0} ∪ {4^k : k ≥ 1}` with `P(N = 4^k) = 2^{-k} k^{-(p+1)} / ζ(p+1)`,
    /// so every point sits at `k log 2` and `F` is the zeta law on that lattice.
    LogLattice { p: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BroodOutcome {
    pub prob: f64,
    pub displacements: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// Poisson process with intensity `b e^x x^{-(p+1)} ℓ(x)` on `(1, ∞)`.
    PoissonRegVar { p: f64, ell: SlowlyVarying, b: f64 },
    /// Cox process with intensity `b e^{f x}` on `[0, ∞)`, where the gap `s = 1 - f`
    /// satisfies `P(s ≤ x) = (x / gap_scale)^{p+1}` on `(0, gap_scale]`.
    CoxExpTilt { p: f64, b: f64, gap_scale: f64 },
    /// `ξ = N δ_{(log N)/2}`.
    AtomicSizeBiased { law: CountLaw },
    /// Finite list of brood outcomes with probabilities.
    Custom { outcomes: Vec<BroodOutcome> },
}

/// One sampled brood.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Brood {
    pub displacements: Vec<f64>,
    /// Expected `e^{-x}`-weight of the points dropped beyond the cap.
    pub truncated_weight: f64,
}

impl Brood {
    pub fn weight(&self) -> f64 {
        self.displacements.iter().map(|x| libm::exp(-x)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementMoments {
    pub c: f64,
    /// `None` when the second moment diverges.
    pub sigma2: Option<f64>,
    /// Set when the variance vanishes (a point-mass increment law).
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LogPowEnvelope {
    /// Pareto proposal index.
    q: f64,
    /// Maximiser on `[1, ∞)` of `x^{-(p-q)} ℓ(x)`.
    argmax: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointProcessModel {
    kind: ModelKind,
    scale: f64,
    shift: f64,
    cap: Option<f64>,
    max_brood_points: usize,
    table: Option<Arc<IntensityTable>>,
    envelope: Option<LogPowEnvelope>,
    /// Raw support points `(x, mass)` of the intensity for finite kinds.
    points: Vec<(f64, f64)>,
    /// Cumulative increment-law weights over `points`.
    inc_cum: Vec<f64>,
    /// Cumulative outcome probabilities (atoms or custom outcomes).
    outcome_cum: Vec<f64>,
}

fn check_prob_list(probs: impl Iterator<Item = f64>) -> Result<Vec<f64>> {
    let mut cum = Vec::new();
    let mut acc = 0.0;
    for p in probs {
        if !(p >= 0.0) || !p.is_finite() {
            bail!(Config, "probabilities must be finite and nonnegative, got {p}");
        }
        acc += p;
        cum.push(acc);
    }
    if cum.is_empty() || (acc - 1.0).abs() > 1e-9 {
        bail!(Config, "outcome probabilities must sum to 1, got {acc}");
    }
    Ok(cum)
}

fn pick(cum: &[f64], u: f64) -> usize {
    let target = u * cum[cum.len() - 1];
    cum.partition_point(|c| *c <= target).min(cum.len() - 1)
}

impl PointProcessModel {
    fn from_kind(kind: ModelKind) -> Result<Self> {
        let mut points = Vec::new();
        let mut outcome_cum = Vec::new();
        let mut envelope = None;
        match &kind {
            ModelKind::PoissonRegVar { p, ell, b } => {
                if !(*p > 0.0 && p.is_finite()) || !(*b > 0.0 && b.is_finite()) {
                    bail!(Config, "Poisson model needs p > 0 and b > 0 (got p = {p}, b = {b})");
                }
                if let SlowlyVarying::LogPow { beta } = ell {
                    if !beta.is_finite() || *beta > *p {
                        bail!(Config, "log-power exponent must be finite and at most p, got {beta}");
                    }
                    envelope = Some(logpow_envelope(*p, *beta));
                }
            }
            ModelKind::CoxExpTilt { p, b, gap_scale } => {
                if !(*p > 0.0 && p.is_finite()) || !(*b > 0.0 && b.is_finite()) {
                    bail!(Config, "Cox model needs p > 0 and b > 0 (got p = {p}, b = {b})");
                }
                if !(*gap_scale > 0.0 && *gap_scale <= 1.0) {
                    bail!(Config, "gap scale must lie in (0, 1], got {gap_scale}");
                }
            }
            ModelKind::AtomicSizeBiased { law: CountLaw::Atoms(atoms) } => {
                outcome_cum = check_prob_list(atoms.iter().map(|a| a.prob))?;
                for a in atoms {
                    if a.count > 0 && a.prob > 0.0 {
                        points.push((0.5 * libm::log(a.count as f64), a.prob * a.count as f64));
                    }
                }
            }
            ModelKind::AtomicSizeBiased { law: CountLaw::LogLattice { p } } => {
                if !(*p > 0.0 && p.is_finite()) {
                    bail!(Config, "log-lattice law needs p > 0, got {p}");
                }
            }
            ModelKind::Custom { outcomes } => {
                outcome_cum = check_prob_list(outcomes.iter().map(|o| o.prob))?;
                for o in outcomes {
                    for &x in &o.displacements {
                        if !x.is_finite() {
                            bail!(Config, "custom displacements must be finite, got {x}");
                        }
                        if o.prob > 0.0 {
                            points.push((x, o.prob));
                        }
                    }
                }
            }
        }
        let mut model = Self {
            kind,
            scale: 1.0,
            shift: 0.0,
            cap: None,
            max_brood_points: DEFAULT_MAX_BROOD_POINTS,
            table: None,
            envelope,
            points,
            inc_cum: Vec::new(),
            outcome_cum,
        };
        model.rebuild();
        Ok(model)
    }

    fn rebuild(&mut self) {
        let mut acc = 0.0;
        self.inc_cum.clear();
        for &(x, mass) in &self.points {
            acc += mass * libm::exp(-self.scale * x);
            self.inc_cum.push(acc);
        }
        self.table = match (&self.kind, self.cap) {
            (ModelKind::PoissonRegVar { p, ell, b }, Some(cap)) => {
                Some(Arc::new(IntensityTable::new(*b, *p, *ell, cap - self.shift)))
            }
            _ => None,
        };
    }

    pub fn poisson_regvar(p: f64, ell: SlowlyVarying, b: f64) -> Result<Self> {
        Self::from_kind(ModelKind::PoissonRegVar { p, ell, b })
    }

    /// Poisson model with `b^{-1} = ∫_1^∞ x^{-(p+1)} ℓ(x) dx`.
    pub fn poisson_normalized(p: f64, ell: SlowlyVarying) -> Result<Self> {
        let mass = poisson_shape_integral(p, ell, 0, 1.0, 1.0);
        Self::poisson_regvar(p, ell, 1.0 / mass)
    }

    pub fn cox_exp_tilt(p: f64, b: f64, gap_scale: f64) -> Result<Self> {
        Self::from_kind(ModelKind::CoxExpTilt { p, b, gap_scale })
    }

    /// Cox model with `b` chosen so that `m(1) = 1`.
    pub fn cox_normalized(p: f64, gap_scale: f64) -> Result<Self> {
        Self::cox_exp_tilt(p, p * gap_scale / (p + 1.0), gap_scale)
    }

    pub fn atomic(law: CountLaw) -> Result<Self> {
        Self::from_kind(ModelKind::AtomicSizeBiased { law })
    }

    pub fn custom(outcomes: Vec<BroodOutcome>) -> Result<Self> {
        Self::from_kind(ModelKind::Custom { outcomes })
    }

    /// Poisson, `p = 3`, `ℓ ≡ 1`, `b = 3`.
    pub fn example_poisson() -> Self {
        Self::poisson_regvar(3.0, SlowlyVarying::One, 3.0).expect("valid parameters")
    }

    /// Normalized Cox model with unit gap scale.
    pub fn example_cox(p: f64) -> Result<Self> {
        Self::cox_normalized(p, 1.0)
    }

    /// `P(N = 0) = P(N = 4) = 1/2`, so `F = δ_{log 2}`.
    pub fn desk_atomic() -> Self {
        Self::atomic(CountLaw::Atoms(alloc::vec![
            CountAtom { count: 0, prob: 0.5 },
            CountAtom { count: 4, prob: 0.5 },
        ]))
        .expect("valid atoms")
    }

    /// Heavy-tailed atomic model on the `log 2` lattice.
    pub fn example_log_lattice(p: f64) -> Result<Self> {
        Self::atomic(CountLaw::LogLattice { p })
    }

    /// Sets the position cap `L`: sampled points beyond `L` are dropped and accounted.
    pub fn with_cap(mut self, cap: f64) -> Result<Self> {
        if !cap.is_finite() {
            bail!(Config, "cap must be finite, got {cap}");
        }
        self.cap = Some(cap);
        self.rebuild();
        Ok(self)
    }

    pub fn without_cap(mut self) -> Self {
        self.cap = None;
        self.rebuild();
        self
    }

    pub fn with_max_brood_points(mut self, max: usize) -> Self {
        self.max_brood_points = max;
        self
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn cap(&self) -> Option<f64> {
        self.cap
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Whether broods are a.s. finite without a cap.
    pub fn has_finite_broods(&self) -> bool {
        matches!(self.kind, ModelKind::AtomicSizeBiased { .. } | ModelKind::Custom { .. })
    }

    /// Regular-variation index of `F̄` when the kind has one.
    pub fn tail_index(&self) -> Option<f64> {
        match self.kind {
            ModelKind::PoissonRegVar { p, .. }
            | ModelKind::CoxExpTilt { p, .. }
            | ModelKind::AtomicSizeBiased { law: CountLaw::LogLattice { p } } => Some(p),
            _ => None,
        }
    }

    /// Infimum of the finiteness domain of `m`; `-∞` when `m` is finite everywhere.
    pub fn domain_boundary(&self) -> f64 {
        if self.is_finite_kind() {
            f64::NEG_INFINITY
        } else {
            1.0
        }
    }

    fn is_log_lattice(&self) -> bool {
        matches!(self.kind, ModelKind::AtomicSizeBiased { law: CountLaw::LogLattice { .. } })
    }

    /// Kinds described by a finite list of support points.
    fn is_finite_kind(&self) -> bool {
        matches!(
            self.kind,
            ModelKind::AtomicSizeBiased { law: CountLaw::Atoms(_) } | ModelKind::Custom { .. }
        )
    }

    /// Lowest possible displacement.
    pub fn support_floor(&self) -> f64 {
        let raw = match self.kind {
            ModelKind::PoissonRegVar { .. } => 1.0,
            ModelKind::CoxExpTilt { .. } => 0.0,
            ModelKind::AtomicSizeBiased { law: CountLaw::LogLattice { .. } } => LN_2,
            _ => {
                return self
                    .points
                    .iter()
                    .map(|(x, _)| self.scale * x + self.shift)
                    .fold(f64::INFINITY, f64::min)
            }
        };
        raw + self.shift
    }

    /// An a.s. upper bound on `W_1 = Σ e^{-x}` when one exists.
    pub fn brood_weight_bound(&self) -> Option<f64> {
        match &self.kind {
            ModelKind::AtomicSizeBiased { law: CountLaw::Atoms(atoms) } => Some(
                atoms
                    .iter()
                    .filter(|a| a.prob > 0.0)
                    .map(|a| a.count as f64 * libm::exp(-self.transform(0.5 * libm::log(a.count.max(1) as f64))))
                    .fold(0.0, f64::max),
            ),
            ModelKind::Custom { outcomes } => Some(
                outcomes
                    .iter()
                    .filter(|o| o.prob > 0.0)
                    .map(|o| o.displacements.iter().map(|x| libm::exp(-self.transform(*x))).sum::<f64>())
                    .fold(0.0, f64::max),
            ),
            _ => None,
        }
    }

    #[inline]
    fn transform(&self, x: f64) -> f64 {
        self.scale * x + self.shift
    }

    // ----- analytic interface -------------------------------------------------

    /// `∫ x^j e^{-θx} μ(dx)` for the raw (untransformed) kind; `+∞` when divergent.
    fn raw_moment(&self, theta: f64, j: u32) -> f64 {
        match &self.kind {
            ModelKind::PoissonRegVar { p, ell, b } => {
                if theta < 1.0 || (theta == 1.0 && *p <= j as f64) {
                    return f64::INFINITY;
                }
                if theta == 1.0 && ell.is_one() {
                    return b / (p - j as f64);
                }
                b * poisson_shape_integral(*p, *ell, j, theta, 1.0)
            }
            ModelKind::CoxExpTilt { p, b, gap_scale } => {
                let fact = (1..=j).product::<u32>() as f64;
                if theta < 1.0 || (theta == 1.0 && *p <= j as f64) {
                    return f64::INFINITY;
                }
                if theta == 1.0 {
                    return b * fact * (p + 1.0) / (libm::pow(*gap_scale, j as f64 + 1.0) * (p - j as f64));
                }
                let g = *gap_scale;
                let norm = (p + 1.0) / libm::pow(g, p + 1.0);
                b * fact
                    * numeric::integrate(
                        |s| norm * libm::pow(s, *p) * libm::pow(theta - 1.0 + s, -(j as f64 + 1.0)),
                        0.0,
                        g,
                    )
            }
            ModelKind::AtomicSizeBiased { law: CountLaw::LogLattice { p } } => {
                let s = p + 1.0;
                let c = 1.0 / numeric::zeta(s);
                if theta < 1.0 || (theta == 1.0 && *p <= j as f64) {
                    return f64::INFINITY;
                }
                if theta == 1.0 {
                    return c * libm::pow(LN_2, j as f64) * numeric::zeta(s - j as f64);
                }
                c * numeric::sum_series(
                    |k| {
                        let kf = k as f64;
                        libm::pow(kf, -s) * libm::pow(kf * LN_2, j as f64) * libm::exp((1.0 - theta) * kf * LN_2)
                    },
                    1,
                    1e-17,
                    1_000_000,
                )
            }
            _ => self
                .points
                .iter()
                .map(|&(x, mass)| mass * libm::pow(x, j as f64) * libm::exp(-theta * x))
                .sum(),
        }
    }

    /// `∫ y^k e^{-θy} μ̃(dy)` for the transformed process.
    fn moment(&self, theta: f64, k: u32) -> f64 {
        if theta.is_nan() {
            return f64::NAN;
        }
        if self.is_finite_kind() {
            return self
                .points
                .iter()
                .map(|&(x, mass)| {
                    let y = self.transform(x);
                    mass * libm::pow(y, k as f64) * libm::exp(-theta * y)
                })
                .sum();
        }
        let h = self.shift;
        let mut total = 0.0;
        let mut binom = 1.0;
        for j in (0..=k).rev() {
            let coef = binom * libm::pow(h, (k - j) as f64);
            if coef != 0.0 {
                let r = self.raw_moment(theta, j);
                if !r.is_finite() {
                    return f64::INFINITY;
                }
                total += coef * r;
            }
            binom = binom * j as f64 / (k - j + 1) as f64;
        }
        total * libm::exp(-theta * h)
    }

    /// `m(θ) = ∫ e^{-θx} μ(dx)`; `+∞` below the domain boundary.
    pub fn laplace_m(&self, theta: f64) -> f64 {
        self.moment(theta, 0)
    }

    /// `m'(θ) = -∫ x e^{-θx} μ(dx)`.
    pub fn laplace_m_prime(&self, theta: f64) -> Result<f64> {
        let m = self.moment(theta, 0);
        let m1 = self.moment(theta, 1);
        if !m.is_finite() || !m1.is_finite() {
            bail!(Domain, "m'({theta}) diverges");
        }
        Ok(-m1)
    }

    /// Mean and variance of the increment law `F(dx) = e^{-x} μ(dx)` (normalized by `m(1)`).
    pub fn increment_moments(&self) -> Result<IncrementMoments> {
        let m = self.laplace_m(1.0);
        let m1 = self.moment(1.0, 1);
        if !(m > 0.0 && m.is_finite()) || !m1.is_finite() {
            bail!(Precondition, "increment mean undefined: m(1) = {m}, ∫x F(dx) = {m1}");
        }
        let c = m1 / m;
        if !(c > 0.0) {
            bail!(Precondition, "increment mean c = {c} is not positive");
        }
        let m2 = self.moment(1.0, 2);
        let sigma2 = if m2.is_finite() { Some((m2 / m - c * c).max(0.0)) } else { None };
        let degenerate = sigma2.is_some_and(|s| s <= 1e-14 * (1.0 + c * c));
        Ok(IncrementMoments { c, sigma2, degenerate })
    }

    /// `F̄(t) = F(t, ∞)`.
    pub fn tail_f(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        if self.is_finite_kind() {
            return self
                .points
                .iter()
                .map(|&(x, mass)| (self.transform(x), mass))
                .filter(|(y, _)| *y > t)
                .map(|(y, mass)| mass * libm::exp(-y))
                .sum();
        }
        libm::exp(-self.shift) * self.raw_tail(t - self.shift)
    }

    fn raw_tail(&self, y: f64) -> f64 {
        match &self.kind {
            ModelKind::PoissonRegVar { p, ell, b } => {
                let y = y.max(1.0);
                if ell.is_one() {
                    b / p * libm::pow(y, -p)
                } else {
                    b * poisson_shape_integral(*p, *ell, 0, 1.0, y)
                }
            }
            ModelKind::CoxExpTilt { p, b, gap_scale } => {
                let g = *gap_scale;
                if y <= 0.0 {
                    return b * (p + 1.0) / (p * g);
                }
                b * (p + 1.0) / libm::pow(g, p + 1.0)
                    * libm::exp(numeric::ln_gamma(*p) - p * libm::log(y))
                    * numeric::gamma_p(*p, g * y)
            }
            ModelKind::AtomicSizeBiased { law: CountLaw::LogLattice { p } } => {
                let kmin = if y < LN_2 { 1 } else { libm::floor(y / LN_2) as u64 + 1 };
                numeric::power_sum_from(p + 1.0, kmin) / numeric::zeta(p + 1.0)
            }
            _ => unreachable!("finite kinds are handled by tail_f"),
        }
    }

    /// `∫_t^∞ e^{-2x} μ(dx)`, i.e. `Var[Z̄_1(t)]` for Poisson kinds.
    pub(crate) fn second_weight_tail(&self, t: f64) -> f64 {
        match &self.kind {
            ModelKind::PoissonRegVar { p, ell, b } => {
                let y = (t - self.shift).max(1.0);
                libm::exp(-2.0 * self.shift)
                    * b
                    * numeric::integrate_to_infinity(
                        |x| libm::exp(-x) * libm::pow(x, -(p + 1.0)) * ell.eval(x),
                        y,
                    )
            }
            _ => f64::NAN,
        }
    }

    /// Renormalization `x ↦ θ0 x + log m(θ0)`.
    ///
    /// For kinds with a finite domain boundary `θ0` must equal it. Models with
    /// a.s. finite broods have no boundary; any `θ0 > 0` with `m(θ0) < ∞` is
    /// accepted and the result satisfies `m̃(1) = 1` (but `m̃` stays finite below 1).
    pub fn malthusian_normalize(&self, theta0: f64) -> Result<Self> {
        let boundary = self.domain_boundary();
        if boundary.is_finite() {
            if (theta0 - boundary).abs() > 1e-9 {
                bail!(Precondition, "theta0 = {theta0} is not the domain boundary {boundary}");
            }
        } else if !(theta0 > 0.0) {
            bail!(Precondition, "theta0 must be positive, got {theta0}");
        }
        let m = self.laplace_m(theta0);
        if !(m > 0.0 && m.is_finite()) {
            bail!(Precondition, "m({theta0}) = {m} must be finite and positive");
        }
        let mut out = self.clone();
        if boundary.is_finite() {
            out.shift = self.shift + libm::log(m);
        } else {
            out.scale = theta0 * self.scale;
            out.shift = theta0 * self.shift + libm::log(m);
        }
        out.rebuild();
        Ok(out)
    }

    // ----- samplers -----------------------------------------------------------

    /// One brood under the configured cap.
    pub fn sample_brood<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<Brood> {
        let mut out = Vec::new();
        let truncated_weight = self.sample_brood_into(f64::INFINITY, rng, &mut out)?;
        Ok(Brood { displacements: out, truncated_weight })
    }

    /// Samples the points of one brood with displacement `≤ min(limit, cap)` into `out`
    /// (cleared first) and returns the expected `e^{-x}`-weight of the rest.
    pub fn sample_brood_into<R: RngCore + ?Sized>(&self, limit: f64, rng: &mut R, out: &mut Vec<f64>) -> Result<f64> {
        out.clear();
        let limit = match self.cap {
            Some(c) => limit.min(c),
            None => limit,
        };
        if limit.is_nan() {
            bail!(Domain, "brood limit is NaN");
        }
        let dropped = if limit == f64::INFINITY { 0.0 } else { self.tail_f(limit) };
        match &self.kind {
            ModelKind::PoissonRegVar { .. } => {
                if limit == f64::INFINITY {
                    bail!(Config, "Poisson broods are a.s. infinite; set a truncation cap");
                }
                let table = self.table.as_ref().ok_or_else(|| {
                    Error::Config(alloc::string::String::from("Poisson broods need a truncation cap"))
                })?;
                let raw = (limit - self.shift).min(table.max_x());
                table.sample(raw, rng, self.max_brood_points, out).map_err(|k| self.too_many(k))?;
                for x in out.iter_mut() {
                    *x += self.shift;
                }
            }
            ModelKind::CoxExpTilt { p, b, gap_scale } => {
                if limit == f64::INFINITY {
                    bail!(Config, "Cox broods are a.s. infinite; set a truncation cap");
                }
                if limit - self.shift > 0.0 {
                    let s = gap_scale * libm::pow(open01(rng), 1.0 / (p + 1.0));
                    self.cox_brood_given_gap(*b, s, limit, rng, out)?;
                }
            }
            ModelKind::AtomicSizeBiased { law: CountLaw::Atoms(atoms) } => {
                let a = atoms[pick(&self.outcome_cum, open01(rng))];
                if a.count > 0 {
                    let x = self.transform(0.5 * libm::log(a.count as f64));
                    if x <= limit {
                        if a.count > self.max_brood_points as u64 {
                            return Err(self.too_many(a.count));
                        }
                        out.resize(a.count as usize, x);
                    }
                }
            }
            ModelKind::AtomicSizeBiased { law: CountLaw::LogLattice { p } } => {
                if let Some(k) = sample_log_lattice_level(*p, rng) {
                    let x = self.transform(k as f64 * LN_2);
                    if x <= limit {
                        let count = if k >= 32 { u64::MAX } else { 1u64 << (2 * k) };
                        if count > self.max_brood_points as u64 {
                            return Err(self.too_many(count));
                        }
                        out.resize(count as usize, x);
                    }
                }
            }
            ModelKind::Custom { outcomes } => {
                let o = &outcomes[pick(&self.outcome_cum, open01(rng))];
                out.extend(o.displacements.iter().map(|x| self.transform(*x)).filter(|y| *y <= limit));
            }
        }
        Ok(dropped)
    }

    /// Cox brood given its gap `s`: Poisson with intensity `b e^{(1-s)x}` on `(0, limit - shift]`.
    pub(crate) fn cox_brood_given_gap<R: RngCore + ?Sized>(
        &self,
        b: f64,
        s: f64,
        limit: f64,
        rng: &mut R,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        let raw = limit - self.shift;
        if !(raw > 0.0) {
            return Ok(());
        }
        let f = 1.0 - s;
        let growth = if f > 0.0 { libm::expm1(f * raw) / f } else { raw };
        let k = crate::rng::poisson(rng, b * growth);
        if k > self.max_brood_points as u64 {
            return Err(self.too_many(k));
        }
        for _ in 0..k {
            let u = open01(rng);
            let x = if f > 0.0 { libm::log1p(u * libm::expm1(f * raw)) / f } else { u * raw };
            out.push(x.min(raw) + self.shift);
        }
        Ok(())
    }

    fn too_many(&self, k: u64) -> Error {
        Error::Resource(alloc::format!(
            "brood with {k} points exceeds the per-brood limit {}",
            self.max_brood_points
        ))
    }

    /// A draw from the normalized increment law `F / m(1)`.
    pub fn sample_increment<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            ModelKind::PoissonRegVar { p, ell, .. } => self.shift + self.poisson_increment_above(*p, *ell, 1.0, rng),
            ModelKind::CoxExpTilt { p, gap_scale, .. } => {
                let s = gap_scale * libm::pow(open01(rng), 1.0 / p);
                self.shift + exp1(rng) / s
            }
            ModelKind::AtomicSizeBiased { law: CountLaw::LogLattice { p } } => {
                let k = zeta_at_least(p + 1.0, 1, rng);
                self.transform(k as f64 * LN_2)
            }
            _ => {
                let i = pick(&self.inc_cum, open01(rng));
                self.transform(self.points[i].0)
            }
        }
    }

    /// A draw from `F(· | · > h)`.
    pub fn sample_increment_above<R: RngCore + ?Sized>(&self, h: f64, rng: &mut R) -> Result<f64> {
        if !(self.tail_f(h) > 0.0) {
            bail!(Domain, "increment law has no mass above {h}");
        }
        let y = (h - self.shift) / self.scale;
        Ok(match &self.kind {
            ModelKind::PoissonRegVar { p, ell, .. } => self.shift + self.poisson_increment_above(*p, *ell, y.max(1.0), rng),
            ModelKind::CoxExpTilt { p, gap_scale, .. } => {
                let y = y.max(0.0);
                let s = cox_gap_given_above(*p, *gap_scale, y, rng);
                self.shift + y + exp1(rng) / s
            }
            ModelKind::AtomicSizeBiased { law: CountLaw::LogLattice { p } } => {
                let kmin = if y < LN_2 { 1 } else { libm::floor(y / LN_2) as u64 + 1 };
                let k = zeta_at_least(p + 1.0, kmin, rng);
                self.transform(k as f64 * LN_2)
            }
            _ => {
                let mut cum = Vec::with_capacity(self.points.len());
                let mut acc = 0.0;
                for &(x, mass) in &self.points {
                    if self.transform(x) > h {
                        acc += mass * libm::exp(-self.scale * x);
                    }
                    cum.push(acc);
                }
                self.transform(self.points[pick(&cum, open01(rng))].0)
            }
        })
    }

    /// A draw from `F(· | · ≤ limit)` by rejection.
    pub fn sample_increment_below<R: RngCore + ?Sized>(&self, limit: f64, rng: &mut R) -> Result<f64> {
        let m = self.laplace_m(1.0);
        let mass_below = m - self.tail_f(limit);
        if !(mass_below > 1e-12 * m) {
            bail!(Domain, "increment law has (almost) no mass below {limit}");
        }
        for _ in 0..10_000_000u32 {
            let x = self.sample_increment(rng);
            if x <= limit {
                return Ok(x);
            }
        }
        Err(Error::Truncated {
            steps: 10_000_000,
            what: alloc::format!("rejection sampling below {limit}"),
        })
    }

    fn poisson_increment_above<R: RngCore + ?Sized>(&self, p: f64, ell: SlowlyVarying, y0: f64, rng: &mut R) -> f64 {
        let env = match (ell, self.envelope) {
            (SlowlyVarying::LogPow { beta }, Some(env)) if beta != 0.0 => env,
            _ => return y0 * libm::pow(open01(rng), -1.0 / p),
        };
        let ratio = |x: f64| libm::pow(x, -(p - env.q)) * ell.eval(x);
        let top = ratio(y0.max(env.argmax)) * (1.0 + 1e-12);
        loop {
            let x = y0 * libm::pow(open01(rng), -1.0 / env.q);
            if open01(rng) * top <= ratio(x) {
                return x;
            }
        }
    }
}

fn logpow_envelope(p: f64, beta: f64) -> LogPowEnvelope {
    if beta <= 0.0 {
        return LogPowEnvelope { q: p, argmax: 1.0 };
    }
    let q = 0.5 * p;
    let e = core::f64::consts::E;
    // d/dx log(x^{-(p-q)} ℓ(x)) = -(p-q)/x + β/((e+x) log(e+x)); single sign change.
    let deriv = |x: f64| -(p - q) / x + beta / ((e + x) * libm::log(e + x));
    let argmax = if deriv(1.0) <= 0.0 {
        1.0
    } else {
        let mut hi = 2.0;
        while deriv(hi) > 0.0 {
            hi *= 2.0;
        }
        numeric::bisect(deriv, 1.0, hi, 1e-12)
    };
    LogPowEnvelope { q, argmax }
}

/// `∫_{lo}^∞ x^{j-(p+1)} ℓ(x) e^{-(θ-1)x} dx`.
fn poisson_shape_integral(p: f64, ell: SlowlyVarying, j: u32, theta: f64, lo: f64) -> f64 {
    numeric::integrate_to_infinity(
        |x| libm::pow(x, j as f64 - (p + 1.0)) * ell.eval(x) * libm::exp(-(theta - 1.0) * x),
        lo,
    )
}

/// Level `K` of a log-lattice brood, `None` for the empty brood.
fn sample_log_lattice_level<R: RngCore + ?Sized>(p: f64, rng: &mut R) -> Option<u64> {
    let c = 1.0 / numeric::zeta(p + 1.0);
    let u = open01(rng);
    let mut acc = 0.0;
    for k in 1..2000u64 {
        let kf = k as f64;
        acc += c * libm::exp(-kf * LN_2) * libm::pow(kf, -(p + 1.0));
        if u < acc {
            return Some(k);
        }
        if acc > 1.0 || k > 60 && libm::exp(-kf * LN_2) < 1e-18 {
            break;
        }
    }
    None
}

/// Zeta law with exponent `s > 1` conditioned on `k ≥ kmin`.
fn zeta_at_least<R: RngCore + ?Sized>(s: f64, kmin: u64, rng: &mut R) -> u64 {
    if kmin <= 1 {
        if let Ok(z) = rand_distr::Zeta::new(s) {
            let k: f64 = z.sample(rng);
            return k as u64;
        }
    }
    // Proposal floor(Y) with Y Pareto(s-1) above kmin; target/proposal ≤ (1+1/kmin)^s/(s-1).
    let kmin_f = kmin.max(1) as f64;
    let bound = libm::pow(1.0 + 1.0 / kmin_f, s);
    loop {
        let y = kmin_f * libm::pow(open01(rng), -1.0 / (s - 1.0));
        if !(y < 9.0e15) {
            continue;
        }
        let k = libm::floor(y);
        let cell = libm::pow(k, 1.0 - s) - libm::pow(k + 1.0, 1.0 - s);
        let ratio = libm::pow(k, -s) * (s - 1.0) / cell;
        if open01(rng) * bound <= ratio {
            return k as u64;
        }
    }
}

/// Gap `s` of the Cox increment mixture conditioned on the increment exceeding `y ≥ 0`:
/// density `∝ s^{p-1} e^{-ys}` on `(0, g]`.
fn cox_gap_given_above<R: RngCore + ?Sized>(p: f64, g: f64, y: f64, rng: &mut R) -> f64 {
    if y * g <= p {
        loop {
            let s = g * libm::pow(open01(rng), 1.0 / p);
            if open01(rng) <= libm::exp(-y * s) {
                return s;
            }
        }
    }
    let gamma = rand_distr::Gamma::new(p, 1.0 / y).expect("positive shape and scale");
    loop {
        let s: f64 = gamma.sample(rng);
        if s <= g && s > 0.0 {
            return s;
        }
    }
}
