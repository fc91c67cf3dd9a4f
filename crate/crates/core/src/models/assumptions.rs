//! Numerical classification of the standing assumptions (A1)–(A5) and the Cox
//! Laplace-transform asymptotics.

use alloc::vec::Vec;
use core::f64::consts::LN_2;

use super::{CountLaw, ModelKind, PointProcessModel};
use crate::numeric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Assumption {
    /// `m(1) = 1` and `m(θ) = ∞` for `θ < 1`.
    A1,
    /// `m'(1) ∈ (-∞, 0)`.
    A2,
    /// `E[W_1^γ] < ∞` and `m(γ) < 1` for some `γ ∈ (1, 2)`.
    A3,
    /// `F̄` regularly varying.
    A4,
    /// `E[Z̄_1(t)^γ] = O(F̄(t)^γ)`.
    A5,
}

impl Assumption {
    pub const ALL: [Assumption; 5] = [Assumption::A1, Assumption::A2, Assumption::A3, Assumption::A4, Assumption::A5];

    pub fn name(&self) -> &'static str {
        match self {
            Assumption::A1 => "A1",
            Assumption::A2 => "A2",
            Assumption::A3 => "A3",
            Assumption::A4 => "A4",
            Assumption::A5 => "A5",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlagStatus {
    Holds,
    Fails,
    Unknown,
}

impl FlagStatus {
    pub fn name(&self) -> &'static str {
        match self {
            FlagStatus::Holds => "holds",
            FlagStatus::Fails => "fails",
            FlagStatus::Unknown => "unknown",
        }
    }
}

/// One probing computation: `probe(argument) = value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evidence {
    pub probe: &'static str,
    pub argument: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionFlag {
    pub assumption: Assumption,
    pub status: FlagStatus,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub flags: Vec<AssumptionFlag>,
    /// The exponent used for (A3)/(A5).
    pub gamma: f64,
}

impl AssumptionReport {
    pub fn status(&self, a: Assumption) -> FlagStatus {
        self.flags.iter().find(|f| f.assumption == a).map_or(FlagStatus::Unknown, |f| f.status)
    }

    pub fn holds(&self, a: Assumption) -> bool {
        self.status(a) == FlagStatus::Holds
    }
}

fn ev(probe: &'static str, argument: f64, value: f64) -> Evidence {
    Evidence { probe, argument, value }
}

const GAMMA_GRID: [f64; 9] = [1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9];

/// Classifies (A1)–(A5) for `model`, attaching the numbers behind each verdict.
pub fn check_assumptions(model: &PointProcessModel) -> AssumptionReport {
    let mut flags = Vec::with_capacity(5);

    // (A1)
    let m1 = model.laplace_m(1.0);
    let mut e1 = alloc::vec![ev("m(theta)", 1.0, m1)];
    let mut below_infinite = true;
    for th in [0.999, 0.9, 0.5] {
        let v = model.laplace_m(th);
        below_infinite &= v == f64::INFINITY;
        e1.push(ev("m(theta)", th, v));
    }
    let a1 = if (m1 - 1.0).abs() <= 1e-6 && below_infinite { FlagStatus::Holds } else { FlagStatus::Fails };
    flags.push(AssumptionFlag { assumption: Assumption::A1, status: a1, evidence: e1 });

    // (A2)
    let mp = model.laplace_m_prime(1.0).unwrap_or(f64::NEG_INFINITY);
    let a2 = if mp.is_finite() && mp < 0.0 { FlagStatus::Holds } else { FlagStatus::Fails };
    flags.push(AssumptionFlag { assumption: Assumption::A2, status: a2, evidence: alloc::vec![ev("m'(theta)", 1.0, mp)] });

    // (A3)
    let mut e3 = Vec::new();
    let mut gamma = None;
    for g in GAMMA_GRID {
        let mg = model.laplace_m(g);
        let w = w1_moment_bound(model, g);
        e3.push(ev("m(theta)", g, mg));
        e3.push(ev("E[W1^gamma] bound", g, w));
        if mg < 1.0 && w.is_finite() {
            gamma = Some(g);
        }
    }
    if model.is_log_lattice() {
        for k in [10u64, 20, 40] {
            e3.push(ev("E[W1^gamma] partial sum to level", k as f64, log_lattice_w_partial(model, 1.5, k)));
        }
    }
    let a3 = if gamma.is_some() { FlagStatus::Holds } else { FlagStatus::Fails };
    flags.push(AssumptionFlag { assumption: Assumption::A3, status: a3, evidence: e3 });
    let gamma = gamma.unwrap_or(1.5);

    // (A4)
    let mut e4 = Vec::new();
    let mut indices = Vec::new();
    let mut positive = true;
    for t in [1e2, 1e3, 1e4, 1e5] {
        let f = model.tail_f(t);
        let f2 = model.tail_f(2.0 * t);
        positive &= f > 0.0 && f2 > 0.0;
        let idx = if f > 0.0 && f2 > 0.0 { -libm::log2(f2 / f) } else { f64::NAN };
        e4.push(ev("Fbar(t)", t, f));
        e4.push(ev("local index -log2(Fbar(2t)/Fbar(t))", t, idx));
        indices.push(idx);
    }
    let a4 = if !positive {
        FlagStatus::Fails
    } else if indices.iter().all(|i| i.is_finite() && *i > 0.0) && (indices[3] - indices[2]).abs() <= 0.1 {
        FlagStatus::Holds
    } else {
        FlagStatus::Unknown
    };
    flags.push(AssumptionFlag { assumption: Assumption::A4, status: a4, evidence: e4 });

    // (A5)
    let grid = [1e1, 1e2, 1e3, 1e4];
    let mut e5 = Vec::new();
    let a5 = if model.has_finite_broods() {
        e5.push(ev("finite broods (Zbar_1(t)/Fbar(t) -> 0 a.s.)", 1.0, 1.0));
        for t in grid {
            e5.push(ev("E[Zbar1(t)^gamma]/Fbar(t)^gamma", t, finite_brood_ratio(model, gamma, t)));
        }
        FlagStatus::Fails
    } else {
        match model.kind() {
            ModelKind::PoissonRegVar { .. } => {
                let ratios: Vec<f64> = grid
                    .iter()
                    .map(|&t| {
                        let f = model.tail_f(t);
                        libm::pow(model.second_weight_tail(t) + f * f, 0.5 * gamma) / libm::pow(f, gamma)
                    })
                    .collect();
                for (t, r) in grid.iter().zip(&ratios) {
                    e5.push(ev("upper bound E[Zbar1(t)^2]^(gamma/2)/Fbar(t)^gamma", *t, *r));
                }
                if ratios.iter().all(|r| r.is_finite()) && ratios[3] <= ratios[0] * (1.0 + 1e-9) {
                    FlagStatus::Holds
                } else {
                    FlagStatus::Unknown
                }
            }
            ModelKind::CoxExpTilt { p, b, gap_scale } => {
                let ratios: Vec<f64> =
                    grid.iter().map(|&t| cox_a5_lower_ratio(model, *p, *b, *gap_scale, gamma, t)).collect();
                for (t, r) in grid.iter().zip(&ratios) {
                    e5.push(ev("lower bound E[E[Zbar1(t)|f]^gamma]/Fbar(t)^gamma", *t, *r));
                }
                let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
                if increasing && ratios[3] > 4.0 * ratios[0] {
                    FlagStatus::Fails
                } else {
                    FlagStatus::Unknown
                }
            }
            _ => FlagStatus::Unknown,
        }
    };
    flags.push(AssumptionFlag { assumption: Assumption::A5, status: a5, evidence: e5 });

    AssumptionReport { flags, gamma }
}

/// `E[W_1^γ]` or a Jensen upper bound for it; `+∞` when it diverges.
fn w1_moment_bound(model: &PointProcessModel, gamma: f64) -> f64 {
    let h = model.shift;
    match model.kind() {
        ModelKind::PoissonRegVar { .. } => {
            let m1 = model.laplace_m(1.0);
            libm::pow(model.laplace_m(2.0) + m1 * m1, 0.5 * gamma)
        }
        ModelKind::CoxExpTilt { p, b, gap_scale } => {
            if gamma >= p + 1.0 {
                return f64::INFINITY;
            }
            let g = *gap_scale;
            let norm = (p + 1.0) / libm::pow(g, p + 1.0);
            let mean = |s: f64| libm::exp(-h) * b / s;
            let var = |s: f64| libm::exp(-2.0 * h) * b / (1.0 + s);
            // s^p (b²/s²)^{γ/2} keeps an integrable singularity s^{p-γ}; integrate on a log scale.
            numeric::integrate_adaptive(
                |u: f64| {
                    let s = g * libm::exp(u);
                    norm * libm::pow(s, *p) * libm::pow(var(s) + mean(s) * mean(s), 0.5 * gamma) * s
                },
                -60.0,
                0.0,
                numeric::REL_TOL,
            )
            .value
        }
        ModelKind::AtomicSizeBiased { law: CountLaw::LogLattice { .. } } => f64::INFINITY,
        ModelKind::AtomicSizeBiased { law: CountLaw::Atoms(atoms) } => atoms
            .iter()
            .filter(|a| a.count > 0)
            .map(|a| {
                let y = model.transform(0.5 * libm::log(a.count as f64));
                a.prob * libm::pow(a.count as f64 * libm::exp(-y), gamma)
            })
            .sum(),
        ModelKind::Custom { outcomes } => outcomes
            .iter()
            .map(|o| o.prob * libm::pow(o.displacements.iter().map(|x| libm::exp(-model.transform(*x))).sum::<f64>(), gamma))
            .sum(),
    }
}

fn log_lattice_w_partial(model: &PointProcessModel, gamma: f64, levels: u64) -> f64 {
    let p = model.tail_index().unwrap_or(1.0);
    let c = 1.0 / numeric::zeta(p + 1.0);
    (1..=levels)
        .map(|k| {
            let kf = k as f64;
            c * libm::pow(kf, -(p + 1.0)) * libm::exp((gamma - 1.0) * kf * LN_2)
        })
        .sum::<f64>()
        * libm::exp(-gamma * model.shift)
}

fn finite_brood_ratio(model: &PointProcessModel, gamma: f64, t: f64) -> f64 {
    let f = model.tail_f(t);
    let num: f64 = match model.kind() {
        ModelKind::AtomicSizeBiased { law: CountLaw::LogLattice { .. } } => return f64::INFINITY,
        ModelKind::AtomicSizeBiased { law: CountLaw::Atoms(atoms) } => atoms
            .iter()
            .filter(|a| a.count > 0)
            .map(|a| {
                let y = model.transform(0.5 * libm::log(a.count as f64));
                if y > t {
                    a.prob * libm::pow(a.count as f64 * libm::exp(-y), gamma)
                } else {
                    0.0
                }
            })
            .sum(),
        ModelKind::Custom { outcomes } => outcomes
            .iter()
            .map(|o| {
                let z: f64 = o
                    .displacements
                    .iter()
                    .map(|x| model.transform(*x))
                    .filter(|y| *y > t)
                    .map(|y| libm::exp(-y))
                    .sum();
                o.prob * libm::pow(z, gamma)
            })
            .sum(),
        _ => f64::NAN,
    };
    if f > 0.0 {
        num / libm::pow(f, gamma)
    } else {
        f64::NAN
    }
}

/// Jensen lower bound `E[E[Z̄_1(t) | f]^γ] / F̄(t)^γ` for the Cox kind.
fn cox_a5_lower_ratio(model: &PointProcessModel, p: f64, b: f64, g: f64, gamma: f64, t: f64) -> f64 {
    let y = t - model.shift;
    if y <= 0.0 || gamma >= p + 1.0 {
        return f64::NAN;
    }
    // E[s^{-γ} e^{-γ y s}] under the density (p+1) s^p / g^{p+1} on (0, g].
    let a = p - gamma + 1.0;
    let expect = (p + 1.0) / libm::pow(g, p + 1.0)
        * libm::exp(numeric::ln_gamma(a) - a * libm::log(gamma * y))
        * numeric::gamma_p(a, gamma * y * g);
    let num = libm::exp(-gamma * model.shift) * libm::pow(b, gamma) * expect;
    num / libm::pow(model.tail_f(t), gamma)
}

/// Law of `f` for [`cox_laplace_asymptotic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapDistribution {
    /// `P(1 - f ≤ s) = (s / scale)^{p+1}` on `(0, scale]`, so `ℓ ≡ scale^{-(p+1)}`.
    Power { scale: f64 },
    /// `f` constant.
    PointMass { f: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxLaplaceRatio {
    /// `E[e^{-t(1-f)}] t^{p+1} / (ℓ(1/t) Γ(p+2))`.
    pub ratio: f64,
    /// `E[e^{-t(1-f)}]`.
    pub laplace: f64,
    /// Whether the gap law has the required power behaviour at 0.
    pub hypothesis_holds: bool,
}

/// Ratio of `E[e^{-t(1-f)}]` to its regularly varying limit `t^{-(p+1)} ℓ(1/t) Γ(p+2)`.
pub fn cox_laplace_asymptotic(dist: GapDistribution, p: f64, t: f64) -> CoxLaplaceRatio {
    let limit_gamma = numeric::gamma(p + 2.0);
    match dist {
        GapDistribution::Power { scale } => {
            let a = p + 1.0;
            let norm = a / libm::pow(scale, a);
            let laplace = norm * libm::exp(numeric::ln_gamma(a) - a * libm::log(t)) * numeric::gamma_p(a, t * scale);
            let ell = 1.0 / libm::pow(scale, a);
            CoxLaplaceRatio {
                ratio: laplace * libm::pow(t, a) / (ell * limit_gamma),
                laplace,
                hypothesis_holds: scale > 0.0,
            }
        }
        GapDistribution::PointMass { f } => {
            let laplace = libm::exp(-t * (1.0 - f));
            CoxLaplaceRatio {
                ratio: laplace * libm::pow(t, p + 1.0) / limit_gamma,
                laplace,
                hypothesis_holds: false,
            }
        }
    }
}
