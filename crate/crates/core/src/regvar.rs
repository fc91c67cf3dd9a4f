//! Regularly varying tails `F̄(t) = t^{-p} ℓ(t)` and tail-index diagnostics.

use alloc::vec::Vec;

use crate::error::{bail, Result};

/// Built-in slowly varying factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlowlyVarying {
    /// `ℓ ≡ 1`.
    One,
    /// `ℓ(t) = log(e + t)^β`.
    LogPow { beta: f64 },
}

impl SlowlyVarying {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            SlowlyVarying::One => 1.0,
            SlowlyVarying::LogPow { beta } => libm::pow(libm::log(core::f64::consts::E + t.max(0.0)), beta),
        }
    }

    pub fn is_one(&self) -> bool {
        match *self {
            SlowlyVarying::One => true,
            SlowlyVarying::LogPow { beta } => beta == 0.0,
        }
    }
}

/// A tail function equal to 1 up to `support_floor` and to
/// `(t/floor)^{-p} ℓ(t)/ℓ(floor)` above it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailModel {
    index_p: f64,
    slowly_varying: SlowlyVarying,
    support_floor: f64,
}

impl TailModel {
    /// `ℓ(t) = log(e+t)^β` keeps the tail nonincreasing only for `β ≤ p`.
    pub fn new(index_p: f64, slowly_varying: SlowlyVarying, support_floor: f64) -> Result<Self> {
        if !(index_p > 0.0) || !index_p.is_finite() {
            bail!(Domain, "tail index must be positive and finite, got {index_p}");
        }
        if !(support_floor > 0.0) || !support_floor.is_finite() {
            bail!(Domain, "support floor must be positive and finite, got {support_floor}");
        }
        if let SlowlyVarying::LogPow { beta } = slowly_varying {
            if !beta.is_finite() || beta > index_p {
                bail!(Domain, "log-power exponent {beta} must be finite and at most p = {index_p}");
            }
        }
        Ok(Self { index_p, slowly_varying, support_floor })
    }

    pub fn pareto(index_p: f64) -> Result<Self> {
        Self::new(index_p, SlowlyVarying::One, 1.0)
    }

    pub fn index_p(&self) -> f64 {
        self.index_p
    }

    pub fn slowly_varying(&self) -> SlowlyVarying {
        self.slowly_varying
    }

    pub fn support_floor(&self) -> f64 {
        self.support_floor
    }
}

/// `F̄(t)` for a [`TailModel`].
pub fn tail_eval(model: &TailModel, t: f64) -> Result<f64> {
    if !t.is_finite() {
        bail!(Domain, "tail evaluated at non-finite t = {t}");
    }
    if t <= model.support_floor {
        return Ok(1.0);
    }
    let l = model.slowly_varying.eval(t) / model.slowly_varying.eval(model.support_floor);
    Ok((libm::pow(t / model.support_floor, -model.index_p) * l).clamp(0.0, 1.0))
}

/// `F̄((1-ε)t) / F̄(t)`, the ratio bounded by the Potter constant.
pub fn potter_ratio(model: &TailModel, eps: f64, t: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        bail!(Domain, "epsilon must lie in (0,1), got {eps}");
    }
    let num = tail_eval(model, (1.0 - eps) * t)?;
    let den = tail_eval(model, t)?;
    if den == 0.0 {
        bail!(Domain, "tail vanishes at t = {t}");
    }
    Ok(num / den)
}

/// Hill estimator of the tail index from the `k` largest positive samples,
/// using the `(k+1)`-th largest as the reference level.
pub fn hill_estimate(samples: &[f64], k: usize) -> Result<f64> {
    if k < 2 {
        bail!(Domain, "Hill estimator needs k >= 2, got {k}");
    }
    if k >= samples.len() {
        bail!(Domain, "k = {k} must be smaller than the sample size {}", samples.len());
    }
    let mut pos: Vec<f64> = samples.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect();
    if pos.len() < k + 1 {
        bail!(InsufficientData, "only {} positive samples for k = {k}", pos.len());
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    let reference = libm::log(pos[k]);
    let h: f64 = pos[..k].iter().map(|x| libm::log(*x) - reference).sum::<f64>() / k as f64;
    if !(h > 0.0) {
        bail!(InsufficientData, "degenerate sample: top order statistics coincide");
    }
    Ok(1.0 / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{open01, replicate_rng};
    use proptest::prelude::*;

    fn pareto_samples(p: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut r = replicate_rng(seed, 0);
        (0..n).map(|_| libm::pow(open01(&mut r), -1.0 / p)).collect()
    }

    #[test]
    fn pareto_tail_values() {
        let m = TailModel::pareto(3.0).unwrap();
        let quad = |t: f64| crate::numeric::integrate_to_infinity(|x| 3.0 * libm::pow(x, -4.0), t);
        assert!((tail_eval(&m, 2.0).unwrap() - 0.125).abs() < 1e-15);
        assert!((tail_eval(&m, 2.0).unwrap() - quad(2.0)).abs() < 1e-10);
        assert_eq!(tail_eval(&m, 1.0).unwrap(), 1.0);
        assert!((tail_eval(&m, 10.0).unwrap() - 0.001).abs() < 1e-16);
        assert!((tail_eval(&m, 10.0).unwrap() - quad(10.0)).abs() < 1e-12);
        assert!(tail_eval(&m, f64::NAN).is_err());
        assert!(tail_eval(&m, f64::INFINITY).is_err());
    }

    #[test]
    fn ratio_limits() {
        let m = TailModel::pareto(3.0).unwrap();
        for &lam in &[2.0f64, 10.0] {
            let r = tail_eval(&m, lam * 1e4).unwrap() / tail_eval(&m, 1e4).unwrap();
            assert!((r - lam.powf(-3.0)).abs() < 1e-15);
        }
        let lp = TailModel::new(3.0, SlowlyVarying::LogPow { beta: 2.0 }, 1.0).unwrap();
        let r = tail_eval(&lp, 2e4).unwrap() / tail_eval(&lp, 1e4).unwrap();
        let l = SlowlyVarying::LogPow { beta: 2.0 };
        assert!((r - 0.125 * l.eval(2e4) / l.eval(1e4)).abs() < 1e-15);
        assert!(r > 0.125 && r < 0.125 * 1.2);
    }

    #[test]
    fn potter_bound() {
        let m = TailModel::pareto(3.0).unwrap();
        let bound = 0.9f64.powf(-3.0) + 1e-12;
        for i in 0..1000 {
            let t = 1.0 / 0.9 + 0.01 + i as f64;
            assert!(potter_ratio(&m, 0.1, t).unwrap() <= bound);
        }
    }

    #[test]
    fn hill_recovers_pareto_index() {
        let p3 = hill_estimate(&pareto_samples(3.0, 100_000, 11), 1000).unwrap();
        assert!((2.7..=3.3).contains(&p3), "{p3}");
        let p1 = hill_estimate(&pareto_samples(1.0, 100_000, 12), 1000).unwrap();
        assert!((0.9..=1.1).contains(&p1), "{p1}");
    }

    #[test]
    fn hill_errors() {
        assert!(matches!(hill_estimate(&[2.0; 100], 10), Err(crate::Error::InsufficientData(_))));
        assert!(hill_estimate(&[1.0, 2.0, 3.0], 1).is_err());
        assert!(hill_estimate(&[1.0, 2.0, 3.0], 3).is_err());
        assert!(matches!(hill_estimate(&[-1.0, -2.0, 3.0, 4.0], 2), Err(crate::Error::InsufficientData(_))));
    }

    proptest! {
        #[test]
        fn tail_is_monotone_and_bounded(p in 0.2f64..6.0, beta in -3.0f64..3.0, floor in 0.1f64..5.0) {
            prop_assume!(beta <= p);
            let m = TailModel::new(p, SlowlyVarying::LogPow { beta }, floor).unwrap();
            let mut prev = 1.0;
            for i in 0..1000 {
                let t = floor * 0.5 + i as f64 * 0.05 * floor;
                let v = tail_eval(&m, t).unwrap();
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert!(v <= prev + 1e-15);
                prev = v;
            }
        }
    }
}
