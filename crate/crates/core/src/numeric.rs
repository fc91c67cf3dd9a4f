//! Quadrature, special functions and small root/maximum finders.

use alloc::vec::Vec;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Default relative tolerance for reference integrals.
pub const REL_TOL: f64 = 1e-9;

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
    pub converged: bool,
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over the finite interval `[a, b]`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Quadrature {
    if a == b {
        return Quadrature { value: 0.0, abs_error: 0.0, converged: true };
    }
    let (sign, lo, hi) = if a < b { (1.0, a, b) } else { (-1.0, b, a) };
    let mut parts: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(64);
    let (v, e) = gk15(&f, lo, hi);
    parts.push((lo, hi, v, e));
    let mut total = v;
    let mut err = e;
    let mut converged = false;
    for _ in 0..2000 {
        if err <= rel_tol * total.abs() || err <= 1e-300 {
            converged = true;
            break;
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (l, r, pv, pe) = parts.swap_remove(idx);
        let mid = 0.5 * (l + r);
        if !(mid > l && mid < r) {
            parts.push((l, r, pv, 0.0));
            err -= pe;
            continue;
        }
        let (v1, e1) = gk15(&f, l, mid);
        let (v2, e2) = gk15(&f, mid, r);
        parts.push((l, mid, v1, e1));
        parts.push((mid, r, v2, e2));
        total = parts.iter().map(|p| p.2).sum();
        err = parts.iter().map(|p| p.3).sum();
    }
    Quadrature { value: sign * total, abs_error: err, converged }
}

/// `∫_a^b f` with the default tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    integrate_adaptive(f, a, b, REL_TOL).value
}

/// `∫_a^∞ f` through the substitution `x = a + (1 - u)/u`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64) -> f64 {
    integrate_adaptive(
        |u: f64| {
            let x = a + (1.0 - u) / u;
            let v = f(x) / (u * u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        REL_TOL,
    )
    .value
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let ln_pre = a * libm::log(x) - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..10_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        (sum * libm::exp(ln_pre)).min(1.0)
    } else {
        // Lentz continued fraction for Q.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - libm::exp(ln_pre) * h).max(0.0)
    }
}

/// `Σ_{k ≥ from} k^{-s}` for `s > 1`, `from ≥ 1`, via Euler–Maclaurin after a direct head.
pub fn power_sum_from(s: f64, from: u64) -> f64 {
    debug_assert!(s > 1.0 && from >= 1);
    const HEAD: u64 = 24;
    let mut head = 0.0;
    for k in from..from + HEAD {
        head += libm::pow(k as f64, -s);
    }
    let n = (from + HEAD) as f64;
    let mut tail = libm::pow(n, 1.0 - s) / (s - 1.0) + 0.5 * libm::pow(n, -s);
    const BERNOULLI: [f64; 5] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0];
    let mut rising = s;
    let mut fact = 2.0;
    let mut pow_n = libm::pow(n, -s - 1.0);
    for (j, b) in BERNOULLI.iter().enumerate() {
        tail += b / fact * rising * pow_n;
        let k = 2 * j as u64 + 2;
        rising *= (s + k as f64 - 1.0) * (s + k as f64);
        fact *= ((k + 1) * (k + 2)) as f64;
        pow_n /= n * n;
    }
    head + tail
}

/// Riemann zeta function for `s > 1`.
pub fn zeta(s: f64) -> f64 {
    power_sum_from(s, 1)
}

/// Sums a nonnegative series term by term until terms fall below `rel` of the running sum.
pub fn sum_series<F: FnMut(u64) -> f64>(mut term: F, start: u64, rel: f64, max_terms: u64) -> f64 {
    let mut sum = 0.0;
    let mut small = 0;
    for k in start..start + max_terms {
        let t = term(k);
        sum += t;
        if t <= rel * sum.abs() {
            small += 1;
            if small >= 4 {
                break;
            }
        } else {
            small = 0;
        }
    }
    sum
}

/// Golden-section search for the maximum of a unimodal function on `[lo, hi]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol * (1.0 + mid.abs()) {
            return mid;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_exponential_integrals() {
        assert!((integrate(|x| x * x, 0.0, 3.0) - 9.0).abs() < 1e-12);
        assert!((integrate(|x| libm::exp(-x), 0.0, 1.0) - (1.0 - libm::exp(-1.0))).abs() < 1e-14);
        assert!((integrate(|x| x, 2.0, 1.0) + 1.5).abs() < 1e-14);
    }

    #[test]
    fn improper_integrals() {
        let v = integrate_to_infinity(|x| 3.0 * libm::pow(x, -4.0), 2.0);
        assert!((v - 0.125).abs() < 1e-12);
        let g = integrate_to_infinity(|x| libm::exp(-x) * x * x, 0.0);
        assert!((g - 2.0).abs() < 1e-10);
    }

    #[test]
    fn incomplete_gamma_matches_closed_forms() {
        // P(1, x) = 1 - e^{-x}; P(2, x) = 1 - (1 + x) e^{-x}.
        for &x in &[0.1, 1.0, 3.0, 20.0] {
            assert!((gamma_p(1.0, x) - (1.0 - libm::exp(-x))).abs() < 1e-14);
            assert!((gamma_p(2.0, x) - (1.0 - (1.0 + x) * libm::exp(-x))).abs() < 1e-13);
        }
        assert_eq!(gamma_p(3.0, 0.0), 0.0);
    }

    #[test]
    fn zeta_values() {
        let pi = core::f64::consts::PI;
        assert!((zeta(2.0) - pi * pi / 6.0).abs() < 1e-14);
        assert!((zeta(4.0) - pi.powi(4) / 90.0).abs() < 1e-14);
        let tail = power_sum_from(3.0, 5);
        let direct: f64 = zeta(3.0) - (1..5).map(|k| 1.0 / (k as f64).powi(3)).sum::<f64>();
        assert!((tail - direct).abs() < 1e-15);
    }

    #[test]
    fn golden_and_bisect() {
        let (x, _) = golden_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 100);
        assert!((x - 0.3).abs() < 1e-8);
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - core::f64::consts::SQRT_2).abs() < 1e-12);
    }
}
