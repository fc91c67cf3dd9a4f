//! Cell table for sampling a Poisson process with intensity `b e^x x^{-(p+1)} ℓ(x)` on `(1, X]`.

use alloc::vec::Vec;
use rand::RngCore;

use crate::regvar::SlowlyVarying;
use crate::rng::open01;

const CELL: f64 = 1.0 / 32.0;

const GL_X: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_W: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982_,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

/// `e^{CELL} - 1`.
const EXPM1_CELL: f64 = 0.031_743_407_499_102_67;

#[inline]
fn powi_inv(x: f64, k: i32) -> f64 {
    let mut acc = 1.0;
    let mut base = x;
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    1.0 / acc
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct IntensityTable {
    b: f64,
    p: f64,
    ell: SlowlyVarying,
    max_x: f64,
    /// `p + 1` when it is a small integer and `ℓ ≡ 1`.
    int_power: Option<i32>,
    /// `cum[i]` = mass of `(1, 1 + i·CELL]`.
    cum: Vec<f64>,
}

impl IntensityTable {
    pub(crate) fn new(b: f64, p: f64, ell: SlowlyVarying, max_x: f64) -> Self {
        let cells = if max_x > 1.0 { libm::ceil((max_x - 1.0) / CELL) as usize } else { 0 };
        let mut cum = Vec::with_capacity(cells + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        let q = p + 1.0;
        let int_power = (ell.is_one() && q == libm::round(q) && q <= 16.0).then_some(q as i32);
        let mut t = Self { b, p, ell, max_x, int_power, cum: Vec::new() };
        for i in 0..cells {
            let a = 1.0 + i as f64 * CELL;
            acc += t.mass(a, a + CELL);
            cum.push(acc);
        }
        t.cum = cum;
        t
    }

    #[inline]
    fn shape(&self, x: f64) -> f64 {
        // x^{-(p+1)} ℓ(x); nonincreasing on (1, ∞) for the admitted ℓ.
        match self.int_power {
            Some(k) => powi_inv(x, k),
            None => libm::pow(x, -(self.p + 1.0)) * self.ell.eval(x),
        }
    }

    fn mass(&self, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut s = 0.0;
        for (x, w) in GL_X.iter().zip(GL_W.iter()) {
            for y in [c - h * x, c + h * x] {
                s += w * libm::exp(y) * self.shape(y);
            }
        }
        self.b * s * h
    }

    pub(crate) fn max_x(&self) -> f64 {
        self.max_x
    }

    /// Total mass on `(1, x]` together with the index of the cell containing `x`.
    fn mass_to(&self, x: f64) -> (f64, usize) {
        if x <= 1.0 {
            return (0.0, 0);
        }
        let x = x.min(self.max_x);
        let cell = (libm::floor((x - 1.0) / CELL) as usize).min(self.cum.len().saturating_sub(1));
        let a = 1.0 + cell as f64 * CELL;
        (self.cum[cell] + self.mass(a, x), cell)
    }

    /// Samples the process on `(1, x]` into `out` (appending). Returns `Err(count)` when
    /// the draw would exceed `max_points`.
    pub(crate) fn sample<R: RngCore + ?Sized>(
        &self,
        x: f64,
        rng: &mut R,
        max_points: usize,
        out: &mut Vec<f64>,
    ) -> Result<(), u64> {
        let x = x.min(self.max_x);
        let (total, last) = self.mass_to(x);
        if total <= 0.0 {
            return Ok(());
        }
        let k = crate::rng::poisson(rng, total);
        if k > max_points as u64 {
            return Err(k);
        }
        let head = self.cum[last];
        for _ in 0..k {
            let target = open01(rng) * total;
            let (lo, hi) = if target >= head {
                (1.0 + last as f64 * CELL, x)
            } else {
                let i = self.cum[..=last].partition_point(|c| *c <= target).saturating_sub(1);
                let a = 1.0 + i as f64 * CELL;
                (a, a + CELL)
            };
            out.push(self.sample_cell(lo, hi, rng));
        }
        Ok(())
    }

    fn sample_cell<R: RngCore + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> f64 {
        let width = hi - lo;
        let grow = if width == CELL { EXPM1_CELL } else { libm::expm1(width) };
        let top = self.shape(lo);
        loop {
            let y = lo + libm::log1p(open01(rng) * grow);
            let y = y.min(hi);
            if open01(rng) * top <= self.shape(y) {
                return y;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        assert!((EXPM1_CELL - libm::expm1(CELL)).abs() < 1e-17);
        for x in [1.0, 1.7, 13.0] {
            assert!((powi_inv(x, 4) - libm::pow(x, -4.0)).abs() <= 1e-15 * libm::pow(x, -4.0));
        }
    }
}
