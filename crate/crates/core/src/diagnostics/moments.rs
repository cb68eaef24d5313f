//! Streaming moments.
//!
//! For each coordinate the accumulator keeps the count `n`, the mean and the
//! central sums `S_p = sum (y - mean)^p`, `p = 2..6`. Two accumulators merge by
//! the pairwise formula (Pebay 2008), with `D = mean_B - mean_A`, `n = n_A + n_B`:
//!
//! ```text
//! S_p = S_p^A + S_p^B
//!     + sum_{k=1}^{p-2} C(p, k) D^k [(-n_B/n)^k S_{p-k}^A + (n_A/n)^k S_{p-k}^B]
//!     + (n_A n_B D / n)^p [1/n_B^(p-1) - (-1/n_A)^(p-1)]
//! ```
//!
//! A single observation is a merge with `n_B = 1`, `S^B = 0`. The co-moment
//! matrix `C = sum (y - mean)(y - mean)^T` merges as
//! `C = C_A + C_B + D D^T n_A n_B / n`. A constant stream gives `D = 0` at
//! every step, hence exactly zero central moments.

use serde::{Deserialize, Serialize};

use crate::linalg::{Matrix, Vector};

const MAX_ORDER: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    dim: usize,
    count: u64,
    mean: Vec<f64>,
    /// `central[i][p - 2] = S_p` of coordinate `i`.
    central: Vec<[f64; MAX_ORDER - 1]>,
    /// Row-major `dim x dim` co-moment sums.
    comoment: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        MomentAccumulator {
            dim,
            count: 0,
            mean: vec![0.0; dim],
            central: vec![[0.0; MAX_ORDER - 1]; dim],
            comoment: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// # Panics
    ///
    /// Panics when `y.len()` differs from the accumulator dimension.
    pub fn push(&mut self, y: &[f64]) {
        assert_eq!(y.len(), self.dim, "observation length");
        let single = MomentAccumulator {
            dim: self.dim,
            count: 1,
            mean: y.to_vec(),
            central: vec![[0.0; MAX_ORDER - 1]; self.dim],
            comoment: vec![0.0; self.dim * self.dim],
        };
        self.merge(&single);
    }

    /// Pushes the concatenation `(x, v)`.
    pub fn push_parts(&mut self, x: &[f64], v: &[f64]) {
        let mut y = Vec::with_capacity(x.len() + v.len());
        y.extend_from_slice(x);
        y.extend_from_slice(v);
        self.push(&y);
    }

    /// # Panics
    ///
    /// Panics when the dimensions differ.
    pub fn merge(&mut self, other: &MomentAccumulator) {
        assert_eq!(self.dim, other.dim, "accumulator dimensions differ");
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta: Vec<f64> = (0..self.dim).map(|i| other.mean[i] - self.mean[i]).collect();
        for i in 0..self.dim {
            let d = delta[i];
            let a = self.central[i];
            let b = other.central[i];
            let s = |arr: &[f64; MAX_ORDER - 1], p: usize| if p < 2 { 0.0 } else { arr[p - 2] };
            let mut out = [0.0; MAX_ORDER - 1];
            for p in 2..=MAX_ORDER {
                let mut v = a[p - 2] + b[p - 2];
                for k in 1..=p.saturating_sub(2) {
                    v += binomial(p, k)
                        * d.powi(k as i32)
                        * ((-nb / n).powi(k as i32) * s(&a, p - k) + (na / n).powi(k as i32) * s(&b, p - k));
                }
                v += (na * nb * d / n).powi(p as i32)
                    * (1.0 / nb.powi(p as i32 - 1) - (-1.0 / na).powi(p as i32 - 1));
                out[p - 2] = v;
            }
            self.central[i] = out;
        }
        let w = na * nb / n;
        for r in 0..self.dim {
            for c in 0..self.dim {
                self.comoment[r * self.dim + c] += other.comoment[r * self.dim + c] + delta[r] * delta[c] * w;
            }
        }
        for (i, d) in delta.iter().enumerate() {
            self.mean[i] += d * nb / n;
        }
        self.count += other.count;
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `S_p / n`, the population central moment of order `p` (2..=6).
    pub fn central_moment(&self, i: usize, p: usize) -> f64 {
        assert!((2..=MAX_ORDER).contains(&p), "order must be in 2..=6");
        if self.count == 0 {
            return f64::NAN;
        }
        self.central[i][p - 2] / self.count as f64
    }

    /// Raw moment `E y_i^p` reconstructed from the mean and central moments.
    pub fn raw_moment(&self, i: usize, p: usize) -> f64 {
        let m = self.mean[i];
        (0..=p)
            .map(|j| {
                let c = match j {
                    0 => 1.0,
                    1 => 0.0,
                    _ => self.central_moment(i, j),
                };
                binomial(p, j) * m.powi((p - j) as i32) * c
            })
            .sum()
    }

    /// Population covariance `C / n`.
    pub fn covariance(&self) -> Matrix {
        let n = self.count as f64;
        Matrix::from_fn(self.dim, self.dim, |r, c| self.comoment[r * self.dim + c] / n)
    }

    pub fn mean_vector(&self) -> Vector {
        Vector::from_column_slice(&self.mean)
    }

    /// `E <x, v>` when the observations are stacked `(x, v)` with equal halves.
    pub fn cross_xv(&self) -> f64 {
        let d = self.dim / 2;
        let cov = self.covariance();
        (0..d).map(|i| cov[(i, d + i)] + self.mean[i] * self.mean[d + i]).sum()
    }

    /// Normal-approximation standard error of the sample variance of
    /// coordinate `i` for independent draws: `sqrt((m4 - m2^2) / n)`.
    pub fn variance_se_iid(&self, i: usize) -> f64 {
        let m2 = self.central_moment(i, 2);
        let m4 = self.central_moment(i, 4);
        ((m4 - m2 * m2).max(0.0) / self.count as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianSource;
    use proptest::prelude::*;

    #[test]
    fn constant_stream_has_zero_central_moments() {
        let mut acc = MomentAccumulator::new(2);
        for _ in 0..1000 {
            acc.push(&[3.25, -1.5]);
        }
        assert_eq!(acc.mean(), &[3.25, -1.5]);
        for p in 2..=6 {
            assert_eq!(acc.central_moment(0, p), 0.0);
            assert_eq!(acc.central_moment(1, p), 0.0);
        }
        assert_eq!(acc.covariance().amax(), 0.0);
    }

    #[test]
    fn small_sample_matches_two_pass() {
        let ys = [1.0, 4.0, -2.0, 0.5, 7.0, 3.0];
        let mut acc = MomentAccumulator::new(1);
        for y in ys {
            acc.push(&[y]);
        }
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        for p in 2..=6 {
            let direct = ys.iter().map(|y| (y - mean).powi(p as i32)).sum::<f64>() / n;
            assert!((acc.central_moment(0, p) - direct).abs() < 1e-10 * direct.abs().max(1.0));
        }
        let raw4 = ys.iter().map(|y| y.powi(4)).sum::<f64>() / n;
        assert!((acc.raw_moment(0, 4) - raw4).abs() < 1e-9 * raw4);
    }

    #[test]
    fn gaussian_fourth_moment() {
        let mut src = GaussianSource::new(17, 0);
        let mut acc = MomentAccumulator::new(1);
        let n = 1_000_000;
        for _ in 0..n {
            acc.push(&[src.normal()]);
        }
        // Var(g^4) = E g^8 - 9 = 96
        let se = (96.0 / n as f64).sqrt();
        assert!((acc.central_moment(0, 4) - 3.0).abs() < 5.0 * se + 1e-3);
    }

    #[test]
    fn cross_moment() {
        let mut acc = MomentAccumulator::new(2);
        acc.push_parts(&[1.0], &[2.0]);
        acc.push_parts(&[3.0], &[-1.0]);
        assert!((acc.cross_xv() + 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn merge_equals_concatenation(
            a in prop::collection::vec(-5.0..5.0f64, 1..40),
            b in prop::collection::vec(-5.0..5.0f64, 1..40),
        ) {
            let mut left = MomentAccumulator::new(1);
            let mut right = MomentAccumulator::new(1);
            let mut all = MomentAccumulator::new(1);
            for y in &a { left.push(&[*y]); all.push(&[*y]); }
            for y in &b { right.push(&[*y]); all.push(&[*y]); }
            left.merge(&right);
            prop_assert_eq!(left.count(), all.count());
            prop_assert!((left.mean()[0] - all.mean()[0]).abs() <= 1e-10 * (1.0 + all.mean()[0].abs()));
            for p in 2..=6 {
                let x = left.central_moment(0, p);
                let y = all.central_moment(0, p);
                let scale = all.central_moment(0, 2).powf(p as f64 / 2.0).max(1e-300);
                prop_assert!((x - y).abs() <= 1e-10 * scale.max(y.abs()), "p={} {} vs {}", p, x, y);
            }
        }
    }
}
