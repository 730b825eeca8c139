//! Banded matrices recovered from matrix-vector products, with an LU
//! factorization without pivoting.
//!
//! Every operator in this crate couples an unknown only to unknowns within a
//! fixed index distance, so `2·bw + 1` colored probe vectors recover the full
//! band exactly.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    /// Row-major band storage: entry `(i, j)` lives at `i * width + (j + bw - i)`.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    fn width(&self) -> usize {
        2 * self.bw + 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[i * self.width() + (j + self.bw - i)]
        }
    }

    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        let w = self.width();
        &mut self.data[i * w + (j + self.bw - i)]
    }

    /// Recovers the band of the linear map `apply` by probing with colored
    /// unit-sum vectors. `apply` must not couple indices further apart than
    /// `bw`.
    pub fn from_operator<F>(n: usize, bw: usize, mut apply: F) -> Self
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let bw = bw.min(n.saturating_sub(1));
        let colors = (2 * bw + 1).min(n);
        let mut m = Self::zeros(n, bw);
        let mut probe = vec![0.0; n];
        let mut out = vec![0.0; n];
        for color in 0..colors {
            for (j, p) in probe.iter_mut().enumerate() {
                *p = if j % colors == color { 1.0 } else { 0.0 };
            }
            apply(&probe, &mut out);
            for j in (color..n).step_by(colors) {
                let lo = j.saturating_sub(bw);
                let hi = (j + bw).min(n - 1);
                for i in lo..=hi {
                    *m.at(i, j) = out[i];
                }
            }
        }
        m
    }

    #[cfg(test)]
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw).min(self.n - 1);
            y[i] = (lo..=hi).map(|j| self.get(i, j) * x[j]).sum();
        }
    }

    /// In-place Doolittle LU without pivoting. Fine for matrices whose
    /// symmetric part is positive definite.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let bw = self.bw;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let pivot = self.get(k, k);
            if !(pivot.abs() > 1e-14 * scale) || !pivot.is_finite() {
                return Err(Error::SingularMatrix { row: k, pivot });
            }
            let hi = (k + bw).min(n - 1);
            for i in (k + 1)..=hi {
                let l = self.get(i, k) / pivot;
                *self.at(i, k) = l;
                if l != 0.0 {
                    for j in (k + 1)..=hi {
                        let ukj = self.get(k, j);
                        *self.at(i, j) -= l * ukj;
                    }
                }
            }
        }
        Ok(BandLu { m: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    #[cfg(test)]
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.m.n;
        let bw = self.m.bw;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let s: f64 = (lo..i).map(|j| self.m.get(i, j) * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let s: f64 = ((i + 1)..=hi).map(|j| self.m.get(i, j) * x[j]).sum();
            x[i] = (x[i] - s) / self.m.get(i, i);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
