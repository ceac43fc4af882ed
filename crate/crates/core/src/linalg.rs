//! Banded matrices and an LU factorization without pivoting.
//!
//! Every system assembled in this crate is a row-diagonally-dominant
//! M-matrix (or the transpose of one), for which elimination without
//! pivoting is stable.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandMatrix {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        i * self.width() + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < self.n && j < self.n && self.in_band(i, j) {
            self.data[self.offset(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` to entry (i, j). Panics if the entry lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            i < self.n && j < self.n && self.in_band(i, j),
            "entry ({i},{j}) outside band"
        );
        let o = self.offset(i, j);
        self.data[o] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            i < self.n && j < self.n && self.in_band(i, j),
            "entry ({i},{j}) outside band"
        );
        let o = self.offset(i, j);
        self.data[o] = v;
    }

    pub fn add_diagonal(&mut self, d: &[f64]) {
        assert_eq!(d.len(), self.n);
        for (i, v) in d.iter().enumerate() {
            self.add(i, i, *v);
        }
    }

    /// Replaces row `i` by the identity row.
    pub fn set_identity_row(&mut self, i: usize) {
        let w = self.width();
        for v in &mut self.data[i * w..(i + 1) * w] {
            *v = 0.0;
        }
        self.set(i, i, 1.0);
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.offset(i, j)] * x[j]).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> BandMatrix {
        let mut t = BandMatrix::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n.saturating_sub(1));
            for j in lo..=hi {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn factor(self) -> Result<BandLu> {
        BandLu::new(self)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.clone().factor().map(|lu| lu.solve(b))
    }
}

/// In-place LU factors of a [`BandMatrix`].
#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    fn new(mut m: BandMatrix) -> Result<Self> {
        let n = m.n;
        for k in 0..n {
            let pivot = m.data[m.offset(k, k)];
            if !pivot.is_finite() || pivot.abs() < 1e-300 {
                return Err(Error::InvalidInput(format!("zero pivot at row {k}")));
            }
            let imax = (k + m.kl).min(n - 1);
            let jmax = (k + m.ku).min(n - 1);
            for i in k + 1..=imax {
                let oik = m.offset(i, k);
                let l = m.data[oik] / pivot;
                m.data[oik] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let okj = m.offset(k, j);
                        let oij = m.offset(i, j);
                        m.data[oij] -= l * m.data[okj];
                    }
                }
            }
        }
        Ok(BandLu { m })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = &self.m;
        let n = m.n;
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(m.kl);
            let mut s = x[i];
            for j in lo..i {
                s -= m.data[m.offset(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + m.ku).min(n - 1);
            let mut s = x[i];
            for j in i + 1..=hi {
                s -= m.data[m.offset(i, j)] * x[j];
            }
            x[i] = s / m.data[m.offset(i, i)];
        }
        x
    }
}
