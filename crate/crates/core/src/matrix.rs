use serde::{Deserialize, Serialize};

/// Dense `n x n` matrix stored row-major, indexed `(outcome, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Square {
    n: usize,
    data: Vec<f64>,
}

impl Square {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for v in 0..n {
            for s in 0..n {
                data.push(f(v, s));
            }
        }
        Self { n, data }
    }

    /// Returns `None` unless `data.len() == n * n`.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == n * n).then_some(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, v: usize, s: usize) -> f64 {
        self.data[v * self.n + s]
    }

    #[inline]
    pub fn set(&mut self, v: usize, s: usize, x: f64) {
        self.data[v * self.n + s] = x;
    }

    #[inline]
    pub fn add(&mut self, v: usize, s: usize, x: f64) {
        self.data[v * self.n + s] += x;
    }

    pub fn row(&self, v: usize) -> &[f64] {
        &self.data[v * self.n..(v + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|v| self.row(v).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for v in 0..self.n {
            for (acc, x) in out.iter_mut().zip(self.row(v)) {
                *acc += x;
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
