//! The robust log-optimal e-value and its null-constraint audit.
//!
//! The optimal table is
//!
//! ```text
//! e*(v, s) = (1 - delta/2) / p0(s)          if v == s
//!          = delta / (2 (n-1) p0(s))         otherwise
//! ```
//!
//! so that every row of `r(v, s) = p0(s) e*(v, s)` is the noise profile
//! `nu_delta` rotated onto the diagonal, and its worst-case log-growth is
//! `J* = H(p0) - H(nu_delta)`.

use serde::{Deserialize, Serialize};

use crate::error::{EwmError, Result};
use crate::matrix::Square;
use crate::simplex::{enumerate_extremes, NeighborhoodSpec};
use crate::tol;

/// Nonnegative scores `e(v, s)`, indexed `(outcome, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct EValueTable {
    scores: Square,
}

/// Wire format: `{"n": n, "scores": [row-major]}`.
#[derive(Serialize, Deserialize)]
struct RawTable {
    n: usize,
    scores: Vec<f64>,
}

impl TryFrom<RawTable> for EValueTable {
    type Error = EwmError;

    fn try_from(raw: RawTable) -> Result<Self> {
        Self::from_row_major(raw.n, raw.scores)
    }
}

impl From<EValueTable> for RawTable {
    fn from(t: EValueTable) -> Self {
        RawTable {
            n: t.n(),
            scores: t.scores.into_vec(),
        }
    }
}

impl EValueTable {
    pub fn from_row_major(n: usize, scores: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(EwmError::TooShort(n));
        }
        let actual = scores.len();
        let scores = Square::from_row_major(n, scores).ok_or(EwmError::DimensionMismatch {
            expected: n * n,
            actual,
        })?;
        if scores.as_slice().iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(EwmError::InvalidTable("scores must be finite and nonnegative".into()));
        }
        Ok(Self { scores })
    }

    /// Builds `e(v, s) = r(v, s) / p0(s)` from a kernel `r`.
    pub fn from_kernel(kernel: &Square, spec: &NeighborhoodSpec) -> Result<Self> {
        check_dims(kernel.n(), spec)?;
        let p0 = spec.anchor();
        let scores = Square::from_fn(kernel.n(), |v, s| kernel.get(v, s) / p0.get(s));
        Self::from_row_major(scores.n(), scores.into_vec())
    }

    pub fn ones(n: usize) -> Result<Self> {
        Self::from_row_major(n, vec![1.0; n * n])
    }

    pub fn n(&self) -> usize {
        self.scores.n()
    }

    #[inline]
    pub fn get(&self, v: usize, s: usize) -> f64 {
        self.scores.get(v, s)
    }

    pub fn scores(&self) -> &Square {
        &self.scores
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_row_major(self.n(), self.scores.map(|x| x * factor).into_vec())
    }

    /// `ln e(v, s)`, row-major; zero scores map to `-inf`.
    pub fn log_scores(&self) -> Square {
        self.scores.map(f64::ln)
    }

    /// `A(v) = sum_s p0(s) e(v, s)`.
    pub fn row_sums(&self, spec: &NeighborhoodSpec) -> Result<Vec<f64>> {
        check_dims(self.n(), spec)?;
        let p0 = spec.anchor().weights();
        Ok((0..self.n())
            .map(|v| self.scores.row(v).iter().zip(p0).map(|(e, p)| e * p).sum())
            .collect())
    }

    /// Whether the table passes the null audit.
    pub fn is_valid(&self, spec: &NeighborhoodSpec) -> Result<bool> {
        Ok(null_worst_expectation(self, spec)? <= 1.0 + tol::AUDIT)
    }
}

fn check_dims(n: usize, spec: &NeighborhoodSpec) -> Result<()> {
    if n != spec.n() {
        return Err(EwmError::DimensionMismatch {
            expected: spec.n(),
            actual: n,
        });
    }
    Ok(())
}

/// The closed-form optimal table.
pub fn optimal_evalue(spec: &NeighborhoodSpec) -> EValueTable {
    let n = spec.n();
    let d = spec.delta();
    let p0 = spec.anchor();
    let diag = 1.0 - d / 2.0;
    let off = d / (2.0 * (n - 1) as f64);
    let scores = Square::from_fn(n, |v, s| if v == s { diag / p0.get(s) } else { off / p0.get(s) });
    EValueTable { scores }
}

/// `max_{q in Q_ext} E_{v~q, s~p0}[e(v, s)]`.
///
/// The expectation is linear in `q`, so its supremum over the ball is
/// attained at one of the `n(n-1)` vertices.
pub fn null_worst_expectation(e: &EValueTable, spec: &NeighborhoodSpec) -> Result<f64> {
    let row_sums = e.row_sums(spec)?;
    Ok(enumerate_extremes(spec)
        .into_iter()
        .map(|pair| {
            pair.target_weights(spec)
                .iter()
                .zip(&row_sums)
                .map(|(q, a)| q * a)
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Optimal robust log-growth rate in nats.
pub fn jstar(spec: &NeighborhoodSpec) -> f64 {
    let n = spec.n() as f64;
    let half = spec.delta() / 2.0;
    spec.anchor().entropy() + (1.0 - half) * (1.0 - half).ln() + half * (half / (n - 1.0)).ln()
}

/// Row-normalized kernel `r(v, s) = p0(s) e(v, s) / A(v)`.
pub fn kernel_of(e: &EValueTable, spec: &NeighborhoodSpec) -> Result<Square> {
    let row_sums = e.row_sums(spec)?;
    if let Some(v) = row_sums.iter().position(|a| !(*a > 0.0)) {
        return Err(EwmError::ZeroRow(v));
    }
    let p0 = spec.anchor();
    Ok(Square::from_fn(e.n(), |v, s| p0.get(s) * e.get(v, s) / row_sums[v]))
}
