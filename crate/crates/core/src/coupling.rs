//! Generator-side couplings of `(outcome, seed)` with marginals `(q, p0)`.
//!
//! For an extreme target `q = p0 + (delta/2)(1_a - 1_b)` the optimal coupling
//! keeps `p0` on the diagonal and moves `delta/2` of column `b` from the
//! diagonal to row `a`. General targets mix these linearly.

use rand::Rng;

use crate::error::{EwmError, Result};
use crate::evalue::EValueTable;
use crate::matrix::Square;
use crate::simplex::{ExtremePair, MixtureDecomposition, NeighborhoodSpec, VocabDistribution};
use crate::tol;

/// Joint distribution `w(v, s)` with row marginal `target` and column marginal `anchor`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    joint: Square,
    target: VocabDistribution,
    anchor: VocabDistribution,
}

impl CouplingMatrix {
    fn finish(mut joint: Square, anchor: &VocabDistribution) -> Result<Self> {
        let n = joint.n();
        for v in 0..n {
            for s in 0..n {
                let x = joint.get(v, s);
                if x < 0.0 {
                    if x < -tol::CLAMP {
                        return Err(EwmError::BadParams(format!(
                            "coupling entry ({v},{s}) is negative: {x}"
                        )));
                    }
                    joint.set(v, s, 0.0);
                }
            }
        }
        let target = VocabDistribution::new(joint.row_sums())?;
        Ok(Self {
            joint,
            target,
            anchor: anchor.clone(),
        })
    }

    /// Product coupling `q (x) p0`: outcome and seed independent (the null).
    pub fn independent(q: &VocabDistribution, anchor: &VocabDistribution) -> Result<Self> {
        if q.len() != anchor.len() {
            return Err(EwmError::LengthMismatch {
                left: q.len(),
                right: anchor.len(),
            });
        }
        let joint = Square::from_fn(q.len(), |v, s| q.get(v) * anchor.get(s));
        Self::finish(joint, anchor)
    }

    pub fn n(&self) -> usize {
        self.joint.n()
    }

    pub fn joint(&self) -> &Square {
        &self.joint
    }

    #[inline]
    pub fn get(&self, v: usize, s: usize) -> f64 {
        self.joint.get(v, s)
    }

    pub fn target(&self) -> &VocabDistribution {
        &self.target
    }

    pub fn anchor(&self) -> &VocabDistribution {
        &self.anchor
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.joint.row_sums()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        self.joint.col_sums()
    }

    /// `sum_{v,s} w(v,s) ln e(v,s)` over the support of `w`.
    pub fn expected_log_score(&self, e: &EValueTable) -> f64 {
        let n = self.n();
        let mut acc = 0.0;
        for v in 0..n {
            for s in 0..n {
                let w = self.joint.get(v, s);
                if w > 0.0 {
                    acc += w * e.get(v, s).ln();
                }
            }
        }
        acc
    }

    pub fn sampler(&self) -> PairSampler {
        PairSampler::new(&self.joint)
    }
}

/// Simple directed path `u_0 -> .. -> u_K` over distinct vocabulary indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathSpec {
    vertices: Vec<usize>,
}

impl PathSpec {
    pub fn new(vertices: Vec<usize>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(EwmError::InvalidPath("a path needs at least two vertices".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if vertices[..i].contains(v) {
                return Err(EwmError::InvalidPath(format!("vertex {v} repeats")));
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn hops(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn start(&self) -> usize {
        self.vertices[0]
    }

    pub fn end(&self) -> usize {
        *self.vertices.last().expect("non-empty")
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    pub(crate) fn check_within(&self, n: usize) -> Result<()> {
        match self.vertices.iter().find(|&&v| v >= n) {
            Some(v) => Err(EwmError::InvalidPath(format!("vertex {v} out of range for n = {n}"))),
            None => Ok(()),
        }
    }
}

/// Optimal coupling for a single extreme target.
pub fn extreme_coupling(spec: &NeighborhoodSpec, pair: ExtremePair) -> Result<CouplingMatrix> {
    pair.validate(spec.n())?;
    let mut joint = diag_anchor(spec);
    apply_hop(&mut joint, spec.delta() / 2.0, pair.gain, pair.loss);
    CouplingMatrix::finish(joint, spec.anchor())
}

/// `sum_i lambda_i * extreme_coupling(pair_i)`.
pub fn mixture_coupling(spec: &NeighborhoodSpec, mix: &MixtureDecomposition) -> Result<CouplingMatrix> {
    mix.validate(spec.n())?;
    let n = spec.n();
    let mut joint = Square::zeros(n);
    for (pair, lambda) in &mix.terms {
        let part = extreme_coupling(spec, *pair)?;
        for v in 0..n {
            for s in 0..n {
                joint.add(v, s, lambda * part.get(v, s));
            }
        }
    }
    CouplingMatrix::finish(joint, spec.anchor())
}

/// Coupling that routes `delta/2` of mass along every hop of `path`.
pub fn path_coupling(spec: &NeighborhoodSpec, path: &PathSpec) -> Result<CouplingMatrix> {
    path.check_within(spec.n())?;
    let mut joint = diag_anchor(spec);
    for (from, to) in path.edges() {
        apply_hop(&mut joint, spec.delta() / 2.0, from, to);
    }
    CouplingMatrix::finish(joint, spec.anchor())
}

fn diag_anchor(spec: &NeighborhoodSpec) -> Square {
    let p0 = spec.anchor();
    Square::from_fn(spec.n(), |v, s| if v == s { p0.get(v) } else { 0.0 })
}

fn apply_hop(joint: &mut Square, mass: f64, from: usize, to: usize) {
    joint.add(from, to, mass);
    joint.add(to, to, -mass);
}

/// Inverse-CDF sampler over the `n^2` joint entries in row-major order.
#[derive(Debug, Clone)]
pub struct PairSampler {
    n: usize,
    cdf: Vec<f64>,
    last_positive: usize,
}

impl PairSampler {
    pub fn new(joint: &Square) -> Self {
        let mut acc = 0.0;
        let cdf: Vec<f64> = joint
            .as_slice()
            .iter()
            .map(|w| {
                acc += w.max(0.0);
                acc
            })
            .collect();
        let last_positive = joint.as_slice().iter().rposition(|w| *w > 0.0).unwrap_or(0);
        Self {
            n: joint.n(),
            cdf,
            last_positive,
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let total = self.cdf[self.cdf.len() - 1];
        let u = rng.random::<f64>() * total;
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.last_positive);
        (idx / self.n, idx % self.n)
    }
}

/// One exact draw from `w`.
pub fn sample_pair<R: Rng + ?Sized>(w: &CouplingMatrix, rng: &mut R) -> (usize, usize) {
    w.sampler().sample(rng)
}
