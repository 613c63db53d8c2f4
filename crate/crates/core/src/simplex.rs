//! Probability-simplex primitives.
//!
//! A [`NeighborhoodSpec`] fixes an anchor `p0` and an l1 radius `delta`. The
//! set of targets `{q : ||q - p0||_1 <= delta}` is a polytope whose vertices
//! are the [`ExtremePair`]s `p0 + (delta/2)(1_a - 1_b)`, `a != b`. Any target
//! in the ball is a convex mixture of them ([`decompose_target`]).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EwmError, Result};
use crate::tol;

/// A probability vector over a finite vocabulary `{0, .., n-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct VocabDistribution {
    weights: Vec<f64>,
}

impl VocabDistribution {
    /// Validates `weights`. A sum within `1e-9` of one is renormalized; a
    /// larger deviation is an error.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(EwmError::TooShort(weights.len()));
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(EwmError::NegativeWeight { index, value });
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol::SIMPLEX {
            return Err(EwmError::SumNotOne(sum));
        }
        let weights = if sum == 1.0 {
            weights
        } else {
            weights.into_iter().map(|w| w / sum).collect()
        };
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn min(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Shannon entropy in nats, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        entropy(self)
    }
}

impl TryFrom<Vec<f64>> for VocabDistribution {
    type Error = EwmError;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights)
    }
}

impl From<VocabDistribution> for Vec<f64> {
    fn from(d: VocabDistribution) -> Self {
        d.weights
    }
}

/// Convenience wrapper for [`VocabDistribution::new`].
pub fn make_distribution(weights: &[f64]) -> Result<VocabDistribution> {
    VocabDistribution::new(weights.to_vec())
}

pub fn entropy(d: &VocabDistribution) -> f64 {
    -d.weights.iter().filter(|&&w| w > 0.0).map(|&w| w * w.ln()).sum::<f64>()
}

pub fn l1_distance(p: &VocabDistribution, q: &VocabDistribution) -> Result<f64> {
    l1_slices(p.weights(), q.weights())
}

pub(crate) fn l1_slices(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(EwmError::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// Anchor distribution plus robustness radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct NeighborhoodSpec {
    anchor: VocabDistribution,
    delta: f64,
}

#[derive(Deserialize)]
struct RawSpec {
    anchor: VocabDistribution,
    delta: f64,
}

impl TryFrom<RawSpec> for NeighborhoodSpec {
    type Error = EwmError;

    fn try_from(raw: RawSpec) -> Result<Self> {
        Self::new(raw.anchor, raw.delta)
    }
}

impl NeighborhoodSpec {
    /// Requires `0 < delta < 2` and `min anchor > delta`.
    pub fn new(anchor: VocabDistribution, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 2.0) {
            return Err(EwmError::BadDelta(delta));
        }
        let min = anchor.min();
        if min <= delta {
            return Err(EwmError::InvalidSpec(format!(
                "smallest anchor weight {min} must exceed delta {delta}"
            )));
        }
        Ok(Self { anchor, delta })
    }

    pub fn from_weights(weights: &[f64], delta: f64) -> Result<Self> {
        Self::new(make_distribution(weights)?, delta)
    }

    pub fn anchor(&self) -> &VocabDistribution {
        &self.anchor
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n(&self) -> usize {
        self.anchor.len()
    }

    /// Whether `q` lies in the l1 ball, up to `1e-10`.
    pub fn contains(&self, q: &VocabDistribution) -> Result<bool> {
        Ok(l1_distance(&self.anchor, q)? <= self.delta + tol::RECONSTRUCTION)
    }
}

/// Vertex `p0 + (delta/2)(1_gain - 1_loss)` of the neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExtremePair {
    pub gain: usize,
    pub loss: usize,
}

impl ExtremePair {
    pub fn new(gain: usize, loss: usize, n: usize) -> Result<Self> {
        if gain == loss || gain >= n || loss >= n {
            return Err(EwmError::InvalidPair { gain, loss, n });
        }
        Ok(Self { gain, loss })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        Self::new(self.gain, self.loss, n).map(|_| ())
    }

    /// Raw target vector; never renormalized so the l1 identity stays exact.
    pub fn target_weights(&self, spec: &NeighborhoodSpec) -> Vec<f64> {
        let half = spec.delta / 2.0;
        let mut q = spec.anchor.weights().to_vec();
        q[self.gain] += half;
        q[self.loss] -= half;
        q
    }

    pub fn target(&self, spec: &NeighborhoodSpec) -> Result<VocabDistribution> {
        self.validate(spec.n())?;
        VocabDistribution::new(self.target_weights(spec))
    }
}

/// All `n(n-1)` vertices in lexicographic `(gain, loss)` order.
pub fn enumerate_extremes(spec: &NeighborhoodSpec) -> Vec<ExtremePair> {
    let n = spec.n();
    (0..n)
        .flat_map(|a| {
            (0..n)
                .filter(move |&b| b != a)
                .map(move |b| ExtremePair { gain: a, loss: b })
        })
        .collect()
}

/// Convex combination of extreme points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureDecomposition {
    pub terms: Vec<(ExtremePair, f64)>,
}

impl MixtureDecomposition {
    pub fn single(pair: ExtremePair) -> Self {
        Self {
            terms: vec![(pair, 1.0)],
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|(_, w)| w).sum()
    }

    pub fn weight_of(&self, pair: ExtremePair) -> f64 {
        self.terms.iter().filter(|(p, _)| *p == pair).map(|(_, w)| w).sum()
    }

    /// Checks nonnegative weights summing to one and pairs valid for `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.terms.is_empty() {
            return Err(EwmError::BadWeights("no terms".into()));
        }
        for (pair, w) in &self.terms {
            pair.validate(n)?;
            if !w.is_finite() || *w < 0.0 {
                return Err(EwmError::BadWeights(format!("negative weight {w}")));
            }
        }
        let total = self.total_weight();
        if (total - 1.0).abs() > tol::IDENTITY {
            return Err(EwmError::BadWeights(format!("weights sum to {total}")));
        }
        Ok(())
    }

    /// `sum_i lambda_i q_i`.
    pub fn reconstruct(&self, spec: &NeighborhoodSpec) -> Vec<f64> {
        let half = spec.delta / 2.0;
        let mut q: Vec<f64> = spec.anchor.weights().iter().map(|p| p * self.total_weight()).collect();
        for (pair, w) in &self.terms {
            q[pair.gain] += w * half;
            q[pair.loss] -= w * half;
        }
        q
    }

    fn push(&mut self, pair: ExtremePair, weight: f64) {
        match self.terms.iter_mut().find(|(p, _)| *p == pair) {
            Some((_, w)) => *w += weight,
            None => self.terms.push((pair, weight)),
        }
    }
}

/// Writes `q` as a mixture of extreme points.
///
/// The shift `s = q - p0` is split into its positive and negative parts and
/// transported northwest-corner style in ascending index order; each unit of
/// transported mass from `b` to `a` is weight `2/delta` on pair `(a, b)`. When
/// the shift is shorter than `delta`, the leftover weight goes equally to the
/// cancelling pairs `(0,1)` and `(1,0)`.
pub fn decompose_target(spec: &NeighborhoodSpec, q: &VocabDistribution) -> Result<MixtureDecomposition> {
    let n = spec.n();
    if q.len() != n {
        return Err(EwmError::LengthMismatch {
            left: n,
            right: q.len(),
        });
    }
    let distance = l1_distance(&spec.anchor, q)?;
    if distance > spec.delta + tol::RECONSTRUCTION {
        return Err(EwmError::OutsideNeighborhood {
            distance,
            delta: spec.delta,
        });
    }
    let shift: Vec<f64> = q
        .weights()
        .iter()
        .zip(spec.anchor.weights())
        .map(|(a, b)| a - b)
        .collect();
    let mut supply: Vec<(usize, f64)> = shift.iter().copied().enumerate().filter(|(_, s)| *s > 0.0).collect();
    let mut demand: Vec<(usize, f64)> = shift
        .iter()
        .enumerate()
        .filter(|(_, s)| **s < 0.0)
        .map(|(i, s)| (i, -s))
        .collect();

    let scale = 2.0 / spec.delta;
    let mut mix = MixtureDecomposition { terms: Vec::new() };
    let mut moved = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < supply.len() && j < demand.len() {
        let amount = supply[i].1.min(demand[j].1);
        if amount > 0.0 {
            let pair = ExtremePair {
                gain: supply[i].0,
                loss: demand[j].0,
            };
            mix.push(pair, amount * scale);
            moved += amount;
        }
        supply[i].1 -= amount;
        demand[j].1 -= amount;
        if supply[i].1 <= 0.0 {
            i += 1;
        }
        if demand[j].1 <= 0.0 {
            j += 1;
        }
    }

    let residual = 1.0 - moved * scale;
    if residual > tol::IDENTITY {
        mix.push(ExtremePair { gain: 0, loss: 1 }, residual / 2.0);
        mix.push(ExtremePair { gain: 1, loss: 0 }, residual / 2.0);
    } else if !mix.terms.is_empty() {
        // Rounding noise on a full-length shift, or the ball-membership slack.
        let total = mix.total_weight();
        for (_, w) in &mut mix.terms {
            *w /= total;
        }
    }
    Ok(mix)
}

/// `nu_delta = (1 - delta/2, delta/(2(n-1)), ..)`.
pub fn noise_profile(n: usize, delta: f64) -> Result<VocabDistribution> {
    if n < 2 {
        return Err(EwmError::TooShort(n));
    }
    if !(delta > 0.0 && delta < 2.0) {
        return Err(EwmError::BadDelta(delta));
    }
    let mut weights = vec![delta / (2.0 * (n - 1) as f64); n];
    weights[0] = 1.0 - delta / 2.0;
    VocabDistribution::new(weights)
}

/// Draws a random valid spec over `n` outcomes; `delta` is at most `0.9/n`.
pub fn sample_spec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> NeighborhoodSpec {
    assert!(n >= 2);
    let delta = rng.random_range(0.005..0.9 / n as f64);
    let floor = delta * 1.02;
    let spare = 1.0 - n as f64 * floor;
    let gammas: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = gammas.iter().sum();
    let weights: Vec<f64> = gammas.iter().map(|g| floor + spare * g / total).collect();
    NeighborhoodSpec::from_weights(&weights, delta).expect("sampled spec is valid by construction")
}

/// Draws a random target inside the ball of `spec`.
pub fn sample_target<R: Rng + ?Sized>(rng: &mut R, spec: &NeighborhoodSpec) -> VocabDistribution {
    let n = spec.n();
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = raw.iter().map(|r| r - mean).collect();
    let norm: f64 = centered.iter().map(|c| c.abs()).sum();
    let radius = spec.delta * rng.random::<f64>();
    let weights: Vec<f64> = if norm > 0.0 {
        spec.anchor
            .weights()
            .iter()
            .zip(&centered)
            .map(|(p, c)| p + radius * c / norm)
            .collect()
    } else {
        spec.anchor.weights().to_vec()
    };
    VocabDistribution::new(weights).expect("shift keeps weights positive since min p0 > delta")
}
