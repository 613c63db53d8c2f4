//! Independent optimality checks at desk scale.
//!
//! For an extreme target `q = p0 + (delta/2)(1_a - 1_b)` and log-scores `M`
//! satisfying the cycle condition, the generator's best coupling is a single
//! path coupling from `a` to `b`, with value
//!
//! ```text
//! sum_v p0(v) M(v, v) + (delta/2) max_P W(P),
//! W(P) = sum_i M(u_i, u_{i+1}) - M(u_{i+1}, u_{i+1}).
//! ```
//!
//! The path search here is exhaustive, so it does not rely on any structure
//! of the optimal table.

use rand::Rng;
use serde::Serialize;

use crate::coupling::PathSpec;
use crate::error::{EwmError, Result};
use crate::evalue::{jstar, optimal_evalue, EValueTable};
use crate::matrix::Square;
use crate::parallel::{map_indexed, Execution};
use crate::simplex::{enumerate_extremes, ExtremePair, NeighborhoodSpec};
use crate::tol;

/// Largest vocabulary for exhaustive path enumeration.
pub const MAX_PATH_N: usize = 10;
/// Largest vocabulary for full-length cycle enumeration.
pub const MAX_CYCLE_N: usize = 8;
/// Largest vocabulary accepted by [`saddle_check`].
pub const MAX_SADDLE_N: usize = 6;

/// Finite log-scores `M(v, s) = ln e(v, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    entries: Square,
}

impl ScoreMatrix {
    pub fn new(entries: Square) -> Result<Self> {
        if entries.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(EwmError::InvalidTable("log-scores must be finite".into()));
        }
        Ok(Self { entries })
    }

    pub fn from_row_major(n: usize, entries: Vec<f64>) -> Result<Self> {
        let actual = entries.len();
        let sq = Square::from_row_major(n, entries).ok_or(EwmError::DimensionMismatch {
            expected: n * n,
            actual,
        })?;
        Self::new(sq)
    }

    /// Requires a strictly positive table.
    pub fn from_table(e: &EValueTable) -> Result<Self> {
        Self::new(e.log_scores())
    }

    pub fn n(&self) -> usize {
        self.entries.n()
    }

    #[inline]
    pub fn get(&self, v: usize, s: usize) -> f64 {
        self.entries.get(v, s)
    }
}

pub fn path_gain(m: &ScoreMatrix, path: &PathSpec) -> Result<f64> {
    path.check_within(m.n())?;
    Ok(path.edges().map(|(u, w)| m.get(u, w) - m.get(w, w)).sum())
}

/// Value and maximizing path of the generator's inner problem.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub value: f64,
    pub path: PathSpec,
}

/// Exhaustive search over simple `gain -> loss` paths.
///
/// Paths are visited depth-first with neighbours in ascending order, i.e. in
/// lexicographic order, and only a strictly better gain replaces the
/// incumbent, so ties resolve to the lexicographically first path.
pub fn best_path_inner_value(m: &ScoreMatrix, spec: &NeighborhoodSpec, pair: ExtremePair) -> Result<InnerSolution> {
    let n = m.n();
    if n > MAX_PATH_N {
        return Err(EwmError::TooLarge { n, max: MAX_PATH_N });
    }
    if n != spec.n() {
        return Err(EwmError::DimensionMismatch {
            expected: spec.n(),
            actual: n,
        });
    }
    pair.validate(n)?;

    struct Search<'a> {
        m: &'a ScoreMatrix,
        target: usize,
        stack: Vec<usize>,
        visited: Vec<bool>,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn walk(&mut self, gain: f64) {
            let here = *self.stack.last().expect("non-empty");
            for next in 0..self.visited.len() {
                if self.visited[next] {
                    continue;
                }
                let g = gain + self.m.get(here, next) - self.m.get(next, next);
                if next == self.target {
                    if self.best.as_ref().is_none_or(|(b, _)| g > *b) {
                        let mut path = self.stack.clone();
                        path.push(next);
                        self.best = Some((g, path));
                    }
                    continue;
                }
                self.visited[next] = true;
                self.stack.push(next);
                self.walk(g);
                self.stack.pop();
                self.visited[next] = false;
            }
        }
    }

    let mut visited = vec![false; n];
    visited[pair.gain] = true;
    let mut search = Search {
        m,
        target: pair.loss,
        stack: vec![pair.gain],
        visited,
        best: None,
    };
    search.walk(0.0);
    let (gain, path) = search.best.expect("the direct hop always exists");
    let base: f64 = spec
        .anchor()
        .weights()
        .iter()
        .enumerate()
        .map(|(v, p)| p * m.get(v, v))
        .sum();
    Ok(InnerSolution {
        value: base + spec.delta() / 2.0 * gain,
        path: PathSpec::new(path)?,
    })
}

/// `min` over all extreme pairs of the inner value: the adversary's best reply.
pub fn worst_inner_value(m: &ScoreMatrix, spec: &NeighborhoodSpec) -> Result<(ExtremePair, InnerSolution)> {
    let mut worst: Option<(ExtremePair, InnerSolution)> = None;
    for pair in enumerate_extremes(spec) {
        let sol = best_path_inner_value(m, spec, pair)?;
        if worst.as_ref().is_none_or(|(_, w)| sol.value < w.value) {
            worst = Some((pair, sol));
        }
    }
    Ok(worst.expect("at least two extreme pairs"))
}

/// True iff every simple cycle of length `<= max_cycle_len` has diagonal
/// sum at least its off-diagonal sum.
pub fn cycle_condition_check(m: &ScoreMatrix, max_cycle_len: usize) -> Result<bool> {
    let n = m.n();
    let len = max_cycle_len.min(n);
    if len >= n && n > MAX_CYCLE_N {
        return Err(EwmError::TooLarge { n, max: MAX_CYCLE_N });
    }
    if len < 2 {
        return Ok(true);
    }

    // Each cycle is enumerated once per rotation-class by fixing its smallest
    // vertex as the start; both orientations are visited.
    fn extend(
        m: &ScoreMatrix,
        start: usize,
        len: usize,
        stack: &mut Vec<usize>,
        on: &mut [bool],
        diag: f64,
        off: f64,
    ) -> bool {
        let here = *stack.last().expect("non-empty");
        if stack.len() >= 2 {
            let close_off = off + m.get(here, start);
            let scale = diag.abs().max(close_off.abs()).max(1.0);
            if diag + tol::IDENTITY * scale < close_off {
                return false;
            }
        }
        if stack.len() == len {
            return true;
        }
        for next in start + 1..m.n() {
            if on[next] {
                continue;
            }
            on[next] = true;
            stack.push(next);
            let ok = extend(
                m,
                start,
                len,
                stack,
                on,
                diag + m.get(next, next),
                off + m.get(here, next),
            );
            stack.pop();
            on[next] = false;
            if !ok {
                return false;
            }
        }
        true
    }

    let mut on = vec![false; n];
    for start in 0..n {
        on[start] = true;
        let ok = extend(m, start, len, &mut vec![start], &mut on, m.get(start, start), 0.0);
        on[start] = false;
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One row of the two-token solver trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub refinement: usize,
    pub r00: f64,
    pub r11: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxMinSolution {
    pub value: f64,
    pub r00: f64,
    pub r11: f64,
    pub trace: Vec<TraceRow>,
}

/// Objective of the two-token max-min problem for kernel diagonal `(r00, r11)`.
pub fn two_token_objective(p: f64, delta: f64, r00: f64, r11: f64) -> f64 {
    let h = -(p * p.ln() + (1.0 - p) * (1.0 - p).ln());
    let worst = ((1.0 - r00) / r11).ln().min(((1.0 - r11) / r00).ln());
    h + p * r00.ln() + (1.0 - p) * r11.ln() + delta / 2.0 * worst
}

/// Nested grid search over row-stochastic 2x2 kernels.
///
/// Level 0 evaluates cell midpoints of a `grid x grid` partition of the unit
/// square. Each refinement re-grids the `2h`-wide window around the incumbent,
/// where `h` is the previous cell width, so resolution shrinks by `grid/2`
/// per level.
pub fn two_token_maxmin(p: f64, delta: f64, grid: usize, refinements: usize) -> Result<MaxMinSolution> {
    if !(p > 0.0 && p < 1.0) || !(delta > 0.0) || p.min(1.0 - p) <= delta {
        return Err(EwmError::BadParams(format!(
            "need 0 < delta < min(p, 1-p); got p = {p}, delta = {delta}"
        )));
    }
    if grid < 64 || refinements < 1 {
        return Err(EwmError::BadParams(format!(
            "need grid >= 64 and refinements >= 1; got {grid}, {refinements}"
        )));
    }

    let mut window = [(0.0, 1.0), (0.0, 1.0)];
    let mut best = (f64::NEG_INFINITY, 0.5, 0.5);
    let mut trace = Vec::with_capacity(refinements + 1);
    for level in 0..=refinements {
        let step0 = (window[0].1 - window[0].0) / grid as f64;
        let step1 = (window[1].1 - window[1].0) / grid as f64;
        let mut level_best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..grid {
            let a = window[0].0 + (i as f64 + 0.5) * step0;
            for j in 0..grid {
                let b = window[1].0 + (j as f64 + 0.5) * step1;
                let f = two_token_objective(p, delta, a, b);
                if f > level_best.0 {
                    level_best = (f, a, b);
                }
            }
        }
        if level_best.0 > best.0 {
            best = level_best;
        }
        trace.push(TraceRow {
            refinement: level,
            r00: best.1,
            r11: best.2,
            objective: best.0,
        });
        window = [
            ((best.1 - step0).max(0.0), (best.1 + step0).min(1.0)),
            ((best.2 - step1).max(0.0), (best.2 + step1).min(1.0)),
        ];
    }
    Ok(MaxMinSolution {
        value: best.0,
        r00: best.1,
        r11: best.2,
        trace,
    })
}

/// Worst-case inner value of the e-value induced by a candidate kernel.
///
/// The kernel must be strictly positive and row-stochastic (the null
/// constraint holds with equality); it maps to `M(v, s) = ln r(v, s) - ln p0(s)`.
/// Returns `None` when `M` violates the cycle condition, where the path
/// search is not guaranteed to find the generator's optimum.
pub fn candidate_worst_value(spec: &NeighborhoodSpec, kernel: &Square) -> Result<Option<f64>> {
    let n = spec.n();
    if kernel.n() != n {
        return Err(EwmError::DimensionMismatch {
            expected: n,
            actual: kernel.n(),
        });
    }
    for (row, sum) in kernel.row_sums().into_iter().enumerate() {
        if (sum - 1.0).abs() > tol::IDENTITY {
            return Err(EwmError::NotRowStochastic { row, sum });
        }
    }
    let e = EValueTable::from_kernel(kernel, spec)?;
    let m = ScoreMatrix::from_table(&e)?;
    if !cycle_condition_check(&m, n)? {
        return Ok(None);
    }
    Ok(Some(worst_inner_value(&m, spec)?.1.value))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleReport {
    pub jstar: f64,
    pub perturbations: usize,
    /// Largest worst-case inner value among the perturbed kernels.
    pub best_candidate: f64,
    /// Candidates skipped because their log-scores break the cycle condition.
    pub unverified: usize,
    pub holds: bool,
}

/// Kernel `r*` perturbed entrywise by `U(-magnitude, magnitude)`, projected
/// back to strictly positive rows summing to one.
pub fn perturbed_kernel<R: Rng + ?Sized>(spec: &NeighborhoodSpec, magnitude: f64, rng: &mut R) -> Square {
    let n = spec.n();
    let d = spec.delta();
    let mut r = Square::from_fn(n, |v, s| {
        if v == s {
            1.0 - d / 2.0
        } else {
            d / (2.0 * (n - 1) as f64)
        }
    });
    if magnitude > 0.0 {
        for v in 0..n {
            for s in 0..n {
                r.add(v, s, rng.random_range(-magnitude..magnitude));
            }
        }
    }
    for _ in 0..2 {
        for v in 0..n {
            let sum: f64 = r.row(v).iter().sum();
            for s in 0..n {
                r.set(v, s, (r.get(v, s) / sum).max(1e-12));
            }
        }
    }
    // Final exact normalization after clamping.
    for v in 0..n {
        let sum: f64 = r.row(v).iter().sum();
        for s in 0..n {
            r.set(v, s, r.get(v, s) / sum);
        }
    }
    r
}

/// Searches for a valid e-value near `e*` whose worst-case growth beats `J*`.
pub fn saddle_check<R: Rng + ?Sized>(
    spec: &NeighborhoodSpec,
    perturbations: usize,
    magnitude: f64,
    rng: &mut R,
) -> Result<SaddleReport> {
    let n = spec.n();
    if n > MAX_SADDLE_N {
        return Err(EwmError::TooLarge { n, max: MAX_SADDLE_N });
    }
    if !(magnitude >= 0.0) {
        return Err(EwmError::BadParams(format!(
            "magnitude {magnitude} must be nonnegative"
        )));
    }
    let kernels: Vec<Square> = (0..perturbations)
        .map(|_| perturbed_kernel(spec, magnitude, rng))
        .collect();
    let values = map_indexed(Execution::Parallel, kernels.len(), |i| {
        candidate_worst_value(spec, &kernels[i])
    });
    let target = jstar(spec);
    let mut best = f64::NEG_INFINITY;
    let mut unverified = 0;
    for v in values {
        match v? {
            Some(x) => best = best.max(x),
            None => unverified += 1,
        }
    }
    Ok(SaddleReport {
        jstar: target,
        perturbations,
        best_candidate: best,
        unverified,
        holds: unverified == 0 && !(best > target + 1e-9),
    })
}

/// Inner values of `e*` for every extreme pair.
pub fn optimal_inner_values(spec: &NeighborhoodSpec) -> Result<Vec<(ExtremePair, InnerSolution)>> {
    let m = ScoreMatrix::from_table(&optimal_evalue(spec))?;
    enumerate_extremes(spec)
        .into_iter()
        .map(|pair| Ok((pair, best_path_inner_value(&m, spec, pair)?)))
        .collect()
}
