//! Anytime-valid sequential detection.
//!
//! The detector accumulates wealth `W_n = sum_t ln e(v_t, s_t)` and rejects
//! the null the first time `W_n >= ln(1/alpha)`. Under the null each factor
//! has expectation at most one, so by Ville's inequality the probability of
//! ever crossing is at most `alpha`, whatever the stopping rule.
//!
//! [`BaselineState`] is the comparison detector: an exact binomial tail on the
//! number of `v == s` matches, rejected against the Bonferroni schedule
//! `alpha / (k (k + 1))`, which sums to `alpha` over all `k`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{EwmError, Result};
use crate::evalue::EValueTable;
use crate::simplex::NeighborhoodSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Status {
    Running,
    Rejected { at_step: u64 },
}

impl Status {
    pub fn is_rejected(&self) -> bool {
        matches!(self, Status::Rejected { .. })
    }

    pub fn stop_step(&self) -> Option<u64> {
        match self {
            Status::Running => None,
            Status::Rejected { at_step } => Some(*at_step),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(EwmError::BadAlpha(alpha))
    }
}

/// Rejection threshold `ln(1/alpha)` in nats.
pub fn threshold(alpha: f64) -> f64 {
    -alpha.ln()
}

/// Log-wealth e-process. Serializes as `{"wealth", "steps", "alpha", "status"}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawState")]
pub struct DetectorState {
    wealth: f64,
    steps: u64,
    alpha: f64,
    status: Status,
}

#[derive(Deserialize)]
struct RawState {
    wealth: f64,
    steps: u64,
    alpha: f64,
    status: Status,
}

impl TryFrom<RawState> for DetectorState {
    type Error = EwmError;

    fn try_from(raw: RawState) -> Result<Self> {
        check_alpha(raw.alpha)?;
        if let Status::Rejected { at_step } = raw.status {
            if at_step > raw.steps {
                return Err(EwmError::BadParams(format!(
                    "rejected at step {at_step} after only {} steps",
                    raw.steps
                )));
            }
        }
        Ok(Self {
            wealth: raw.wealth,
            steps: raw.steps,
            alpha: raw.alpha,
            status: raw.status,
        })
    }
}

impl DetectorState {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            wealth: 0.0,
            steps: 0,
            alpha,
            status: Status::Running,
        })
    }

    pub fn wealth(&self) -> f64 {
        self.wealth
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn threshold(&self) -> f64 {
        threshold(self.alpha)
    }

    /// Adds one log-score. The hot path for simulations, which precompute `ln e`.
    #[inline]
    pub fn observe_log(self, log_score: f64) -> Result<Self> {
        if let Status::Rejected { at_step } = self.status {
            return Err(EwmError::AlreadyStopped(at_step));
        }
        let wealth = self.wealth + log_score;
        let steps = self.steps + 1;
        let status = if wealth >= self.threshold() {
            Status::Rejected { at_step: steps }
        } else {
            Status::Running
        };
        Ok(Self {
            wealth,
            steps,
            status,
            ..self
        })
    }

    pub fn observe(self, e: &EValueTable, v: usize, s: usize) -> Result<Self> {
        let n = e.n();
        if v >= n || s >= n {
            return Err(EwmError::IndexOutOfRange { v, s, n });
        }
        self.observe_log(e.get(v, s).ln())
    }

    /// Observes pairs until the stream ends or the null is rejected.
    pub fn feed(mut self, e: &EValueTable, stream: &[(usize, usize)]) -> Result<Self> {
        for &(v, s) in stream {
            if self.status.is_rejected() {
                break;
            }
            self = self.observe(e, v, s)?;
        }
        Ok(self)
    }
}

/// Starts a detector for table `e`.
pub fn init_detector(e: &EValueTable, alpha: f64) -> Result<DetectorState> {
    if e.n() < 2 {
        return Err(EwmError::TooShort(e.n()));
    }
    DetectorState::new(alpha)
}

pub fn observe(state: DetectorState, e: &EValueTable, v: usize, s: usize) -> Result<DetectorState> {
    state.observe(e, v, s)
}

/// `sup_{q in Q} P(v = s)` under independence: `sum p0^2 + (delta/2)(max p0 - min p0)`.
pub fn worst_null_match_prob(spec: &NeighborhoodSpec) -> f64 {
    match_prob_bound(spec.anchor().weights(), spec.delta())
}

pub(crate) fn match_prob_bound(anchor: &[f64], delta: f64) -> f64 {
    let squares: f64 = anchor.iter().map(|p| p * p).sum();
    let max = anchor.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = anchor.iter().copied().fold(f64::INFINITY, f64::min);
    squares + delta / 2.0 * (max - min)
}

/// `P(Bin(trials, p) >= successes)`.
pub fn binomial_upper_tail(trials: u64, successes: u64, p: f64) -> f64 {
    if successes == 0 {
        return 1.0;
    }
    if successes > trials {
        return 0.0;
    }
    let dist = Binomial::new(p, trials).expect("p in [0, 1]");
    dist.sf(successes - 1)
}

/// Bonferroni level for step `k` (1-based).
pub fn bonferroni_level(alpha: f64, k: u64) -> f64 {
    let k = k as f64;
    alpha / (k * (k + 1.0))
}

/// Match-count baseline with a Bonferroni-corrected rejection schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineState {
    matches: u64,
    steps: u64,
    alpha: f64,
    null_match_prob: f64,
    last_p_value: f64,
    status: Status,
}

impl BaselineState {
    pub fn new(alpha: f64, null_match_prob: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(0.0..=1.0).contains(&null_match_prob) {
            return Err(EwmError::BadParams(format!(
                "null match probability {null_match_prob} outside [0, 1]"
            )));
        }
        Ok(Self {
            matches: 0,
            steps: 0,
            alpha,
            null_match_prob,
            last_p_value: 1.0,
            status: Status::Running,
        })
    }

    pub fn for_spec(spec: &NeighborhoodSpec, alpha: f64) -> Result<Self> {
        Self::new(alpha, worst_null_match_prob(spec))
    }

    pub fn matches(&self) -> u64 {
        self.matches
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn null_match_prob(&self) -> f64 {
        self.null_match_prob
    }

    pub fn last_p_value(&self) -> f64 {
        self.last_p_value
    }

    pub fn observe(self, v: usize, s: usize) -> Result<Self> {
        if let Status::Rejected { at_step } = self.status {
            return Err(EwmError::AlreadyStopped(at_step));
        }
        let matches = self.matches + u64::from(v == s);
        let steps = self.steps + 1;
        let p_value = binomial_upper_tail(steps, matches, self.null_match_prob);
        let status = if p_value < bonferroni_level(self.alpha, steps) {
            Status::Rejected { at_step: steps }
        } else {
            Status::Running
        };
        Ok(Self {
            matches,
            steps,
            last_p_value: p_value,
            status,
            ..self
        })
    }
}

pub fn baseline_observe(state: BaselineState, v: usize, s: usize) -> Result<BaselineState> {
    state.observe(v, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Rejected,
    Undecided,
}

/// Outcome of running a detector over a finite stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub decision: Decision,
    pub stop_step: Option<u64>,
    pub wealth: f64,
    pub threshold: f64,
    pub steps: u64,
}

impl DetectionReport {
    pub fn from_state(state: &DetectorState) -> Self {
        Self {
            decision: if state.status.is_rejected() {
                Decision::Rejected
            } else {
                Decision::Undecided
            },
            stop_step: state.status.stop_step(),
            wealth: state.wealth,
            threshold: state.threshold(),
            steps: state.steps,
        }
    }
}

/// Runs the e-value detector over at most `budget` pairs of `stream`.
pub fn batch_detect(e: &EValueTable, alpha: f64, stream: &[(usize, usize)], budget: usize) -> Result<DetectionReport> {
    if stream.is_empty() {
        return Err(EwmError::EmptyStream);
    }
    if budget == 0 {
        return Err(EwmError::BadParams("budget must be at least 1".into()));
    }
    let take = budget.min(stream.len());
    let state = init_detector(e, alpha)?.feed(e, &stream[..take])?;
    Ok(DetectionReport::from_state(&state))
}

/// Outcome of running the baseline over a finite stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub decision: Decision,
    pub stop_step: Option<u64>,
    pub matches: u64,
    pub steps: u64,
    pub p_value: f64,
    pub null_match_prob: f64,
}

/// Runs the binomial baseline over at most `budget` pairs of `stream`.
pub fn baseline_detect(
    spec: &NeighborhoodSpec,
    alpha: f64,
    stream: &[(usize, usize)],
    budget: usize,
) -> Result<BaselineReport> {
    if stream.is_empty() {
        return Err(EwmError::EmptyStream);
    }
    if budget == 0 {
        return Err(EwmError::BadParams("budget must be at least 1".into()));
    }
    let n = spec.n();
    let mut state = BaselineState::for_spec(spec, alpha)?;
    for &(v, s) in stream.iter().take(budget) {
        if v >= n || s >= n {
            return Err(EwmError::IndexOutOfRange { v, s, n });
        }
        state = state.observe(v, s)?;
        if state.status.is_rejected() {
            break;
        }
    }
    Ok(BaselineReport {
        decision: if state.status.is_rejected() {
            Decision::Rejected
        } else {
            Decision::Undecided
        },
        stop_step: state.status.stop_step(),
        matches: state.matches,
        steps: state.steps,
        p_value: state.last_p_value,
        null_match_prob: state.null_match_prob,
    })
}
