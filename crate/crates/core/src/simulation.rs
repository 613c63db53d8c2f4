//! Adversary/generator process and Monte Carlo estimates.
//!
//! At step `t` the adversary picks an extreme target `q_t`, the generator
//! answers with the optimal extreme coupling `w_t`, and `(v_t, s_t) ~ w_t` is
//! fed to the detector. Each trial owns a ChaCha8 stream seeded by
//! [`trial_seed`], and trials are aggregated in index order, so estimates do
//! not depend on the thread count.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::coupling::{extreme_coupling, CouplingMatrix, PairSampler};
use crate::detection::{binomial_upper_tail, threshold, BaselineState, DetectorState};
use crate::error::{EwmError, Result};
use crate::evalue::{jstar, optimal_evalue, EValueTable};
use crate::parallel::{map_indexed, Execution};
use crate::rng::{stream, trial_seed};
use crate::simplex::{enumerate_extremes, ExtremePair, NeighborhoodSpec, VocabDistribution};

/// How the adversary picks the next target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryPolicy {
    FixedPair(ExtremePair),
    /// Cycles through the extreme pairs in lexicographic order.
    RoundRobin,
    /// Uniform over extreme pairs, drawn from the trial stream.
    RandomPair,
    /// Pair with the smallest mean log-score over its last `window` uses;
    /// unused pairs go first.
    HistoryGreedy {
        window: usize,
    },
}

impl Default for AdversaryPolicy {
    fn default() -> Self {
        AdversaryPolicy::FixedPair(ExtremePair { gain: 0, loss: 1 })
    }
}

impl fmt::Display for AdversaryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryPolicy::FixedPair(p) => write!(f, "fixed:{},{}", p.gain, p.loss),
            AdversaryPolicy::RoundRobin => write!(f, "round-robin"),
            AdversaryPolicy::RandomPair => write!(f, "random"),
            AdversaryPolicy::HistoryGreedy { window } => write!(f, "greedy:{window}"),
        }
    }
}

impl FromStr for AdversaryPolicy {
    type Err = EwmError;

    /// `fixed:A,B`, `round-robin`, `random`, `greedy` or `greedy:W`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || EwmError::BadParams(format!("unknown policy '{s}'"));
        match s {
            "round-robin" => return Ok(AdversaryPolicy::RoundRobin),
            "random" => return Ok(AdversaryPolicy::RandomPair),
            "greedy" => return Ok(AdversaryPolicy::HistoryGreedy { window: 16 }),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("fixed:") {
            let (a, b) = rest.split_once(',').ok_or_else(bad)?;
            let gain = a.trim().parse().map_err(|_| bad())?;
            let loss = b.trim().parse().map_err(|_| bad())?;
            return Ok(AdversaryPolicy::FixedPair(ExtremePair { gain, loss }));
        }
        if let Some(rest) = s.strip_prefix("greedy:") {
            let window: usize = rest.parse().map_err(|_| bad())?;
            if window == 0 {
                return Err(bad());
            }
            return Ok(AdversaryPolicy::HistoryGreedy { window });
        }
        Err(bad())
    }
}

/// Per-run memory the adaptive policies read.
#[derive(Debug, Clone)]
pub struct History {
    steps: u64,
    recent: Vec<VecDeque<f64>>,
    window: usize,
}

impl History {
    pub fn new(pairs: usize, policy: AdversaryPolicy) -> Self {
        let window = match policy {
            AdversaryPolicy::HistoryGreedy { window } => window,
            _ => 0,
        };
        Self {
            steps: 0,
            recent: vec![VecDeque::new(); if window > 0 { pairs } else { 0 }],
            window,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn record(&mut self, pair_index: usize, log_score: f64) {
        self.steps += 1;
        if self.window > 0 {
            let buf = &mut self.recent[pair_index];
            if buf.len() == self.window {
                buf.pop_front();
            }
            buf.push_back(log_score);
        }
    }

    fn greediest(&self) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, buf) in self.recent.iter().enumerate() {
            if buf.is_empty() {
                return i;
            }
            let mean = buf.iter().sum::<f64>() / buf.len() as f64;
            if mean < best.1 {
                best = (i, mean);
            }
        }
        best.0
    }
}

/// One step of the process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub pair: ExtremePair,
    pub pair_index: usize,
    pub v: usize,
    pub s: usize,
    pub log_score: f64,
}

/// Precomputed best-response couplings and log-scores for one spec and table.
#[derive(Debug, Clone)]
pub struct Process {
    spec: NeighborhoodSpec,
    table: EValueTable,
    log_scores: Vec<f64>,
    pairs: Vec<ExtremePair>,
    couplings: Vec<CouplingMatrix>,
    samplers: Vec<PairSampler>,
}

impl Process {
    pub fn new(spec: &NeighborhoodSpec, table: EValueTable) -> Result<Self> {
        if table.n() != spec.n() {
            return Err(EwmError::DimensionMismatch {
                expected: spec.n(),
                actual: table.n(),
            });
        }
        let pairs = enumerate_extremes(spec);
        let couplings = pairs
            .iter()
            .map(|&p| extreme_coupling(spec, p))
            .collect::<Result<Vec<_>>>()?;
        let samplers = couplings.iter().map(CouplingMatrix::sampler).collect();
        Ok(Self {
            spec: spec.clone(),
            log_scores: table.log_scores().into_vec(),
            table,
            pairs,
            couplings,
            samplers,
        })
    }

    /// Process scored by the optimal table.
    pub fn optimal(spec: &NeighborhoodSpec) -> Self {
        Self::new(spec, optimal_evalue(spec)).expect("dimensions agree")
    }

    pub fn spec(&self) -> &NeighborhoodSpec {
        &self.spec
    }

    pub fn table(&self) -> &EValueTable {
        &self.table
    }

    pub fn pairs(&self) -> &[ExtremePair] {
        &self.pairs
    }

    pub fn coupling(&self, pair_index: usize) -> &CouplingMatrix {
        &self.couplings[pair_index]
    }

    pub fn target(&self, pair_index: usize) -> Result<VocabDistribution> {
        self.pairs[pair_index].target(&self.spec)
    }

    #[inline]
    pub fn log_score(&self, v: usize, s: usize) -> f64 {
        self.log_scores[v * self.spec.n() + s]
    }

    pub fn validate_policy(&self, policy: AdversaryPolicy) -> Result<()> {
        if let AdversaryPolicy::FixedPair(p) = policy {
            p.validate(self.spec.n())?;
        }
        Ok(())
    }

    fn choose<R: Rng + ?Sized>(&self, policy: AdversaryPolicy, history: &History, rng: &mut R) -> usize {
        match policy {
            AdversaryPolicy::FixedPair(p) => self
                .pairs
                .iter()
                .position(|&q| q == p)
                .expect("policy validated against the spec"),
            AdversaryPolicy::RoundRobin => (history.steps % self.pairs.len() as u64) as usize,
            AdversaryPolicy::RandomPair => rng.random_range(0..self.pairs.len()),
            AdversaryPolicy::HistoryGreedy { .. } => history.greediest(),
        }
    }

    /// Adversary move, best-response coupling and one draw from it.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, policy: AdversaryPolicy, history: &mut History, rng: &mut R) -> Step {
        let pair_index = self.choose(policy, history, rng);
        let (v, s) = self.samplers[pair_index].sample(rng);
        let log_score = self.log_score(v, s);
        history.record(pair_index, log_score);
        Step {
            pair: self.pairs[pair_index],
            pair_index,
            v,
            s,
            log_score,
        }
    }

    /// Generates `steps` pairs from a fresh history.
    pub fn generate(&self, policy: AdversaryPolicy, steps: usize, seed: u64) -> Result<Vec<Step>> {
        self.validate_policy(policy)?;
        let mut rng = stream(seed);
        let mut history = History::new(self.pairs.len(), policy);
        Ok((0..steps).map(|_| self.step(policy, &mut history, &mut rng)).collect())
    }
}

/// Free-function form of [`Process::step`]; `(q_t, w_t)` are
/// `process.target(step.pair_index)` and `process.coupling(step.pair_index)`.
pub fn step_process<R: Rng + ?Sized>(
    process: &Process,
    policy: AdversaryPolicy,
    history: &mut History,
    rng: &mut R,
) -> Step {
    process.step(policy, history, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub stop_step: Option<u64>,
    pub final_wealth: f64,
    pub steps_run: u64,
    pub seed: u64,
}

/// Runs the e-value detector until rejection or `horizon_cap` steps.
pub fn run_trial(
    process: &Process,
    policy: AdversaryPolicy,
    alpha: f64,
    horizon_cap: u64,
    seed: u64,
) -> Result<TrialRecord> {
    process.validate_policy(policy)?;
    let mut detector = DetectorState::new(alpha)?;
    let mut rng = stream(seed);
    let mut history = History::new(process.pairs.len(), policy);
    while detector.steps() < horizon_cap && !detector.status().is_rejected() {
        let step = process.step(policy, &mut history, &mut rng);
        detector = detector.observe_log(step.log_score)?;
    }
    Ok(TrialRecord {
        stop_step: detector.status().stop_step(),
        final_wealth: detector.wealth(),
        steps_run: detector.steps(),
        seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub spec: NeighborhoodSpec,
    pub alphas: Vec<f64>,
    pub trials: usize,
    pub policy: AdversaryPolicy,
    /// `None` uses [`default_horizon`].
    pub horizon_cap: Option<u64>,
    pub base_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(EwmError::BadParams("no alpha values".into()));
        }
        if let Some(&a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(EwmError::BadAlpha(a));
        }
        if self.trials == 0 {
            return Err(EwmError::BadParams("trials must be at least 1".into()));
        }
        if self.horizon_cap == Some(0) {
            return Err(EwmError::BadParams("horizon cap must be at least 1".into()));
        }
        if let AdversaryPolicy::FixedPair(p) = self.policy {
            p.validate(self.spec.n())?;
        }
        Ok(())
    }

    pub fn horizon_for(&self, alpha: f64) -> u64 {
        self.horizon_cap.unwrap_or_else(|| default_horizon(&self.spec, alpha))
    }
}

/// `ceil(10 ln(1/alpha) / J*)`.
pub fn default_horizon(spec: &NeighborhoodSpec, alpha: f64) -> u64 {
    (10.0 * threshold(alpha) / jstar(spec)).ceil().max(1.0) as u64
}

/// `count` values from `start` to `end` inclusive, evenly spaced in log scale.
pub fn log_spaced(start: f64, end: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 || !(start > 0.0) || !(end > 0.0) || !start.is_finite() || !end.is_finite() {
        return Err(EwmError::BadParams(format!(
            "log grid needs positive endpoints and at least 2 points; got {start}, {end}, {count}"
        )));
    }
    let (a, b) = (start.ln(), end.ln());
    let last = (count - 1) as f64;
    Ok((0..count)
        .map(|i| match i {
            0 => start,
            i if i == count - 1 => end,
            i => (a + (b - a) * i as f64 / last).exp(),
        })
        .collect())
}

/// One row of the stopping-time table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingRow {
    pub alpha: f64,
    pub log_inv_alpha: f64,
    pub mean_tau: f64,
    pub std_err: f64,
    /// `mean_tau / ln(1/alpha)`; tends to `1/J*` as alpha shrinks.
    pub ratio: f64,
    /// Trials that hit the horizon; they count as `horizon_cap` in the mean.
    pub censored_count: usize,
    pub horizon_cap: u64,
}

pub fn estimate_stopping(config: &ExperimentConfig) -> Result<Vec<StoppingRow>> {
    estimate_stopping_with(config, Execution::Parallel)
}

pub fn estimate_stopping_with(config: &ExperimentConfig, exec: Execution) -> Result<Vec<StoppingRow>> {
    config.validate()?;
    let process = Process::optimal(&config.spec);
    config
        .alphas
        .iter()
        .enumerate()
        .map(|(ai, &alpha)| {
            let cap = config.horizon_for(alpha);
            let records = map_indexed(exec, config.trials, |t| {
                run_trial(
                    &process,
                    config.policy,
                    alpha,
                    cap,
                    trial_seed(config.base_seed, ai as u64, t as u64),
                )
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            Ok(summarize(alpha, cap, &records))
        })
        .collect()
}

fn summarize(alpha: f64, cap: u64, records: &[TrialRecord]) -> StoppingRow {
    let taus: Vec<f64> = records.iter().map(|r| r.stop_step.unwrap_or(cap) as f64).collect();
    let count = taus.len() as f64;
    let mean = taus.iter().sum::<f64>() / count;
    let var = if taus.len() > 1 {
        taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let log_inv_alpha = threshold(alpha);
    StoppingRow {
        alpha,
        log_inv_alpha,
        mean_tau: mean,
        std_err: (var / count).sqrt(),
        ratio: mean / log_inv_alpha,
        censored_count: records.iter().filter(|r| r.stop_step.is_none()).count(),
        horizon_cap: cap,
    }
}

/// Empirical mean of `ln e(v_t, s_t)` along one long run, with its standard error.
pub fn drift_estimate(process: &Process, policy: AdversaryPolicy, steps: usize, seed: u64) -> Result<(f64, f64)> {
    if steps < 2 {
        return Err(EwmError::BadParams("need at least 2 steps".into()));
    }
    process.validate_policy(policy)?;
    let mut rng = stream(seed);
    let mut history = History::new(process.pairs.len(), policy);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..steps {
        let x = process.step(policy, &mut history, &mut rng).log_score;
        sum += x;
        sum_sq += x * x;
    }
    let n = steps as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullCalibration {
    pub alpha: f64,
    pub trials: usize,
    pub horizon: u64,
    pub false_positives: usize,
    pub rate: f64,
}

/// Fraction of null streams (`v ~ q_null`, `s ~ p0` independent) whose
/// wealth ever reaches `ln(1/alpha)` within `horizon` steps.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_null(
    spec: &NeighborhoodSpec,
    table: &EValueTable,
    alpha: f64,
    trials: usize,
    horizon: u64,
    q_null: &VocabDistribution,
    seed: u64,
    exec: Execution,
) -> Result<NullCalibration> {
    if !spec.contains(q_null)? {
        return Err(EwmError::OutsideNeighborhood {
            distance: crate::simplex::l1_distance(spec.anchor(), q_null)?,
            delta: spec.delta(),
        });
    }
    if table.n() != spec.n() {
        return Err(EwmError::DimensionMismatch {
            expected: spec.n(),
            actual: table.n(),
        });
    }
    if trials == 0 || horizon == 0 {
        return Err(EwmError::BadParams("trials and horizon must be positive".into()));
    }
    DetectorState::new(alpha)?;
    let sampler = CouplingMatrix::independent(q_null, spec.anchor())?.sampler();
    let logs = table.log_scores();
    let hits = map_indexed(exec, trials, |t| {
        let mut rng = stream(trial_seed(seed, 0, t as u64));
        let mut d = DetectorState::new(alpha).expect("alpha checked");
        while d.steps() < horizon {
            let (v, s) = sampler.sample(&mut rng);
            d = d.observe_log(logs.get(v, s)).expect("running");
            if d.status().is_rejected() {
                return true;
            }
        }
        false
    });
    let false_positives = hits.iter().filter(|h| **h).count();
    Ok(NullCalibration {
        alpha,
        trials,
        horizon,
        false_positives,
        rate: false_positives as f64 / trials as f64,
    })
}

/// `ceil(5 ln(1/alpha) / J*)`, the calibration horizon.
pub fn null_horizon(spec: &NeighborhoodSpec, alpha: f64) -> u64 {
    (5.0 * threshold(alpha) / jstar(spec)).ceil().max(1.0) as u64
}

/// Paired stopping times of the e-value detector and the binomial baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineComparison {
    pub trials: usize,
    pub horizon: u64,
    pub evalue_mean_tau: f64,
    pub baseline_mean_tau: f64,
    /// Trials where the e-value detector stopped strictly earlier.
    pub evalue_wins: usize,
    pub baseline_wins: usize,
    pub ties: usize,
    /// One-sided sign test p-value for "e-value stops earlier".
    pub sign_test_p: f64,
    pub evalue_censored: usize,
    pub baseline_censored: usize,
}

/// Runs both detectors on the same generated stream per trial. Censored
/// trials count as `horizon + 1`.
pub fn compare_baseline(
    spec: &NeighborhoodSpec,
    alpha: f64,
    policy: AdversaryPolicy,
    trials: usize,
    horizon: u64,
    base_seed: u64,
    exec: Execution,
) -> Result<BaselineComparison> {
    if trials == 0 || horizon == 0 {
        return Err(EwmError::BadParams("trials and horizon must be positive".into()));
    }
    let process = Process::optimal(spec);
    process.validate_policy(policy)?;
    DetectorState::new(alpha)?;
    let pairs = map_indexed(exec, trials, |t| {
        let mut rng = stream(trial_seed(base_seed, 0, t as u64));
        let mut history = History::new(process.pairs.len(), policy);
        let mut e_det = DetectorState::new(alpha).expect("alpha checked");
        let mut b_det = BaselineState::for_spec(spec, alpha).expect("alpha checked");
        let (mut e_stop, mut b_stop) = (None, None);
        for _ in 0..horizon {
            let step = process.step(policy, &mut history, &mut rng);
            if e_stop.is_none() {
                e_det = e_det.observe_log(step.log_score).expect("running");
                e_stop = e_det.status().stop_step();
            }
            if b_stop.is_none() {
                b_det = b_det.observe(step.v, step.s).expect("running");
                b_stop = b_det.status().stop_step();
            }
            if e_stop.is_some() && b_stop.is_some() {
                break;
            }
        }
        (e_stop, b_stop)
    });
    let censor = horizon + 1;
    let (mut e_sum, mut b_sum) = (0.0, 0.0);
    let (mut e_wins, mut b_wins, mut ties) = (0, 0, 0);
    for &(e, b) in &pairs {
        let (e, b) = (e.unwrap_or(censor), b.unwrap_or(censor));
        e_sum += e as f64;
        b_sum += b as f64;
        match e.cmp(&b) {
            std::cmp::Ordering::Less => e_wins += 1,
            std::cmp::Ordering::Greater => b_wins += 1,
            std::cmp::Ordering::Equal => ties += 1,
        }
    }
    let decisive = (e_wins + b_wins) as u64;
    Ok(BaselineComparison {
        trials,
        horizon,
        evalue_mean_tau: e_sum / trials as f64,
        baseline_mean_tau: b_sum / trials as f64,
        evalue_wins: e_wins,
        baseline_wins: b_wins,
        ties,
        sign_test_p: binomial_upper_tail(decisive, e_wins as u64, 0.5),
        evalue_censored: pairs.iter().filter(|(e, _)| e.is_none()).count(),
        baseline_censored: pairs.iter().filter(|(_, b)| b.is_none()).count(),
    })
}
