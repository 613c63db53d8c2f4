use std::fs;
use std::io::Write;
use std::path::Path;

use ewm_core::detection::{BaselineReport, BaselineState};
use ewm_core::oracles::{
    cycle_condition_check, saddle_check, two_token_maxmin, worst_inner_value, ScoreMatrix, MAX_CYCLE_N, MAX_PATH_N,
    MAX_SADDLE_N,
};
use ewm_core::parallel::with_threads;
use ewm_core::rng::{mix64, stream, GOLDEN_GAMMA};
use ewm_core::simulation::{calibrate_null, estimate_stopping_with, null_horizon};
use ewm_core::{
    batch_detect, decompose_target, jstar, l1_distance, noise_profile, null_worst_expectation, optimal_evalue,
    DetectionReport, DetectorState, EValueTable, Execution, ExperimentConfig, NeighborhoodSpec, Process,
    VocabDistribution,
};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::output::{csv_num, csv_table, emit, emit_json, num, write_exact};
use crate::{AlphaGrid, CliError, CliResult, Command, Method, SpecArgs};

pub(crate) fn dispatch(command: Command, stdout: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Jstar { spec, table_out, out } => {
            let spec = resolve_spec(&spec)?;
            jstar_cmd(&spec, table_out.as_deref(), out.as_deref(), stdout)
        }
        Command::Maxmin2 {
            p,
            delta,
            grid,
            refinements,
            trace,
            out,
        } => maxmin2_cmd(p, delta, grid, refinements, trace.as_deref(), out.as_deref(), stdout),
        Command::SweepTau {
            spec,
            alphas: AlphaGrid(alphas),
            trials,
            seed,
            policy,
            horizon_cap,
            threads,
            out,
        } => {
            let config = ExperimentConfig {
                spec: resolve_spec(&spec)?,
                alphas,
                trials,
                policy,
                horizon_cap,
                base_seed: seed,
            };
            config.validate().map_err(usage)?;
            let rows = with_threads(threads.threads, || estimate_stopping_with(&config, Execution::Parallel))?;
            let body = csv_table(
                &[
                    "alpha",
                    "log_inv_alpha",
                    "mean_tau",
                    "std_err",
                    "ratio",
                    "censored_count",
                ],
                rows.iter().map(|r| {
                    vec![
                        csv_num(r.alpha),
                        csv_num(r.log_inv_alpha),
                        csv_num(r.mean_tau),
                        csv_num(r.std_err),
                        csv_num(r.ratio),
                        r.censored_count.to_string(),
                    ]
                }),
            )?;
            emit(&body, out.as_deref(), stdout)
        }
        Command::CalibrateNull {
            spec,
            alphas: AlphaGrid(alphas),
            trials,
            horizon,
            null,
            table,
            seed,
            threads,
            out,
        } => {
            let spec = resolve_spec(&spec)?;
            if trials == 0 || horizon == Some(0) {
                return Err(CliError::Usage("trials and horizon must be positive".into()));
            }
            let q = match null {
                Some(src) => distribution_arg(&src, "--null")?,
                None => spec.anchor().clone(),
            };
            if !spec.contains(&q).map_err(usage)? {
                return Err(CliError::Usage("--null lies outside the neighborhood".into()));
            }
            let table = load_table(table.as_deref(), &spec)?;
            let rows = with_threads(threads.threads, || {
                alphas
                    .iter()
                    .enumerate()
                    .map(|(i, &alpha)| {
                        let h = horizon.unwrap_or_else(|| null_horizon(&spec, alpha));
                        let s = mix64(seed ^ (i as u64 + 1).wrapping_mul(GOLDEN_GAMMA));
                        calibrate_null(&spec, &table, alpha, trials, h, &q, s, Execution::Parallel)
                    })
                    .collect::<ewm_core::Result<Vec<_>>>()
            })?;
            let body = csv_table(
                &["alpha", "trials", "horizon", "false_positives", "rate"],
                rows.iter().map(|r| {
                    vec![
                        csv_num(r.alpha),
                        r.trials.to_string(),
                        r.horizon.to_string(),
                        r.false_positives.to_string(),
                        csv_num(r.rate),
                    ]
                }),
            )?;
            emit(&body, out.as_deref(), stdout)
        }
        Command::Generate {
            spec,
            policy,
            steps,
            seed,
            out,
        } => {
            let spec = resolve_spec(&spec)?;
            let process = Process::optimal(&spec);
            process.validate_policy(policy).map_err(usage)?;
            let path = process.generate(policy, steps, seed)?;
            let body = csv_table(
                &["step", "v", "s"],
                path.iter()
                    .enumerate()
                    .map(|(t, st)| vec![(t + 1).to_string(), st.v.to_string(), st.s.to_string()]),
            )?;
            emit(&body, out.as_deref(), stdout)
        }
        Command::Detect {
            spec,
            alpha,
            method,
            stream,
            budget,
            table,
            state_in,
            state_out,
            out,
        } => {
            let spec = resolve_spec(&spec)?;
            if budget == Some(0) {
                return Err(CliError::Usage("--budget must be at least 1".into()));
            }
            if method == Method::Baseline && table.is_some() {
                return Err(CliError::Usage("--table only applies to --method evalue".into()));
            }
            if state_in.is_none() && alpha.is_none() {
                return Err(CliError::Usage("--alpha is required without --state-in".into()));
            }
            let pairs = read_stream(&stream)?;
            if pairs.is_empty() {
                return Err(ewm_core::EwmError::EmptyStream.into());
            }
            let report = match method {
                Method::Evalue => {
                    let table = load_table(table.as_deref(), &spec)?;
                    detect_evalue(&table, alpha, &pairs, budget, state_in.as_deref(), state_out.as_deref())?
                }
                Method::Baseline => {
                    detect_baseline(&spec, alpha, &pairs, budget, state_in.as_deref(), state_out.as_deref())?
                }
            };
            emit_json(&report, out.as_deref(), stdout)
        }
        Command::Decompose { spec, target, out } => {
            let spec = resolve_spec(&spec)?;
            let q = distribution_arg(&target, "--target")?;
            if q.len() != spec.n() {
                return Err(CliError::Usage(format!(
                    "--target has {} entries, anchor has {}",
                    q.len(),
                    spec.n()
                )));
            }
            let mix = decompose_target(&spec, &q)?;
            let rebuilt = mix.reconstruct(&spec);
            let err = rebuilt
                .iter()
                .zip(q.weights())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let terms: Vec<Value> = mix
                .terms
                .iter()
                .map(|(p, w)| json!({"gain": p.gain, "loss": p.loss, "weight": num(*w)}))
                .collect();
            let report = json!({
                "n": spec.n(),
                "delta": num(spec.delta()),
                "distance": num(l1_distance(spec.anchor(), &q)?),
                "terms": terms,
                "total_weight": num(mix.total_weight()),
                "reconstruction_error": num(err),
            });
            emit_json(&report, out.as_deref(), stdout)
        }
        Command::Audit {
            spec,
            table,
            perturbations,
            magnitude,
            seed,
            threads,
            out,
        } => {
            let spec = resolve_spec(&spec)?;
            if perturbations == 0 || !(magnitude > 0.0 && magnitude.is_finite()) {
                return Err(CliError::Usage(
                    "--perturbations and --magnitude must be positive".into(),
                ));
            }
            let table = load_table(table.as_deref(), &spec)?;
            let report = with_threads(threads.threads, || audit(&spec, &table, perturbations, magnitude, seed))?;
            emit_json(&report, out.as_deref(), stdout)
        }
    }
}

fn usage(e: ewm_core::EwmError) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnchorSource {
    Weights(Vec<f64>),
    Spec { anchor: Vec<f64>, delta: Option<f64> },
}

impl AnchorSource {
    fn split(self) -> (Vec<f64>, Option<f64>) {
        match self {
            AnchorSource::Weights(w) => (w, None),
            AnchorSource::Spec { anchor, delta } => (anchor, delta),
        }
    }
}

fn looks_inline(s: &str) -> bool {
    matches!(s.trim_start().chars().next(), Some('[' | '{'))
}

/// Inline JSON, or the contents of the file it names.
fn json_or_file(src: &str) -> CliResult<String> {
    if looks_inline(src) {
        Ok(src.to_string())
    } else {
        read_file(Path::new(src))
    }
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn parse_anchor(text: &str) -> CliResult<(Vec<f64>, Option<f64>)> {
    Ok(serde_json::from_str::<AnchorSource>(text)
        .map_err(|e| CliError::Usage(format!("anchor: {e}")))?
        .split())
}

/// `--anchor` beats `--anchor-file` for the weights; the radius comes from
/// `--delta`, then the inline object, then the file.
fn resolve_spec(args: &SpecArgs) -> CliResult<NeighborhoodSpec> {
    let file = match &args.anchor_file {
        Some(f) => Some(parse_anchor(&read_file(f)?)?),
        None => None,
    };
    let inline = match &args.anchor {
        Some(a) => Some(parse_anchor(&json_or_file(a)?)?),
        None => None,
    };
    let file_delta = file.as_ref().and_then(|f| f.1);
    let (weights, own_delta) = inline
        .or(file)
        .ok_or_else(|| CliError::Usage("one of --anchor or --anchor-file is required".into()))?;
    let delta = args
        .delta
        .or(own_delta)
        .or(file_delta)
        .ok_or_else(|| CliError::Usage("--delta is required".into()))?;
    NeighborhoodSpec::from_weights(&weights, delta).map_err(usage)
}

fn distribution_arg(src: &str, flag: &str) -> CliResult<VocabDistribution> {
    let text = json_or_file(src)?;
    let w: Vec<f64> = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{flag}: {e}")))?;
    VocabDistribution::new(w).map_err(|e| CliError::Usage(format!("{flag}: {e}")))
}

fn load_table(path: Option<&Path>, spec: &NeighborhoodSpec) -> CliResult<EValueTable> {
    let Some(path) = path else {
        return Ok(optimal_evalue(spec));
    };
    let table: EValueTable =
        serde_json::from_str(&read_file(path)?).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    if table.n() != spec.n() {
        return Err(CliError::Runtime(format!(
            "table has n = {}, anchor has {}",
            table.n(),
            spec.n()
        )));
    }
    Ok(table)
}

#[derive(Deserialize)]
struct StreamRow {
    #[allow(dead_code)]
    step: u64,
    v: usize,
    s: usize,
}

/// Reads a `step,v,s` CSV with 0-based indices.
pub(crate) fn read_stream(path: &Path) -> CliResult<Vec<(usize, usize)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["step", "v", "s"] {
        return Err(CliError::Runtime(format!(
            "{}: expected header step,v,s",
            path.display()
        )));
    }
    rdr.deserialize::<StreamRow>()
        .map(|r| r.map(|row| (row.v, row.s)).map_err(CliError::from))
        .collect()
}

fn check_alpha(flag: Option<f64>, saved: f64) -> CliResult<()> {
    match flag {
        Some(a) if a != saved => Err(CliError::Usage(format!(
            "--alpha {a} differs from the saved state's {saved}"
        ))),
        _ => Ok(()),
    }
}

fn detect_evalue(
    table: &EValueTable,
    alpha: Option<f64>,
    pairs: &[(usize, usize)],
    budget: Option<usize>,
    state_in: Option<&Path>,
    state_out: Option<&Path>,
) -> CliResult<Value> {
    let take = budget.unwrap_or(pairs.len()).min(pairs.len());
    let (report, state) = match state_in {
        None => {
            let alpha = alpha.expect("checked");
            DetectorState::new(alpha).map_err(usage)?;
            let report = batch_detect(table, alpha, pairs, take)?;
            let state = DetectorState::new(alpha)?.feed(table, &pairs[..take])?;
            (report, state)
        }
        Some(path) => {
            let saved: DetectorState = serde_json::from_str(&read_file(path)?)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            check_alpha(alpha, saved.alpha())?;
            let state = saved.feed(table, &pairs[..take])?;
            (DetectionReport::from_state(&state), state)
        }
    };
    if let Some(path) = state_out {
        write_exact(&state, path)?;
    }
    Ok(json!({
        "method": "evalue",
        "alpha": num(state.alpha()),
        "decision": report.decision,
        "stop_step": report.stop_step,
        "wealth": num(report.wealth),
        "threshold": num(report.threshold),
        "steps": report.steps,
    }))
}

fn detect_baseline(
    spec: &NeighborhoodSpec,
    alpha: Option<f64>,
    pairs: &[(usize, usize)],
    budget: Option<usize>,
    state_in: Option<&Path>,
    state_out: Option<&Path>,
) -> CliResult<Value> {
    let take = budget.unwrap_or(pairs.len()).min(pairs.len());
    let mut state = match state_in {
        None => BaselineState::for_spec(spec, alpha.expect("checked")).map_err(usage)?,
        Some(path) => {
            let saved: BaselineState = serde_json::from_str(&read_file(path)?)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            check_alpha(alpha, saved.alpha())?;
            saved
        }
    };
    let n = spec.n();
    for &(v, s) in &pairs[..take] {
        if state.status().is_rejected() {
            break;
        }
        if v >= n || s >= n {
            return Err(ewm_core::EwmError::IndexOutOfRange { v, s, n }.into());
        }
        state = state.observe(v, s)?;
    }
    let report = BaselineReport {
        decision: if state.status().is_rejected() {
            ewm_core::Decision::Rejected
        } else {
            ewm_core::Decision::Undecided
        },
        stop_step: state.status().stop_step(),
        matches: state.matches(),
        steps: state.steps(),
        p_value: state.last_p_value(),
        null_match_prob: state.null_match_prob(),
    };
    if let Some(path) = state_out {
        write_exact(&state, path)?;
    }
    Ok(json!({
        "method": "baseline",
        "alpha": num(state.alpha()),
        "decision": report.decision,
        "stop_step": report.stop_step,
        "matches": report.matches,
        "steps": report.steps,
        "p_value": num(report.p_value),
        "null_match_prob": num(report.null_match_prob),
    }))
}

fn jstar_cmd(
    spec: &NeighborhoodSpec,
    table_out: Option<&Path>,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let j = jstar(spec);
    let report = json!({
        "n": spec.n(),
        "delta": num(spec.delta()),
        "entropy": num(spec.anchor().entropy()),
        "noise_entropy": num(noise_profile(spec.n(), spec.delta())?.entropy()),
        "jstar": num(j),
        "inverse_jstar": num(1.0 / j),
    });
    if let Some(path) = table_out {
        write_exact(&optimal_evalue(spec), path)?;
    }
    emit_json(&report, out, stdout)
}

fn maxmin2_cmd(
    p: f64,
    delta: f64,
    grid: usize,
    refinements: usize,
    trace: Option<&Path>,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let spec = NeighborhoodSpec::from_weights(&[p, 1.0 - p], delta).map_err(usage)?;
    if grid < 2 {
        return Err(CliError::Usage("--grid must be at least 2".into()));
    }
    let sol = two_token_maxmin(p, delta, grid, refinements).map_err(usage)?;
    let j = jstar(&spec);
    if let Some(path) = trace {
        let body = csv_table(
            &["refinement", "r00", "r11", "objective"],
            sol.trace.iter().map(|t| {
                vec![
                    t.refinement.to_string(),
                    csv_num(t.r00),
                    csv_num(t.r11),
                    csv_num(t.objective),
                ]
            }),
        )?;
        fs::write(path, body)?;
    }
    let report = json!({
        "p": num(p),
        "delta": num(delta),
        "grid": grid,
        "refinements": refinements,
        "value": num(sol.value),
        "r00": num(sol.r00),
        "r11": num(sol.r11),
        "jstar": num(j),
        "abs_error": num((sol.value - j).abs()),
    });
    emit_json(&report, out, stdout)
}

fn audit(
    spec: &NeighborhoodSpec,
    table: &EValueTable,
    perturbations: usize,
    magnitude: f64,
    seed: u64,
) -> CliResult<Value> {
    let n = spec.n();
    let expectation = null_worst_expectation(table, spec)?;
    let scores = ScoreMatrix::from_table(table).ok();
    let cycle = match &scores {
        Some(m) if n <= MAX_CYCLE_N => Some(cycle_condition_check(m, n)?),
        _ => None,
    };
    let inner = match &scores {
        Some(m) if n <= MAX_PATH_N => {
            let (pair, sol) = worst_inner_value(m, spec)?;
            json!({
                "value": num(sol.value),
                "gain": pair.gain,
                "loss": pair.loss,
                "path": sol.path.vertices(),
            })
        }
        _ => Value::Null,
    };
    let saddle = if n <= MAX_SADDLE_N {
        let mut rng = stream(seed);
        let r = saddle_check(spec, perturbations, magnitude, &mut rng)?;
        json!({
            "perturbations": r.perturbations,
            "best_candidate": num(r.best_candidate),
            "unverified": r.unverified,
            "holds": r.holds,
        })
    } else {
        Value::Null
    };
    Ok(json!({
        "n": n,
        "delta": num(spec.delta()),
        "jstar": num(jstar(spec)),
        "null_expectation": num(expectation),
        "valid": table.is_valid(spec)?,
        "cycle_condition": cycle,
        "worst_inner": inner,
        "saddle": saddle,
    }))
}
