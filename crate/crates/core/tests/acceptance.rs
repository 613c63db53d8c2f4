//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ewm_core::coupling::{extreme_coupling, mixture_coupling};
use ewm_core::evalue::{jstar, null_worst_expectation, optimal_evalue};
use ewm_core::oracles::{optimal_inner_values, saddle_check, two_token_maxmin};
use ewm_core::rng::stream;
use ewm_core::simplex::{decompose_target, enumerate_extremes, noise_profile, sample_spec, sample_target};
use ewm_core::simulation::{
    calibrate_null, compare_baseline, estimate_stopping, log_spaced, null_horizon, AdversaryPolicy, ExperimentConfig,
};
use ewm_core::{Execution, ExtremePair, NeighborhoodSpec};

type Check = fn() -> (bool, String);

struct Criterion {
    id: &'static str,
    name: &'static str,
    limit: Option<Duration>,
    run: Check,
}

fn spec(w: &[f64], delta: f64) -> NeighborhoodSpec {
    NeighborhoodSpec::from_weights(w, delta).unwrap()
}

fn random_specs(seed: u64, count: usize) -> Vec<NeighborhoodSpec> {
    let mut rng = stream(seed);
    (0..count).map(|i| sample_spec(&mut rng, 2 + i % 7)).collect()
}

fn closed_form_cross_check() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for sp in random_specs(101, 100) {
        let channel = sp.anchor().entropy() - noise_profile(sp.n(), sp.delta()).unwrap().entropy();
        worst = worst.max((jstar(&sp) - channel).abs());
    }
    (
        worst <= 1e-12,
        format!("max |J* - (H(p0) - H(nu))| = {worst:.3e} over 100 specs"),
    )
}

fn null_audit() -> (bool, String) {
    let mut worst: f64 = 0.0;
    let mut inflated_rejected = 0;
    for sp in random_specs(202, 100) {
        let e = optimal_evalue(&sp);
        worst = worst.max((null_worst_expectation(&e, &sp).unwrap() - 1.0).abs());
        if !e.scaled(1.01).unwrap().is_valid(&sp).unwrap() {
            inflated_rejected += 1;
        }
    }
    (
        worst <= 1e-10 && inflated_rejected == 100,
        format!("max |audit - 1| = {worst:.3e}; 1.01 e* rejected {inflated_rejected}/100"),
    )
}

fn two_token_reproduction() -> (bool, String) {
    // Closed-form values at delta = 0.01.
    let frozen = [(0.2, 0.468_923), (0.5, 0.661_668), (0.75, 0.530_856)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (p, want) in frozen {
        let target = jstar(&spec(&[p, 1.0 - p], 0.01));
        let sol = two_token_maxmin(p, 0.01, 256, 4).unwrap();
        let err = (sol.value - target).abs();
        ok &= err <= 1e-4 && (target - want).abs() <= 1e-6;
        parts.push(format!("p={p}: J={:.6} vs {target:.6} (err {err:.1e})", sol.value));
    }
    (ok, parts.join("; "))
}

fn saddle_audit() -> (bool, String) {
    let specs = [
        spec(&[0.5, 0.5], 0.1),
        spec(&[0.4, 0.3, 0.3], 0.1),
        spec(&[0.3, 0.25, 0.25, 0.2], 0.1),
    ];
    let mut rng = stream(404);
    let mut ok = true;
    let mut parts = Vec::new();
    for sp in &specs {
        let report = saddle_check(sp, 200, 0.05, &mut rng).unwrap();
        let values: Vec<f64> = optimal_inner_values(sp).unwrap().iter().map(|(_, s)| s.value).collect();
        let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - values.iter().cloned().fold(f64::INFINITY, f64::min);
        ok &= report.holds && spread <= 1e-12;
        parts.push(format!(
            "n={}: best candidate {:.6} <= J* {:.6}, unverified {}, inner spread {spread:.1e}",
            sp.n(),
            report.best_candidate,
            report.jstar,
            report.unverified
        ));
    }
    (ok, parts.join("; "))
}

fn stopping_time_reproduction() -> (bool, String) {
    let alphas = log_spaced(1e-2, 1e-120, 30).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [0.2, 0.5, 0.75] {
        let sp = spec(&[p, 1.0 - p], 0.1);
        let limit = 1.0 / jstar(&sp);
        let config = ExperimentConfig {
            spec: sp,
            alphas: alphas.clone(),
            trials: 10_000,
            policy: AdversaryPolicy::FixedPair(ExtremePair { gain: 0, loss: 1 }),
            horizon_cap: None,
            base_seed: 7,
        };
        let rows = estimate_stopping(&config).unwrap();
        let last = rows.last().unwrap();
        let rel = (last.ratio - limit).abs() / limit;
        // Consecutive ratios may not rise by more than 3 combined standard errors.
        let se = |i: usize| rows[i].std_err / rows[i].log_inv_alpha;
        let rises = (1..rows.len())
            .filter(|&i| rows[i].ratio > rows[i - 1].ratio + 3.0 * (se(i).powi(2) + se(i - 1).powi(2)).sqrt())
            .count();
        let below = rows
            .iter()
            .enumerate()
            .filter(|(i, r)| r.ratio < limit - 3.0 * se(*i))
            .count();
        let censored: usize = rows.iter().map(|r| r.censored_count).sum();
        ok &= rel <= 0.02 && rises == 0 && below == 0;
        parts.push(format!(
            "p={p}: ratio {:.4} vs 1/J* {limit:.4} ({:.2}%), first {:.4}, rises {rises}, below {below}, censored {censored}",
            last.ratio,
            100.0 * rel,
            rows[0].ratio
        ));
    }
    (ok, parts.join("; "))
}

fn ville_calibration() -> (bool, String) {
    let two = spec(&[0.5, 0.5], 0.1);
    let three = spec(&[0.4, 0.3, 0.3], 0.1);
    let cases = [
        ("p0", two.clone(), two.anchor().clone()),
        (
            "q(0,1)",
            two.clone(),
            ExtremePair { gain: 0, loss: 1 }.target(&two).unwrap(),
        ),
        (
            "q(0,2)",
            three.clone(),
            ExtremePair { gain: 0, loss: 2 }.target(&three).unwrap(),
        ),
    ];
    let trials = 10_000;
    let mut ok = true;
    let mut parts = Vec::new();
    for (ai, alpha) in [0.1, 0.05, 0.02].into_iter().enumerate() {
        let bound = alpha + 3.0 * (alpha * (1.0 - alpha) / trials as f64).sqrt();
        for (ci, (label, sp, q)) in cases.iter().enumerate() {
            let e = optimal_evalue(sp);
            let horizon = null_horizon(sp, alpha);
            let seed = 600 + (ai * cases.len() + ci) as u64;
            let cal = calibrate_null(sp, &e, alpha, trials, horizon, q, seed, Execution::Parallel).unwrap();
            ok &= cal.rate <= bound;
            parts.push(format!("a={alpha} n={} {label}: {:.4} <= {bound:.4}", sp.n(), cal.rate));
        }
    }
    (ok, parts.join("; "))
}

fn coupling_correctness() -> (bool, String) {
    let mut rng = stream(707);
    let draws = 100_000usize;
    let mut worst_marginal: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    let mut outside = 0;
    for i in 0..1000 {
        let sp = sample_spec(&mut rng, 2 + i % 7);
        let q = sample_target(&mut rng, &sp);
        let mix = decompose_target(&sp, &q).unwrap();
        let w = mixture_coupling(&sp, &mix).unwrap();
        for (got, want) in w.row_marginal().iter().zip(q.weights()) {
            worst_marginal = worst_marginal.max((got - want).abs());
        }
        for (got, want) in w.col_marginal().iter().zip(sp.anchor().weights()) {
            worst_marginal = worst_marginal.max((got - want).abs());
        }
        let sampler = w.sampler();
        let mut counts = vec![0usize; sp.n()];
        for _ in 0..draws {
            counts[sampler.sample(&mut rng).0] += 1;
        }
        for (c, &qv) in counts.iter().zip(q.weights()) {
            let sigma = (qv * (1.0 - qv) / draws as f64).sqrt();
            let z = (*c as f64 / draws as f64 - qv).abs() / sigma;
            worst_z = worst_z.max(z);
            if z > 4.0 {
                outside += 1;
            }
        }
    }
    (
        worst_marginal <= 1e-12 && outside == 0,
        format!("max marginal error {worst_marginal:.2e}; max |z| {worst_z:.2} over 1000 couplings, {outside} outside 4 sigma"),
    )
}

fn growth_identity() -> (bool, String) {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for sp in random_specs(808, 100) {
        let e = optimal_evalue(&sp);
        let j = jstar(&sp);
        for pair in enumerate_extremes(&sp) {
            let w = extreme_coupling(&sp, pair).unwrap();
            worst = worst.max((w.expected_log_score(&e) - j).abs());
            checked += 1;
        }
    }
    (
        worst <= 1e-12,
        format!("max |sum w* ln e* - J*| = {worst:.3e} over {checked} pairs"),
    )
}

fn baseline_comparison() -> (bool, String) {
    let sp = spec(&[0.5, 0.5], 0.3);
    let cmp = compare_baseline(
        &sp,
        0.02,
        AdversaryPolicy::default(),
        1000,
        10_000,
        909,
        Execution::Parallel,
    )
    .unwrap();
    (
        cmp.evalue_mean_tau < cmp.baseline_mean_tau && cmp.sign_test_p < 0.01,
        format!(
            "mean tau e-value {:.2} vs baseline {:.2}; wins {}/{} (ties {}), sign-test p = {:.2e}",
            cmp.evalue_mean_tau, cmp.baseline_mean_tau, cmp.evalue_wins, cmp.baseline_wins, cmp.ties, cmp.sign_test_p
        ),
    )
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = [
        Criterion {
            id: "AC1",
            name: "closed-form cross-check",
            limit: secs(1),
            run: closed_form_cross_check,
        },
        Criterion {
            id: "AC2",
            name: "null audit",
            limit: secs(1),
            run: null_audit,
        },
        Criterion {
            id: "AC3",
            name: "two-token max-min",
            limit: secs(10),
            run: two_token_reproduction,
        },
        Criterion {
            id: "AC4",
            name: "saddle audit",
            limit: secs(30),
            run: saddle_audit,
        },
        Criterion {
            id: "AC5",
            name: "stopping-time ratio",
            limit: secs(300),
            run: stopping_time_reproduction,
        },
        Criterion {
            id: "AC6",
            name: "Ville calibration",
            limit: secs(120),
            run: ville_calibration,
        },
        Criterion {
            id: "AC7",
            name: "coupling correctness",
            limit: None,
            run: coupling_correctness,
        },
        Criterion {
            id: "AC8",
            name: "growth identity",
            limit: None,
            run: growth_identity,
        },
        Criterion {
            id: "AC9",
            name: "baseline comparison",
            limit: None,
            run: baseline_comparison,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let (ok, detail) = (c.run)();
        let elapsed = start.elapsed();
        let in_time = c.limit.is_none_or(|l| elapsed <= l);
        let pass = ok && in_time;
        if !pass {
            failed += 1;
        }
        let budget = c.limit.map(|l| format!(" / {}s", l.as_secs())).unwrap_or_default();
        println!(
            "[{}] {} {}: {} ({:.2}s{budget})",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
