use std::fs;
use std::path::Path;
use std::process::Command;

use ewm_cli::{parse_alpha_grid, round12, run_with};
use ewm_core::{batch_detect, optimal_evalue, Decision, NeighborhoodSpec};
use serde_json::Value;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["ewm".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_with(&argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn ok_json(args: &[&str]) -> Value {
    let (code, out, err) = run(args);
    assert_eq!(code, 0, "{err}");
    serde_json::from_str(&out).unwrap()
}

fn read_pairs(path: &Path) -> Vec<(usize, usize)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<usize> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (f[1], f[2])
        })
        .collect()
}

#[test]
fn jstar_report() {
    let r = ok_json(&["jstar", "--anchor", "[0.5,0.5]", "--delta", "0.1"]);
    assert!((r["entropy"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-11);
    assert!((r["jstar"].as_f64().unwrap() - 0.494632).abs() < 1e-6);
    assert!((r["inverse_jstar"].as_f64().unwrap() - 2.02170).abs() < 1e-5);
}

#[test]
fn generate_then_detect_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("s.csv");
    let stream_s = stream.to_str().unwrap();
    for (anchor, delta, policy, alpha) in [
        ("[0.5,0.5]", "0.1", "fixed:0,1", 0.02),
        ("[0.4,0.3,0.3]", "0.1", "round-robin", 1e-6),
        ("[0.25,0.25,0.25,0.25]", "0.2", "greedy", 1e-3),
    ] {
        let (code, _, err) = run(&[
            "generate", "--anchor", anchor, "--delta", delta, "--policy", policy, "--steps", "400", "--seed", "5",
            "--out", stream_s,
        ]);
        assert_eq!(code, 0, "{err}");
        let report = ok_json(&[
            "detect",
            "--anchor",
            anchor,
            "--delta",
            delta,
            "--alpha",
            &alpha.to_string(),
            "--stream",
            stream_s,
        ]);

        let weights: Vec<f64> = serde_json::from_str(anchor).unwrap();
        let spec = NeighborhoodSpec::from_weights(&weights, delta.parse().unwrap()).unwrap();
        let pairs = read_pairs(&stream);
        assert_eq!(pairs.len(), 400);
        let lib = batch_detect(&optimal_evalue(&spec), alpha, &pairs, pairs.len()).unwrap();
        assert_eq!(lib.decision, Decision::Rejected);
        assert_eq!(report["decision"], "rejected");
        assert_eq!(report["stop_step"].as_u64(), lib.stop_step);
        assert_eq!(report["steps"].as_u64(), Some(lib.steps));
        assert_eq!(report["wealth"].as_f64(), Some(round12(lib.wealth)));
    }
}

#[test]
fn state_resume_equals_single_pass() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let spec = ["--anchor", "[0.5,0.5]", "--delta", "0.1"];
    let mut gen = vec!["generate", "--steps", "60", "--seed", "9", "--out"];
    let full = p("full.csv");
    gen.push(&full);
    gen.extend(spec);
    assert_eq!(run(&gen).0, 0);

    // Second half of the stream as its own file.
    let text = fs::read_to_string(&full).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let tail = p("tail.csv");
    fs::write(&tail, format!("{}\n{}\n", lines[0], lines[5..].join("\n"))).unwrap();

    let state = p("state.json");
    let mut a = vec![
        "detect",
        "--alpha",
        "1e-9",
        "--stream",
        &full,
        "--budget",
        "4",
        "--state-out",
        &state,
    ];
    a.extend(spec);
    let first = ok_json(&a);
    assert_eq!(first["decision"], "undecided");
    assert_eq!(first["steps"], 4);

    let mut b = vec!["detect", "--stream", &tail, "--state-in", &state];
    b.extend(spec);
    let resumed = ok_json(&b);
    let mut c = vec!["detect", "--alpha", "1e-9", "--stream", &full];
    c.extend(spec);
    let single = ok_json(&c);
    assert_eq!(resumed, single);

    // Baseline state resumes the same way.
    let bstate = p("bstate.json");
    let mut a = vec![
        "detect", "--method", "baseline", "--alpha", "1e-3", "--stream", &full, "--budget", "4",
    ];
    a.extend(["--state-out", &bstate]);
    a.extend(spec);
    assert_eq!(run(&a).0, 0);
    let mut b = vec![
        "detect",
        "--method",
        "baseline",
        "--stream",
        &tail,
        "--state-in",
        &bstate,
    ];
    b.extend(spec);
    let mut c = vec!["detect", "--method", "baseline", "--alpha", "1e-3", "--stream", &full];
    c.extend(spec);
    assert_eq!(ok_json(&b), ok_json(&c));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let trace1 = dir.path().join("t1.csv");
    let trace2 = dir.path().join("t2.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "sweep-tau",
            "--anchor",
            "[0.3,0.7]",
            "--delta",
            "0.1",
            "--alphas",
            "log:1e-2:1e-8:4",
            "--trials",
            "200",
            "--seed",
            "3",
        ],
        vec![
            "calibrate-null",
            "--anchor",
            "[0.4,0.3,0.3]",
            "--delta",
            "0.1",
            "--trials",
            "300",
            "--seed",
            "3",
        ],
        vec![
            "generate",
            "--anchor",
            "[0.4,0.3,0.3]",
            "--delta",
            "0.1",
            "--policy",
            "random",
            "--steps",
            "50",
        ],
        vec![
            "audit",
            "--anchor",
            "[0.5,0.5]",
            "--delta",
            "0.2",
            "--perturbations",
            "20",
        ],
        vec!["jstar", "--anchor", "[0.2,0.3,0.5]", "--delta", "0.05"],
        vec![
            "decompose",
            "--anchor",
            "[0.2,0.3,0.5]",
            "--delta",
            "0.05",
            "--target",
            "[0.21,0.28,0.51]",
        ],
    ];
    for args in cases {
        let (c1, a, e1) = run(&args);
        let (c2, b, _) = run(&args);
        assert_eq!((c1, c2), (0, 0), "{e1}");
        assert!(!a.is_empty());
        assert_eq!(a, b, "{args:?}");
    }
    for t in [&trace1, &trace2] {
        let (code, _, _) = run(&[
            "maxmin2",
            "--p",
            "0.2",
            "--delta",
            "0.01",
            "--trace",
            t.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    assert_eq!(fs::read(&trace1).unwrap(), fs::read(&trace2).unwrap());
    let trace = fs::read_to_string(&trace1).unwrap();
    assert!(trace.starts_with("refinement,r00,r11,objective\n"));
    assert_eq!(trace.lines().count(), 6);
    assert!(!trace.contains('\r'));
}

#[test]
fn thread_count_does_not_change_output() {
    let base = [
        "sweep-tau",
        "--anchor",
        "[0.5,0.5]",
        "--delta",
        "0.2",
        "--alphas",
        "0.1,0.01",
        "--trials",
        "500",
    ];
    let mut one = base.to_vec();
    one.extend(["--threads", "1"]);
    let mut three = base.to_vec();
    three.extend(["--threads", "3"]);
    assert_eq!(run(&one).1, run(&three).1);
}

#[test]
fn sweep_csv_shape() {
    let (code, out, _) = run(&[
        "sweep-tau",
        "--anchor",
        "[0.5,0.5]",
        "--delta",
        "0.1",
        "--alphas",
        "log:1e-2:1e-20:5",
        "--trials",
        "100",
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "alpha,log_inv_alpha,mean_tau,std_err,ratio,censored_count");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("0.01,"));
    assert!(lines[5].starts_with("1e-20,"));
}

#[test]
fn anchor_sources() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("a.json");
    fs::write(&file, r#"{"anchor": [0.2, 0.8], "delta": 0.1}"#).unwrap();
    let f = file.to_str().unwrap();
    let from_file = ok_json(&["jstar", "--anchor-file", f]);
    let as_path = ok_json(&["jstar", "--anchor", f]);
    let inline = ok_json(&["jstar", "--anchor", "[0.2,0.8]", "--delta", "0.1"]);
    assert_eq!(from_file, inline);
    assert_eq!(as_path, inline);
    // Inline wins over the file; --delta wins over the file's delta.
    let both = ok_json(&["jstar", "--anchor", "[0.5,0.5]", "--anchor-file", f]);
    assert_eq!(both["entropy"].as_f64(), Some(round12(2f64.ln())));
    let override_delta = ok_json(&["jstar", "--anchor-file", f, "--delta", "0.05"]);
    assert_eq!(override_delta["delta"].as_f64(), Some(0.05));
}

#[test]
fn usage_and_runtime_errors() {
    assert_eq!(run(&["frobnicate"]).0, 2);
    assert_eq!(
        run(&["jstar", "--anchor", "[0.5,0.5]", "--delta", "0.1", "--bogus"]).0,
        2
    );
    assert_eq!(run(&["jstar", "--anchor", "[0.5,0.5]"]).0, 2);
    assert_eq!(run(&["jstar", "--anchor", "[0.5,-0.5]", "--delta", "0.1"]).0, 2);
    assert_eq!(run(&["jstar", "--anchor", "[0.5,0.5]", "--delta", "0.6"]).0, 2);
    assert_eq!(
        run(&[
            "sweep-tau",
            "--anchor",
            "[0.5,0.5]",
            "--delta",
            "0.1",
            "--alphas",
            "log:1e-2:1e-120:1"
        ])
        .0,
        2
    );
    assert_eq!(
        run(&[
            "generate",
            "--anchor",
            "[0.5,0.5]",
            "--delta",
            "0.1",
            "--steps",
            "5",
            "--policy",
            "fixed:0,7"
        ])
        .0,
        2
    );
    let (code, _, err) = run(&[
        "detect",
        "--anchor",
        "[0.5,0.5]",
        "--delta",
        "0.1",
        "--alpha",
        "0.05",
        "--stream",
        "/nonexistent/s.csv",
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("/nonexistent/s.csv"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "step,v,s\n1,0,5\n").unwrap();
    let (code, _, _) = run(&[
        "detect",
        "--anchor",
        "[0.5,0.5]",
        "--delta",
        "0.1",
        "--alpha",
        "0.05",
        "--stream",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("sweep-tau"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_ewm");
    let out = Command::new(bin)
        .args(["jstar", "--anchor", "[0.5,0.5]", "--delta", "0.1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["jstar"].is_number());
    let out = Command::new(bin).arg("--no-such-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(bin)
        .args([
            "detect",
            "--anchor",
            "[0.5,0.5]",
            "--delta",
            "0.1",
            "--alpha",
            "0.1",
            "--stream",
            "/nonexistent",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(bin)
        .env("EWM_THREADS", "2")
        .args([
            "calibrate-null",
            "--anchor",
            "[0.5,0.5]",
            "--delta",
            "0.1",
            "--trials",
            "50",
            "--alphas",
            "0.1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .starts_with("alpha,trials,horizon,false_positives,rate\n0.1,50,"));
}

#[test]
fn alpha_grid_examples() {
    let g = parse_alpha_grid("log:1e-2:1e-120:30").unwrap().0;
    assert_eq!((g.len(), g[0], g[29]), (30, 1e-2, 1e-120));
    assert_eq!(parse_alpha_grid("0.1,0.05,0.02").unwrap().0, vec![0.1, 0.05, 0.02]);
    assert!(parse_alpha_grid("log:1e-2:1e-120:1").is_err());
}
