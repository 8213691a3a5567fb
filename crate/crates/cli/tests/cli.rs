use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rehab_cli::analyze::{diagnose, load_records, Diagnosis};
use rehab_cli::args::{RunOptions, SimulateArgs, WeightsArg};
use rehab_cli::simulate::simulate;
use rehab_core::controller::DEFAULT_ETA;
use rehab_core::session::{AdaptationSign, Phase};

fn rehab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rehab")).args(args).env_remove("REHAB_OUT_DIR").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = rehab(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    rehab(args).status.code().unwrap()
}

/// Data rows of a CSV written by the tool, keyed by header name.
fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# "));
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    let body = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, body)
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let (header, body) = rows(path);
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    body.into_iter().map(|r| r[i].clone()).collect()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in walk(dir) {
        out.push((e.strip_prefix(dir).unwrap().display().to_string(), fs::read(&e).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut v = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            v.extend(walk(&p));
        } else {
            v.push(p);
        }
    }
    v
}

#[test]
fn scenario_schedule_writes_panel_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["simulate", "--schedule", "paper-fig6", "--out", out]);
    let summary = dir.path().join("summary.csv");
    let ia: Vec<f64> = column(&summary, "ia_amplitude_log").iter().map(|v| v.parse().unwrap()).collect();
    // ln 720 / ln(8 pi^4 q) with q = (1-b)^2 + b^2 m^4, and q = 1 for m = 1.
    let oracle = |b: f64, m: f64| {
        let q = if m == 1.0 { 1.0 } else { (1.0 - b).powi(2) + b * b * m.powi(4) };
        720f64.ln() / (8.0 * std::f64::consts::PI.powi(4) * q).ln()
    };
    let expect = [oracle(0.8, 3.0), oracle(0.5, 2.0), oracle(0.1, 1.0)];
    assert_eq!(ia.len(), 3);
    for (got, want) in ia.iter().zip(expect) {
        assert!((got - want).abs() <= 0.02 * want, "{got} vs {want}");
    }
    assert_eq!(column(&summary, "phase"), ["AWING", "PAWING", "PAWING"]);
    for n in 1..=3 {
        assert!(dir.path().join(format!("sessions/session-{n:03}.jsonl")).is_file());
        let trial = dir.path().join(format!("trials/trial-{n:03}.csv"));
        let (header, body) = rows(&trial);
        assert!(header.contains(&"patient_theta_dot_deg_s".to_string()));
        assert!(header.contains(&"avatar_theta_deg".to_string()));
        // 3 repetitions of 301 control ticks.
        assert_eq!(body.len(), 3 * 301);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&["simulate", "--schedule", "converging", "--trials", "4", "--out", d.path().to_str().unwrap()]);
    }
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.len(), 1 + 2 * 4);
    assert_eq!(ta, tb);
}

#[test]
fn fixed_weights_stay_constant() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--schedule", "static", "--trials", "4", "--weights", "fixed:0.2", "--out", dir.path().to_str().unwrap()]);
    let summary = dir.path().join("summary.csv");
    assert_eq!(column(&summary, "alpha_p"), vec!["0.2"; 4]);
    assert_eq!(column(&summary, "alpha_s"), vec!["0.8"; 4]);
    assert_eq!(column(&summary, "phase"), vec!["PAWING"; 4]);
    let alpha = column(&dir.path().join("trials/trial-003.csv"), "alpha_p");
    assert!(alpha.iter().all(|a| a == "0.2"));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rehab"))
        .args(["simulate", "--schedule", "static", "--trials", "1", "--reps", "1"])
        .env("REHAB_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("summary.csv").is_file());
}

#[test]
fn schedule_files_are_accepted_and_bad_ones_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("plan.txt");
    fs::write(&sched, "# m b A T\n2 0.5 60 2\n1 0.1 60 2 # nearly healthy\n").unwrap();
    let out = dir.path().join("out");
    ok(&["simulate", "--schedule", sched.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(column(&out.join("summary.csv"), "amplitude_deg"), ["60", "60"]);
    assert_eq!(column(&out.join("summary.csv"), "patient_m"), ["2", "1"]);

    fs::write(&sched, "2 0.5 60\n").unwrap();
    assert_eq!(code(&["simulate", "--schedule", sched.to_str().unwrap(), "--out", out.to_str().unwrap()]), 3);
    assert_eq!(code(&["simulate", "--schedule", "no-such-schedule", "--out", out.to_str().unwrap()]), 2);
    assert_eq!(code(&["simulate", "--weights", "fixed:1.5", "--out", out.to_str().unwrap()]), 2);
}

#[test]
fn pawing_condition_holds_guidance_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let report = ok(&["condition", "pawing", "--out", dir.path().to_str().unwrap()]);
    let summary = dir.path().join("condition-pawing/summary.csv");
    assert_eq!(column(&summary, "alpha_s"), vec!["0.8"; 8]);
    assert_eq!(column(&summary, "condition"), vec!["pawing"; 8]);
    assert!(report.contains("last 6 trials"), "{report}");
    let window = column(&dir.path().join("condition-pawing/condition-summary.csv"), "window");
    assert_eq!(window, ["6"]);
}

#[test]
fn adaptive_condition_starts_adapting_at_trial_three() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["condition", "adaptive", "--trials", "8", "--out", dir.path().to_str().unwrap()]);
    let summary = dir.path().join("condition-adaptive/summary.csv");
    let adapted = column(&summary, "adapted");
    assert_eq!(adapted[..2], ["false", "false"]);
    assert!(adapted[2..].iter().all(|a| a == "true"));
    let alpha_s = column(&summary, "alpha_s");
    assert_eq!(alpha_s[..2], ["0.5", "0.5"]);
    assert_ne!(alpha_s[2], "0.5");
    assert_eq!(code(&["condition", "adaptive", "--trials", "2", "--out", dir.path().to_str().unwrap()]), 2);
}

#[test]
fn solo_condition_has_no_comparison() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["condition", "solo", "--trials", "4", "--out", dir.path().to_str().unwrap()]);
    let summary = dir.path().join("condition-solo/condition-summary.csv");
    assert_eq!(column(&summary, "p"), ["n/a"]);
    let phases = column(&dir.path().join("condition-solo/summary.csv"), "phase");
    assert_eq!(phases, vec!["AWING"; 4]);
}

#[test]
fn analysis_reproduces_in_memory_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let args = SimulateArgs {
        schedule: "converging".into(),
        trials: 6,
        weights: WeightsArg::Adaptive,
        initial_alpha_p: 0.8,
        run: RunOptions {
            reps: 2,
            eta: DEFAULT_ETA,
            amplitude: 90.0,
            duration: 3.0,
            sign: AdaptationSign::WorkedExample,
            out: dir.path().to_path_buf(),
        },
    };
    let memory = simulate(&args).unwrap();
    let mut out = Vec::new();
    rehab_cli::simulate::run(&args, &mut out).unwrap();
    let loaded = load_records(&[args.run.out.join("sessions")]).unwrap();
    assert_eq!(loaded, memory);
    for r in &loaded {
        let again = r.rescore().unwrap();
        assert_eq!(again.ia.to_bits(), r.ia.to_bits());
    }

    let csv = args.run.out.join("trajectory.csv");
    let report = ok(&["analyze", args.run.out.join("sessions").to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert!(report.contains("diagnosis: stabilized"), "{report}");
    let deltas = column(&csv, "delta_ia_amplitude_log");
    assert_eq!(deltas[0], "");
    for (text, r) in deltas.iter().zip(&memory).skip(1) {
        assert_eq!(text.parse::<f64>().unwrap().to_bits(), r.delta_ia.unwrap().to_bits());
    }
    let alpha: Vec<f64> = column(&csv, "alpha_p").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(alpha, memory.iter().map(|r| r.weights.alpha_p).collect::<Vec<_>>());
    assert_eq!(memory[0].phase, Phase::Awing);
}

#[test]
fn diagnosis_rules() {
    let osc: Vec<f64> = [0.5, 0.7, 0.5, 0.7, 0.5, 0.7].windows(2).map(|w| w[1] - w[0]).collect();
    assert_eq!(diagnose(&osc, 3, 0.05).diagnosis, Diagnosis::Oscillatory);
    assert_eq!(diagnose(&[0.2, 0.01, 0.005, -0.002], 3, 0.05).diagnosis, Diagnosis::Stabilized);
    assert_eq!(diagnose(&[0.1, 0.1, 0.1], 3, 0.05).diagnosis, Diagnosis::NotConverged);
    assert_eq!(diagnose(&[], 3, 0.05).diagnosis, Diagnosis::InsufficientData);
    let c = diagnose(&[0.3, 0.04, -0.03], 2, 0.05);
    assert_eq!(c.window, 2);
    assert!((c.rms - 0.00125f64.sqrt()).abs() < 1e-15);
    assert_eq!(c.diagnosis, Diagnosis::Stabilized);
}

#[test]
fn analyze_rejects_missing_and_corrupt_input() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["analyze"]), 2);
    assert_eq!(code(&["analyze", dir.path().to_str().unwrap()]), 2);
    let bad = dir.path().join("session-001.jsonl");
    fs::write(&bad, "{\"record\":\"format\"}\n").unwrap();
    assert_eq!(code(&["analyze", bad.to_str().unwrap()]), 3);
    assert_eq!(code(&["analyze", dir.path().join("missing.jsonl").to_str().unwrap()]), 3);
}

#[test]
fn serve_reports_an_occupied_port() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = rehab(&["serve", "--port", &port]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gateway startup failed"));
}

#[test]
fn serve_rejects_a_zero_tick() {
    assert_eq!(code(&["serve", "--port", "0", "--tick-ms", "0"]), 2);
}
