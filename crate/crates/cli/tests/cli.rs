use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn chatter(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chatter")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ball_theta_inf(r: f64) -> f64 {
    let (g, x0): (f64, f64) = (9.8, 2.0);
    let theta1 = (2.0 * x0 / g).sqrt();
    let v1 = g * theta1;
    theta1 + 2.0 * v1 / g * r / (1.0 - r)
}

#[test]
fn simulate_example1_reports_chattering() {
    let dir = TempDir::new().unwrap();
    let o = chatter(&["simulate", "--model", "example1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["schema"], 1);
    assert_eq!(report["verdict"], "chattering");
    assert_eq!(report["termination"], "zeno_detected");

    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("t,x1,x2,segment,flag"));
    let impact_rows = trace.lines().filter(|l| l.ends_with(",impact")).count();
    assert_eq!(impact_rows, 2 * report["impact_count"].as_u64().unwrap() as usize);
    let times: Vec<f64> = trace.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn bouncing_ball_theta_inf_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let o = chatter(&["simulate", "--model", "bouncing_ball", "--r", "0.5", "--x0", "2"], dir.path());
    assert!(o.status.success());
    let report = json(&dir.path().join("report.json"));
    let theta = report["theta_inf_estimate"].as_f64().unwrap();
    assert!((theta - ball_theta_inf(0.5)).abs() < 1e-6, "{theta}");
    assert!((theta - 1.9167).abs() < 1e-4);
}

#[test]
fn inline_field_from_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("ball.toml");
    fs::write(&cfg, "field = \"-9.8\"\nguard = \"fixed\"\nphi = 0\nr = 0.5\nx0 = 2\nformat = \"json\"\n").unwrap();
    let o = chatter(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["model"], "custom");
    assert!((report["theta_inf_estimate"].as_f64().unwrap() - ball_theta_inf(0.5)).abs() < 1e-6);
    let trace = json(&dir.path().join("trace.json"));
    assert_eq!(trace[0]["flag"], "apex");
}

#[test]
fn coupled_trace_shows_the_driven_pair_moving_during_chatter() {
    let dir = TempDir::new().unwrap();
    let o = chatter(&["simulate", "--model", "coupled_chatter"], dir.path());
    assert!(o.status.success());
    let report = json(&dir.path().join("report.json"));
    let first = report["impact_times"][0].as_f64().unwrap();
    let theta_inf = report["theta_inf_estimate"].as_f64().unwrap();
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("t,x1,x2,x3,x4,segment,flag"));
    let x3: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap_or(f64::NAN)).collect::<Vec<_>>())
        .filter(|row| row[0] > first && row[0] < theta_inf)
        .map(|row| row[3])
        .collect();
    let (lo, hi) = x3.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi - lo > 1.0, "x3 range {lo}..{hi}");
}

#[test]
#[allow(clippy::approx_constant)] // 6.28 is the stated bound, not tau
fn check_exit_codes_follow_the_verdict() {
    let dir = TempDir::new().unwrap();
    let o = chatter(&["check", "--model", "example1"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let cert: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(cert["schema"], 1);
    assert!((cert["inequality"]["lhs"].as_f64().unwrap() - 6.28).abs() < 0.01);

    let o = chatter(&["check", "--model", "moon_holmes_autonomous"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let cert: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((cert["bounds"]["m_est"].as_f64().unwrap() - 0.231).abs() < 0.001);

    let o = chatter(&["check", "--model", "moon_holmes_autonomous", "--m", "0.331"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let cert: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((cert["inequality"]["lhs"].as_f64().unwrap() - 2.91).abs() < 0.01);
    assert_eq!(cert["bounds_overridden"], true);
}

#[test]
fn check_an_inline_field_needs_a_box() {
    let dir = TempDir::new().unwrap();
    let base = ["check", "--field", "-cos(v) - x^3", "--r", "0.8", "--x0", "2.1", "--phi", "2"];
    let o = chatter(&base, dir.path());
    assert_eq!(o.status.code(), Some(2));
    let mut args = base.to_vec();
    args.extend(["--h-low", "2", "--h", "2.5", "--h-bar", "7"]);
    let o = chatter(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = TempDir::new().unwrap();
    for args in [
        vec!["simulate", "--model", "example1", "--r", "1.2"],
        vec!["simulate", "--model", "no_such_model"],
        vec!["simulate"],
        vec!["simulate", "--model", "example1", "--set", "omega=1"],
        vec!["simulate", "--field", "2x", "--r", "0.5", "--x0", "1"],
        vec!["sweep", "--model", "bouncing_ball", "--param", "r", "--values"],
        vec!["control", "--model", "example1"],
        vec!["frobnicate"],
    ] {
        let o = chatter(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn sweep_restitution_matches_closed_form_per_value() {
    let dir = TempDir::new().unwrap();
    let o = chatter(&["sweep", "--model", "bouncing_ball", "--param", "r", "--values", "0.5,0.2,0.1"], dir.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "theta_inf_estimate").unwrap();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let rs: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(rs, vec![0.1, 0.2, 0.5]);
    for row in &rows {
        let r: f64 = row[0].parse().unwrap();
        let theta: f64 = row[col].parse().unwrap();
        assert!((theta - ball_theta_inf(r)).abs() < 1e-6, "r = {r}: {theta}");
    }
    for i in 0..3 {
        assert_eq!(json(&dir.path().join(format!("run_{i:03}.json")))["status"], "ok");
    }
}

#[test]
fn pyragas_sweep_gives_periodic_rows() {
    let dir = TempDir::new().unwrap();
    let o = chatter(&["sweep", "--model", "pyragas_example1", "--param", "x1_0", "--values", "2.5,3,5,10"], dir.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let class = header.iter().position(|h| *h == "classification").unwrap();
    let period = header.iter().position(|h| *h == "period").unwrap();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert_eq!(row[class], "periodic");
        let t: f64 = row[period].parse().unwrap();
        assert!((t - 1.22).abs() < 0.05);
    }
}

#[test]
fn control_classifies_and_zero_gain_matches_simulate() {
    let dir = TempDir::new().unwrap();
    let o = chatter(&["control", "--model", "pyragas_example1", "--x0", "3"], &dir.path().join("p"));
    assert!(o.status.success());
    let outcome = json(&dir.path().join("p/outcome.json"));
    assert_eq!(outcome["outcome"]["classification"]["kind"], "periodic");
    let t = outcome["outcome"]["classification"]["period"].as_f64().unwrap();
    assert!((t - 1.22).abs() < 0.05);

    let o = chatter(&["control", "--model", "pyragas_example1", "--set", "x1_0=2.1"], &dir.path().join("c"));
    assert!(o.status.success());
    assert_eq!(json(&dir.path().join("c/outcome.json"))["outcome"]["classification"]["kind"], "chattering");

    let zero = dir.path().join("zero");
    let plain = dir.path().join("plain");
    let o = chatter(&["control", "--model", "example1", "--control_C", "0", "--control_tau", "1"], &zero);
    assert!(o.status.success());
    assert!(chatter(&["simulate", "--model", "example1"], &plain).status.success());
    for f in ["report.json", "trace.csv"] {
        assert_eq!(fs::read(zero.join(f)).unwrap(), fs::read(plain.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    for model in ["example1", "vibrating_table", "pyragas_example1"] {
        let a = dir.path().join(format!("{model}_a"));
        let b = dir.path().join(format!("{model}_b"));
        assert!(chatter(&["simulate", "--model", model], &a).status.success());
        assert!(chatter(&["simulate", "--model", model], &b).status.success());
        for f in ["report.json", "trace.csv"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{model}/{f}");
        }
    }
}

#[test]
fn truncated_runs_respect_the_cap() {
    let dir = TempDir::new().unwrap();
    let o = chatter(&["simulate", "--model", "bouncing_ball", "--r", "0.2", "--impact_cap", "auto"], dir.path());
    assert!(o.status.success());
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["impact_count"], 5);
    assert_eq!(report["impact_cap"], 5);
    assert_eq!(report["termination"], "impact_cap");
}

#[test]
fn list_models_names_the_catalog() {
    let dir = TempDir::new().unwrap();
    let o = chatter(&["list-models", "--json"], dir.path());
    assert!(o.status.success());
    let models: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let names: Vec<&str> = models.as_array().unwrap().iter().map(|m| m["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"example1") && names.contains(&"pyragas_example1"));
    assert_eq!(names.len(), 7);
}
