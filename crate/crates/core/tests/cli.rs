use std::path::Path;
use std::process::{Command, Output};

use windscen::timeseries::{load_panel, FarmRegistry, HorizonGrid};

const CONFIG: &str = r#"
seed = 5

[horizon]
n_tau = 6

[windows]
regression_days = 10
residual_days = 20

[copula]
s_max = 200

[metrics]
eval_days = 1
scenarios = 30

[synth]
days = 32

[synth.oracle]
n_farms = 3
"#;

fn windscen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_windscen"))
        .current_dir(dir)
        .arg("--config")
        .arg("run.toml")
        .args(args)
        .env_remove("WINDSCEN_SEED")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = windscen(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    dir
}

/// Rows of a CSV written by the tool, after its provenance line; first row is the header.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# "), "{}", path.display());
    lines.map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

fn partials(dir: &Path) -> Vec<String> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "partial") {
                found.push(p.display().to_string());
            }
        }
    }
    found
}

#[test]
fn synth_output_loads_without_warnings() {
    let dir = workspace();
    ok(dir.path(), &["synth"]);
    let d = dir.path();
    let registry = FarmRegistry::load(&d.join("data/registry.csv")).unwrap();
    assert_eq!(registry.len(), 3);
    let panel = load_panel(&d.join("data/power.csv"), &d.join("data/forecast.csv"), &registry, HorizonGrid::new(6)).unwrap();
    assert_eq!(panel.warnings().total(), 0);
    assert_eq!(panel.len(), 32 * 288);
    let truth: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("out/truth.json")).unwrap()).unwrap();
    assert!(truth.get("provenance").is_some());
}

#[test]
fn generate_writes_consistent_scenario_files() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["synth"]);
    ok(d, &["train"]);
    ok(d, &["generate"]);

    let farm = rows(&d.join("out/scenarios.csv"));
    assert_eq!(farm[0].join(","), "issue_time,scenario,farm_id,horizon_steps,power_mw");
    assert_eq!(farm.len() - 1, 15 * 3 * 6);
    let ids: std::collections::BTreeSet<&str> = farm[1..].iter().map(|r| r[2].as_str()).collect();
    assert_eq!(ids.len(), 3);
    for id in &ids {
        let n: std::collections::BTreeSet<&str> =
            farm[1..].iter().filter(|r| r[2] == *id).map(|r| r[1].as_str()).collect();
        assert_eq!(n.len(), 15);
    }

    let agg = rows(&d.join("out/scenarios_aggregate.csv"));
    assert_eq!(agg[0].join(","), "issue_time,scenario,horizon_steps,power_mw");
    assert_eq!(agg.len() - 1, 15 * 6);
    for r in &agg[1..] {
        let sum: f64 = farm[1..]
            .iter()
            .filter(|f| f[1] == r[1] && f[3] == r[2])
            .map(|f| f[4].parse::<f64>().unwrap())
            .sum();
        assert_eq!(sum, r[3].parse::<f64>().unwrap(), "scenario {} horizon {}", r[1], r[2]);
    }

    let point = rows(&d.join("out/point_forecast.csv"));
    assert_eq!(point[0].join(","), "issue_time,farm_id,horizon_steps,power_mw,status");
    assert_eq!(point.len() - 1, 3 * 6 + 6);
    assert!(point[1..].iter().all(|r| r[3].parse::<f64>().unwrap().is_finite()));
    assert_eq!(point[1..].iter().filter(|r| r[1] == "AGGREGATE").count(), 6);
}

#[test]
fn zero_scenarios_is_rejected() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["synth"]);
    ok(d, &["train"]);
    let out = windscen(d, &["generate", "--scenarios", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--scenarios"));
    assert!(!d.join("out/scenarios.csv").exists());
}

#[test]
fn truncated_power_file_fails_cleanly() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["synth"]);
    let power = d.join("data/power.csv");
    let text = std::fs::read_to_string(&power).unwrap();
    let cut = text.trim_end().rfind(',').unwrap();
    std::fs::write(&power, &text[..cut]).unwrap();
    let out = windscen(d, &["train"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: ") && err.contains("power.csv"), "{err}");
    assert!(!d.join("out/model.bundle").exists());
    assert!(partials(d).is_empty(), "{:?}", partials(d));
}

#[test]
fn removed_power_rows_are_reported_missing() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["synth"]);
    let power = d.join("data/power.csv");
    let text = std::fs::read_to_string(&power).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let removed = [1000, 1001, 1002, 5000, 9000, 20_000, 20_003];
    let kept: Vec<&str> = lines
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed.contains(i))
        .map(|(_, l)| *l)
        .collect();
    std::fs::write(&power, kept.join("\n") + "\n").unwrap();
    ok(d, &["train"]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("out/training_report.json")).unwrap()).unwrap();
    assert_eq!(report["missing_power_cells"], removed.len());
}

#[test]
fn evaluate_writes_finite_tables() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["synth"]);
    ok(d, &["train"]);
    ok(d, &["evaluate"]);
    let out = d.join("out");
    let headers = [
        ("rmse.csv", "horizon_steps,n,model_rmse,nwp_rmse"),
        ("reliability.csv", "level,observed,gaussian_observed"),
        ("rank_scatter.csv", "source,r1,r2"),
        ("scores.csv", "issue_time,energy,integrated_distance,variogram"),
        ("scores_aggregate_only.csv", "issue_time,energy,integrated_distance,variogram"),
        ("representations.csv", "mode,statistic,energy,integrated_distance,variogram"),
    ];
    for (name, header) in headers {
        let r = rows(&out.join(name));
        assert_eq!(r[0].join(","), header, "{name}");
        assert!(r.len() > 1, "{name}");
        for row in &r[1..] {
            for cell in row {
                if let Ok(v) = cell.parse::<f64>() {
                    assert!(v.is_finite(), "{name}: {row:?}");
                }
            }
        }
    }
    assert_eq!(rows(&out.join("reliability.csv")).len() - 1, 19);
    assert_eq!(rows(&out.join("rmse.csv")).len() - 1, 6);
    let scores = rows(&out.join("scores.csv"));
    assert_eq!(scores.len(), rows(&out.join("scores_aggregate_only.csv")).len());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("evaluation_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["issues"], scores.len() - 1);
}

#[test]
fn seed_comes_from_the_environment() {
    let run = |seed: Option<&str>| {
        let dir = workspace();
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_windscen"));
        cmd.current_dir(dir.path()).args(["--config", "run.toml", "synth"]);
        match seed {
            Some(s) => cmd.env("WINDSCEN_SEED", s),
            None => cmd.env_remove("WINDSCEN_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        std::fs::read_to_string(dir.path().join("data/power.csv")).unwrap()
    };
    let base = run(None);
    assert_eq!(run(Some("5")), base);
    assert_ne!(run(Some("6")), base);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = workspace();
    std::fs::write(dir.path().join("run.toml"), "[windows]\nregresion_days = 3\n").unwrap();
    let out = windscen(dir.path(), &["synth"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("regresion_days"));
}
