use std::path::Path;
use std::process::{Command, Output};

use ris_mimo::experiment::{read_matrix, CSV_HEADER};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ris-mimo"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// CSV text with the nondeterministic `wall_ms` column removed.
fn without_wall_time(csv: &str) -> String {
    let col = CSV_HEADER.split(',').position(|c| c == "wall_ms").unwrap();
    csv.lines()
        .map(|line| {
            let mut cells: Vec<&str> = line.split(',').collect();
            cells.remove(col);
            cells.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn rate_writes_csv_with_exact_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["rate", "--trials", "50", "--out", "r"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("r/rate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER);
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 10);
    assert_eq!(row[2], "uniform_random");
    assert_eq!(row[9], "ok");
    assert!(dir.path().join("r/rate.json").exists());
}

#[test]
fn trials_zero_leaves_mc_cells_empty() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["rate", "--trials", "0", "--out", "r"]);
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(dir.path().join("r/rate.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert!(!row[3].is_empty());
    assert!(row[4].is_empty() && row[5].is_empty());
}

#[test]
fn negligible_power_gives_zero_rate() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("low.toml"), "[power]\np_dbm = -100.0\n").unwrap();
    let out = run(
        dir.path(),
        &["rate", "--config", "low.toml", "--trials", "20", "--out", "r"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("r/rate.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let analytic: f64 = row[3].parse().unwrap();
    let mc: f64 = row[4].parse().unwrap();
    assert!((0.0..1e-3).contains(&analytic), "{analytic}");
    assert!((0.0..1e-3).contains(&mc), "{mc}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[dims]\nn = 0\n").unwrap();
    let out = run(dir.path(), &["rate", "--config", "bad.toml"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dims.n"));

    std::fs::write(dir.path().join("typo.toml"), "[dims]\nnn = 4\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["rate", "--config", "typo.toml"])), 2);
    assert_eq!(code(&run(dir.path(), &["rate", "--config", "missing.toml"])), 2);
    assert_eq!(code(&run(dir.path(), &["rate", "--scheme", "best"])), 2);
    assert_eq!(code(&run(dir.path(), &["sweep", "--sweep", "power_dbm=10,0"])), 2);
    assert_eq!(code(&run(dir.path(), &["sweep", "--sweep", "height=1,2"])), 2);
    assert_eq!(code(&run(dir.path(), &["bogus"])), 2);
}

#[test]
fn validate_passes_on_reference_and_fails_on_fault() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["validate", "--trials", "200", "--out", "v"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
    assert!(dir.path().join("v/validate.json").exists());

    std::fs::write(dir.path().join("fault.toml"), "[faults]\nreceive_trace_scale = 1.3\n").unwrap();
    let out = run(
        dir.path(),
        &["validate", "--config", "fault.toml", "--trials", "0", "--out", "f"],
    );
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL normalization"));
}

#[test]
fn optimize_persists_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["optimize", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("o");
    for f in [
        "q.txt",
        "q_eigenvalues.txt",
        "q_eigenvectors.txt",
        "theta.txt",
        "trace.csv",
        "optimize.json",
    ] {
        assert!(o.join(f).exists(), "{f}");
    }
    let q = read_matrix(&o.join("q.txt")).unwrap();
    assert_eq!(q.shape(), (8, 8));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(o.join("optimize.json")).unwrap()).unwrap();
    assert_eq!(summary["theta_relevant"], true);
    let theta = std::fs::read_to_string(o.join("theta.txt")).unwrap();
    assert_eq!(theta.lines().count(), 8);
}

#[test]
fn optimize_flags_irrelevant_phases_without_ris() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bare.toml"), "[links]\nris = false\n").unwrap();
    let out = run(dir.path(), &["optimize", "--config", "bare.toml", "--out", "o"]);
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/optimize.json")).unwrap()).unwrap();
    assert_eq!(summary["theta_relevant"], false);
}

#[test]
fn sweep_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = |workers: &'static str, out: &'static str| {
        vec![
            "sweep",
            "--sweep",
            "power_dbm=0,10,20",
            "--scheme",
            "optimized,uniform_random,no_ris",
            "--trials",
            "100",
            "--seed",
            "7",
            "--workers",
            workers,
            "--out",
            out,
        ]
    };
    assert_eq!(code(&run(dir.path(), &args("1", "a"))), 0);
    assert_eq!(code(&run(dir.path(), &args("4", "b"))), 0);
    let a = std::fs::read_to_string(dir.path().join("a/sweep.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b/sweep.csv")).unwrap();
    assert_eq!(a.lines().count(), 1 + 9);
    assert_eq!(a.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(without_wall_time(&a), without_wall_time(&b));

    // Rows follow sweep order, schemes in the order requested.
    let keys: Vec<(String, String)> = a
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[1].to_string(), c[2].to_string())
        })
        .collect();
    assert_eq!(keys[0], ("0.0".into(), "optimized".into()));
    assert_eq!(keys[8], ("20.0".into(), "no_ris".into()));

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/sweep.json")).unwrap()).unwrap();
    assert_eq!(meta["sweep_unit"], "dBm");
    assert_eq!(meta["schemes"].as_array().unwrap().len(), 3);
}

#[test]
fn optimized_never_below_uniform_in_power_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "sweep",
            "--sweep",
            "power_dbm=0,5,10,15,20",
            "--scheme",
            "optimized,uniform_random",
            "--trials",
            "0",
            "--out",
            "s",
        ],
    );
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    let rates: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    for pair in rates.chunks(2) {
        assert!(pair[0] >= pair[1], "{pair:?}");
    }
}
