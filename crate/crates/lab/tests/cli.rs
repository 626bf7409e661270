use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn jobmarket(args: &[&str], data: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jobmarket"))
        .args(args)
        .env_remove("JOBMARKET_DATA_DIR")
        .arg("--data-dir")
        .arg(data)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_is_deterministic_and_replays() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = ok(&jobmarket(&["simulate", "--managers", "78", "--seed", "7"], d.path()));
        assert!(out.starts_with("3120 reports from 78 managers"), "{out}");
    }
    let reports = fs::read_to_string(a.path().join("reports.csv")).unwrap();
    assert_eq!(reports.lines().count(), 3121);

    for name in ["pool.csv", "outcomes.csv", "reports.csv", "latents.csv", "payoffs.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let logs = files(&a.path().join("logs"));
    assert_eq!(logs, files(&b.path().join("logs")));
    assert!(logs.len() >= 2);
    for name in &logs {
        assert_eq!(
            fs::read(a.path().join("logs").join(name)).unwrap(),
            fs::read(b.path().join("logs").join(name)).unwrap(),
            "{name}"
        );
    }

    let replayed = a.path().join("replayed.csv");
    let mut args = vec!["replay".to_string()];
    args.extend(logs.iter().map(|n| a.path().join("logs").join(n).display().to_string()));
    args.extend(["--payoffs".into(), replayed.display().to_string()]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = ok(&jobmarket(&args, a.path()));
    assert!(out.contains("finished"));
    assert_eq!(fs::read(&replayed).unwrap(), fs::read(a.path().join("payoffs.csv")).unwrap());
}

#[test]
fn analyze_and_grid_write_their_tables() {
    let d = tempfile::tempdir().unwrap();
    ok(&jobmarket(&["simulate", "--managers", "40", "--seed", "3", "--constant-reporters", "4"], d.path()));

    let out = ok(&jobmarket(&["analyze", "--se", "cluster"], d.path()));
    assert!(out.contains("managers kept 36, excluded 4"), "{out}");
    let analysis = d.path().join("analysis");
    for name in ["exclusions.csv", "fits.csv", "fit_summary.csv", "tests.csv", "rank_matrix_C.csv", "value_rank_matrix_NC.csv"] {
        assert!(analysis.join(name).is_file(), "{name}");
    }

    let out = ok(&jobmarket(&["grid", "--job", "c"], d.path()));
    assert!(out.contains("double difference positive at"), "{out}");
    let grid = fs::read_to_string(d.path().join("grid").join("grid_C.csv")).unwrap();
    assert_eq!(grid.lines().count(), 12);
    assert!(grid.starts_with("sent\\score,4,5,6,7,8,9,10\n"));
    assert!(d.path().join("grid").join("double_diff_C.csv").is_file());
    assert!(!d.path().join("grid").join("grid_NC.csv").exists());
}

#[test]
fn validate_passes_with_defaults() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(&jobmarket(&["validate"], d.path()));
    assert!(!out.contains("FAIL"));
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}

#[test]
fn config_file_drives_validate_and_simulate() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    let conflict = "[job_specs.conflict]\njob_id = \"C\"\nrate_correct_worker = 10\nrate_correct_manager = 10\n\
                    rate_skip_worker = 12\nrate_skip_manager = 0\nnum_problems = 10\nseconds_per_attempt = 6\n";
    fs::write(&cfg, format!("seed = 5\n[study]\nmanagers = 4\n{conflict}")).unwrap();
    let out = jobmarket(&["validate", "--config", cfg.to_str().unwrap()], d.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL payoff_enumeration"));

    fs::write(&cfg, "seed = 5\n[study]\nmanagers = 4\n").unwrap();
    let out = ok(&jobmarket(&["simulate", "--config", cfg.to_str().unwrap()], d.path()));
    assert!(out.starts_with("160 reports from 4 managers"), "{out}");
}

#[test]
fn bad_input_is_reported() {
    let d = tempfile::tempdir().unwrap();
    let out = jobmarket(&["simulate", "--bogus"], d.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = jobmarket(&["analyze"], d.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));

    let log = d.path().join("broken.jsonl");
    fs::write(&log, "not an event\n").unwrap();
    let out = jobmarket(&["replay", log.to_str().unwrap()], d.path());
    assert_eq!(out.status.code(), Some(1));
}
