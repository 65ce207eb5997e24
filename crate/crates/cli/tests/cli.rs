use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn smoke_cfg() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.cfg")
}

fn autocw(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autocw"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn autocw")
}

fn run_all(out: &Path, extra: &[&str]) {
    let cfg = smoke_cfg();
    let mut args = vec!["all", "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = autocw(&args, out);
    assert!(
        o.status.success(),
        "autocw all failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn csv_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn autocw_csv_has_one_row_per_length() {
    let dir = TempDir::new().unwrap();
    run_all(dir.path(), &["--set", "search.cw_max=7"]);
    for cond in ["t60_0000ms", "t60_0500ms"] {
        let csv = fs::read_to_string(dir.path().join(cond).join("autocw/search.csv")).unwrap();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 7 - 3 + 1, "{cond}: {csv}");
        let lens: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
        assert_eq!(lens, ["3", "4", "5", "6", "7"]);
    }
    let summary = fs::read_to_string(dir.path().join("report/summary.txt")).unwrap();
    assert!(summary.contains("AutoCW best"), "{summary}");
}

#[test]
fn report_without_artifacts_is_missing_input() {
    let dir = TempDir::new().unwrap();
    let cfg = smoke_cfg();
    let o = autocw(&["report", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("missing inputs"), "{err}");
    assert!(err.contains("profile.csv"), "{err}");
}

#[test]
fn rerun_is_a_no_op() {
    let dir = TempDir::new().unwrap();
    run_all(dir.path(), &[]);
    let log_before = fs::read_to_string(dir.path().join("run.log")).unwrap();
    let files = csv_files(dir.path());
    let before: Vec<Vec<u8>> = files
        .iter()
        .map(|f| fs::read(dir.path().join(f)).unwrap())
        .collect();

    run_all(dir.path(), &[]);
    let log_after = fs::read_to_string(dir.path().join("run.log")).unwrap();
    assert_eq!(log_before, log_after);
    assert_eq!(files, csv_files(dir.path()));
    for (f, b) in files.iter().zip(&before) {
        assert_eq!(&fs::read(dir.path().join(f)).unwrap(), b, "{}", f.display());
    }
}

#[test]
fn changed_config_is_stale_until_forced() {
    let dir = TempDir::new().unwrap();
    run_all(dir.path(), &[]);
    let cfg = smoke_cfg();
    let args = [
        "compose",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "search.cw_min=4",
    ];
    let o = autocw(&args, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stale"));

    let mut forced = args.to_vec();
    forced.push("--force");
    let o = autocw(&forced, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("t60_0000ms/compose/windows.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2);
}

#[test]
fn two_runs_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run_all(a.path(), &[]);
    run_all(b.path(), &[]);
    let files = csv_files(a.path());
    assert!(files.len() > 10, "{files:?}");
    assert_eq!(files, csv_files(b.path()));
    for f in &files {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{} differs",
            f.display()
        );
    }
}

#[test]
fn seed_changes_results() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run_all(a.path(), &[]);
    run_all(b.path(), &["--seed", "17"]);
    let rel = "t60_0000ms/probe/profile.csv";
    assert_ne!(
        fs::read(a.path().join(rel)).unwrap(),
        fs::read(b.path().join(rel)).unwrap()
    );
}

#[test]
fn malformed_config_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.cfg");
    for text in [
        "[corpus\n",
        "[corpus]\nno_such_key = 1\n",
        "[search]\ncw_min = 9\ncw_max = 3\n",
    ] {
        fs::write(&bad, text).unwrap();
        let o = autocw(
            &["gen", "--config", bad.to_str().unwrap()],
            &dir.path().join("run"),
        );
        assert_eq!(o.status.code(), Some(1), "{text:?}");
    }
    let o = autocw(&["gen", "--set", "corpus.bogus=1"], &dir.path().join("run"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_and_bad_stage_exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(autocw(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(autocw(&["nonsense"], dir.path()).status.code(), Some(1));
}

#[test]
fn stages_run_individually() {
    let dir = TempDir::new().unwrap();
    let cfg = smoke_cfg();
    let cfg = cfg.to_str().unwrap();
    let o = autocw(&["features", "--config", cfg], dir.path());
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for stage in ["gen", "ir", "contaminate", "features", "probe", "compose"] {
        let o = autocw(&[stage, "--config", cfg], dir.path());
        assert!(
            o.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let log = fs::read_to_string(dir.path().join("run.log")).unwrap();
    for line in log.lines() {
        assert!(line.starts_with("stage="), "{line}");
        assert!(
            line.contains(" sha256=") && line.contains(" inputs="),
            "{line}"
        );
    }
    assert!(dir.path().join("config.resolved.cfg").exists());
}
