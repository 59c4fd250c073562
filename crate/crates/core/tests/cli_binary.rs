//! The `ntk-lab` executable: exit codes and flag overrides.

use std::path::Path;
use std::process::Command;

fn ntk_lab(args: &[&str], dir: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ntk-lab"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const SMALL: &str = "arms = ntk, ntk_l2\nn = 15\nsigma = 0.1\nreplications = 2\n\
                     test_size = 30\nval_size = 10\nmu_grid = 0.01, 0.1, 1\n";

#[test]
fn successful_run_writes_requested_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.cfg"), SMALL).unwrap();
    let (code, _, err) = ntk_lab(&["simulate", "--config", "c.cfg", "--out", "r/x.csv"], dir.path());
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(dir.path().join("r/x.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(err.contains("ntk_l2"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.cfg"), SMALL).unwrap();
    let run = |seed: &str, out: &str| {
        let (code, _, err) =
            ntk_lab(&["simulate", "--config", "c.cfg", "--out", out, "--seed", seed], dir.path());
        assert_eq!(code, 0, "{err}");
        std::fs::read_to_string(dir.path().join(out)).unwrap()
    };
    let seed_col = |csv: &str| -> Vec<String> {
        csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().to_string()).collect()
    };
    assert_ne!(seed_col(&run("1", "a.csv")), seed_col(&run("2", "b.csv")));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "n = -5\nfoo = 1\n").unwrap();
    let (code, _, err) = ntk_lab(&["simulate", "--config", "bad.cfg"], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("line 1") && err.contains("line 2"), "{err}");

    let (code, _, _) = ntk_lab(&["simulate", "--config", "missing.cfg"], dir.path());
    assert_eq!(code, 1);
    let (code, _, _) = ntk_lab(&["no-such-task", "--config", "bad.cfg"], dir.path());
    assert_eq!(code, 1);
    std::fs::write(dir.path().join("t.cfg"), "task = mnist\n").unwrap();
    let (code, _, err) = ntk_lab(&["simulate", "--config", "t.cfg"], dir.path());
    assert_eq!(code, 1, "{err}");
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.cfg"), "mnist_dir = no/such/dir\nreplications = 1\n").unwrap();
    let (code, _, err) = ntk_lab(&["mnist", "--config", "m.cfg"], dir.path());
    assert_eq!(code, 2, "{err}");

    std::fs::write(dir.path().join("c.cfg"), SMALL).unwrap();
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let (code, _, err) =
        ntk_lab(&["simulate", "--config", "c.cfg", "--out", "blocker/x.csv"], dir.path());
    assert_eq!(code, 2);
    assert!(err.contains("cannot write output"), "{err}");
}

#[test]
fn help_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = ntk_lab(&["--help"], dir.path());
    assert_eq!(code, 0);
    assert!(out.contains("--config"));
}
