use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_rheoflow");

const SMALL: &str = "kmax = 1\nM = 8\ndt = 1e-2\nT = 0.03\nalpha = 1e-3\ngamma = 2\n\
                     potential = newtonian\nnu = 0.1\nrho_min = 0.5\nrho_max = 2\n\
                     u0 = random\nu0_scale = 0.05\nrho0 = wave\nrho0_amp = 0.2\n";

fn rheoflow(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn simulate_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.conf", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = rheoflow(&["simulate", "--config", &cfg, "--svg"], &a);
    assert_eq!(
        first.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let stdout = String::from_utf8_lossy(&first.stdout);
    assert!(stdout.contains("PASS energy_inequality"));
    assert!(stdout.contains("PASS density_bounds"));
    assert!(a.join("ledger.svg").exists());
    let second = rheoflow(&["simulate", "--config", &cfg], &b);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(
        std::fs::read(a.join("ledger.csv")).unwrap(),
        std::fs::read(b.join("ledger.csv")).unwrap()
    );
    let manifest = std::fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("status = pass"));
    assert!(manifest.contains("[run]"));
}

#[test]
fn verify_suites_pass_and_unknown_suite_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    for suite in ["rheology", "basis"] {
        let o = rheoflow(&["verify", suite, "--seed", "7"], dir.path());
        assert_eq!(
            o.status.code(),
            Some(0),
            "{suite}: {}",
            String::from_utf8_lossy(&o.stdout)
        );
        assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    }
    let bad = rheoflow(&["verify", "nonsense"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(
        err.contains("rheology") && err.contains("transport"),
        "{err}"
    );
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rheoflow(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(rheoflow(&["simulate"], dir.path()).status.code(), Some(2));
    let missing = rheoflow(&["simulate", "--config", "/nonexistent/x.conf"], dir.path());
    assert_eq!(missing.status.code(), Some(2));

    let dup = write_config(dir.path(), "dup.conf", &format!("{SMALL}nu = 0.2\n"));
    let o = rheoflow(&["simulate", "--config", &dup], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("duplicate key `nu`"));

    let foreign = write_config(dir.path(), "foreign.conf", &format!("{SMALL}tau0 = 1\n"));
    assert_eq!(
        rheoflow(&["simulate", "--config", &foreign], dir.path())
            .status
            .code(),
        Some(2)
    );

    let bad_ladder = write_config(dir.path(), "ok.conf", SMALL);
    let o = rheoflow(
        &[
            "convergence",
            "--config",
            &bad_ladder,
            "--ladders",
            "dt,spin",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));

    let o = rheoflow(&["defect-study", "--w", "1,0,0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn picard_breakdown_exits_3_with_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}picard_max = 1\npicard_tol = 1e-300\n");
    let cfg = write_config(dir.path(), "stiff.conf", &text);
    let out = dir.path().join("run");
    let o = rheoflow(&["simulate", "--config", &cfg], &out);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[3]"));
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("status = failed (partial outputs)"));
}

#[test]
fn relative_energy_needs_a_newtonian_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.conf", SMALL);
    let o = rheoflow(&["relative-energy", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn defect_study_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = rheoflow(&["defect-study", "--n", "4,8", "--cells", "2"], dir.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let csv = std::fs::read_to_string(dir.path().join("defect.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("n,frobenius_error"));
}
