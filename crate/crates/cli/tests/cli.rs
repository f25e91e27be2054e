use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mrma(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrma"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("MRMA_OUT")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const SMALL_SINGLE: &[&str] = &[
    "simulate-single",
    "--epsilon",
    "1,5",
    "--trials",
    "3",
    "--test-size",
    "200",
    "--n-train",
    "200",
    "--n-eval",
    "400",
    "--n0",
    "40",
    "--n1",
    "40",
    "--B",
    "10",
    "--seed",
    "7",
];

#[test]
fn single_run_is_independent_of_jobs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(mrma(a.path(), SMALL_SINGLE).status.success());
    let mut with_jobs = SMALL_SINGLE.to_vec();
    with_jobs.extend(["--jobs", "3"]);
    assert!(mrma(b.path(), &with_jobs).status.success());
    // Only the recorded command line may differ.
    for name in ["single_results.csv", "single_summary.csv"] {
        let body = |s: String| s.lines().filter(|l| !l.starts_with("# command:")).collect::<Vec<_>>().join("\n");
        assert_eq!(body(read(a.path(), name)), body(read(b.path(), name)), "{name}");
    }
}

#[test]
fn identical_invocation_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    assert!(mrma(dir.path(), SMALL_SINGLE).status.success());
    let first = fs::read(dir.path().join("single_summary.csv")).unwrap();
    assert!(mrma(dir.path(), SMALL_SINGLE).status.success());
    assert_eq!(first, fs::read(dir.path().join("single_summary.csv")).unwrap());
}

#[test]
fn outputs_start_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    assert!(mrma(dir.path(), SMALL_SINGLE).status.success());
    let text = read(dir.path(), "single_results.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# mrma "));
    assert!(lines[1].starts_with("# command: mrma simulate-single"));
    assert_eq!(lines[2], "# seed=7");
    let header = lines.iter().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(*header, "epsilon,trial,method,misclassification");
    let rows = lines.iter().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows, 2 * 3 * 7);
    let summary = read(dir.path(), "single_summary.csv");
    assert!(summary.contains("epsilon,method,mean,stderr,trials"));
}

#[test]
fn heatmap_covers_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = mrma(
        dir.path(),
        &["oracle-heatmap", "--epsilon-z", "10,1,0.1,0.01", "--z0-grid", "-2:2:0.05", "--z-grid", "-1:1:0.1"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(dir.path(), "omega_heatmap.csv");
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "z0,z,epsilon_z,omega");
    assert_eq!(rows.len() - 1, 4 * 81 * 21);
    assert!(text.contains("# seed=42"));
}

#[test]
fn tv_curve_is_labeled_marginal() {
    let dir = tempfile::tempdir().unwrap();
    let out = mrma(dir.path(), &["oracle-tv", "--d", "1,2", "--epsilon-z", "1,10", "--samples", "10000"]);
    assert!(out.status.success());
    let text = read(dir.path(), "tv_curve.csv");
    assert!(text.contains("marginal"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "d,epsilon_z,tv_estimate,n_samples");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("1,1,"));
    assert!(rows[1].ends_with(",10000"));
}

#[test]
fn multi_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = mrma(
        dir.path(),
        &["simulate-multi", "--preset", "multi-small", "--trials", "1", "--test-size", "100", "--diagnostics"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = read(dir.path(), "multi_results.csv");
    let rows = results.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows, 6 * 2);
    let peers = read(dir.path(), "multi_peers.csv");
    assert_eq!(peers.lines().filter(|l| !l.starts_with('#')).count() - 1, 6 * 6);
    assert!(read(dir.path(), "multi_summary.csv").contains("epsilon,group,method,mean,stderr,count"));
}

#[test]
fn real_data_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("a,b,label\n");
    for i in 0..600 {
        let x = (i as f64 * 0.37).sin() * 5.0;
        let z = (i as f64 * 1.13).cos();
        let y = if x + 2.0 * z > 0.0 { 1 } else { 0 };
        csv.push_str(&format!("{x},{z},{y}\n"));
    }
    let path = dir.path().join("data.csv");
    fs::write(&path, csv).unwrap();
    let out = mrma(
        dir.path(),
        &[
            "real-data", "--csv", path.to_str().unwrap(), "--epsilon", "1,inf", "--n0", "60", "--n1", "20",
            "--B", "10", "--trials", "2",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read(dir.path(), "real_summary.csv");
    assert!(summary.contains("records=600 features=2"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("mrma"));
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = mrma(dir.path(), &["real-data", "--csv", "/definitely/missing.csv"]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing.csv"));

    let bad_preset = mrma(dir.path(), &["simulate-single", "--preset", "case9"]);
    assert!(!bad_preset.status.success());
    assert!(String::from_utf8_lossy(&bad_preset.stderr).contains("case9"));

    let bad_config = mrma(dir.path(), &["simulate-single", "--r0", "0.4", "--trials", "1"]);
    assert!(!bad_config.status.success());

    let unknown_flag = mrma(dir.path(), &["oracle-tv", "--frobnicate"]);
    assert!(!unknown_flag.status.success());
    assert!(!String::from_utf8_lossy(&unknown_flag.stderr).is_empty());
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_mrma"))
        .args(["oracle-heatmap", "--epsilon-z", "1", "--z0-grid", "0:0.5:0.5", "--z-grid", "0:1:0.5"])
        .env("MRMA_OUT", &target)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("omega_heatmap.csv").exists());
}
