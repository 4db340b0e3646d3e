use std::path::Path;
use std::process::{Command, Output};

use mcma::cli::{EXIT_CHECK_FAILED, EXIT_DATA, EXIT_OK, EXIT_USAGE};

fn mcma(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcma"))
        .args(args)
        .current_dir(cwd)
        .env_remove("MCMA_SEED")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn fixture() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data/pde5_fixture.csv")
        .display()
        .to_string()
}

#[test]
fn generate_writes_dataset_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let o = mcma(
        &[
            "generate",
            "synthetic",
            "--n",
            "50",
            "--d",
            "10",
            "--wu",
            "2",
            "--seed",
            "7",
            "--out",
            "d.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
    assert!(csv.starts_with("study_id,rob_01,"));
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.truth.json")).unwrap())
            .unwrap();
    assert!((truth["ground_truth"][0].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(truth["generator"]["seed"], 7);

    let o = mcma(
        &[
            "generate",
            "semisynthetic",
            "--from",
            &fixture(),
            "--n",
            "40",
            "--out",
            "s.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), EXIT_OK);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("s.jsonl"))
            .unwrap()
            .lines()
            .count(),
        40
    );
}

#[test]
fn analyze_is_reproducible_and_gated() {
    let dir = tempfile::tempdir().unwrap();
    mcma(
        &[
            "generate",
            "synthetic",
            "--n",
            "200",
            "--d",
            "6",
            "--seed",
            "1",
            "--out",
            "d.csv",
        ],
        dir.path(),
    );

    let gated = mcma(
        &[
            "analyze",
            "--mode",
            "mcma",
            "--classifier",
            "mnlogit",
            "d.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&gated), EXIT_CHECK_FAILED);
    assert!(String::from_utf8_lossy(&gated.stderr).contains("predictive check"));

    let args = [
        "analyze",
        "--mode",
        "mcma",
        "--classifier",
        "knn",
        "--force",
        "--check-reps",
        "20",
        "--seed",
        "5",
        "d.csv",
    ];
    let a = mcma(&args, dir.path());
    let b = mcma(&args, dir.path());
    assert_eq!(code(&a), EXIT_OK);
    assert_eq!(a.stdout, b.stdout);
    let report: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["seed"], 5);
    assert_eq!(report["config"]["classifier"], "knn");
    assert_eq!(
        report["result"]["per_rct_probs"].as_array().unwrap().len(),
        200
    );

    let basic = mcma(&["analyze", "--mode", "basic", "d.csv"], dir.path());
    assert_eq!(code(&basic), EXIT_OK);
}

#[test]
fn seed_sources_in_priority_order() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "seed = 11\nmode = \"basic\"\nclassifier = \"gaussian_nb\"\n",
    )
    .unwrap();
    let fx = fixture();
    let seed_of = |o: &Output| {
        serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap()["seed"].clone()
    };

    let o = mcma(&["--config", "run.toml", "analyze", &fx], dir.path());
    assert_eq!(seed_of(&o), 11);
    let o = mcma(
        &["--config", "run.toml", "analyze", "--seed", "3", &fx],
        dir.path(),
    );
    assert_eq!(seed_of(&o), 3);
    let o = Command::new(env!("CARGO_BIN_EXE_mcma"))
        .args(["analyze", "--mode", "basic", &fx])
        .env("MCMA_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(seed_of(&o), 99);
    let report: serde_json::Value =
        serde_json::from_slice(&mcma(&["--config", "run.toml", "analyze", &fx], dir.path()).stdout)
            .unwrap();
    assert_eq!(report["config"]["classifier"], "gaussian_nb");
    assert_eq!(report["dataset"]["n"], 18);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mcma(&["analyze", "--bogus"], dir.path())), EXIT_USAGE);
    assert_eq!(
        code(&mcma(&["analyze", "missing.csv"], dir.path())),
        EXIT_DATA
    );
    assert_eq!(
        code(&mcma(
            &["analyze", "--threshold", "1.5", &fixture()],
            dir.path()
        )),
        EXIT_USAGE
    );
    std::fs::write(
        dir.path().join("bad.csv"),
        "study_id,rob_a,rob_b,association\ns1,0,1,7\n",
    )
    .unwrap();
    let o = mcma(&["analyze", "bad.csv"], dir.path());
    assert_eq!(code(&o), EXIT_DATA);
    assert!(String::from_utf8_lossy(&o.stderr).contains("association"));
    std::fs::write(dir.path().join("bad.toml"), "nonsense = 1\n").unwrap();
    assert_eq!(
        code(&mcma(
            &["--config", "bad.toml", "analyze", &fixture()],
            dir.path()
        )),
        EXIT_USAGE
    );
    assert_eq!(code(&mcma(&["--help"], dir.path())), EXIT_OK);
}

#[test]
fn check_reports_without_gating_on_force() {
    let dir = tempfile::tempdir().unwrap();
    mcma(
        &[
            "generate",
            "synthetic",
            "--n",
            "200",
            "--d",
            "6",
            "--seed",
            "1",
            "--out",
            "d.csv",
        ],
        dir.path(),
    );
    let o = mcma(&["check", "--check-reps", "20", "d.csv"], dir.path());
    assert_eq!(code(&o), EXIT_CHECK_FAILED);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["check"]["passed"], false);
    assert_eq!(report["screen"]["kept"].as_array().unwrap().len(), 6);
    assert_eq!(
        code(&mcma(
            &["check", "--check-reps", "20", "--force", "d.csv"],
            dir.path()
        )),
        EXIT_OK
    );
}

#[test]
fn sweep_writes_csv_json_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = mcma(
        &[
            "sweep",
            "--axis",
            "wu",
            "--values",
            "0,2",
            "--n",
            "120",
            "--d",
            "6",
            "--reps",
            "2",
            "--classifiers",
            "mnlogit,gbt",
            "--force",
            "--check-reps",
            "10",
            "--jobs",
            "2",
            "--json",
            "r.json",
            "--plot-data",
            "plots",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    assert!(dir.path().join("plots/metrics_by_w_u.csv").exists());
    assert!(dir.path().join("plots/abs_error_by_w_u.csv").exists());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(json["replications"], 2);

    let o = mcma(&["sweep", "--axis", "wu", "--values", "2,0"], dir.path());
    assert_eq!(code(&o), EXIT_USAGE);
}
