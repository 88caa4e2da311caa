//! Acceptance suite: every release gate as one test with a printed verdict.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see one
//! PASS/FAIL line per criterion. Tolerances are pinned in code; seeds are
//! fixed, so verdicts are reproducible.

use std::process::Command;
use std::time::Instant;

use pathflux::builtin;
use pathflux::estimator::{decompose_paths, EstimateConfig};
use pathflux::oracle;
use pathflux::target::Target;
use pathflux::verify::{run_experiment, ExperimentKind, ExperimentReport, ExperimentSpec, PathId};

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion}: {detail}");
}

fn run(kind: ExperimentKind, reps: usize) -> ExperimentReport {
    let mut spec = ExperimentSpec::new(kind);
    spec.replications = reps;
    run_experiment(&spec).expect("experiment failed to run")
}

/// 1. Plug-in identification at exact nuisances equals the enumeration
///    oracle on 25 random models, all eight targets, within 1e-10, in
///    under ten seconds.
#[test]
fn criterion_1_oracle_identification_agreement() {
    let start = Instant::now();
    let rep = run(ExperimentKind::OracleAgreement, 25);
    let elapsed = start.elapsed();
    let pass = rep.pass && elapsed.as_secs_f64() < 10.0;
    verdict(
        "1 oracle/identification agreement",
        pass,
        &format!("worst |diff| = {:.3e}, elapsed = {elapsed:?}", rep.worst),
    );
}

/// 2. The two emulation variants of the second edge set induce the same
///    joint law with `A`, cell-wise within 1e-12, on the same models.
#[test]
fn criterion_2_law_equality() {
    let rep = run(ExperimentKind::LawEquality, 25);
    verdict(
        "2 emulation-variant law equality",
        rep.pass,
        &format!("worst cell distance = {:.3e}", rep.worst),
    );
}

/// 3. The five components sum to the total: exactly (1e-12) for the
///    oracle on random models and for every estimator run by construction.
#[test]
fn criterion_3_additivity() {
    let rep = run(ExperimentKind::Additivity, 25);
    let mut worst_est = 0.0f64;
    for (scm, n, seed) in [
        (builtin::scm_t1(), 2000usize, 5u64),
        (builtin::scm_t0(), 1000, 6),
    ] {
        let data = scm.sample(n, seed).unwrap();
        let est = decompose_paths(&data, &EstimateConfig::default()).unwrap();
        worst_est = worst_est.max((est.theta.point - est.component_sum()).abs());
    }
    let pass = rep.pass && worst_est <= 1e-12;
    verdict(
        "3 decomposition additivity",
        pass,
        &format!(
            "oracle worst = {:.3e}, estimator worst = {worst_est:.3e}",
            rep.worst
        ),
    );
}

/// 4. Structurally removed paths carry exactly zero influence and zero
///    effect: fifty constraint-generated models per path.
#[test]
fn criterion_4_sharp_nulls() {
    let mut worst = 0.0f64;
    let mut pass = true;
    for path in PathId::ALL {
        let rep = run(ExperimentKind::SharpNull { path }, 50);
        worst = worst.max(rep.worst);
        pass &= rep.pass;
    }
    verdict(
        "4 path-specific sharp nulls",
        pass,
        &format!("worst |component| = {worst:.3e} over 4 x 50 models"),
    );
}

/// 5. Degenerate `Z` zeroes the joint term on both scales, fifty models.
#[test]
fn criterion_5_degenerate_z_joint_term() {
    let rep = run(ExperimentKind::PropZero, 50);
    verdict(
        "5 degenerate-Z joint term",
        rep.pass,
        &format!("worst |p23| = {:.3e}", rep.worst),
    );
}

/// 6. Monotone-constructed models give nonnegative total influence and
///    nonnegative per-path components, fifty models per constraint.
#[test]
fn criterion_6_monotonicity() {
    let mut most_negative = f64::INFINITY;
    let mut pass = true;
    for path in [
        None,
        Some(PathId::P1),
        Some(PathId::P2),
        Some(PathId::P3),
        Some(PathId::P4),
    ] {
        let rep = run(ExperimentKind::Monotonicity { path }, 50);
        most_negative = most_negative.min(rep.worst);
        pass &= rep.pass;
    }
    verdict(
        "6 monotonicity",
        pass,
        &format!("most negative component = {most_negative:.3e}"),
    );
}

/// 7. First-order expansion: remainders decay at least quadratically on
///    the eps grid for all six gradients (slope >= 1.8), and vanish when
///    only the outcome regression moves for the first edge set; under a
///    minute.
#[test]
fn criterion_7_von_mises_expansion() {
    let start = Instant::now();
    let rep = run(ExperimentKind::VonMises { target: None }, 1);
    let elapsed = start.elapsed();
    let pass = rep.pass && elapsed.as_secs_f64() < 60.0;
    verdict(
        "7 von Mises remainder",
        pass,
        &format!("min slope = {:.3}, elapsed = {elapsed:?}", rep.worst),
    );
}

/// 8. Inference: 95% Wald intervals cover the oracle in 90-99% of 500
///    replications at n = 4000 for the total and every component, and the
///    root-mean-square error shrinks like root-n between n = 1000 and
///    n = 4000 (ratio in [1.6, 2.5]); under fifteen minutes.
#[test]
fn criterion_8_wald_coverage_and_scaling() {
    let start = Instant::now();
    let cov = run(ExperimentKind::Coverage { n: 4000 }, 500);
    let clt = run(
        ExperimentKind::CltScaling {
            n_grid: vec![1000, 4000],
        },
        500,
    );
    let elapsed = start.elapsed();
    let ratio = clt.per_replication[0];
    let pass = cov.pass && (1.6..=2.5).contains(&ratio) && elapsed.as_secs_f64() < 900.0;
    verdict(
        "8 Wald coverage and CLT scaling",
        pass,
        &format!(
            "coverage = {:?}, rmse ratio = {ratio:.3}, elapsed = {elapsed:?}",
            cov.per_replication
        ),
    );
}

/// 9. CLI pipeline: simulate -> estimate -> verify on the built-in model
///    is byte-reproducible given seeds; the estimate output telescopes
///    exactly and its intervals cover the oracle for the pinned seed.
#[test]
fn criterion_9_cli_end_to_end() {
    let bin = env!("CARGO_BIN_EXE_pathflux");
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("t1.csv");
    let csv_path2 = dir.path().join("t1_again.csv");
    let est_path = dir.path().join("est.json");
    let est_path2 = dir.path().join("est_again.json");

    let run_ok = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "pathflux {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };

    run_ok(&[
        "simulate",
        "--scm",
        "t1",
        "--n",
        "4000",
        "--seed",
        "1",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    run_ok(&[
        "simulate",
        "--scm",
        "t1",
        "--n",
        "4000",
        "--seed",
        "1",
        "--out",
        csv_path2.to_str().unwrap(),
    ]);
    let bytes1 = std::fs::read(&csv_path).unwrap();
    let bytes2 = std::fs::read(&csv_path2).unwrap();
    assert_eq!(bytes1, bytes2, "simulate is not byte-reproducible");

    run_ok(&[
        "estimate",
        "--data",
        csv_path.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        est_path.to_str().unwrap(),
        "--ate",
    ]);
    run_ok(&[
        "estimate",
        "--data",
        csv_path.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        est_path2.to_str().unwrap(),
        "--ate",
    ]);
    let est_bytes1 = std::fs::read(&est_path).unwrap();
    let est_bytes2 = std::fs::read(&est_path2).unwrap();
    assert_eq!(est_bytes1, est_bytes2, "estimate is not byte-reproducible");

    let doc: serde_json::Value = serde_json::from_slice(&est_bytes1).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(
        doc["influence"]["sum_check"], true,
        "estimator does not telescope"
    );
    assert_eq!(doc["ate"]["sum_check"], true);

    // Single-seed inference check: the pinned seed's intervals cover the truth.
    let scm = builtin::scm_t1();
    let truth = oracle::path_decomposition(&scm).unwrap();
    let truths = [
        truth.theta,
        truth.p1,
        truth.p2,
        truth.p3,
        truth.p4,
        truth.p23,
    ];
    let rows = doc["influence"]["rows"].as_array().unwrap();
    for (row, t) in rows.iter().zip(truths) {
        let lo = row["ci_lo"].as_f64().unwrap();
        let hi = row["ci_hi"].as_f64().unwrap();
        assert!(
            lo <= t && t <= hi,
            "{} interval [{lo}, {hi}] misses oracle {t}",
            row["parameter"]
        );
    }

    // Verify subcommand: run the sharp-null experiment from a spec file.
    let spec_path = dir.path().join("spec.json");
    std::fs::write(
        &spec_path,
        r#"{"kind": "sharp_null", "path": "p3", "replications": 10, "seed": 1}"#,
    )
    .unwrap();
    let verdict_path = dir.path().join("verdict.json");
    run_ok(&[
        "verify",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out",
        verdict_path.to_str().unwrap(),
    ]);
    let vdoc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&verdict_path).unwrap()).unwrap();
    assert_eq!(vdoc["report"]["pass"], true);

    // Oracle on eight targets agrees between one-shot values and the CLI.
    let out = Command::new(bin)
        .args(["oracle", "--scm", "t1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let odoc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let theta_cli = odoc["influence"]["rows"][0]["estimate"].as_f64().unwrap();
    assert!((theta_cli - truth.theta).abs() < 1e-12);
    let _ = Target::ALL;

    verdict(
        "9 CLI end-to-end pipeline",
        true,
        "byte-reproducible, telescoping, covering",
    );
}
