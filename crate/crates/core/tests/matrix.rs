use uaf_bindlab::matrix::Cell;
use uaf_bindlab::search::same_shape;
use uaf_bindlab::{
    audit_witness, expected, run_matrix, Matrix, MatrixOptions, ModelId, Perspective, Status,
    VerificationPolicy,
};

fn matrix(policy: VerificationPolicy, scenarios: bool) -> Matrix {
    run_matrix(&MatrixOptions {
        policy,
        scenarios,
        ..MatrixOptions::default()
    })
    .unwrap()
}

fn cell<'a>(m: &'a Matrix, sel: &str, p: Perspective) -> &'a Cell {
    m.get(sel.parse().unwrap(), p).unwrap()
}

#[test]
fn strict_matrix_matches_the_expected_table() {
    let m = matrix(VerificationPolicy::Strict, true);
    assert_eq!(m.cells.len(), 52);
    assert!(m.diff(&expected(VerificationPolicy::Strict)).is_empty());
    assert_eq!(m.count(Status::Violated), 20);
    for c in &m.cells {
        if c.verdict.perspective.is_client() {
            assert_eq!(c.verdict.status, Status::Satisfied);
        }
    }
}

#[test]
fn every_witness_survives_the_audit() {
    for policy in [VerificationPolicy::Strict, VerificationPolicy::Lenient] {
        let m = matrix(policy, true);
        for c in m.cells.iter().filter(|c| c.verdict.is_violated()) {
            audit_witness(&c.verdict, policy)
                .unwrap_or_else(|e| panic!("{} {}: {e}", c.verdict.model, c.verdict.perspective));
        }
    }
}

#[test]
fn search_alone_reaches_the_same_verdicts() {
    let with = matrix(VerificationPolicy::Strict, true);
    let without = matrix(VerificationPolicy::Strict, false);
    for (a, b) in with.cells.iter().zip(&without.cells) {
        assert_eq!(
            a.verdict.status, b.verdict.status,
            "{} {}",
            a.verdict.model, a.verdict.perspective
        );
    }
    for c in without.cells.iter().filter(|c| c.verdict.is_violated()) {
        assert_eq!(c.verdict.source.as_deref(), Some("search"));
        audit_witness(&c.verdict, VerificationPolicy::Strict).unwrap();
    }
}

#[test]
fn search_finds_the_reissue_shape() {
    let with = matrix(VerificationPolicy::Strict, true);
    let without = matrix(VerificationPolicy::Strict, false);
    let scripted = cell(&with, "uaf-nobinding-tls13", Perspective::ServerAuth);
    let found = cell(&without, "uaf-nobinding-tls13", Perspective::ServerAuth);
    assert_eq!(
        scripted.verdict.source.as_deref(),
        Some("challenge-reissue")
    );
    assert!(same_shape(
        scripted.verdict.witness.as_ref().unwrap(),
        found.verdict.witness.as_ref().unwrap()
    ));
}

#[test]
fn lenient_policy_reopens_the_reissue_attack() {
    let m = matrix(VerificationPolicy::Lenient, true);
    assert!(m.diff(&expected(VerificationPolicy::Lenient)).is_empty());
    for sel in ["uaf-endpoint-tls12-dh", "uaf-servercert-tls12-dh"] {
        for p in [Perspective::ServerReg, Perspective::ServerAuth] {
            let c = cell(&m, sel, p);
            assert_eq!(c.verdict.status, Status::Violated);
            assert_eq!(c.verdict.source.as_deref(), Some("challenge-reissue"));
        }
    }
    let strict = m.diff(&expected(VerificationPolicy::Strict));
    assert_eq!(strict.len(), 6);
}

#[test]
fn baseline_reports_one_verdict_in_both_columns() {
    let m = run_matrix(&MatrixOptions {
        models: vec![ModelId::BASELINE],
        ..MatrixOptions::default()
    })
    .unwrap();
    let reg = cell(&m, "baseline-nouaf", Perspective::ServerReg);
    let auth = cell(&m, "baseline-nouaf", Perspective::ServerAuth);
    assert_eq!(reg.verdict.status, auth.verdict.status);
    assert_eq!(reg.verdict.source.as_deref(), Some("baseline-replay"));
}

#[test]
fn json_has_one_entry_per_cell() {
    let m = run_matrix(&MatrixOptions {
        models: vec!["uaf-exporter-tls13".parse().unwrap()],
        ..MatrixOptions::default()
    })
    .unwrap();
    let j = m.to_json(true);
    assert_eq!(j["cells"].as_array().unwrap().len(), 4);
    assert_eq!(j["ok"], 4);
    assert!(j["cells"][0]["witness"].is_null());
}
