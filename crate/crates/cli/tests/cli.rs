use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_uaf-bindlab"));
    c.env_remove("UAF_BINDLAB_BUDGET");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn temp_file(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("uaf-bindlab-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    fs::write(&p, contents).unwrap();
    p
}

#[test]
fn strict_matrix_exits_zero() {
    let o = run(&["matrix", "--policy", "strict"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 15);
    assert!(text.contains("policy strict: 20 violated, 32 ok"));
    let exporter = text
        .lines()
        .find(|l| l.starts_with("UAF-Exporter-TLS1.3"))
        .unwrap();
    assert_eq!(
        exporter.split_whitespace().skip(1).collect::<Vec<_>>(),
        ["ok"; 4]
    );
}

#[test]
fn lenient_matrix_differs_from_the_golden_table() {
    let o = run(&["matrix", "--policy", "lenient"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("diff: UAF-Endpoint-TLS1.2-DH server-reg expected ok got violated"));
    assert!(text.contains("diff: UAF-ServerCert-TLS1.2-DH server-auth expected ok got violated"));
    assert!(!text.contains("audit:"));
}

#[test]
fn single_model_gives_a_single_row() {
    let o = run(&["matrix", "--model", "uaf-exporter-tls13"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("UAF-Exporter-TLS1.3"));
}

#[test]
fn matrix_json_and_out_file() {
    let out = std::env::temp_dir().join(format!("uaf-bindlab-matrix-{}.json", std::process::id()));
    let o = run(&[
        "matrix",
        "--model",
        "uaf-tokenbinding-tls12-dh",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["violated"], 2);
    assert_eq!(doc["cells"].as_array().unwrap().len(), 4);
    let saved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let witness = &saved["cells"][1]["witness"];
    assert!(witness["strands"].is_array());
    for e in witness["events"].as_array().unwrap() {
        let t = e["term"].as_str().unwrap();
        assert_eq!(uaf_bindlab::parse_term(t).unwrap().to_string(), t);
    }
}

#[test]
fn tiny_budget_exits_two() {
    let o = bin()
        .args(["matrix", "--model", "uaf-exporter-tls13"])
        .env("UAF_BINDLAB_BUDGET", "5")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["matrix", "--model", "uaf-exporter-tls13", "--budget", "5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reissue_against_unbound_tls12_dh_is_accepted() {
    let o = run(&[
        "attack",
        "challenge-reissue",
        "--model",
        "uaf-nobinding-tls12-dh",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(
        text.lines().last().unwrap(),
        "server ACCEPTED assertion from adversary session; Goal 1 VIOLATED"
    );
    assert!(text.contains("== challenge-reissue on UAF-NoBinding-TLS1.2-DH (registration"));
    assert!(text.contains("== challenge-reissue on UAF-NoBinding-TLS1.2-DH (authentication"));
    assert!(text.contains("adversary learns"));
}

#[test]
fn reissue_against_exporter_is_rejected() {
    let o = run(&[
        "attack",
        "challenge-reissue",
        "--model",
        "uaf-exporter-tls13",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o).lines().last().unwrap(),
        "server REJECTED: BindingMismatch"
    );
}

#[test]
fn lenient_reissue_against_endpoint_dh_is_accepted() {
    let o = run(&[
        "attack",
        "challenge-reissue",
        "--model",
        "uaf-endpoint-tls12-dh",
        "--protocol",
        "authentication",
        "--policy",
        "lenient",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).ends_with("Goal 1 VIOLATED\n"));
}

#[test]
fn inapplicable_attack_exits_three() {
    let o = run(&["attack", "pms-compromise", "--model", "uaf-nobinding-tls13"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&[
        "attack",
        "baseline-replay",
        "--model",
        "uaf-nobinding-tls13",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn attack_json_is_parseable() {
    let o = run(&["attack", "baseline-replay", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc[0]["server_verdict"], "ACCEPTED");
    assert_eq!(doc[0]["goal1"], false);
}

#[test]
fn derive_examples() {
    let kb = temp_file(
        "kb1",
        "(senc (symk (nonce \"k\")) (nonce \"m\"))\n(symk (nonce \"k\"))\n",
    );
    let o = run(&["derive", kb.to_str().unwrap(), "(nonce \"m\")"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("derivable\n(nonce \"m\")  [decrypt]"));

    let kb = temp_file("kb2", "(senc (symk (nonce \"k\")) (nonce \"m\"))\n");
    let o = run(&["derive", kb.to_str().unwrap(), "(nonce \"m\")"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o), "not derivable\n");

    let kb = temp_file("kb3", "(dh-exp \"x\")\n(dh-pub (dh-exp \"y\"))\n");
    let o = run(&[
        "derive",
        kb.to_str().unwrap(),
        "(dh-shared (dh-exp \"x\") (dh-exp \"y\"))",
    ]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn derive_reports_positions() {
    let kb = temp_file("kb4", "(nonce \"a\")\n  (nonse \"b\")\n");
    let o = run(&["derive", kb.to_str().unwrap(), "(nonce \"a\")"]);
    assert_eq!(o.status.code(), Some(65));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:3: unknown term head 'nonse'"));
}

#[test]
fn unknown_model_lists_valid_names() {
    let o = run(&["matrix", "--model", "uaf-magic"]);
    assert_eq!(o.status.code(), Some(64));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("uaf-exporter-tls13") && err.contains("baseline-nouaf"));
}

#[test]
fn honest_runs_match_golden_files() {
    let dir = fixtures().join("honest");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let model = path.file_stem().unwrap().to_str().unwrap().to_owned();
        let o = run(&["honest", "--model", &model]);
        assert_eq!(o.status.code(), Some(0));
        let golden = fs::read_to_string(&path).unwrap();
        assert!(
            stdout(&o) == golden,
            "honest trace for {model} drifted from {}",
            path.display()
        );
        seen += 1;
    }
    assert_eq!(seen, 13);
}

#[test]
fn output_is_byte_identical_across_runs() {
    let a = run(&[
        "attack",
        "pms-compromise",
        "--model",
        "uaf-servercert-tls12-rsa",
    ]);
    let b = run(&[
        "attack",
        "pms-compromise",
        "--model",
        "uaf-servercert-tls12-rsa",
    ]);
    assert_eq!(a.stdout, b.stdout);
    let a = run(&[
        "matrix",
        "--format",
        "json",
        "--model",
        "uaf-channelid-tls12-rsa",
    ]);
    let b = run(&[
        "matrix",
        "--format",
        "json",
        "--model",
        "uaf-channelid-tls12-rsa",
    ]);
    assert_eq!(a.stdout, b.stdout);
}
