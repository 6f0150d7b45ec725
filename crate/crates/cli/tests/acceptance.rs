use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use uaf_bindlab::bundle::{Direction, StrandStatus};
use uaf_bindlab::scenario::builtins;
use uaf_bindlab::search::search_counterexample;
use uaf_bindlab::tls::{derive_keys, Certificate, SessionSecret, Side, TlsSession};
use uaf_bindlab::uaf::make_tls_data;
use uaf_bindlab::{
    audit_witness, expected, run_matrix, scenario_challenge_reissue, BindingMethod, Bundle,
    KnowledgeBase, MatrixOptions, ModelId, Perspective, Protocol, SearchBounds, ServerVerdict,
    Status, Term, TlsVariant, Var, VerificationPolicy,
};

#[allow(dead_code)]
#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn table_reproduction() -> Outcome {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_uaf-bindlab"))
        .args(["matrix", "--policy", "strict"])
        .env_remove("UAF_BINDLAB_BUDGET")
        .output()
        .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let text = String::from_utf8_lossy(&out.stdout);
    if out.status.code() != Some(0) {
        return Err(format!("exit {:?}\n{text}", out.status.code()));
    }
    if took > Duration::from_secs(60) {
        return Err(format!("took {took:.1?}"));
    }
    let summary = text.lines().last().unwrap_or_default().to_owned();
    Ok(format!("{summary} in {took:.1?}"))
}

fn witness_audit() -> Outcome {
    let mut audited = 0;
    for policy in [VerificationPolicy::Strict, VerificationPolicy::Lenient] {
        for scenarios in [true, false] {
            let m = run_matrix(&MatrixOptions {
                policy,
                scenarios,
                ..MatrixOptions::default()
            })
            .map_err(|e| e.to_string())?;
            for c in m.cells.iter().filter(|c| c.verdict.is_violated()) {
                audit_witness(&c.verdict, policy).map_err(|e| {
                    format!(
                        "{} {} ({policy}): {e}",
                        c.verdict.model, c.verdict.perspective
                    )
                })?;
                audited += 1;
            }
        }
    }
    Ok(format!("{audited} witnesses audited"))
}

fn plaintext(t: &Term) -> Option<&Term> {
    match t {
        Term::SymEnc { payload, .. } => Some(payload),
        _ => None,
    }
}

fn confused_deputy(b: &Bundle) -> Result<(), String> {
    let server = b
        .strands
        .iter()
        .find(|s| !s.role.is_client() && s.status == StrandStatus::Complete && s.is_honest())
        .ok_or("no completed server")?;
    let accepted = server
        .nodes
        .iter()
        .map(|&n| &b.events[n])
        .rfind(|e| e.direction == Direction::Recv)
        .and_then(|e| plaintext(&e.term))
        .ok_or("server received nothing")?;
    let client = b
        .strands
        .iter()
        .filter(|s| s.role.is_client() && s.is_honest() && s.status == StrandStatus::Complete)
        .find(|c| {
            c.nodes.iter().any(|&n| {
                let e = &b.events[n];
                e.direction == Direction::Send && plaintext(&e.term) == Some(accepted)
            })
        })
        .ok_or("accepted payload did not come from an honest client")?;
    for v in [Var::Cr, Var::Sr, Var::Server] {
        if client.binding(v) == server.binding(v) {
            return Err(format!(
                "{v} agrees between {} and {}",
                client.id, server.id
            ));
        }
    }
    if client.binding(Var::Challenge) != server.binding(Var::Challenge) {
        return Err("client answered a different challenge".into());
    }
    Ok(())
}

fn challenge_reissue() -> Outcome {
    let model: ModelId = "uaf-nobinding-tls12-dh"
        .parse()
        .map_err(|e| format!("{e}"))?;
    for protocol in [Protocol::Registration, Protocol::Authentication] {
        let run = scenario_challenge_reissue(model, protocol, VerificationPolicy::Strict)
            .map_err(|e| e.to_string())?;
        if run.server_verdict != ServerVerdict::Accepted || run.goal1 {
            return Err(format!(
                "{protocol}: server {} goal1={}",
                run.server_verdict, run.goal1
            ));
        }
        confused_deputy(&run.bundle).map_err(|e| format!("{protocol}: {e}"))?;
    }
    Ok("registration and authentication both accept the reissued challenge".into())
}

#[derive(Debug, Clone)]
struct Inputs {
    challenge: String,
    subject: String,
    ca: String,
    owner: String,
    cr: String,
    sr: String,
    secret: String,
}

fn inputs() -> impl Strategy<Value = Inputs> {
    let id = || "[a-z][a-z0-9_-]{0,11}";
    (id(), id(), id(), id(), id(), id(), id()).prop_map(
        |(challenge, subject, ca, owner, cr, sr, secret)| Inputs {
            challenge,
            subject,
            ca,
            owner,
            cr,
            sr,
            secret,
        },
    )
}

fn session(variant: TlsVariant, i: &Inputs) -> TlsSession {
    let secret = match variant {
        TlsVariant::Tls12Rsa => SessionSecret::Rsa {
            pms: Term::pms(i.secret.clone()),
        },
        _ => SessionSecret::Dh {
            x: Term::dh_exp(format!("{}.x", i.secret)),
            y: Term::dh_exp(format!("{}.y", i.secret)),
        },
    };
    let cr = Term::nonce(i.cr.clone());
    let sr = Term::nonce(i.sr.clone());
    let (ms, cwk, swk) = derive_keys(&secret, &cr, &sr);
    TlsSession {
        variant,
        side: Side::Server,
        cr,
        sr,
        secret,
        ms,
        cwk,
        swk,
        server_cert: Certificate::issue(i.subject.clone(), i.ca.clone()),
        peer_believed: i.subject.clone(),
    }
}

fn canonical(binding: BindingMethod, i: &Inputs) -> String {
    let ch = &i.challenge;
    let c = &i.owner;
    let cert = format!(
        r#"(sig (privk "{}") (tuple (name "{s}") (pubk "{s}")))"#,
        i.ca,
        s = i.subject
    );
    match binding {
        BindingMethod::Unbound => r#"(tag "unbound")"#.to_owned(),
        BindingMethod::ChannelId => format!(
            r#"(hash (tag "uaf_channel_id") (nonce "{ch}") (pubk "{c}") (sig (privk "{c}") (pubk "{c}")))"#
        ),
        BindingMethod::TokenBinding => format!(
            r#"(hash (tag "uaf_token_binding") (nonce "{ch}") (tuple (pubk "{c}") (sig (privk "{c}") (pubk "{c}"))))"#
        ),
        BindingMethod::ServerEndpoint => {
            format!(r#"(hash (tag "uaf_server_endpoint") (nonce "{ch}") (hash {cert}))"#)
        }
        BindingMethod::ServerCert => {
            format!(r#"(hash (tag "uaf_server_cert") (nonce "{ch}") {cert})"#)
        }
        BindingMethod::Exporter => {
            let ms = format!(
                r#"(hash (tag "ms") (dh-shared (dh-exp "{k}.x") (dh-exp "{k}.y")) (nonce "{cr}") (nonce "{sr}"))"#,
                k = i.secret,
                cr = i.cr,
                sr = i.sr
            );
            format!(
                r#"(hash {ms} (tag "uaf") (nonce "{}") (nonce "{}") (nonce "{ch}"))"#,
                i.cr, i.sr
            )
        }
    }
}

fn binding_shapes() -> Outcome {
    let mut checked = 0;
    for binding in BindingMethod::ALL {
        let variant = TlsVariant::ALL
            .into_iter()
            .find(|v| binding.legal_for(*v))
            .ok_or(format!("{binding:?} has no legal TLS variant"))?;
        let mut runner = TestRunner::new(Config {
            failure_persistence: None,
            ..Config::with_cases(100)
        });
        runner
            .run(&inputs(), |i| {
                let got = make_tls_data(
                    binding,
                    &Term::nonce(i.challenge.clone()),
                    &session(variant, &i),
                    &i.owner,
                )
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
                prop_assert_eq!(got.to_string(), canonical(binding, &i));
                Ok(())
            })
            .map_err(|e| format!("{binding:?}: {e}"))?;
        checked += 100;
    }
    Ok(format!("{checked} randomized cases"))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let sweep = oracle::exhaustive_sweep();
    let took = start.elapsed();
    if let Some(first) = sweep.mismatches.first() {
        return Err(format!(
            "{} mismatches, first: {first}",
            sweep.mismatches.len()
        ));
    }
    if took > Duration::from_secs(300) {
        return Err(format!("took {took:.1?}"));
    }
    Ok(format!(
        "{} knowledge bases, {} queries, 0 mismatches in {took:.1?}",
        sweep.knowledge_bases, sweep.queries
    ))
}

fn leaks(b: &Bundle, tls: TlsVariant) -> Vec<Term> {
    let kb = KnowledgeBase::from_terms(b.adversary_knowledge());
    let mut guarded = b.non_originating.clone();
    if tls.is_dh() {
        for s in &b.strands {
            if let (Some(session), Some(peer)) = (&s.session, s.tls_peer) {
                if s.is_honest() && b.strands[peer].is_honest() {
                    guarded.push(session.cwk.clone());
                    guarded.push(session.swk.clone());
                }
            }
        }
    }
    guarded.into_iter().filter(|t| kb.derivable(t)).collect()
}

fn secrecy() -> Outcome {
    let mut bundles = 0;
    for policy in [VerificationPolicy::Strict, VerificationPolicy::Lenient] {
        for sc in builtins() {
            for m in ModelId::all() {
                for p in sc.protocols(m) {
                    let run = sc.run(m, p, policy).map_err(|e| e.to_string())?;
                    let l = leaks(&run.bundle, m.tls());
                    if !l.is_empty() {
                        return Err(format!("{} on {m} {p}: {l:?}", sc.name));
                    }
                    bundles += 1;
                }
            }
        }
        for m in ModelId::all() {
            for p in Perspective::ALL {
                let out = search_counterexample(m, p, SearchBounds::default(), policy)
                    .map_err(|e| e.to_string())?;
                if !out.secrecy_violations.is_empty() {
                    return Err(format!("search {m} {p}: {:?}", out.secrecy_violations));
                }
                if let Some(w) = &out.verdict.witness {
                    let l = leaks(w, m.tls());
                    if !l.is_empty() {
                        return Err(format!("witness {m} {p}: {l:?}"));
                    }
                }
                bundles += 1;
            }
        }
    }
    Ok(format!("{bundles} scripted runs and searches, 0 leaks"))
}

fn lenient_flip() -> Outcome {
    let m = run_matrix(&MatrixOptions {
        policy: VerificationPolicy::Lenient,
        ..MatrixOptions::default()
    })
    .map_err(|e| e.to_string())?;
    let strict = expected(VerificationPolicy::Strict);
    for sel in ["uaf-endpoint-tls12-dh", "uaf-servercert-tls12-dh"] {
        let model: ModelId = sel.parse().map_err(|e| format!("{e}"))?;
        for p in [Perspective::ServerReg, Perspective::ServerAuth] {
            let c = m.get(model, p).ok_or(format!("missing {sel} {p}"))?;
            if strict.get(&(model, p)) != Some(&Status::Satisfied) {
                return Err(format!("{sel} {p} is not ok under strict"));
            }
            if c.verdict.status != Status::Violated
                || c.verdict.source.as_deref() != Some("challenge-reissue")
            {
                return Err(format!(
                    "{sel} {p}: {} via {:?}",
                    c.verdict.status, c.verdict.source
                ));
            }
        }
    }
    Ok(format!(
        "{} cells differ from strict",
        m.diff(&strict).len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("strict matrix", table_reproduction),
        ("witness audit", witness_audit),
        ("challenge reissue", challenge_reissue),
        ("binding shapes", binding_shapes),
        ("derivation oracle", oracle_equivalence),
        ("secrecy", secrecy),
        ("lenient flip", lenient_flip),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", n + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
