use uaf_bindlab::scenario::builtins;
use uaf_bindlab::search::search_counterexample;
use uaf_bindlab::{
    Bundle, KnowledgeBase, ModelId, Perspective, SearchBounds, Term, TlsVariant, VerificationPolicy,
};

/// Secrets the adversary must never derive in this bundle.
fn leaks(b: &Bundle, tls: TlsVariant) -> Vec<Term> {
    let kb = KnowledgeBase::from_terms(b.adversary_knowledge());
    let mut guarded: Vec<Term> = b.non_originating.clone();
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

#[test]
fn guarded_keys_are_listed() {
    let b = uaf_bindlab::run_registration(
        "uaf-endpoint-tls12-dh".parse().unwrap(),
        VerificationPolicy::Strict,
    )
    .unwrap();
    assert!(b.non_originating.contains(&Term::privk("server")));
    assert!(b.non_originating.contains(&Term::privk("ca")));
    assert!(b.non_originating.contains(&Term::privk("aaid-1.attest")));
    assert!(leaks(&b, TlsVariant::Tls12Dh).is_empty());
}

#[test]
fn scripted_scenarios_leak_nothing() {
    for policy in [VerificationPolicy::Strict, VerificationPolicy::Lenient] {
        for sc in builtins() {
            for m in ModelId::all() {
                for p in sc.protocols(m) {
                    let run = sc.run(m, p, policy).unwrap();
                    let l = leaks(&run.bundle, m.tls());
                    assert!(l.is_empty(), "{} {m} {p}: {l:?}", sc.name);
                }
            }
        }
    }
}

#[test]
fn bounded_search_leaks_nothing() {
    for policy in [VerificationPolicy::Strict, VerificationPolicy::Lenient] {
        for m in ModelId::all() {
            for p in Perspective::ALL {
                let out = search_counterexample(m, p, SearchBounds::default(), policy).unwrap();
                assert!(
                    out.secrecy_violations.is_empty(),
                    "{m} {p}: {:?}",
                    out.secrecy_violations
                );
                if let Some(w) = &out.verdict.witness {
                    assert!(leaks(w, m.tls()).is_empty(), "{m} {p} witness");
                }
            }
        }
    }
}

#[test]
fn a_leaked_premaster_secret_is_not_a_secrecy_violation_for_rsa() {
    let run = uaf_bindlab::scenario_pms_compromise(
        "uaf-servercert-tls12-rsa".parse().unwrap(),
        uaf_bindlab::Protocol::Registration,
        VerificationPolicy::Strict,
    )
    .unwrap();
    let kb = KnowledgeBase::from_terms(run.bundle.adversary_knowledge());
    let c = run.bundle.strands.iter().find(|s| s.id == "c1").unwrap();
    assert!(kb.derivable(&c.session.as_ref().unwrap().cwk));
    assert!(leaks(&run.bundle, TlsVariant::Tls12Rsa).is_empty());
}
