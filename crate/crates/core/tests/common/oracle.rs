//! Brute-force reference for derivability.
//!
//! The closure is computed over a finite universe: every subterm of the
//! knowledge base and the target, widened with the key atoms and DH halves
//! that rules may consult. Each pass applies every rule to every universe
//! member until nothing new appears.

use std::collections::BTreeSet;

use uaf_bindlab::Term;

fn collect(t: &Term, out: &mut BTreeSet<Term>) {
    if !out.insert(t.clone()) {
        return;
    }
    match t {
        Term::Tuple(ps) | Term::Hash(ps) => ps.iter().for_each(|p| collect(p, out)),
        Term::SymKey(d) => collect(d, out),
        Term::SymEnc { key, payload } => {
            collect(key, out);
            collect(payload, out);
        }
        Term::AsymEnc { recipient, payload }
        | Term::Sig {
            signer: recipient,
            payload,
        } => {
            collect(&Term::PublicKey(recipient.clone()), out);
            collect(&Term::PrivateKey(recipient.clone()), out);
            collect(payload, out);
        }
        Term::DhPublic(e) => collect(&Term::DhExponent(e.clone()), out),
        Term::DhShared(a, b) => {
            for e in [a, b] {
                collect(&Term::DhExponent(e.clone()), out);
                collect(&Term::DhPublic(e.clone()), out);
            }
        }
        _ => {}
    }
}

/// Everything the closure may ever contain for this query.
pub fn universe(kb: &[Term], target: &Term) -> BTreeSet<Term> {
    let mut u = BTreeSet::new();
    for t in kb.iter().chain(std::iter::once(target)) {
        collect(t, &mut u);
    }
    u
}

fn synthesizable(k: &BTreeSet<Term>, t: &Term) -> bool {
    let has = |x: &Term| k.contains(x);
    match t {
        Term::Name(_) | Term::Tag(_) => true,
        Term::Tuple(ps) | Term::Hash(ps) => ps.iter().all(has),
        Term::SymKey(d) => has(d),
        Term::SymEnc { key, payload } => has(key) && has(payload),
        Term::AsymEnc { recipient, payload } => {
            has(&Term::PublicKey(recipient.clone())) && has(payload)
        }
        Term::Sig { signer, payload } => has(&Term::PrivateKey(signer.clone())) && has(payload),
        Term::DhPublic(e) => has(&Term::DhExponent(e.clone())),
        Term::DhShared(a, b) => {
            let half = |x: &String, y: &String| {
                has(&Term::DhExponent(x.clone())) && has(&Term::DhPublic(y.clone()))
            };
            half(a, b) || half(b, a)
        }
        _ => false,
    }
}

/// Terms one analysis rule extracts from `c` given `k`.
fn analyse(k: &BTreeSet<Term>, c: &Term) -> Vec<Term> {
    match c {
        Term::Tuple(ps) => ps.clone(),
        Term::Sig { payload, .. } => vec![(**payload).clone()],
        Term::SymEnc { key, payload } if k.contains(key) => vec![(**payload).clone()],
        Term::AsymEnc { recipient, payload }
            if k.contains(&Term::PrivateKey(recipient.clone())) =>
        {
            vec![(**payload).clone()]
        }
        _ => Vec::new(),
    }
}

/// Least set of universe terms closed under every rule, seeded by `kb`.
pub fn closure(kb: &[Term], universe: &BTreeSet<Term>) -> BTreeSet<Term> {
    let mut k: BTreeSet<Term> = kb.iter().cloned().collect();
    loop {
        let mut new: BTreeSet<Term> = k.iter().flat_map(|c| analyse(&k, c)).collect();
        new.extend(universe.iter().filter(|t| synthesizable(&k, t)).cloned());
        let before = k.len();
        k.extend(new);
        if k.len() == before {
            return k;
        }
    }
}

pub fn derivable(kb: &[Term], target: &Term) -> bool {
    closure(kb, &universe(kb, target)).contains(target)
}

/// The ten atoms of the exhaustive sweep.
pub fn atoms() -> Vec<Term> {
    vec![
        Term::name("a"),
        Term::tag("t"),
        Term::nonce("n1"),
        Term::nonce("n2"),
        Term::nonce("k"),
        Term::dh_exp("x"),
        Term::dh_exp("y"),
        Term::privk("b"),
        Term::pubk("b"),
        Term::pms("p"),
    ]
}

/// Knowledge-base candidates: the non-public atoms and compound terms that
/// exercise every analysis rule.
pub fn kb_pool() -> Vec<Term> {
    let n = |s: &str| Term::nonce(s);
    let k = Term::symkey(n("k"));
    let mut pool: Vec<Term> = atoms()
        .into_iter()
        .filter(|t| !t.is_public_constant())
        .collect();
    pool.retain(|t| *t != Term::dh_exp("y") && *t != Term::nonce("n2"));
    pool.extend([
        Term::senc(k.clone(), n("n1")),
        Term::senc(k.clone(), Term::tuple(vec![n("n2"), Term::privk("b")])),
        Term::senc(Term::symkey(n("n1")), n("k")),
        Term::aenc("b", n("k")),
        Term::aenc("b", Term::tuple(vec![n("n1"), Term::pms("p")])),
        Term::sig("b", n("n2")),
        Term::hash(vec![n("n1"), n("n2")]),
        Term::dh_pub("y"),
        Term::senc(Term::symkey(Term::dh_shared("x", "y")), Term::pms("p")),
        Term::tuple(vec![n("n1"), Term::dh_pub("x")]),
        Term::senc(
            Term::symkey(Term::hash(vec![n("n1"), n("n2")])),
            Term::dh_exp("y"),
        ),
    ]);
    pool
}

/// Query targets of depth at most four: every atom, every pool subterm, and
/// one- and two-level compositions over the atoms.
pub fn targets() -> Vec<Term> {
    let atoms = atoms();
    let mut out = BTreeSet::new();
    for t in kb_pool() {
        collect(&t, &mut out);
    }
    out.extend(atoms.iter().cloned());
    for a in &atoms {
        out.insert(Term::hash(vec![a.clone()]));
        out.insert(Term::symkey(a.clone()));
        out.insert(Term::senc(Term::symkey(Term::nonce("k")), a.clone()));
        out.insert(Term::aenc("b", a.clone()));
        out.insert(Term::sig("b", a.clone()));
        for b in &atoms {
            out.insert(Term::tuple(vec![a.clone(), b.clone()]));
        }
    }
    out.insert(Term::dh_shared("x", "y"));
    out.insert(Term::dh_pub("x"));
    out.insert(Term::senc(
        Term::symkey(Term::hash(vec![Term::nonce("n1"), Term::nonce("n2")])),
        Term::tuple(vec![Term::dh_pub("y"), Term::name("a")]),
    ));
    out.insert(Term::sig(
        "b",
        Term::tuple(vec![
            Term::hash(vec![Term::pms("p")]),
            Term::dh_shared("x", "y"),
        ]),
    ));
    out.into_iter().filter(|t| t.depth() <= 4).collect()
}

/// Every subset of `pool` with at most `max` members.
pub fn subsets(pool: &[Term], max: usize) -> Vec<Vec<Term>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![(Vec::<Term>::new(), 0usize)];
    for _ in 0..max {
        let mut next = Vec::new();
        for (set, start) in &frontier {
            for (i, t) in pool.iter().enumerate().skip(*start) {
                let mut s = set.clone();
                s.push(t.clone());
                out.push(s.clone());
                next.push((s, i + 1));
            }
        }
        frontier = next;
    }
    out
}

#[derive(Debug, Default)]
pub struct Sweep {
    pub knowledge_bases: usize,
    pub queries: usize,
    pub mismatches: Vec<String>,
}

/// Compares the engine with the oracle on every (kb, target) pair.
pub fn exhaustive_sweep() -> Sweep {
    use uaf_bindlab::KnowledgeBase;

    let pool = kb_pool();
    let targets = targets();
    let mut sweep = Sweep::default();
    for kb in subsets(&pool, 6) {
        sweep.knowledge_bases += 1;
        let engine = KnowledgeBase::from_terms(kb.clone())
            .saturate()
            .expect("no assumptions");
        let mut u = BTreeSet::new();
        for t in kb.iter().chain(targets.iter()) {
            collect(t, &mut u);
        }
        let reference = closure(&kb, &u);
        for t in &targets {
            sweep.queries += 1;
            if engine.derivable(t) != reference.contains(t) {
                sweep.mismatches.push(format!(
                    "kb {:?} target {t}: engine {} oracle {}",
                    kb.iter().map(Term::to_string).collect::<Vec<_>>(),
                    engine.derivable(t),
                    reference.contains(t)
                ));
            }
        }
    }
    sweep
}
