//! Dolev-Yao knowledge: saturation under decomposition and derivability by
//! composition.
//!
//! A knowledge base is split into an analysis phase (`saturate`: split tuples,
//! open ciphertexts whose key is derivable, read signed payloads, complete DH
//! exchanges) and a synthesis phase (`derivable`: build the target bottom-up
//! from saturated terms). Hashes are never inverted.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::term::Term;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OriginationKind {
    /// Never carried in any message and unknown to the adversary.
    NonOriginating,
    /// Originates on exactly one strand, carried in a message.
    UniquelyOriginating,
    /// Generated on exactly one strand, possibly never carried.
    UniquelyGenerated,
    /// May be learned, but the adversary cannot originate it.
    PenetratorNonOriginating,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct OriginationAssumption {
    pub kind: OriginationKind,
    pub subject: Term,
}

impl OriginationAssumption {
    pub fn new(kind: OriginationKind, subject: Term) -> Result<Self, KnowledgeError> {
        let ok = match kind {
            OriginationKind::NonOriginating => matches!(
                subject,
                Term::PrivateKey(_) | Term::DhExponent(_) | Term::SymKey(_)
            ),
            OriginationKind::UniquelyOriginating | OriginationKind::UniquelyGenerated => matches!(
                subject,
                Term::Nonce(_) | Term::PremasterSecret(_) | Term::DhExponent(_)
            ),
            OriginationKind::PenetratorNonOriginating => subject.is_atom(),
        };
        if ok {
            Ok(OriginationAssumption { kind, subject })
        } else {
            Err(KnowledgeError::IllSortedAssumption { kind, subject })
        }
    }

    pub fn non_originating(subject: Term) -> Result<Self, KnowledgeError> {
        Self::new(OriginationKind::NonOriginating, subject)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum KnowledgeError {
    #[error("non-originating term {0} would enter adversary knowledge")]
    NonOriginatingLeak(Term),
    #[error("{kind:?} assumption cannot apply to {subject}")]
    IllSortedAssumption {
        kind: OriginationKind,
        subject: Term,
    },
}

/// How a term entered a saturated knowledge base.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    Known,
    Public,
    Split,
    Decrypt,
    AsymDecrypt,
    OpenSig,
    DhCombine,
    Compose,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Known => "known",
            Rule::Public => "public",
            Rule::Split => "split",
            Rule::Decrypt => "decrypt",
            Rule::AsymDecrypt => "asym-decrypt",
            Rule::OpenSig => "open-sig",
            Rule::DhCombine => "dh-combine",
            Rule::Compose => "compose",
        })
    }
}

/// A derivation tree produced by [`KnowledgeBase::explain`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    pub term: Term,
    pub rule: Rule,
    pub premises: Vec<Derivation>,
}

impl Derivation {
    fn write_indented(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        writeln!(
            f,
            "{:indent$}{}  [{}]",
            "",
            self.term,
            self.rule,
            indent = depth * 2
        )?;
        for p in &self.premises {
            p.write_indented(f, depth + 1)?;
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(Derivation::size).sum::<usize>()
    }
}

impl fmt::Display for Derivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_indented(f, 0)
    }
}

type Provenance = HashMap<Term, (Rule, Vec<Term>)>;

#[derive(Clone, Debug, Default)]
pub struct KnowledgeBase {
    terms: BTreeSet<Term>,
    assumptions: BTreeSet<OriginationAssumption>,
    forbidden: HashSet<Term>,
    /// Ciphertexts whose key is not yet derivable.
    sealed: Vec<Term>,
    exponents: Vec<String>,
    publics: Vec<String>,
    saturated: bool,
}

impl PartialEq for KnowledgeBase {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms && self.assumptions == other.assumptions
    }
}

impl Eq for KnowledgeBase {}

impl KnowledgeBase {
    pub fn new() -> Self {
        KnowledgeBase::default()
    }

    /// Unsaturated knowledge base over `terms` with no assumptions.
    pub fn from_terms(terms: impl IntoIterator<Item = Term>) -> Self {
        let mut kb = KnowledgeBase::new();
        kb.terms.extend(terms);
        kb
    }

    pub fn with_assumptions(
        terms: impl IntoIterator<Item = Term>,
        assumptions: impl IntoIterator<Item = OriginationAssumption>,
    ) -> Result<Self, KnowledgeError> {
        let mut kb = KnowledgeBase::new();
        for a in assumptions {
            kb.assume(a)?;
        }
        for t in terms {
            kb.insert(t)?;
        }
        Ok(kb)
    }

    /// Registers an assumption. Fails if a now-forbidden term is already known.
    pub fn assume(&mut self, a: OriginationAssumption) -> Result<(), KnowledgeError> {
        if a.kind == OriginationKind::NonOriginating {
            if self.terms.contains(&a.subject) {
                return Err(KnowledgeError::NonOriginatingLeak(a.subject));
            }
            self.forbidden.insert(a.subject.clone());
        }
        self.assumptions.insert(a);
        Ok(())
    }

    pub fn assumptions(&self) -> impl Iterator<Item = &OriginationAssumption> {
        self.assumptions.iter()
    }

    pub fn is_forbidden(&self, t: &Term) -> bool {
        self.forbidden.contains(t)
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, t: &Term) -> bool {
        self.terms.contains(t)
    }

    pub fn is_saturated(&self) -> bool {
        self.saturated
    }

    /// Adds a term. On a saturated base the closure is maintained
    /// incrementally and the newly learned terms are returned.
    pub fn insert(&mut self, t: Term) -> Result<Vec<Term>, KnowledgeError> {
        if self.saturated {
            let mut learned = Vec::new();
            self.close(vec![t], &mut learned, None)?;
            Ok(learned)
        } else {
            if self.forbidden.contains(&t) {
                return Err(KnowledgeError::NonOriginatingLeak(t));
            }
            Ok(if self.terms.insert(t.clone()) {
                vec![t]
            } else {
                Vec::new()
            })
        }
    }

    /// Closure under decomposition. Fails if a non-originating term surfaces.
    pub fn saturate(&self) -> Result<KnowledgeBase, KnowledgeError> {
        if self.saturated {
            return Ok(self.clone());
        }
        let mut out = self.fresh_like();
        let mut learned = Vec::new();
        out.close(self.terms.iter().cloned().collect(), &mut learned, None)?;
        Ok(out)
    }

    fn fresh_like(&self) -> KnowledgeBase {
        KnowledgeBase {
            assumptions: self.assumptions.clone(),
            forbidden: self.forbidden.clone(),
            saturated: true,
            ..KnowledgeBase::default()
        }
    }

    fn add(
        &mut self,
        t: Term,
        rule: Rule,
        from: &[&Term],
        work: &mut Vec<Term>,
        learned: &mut Vec<Term>,
        prov: &mut Option<&mut Provenance>,
    ) -> Result<(), KnowledgeError> {
        if self.terms.contains(&t) {
            return Ok(());
        }
        if self.forbidden.contains(&t) {
            return Err(KnowledgeError::NonOriginatingLeak(t));
        }
        if let Some(p) = prov.as_deref_mut() {
            p.insert(
                t.clone(),
                (rule, from.iter().map(|x| (*x).clone()).collect()),
            );
        }
        match &t {
            Term::DhExponent(e) => self.exponents.push(e.clone()),
            Term::DhPublic(e) => self.publics.push(e.clone()),
            _ => {}
        }
        self.terms.insert(t.clone());
        learned.push(t.clone());
        work.push(t);
        Ok(())
    }

    fn close(
        &mut self,
        mut work: Vec<Term>,
        learned: &mut Vec<Term>,
        mut prov: Option<&mut Provenance>,
    ) -> Result<(), KnowledgeError> {
        // seed terms that are already present are skipped by `add`
        let seeds = std::mem::take(&mut work);
        for t in seeds {
            self.add(t, Rule::Known, &[], &mut work, learned, &mut prov)?;
        }
        loop {
            while let Some(t) = work.pop() {
                self.decompose(&t, &mut work, learned, &mut prov)?;
            }
            let sealed = std::mem::take(&mut self.sealed);
            let mut opened = false;
            for c in sealed {
                if self.opens(&c) {
                    opened = true;
                    self.decompose(&c, &mut work, learned, &mut prov)?;
                } else {
                    self.sealed.push(c);
                }
            }
            if !opened && work.is_empty() {
                break;
            }
        }
        self.saturated = true;
        Ok(())
    }

    fn opens(&self, c: &Term) -> bool {
        match c {
            Term::SymEnc { key, .. } => self.composable(key),
            Term::AsymEnc { recipient, .. } => {
                self.terms.contains(&Term::PrivateKey(recipient.clone()))
            }
            _ => false,
        }
    }

    fn decompose(
        &mut self,
        t: &Term,
        work: &mut Vec<Term>,
        learned: &mut Vec<Term>,
        prov: &mut Option<&mut Provenance>,
    ) -> Result<(), KnowledgeError> {
        match t {
            Term::Tuple(parts) => {
                for p in parts {
                    self.add(p.clone(), Rule::Split, &[t], work, learned, prov)?;
                }
            }
            Term::Sig { payload, .. } => {
                self.add(
                    (**payload).clone(),
                    Rule::OpenSig,
                    &[t],
                    work,
                    learned,
                    prov,
                )?;
            }
            Term::SymEnc { key, payload } => {
                if self.composable(key) {
                    self.add(
                        (**payload).clone(),
                        Rule::Decrypt,
                        &[t, key],
                        work,
                        learned,
                        prov,
                    )?;
                } else {
                    self.sealed.push(t.clone());
                }
            }
            Term::AsymEnc { recipient, payload } => {
                let sk = Term::PrivateKey(recipient.clone());
                if self.terms.contains(&sk) {
                    self.add(
                        (**payload).clone(),
                        Rule::AsymDecrypt,
                        &[t, &sk],
                        work,
                        learned,
                        prov,
                    )?;
                } else {
                    self.sealed.push(t.clone());
                }
            }
            Term::DhExponent(a) => {
                for b in self.publics.clone() {
                    let premise = Term::DhPublic(b.clone());
                    self.add(
                        Term::dh_shared(a.clone(), b),
                        Rule::DhCombine,
                        &[t, &premise],
                        work,
                        learned,
                        prov,
                    )?;
                }
            }
            Term::DhPublic(b) => {
                for a in self.exponents.clone() {
                    let premise = Term::DhExponent(a.clone());
                    self.add(
                        Term::dh_shared(a, b.clone()),
                        Rule::DhCombine,
                        &[&premise, t],
                        work,
                        learned,
                        prov,
                    )?;
                }
            }
            // A new private key may open sealed asymmetric ciphertexts, and any
            // new term may complete a composite symmetric key; the sealed list
            // is retried by `close` after the worklist drains.
            _ => {}
        }
        Ok(())
    }

    /// Synthesis check against the current term set (assumed saturated).
    fn composable(&self, t: &Term) -> bool {
        if t.is_public_constant() || self.terms.contains(t) {
            return true;
        }
        match t {
            Term::Tuple(parts) | Term::Hash(parts) => parts.iter().all(|p| self.composable(p)),
            Term::SymKey(d) => self.composable(d),
            Term::SymEnc { key, payload } => self.composable(key) && self.composable(payload),
            Term::AsymEnc { recipient, payload } => {
                self.terms.contains(&Term::PublicKey(recipient.clone())) && self.composable(payload)
            }
            Term::Sig { signer, payload } => {
                self.terms.contains(&Term::PrivateKey(signer.clone())) && self.composable(payload)
            }
            Term::DhPublic(e) => self.terms.contains(&Term::DhExponent(e.clone())),
            Term::DhShared(a, b) => {
                let half = |x: &String, y: &String| {
                    self.terms.contains(&Term::DhExponent(x.clone()))
                        && self.composable(&Term::DhPublic(y.clone()))
                };
                half(a, b) || half(b, a)
            }
            _ => false,
        }
    }

    /// True iff `target` can be built from this knowledge.
    pub fn derivable(&self, target: &Term) -> bool {
        if self.saturated {
            self.composable(target)
        } else {
            match self.saturate() {
                Ok(kb) => kb.composable(target),
                Err(_) => false,
            }
        }
    }

    /// One derivation of `target`, if it is derivable.
    pub fn explain(&self, target: &Term) -> Option<Derivation> {
        let mut prov = Provenance::new();
        let mut kb = self.fresh_like();
        let mut learned = Vec::new();
        kb.close(
            self.terms.iter().cloned().collect(),
            &mut learned,
            Some(&mut prov),
        )
        .ok()?;
        kb.build_tree(target, &prov, &mut HashSet::new())
    }

    fn build_tree(
        &self,
        t: &Term,
        prov: &Provenance,
        visiting: &mut HashSet<Term>,
    ) -> Option<Derivation> {
        if !visiting.insert(t.clone()) {
            return None;
        }
        let result = self.build_tree_inner(t, prov, visiting);
        visiting.remove(t);
        result
    }

    fn build_tree_inner(
        &self,
        t: &Term,
        prov: &Provenance,
        visiting: &mut HashSet<Term>,
    ) -> Option<Derivation> {
        if let Some((rule, from)) = prov.get(t) {
            let premises = from
                .iter()
                .map(|p| self.build_tree(p, prov, visiting))
                .collect::<Option<Vec<_>>>()?;
            return Some(Derivation {
                term: t.clone(),
                rule: *rule,
                premises,
            });
        }
        if t.is_public_constant() {
            return Some(Derivation {
                term: t.clone(),
                rule: Rule::Public,
                premises: Vec::new(),
            });
        }
        let parts: Vec<Term> = match t {
            Term::Tuple(p) | Term::Hash(p) => p.clone(),
            Term::SymKey(d) => vec![(**d).clone()],
            Term::SymEnc { key, payload } => vec![(**key).clone(), (**payload).clone()],
            Term::AsymEnc { recipient, payload } => {
                vec![Term::pubk(recipient.clone()), (**payload).clone()]
            }
            Term::Sig { signer, payload } => {
                vec![Term::privk(signer.clone()), (**payload).clone()]
            }
            Term::DhPublic(e) => vec![Term::dh_exp(e.clone())],
            Term::DhShared(a, b) => {
                let (x, y) = if self.terms.contains(&Term::dh_exp(a.clone()))
                    && self.composable(&Term::dh_pub(b.clone()))
                {
                    (a, b)
                } else {
                    (b, a)
                };
                vec![Term::dh_exp(x.clone()), Term::dh_pub(y.clone())]
            }
            _ => return None,
        };
        if !self.composable(t) {
            return None;
        }
        let premises = parts
            .iter()
            .map(|p| self.build_tree(p, prov, visiting))
            .collect::<Option<Vec<_>>>()?;
        Some(Derivation {
            term: t.clone(),
            rule: Rule::Compose,
            premises,
        })
    }
}

/// Closure of `kb` under decomposition.
pub fn saturate(kb: &KnowledgeBase) -> Result<KnowledgeBase, KnowledgeError> {
    kb.saturate()
}

/// Whether `target` is derivable from `kb`, saturating first if needed.
pub fn derivable(kb: &KnowledgeBase, target: &Term) -> bool {
    kb.derivable(target)
}
