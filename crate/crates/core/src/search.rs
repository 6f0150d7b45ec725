//! Bounded search for Goal 1 counterexamples.
//!
//! The adversary's moves are: let an honest server accept its TLS connection,
//! make the honest client open a channel (to the adversary's server or, through
//! the network, to a fresh honest server strand), and deliver a message it can
//! derive to a waiting strand. Honest sends happen eagerly. Opening moves are
//! taken first and in a fixed kind order; they commute with deliveries, so
//! this loses no reachable bundle. Iterative deepening makes the first witness
//! a shortest one.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::Serialize;
use thiserror::Error;

use crate::bundle::{Bundle, Direction, Role, StrandStatus};
use crate::exec::{ClientPeer, ExecError, Execution};
use crate::goal::{goal1, goal1_failures, Perspective};
use crate::model::ModelId;
use crate::term::Term;
use crate::tls::TlsVariant;
use crate::uaf::{Expectation, Slot, VerificationPolicy};

pub const DEFAULT_BUDGET: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SearchBounds {
    /// Honest strands per role.
    pub sessions_per_role: usize,
    /// Adversary-owned server identities.
    pub adversary_servers: usize,
    /// Compromised atoms handed to the adversary.
    pub compromised: usize,
    /// Constructor applications the adversary may stack on known terms.
    pub synthesis_depth: usize,
    /// Search nodes before giving up.
    pub budget: usize,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds {
            sessions_per_role: 2,
            adversary_servers: 1,
            compromised: 1,
            synthesis_depth: 4,
            budget: DEFAULT_BUDGET,
        }
    }
}

impl SearchBounds {
    pub fn with_budget(budget: usize) -> Self {
        SearchBounds {
            budget,
            ..SearchBounds::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Satisfied,
    Violated,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Satisfied => "ok",
            Status::Violated => "violated",
        })
    }
}

/// Judgement of one matrix cell. A satisfied verdict means no violation was
/// found within the search bounds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub model: ModelId,
    pub perspective: Perspective,
    pub status: Status,
    pub witness: Option<Bundle>,
    /// What produced the witness: a scenario name or `search`.
    pub source: Option<String>,
}

impl Verdict {
    pub fn satisfied(model: ModelId, perspective: Perspective) -> Verdict {
        Verdict {
            model,
            perspective,
            status: Status::Satisfied,
            witness: None,
            source: None,
        }
    }

    pub fn violated(
        model: ModelId,
        perspective: Perspective,
        witness: Bundle,
        source: &str,
    ) -> Verdict {
        Verdict {
            model,
            perspective,
            status: Status::Violated,
            witness: Some(witness),
            source: Some(source.to_owned()),
        }
    }

    pub fn is_violated(&self) -> bool {
        self.status == Status::Violated
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    OpenServer,
    OpenClient(ClientPeer),
    Deliver { strand: usize, msg: Term },
}

impl Action {
    fn open_rank(&self) -> Option<u8> {
        match self {
            Action::OpenServer => Some(0),
            Action::OpenClient(ClientPeer::Adversary) => Some(1),
            Action::OpenClient(ClientPeer::Honest { leak_pms: false }) => Some(2),
            Action::OpenClient(ClientPeer::Honest { leak_pms: true }) => Some(3),
            Action::Deliver { .. } => None,
        }
    }

    pub fn describe(&self, exec: &Execution) -> String {
        match self {
            Action::OpenServer => "open-server".into(),
            Action::OpenClient(ClientPeer::Adversary) => "open-client (peer adversary)".into(),
            Action::OpenClient(ClientPeer::Honest { leak_pms }) => {
                format!(
                    "open-client (peer honest server{})",
                    if *leak_pms { ", pms leaked" } else { "" }
                )
            }
            Action::Deliver { strand, msg } => {
                format!("deliver {} {msg}", exec.bundle().strands[*strand].id)
            }
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SearchError {
    #[error("search budget of {budget} states exceeded")]
    BoundsExceeded { budget: usize },
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub verdict: Verdict,
    pub explored: usize,
    /// Adversary moves leading to the witness.
    pub trace: Vec<String>,
    pub secrecy_violations: Vec<String>,
}

struct Searcher {
    model: ModelId,
    perspective: Perspective,
    bounds: SearchBounds,
    explored: usize,
    visited: HashMap<u64, usize>,
    secrecy: BTreeSet<String>,
    cut_off: bool,
}

#[derive(Clone)]
struct Node {
    exec: Execution,
    opening: bool,
    last_open: u8,
    trace: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum AtomType {
    Username,
    Principal,
    Challenge,
    Password,
    Attestation,
    Assertion,
    Any,
}

/// The type of the variable received in slot `i` of `role`'s message.
fn slot_type(role: Role, i: usize) -> AtomType {
    match (role, i) {
        (Role::ClientReg, 0) | (Role::BaselineServer, 0) => AtomType::Username,
        (Role::ClientReg, 1) | (Role::ClientAuth, 0) => AtomType::Principal,
        (Role::ClientReg, 2) | (Role::ClientAuth, 1) => AtomType::Challenge,
        (Role::BaselineServer, 1) => AtomType::Password,
        (Role::ServerReg, 4) => AtomType::Attestation,
        (Role::ServerAuth, 2) => AtomType::Assertion,
        _ => AtomType::Any,
    }
}

fn has_type(exec: &Execution, ty: AtomType, t: &Term) -> bool {
    let w = exec.world();
    match (ty, t) {
        (AtomType::Any, _) => true,
        (AtomType::Username, Term::Name(n)) => *n == w.user || *n == w.adversary_user,
        (AtomType::Principal, Term::Name(n)) => [&w.client, &w.server, &w.adversary].contains(&n),
        (AtomType::Challenge, Term::Nonce(n)) => n.rsplit('.').next() == Some("challenge"),
        (AtomType::Password, Term::Nonce(n)) => n.starts_with("pw."),
        (AtomType::Attestation, Term::Sig { signer, .. }) => *signer == w.attestation_key,
        (AtomType::Assertion, Term::Sig { signer, .. }) => {
            *signer == w.registered_key || signer.ends_with(".authk")
        }
        _ => false,
    }
}

/// Terms of the adversary's knowledge that fit `slot`.
fn pool(exec: &Execution, slot: &Slot) -> Vec<Term> {
    let mut out: BTreeSet<Term> = exec
        .kb()
        .terms()
        .filter(|t| slot.admits(t))
        .cloned()
        .collect();
    match slot {
        Slot::Name => out.extend(exec.world().names()),
        Slot::Const(c) if exec.kb().derivable(c) => {
            out.insert(c.clone());
        }
        _ => {}
    }
    out.into_iter().collect()
}

/// Components of a signed tuple that fit `slot`.
fn signed_components(sig: &Term, slot: &Slot) -> Vec<Term> {
    match sig {
        Term::Sig { payload, .. } => match payload.as_ref() {
            Term::Tuple(parts) => parts.iter().filter(|t| slot.admits(t)).cloned().collect(),
            _ => Vec::new(),
        },
        _ => Vec::new(),
    }
}

fn product_into(
    exec: &Execution,
    strand: usize,
    exp: &Expectation,
    pools: &[Vec<Term>],
    out: &mut BTreeSet<Term>,
) {
    if pools.iter().any(Vec::is_empty) {
        return;
    }
    let mut idx = vec![0usize; pools.len()];
    loop {
        let parts = idx.iter().zip(pools).map(|(&i, p)| p[i].clone()).collect();
        let msg = Term::senc(exp.key.clone(), exp.payload(parts));
        if exec.would_accept(strand, &msg) {
            out.insert(msg);
        }
        let mut k = 0;
        while k < idx.len() {
            idx[k] += 1;
            if idx[k] < pools[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == idx.len() {
            return;
        }
    }
}

/// Messages the adversary can derive that `strand` would accept.
pub fn delivery_candidates(exec: &Execution, strand: usize, synthesis_depth: usize) -> Vec<Term> {
    let Some(exp) = exec.expectation(strand) else {
        return Vec::new();
    };
    let mut out: BTreeSet<Term> = exec
        .network()
        .observed()
        .filter(|t| matches!(t, Term::SymEnc { key, .. } if **key == exp.key))
        .filter(|t| exec.would_accept(strand, t))
        .cloned()
        .collect();
    let layers = if exp.slots.len() > 1 { 2 } else { 1 };
    if layers <= synthesis_depth && exec.kb().derivable(&exp.key) {
        let role = exec.bundle().strands[strand].role;
        let pools: Vec<Vec<Term>> = exp
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let ty = slot_type(role, i);
                pool(exec, s)
                    .into_iter()
                    .filter(|t| has_type(exec, ty, t))
                    .collect()
            })
            .collect();
        match exp.slots.iter().position(|s| matches!(s, Slot::Sig)) {
            Some(sig_at) => {
                for sig in &pools[sig_at] {
                    let guided: Vec<Vec<Term>> = pools
                        .iter()
                        .enumerate()
                        .map(|(i, p)| {
                            if i == sig_at {
                                return vec![sig.clone()];
                            }
                            let inside = signed_components(sig, &exp.slots[i]);
                            if inside.is_empty() {
                                p.clone()
                            } else {
                                inside
                            }
                        })
                        .collect();
                    product_into(exec, strand, &exp, &guided, &mut out);
                }
            }
            None => product_into(exec, strand, &exp, &pools, &mut out),
        }
    }
    out.into_iter().collect()
}

fn fingerprint(node: &Node) -> u64 {
    let mut h = DefaultHasher::new();
    node.opening.hash(&mut h);
    node.last_open.hash(&mut h);
    for s in &node.exec.bundle().strands {
        (
            s.role,
            s.height(),
            matches!(s.status, StrandStatus::Complete),
        )
            .hash(&mut h);
    }
    for t in node.exec.kb().terms() {
        t.hash(&mut h);
    }
    h.finish()
}

impl Searcher {
    fn actions(&self, node: &Node) -> Vec<Action> {
        let exec = &node.exec;
        let mut out = Vec::new();
        if node.opening {
            let b = &self.bounds;
            let servers_left = exec.server_count() < b.sessions_per_role;
            let clients_left = exec.client_count() < b.sessions_per_role;
            let leak_ok = !self.perspective.is_client()
                && self.model.tls() == TlsVariant::Tls12Rsa
                && exec.compromised_count() < b.compromised;
            let opens = [
                (servers_left, Action::OpenServer),
                (
                    clients_left && b.adversary_servers > 0,
                    Action::OpenClient(ClientPeer::Adversary),
                ),
                (
                    clients_left && servers_left,
                    Action::OpenClient(ClientPeer::Honest { leak_pms: false }),
                ),
                (
                    clients_left && servers_left && leak_ok,
                    Action::OpenClient(ClientPeer::Honest { leak_pms: true }),
                ),
            ];
            out.extend(
                opens
                    .into_iter()
                    .filter(|(ok, a)| *ok && a.open_rank().unwrap_or(0) >= node.last_open)
                    .map(|(_, a)| a),
            );
        }
        for strand in exec.awaiting() {
            for msg in delivery_candidates(exec, strand, self.bounds.synthesis_depth) {
                out.push(Action::Deliver { strand, msg });
            }
        }
        out
    }

    fn step(&self, node: &Node, action: &Action) -> Result<Option<Node>, SearchError> {
        let mut next = node.clone();
        next.trace.push(action.describe(&node.exec));
        let result = match action {
            Action::OpenServer => next.exec.open_server().map(|_| ()),
            Action::OpenClient(peer) => next.exec.open_client(*peer).map(|_| ()),
            Action::Deliver { strand, msg } => next.exec.deliver(*strand, msg.clone()).map(|_| ()),
        };
        match result {
            Ok(()) => {}
            Err(ExecError::Tls(_)) => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        match action.open_rank() {
            Some(r) => next.last_open = r,
            None => next.opening = false,
        }
        Ok(Some(next))
    }

    fn violated(&self, exec: &Execution) -> bool {
        !goal1(exec.bundle(), self.perspective, self.model)
    }

    fn dfs(&mut self, node: &Node, depth_left: usize) -> Result<Option<Node>, SearchError> {
        let actions = self.actions(node);
        if depth_left == 0 {
            if !actions.is_empty() {
                self.cut_off = true;
            }
            return Ok(None);
        }
        for action in actions {
            self.explored += 1;
            if self.explored > self.bounds.budget {
                return Err(SearchError::BoundsExceeded {
                    budget: self.bounds.budget,
                });
            }
            let Some(next) = self.step(node, &action)? else {
                continue;
            };
            self.secrecy.extend(next.exec.secrecy_violations());
            if self.violated(&next.exec) {
                return Ok(Some(next));
            }
            let fp = fingerprint(&next);
            if self.visited.get(&fp).is_some_and(|&d| d >= depth_left - 1) {
                continue;
            }
            self.visited.insert(fp, depth_left - 1);
            if let Some(found) = self.dfs(&next, depth_left - 1)? {
                return Ok(Some(found));
            }
        }
        Ok(None)
    }
}

/// Searches for a bundle in which a completed `perspective` strand violates
/// Goal 1.
pub fn search_counterexample(
    model: ModelId,
    perspective: Perspective,
    bounds: SearchBounds,
    policy: VerificationPolicy,
) -> Result<SearchOutcome, SearchError> {
    let exec = Execution::new(model, perspective.protocol(model), policy)?;
    let root = Node {
        exec,
        opening: true,
        last_open: 0,
        trace: Vec::new(),
    };
    let mut s = Searcher {
        model,
        perspective,
        bounds,
        explored: 0,
        visited: HashMap::new(),
        secrecy: BTreeSet::new(),
        cut_off: false,
    };
    // Each honest strand takes at most one application delivery.
    let max_depth = 4 * bounds.sessions_per_role;
    for limit in 1..=max_depth {
        s.visited.clear();
        s.cut_off = false;
        if let Some(found) = s.dfs(&root, limit)? {
            let witness = found.exec.into_bundle();
            return Ok(SearchOutcome {
                verdict: Verdict::violated(model, perspective, witness, "search"),
                explored: s.explored,
                trace: found.trace,
                secrecy_violations: s.secrecy.into_iter().collect(),
            });
        }
        if !s.cut_off {
            break;
        }
    }
    Ok(SearchOutcome {
        verdict: Verdict::satisfied(model, perspective),
        explored: s.explored,
        trace: Vec::new(),
        secrecy_violations: s.secrecy.into_iter().collect(),
    })
}

/// Strips a fresh atom id down to its label (`s1.challenge` to `challenge`).
fn skeleton(t: &Term) -> String {
    let text = t.to_string();
    let mut out = String::with_capacity(text.len());
    let mut rest = text.as_str();
    while let Some(q) = rest.find('"') {
        out.push_str(&rest[..=q]);
        rest = &rest[q + 1..];
        let end = rest.find('"').unwrap_or(rest.len());
        let lit = &rest[..end];
        out.push_str(lit.rsplit_once('.').map_or(lit, |(_, label)| label));
        rest = &rest[end..];
        if let Some(stripped) = rest.strip_prefix('"') {
            out.push('"');
            rest = stripped;
        }
    }
    out.push_str(rest);
    out
}

/// Bundles have the same shape when their strands match one to one by role,
/// status and node sequence, with fresh atoms compared by label only.
pub fn same_shape(a: &Bundle, b: &Bundle) -> bool {
    fn shapes(bundle: &Bundle) -> Vec<String> {
        let mut v: Vec<String> = bundle
            .strands
            .iter()
            .map(|s| {
                let nodes: Vec<String> = s
                    .nodes
                    .iter()
                    .map(|&e| {
                        let ev = &bundle.events[e];
                        let dir = if ev.direction == Direction::Send {
                            "+"
                        } else {
                            "-"
                        };
                        format!("{dir}{}", skeleton(&ev.term))
                    })
                    .collect();
                format!("{}|{:?}|{}", s.role, s.status, nodes.join(" "))
            })
            .collect();
        v.sort();
        v
    }
    shapes(a) == shapes(b)
}

/// Perspective strands of the witness that fail Goal 1.
pub fn witness_failures(v: &Verdict) -> Vec<String> {
    v.witness
        .as_ref()
        .map(|w| goal1_failures(w, v.perspective, v.model))
        .unwrap_or_default()
}
