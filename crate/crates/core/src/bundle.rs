//! Recorded executions: strands, causal edges and the adversary's knowledge
//! timeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::term::Term;
use crate::tls::{TlsSession, TlsVariant};

/// Session variables a strand may bind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Var {
    Server,
    Ca,
    Cr,
    Sr,
    Pms,
    X,
    Y,
    Username,
    Pw,
    Challenge,
    Appid,
    Fc,
    Authk,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Var::Server => "server",
            Var::Ca => "ca",
            Var::Cr => "cr",
            Var::Sr => "sr",
            Var::Pms => "pms",
            Var::X => "x",
            Var::Y => "y",
            Var::Username => "username",
            Var::Pw => "pw",
            Var::Challenge => "challenge",
            Var::Appid => "appid",
            Var::Fc => "fc",
            Var::Authk => "authk",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    BaselineClient,
    BaselineServer,
    ClientReg,
    ServerReg,
    ClientAuth,
    ServerAuth,
}

impl Role {
    pub fn is_client(self) -> bool {
        matches!(
            self,
            Role::BaselineClient | Role::ClientReg | Role::ClientAuth
        )
    }

    pub fn complement(self) -> Role {
        match self {
            Role::BaselineClient => Role::BaselineServer,
            Role::BaselineServer => Role::BaselineClient,
            Role::ClientReg => Role::ServerReg,
            Role::ServerReg => Role::ClientReg,
            Role::ClientAuth => Role::ServerAuth,
            Role::ServerAuth => Role::ClientAuth,
        }
    }

    /// Number of nodes of a fully executed strand, TLS handshake included.
    pub fn full_height(self, tls: TlsVariant) -> usize {
        let handshake = match tls {
            TlsVariant::Tls12Rsa | TlsVariant::Tls12Dh => 3,
            TlsVariant::Tls13 => 2,
        };
        handshake + 2
    }

    pub fn label(self) -> &'static str {
        match self {
            Role::BaselineClient => "client",
            Role::BaselineServer => "server",
            Role::ClientReg => "client-reg",
            Role::ServerReg => "server-reg",
            Role::ClientAuth => "client-auth",
            Role::ServerAuth => "server-auth",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Owner {
    Honest,
    /// An endpoint played by the adversary with its own legitimate credentials.
    Adversary,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrandStatus {
    Running,
    Complete,
    Halted(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Send,
    Recv,
    /// The adversary composed a message that no strand sent verbatim.
    Synth,
    /// An atom placed in adversary knowledge by the scenario.
    Inject,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    pub strand: Option<usize>,
    pub direction: Direction,
    pub term: Term,
}

/// Causal edge from a sending (or synthesis) event to a receiving event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectionKind {
    /// Fresh material of an adversary-owned endpoint.
    AdversaryFresh,
    /// A secret of an honest strand handed to the adversary.
    Compromised,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Injection {
    pub term: Term,
    pub kind: InjectionKind,
    pub strand: Option<usize>,
}

/// Terms the adversary learned right after `event` (`None` for the initial
/// knowledge).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct KnowledgeStep {
    pub event: Option<usize>,
    pub learned: Vec<Term>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrandTrace {
    pub id: String,
    pub role: Role,
    pub owner: Owner,
    /// Indices into [`Bundle::events`], in strand order.
    pub nodes: Vec<usize>,
    pub bindings: BTreeMap<Var, Term>,
    /// Height at which each binding was established.
    pub bound_at: BTreeMap<Var, usize>,
    pub status: StrandStatus,
    pub session: Option<TlsSession>,
    /// The honest strand at the other end of this strand's TLS channel.
    pub tls_peer: Option<usize>,
    pub full_height: usize,
}

impl StrandTrace {
    /// Number of nodes the strand has executed. The reception that halted a
    /// strand is recorded but does not count.
    pub fn height(&self) -> usize {
        match self.status {
            StrandStatus::Halted(_) => self.nodes.len().saturating_sub(1),
            _ => self.nodes.len(),
        }
    }

    pub fn is_honest(&self) -> bool {
        self.owner == Owner::Honest
    }

    pub fn is_complete(&self) -> bool {
        self.status == StrandStatus::Complete
    }

    pub fn binding(&self, v: Var) -> Option<&Term> {
        self.bindings.get(&v)
    }

    /// The binding of `v` if it was established by height `h`.
    pub fn binding_at(&self, v: Var, h: usize) -> Option<&Term> {
        match self.bound_at.get(&v) {
            Some(&at) if at <= h => self.bindings.get(&v),
            _ => None,
        }
    }

    pub fn bindings_at(&self, h: usize) -> BTreeMap<Var, Term> {
        self.bound_at
            .iter()
            .filter(|(_, &at)| at <= h)
            .map(|(v, _)| (*v, self.bindings[v].clone()))
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bundle {
    pub strands: Vec<StrandTrace>,
    pub events: Vec<Event>,
    pub edges: Vec<Edge>,
    pub knowledge: Vec<KnowledgeStep>,
    pub injected: Vec<Injection>,
    /// Atoms assumed never to originate anywhere in the execution.
    pub non_originating: Vec<Term>,
}

impl Bundle {
    pub fn strand(&self, id: &str) -> Option<&StrandTrace> {
        self.strands.iter().find(|s| s.id == id)
    }

    pub fn strand_index(&self, id: &str) -> Option<usize> {
        self.strands.iter().position(|s| s.id == id)
    }

    pub fn honest(&self) -> impl Iterator<Item = &StrandTrace> {
        self.strands.iter().filter(|s| s.is_honest())
    }

    pub fn adversary_knows(&self, t: &Term) -> bool {
        self.knowledge.iter().any(|k| k.learned.contains(t))
    }

    pub fn adversary_knowledge(&self) -> BTreeSet<Term> {
        self.knowledge
            .iter()
            .flat_map(|k| k.learned.iter().cloned())
            .collect()
    }

    pub fn is_compromised(&self, t: &Term) -> bool {
        self.injected
            .iter()
            .any(|i| i.kind == InjectionKind::Compromised && &i.term == t)
    }

    /// Height of strand `s` at the moment `event` happened.
    fn node_height(&self, s: usize, event: usize) -> usize {
        self.strands[s]
            .nodes
            .iter()
            .position(|&e| e == event)
            .map_or(0, |p| p + 1)
    }

    /// Structural bundle conditions: every reception has exactly one incoming
    /// edge from an earlier send or synthesis event carrying the same term.
    pub fn is_well_formed(&self) -> bool {
        self.events.iter().enumerate().all(|(i, e)| {
            if e.direction != Direction::Recv {
                return true;
            }
            let incoming: Vec<&Edge> = self.edges.iter().filter(|ed| ed.to == i).collect();
            incoming.len() == 1 && {
                let src = &self.events[incoming[0].from];
                incoming[0].from < i
                    && src.term == e.term
                    && matches!(src.direction, Direction::Send | Direction::Synth)
            }
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let strand_ids: Vec<&str> = self.strands.iter().map(|s| s.id.as_str()).collect();
        let events: Vec<serde_json::Value> = self
            .events
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let mut obj = serde_json::json!({
                    "seq": i,
                    "strand": e.strand.map(|s| strand_ids[s]),
                    "direction": e.direction,
                    "term": e.term.to_string(),
                });
                if let Some(s) = e.strand {
                    let st = &self.strands[s];
                    obj["role"] = serde_json::json!(st.role);
                    let vars: BTreeMap<String, String> = st
                        .bindings_at(self.node_height(s, i))
                        .into_iter()
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .collect();
                    obj["session_vars"] = serde_json::json!(vars);
                }
                obj
            })
            .collect();
        let strands: Vec<serde_json::Value> = self
            .strands
            .iter()
            .map(|s| {
                let vars: BTreeMap<String, String> = s
                    .bindings
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect();
                serde_json::json!({
                    "id": s.id,
                    "role": s.role,
                    "owner": s.owner,
                    "height": s.height(),
                    "full_height": s.full_height,
                    "status": s.status,
                    "bindings": vars,
                })
            })
            .collect();
        serde_json::json!({
            "strands": strands,
            "events": events,
            "edges": self.edges,
            "adversary": {
                "injected": self.injected,
                "knowledge": self.knowledge,
            },
        })
    }
}
