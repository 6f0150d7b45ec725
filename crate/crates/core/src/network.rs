//! The adversary-controlled network.
//!
//! Every honest send lands in the adversary's knowledge first, and every
//! delivery is an adversary action that must be derivable from that knowledge.

use thiserror::Error;

use crate::bundle::{
    Bundle, Direction, Edge, Event, Injection, InjectionKind, KnowledgeStep, Owner, Role,
    StrandStatus, StrandTrace, Var,
};
use crate::knowledge::{KnowledgeBase, KnowledgeError, OriginationAssumption, OriginationKind};
use crate::term::Term;
use crate::tls::TlsSession;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("adversary cannot derive {0}")]
    NotDerivable(Term),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}

#[derive(Clone, Debug)]
pub struct Network {
    kb: KnowledgeBase,
    bundle: Bundle,
}

impl Network {
    pub fn new(
        initial: impl IntoIterator<Item = Term>,
        assumptions: impl IntoIterator<Item = OriginationAssumption>,
    ) -> Result<Network, NetError> {
        let assumptions: Vec<OriginationAssumption> = assumptions.into_iter().collect();
        let kb =
            KnowledgeBase::with_assumptions(initial, assumptions.iter().cloned())?.saturate()?;
        let bundle = Bundle {
            knowledge: vec![KnowledgeStep {
                event: None,
                learned: kb.terms().cloned().collect(),
            }],
            non_originating: assumptions
                .iter()
                .filter(|a| a.kind == OriginationKind::NonOriginating)
                .map(|a| a.subject.clone())
                .collect(),
            ..Bundle::default()
        };
        Ok(Network { kb, bundle })
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn bundle(&self) -> &Bundle {
        &self.bundle
    }

    pub fn into_bundle(self) -> Bundle {
        self.bundle
    }

    pub fn derivable(&self, t: &Term) -> bool {
        self.kb.derivable(t)
    }

    pub fn add_strand(&mut self, id: &str, role: Role, owner: Owner, full_height: usize) -> usize {
        self.bundle.strands.push(StrandTrace {
            id: id.to_owned(),
            role,
            owner,
            nodes: Vec::new(),
            bindings: Default::default(),
            bound_at: Default::default(),
            status: StrandStatus::Running,
            session: None,
            tls_peer: None,
            full_height,
        });
        self.bundle.strands.len() - 1
    }

    pub fn assume(&mut self, a: OriginationAssumption) -> Result<(), NetError> {
        if a.kind == OriginationKind::NonOriginating {
            self.bundle.non_originating.push(a.subject.clone());
        }
        self.kb.assume(a)?;
        Ok(())
    }

    fn push_event(&mut self, strand: Option<usize>, direction: Direction, term: Term) -> usize {
        self.bundle.events.push(Event {
            strand,
            direction,
            term,
        });
        let e = self.bundle.events.len() - 1;
        if let Some(s) = strand {
            self.bundle.strands[s].nodes.push(e);
        }
        e
    }

    fn learn(&mut self, event: usize, term: Term) -> Result<(), NetError> {
        let learned = self.kb.insert(term)?;
        if !learned.is_empty() {
            self.bundle.knowledge.push(KnowledgeStep {
                event: Some(event),
                learned,
            });
        }
        Ok(())
    }

    /// An honest strand transmits `term`; the adversary observes it.
    pub fn send(&mut self, strand: usize, term: Term) -> Result<usize, NetError> {
        let e = self.push_event(Some(strand), Direction::Send, term.clone());
        self.learn(e, term)?;
        Ok(e)
    }

    /// The adversary hands `term` to `strand`. Forwarding reuses the most
    /// recent transmission of the same term; anything else is recorded as a
    /// synthesis event.
    pub fn deliver(&mut self, strand: usize, term: Term) -> Result<usize, NetError> {
        if !self.kb.derivable(&term) {
            return Err(NetError::NotDerivable(term));
        }
        let source = self
            .bundle
            .events
            .iter()
            .rposition(|e| {
                e.term == term && matches!(e.direction, Direction::Send | Direction::Synth)
            })
            .unwrap_or_else(|| self.push_event(None, Direction::Synth, term.clone()));
        let e = self.push_event(Some(strand), Direction::Recv, term);
        self.bundle.edges.push(Edge {
            from: source,
            to: e,
        });
        Ok(e)
    }

    /// Places `term` directly into the adversary's knowledge.
    pub fn inject(
        &mut self,
        term: Term,
        kind: InjectionKind,
        strand: Option<usize>,
    ) -> Result<usize, NetError> {
        let e = self.push_event(None, Direction::Inject, term.clone());
        self.bundle.injected.push(Injection {
            term: term.clone(),
            kind,
            strand,
        });
        self.learn(e, term)?;
        Ok(e)
    }

    pub fn bind(&mut self, strand: usize, var: Var, value: Term) {
        let st = &mut self.bundle.strands[strand];
        let h = st.nodes.len();
        st.bindings.insert(var, value);
        st.bound_at.insert(var, h);
    }

    pub fn set_status(&mut self, strand: usize, status: StrandStatus) {
        self.bundle.strands[strand].status = status;
    }

    pub fn set_session(&mut self, strand: usize, session: TlsSession) {
        self.bundle.strands[strand].session = Some(session);
    }

    pub fn link_peers(&mut self, a: usize, b: usize) {
        self.bundle.strands[a].tls_peer = Some(b);
        self.bundle.strands[b].tls_peer = Some(a);
    }

    /// Every term that has been on the wire so far.
    pub fn observed(&self) -> impl Iterator<Item = &Term> {
        self.bundle
            .events
            .iter()
            .filter(|e| matches!(e.direction, Direction::Send | Direction::Synth))
            .map(|e| &e.term)
    }

    pub fn last_sent(&self, strand: usize) -> Option<&Term> {
        self.bundle.strands[strand]
            .nodes
            .iter()
            .rev()
            .map(|&e| &self.bundle.events[e])
            .find(|e| e.direction == Direction::Send)
            .map(|e| &e.term)
    }
}
