//! Session contexts, successful and unique completion, and Goal 1.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::bundle::{Bundle, Role, StrandTrace, Var};
use crate::model::ModelId;
use crate::term::Term;
use crate::tls::{SessionSecret, TlsVariant};
use crate::uaf::Protocol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ContextId {
    TlsRsaCtx,
    TlsDhCtx,
    BaselineCtx,
    RegistrationCtx,
    AuthenticationCtx,
}

/// The variables two complementary strands must agree on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionContextSpec {
    pub id: ContextId,
    pub facts: Vec<Var>,
}

impl SessionContextSpec {
    pub fn tls(variant: TlsVariant) -> SessionContextSpec {
        match variant {
            TlsVariant::Tls12Rsa => SessionContextSpec {
                id: ContextId::TlsRsaCtx,
                facts: vec![Var::Server, Var::Ca, Var::Cr, Var::Sr, Var::Pms],
            },
            TlsVariant::Tls12Dh | TlsVariant::Tls13 => SessionContextSpec {
                id: ContextId::TlsDhCtx,
                facts: vec![Var::Server, Var::Ca, Var::Cr, Var::Sr, Var::X, Var::Y],
            },
        }
    }

    pub fn for_protocol(variant: TlsVariant, protocol: Protocol) -> SessionContextSpec {
        let (id, extra) = match protocol {
            Protocol::Baseline => (
                ContextId::BaselineCtx,
                vec![Var::Username, Var::Server, Var::Pw],
            ),
            Protocol::Registration => (
                ContextId::RegistrationCtx,
                vec![Var::Challenge, Var::Username, Var::Server, Var::Appid],
            ),
            Protocol::Authentication => (
                ContextId::AuthenticationCtx,
                vec![Var::Challenge, Var::Server, Var::Appid],
            ),
        };
        let mut ctx = SessionContextSpec::tls(variant);
        ctx.id = id;
        for v in extra {
            ctx = ctx.with_fact(v);
        }
        ctx
    }

    pub fn with_fact(mut self, v: Var) -> SessionContextSpec {
        if !self.facts.contains(&v) {
            self.facts.push(v);
        }
        self
    }

    /// Every fact is bound on both sides and the values agree.
    pub fn holds(&self, a: &StrandTrace, i: usize, b: &StrandTrace, j: usize) -> bool {
        self.facts
            .iter()
            .all(|&v| match (a.binding_at(v, i), b.binding_at(v, j)) {
                (Some(x), Some(y)) => x == y,
                _ => false,
            })
    }
}

/// A column of the results matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perspective {
    ClientReg,
    ServerReg,
    ClientAuth,
    ServerAuth,
}

impl Perspective {
    pub const ALL: [Perspective; 4] = [
        Perspective::ClientReg,
        Perspective::ServerReg,
        Perspective::ClientAuth,
        Perspective::ServerAuth,
    ];

    pub fn is_client(self) -> bool {
        matches!(self, Perspective::ClientReg | Perspective::ClientAuth)
    }

    pub fn label(self) -> &'static str {
        match self {
            Perspective::ClientReg => "client-reg",
            Perspective::ServerReg => "server-reg",
            Perspective::ClientAuth => "client-auth",
            Perspective::ServerAuth => "server-auth",
        }
    }

    /// The protocol judged in this column. The baseline has a single
    /// protocol, reported under both the registration and authentication
    /// columns.
    pub fn protocol(self, model: ModelId) -> Protocol {
        if model.is_baseline() {
            Protocol::Baseline
        } else if matches!(self, Perspective::ClientReg | Perspective::ServerReg) {
            Protocol::Registration
        } else {
            Protocol::Authentication
        }
    }

    pub fn role(self, model: ModelId) -> Role {
        let p = self.protocol(model);
        if self.is_client() {
            p.client_role()
        } else {
            p.server_role()
        }
    }

    pub fn assumptions(self) -> Assumptions {
        if self.is_client() {
            Assumptions::Client
        } else {
            Assumptions::Server
        }
    }
}

impl fmt::Display for Perspective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Perspective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Perspective::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| {
                format!("unknown perspective '{s}' (expected client-reg, server-reg, client-auth or server-auth)")
            })
    }
}

/// Origination assumptions of a perspective, deciding which strands of the
/// perspective role a bundle is judged on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Assumptions {
    /// The client's peer is an honest principal whose private key never
    /// originates, and the client's randoms and premaster secret are fresh.
    Client,
    /// The server's challenge originates uniquely.
    Server,
}

impl Assumptions {
    pub fn admits(self, bundle: &Bundle, strand: &StrandTrace) -> bool {
        match self {
            Assumptions::Client => {
                let honest_peer = match strand.binding(Var::Server) {
                    Some(Term::Name(p)) => bundle.non_originating.contains(&Term::privk(p.clone())),
                    _ => false,
                };
                let fresh_pms = match strand.session.as_ref().map(|s| &s.secret) {
                    Some(SessionSecret::Rsa { pms }) => !bundle.is_compromised(pms),
                    _ => true,
                };
                honest_peer && fresh_pms
            }
            Assumptions::Server => match strand.binding(Var::Challenge) {
                Some(ch) => bundle
                    .strands
                    .iter()
                    .filter(|o| o.id != strand.id && !o.role.is_client())
                    .all(|o| o.binding(Var::Challenge) != Some(ch)),
                None => true,
            },
        }
    }
}

fn judged(
    bundle: &Bundle,
    role: Role,
    assumptions: Assumptions,
    i: usize,
) -> impl Iterator<Item = &StrandTrace> {
    bundle
        .strands
        .iter()
        .filter(move |s| s.is_honest() && s.role == role && s.is_complete() && s.height() >= i)
        .filter(move |s| assumptions.admits(bundle, s))
}

fn partners<'a>(
    bundle: &'a Bundle,
    a: &'a StrandTrace,
    role_b: Role,
    ctx: &'a SessionContextSpec,
    i: usize,
    j: usize,
) -> impl Iterator<Item = &'a StrandTrace> {
    bundle.strands.iter().filter(move |b| {
        b.is_honest() && b.role == role_b && b.height() >= j && ctx.holds(a, i, b, j)
    })
}

/// Every admitted `role_a` strand of height at least `i` has a `role_b`
/// partner of height at least `j` agreeing on `ctx`.
pub fn successful_completion(
    bundle: &Bundle,
    role_a: Role,
    role_b: Role,
    ctx: &SessionContextSpec,
    assumptions: Assumptions,
    i: usize,
    j: usize,
) -> bool {
    judged(bundle, role_a, assumptions, i)
        .all(|a| partners(bundle, a, role_b, ctx, i, j).next().is_some())
}

/// No admitted `role_a` strand has two distinct partners.
pub fn unique_completion(
    bundle: &Bundle,
    role_a: Role,
    ctx: &SessionContextSpec,
    assumptions: Assumptions,
    i: usize,
    j: usize,
) -> bool {
    let role_b = role_a.complement();
    judged(bundle, role_a, assumptions, i)
        .all(|a| partners(bundle, a, role_b, ctx, i, j).nth(1).is_none())
}

/// Session context agreement for the perspective role of `model`.
pub fn goal1(bundle: &Bundle, perspective: Perspective, model: ModelId) -> bool {
    let role = perspective.role(model);
    let ctx = SessionContextSpec::for_protocol(model.tls(), perspective.protocol(model));
    goal1_with(bundle, role, &ctx, perspective.assumptions(), model.tls())
}

pub fn goal1_with(
    bundle: &Bundle,
    role: Role,
    ctx: &SessionContextSpec,
    assumptions: Assumptions,
    tls: TlsVariant,
) -> bool {
    let i = role.full_height(tls);
    let partner = role.complement();
    (1..=partner.full_height(tls)).any(|j| {
        successful_completion(bundle, role, partner, ctx, assumptions, i, j)
            && unique_completion(bundle, role, ctx, assumptions, i, j)
    })
}

/// Ids of completed perspective strands that lack a unique partner.
pub fn goal1_failures(bundle: &Bundle, perspective: Perspective, model: ModelId) -> Vec<String> {
    let role = perspective.role(model);
    let tls = model.tls();
    let ctx = SessionContextSpec::for_protocol(tls, perspective.protocol(model));
    let i = role.full_height(tls);
    let partner = role.complement();
    judged(bundle, role, perspective.assumptions(), i)
        .filter(|a| {
            !(1..=partner.full_height(tls))
                .any(|j| partners(bundle, a, partner, &ctx, i, j).count() == 1)
        })
        .map(|a| a.id.clone())
        .collect()
}
