//! Scripted attacks.
//!
//! A scenario is an s-expression naming the models it applies to, the
//! binding methods expected to stop it, and a list of adversary steps:
//!
//! ```text
//! (scenario NAME
//!   (applies uaf | baseline) (tls rsa | dh | tls13)?
//!   (perspectives server)
//!   (resisted-by endpoint servercert exporter)?
//!   (steps
//!     (open-server s1)
//!     (open-client c1 (peer "mallory"))
//!     (open-client c1 (peer "server") (via s2) (leak-pms)?)
//!     (deliver c1 TEMPLATE)))
//! ```
//!
//! Templates are terms that may also use `(key A)` for the key strand `A`
//! reads with, `(payload A)` for the plaintext of the last record `A` sent,
//! `(sent A)` for that record itself and `(var A NAME)` for a binding.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::bundle::{Bundle, StrandStatus, Var};
use crate::exec::{ClientPeer, ExecError, Execution};
use crate::goal::{goal1, Perspective};
use crate::model::{BindingMethod, ModelId};
use crate::syntax::{read_sexprs, sexpr_to_term_with, ParseError, Pos, SExpr};
use crate::term::Term;
use crate::tls::TlsVariant;
use crate::uaf::{Protocol, VerificationPolicy};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("scenario {scenario} does not apply to {model} {protocol}")]
    InapplicableScenario {
        scenario: String,
        model: ModelId,
        protocol: Protocol,
    },
    #[error("step {step}: unknown strand alias '{alias}'")]
    UnknownAlias { step: usize, alias: String },
    #[error("step {step}: {message}")]
    Template { step: usize, message: String },
    #[error("step {step}: {source}")]
    Exec {
        step: usize,
        #[source]
        source: ExecError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Uaf,
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    OpenServer {
        alias: String,
    },
    OpenClient {
        alias: String,
        peer: String,
        via: Option<String>,
        leak_pms: bool,
    },
    Deliver {
        alias: String,
        template: SExpr,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub family: Family,
    pub tls: Option<TlsVariant>,
    pub server_perspective: bool,
    pub client_perspective: bool,
    pub resisted_by: Vec<BindingMethod>,
    pub steps: Vec<Step>,
}

/// How the last server strand to receive a message judged it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ServerVerdict {
    Accepted,
    Rejected(String),
    NotReached,
}

impl fmt::Display for ServerVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServerVerdict::Accepted => f.write_str("ACCEPTED"),
            ServerVerdict::Rejected(r) => write!(f, "REJECTED: {r}"),
            ServerVerdict::NotReached => f.write_str("NOT REACHED"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub scenario: String,
    pub model: ModelId,
    pub protocol: Protocol,
    pub policy: VerificationPolicy,
    pub bundle: Bundle,
    /// One line per step, in the order they ran.
    pub log: Vec<String>,
    pub server_verdict: ServerVerdict,
    /// Goal 1 from the server perspective of `protocol`.
    pub goal1: bool,
    pub expected_violation: bool,
}

impl ScenarioRun {
    pub fn perspective(&self) -> Perspective {
        server_perspective(self.protocol)
    }

    pub fn matches_expectation(&self) -> bool {
        self.goal1 != self.expected_violation
    }
}

pub fn server_perspective(protocol: Protocol) -> Perspective {
    match protocol {
        Protocol::Authentication => Perspective::ServerAuth,
        _ => Perspective::ServerReg,
    }
}

const BUILTIN: [(&str, &str); 3] = [
    (
        "challenge-reissue",
        include_str!("../scenarios/challenge-reissue.scn"),
    ),
    (
        "pms-compromise",
        include_str!("../scenarios/pms-compromise.scn"),
    ),
    (
        "baseline-replay",
        include_str!("../scenarios/baseline-replay.scn"),
    ),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    let (_, src) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ScenarioError::UnknownScenario(name.to_owned()))?;
    Scenario::parse(src)
}

pub fn builtins() -> Vec<Scenario> {
    BUILTIN
        .iter()
        .map(|(_, src)| Scenario::parse(src).expect("bundled scenarios parse"))
        .collect()
}

fn err(pos: Pos, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse(ParseError::new(pos, msg))
}

fn ident(e: &SExpr, what: &str) -> Result<String, ScenarioError> {
    e.as_ident()
        .map(str::to_owned)
        .ok_or_else(|| err(e.pos, format!("expected {what}")))
}

fn parse_step(e: &SExpr) -> Result<Step, ScenarioError> {
    let (head, args) = e.head().ok_or_else(|| err(e.pos, "expected a step"))?;
    match (head, args) {
        ("open-server", [alias]) => Ok(Step::OpenServer {
            alias: ident(alias, "a strand alias")?,
        }),
        ("open-client", [alias, opts @ ..]) => {
            let mut peer = None;
            let mut via = None;
            let mut leak_pms = false;
            for o in opts {
                match o.head() {
                    Some(("peer", [p])) => peer = Some(ident(p, "a principal")?),
                    Some(("via", [s])) => via = Some(ident(s, "a strand alias")?),
                    Some(("leak-pms", [])) => leak_pms = true,
                    _ => return Err(err(o.pos, "expected (peer P), (via S) or (leak-pms)")),
                }
            }
            Ok(Step::OpenClient {
                alias: ident(alias, "a strand alias")?,
                peer: peer.ok_or_else(|| err(e.pos, "open-client needs (peer P)"))?,
                via,
                leak_pms,
            })
        }
        ("deliver", [alias, template]) => Ok(Step::Deliver {
            alias: ident(alias, "a strand alias")?,
            template: template.clone(),
        }),
        _ => Err(err(e.pos, format!("malformed step '{head}'"))),
    }
}

impl Scenario {
    pub fn parse(src: &str) -> Result<Scenario, ScenarioError> {
        let exprs = read_sexprs(src)?;
        let [top] = exprs.as_slice() else {
            let pos = exprs.get(1).map_or(Pos { line: 1, column: 1 }, |e| e.pos);
            return Err(err(pos, "expected exactly one (scenario ...) form"));
        };
        let Some(("scenario", [name, clauses @ ..])) = top.head() else {
            return Err(err(top.pos, "expected (scenario NAME ...)"));
        };
        let mut sc = Scenario {
            name: ident(name, "a scenario name")?,
            family: Family::Uaf,
            tls: None,
            server_perspective: false,
            client_perspective: false,
            resisted_by: Vec::new(),
            steps: Vec::new(),
        };
        for c in clauses {
            let (head, args) = c.head().ok_or_else(|| err(c.pos, "expected a clause"))?;
            match head {
                "applies" => {
                    sc.family = match args {
                        [a] if a.as_ident() == Some("uaf") => Family::Uaf,
                        [a] if a.as_ident() == Some("baseline") => Family::Baseline,
                        _ => return Err(err(c.pos, "expected (applies uaf|baseline)")),
                    }
                }
                "tls" => {
                    sc.tls = Some(match args {
                        [a] if a.as_ident() == Some("rsa") => TlsVariant::Tls12Rsa,
                        [a] if a.as_ident() == Some("dh") => TlsVariant::Tls12Dh,
                        [a] if a.as_ident() == Some("tls13") => TlsVariant::Tls13,
                        _ => return Err(err(c.pos, "expected (tls rsa|dh|tls13)")),
                    })
                }
                "perspectives" => {
                    for a in args {
                        match a.as_ident() {
                            Some("server") => sc.server_perspective = true,
                            Some("client") => sc.client_perspective = true,
                            _ => return Err(err(a.pos, "expected server or client")),
                        }
                    }
                }
                "resisted-by" => {
                    for a in args {
                        let b = a
                            .as_ident()
                            .and_then(BindingMethod::from_slug)
                            .ok_or_else(|| err(a.pos, "unknown binding method"))?;
                        sc.resisted_by.push(b);
                    }
                }
                "steps" => {
                    sc.steps = args.iter().map(parse_step).collect::<Result<_, _>>()?;
                }
                other => return Err(err(c.pos, format!("unknown clause '{other}'"))),
            }
        }
        Ok(sc)
    }

    pub fn applies_to(&self, model: ModelId, protocol: Protocol) -> bool {
        let family_ok = match self.family {
            Family::Baseline => model.is_baseline() && protocol == Protocol::Baseline,
            Family::Uaf => !model.is_baseline() && protocol != Protocol::Baseline,
        };
        family_ok && self.tls.is_none_or(|t| t == model.tls())
    }

    /// Whether Goal 1 should fail when this scenario runs against `model`.
    pub fn expects_violation(&self, model: ModelId, policy: VerificationPolicy) -> bool {
        policy == VerificationPolicy::Lenient
            || model.is_baseline()
            || !self.resisted_by.contains(&model.binding())
    }

    /// Protocols the scenario can be run under for `model`.
    pub fn protocols(&self, model: ModelId) -> Vec<Protocol> {
        [
            Protocol::Baseline,
            Protocol::Registration,
            Protocol::Authentication,
        ]
        .into_iter()
        .filter(|p| self.applies_to(model, *p))
        .collect()
    }

    pub fn run(
        &self,
        model: ModelId,
        protocol: Protocol,
        policy: VerificationPolicy,
    ) -> Result<ScenarioRun, ScenarioError> {
        if !self.applies_to(model, protocol) {
            return Err(ScenarioError::InapplicableScenario {
                scenario: self.name.clone(),
                model,
                protocol,
            });
        }
        let wrap = |step: usize| move |source: ExecError| ScenarioError::Exec { step, source };
        let mut exec = Execution::new(model, protocol, policy).map_err(wrap(0))?;
        let mut aliases: BTreeMap<String, usize> = BTreeMap::new();
        let mut log = Vec::new();
        let mut last_server = None;
        for (i, step) in self.steps.iter().enumerate() {
            let n = i + 1;
            match step {
                Step::OpenServer { alias } => {
                    let s = exec.open_server().map_err(wrap(n))?;
                    aliases.insert(alias.clone(), s);
                    log.push(format!(
                        "{n}. honest server {} accepts a TLS connection from the adversary",
                        exec.bundle().strands[s].id
                    ));
                }
                Step::OpenClient {
                    alias,
                    peer,
                    via,
                    leak_pms,
                } => {
                    let peer_kind = if *peer == exec.world().adversary {
                        ClientPeer::Adversary
                    } else if *peer == exec.world().server {
                        ClientPeer::Honest {
                            leak_pms: *leak_pms,
                        }
                    } else {
                        return Err(ScenarioError::Template {
                            step: n,
                            message: format!("unknown peer '{peer}'"),
                        });
                    };
                    let opened = exec.open_client(peer_kind).map_err(wrap(n))?;
                    aliases.insert(alias.clone(), opened.client);
                    if let (Some(v), Some(s)) = (via, opened.server) {
                        aliases.insert(v.clone(), s);
                    }
                    let cid = &exec.bundle().strands[opened.client].id;
                    log.push(match opened.server {
                        Some(s) => format!(
                            "{n}. honest client {cid} opens TLS to {peer} (server strand {}){}",
                            exec.bundle().strands[s].id,
                            if *leak_pms {
                                "; premaster secret leaks"
                            } else {
                                ""
                            }
                        ),
                        None => format!("{n}. honest client {cid} opens TLS to {peer}"),
                    });
                }
                Step::Deliver { alias, template } => {
                    let strand =
                        *aliases
                            .get(alias)
                            .ok_or_else(|| ScenarioError::UnknownAlias {
                                step: n,
                                alias: alias.clone(),
                            })?;
                    let msg = instantiate(&exec, &aliases, template, n)?;
                    let outcome = exec.deliver(strand, msg.clone()).map_err(wrap(n))?;
                    let st = &exec.bundle().strands[strand];
                    if !st.role.is_client() {
                        last_server = Some(strand);
                    }
                    log.push(format!(
                        "{n}. adversary delivers to {}: {msg} ({outcome:?})",
                        st.id
                    ));
                }
            }
        }
        let bundle = exec.into_bundle();
        let server_verdict = match last_server.map(|s| &bundle.strands[s].status) {
            Some(StrandStatus::Complete) => ServerVerdict::Accepted,
            Some(StrandStatus::Halted(r)) => ServerVerdict::Rejected(r.clone()),
            _ => ServerVerdict::NotReached,
        };
        let goal1 = goal1(&bundle, server_perspective(protocol), model);
        Ok(ScenarioRun {
            scenario: self.name.clone(),
            model,
            protocol,
            policy,
            bundle,
            log,
            server_verdict,
            goal1,
            expected_violation: self.expects_violation(model, policy),
        })
    }
}

fn instantiate(
    exec: &Execution,
    aliases: &BTreeMap<String, usize>,
    template: &SExpr,
    step: usize,
) -> Result<Term, ScenarioError> {
    let mut failure: Option<ScenarioError> = None;
    let mut ext =
        |head: &str, args: &[SExpr], pos: Pos| -> Option<Result<Term, ParseError>> {
            let fail = |m: String| Some(Err(ParseError::new(pos, m)));
            if !matches!(head, "key" | "payload" | "sent" | "var") {
                return None;
            }
            let Some(alias) = args.first().and_then(SExpr::as_ident) else {
                return fail(format!("'{head}' needs a strand alias"));
            };
            let Some(&strand) = aliases.get(alias) else {
                failure = Some(ScenarioError::UnknownAlias {
                    step,
                    alias: alias.to_owned(),
                });
                return fail(format!("unknown alias '{alias}'"));
            };
            let sent = || exec.network().last_sent(strand).cloned();
            let found = match (head, &args[1..]) {
                ("key", []) => exec.session(strand).map(|s| s.recv_key().clone()),
                ("sent", []) => sent(),
                ("payload", []) => match sent() {
                    Some(Term::SymEnc { payload, .. }) => Some(*payload),
                    _ => None,
                },
                ("var", [v]) => v.as_ident().and_then(|v| {
                    let st = &exec.bundle().strands[strand];
                    st.bindings
                        .iter()
                        .find(|(k, _)| Var::to_string(k) == v)
                        .map(|(_, t)| t.clone())
                }),
                _ => return fail(format!("malformed '{head}' template")),
            };
            Some(found.ok_or_else(|| {
                ParseError::new(pos, format!("({head} {alias} ...) has no value yet"))
            }))
        };
    let result = sexpr_to_term_with(template, &mut ext);
    if let Some(f) = failure {
        return Err(f);
    }
    result.map_err(|e| ScenarioError::Template {
        step,
        message: e.to_string(),
    })
}

/// Runs `name` against `model` under the server perspective of `protocol`.
pub fn run_scenario(
    name: &str,
    model: ModelId,
    protocol: Protocol,
    policy: VerificationPolicy,
) -> Result<ScenarioRun, ScenarioError> {
    builtin(name)?.run(model, protocol, policy)
}

pub fn scenario_challenge_reissue(
    model: ModelId,
    protocol: Protocol,
    policy: VerificationPolicy,
) -> Result<ScenarioRun, ScenarioError> {
    run_scenario("challenge-reissue", model, protocol, policy)
}

pub fn scenario_pms_compromise(
    model: ModelId,
    protocol: Protocol,
    policy: VerificationPolicy,
) -> Result<ScenarioRun, ScenarioError> {
    run_scenario("pms-compromise", model, protocol, policy)
}

pub fn scenario_baseline_replay(policy: VerificationPolicy) -> Result<ScenarioRun, ScenarioError> {
    run_scenario(
        "baseline-replay",
        ModelId::BASELINE,
        Protocol::Baseline,
        policy,
    )
}
