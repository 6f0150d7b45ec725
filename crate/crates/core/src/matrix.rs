//! The verdict matrix: every model against every perspective.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::bundle::{Bundle, Direction, Role, StrandStatus, Var};
use crate::goal::{goal1, Perspective};
use crate::knowledge::KnowledgeBase;
use crate::model::{BindingMethod, ModelId};
use crate::scenario::{builtins, server_perspective, Scenario};
use crate::search::{search_counterexample, SearchBounds, SearchError, Status, Verdict};
use crate::term::Term;
use crate::tls::TlsVariant;
use crate::uaf::{verify_assertion, AssertionContext, Protocol, VerificationPolicy};
use crate::world::World;

#[derive(Clone, Debug)]
pub struct MatrixOptions {
    pub policy: VerificationPolicy,
    pub models: Vec<ModelId>,
    /// Try the bundled attack scenarios before searching.
    pub scenarios: bool,
    pub search: SearchBounds,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        MatrixOptions {
            policy: VerificationPolicy::Strict,
            models: ModelId::all().to_vec(),
            scenarios: true,
            search: SearchBounds::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub verdict: Verdict,
    pub explored: usize,
    pub secrecy_violations: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Matrix {
    pub policy: VerificationPolicy,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MatrixMismatch {
    pub model: String,
    pub perspective: Perspective,
    pub expected: Status,
    pub actual: Status,
}

fn scenario_cell(
    scenarios: &[Scenario],
    model: ModelId,
    perspective: Perspective,
    policy: VerificationPolicy,
) -> Option<Cell> {
    let protocol = perspective.protocol(model);
    if perspective.is_client() || server_perspective(protocol) != perspective {
        return None;
    }
    scenarios
        .iter()
        .filter(|s| s.server_perspective && s.applies_to(model, protocol))
        .filter_map(|s| s.run(model, protocol, policy).ok())
        .find(|run| !run.goal1)
        .map(|run| Cell {
            verdict: Verdict::violated(model, perspective, run.bundle, &run.scenario),
            explored: 0,
            secrecy_violations: Vec::new(),
        })
}

pub fn run_cell(
    model: ModelId,
    perspective: Perspective,
    opts: &MatrixOptions,
    scenarios: &[Scenario],
) -> Result<Cell, SearchError> {
    if opts.scenarios {
        if let Some(cell) = scenario_cell(scenarios, model, perspective, opts.policy) {
            return Ok(cell);
        }
    }
    let out = search_counterexample(model, perspective, opts.search, opts.policy)?;
    Ok(Cell {
        verdict: out.verdict,
        explored: out.explored,
        secrecy_violations: out.secrecy_violations,
    })
}

pub fn run_matrix(opts: &MatrixOptions) -> Result<Matrix, SearchError> {
    let scenarios = if opts.scenarios {
        builtins()
    } else {
        Vec::new()
    };
    let jobs: Vec<(ModelId, Perspective)> = opts
        .models
        .iter()
        .flat_map(|&m| Perspective::ALL.into_iter().map(move |p| (m, p)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(m, p)| run_cell(m, p, opts, &scenarios))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Matrix {
        policy: opts.policy,
        cells,
    })
}

/// The verdicts the models are expected to produce.
pub fn expected(policy: VerificationPolicy) -> BTreeMap<(ModelId, Perspective), Status> {
    let resists = |m: ModelId| {
        policy == VerificationPolicy::Strict
            && matches!(
                (m.binding(), m.tls()),
                (
                    BindingMethod::ServerEndpoint | BindingMethod::ServerCert,
                    TlsVariant::Tls12Dh
                ) | (BindingMethod::Exporter, TlsVariant::Tls13)
            )
    };
    ModelId::all()
        .into_iter()
        .flat_map(|m| {
            Perspective::ALL.into_iter().map(move |p| {
                let status = if p.is_client() || (!m.is_baseline() && resists(m)) {
                    Status::Satisfied
                } else {
                    Status::Violated
                };
                ((m, p), status)
            })
        })
        .collect()
}

impl Matrix {
    pub fn get(&self, model: ModelId, perspective: Perspective) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.verdict.model == model && c.verdict.perspective == perspective)
    }

    pub fn count(&self, status: Status) -> usize {
        self.cells
            .iter()
            .filter(|c| c.verdict.status == status)
            .count()
    }

    pub fn diff(&self, expected: &BTreeMap<(ModelId, Perspective), Status>) -> Vec<MatrixMismatch> {
        self.cells
            .iter()
            .filter_map(|c| {
                let v = &c.verdict;
                let want = *expected.get(&(v.model, v.perspective))?;
                (want != v.status).then(|| MatrixMismatch {
                    model: v.model.to_string(),
                    perspective: v.perspective,
                    expected: want,
                    actual: v.status,
                })
            })
            .collect()
    }

    pub fn render_text(&self) -> String {
        let mut models: Vec<ModelId> = Vec::new();
        for c in &self.cells {
            if !models.contains(&c.verdict.model) {
                models.push(c.verdict.model);
            }
        }
        let width = models
            .iter()
            .map(|m| m.to_string().len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = format!("{:width$}", "model");
        for p in Perspective::ALL {
            let _ = write!(out, "  {:>11}", p.label());
        }
        out.push('\n');
        for m in models {
            let _ = write!(out, "{:width$}", m.to_string());
            for p in Perspective::ALL {
                let cell = self
                    .get(m, p)
                    .map_or("-".to_owned(), |c| c.verdict.status.to_string());
                let _ = write!(out, "  {cell:>11}");
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "policy {}: {} violated, {} ok",
            self.policy,
            self.count(Status::Violated),
            self.count(Status::Satisfied)
        );
        out
    }

    pub fn to_json(&self, witnesses: bool) -> serde_json::Value {
        let cells: Vec<serde_json::Value> = self
            .cells
            .iter()
            .map(|c| {
                let v = &c.verdict;
                let mut obj = json!({
                    "model": v.model.to_string(),
                    "perspective": v.perspective,
                    "status": v.status,
                    "source": v.source,
                    "explored": c.explored,
                    "secrecy_violations": c.secrecy_violations,
                });
                if witnesses {
                    obj["witness"] = v.witness.as_ref().map_or(json!(null), Bundle::to_json);
                }
                obj
            })
            .collect();
        json!({
            "policy": self.policy.to_string(),
            "violated": self.count(Status::Violated),
            "ok": self.count(Status::Satisfied),
            "cells": cells,
        })
    }
}

fn knowledge_before(bundle: &Bundle, event: usize) -> KnowledgeBase {
    let terms: Vec<Term> = bundle
        .knowledge
        .iter()
        .filter(|k| k.event.is_none_or(|e| e < event))
        .flat_map(|k| k.learned.iter().cloned())
        .collect();
    KnowledgeBase::from_terms(terms)
        .saturate()
        .expect("no assumptions to violate")
}

fn protocol_of(role: Role) -> Option<Protocol> {
    match role {
        Role::ServerReg => Some(Protocol::Registration),
        Role::ServerAuth => Some(Protocol::Authentication),
        _ => None,
    }
}

/// Independent re-check of a violation witness. Returns the first problem.
pub fn audit_witness(v: &Verdict, policy: VerificationPolicy) -> Result<(), String> {
    let bundle = v.witness.as_ref().ok_or("verdict has no witness")?;
    if goal1(bundle, v.perspective, v.model) {
        return Err("Goal 1 holds on the witness".into());
    }
    if !bundle.is_well_formed() {
        return Err("witness is not a well-formed bundle".into());
    }
    for (i, e) in bundle.events.iter().enumerate() {
        if e.direction == Direction::Synth && !knowledge_before(bundle, i).derivable(&e.term) {
            return Err(format!("event {i}: adversary cannot derive {}", e.term));
        }
    }
    let world = World::default();
    for st in bundle
        .strands
        .iter()
        .filter(|s| s.status == StrandStatus::Complete)
    {
        let (Some(protocol), Some(session)) = (protocol_of(st.role), &st.session) else {
            continue;
        };
        let recv = st
            .nodes
            .iter()
            .rev()
            .map(|&n| &bundle.events[n])
            .find(|e| e.direction == Direction::Recv)
            .ok_or_else(|| format!("{} completed without receiving", st.id))?;
        let Term::SymEnc { key, payload } = &recv.term else {
            return Err(format!("{} accepted an unencrypted record", st.id));
        };
        if key.as_ref() != session.recv_key() {
            return Err(format!("{} accepted a record under a foreign key", st.id));
        }
        let challenge = st
            .binding(Var::Challenge)
            .ok_or_else(|| format!("{} has no challenge", st.id))?;
        let ctx = AssertionContext {
            protocol,
            binding: v.model.binding(),
            session,
            appid: &Term::name(world.server.clone()),
            challenge,
            trusted_aaids: &world.trusted_aaids(),
            registered_keys: &world.registered_keys(),
            binding_key: &world.binding_key,
        };
        verify_assertion(&ctx, payload, policy)
            .map_err(|e| format!("{} accepted an assertion that fails {e}", st.id))?;
    }
    Ok(())
}
