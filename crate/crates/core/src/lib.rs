//! Symbolic analysis of UAF channel bindings over TLS.
//!
//! Build executions of the baseline password login and the UAF registration
//! and authentication protocols, hand the network to a Dolev-Yao adversary,
//! and check Goal 1 from each role's perspective.
//!
//! ```
//! use uaf_bindlab::{goal1, run_registration, ModelId, Perspective, VerificationPolicy};
//!
//! let model: ModelId = "uaf-exporter-tls13".parse().unwrap();
//! let bundle = run_registration(model, VerificationPolicy::Strict).unwrap();
//! assert!(goal1(&bundle, Perspective::ServerReg, model));
//! ```

pub mod bundle;
pub mod exec;
pub mod goal;
pub mod knowledge;
pub mod matrix;
pub mod model;
pub mod network;
pub mod scenario;
pub mod search;
pub mod syntax;
pub mod term;
pub mod tls;
pub mod uaf;
pub mod world;

pub use bundle::{Bundle, Role, StrandTrace, Var};
pub use exec::{
    run_authentication, run_baseline, run_honest, run_registration, ExecError, Execution,
};
pub use goal::{goal1, Perspective};
pub use knowledge::{KnowledgeBase, KnowledgeError, OriginationAssumption};
pub use matrix::{audit_witness, expected, run_matrix, Matrix, MatrixMismatch, MatrixOptions};
pub use model::{BindingMethod, ModelId};
pub use scenario::{
    scenario_baseline_replay, scenario_challenge_reissue, scenario_pms_compromise, ScenarioError,
    ServerVerdict,
};
pub use search::{search_counterexample, SearchBounds, SearchError, Status, Verdict};
pub use syntax::{parse_term, parse_terms, ParseError};
pub use term::Term;
pub use tls::TlsVariant;
pub use uaf::{Protocol, VerificationPolicy};
