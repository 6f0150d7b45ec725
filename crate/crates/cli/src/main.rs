use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use uaf_bindlab::bundle::Direction;
use uaf_bindlab::goal::Perspective;
use uaf_bindlab::matrix::{audit_witness, expected, run_matrix, MatrixOptions};
use uaf_bindlab::scenario::{self, Family, ScenarioError, ScenarioRun, ServerVerdict};
use uaf_bindlab::search::{SearchBounds, SearchError, DEFAULT_BUDGET};
use uaf_bindlab::{
    parse_term, parse_terms, run_honest, Bundle, KnowledgeBase, ModelId, Protocol,
    VerificationPolicy,
};

const EXIT_MISMATCH: u8 = 1;
const EXIT_BUDGET: u8 = 2;
const EXIT_INAPPLICABLE: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;

#[derive(Parser)]
#[command(
    name = "uaf-bindlab",
    version,
    about = "Symbolic analysis of UAF channel bindings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the verdict matrix and compare it with the expected table.
    Matrix {
        #[arg(long, default_value = "strict", value_parser = parse_policy)]
        policy: VerificationPolicy,
        /// Restrict to one model.
        #[arg(long, value_parser = parse_model)]
        model: Option<ModelId>,
        /// Restrict to one perspective.
        #[arg(long, value_parser = parse_perspective)]
        perspective: Option<Perspective>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Also write the JSON result, with witness bundles, to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Search states per cell before giving up.
        #[arg(long, env = "UAF_BINDLAB_BUDGET", default_value_t = DEFAULT_BUDGET)]
        budget: usize,
        /// Skip the scripted scenarios and rely on the search alone.
        #[arg(long)]
        search_only: bool,
    },
    /// Replay a scripted attack and print its trace.
    Attack {
        /// challenge-reissue, pms-compromise or baseline-replay.
        scenario: String,
        #[arg(long, value_parser = parse_model)]
        model: Option<ModelId>,
        /// Run one protocol instead of every applicable one.
        #[arg(long, value_parser = parse_protocol)]
        protocol: Option<Protocol>,
        #[arg(long, default_value = "strict", value_parser = parse_policy)]
        policy: VerificationPolicy,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Decide whether a term follows from a file of known terms.
    Derive { kb_file: PathBuf, target: String },
    /// Print the bundles of faithful runs as JSON.
    Honest {
        #[arg(long, value_parser = parse_model)]
        model: ModelId,
        #[arg(long, default_value = "strict", value_parser = parse_policy)]
        policy: VerificationPolicy,
    },
}

fn parse_model(s: &str) -> Result<ModelId, String> {
    s.parse()
        .map_err(|e: uaf_bindlab::model::ModelError| e.to_string())
}

fn parse_policy(s: &str) -> Result<VerificationPolicy, String> {
    s.parse()
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse()
}

fn parse_perspective(s: &str) -> Result<Perspective, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Matrix {
            policy,
            model,
            perspective,
            format,
            out,
            budget,
            search_only,
        } => cmd_matrix(
            policy,
            model,
            perspective,
            format,
            out,
            budget,
            !search_only,
        ),
        Command::Attack {
            scenario,
            model,
            protocol,
            policy,
            format,
        } => cmd_attack(&scenario, model, protocol, policy, format),
        Command::Derive { kb_file, target } => cmd_derive(&kb_file, &target),
        Command::Honest { model, policy } => cmd_honest(model, policy),
    }
}

fn cmd_matrix(
    policy: VerificationPolicy,
    model: Option<ModelId>,
    perspective: Option<Perspective>,
    format: Format,
    out: Option<PathBuf>,
    budget: usize,
    scenarios: bool,
) -> ExitCode {
    let opts = MatrixOptions {
        policy,
        models: model.map_or_else(ModelId::all, |m| vec![m]),
        scenarios,
        search: SearchBounds::with_budget(budget),
    };
    let mut matrix = match run_matrix(&opts) {
        Ok(m) => m,
        Err(SearchError::BoundsExceeded { budget }) => {
            eprintln!("error: search budget of {budget} states exceeded; raise --budget");
            return ExitCode::from(EXIT_BUDGET);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_DATA);
        }
    };
    if let Some(p) = perspective {
        matrix.cells.retain(|c| c.verdict.perspective == p);
    }
    let diff = matrix.diff(&expected(VerificationPolicy::Strict));
    let audit: Vec<String> = matrix
        .cells
        .iter()
        .filter(|c| c.verdict.is_violated())
        .filter_map(|c| {
            audit_witness(&c.verdict, policy)
                .err()
                .map(|e| format!("{} {}: {e}", c.verdict.model, c.verdict.perspective))
        })
        .collect();
    match format {
        Format::Text => {
            print!("{}", matrix.render_text());
            for d in &diff {
                println!(
                    "diff: {} {} expected {} got {}",
                    d.model, d.perspective, d.expected, d.actual
                );
            }
            for a in &audit {
                println!("audit: {a}");
            }
        }
        Format::Json => {
            let mut doc = matrix.to_json(false);
            doc["diff"] = json!(diff);
            doc["audit_failures"] = json!(audit);
            println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
        }
    }
    if let Some(path) = out {
        let mut doc = matrix.to_json(true);
        doc["diff"] = json!(diff);
        doc["audit_failures"] = json!(audit);
        if let Err(e) = fs::write(
            &path,
            serde_json::to_string_pretty(&doc).expect("json") + "\n",
        ) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(EXIT_DATA);
        }
    }
    if diff.is_empty() && audit.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_MISMATCH)
    }
}

fn print_trace(run: &ScenarioRun) {
    let b = &run.bundle;
    println!(
        "== {} on {} ({}, policy {})",
        run.scenario, run.model, run.protocol, run.policy
    );
    for line in &run.log {
        println!("{line}");
    }
    println!("-- events");
    for (i, e) in b.events.iter().enumerate() {
        let who = match e.strand {
            Some(s) => format!("{} ({})", b.strands[s].id, b.strands[s].role),
            None => "adversary".to_owned(),
        };
        let verb = match e.direction {
            Direction::Send => "sends",
            Direction::Recv => "receives",
            Direction::Synth => "synthesises",
            Direction::Inject => "obtains",
        };
        println!("[{i:>2}] {who} {verb} {}", e.term);
        for k in b.knowledge.iter().filter(|k| k.event == Some(i)) {
            for t in &k.learned {
                println!("       adversary learns {t}");
            }
        }
    }
    println!("-- strands");
    for st in &b.strands {
        let vars: Vec<String> = st
            .bindings
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        println!(
            "{} ({}) {:?}: {}",
            st.id,
            st.role,
            st.status,
            vars.join(" ")
        );
    }
    let what = if run.protocol == Protocol::Baseline {
        "credentials"
    } else {
        "assertion"
    };
    match (&run.server_verdict, run.goal1) {
        (ServerVerdict::Accepted, false) => {
            println!("server ACCEPTED {what} from adversary session; Goal 1 VIOLATED")
        }
        (ServerVerdict::Accepted, true) => println!("server ACCEPTED {what}; Goal 1 holds"),
        (ServerVerdict::Rejected(r), _) => println!("server REJECTED: {r}"),
        (ServerVerdict::NotReached, g) => {
            println!(
                "server not reached; Goal 1 {}",
                if g { "holds" } else { "VIOLATED" }
            )
        }
    }
}

fn cmd_attack(
    name: &str,
    model: Option<ModelId>,
    protocol: Option<Protocol>,
    policy: VerificationPolicy,
    format: Format,
) -> ExitCode {
    let sc = match scenario::builtin(name) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!(
                "error: {e} (known: {})",
                scenario::builtin_names().join(", ")
            );
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let model = model.unwrap_or_else(|| match sc.family {
        Family::Baseline => ModelId::BASELINE,
        Family::Uaf => "uaf-nobinding-tls12-dh".parse().expect("known selector"),
    });
    let protocols = match protocol {
        Some(p) => vec![p],
        None => sc.protocols(model),
    };
    if protocols.is_empty() {
        eprintln!("error: scenario {} does not apply to {model}", sc.name);
        return ExitCode::from(EXIT_INAPPLICABLE);
    }
    let mut runs = Vec::new();
    for p in protocols {
        match sc.run(model, p, policy) {
            Ok(run) => runs.push(run),
            Err(e @ ScenarioError::InapplicableScenario { .. }) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_INAPPLICABLE);
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_DATA);
            }
        }
    }
    match format {
        Format::Text => {
            for run in &runs {
                print_trace(run);
            }
        }
        Format::Json => {
            let doc: Vec<serde_json::Value> = runs
                .iter()
                .map(|r| {
                    json!({
                        "scenario": r.scenario,
                        "model": r.model.to_string(),
                        "protocol": r.protocol,
                        "policy": r.policy.to_string(),
                        "server_verdict": r.server_verdict.to_string(),
                        "goal1": r.goal1,
                        "expected_violation": r.expected_violation,
                        "bundle": r.bundle.to_json(),
                    })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
        }
    }
    if runs.iter().all(ScenarioRun::matches_expectation) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_MISMATCH)
    }
}

fn cmd_derive(kb_file: &PathBuf, target: &str) -> ExitCode {
    let src = match fs::read_to_string(kb_file) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", kb_file.display());
            return ExitCode::from(EXIT_DATA);
        }
    };
    let terms = match parse_terms(&src) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}:{e}", kb_file.display());
            return ExitCode::from(EXIT_DATA);
        }
    };
    let target = match parse_term(target) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("target:{e}");
            return ExitCode::from(EXIT_DATA);
        }
    };
    let given = KnowledgeBase::from_terms(terms);
    let kb = match given.saturate() {
        Ok(kb) => kb,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_DATA);
        }
    };
    if kb.derivable(&target) {
        println!("derivable");
        if let Some(tree) = given.explain(&target) {
            print!("{tree}");
        }
        ExitCode::SUCCESS
    } else {
        println!("not derivable");
        ExitCode::from(EXIT_MISMATCH)
    }
}

fn cmd_honest(model: ModelId, policy: VerificationPolicy) -> ExitCode {
    let protocols: &[Protocol] = if model.is_baseline() {
        &[Protocol::Baseline]
    } else {
        &[Protocol::Registration, Protocol::Authentication]
    };
    let mut runs = Vec::new();
    for &p in protocols {
        match run_honest(model, p, policy) {
            Ok(b) => runs.push(json!({ "protocol": p, "bundle": Bundle::to_json(&b) })),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_DATA);
            }
        }
    }
    let doc = json!({ "model": model.to_string(), "policy": policy.to_string(), "runs": runs });
    println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
    ExitCode::SUCCESS
}
