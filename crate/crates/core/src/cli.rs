//! Command-line front end. [`run`] returns the process exit code.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use crate::encoder::{build, SynonymMode};
use crate::model::{validate, CapabilityModel, ModelError};
use crate::oracle::simulate;
use crate::planner::{explain, plan, Plan, PlanError, PlanOutcome, PlannerConfig};
use crate::smt::{emit, SolverConfig};
use crate::synonymy::SynonymyIndex;

pub const EXIT_OK: i32 = 0;
/// `validate` found problems, or `check` found violations.
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_NO_PLAN: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_IO: i32 = 66;

#[derive(Debug, Parser)]
#[command(name = "capplan", version, about = "Plan capability sequences with an SMT solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search for a plan with the fewest happenings.
    Plan {
        #[command(flatten)]
        input: ModelArgs,
        /// Largest bound tried; bound k has k + 1 happenings.
        #[arg(long, default_value_t = 4)]
        max_happenings: usize,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Print the SMT-LIB2 script for one bound.
    DumpSmt {
        #[command(flatten)]
        input: ModelArgs,
        #[arg(long, default_value_t = 0)]
        bound: usize,
        #[arg(long)]
        expanded_synonyms: bool,
        /// Leave out the unsat-core option.
        #[arg(long)]
        no_cores: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a model for structural problems.
    Validate {
        #[command(flatten)]
        input: ModelArgs,
        /// Also print the synonymy classes.
        #[arg(long)]
        explain_synonymy: bool,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Replay a plan against a model without a solver.
    Check {
        #[command(flatten)]
        input: ModelArgs,
        #[arg(long)]
        plan: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Print synonymy classes and synonym capabilities.
    ExplainSynonymy {
        #[command(flatten)]
        input: ModelArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Single document holding domain and problem.
    #[arg(long, conflicts_with_all = ["domain", "problem"], required_unless_present_all = ["domain", "problem"])]
    model: Option<PathBuf>,
    #[arg(long, requires = "problem")]
    domain: Option<PathBuf>,
    #[arg(long, requires = "domain")]
    problem: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Solver command line; the script is written to its stdin.
    #[arg(long, default_value = "z3 -in")]
    solver_cmd: String,
    /// Seconds per satisfiability check.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Append the solver conversation to this file.
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long)]
    expanded_synonyms: bool,
    /// Reuse one solver process across bounds.
    #[arg(long)]
    incremental: bool,
    /// Shrink the unsat core by deletion before explaining it.
    #[arg(long)]
    minimize_core: bool,
    /// Do not request unsat cores.
    #[arg(long)]
    no_cores: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the document here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
    #[error("{path}: not a plan document: {source}")]
    PlanDocument {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Model { .. } | CliError::PlanDocument { .. } => EXIT_DATA,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Plan(PlanError::InvalidModel(_) | PlanError::Encode(_)) => EXIT_DATA,
            CliError::Plan(PlanError::Solver(_) | PlanError::Extract(_)) => EXIT_SOLVER,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl ModelArgs {
    fn load(&self) -> Result<CapabilityModel, CliError> {
        match (&self.model, &self.domain, &self.problem) {
            (Some(path), _, _) => CapabilityModel::from_json_str(&read(path)?).map_err(|source| CliError::Model {
                path: path.clone(),
                source,
            }),
            (None, Some(d), Some(p)) => {
                CapabilityModel::from_documents(&read(d)?, &read(p)?).map_err(|source| CliError::Model {
                    path: p.clone(),
                    source,
                })
            }
            _ => Err(CliError::Usage("give --model or both --domain and --problem".into())),
        }
    }
}

impl SolverArgs {
    fn planner_config(&self) -> Result<PlannerConfig, CliError> {
        let timeout = match self.timeout {
            Some(t) if t.is_finite() && t > 0.0 => Some(Duration::from_secs_f64(t)),
            Some(t) => return Err(CliError::Usage(format!("--timeout must be positive, got {t}"))),
            None => None,
        };
        Ok(PlannerConfig {
            solver: SolverConfig {
                timeout,
                seed: self.seed,
                produce_cores: !self.no_cores,
                transcript: self.transcript.clone(),
                ..SolverConfig::default()
            }
            .with_command_line(&self.solver_cmd),
            mode: mode(self.expanded_synonyms),
            incremental: self.incremental,
            minimize_core: self.minimize_core,
        })
    }
}

fn mode(expanded: bool) -> SynonymMode {
    if expanded {
        SynonymMode::Expanded
    } else {
        SynonymMode::Collapsed
    }
}

fn emit_document(
    out: &OutputArgs,
    json: serde_json::Value,
    text: String,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let body = match out.format {
        Format::Json => serde_json::to_string_pretty(&json).expect("json") + "\n",
        Format::Text => text,
    };
    write_body(out.output.as_deref(), &body, stdout)
}

fn write_body(path: Option<&Path>, body: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(path) => fs::write(path, body).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => stdout.write_all(body.as_bytes()).map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

fn synonymy_json(model: &CapabilityModel, index: &SynonymyIndex) -> serde_json::Value {
    json!({
        "classes": index.property_classes.iter().map(|c| json!({
            "id": c.class_id,
            "datatype": c.datatype.name(),
            "typeDescription": c.type_description,
            "members": c.members,
        })).collect::<Vec<_>>(),
        "synonymCapabilities": index.syn_caps.iter()
            .filter(|(_, caps)| !caps.is_empty())
            .map(|(p, caps)| (p.clone(), json!(caps)))
            .collect::<serde_json::Map<_, _>>(),
        "provided": model.provided().map(|c| c.id.clone()).collect::<Vec<_>>(),
    })
}

fn synonymy_text(index: &SynonymyIndex) -> String {
    let mut s = String::new();
    for c in &index.property_classes {
        let members: Vec<&str> = c.members.iter().map(String::as_str).collect();
        s.push_str(&format!(
            "class {} ({}, {}): {}\n",
            c.class_id,
            c.datatype.name(),
            c.type_description,
            members.join(", ")
        ));
    }
    for (p, caps) in index.syn_caps.iter().filter(|(_, caps)| !caps.is_empty()) {
        let caps: Vec<&str> = caps.iter().map(String::as_str).collect();
        s.push_str(&format!("synonym capabilities of {p}: {}\n", caps.join(", ")));
    }
    s
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Plan {
            input,
            max_happenings,
            solver,
            out,
        } => {
            let model = input.load()?;
            let config = solver.planner_config()?;
            let outcome = plan(&model, max_happenings, &config)?;
            let json = outcome.to_json(&model);
            match outcome {
                PlanOutcome::Found { plan, .. } => {
                    emit_document(&out, json, plan.to_string(), stdout)?;
                    Ok(EXIT_OK)
                }
                PlanOutcome::NotFound(none) => {
                    let status = if none.all_unsat() {
                        format!("no plan with at most {} happening(s)", max_happenings + 1)
                    } else {
                        format!(
                            "no plan found with at most {} happening(s); some bounds were inconclusive",
                            max_happenings + 1
                        )
                    };
                    let mut text = format!("{status}\n");
                    for b in &none.bounds {
                        text.push_str(&format!(
                            "  bound {}: {}\n",
                            b.bound,
                            serde_json::to_value(&b.result).expect("json")["result"]
                                .as_str()
                                .unwrap_or("?")
                        ));
                    }
                    match explain(&none, &model) {
                        Ok(e) => text.push_str(&e.to_string()),
                        Err(_) => text.push_str("no unsat core available\n"),
                    }
                    emit_document(&out, json, text, stdout)?;
                    Ok(EXIT_NO_PLAN)
                }
            }
        }
        Command::DumpSmt {
            input,
            bound,
            expanded_synonyms,
            no_cores,
            output,
        } => {
            let model = input.load()?;
            let diagnostics = validate(&model);
            if !diagnostics.is_empty() {
                return Err(PlanError::InvalidModel(diagnostics).into());
            }
            let index = SynonymyIndex::new(&model);
            let enc = build(&model, &index, bound, mode(expanded_synonyms)).map_err(PlanError::from)?;
            write_body(output.as_deref(), &emit(&enc, !no_cores), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Validate {
            input,
            explain_synonymy,
            out,
        } => {
            let model = input.load()?;
            let diagnostics = validate(&model);
            let mut text = String::new();
            for d in &diagnostics {
                text.push_str(&format!("{d}\n"));
            }
            if diagnostics.is_empty() {
                text.push_str("model is valid\n");
            }
            let mut json = json!({ "valid": diagnostics.is_empty(), "diagnostics": diagnostics });
            if explain_synonymy {
                let index = SynonymyIndex::new(&model);
                text.push_str(&synonymy_text(&index));
                json["synonymy"] = synonymy_json(&model, &index);
            }
            emit_document(&out, json, text, stdout)?;
            Ok(if diagnostics.is_empty() { EXIT_OK } else { EXIT_FINDINGS })
        }
        Command::Check { input, plan, out } => {
            let model = input.load()?;
            let plan_doc: Plan = serde_json::from_str(&read(&plan)?).map_err(|source| CliError::PlanDocument {
                path: plan.clone(),
                source,
            })?;
            let diagnostics = validate(&model);
            if !diagnostics.is_empty() {
                return Err(PlanError::InvalidModel(diagnostics).into());
            }
            let index = SynonymyIndex::new(&model);
            let verdict = simulate(&model, &index, &plan_doc);
            let mut text = String::new();
            for v in &verdict.violations {
                text.push_str(&format!("{v}\n"));
            }
            if verdict.is_ok() {
                text.push_str("plan is valid\n");
            }
            let json = json!({ "ok": verdict.is_ok(), "violations": verdict.violations });
            emit_document(&out, json, text, stdout)?;
            Ok(if verdict.is_ok() { EXIT_OK } else { EXIT_FINDINGS })
        }
        Command::ExplainSynonymy { input, out } => {
            let model = input.load()?;
            let index = SynonymyIndex::new(&model);
            emit_document(&out, synonymy_json(&model, &index), synonymy_text(&index), stdout)?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if let CliError::Plan(PlanError::InvalidModel(diagnostics)) = &e {
                for d in diagnostics {
                    let _ = writeln!(stderr, "  {d}");
                }
            }
            e.exit_code()
        }
    }
}
