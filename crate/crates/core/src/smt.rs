//! SMT-LIB2 rendering and a line-oriented driver for solver processes.
//!
//! The driver talks to any solver that reads a script on stdin (`z3 -in`,
//! `cvc5 --incremental`, ...). Models are read back with `get-value` and
//! conflicts with `get-unsat-core`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use num::{BigInt, Signed, Zero};
use thiserror::Error;

use crate::encoder::{Assertion, Encoding, Logic, Term, VarKey};
use crate::expr::{parse_rational, Datatype, Op, Rational, Value};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("could not start solver `{command}`: {source}")]
    Launch {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("solver protocol error: {0}")]
    Protocol(String),
    #[error("solver i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveOutcome {
    Sat(BTreeMap<VarKey, Value>),
    /// Named assertions in the core, if cores were requested and produced.
    Unsat(Option<Vec<String>>),
    Unknown(String),
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Program and arguments.
    pub command: Vec<String>,
    /// Wall-clock limit per satisfiability check.
    pub timeout: Option<Duration>,
    pub seed: Option<u64>,
    pub produce_cores: bool,
    /// Append everything sent to and received from the solver here.
    pub transcript: Option<PathBuf>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            command: vec!["z3".into(), "-in".into()],
            timeout: None,
            seed: None,
            produce_cores: true,
            transcript: None,
        }
    }
}

impl SolverConfig {
    /// Splits a command line on whitespace.
    pub fn with_command_line(mut self, line: &str) -> Self {
        let parts: Vec<String> = line.split_whitespace().map(String::from).collect();
        if !parts.is_empty() {
            self.command = parts;
        }
        self
    }

    pub fn command_line(&self) -> String {
        self.command.join(" ")
    }
}

pub fn quote_symbol(name: &str) -> String {
    format!("|{name}|")
}

pub fn render_sort(d: Datatype) -> &'static str {
    match d {
        Datatype::Boolean => "Bool",
        Datatype::Real => "Real",
    }
}

pub fn render_rational(r: &Rational) -> String {
    let body = |n: &BigInt, d: &BigInt| {
        if d == &BigInt::from(1) {
            format!("{n}.0")
        } else {
            format!("(/ {n}.0 {d}.0)")
        }
    };
    let text = body(&r.numer().abs(), r.denom());
    if r.is_negative() {
        format!("(- {text})")
    } else {
        text
    }
}

pub fn render_value(v: &Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::Real(r) => render_rational(r),
    }
}

fn op_symbol(op: Op) -> &'static str {
    match op {
        Op::Plus => "+",
        Op::Minus => "-",
        Op::Times => "*",
        Op::Divide => "/",
        Op::Eq => "=",
        Op::Neq => "distinct",
        Op::Lt => "<",
        Op::Gt => ">",
        Op::Leq => "<=",
        Op::Geq => ">=",
        Op::And => "and",
        Op::Or => "or",
        Op::Not => "not",
    }
}

pub fn render_term(t: &Term) -> String {
    let mut out = String::new();
    write_term(t, &mut out);
    out
}

fn write_term(t: &Term, out: &mut String) {
    match t {
        Term::Const(v) => out.push_str(&render_value(v)),
        Term::Var(k) => out.push_str(&quote_symbol(&k.symbol_name())),
        Term::App(op, args) => {
            out.push('(');
            out.push_str(op_symbol(*op));
            for a in args {
                out.push(' ');
                write_term(a, out);
            }
            out.push(')');
        }
        Term::Implies(a, b) => {
            out.push_str("(=> ");
            write_term(a, out);
            out.push(' ');
            write_term(b, out);
            out.push(')');
        }
    }
}

fn declaration(key: &VarKey, sort: Datatype) -> String {
    format!(
        "(declare-fun {} () {})",
        quote_symbol(&key.symbol_name()),
        render_sort(sort)
    )
}

fn assertion(a: &Assertion) -> String {
    format!("(assert (! {} :named {}))", render_term(&a.term), quote_symbol(&a.name))
}

fn header(logic: Logic, produce_cores: bool, seed: Option<u64>) -> String {
    let mut out = String::new();
    if let Some(seed) = seed {
        out.push_str(&format!("(set-option :random-seed {seed})\n"));
    }
    out.push_str("(set-option :produce-models true)\n");
    if produce_cores {
        out.push_str("(set-option :produce-unsat-cores true)\n");
    }
    out.push_str(&format!("(set-logic {})\n", logic.smtlib_name()));
    out
}

/// Complete script for one bound, ending with `(check-sat)`.
pub fn emit(encoding: &Encoding, produce_cores: bool) -> String {
    let mut out = format!(
        "; {} happening(s), {} variable(s), {} assertion(s)\n",
        encoding.happenings(),
        encoding.variables.len(),
        encoding.assertions.len()
    );
    out.push_str(&header(encoding.logic, produce_cores, None));
    for (k, d) in &encoding.variables {
        out.push_str(&declaration(k, *d));
        out.push('\n');
    }
    for a in &encoding.assertions {
        out.push_str(&assertion(a));
        out.push('\n');
    }
    out.push_str("(check-sat)\n");
    out
}

/// Minimal s-expression reader for solver responses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    Str(String),
    List(Vec<Sexp>),
}

impl Sexp {
    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a) => Some(a),
            _ => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items) => Some(items),
            _ => None,
        }
    }
}

pub fn parse_sexps(text: &str) -> Result<Vec<Sexp>, SolverError> {
    let chars: Vec<char> = text.chars().collect();
    let mut pos = 0;
    let mut out = Vec::new();
    loop {
        skip_blank(&chars, &mut pos);
        if pos >= chars.len() {
            return Ok(out);
        }
        out.push(parse_one(&chars, &mut pos)?);
    }
}

fn skip_blank(chars: &[char], pos: &mut usize) {
    while *pos < chars.len() {
        if chars[*pos].is_whitespace() {
            *pos += 1;
        } else if chars[*pos] == ';' {
            while *pos < chars.len() && chars[*pos] != '\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
}

fn parse_one(chars: &[char], pos: &mut usize) -> Result<Sexp, SolverError> {
    let unexpected_end = || SolverError::Protocol("unbalanced response".into());
    match chars[*pos] {
        '(' => {
            *pos += 1;
            let mut items = Vec::new();
            loop {
                skip_blank(chars, pos);
                match chars.get(*pos) {
                    None => return Err(unexpected_end()),
                    Some(')') => {
                        *pos += 1;
                        return Ok(Sexp::List(items));
                    }
                    Some(_) => items.push(parse_one(chars, pos)?),
                }
            }
        }
        ')' => Err(SolverError::Protocol("unexpected `)`".into())),
        '|' => {
            let start = *pos + 1;
            let end = chars[start..]
                .iter()
                .position(|&c| c == '|')
                .ok_or_else(unexpected_end)?
                + start;
            *pos = end + 1;
            Ok(Sexp::Atom(chars[start..end].iter().collect()))
        }
        '"' => {
            let mut s = String::new();
            *pos += 1;
            loop {
                match chars.get(*pos) {
                    None => return Err(unexpected_end()),
                    Some('"') if chars.get(*pos + 1) == Some(&'"') => {
                        s.push('"');
                        *pos += 2;
                    }
                    Some('"') => {
                        *pos += 1;
                        return Ok(Sexp::Str(s));
                    }
                    Some(&c) => {
                        s.push(c);
                        *pos += 1;
                    }
                }
            }
        }
        _ => {
            let start = *pos;
            while *pos < chars.len() && !chars[*pos].is_whitespace() && !"()|\";".contains(chars[*pos]) {
                *pos += 1;
            }
            Ok(Sexp::Atom(chars[start..*pos].iter().collect()))
        }
    }
}

/// True once `text` holds at least one complete s-expression.
fn balanced(text: &str) -> bool {
    let mut depth = 0i64;
    let mut seen = false;
    let mut in_quote = false;
    let mut in_string = false;
    for c in text.chars() {
        match c {
            '|' if !in_string => in_quote = !in_quote,
            '"' if !in_quote => in_string = !in_string,
            '(' if !in_quote && !in_string => {
                depth += 1;
                seen = true;
            }
            ')' if !in_quote && !in_string => depth -= 1,
            c if !c.is_whitespace() => seen = true,
            _ => {}
        }
    }
    seen && depth <= 0 && !in_quote && !in_string
}

/// A model value that is not an exact rational (e.g. an algebraic number).
#[derive(Debug)]
struct Irrational(String);

fn parse_model_value(s: &Sexp, sort: Datatype) -> Result<Result<Value, Irrational>, SolverError> {
    let bad = || SolverError::Protocol(format!("cannot read model value {s:?}"));
    match sort {
        Datatype::Boolean => match s.atom() {
            Some("true") => Ok(Ok(Value::Bool(true))),
            Some("false") => Ok(Ok(Value::Bool(false))),
            _ => Err(bad()),
        },
        Datatype::Real => Ok(real_value(s)?.map(Value::Real)),
    }
}

fn real_value(s: &Sexp) -> Result<Result<Rational, Irrational>, SolverError> {
    let bad = || SolverError::Protocol(format!("cannot read real value {s:?}"));
    match s {
        Sexp::Atom(a) => parse_rational(a).map(Ok).map_err(|_| bad()),
        Sexp::List(items) => match items.first().and_then(Sexp::atom) {
            Some("-") if items.len() == 2 => Ok(real_value(&items[1])?.map(|r| -r)),
            Some("/") if items.len() == 3 => {
                let (n, d) = (real_value(&items[1])?, real_value(&items[2])?);
                match (n, d) {
                    (Ok(n), Ok(d)) if !d.is_zero() => Ok(Ok(n / d)),
                    (Ok(_), Ok(_)) => Err(bad()),
                    (Err(e), _) | (_, Err(e)) => Ok(Err(e)),
                }
            }
            Some("root-obj") | Some("_") => Ok(Err(Irrational(format!("{s:?}")))),
            _ => Err(bad()),
        },
        Sexp::Str(_) => Err(bad()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckResult {
    Sat,
    Unsat,
    Unknown,
}

/// A running solver process.
pub struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    stderr: Arc<Mutex<String>>,
    transcript: Option<File>,
    timeout: Option<Duration>,
    timed_out: bool,
}

impl Session {
    pub fn start(config: &SolverConfig) -> Result<Session, SolverError> {
        let (program, args) = config
            .command
            .split_first()
            .ok_or_else(|| SolverError::Protocol("empty solver command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| SolverError::Launch {
                command: config.command_line(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut stderr_pipe = child.stderr.take().expect("piped stderr");

        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr_pipe.read_to_string(&mut buf);
            sink.lock().unwrap().push_str(&buf);
        });

        let transcript = match &config.transcript {
            Some(path) => Some(File::options().create(true).append(true).open(path)?),
            None => None,
        };
        let mut session = Session {
            child,
            stdin,
            lines,
            stderr,
            transcript,
            timeout: config.timeout,
            timed_out: false,
        };
        if let Some(seed) = config.seed {
            session.send(&format!("(set-option :random-seed {seed})\n"))?;
        }
        Ok(session)
    }

    pub fn send(&mut self, text: &str) -> Result<(), SolverError> {
        if let Some(t) = &mut self.transcript {
            t.write_all(text.as_bytes())?;
        }
        self.stdin.write_all(text.as_bytes())?;
        self.stdin.flush()?;
        Ok(())
    }

    pub fn declare(&mut self, key: &VarKey, sort: Datatype) -> Result<(), SolverError> {
        self.send(&format!("{}\n", declaration(key, sort)))
    }

    pub fn assert(&mut self, a: &Assertion) -> Result<(), SolverError> {
        self.send(&format!("{}\n", assertion(a)))
    }

    pub fn set_logic(&mut self, logic: Logic, produce_cores: bool) -> Result<(), SolverError> {
        self.send(&header(logic, produce_cores, None))
    }

    fn note(&mut self, response: &str) {
        if let Some(t) = &mut self.transcript {
            for line in response.lines() {
                let _ = writeln!(t, "; {line}");
            }
        }
    }

    /// Next complete response; `None` on timeout.
    fn read_response(&mut self, deadline: Option<Instant>) -> Result<Option<Sexp>, SolverError> {
        let mut text = String::new();
        loop {
            let line = match deadline {
                Some(d) => match self.lines.recv_timeout(d.saturating_duration_since(Instant::now())) {
                    Ok(line) => line,
                    Err(RecvTimeoutError::Timeout) => return Ok(None),
                    Err(RecvTimeoutError::Disconnected) => return Err(self.died()),
                },
                None => self.lines.recv().map_err(|_| self.died())?,
            };
            text.push_str(&line);
            text.push('\n');
            if balanced(&text) {
                self.note(&text);
                let mut parsed = parse_sexps(&text)?;
                if parsed.len() != 1 {
                    return Err(SolverError::Protocol(format!("unexpected response `{}`", text.trim())));
                }
                let sexp = parsed.pop().unwrap();
                match sexp.atom() {
                    // acknowledgements some solvers print for options
                    Some("success") | Some("unsupported") => {
                        text.clear();
                        continue;
                    }
                    _ => {}
                }
                if let Some(items) = sexp.list() {
                    if items.first().and_then(Sexp::atom) == Some("error") {
                        let msg = match items.get(1) {
                            Some(Sexp::Str(s)) => s.clone(),
                            other => format!("{other:?}"),
                        };
                        return Err(SolverError::Protocol(format!("solver reported: {msg}")));
                    }
                }
                return Ok(Some(sexp));
            }
        }
    }

    fn died(&mut self) -> SolverError {
        let _ = self.child.wait();
        let stderr = self.stderr.lock().map(|s| s.trim().to_string()).unwrap_or_default();
        if stderr.is_empty() {
            SolverError::Protocol("solver exited unexpectedly".into())
        } else {
            SolverError::Protocol(format!("solver exited unexpectedly: {stderr}"))
        }
    }

    fn deadline(&self) -> Option<Instant> {
        self.timeout.map(|t| Instant::now() + t)
    }

    /// Sends `(check-sat)` unless `already_sent`, then reads the verdict.
    pub fn check_sat(&mut self, already_sent: bool) -> Result<CheckResult, SolverError> {
        if !already_sent {
            self.send("(check-sat)\n")?;
        }
        let deadline = self.deadline();
        match self.read_response(deadline)? {
            None => {
                self.timed_out = true;
                let _ = self.child.kill();
                Ok(CheckResult::Unknown)
            }
            Some(s) => match s.atom() {
                Some("sat") => Ok(CheckResult::Sat),
                Some("unsat") => Ok(CheckResult::Unsat),
                Some("unknown") => Ok(CheckResult::Unknown),
                _ => Err(SolverError::Protocol(format!("unexpected check-sat answer {s:?}"))),
            },
        }
    }

    pub fn timed_out(&self) -> bool {
        self.timed_out
    }

    /// Values of the given variables. `Ok(Err(_))` if some value is not an
    /// exact rational.
    pub fn get_values(
        &mut self,
        vars: &[(VarKey, Datatype)],
    ) -> Result<Result<BTreeMap<VarKey, Value>, String>, SolverError> {
        let mut out = BTreeMap::new();
        if vars.is_empty() {
            return Ok(Ok(out));
        }
        let by_symbol: BTreeMap<String, (&VarKey, Datatype)> =
            vars.iter().map(|(k, d)| (k.symbol_name(), (k, *d))).collect();
        let names: Vec<String> = vars.iter().map(|(k, _)| quote_symbol(&k.symbol_name())).collect();
        self.send(&format!("(get-value ({}))\n", names.join(" ")))?;
        let deadline = self.deadline();
        let response = self
            .read_response(deadline)?
            .ok_or_else(|| SolverError::Protocol("timed out reading model".into()))?;
        let pairs = response
            .list()
            .ok_or_else(|| SolverError::Protocol("get-value did not return a list".into()))?;
        for pair in pairs {
            let [name, value] = pair.list().unwrap_or_default() else {
                return Err(SolverError::Protocol(format!("bad get-value entry {pair:?}")));
            };
            let name = name
                .atom()
                .ok_or_else(|| SolverError::Protocol(format!("bad variable name {name:?}")))?;
            let Some((key, sort)) = by_symbol.get(name) else {
                return Err(SolverError::Protocol(format!("value for undeclared `{name}`")));
            };
            match parse_model_value(value, *sort)? {
                Ok(v) => {
                    out.insert((*key).clone(), v);
                }
                Err(Irrational(text)) => return Ok(Err(format!("`{name}` has non-rational value {text}"))),
            }
        }
        if out.len() != vars.len() {
            return Err(SolverError::Protocol("model is missing variables".into()));
        }
        Ok(Ok(out))
    }

    pub fn get_unsat_core(&mut self) -> Result<Vec<String>, SolverError> {
        self.send("(get-unsat-core)\n")?;
        let deadline = self.deadline();
        let response = self
            .read_response(deadline)?
            .ok_or_else(|| SolverError::Protocol("timed out reading unsat core".into()))?;
        let items = response
            .list()
            .ok_or_else(|| SolverError::Protocol("get-unsat-core did not return a list".into()))?;
        items
            .iter()
            .map(|s| {
                s.atom()
                    .map(String::from)
                    .ok_or_else(|| SolverError::Protocol(format!("bad core entry {s:?}")))
            })
            .collect()
    }

    pub fn reason_unknown(&mut self) -> Result<String, SolverError> {
        self.send("(get-info :reason-unknown)\n")?;
        let deadline = self.deadline();
        let Some(response) = self.read_response(deadline)? else {
            return Ok("unknown".into());
        };
        let reason = response
            .list()
            .and_then(|items| items.get(1))
            .map(|s| match s {
                Sexp::Str(s) | Sexp::Atom(s) => s.clone(),
                other => format!("{other:?}"),
            })
            .unwrap_or_else(|| "unknown".into());
        Ok(reason)
    }

    pub fn push(&mut self) -> Result<(), SolverError> {
        self.send("(push 1)\n")
    }

    pub fn pop(&mut self) -> Result<(), SolverError> {
        self.send("(pop 1)\n")
    }

    /// Reads the outcome of a pending check: model, core or reason.
    pub fn outcome(
        &mut self,
        result: CheckResult,
        vars: &[(VarKey, Datatype)],
        cores: bool,
    ) -> Result<SolveOutcome, SolverError> {
        Ok(match result {
            CheckResult::Sat => match self.get_values(vars)? {
                Ok(model) => SolveOutcome::Sat(model),
                Err(reason) => SolveOutcome::Unknown(reason),
            },
            CheckResult::Unsat => SolveOutcome::Unsat(if cores { Some(self.get_unsat_core()?) } else { None }),
            CheckResult::Unknown if self.timed_out => SolveOutcome::Unknown("timeout".into()),
            CheckResult::Unknown => SolveOutcome::Unknown(self.reason_unknown()?),
        })
    }

    pub fn close(mut self) {
        if !self.timed_out {
            let _ = self.send("(exit)\n");
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Runs a complete script ending in `(check-sat)` and collects the outcome.
pub fn solve_script(
    script: &str,
    vars: &[(VarKey, Datatype)],
    config: &SolverConfig,
) -> Result<SolveOutcome, SolverError> {
    let mut session = Session::start(config)?;
    session.send(script)?;
    let result = session.check_sat(true)?;
    let outcome = session.outcome(result, vars, config.produce_cores)?;
    session.close();
    Ok(outcome)
}

pub fn solve(encoding: &Encoding, config: &SolverConfig) -> Result<SolveOutcome, SolverError> {
    solve_script(&emit(encoding, config.produce_cores), &encoding.variables, config)
}

/// Deletion-based shrinking of an unsat core: drops one assertion at a time
/// and keeps the drop whenever the rest stays unsatisfiable.
pub fn minimize_core(encoding: &Encoding, core: &[String], config: &SolverConfig) -> Result<Vec<String>, SolverError> {
    let config = SolverConfig {
        produce_cores: true,
        transcript: None,
        ..config.clone()
    };
    let mut current: BTreeSet<String> = core.iter().cloned().collect();
    for name in core {
        if !current.contains(name) {
            continue;
        }
        let mut trial = current.clone();
        trial.remove(name);
        if let SolveOutcome::Unsat(smaller) = solve(&encoding.restricted(&trial), &config)? {
            current = match smaller {
                Some(c) => c.into_iter().filter(|n| trial.contains(n)).collect(),
                None => trial,
            };
        }
    }
    // keep encoding order for stable output
    Ok(encoding
        .assertions
        .iter()
        .filter(|a| current.contains(&a.name))
        .map(|a| a.name.clone())
        .collect())
}
