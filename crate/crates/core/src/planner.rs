//! Iterative deepening over the number of happenings, plan extraction and
//! unsat-core explanations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{build, Assertion, EncodeError, Encoding, Origin, SynonymMode, VarKey};
use crate::expr::Value;
use crate::model::{validate, CapabilityModel, Diagnostic};
use crate::smt::{minimize_core, solve, Session, SolveOutcome, SolverConfig, SolverError};
use crate::synonymy::SynonymyIndex;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("model is invalid ({} problem(s)); first: {}", .0.len(), .0[0])]
    InvalidModel(Vec<Diagnostic>),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("model has no value for `{0}`")]
    IncompleteModel(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExplainError {
    #[error("no unsat core available: the solver ran without core production or never answered unsat")]
    CoresUnavailable,
}

#[derive(Debug, Clone, Default)]
pub struct PlannerConfig {
    pub solver: SolverConfig,
    pub mode: SynonymMode,
    /// Keep one solver process across bounds.
    pub incremental: bool,
    pub minimize_core: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "camelCase")]
pub enum BoundResult {
    Sat,
    Unsat {
        #[serde(skip_serializing_if = "Option::is_none")]
        core: Option<Vec<String>>,
    },
    Unknown {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundOutcome {
    /// Loop index; the encoding spans `bound + 1` happenings.
    pub bound: usize,
    #[serde(flatten)]
    pub result: BoundResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Happening {
    pub applied: Vec<String>,
    pub layer0: BTreeMap<String, Value>,
    pub layer1: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Plan {
    pub bound_happenings: usize,
    pub happenings: Vec<Happening>,
    /// `"<capability>#t<k>"` → unbound input property → chosen value.
    pub parameters: BTreeMap<String, BTreeMap<String, Value>>,
    /// Class id → member property ids.
    #[serde(default)]
    pub classes: BTreeMap<String, Vec<String>>,
}

impl Plan {
    /// Applied capabilities per happening, e.g. `["DriveTo", "Transport"]`.
    pub fn steps(&self) -> Vec<Vec<&str>> {
        self.happenings
            .iter()
            .map(|h| h.applied.iter().map(String::as_str).collect())
            .collect()
    }

    pub fn applied_count(&self) -> usize {
        self.happenings.iter().map(|h| h.applied.len()).sum()
    }

    pub fn parameter(&self, capability: &str, happening: usize, property: &str) -> Option<&Value> {
        self.parameters
            .get(&format!("{capability}#t{happening}"))
            .and_then(|p| p.get(property))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "plan with {} happening(s)", self.bound_happenings)?;
        for (t, h) in self.happenings.iter().enumerate() {
            if h.applied.is_empty() {
                writeln!(f, "  t{t}: (no capability)")?;
                continue;
            }
            for c in &h.applied {
                write!(f, "  t{t}: {c}")?;
                if let Some(params) = self.parameters.get(&format!("{c}#t{t}")) {
                    let rendered: Vec<String> = params.iter().map(|(p, v)| format!("{p} = {v}")).collect();
                    write!(f, "({})", rendered.join(", "))?;
                }
                writeln!(f)?;
            }
        }
        if let Some(last) = self.happenings.last() {
            writeln!(f, "final state:")?;
            for (class, v) in &last.layer1 {
                writeln!(f, "  {class} = {v}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoPlanFound {
    pub max_bound: usize,
    pub bounds: Vec<BoundOutcome>,
    /// Core of the last unsatisfiable bound, resolved to its assertions.
    pub core: Option<Vec<Assertion>>,
}

impl NoPlanFound {
    /// True when every bound was proven unsatisfiable (no timeouts or unknowns).
    pub fn all_unsat(&self) -> bool {
        self.bounds
            .iter()
            .all(|b| matches!(b.result, BoundResult::Unsat { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanOutcome {
    Found { plan: Plan, bounds: Vec<BoundOutcome> },
    NotFound(NoPlanFound),
}

impl PlanOutcome {
    pub fn plan(&self) -> Option<&Plan> {
        match self {
            PlanOutcome::Found { plan, .. } => Some(plan),
            PlanOutcome::NotFound(_) => None,
        }
    }

    pub fn bounds(&self) -> &[BoundOutcome] {
        match self {
            PlanOutcome::Found { bounds, .. } => bounds,
            PlanOutcome::NotFound(n) => &n.bounds,
        }
    }

    /// The plan document, or a `noPlan` report with bound outcomes and the
    /// explanation when a core is available.
    pub fn to_json(&self, model: &CapabilityModel) -> serde_json::Value {
        match self {
            PlanOutcome::Found { plan, .. } => serde_json::to_value(plan).expect("plan serializes"),
            PlanOutcome::NotFound(none) => serde_json::json!({
                "result": "noPlan",
                "allUnsat": none.all_unsat(),
                "maxHappenings": none.max_bound,
                "bounds": none.bounds,
                "explanation": explain(none, model).ok(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationElement {
    pub name: String,
    pub family: String,
    pub element: String,
    pub description: String,
    pub constraint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Explanation {
    pub core_names: Vec<String>,
    pub elements: Vec<ExplanationElement>,
}

impl fmt::Display for Explanation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "conflicting assertions ({}):", self.elements.len())?;
        for e in &self.elements {
            writeln!(f, "  {} [{}]", e.name, e.element)?;
            writeln!(f, "    {}", e.description)?;
            writeln!(f, "    {}", e.constraint)?;
        }
        Ok(())
    }
}

fn is_scoped(origin: &Origin) -> bool {
    matches!(
        origin,
        Origin::Goal { .. } | Origin::GoalConstraint { .. } | Origin::Alignment { goal: true, .. }
    )
}

/// Fresh-process or incremental solving of successive bounds.
enum Driver {
    Fresh,
    Incremental {
        session: Option<Session>,
        declared: BTreeSet<VarKey>,
        asserted: BTreeSet<String>,
    },
}

impl Driver {
    fn solve(&mut self, enc: &Encoding, config: &SolverConfig) -> Result<SolveOutcome, SolverError> {
        match self {
            Driver::Fresh => solve(enc, config),
            Driver::Incremental {
                session,
                declared,
                asserted,
            } => {
                if session.is_none() {
                    let mut s = Session::start(config)?;
                    s.set_logic(enc.logic, config.produce_cores)?;
                    *session = Some(s);
                }
                let s = session.as_mut().unwrap();
                for (k, d) in &enc.variables {
                    if declared.insert(k.clone()) {
                        s.declare(k, *d)?;
                    }
                }
                for a in enc.assertions.iter().filter(|a| !is_scoped(&a.origin)) {
                    if asserted.insert(a.name.clone()) {
                        s.assert(a)?;
                    }
                }
                s.push()?;
                for a in enc.assertions.iter().filter(|a| is_scoped(&a.origin)) {
                    s.assert(a)?;
                }
                let result = s.check_sat(false)?;
                let outcome = s.outcome(result, &enc.variables, config.produce_cores)?;
                if s.timed_out() {
                    // the process was killed; restart on the next bound
                    session.take();
                    declared.clear();
                    asserted.clear();
                } else {
                    s.pop()?;
                }
                Ok(outcome)
            }
        }
    }

    fn finish(self) {
        if let Driver::Incremental { session: Some(s), .. } = self {
            s.close();
        }
    }
}

/// Searches bounds `0..=max_bound` (1 to `max_bound + 1` happenings) and
/// returns the plan for the smallest satisfiable one.
pub fn plan(model: &CapabilityModel, max_bound: usize, config: &PlannerConfig) -> Result<PlanOutcome, PlanError> {
    let diagnostics = validate(model);
    if !diagnostics.is_empty() {
        return Err(PlanError::InvalidModel(diagnostics));
    }
    let index = SynonymyIndex::new(model);
    let mut driver = if config.incremental {
        Driver::Incremental {
            session: None,
            declared: BTreeSet::new(),
            asserted: BTreeSet::new(),
        }
    } else {
        Driver::Fresh
    };
    let mut bounds = Vec::new();
    let mut core = None;
    for k in 0..=max_bound {
        let enc = build(model, &index, k, config.mode)?;
        if k == 0 && !enc.capabilities.is_empty() {
            // prefer the empty plan when the initial state already meets the goal
            let idle = enc.idle();
            let quiet = SolverConfig {
                produce_cores: false,
                ..config.solver.clone()
            };
            if let SolveOutcome::Sat(valuation) = solve(&idle, &quiet)? {
                bounds.push(BoundOutcome {
                    bound: 0,
                    result: BoundResult::Sat,
                });
                let plan = extract_plan(&enc, &valuation)?;
                return Ok(PlanOutcome::Found { plan, bounds });
            }
        }
        let outcome = match driver.solve(&enc, &config.solver) {
            Ok(o) => o,
            Err(e) => {
                driver.finish();
                return Err(e.into());
            }
        };
        match outcome {
            SolveOutcome::Sat(valuation) => {
                driver.finish();
                bounds.push(BoundOutcome {
                    bound: k,
                    result: BoundResult::Sat,
                });
                let plan = extract_plan(&enc, &valuation)?;
                return Ok(PlanOutcome::Found { plan, bounds });
            }
            SolveOutcome::Unsat(names) => {
                let names = match (names, config.minimize_core) {
                    (Some(names), true) => Some(minimize_core(&enc, &names, &config.solver)?),
                    (names, _) => names,
                };
                core = names.as_ref().map(|names| {
                    let wanted: BTreeSet<&String> = names.iter().collect();
                    enc.assertions
                        .iter()
                        .filter(|a| wanted.contains(&a.name))
                        .cloned()
                        .collect::<Vec<_>>()
                });
                bounds.push(BoundOutcome {
                    bound: k,
                    result: BoundResult::Unsat { core: names },
                });
            }
            SolveOutcome::Unknown(reason) => bounds.push(BoundOutcome {
                bound: k,
                result: BoundResult::Unknown { reason },
            }),
        }
    }
    driver.finish();
    Ok(PlanOutcome::NotFound(NoPlanFound {
        max_bound,
        bounds,
        core,
    }))
}

pub fn extract_plan(encoding: &Encoding, valuation: &BTreeMap<VarKey, Value>) -> Result<Plan, ExtractError> {
    let get = |k: &VarKey| {
        valuation
            .get(k)
            .cloned()
            .ok_or_else(|| ExtractError::IncompleteModel(k.symbol_name()))
    };
    for (k, _) in &encoding.variables {
        get(k)?;
    }
    let mut plan = Plan {
        bound_happenings: encoding.happenings(),
        classes: encoding.classes.clone(),
        ..Plan::default()
    };
    for t in 0..encoding.happenings() {
        let mut h = Happening::default();
        for c in &encoding.capabilities {
            if get(&VarKey::cap(c.clone(), t))? == Value::Bool(true) {
                h.applied.push(c.clone());
                let mut params = BTreeMap::new();
                for (prop, subject) in encoding.parameters.get(c).into_iter().flatten() {
                    params.insert(prop.clone(), get(&VarKey::prop(subject.clone(), t, 0))?);
                }
                if !params.is_empty() {
                    plan.parameters.insert(format!("{c}#t{t}"), params);
                }
            }
        }
        for class in encoding.classes.keys() {
            h.layer0.insert(class.clone(), get(&encoding.class_var(class, t, 0))?);
            h.layer1.insert(class.clone(), get(&encoding.class_var(class, t, 1))?);
        }
        plan.happenings.push(h);
    }
    Ok(plan)
}

/// Inverse of [`extract_plan`] for class-collapsed encodings: the variable
/// assignment a plan stands for. Classes or happenings missing from the plan
/// are left out.
pub fn plan_valuation(encoding: &Encoding, plan: &Plan) -> BTreeMap<VarKey, Value> {
    let mut out = BTreeMap::new();
    for (t, h) in plan.happenings.iter().enumerate().take(encoding.happenings()) {
        for c in &encoding.capabilities {
            out.insert(VarKey::cap(c.clone(), t), Value::Bool(h.applied.contains(c)));
        }
        for (layer, values) in [(0u8, &h.layer0), (1, &h.layer1)] {
            for (class, v) in values {
                if encoding.classes.contains_key(class) {
                    out.insert(encoding.class_var(class, t, layer), v.clone());
                }
            }
        }
    }
    out
}

pub fn explain(no_plan: &NoPlanFound, _model: &CapabilityModel) -> Result<Explanation, ExplainError> {
    let core = no_plan.core.as_ref().ok_or(ExplainError::CoresUnavailable)?;
    Ok(Explanation {
        core_names: core.iter().map(|a| a.name.clone()).collect(),
        elements: core
            .iter()
            .map(|a| ExplanationElement {
                name: a.name.clone(),
                family: a.origin.family().to_string(),
                element: a.origin.element(),
                description: a.origin.describe(),
                constraint: a.term.to_string(),
            })
            .collect(),
    })
}
