//! Solver-free semantics: replay a plan against a model, and find minimal
//! plans by breadth-first search over a finite value domain.
//!
//! Works on synonymy classes directly and shares nothing with the encoder
//! beyond the model and the synonymy index.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{Datatype, Expr, Op, Rational, Value};
use crate::model::{Capability, CapabilityModel, ConstraintRole, ExpressionGoal};
use crate::planner::{Happening, Plan};
use crate::synonymy::{effect_sets, ClassEffects, EffectSets, SynonymyIndex};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("search budget of {0} states exceeded")]
    DomainTooLarge(usize),
}

/// Value of every synonymy class at one layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct WorldState {
    pub valuation: BTreeMap<String, Value>,
}

impl WorldState {
    pub fn get(&self, class: &str) -> Option<&Value> {
        self.valuation.get(class)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Violation {
    Structure {
        message: String,
    },
    UnknownCapability {
        capability: String,
        happening: usize,
    },
    MissingValue {
        class: String,
        happening: usize,
        layer: u8,
    },
    WrongDatatype {
        class: String,
        happening: usize,
        layer: u8,
    },
    InitialState {
        property: String,
    },
    InitialConstraint {
        capability: String,
        index: usize,
    },
    PreconditionFailed {
        capability: String,
        happening: usize,
    },
    EffectFailed {
        capability: String,
        happening: usize,
    },
    ConstraintFailed {
        capability: String,
        index: usize,
        happening: usize,
    },
    Mutex {
        first: String,
        second: String,
        happening: usize,
    },
    FrameViolation {
        class: String,
        happening: usize,
    },
    ContinuationViolation {
        class: String,
        happening: usize,
    },
    ParameterMismatch {
        capability: String,
        property: String,
        happening: usize,
    },
    GoalFailed {
        property: String,
    },
    GoalConstraint {
        capability: String,
        index: usize,
    },
    Evaluation {
        message: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Structure { message } => write!(f, "malformed plan: {message}"),
            Violation::UnknownCapability { capability, happening } => {
                write!(f, "happening {happening}: unknown provided capability `{capability}`")
            }
            Violation::MissingValue {
                class,
                happening,
                layer,
            } => {
                write!(f, "happening {happening}: no value for `{class}` in layer {layer}")
            }
            Violation::WrongDatatype {
                class,
                happening,
                layer,
            } => {
                write!(
                    f,
                    "happening {happening}: value of `{class}` in layer {layer} has the wrong type"
                )
            }
            Violation::InitialState { property } => write!(f, "initial state violates `{property}`"),
            Violation::InitialConstraint { capability, index } => {
                write!(f, "initial state violates constraint {index} of `{capability}`")
            }
            Violation::PreconditionFailed { capability, happening } => {
                write!(f, "happening {happening}: precondition of `{capability}` fails")
            }
            Violation::EffectFailed { capability, happening } => {
                write!(f, "happening {happening}: effect of `{capability}` not reflected")
            }
            Violation::ConstraintFailed {
                capability,
                index,
                happening,
            } => write!(f, "happening {happening}: constraint {index} of `{capability}` fails"),
            Violation::Mutex {
                first,
                second,
                happening,
            } => write!(
                f,
                "happening {happening}: `{first}` and `{second}` are mutually exclusive"
            ),
            Violation::FrameViolation { class, happening } => {
                write!(
                    f,
                    "happening {happening}: `{class}` changes without an affecting capability"
                )
            }
            Violation::ContinuationViolation { class, happening } => {
                write!(
                    f,
                    "happening {happening}: `{class}` does not carry over from the previous happening"
                )
            }
            Violation::ParameterMismatch {
                capability,
                property,
                happening,
            } => write!(
                f,
                "happening {happening}: reported parameter `{property}` of `{capability}` differs from the state"
            ),
            Violation::GoalFailed { property } => write!(f, "goal on `{property}` not met"),
            Violation::GoalConstraint { capability, index } => {
                write!(f, "goal constraint {index} of `{capability}` not met")
            }
            Violation::Evaluation { message } => write!(f, "evaluation error: {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Which layer a property is read from when evaluating an expression.
#[derive(Clone, Copy)]
enum Layer {
    Before,
    After,
}

struct Semantics<'a> {
    model: &'a CapabilityModel,
    index: &'a SynonymyIndex,
    classes: Vec<(String, Datatype)>,
    effects: BTreeMap<String, EffectSets>,
    class_effects: ClassEffects,
    io_classes: BTreeMap<String, BTreeSet<String>>,
}

impl<'a> Semantics<'a> {
    fn new(model: &'a CapabilityModel, index: &'a SynonymyIndex) -> Self {
        Semantics {
            model,
            index,
            classes: index
                .property_classes
                .iter()
                .map(|c| (c.class_id.clone(), c.datatype))
                .collect(),
            effects: model
                .provided()
                .map(|c| (c.id.clone(), effect_sets(c, index, model)))
                .collect(),
            class_effects: ClassEffects::new(model, index),
            io_classes: model
                .provided()
                .map(|c| {
                    let classes = index.classes_of(c.io_ids()).into_iter().map(String::from).collect();
                    (c.id.clone(), classes)
                })
                .collect(),
        }
    }

    fn holds(
        &self,
        expr: &Expr,
        place: &dyn Fn(&str) -> Layer,
        before: &WorldState,
        after: &WorldState,
    ) -> Result<bool, String> {
        let lookup = |p: &str| {
            let state = match place(p) {
                Layer::Before => before,
                Layer::After => after,
            };
            state.get(self.index.class_id(p)).cloned()
        };
        match expr.evaluate_with(&lookup) {
            Ok(Value::Bool(b)) => Ok(b),
            Ok(v) => Err(format!("`{expr}` evaluates to {v}, not a boolean")),
            Err(e) => Err(format!("`{expr}`: {e}")),
        }
    }

    fn mutex(&self, a: &str, b: &str) -> bool {
        self.io_classes[a].intersection(&self.io_classes[b]).next().is_some()
    }

    fn check_initial(&self, s0: &WorldState, out: &mut Vec<Violation>) {
        let req = self.model.required();
        let req_inputs = req.map(|r| r.input_ids()).unwrap_or_default();
        let before = |_: &str| Layer::Before;
        for p in self.model.properties() {
            let mut goals = vec![ExpressionGoal::ActualValue];
            if req_inputs.contains(p.id.as_str()) {
                goals.push(ExpressionGoal::Requirement);
            }
            let ok = goals
                .iter()
                .flat_map(|g| p.descriptions(*g))
                .filter_map(|d| d.to_expr(&p.id))
                .all(|e| self.holds(&e, &before, s0, s0) == Ok(true));
            if !ok {
                out.push(Violation::InitialState { property: p.id.clone() });
            }
        }
        if let Some(req) = req {
            for (i, e) in req.constraints.iter().enumerate() {
                if req.constraint_role(e) != ConstraintRole::Effect && self.holds(e, &before, s0, s0) != Ok(true) {
                    out.push(Violation::InitialConstraint {
                        capability: req.id.clone(),
                        index: i,
                    });
                }
            }
        }
    }

    fn check_goal(&self, s0: &WorldState, last: &WorldState, out: &mut Vec<Violation>) {
        let Some(req) = self.model.required() else { return };
        let outputs = req.output_ids();
        let after = |_: &str| Layer::After;
        for o in &outputs {
            let Some(p) = self.model.property(o) else { continue };
            let ok = p
                .descriptions(ExpressionGoal::Requirement)
                .filter_map(|d| d.to_expr(o))
                .all(|e| self.holds(&e, &after, last, last) == Ok(true));
            if !ok {
                out.push(Violation::GoalFailed {
                    property: o.to_string(),
                });
            }
        }
        let place = |p: &str| {
            if outputs.contains(p) {
                Layer::After
            } else {
                Layer::Before
            }
        };
        for (i, e) in req.constraints.iter().enumerate() {
            if req.constraint_role(e) == ConstraintRole::Effect && self.holds(e, &place, s0, last) != Ok(true) {
                out.push(Violation::GoalConstraint {
                    capability: req.id.clone(),
                    index: i,
                });
            }
        }
    }

    /// Checks one happening: mutexes, capability semantics and frame.
    fn check_happening(
        &self,
        t: usize,
        applied: &[&Capability],
        before: &WorldState,
        after: &WorldState,
        out: &mut Vec<Violation>,
    ) {
        for (i, a) in applied.iter().enumerate() {
            for b in &applied[i + 1..] {
                if self.mutex(&a.id, &b.id) {
                    out.push(Violation::Mutex {
                        first: a.id.clone(),
                        second: b.id.clone(),
                        happening: t,
                    });
                }
            }
        }
        for c in applied {
            self.check_capability(t, c, before, after, out);
        }
        for (class, sort) in &self.classes {
            let (Some(v0), Some(v1)) = (before.get(class), after.get(class)) else {
                continue;
            };
            if v0 == v1 {
                continue;
            }
            let affecting: Option<&BTreeSet<String>> = match (sort, v1) {
                (Datatype::Real, _) => self.class_effects.numeric.get(class),
                (Datatype::Boolean, Value::Bool(true)) => self.class_effects.positive.get(class),
                (Datatype::Boolean, _) => self.class_effects.negative.get(class),
            };
            let justified = affecting.is_some_and(|set| applied.iter().any(|c| set.contains(&c.id)));
            if !justified {
                out.push(Violation::FrameViolation {
                    class: class.clone(),
                    happening: t,
                });
            }
        }
    }

    fn check_capability(
        &self,
        t: usize,
        c: &Capability,
        before: &WorldState,
        after: &WorldState,
        out: &mut Vec<Violation>,
    ) {
        let outputs = c.output_ids();
        let at_before = |_: &str| Layer::Before;
        let mixed = |p: &str| {
            if outputs.contains(p) {
                Layer::After
            } else {
                Layer::Before
            }
        };
        let mut report = |result: Result<bool, String>, violation: Violation| match result {
            Ok(true) => {}
            Ok(false) => out.push(violation),
            Err(message) => out.push(Violation::Evaluation { message }),
        };
        let pre_failed = || Violation::PreconditionFailed {
            capability: c.id.clone(),
            happening: t,
        };
        let eff_failed = || Violation::EffectFailed {
            capability: c.id.clone(),
            happening: t,
        };

        for (_, e) in self.model.requirements(c) {
            report(self.holds(&e, &at_before, before, after), pre_failed());
        }
        let effects = &self.effects[&c.id];
        for (o, e) in self.model.assurances(c) {
            let result = match effects.unchanged.get(&o) {
                Some(input) => {
                    let v1 = after.get(self.index.class_id(&o));
                    let v0 = before.get(self.index.class_id(input));
                    Ok(v1.is_some() && v1 == v0)
                }
                None => self.holds(&e, &mixed, before, after),
            };
            report(result, eff_failed());
        }
        for (i, e) in c.constraints.iter().enumerate() {
            match c.constraint_role(e) {
                ConstraintRole::Precondition => report(self.holds(e, &at_before, before, after), pre_failed()),
                ConstraintRole::Effect => report(self.holds(e, &mixed, before, after), eff_failed()),
                ConstraintRole::Auxiliary => report(
                    self.holds(e, &at_before, before, after),
                    Violation::ConstraintFailed {
                        capability: c.id.clone(),
                        index: i,
                        happening: t,
                    },
                ),
            }
        }
    }

    fn check_state(&self, state: &WorldState, t: usize, layer: u8, out: &mut Vec<Violation>) -> bool {
        let mut ok = true;
        for (class, sort) in &self.classes {
            match state.get(class) {
                None => {
                    ok = false;
                    out.push(Violation::MissingValue {
                        class: class.clone(),
                        happening: t,
                        layer,
                    });
                }
                Some(v) if v.datatype() != *sort => {
                    ok = false;
                    out.push(Violation::WrongDatatype {
                        class: class.clone(),
                        happening: t,
                        layer,
                    });
                }
                Some(_) => {}
            }
        }
        ok
    }
}

fn state_of(layer: &BTreeMap<String, Value>) -> WorldState {
    WorldState {
        valuation: layer.clone(),
    }
}

/// Replays `plan` and reports every violated condition.
pub fn simulate(model: &CapabilityModel, index: &SynonymyIndex, plan: &Plan) -> Verdict {
    let sem = Semantics::new(model, index);
    let mut out = Vec::new();
    if plan.happenings.is_empty() {
        out.push(Violation::Structure {
            message: "a plan has at least one happening".into(),
        });
        return Verdict { violations: out };
    }
    if plan.bound_happenings != plan.happenings.len() {
        out.push(Violation::Structure {
            message: format!(
                "boundHappenings is {} but {} happenings are listed",
                plan.bound_happenings,
                plan.happenings.len()
            ),
        });
    }
    let provided: BTreeMap<&str, &Capability> = model.provided().map(|c| (c.id.as_str(), c)).collect();

    let mut states_ok = true;
    for (t, h) in plan.happenings.iter().enumerate() {
        states_ok &= sem.check_state(&state_of(&h.layer0), t, 0, &mut out);
        states_ok &= sem.check_state(&state_of(&h.layer1), t, 1, &mut out);
    }
    if !states_ok {
        return Verdict { violations: out };
    }

    let first = state_of(&plan.happenings[0].layer0);
    sem.check_initial(&first, &mut out);
    for (t, h) in plan.happenings.iter().enumerate() {
        let before = state_of(&h.layer0);
        let after = state_of(&h.layer1);
        if t > 0 {
            let prev = &plan.happenings[t - 1].layer1;
            for (class, _) in &sem.classes {
                if prev.get(class) != h.layer0.get(class) {
                    out.push(Violation::ContinuationViolation {
                        class: class.clone(),
                        happening: t,
                    });
                }
            }
        }
        let mut applied = Vec::new();
        for id in &h.applied {
            match provided.get(id.as_str()) {
                Some(c) => applied.push(*c),
                None => out.push(Violation::UnknownCapability {
                    capability: id.clone(),
                    happening: t,
                }),
            }
        }
        sem.check_happening(t, &applied, &before, &after, &mut out);
        for c in &applied {
            let Some(params) = plan.parameters.get(&format!("{}#t{t}", c.id)) else {
                continue;
            };
            for (prop, v) in params {
                if before.get(index.class_id(prop)) != Some(v) {
                    out.push(Violation::ParameterMismatch {
                        capability: c.id.clone(),
                        property: prop.clone(),
                        happening: t,
                    });
                }
            }
        }
    }
    let last = state_of(&plan.happenings.last().unwrap().layer1);
    sem.check_goal(&first, &last, &mut out);
    Verdict { violations: out }
}

/// Real constants in the model, sorted and deduplicated.
pub fn default_domain(model: &CapabilityModel) -> Vec<Value> {
    let set: BTreeSet<Value> = model
        .constants()
        .into_iter()
        .filter(|v| v.datatype() == Datatype::Real)
        .collect();
    set.into_iter().collect()
}

/// `domain` plus midpoints between neighbours and one value beyond each end.
pub fn widened_domain(domain: &[Value]) -> Vec<Value> {
    let reals: Vec<&Rational> = domain.iter().filter_map(Value::as_real).collect();
    let mut out: BTreeSet<Value> = domain.iter().cloned().collect();
    let two = Rational::from_integer(2.into());
    for w in reals.windows(2) {
        out.insert(Value::Real((w[0] + w[1]) / &two));
    }
    let one = Rational::from_integer(1.into());
    if let (Some(lo), Some(hi)) = (reals.iter().min(), reals.iter().max()) {
        out.insert(Value::Real(*lo - &one));
        out.insert(Value::Real(*hi + &one));
    }
    out.into_iter().collect()
}

pub const DEFAULT_BUDGET: usize = 200_000;

/// Shortest plan with at most `max_bound + 1` happenings whose free values
/// come from `domain`, or `None`.
pub fn brute_force_plan(
    model: &CapabilityModel,
    index: &SynonymyIndex,
    max_bound: usize,
    domain: &[Value],
) -> Result<Option<Plan>, OracleError> {
    brute_force_plan_with_budget(model, index, max_bound, domain, DEFAULT_BUDGET)
}

pub fn brute_force_plan_with_budget(
    model: &CapabilityModel,
    index: &SynonymyIndex,
    max_bound: usize,
    domain: &[Value],
    budget: usize,
) -> Result<Option<Plan>, OracleError> {
    Search::new(model, index, domain, budget).run(max_bound)
}

struct Search<'a> {
    sem: Semantics<'a>,
    provided: Vec<&'a Capability>,
    domain: Vec<Value>,
    budget: usize,
    spent: usize,
}

/// Successor step recorded for path reconstruction.
#[derive(Clone)]
struct Step {
    parent: usize,
    applied: Vec<String>,
}

impl<'a> Search<'a> {
    fn new(model: &'a CapabilityModel, index: &'a SynonymyIndex, domain: &[Value], budget: usize) -> Self {
        Search {
            sem: Semantics::new(model, index),
            provided: model.provided().collect(),
            domain: domain
                .iter()
                .filter(|v| v.datatype() == Datatype::Real)
                .cloned()
                .collect(),
            budget,
            spent: 0,
        }
    }

    fn charge(&mut self, n: usize) -> Result<(), OracleError> {
        self.spent += n;
        if self.spent > self.budget {
            Err(OracleError::DomainTooLarge(self.budget))
        } else {
            Ok(())
        }
    }

    /// Values a class may take in the initial state.
    fn initial_candidates(&self) -> Vec<Vec<Value>> {
        let model = self.sem.model;
        let req_inputs = model.required().map(|r| r.input_ids()).unwrap_or_default();
        self.sem
            .classes
            .iter()
            .map(|(class, sort)| {
                let members = &self.sem.index.class(class).expect("class").members;
                let mut forced = BTreeSet::new();
                for m in members {
                    let p = model.property(m).expect("member");
                    let mut descs: Vec<_> = p.descriptions(ExpressionGoal::ActualValue).collect();
                    if req_inputs.contains(m.as_str()) {
                        descs.extend(p.descriptions(ExpressionGoal::Requirement));
                    }
                    for d in descs {
                        if let (crate::model::Relation::Eq, Some(v)) = (d.relation, &d.value) {
                            forced.insert(v.clone());
                        }
                    }
                }
                if let Some(v) = forced.iter().next() {
                    // conflicting forced values are rejected by the initial check
                    return vec![v.clone()];
                }
                match sort {
                    Datatype::Boolean => vec![Value::Bool(false), Value::Bool(true)],
                    Datatype::Real => self.domain.clone(),
                }
            })
            .collect()
    }

    fn initial_states(&mut self) -> Result<Vec<WorldState>, OracleError> {
        let candidates = self.initial_candidates();
        if candidates.iter().any(Vec::is_empty) {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        let mut odometer = vec![0usize; candidates.len()];
        loop {
            self.charge(1)?;
            let state = WorldState {
                valuation: self
                    .sem
                    .classes
                    .iter()
                    .zip(&odometer)
                    .zip(&candidates)
                    .map(|(((class, _), &i), values)| (class.clone(), values[i].clone()))
                    .collect(),
            };
            let mut violations = Vec::new();
            self.sem.check_initial(&state, &mut violations);
            if violations.is_empty() {
                out.push(state);
            }
            // advance
            let mut pos = 0;
            loop {
                if pos == odometer.len() {
                    return Ok(out);
                }
                odometer[pos] += 1;
                if odometer[pos] < candidates[pos].len() {
                    break;
                }
                odometer[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Pairwise non-mutex subsets of provided capabilities, smallest first.
    fn applicable_sets(&self) -> Vec<Vec<&'a Capability>> {
        let n = self.provided.len();
        let mut sets: Vec<Vec<&Capability>> = (0u32..(1 << n))
            .map(|mask| {
                (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| self.provided[i])
                    .collect::<Vec<_>>()
            })
            .filter(|set| {
                set.iter()
                    .enumerate()
                    .all(|(i, a)| set[i + 1..].iter().all(|b| !self.sem.mutex(&a.id, &b.id)))
            })
            .collect();
        sets.sort_by_key(Vec::len);
        sets
    }

    /// Values an affected real class may take after applying `set` in `before`.
    fn effect_candidates(&self, class: &str, set: &[&Capability], before: &WorldState) -> BTreeSet<Value> {
        let mut out: BTreeSet<Value> = self.domain.iter().cloned().collect();
        if let Some(v) = before.get(class) {
            out.insert(v.clone());
        }
        let index = self.sem.index;
        for c in set {
            let outputs = c.output_ids();
            let mut equalities: Vec<Expr> = self.sem.model.assurances(c).into_iter().map(|(_, e)| e).collect();
            equalities.extend(
                c.constraints
                    .iter()
                    .filter(|e| c.constraint_role(e) == ConstraintRole::Effect)
                    .cloned(),
            );
            for e in equalities {
                let Expr::Apply(Op::Eq, args) = &e else { continue };
                for (lhs, rhs) in [(&args[0], &args[1]), (&args[1], &args[0])] {
                    let Expr::Ref(target) = lhs else { continue };
                    if !outputs.contains(target.as_str()) || index.class_id(target) != class {
                        continue;
                    }
                    if rhs.references().iter().any(|r| outputs.contains(r.as_str())) {
                        continue;
                    }
                    let lookup = |p: &str| before.get(index.class_id(p)).cloned();
                    if let Ok(v @ Value::Real(_)) = rhs.evaluate_with(&lookup) {
                        out.insert(v);
                    }
                }
            }
        }
        out
    }

    fn successors(&mut self, before: &WorldState, set: &[&Capability]) -> Result<Vec<WorldState>, OracleError> {
        let ids: BTreeSet<&str> = set.iter().map(|c| c.id.as_str()).collect();
        let touched = |by_class: &BTreeMap<String, BTreeSet<String>>, class: &str| {
            by_class
                .get(class)
                .is_some_and(|caps| caps.iter().any(|c| ids.contains(c.as_str())))
        };
        let mut choices: Vec<(String, Vec<Value>)> = Vec::new();
        for (class, sort) in &self.sem.classes {
            let current = before.get(class).cloned().expect("complete state");
            let values = match sort {
                Datatype::Real if touched(&self.sem.class_effects.numeric, class) => {
                    self.effect_candidates(class, set, before).into_iter().collect()
                }
                Datatype::Boolean => {
                    let mut vs = vec![current.clone()];
                    if touched(&self.sem.class_effects.positive, class) && current != Value::Bool(true) {
                        vs.push(Value::Bool(true));
                    }
                    if touched(&self.sem.class_effects.negative, class) && current != Value::Bool(false) {
                        vs.push(Value::Bool(false));
                    }
                    vs
                }
                Datatype::Real => vec![current],
            };
            choices.push((class.clone(), values));
        }
        let mut out = Vec::new();
        let mut odometer = vec![0usize; choices.len()];
        loop {
            self.charge(1)?;
            let after = WorldState {
                valuation: choices
                    .iter()
                    .zip(&odometer)
                    .map(|((class, values), &i)| (class.clone(), values[i].clone()))
                    .collect(),
            };
            let mut violations = Vec::new();
            self.sem.check_happening(0, set, before, &after, &mut violations);
            if violations.is_empty() {
                out.push(after);
            }
            let mut pos = 0;
            loop {
                if pos == odometer.len() {
                    return Ok(out);
                }
                odometer[pos] += 1;
                if odometer[pos] < choices[pos].1.len() {
                    break;
                }
                odometer[pos] = 0;
                pos += 1;
            }
        }
    }

    fn run(mut self, max_bound: usize) -> Result<Option<Plan>, OracleError> {
        // node 0.. are initial states (layer 0 of happening 0); each later
        // node is the layer-1 state of some happening
        let mut nodes: Vec<WorldState> = Vec::new();
        let mut steps: Vec<Option<Step>> = Vec::new();
        // goal constraints may read the initial state; then equal states
        // reached from different initial states are not interchangeable
        let root_sensitive = self.sem.model.required().is_some_and(|r| {
            r.constraints
                .iter()
                .any(|e| r.constraint_role(e) == ConstraintRole::Effect)
        });
        let mut seen: HashMap<(Option<usize>, WorldState), usize> = HashMap::new();
        let mut frontier = VecDeque::new();
        for s in self.initial_states()? {
            let key = (root_sensitive.then_some(nodes.len()), s.clone());
            if seen.contains_key(&key) {
                continue;
            }
            seen.insert(key, nodes.len());
            frontier.push_back(nodes.len());
            nodes.push(s);
            steps.push(None);
        }
        let sets = self.applicable_sets();

        for depth in 0..=max_bound {
            let mut next = VecDeque::new();
            while let Some(node) = frontier.pop_front() {
                let before = nodes[node].clone();
                for set in &sets {
                    for after in self.successors(&before, set)? {
                        let applied: Vec<String> = set.iter().map(|c| c.id.clone()).collect();
                        let mut goal = Vec::new();
                        let root = self.root(&steps, node);
                        self.sem.check_goal(&nodes[root], &after, &mut goal);
                        if goal.is_empty() {
                            nodes.push(after);
                            steps.push(Some(Step { parent: node, applied }));
                            return Ok(Some(self.reconstruct(&nodes, &steps, nodes.len() - 1)));
                        }
                        let key = (root_sensitive.then_some(root), after.clone());
                        if depth < max_bound && !seen.contains_key(&key) {
                            seen.insert(key, nodes.len());
                            next.push_back(nodes.len());
                            nodes.push(after);
                            steps.push(Some(Step { parent: node, applied }));
                        }
                    }
                }
            }
            frontier = next;
        }
        Ok(None)
    }

    fn root(&self, steps: &[Option<Step>], mut node: usize) -> usize {
        while let Some(step) = &steps[node] {
            node = step.parent;
        }
        node
    }

    fn reconstruct(&self, nodes: &[WorldState], steps: &[Option<Step>], last: usize) -> Plan {
        let mut chain = vec![last];
        let mut node = last;
        while let Some(step) = &steps[node] {
            node = step.parent;
            chain.push(node);
        }
        chain.reverse();
        let mut plan = Plan {
            bound_happenings: chain.len() - 1,
            classes: self
                .sem
                .index
                .property_classes
                .iter()
                .map(|c| (c.class_id.clone(), c.members.iter().cloned().collect()))
                .collect(),
            ..Plan::default()
        };
        for (t, pair) in chain.windows(2).enumerate() {
            let before = &nodes[pair[0]];
            let applied = steps[pair[1]].as_ref().expect("step").applied.clone();
            for id in &applied {
                let cap = self.sem.model.capability(id).expect("capability");
                let params: BTreeMap<String, Value> = self
                    .sem
                    .model
                    .unbound_parameters(cap)
                    .into_iter()
                    .map(|p| {
                        let v = before
                            .get(self.sem.index.class_id(&p))
                            .cloned()
                            .expect("complete state");
                        (p, v)
                    })
                    .collect();
                if !params.is_empty() {
                    plan.parameters.insert(format!("{id}#t{t}"), params);
                }
            }
            plan.happenings.push(Happening {
                applied,
                layer0: before.valuation.clone(),
                layer1: nodes[pair[1]].valuation.clone(),
            });
        }
        plan
    }
}
