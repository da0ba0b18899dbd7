//! Bounded-happenings encoding of a capability model.
//!
//! Every happening `t` has two layers of property variables (before and
//! after capability application) and one boolean per provided capability.
//! By default one variable is declared per synonymy class, which makes the
//! synonym propagation and boundary alignment equalities hold structurally.
//! [`SynonymMode::Expanded`] declares one variable per property instead and
//! emits those equalities explicitly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::expr::{apply_op, Datatype, Expr, ExprError, Op, Value};
use crate::model::{CapabilityModel, ConstraintRole, Property};
use crate::synonymy::{effect_sets, ClassEffects, EffectSets, SynonymyIndex};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("expression references unknown property `{0}`")]
    UnknownProperty(String),
    #[error("unsupported expression `{expr}`: {reason}")]
    UnsupportedExpression { expr: String, reason: String },
    #[error("assertion name `{0}` emitted twice")]
    DuplicateName(String),
    #[error("model has no required capability")]
    NoRequiredCapability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SynonymMode {
    /// One variable per synonymy class.
    #[default]
    Collapsed,
    /// One variable per property plus explicit synonym equalities.
    Expanded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Logic {
    LinearReal,
    NonlinearReal,
}

impl Logic {
    pub fn smtlib_name(self) -> &'static str {
        match self {
            Logic::LinearReal => "QF_LRA",
            Logic::NonlinearReal => "QF_NRA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKey {
    /// A class (or, in expanded mode, a property) at happening/layer.
    Prop {
        subject: String,
        happening: usize,
        layer: u8,
    },
    /// Whether a provided capability is applied in a happening.
    Cap { capability: String, happening: usize },
}

impl VarKey {
    pub fn prop(subject: impl Into<String>, happening: usize, layer: u8) -> Self {
        VarKey::Prop {
            subject: subject.into(),
            happening,
            layer,
        }
    }

    pub fn cap(capability: impl Into<String>, happening: usize) -> Self {
        VarKey::Cap {
            capability: capability.into(),
            happening,
        }
    }

    /// Symbol text without the surrounding `|` quotes.
    pub fn symbol_name(&self) -> String {
        match self {
            VarKey::Prop {
                subject,
                happening,
                layer,
            } => format!("{subject}#t{happening}#l{layer}"),
            VarKey::Cap { capability, happening } => format!("{capability}#t{happening}"),
        }
    }

    pub fn happening(&self) -> usize {
        match self {
            VarKey::Prop { happening, .. } | VarKey::Cap { happening, .. } => *happening,
        }
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKey::Prop {
                subject,
                happening,
                layer,
            } => write!(f, "{subject}@t{happening}.{layer}"),
            VarKey::Cap { capability, happening } => write!(f, "{capability}@t{happening}"),
        }
    }
}

/// Solver-level term over [`VarKey`]s.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Const(Value),
    Var(VarKey),
    App(Op, Vec<Term>),
    Implies(Box<Term>, Box<Term>),
}

impl Term {
    pub fn tt() -> Term {
        Term::Const(Value::Bool(true))
    }

    pub fn and(mut items: Vec<Term>) -> Term {
        match items.len() {
            0 => Term::tt(),
            1 => items.pop().unwrap(),
            _ => Term::App(Op::And, items),
        }
    }

    pub fn or(mut items: Vec<Term>) -> Term {
        match items.len() {
            0 => Term::Const(Value::Bool(false)),
            1 => items.pop().unwrap(),
            _ => Term::App(Op::Or, items),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(t: Term) -> Term {
        Term::App(Op::Not, vec![t])
    }

    pub fn eq(a: Term, b: Term) -> Term {
        Term::App(Op::Eq, vec![a, b])
    }

    pub fn implies(a: Term, b: Term) -> Term {
        Term::Implies(Box::new(a), Box::new(b))
    }

    pub fn var(key: VarKey) -> Term {
        Term::Var(key)
    }

    pub fn vars(&self) -> BTreeSet<&VarKey> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut BTreeSet<&'a VarKey>) {
        match self {
            Term::Const(_) => {}
            Term::Var(k) => {
                out.insert(k);
            }
            Term::App(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            Term::Implies(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn eval(&self, valuation: &BTreeMap<VarKey, Value>) -> Result<Value, ExprError> {
        match self {
            Term::Const(v) => Ok(v.clone()),
            Term::Var(k) => valuation
                .get(k)
                .cloned()
                .ok_or_else(|| ExprError::MissingValue(k.symbol_name())),
            Term::App(op, args) => {
                let vals = args.iter().map(|a| a.eval(valuation)).collect::<Result<Vec<_>, _>>()?;
                apply_op(*op, &vals)
            }
            Term::Implies(a, b) => match a.eval(valuation)? {
                Value::Bool(false) => Ok(Value::Bool(true)),
                Value::Bool(true) => b.eval(valuation),
                v => Err(ExprError::Type(format!("implication on {v}"))),
            },
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(v) => write!(f, "{v}"),
            Term::Var(k) => write!(f, "{k}"),
            Term::App(Op::Not, args) => write!(f, "not({})", args[0]),
            Term::App(op, args) => {
                f.write_str("(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, " {} ", op.symbol())?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Term::Implies(a, b) => write!(f, "({a} => {b})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FramePolarity {
    Positive,
    Negative,
    Real,
}

impl FramePolarity {
    fn suffix(self) -> &'static str {
        match self {
            FramePolarity::Positive => "pos",
            FramePolarity::Negative => "neg",
            FramePolarity::Real => "real",
        }
    }
}

/// The model element an assertion was generated from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Origin {
    Initial {
        property: String,
    },
    InitialConstraint {
        capability: String,
        index: usize,
    },
    Goal {
        property: String,
    },
    GoalConstraint {
        capability: String,
        index: usize,
    },
    Precondition {
        capability: String,
        happening: usize,
    },
    Effect {
        capability: String,
        happening: usize,
    },
    Constraint {
        capability: String,
        index: usize,
        happening: usize,
    },
    Frame {
        subject: String,
        happening: usize,
        polarity: FramePolarity,
    },
    Mutex {
        first: String,
        second: String,
        happening: usize,
    },
    Continuation {
        subject: String,
        happening: usize,
    },
    Propagation {
        capability: String,
        happening: usize,
    },
    Alignment {
        first: String,
        second: String,
        goal: bool,
    },
    /// No capability applied in any happening.
    Idle,
    /// A variable pinned to a given value.
    Fixed {
        variable: String,
    },
}

impl Origin {
    pub fn family(&self) -> &'static str {
        match self {
            Origin::Initial { .. } | Origin::InitialConstraint { .. } => "init",
            Origin::Goal { .. } | Origin::GoalConstraint { .. } => "goal",
            Origin::Precondition { .. } => "pre",
            Origin::Effect { .. } => "eff",
            Origin::Constraint { .. } => "constraint",
            Origin::Frame { .. } => "frame",
            Origin::Mutex { .. } => "mutex",
            Origin::Continuation { .. } => "cont",
            Origin::Propagation { .. } => "syn",
            Origin::Alignment { .. } => "align",
            Origin::Idle => "idle",
            Origin::Fixed { .. } => "fixed",
        }
    }

    /// Initial-state, goal-state and alignment assertions.
    pub fn is_boundary(&self) -> bool {
        matches!(self.family(), "init" | "goal" | "align")
    }

    /// Id of the originating model element.
    pub fn element(&self) -> String {
        match self {
            Origin::Initial { property } | Origin::Goal { property } => property.clone(),
            Origin::InitialConstraint { capability, index } | Origin::GoalConstraint { capability, index } => {
                format!("{capability}.constraint[{index}]")
            }
            Origin::Constraint { capability, index, .. } => format!("{capability}.constraint[{index}]"),
            Origin::Precondition { capability, .. }
            | Origin::Effect { capability, .. }
            | Origin::Propagation { capability, .. } => capability.clone(),
            Origin::Frame { subject, .. } | Origin::Continuation { subject, .. } => subject.clone(),
            Origin::Mutex { first, second, .. } | Origin::Alignment { first, second, .. } => {
                format!("{first}/{second}")
            }
            Origin::Idle => "plan".into(),
            Origin::Fixed { variable } => variable.clone(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Origin::Initial { property } => format!("initial state of `{property}`"),
            Origin::InitialConstraint { capability, index } => {
                format!("initial condition {index} of required capability `{capability}`")
            }
            Origin::Goal { property } => format!("goal on `{property}`"),
            Origin::GoalConstraint { capability, index } => {
                format!("goal condition {index} of required capability `{capability}`")
            }
            Origin::Precondition { capability, happening } => {
                format!("preconditions of `{capability}` in happening {happening}")
            }
            Origin::Effect { capability, happening } => format!("effects of `{capability}` in happening {happening}"),
            Origin::Constraint {
                capability,
                index,
                happening,
            } => format!("constraint {index} of `{capability}` in happening {happening}"),
            Origin::Frame {
                subject,
                happening,
                polarity,
            } => format!(
                "`{subject}` may not change ({}) in happening {happening} unless an affecting capability is applied",
                polarity.suffix()
            ),
            Origin::Mutex {
                first,
                second,
                happening,
            } => format!("`{first}` and `{second}` exclude each other in happening {happening}"),
            Origin::Continuation { subject, happening } => {
                format!("`{subject}` carries over into happening {happening}")
            }
            Origin::Propagation { capability, happening } => {
                format!("effects of `{capability}` propagate to synonyms in happening {happening}")
            }
            Origin::Alignment { first, second, goal } => format!(
                "`{first}` and `{second}` are synonyms at the {}",
                if *goal { "goal" } else { "initial state" }
            ),
            Origin::Idle => "no capability is applied".into(),
            Origin::Fixed { variable } => format!("`{variable}` is fixed"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assertion {
    pub name: String,
    pub term: Term,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    /// Index of the last happening; the encoding spans `bound + 1` happenings.
    pub bound: usize,
    pub mode: SynonymMode,
    pub logic: Logic,
    /// Declaration order.
    pub variables: Vec<(VarKey, Datatype)>,
    pub assertions: Vec<Assertion>,
    /// Provided capability ids in model order.
    pub capabilities: Vec<String>,
    /// Class id → member property ids.
    pub classes: BTreeMap<String, Vec<String>>,
    /// Capability → (unbound parameter property, variable subject).
    pub parameters: BTreeMap<String, Vec<(String, String)>>,
}

impl Encoding {
    pub fn happenings(&self) -> usize {
        self.bound + 1
    }

    pub fn sorts(&self) -> BTreeMap<&VarKey, Datatype> {
        self.variables.iter().map(|(k, d)| (k, *d)).collect()
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    /// Same declarations, only the named assertions.
    pub fn restricted(&self, keep: &BTreeSet<String>) -> Encoding {
        Encoding {
            assertions: self
                .assertions
                .iter()
                .filter(|a| keep.contains(&a.name))
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    /// This encoding with every capability variable forced false.
    pub fn idle(&self) -> Encoding {
        let mut enc = self.clone();
        let off = self
            .variables
            .iter()
            .filter(|(k, _)| matches!(k, VarKey::Cap { .. }))
            .map(|(k, _)| Term::not(Term::Var(k.clone())))
            .collect();
        enc.push("idle".into(), Term::and(off), Origin::Idle);
        enc
    }

    /// This encoding with each listed variable pinned to its value.
    pub fn fixed(&self, valuation: &BTreeMap<VarKey, Value>) -> Encoding {
        let mut enc = self.clone();
        for (k, v) in valuation {
            let name = k.symbol_name();
            enc.push(
                format!("fixed.{name}"),
                Term::eq(Term::Var(k.clone()), Term::Const(v.clone())),
                Origin::Fixed { variable: name },
            );
        }
        enc
    }

    /// Variable holding the value of a class at (happening, layer).
    pub fn class_var(&self, class_id: &str, happening: usize, layer: u8) -> VarKey {
        VarKey::prop(class_id, happening, layer)
    }

    fn push(&mut self, name: String, term: Term, origin: Origin) {
        self.assertions.push(Assertion { name, term, origin });
    }
}

struct Encoder<'a> {
    model: &'a CapabilityModel,
    index: &'a SynonymyIndex,
    mode: SynonymMode,
    props: BTreeMap<&'a str, &'a Property>,
    datatypes: BTreeMap<String, Datatype>,
    effects: BTreeMap<String, EffectSets>,
}

impl<'a> Encoder<'a> {
    fn new(model: &'a CapabilityModel, index: &'a SynonymyIndex, mode: SynonymMode) -> Self {
        Encoder {
            model,
            index,
            mode,
            props: model.property_map(),
            datatypes: model.datatypes(),
            effects: model
                .provided()
                .map(|c| (c.id.clone(), effect_sets(c, index, model)))
                .collect(),
        }
    }

    /// Variable subjects in declaration order with their sort.
    fn subjects(&self) -> Vec<(String, Datatype)> {
        match self.mode {
            SynonymMode::Collapsed => self
                .index
                .property_classes
                .iter()
                .map(|c| (c.class_id.clone(), c.datatype))
                .collect(),
            SynonymMode::Expanded => self.datatypes.iter().map(|(p, d)| (p.clone(), *d)).collect(),
        }
    }

    fn subject<'b>(&'b self, property: &'b str) -> &'b str {
        match self.mode {
            SynonymMode::Collapsed => self.index.class_id(property),
            SynonymMode::Expanded => property,
        }
    }

    fn var(&self, property: &str, t: usize, layer: u8) -> Term {
        Term::Var(VarKey::prop(self.subject(property), t, layer))
    }

    fn cap(&self, capability: &str, t: usize) -> Term {
        Term::Var(VarKey::cap(capability, t))
    }

    fn translate(&self, expr: &Expr, place: &dyn Fn(&str) -> (usize, u8)) -> Result<Term, EncodeError> {
        Ok(match expr {
            Expr::Const(v) => Term::Const(v.clone()),
            Expr::Ref(id) => {
                if !self.datatypes.contains_key(id) {
                    return Err(EncodeError::UnknownProperty(id.clone()));
                }
                let (t, layer) = place(id);
                self.var(id, t, layer)
            }
            Expr::Apply(op, args) => Term::App(
                *op,
                args.iter()
                    .map(|a| self.translate(a, place))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    fn checked(&self, expr: &Expr) -> Result<(), EncodeError> {
        let sort =
            expr.infer_sort(&|id| self.datatypes.get(id).copied())
                .map_err(|e| EncodeError::UnsupportedExpression {
                    expr: expr.to_string(),
                    reason: e.to_string(),
                })?;
        if sort != Some(Datatype::Boolean) {
            return Err(EncodeError::UnsupportedExpression {
                expr: expr.to_string(),
                reason: "not a boolean condition".into(),
            });
        }
        Ok(())
    }

    fn variables(&self, n: usize) -> Vec<(VarKey, Datatype)> {
        let subjects = self.subjects();
        let mut out = Vec::new();
        for t in 0..=n {
            for (s, d) in &subjects {
                out.push((VarKey::prop(s.clone(), t, 0), *d));
                out.push((VarKey::prop(s.clone(), t, 1), *d));
            }
            for c in self.model.provided() {
                out.push((VarKey::cap(c.id.clone(), t), Datatype::Boolean));
            }
        }
        out
    }

    fn boundaries(&self, enc: &mut Encoding, n: usize) -> Result<(), EncodeError> {
        let req = self.model.required().ok_or(EncodeError::NoRequiredCapability)?;
        let req_inputs = req.input_ids();
        let req_outputs = req.output_ids();
        let at_start = |_: &str| (0, 0);

        for p in self.model.properties() {
            let mut facts: Vec<Expr> = p
                .descriptions(crate::model::ExpressionGoal::ActualValue)
                .filter_map(|d| d.to_expr(&p.id))
                .collect();
            if req_inputs.contains(p.id.as_str()) {
                facts.extend(
                    p.descriptions(crate::model::ExpressionGoal::Requirement)
                        .filter_map(|d| d.to_expr(&p.id)),
                );
            }
            if facts.is_empty() {
                continue;
            }
            let terms = facts
                .iter()
                .map(|e| self.translate(e, &at_start))
                .collect::<Result<Vec<_>, _>>()?;
            enc.push(
                format!("init.{}", p.id),
                Term::and(terms),
                Origin::Initial { property: p.id.clone() },
            );
        }
        for (i, expr) in req.constraints.iter().enumerate() {
            self.checked(expr)?;
            if req.constraint_role(expr) != ConstraintRole::Effect {
                enc.push(
                    format!("init.constraint.{}.{i}", req.id),
                    self.translate(expr, &at_start)?,
                    Origin::InitialConstraint {
                        capability: req.id.clone(),
                        index: i,
                    },
                );
            }
        }

        for o in &req_outputs {
            let Some(p) = self.props.get(o) else { continue };
            let terms = p
                .descriptions(crate::model::ExpressionGoal::Requirement)
                .filter_map(|d| d.to_expr(&p.id))
                .map(|e| self.translate(&e, &|_| (n, 1)))
                .collect::<Result<Vec<_>, _>>()?;
            if !terms.is_empty() {
                enc.push(
                    format!("goal.{o}"),
                    Term::and(terms),
                    Origin::Goal {
                        property: o.to_string(),
                    },
                );
            }
        }
        for (i, expr) in req.constraints.iter().enumerate() {
            if req.constraint_role(expr) == ConstraintRole::Effect {
                let place = |id: &str| if req_outputs.contains(id) { (n, 1) } else { (0, 0) };
                enc.push(
                    format!("goal.constraint.{}.{i}", req.id),
                    self.translate(expr, &place)?,
                    Origin::GoalConstraint {
                        capability: req.id.clone(),
                        index: i,
                    },
                );
            }
        }

        if self.mode == SynonymMode::Expanded {
            for class in &self.index.property_classes {
                let members: Vec<&String> = class.members.iter().collect();
                for pair in members.windows(2) {
                    enc.push(
                        format!("align.init.{}.{}", pair[0], pair[1]),
                        Term::eq(self.var(pair[0], 0, 0), self.var(pair[1], 0, 0)),
                        Origin::Alignment {
                            first: pair[0].clone(),
                            second: pair[1].clone(),
                            goal: false,
                        },
                    );
                }
            }
            for q in &req_outputs {
                for s in self.index.syn_props.get(*q).into_iter().flatten() {
                    enc.push(
                        format!("align.goal.{q}.{s}"),
                        Term::eq(self.var(q, n, 1), self.var(s, n, 1)),
                        Origin::Alignment {
                            first: q.to_string(),
                            second: s.clone(),
                            goal: true,
                        },
                    );
                }
            }
        }
        Ok(())
    }

    fn capability_semantics(&self, enc: &mut Encoding, t: usize) -> Result<(), EncodeError> {
        for c in self.model.provided() {
            let applied = self.cap(&c.id, t);
            let outputs = c.output_ids();
            let effects = &self.effects[&c.id];
            let before = |_: &str| (t, 0);
            let mixed = |id: &str| if outputs.contains(id) { (t, 1) } else { (t, 0) };

            let mut pre = Vec::new();
            for (_, e) in self.model.requirements(c) {
                pre.push(self.translate(&e, &before)?);
            }
            let mut eff = Vec::new();
            let mut restated = BTreeSet::new();
            for (o, e) in self.model.assurances(c) {
                match effects.unchanged.get(&o) {
                    Some(input) => {
                        if restated.insert(o.clone()) {
                            eff.push(Term::eq(self.var(&o, t, 1), self.var(input, t, 0)));
                        }
                    }
                    None => eff.push(self.translate(&e, &mixed)?),
                }
            }
            let mut auxiliary = Vec::new();
            for (i, expr) in c.constraints.iter().enumerate() {
                self.checked(expr)?;
                match c.constraint_role(expr) {
                    ConstraintRole::Precondition => pre.push(self.translate(expr, &before)?),
                    ConstraintRole::Effect => eff.push(self.translate(expr, &mixed)?),
                    ConstraintRole::Auxiliary => auxiliary.push((i, self.translate(expr, &before)?)),
                }
            }

            if !pre.is_empty() {
                enc.push(
                    format!("pre.{}.t{t}", c.id),
                    Term::implies(applied.clone(), Term::and(pre)),
                    Origin::Precondition {
                        capability: c.id.clone(),
                        happening: t,
                    },
                );
            }
            if !eff.is_empty() {
                enc.push(
                    format!("eff.{}.t{t}", c.id),
                    Term::implies(applied.clone(), Term::and(eff)),
                    Origin::Effect {
                        capability: c.id.clone(),
                        happening: t,
                    },
                );
            }
            for (i, term) in auxiliary {
                enc.push(
                    format!("constraint.{}.{i}.t{t}", c.id),
                    Term::implies(applied.clone(), term),
                    Origin::Constraint {
                        capability: c.id.clone(),
                        index: i,
                        happening: t,
                    },
                );
            }
            if self.mode == SynonymMode::Expanded {
                let equalities: Vec<Term> = effects
                    .all
                    .iter()
                    .flat_map(|q| {
                        self.index
                            .syn_props
                            .get(q)
                            .into_iter()
                            .flatten()
                            .map(move |s| Term::eq(self.var(q, t, 1), self.var(s, t, 1)))
                    })
                    .collect();
                if !equalities.is_empty() {
                    enc.push(
                        format!("syn.{}.t{t}", c.id),
                        Term::implies(applied, Term::and(equalities)),
                        Origin::Propagation {
                            capability: c.id.clone(),
                            happening: t,
                        },
                    );
                }
            }
        }
        Ok(())
    }

    /// Capabilities that may change `subject` in the given direction.
    fn affecting(&self, subject: &str, class_effects: &ClassEffects, kind: EffectKind) -> Vec<String> {
        match self.mode {
            SynonymMode::Collapsed => {
                let set = kind.of_classes(class_effects).get(subject).cloned().unwrap_or_default();
                self.model
                    .provided()
                    .filter(|c| set.contains(&c.id))
                    .map(|c| c.id.clone())
                    .collect()
            }
            SynonymMode::Expanded => {
                // direct effect on the property, or an effect on one of its synonyms
                let syns = self.index.syn_props.get(subject).cloned().unwrap_or_default();
                let syn_caps = self.index.syn_caps.get(subject).cloned().unwrap_or_default();
                self.model
                    .provided()
                    .filter(|c| {
                        let set = kind.of_sets(&self.effects[&c.id]);
                        let direct = set.contains(subject);
                        let synonymous = syns.iter().any(|s| set.contains(s));
                        let related = c.io_ids().contains(subject);
                        direct || (synonymous && (syn_caps.contains(&c.id) || related))
                    })
                    .map(|c| c.id.clone())
                    .collect()
            }
        }
    }

    fn frame_axioms(&self, enc: &mut Encoding, t: usize, class_effects: &ClassEffects) {
        for (s, sort) in self.subjects() {
            let now = Term::Var(VarKey::prop(s.clone(), t, 0));
            let next = Term::Var(VarKey::prop(s.clone(), t, 1));
            let caps = |kind| -> Vec<Term> {
                self.affecting(&s, class_effects, kind)
                    .iter()
                    .map(|c| self.cap(c, t))
                    .collect()
            };
            let origin = |polarity| Origin::Frame {
                subject: s.clone(),
                happening: t,
                polarity,
            };
            match sort {
                Datatype::Boolean => {
                    let mut pos = vec![now.clone()];
                    pos.extend(caps(EffectKind::Positive));
                    enc.push(
                        format!("frame.{s}.t{t}.pos"),
                        Term::implies(next.clone(), Term::or(pos)),
                        origin(FramePolarity::Positive),
                    );
                    let mut neg = vec![Term::not(now)];
                    neg.extend(caps(EffectKind::Negative));
                    enc.push(
                        format!("frame.{s}.t{t}.neg"),
                        Term::implies(Term::not(next), Term::or(neg)),
                        origin(FramePolarity::Negative),
                    );
                }
                Datatype::Real => {
                    let idle: Vec<Term> = caps(EffectKind::Numeric).into_iter().map(Term::not).collect();
                    let same = Term::eq(next, now);
                    let term = if idle.is_empty() {
                        same
                    } else {
                        Term::implies(Term::and(idle), same)
                    };
                    enc.push(format!("frame.{s}.t{t}.real"), term, origin(FramePolarity::Real));
                }
            }
        }
    }

    fn mutexes(&self, enc: &mut Encoding, t: usize) {
        let caps: Vec<_> = self
            .model
            .provided()
            .map(|c| (c, self.index.classes_of(c.io_ids())))
            .collect();
        for (i, (a, a_classes)) in caps.iter().enumerate() {
            for (b, b_classes) in &caps[i + 1..] {
                if a_classes.intersection(b_classes).next().is_some() {
                    enc.push(
                        format!("mutex.{}.{}.t{t}", a.id, b.id),
                        Term::or(vec![Term::not(self.cap(&a.id, t)), Term::not(self.cap(&b.id, t))]),
                        Origin::Mutex {
                            first: a.id.clone(),
                            second: b.id.clone(),
                            happening: t,
                        },
                    );
                }
            }
        }
    }

    fn continuation(&self, enc: &mut Encoding, n: usize) {
        let subjects = self.subjects();
        let v = |s: &str, t: usize, l: u8| Term::Var(VarKey::prop(s, t, l));
        for t in 1..=n {
            for (s, _) in subjects.iter().filter(|(_, d)| *d == Datatype::Boolean) {
                let origin = Origin::Continuation {
                    subject: s.clone(),
                    happening: t,
                };
                enc.push(
                    format!("cont.{s}.t{t}.pos"),
                    Term::implies(v(s, t, 0), v(s, t - 1, 1)),
                    origin.clone(),
                );
                enc.push(
                    format!("cont.{s}.t{t}.neg"),
                    Term::implies(Term::not(v(s, t, 0)), Term::not(v(s, t - 1, 1))),
                    origin,
                );
            }
        }
        for t in 1..=n {
            for (s, _) in subjects.iter().filter(|(_, d)| *d == Datatype::Real) {
                enc.push(
                    format!("cont.{s}.t{t}"),
                    Term::eq(v(s, t, 0), v(s, t - 1, 1)),
                    Origin::Continuation {
                        subject: s.clone(),
                        happening: t,
                    },
                );
            }
        }
    }

    fn empty(&self, n: usize) -> Encoding {
        let nonlinear = self
            .model
            .capabilities
            .iter()
            .flat_map(|c| c.constraints.iter())
            .any(|e| !e.is_linear());
        Encoding {
            bound: n,
            mode: self.mode,
            logic: if nonlinear {
                Logic::NonlinearReal
            } else {
                Logic::LinearReal
            },
            variables: self.variables(n),
            assertions: Vec::new(),
            capabilities: self.model.provided().map(|c| c.id.clone()).collect(),
            classes: self
                .index
                .property_classes
                .iter()
                .map(|c| (c.class_id.clone(), c.members.iter().cloned().collect()))
                .collect(),
            parameters: self
                .model
                .provided()
                .map(|c| {
                    let params = self
                        .model
                        .unbound_parameters(c)
                        .into_iter()
                        .map(|p| {
                            let s = self.subject(&p).to_string();
                            (p, s)
                        })
                        .collect();
                    (c.id.clone(), params)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum EffectKind {
    Positive,
    Negative,
    Numeric,
}

impl EffectKind {
    fn of_sets(self, e: &EffectSets) -> &BTreeSet<String> {
        match self {
            EffectKind::Positive => &e.positive,
            EffectKind::Negative => &e.negative,
            EffectKind::Numeric => &e.numeric,
        }
    }

    fn of_classes(self, e: &ClassEffects) -> &BTreeMap<String, BTreeSet<String>> {
        match self {
            EffectKind::Positive => &e.positive,
            EffectKind::Negative => &e.negative,
            EffectKind::Numeric => &e.numeric,
        }
    }
}

pub fn declare_variables(
    model: &CapabilityModel,
    index: &SynonymyIndex,
    n: usize,
    mode: SynonymMode,
) -> Vec<(VarKey, Datatype)> {
    Encoder::new(model, index, mode).variables(n)
}

/// An encoding with declarations only; the `assert_*` functions add to it.
pub fn declare(model: &CapabilityModel, index: &SynonymyIndex, n: usize, mode: SynonymMode) -> Encoding {
    Encoder::new(model, index, mode).empty(n)
}

pub fn assert_boundaries(
    encoding: &mut Encoding,
    model: &CapabilityModel,
    index: &SynonymyIndex,
) -> Result<(), EncodeError> {
    let n = encoding.bound;
    Encoder::new(model, index, encoding.mode).boundaries(encoding, n)
}

pub fn assert_capability_semantics(
    encoding: &mut Encoding,
    model: &CapabilityModel,
    index: &SynonymyIndex,
    t: usize,
) -> Result<(), EncodeError> {
    Encoder::new(model, index, encoding.mode).capability_semantics(encoding, t)
}

pub fn assert_layer_frame_axioms(encoding: &mut Encoding, model: &CapabilityModel, index: &SynonymyIndex, t: usize) {
    let effects = ClassEffects::new(model, index);
    Encoder::new(model, index, encoding.mode).frame_axioms(encoding, t, &effects)
}

pub fn assert_mutexes(encoding: &mut Encoding, model: &CapabilityModel, index: &SynonymyIndex, t: usize) {
    Encoder::new(model, index, encoding.mode).mutexes(encoding, t)
}

pub fn assert_happening_continuation(encoding: &mut Encoding, model: &CapabilityModel, index: &SynonymyIndex) {
    let n = encoding.bound;
    Encoder::new(model, index, encoding.mode).continuation(encoding, n)
}

/// Full encoding for happenings `0..=n`.
pub fn build(
    model: &CapabilityModel,
    index: &SynonymyIndex,
    n: usize,
    mode: SynonymMode,
) -> Result<Encoding, EncodeError> {
    let encoder = Encoder::new(model, index, mode);
    let class_effects = ClassEffects::new(model, index);
    let mut enc = encoder.empty(n);
    encoder.boundaries(&mut enc, n)?;
    for t in 0..=n {
        encoder.capability_semantics(&mut enc, t)?;
    }
    for t in 0..=n {
        encoder.frame_axioms(&mut enc, t, &class_effects);
    }
    for t in 0..=n {
        encoder.mutexes(&mut enc, t);
    }
    encoder.continuation(&mut enc, n);

    let mut names = BTreeSet::new();
    for a in &enc.assertions {
        if !names.insert(a.name.as_str()) {
            return Err(EncodeError::DuplicateName(a.name.clone()));
        }
    }
    Ok(enc)
}
