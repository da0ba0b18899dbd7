//! Mathematical expressions attached to properties and capabilities.
//!
//! The operator set is a small subset of the usual arithmetic, relational
//! and logical content dictionaries. Real arithmetic is carried out over
//! exact rationals so that evaluation agrees with SMT real semantics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num::{BigInt, BigRational, Integer, One, Signed, Zero};
use serde_json::{json, Value as Json};
use thiserror::Error;

pub type Rational = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExprError {
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("operator `{op}` expects {expected} argument(s), found {found}")]
    Arity {
        op: Op,
        expected: &'static str,
        found: usize,
    },
    #[error("type error: {0}")]
    Type(String),
    #[error("malformed expression: {0}")]
    Syntax(String),
    #[error("no value for property `{0}`")]
    MissingValue(String),
    #[error("division by zero")]
    DivisionByZero,
}

/// Value sort of a property or expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Datatype {
    Boolean,
    Real,
}

impl Datatype {
    pub fn name(self) -> &'static str {
        match self {
            Datatype::Boolean => "boolean",
            Datatype::Real => "real",
        }
    }
}

impl fmt::Display for Datatype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A ground constant: boolean or exact rational.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bool(bool),
    Real(Rational),
}

impl Value {
    pub fn int(v: i64) -> Self {
        Value::Real(Rational::from_integer(BigInt::from(v)))
    }

    pub fn datatype(&self) -> Datatype {
        match self {
            Value::Bool(_) => Datatype::Boolean,
            Value::Real(_) => Datatype::Real,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            Value::Real(_) => None,
        }
    }

    pub fn as_real(&self) -> Option<&Rational> {
        match self {
            Value::Real(r) => Some(r),
            Value::Bool(_) => None,
        }
    }

    /// JSON form: booleans stay booleans, reals become exact decimal strings.
    pub fn to_json(&self) -> Json {
        match self {
            Value::Bool(b) => Json::Bool(*b),
            Value::Real(r) => Json::String(format_rational(r)),
        }
    }

    pub fn from_json(v: &Json) -> Result<Self, ExprError> {
        match v {
            Json::Bool(b) => Ok(Value::Bool(*b)),
            Json::String(s) => parse_rational(s).map(Value::Real),
            Json::Number(n) => parse_rational(&n.to_string()).map(Value::Real),
            other => Err(ExprError::Syntax(format!("not a constant: {other}"))),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Real(r) => f.write_str(&format_rational(r)),
        }
    }
}

impl serde::Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> serde::Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = Json::deserialize(deserializer)?;
        Value::from_json(&doc).map_err(serde::de::Error::custom)
    }
}

/// Parses `"-12.5"`, `"3"`, `"1/3"` or `"1e-2"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational, ExprError> {
    let bad = || ExprError::Syntax(format!("not a number: `{text}`"));
    let s = text.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num = parse_rational(num)?;
        let den = parse_rational(den)?;
        if den.is_zero() {
            return Err(ExprError::DivisionByZero);
        }
        return Ok(num / den);
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let numer = BigInt::from_str(if all_digits.is_empty() { "0" } else { &all_digits }).map_err(|_| bad())?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = Rational::from_integer(numer);
    if scale >= 0 {
        value *= Rational::from_integer(num::pow(ten, scale as usize));
    } else {
        value /= Rational::from_integer(num::pow(ten, (-scale) as usize));
    }
    Ok(if negative { -value } else { value })
}

/// Exact decimal when the expansion terminates, `p/q` otherwise.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        return r.numer().to_string();
    }
    let mut den = r.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let (mut twos, mut fives) = (0usize, 0usize);
    while den.is_multiple_of(&two) {
        den /= &two;
        twos += 1;
    }
    while den.is_multiple_of(&five) {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let digits = twos.max(fives);
    let scaled = r * Rational::from_integer(num::pow(BigInt::from(10), digits));
    let scaled = scaled.to_integer();
    let negative = scaled.is_negative();
    let mut body = scaled.abs().to_string();
    if body.len() <= digits {
        body = format!("{}{}", "0".repeat(digits + 1 - body.len()), body);
    }
    let split = body.len() - digits;
    format!(
        "{}{}.{}",
        if negative { "-" } else { "" },
        &body[..split],
        &body[split..]
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Plus,
    Minus,
    Times,
    Divide,
    Eq,
    Neq,
    Lt,
    Gt,
    Leq,
    Geq,
    And,
    Or,
    Not,
}

impl Op {
    pub const ALL: [Op; 13] = [
        Op::Plus,
        Op::Minus,
        Op::Times,
        Op::Divide,
        Op::Eq,
        Op::Neq,
        Op::Lt,
        Op::Gt,
        Op::Leq,
        Op::Geq,
        Op::And,
        Op::Or,
        Op::Not,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Op::Plus => "plus",
            Op::Minus => "minus",
            Op::Times => "times",
            Op::Divide => "divide",
            Op::Eq => "eq",
            Op::Neq => "neq",
            Op::Lt => "lt",
            Op::Gt => "gt",
            Op::Leq => "leq",
            Op::Geq => "geq",
            Op::And => "and",
            Op::Or => "or",
            Op::Not => "not",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Plus => "+",
            Op::Minus => "-",
            Op::Times => "*",
            Op::Divide => "/",
            Op::Eq => "=",
            Op::Neq => "!=",
            Op::Lt => "<",
            Op::Gt => ">",
            Op::Leq => "<=",
            Op::Geq => ">=",
            Op::And => "and",
            Op::Or => "or",
            Op::Not => "not",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, Op::Plus | Op::Minus | Op::Times | Op::Divide)
    }

    pub fn is_relational(self) -> bool {
        matches!(self, Op::Eq | Op::Neq | Op::Lt | Op::Gt | Op::Leq | Op::Geq)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, Op::And | Op::Or | Op::Not)
    }

    fn arity_ok(self, n: usize) -> Result<(), &'static str> {
        match self {
            Op::Not => (n == 1).then_some(()).ok_or("exactly 1"),
            Op::Minus | Op::Divide => (n == 2).then_some(()).ok_or("exactly 2"),
            op if op.is_relational() => (n == 2).then_some(()).ok_or("exactly 2"),
            _ => (n >= 2).then_some(()).ok_or("at least 2"),
        }
    }
}

impl FromStr for Op {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Op::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| ExprError::UnknownOperator(s.to_string()))
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(Value),
    Ref(String),
    Apply(Op, Vec<Expr>),
}

impl Expr {
    pub fn var(id: impl Into<String>) -> Self {
        Expr::Ref(id.into())
    }

    pub fn real(v: i64) -> Self {
        Expr::Const(Value::int(v))
    }

    pub fn boolean(b: bool) -> Self {
        Expr::Const(Value::Bool(b))
    }

    /// Builds an application, checking arity.
    pub fn apply(op: Op, args: Vec<Expr>) -> Result<Self, ExprError> {
        op.arity_ok(args.len()).map_err(|expected| ExprError::Arity {
            op,
            expected,
            found: args.len(),
        })?;
        Ok(Expr::Apply(op, args))
    }

    pub fn binary(op: Op, lhs: Expr, rhs: Expr) -> Self {
        Expr::Apply(op, vec![lhs, rhs])
    }

    pub fn from_json(doc: &Json) -> Result<Self, ExprError> {
        let obj = doc
            .as_object()
            .ok_or_else(|| ExprError::Syntax(format!("expected an object, found {doc}")))?;
        if let Some(c) = obj.get("const") {
            return Value::from_json(c).map(Expr::Const);
        }
        if let Some(r) = obj.get("ref") {
            return r
                .as_str()
                .map(Expr::var)
                .ok_or_else(|| ExprError::Syntax("`ref` must be a string".into()));
        }
        if let Some(op) = obj.get("apply") {
            let op: Op = op
                .as_str()
                .ok_or_else(|| ExprError::Syntax("`apply` must be a string".into()))?
                .parse()?;
            let args = match obj.get("args") {
                Some(Json::Array(items)) => items.iter().map(Expr::from_json).collect::<Result<Vec<_>, _>>()?,
                Some(_) => return Err(ExprError::Syntax("`args` must be an array".into())),
                None => Vec::new(),
            };
            let expr = Expr::apply(op, args)?;
            expr.infer_sort(&|_| None)?;
            return Ok(expr);
        }
        Err(ExprError::Syntax(format!(
            "expected `const`, `ref` or `apply` in {doc}"
        )))
    }

    pub fn to_json(&self) -> Json {
        match self {
            Expr::Const(v) => json!({ "const": v.to_json() }),
            Expr::Ref(id) => json!({ "ref": id }),
            Expr::Apply(op, args) => json!({
                "apply": op.name(),
                "args": args.iter().map(Expr::to_json).collect::<Vec<_>>(),
            }),
        }
    }

    /// Infers the sort of the expression. References the lookup cannot
    /// resolve are treated as compatible with any sort.
    pub fn infer_sort(&self, lookup: &dyn Fn(&str) -> Option<Datatype>) -> Result<Option<Datatype>, ExprError> {
        match self {
            Expr::Const(v) => Ok(Some(v.datatype())),
            Expr::Ref(id) => Ok(lookup(id)),
            Expr::Apply(op, args) => {
                op.arity_ok(args.len()).map_err(|expected| ExprError::Arity {
                    op: *op,
                    expected,
                    found: args.len(),
                })?;
                let sorts = args
                    .iter()
                    .map(|a| a.infer_sort(lookup))
                    .collect::<Result<Vec<_>, _>>()?;
                let require = |want: Datatype| -> Result<(), ExprError> {
                    match sorts.iter().flatten().find(|s| **s != want) {
                        Some(found) => Err(ExprError::Type(format!(
                            "`{op}` expects {want} arguments, found {found}"
                        ))),
                        None => Ok(()),
                    }
                };
                match op {
                    op if op.is_arithmetic() => {
                        require(Datatype::Real)?;
                        Ok(Some(Datatype::Real))
                    }
                    Op::Eq | Op::Neq => {
                        if let (Some(a), Some(b)) = (sorts[0], sorts[1]) {
                            if a != b {
                                return Err(ExprError::Type(format!("`{op}` compares {a} with {b}")));
                            }
                        }
                        Ok(Some(Datatype::Boolean))
                    }
                    op if op.is_relational() => {
                        require(Datatype::Real)?;
                        Ok(Some(Datatype::Boolean))
                    }
                    _ => {
                        require(Datatype::Boolean)?;
                        Ok(Some(Datatype::Boolean))
                    }
                }
            }
        }
    }

    /// Property ids referenced anywhere in the expression.
    pub fn references(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Ref(id) => {
                out.insert(id.clone());
            }
            Expr::Apply(_, args) => args.iter().for_each(|a| a.collect_refs(out)),
        }
    }

    /// Constants occurring in the expression.
    pub fn constants(&self) -> Vec<Value> {
        match self {
            Expr::Const(v) => vec![v.clone()],
            Expr::Ref(_) => Vec::new(),
            Expr::Apply(_, args) => args.iter().flat_map(Expr::constants).collect(),
        }
    }

    fn has_refs(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Ref(_) => true,
            Expr::Apply(_, args) => args.iter().any(Expr::has_refs),
        }
    }

    pub fn is_linear(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Ref(_) => true,
            Expr::Apply(op, args) => {
                let local = match op {
                    Op::Times => args.iter().filter(|a| a.has_refs()).count() <= 1,
                    Op::Divide => !args[1].has_refs(),
                    _ => true,
                };
                local && args.iter().all(Expr::is_linear)
            }
        }
    }

    pub fn evaluate(&self, valuation: &BTreeMap<String, Value>) -> Result<Value, ExprError> {
        self.evaluate_with(&|id| valuation.get(id).cloned())
    }

    pub fn evaluate_with(&self, lookup: &dyn Fn(&str) -> Option<Value>) -> Result<Value, ExprError> {
        match self {
            Expr::Const(v) => Ok(v.clone()),
            Expr::Ref(id) => lookup(id).ok_or_else(|| ExprError::MissingValue(id.clone())),
            Expr::Apply(op, args) => {
                let vals = args
                    .iter()
                    .map(|a| a.evaluate_with(lookup))
                    .collect::<Result<Vec<_>, _>>()?;
                apply_op(*op, &vals)
            }
        }
    }

    /// Replaces property references through `f`, leaving everything else intact.
    pub fn rename(&self, f: &dyn Fn(&str) -> String) -> Expr {
        match self {
            Expr::Const(v) => Expr::Const(v.clone()),
            Expr::Ref(id) => Expr::Ref(f(id)),
            Expr::Apply(op, args) => Expr::Apply(*op, args.iter().map(|a| a.rename(f)).collect()),
        }
    }
}

pub fn parse_expression(document: &str) -> Result<Expr, ExprError> {
    let json: Json = serde_json::from_str(document).map_err(|e| ExprError::Syntax(e.to_string()))?;
    Expr::from_json(&json)
}

fn reals(op: Op, vals: &[Value]) -> Result<Vec<&Rational>, ExprError> {
    vals.iter()
        .map(|v| {
            v.as_real()
                .ok_or_else(|| ExprError::Type(format!("`{op}` applied to {v}")))
        })
        .collect()
}

fn bools(op: Op, vals: &[Value]) -> Result<Vec<bool>, ExprError> {
    vals.iter()
        .map(|v| {
            v.as_bool()
                .ok_or_else(|| ExprError::Type(format!("`{op}` applied to {v}")))
        })
        .collect()
}

pub(crate) fn apply_op(op: Op, vals: &[Value]) -> Result<Value, ExprError> {
    op.arity_ok(vals.len()).map_err(|expected| ExprError::Arity {
        op,
        expected,
        found: vals.len(),
    })?;
    Ok(match op {
        Op::Plus => Value::Real(reals(op, vals)?.into_iter().cloned().sum()),
        Op::Times => Value::Real(reals(op, vals)?.into_iter().cloned().product()),
        Op::Minus => {
            let r = reals(op, vals)?;
            Value::Real(r[0] - r[1])
        }
        Op::Divide => {
            let r = reals(op, vals)?;
            if r[1].is_zero() {
                return Err(ExprError::DivisionByZero);
            }
            Value::Real(r[0] / r[1])
        }
        Op::Eq | Op::Neq => {
            if vals[0].datatype() != vals[1].datatype() {
                return Err(ExprError::Type(format!("`{op}` compares {} with {}", vals[0], vals[1])));
            }
            Value::Bool((vals[0] == vals[1]) == (op == Op::Eq))
        }
        Op::Lt | Op::Gt | Op::Leq | Op::Geq => {
            let r = reals(op, vals)?;
            Value::Bool(match op {
                Op::Lt => r[0] < r[1],
                Op::Gt => r[0] > r[1],
                Op::Leq => r[0] <= r[1],
                _ => r[0] >= r[1],
            })
        }
        Op::And => Value::Bool(bools(op, vals)?.into_iter().all(|b| b)),
        Op::Or => Value::Bool(bools(op, vals)?.into_iter().any(|b| b)),
        Op::Not => Value::Bool(!bools(op, vals)?[0]),
    })
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Ref(id) => f.write_str(id),
            Expr::Apply(Op::Not, args) => write!(f, "not({})", args[0]),
            Expr::Apply(op, args) => {
                f.write_str("(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, " {} ", op.symbol())?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(s: &str) -> Result<Expr, ExprError> {
        parse_expression(s)
    }

    fn vals(pairs: &[(&str, i64)]) -> BTreeMap<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), Value::int(*v))).collect()
    }

    #[test]
    fn parses_equality_of_two_refs() {
        let e = doc(r#"{"apply":"eq","args":[{"ref":"TargetPosition"},{"ref":"ProductPositionAfter"}]}"#).unwrap();
        assert_eq!(
            e,
            Expr::binary(Op::Eq, Expr::var("TargetPosition"), Expr::var("ProductPositionAfter"))
        );
        assert_eq!(
            e.references().into_iter().collect::<Vec<_>>(),
            vec!["ProductPositionAfter".to_string(), "TargetPosition".to_string()]
        );
    }

    #[test]
    fn and_with_single_argument_is_an_arity_error() {
        let err = doc(r#"{"apply":"and","args":[{"const":true}]}"#).unwrap_err();
        assert!(matches!(
            err,
            ExprError::Arity {
                op: Op::And,
                found: 1,
                ..
            }
        ));
    }

    #[test]
    fn nested_expression_references() {
        let e = doc(r#"{"apply":"leq","args":[{"apply":"plus","args":[{"ref":"a"},{"const":"2.0"}]},{"ref":"b"}]}"#)
            .unwrap();
        assert_eq!(e.references(), ["a", "b"].iter().map(|s| s.to_string()).collect());
        assert!(Expr::boolean(true).references().is_empty());
    }

    #[test]
    fn unknown_operator_and_type_errors() {
        assert!(matches!(
            doc(r#"{"apply":"sin","args":[{"ref":"x"}]}"#),
            Err(ExprError::UnknownOperator(op)) if op == "sin"
        ));
        assert!(matches!(
            doc(r#"{"apply":"plus","args":[{"const":true},{"const":"1"}]}"#),
            Err(ExprError::Type(_))
        ));
        assert!(matches!(
            doc(r#"{"apply":"and","args":[{"const":"1"},{"const":true}]}"#),
            Err(ExprError::Type(_))
        ));
    }

    #[test]
    fn evaluate_examples() {
        let eq = Expr::binary(Op::Eq, Expr::var("x"), Expr::var("y"));
        assert_eq!(eq.evaluate(&vals(&[("x", 5), ("y", 5)])).unwrap(), Value::Bool(true));

        // 1 + 2 <= 3
        let leq = Expr::binary(
            Op::Leq,
            Expr::binary(Op::Plus, Expr::var("a"), Expr::real(2)),
            Expr::var("b"),
        );
        assert_eq!(leq.evaluate(&vals(&[("a", 1), ("b", 3)])).unwrap(), Value::Bool(true));

        let div = Expr::binary(Op::Divide, Expr::var("a"), Expr::var("b"));
        assert_eq!(
            div.evaluate(&vals(&[("a", 1), ("b", 0)])),
            Err(ExprError::DivisionByZero)
        );
        assert_eq!(
            div.evaluate(&vals(&[("a", 1)])),
            Err(ExprError::MissingValue("b".into()))
        );
        assert_eq!(
            div.evaluate(&vals(&[("a", 1), ("b", 3)])).unwrap(),
            Value::Real(Rational::new(1.into(), 3.into()))
        );
    }

    #[test]
    fn linearity() {
        let x = || Expr::var("x");
        assert!(Expr::binary(Op::Eq, x(), Expr::var("y")).is_linear());
        assert!(!Expr::binary(Op::Eq, Expr::binary(Op::Times, x(), Expr::var("y")), Expr::var("z")).is_linear());
        assert!(Expr::binary(Op::Eq, Expr::binary(Op::Times, Expr::real(2), x()), Expr::var("z")).is_linear());
        assert!(!Expr::binary(Op::Divide, Expr::real(2), x()).is_linear());
        assert!(Expr::binary(Op::Divide, x(), Expr::real(2)).is_linear());
    }

    #[test]
    fn rational_text_forms() {
        let r = |s: &str| parse_rational(s).unwrap();
        assert_eq!(r("2.5"), Rational::new(5.into(), 2.into()));
        assert_eq!(r("-0.125"), Rational::new((-1).into(), 8.into()));
        assert_eq!(r("1/3"), Rational::new(1.into(), 3.into()));
        assert_eq!(r("1e2"), Rational::from_integer(100.into()));
        assert_eq!(r(".5"), Rational::new(1.into(), 2.into()));
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
        assert_eq!(format_rational(&r("2.5")), "2.5");
        assert_eq!(format_rational(&r("-0.05")), "-0.05");
        assert_eq!(format_rational(&r("10")), "10");
        assert_eq!(format_rational(&r("-1/3")), "-1/3");
    }

    fn arb_rational() -> impl Strategy<Value = Rational> {
        (-10_000i64..10_000, 1i64..2_000).prop_map(|(n, d)| Rational::new(n.into(), d.into()))
    }

    proptest! {
        #[test]
        fn rational_format_round_trips(r in arb_rational()) {
            prop_assert_eq!(parse_rational(&format_rational(&r)).unwrap(), r);
        }

        #[test]
        fn evaluation_ignores_unreferenced_values(a in -50i64..50, b in -50i64..50, junk in -50i64..50) {
            let e = Expr::binary(Op::Geq, Expr::binary(Op::Minus, Expr::var("a"), Expr::real(3)), Expr::var("b"));
            let v1 = vals(&[("a", a), ("b", b)]);
            let mut v2 = v1.clone();
            v2.insert("unrelated".into(), Value::int(junk));
            prop_assert_eq!(e.evaluate(&v1).unwrap(), e.evaluate(&v2).unwrap());
            prop_assert_eq!(e.evaluate(&v1).unwrap(), Value::Bool(a - 3 >= b));
        }

        #[test]
        fn json_round_trip(a in -20i64..20, b in arb_rational()) {
            let e = Expr::binary(
                Op::And,
                Expr::binary(Op::Lt, Expr::var("p"), Expr::Const(Value::Real(b))),
                Expr::binary(Op::Neq, Expr::var("q"), Expr::real(a)),
            );
            prop_assert_eq!(Expr::from_json(&e.to_json()).unwrap(), e);
        }
    }
}
