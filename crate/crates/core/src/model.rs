//! Capability data model and its canonical JSON document format.
//!
//! Properties are declared on the entity that carries them (product,
//! resource or information entity). Capabilities list the properties they
//! read and write by id, grouped by the entity they belong to.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::expr::{Datatype, Expr, ExprError, Op, Value};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("dangling reference: {kind} `{id}` referenced from `{from}` is not declared")]
    DanglingReference {
        kind: &'static str,
        id: String,
        from: String,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("in constraint {index} of capability `{capability}`: {source}")]
    Expression {
        capability: String,
        index: usize,
        #[source]
        source: ExprError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeDescription {
    pub id: String,
    pub datatype: Datatype,
    pub unit: Option<String>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ExpressionGoal {
    Requirement,
    Assurance,
    ActualValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    #[default]
    Eq,
    Neq,
    Lt,
    Gt,
    Leq,
    Geq,
}

impl Relation {
    pub fn op(self) -> Op {
        match self {
            Relation::Eq => Op::Eq,
            Relation::Neq => Op::Neq,
            Relation::Lt => Op::Lt,
            Relation::Gt => Op::Gt,
            Relation::Leq => Op::Leq,
            Relation::Geq => Op::Geq,
        }
    }

    fn is_ordering(self) -> bool {
        !matches!(self, Relation::Eq | Relation::Neq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceDescription {
    pub expression_goal: ExpressionGoal,
    pub relation: Relation,
    pub value: Option<Value>,
}

impl InstanceDescription {
    pub fn new(expression_goal: ExpressionGoal, relation: Relation, value: Option<Value>) -> Self {
        Self {
            expression_goal,
            relation,
            value,
        }
    }

    pub fn actual(value: Value) -> Self {
        Self::new(ExpressionGoal::ActualValue, Relation::Eq, Some(value))
    }

    /// `relation(ref property, value)`, or `None` when no value is attached.
    pub fn to_expr(&self, property: &str) -> Option<Expr> {
        self.value
            .as_ref()
            .map(|v| Expr::binary(self.relation.op(), Expr::var(property), Expr::Const(v.clone())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityKind {
    Product,
    Resource,
    Information,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Product => "product",
            EntityKind::Resource => "resource",
            EntityKind::Information => "information",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Carrier {
    pub kind: EntityKind,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Property {
    pub id: String,
    pub type_description: String,
    pub carrier: Carrier,
    pub instance_descriptions: Vec<InstanceDescription>,
}

impl Property {
    pub fn descriptions(&self, goal: ExpressionGoal) -> impl Iterator<Item = &InstanceDescription> {
        self.instance_descriptions
            .iter()
            .filter(move |d| d.expression_goal == goal)
    }

    pub fn actual_value(&self) -> Option<&Value> {
        self.descriptions(ExpressionGoal::ActualValue)
            .find_map(|d| d.value.as_ref())
    }
}

/// A product or an information entity; both carry a type identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedEntity {
    pub id: String,
    pub type_id: String,
    pub properties: Vec<Property>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resource {
    pub id: String,
    pub properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapabilityKind {
    Provided,
    Required,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoEntry {
    pub entity: String,
    pub properties: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capability {
    pub id: String,
    pub kind: CapabilityKind,
    pub resource: Option<String>,
    pub inputs: Vec<IoEntry>,
    pub outputs: Vec<IoEntry>,
    pub constraints: Vec<Expr>,
}

/// Where a capability constraint is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintRole {
    /// References inputs only; checked before application.
    Precondition,
    /// References at least one output; outputs are read after application.
    Effect,
    /// Anything else (no references, or properties outside the io lists).
    Auxiliary,
}

impl Capability {
    pub fn input_ids(&self) -> BTreeSet<&str> {
        self.inputs
            .iter()
            .flat_map(|e| e.properties.iter().map(String::as_str))
            .collect()
    }

    pub fn output_ids(&self) -> BTreeSet<&str> {
        self.outputs
            .iter()
            .flat_map(|e| e.properties.iter().map(String::as_str))
            .collect()
    }

    /// Input and output property ids.
    pub fn io_ids(&self) -> BTreeSet<&str> {
        let mut ids = self.input_ids();
        ids.extend(self.output_ids());
        ids
    }

    pub fn constraint_role(&self, constraint: &Expr) -> ConstraintRole {
        let refs = constraint.references();
        let outputs = self.output_ids();
        let inputs = self.input_ids();
        if refs.iter().any(|r| outputs.contains(r.as_str())) {
            ConstraintRole::Effect
        } else if !refs.is_empty() && refs.iter().all(|r| inputs.contains(r.as_str())) {
            ConstraintRole::Precondition
        } else {
            ConstraintRole::Auxiliary
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CapabilityModel {
    pub type_descriptions: Vec<TypeDescription>,
    pub products: Vec<TypedEntity>,
    pub resources: Vec<Resource>,
    pub information: Vec<TypedEntity>,
    pub capabilities: Vec<Capability>,
}

impl CapabilityModel {
    /// Parses a single document holding both domain and problem.
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let doc = ModelDocument::parse(text)?;
        doc.resolve()
    }

    /// Merges a domain document (resources, provided capabilities) with a
    /// problem document (the required capability) by id.
    pub fn from_documents(domain: &str, problem: &str) -> Result<Self, ModelError> {
        let mut doc = ModelDocument::parse(domain)?;
        doc.merge(ModelDocument::parse(problem)?);
        doc.resolve()
    }

    pub fn properties(&self) -> impl Iterator<Item = &Property> {
        self.products
            .iter()
            .flat_map(|p| p.properties.iter())
            .chain(self.resources.iter().flat_map(|r| r.properties.iter()))
            .chain(self.information.iter().flat_map(|i| i.properties.iter()))
    }

    pub fn property(&self, id: &str) -> Option<&Property> {
        self.properties().find(|p| p.id == id)
    }

    pub fn property_map(&self) -> BTreeMap<&str, &Property> {
        self.properties().map(|p| (p.id.as_str(), p)).collect()
    }

    pub fn type_description(&self, id: &str) -> Option<&TypeDescription> {
        self.type_descriptions.iter().find(|t| t.id == id)
    }

    pub fn datatype_of(&self, property: &str) -> Option<Datatype> {
        self.property(property)
            .and_then(|p| self.type_description(&p.type_description))
            .map(|t| t.datatype)
    }

    /// Property id → datatype for every resolvable property.
    pub fn datatypes(&self) -> BTreeMap<String, Datatype> {
        let tds: BTreeMap<&str, Datatype> = self
            .type_descriptions
            .iter()
            .map(|t| (t.id.as_str(), t.datatype))
            .collect();
        self.properties()
            .filter_map(|p| tds.get(p.type_description.as_str()).map(|d| (p.id.clone(), *d)))
            .collect()
    }

    pub fn capability(&self, id: &str) -> Option<&Capability> {
        self.capabilities.iter().find(|c| c.id == id)
    }

    pub fn provided(&self) -> impl Iterator<Item = &Capability> {
        self.capabilities.iter().filter(|c| c.kind == CapabilityKind::Provided)
    }

    pub fn required(&self) -> Option<&Capability> {
        self.capabilities.iter().find(|c| c.kind == CapabilityKind::Required)
    }

    /// Kind and type id of a product/information entity; resources have no type.
    pub fn entity_type(&self, entity: &str) -> Option<(EntityKind, &str)> {
        self.products
            .iter()
            .find(|p| p.id == entity)
            .map(|p| (EntityKind::Product, p.type_id.as_str()))
            .or_else(|| {
                self.information
                    .iter()
                    .find(|i| i.id == entity)
                    .map(|i| (EntityKind::Information, i.type_id.as_str()))
            })
    }

    fn entity_kind(&self, entity: &str) -> Option<EntityKind> {
        if self.resources.iter().any(|r| r.id == entity) {
            Some(EntityKind::Resource)
        } else {
            self.entity_type(entity).map(|(k, _)| k)
        }
    }

    /// Properties a capability constraint may mention: its io properties
    /// plus the properties of its providing resource.
    pub fn constraint_scope(&self, cap: &Capability) -> BTreeSet<String> {
        let mut scope: BTreeSet<String> = cap.io_ids().into_iter().map(String::from).collect();
        if let Some(res) = cap
            .resource
            .as_ref()
            .and_then(|r| self.resources.iter().find(|x| &x.id == r))
        {
            scope.extend(res.properties.iter().map(|p| p.id.clone()));
        }
        scope
    }

    /// Requirement descriptions on the inputs of `cap`, desugared.
    pub fn requirements(&self, cap: &Capability) -> Vec<(String, Expr)> {
        self.desugared(cap.input_ids(), ExpressionGoal::Requirement)
    }

    /// Assurance descriptions on the outputs of `cap`, desugared.
    pub fn assurances(&self, cap: &Capability) -> Vec<(String, Expr)> {
        self.desugared(cap.output_ids(), ExpressionGoal::Assurance)
    }

    fn desugared(&self, ids: BTreeSet<&str>, goal: ExpressionGoal) -> Vec<(String, Expr)> {
        let props = self.property_map();
        ids.into_iter()
            .filter_map(|id| props.get(id))
            .flat_map(|p| {
                p.descriptions(goal)
                    .filter_map(|d| d.to_expr(&p.id).map(|e| (p.id.clone(), e)))
            })
            .collect()
    }

    /// Inputs of `cap` without any requirement or actual value; the planner
    /// chooses their values.
    pub fn unbound_parameters(&self, cap: &Capability) -> Vec<String> {
        let props = self.property_map();
        cap.input_ids()
            .into_iter()
            .filter(|id| {
                props.get(id).is_some_and(|p| {
                    p.descriptions(ExpressionGoal::Requirement).next().is_none() && p.actual_value().is_none()
                })
            })
            .map(String::from)
            .collect()
    }

    /// Every constant mentioned in instance descriptions or constraints.
    pub fn constants(&self) -> Vec<Value> {
        let mut out: Vec<Value> = self
            .properties()
            .flat_map(|p| p.instance_descriptions.iter().filter_map(|d| d.value.clone()))
            .collect();
        out.extend(
            self.capabilities
                .iter()
                .flat_map(|c| c.constraints.iter().flat_map(Expr::constants)),
        );
        out
    }

    pub fn to_json(&self) -> Json {
        let props = |ps: &[Property]| -> Json { Json::Array(ps.iter().map(property_to_json).collect()) };
        let mut tds = Vec::new();
        for t in &self.type_descriptions {
            let mut obj = json!({ "id": t.id, "datatype": t.datatype.name() });
            if let Some(u) = &t.unit {
                obj["unit"] = json!(u);
            }
            if let Some(l) = &t.label {
                obj["label"] = json!(l);
            }
            tds.push(obj);
        }
        json!({
            "typeDescriptions": tds,
            "products": self.products.iter().map(|p| json!({
                "id": p.id, "productTypeId": p.type_id, "properties": props(&p.properties)
            })).collect::<Vec<_>>(),
            "resources": self.resources.iter().map(|r| json!({
                "id": r.id, "properties": props(&r.properties)
            })).collect::<Vec<_>>(),
            "information": self.information.iter().map(|i| json!({
                "id": i.id, "typeId": i.type_id, "properties": props(&i.properties)
            })).collect::<Vec<_>>(),
            "capabilities": self.capabilities.iter().map(|c| {
                let mut obj = json!({
                    "id": c.id,
                    "kind": c.kind,
                    "inputs": c.inputs,
                    "outputs": c.outputs,
                    "constraints": c.constraints.iter().map(Expr::to_json).collect::<Vec<_>>(),
                });
                if let Some(r) = &c.resource {
                    obj["resource"] = json!(r);
                }
                obj
            }).collect::<Vec<_>>(),
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("model serializes")
    }
}

fn property_to_json(p: &Property) -> Json {
    json!({
        "id": p.id,
        "typeDescription": p.type_description,
        "instanceDescriptions": p.instance_descriptions.iter().map(|d| {
            let mut obj = json!({ "expressionGoal": d.expression_goal, "relation": d.relation });
            if let Some(v) = &d.value {
                obj["value"] = v.to_json();
            }
            obj
        }).collect::<Vec<_>>(),
    })
}

/// Splits all declared properties into boolean and real ids.
pub fn partition_properties(model: &CapabilityModel) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut booleans = BTreeSet::new();
    let mut reals = BTreeSet::new();
    for (id, dt) in model.datatypes() {
        match dt {
            Datatype::Boolean => booleans.insert(id),
            Datatype::Real => reals.insert(id),
        };
    }
    (booleans, reals)
}

// ---------------------------------------------------------------------------
// Raw document

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ModelDocument {
    #[serde(default)]
    type_descriptions: Vec<TypeDescriptionDoc>,
    #[serde(default)]
    products: Vec<ProductDoc>,
    #[serde(default)]
    resources: Vec<ResourceDoc>,
    #[serde(default)]
    information: Vec<InformationDoc>,
    #[serde(default)]
    capabilities: Vec<CapabilityDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TypeDescriptionDoc {
    id: String,
    datatype: DatatypeDoc,
    unit: Option<String>,
    label: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DatatypeDoc {
    Boolean,
    Real,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct PropertyDoc {
    id: String,
    type_description: String,
    #[serde(default)]
    instance_descriptions: Vec<InstanceDescriptionDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct InstanceDescriptionDoc {
    expression_goal: ExpressionGoal,
    #[serde(default)]
    relation: Relation,
    value: Option<Json>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ProductDoc {
    id: String,
    product_type_id: String,
    #[serde(default)]
    properties: Vec<PropertyDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResourceDoc {
    id: String,
    #[serde(default)]
    properties: Vec<PropertyDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct InformationDoc {
    id: String,
    type_id: String,
    #[serde(default)]
    properties: Vec<PropertyDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapabilityDoc {
    id: String,
    kind: CapabilityKind,
    resource: Option<String>,
    #[serde(default)]
    inputs: Vec<IoEntry>,
    #[serde(default)]
    outputs: Vec<IoEntry>,
    #[serde(default)]
    constraints: Vec<Json>,
}

impl ModelDocument {
    fn parse(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Schema(e.to_string()))
    }

    fn merge(&mut self, other: ModelDocument) {
        self.type_descriptions.extend(other.type_descriptions);
        self.products.extend(other.products);
        self.resources.extend(other.resources);
        self.information.extend(other.information);
        self.capabilities.extend(other.capabilities);
    }

    fn resolve(self) -> Result<CapabilityModel, ModelError> {
        fn unique<'a>(seen: &mut BTreeSet<&'a str>, id: &'a str) -> Result<(), ModelError> {
            if seen.insert(id) {
                Ok(())
            } else {
                Err(ModelError::DuplicateId(id.to_string()))
            }
        }

        let mut td_ids = BTreeSet::new();
        for t in &self.type_descriptions {
            unique(&mut td_ids, &t.id)?;
        }
        let mut entity_ids = BTreeSet::new();
        let mut prop_ids = BTreeSet::new();
        let entity_props = self
            .products
            .iter()
            .map(|p| (p.id.as_str(), &p.properties))
            .chain(self.resources.iter().map(|r| (r.id.as_str(), &r.properties)))
            .chain(self.information.iter().map(|i| (i.id.as_str(), &i.properties)));
        for (entity, props) in entity_props {
            unique(&mut entity_ids, entity)?;
            for p in props {
                unique(&mut prop_ids, &p.id)?;
                if !td_ids.contains(p.type_description.as_str()) {
                    return Err(ModelError::DanglingReference {
                        kind: "type description",
                        id: p.type_description.clone(),
                        from: p.id.clone(),
                    });
                }
            }
        }
        let mut cap_ids = BTreeSet::new();
        for c in &self.capabilities {
            unique(&mut cap_ids, &c.id)?;
            if let Some(r) = &c.resource {
                if !self.resources.iter().any(|x| &x.id == r) {
                    return Err(ModelError::DanglingReference {
                        kind: "resource",
                        id: r.clone(),
                        from: c.id.clone(),
                    });
                }
            }
            for entry in c.inputs.iter().chain(&c.outputs) {
                if !entity_ids.contains(entry.entity.as_str()) {
                    return Err(ModelError::DanglingReference {
                        kind: "entity",
                        id: entry.entity.clone(),
                        from: c.id.clone(),
                    });
                }
                for p in &entry.properties {
                    if !prop_ids.contains(p.as_str()) {
                        return Err(ModelError::DanglingReference {
                            kind: "property",
                            id: p.clone(),
                            from: c.id.clone(),
                        });
                    }
                }
            }
        }
        let required = self
            .capabilities
            .iter()
            .filter(|c| c.kind == CapabilityKind::Required)
            .count();
        if required != 1 {
            return Err(ModelError::Schema(format!(
                "expected exactly one required capability, found {required}"
            )));
        }

        let prop_ids: BTreeSet<String> = prop_ids.into_iter().map(String::from).collect();
        let convert_props = |props: Vec<PropertyDoc>, carrier: Carrier| -> Result<Vec<Property>, ModelError> {
            props
                .into_iter()
                .map(|p| {
                    let instance_descriptions = p
                        .instance_descriptions
                        .into_iter()
                        .map(|d| {
                            let value = d
                                .value
                                .as_ref()
                                .map(Value::from_json)
                                .transpose()
                                .map_err(|e| ModelError::Schema(format!("property `{}`: {e}", p.id)))?;
                            Ok(InstanceDescription::new(d.expression_goal, d.relation, value))
                        })
                        .collect::<Result<Vec<_>, ModelError>>()?;
                    Ok(Property {
                        id: p.id,
                        type_description: p.type_description,
                        carrier: carrier.clone(),
                        instance_descriptions,
                    })
                })
                .collect()
        };

        let mut model = CapabilityModel {
            type_descriptions: self
                .type_descriptions
                .into_iter()
                .map(|t| TypeDescription {
                    id: t.id,
                    datatype: match t.datatype {
                        DatatypeDoc::Boolean => Datatype::Boolean,
                        DatatypeDoc::Real => Datatype::Real,
                    },
                    unit: t.unit,
                    label: t.label,
                })
                .collect(),
            ..Default::default()
        };
        for p in self.products {
            let carrier = Carrier {
                kind: EntityKind::Product,
                id: p.id.clone(),
            };
            model.products.push(TypedEntity {
                properties: convert_props(p.properties, carrier)?,
                id: p.id,
                type_id: p.product_type_id,
            });
        }
        for r in self.resources {
            let carrier = Carrier {
                kind: EntityKind::Resource,
                id: r.id.clone(),
            };
            model.resources.push(Resource {
                properties: convert_props(r.properties, carrier)?,
                id: r.id,
            });
        }
        for i in self.information {
            let carrier = Carrier {
                kind: EntityKind::Information,
                id: i.id.clone(),
            };
            model.information.push(TypedEntity {
                properties: convert_props(i.properties, carrier)?,
                id: i.id,
                type_id: i.type_id,
            });
        }
        for c in self.capabilities {
            let constraints = c
                .constraints
                .iter()
                .enumerate()
                .map(|(index, doc)| {
                    let expr = Expr::from_json(doc).map_err(|source| ModelError::Expression {
                        capability: c.id.clone(),
                        index,
                        source,
                    })?;
                    if let Some(r) = expr.references().into_iter().find(|r| !prop_ids.contains(r.as_str())) {
                        return Err(ModelError::DanglingReference {
                            kind: "property",
                            id: r,
                            from: c.id.clone(),
                        });
                    }
                    Ok(expr)
                })
                .collect::<Result<Vec<_>, _>>()?;
            model.capabilities.push(Capability {
                id: c.id,
                kind: c.kind,
                resource: c.resource,
                inputs: c.inputs,
                outputs: c.outputs,
                constraints,
            });
        }
        Ok(model)
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Rule {
    DuplicateId,
    DanglingReference,
    InvalidIdentifier,
    RequiredCapabilityCount,
    DatatypeMismatch,
    MultipleActualValues,
    ActualValueWithoutValue,
    ActualValueRelation,
    RelationNotApplicable,
    EmptyProductType,
    CarrierMismatch,
    ConstraintScope,
    ConstraintType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub rule: Rule,
    pub element: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at `{}`: {}", self.rule, self.element, self.message)
    }
}

/// Identifiers end up inside quoted SMT-LIB symbols, so `|`, `\` and the
/// `#` separator are reserved.
fn valid_identifier(id: &str) -> bool {
    !id.is_empty() && !id.chars().any(|c| c == '|' || c == '\\' || c == '#' || c.is_control())
}

pub fn validate(model: &CapabilityModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut diag = |rule: Rule, element: &str, message: String| {
        out.push(Diagnostic {
            rule,
            element: element.to_string(),
            message,
        })
    };

    // identifiers
    let mut seen: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let all_ids = model
        .type_descriptions
        .iter()
        .map(|t| ("type description", t.id.as_str()))
        .chain(model.products.iter().map(|p| ("entity", p.id.as_str())))
        .chain(model.resources.iter().map(|r| ("entity", r.id.as_str())))
        .chain(model.information.iter().map(|i| ("entity", i.id.as_str())))
        .chain(model.properties().map(|p| ("property", p.id.as_str())))
        .chain(model.capabilities.iter().map(|c| ("capability", c.id.as_str())));
    for (ns, id) in all_ids {
        if !valid_identifier(id) {
            diag(
                Rule::InvalidIdentifier,
                id,
                format!("{ns} id contains a reserved character"),
            );
        }
        if !seen.entry(ns).or_default().insert(id) {
            diag(Rule::DuplicateId, id, format!("{ns} id declared more than once"));
        }
    }

    let required = model
        .capabilities
        .iter()
        .filter(|c| c.kind == CapabilityKind::Required)
        .count();
    if required != 1 {
        diag(
            Rule::RequiredCapabilityCount,
            "capabilities",
            format!("expected exactly one required capability, found {required}"),
        );
    }

    for e in model.products.iter().chain(&model.information) {
        if e.type_id.is_empty() {
            diag(Rule::EmptyProductType, &e.id, "type id is empty".into());
        }
    }

    // properties and carriers
    let declared = model
        .products
        .iter()
        .map(|p| (EntityKind::Product, &p.id, &p.properties))
        .chain(
            model
                .resources
                .iter()
                .map(|r| (EntityKind::Resource, &r.id, &r.properties)),
        )
        .chain(
            model
                .information
                .iter()
                .map(|i| (EntityKind::Information, &i.id, &i.properties)),
        );
    for (kind, entity, props) in declared {
        for p in props {
            if p.carrier.kind != kind || &p.carrier.id != entity {
                diag(
                    Rule::CarrierMismatch,
                    &p.id,
                    format!(
                        "declared on {kind} `{entity}` but carrier is {} `{}`",
                        p.carrier.kind, p.carrier.id
                    ),
                );
            }
            let Some(td) = model.type_description(&p.type_description) else {
                diag(
                    Rule::DanglingReference,
                    &p.id,
                    format!("type description `{}` is not declared", p.type_description),
                );
                continue;
            };
            let actuals: Vec<_> = p.descriptions(ExpressionGoal::ActualValue).collect();
            if actuals.len() > 1 {
                diag(
                    Rule::MultipleActualValues,
                    &p.id,
                    format!("{} actual values", actuals.len()),
                );
            }
            for a in &actuals {
                if a.value.is_none() {
                    diag(
                        Rule::ActualValueWithoutValue,
                        &p.id,
                        "actual value carries no value".into(),
                    );
                }
                if a.relation != Relation::Eq {
                    diag(
                        Rule::ActualValueRelation,
                        &p.id,
                        format!("actual value uses {:?}", a.relation),
                    );
                }
            }
            for d in &p.instance_descriptions {
                if let Some(v) = &d.value {
                    if v.datatype() != td.datatype {
                        diag(
                            Rule::DatatypeMismatch,
                            &p.id,
                            format!("{} value {v} on a {} property", v.datatype(), td.datatype),
                        );
                    }
                }
                if td.datatype == Datatype::Boolean && d.relation.is_ordering() {
                    diag(
                        Rule::RelationNotApplicable,
                        &p.id,
                        format!("{:?} on a boolean property", d.relation),
                    );
                }
            }
        }
    }

    // capabilities
    let props = model.property_map();
    let datatypes = model.datatypes();
    for c in &model.capabilities {
        if let Some(r) = &c.resource {
            if !model.resources.iter().any(|x| &x.id == r) {
                diag(
                    Rule::DanglingReference,
                    &c.id,
                    format!("resource `{r}` is not declared"),
                );
            }
        }
        for entry in c.inputs.iter().chain(&c.outputs) {
            if model.entity_kind(&entry.entity).is_none() {
                diag(
                    Rule::DanglingReference,
                    &c.id,
                    format!("entity `{}` is not declared", entry.entity),
                );
            }
            for pid in &entry.properties {
                match props.get(pid.as_str()) {
                    None => diag(
                        Rule::DanglingReference,
                        &c.id,
                        format!("property `{pid}` is not declared"),
                    ),
                    Some(p) if p.carrier.id != entry.entity => diag(
                        Rule::CarrierMismatch,
                        &c.id,
                        format!(
                            "property `{pid}` is carried by `{}`, not `{}`",
                            p.carrier.id, entry.entity
                        ),
                    ),
                    Some(_) => {}
                }
            }
        }
        let scope = model.constraint_scope(c);
        for (i, expr) in c.constraints.iter().enumerate() {
            let element = format!("{}.constraint[{i}]", c.id);
            for r in expr.references() {
                if !props.contains_key(r.as_str()) {
                    diag(
                        Rule::DanglingReference,
                        &element,
                        format!("property `{r}` is not declared"),
                    );
                } else if !scope.contains(&r) {
                    diag(
                        Rule::ConstraintScope,
                        &element,
                        format!("property `{r}` is not attached to capability `{}`", c.id),
                    );
                }
            }
            match expr.infer_sort(&|id| datatypes.get(id).copied()) {
                Ok(Some(Datatype::Boolean)) => {}
                Ok(other) => diag(
                    Rule::ConstraintType,
                    &element,
                    format!(
                        "constraint root must be boolean, found {}",
                        other.map_or("unknown", Datatype::name)
                    ),
                ),
                Err(e) => diag(Rule::ConstraintType, &element, e.to_string()),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRANSPORT: &str = include_str!("../fixtures/transport.json");

    #[test]
    fn parses_transport_document() {
        let m = CapabilityModel::from_json_str(TRANSPORT).unwrap();
        assert_eq!(m.provided().count(), 1);
        assert_eq!(m.required().unwrap().id, "TransportRequest");
        let transport = m.capability("Transport").unwrap();
        assert_eq!(transport.io_ids().len(), 4);
        for id in [
            "CurrentProductPosition",
            "AGVPosition",
            "TargetPosition",
            "ProductPositionAfter",
        ] {
            assert_eq!(m.datatype_of(id), Some(Datatype::Real), "{id}");
        }
        assert!(validate(&m).is_empty(), "{:?}", validate(&m));
    }

    #[test]
    fn transport_partition_is_all_real() {
        let m = CapabilityModel::from_json_str(TRANSPORT).unwrap();
        let (booleans, reals) = partition_properties(&m);
        assert!(booleans.is_empty());
        for id in [
            "CurrentProductPosition",
            "AGVPosition",
            "TargetPosition",
            "ProductPositionAfter",
        ] {
            assert!(reals.contains(id));
        }
    }

    #[test]
    fn mixed_partition_and_empty_model() {
        let doc = r#"{
            "typeDescriptions": [{"id":"closed","datatype":"boolean"},{"id":"width","datatype":"real","unit":"mm"}],
            "resources": [{"id":"Gripper","properties":[
                {"id":"gripperClosed","typeDescription":"closed"},
                {"id":"jawWidth","typeDescription":"width"}]}],
            "capabilities": [{"id":"Goal","kind":"required"}]
        }"#;
        let m = CapabilityModel::from_json_str(doc).unwrap();
        let (p, r) = partition_properties(&m);
        assert_eq!(p, BTreeSet::from(["gripperClosed".to_string()]));
        assert_eq!(r, BTreeSet::from(["jawWidth".to_string()]));

        let empty = CapabilityModel::default();
        assert_eq!(partition_properties(&empty), (BTreeSet::new(), BTreeSet::new()));
    }

    #[test]
    fn zero_provided_capabilities_is_legal() {
        let m = CapabilityModel::from_json_str(r#"{"capabilities":[{"id":"R","kind":"required"}]}"#).unwrap();
        assert_eq!(m.provided().count(), 0);
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn undeclared_type_description_is_dangling() {
        let doc = r#"{
            "resources": [{"id":"AGV","properties":[{"id":"AGVPosition","typeDescription":"position"}]}],
            "capabilities": [{"id":"R","kind":"required"}]
        }"#;
        match CapabilityModel::from_json_str(doc) {
            Err(ModelError::DanglingReference { id, .. }) => assert_eq!(id, "position"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(
            CapabilityModel::from_json_str("{"),
            Err(ModelError::Schema(_))
        ));
        assert!(matches!(
            CapabilityModel::from_json_str(r#"{"capabilities":[]}"#),
            Err(ModelError::Schema(_))
        ));
        assert!(matches!(
            CapabilityModel::from_json_str(
                r#"{"capabilities":[{"id":"A","kind":"required"},{"id":"B","kind":"required"}]}"#
            ),
            Err(ModelError::Schema(_))
        ));
        assert!(matches!(
            CapabilityModel::from_json_str(r#"{"capabilities":[{"id":"A","kind":"required"}],"extra":1}"#),
            Err(ModelError::Schema(_))
        ));
        assert!(matches!(
            CapabilityModel::from_json_str(
                r#"{"capabilities":[{"id":"A","kind":"required","constraints":[{"apply":"sin","args":[]}]}]}"#
            ),
            Err(ModelError::Expression { .. })
        ));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let doc = r#"{
            "typeDescriptions": [{"id":"t","datatype":"real"}],
            "resources": [{"id":"A","properties":[{"id":"x","typeDescription":"t"}]},
                          {"id":"B","properties":[{"id":"x","typeDescription":"t"}]}],
            "capabilities": [{"id":"R","kind":"required"}]
        }"#;
        assert!(matches!(CapabilityModel::from_json_str(doc), Err(ModelError::DuplicateId(id)) if id == "x"));
    }

    #[test]
    fn two_document_mode_merges_and_rejects_duplicates() {
        let domain = r#"{
            "typeDescriptions": [{"id":"t","datatype":"real"}],
            "resources": [{"id":"A","properties":[{"id":"x","typeDescription":"t"}]}],
            "capabilities": [{"id":"Move","kind":"provided","resource":"A",
                "outputs":[{"entity":"A","properties":["x"]}],
                "constraints":[{"apply":"eq","args":[{"ref":"x"},{"const":"1"}]}]}]
        }"#;
        let problem = r#"{"capabilities": [{"id":"Goal","kind":"required",
            "outputs":[{"entity":"A","properties":["x"]}]}]}"#;
        let m = CapabilityModel::from_documents(domain, problem).unwrap();
        assert_eq!(m.capabilities.len(), 2);
        assert!(validate(&m).is_empty());
        assert!(matches!(
            CapabilityModel::from_documents(domain, domain),
            Err(ModelError::DuplicateId(_))
        ));
    }

    fn mutate(f: impl FnOnce(&mut CapabilityModel)) -> Vec<Rule> {
        let mut m = CapabilityModel::from_json_str(TRANSPORT).unwrap();
        f(&mut m);
        validate(&m).into_iter().map(|d| d.rule).collect()
    }

    fn property_mut<'a>(m: &'a mut CapabilityModel, id: &str) -> &'a mut Property {
        m.products
            .iter_mut()
            .flat_map(|p| p.properties.iter_mut())
            .chain(m.resources.iter_mut().flat_map(|r| r.properties.iter_mut()))
            .chain(m.information.iter_mut().flat_map(|i| i.properties.iter_mut()))
            .find(|p| p.id == id)
            .unwrap()
    }

    #[test]
    fn validation_mutations() {
        assert_eq!(
            mutate(|m| {
                m.type_descriptions.push(TypeDescription {
                    id: "flag".into(),
                    datatype: Datatype::Boolean,
                    unit: None,
                    label: None,
                });
                let p = property_mut(m, "AGVPosition");
                p.type_description = "flag".into();
                p.instance_descriptions = vec![InstanceDescription::actual(Value::Real(
                    crate::expr::parse_rational("3.5").unwrap(),
                ))];
            })
            .into_iter()
            .filter(|r| *r == Rule::DatatypeMismatch)
            .count(),
            1
        );
        assert!(mutate(|m| {
            property_mut(m, "AGVPosition")
                .instance_descriptions
                .push(InstanceDescription::actual(Value::int(7)));
        })
        .contains(&Rule::MultipleActualValues));
        assert_eq!(
            mutate(|m| {
                property_mut(m, "AGVPosition").instance_descriptions = vec![InstanceDescription::new(
                    ExpressionGoal::ActualValue,
                    Relation::Leq,
                    Some(Value::int(1)),
                )];
            }),
            vec![Rule::ActualValueRelation]
        );
        assert_eq!(
            mutate(|m| {
                property_mut(m, "AGVPosition").instance_descriptions = vec![InstanceDescription::new(
                    ExpressionGoal::ActualValue,
                    Relation::Eq,
                    None,
                )];
            }),
            vec![Rule::ActualValueWithoutValue]
        );
        assert_eq!(mutate(|m| m.products[0].type_id.clear()), vec![Rule::EmptyProductType]);
        assert_eq!(
            mutate(|m| m.capabilities.retain(|c| c.kind == CapabilityKind::Provided)),
            vec![Rule::RequiredCapabilityCount]
        );
        assert_eq!(
            mutate(|m| property_mut(m, "AGVPosition").type_description = "nowhere".into()),
            vec![Rule::DanglingReference]
        );
        assert!(mutate(|m| {
            let c = m.capabilities.iter_mut().find(|c| c.id == "Transport").unwrap();
            c.constraints
                .push(Expr::binary(Op::Plus, Expr::var("AGVPosition"), Expr::real(1)));
        })
        .contains(&Rule::ConstraintType));
        assert_eq!(
            mutate(|m| {
                let req = m
                    .capabilities
                    .iter_mut()
                    .find(|c| c.kind == CapabilityKind::Required)
                    .unwrap();
                req.constraints
                    .push(Expr::binary(Op::Eq, Expr::var("TargetPosition"), Expr::real(1)));
            }),
            vec![Rule::ConstraintScope]
        );
        assert_eq!(
            mutate(|m| m.capabilities[0].id = "Trans|port".into()),
            vec![Rule::InvalidIdentifier]
        );
        // reported for the declaring entity and for the io entry naming AGV
        assert_eq!(
            mutate(|m| property_mut(m, "AGVPosition").carrier.id = "Elsewhere".into()),
            vec![Rule::CarrierMismatch, Rule::CarrierMismatch]
        );
    }

    #[test]
    fn serialization_round_trips() {
        let m = CapabilityModel::from_json_str(TRANSPORT).unwrap();
        let again = CapabilityModel::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn constraint_roles() {
        let m = CapabilityModel::from_json_str(TRANSPORT).unwrap();
        let t = m.capability("Transport").unwrap();
        let roles: Vec<_> = t.constraints.iter().map(|c| t.constraint_role(c)).collect();
        assert_eq!(roles, vec![ConstraintRole::Precondition, ConstraintRole::Effect]);
        assert_eq!(t.constraint_role(&Expr::boolean(true)), ConstraintRole::Auxiliary);
    }
}
