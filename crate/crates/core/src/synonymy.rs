//! Identity alignment between capabilities that were modelled independently.
//!
//! Products (and information entities) with the same type id are treated
//! as the same object. Their properties with the same type description are
//! synonymous and share one state in the encoding. Resource properties are
//! only ever identical to themselves.

use std::collections::{BTreeMap, BTreeSet};

use crate::expr::{Datatype, Value};
use crate::model::{Capability, CapabilityModel, ConstraintRole, EntityKind, ExpressionGoal, Relation};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyClass {
    /// Lexicographically smallest member id.
    pub class_id: String,
    pub members: BTreeSet<String>,
    pub type_description: String,
    pub datatype: Datatype,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymyIndex {
    /// Sorted by class id.
    pub property_classes: Vec<PropertyClass>,
    pub class_of: BTreeMap<String, String>,
    /// Q^syn: the other members of a property's class.
    pub syn_props: BTreeMap<String, BTreeSet<String>>,
    /// C^syn: provided capabilities not touching the property directly but
    /// touching one of its synonyms.
    pub syn_caps: BTreeMap<String, BTreeSet<String>>,
}

impl SynonymyIndex {
    pub fn new(model: &CapabilityModel) -> Self {
        let mut index = synonymous_properties(model);
        index.syn_caps = synonymous_capabilities(&index, model);
        index
    }

    pub fn class(&self, class_id: &str) -> Option<&PropertyClass> {
        self.property_classes
            .binary_search_by(|c| c.class_id.as_str().cmp(class_id))
            .ok()
            .map(|i| &self.property_classes[i])
    }

    /// Class id of a property; unknown ids map to themselves.
    pub fn class_id<'a>(&'a self, property: &'a str) -> &'a str {
        self.class_of.get(property).map(String::as_str).unwrap_or(property)
    }

    pub fn classes_of<'a>(&'a self, properties: impl IntoIterator<Item = &'a str>) -> BTreeSet<&'a str> {
        properties.into_iter().map(|p| self.class_id(p)).collect()
    }
}

/// Blocks of product/information ids sharing a type id.
pub fn synonymous_products(model: &CapabilityModel) -> Vec<BTreeSet<String>> {
    let mut blocks: BTreeMap<(EntityKind, &str), BTreeSet<String>> = BTreeMap::new();
    for p in &model.products {
        blocks
            .entry((EntityKind::Product, &p.type_id))
            .or_default()
            .insert(p.id.clone());
    }
    for i in &model.information {
        blocks
            .entry((EntityKind::Information, &i.type_id))
            .or_default()
            .insert(i.id.clone());
    }
    blocks.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum ClassKey<'a> {
    Typed(EntityKind, &'a str, &'a str),
    Own(&'a str),
}

/// Property classes and synonym sets. `syn_caps` is left empty.
pub fn synonymous_properties(model: &CapabilityModel) -> SynonymyIndex {
    let tds: BTreeMap<&str, Datatype> = model
        .type_descriptions
        .iter()
        .map(|t| (t.id.as_str(), t.datatype))
        .collect();
    let mut groups: BTreeMap<ClassKey, Vec<&crate::model::Property>> = BTreeMap::new();
    for p in model.properties() {
        let key = match model.entity_type(&p.carrier.id) {
            Some((kind, type_id)) if p.carrier.kind != EntityKind::Resource => {
                ClassKey::Typed(kind, type_id, &p.type_description)
            }
            _ => ClassKey::Own(&p.id),
        };
        groups.entry(key).or_default().push(p);
    }

    let mut index = SynonymyIndex::default();
    for members in groups.into_values() {
        let ids: BTreeSet<String> = members.iter().map(|p| p.id.clone()).collect();
        let class_id = ids.iter().next().cloned().expect("non-empty group");
        let type_description = members[0].type_description.clone();
        let datatype = tds.get(type_description.as_str()).copied().unwrap_or(Datatype::Real);
        for id in &ids {
            index.class_of.insert(id.clone(), class_id.clone());
            index
                .syn_props
                .insert(id.clone(), ids.iter().filter(|o| *o != id).cloned().collect());
        }
        index.property_classes.push(PropertyClass {
            class_id,
            members: ids,
            type_description,
            datatype,
        });
    }
    index.property_classes.sort_by(|a, b| a.class_id.cmp(&b.class_id));
    index
}

pub fn synonymous_capabilities(index: &SynonymyIndex, model: &CapabilityModel) -> BTreeMap<String, BTreeSet<String>> {
    let io: Vec<(&str, BTreeSet<&str>)> = model.provided().map(|c| (c.id.as_str(), c.io_ids())).collect();
    index
        .syn_props
        .iter()
        .map(|(q, syns)| {
            let caps = io
                .iter()
                .filter(|(_, ids)| !ids.contains(q.as_str()) && syns.iter().any(|s| ids.contains(s.as_str())))
                .map(|(c, _)| c.to_string())
                .collect();
            (q.clone(), caps)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EffectSets {
    /// eff_c: outputs that are assured or constrained.
    pub all: BTreeSet<String>,
    /// eff⁺_c: boolean outputs assured true.
    pub positive: BTreeSet<String>,
    /// eff⁻_c: boolean outputs assured false.
    pub negative: BTreeSet<String>,
    /// eff^num_c: real outputs in eff_c.
    pub numeric: BTreeSet<String>,
    /// Boolean outputs whose assurance restates an input value, mapped to
    /// that input.
    pub unchanged: BTreeMap<String, String>,
}

/// Effective boolean value of a description: `neq v` means `!v`.
fn boolean_value(relation: Relation, value: Option<&Value>) -> Option<bool> {
    match (relation, value?) {
        (Relation::Eq, Value::Bool(b)) => Some(*b),
        (Relation::Neq, Value::Bool(b)) => Some(!*b),
        _ => None,
    }
}

pub fn effect_sets(c: &Capability, index: &SynonymyIndex, model: &CapabilityModel) -> EffectSets {
    let props = model.property_map();
    let datatypes = model.datatypes();
    let outputs = c.output_ids();
    let mut sets = EffectSets::default();

    for o in &outputs {
        if props
            .get(o)
            .is_some_and(|p| p.descriptions(ExpressionGoal::Assurance).next().is_some())
        {
            sets.all.insert(o.to_string());
        }
    }
    for expr in &c.constraints {
        if c.constraint_role(expr) == ConstraintRole::Effect {
            sets.all
                .extend(expr.references().into_iter().filter(|r| outputs.contains(r.as_str())));
        }
    }

    for o in &sets.all {
        match datatypes.get(o) {
            Some(Datatype::Real) => {
                sets.numeric.insert(o.clone());
            }
            Some(Datatype::Boolean) => {
                let assured: BTreeSet<bool> = props[o.as_str()]
                    .descriptions(ExpressionGoal::Assurance)
                    .filter_map(|d| boolean_value(d.relation, d.value.as_ref()))
                    .collect();
                let Some(&value) = assured.iter().next() else { continue };
                if assured.len() > 1 {
                    continue;
                }
                let restated = c.input_ids().into_iter().find(|i| {
                    index.class_id(i) == index.class_id(o)
                        && props.get(i).is_some_and(|p| {
                            p.descriptions(ExpressionGoal::Requirement)
                                .any(|d| boolean_value(d.relation, d.value.as_ref()) == Some(value))
                        })
                });
                if let Some(input) = restated {
                    sets.unchanged.insert(o.clone(), input.to_string());
                } else if value {
                    sets.positive.insert(o.clone());
                } else {
                    sets.negative.insert(o.clone());
                }
            }
            None => {}
        }
    }
    sets
}

/// Capabilities allowed to change each class, by effect kind. With classes
/// collapsed, direct and synonymous capabilities are the same union.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassEffects {
    pub positive: BTreeMap<String, BTreeSet<String>>,
    pub negative: BTreeMap<String, BTreeSet<String>>,
    pub numeric: BTreeMap<String, BTreeSet<String>>,
}

impl ClassEffects {
    pub fn new(model: &CapabilityModel, index: &SynonymyIndex) -> Self {
        let mut out = ClassEffects::default();
        for c in model.provided() {
            let sets = effect_sets(c, index, model);
            let add = |target: &mut BTreeMap<String, BTreeSet<String>>, props: &BTreeSet<String>| {
                for p in props {
                    target
                        .entry(index.class_id(p).to_string())
                        .or_default()
                        .insert(c.id.clone());
                }
            };
            add(&mut out.positive, &sets.positive);
            add(&mut out.negative, &sets.negative);
            add(&mut out.numeric, &sets.numeric);
        }
        out
    }

    pub fn positive(&self, class: &str) -> impl Iterator<Item = &String> {
        self.positive.get(class).into_iter().flatten()
    }

    pub fn negative(&self, class: &str) -> impl Iterator<Item = &String> {
        self.negative.get(class).into_iter().flatten()
    }

    pub fn numeric(&self, class: &str) -> impl Iterator<Item = &String> {
        self.numeric.get(class).into_iter().flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CapabilityModel;

    const TRANSPORT: &str = include_str!("../fixtures/transport.json");

    /// Two capabilities handing a PartA product along; a resource shared by both.
    fn handover(second_type: &str) -> CapabilityModel {
        let doc = format!(
            r#"{{
            "typeDescriptions": [{{"id":"position","datatype":"real"}}],
            "products": [
                {{"id":"T_out","productTypeId":"PartA","properties":[{{"id":"ProductPositionAfter","typeDescription":"position",
                    "instanceDescriptions":[{{"expressionGoal":"assurance","value":"4"}}]}}]}},
                {{"id":"A_in","productTypeId":"{second_type}","properties":[{{"id":"ProductPosition","typeDescription":"position",
                    "instanceDescriptions":[{{"expressionGoal":"requirement","value":"4"}}]}}]}}
            ],
            "resources": [{{"id":"AGV","properties":[{{"id":"AGVPosition","typeDescription":"position"}}]}}],
            "capabilities": [
                {{"id":"Transport","kind":"provided","resource":"AGV",
                  "inputs":[{{"entity":"AGV","properties":["AGVPosition"]}}],
                  "outputs":[{{"entity":"T_out","properties":["ProductPositionAfter"]}}]}},
                {{"id":"Assemble","kind":"provided","resource":"AGV",
                  "inputs":[{{"entity":"A_in","properties":["ProductPosition"]}},{{"entity":"AGV","properties":["AGVPosition"]}}]}},
                {{"id":"Goal","kind":"required"}}
            ]}}"#
        );
        CapabilityModel::from_json_str(&doc).unwrap()
    }

    #[test]
    fn product_blocks() {
        let m = handover("PartA");
        assert_eq!(
            synonymous_products(&m),
            vec![BTreeSet::from(["A_in".to_string(), "T_out".to_string()])]
        );
        let m = handover("PartB");
        assert_eq!(synonymous_products(&m).len(), 2);
        let single = CapabilityModel::from_json_str(TRANSPORT).unwrap();
        assert!(synonymous_products(&single).iter().all(|b| !b.is_empty()));
    }

    #[test]
    fn same_type_products_share_a_property_class() {
        let idx = SynonymyIndex::new(&handover("PartA"));
        assert_eq!(idx.class_id("ProductPositionAfter"), idx.class_id("ProductPosition"));
        assert_eq!(idx.class_id("ProductPosition"), "ProductPosition");
        // AGVPosition is used by both capabilities and stays a singleton
        assert_eq!(idx.class("AGVPosition").unwrap().members.len(), 1);
        assert_eq!(
            idx.syn_caps["ProductPosition"],
            BTreeSet::from(["Transport".to_string()])
        );
        assert_eq!(
            idx.syn_caps["ProductPositionAfter"],
            BTreeSet::from(["Assemble".to_string()])
        );
        assert!(idx.syn_caps["AGVPosition"].is_empty());

        let idx = SynonymyIndex::new(&handover("PartB"));
        assert_ne!(idx.class_id("ProductPositionAfter"), idx.class_id("ProductPosition"));
    }

    #[test]
    fn transport_classes_and_effects() {
        let m = CapabilityModel::from_json_str(TRANSPORT).unwrap();
        let idx = SynonymyIndex::new(&m);
        let t = m.capability("Transport").unwrap();
        assert_eq!(idx.classes_of(t.io_ids()).len(), 4);
        let sets = effect_sets(t, &idx, &m);
        assert_eq!(sets.all, BTreeSet::from(["ProductPositionAfter".to_string()]));
        assert_eq!(sets.numeric, sets.all);
        assert!(sets.positive.is_empty() && sets.negative.is_empty());
    }

    fn gripper(extra_outputs: &str) -> CapabilityModel {
        let doc = format!(
            r#"{{
            "typeDescriptions": [{{"id":"clamped","datatype":"boolean"}}],
            "products": [
                {{"id":"in","productTypeId":"Part","properties":[{{"id":"clampedIn","typeDescription":"clamped",
                    "instanceDescriptions":[{{"expressionGoal":"requirement","value":true}}]}}]}},
                {{"id":"out","productTypeId":"Part","properties":[
                    {{"id":"clampedOut","typeDescription":"clamped","instanceDescriptions":[{{"expressionGoal":"assurance","value":true}}]}}]}},
                {{"id":"out2","productTypeId":"Other","properties":[
                    {{"id":"released","typeDescription":"clamped","instanceDescriptions":[{{"expressionGoal":"assurance","relation":"neq","value":true}}]}}]}}
            ],
            "capabilities": [
                {{"id":"Clamp","kind":"provided","outputs":[{{"entity":"out2","properties":["released"]}}{extra_outputs}]}},
                {{"id":"Hold","kind":"provided","inputs":[{{"entity":"in","properties":["clampedIn"]}}],
                  "outputs":[{{"entity":"out","properties":["clampedOut"]}}]}},
                {{"id":"Idle","kind":"provided"}},
                {{"id":"Goal","kind":"required"}}
            ]}}"#
        );
        CapabilityModel::from_json_str(&doc).unwrap()
    }

    #[test]
    fn boolean_effect_polarity() {
        let m = gripper(r#",{"entity":"out","properties":["clampedOut"]}"#);
        let idx = SynonymyIndex::new(&m);
        let clamp = effect_sets(m.capability("Clamp").unwrap(), &idx, &m);
        assert_eq!(clamp.positive, BTreeSet::from(["clampedOut".to_string()]));
        assert_eq!(clamp.negative, BTreeSet::from(["released".to_string()]));
        // Hold requires clamped and assures clamped: remain-the-same
        let hold = effect_sets(m.capability("Hold").unwrap(), &idx, &m);
        assert!(hold.positive.is_empty() && hold.negative.is_empty());
        assert_eq!(hold.all.len(), 1);
        assert_eq!(hold.unchanged["clampedOut"], "clampedIn");
        let idle = effect_sets(m.capability("Idle").unwrap(), &idx, &m);
        assert_eq!(idle, EffectSets::default());

        let effects = ClassEffects::new(&m, &idx);
        let class = idx.class_id("clampedOut");
        assert_eq!(effects.positive(class).collect::<Vec<_>>(), vec!["Clamp"]);
        assert_eq!(effects.negative(class).count(), 0);
    }

    #[test]
    fn three_capabilities_sharing_a_class() {
        // each capability outputs its own property of one shared class
        let mut doc = String::from(r#"{"typeDescriptions":[{"id":"pos","datatype":"real"}],"products":["#);
        let caps = ["C1", "C2", "C3"];
        for (i, c) in caps.iter().enumerate() {
            if i > 0 {
                doc.push(',');
            }
            doc.push_str(&format!(
                r#"{{"id":"p_{c}","productTypeId":"Part","properties":[{{"id":"pos_{c}","typeDescription":"pos"}}]}}"#
            ));
        }
        doc.push_str(r#"],"capabilities":["#);
        for c in caps {
            doc.push_str(&format!(
                r#"{{"id":"{c}","kind":"provided","outputs":[{{"entity":"p_{c}","properties":["pos_{c}"]}}]}},"#
            ));
        }
        doc.push_str(r#"{"id":"R","kind":"required"}]}"#);
        let m = CapabilityModel::from_json_str(&doc).unwrap();
        let idx = SynonymyIndex::new(&m);
        assert_eq!(idx.property_classes.len(), 1);
        for c in caps {
            let expected: BTreeSet<String> = caps.iter().filter(|o| **o != c).map(|o| o.to_string()).collect();
            assert_eq!(idx.syn_caps[&format!("pos_{c}")], expected);
        }
    }
}
