#![allow(dead_code)]

use std::path::PathBuf;
use std::process::Command;

use capplan::model::validate;
use capplan::planner::PlannerConfig;
use capplan::CapabilityModel;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value as Json};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> CapabilityModel {
    let text = std::fs::read_to_string(fixture_path(name)).unwrap();
    CapabilityModel::from_json_str(&text).unwrap()
}

pub const FIXTURES: [&str; 5] = [
    "transport.json",
    "transport_chained.json",
    "unreachable.json",
    "contradiction.json",
    "already_there.json",
];

pub fn solver_available() -> bool {
    Command::new("z3")
        .arg("-version")
        .output()
        .is_ok_and(|o| o.status.success())
}

pub fn config() -> PlannerConfig {
    PlannerConfig::default()
}

struct Prop {
    id: String,
    class: usize,
    real: bool,
}

/// Small random capability model. Without `arithmetic`, effects only copy
/// values or assign constants, so every reachable value is a model constant.
pub fn random_model(seed: u64, arithmetic: bool) -> CapabilityModel {
    let mut rng = StdRng::seed_from_u64(seed);
    loop {
        let doc = random_document(&mut rng, arithmetic);
        if let Ok(model) = CapabilityModel::from_json_str(&doc.to_string()) {
            if validate(&model).is_empty() {
                return model;
            }
        }
    }
}

fn add_desc(products: &mut [Json], resources: &mut [Json], id: &str, d: Json) {
    for e in products.iter_mut().chain(resources.iter_mut()) {
        for p in e["properties"].as_array_mut().unwrap() {
            if p["id"] == id {
                p["instanceDescriptions"].as_array_mut().unwrap().push(d);
                return;
            }
        }
    }
    unreachable!("no property {id}")
}

pub fn random_document(rng: &mut StdRng, arithmetic: bool) -> Json {
    let n_real = rng.gen_range(1..=4);
    let n_bool = rng.gen_range(0..=(6 - n_real).min(2));
    let n_classes = n_real + n_bool;
    let mut products = Vec::new();
    let mut resources = Vec::new();
    let mut props: Vec<Prop> = Vec::new();
    let mut product_classes = Vec::new();
    // constants reused across descriptions so that effects can enable preconditions
    let mut pool: Vec<i64> = Vec::new();
    let mut initial: Vec<Option<i64>> = vec![None; 6];
    let mut initial_flag: Vec<Option<bool>> = vec![None; 6];
    let mut resource_class = [false; 6];

    for class in 0..n_classes {
        let real = class < n_real;
        let td = if real { "length" } else { "flag" };
        let as_resource = real && rng.gen_bool(0.25);
        let members = if as_resource { 1 } else { rng.gen_range(1..=2) };
        let with_actual = rng.gen_bool(0.9);
        for j in 0..members {
            let id = format!("p{class}_{j}");
            let mut descs = Vec::new();
            if j == 0 && with_actual {
                let value = if real {
                    let v = rng.gen_range(0..=4);
                    pool.push(v);
                    initial[class] = Some(v);
                    json!(v.to_string())
                } else {
                    let b = rng.gen_bool(0.5);
                    initial_flag[class] = Some(b);
                    json!(b)
                };
                descs.push(json!({"expressionGoal": "actualValue", "value": value}));
            }
            let prop = json!({"id": id, "typeDescription": td, "instanceDescriptions": descs});
            if as_resource {
                resources.push(json!({"id": format!("r{class}"), "properties": [prop]}));
            } else {
                products.push(json!({
                    "id": format!("e{class}_{j}"),
                    "productTypeId": format!("K{class}"),
                    "properties": [prop],
                }));
            }
            props.push(Prop { id, class, real });
        }
        resource_class[class] = as_resource;
        if !as_resource {
            product_classes.push(class);
        }
    }

    if product_classes.is_empty() {
        product_classes.push(0);
    }
    let n_goals = rng.gen_range(1..=2.min(product_classes.len()));
    let mut goal_classes = product_classes.clone();
    goal_classes.shuffle(rng);
    goal_classes.truncate(n_goals);
    let goal_values: Vec<i64> = goal_classes
        .iter()
        .map(|&c| loop {
            if let Some(b) = initial_flag[c] {
                if rng.gen_bool(0.85) {
                    break if b { 1 } else { 0 };
                }
            }
            let v = rng.gen_range(0..=5);
            if initial[c] != Some(v) || rng.gen_bool(0.15) {
                break v;
            }
        })
        .collect();
    pool.extend(&goal_values);

    let pick = |rng: &mut StdRng, pool: &[i64], max: i64| -> i64 {
        if !pool.is_empty() && rng.gen_bool(0.6) {
            *pool.choose(rng).unwrap()
        } else {
            rng.gen_range(0..=max)
        }
    };

    let resource_classes: Vec<String> = resources
        .iter()
        .map(|r| r["id"].as_str().unwrap().to_string())
        .collect();
    let entity_of = |p: &str| -> String {
        let (class, j) = p[1..].split_once('_').unwrap();
        if resource_classes.contains(&format!("r{class}")) {
            format!("r{class}")
        } else {
            format!("e{class}_{j}")
        }
    };
    let io = |ids: &[&Prop]| -> Json {
        Json::Array(
            ids.iter()
                .map(|p| json!({"entity": entity_of(&p.id), "properties": [p.id]}))
                .collect(),
        )
    };

    let mut capabilities = Vec::new();
    let mut constrained = std::collections::BTreeSet::new();
    let n_caps = rng.gen_range(goal_classes.len()..=3);
    for k in 0..n_caps {
        let mut order: Vec<usize> = (0..props.len()).collect();
        order.shuffle(rng);
        let mut target = None;
        if k < goal_classes.len() || rng.gen_bool(0.5) {
            // write to a goal class
            let g = if k < goal_classes.len() {
                k
            } else {
                rng.gen_range(0..goal_classes.len())
            };
            let class = goal_classes[g];
            let pos = order.iter().position(|&i| props[i].class == class).unwrap();
            let chosen = order.remove(pos);
            order.push(chosen);
            if rng.gen_bool(0.7) {
                target = Some((props[chosen].id.clone(), goal_values[g]));
            }
        }
        let n_out = rng.gen_range(1..=2.min(props.len()));
        let split = order.len() - n_out;
        let outputs: Vec<&Prop> = order[split..].iter().map(|&i| &props[i]).collect();
        let candidates = &order[..split];
        let inputs: Vec<&Prop> = if candidates.is_empty() {
            Vec::new()
        } else {
            let n_in = rng.gen_range(1..=2.min(candidates.len()));
            candidates[..n_in].iter().map(|&i| &props[i]).collect()
        };
        let mut constraints = Vec::new();
        for input in &inputs {
            if rng.gen_bool(0.5) && constrained.insert(input.id.clone()) {
                let d = if input.real {
                    let relation = ["eq", "eq", "eq", "geq", "leq", "lt", "gt"].choose(rng).unwrap();
                    json!({"expressionGoal": "requirement", "relation": relation, "value": pick(rng, &pool, 4).to_string()})
                } else {
                    json!({"expressionGoal": "requirement", "value": rng.gen_bool(0.5)})
                };
                add_desc(&mut products, &mut resources, &input.id, d);
            }
        }
        let real_inputs: Vec<&&Prop> = inputs.iter().filter(|p| p.real).collect();
        if real_inputs.len() == 2 && rng.gen_bool(0.3) {
            let op = ["eq", "lt", "leq"].choose(rng).unwrap();
            constraints.push(json!({"apply": op, "args": [{"ref": real_inputs[0].id}, {"ref": real_inputs[1].id}]}));
        }
        for out in &outputs {
            if let Some((_, v)) = target.as_ref().filter(|(id, _)| *id == out.id) {
                if constrained.insert(out.id.clone()) {
                    let value = if out.real {
                        json!(v.to_string())
                    } else {
                        json!(v % 2 == 0)
                    };
                    add_desc(
                        &mut products,
                        &mut resources,
                        &out.id,
                        json!({"expressionGoal": "assurance", "value": value}),
                    );
                    continue;
                }
            }
            if out.real {
                match rng.gen_range(0..10) {
                    0..=5 if !real_inputs.is_empty() => {
                        let src = real_inputs.choose(rng).unwrap();
                        let rhs = if arithmetic && rng.gen_bool(0.5) {
                            let op = ["plus", "minus"].choose(rng).unwrap();
                            json!({"apply": op, "args": [{"ref": src.id}, {"const": rng.gen_range(1..=2).to_string()}]})
                        } else {
                            json!({"ref": src.id})
                        };
                        constraints.push(json!({"apply": "eq", "args": [{"ref": out.id}, rhs]}));
                    }
                    6 if arithmetic => {
                        constraints.push(json!({"apply": "geq", "args": [{"ref": out.id}, {"const": "1"}]}));
                    }
                    _ => {
                        let v = pick(rng, &pool, 5);
                        pool.push(v);
                        let d = json!({"expressionGoal": "assurance", "value": v.to_string()});
                        add_desc(&mut products, &mut resources, &out.id, d);
                    }
                }
            } else {
                let d = json!({"expressionGoal": "assurance", "value": rng.gen_bool(0.5)});
                add_desc(&mut products, &mut resources, &out.id, d);
            }
        }
        capabilities.push(json!({
            "id": format!("c{k}"),
            "kind": "provided",
            "inputs": io(&inputs),
            "outputs": io(&outputs),
            "constraints": constraints,
        }));
    }

    // make the first capability depend on a value only another capability provides
    if n_caps >= 2 && rng.gen_bool(0.5) {
        let first_input = capabilities[0]["inputs"]
            .as_array()
            .and_then(|a| a.first())
            .map(|io| io["properties"][0].as_str().unwrap().to_string());
        if let Some(q) = first_input {
            let prop = props.iter().find(|p| p.id == q).unwrap();
            if prop.real && !resource_class[prop.class] && !goal_classes.contains(&prop.class) {
                let class = prop.class;
                let v = loop {
                    let v = rng.gen_range(0..=5);
                    if initial[class] != Some(v) {
                        break v;
                    }
                };
                add_desc(
                    &mut products,
                    &mut resources,
                    &q,
                    json!({"expressionGoal": "requirement", "value": v.to_string()}),
                );
                let id = format!("h{class}");
                products.push(json!({
                    "id": format!("hop{class}"),
                    "productTypeId": format!("K{class}"),
                    "properties": [{"id": id, "typeDescription": "length", "instanceDescriptions": [
                        {"expressionGoal": "assurance", "value": v.to_string()}
                    ]}],
                }));
                let enabler = rng.gen_range(1..n_caps);
                capabilities[enabler]["outputs"]
                    .as_array_mut()
                    .unwrap()
                    .push(json!({"entity": format!("hop{class}"), "properties": [id]}));
            }
        }
    }

    // goals live on fresh members of the goal classes
    let mut goal_outputs = Vec::new();
    for (&class, &value) in goal_classes.iter().zip(&goal_values) {
        let real = class < n_real;
        let id = format!("g{class}");
        let d = if real {
            let relation = match initial[class] {
                Some(init) if value > init && rng.gen_bool(0.3) => "geq",
                Some(init) if value < init && rng.gen_bool(0.3) => "leq",
                _ => "eq",
            };
            json!({"expressionGoal": "requirement", "relation": relation, "value": value.to_string()})
        } else {
            json!({"expressionGoal": "requirement", "value": value % 2 == 0})
        };
        products.push(json!({
            "id": format!("want{class}"),
            "productTypeId": format!("K{class}"),
            "properties": [{"id": id, "typeDescription": if real { "length" } else { "flag" }, "instanceDescriptions": [d]}],
        }));
        goal_outputs.push(json!({"entity": format!("want{class}"), "properties": [id]}));
    }
    let mut required = json!({"id": "goal", "kind": "required", "outputs": goal_outputs});
    if rng.gen_bool(0.15) {
        let class = *product_classes.choose(rng).unwrap();
        let real = class < n_real;
        let id = format!("s{class}");
        let d = if real {
            let v = match initial[class] {
                Some(v) if rng.gen_bool(0.8) => v,
                _ => pick(rng, &pool, 4),
            };
            json!({"expressionGoal": "requirement", "value": v.to_string()})
        } else {
            json!({"expressionGoal": "requirement", "value": rng.gen_bool(0.5)})
        };
        products.push(json!({
            "id": format!("start{class}"),
            "productTypeId": format!("K{class}"),
            "properties": [{"id": id, "typeDescription": if real { "length" } else { "flag" }, "instanceDescriptions": [d]}],
        }));
        required["inputs"] = json!([{"entity": format!("start{class}"), "properties": [id]}]);
    }
    capabilities.push(required);

    json!({
        "typeDescriptions": [
            {"id": "length", "datatype": "real"},
            {"id": "flag", "datatype": "boolean"}
        ],
        "products": products,
        "resources": resources,
        "capabilities": capabilities,
    })
}

/// Seeds of the randomized suite; every fourth model uses arithmetic effects.
pub fn suite() -> Vec<(u64, CapabilityModel)> {
    (0..160u64)
        .map(|seed| (seed, random_model(seed, seed % 4 == 3)))
        .collect()
}

pub fn is_arithmetic_free(seed: u64) -> bool {
    seed % 4 != 3
}
