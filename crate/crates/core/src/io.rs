//! JSON formats for models, queries, strategies and verdicts.
//!
//! Rationals are written as strings (`"9/10"`, `"5"`); on input plain
//! integers and decimal strings such as `"0.05"` are accepted too, JSON
//! floats are not. Object keys come out sorted, so serialization is
//! canonical.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::model::{
    validate_mdp, Certificate, DimQuery, Mdp, MdpBuilder, Objective, PayoffLaw, Query,
    StrategySpec, UpdateKey, ValidationReport, Verdict,
};
use crate::{format_rational, parse_rational, Rational};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Format(String),
    #[error("invalid model:\n{0}")]
    Invalid(ValidationReport),
}

fn err<T>(msg: impl Into<String>) -> Result<T, IoError> {
    Err(IoError::Format(msg.into()))
}

fn rational(v: &Value, what: &str) -> Result<Rational, IoError> {
    match v {
        Value::String(s) => parse_rational(s)
            .ok_or_else(|| IoError::Format(format!("{what}: cannot read {s:?} as a rational"))),
        Value::Number(n) if n.is_i64() => Ok(Rational::from_integer(n.as_i64().unwrap().into())),
        Value::Number(n) => err(format!(
            "{what}: float {n} not allowed, write it as a string such as \"1/20\" or \"0.05\""
        )),
        _ => err(format!("{what}: expected a rational")),
    }
}

fn rat_value(r: &Rational) -> Value {
    Value::String(format_rational(r))
}

fn field<'a>(obj: &'a Value, key: &str, what: &str) -> Result<&'a Value, IoError> {
    obj.get(key)
        .ok_or_else(|| IoError::Format(format!("{what}: missing field {key:?}")))
}

fn string<'a>(v: &'a Value, what: &str) -> Result<&'a str, IoError> {
    v.as_str()
        .ok_or_else(|| IoError::Format(format!("{what}: expected a string")))
}

fn array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>, IoError> {
    v.as_array()
        .ok_or_else(|| IoError::Format(format!("{what}: expected an array")))
}

fn object<'a>(v: &'a Value, what: &str) -> Result<&'a Map<String, Value>, IoError> {
    v.as_object()
        .ok_or_else(|| IoError::Format(format!("{what}: expected an object")))
}

fn lookup(index: &BTreeMap<String, usize>, name: &str, what: &str) -> Result<usize, IoError> {
    index
        .get(name)
        .copied()
        .ok_or_else(|| IoError::Format(format!("{what}: unknown name {name:?}")))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

/// Reads and validates a model.
pub fn model_from_value(v: &Value) -> Result<Mdp, IoError> {
    let mut b = MdpBuilder::new();
    let mut states = BTreeMap::new();
    for (i, s) in array(field(v, "states", "model")?, "states")?
        .iter()
        .enumerate()
    {
        let what = format!("state #{i}");
        let name = string(field(s, "name", &what)?, &what)?;
        let rewards = array(field(s, "rewards", &what)?, &what)?
            .iter()
            .map(|r| rational(r, &format!("rewards of {name}")))
            .collect::<Result<Vec<_>, _>>()?;
        let target = match s.get("target") {
            None => false,
            Some(t) => t
                .as_bool()
                .ok_or_else(|| IoError::Format(format!("{what}: target must be a boolean")))?,
        };
        let idx = b.state(name, rewards, target);
        states.entry(name.to_string()).or_insert(idx);
    }
    for (i, a) in array(field(v, "actions", "model")?, "actions")?
        .iter()
        .enumerate()
    {
        let what = format!("action #{i}");
        let name = string(field(a, "name", &what)?, &what)?;
        let from = lookup(&states, string(field(a, "from", &what)?, &what)?, &what)?;
        let transitions = object(field(a, "transitions", &what)?, &what)?
            .iter()
            .map(|(t, p)| {
                Ok((
                    lookup(&states, t, &what)?,
                    rational(p, &format!("action {name}"))?,
                ))
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        b.action(from, name, transitions);
    }
    let initial = lookup(
        &states,
        string(field(v, "initial", "model")?, "initial")?,
        "initial",
    )?;
    let mdp = b.build(initial);
    let report = validate_mdp(&mdp);
    if !report.is_ok() {
        return Err(IoError::Invalid(report));
    }
    Ok(mdp)
}

pub fn model_from_json(text: &str) -> Result<Mdp, IoError> {
    model_from_value(&serde_json::from_str(text)?)
}

pub fn model_to_value(mdp: &Mdp) -> Value {
    let states: Vec<Value> = (0..mdp.num_states())
        .map(|s| {
            json!({
                "name": mdp.state_name(s),
                "rewards": mdp.reward(s).iter().map(rat_value).collect::<Vec<_>>(),
                "target": mdp.is_target(s),
            })
        })
        .collect();
    let actions: Vec<Value> = mdp
        .actions()
        .iter()
        .map(|a| {
            let transitions: Map<String, Value> = a
                .transitions
                .iter()
                .map(|(t, p)| (mdp.state_name(*t).to_string(), rat_value(p)))
                .collect();
            json!({ "name": a.name, "from": mdp.state_name(a.state), "transitions": transitions })
        })
        .collect();
    json!({ "states": states, "actions": actions, "initial": mdp.state_name(mdp.initial()) })
}

pub fn model_to_json(mdp: &Mdp) -> String {
    pretty(&model_to_value(mdp))
}

fn objective_from(v: &Value) -> Result<Objective, IoError> {
    match string(v, "objective")? {
        "reach" => Ok(Objective::Reach),
        "mean" => Ok(Objective::Mean),
        o => err(format!(
            "unknown objective {o:?} (expected \"reach\" or \"mean\")"
        )),
    }
}

pub fn objective_name(o: Objective) -> &'static str {
    match o {
        Objective::Reach => "reach",
        Objective::Mean => "mean",
    }
}

/// Reads a query over `dim` reward dimensions. Several entries may
/// constrain the same dimension as long as no bound is given twice.
pub fn query_from_value(v: &Value, dim: usize) -> Result<Query, IoError> {
    let objective = objective_from(field(v, "objective", "query")?)?;
    let mut dims = vec![DimQuery::default(); dim];
    for (i, c) in array(field(v, "constraints", "query")?, "constraints")?
        .iter()
        .enumerate()
    {
        let what = format!("constraint #{i}");
        let j = match c.get("dim") {
            None => 0,
            Some(d) => d
                .as_u64()
                .ok_or_else(|| IoError::Format(format!("{what}: dim must be a natural number")))?
                as usize,
        };
        if j >= dim {
            return err(format!("{what}: dimension {j} but the model has {dim}"));
        }
        let d = &mut dims[j];
        let twice =
            |k: &str| IoError::Format(format!("{what}: {k} bound on dimension {j} given twice"));
        if let Some(e) = c.get("e") {
            if d.e.replace(rational(e, &what)?).is_some() {
                return Err(twice("e"));
            }
        }
        if let Some(cv) = c.get("cvar") {
            let pc = (
                rational(field(cv, "p", &what)?, &what)?,
                rational(field(cv, "c", &what)?, &what)?,
            );
            if d.cvar.replace(pc).is_some() {
                return Err(twice("cvar"));
            }
        }
        if let Some(vv) = c.get("var") {
            let qv = (
                rational(field(vv, "q", &what)?, &what)?,
                rational(field(vv, "v", &what)?, &what)?,
            );
            if d.var.replace(qv).is_some() {
                return Err(twice("var"));
            }
        }
    }
    Ok(Query::new(objective, dims))
}

pub fn query_from_json(text: &str, dim: usize) -> Result<Query, IoError> {
    query_from_value(&serde_json::from_str(text)?, dim)
}

pub fn query_to_value(q: &Query) -> Value {
    let mut constraints = Vec::new();
    for (j, d) in q.dims.iter().enumerate() {
        if d.is_empty() {
            continue;
        }
        let mut c = Map::new();
        c.insert("dim".into(), json!(j));
        if let Some(e) = &d.e {
            c.insert("e".into(), rat_value(e));
        }
        if let Some((p, cc)) = &d.cvar {
            c.insert(
                "cvar".into(),
                json!({ "p": rat_value(p), "c": rat_value(cc) }),
            );
        }
        if let Some((qq, v)) = &d.var {
            c.insert(
                "var".into(),
                json!({ "q": rat_value(qq), "v": rat_value(v) }),
            );
        }
        constraints.push(Value::Object(c));
    }
    json!({ "objective": objective_name(q.objective), "constraints": constraints })
}

pub fn query_to_json(q: &Query) -> String {
    pretty(&query_to_value(q))
}

/// A model and optionally its query in one document: `{model, query}`.
pub fn instance_from_json(text: &str) -> Result<(Mdp, Option<Query>), IoError> {
    let v: Value = serde_json::from_str(text)?;
    let mdp = model_from_value(field(&v, "model", "instance")?)?;
    let query = v
        .get("query")
        .map(|q| query_from_value(q, mdp.dim()))
        .transpose()?;
    Ok((mdp, query))
}

pub fn instance_to_json(mdp: &Mdp, query: &Query) -> String {
    pretty(&json!({ "model": model_to_value(mdp), "query": query_to_value(query) }))
}

fn dist_value(d: &[(usize, Rational)], name: impl Fn(usize) -> String) -> Value {
    Value::Object(d.iter().map(|(i, p)| (name(*i), rat_value(p))).collect())
}

fn dist_from(
    v: &Value,
    index: &BTreeMap<String, usize>,
    what: &str,
) -> Result<Vec<(usize, Rational)>, IoError> {
    object(v, what)?
        .iter()
        .map(|(k, p)| Ok((lookup(index, k, what)?, rational(p, what)?)))
        .collect::<Result<Vec<_>, IoError>>()
        .map(crate::model::normalize_dist)
}

/// Strategy with states, actions and memory elements referred to by name.
pub fn strategy_to_value(mdp: &Mdp, s: &StrategySpec) -> Value {
    let mem = |m: usize| s.memory[m].clone();
    let act = |a: usize| mdp.action(a).name.clone();
    let next_move: Vec<Value> = s
        .next_move
        .iter()
        .map(|((st, m), d)| json!({ "state": mdp.state_name(*st), "memory": mem(*m), "move": dist_value(d, act) }))
        .collect();
    let update: Vec<Value> = s
        .update
        .iter()
        .map(|(k, d)| {
            json!({
                "action": k.action.map(act),
                "state": mdp.state_name(k.state),
                "memory": mem(k.memory),
                "next": dist_value(d, mem),
            })
        })
        .collect();
    json!({ "memory": s.memory, "initial": dist_value(&s.initial, mem), "next_move": next_move, "update": update })
}

pub fn strategy_to_json(mdp: &Mdp, s: &StrategySpec) -> String {
    pretty(&strategy_to_value(mdp, s))
}

pub fn strategy_from_value(mdp: &Mdp, v: &Value) -> Result<StrategySpec, IoError> {
    let memory: Vec<String> = array(field(v, "memory", "strategy")?, "memory")?
        .iter()
        .map(|m| string(m, "memory").map(str::to_string))
        .collect::<Result<_, _>>()?;
    let mem_index: BTreeMap<String, usize> = memory
        .iter()
        .enumerate()
        .map(|(i, m)| (m.clone(), i))
        .collect();
    if mem_index.len() != memory.len() {
        return err("strategy: memory names must be distinct");
    }
    let states: BTreeMap<String, usize> = (0..mdp.num_states())
        .map(|s| (mdp.state_name(s).to_string(), s))
        .collect();
    let actions: BTreeMap<String, usize> = mdp
        .actions()
        .iter()
        .enumerate()
        .map(|(i, a)| (a.name.clone(), i))
        .collect();
    let initial = dist_from(
        field(v, "initial", "strategy")?,
        &mem_index,
        "initial memory",
    )?;
    let mut next_move = BTreeMap::new();
    for (i, e) in array(field(v, "next_move", "strategy")?, "next_move")?
        .iter()
        .enumerate()
    {
        let what = format!("next_move #{i}");
        let s = lookup(&states, string(field(e, "state", &what)?, &what)?, &what)?;
        let m = lookup(
            &mem_index,
            string(field(e, "memory", &what)?, &what)?,
            &what,
        )?;
        next_move.insert(
            (s, m),
            dist_from(field(e, "move", &what)?, &actions, &what)?,
        );
    }
    let mut update = BTreeMap::new();
    if let Some(u) = v.get("update") {
        for (i, e) in array(u, "update")?.iter().enumerate() {
            let what = format!("update #{i}");
            let action = match e.get("action") {
                None | Some(Value::Null) => None,
                Some(a) => Some(lookup(&actions, string(a, &what)?, &what)?),
            };
            let state = lookup(&states, string(field(e, "state", &what)?, &what)?, &what)?;
            let memory = lookup(
                &mem_index,
                string(field(e, "memory", &what)?, &what)?,
                &what,
            )?;
            update.insert(
                UpdateKey {
                    action,
                    state,
                    memory,
                },
                dist_from(field(e, "next", &what)?, &mem_index, &what)?,
            );
        }
    }
    Ok(StrategySpec {
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        memory,
        initial,
        next_move,
        update,
    })
}

pub fn strategy_from_json(mdp: &Mdp, text: &str) -> Result<StrategySpec, IoError> {
    strategy_from_value(mdp, &serde_json::from_str(text)?)
}

/// Per dimension, payoff value -> probability.
pub fn law_to_value(law: &PayoffLaw) -> Value {
    Value::Array(
        law.marginals
            .iter()
            .map(|d| {
                Value::Object(
                    d.atoms()
                        .iter()
                        .map(|(v, p)| (format_rational(v), rat_value(p)))
                        .collect(),
                )
            })
            .collect(),
    )
}

pub fn certificate_to_value(c: &Certificate) -> Value {
    let named = |xs: &[(String, Rational)]| {
        Value::Object(xs.iter().map(|(k, v)| (k.clone(), rat_value(v))).collect())
    };
    json!({ "procedure": c.procedure, "guess": named(&c.guess), "lp": named(&c.lp_values) })
}

pub fn verdict_to_value(mdp: &Mdp, v: &Verdict) -> Value {
    json!({
        "status": v.status.to_string(),
        "witness": v.witness.as_ref().map(|s| strategy_to_value(mdp, s)),
        "certificate": v.certificate.as_ref().map(certificate_to_value),
        "law": v.law.as_ref().map(law_to_value),
    })
}

pub fn to_pretty(v: &Value) -> String {
    pretty(v)
}
