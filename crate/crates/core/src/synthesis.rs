//! Witness strategies built from LP solutions, and exact evaluation of any
//! finite-memory strategy.

use std::collections::{BTreeMap, BTreeSet};

use num::{One, Signed, Zero};
use thiserror::Error;

use crate::graph::{attractor, scc_of_graph, Mec, MecDecomposition, QuotientMap};
use crate::mc;
use crate::model::{
    induced_chain, normalize_dist, Dist, Mdp, Objective, PayoffLaw, Query, StrategyError,
    StrategySpec, UpdateKey,
};
use crate::risk::{cvar, expectation, var, Quantile};
use crate::Rational;

#[derive(Debug, Error, PartialEq)]
pub enum SynthesisError {
    #[error("frequencies are not balanced at state {0}")]
    Unbalanced(String),
    #[error("frequency on action {0} which is not inside the end component")]
    Foreign(String),
    #[error("no positive frequency")]
    Empty,
    #[error(
        "switch mass at state {0} outside any end component or without a plan to remain there"
    )]
    Switch(String),
    #[error("expected exactly one constraint, found {0}")]
    ConstraintCount(usize),
    #[error("strategy is not memoryless")]
    NotMemoryless,
    #[error("{0} deterministic candidates exceed the enumeration limit")]
    TooLarge(u128),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

/// Flow variables of a solved LP: `y` per action, `x` per state and, for
/// mean payoff, recurrent frequencies per action.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowSolution {
    pub y: Vec<Rational>,
    pub x: Vec<Rational>,
    pub x_a: Option<Vec<Rational>>,
}

/// Exact payoff law of `strategy` on `mdp`.
pub fn evaluate(
    mdp: &Mdp,
    strategy: &StrategySpec,
    objective: Objective,
) -> Result<PayoffLaw, StrategyError> {
    strategy.validate(mdp)?;
    let ic = induced_chain(mdp, strategy)?;
    Ok(mc::payoff_law(&ic.chain, objective))
}

fn least_named(mdp: &Mdp, actions: impl IntoIterator<Item = usize>) -> Option<usize> {
    actions
        .into_iter()
        .min_by(|&a, &b| mdp.action(a).name.cmp(&mdp.action(b).name))
}

fn dirac(a: usize) -> Dist {
    vec![(a, Rational::one())]
}

/// Normalizes non-negative weights; `None` when they are all zero.
fn proportional(weights: impl IntoIterator<Item = (usize, Rational)>) -> Option<Dist> {
    let d = normalize_dist(weights.into_iter().filter(|(_, w)| w.is_positive()));
    let total: Rational = d.iter().map(|(_, w)| w).sum();
    if total.is_zero() {
        return None;
    }
    Some(d.into_iter().map(|(a, w)| (a, w / &total)).collect())
}

/// Memoryless strategy playing each action proportionally to its flow
/// `y_a`. States without outflow are never reached and get their least
/// named action.
pub fn strategy_from_reach_flow(mdp: &Mdp, flow: &FlowSolution) -> StrategySpec {
    let moves = (0..mdp.num_states())
        .map(|s| {
            proportional(mdp.available(s).iter().map(|&a| (a, flow.y[a].clone()))).unwrap_or_else(
                || dirac(least_named(mdp, mdp.available(s).iter().copied()).unwrap()),
            )
        })
        .collect();
    StrategySpec::memoryless(mdp, moves)
}

/// One recurrent class of a remain plan: its probability weight, a move
/// for every state of the end component (attractor moves outside the
/// class) and the mean payoff attained inside it.
#[derive(Clone, Debug, PartialEq)]
pub struct RemainClass {
    /// States where the class itself is played.
    pub states: BTreeSet<usize>,
    pub weight: Rational,
    pub moves: BTreeMap<usize, Dist>,
    pub value: Vec<Rational>,
}

/// How to stay in one end component forever.
#[derive(Clone, Debug, PartialEq)]
pub struct RemainPlan {
    pub classes: Vec<RemainClass>,
}

impl RemainPlan {
    /// Stays by playing the least named internal action everywhere; the
    /// attained value is not tracked.
    pub fn stay(mdp: &Mdp, mec: &Mec) -> Self {
        let moves = mec
            .states
            .iter()
            .map(|&s| {
                let a = least_named(
                    mdp,
                    mdp.available(s)
                        .iter()
                        .copied()
                        .filter(|a| mec.actions.binary_search(a).is_ok()),
                );
                (
                    s,
                    dirac(a.expect("every state of an end component has an internal action")),
                )
            })
            .collect();
        let states = mec.states.iter().copied().collect();
        RemainPlan {
            classes: vec![RemainClass {
                states,
                weight: Rational::one(),
                moves,
                value: Vec::new(),
            }],
        }
    }

    pub fn is_single(&self) -> bool {
        self.classes.len() == 1
    }
}

/// Strategy inside `mec` realizing the action frequencies `x_a`.
///
/// The support of balanced frequencies splits into closed recurrent
/// classes. Each class is played by randomizing proportionally to `x_a`,
/// which makes the normalized frequencies its stationary law, so every run
/// settling in a class attains the class value. States outside a class
/// move towards it. With one class the plan is memoryless and
/// MEC-constant; with several, a class is drawn on entry and the plan is
/// MEC-constant only if the class values agree.
pub fn mec_constant_strategy(
    mdp: &Mdp,
    mec: &Mec,
    x_a: &[(usize, Rational)],
) -> Result<RemainPlan, SynthesisError> {
    let inside: BTreeSet<usize> = mec.states.iter().copied().collect();
    let allowed: BTreeSet<usize> = mec.actions.iter().copied().collect();
    let mut freq: BTreeMap<usize, Rational> = BTreeMap::new();
    for (a, w) in x_a {
        if w.is_zero() {
            continue;
        }
        if !allowed.contains(a) {
            return Err(SynthesisError::Foreign(mdp.action(*a).name.clone()));
        }
        *freq.entry(*a).or_insert_with(Rational::zero) += w;
    }
    if freq.is_empty() {
        return Err(SynthesisError::Empty);
    }
    let mut out_flow: BTreeMap<usize, Rational> = BTreeMap::new();
    let mut in_flow: BTreeMap<usize, Rational> = BTreeMap::new();
    for (a, w) in &freq {
        let act = mdp.action(*a);
        *out_flow.entry(act.state).or_insert_with(Rational::zero) += w;
        for (t, p) in &act.transitions {
            *in_flow.entry(*t).or_insert_with(Rational::zero) += w * p;
        }
    }
    for &s in &mec.states {
        if out_flow.get(&s) != in_flow.get(&s) {
            return Err(SynthesisError::Unbalanced(mdp.state_name(s).to_string()));
        }
    }
    let support: Vec<usize> = out_flow.keys().copied().collect();
    let local: BTreeMap<usize, usize> = support.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut succ = vec![Vec::new(); support.len()];
    for (a, _) in &freq {
        let act = mdp.action(*a);
        for (t, p) in &act.transitions {
            if p.is_positive() {
                succ[local[&act.state]].push(local[t]);
            }
        }
    }
    let mut comps = scc_of_graph(&succ);
    comps.sort_by_key(|c| c[0]);
    let mut classes = Vec::new();
    for comp in comps {
        let states: BTreeSet<usize> = comp.iter().map(|&i| support[i]).collect();
        let weight: Rational = states.iter().map(|s| &out_flow[s]).sum();
        let value = (0..mdp.dim())
            .map(|j| {
                states
                    .iter()
                    .map(|s| &out_flow[s] * &mdp.reward(*s)[j])
                    .sum::<Rational>()
                    / &weight
            })
            .collect();
        let toward = attractor(mdp, &inside, &allowed, &states);
        let mut moves = BTreeMap::new();
        for &s in &mec.states {
            let mv = if states.contains(&s) {
                proportional(
                    freq.iter()
                        .filter(|(a, _)| mdp.action(**a).state == s)
                        .map(|(a, w)| (*a, w.clone())),
                )
                .expect("support state has outflow")
            } else {
                dirac(toward[s].expect("end component is strongly connected"))
            };
            moves.insert(s, mv);
        }
        classes.push(RemainClass {
            states,
            weight,
            moves,
            value,
        });
    }
    Ok(RemainPlan { classes })
}

/// Like [`mec_constant_strategy`] but plays the whole support as one
/// class, for frequencies whose classes all attain the same value (such as
/// an optimal solution of the gain LP).
pub fn merged_remain_plan(
    mdp: &Mdp,
    mec: &Mec,
    x_a: &[(usize, Rational)],
) -> Result<RemainPlan, SynthesisError> {
    let plan = mec_constant_strategy(mdp, mec, x_a)?;
    if plan.is_single() {
        return Ok(plan);
    }
    let inside: BTreeSet<usize> = mec.states.iter().copied().collect();
    let allowed: BTreeSet<usize> = mec.actions.iter().copied().collect();
    let states: BTreeSet<usize> = plan
        .classes
        .iter()
        .flat_map(|c| c.states.iter().copied())
        .collect();
    let weight: Rational = plan.classes.iter().map(|c| &c.weight).sum();
    let value = (0..mdp.dim())
        .map(|j| {
            plan.classes
                .iter()
                .map(|c| &c.weight * &c.value[j])
                .sum::<Rational>()
                / &weight
        })
        .collect();
    let toward = attractor(mdp, &inside, &allowed, &states);
    let moves = mec
        .states
        .iter()
        .map(|&s| {
            let mv = match plan.classes.iter().find(|c| c.states.contains(&s)) {
                Some(c) => c.moves[&s].clone(),
                None => dirac(toward[s].expect("end component is strongly connected")),
            };
            (s, mv)
        })
        .collect();
    Ok(RemainPlan {
        classes: vec![RemainClass {
            states,
            weight,
            moves,
            value,
        }],
    })
}

/// Memoryless strategy on the whole MDP playing `plan`'s first class
/// inside `mec` (least named action elsewhere). Used to inspect a plan in
/// isolation.
pub fn remain_strategy(mdp: &Mdp, plan: &RemainPlan) -> StrategySpec {
    let class = &plan.classes[0];
    let moves = (0..mdp.num_states())
        .map(|s| {
            class.moves.get(&s).cloned().unwrap_or_else(|| {
                dirac(least_named(mdp, mdp.available(s).iter().copied()).unwrap())
            })
        })
        .collect();
    StrategySpec::memoryless(mdp, moves)
}

struct Labels {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Labels {
    fn new() -> Self {
        let mut l = Labels {
            names: Vec::new(),
            index: BTreeMap::new(),
        };
        l.get("search");
        l
    }

    fn get(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }
}

const SEARCH: usize = 0;

fn remain_label(labels: &mut Labels, multi: bool, k: usize) -> usize {
    if multi {
        labels.get(&format!("remain:{k}"))
    } else {
        labels.get("remain")
    }
}

/// Two-memory strategy from transient flows `y` (per action), switch masses
/// per state and a remain plan per MEC.
///
/// In memory `search` actions are played proportionally to `y`; on every
/// visit to `s` the memory switches to `remain` with probability
/// `switch_s / (switch_s + Σ_{a ∈ Av(s)} y_a)`, after which the remain plan
/// of the MEC of `s` is followed forever. The probability of remaining in
/// MEC `i` equals its total switch mass.
pub fn two_memory_strategy(
    mdp: &Mdp,
    y: &[Rational],
    switch: &[Rational],
    mecs: &MecDecomposition,
    remain: &[Option<RemainPlan>],
) -> Result<StrategySpec, SynthesisError> {
    let multi = remain.iter().flatten().any(|p| !p.is_single());
    let mut labels = Labels::new();
    let mut next_move = BTreeMap::new();
    let mut update = BTreeMap::new();
    let mut switch_dist: BTreeMap<usize, Dist> = BTreeMap::new();
    for s in 0..mdp.num_states() {
        let out: Rational = mdp.available(s).iter().map(|&a| &y[a]).sum();
        let mv = proportional(mdp.available(s).iter().map(|&a| (a, y[a].clone())))
            .unwrap_or_else(|| dirac(least_named(mdp, mdp.available(s).iter().copied()).unwrap()));
        next_move.insert((s, SEARCH), mv);
        if !switch[s].is_positive() {
            continue;
        }
        let plan = mecs.state_to_mec[s]
            .and_then(|i| remain[i].as_ref())
            .ok_or_else(|| SynthesisError::Switch(mdp.state_name(s).to_string()))?;
        let rho = &switch[s] / (&switch[s] + out);
        let total: Rational = plan.classes.iter().map(|c| &c.weight).sum();
        let mut d = vec![(SEARCH, Rational::one() - &rho)];
        for (k, c) in plan.classes.iter().enumerate() {
            d.push((
                remain_label(&mut labels, multi, k),
                &rho * &c.weight / &total,
            ));
        }
        switch_dist.insert(s, normalize_dist(d));
    }
    for (i, mec) in mecs.mecs.iter().enumerate() {
        let Some(plan) = &remain[i] else { continue };
        for (k, c) in plan.classes.iter().enumerate() {
            let m = remain_label(&mut labels, multi, k);
            for &s in &mec.states {
                next_move.insert((s, m), c.moves[&s].clone());
            }
        }
    }
    for (&s, d) in &switch_dist {
        update.insert(
            UpdateKey {
                action: None,
                state: s,
                memory: SEARCH,
            },
            d.clone(),
        );
    }
    let initial = switch_dist
        .get(&mdp.initial())
        .cloned()
        .unwrap_or_else(|| vec![(SEARCH, Rational::one())]);
    Ok(StrategySpec {
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        memory: labels.names,
        initial,
        next_move,
        update,
    })
}

/// A choice of the quotient strategy: an original action leaving a state
/// (or MEC), or remaining in the MEC forever.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum QChoice {
    Action(usize),
    Remain,
}

/// Lifts a memoryless strategy on the MEC quotient back to the MDP.
///
/// `weights[q]` are the (unnormalized) choice weights at quotient state
/// `q`. Outside MECs they are played directly. On entering a MEC the
/// strategy samples once what to do there: remain (following the plan of
/// that MEC) or leave through a particular action, and then moves inside
/// the MEC towards the owner of that action. Memory is only spent where it
/// is needed: `search` is reused whenever a MEC's exits share one owner or
/// it has no exits, and `exit:<action>` labels appear only for MECs whose
/// exits are spread over several states.
pub fn lift_quotient_strategy(
    mdp: &Mdp,
    qmap: &QuotientMap,
    weights: &[Vec<(QChoice, Rational)>],
    remain: &[Option<RemainPlan>],
) -> StrategySpec {
    let mecs = &qmap.mecs;
    let multi = remain.iter().flatten().any(|p| !p.is_single());
    let mut labels = Labels::new();
    let mut next_move: BTreeMap<(usize, usize), Dist> = BTreeMap::new();
    let mut entry: Vec<Dist> = Vec::with_capacity(mecs.mecs.len());

    for s in 0..mdp.num_states() {
        if mecs.state_to_mec[s].is_some() {
            continue;
        }
        let w = &weights[qmap.lift[s]];
        let mv = proportional(w.iter().filter_map(|(c, x)| match c {
            QChoice::Action(a) => Some((*a, x.clone())),
            QChoice::Remain => None,
        }))
        .unwrap_or_else(|| dirac(least_named(mdp, mdp.available(s).iter().copied()).unwrap()));
        next_move.insert((s, SEARCH), mv);
    }

    for (i, mec) in mecs.mecs.iter().enumerate() {
        let q = qmap.lift[mec.states[0]];
        let inside: BTreeSet<usize> = mec.states.iter().copied().collect();
        let allowed: BTreeSet<usize> = mec.actions.iter().copied().collect();
        let exits: Vec<(usize, Rational)> = weights[q]
            .iter()
            .filter_map(|(c, x)| match c {
                QChoice::Action(a) if x.is_positive() => Some((*a, x.clone())),
                _ => None,
            })
            .collect();
        let stay: Rational = weights[q]
            .iter()
            .filter(|(c, x)| *c == QChoice::Remain && x.is_positive())
            .map(|(_, x)| x)
            .sum();
        let plan = remain[i]
            .clone()
            .unwrap_or_else(|| RemainPlan::stay(mdp, mec));
        let total: Rational = exits.iter().map(|(_, x)| x).sum::<Rational>() + &stay;
        let owners: BTreeSet<usize> = exits.iter().map(|(a, _)| mdp.action(*a).state).collect();
        let towards = |u: usize| attractor(mdp, &inside, &allowed, &BTreeSet::from([u]));
        let mut d: Dist = Vec::new();

        let remain_by_classes = |labels: &mut Labels,
                                 next_move: &mut BTreeMap<(usize, usize), Dist>,
                                 d: &mut Dist,
                                 mass: Rational| {
            let class_total: Rational = plan.classes.iter().map(|c| &c.weight).sum();
            for (k, c) in plan.classes.iter().enumerate() {
                let m = remain_label(labels, multi, k);
                for &s in &mec.states {
                    next_move.insert((s, m), c.moves[&s].clone());
                }
                d.push((m, &mass * &c.weight / &class_total));
            }
        };

        if exits.is_empty() {
            if plan.is_single() {
                for &s in &mec.states {
                    next_move.insert((s, SEARCH), plan.classes[0].moves[&s].clone());
                }
                d.push((SEARCH, Rational::one()));
            } else {
                remain_by_classes(&mut labels, &mut next_move, &mut d, Rational::one());
            }
        } else {
            if stay.is_positive() {
                remain_by_classes(&mut labels, &mut next_move, &mut d, &stay / &total);
            }
            if owners.len() == 1 {
                let u = *owners.iter().next().unwrap();
                let nav = towards(u);
                for &s in &mec.states {
                    let mv = if s == u {
                        proportional(exits.iter().cloned()).unwrap()
                    } else {
                        dirac(nav[s].unwrap())
                    };
                    next_move.insert((s, SEARCH), mv);
                }
                d.push((
                    SEARCH,
                    exits.iter().map(|(_, x)| x).sum::<Rational>() / &total,
                ));
            } else {
                let mut navs: BTreeMap<usize, Vec<Option<usize>>> = BTreeMap::new();
                for (a, x) in &exits {
                    let u = mdp.action(*a).state;
                    let nav = navs.entry(u).or_insert_with(|| towards(u));
                    let m = labels.get(&format!("exit:{}", mdp.action(*a).name));
                    for &s in &mec.states {
                        let mv = if s == u {
                            dirac(*a)
                        } else {
                            dirac(nav[s].unwrap())
                        };
                        next_move.insert((s, m), mv);
                    }
                    d.push((m, x / &total));
                }
            }
        }
        entry.push(normalize_dist(d));
    }

    // Re-sample on every entry into a MEC and fall back to `search` when
    // leaving one.
    let mut update = BTreeMap::new();
    let n_labels = labels.names.len();
    for (a, act) in mdp.actions().iter().enumerate() {
        if mecs.is_internal(mdp, a) {
            continue;
        }
        let used: Vec<usize> = (0..n_labels)
            .filter(|&m| {
                next_move
                    .get(&(act.state, m))
                    .is_some_and(|d| d.iter().any(|(b, _)| *b == a))
            })
            .collect();
        for (t, p) in &act.transitions {
            if p.is_zero() {
                continue;
            }
            let target = match mecs.state_to_mec[*t] {
                Some(i) => entry[i].clone(),
                None => vec![(SEARCH, Rational::one())],
            };
            for &m in &used {
                if target != [(m, Rational::one())] {
                    update.insert(
                        UpdateKey {
                            action: Some(a),
                            state: *t,
                            memory: m,
                        },
                        target.clone(),
                    );
                }
            }
        }
    }
    let s0 = mdp.initial();
    let initial = match mecs.state_to_mec[s0] {
        Some(i) => entry[i].clone(),
        None => vec![(SEARCH, Rational::one())],
    };
    StrategySpec {
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        memory: labels.names,
        initial,
        next_move,
        update,
    }
}

/// Value of the single constraint of `query` under `law`; larger is better.
fn constraint_score(query: &Query, law: &PayoffLaw) -> Quantile {
    for (j, d) in query.dims.iter().enumerate() {
        let m = &law.marginals[j];
        if d.e.is_some() {
            return Quantile::Finite(expectation(m));
        }
        if let Some((p, _)) = &d.cvar {
            return Quantile::Finite(cvar(m, p));
        }
        if let Some((q, _)) = &d.var {
            return var(m, q);
        }
    }
    unreachable!("query has one constraint")
}

/// Deterministic memoryless strategy at least as good as `strategy` on the
/// single constraint of `query`.
///
/// The law of a memoryless randomizing strategy is a convex combination of
/// the laws of the deterministic strategies inside its support. E is linear
/// and CVaR convex under mixtures, and the VaR of a mixture lies between
/// the VaRs of its parts, so one of those deterministic strategies does at
/// least as well. They are enumerated and the best is returned (the first
/// in enumeration order on ties).
pub fn determinize_single_constraint(
    mdp: &Mdp,
    strategy: &StrategySpec,
    query: &Query,
) -> Result<StrategySpec, SynthesisError> {
    let count = query.constraint_count();
    if count != 1 {
        return Err(SynthesisError::ConstraintCount(count));
    }
    let moves = strategy
        .memoryless_moves(mdp)
        .ok_or(SynthesisError::NotMemoryless)?;
    if strategy.is_deterministic() {
        return Ok(strategy.clone());
    }
    let supports: Vec<Vec<usize>> = moves
        .iter()
        .map(|d| d.iter().map(|(a, _)| *a).collect())
        .collect();
    let size: u128 = supports.iter().map(|s| s.len() as u128).product();
    if size > 1 << 16 {
        return Err(SynthesisError::TooLarge(size));
    }
    let mut best: Option<(Quantile, StrategySpec)> = None;
    let mut idx = vec![0usize; supports.len()];
    loop {
        let choice: Vec<usize> = idx.iter().zip(&supports).map(|(&i, s)| s[i]).collect();
        let cand = StrategySpec::deterministic(mdp, &choice);
        let score = constraint_score(query, &evaluate(mdp, &cand, query.objective)?);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, cand));
        }
        // Odometer over the supports.
        let mut k = 0;
        loop {
            if k == idx.len() {
                return Ok(best.unwrap().1);
            }
            idx[k] += 1;
            if idx[k] < supports[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
