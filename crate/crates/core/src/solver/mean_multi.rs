//! Multi-dimensional mean payoff with expectation and CVaR constraints.
//!
//! A guess fixes per constrained dimension a threshold `t_j` and a
//! classification of the MECs by whether their value lies at most, exactly
//! at or at least `t_j`. For each guess one LP over transient flows and
//! recurrent frequencies decides whether a MEC-constant strategy exists.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};

use num::{One, Zero};
use rayon::prelude::*;

use crate::graph::{mec_decomposition, MecDecomposition};
use crate::lp::{solve_feasibility, LinearProgram, Relation, VarId};
use crate::model::{Certificate, Mdp, Objective, Query, QueryError, Status, Verdict};
use crate::synthesis::{evaluate, mec_constant_strategy, two_memory_strategy, RemainPlan};
use crate::Rational;

use super::mean::{decide_mean_single, mec_gain, mec_min_gain};
use super::reach::{lp_values, VarGuess};
use super::SolveOptions;

/// MECs at most / exactly at the threshold of one dimension; the rest are
/// at least at it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DimClass {
    pub le: BTreeSet<usize>,
    pub eq: BTreeSet<usize>,
}

/// One [`DimClass`] per dimension with a CVaR constraint.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MecClassification {
    pub dims: Vec<Option<DimClass>>,
}

#[derive(Clone, Debug)]
pub struct MeanLp {
    pub lp: LinearProgram,
    /// Transient flow per action; `None` for Dirac self-loops.
    pub y: Vec<Option<VarId>>,
    /// Switching mass per state; `Some` on MEC states.
    pub switch: Vec<Option<VarId>>,
    /// Recurrent frequency per action; `Some` on MEC-internal actions.
    pub x_a: Vec<Option<VarId>>,
}

/// The mean-payoff LP for thresholds `guess.t_c` and classification `cls`.
pub fn build_mean_lp_multi(
    mdp: &Mdp,
    mecs: &MecDecomposition,
    query: &Query,
    guess: &VarGuess,
    cls: &MecClassification,
) -> Result<MeanLp, QueryError> {
    if query.has_var() {
        return Err(QueryError::Unsupported(
            "multi-dimensional mean payoff with VaR constraints is not supported".into(),
        ));
    }
    let mut lp = LinearProgram::new();
    let n = mdp.num_states();
    let y: Vec<Option<VarId>> = mdp
        .actions()
        .iter()
        .map(|act| {
            let dirac = act.transitions.len() == 1 && act.transitions[0].0 == act.state;
            (!dirac).then(|| lp.nonneg(format!("y[{}]", act.name)))
        })
        .collect();
    let switch: Vec<Option<VarId>> = (0..n)
        .map(|s| {
            mecs.state_to_mec[s]
                .is_some()
                .then(|| lp.nonneg(format!("ys[{}]", mdp.state_name(s))))
        })
        .collect();
    let x_a: Vec<Option<VarId>> = (0..mdp.num_actions())
        .map(|a| {
            mecs.is_internal(mdp, a)
                .then(|| lp.nonneg(format!("x[{}]", mdp.action(a).name)))
        })
        .collect();

    let mut transient: Vec<Vec<(VarId, Rational)>> = vec![Vec::new(); n];
    let mut recurrent: Vec<Vec<(VarId, Rational)>> = vec![Vec::new(); n];
    for (a, act) in mdp.actions().iter().enumerate() {
        if let Some(v) = y[a] {
            transient[act.state].push((v, -Rational::one()));
            for (t, p) in &act.transitions {
                transient[*t].push((v, p.clone()));
            }
        }
        if let Some(v) = x_a[a] {
            recurrent[act.state].push((v, -Rational::one()));
            for (t, p) in &act.transitions {
                recurrent[*t].push((v, p.clone()));
            }
        }
    }
    for (s, mut terms) in transient.into_iter().enumerate() {
        if let Some(v) = switch[s] {
            terms.push((v, -Rational::one()));
        }
        let rhs = if s == mdp.initial() {
            -Rational::one()
        } else {
            Rational::zero()
        };
        if terms.is_empty() && rhs.is_zero() {
            continue;
        }
        lp.add_constraint(
            format!("transient {}", mdp.state_name(s)),
            terms,
            Relation::Eq,
            rhs,
        );
    }
    for (i, mec) in mecs.mecs.iter().enumerate() {
        let mut terms: Vec<(VarId, Rational)> = mec
            .states
            .iter()
            .map(|&s| (switch[s].unwrap(), Rational::one()))
            .collect();
        terms.extend(
            mec.actions
                .iter()
                .map(|&a| (x_a[a].unwrap(), -Rational::one())),
        );
        lp.add_constraint(
            format!("switch mec{i}"),
            terms,
            Relation::Eq,
            Rational::zero(),
        );
        for &s in &mec.states {
            lp.add_constraint(
                format!("recurrent {}", mdp.state_name(s)),
                recurrent[s].clone(),
                Relation::Eq,
                Rational::zero(),
            );
        }
    }

    // Σ_{s ∈ M} x_s w(s) with x_s the frequencies of the actions at s.
    let mass = |mec: usize, w: &dyn Fn(usize) -> Rational| -> Vec<(VarId, Rational)> {
        mecs.mecs[mec]
            .actions
            .iter()
            .map(|&a| (x_a[a].unwrap(), w(mdp.action(a).state)))
            .collect()
    };
    for (j, q) in query.dims.iter().enumerate() {
        if let Some(e) = &q.e {
            let terms: Vec<_> = (0..mecs.mecs.len())
                .flat_map(|i| mass(i, &|s| mdp.reward(s)[j].clone()))
                .collect();
            lp.add_constraint(format!("e{j}"), terms, Relation::Ge, e.clone());
        }
        let Some((p, c)) = &q.cvar else { continue };
        let t = guess.t_c[j]
            .as_ref()
            .expect("threshold guessed for every CVaR dimension");
        let class = cls.dims[j]
            .as_ref()
            .expect("classification for every CVaR dimension");
        let excess = |s: usize| &mdp.reward(s)[j] - t;
        let low: Vec<_> = class.le.iter().flat_map(|&i| mass(i, &excess)).collect();
        lp.add_constraint(format!("cvar{j}"), low, Relation::Ge, p * (c - t));
        for i in 0..mecs.mecs.len() {
            let (le, eq) = (class.le.contains(&i), class.eq.contains(&i));
            if le || eq {
                lp.add_constraint(
                    format!("class{j} mec{i} <="),
                    mass(i, &excess),
                    Relation::Le,
                    Rational::zero(),
                );
            }
            if !le || eq {
                lp.add_constraint(
                    format!("class{j} mec{i} >="),
                    mass(i, &excess),
                    Relation::Ge,
                    Rational::zero(),
                );
            }
        }
        let one = |_| Rational::one();
        let below: Vec<_> = class.le.iter().flat_map(|&i| mass(i, &one)).collect();
        let upto: Vec<_> = class
            .le
            .union(&class.eq)
            .flat_map(|&i| mass(i, &one))
            .collect();
        lp.add_constraint(format!("var{j} below"), below, Relation::Le, p.clone());
        lp.add_constraint(format!("var{j} upto"), upto, Relation::Ge, p.clone());
    }
    Ok(MeanLp { lp, y, switch, x_a })
}

/// Range of attainable values of each MEC in one dimension.
fn gain_intervals(mdp: &Mdp, mecs: &MecDecomposition, j: usize) -> Vec<(Rational, Rational)> {
    mecs.mecs
        .par_iter()
        .map(|m| (mec_min_gain(mdp, m, j), mec_gain(mdp, m, j)))
        .collect()
}

/// Extreme gains plus `grid` uniform steps between consecutive ones (no
/// refinement when every interval is a point).
fn threshold_grid(intervals: &[(Rational, Rational)], grid: usize) -> Vec<Rational> {
    let mut extremes: Vec<Rational> = intervals
        .iter()
        .flat_map(|(lo, hi)| [lo.clone(), hi.clone()])
        .collect();
    extremes.sort();
    extremes.dedup();
    if intervals.iter().all(|(lo, hi)| lo == hi) || grid <= 1 {
        return extremes;
    }
    let mut out = Vec::new();
    for w in extremes.windows(2) {
        let step = (&w[1] - &w[0]) / Rational::from_integer(grid.into());
        for k in 0..grid {
            out.push(&w[0] + &step * Rational::from_integer(k.into()));
        }
    }
    out.push(extremes.last().unwrap().clone());
    out
}

/// Classifications of one dimension at threshold `t`. A MEC whose value is
/// pinned to `t` goes to `eq` (the other placements are never better).
fn dim_classes(intervals: &[(Rational, Rational)], t: &Rational) -> Vec<DimClass> {
    let mut out = vec![DimClass::default()];
    for (i, (lo, hi)) in intervals.iter().enumerate() {
        let options: Vec<u8> = if lo == hi && lo == t {
            vec![1]
        } else {
            let mut o = Vec::new();
            if lo <= t {
                o.push(0);
            }
            if lo <= t && t <= hi {
                o.push(1);
            }
            if hi >= t {
                o.push(2);
            }
            o
        };
        out = out
            .into_iter()
            .flat_map(|c| {
                options.iter().map(move |&o| {
                    let mut c = c.clone();
                    match o {
                        0 => c.le.insert(i),
                        1 => c.eq.insert(i),
                        _ => false,
                    };
                    c
                })
            })
            .collect();
    }
    out
}

fn product<T: Clone>(per_dim: Vec<Vec<T>>) -> Vec<Vec<T>> {
    per_dim.into_iter().fold(vec![Vec::new()], |acc, opts| {
        acc.into_iter()
            .flat_map(|prefix| {
                opts.iter().map(move |o| {
                    let mut v = prefix.clone();
                    v.push(o.clone());
                    v
                })
            })
            .collect()
    })
}

fn describe(mdp: &Mdp, mecs: &MecDecomposition, cls: &MecClassification) -> String {
    let name = |i: &usize| mdp.state_name(mecs.mecs[*i].states[0]).to_string();
    let mut out = String::from("mean-multi");
    for (j, c) in cls.dims.iter().enumerate() {
        if let Some(c) = c {
            let le: Vec<String> = c.le.iter().map(name).collect();
            let eq: Vec<String> = c.eq.iter().map(name).collect();
            out.push_str(&format!(
                " le{j}={{{}}} eq{j}={{{}}}",
                le.join(","),
                eq.join(",")
            ));
        }
    }
    out
}

/// Multi-dimensional mean payoff under E and CVaR constraints. Thresholds
/// are searched over a finite grid, so without a verified witness the
/// answer is UNSAT only when the grid provably covers every possible VaR.
pub fn decide_mean_multi(
    mdp: &Mdp,
    query: &Query,
    opts: &SolveOptions,
) -> Result<Verdict, QueryError> {
    query.validate(mdp.dim())?;
    if query.objective != Objective::Mean {
        return Err(QueryError::Unsupported(
            "mean-payoff procedure asked for a reachability query".into(),
        ));
    }
    if query.has_var() {
        return Err(QueryError::Unsupported(
            "multi-dimensional mean payoff with VaR constraints is not supported".into(),
        ));
    }
    if query.dim() == 1 {
        return decide_mean_single(mdp, query);
    }
    let mecs = mec_decomposition(mdp);
    let cvar_dims: Vec<usize> = (0..query.dim())
        .filter(|&j| query.dims[j].cvar.is_some())
        .collect();
    let intervals: Vec<Vec<(Rational, Rational)>> = (0..query.dim())
        .map(|j| {
            if query.dims[j].cvar.is_some() {
                gain_intervals(mdp, &mecs, j)
            } else {
                Vec::new()
            }
        })
        .collect();
    let exact = cvar_dims
        .iter()
        .all(|&j| intervals[j].iter().all(|(lo, hi)| lo == hi));
    let grids: Vec<Vec<Rational>> = cvar_dims
        .iter()
        .map(|&j| threshold_grid(&intervals[j], opts.grid))
        .collect();
    let unverified = AtomicBool::new(false);

    for ts in product(grids) {
        let mut guess = VarGuess {
            t_c: vec![None; query.dim()],
            t_v: vec![None; query.dim()],
        };
        for (&j, t) in cvar_dims.iter().zip(&ts) {
            guess.t_c[j] = Some(t.clone());
        }
        let per_dim: Vec<Vec<DimClass>> = cvar_dims
            .iter()
            .zip(&ts)
            .map(|(&j, t)| dim_classes(&intervals[j], t))
            .collect();
        let classifications: Vec<MecClassification> = product(per_dim)
            .into_iter()
            .map(|cs| {
                let mut dims = vec![None; query.dim()];
                for (&j, c) in cvar_dims.iter().zip(cs) {
                    dims[j] = Some(c);
                }
                MecClassification { dims }
            })
            .collect();
        let found = classifications.par_iter().find_map_first(|cls| {
            let ml = build_mean_lp_multi(mdp, &mecs, query, &guess, cls).ok()?;
            let sol = solve_feasibility(&ml.lp).solution()?;
            let value = |v: &Option<VarId>| v.map_or_else(Rational::zero, |v| sol.value(v).clone());
            let y: Vec<Rational> = ml.y.iter().map(value).collect();
            let switch: Vec<Rational> = ml.switch.iter().map(value).collect();
            let mut remain: Vec<Option<RemainPlan>> = vec![None; mecs.mecs.len()];
            for (i, mec) in mecs.mecs.iter().enumerate() {
                let freq: Vec<(usize, Rational)> = mec
                    .actions
                    .iter()
                    .map(|&a| (a, value(&ml.x_a[a])))
                    .collect();
                if freq.iter().any(|(_, x)| !x.is_zero()) {
                    remain[i] = Some(mec_constant_strategy(mdp, mec, &freq).ok()?);
                }
            }
            let strategy = two_memory_strategy(mdp, &y, &switch, &mecs, &remain).ok()?;
            let law = evaluate(mdp, &strategy, Objective::Mean).ok()?;
            if !query.satisfied_by(&law) {
                unverified.store(true, Ordering::Relaxed);
                return None;
            }
            Some(Verdict {
                status: Status::Sat,
                witness: Some(strategy),
                certificate: Some(Certificate {
                    procedure: describe(mdp, &mecs, cls),
                    guess: guess.entries(),
                    lp_values: lp_values(&ml.lp, &sol),
                }),
                law: Some(law),
            })
        });
        if let Some(v) = found {
            return Ok(v);
        }
    }
    if exact && !unverified.load(Ordering::Relaxed) {
        Ok(Verdict::unsat())
    } else {
        Ok(Verdict::unknown())
    }
}
