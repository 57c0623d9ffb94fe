//! Weighted reachability: the flow LP over a guessed VaR threshold.

use num::{One, Zero};
use rayon::prelude::*;

use crate::graph::{check_attraction, cleanup, mec_quotient, QuotientMap};
use crate::lp::{solve_feasibility, LinearProgram, LpSolution, Relation, VarId};
use crate::model::{Certificate, Mdp, Objective, Query, QueryError, Status, Verdict};
use crate::synthesis::{evaluate, lift_quotient_strategy, QChoice};
use crate::Rational;

use super::{mean, mean_multi, SolveOptions};

/// Guessed thresholds per dimension: `t_c` splits off the worst `p` mass
/// for CVaR, `t_v` is the claimed lower bound on VaR. When `p = q` both
/// carry the same value and share one split.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VarGuess {
    pub t_c: Vec<Option<Rational>>,
    pub t_v: Vec<Option<Rational>>,
}

impl VarGuess {
    pub fn entries(&self) -> Vec<(String, Rational)> {
        let mut out = Vec::new();
        for (j, t) in self.t_c.iter().enumerate() {
            if let Some(t) = t {
                out.push((format!("t_c[{j}]"), t.clone()));
            }
        }
        for (j, t) in self.t_v.iter().enumerate() {
            if let Some(t) = t {
                out.push((format!("t_v[{j}]"), t.clone()));
            }
        }
        out
    }
}

/// A reachability LP with handles on its flow variables.
#[derive(Clone, Debug)]
pub struct ReachLp {
    pub lp: LinearProgram,
    /// Per action; `None` for actions of targets and Dirac self-loops.
    pub y: Vec<Option<VarId>>,
    /// Per state; `Some` exactly on targets.
    pub x: Vec<Option<VarId>>,
}

fn is_dirac_loop(mdp: &Mdp, a: usize) -> bool {
    let act = mdp.action(a);
    act.transitions.len() == 1 && act.transitions[0].0 == act.state
}

fn shares_split(q: &crate::model::DimQuery, g: &VarGuess, j: usize) -> bool {
    match (&q.cvar, &q.var) {
        (Some((p, _)), Some((qq, _))) => p == qq && g.t_c[j] == g.t_v[j],
        _ => false,
    }
}

/// Split variables `u_s` over the targets with reward at most `t`: equal to
/// `x_s` strictly below `t`, at most `x_s` at `t`, with total mass `level`.
fn add_split(
    lp: &mut LinearProgram,
    mdp: &Mdp,
    x: &[Option<VarId>],
    tag: &str,
    j: usize,
    t: &Rational,
    level: &Rational,
) -> Vec<(VarId, Rational)> {
    let mut split = Vec::new();
    for s in mdp.targets() {
        let r = &mdp.reward(s)[j];
        if r > t {
            continue;
        }
        let xs = x[s].unwrap();
        let u = lp.nonneg(format!("{tag}{j}[{}]", mdp.state_name(s)));
        let rel = if r < t { Relation::Eq } else { Relation::Le };
        lp.add_constraint(
            format!("{tag}{j} split {}", mdp.state_name(s)),
            [(u, Rational::one()), (xs, -Rational::one())],
            rel,
            Rational::zero(),
        );
        split.push((u, r.clone()));
    }
    lp.add_constraint(
        format!("{tag}{j} mass"),
        split.iter().map(|(u, _)| (*u, Rational::one())),
        Relation::Eq,
        level.clone(),
    );
    split
}

/// Single-dimensional reachability LP for the guesses `t_c` (CVaR) and
/// `t_v` (VaR). Expects a cleaned MDP whose only end components are
/// targets or non-target MECs collapsed to a self-loop.
pub fn build_reach_lp(
    mdp: &Mdp,
    query: &Query,
    t_c: Option<Rational>,
    t_v: Option<Rational>,
) -> Result<ReachLp, QueryError> {
    if query.dim() != 1 {
        return Err(QueryError::Unsupported(format!(
            "single-dimensional LP asked for {} dimensions",
            query.dim()
        )));
    }
    Ok(build_reach_lp_multi(
        mdp,
        query,
        &VarGuess {
            t_c: vec![t_c],
            t_v: vec![t_v],
        },
    ))
}

/// Reachability LP with one split per constrained dimension over shared
/// flow variables.
pub fn build_reach_lp_multi(mdp: &Mdp, query: &Query, guess: &VarGuess) -> ReachLp {
    let mut lp = LinearProgram::new();
    let n = mdp.num_states();
    let y: Vec<Option<VarId>> = (0..mdp.num_actions())
        .map(|a| {
            let act = mdp.action(a);
            (!mdp.is_target(act.state) && !is_dirac_loop(mdp, a))
                .then(|| lp.nonneg(format!("y[{}]", act.name)))
        })
        .collect();
    let x: Vec<Option<VarId>> = (0..n)
        .map(|s| {
            mdp.is_target(s)
                .then(|| lp.nonneg(format!("x[{}]", mdp.state_name(s))))
        })
        .collect();

    let mut balance: Vec<Vec<(VarId, Rational)>> = vec![Vec::new(); n];
    for (a, act) in mdp.actions().iter().enumerate() {
        let Some(ya) = y[a] else { continue };
        balance[act.state].push((ya, -Rational::one()));
        for (t, p) in &act.transitions {
            balance[*t].push((ya, p.clone()));
        }
    }
    for (s, mut terms) in balance.into_iter().enumerate() {
        if let Some(xs) = x[s] {
            terms.push((xs, -Rational::one()));
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
            format!("flow {}", mdp.state_name(s)),
            terms,
            Relation::Eq,
            rhs,
        );
    }
    lp.add_constraint(
        "switch",
        x.iter().flatten().map(|&v| (v, Rational::one())),
        Relation::Eq,
        Rational::one(),
    );

    for (j, q) in query.dims.iter().enumerate() {
        if let Some(e) = &q.e {
            let terms = mdp
                .targets()
                .map(|s| (x[s].unwrap(), mdp.reward(s)[j].clone()));
            lp.add_constraint(format!("e{j}"), terms, Relation::Ge, e.clone());
        }
        let shared = shares_split(q, guess, j);
        if let (Some((p, c)), Some(t)) = (&q.cvar, &guess.t_c[j]) {
            let tag = if shared { "u" } else { "uc" };
            let split = add_split(&mut lp, mdp, &x, tag, j, t, p);
            lp.add_constraint(format!("cvar{j}"), split, Relation::Ge, p * c);
        }
        if let (Some((qq, _)), Some(t)) = (&q.var, &guess.t_v[j]) {
            if !shared {
                add_split(&mut lp, mdp, &x, "uv", j, t, qq);
            }
        }
    }
    ReachLp { lp, y, x }
}

/// All guesses for `query` on `mdp`, ascending in lexicographic order over
/// the dimensions. CVaR thresholds range over the target rewards, VaR
/// thresholds over the target rewards at least `v`.
pub fn reach_guesses(mdp: &Mdp, query: &Query) -> Vec<VarGuess> {
    let mut out = vec![VarGuess::default()];
    for (j, q) in query.dims.iter().enumerate() {
        let mut values: Vec<Rational> = mdp.targets().map(|s| mdp.reward(s)[j].clone()).collect();
        values.sort();
        values.dedup();
        let at_least = |v: &Rational| {
            values
                .iter()
                .filter(|r| *r >= v)
                .cloned()
                .collect::<Vec<_>>()
        };
        let options: Vec<(Option<Rational>, Option<Rational>)> = match (&q.cvar, &q.var) {
            (Some((p, _)), Some((qq, v))) if p == qq => at_least(v)
                .into_iter()
                .map(|t| (Some(t.clone()), Some(t)))
                .collect(),
            (Some(_), Some((_, v))) => {
                let tv = at_least(v);
                values
                    .iter()
                    .flat_map(|tc| tv.iter().map(move |t| (Some(tc.clone()), Some(t.clone()))))
                    .collect()
            }
            (Some(_), None) => values.iter().map(|t| (Some(t.clone()), None)).collect(),
            (None, Some((_, v))) => at_least(v).into_iter().map(|t| (None, Some(t))).collect(),
            (None, None) => vec![(None, None)],
        };
        out = out
            .into_iter()
            .flat_map(|g| {
                options.iter().map(move |(tc, tv)| {
                    let mut g = g.clone();
                    g.t_c.push(tc.clone());
                    g.t_v.push(tv.clone());
                    g
                })
            })
            .collect();
    }
    out
}

/// Nonzero LP values by variable name.
pub(crate) fn lp_values(lp: &LinearProgram, sol: &LpSolution) -> Vec<(String, Rational)> {
    sol.named(lp)
        .filter(|(_, v)| !v.is_zero())
        .map(|(n, v)| (n.to_string(), v.clone()))
        .collect()
}

/// Solves the LP of every guess (in parallel) and returns the witness
/// built by `extract` from the first feasible one in guess order for which
/// it succeeds.
pub(crate) fn first_feasible<F>(
    mdp: &Mdp,
    query: &Query,
    guesses: &[VarGuess],
    extract: F,
) -> Option<Verdict>
where
    F: Fn(&VarGuess, &ReachLp, &LpSolution) -> Option<Verdict> + Sync,
{
    guesses.par_iter().find_map_first(|g| {
        let rl = build_reach_lp_multi(mdp, query, g);
        let sol = solve_feasibility(&rl.lp).solution()?;
        extract(g, &rl, &sol)
    })
}

/// Choice weights per quotient state from the `y` flows of an LP solved on
/// the quotient (or on an MDP whose actions map into it via `choice`).
pub(crate) fn quotient_weights(
    num_states: usize,
    mdp: &Mdp,
    rl: &ReachLp,
    sol: &LpSolution,
    choice: impl Fn(usize) -> Option<QChoice>,
) -> Vec<Vec<(QChoice, Rational)>> {
    let mut weights = vec![Vec::new(); num_states];
    for (a, ya) in rl.y.iter().enumerate() {
        let (Some(ya), Some(c)) = (ya, choice(a)) else {
            continue;
        };
        let s = mdp.action(a).state;
        if s < num_states {
            weights[s].push((c, sol.value(*ya).clone()));
        }
    }
    weights
}

fn quotient_choice(qmap: &QuotientMap, qa: usize) -> Option<QChoice> {
    Some(match qmap.action_origin[qa] {
        Some(a) => QChoice::Action(a),
        None => QChoice::Remain,
    })
}

/// Single-dimensional weighted reachability.
pub fn decide_reach_single(mdp: &Mdp, query: &Query) -> Result<Verdict, QueryError> {
    if query.dim() != 1 {
        return Err(QueryError::Unsupported(format!(
            "single-dimensional procedure asked for {} dimensions",
            query.dim()
        )));
    }
    decide_reach(mdp, query, &SolveOptions::default())
}

/// Multi-dimensional weighted reachability by exhaustive guess enumeration.
pub fn decide_reach_multi(
    mdp: &Mdp,
    query: &Query,
    opts: &SolveOptions,
) -> Result<Verdict, QueryError> {
    decide_reach(mdp, query, opts)
}

fn decide_reach(mdp: &Mdp, query: &Query, opts: &SolveOptions) -> Result<Verdict, QueryError> {
    query.validate(mdp.dim())?;
    if query.objective != Objective::Reach {
        return Err(QueryError::Unsupported(
            "reachability procedure asked for a mean-payoff query".into(),
        ));
    }
    let mdp = &mdp.clone().make_targets_absorbing();
    let clean = cleanup(mdp);
    if !check_attraction(&clean).holds() {
        return reduce_to_mean(mdp, query, opts);
    }
    let qmap = mec_quotient(&clean);
    let quotient = &qmap.quotient;
    let guesses = reach_guesses(quotient, query);
    let found = first_feasible(quotient, query, &guesses, |g, rl, sol| {
        let weights = quotient_weights(quotient.num_states(), quotient, rl, sol, |qa| {
            quotient_choice(&qmap, qa)
        });
        let remain = vec![None; qmap.mecs.mecs.len()];
        let strategy = lift_quotient_strategy(&clean, &qmap, &weights, &remain);
        let law = evaluate(mdp, &strategy, Objective::Reach).ok()?;
        if !query.satisfied_by(&law) {
            debug_assert!(false, "reachability witness failed exact verification");
            return None;
        }
        Some(Verdict {
            status: Status::Sat,
            witness: Some(strategy),
            certificate: Some(Certificate {
                procedure: "reach-lp".into(),
                guess: g.entries(),
                lp_values: lp_values(&rl.lp, sol),
            }),
            law: Some(law),
        })
    });
    Ok(found.unwrap_or_else(Verdict::unsat))
}

/// Neither attraction assumption holds: reward 0 outside targets turns the
/// (absorbing-target) reachability payoff into a mean payoff.
fn reduce_to_mean(mdp: &Mdp, query: &Query, opts: &SolveOptions) -> Result<Verdict, QueryError> {
    let rewards = (0..mdp.num_states())
        .map(|s| {
            if mdp.is_target(s) {
                mdp.reward(s).to_vec()
            } else {
                vec![Rational::zero(); mdp.dim()]
            }
        })
        .collect();
    let reduced = mdp.with_rewards(rewards);
    let mean_query = Query::new(Objective::Mean, query.dims.clone());
    let mut verdict = if query.dim() == 1 {
        mean::decide_mean_single(&reduced, &mean_query)?
    } else if !query.has_var() {
        mean_multi::decide_mean_multi(&reduced, &mean_query, opts)?
    } else {
        return Err(QueryError::Unsupported(
            "multi-dimensional reachability with VaR constraints needs an attraction assumption"
                .into(),
        ));
    };
    if let Some(strategy) = &verdict.witness {
        let law =
            evaluate(mdp, strategy, Objective::Reach).expect("witness valid on the reduced model");
        debug_assert!(query.satisfied_by(&law));
        verdict.law = Some(law);
    }
    Ok(verdict)
}
