//! Single-dimensional mean payoff via MEC gains and a reachability
//! abstraction.

use num::{One, Zero};
use rayon::prelude::*;

use crate::graph::{mec_quotient, Mec};
use crate::lp::{solve_optimize, LinearProgram, Optimum, Relation, Sense, VarId};
use crate::model::{Certificate, Mdp, MdpBuilder, Objective, Query, QueryError, Status, Verdict};
use crate::synthesis::{evaluate, lift_quotient_strategy, merged_remain_plan, QChoice, RemainPlan};
use crate::Rational;

use super::reach::{first_feasible, lp_values, quotient_weights, reach_guesses};

/// Maximizes `Σ x_a w(state(a))` over balanced action frequencies of `mec`.
fn gain_lp(
    mdp: &Mdp,
    mec: &Mec,
    w: impl Fn(usize) -> Rational,
) -> (Rational, Vec<(usize, Rational)>) {
    let mut lp = LinearProgram::new();
    let x: Vec<VarId> = mec
        .actions
        .iter()
        .map(|&a| lp.nonneg(format!("x[{}]", mdp.action(a).name)))
        .collect();
    for &s in &mec.states {
        let mut terms = Vec::new();
        for (&a, &xa) in mec.actions.iter().zip(&x) {
            let act = mdp.action(a);
            if act.state == s {
                terms.push((xa, -Rational::one()));
            }
            terms.push((xa, act.prob_to(s)));
        }
        lp.add_constraint(
            format!("recurrent {}", mdp.state_name(s)),
            terms,
            Relation::Eq,
            Rational::zero(),
        );
    }
    lp.add_constraint(
        "frequency",
        x.iter().map(|&v| (v, Rational::one())),
        Relation::Eq,
        Rational::one(),
    );
    lp.set_objective(
        Sense::Maximize,
        mec.actions
            .iter()
            .zip(&x)
            .map(|(&a, &v)| (v, w(mdp.action(a).state))),
    );
    match solve_optimize(&lp) {
        Optimum::Optimal { solution, value } => {
            let freq = mec
                .actions
                .iter()
                .zip(&x)
                .map(|(&a, &v)| (a, solution.value(v).clone()))
                .collect();
            (value, freq)
        }
        _ => unreachable!("gain LP of an end component is feasible and bounded"),
    }
}

fn constant_reward(mdp: &Mdp, mec: &Mec, j: usize) -> Option<Rational> {
    let r = &mdp.reward(mec.states[0])[j];
    mec.states
        .iter()
        .all(|&s| &mdp.reward(s)[j] == r)
        .then(|| r.clone())
}

/// Largest mean payoff in dimension `j` attainable while staying in `mec`.
pub fn mec_gain(mdp: &Mdp, mec: &Mec, j: usize) -> Rational {
    mec_gain_plan(mdp, mec, j).0
}

/// Smallest mean payoff in dimension `j` attainable while staying in `mec`.
pub fn mec_min_gain(mdp: &Mdp, mec: &Mec, j: usize) -> Rational {
    if let Some(r) = constant_reward(mdp, mec, j) {
        return r;
    }
    -gain_lp(mdp, mec, |s| -mdp.reward(s)[j].clone()).0
}

/// [`mec_gain`] together with a plan attaining it.
pub fn mec_gain_plan(mdp: &Mdp, mec: &Mec, j: usize) -> (Rational, RemainPlan) {
    if let Some(r) = constant_reward(mdp, mec, j) {
        return (r, RemainPlan::stay(mdp, mec));
    }
    let (g, freq) = gain_lp(mdp, mec, |s| mdp.reward(s)[j].clone());
    let plan = merged_remain_plan(mdp, mec, &freq).expect("optimal frequencies are balanced");
    (g, plan)
}

/// Single-dimensional mean payoff.
///
/// Each MEC is collapsed and offered a `commit` action into a fresh target
/// worth its best gain; every run of the abstraction reaches a target, so
/// the reachability LP decides the query there. The witness leaves MECs as
/// the flow says and, on committing, plays the gain-optimal plan forever.
pub fn decide_mean_single(mdp: &Mdp, query: &Query) -> Result<Verdict, QueryError> {
    query.validate(mdp.dim())?;
    if query.objective != Objective::Mean {
        return Err(QueryError::Unsupported(
            "mean-payoff procedure asked for a reachability query".into(),
        ));
    }
    if query.dim() != 1 {
        return Err(QueryError::Unsupported(format!(
            "single-dimensional procedure asked for {} dimensions",
            query.dim()
        )));
    }
    let qmap = mec_quotient(mdp);
    let quotient = &qmap.quotient;
    let gains: Vec<(Rational, RemainPlan)> = qmap
        .mecs
        .mecs
        .par_iter()
        .map(|m| mec_gain_plan(mdp, m, 0))
        .collect();

    let mut b = MdpBuilder::new();
    for q in 0..quotient.num_states() {
        b.state(quotient.state_name(q), vec![Rational::zero()], false);
    }
    let mut choice = Vec::new();
    for (qa, act) in quotient.actions().iter().enumerate() {
        if let Some(a) = qmap.action_origin[qa] {
            b.action(act.state, act.name.clone(), act.transitions.clone());
            choice.push(Some(QChoice::Action(a)));
        }
    }
    for (i, (g, _)) in gains.iter().enumerate() {
        let rep = qmap.lift[qmap.mecs.mecs[i].states[0]];
        let name = quotient.state_name(rep);
        let tau = b.state(format!("{name}#gain"), vec![g.clone()], true);
        b.action(rep, format!("{name}#commit"), vec![(tau, Rational::one())]);
        choice.push(Some(QChoice::Remain));
        b.self_loop(tau);
        choice.push(None);
    }
    let abstraction = b.build(quotient.initial());
    let reach_query = Query::new(Objective::Reach, query.dims.clone());
    let remain: Vec<Option<RemainPlan>> = gains.iter().map(|(_, p)| Some(p.clone())).collect();

    let guesses = reach_guesses(&abstraction, &reach_query);
    let found = first_feasible(&abstraction, &reach_query, &guesses, |g, rl, sol| {
        let weights = quotient_weights(quotient.num_states(), &abstraction, rl, sol, |a| choice[a]);
        let strategy = lift_quotient_strategy(mdp, &qmap, &weights, &remain);
        let law = evaluate(mdp, &strategy, Objective::Mean).ok()?;
        if !query.satisfied_by(&law) {
            debug_assert!(false, "mean-payoff witness failed exact verification");
            return None;
        }
        Some(Verdict {
            status: Status::Sat,
            witness: Some(strategy),
            certificate: Some(Certificate {
                procedure: "mean-single".into(),
                guess: g.entries(),
                lp_values: lp_values(&rl.lp, sol),
            }),
            law: Some(law),
        })
    });
    Ok(found.unwrap_or_else(Verdict::unsat))
}
