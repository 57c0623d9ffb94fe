//! Exact payoff laws and query decisions for finite Markov chains.

use std::collections::BTreeMap;

use num::{One, Zero};

use crate::graph::scc_of_graph;
use crate::linalg::solve_sparse;
use crate::model::{MarkovChain, Objective, PayoffLaw, Query, Status, Verdict};
use crate::Rational;

/// Where the probability mass of a chain ends up: each BSCC with the
/// probability of eventually entering it.
#[derive(Clone, Debug)]
pub struct Absorption {
    pub bsccs: Vec<Vec<usize>>,
    pub mass: Vec<Rational>,
}

/// Pushes the initial distribution forward through the SCC DAG in
/// topological order. A transient SCC with a single exit state passes its
/// mass on in proportion to that state's exits; larger ones need the
/// expected visit counts `(I - Q)^T v = mu`.
pub fn absorption(mc: &MarkovChain) -> Absorption {
    let g = mc.graph();
    let comps = scc_of_graph(&g);
    let mut comp_of = vec![0; g.len()];
    for (i, c) in comps.iter().enumerate() {
        for &s in c {
            comp_of[s] = i;
        }
    }
    let mut mu = vec![Rational::zero(); g.len()];
    for (s, p) in mc.initial() {
        mu[*s] += p;
    }
    let mut bsccs = Vec::new();
    let mut mass = Vec::new();
    // tarjan_scc yields sinks first.
    for (ci, comp) in comps.iter().enumerate().rev() {
        let total: Rational = comp.iter().map(|&s| &mu[s]).sum();
        let bottom = comp.iter().all(|&s| g[s].iter().all(|&t| comp_of[t] == ci));
        if bottom {
            bsccs.push(comp.clone());
            mass.push(total);
            continue;
        }
        if total.is_zero() {
            continue;
        }
        let exits: Vec<usize> = comp
            .iter()
            .copied()
            .filter(|&s| {
                mc.row(s)
                    .iter()
                    .any(|(t, p)| comp_of[*t] != ci && !p.is_zero())
            })
            .collect();
        if exits.len() == 1 {
            let u = exits[0];
            let out: Vec<&(usize, Rational)> = mc
                .row(u)
                .iter()
                .filter(|(t, _)| comp_of[*t] != ci)
                .collect();
            let leave: Rational = out.iter().map(|(_, p)| p).sum();
            for (t, p) in out {
                mu[*t] += &total * p / &leave;
            }
        } else {
            let local: BTreeMap<usize, usize> =
                comp.iter().enumerate().map(|(i, &s)| (s, i)).collect();
            let mut rows: Vec<Vec<(usize, Rational)>> = (0..comp.len())
                .map(|i| vec![(i, Rational::one())])
                .collect();
            for (i, &s) in comp.iter().enumerate() {
                for (t, p) in mc.row(s) {
                    if let Some(&j) = local.get(t) {
                        rows[j].push((i, -p.clone()));
                    }
                }
            }
            let rhs: Vec<Rational> = comp.iter().map(|&s| mu[s].clone()).collect();
            let visits =
                solve_sparse(&rows, &rhs).expect("transient SCC has a regular visit system");
            for (i, &s) in comp.iter().enumerate() {
                for (t, p) in mc.row(s) {
                    if comp_of[*t] != ci {
                        mu[*t] += &visits[i] * p;
                    }
                }
            }
        }
    }
    Absorption { bsccs, mass }
}

/// Probability of eventually reaching each target, for targets reached with
/// positive probability.
pub fn reach_probabilities(mc: &MarkovChain) -> Vec<(usize, Rational)> {
    let abs = absorption(mc);
    let mut out: Vec<(usize, Rational)> = abs
        .bsccs
        .iter()
        .zip(abs.mass)
        .filter(|(b, m)| b.len() == 1 && mc.is_target(b[0]) && !m.is_zero())
        .map(|(b, m)| (b[0], m))
        .collect();
    out.sort_by_key(|(s, _)| *s);
    out
}

/// Law of the reward of the first target reached; runs that never reach a
/// target contribute the value 0.
pub fn payoff_law_reach(mc: &MarkovChain) -> PayoffLaw {
    let reached = reach_probabilities(mc);
    let missing = Rational::one() - reached.iter().map(|(_, p)| p).sum::<Rational>();
    let zero = vec![Rational::zero(); mc.dim()];
    let atoms: Vec<(&[Rational], Rational)> = reached
        .iter()
        .map(|(s, p)| (mc.reward(*s), p.clone()))
        .chain((!missing.is_zero()).then(|| (zero.as_slice(), missing)))
        .collect();
    PayoffLaw::from_vectors(atoms.iter().map(|(r, p)| (*r, p.clone())), mc.dim())
}

/// Stationary distribution of a BSCC, in the order of `bscc`.
pub fn stationary(mc: &MarkovChain, bscc: &[usize]) -> Vec<Rational> {
    if bscc.len() == 1 {
        return vec![Rational::one()];
    }
    let local: BTreeMap<usize, usize> = bscc.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    // Row j: sum_i pi_i P(i, j) - pi_j = 0; the first row is replaced by
    // the normalization.
    let mut rows: Vec<Vec<(usize, Rational)>> = (0..bscc.len())
        .map(|j| vec![(j, -Rational::one())])
        .collect();
    for (i, &s) in bscc.iter().enumerate() {
        for (t, p) in mc.row(s) {
            if let Some(&j) = local.get(t) {
                rows[j].push((i, p.clone()));
            }
        }
    }
    rows[0] = (0..bscc.len()).map(|i| (i, Rational::one())).collect();
    let mut rhs = vec![Rational::zero(); bscc.len()];
    rhs[0] = Rational::one();
    solve_sparse(&rows, &rhs).expect("irreducible chain has a unique stationary law")
}

/// Mean payoff vector of every BSCC, which almost every run entering it
/// attains.
pub fn bscc_mean_payoff(mc: &MarkovChain) -> Vec<(Vec<usize>, Vec<Rational>)> {
    let abs = absorption(mc);
    abs.bsccs
        .into_iter()
        .map(|b| {
            let gain = bscc_gain(mc, &b);
            (b, gain)
        })
        .collect()
}

fn bscc_gain(mc: &MarkovChain, b: &[usize]) -> Vec<Rational> {
    let pi = stationary(mc, b);
    (0..mc.dim())
        .map(|j| b.iter().zip(&pi).map(|(&s, p)| p * &mc.reward(s)[j]).sum())
        .collect()
}

/// Law of the mean payoff: each BSCC contributes its gain with the
/// probability of entering it.
pub fn payoff_law_mean(mc: &MarkovChain) -> PayoffLaw {
    let abs = absorption(mc);
    let gains: Vec<(Vec<Rational>, Rational)> = abs
        .bsccs
        .iter()
        .zip(abs.mass)
        .filter(|(_, m)| !m.is_zero())
        .map(|(b, m)| (bscc_gain(mc, b), m))
        .collect();
    PayoffLaw::from_vectors(
        gains.iter().map(|(g, m)| (g.as_slice(), m.clone())),
        mc.dim(),
    )
}

pub fn payoff_law(mc: &MarkovChain, objective: Objective) -> PayoffLaw {
    match objective {
        Objective::Reach => payoff_law_reach(mc),
        Objective::Mean => payoff_law_mean(mc),
    }
}

/// Computes the law once and checks every constraint on its marginal.
pub fn decide_mc(mc: &MarkovChain, query: &Query) -> Verdict {
    let law = payoff_law(mc, query.objective);
    let status = if query.satisfied_by(&law) {
        Status::Sat
    } else {
        Status::Unsat
    };
    Verdict {
        status,
        witness: None,
        certificate: None,
        law: Some(law),
    }
}
