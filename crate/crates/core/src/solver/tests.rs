use std::collections::BTreeSet;

use num::{One, Zero};
use proptest::prelude::*;

use super::*;
use crate::gadgets::{example, random_mdp, sat_reduction, Cnf3, ExampleName, RandomMdpConfig};
use crate::graph::{cleanup, mec_decomposition, mec_quotient};
use crate::lp::solve_feasibility;
use crate::model::{DimQuery, MdpBuilder, Status};
use crate::synthesis::{determinize_single_constraint, evaluate};
use crate::{cvar, expectation, rat, FiniteDistribution, Mdp, Objective, Query, Rational};

fn dq(
    e: Option<Rational>,
    cvar: Option<(Rational, Rational)>,
    var: Option<(Rational, Rational)>,
) -> DimQuery {
    DimQuery { e, cvar, var }
}

fn choice() -> Mdp {
    example(&ExampleName::Choice).0
}

/// Every strategy on the choice example plays `a` with some probability
/// `λ` once; this is the law it induces.
fn choice_law(lambda: &Rational) -> FiniteDistribution {
    let rest = Rational::one() - lambda;
    FiniteDistribution::new([
        (rat(5, 1), lambda.clone()),
        (rat(10, 1), &rest * rat(9, 10)),
        (rat(0, 1), &rest * rat(1, 10)),
    ])
    .unwrap()
}

/// Largest expectation over `λ ∈ {0, 1/n, ..., 1}` subject to
/// `CVaR_p >= c`; `None` when no grid point meets the CVaR bound.
fn best_expectation_on_grid(p: &Rational, c: &Rational, n: i64) -> Option<Rational> {
    (0..=n)
        .map(|k| choice_law(&rat(k, n)))
        .filter(|d| cvar(d, p) >= *c)
        .map(|d| expectation(&d))
        .max()
}

fn assert_verified(mdp: &Mdp, query: &Query, v: &Verdict) {
    assert_eq!(v.status, Status::Sat);
    let law = evaluate(mdp, v.witness.as_ref().unwrap(), query.objective).unwrap();
    assert!(query.satisfied_by(&law), "{law}");
    assert_eq!(v.law.as_ref(), Some(&law));
}

#[test]
fn reach_lp_feasible_at_the_var_of_the_mixture() {
    // The 3/4 mixture has VaR_{1/20} = 5: its 0 atom weighs only 1/40, so
    // the guess 0 cannot hold the worst 1/20 and is infeasible.
    let q = Query::single(
        Objective::Reach,
        dq(Some(rat(6, 1)), Some((rat(1, 20), rat(2, 1))), None),
    );
    let rl = build_reach_lp(&choice(), &q, Some(rat(0, 1)), None).unwrap();
    assert!(!solve_feasibility(&rl.lp).is_feasible());
    let rl = build_reach_lp(&choice(), &q, Some(rat(5, 1)), None).unwrap();
    let sol = solve_feasibility(&rl.lp).solution().unwrap();
    sol.check(&rl.lp).unwrap();
    let total: Rational = rl.x.iter().flatten().map(|&v| sol.value(v).clone()).sum();
    assert!(total.is_one());
}

#[test]
fn reach_lp_infeasible_above_the_cvar_window() {
    // Oracle: CVaR_{1/20} = 10λ - 5 for λ >= 1/2, so the bound admits
    // λ in [7/10, 1] where E = 9 - 4λ is at most 31/5.
    let (p, c) = (rat(1, 20), rat(2, 1));
    let best = best_expectation_on_grid(&p, &c, 400).unwrap();
    assert_eq!(best, rat(31, 5));
    let q = Query::single(Objective::Reach, dq(Some(rat(13, 2)), Some((p, c)), None));
    for t in [0, 5, 10] {
        let rl = build_reach_lp(&choice(), &q, Some(rat(t, 1)), None).unwrap();
        assert!(!solve_feasibility(&rl.lp).is_feasible(), "t_c = {t}");
    }
}

#[test]
fn expectation_only_lp_has_no_split_and_matches_the_maximum() {
    for (e, feasible) in [(rat(9, 1), true), (rat(91, 10), false)] {
        let q = Query::single(Objective::Reach, dq(Some(e), None, None));
        let rl = build_reach_lp(&choice(), &q, None, None).unwrap();
        assert!(rl.lp.variables().iter().all(|v| !v.name.starts_with('u')));
        assert_eq!(solve_feasibility(&rl.lp).is_feasible(), feasible);
    }
}

#[test]
fn reach_lp_rejects_several_dimensions() {
    let q = Query::new(
        Objective::Reach,
        vec![DimQuery::default(), DimQuery::default()],
    );
    assert!(matches!(
        build_reach_lp(&choice(), &q, None, None),
        Err(QueryError::Unsupported(_))
    ));
}

#[test]
fn paper_query_on_the_choice_example() {
    let (mdp, q) = example(&ExampleName::Choice);
    let v = decide_reach_single(&mdp, &q).unwrap();
    assert_verified(&mdp, &q, &v);
    assert!(v.witness.as_ref().unwrap().is_memoryless());
    let cert = v.certificate.unwrap();
    assert_eq!(cert.procedure, "reach-lp");
}

#[test]
fn choice_example_unsat_above_the_window() {
    let q = Query::single(
        Objective::Reach,
        dq(Some(rat(13, 2)), Some((rat(1, 20), rat(2, 1))), None),
    );
    assert_eq!(
        decide_reach_single(&choice(), &q).unwrap().status,
        Status::Unsat
    );
}

#[test]
fn negative_rewards_go_through_mean_payoff() {
    let (mdp, q) = example(&ExampleName::Negative);
    assert!(!crate::graph::check_attraction(&cleanup(&mdp)).holds());
    let v = decide_reach_single(&mdp, &q).unwrap();
    assert_verified(&mdp, &q, &v);
    assert_eq!(v.witness.as_ref().unwrap().memory.len(), 2);
    assert_eq!(v.certificate.unwrap().procedure, "mean-single");
}

fn single_state(loops: &[i64]) -> (Mdp, crate::graph::Mec) {
    let mut b = MdpBuilder::new();
    let s = b.state("s", vec![rat(0, 1)], false);
    for (i, _) in loops.iter().enumerate() {
        b.action(s, format!("l{i}"), vec![(s, rat(1, 1))]);
    }
    let mdp = b.build(s);
    let mec = mec_decomposition(&mdp).mecs.remove(0);
    (mdp, mec)
}

#[test]
fn mec_gain_examples() {
    let (mdp, mec) = single_state(&[0]);
    let mdp5 = mdp.with_rewards(vec![vec![rat(5, 1)]]);
    assert_eq!(mec_gain(&mdp5, &mec, 0), rat(5, 1));

    // Two loops with rewards 3 and 7: rewards sit on states, so the loops
    // lead through their own states.
    let mut b = MdpBuilder::new();
    let s = b.state("s", vec![rat(0, 1)], false);
    let three = b.state("three", vec![rat(3, 1)], false);
    let seven = b.state("seven", vec![rat(7, 1)], false);
    b.action(s, "to3", vec![(three, rat(1, 1))]);
    b.action(s, "to7", vec![(seven, rat(1, 1))]);
    b.action(three, "back3", vec![(s, rat(1, 1))]);
    b.action(three, "stay3", vec![(three, rat(1, 1))]);
    b.action(seven, "back7", vec![(s, rat(1, 1))]);
    b.action(seven, "stay7", vec![(seven, rat(1, 1))]);
    let mdp = b.build(s);
    let mec = mec_decomposition(&mdp).mecs.remove(0);
    assert_eq!(mec_gain(&mdp, &mec, 0), rat(7, 1));
    // Cheapest is shuttling between s and three.
    assert_eq!(mec_min_gain(&mdp, &mec, 0), rat(3, 2));

    let mut b = MdpBuilder::new();
    let u = b.state("u", vec![rat(0, 1)], false);
    let v = b.state("v", vec![rat(10, 1)], false);
    b.action(u, "uv", vec![(v, rat(1, 1))]);
    b.action(v, "vu", vec![(u, rat(1, 1))]);
    let mdp = b.build(u);
    let mec = mec_decomposition(&mdp).mecs.remove(0);
    assert_eq!(mec_gain(&mdp, &mec, 0), rat(5, 1));
    assert_eq!(mec_min_gain(&mdp, &mec, 0), rat(5, 1));
}

#[test]
fn gain_plan_attains_the_gain() {
    let mut b = MdpBuilder::new();
    let u = b.state("u", vec![rat(1, 1)], false);
    let v = b.state("v", vec![rat(9, 1)], false);
    let w = b.state("w", vec![rat(4, 1)], false);
    b.action(u, "uv", vec![(v, rat(1, 2)), (w, rat(1, 2))]);
    b.action(v, "vv", vec![(v, rat(1, 2)), (u, rat(1, 2))]);
    b.action(v, "vw", vec![(w, rat(1, 1))]);
    b.action(w, "wu", vec![(u, rat(1, 1))]);
    b.action(w, "ww", vec![(w, rat(1, 1))]);
    let mdp = b.build(u);
    let mec = mec_decomposition(&mdp).mecs.remove(0);
    let (g, plan) = mec_gain_plan(&mdp, &mec, 0);
    let law = evaluate(
        &mdp,
        &crate::synthesis::remain_strategy(&mdp, &plan),
        Objective::Mean,
    )
    .unwrap();
    assert_eq!(law.marginals[0], FiniteDistribution::point(g));
}

#[test]
fn loop_example_needs_two_memory() {
    let (mdp, q) = example(&ExampleName::Loop);
    let v = decide_mean_single(&mdp, &q).unwrap();
    assert_verified(&mdp, &q, &v);
    assert_eq!(
        v.witness.as_ref().unwrap().memory,
        vec!["search".to_string(), "remain".to_string()]
    );
}

#[test]
fn slow_example_is_sat() {
    let (mdp, q) = example(&ExampleName::Slow(rat(1, 8)));
    let v = decide_mean_single(&mdp, &q).unwrap();
    assert_verified(&mdp, &q, &v);
}

#[test]
fn multi_lp_with_one_dimension_is_the_single_lp() {
    let (mdp, q) = example(&ExampleName::Choice);
    for g in reach_guesses(&mdp, &q) {
        let single = build_reach_lp(&mdp, &q, g.t_c[0].clone(), g.t_v[0].clone()).unwrap();
        let multi = build_reach_lp_multi(&mdp, &q, &g);
        assert_eq!(single.lp.to_string(), multi.lp.to_string());
    }
}

#[test]
fn p_equal_q_shares_one_split() {
    let (mdp, q) = example(&ExampleName::Choice);
    let g = VarGuess {
        t_c: vec![Some(rat(5, 1))],
        t_v: vec![Some(rat(5, 1))],
    };
    let rl = build_reach_lp_multi(&mdp, &q, &g);
    assert!(rl.lp.variables().iter().any(|v| v.name.starts_with("u0[")));
    assert!(rl.lp.variables().iter().all(|v| !v.name.starts_with("uv")));
    let mut q2 = q.clone();
    q2.dims[0].var = Some((rat(1, 10), rat(5, 1)));
    let rl = build_reach_lp_multi(&mdp, &q2, &g);
    assert!(rl.lp.variables().iter().any(|v| v.name.starts_with("uc0[")));
    assert!(rl.lp.variables().iter().any(|v| v.name.starts_with("uv0[")));
}

#[test]
fn guesses_ascend_and_respect_the_var_bound() {
    let (mdp, q) = example(&ExampleName::Choice);
    let ts: Vec<Rational> = reach_guesses(&mdp, &q)
        .into_iter()
        .map(|g| g.t_c[0].clone().unwrap())
        .collect();
    assert_eq!(ts, vec![rat(5, 1), rat(10, 1)]);
}

fn brute_force_sat(cnf: &Cnf3) -> bool {
    (0..1u32 << cnf.num_vars).any(|bits| {
        cnf.clauses.iter().all(|c| {
            c.iter().any(|&l| {
                let v = bits >> (l.unsigned_abs() - 1) & 1 == 1;
                if l > 0 {
                    v
                } else {
                    !v
                }
            })
        })
    })
}

#[test]
fn gadget_single_clause_has_a_feasible_guess() {
    let cnf = Cnf3::new(1, vec![vec![1, 1, 1]]).unwrap();
    assert!(brute_force_sat(&cnf));
    let (mdp, q) = sat_reduction(&cnf);
    let qmap = mec_quotient(&cleanup(&mdp));
    let feasible = reach_guesses(&qmap.quotient, &q)
        .iter()
        .any(|g| solve_feasibility(&build_reach_lp_multi(&qmap.quotient, &q, g).lp).is_feasible());
    assert!(feasible);
}

#[test]
fn gadget_verdicts_follow_satisfiability() {
    let unsat = Cnf3::new(1, vec![vec![1, 1, 1], vec![-1, -1, -1]]).unwrap();
    let sat = Cnf3::new(2, vec![vec![1, 2, 2], vec![-1, 2, 2], vec![1, -2, -2]]).unwrap();
    assert!(!brute_force_sat(&unsat) && brute_force_sat(&sat));
    let (mdp, q) = sat_reduction(&unsat);
    assert_eq!(
        decide_reach_multi(&mdp, &q, &SolveOptions::default())
            .unwrap()
            .status,
        Status::Unsat
    );
    let (mdp, q) = sat_reduction(&sat);
    let v = decide_reach_multi(&mdp, &q, &SolveOptions::default()).unwrap();
    assert_verified(&mdp, &q, &v);
}

#[test]
fn gadget_with_mean_payoff_matches_reachability() {
    for cnf in [
        Cnf3::new(1, vec![vec![1, 1, 1], vec![-1, -1, -1]]).unwrap(),
        Cnf3::new(2, vec![vec![1, 2, 2], vec![-1, 2, 2], vec![1, -2, -2]]).unwrap(),
        Cnf3::new(2, vec![vec![1, 1, 1], vec![-1, 2, 2], vec![-2, -2, -2]]).unwrap(),
    ] {
        let (mdp, q) = sat_reduction(&cnf);
        let reach = decide_reach_multi(&mdp, &q, &SolveOptions::default())
            .unwrap()
            .status;
        let mq = Query::new(Objective::Mean, q.dims.clone());
        let mean = decide_mean_multi(&mdp, &mq, &SolveOptions::default()).unwrap();
        assert_eq!(mean.status, reach, "{cnf:?}");
        assert_eq!(reach == Status::Sat, brute_force_sat(&cnf));
        if mean.is_sat() {
            assert_verified(&mdp, &mq, &mean);
        }
    }
}

/// Two independent copies of the choice example, one per dimension.
fn choice_squared() -> Mdp {
    let mut b = MdpBuilder::new();
    let s0 = b.state("s0", vec![rat(0, 1), rat(0, 1)], false);
    let outcomes = |a: bool| -> Vec<(i64, Rational)> {
        if a {
            vec![(5, rat(1, 1))]
        } else {
            vec![(10, rat(9, 10)), (0, rat(1, 10))]
        }
    };
    let mut ends = std::collections::BTreeMap::new();
    for (ka, a1) in [("a", true), ("b", false)] {
        for (kb, a2) in [("a", true), ("b", false)] {
            let mut dist = Vec::new();
            for (r1, p1) in outcomes(a1) {
                for (r2, p2) in outcomes(a2) {
                    let t = *ends.entry((r1, r2)).or_insert_with(|| {
                        let t = b.state(format!("{r1},{r2}"), vec![rat(r1, 1), rat(r2, 1)], true);
                        b.self_loop(t);
                        t
                    });
                    dist.push((t, &p1 * &p2));
                }
            }
            b.action(s0, format!("{ka}{kb}"), dist);
        }
    }
    b.build(s0)
}

#[test]
fn jointly_unsatisfiable_product_has_no_feasible_guess() {
    let mdp = choice_squared();
    // Each dimension alone is the unsatisfiable single-dimensional query.
    let d = dq(Some(rat(13, 2)), Some((rat(1, 20), rat(2, 1))), None);
    let q = Query::new(Objective::Reach, vec![d.clone(), d]);
    assert!(best_expectation_on_grid(&rat(1, 20), &rat(2, 1), 400).unwrap() < rat(13, 2));
    for g in reach_guesses(&mdp, &q) {
        assert!(!solve_feasibility(&build_reach_lp_multi(&mdp, &q, &g).lp).is_feasible());
    }
    assert_eq!(
        decide_reach_multi(&mdp, &q, &SolveOptions::default())
            .unwrap()
            .status,
        Status::Unsat
    );
    let ok = dq(Some(rat(6, 1)), Some((rat(1, 20), rat(2, 1))), None);
    let q = Query::new(Objective::Reach, vec![ok.clone(), ok]);
    let v = decide_reach_multi(&mdp, &q, &SolveOptions::default()).unwrap();
    assert_verified(&mdp, &q, &v);
}

#[test]
fn mean_lp_for_the_loop_example() {
    let (mdp, _) = example(&ExampleName::Loop);
    let q = Query::single(
        Objective::Mean,
        dq(Some(rat(6, 1)), Some((rat(1, 20), rat(2, 1))), None),
    );
    let mecs = mec_decomposition(&mdp);
    let s0_mec = mecs.state_to_mec[mdp.initial()].unwrap();
    let guess = VarGuess {
        t_c: vec![Some(rat(5, 1))],
        t_v: vec![None],
    };
    let cls = |le: BTreeSet<usize>, eq: BTreeSet<usize>| MecClassification {
        dims: vec![Some(DimClass { le, eq })],
    };
    let zero_mec = mecs.state_to_mec[mdp.state_index("0").unwrap()].unwrap();
    let good = cls(BTreeSet::from([zero_mec]), BTreeSet::from([s0_mec]));
    let ml = build_mean_lp_multi(&mdp, &mecs, &q, &guess, &good).unwrap();
    assert!(solve_feasibility(&ml.lp).is_feasible());

    // The 0 MEC placed above t = 5.
    let bad = cls(BTreeSet::new(), BTreeSet::from([s0_mec]));
    let ml = build_mean_lp_multi(&mdp, &mecs, &q, &guess, &bad).unwrap();
    let sol = solve_feasibility(&ml.lp).solution();
    if let Some(sol) = sol {
        let zero_state = mdp.state_index("0").unwrap();
        assert!(ml.switch[zero_state].map_or(true, |v| sol.value(v).is_zero()));
    }

    let with_var = Query::single(
        Objective::Mean,
        dq(None, None, Some((rat(1, 2), rat(1, 1)))),
    );
    assert!(build_mean_lp_multi(&mdp, &mecs, &with_var, &guess, &good).is_err());
}

#[test]
fn classification_above_the_max_gain_is_infeasible() {
    let (mdp, _) = example(&ExampleName::Loop);
    let q = Query::single(
        Objective::Mean,
        dq(None, Some((rat(1, 2), rat(0, 1))), None),
    );
    let mecs = mec_decomposition(&mdp);
    let guess = VarGuess {
        t_c: vec![Some(rat(7, 1))],
        t_v: vec![None],
    };
    // Every MEC claimed at least 7; only the 10 MEC can be, so all mass
    // must end there, which the 1/10 leak to 0 forbids.
    let ml = build_mean_lp_multi(
        &mdp,
        &mecs,
        &q,
        &guess,
        &MecClassification {
            dims: vec![Some(DimClass::default())],
        },
    )
    .unwrap();
    assert!(!solve_feasibility(&ml.lp).is_feasible());
}

#[test]
fn single_mec_expectation_lp_matches_the_gain() {
    let mut b = MdpBuilder::new();
    let u = b.state("u", vec![rat(2, 1)], false);
    let v = b.state("v", vec![rat(8, 1)], false);
    b.action(u, "uu", vec![(u, rat(1, 1))]);
    b.action(u, "uv", vec![(v, rat(1, 1))]);
    b.action(v, "vu", vec![(u, rat(1, 1))]);
    let mdp = b.build(u);
    let mecs = mec_decomposition(&mdp);
    let gain = mec_gain(&mdp, &mecs.mecs[0], 0);
    assert_eq!(gain, rat(5, 1));
    for e in [rat(4, 1), rat(5, 1), rat(51, 10)] {
        let q = Query::single(Objective::Mean, dq(Some(e.clone()), None, None));
        let ml = build_mean_lp_multi(
            &mdp,
            &mecs,
            &q,
            &VarGuess::default(),
            &MecClassification { dims: vec![None] },
        )
        .unwrap();
        assert_eq!(solve_feasibility(&ml.lp).is_feasible(), e <= gain);
    }
}

#[test]
fn independent_dimensions_mean_payoff_is_sat() {
    // From s0 go to one of two MECs: the first pays (4, 1), the second
    // (1, 4). Each dimension asks for a little less than what mixing gives.
    let mut b = MdpBuilder::new();
    let s0 = b.state("s0", vec![rat(0, 1), rat(0, 1)], false);
    let m1 = b.state("m1", vec![rat(4, 1), rat(1, 1)], false);
    let m2 = b.state("m2", vec![rat(1, 1), rat(4, 1)], false);
    b.action(s0, "go", vec![(m1, rat(1, 2)), (m2, rat(1, 2))]);
    b.self_loop(m1);
    b.self_loop(m2);
    let mdp = b.build(s0);
    let d = dq(Some(rat(2, 1)), Some((rat(1, 4), rat(1, 1))), None);
    let q = Query::new(Objective::Mean, vec![d.clone(), d]);
    let v = decide_mean_multi(&mdp, &q, &SolveOptions::default()).unwrap();
    assert_verified(&mdp, &q, &v);
    let too_much = dq(Some(rat(3, 1)), None, None);
    let q = Query::new(Objective::Mean, vec![too_much.clone(), too_much]);
    assert_eq!(
        decide_mean_multi(&mdp, &q, &SolveOptions::default())
            .unwrap()
            .status,
        Status::Unsat
    );
}

#[test]
fn mean_multi_is_unknown_only_off_the_exact_grid() {
    // A MEC whose value ranges over [0, 10] makes the threshold grid a
    // heuristic; the verdict may not be UNSAT.
    let mut b = MdpBuilder::new();
    let u = b.state("u", vec![rat(0, 1), rat(0, 1)], false);
    let v = b.state("v", vec![rat(10, 1), rat(0, 1)], false);
    b.action(u, "uu", vec![(u, rat(1, 1))]);
    b.action(u, "uv", vec![(v, rat(1, 1))]);
    b.action(v, "vv", vec![(v, rat(1, 1))]);
    b.action(v, "vu", vec![(u, rat(1, 1))]);
    let mdp = b.build(u);
    let q = Query::new(
        Objective::Mean,
        vec![
            dq(None, Some((rat(1, 2), rat(11, 1))), None),
            DimQuery::default(),
        ],
    );
    assert_eq!(
        decide_mean_multi(&mdp, &q, &SolveOptions::default())
            .unwrap()
            .status,
        Status::Unknown
    );
    let q = Query::new(
        Objective::Mean,
        vec![
            dq(None, Some((rat(1, 2), rat(9, 1))), None),
            DimQuery::default(),
        ],
    );
    let v = decide_mean_multi(&mdp, &q, &SolveOptions::default()).unwrap();
    assert_verified(&mdp, &q, &v);
}

#[test]
fn dispatcher_routes_by_objective_and_dimension() {
    let (mdp, q) = example(&ExampleName::Loop);
    assert!(decide(&mdp, &q, &SolveOptions::default()).unwrap().is_sat());
    let multi_var = Query::new(
        Objective::Mean,
        vec![dq(None, None, Some((rat(1, 2), rat(1, 1)))); 2],
    );
    let mdp2 = mdp.with_rewards(vec![vec![rat(0, 1); 2]; mdp.num_states()]);
    assert!(matches!(
        decide(&mdp2, &multi_var, &SolveOptions::default()),
        Err(QueryError::Unsupported(_))
    ));
    let bad_level = Query::single(
        Objective::Mean,
        dq(None, Some((rat(1, 1), rat(0, 1))), None),
    );
    assert!(matches!(
        decide(&mdp, &bad_level, &SolveOptions::default()),
        Err(QueryError::Level { .. })
    ));
}

fn small_random(seed: u64, dim: usize, reward_range: (i64, i64)) -> Mdp {
    random_mdp(&RandomMdpConfig {
        states: 4,
        actions_per_state: 2,
        density: 2,
        reward_range,
        dim,
        target_fraction: 0.4,
        seed,
    })
}

fn random_dim_query(g: &mut impl FnMut() -> i64) -> DimQuery {
    let mut d = DimQuery::default();
    if g() % 2 == 0 {
        d.e = Some(rat(g() % 11, 1));
    }
    if g() % 2 == 0 {
        d.cvar = Some((rat(1 + g() % 3, 4), rat(g() % 11, 1)));
    }
    if g() % 3 == 0 {
        d.var = Some((rat(1 + g() % 3, 4), rat(g() % 11, 1)));
    }
    d
}

fn weaken(d: &DimQuery, by: &Rational) -> DimQuery {
    DimQuery {
        e: d.e.as_ref().map(|e| e - by),
        cvar: d.cvar.as_ref().map(|(p, c)| (p.clone(), c - by)),
        var: d.var.as_ref().map(|(q, v)| (q.clone(), v - by)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// SAT answers carry exactly verified witnesses, and weakening every
    /// threshold keeps SAT.
    #[test]
    fn sat_is_verified_and_monotone(seed in 0u64..10_000, picks in proptest::collection::vec(0i64..1000, 12), mean in any::<bool>()) {
        let mdp = small_random(seed, 1, (-2, 10));
        let mut it = picks.into_iter().cycle();
        let mut g = || it.next().unwrap();
        let objective = if mean { Objective::Mean } else { Objective::Reach };
        let q = Query::single(objective, random_dim_query(&mut g));
        let v = decide(&mdp, &q, &SolveOptions::default()).unwrap();
        if v.is_sat() {
            let law = evaluate(&mdp, v.witness.as_ref().unwrap(), objective).unwrap();
            prop_assert!(q.satisfied_by(&law));
            let weaker = Query::single(objective, weaken(&q.dims[0], &rat(1, 1)));
            prop_assert!(decide(&mdp, &weaker, &SolveOptions::default()).unwrap().is_sat());
        }
    }

    /// Every feasible reachability LP splits exactly unit mass over targets.
    #[test]
    fn feasible_reach_lps_conserve_flow(seed in 0u64..10_000, picks in proptest::collection::vec(0i64..1000, 12)) {
        let mdp = cleanup(&small_random(seed, 1, (0, 10)));
        let qmap = mec_quotient(&mdp);
        let mut it = picks.into_iter().cycle();
        let mut g = || it.next().unwrap();
        let q = Query::single(Objective::Reach, random_dim_query(&mut g));
        for guess in reach_guesses(&qmap.quotient, &q) {
            let rl = build_reach_lp_multi(&qmap.quotient, &q, &guess);
            if let Some(sol) = solve_feasibility(&rl.lp).solution() {
                let total: Rational = rl.x.iter().flatten().map(|&v| sol.value(v).clone()).sum();
                prop_assert!(total.is_one());
            }
        }
    }

    /// Two-dimensional reachability agrees with the single-dimensional
    /// procedure when the second dimension is unconstrained.
    #[test]
    fn extra_free_dimension_changes_nothing(seed in 0u64..10_000, picks in proptest::collection::vec(0i64..1000, 12)) {
        let mdp = small_random(seed, 2, (0, 10));
        let mut it = picks.into_iter().cycle();
        let mut g = || it.next().unwrap();
        let d = random_dim_query(&mut g);
        let one = mdp.with_rewards(mdp.rewards().iter().map(|r| vec![r[0].clone()]).collect());
        let single = decide_reach_single(&one, &Query::single(Objective::Reach, d.clone())).unwrap();
        let multi = decide_reach_multi(&mdp, &Query::new(Objective::Reach, vec![d, DimQuery::default()]), &SolveOptions::default()).unwrap();
        prop_assert_eq!(single.status, multi.status);
    }

    /// With one constraint the witness can be made deterministic and
    /// memoryless without losing.
    #[test]
    fn single_constraint_witness_determinizes(seed in 0u64..10_000, picks in proptest::collection::vec(0i64..1000, 6)) {
        let mdp = small_random(seed, 1, (0, 10));
        let mut it = picks.into_iter().cycle();
        let mut g = || it.next().unwrap();
        let d = match g() % 3 {
            0 => dq(Some(rat(g() % 11, 1)), None, None),
            1 => dq(None, Some((rat(1 + g() % 3, 4), rat(g() % 11, 1))), None),
            _ => dq(None, None, Some((rat(1 + g() % 3, 4), rat(g() % 11, 1)))),
        };
        let q = Query::single(Objective::Reach, d);
        let v = decide(&mdp, &q, &SolveOptions::default()).unwrap();
        if let Some(w) = v.witness.filter(|w| w.is_memoryless()) {
            let det = determinize_single_constraint(&mdp, &w, &q).unwrap();
            prop_assert!(det.is_deterministic());
            prop_assert!(q.satisfied_by(&evaluate(&mdp, &det, Objective::Reach).unwrap()));
        }
    }
}
