//! Example models, the 3-SAT reduction and random instances.

use std::collections::BTreeSet;

use num::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{DimQuery, Mdp, MdpBuilder, Objective, Query};
use crate::{rat, Rational};

#[derive(Clone, Debug, PartialEq)]
pub enum ExampleName {
    /// One choice between a sure 5 and a 0.9/0.1 gamble on 10/0.
    Choice,
    /// As `Choice`, but the sure 5 is a rewarding self-loop (mean payoff).
    Loop,
    /// The loop where the gamble only resolves with probability epsilon per
    /// step and otherwise returns to the start.
    Slow(Rational),
    /// Reachability with a free self-loop and a gamble on 5/-5.
    Negative,
}

impl ExampleName {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "choice" => Some(Self::Choice),
            "loop" => Some(Self::Loop),
            "negative" => Some(Self::Negative),
            _ => {
                let eps = s.strip_prefix("slow(")?.strip_suffix(')')?;
                crate::parse_rational(eps).map(Self::Slow)
            }
        }
    }
}

fn r1(n: i64) -> Vec<Rational> {
    vec![rat(n, 1)]
}

fn standard_query(objective: Objective, var: bool) -> Query {
    Query::single(
        objective,
        DimQuery {
            e: Some(rat(6, 1)),
            cvar: Some((rat(1, 20), rat(2, 1))),
            var: var.then(|| (rat(1, 20), rat(5, 1))),
        },
    )
}

/// The example models with the constraints used alongside them.
pub fn example(name: &ExampleName) -> (Mdp, Query) {
    let mut b = MdpBuilder::new();
    match name {
        ExampleName::Choice => {
            let s0 = b.state("s0", r1(0), false);
            let five = b.state("5", r1(5), true);
            let ten = b.state("10", r1(10), true);
            let zero = b.state("0", r1(0), true);
            b.action(s0, "a", vec![(five, rat(1, 1))]);
            b.action(s0, "b", vec![(ten, rat(9, 10)), (zero, rat(1, 10))]);
            for s in [five, ten, zero] {
                b.self_loop(s);
            }
            (b.build(s0), standard_query(Objective::Reach, true))
        }
        ExampleName::Loop | ExampleName::Slow(_) => {
            let s0 = b.state("s0", r1(5), false);
            let ten = b.state("10", r1(10), false);
            let zero = b.state("0", r1(0), false);
            b.action(s0, "a", vec![(s0, rat(1, 1))]);
            let b_dist = match name {
                ExampleName::Slow(eps) => vec![
                    (ten, eps * rat(9, 10)),
                    (zero, eps * rat(1, 10)),
                    (s0, Rational::one() - eps),
                ],
                _ => vec![(ten, rat(9, 10)), (zero, rat(1, 10))],
            };
            b.action(s0, "b", b_dist);
            b.self_loop(ten);
            b.self_loop(zero);
            let var = matches!(name, ExampleName::Loop);
            (b.build(s0), standard_query(Objective::Mean, var))
        }
        ExampleName::Negative => {
            let s0 = b.state("s0", r1(0), false);
            let plus = b.state("5", r1(5), true);
            let minus = b.state("-5", r1(-5), true);
            b.action(s0, "a", vec![(s0, rat(1, 1))]);
            b.action(s0, "b", vec![(plus, rat(9, 10)), (minus, rat(1, 10))]);
            b.self_loop(plus);
            b.self_loop(minus);
            let q = Query::single(
                Objective::Reach,
                DimQuery {
                    e: Some(rat(1, 1)),
                    cvar: Some((rat(1, 20), rat(-3, 1))),
                    var: None,
                },
            );
            (b.build(s0), q)
        }
    }
}

/// CNF with every clause holding exactly three literals (DIMACS style:
/// `k` is `x_k`, `-k` its negation, variables numbered from 1).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cnf3 {
    pub num_vars: usize,
    pub clauses: Vec<[i32; 3]>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CnfError {
    #[error("literal {0} refers to an undeclared variable")]
    UndeclaredVariable(i32),
    #[error("clause {0} has {1} literals, expected 1 to 3")]
    ClauseWidth(usize, usize),
    #[error("malformed DIMACS: {0}")]
    Dimacs(String),
}

impl Cnf3 {
    /// Clauses with one or two literals are padded by repeating the last one.
    pub fn new(num_vars: usize, clauses: Vec<Vec<i32>>) -> Result<Self, CnfError> {
        let mut out = Vec::with_capacity(clauses.len());
        for (i, c) in clauses.iter().enumerate() {
            if c.is_empty() || c.len() > 3 {
                return Err(CnfError::ClauseWidth(i, c.len()));
            }
            for &l in c {
                if l == 0 || l.unsigned_abs() as usize > num_vars {
                    return Err(CnfError::UndeclaredVariable(l));
                }
            }
            let last = *c.last().unwrap();
            out.push([c[0], *c.get(1).unwrap_or(&last), *c.get(2).unwrap_or(&last)]);
        }
        Ok(Self {
            num_vars,
            clauses: out,
        })
    }

    pub fn from_dimacs(text: &str) -> Result<Self, CnfError> {
        let mut num_vars = None;
        let mut clauses = Vec::new();
        let mut current = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
                continue;
            }
            if let Some(header) = line.strip_prefix('p') {
                let parts: Vec<&str> = header.split_whitespace().collect();
                if parts.len() != 3 || parts[0] != "cnf" {
                    return Err(CnfError::Dimacs(format!("bad header `{line}`")));
                }
                num_vars = Some(
                    parts[1]
                        .parse()
                        .map_err(|_| CnfError::Dimacs(line.into()))?,
                );
                continue;
            }
            for tok in line.split_whitespace() {
                let l: i32 = tok
                    .parse()
                    .map_err(|_| CnfError::Dimacs(format!("bad literal `{tok}`")))?;
                if l == 0 {
                    clauses.push(std::mem::take(&mut current));
                } else {
                    current.push(l);
                }
            }
        }
        if !current.is_empty() {
            clauses.push(current);
        }
        let num_vars = num_vars.ok_or_else(|| CnfError::Dimacs("missing `p cnf` header".into()))?;
        Self::new(num_vars, clauses)
    }

    pub fn to_dimacs(&self) -> String {
        let mut s = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for c in &self.clauses {
            s.push_str(&format!("{} {} {} 0\n", c[0], c[1], c[2]));
        }
        s
    }
}

/// Risk level and threshold of the per-variable CVaR constraint for `m`
/// variables: `p = 1 - 2/(5m)`, `c = 5/(10m - 4)`. Either pure choice in the
/// variable gadget attains exactly `c`; every strict mixture stays below.
pub fn variable_constraint(m: usize) -> (Rational, Rational) {
    let m = m as i64;
    (Rational::one() - rat(2, 5 * m), rat(5, 10 * m - 4))
}

/// 3-SAT gadget MDP with `d = M + N` dimensions (variables first, then
/// clauses) and reachability query; the query is satisfiable iff the
/// formula is.
///
/// From `s0` a variable gadget `?m` is picked uniformly. Action `xm=tt`
/// leads to `10_m`/`0_m`/`x_m` with 0.45/0.05/0.5, action `xm=ff` to
/// `5_m`/`~x_m` with 0.5/0.5. The commit states `x_m` and `~x_m` move
/// uniformly to the clauses containing the literal (to a zero `sink` if
/// there are none). Clause state `c_n` pays 1 in dimension `M + n`.
pub fn sat_reduction(cnf: &Cnf3) -> (Mdp, Query) {
    let m_vars = cnf.num_vars;
    let n_cl = cnf.clauses.len();
    let d = m_vars + n_cl;
    let unit = |j: usize, v: i64| -> Vec<Rational> {
        let mut r = vec![Rational::zero(); d];
        r[j] = rat(v, 1);
        r
    };
    let zero = || vec![Rational::zero(); d];
    let mut b = MdpBuilder::new();
    let s0 = b.state("s0", zero(), false);
    let clause_states: Vec<usize> = (0..n_cl)
        .map(|n| b.state(format!("c{}", n + 1), unit(m_vars + n, 1), true))
        .collect();
    let mut sink = None;
    let mut gadgets = Vec::new();
    for m in 0..m_vars {
        let v = m + 1;
        let q = b.state(format!("?{v}"), zero(), false);
        let hi = b.state(format!("10_{v}"), unit(m, 10), true);
        let lo = b.state(format!("0_{v}"), zero(), true);
        let mid = b.state(format!("5_{v}"), unit(m, 5), true);
        let pos = b.state(format!("x{v}"), zero(), false);
        let neg = b.state(format!("~x{v}"), zero(), false);
        b.action(
            q,
            format!("x{v}=tt"),
            vec![(hi, rat(9, 20)), (lo, rat(1, 20)), (pos, rat(1, 2))],
        );
        b.action(
            q,
            format!("x{v}=ff"),
            vec![(mid, rat(1, 2)), (neg, rat(1, 2))],
        );
        for s in [hi, lo, mid] {
            b.self_loop(s);
        }
        for (commit, lit, label) in [
            (pos, v as i32, format!("x{v}")),
            (neg, -(v as i32), format!("~x{v}")),
        ] {
            let hits: BTreeSet<usize> = (0..n_cl)
                .filter(|&n| cnf.clauses[n].contains(&lit))
                .collect();
            let dist = if hits.is_empty() {
                let t = *sink.get_or_insert_with(|| {
                    let t = b.state("sink", vec![Rational::zero(); d], true);
                    b.self_loop(t);
                    t
                });
                vec![(t, Rational::one())]
            } else {
                let k = hits.len() as i64;
                hits.iter()
                    .map(|&n| (clause_states[n], rat(1, k)))
                    .collect()
            };
            b.action(commit, format!("commit_{label}"), dist);
        }
        gadgets.push(q);
    }
    for &c in &clause_states {
        b.self_loop(c);
    }
    let k = m_vars as i64;
    b.action(
        s0,
        "start",
        gadgets.iter().map(|&q| (q, rat(1, k))).collect(),
    );

    let (p, c) = variable_constraint(m_vars);
    let mut dims: Vec<DimQuery> = (0..m_vars)
        .map(|_| DimQuery {
            cvar: Some((p.clone(), c.clone())),
            ..DimQuery::default()
        })
        .collect();
    let clause_bound = rat(1, 2 * k * n_cl.max(1) as i64);
    dims.extend((0..n_cl).map(|_| DimQuery {
        e: Some(clause_bound.clone()),
        ..DimQuery::default()
    }));
    (b.build(s0), Query::new(Objective::Reach, dims))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomMdpConfig {
    pub states: usize,
    pub actions_per_state: usize,
    /// Successors per action.
    pub density: usize,
    /// Inclusive integer reward range.
    pub reward_range: (i64, i64),
    pub dim: usize,
    /// Fraction of (absorbing) target states, never the initial state.
    pub target_fraction: f64,
    pub seed: u64,
}

impl Default for RandomMdpConfig {
    fn default() -> Self {
        Self {
            states: 5,
            actions_per_state: 2,
            density: 2,
            reward_range: (0, 10),
            dim: 1,
            target_fraction: 0.3,
            seed: 0,
        }
    }
}

/// Seeded random MDP; targets get a single self-loop, every other state
/// `actions_per_state` actions with `density` successors and integer
/// weights 1..=9 normalized to probabilities.
pub fn random_mdp(cfg: &RandomMdpConfig) -> Mdp {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.states.max(1);
    let n_targets = if n > 1 {
        ((n as f64 * cfg.target_fraction).round() as usize).min(n - 1)
    } else {
        0
    };
    let mut b = MdpBuilder::new();
    for s in 0..n {
        let rewards = (0..cfg.dim)
            .map(|_| rat(rng.random_range(cfg.reward_range.0..=cfg.reward_range.1), 1))
            .collect();
        b.state(format!("s{s}"), rewards, s >= n - n_targets);
    }
    for s in 0..n {
        if s >= n - n_targets {
            b.self_loop(s);
            continue;
        }
        for k in 0..cfg.actions_per_state.max(1) {
            let succ: BTreeSet<usize> = (0..cfg.density.max(1))
                .map(|_| rng.random_range(0..n))
                .collect();
            let weights: Vec<(usize, i64)> = succ
                .into_iter()
                .map(|t| (t, rng.random_range(1..=9)))
                .collect();
            let total: i64 = weights.iter().map(|(_, w)| w).sum();
            b.action(
                s,
                format!("a{s}_{k}"),
                weights
                    .into_iter()
                    .map(|(t, w)| (t, rat(w, total)))
                    .collect(),
            );
        }
    }
    b.build(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_mdp;

    #[test]
    fn choice_example_matches_the_figure() {
        let (mdp, q) = example(&ExampleName::Choice);
        let b = mdp.action(mdp.action_index("b").unwrap());
        let probs: Vec<_> = b
            .transitions
            .iter()
            .map(|(t, p)| (mdp.reward(*t)[0].clone(), p.clone()))
            .collect();
        assert_eq!(
            probs,
            vec![(rat(10, 1), rat(9, 10)), (rat(0, 1), rat(1, 10))]
        );
        assert_eq!(q.dims[0].e, Some(rat(6, 1)));
        assert_eq!(mdp.targets().count(), 3);
    }

    #[test]
    fn slow_example_masses() {
        let (mdp, q) = example(&ExampleName::Slow(rat(1, 8)));
        let b = mdp.action(mdp.action_index("b").unwrap());
        let masses: Vec<_> = b.transitions.iter().map(|(_, p)| p.clone()).collect();
        assert_eq!(masses, vec![rat(9, 80), rat(1, 80), rat(7, 8)]);
        assert_eq!(q.objective, Objective::Mean);
    }

    #[test]
    fn negative_example_query() {
        let (mdp, q) = example(&ExampleName::Negative);
        let rewards: BTreeSet<_> = mdp.targets().map(|s| mdp.reward(s)[0].clone()).collect();
        assert_eq!(rewards, BTreeSet::from([rat(-5, 1), rat(5, 1)]));
        assert_eq!(q.dims[0].cvar, Some((rat(1, 20), rat(-3, 1))));
        assert_eq!(q.dims[0].e, Some(rat(1, 1)));
    }

    #[test]
    fn example_names_parse() {
        assert_eq!(
            ExampleName::parse("slow(1/8)"),
            Some(ExampleName::Slow(rat(1, 8)))
        );
        assert_eq!(ExampleName::parse("loop"), Some(ExampleName::Loop));
        assert_eq!(ExampleName::parse("nope"), None);
    }

    #[test]
    fn gadget_structure() {
        let cnf = Cnf3::new(2, vec![vec![1, 2, -1], vec![-2]]).unwrap();
        let (mdp, q) = sat_reduction(&cnf);
        assert!(validate_mdp(&mdp).is_ok());
        assert_eq!(mdp.dim(), 4);
        assert_eq!(q.dim(), 4);
        // Per variable: ?m, 10_m, 0_m, 5_m and the commit pair.
        for v in 1..=2 {
            for name in [
                format!("?{v}"),
                format!("10_{v}"),
                format!("0_{v}"),
                format!("5_{v}"),
                format!("x{v}"),
                format!("~x{v}"),
            ] {
                assert!(mdp.state_index(&name).is_some(), "{name}");
            }
        }
        // x1 appears in clause 1 only; ~x2 in clause 2 only; x2 in clause 1.
        let commit = |name: &str| {
            mdp.action(mdp.action_index(name).unwrap())
                .transitions
                .clone()
        };
        assert_eq!(
            commit("commit_x1"),
            vec![(mdp.state_index("c1").unwrap(), rat(1, 1))]
        );
        assert_eq!(
            commit("commit_~x2"),
            vec![(mdp.state_index("c2").unwrap(), rat(1, 1))]
        );
        assert_eq!(
            commit("commit_~x1"),
            vec![(mdp.state_index("c1").unwrap(), rat(1, 1))]
        );
        assert_eq!(q.dims[0].cvar, Some(variable_constraint(2)));
        assert_eq!(q.dims[2].e, Some(rat(1, 8)));
        assert!(mdp.state_index("sink").is_none());
    }

    #[test]
    fn unused_literal_goes_to_sink() {
        let cnf = Cnf3::new(1, vec![vec![1]]).unwrap();
        let (mdp, _) = sat_reduction(&cnf);
        let sink = mdp.state_index("sink").unwrap();
        let commit = mdp.action(mdp.action_index("commit_~x1").unwrap());
        assert_eq!(commit.transitions, vec![(sink, rat(1, 1))]);
    }

    #[test]
    fn dimacs_round_trip_and_errors() {
        let cnf = Cnf3::from_dimacs("c test\np cnf 3 2\n1 -2 3 0\n-1 0\n").unwrap();
        assert_eq!(cnf.clauses, vec![[1, -2, 3], [-1, -1, -1]]);
        assert_eq!(Cnf3::from_dimacs(&cnf.to_dimacs()).unwrap(), cnf);
        assert_eq!(
            Cnf3::new(1, vec![vec![2]]),
            Err(CnfError::UndeclaredVariable(2))
        );
        assert!(Cnf3::from_dimacs("1 2 0").is_err());
    }

    #[test]
    fn random_mdp_is_seeded_and_valid() {
        let one = random_mdp(&RandomMdpConfig {
            states: 1,
            actions_per_state: 1,
            ..Default::default()
        });
        assert_eq!(one.num_actions(), 1);
        assert_eq!(one.action(0).transitions, vec![(0, rat(1, 1))]);
        let cfg = RandomMdpConfig {
            states: 5,
            actions_per_state: 2,
            dim: 2,
            seed: 7,
            ..Default::default()
        };
        assert_eq!(random_mdp(&cfg), random_mdp(&cfg));
        let mdp = random_mdp(&cfg);
        assert!(validate_mdp(&mdp).is_ok());
        assert_eq!(mdp.dim(), 2);
    }
}
