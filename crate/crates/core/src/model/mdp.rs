use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num::{One, Signed, Zero};

use crate::Rational;

#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub name: String,
    pub state: usize,
    pub transitions: Vec<(usize, Rational)>,
}

impl Action {
    pub fn prob_to(&self, t: usize) -> Rational {
        self.transitions
            .iter()
            .filter(|(s, _)| *s == t)
            .map(|(_, p)| p.clone())
            .sum()
    }
}

/// Finite MDP with d-dimensional state rewards and an optional target set.
///
/// Every action belongs to exactly one state; `available(s)` lists the
/// actions of `s` in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    names: Vec<String>,
    rewards: Vec<Vec<Rational>>,
    targets: Vec<bool>,
    actions: Vec<Action>,
    available: Vec<Vec<usize>>,
    initial: usize,
    dim: usize,
}

impl Mdp {
    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.names[s]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.name == name)
    }

    pub fn reward(&self, s: usize) -> &[Rational] {
        &self.rewards[s]
    }

    pub fn rewards(&self) -> &[Vec<Rational>] {
        &self.rewards
    }

    pub fn is_target(&self, s: usize) -> bool {
        self.targets[s]
    }

    pub fn target_flags(&self) -> &[bool] {
        &self.targets
    }

    pub fn targets(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.names.len()).filter(|&s| self.targets[s])
    }

    pub fn has_targets(&self) -> bool {
        self.targets.iter().any(|&t| t)
    }

    pub fn action(&self, a: usize) -> &Action {
        &self.actions[a]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn available(&self, s: usize) -> &[usize] {
        &self.available[s]
    }

    pub fn successors(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.available[s]
            .iter()
            .flat_map(move |&a| self.actions[a].transitions.iter().map(|(t, _)| *t))
    }

    /// Same structure with different rewards (dimension taken from the rows).
    pub fn with_rewards(&self, rewards: Vec<Vec<Rational>>) -> Mdp {
        assert_eq!(rewards.len(), self.num_states());
        let dim = rewards.first().map_or(0, Vec::len);
        Mdp {
            rewards,
            dim,
            ..self.clone()
        }
    }

    pub fn with_targets(&self, targets: Vec<bool>) -> Mdp {
        assert_eq!(targets.len(), self.num_states());
        Mdp {
            targets,
            ..self.clone()
        }
    }

    /// Redirects every action of a target state back to it; a target without
    /// actions gets a self-loop.
    pub fn make_targets_absorbing(mut self) -> Mdp {
        for s in 0..self.num_states() {
            if !self.targets[s] {
                continue;
            }
            for &a in &self.available[s] {
                self.actions[a].transitions = vec![(s, Rational::one())];
            }
            if self.available[s].is_empty() {
                let name = fresh_name(&self.actions, &format!("loop_{}", self.names[s]));
                self.actions.push(Action {
                    name,
                    state: s,
                    transitions: vec![(s, Rational::one())],
                });
                self.available[s].push(self.actions.len() - 1);
            }
        }
        self
    }

    pub(crate) fn from_parts(
        names: Vec<String>,
        rewards: Vec<Vec<Rational>>,
        targets: Vec<bool>,
        actions: Vec<Action>,
        initial: usize,
    ) -> Mdp {
        let dim = rewards.first().map_or(0, Vec::len);
        let mut available = vec![Vec::new(); names.len()];
        for (i, a) in actions.iter().enumerate() {
            available[a.state].push(i);
        }
        Mdp {
            names,
            rewards,
            targets,
            actions,
            available,
            initial,
            dim,
        }
    }
}

fn fresh_name(actions: &[Action], base: &str) -> String {
    let mut name = base.to_string();
    let mut k = 1;
    while actions.iter().any(|a| a.name == name) {
        name = format!("{base}_{k}");
        k += 1;
    }
    name
}

/// Incremental construction of an [`Mdp`]. Building never fails; run
/// [`validate_mdp`] on the result.
#[derive(Clone, Debug, Default)]
pub struct MdpBuilder {
    names: Vec<String>,
    rewards: Vec<Vec<Rational>>,
    targets: Vec<bool>,
    actions: Vec<Action>,
}

impl MdpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(
        &mut self,
        name: impl Into<String>,
        rewards: Vec<Rational>,
        target: bool,
    ) -> usize {
        self.names.push(name.into());
        self.rewards.push(rewards);
        self.targets.push(target);
        self.names.len() - 1
    }

    pub fn action(
        &mut self,
        state: usize,
        name: impl Into<String>,
        transitions: Vec<(usize, Rational)>,
    ) -> usize {
        self.actions.push(Action {
            name: name.into(),
            state,
            transitions,
        });
        self.actions.len() - 1
    }

    /// Dirac self-loop named `loop_<state>`.
    pub fn self_loop(&mut self, state: usize) -> usize {
        let name = format!("loop_{}", self.names[state]);
        self.action(state, name, vec![(state, Rational::one())])
    }

    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn build(self, initial: usize) -> Mdp {
        Mdp::from_parts(
            self.names,
            self.rewards,
            self.targets,
            self.actions,
            initial,
        )
    }
}

/// Finite Markov chain with an initial distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChain {
    names: Vec<String>,
    rows: Vec<Vec<(usize, Rational)>>,
    initial: Vec<(usize, Rational)>,
    rewards: Vec<Vec<Rational>>,
    targets: Vec<bool>,
    dim: usize,
}

impl MarkovChain {
    pub fn new(
        names: Vec<String>,
        rows: Vec<Vec<(usize, Rational)>>,
        initial: Vec<(usize, Rational)>,
        rewards: Vec<Vec<Rational>>,
        targets: Vec<bool>,
    ) -> Self {
        let dim = rewards.first().map_or(0, Vec::len);
        Self {
            names,
            rows,
            initial,
            rewards,
            targets,
            dim,
        }
    }

    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.names[s]
    }

    pub fn row(&self, s: usize) -> &[(usize, Rational)] {
        &self.rows[s]
    }

    pub fn initial(&self) -> &[(usize, Rational)] {
        &self.initial
    }

    pub fn reward(&self, s: usize) -> &[Rational] {
        &self.rewards[s]
    }

    pub fn is_target(&self, s: usize) -> bool {
        self.targets[s]
    }

    /// Row-major successor lists (indices only).
    pub fn graph(&self) -> Vec<Vec<usize>> {
        self.rows
            .iter()
            .map(|r| {
                r.iter()
                    .filter(|(_, p)| !p.is_zero())
                    .map(|(t, _)| *t)
                    .collect()
            })
            .collect()
    }

    /// Chain induced by a memoryless strategy given as a distribution over
    /// actions per state, with the MDP's initial state as Dirac start.
    pub fn from_mdp(mdp: &Mdp, choice: &[Vec<(usize, Rational)>]) -> Self {
        let rows = (0..mdp.num_states())
            .map(|s| {
                let mut acc: BTreeMap<usize, Rational> = BTreeMap::new();
                for (a, w) in &choice[s] {
                    for (t, p) in &mdp.action(*a).transitions {
                        *acc.entry(*t).or_insert_with(Rational::zero) += w * p;
                    }
                }
                acc.into_iter().collect()
            })
            .collect();
        Self::new(
            mdp.names.clone(),
            rows,
            vec![(mdp.initial(), Rational::one())],
            mdp.rewards.clone(),
            mdp.targets.clone(),
        )
    }
}

/// One violated model invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    NotStochastic {
        owner: String,
        total: Rational,
    },
    NegativeProbability {
        owner: String,
    },
    NoActions {
        state: String,
    },
    NonAbsorbingTarget {
        state: String,
    },
    SharedAction {
        action: String,
    },
    DuplicateAction {
        action: String,
    },
    DuplicateState {
        state: String,
    },
    RewardDimension {
        state: String,
        expected: usize,
        found: usize,
    },
    BadIndex {
        owner: String,
    },
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Problem::NotStochastic { owner, total } => {
                write!(f, "distribution of {owner} sums to {total}")
            }
            Problem::NegativeProbability { owner } => {
                write!(f, "{owner} has a negative probability")
            }
            Problem::NoActions { state } => write!(f, "state {state} has no enabled action"),
            Problem::NonAbsorbingTarget { state } => write!(f, "target {state} is not absorbing"),
            Problem::SharedAction { action } => {
                write!(f, "action {action} is enabled in several states")
            }
            Problem::DuplicateAction { action } => write!(f, "action {action} is declared twice"),
            Problem::DuplicateState { state } => write!(f, "state {state} is declared twice"),
            Problem::RewardDimension {
                state,
                expected,
                found,
            } => {
                write!(f, "state {state} has {found} rewards, expected {expected}")
            }
            Problem::BadIndex { owner } => write!(f, "{owner} refers to a missing state"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub problems: Vec<Problem>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.problems.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.problems {
            writeln!(f, "{p}")?;
        }
        Ok(())
    }
}

fn check_distribution(owner: &str, dist: &[(usize, Rational)], n: usize, out: &mut Vec<Problem>) {
    if dist.iter().any(|(t, _)| *t >= n) {
        out.push(Problem::BadIndex {
            owner: owner.to_string(),
        });
        return;
    }
    if dist.iter().any(|(_, p)| p.is_negative()) {
        out.push(Problem::NegativeProbability {
            owner: owner.to_string(),
        });
    }
    let total: Rational = dist.iter().map(|(_, p)| p).sum();
    if !total.is_one() {
        out.push(Problem::NotStochastic {
            owner: owner.to_string(),
            total,
        });
    }
}

fn check_names_and_rewards(names: &[String], rewards: &[Vec<Rational>], out: &mut Vec<Problem>) {
    let mut seen = HashMap::new();
    for n in names {
        if seen.insert(n.as_str(), ()).is_some() {
            out.push(Problem::DuplicateState { state: n.clone() });
        }
    }
    let dim = rewards.first().map_or(0, Vec::len);
    for (n, r) in names.iter().zip(rewards) {
        if r.len() != dim {
            out.push(Problem::RewardDimension {
                state: n.clone(),
                expected: dim,
                found: r.len(),
            });
        }
    }
}

/// Lists every violated MDP invariant; empty iff the model is well formed.
pub fn validate_mdp(mdp: &Mdp) -> ValidationReport {
    let mut problems = Vec::new();
    let n = mdp.num_states();
    check_names_and_rewards(&mdp.names, &mdp.rewards, &mut problems);
    if mdp.initial >= n {
        problems.push(Problem::BadIndex {
            owner: "initial state".into(),
        });
    }
    let mut owner_of: HashMap<&str, usize> = HashMap::new();
    for a in &mdp.actions {
        match owner_of.get(a.name.as_str()) {
            Some(&s) if s == a.state => problems.push(Problem::DuplicateAction {
                action: a.name.clone(),
            }),
            Some(_) => problems.push(Problem::SharedAction {
                action: a.name.clone(),
            }),
            None => {
                owner_of.insert(&a.name, a.state);
            }
        }
        if a.state >= n {
            problems.push(Problem::BadIndex {
                owner: format!("action {}", a.name),
            });
            continue;
        }
        check_distribution(
            &format!("action {}", a.name),
            &a.transitions,
            n,
            &mut problems,
        );
    }
    for s in 0..n {
        if mdp.available[s].is_empty() {
            problems.push(Problem::NoActions {
                state: mdp.names[s].clone(),
            });
        }
        if mdp.targets[s]
            && mdp.available[s]
                .iter()
                .any(|&a| !mdp.actions[a].prob_to(s).is_one())
        {
            problems.push(Problem::NonAbsorbingTarget {
                state: mdp.names[s].clone(),
            });
        }
    }
    ValidationReport { problems }
}

pub fn validate_chain(mc: &MarkovChain) -> ValidationReport {
    let mut problems = Vec::new();
    let n = mc.num_states();
    check_names_and_rewards(&mc.names, &mc.rewards, &mut problems);
    check_distribution("initial distribution", &mc.initial, n, &mut problems);
    for s in 0..n {
        check_distribution(
            &format!("state {}", mc.names[s]),
            &mc.rows[s],
            n,
            &mut problems,
        );
        if mc.targets[s] {
            let stay: Rational = mc.rows[s]
                .iter()
                .filter(|(t, _)| *t == s)
                .map(|(_, p)| p)
                .sum();
            if !stay.is_one() {
                problems.push(Problem::NonAbsorbingTarget {
                    state: mc.names[s].clone(),
                });
            }
        }
    }
    ValidationReport { problems }
}
