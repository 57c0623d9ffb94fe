use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap, VecDeque};

use num::{One, Signed, Zero};
use thiserror::Error;

use super::{MarkovChain, Mdp};
use crate::Rational;

/// Sparse distribution over indices (actions, states or memory elements).
pub type Dist = Vec<(usize, Rational)>;

/// Merges duplicate indices, drops zero entries and sorts by index.
pub fn normalize_dist(d: impl IntoIterator<Item = (usize, Rational)>) -> Dist {
    let mut acc: BTreeMap<usize, Rational> = BTreeMap::new();
    for (i, p) in d {
        *acc.entry(i).or_insert_with(Rational::zero) += p;
    }
    acc.into_iter().filter(|(_, p)| !p.is_zero()).collect()
}

/// Key of a memory update. An entry with `action: None` applies to every
/// action that lands in `state` with memory `memory`; an exact entry takes
/// precedence. Without any entry the memory is kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UpdateKey {
    pub action: Option<usize>,
    pub state: usize,
    pub memory: usize,
}

/// Finite-memory stochastic-update strategy over a fixed MDP signature.
///
/// A play starts by drawing memory from `initial`. In state `s` with memory
/// `m` the action is drawn from `next_move[(s, m)]` (states with a single
/// action may be omitted); after action `a` lands in `s'`, the new memory is
/// drawn from the update for `(a, s', m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategySpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub memory: Vec<String>,
    pub initial: Dist,
    pub next_move: BTreeMap<(usize, usize), Dist>,
    pub update: BTreeMap<UpdateKey, Dist>,
}

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("strategy was built for a different model ({0})")]
    Signature(String),
    #[error("no move defined in state {state} with memory {memory}")]
    UndefinedMove { state: String, memory: String },
    #[error("move in state {state} uses action {action} which is not enabled there")]
    ForeignAction { state: String, action: String },
    #[error("distribution {0} does not sum to 1")]
    NotStochastic(String),
    #[error("memory index {0} out of range")]
    Memory(usize),
    #[error("mixing weight {0} outside [0,1]")]
    Weight(Rational),
}

impl StrategySpec {
    /// Single memory element; `moves[s]` is ignored for single-action states
    /// when empty.
    pub fn memoryless(mdp: &Mdp, moves: Vec<Dist>) -> Self {
        let next_move = moves
            .into_iter()
            .enumerate()
            .filter(|(_, d)| !d.is_empty())
            .map(|(s, d)| ((s, 0), d))
            .collect();
        Self {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            memory: vec!["0".into()],
            initial: vec![(0, Rational::one())],
            next_move,
            update: BTreeMap::new(),
        }
    }

    /// Memoryless deterministic strategy from one action per state.
    pub fn deterministic(mdp: &Mdp, choice: &[usize]) -> Self {
        Self::memoryless(
            mdp,
            choice.iter().map(|&a| vec![(a, Rational::one())]).collect(),
        )
    }

    pub fn is_memoryless(&self) -> bool {
        self.memory.len() == 1
    }

    pub fn is_deterministic(&self) -> bool {
        let dirac = |d: &Dist| d.len() == 1;
        dirac(&self.initial)
            && self.next_move.values().all(dirac)
            && self.update.values().all(dirac)
    }

    pub fn move_at<'a>(&'a self, mdp: &Mdp, s: usize, m: usize) -> Option<Cow<'a, Dist>> {
        match self.next_move.get(&(s, m)) {
            Some(d) => Some(Cow::Borrowed(d)),
            None if mdp.available(s).len() == 1 => {
                Some(Cow::Owned(vec![(mdp.available(s)[0], Rational::one())]))
            }
            None => None,
        }
    }

    pub fn update_at(&self, action: usize, state: usize, memory: usize) -> Cow<'_, Dist> {
        let exact = UpdateKey {
            action: Some(action),
            state,
            memory,
        };
        let any = UpdateKey {
            action: None,
            state,
            memory,
        };
        match self.update.get(&exact).or_else(|| self.update.get(&any)) {
            Some(d) => Cow::Borrowed(d),
            None => Cow::Owned(vec![(memory, Rational::one())]),
        }
    }

    /// Memoryless view: the action distribution per state (memory 0).
    pub fn memoryless_moves(&self, mdp: &Mdp) -> Option<Vec<Dist>> {
        if !self.is_memoryless() {
            return None;
        }
        (0..mdp.num_states())
            .map(|s| self.move_at(mdp, s, 0).map(Cow::into_owned))
            .collect()
    }

    pub fn check_signature(&self, mdp: &Mdp) -> Result<(), StrategyError> {
        if self.num_states != mdp.num_states() || self.num_actions != mdp.num_actions() {
            return Err(StrategyError::Signature(format!(
                "{} states/{} actions, model has {}/{}",
                self.num_states,
                self.num_actions,
                mdp.num_states(),
                mdp.num_actions()
            )));
        }
        Ok(())
    }

    /// Structural checks against `mdp`; moves that are never used may still
    /// be undefined.
    pub fn validate(&self, mdp: &Mdp) -> Result<(), StrategyError> {
        self.check_signature(mdp)?;
        let k = self.memory.len();
        let stochastic = |d: &Dist, what: &str| -> Result<(), StrategyError> {
            if d.iter().any(|(_, p)| p.is_negative())
                || !d.iter().map(|(_, p)| p).sum::<Rational>().is_one()
            {
                return Err(StrategyError::NotStochastic(what.into()));
            }
            Ok(())
        };
        stochastic(&self.initial, "initial memory")?;
        for &(m, _) in &self.initial {
            if m >= k {
                return Err(StrategyError::Memory(m));
            }
        }
        for (&(s, m), d) in &self.next_move {
            if s >= mdp.num_states() || m >= k {
                return Err(StrategyError::Memory(m));
            }
            stochastic(d, &format!("move at {}", mdp.state_name(s)))?;
            for &(a, _) in d {
                if a >= mdp.num_actions() || mdp.action(a).state != s {
                    return Err(StrategyError::ForeignAction {
                        state: mdp.state_name(s).into(),
                        action: mdp.actions().get(a).map_or("?".into(), |x| x.name.clone()),
                    });
                }
            }
        }
        for (key, d) in &self.update {
            if key.memory >= k || d.iter().any(|&(m, _)| m >= k) {
                return Err(StrategyError::Memory(key.memory));
            }
            stochastic(
                d,
                &format!("memory update at {}", mdp.state_name(key.state)),
            )?;
        }
        Ok(())
    }
}

/// `lambda * s1 + (1 - lambda) * s2`: memory is the tagged disjoint union
/// (`1:m` and `2:m`) and the initial memory picks `s1` with probability
/// `lambda`, so the run measure is the same convex combination.
pub fn mix_strategies(
    s1: &StrategySpec,
    s2: &StrategySpec,
    lambda: &Rational,
) -> Result<StrategySpec, StrategyError> {
    if s1.num_states != s2.num_states || s1.num_actions != s2.num_actions {
        return Err(StrategyError::Signature("mixed strategies disagree".into()));
    }
    if lambda.is_negative() || *lambda > Rational::one() {
        return Err(StrategyError::Weight(lambda.clone()));
    }
    let off = s1.memory.len();
    let shift =
        |d: &Dist, k: usize| -> Dist { d.iter().map(|(m, p)| (m + k, p.clone())).collect() };
    let mu = Rational::one() - lambda;
    let memory = s1
        .memory
        .iter()
        .map(|m| format!("1:{m}"))
        .chain(s2.memory.iter().map(|m| format!("2:{m}")))
        .collect();
    let initial = normalize_dist(
        s1.initial
            .iter()
            .map(|(m, p)| (*m, p * lambda))
            .chain(s2.initial.iter().map(|(m, p)| (m + off, p * &mu))),
    );
    let mut next_move = s1.next_move.clone();
    for (&(s, m), d) in &s2.next_move {
        next_move.insert((s, m + off), d.clone());
    }
    let mut update = s1.update.clone();
    for (k, d) in &s2.update {
        update.insert(
            UpdateKey {
                memory: k.memory + off,
                ..*k
            },
            shift(d, off),
        );
    }
    Ok(StrategySpec {
        num_states: s1.num_states,
        num_actions: s1.num_actions,
        memory,
        initial,
        next_move,
        update,
    })
}

/// Chain of a play under a strategy, with states `(state, memory, action)`.
#[derive(Clone, Debug)]
pub struct InducedChain {
    pub chain: MarkovChain,
    pub triples: Vec<(usize, usize, usize)>,
}

/// Builds the reachable part of the product of `mdp` and `strategy`.
///
/// The transition `(s, m, a) -> (s', m', a')` has probability
/// `Δ(a, s') * update(a, s', m)(m') * move(s', m')(a')`. Triples at target
/// states are made absorbing.
pub fn induced_chain(mdp: &Mdp, strategy: &StrategySpec) -> Result<InducedChain, StrategyError> {
    strategy.check_signature(mdp)?;
    let mut index: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut triples = Vec::new();
    let mut queue = VecDeque::new();
    let mut intern =
        |t: (usize, usize, usize), triples: &mut Vec<_>, queue: &mut VecDeque<usize>| -> usize {
            *index.entry(t).or_insert_with(|| {
                triples.push(t);
                queue.push_back(triples.len() - 1);
                triples.len() - 1
            })
        };
    let undefined = |s: usize, m: usize| StrategyError::UndefinedMove {
        state: mdp.state_name(s).into(),
        memory: strategy.memory.get(m).cloned().unwrap_or_default(),
    };

    let s0 = mdp.initial();
    let mut initial = Vec::new();
    for (m, pm) in &strategy.initial {
        let mv = strategy
            .move_at(mdp, s0, *m)
            .ok_or_else(|| undefined(s0, *m))?;
        for (a, pa) in mv.iter() {
            let i = intern((s0, *m, *a), &mut triples, &mut queue);
            initial.push((i, pm * pa));
        }
    }
    let mut rows: Vec<Dist> = Vec::new();
    while let Some(i) = queue.pop_front() {
        let (s, m, a) = triples[i];
        let row = if mdp.is_target(s) {
            vec![(i, Rational::one())]
        } else {
            let mut out = Vec::new();
            for (t, pt) in &mdp.action(a).transitions {
                for (m2, pm) in strategy.update_at(a, *t, m).iter() {
                    let mv = strategy
                        .move_at(mdp, *t, *m2)
                        .ok_or_else(|| undefined(*t, *m2))?;
                    for (a2, pa) in mv.iter() {
                        let j = intern((*t, *m2, *a2), &mut triples, &mut queue);
                        out.push((j, pt * pm * pa));
                    }
                }
            }
            normalize_dist(out)
        };
        if rows.len() <= i {
            rows.resize(i + 1, Vec::new());
        }
        rows[i] = row;
    }
    let names = triples
        .iter()
        .map(|&(s, m, a)| {
            format!(
                "{}|{}|{}",
                mdp.state_name(s),
                strategy.memory[m],
                mdp.action(a).name
            )
        })
        .collect();
    let rewards = triples
        .iter()
        .map(|&(s, _, _)| mdp.reward(s).to_vec())
        .collect();
    let targets = triples.iter().map(|&(s, _, _)| mdp.is_target(s)).collect();
    let chain = MarkovChain::new(names, rows, normalize_dist(initial), rewards, targets);
    Ok(InducedChain { chain, triples })
}
