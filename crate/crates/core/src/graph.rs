//! SCCs, maximal end components, the MEC quotient and the preprocessing
//! steps of the reachability procedure.

use std::collections::{BTreeMap, BTreeSet};

use num::{One, Signed, Zero};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::model::{Action, MarkovChain, Mdp};
use crate::Rational;

/// SCCs of a graph given by successor lists, in reverse topological order
/// (bottom components first). Members are sorted.
pub fn scc_of_graph(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(succ.len(), 0);
    for _ in 0..succ.len() {
        g.add_node(());
    }
    for (s, ts) in succ.iter().enumerate() {
        for &t in ts {
            g.add_edge((s as u32).into(), (t as u32).into(), ());
        }
    }
    tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            c.sort_unstable();
            c
        })
        .collect()
}

pub fn sccs(mc: &MarkovChain) -> Vec<Vec<usize>> {
    scc_of_graph(&mc.graph())
}

/// SCCs without an edge leaving them.
pub fn bsccs(mc: &MarkovChain) -> Vec<Vec<usize>> {
    let g = mc.graph();
    let comps = scc_of_graph(&g);
    let mut comp_of = vec![0; g.len()];
    for (i, c) in comps.iter().enumerate() {
        for &s in c {
            comp_of[s] = i;
        }
    }
    comps
        .iter()
        .enumerate()
        .filter(|(i, c)| c.iter().all(|&s| g[s].iter().all(|&t| comp_of[t] == *i)))
        .map(|(_, c)| c.clone())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mec {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MecDecomposition {
    pub mecs: Vec<Mec>,
    pub state_to_mec: Vec<Option<usize>>,
}

impl MecDecomposition {
    /// Whether action `a` stays inside the MEC of its state.
    pub fn is_internal(&self, mdp: &Mdp, a: usize) -> bool {
        match self.state_to_mec[mdp.action(a).state] {
            Some(i) => self.mecs[i].actions.binary_search(&a).is_ok(),
            None => false,
        }
    }
}

/// Iterated SCC refinement: drop actions that can leave the SCC of their
/// state, drop states left without actions, repeat until stable.
pub fn mec_decomposition(mdp: &Mdp) -> MecDecomposition {
    let n = mdp.num_states();
    let mut alive_state = vec![true; n];
    let mut alive_action = vec![true; mdp.num_actions()];
    let mut comp_of = vec![usize::MAX; n];
    loop {
        let succ: Vec<Vec<usize>> = (0..n)
            .map(|s| {
                if !alive_state[s] {
                    return Vec::new();
                }
                mdp.available(s)
                    .iter()
                    .filter(|&&a| alive_action[a])
                    .flat_map(|&a| mdp.action(a).transitions.iter().map(|(t, _)| *t))
                    .filter(|&t| alive_state[t])
                    .collect()
            })
            .collect();
        for (i, c) in scc_of_graph(&succ).into_iter().enumerate() {
            for s in c {
                comp_of[s] = i;
            }
        }
        let mut changed = false;
        for (a, act) in mdp.actions().iter().enumerate() {
            if !alive_action[a] {
                continue;
            }
            let leaves = !alive_state[act.state]
                || act.transitions.iter().any(|(t, p)| {
                    !p.is_zero() && (!alive_state[*t] || comp_of[*t] != comp_of[act.state])
                });
            if leaves {
                alive_action[a] = false;
                changed = true;
            }
        }
        for s in 0..n {
            if alive_state[s] && !mdp.available(s).iter().any(|&a| alive_action[a]) {
                alive_state[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for s in (0..n).filter(|&s| alive_state[s]) {
        groups.entry(comp_of[s]).or_default().push(s);
    }
    let mut mecs: Vec<Mec> = groups
        .into_values()
        .map(|states| {
            let mut actions: Vec<usize> = states
                .iter()
                .flat_map(|&s| {
                    mdp.available(s)
                        .iter()
                        .copied()
                        .filter(|&a| alive_action[a])
                })
                .collect();
            actions.sort_unstable();
            Mec { states, actions }
        })
        .collect();
    mecs.sort_by_key(|m| m.states[0]);
    let mut state_to_mec = vec![None; n];
    for (i, m) in mecs.iter().enumerate() {
        for &s in &m.states {
            state_to_mec[s] = Some(i);
        }
    }
    MecDecomposition { mecs, state_to_mec }
}

/// MDP with every MEC collapsed to one state.
#[derive(Clone, Debug)]
pub struct QuotientMap {
    pub quotient: Mdp,
    /// Original state -> quotient state.
    pub lift: Vec<usize>,
    /// Quotient state -> original representative.
    pub representative: Vec<usize>,
    /// Quotient action -> original action; `None` for the added `stay` loops.
    pub action_origin: Vec<Option<usize>>,
    pub mecs: MecDecomposition,
    /// Quotient state -> index of its MEC, if it stands for one.
    pub mec_of: Vec<Option<usize>>,
}

/// Collapses each MEC into its member with the least name. Actions inside a
/// MEC disappear, leaving actions are re-targeted through the lift, and each
/// collapsed state gets a `stay` self-loop standing for remaining forever.
pub fn mec_quotient(mdp: &Mdp) -> QuotientMap {
    let mecs = mec_decomposition(mdp);
    let n = mdp.num_states();
    let rep_of_mec: Vec<usize> = mecs
        .mecs
        .iter()
        .map(|m| *m.states.iter().min_by_key(|&&s| mdp.state_name(s)).unwrap())
        .collect();
    let mut keep: Vec<usize> = (0..n)
        .filter(|&s| match mecs.state_to_mec[s] {
            Some(i) => rep_of_mec[i] == s,
            None => true,
        })
        .collect();
    keep.sort_unstable();
    let mut q_index = vec![usize::MAX; n];
    for (i, &s) in keep.iter().enumerate() {
        q_index[s] = i;
    }
    let lift: Vec<usize> = (0..n)
        .map(|s| match mecs.state_to_mec[s] {
            Some(i) => q_index[rep_of_mec[i]],
            None => q_index[s],
        })
        .collect();
    let mut actions = Vec::new();
    let mut action_origin = Vec::new();
    for (a, act) in mdp.actions().iter().enumerate() {
        if mecs.is_internal(mdp, a) {
            continue;
        }
        let mut acc: BTreeMap<usize, Rational> = BTreeMap::new();
        for (t, p) in &act.transitions {
            *acc.entry(lift[*t]).or_insert_with(Rational::zero) += p;
        }
        actions.push(Action {
            name: act.name.clone(),
            state: lift[act.state],
            transitions: acc.into_iter().collect(),
        });
        action_origin.push(Some(a));
    }
    let mut mec_of = vec![None; keep.len()];
    for (i, &r) in rep_of_mec.iter().enumerate() {
        let q = q_index[r];
        mec_of[q] = Some(i);
        let mut name = format!("stay_{}", mdp.state_name(r));
        while mdp.action_index(&name).is_some() {
            name.push('_');
        }
        actions.push(Action {
            name,
            state: q,
            transitions: vec![(q, Rational::one())],
        });
        action_origin.push(None);
    }
    let quotient = Mdp::from_parts(
        keep.iter()
            .map(|&s| mdp.state_name(s).to_string())
            .collect(),
        keep.iter().map(|&s| mdp.reward(s).to_vec()).collect(),
        keep.iter().map(|&s| mdp.is_target(s)).collect(),
        actions,
        lift[mdp.initial()],
    );
    QuotientMap {
        quotient,
        lift,
        representative: keep,
        action_origin,
        mecs,
        mec_of,
    }
}

/// States from which some state in `goal` is reachable under some strategy.
pub fn can_reach(mdp: &Mdp, goal: &[bool]) -> Vec<bool> {
    let n = mdp.num_states();
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for act in mdp.actions() {
        for (t, p) in &act.transitions {
            if !p.is_zero() {
                pred[*t].push(act.state);
            }
        }
    }
    let mut seen = goal.to_vec();
    let mut stack: Vec<usize> = (0..n).filter(|&s| goal[s]).collect();
    while let Some(t) = stack.pop() {
        for &s in &pred[t] {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
    }
    seen
}

/// Turns every MEC that cannot reach a target into zero-reward absorbing
/// targets, so afterwards targets are reachable from every state.
pub fn cleanup(mdp: &Mdp) -> Mdp {
    let reach = can_reach(mdp, mdp.target_flags());
    let mecs = mec_decomposition(mdp);
    let mut targets = mdp.target_flags().to_vec();
    let mut rewards = mdp.rewards().to_vec();
    let mut changed = false;
    for m in &mecs.mecs {
        if m.states.iter().any(|&s| reach[s]) {
            continue;
        }
        for &s in &m.states {
            targets[s] = true;
            rewards[s] = vec![Rational::zero(); mdp.dim()];
            changed = true;
        }
    }
    if !changed {
        return mdp.clone();
    }
    mdp.with_rewards(rewards)
        .with_targets(targets)
        .make_targets_absorbing()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attraction {
    /// Targets are reached almost surely under every strategy.
    A1,
    /// Every target reward is non-negative.
    A2,
    Both,
    Neither,
}

impl Attraction {
    pub fn holds(self) -> bool {
        self != Attraction::Neither
    }
}

/// A1 holds iff every MEC contains a target (with absorbing targets a
/// strategy avoids them forever iff it can stay in a target-free end
/// component); A2 is a scan of target rewards.
pub fn check_attraction(mdp: &Mdp) -> Attraction {
    let mecs = mec_decomposition(mdp);
    let a1 = mecs
        .mecs
        .iter()
        .all(|m| m.states.iter().any(|&s| mdp.is_target(s)));
    let a2 = mdp
        .targets()
        .all(|s| mdp.reward(s).iter().all(|r| !r.is_negative()));
    match (a1, a2) {
        (true, true) => Attraction::Both,
        (true, false) => Attraction::A1,
        (false, true) => Attraction::A2,
        (false, false) => Attraction::Neither,
    }
}

/// For each state in `region`, an action among `allowed` that reaches
/// `goal` with positive probability in a bounded number of steps; playing
/// these forever reaches `goal` almost surely provided `allowed` actions
/// never leave the region. Goal states and unreachable states get `None`.
pub fn attractor(
    mdp: &Mdp,
    region: &BTreeSet<usize>,
    allowed: &BTreeSet<usize>,
    goal: &BTreeSet<usize>,
) -> Vec<Option<usize>> {
    let mut choice = vec![None; mdp.num_states()];
    let mut won: BTreeSet<usize> = goal.clone();
    loop {
        let mut added = Vec::new();
        for &s in region {
            if won.contains(&s) {
                continue;
            }
            let pick = mdp
                .available(s)
                .iter()
                .copied()
                .filter(|a| allowed.contains(a))
                .find(|&a| {
                    mdp.action(a)
                        .transitions
                        .iter()
                        .any(|(t, p)| p.is_positive() && won.contains(t))
                });
            if let Some(a) = pick {
                choice[s] = Some(a);
                added.push(s);
            }
        }
        if added.is_empty() {
            return choice;
        }
        won.extend(added);
    }
}

/// Trivial helper for callers that need "probability one" checks.
pub fn is_one(r: &Rational) -> bool {
    r.is_one()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gadgets::{example, random_mdp, ExampleName, RandomMdpConfig};
    use crate::model::{MdpBuilder, StrategySpec};
    use crate::rat;

    fn names(mdp: &Mdp, states: &[usize]) -> Vec<String> {
        states
            .iter()
            .map(|&s| mdp.state_name(s).to_string())
            .collect()
    }

    #[test]
    fn chain_components() {
        let two_cycle = MarkovChain::new(
            vec!["s".into(), "t".into()],
            vec![vec![(1, rat(1, 1))], vec![(0, rat(1, 1))]],
            vec![(0, rat(1, 1))],
            vec![vec![], vec![]],
            vec![false, false],
        );
        assert_eq!(sccs(&two_cycle), vec![vec![0, 1]]);
        assert_eq!(bsccs(&two_cycle), vec![vec![0, 1]]);
        let absorbing = MarkovChain::new(
            vec!["x".into()],
            vec![vec![(0, rat(1, 1))]],
            vec![(0, rat(1, 1))],
            vec![vec![]],
            vec![false],
        );
        assert_eq!(bsccs(&absorbing), vec![vec![0]]);
    }

    #[test]
    fn gamble_bsccs_are_the_value_states() {
        let (mdp, _) = example(&ExampleName::Choice);
        let b = mdp.action_index("b").unwrap();
        let mut moves = vec![Vec::new(); mdp.num_states()];
        moves[mdp.initial()] = vec![(b, rat(1, 1))];
        let s = StrategySpec::memoryless(&mdp, moves);
        let ic = crate::model::induced_chain(&mdp, &s).unwrap();
        let mut got: Vec<String> = bsccs(&ic.chain)
            .into_iter()
            .map(|c| mdp.state_name(ic.triples[c[0]].0).to_string())
            .collect();
        got.sort();
        assert_eq!(got, vec!["0", "10"]);
    }

    #[test]
    fn mecs_of_the_examples() {
        let (m1, _) = example(&ExampleName::Choice);
        let d = mec_decomposition(&m1);
        let got: Vec<_> = d.mecs.iter().map(|m| names(&m1, &m.states)).collect();
        assert_eq!(got, vec![vec!["5"], vec!["10"], vec!["0"]]);
        assert_eq!(d.state_to_mec[m1.initial()], None);

        let (m2, _) = example(&ExampleName::Loop);
        let d = mec_decomposition(&m2);
        assert_eq!(d.mecs.len(), 3);
        let s0 = d
            .mecs
            .iter()
            .find(|m| m.states == vec![m2.initial()])
            .unwrap();
        assert_eq!(s0.actions, vec![m2.action_index("a").unwrap()]);
    }

    #[test]
    fn single_absorbing_state_is_one_mec() {
        let mut b = MdpBuilder::new();
        let s = b.state("s", vec![], false);
        b.self_loop(s);
        assert_eq!(mec_decomposition(&b.build(s)).mecs.len(), 1);
    }

    #[test]
    fn quotient_of_the_loop_keeps_the_leaving_action() {
        let (m2, _) = example(&ExampleName::Loop);
        let q = mec_quotient(&m2);
        let qm = &q.quotient;
        assert_eq!(qm.num_states(), 3);
        let s0 = q.lift[m2.initial()];
        let acts: Vec<&str> = qm
            .available(s0)
            .iter()
            .map(|&a| qm.action(a).name.as_str())
            .collect();
        assert_eq!(acts, vec!["b", "stay_s0"]);
    }

    #[test]
    fn two_state_cycle_collapses() {
        let mut b = MdpBuilder::new();
        let x = b.state("x", vec![rat(0, 1)], false);
        let y = b.state("y", vec![rat(0, 1)], false);
        let t = b.state("t", vec![rat(1, 1)], true);
        b.action(x, "xy", vec![(y, rat(1, 1))]);
        b.action(y, "yx", vec![(x, rat(1, 1))]);
        b.action(y, "out", vec![(t, rat(1, 2)), (x, rat(1, 2))]);
        b.self_loop(t);
        let mdp = b.build(x);
        let q = mec_quotient(&mdp);
        assert_eq!(q.quotient.num_states(), 2);
        assert_eq!(q.lift[x], q.lift[y]);
        assert_eq!(q.quotient.state_name(q.lift[x]), "x");
        let out = q.quotient.action_index("out").unwrap();
        assert_eq!(
            q.quotient.action(out).transitions,
            vec![(q.lift[x], rat(1, 2)), (q.lift[t], rat(1, 2))]
        );
        // Singleton MECs only, even after quotienting again.
        let again = mec_decomposition(&q.quotient);
        assert!(again.mecs.iter().all(|m| m.states.len() == 1));
    }

    #[test]
    fn cleanup_examples() {
        let (m1, _) = example(&ExampleName::Choice);
        assert_eq!(cleanup(&m1), m1);
        let only_five = m1.with_targets(vec![false, true, false, false]);
        let cleaned = cleanup(&only_five);
        let targets: Vec<&str> = cleaned.targets().map(|s| cleaned.state_name(s)).collect();
        assert_eq!(targets, vec!["5", "10", "0"]);
        let ten = cleaned.state_index("10").unwrap();
        assert_eq!(cleaned.reward(ten), &[rat(0, 1)]);
    }

    #[test]
    fn attraction_examples() {
        assert_eq!(
            check_attraction(&example(&ExampleName::Choice).0),
            Attraction::Both
        );
        assert_eq!(
            check_attraction(&example(&ExampleName::Negative).0),
            Attraction::Neither
        );
        let mut b = MdpBuilder::new();
        let s = b.state("s", vec![rat(0, 1)], false);
        let t = b.state("t", vec![rat(3, 1)], true);
        b.action(s, "loop", vec![(s, rat(1, 1))]);
        b.action(s, "go", vec![(t, rat(1, 1))]);
        b.self_loop(t);
        assert_eq!(check_attraction(&b.build(s)), Attraction::A2);
    }

    /// Exhaustive oracle: every (state set, action set) pair that is an end
    /// component, then keep the maximal ones.
    fn brute_force_mecs(mdp: &Mdp) -> BTreeSet<Vec<usize>> {
        let n = mdp.num_states();
        let mut ecs: Vec<BTreeSet<usize>> = Vec::new();
        for mask in 1u32..(1 << n) {
            let states: BTreeSet<usize> = (0..n).filter(|s| mask & (1 << s) != 0).collect();
            // Largest action set closed in `states`.
            let acts: Vec<usize> = (0..mdp.num_actions())
                .filter(|&a| states.contains(&mdp.action(a).state))
                .filter(|&a| {
                    mdp.action(a)
                        .transitions
                        .iter()
                        .all(|(t, _)| states.contains(t))
                })
                .collect();
            if states
                .iter()
                .any(|&s| !acts.iter().any(|&a| mdp.action(a).state == s))
            {
                continue;
            }
            // Strong connectivity under those actions.
            let strongly = states.iter().all(|&from| {
                let mut seen = BTreeSet::from([from]);
                let mut stack = vec![from];
                while let Some(u) = stack.pop() {
                    for &a in &acts {
                        if mdp.action(a).state == u {
                            for (t, _) in &mdp.action(a).transitions {
                                if seen.insert(*t) {
                                    stack.push(*t);
                                }
                            }
                        }
                    }
                }
                seen.len() == states.len()
            });
            if strongly {
                ecs.push(states);
            }
        }
        ecs.iter()
            .filter(|e| !ecs.iter().any(|f| f.len() > e.len() && e.is_subset(f)))
            .map(|e| e.iter().copied().collect())
            .collect()
    }

    #[test]
    fn decomposition_matches_brute_force() {
        for seed in 0..200 {
            let cfg = RandomMdpConfig {
                states: 2 + (seed as usize % 5),
                actions_per_state: 1 + (seed as usize % 3),
                density: 1 + (seed as usize % 2),
                target_fraction: 0.2,
                seed,
                ..Default::default()
            };
            let mdp = random_mdp(&cfg);
            let got: BTreeSet<Vec<usize>> = mec_decomposition(&mdp)
                .mecs
                .into_iter()
                .map(|m| m.states)
                .collect();
            assert_eq!(got, brute_force_mecs(&mdp), "seed {seed}");
        }
    }
}
