//! Seeded Monte Carlo simulation of a strategy, for cross-checking exact
//! laws. Never used to decide anything.

use std::collections::HashMap;
use std::io::Write;

use num::{FromPrimitive, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::can_reach;
use crate::model::{Dist, Mdp, Objective, StrategyError, StrategySpec, UpdateKey};
use crate::risk::{cvar, expectation, var, DistributionError, FiniteDistribution, Quantile};
use crate::Rational;

/// Runs are simulated in chunks of this size, each with its own RNG stream,
/// so results do not depend on the number of worker threads.
const CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimConfig {
    pub runs: usize,
    /// Step limit of a run; mean payoff averages over steps `burn_in..horizon`.
    pub horizon: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            runs: 10_000,
            horizon: 10_000,
            burn_in: 1_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("sample {0} is not finite")]
    NotFinite(f64),
}

type FDist = Vec<(usize, f64)>;

fn to_float(d: &Dist) -> FDist {
    d.iter()
        .map(|(i, p)| (*i, p.to_f64().unwrap_or(0.0)))
        .collect()
}

fn draw(rng: &mut ChaCha8Rng, d: &FDist) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(i, p) in d {
        acc += p;
        if u < acc {
            return i;
        }
    }
    d.last().expect("non-empty distribution").0
}

/// Float copy of everything a run needs.
struct Compiled<'a> {
    mdp: &'a Mdp,
    transitions: Vec<FDist>,
    moves: HashMap<(usize, usize), FDist>,
    updates: HashMap<UpdateKey, FDist>,
    initial: FDist,
    rewards: Vec<Vec<f64>>,
    alive: Vec<bool>,
}

impl<'a> Compiled<'a> {
    fn new(mdp: &'a Mdp, strategy: &'a StrategySpec) -> Self {
        Compiled {
            mdp,
            transitions: mdp
                .actions()
                .iter()
                .map(|a| to_float(&a.transitions))
                .collect(),
            moves: strategy
                .next_move
                .iter()
                .map(|(k, d)| (*k, to_float(d)))
                .collect(),
            updates: strategy
                .update
                .iter()
                .map(|(k, d)| (*k, to_float(d)))
                .collect(),
            initial: to_float(&strategy.initial),
            rewards: mdp
                .rewards()
                .iter()
                .map(|r| r.iter().map(|x| x.to_f64().unwrap_or(0.0)).collect())
                .collect(),
            alive: can_reach(mdp, mdp.target_flags()),
        }
    }

    fn action(&self, rng: &mut ChaCha8Rng, s: usize, m: usize) -> usize {
        match self.moves.get(&(s, m)) {
            Some(d) => draw(rng, d),
            None => self.mdp.available(s)[0],
        }
    }

    fn update(&self, rng: &mut ChaCha8Rng, a: usize, t: usize, m: usize) -> usize {
        let exact = UpdateKey {
            action: Some(a),
            state: t,
            memory: m,
        };
        let any = UpdateKey {
            action: None,
            state: t,
            memory: m,
        };
        match self.updates.get(&exact).or_else(|| self.updates.get(&any)) {
            Some(d) => draw(rng, d),
            None => m,
        }
    }

    fn run(&self, rng: &mut ChaCha8Rng, objective: Objective, cfg: &SimConfig) -> Vec<f64> {
        let dim = self.mdp.dim();
        let mut s = self.mdp.initial();
        let mut m = draw(rng, &self.initial);
        let mut sum = vec![0.0; dim];
        for step in 0..cfg.horizon {
            match objective {
                Objective::Reach => {
                    if self.mdp.is_target(s) {
                        return self.rewards[s].clone();
                    }
                    if !self.alive[s] {
                        break;
                    }
                }
                Objective::Mean => {
                    if step >= cfg.burn_in {
                        for (acc, r) in sum.iter_mut().zip(&self.rewards[s]) {
                            *acc += r;
                        }
                    }
                }
            }
            let a = self.action(rng, s, m);
            let t = draw(rng, &self.transitions[a]);
            m = self.update(rng, a, t, m);
            s = t;
        }
        match objective {
            Objective::Reach => vec![0.0; dim],
            Objective::Mean => {
                let steps = (cfg.horizon - cfg.burn_in) as f64;
                sum.into_iter().map(|x| x / steps).collect()
            }
        }
    }
}

/// One payoff vector per simulated run.
pub fn sample_payoffs(
    mdp: &Mdp,
    strategy: &StrategySpec,
    objective: Objective,
    cfg: &SimConfig,
) -> Result<Vec<Vec<f64>>, SimError> {
    if cfg.runs == 0 {
        return Err(SimError::Config("runs must be positive"));
    }
    if cfg.horizon == 0 {
        return Err(SimError::Config("horizon must be positive"));
    }
    if objective == Objective::Mean && cfg.burn_in >= cfg.horizon {
        return Err(SimError::Config("burn-in must be shorter than the horizon"));
    }
    strategy.validate(mdp)?;
    let compiled = Compiled::new(mdp, strategy);
    let chunks = cfg.runs.div_ceil(CHUNK);
    let out: Vec<Vec<Vec<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(cfg.runs - c * CHUNK);
            (0..n)
                .map(|_| compiled.run(&mut rng, objective, cfg))
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

/// Empirical measures of one dimension of a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasures {
    pub e: Rational,
    pub var: Quantile,
    pub cvar: Rational,
}

/// E, `VaR_q` and `CVaR_p` of the empirical distribution of `samples`,
/// each sample converted exactly from its float value.
pub fn empirical_measures(
    samples: &[f64],
    p: &Rational,
    q: &Rational,
) -> Result<EmpiricalMeasures, SimError> {
    let values = samples
        .iter()
        .map(|&x| Rational::from_f64(x).ok_or(SimError::NotFinite(x)))
        .collect::<Result<Vec<_>, _>>()?;
    let d = FiniteDistribution::empirical(values)?;
    Ok(EmpiricalMeasures {
        e: expectation(&d),
        var: var(&d, q),
        cvar: cvar(&d, p),
    })
}

/// Writes samples as CSV with a `run` column and one column per dimension.
pub fn write_csv<W: Write>(out: W, samples: &[Vec<f64>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = samples.first().map_or(0, Vec::len);
    let mut header = vec!["run".to_string()];
    header.extend((0..dim).map(|j| format!("r{j}")));
    w.write_record(&header)?;
    for (i, row) in samples.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
