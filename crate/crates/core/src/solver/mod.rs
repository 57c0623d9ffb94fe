//! Decision procedures for MDP queries.

pub mod mean;
pub mod mean_multi;
pub mod reach;

pub use mean::{decide_mean_single, mec_gain, mec_gain_plan, mec_min_gain};
pub use mean_multi::{build_mean_lp_multi, decide_mean_multi, DimClass, MeanLp, MecClassification};
pub use reach::{
    build_reach_lp, build_reach_lp_multi, decide_reach_multi, decide_reach_single, reach_guesses,
    ReachLp, VarGuess,
};

use crate::model::{Mdp, Objective, Query, QueryError, Verdict};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    /// Subdivisions between consecutive MEC gains when searching VaR
    /// thresholds for multi-dimensional mean payoff.
    pub grid: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { grid: 16 }
    }
}

/// Dispatches on objective and dimension.
pub fn decide(mdp: &Mdp, query: &Query, opts: &SolveOptions) -> Result<Verdict, QueryError> {
    query.validate(mdp.dim())?;
    match (query.objective, query.dim()) {
        (Objective::Reach, 1) => decide_reach_single(mdp, query),
        (Objective::Reach, _) => decide_reach_multi(mdp, query, opts),
        (Objective::Mean, 1) => decide_mean_single(mdp, query),
        (Objective::Mean, _) => decide_mean_multi(mdp, query, opts),
    }
}

#[cfg(test)]
mod tests;
