//! Models, queries, strategies and verdicts.

mod mdp;
mod query;
mod strategy;

pub use mdp::{
    validate_chain, validate_mdp, Action, MarkovChain, Mdp, MdpBuilder, Problem, ValidationReport,
};
pub use query::{Certificate, DimQuery, Objective, PayoffLaw, Query, QueryError, Status, Verdict};
pub use strategy::{
    induced_chain, mix_strategies, normalize_dist, Dist, InducedChain, StrategyError, StrategySpec,
    UpdateKey,
};
