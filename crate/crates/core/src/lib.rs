//! Exact decision procedures for expectation, VaR and CVaR constraints on
//! Markov chains and Markov decision processes, for weighted reachability
//! and mean-payoff objectives, with witness strategy synthesis.
//!
//! Every probability, reward and threshold is a [`Rational`]; floating point
//! only appears in [`simulation`].

pub use riskmdp_lp as lp;

pub type Rational = num::BigRational;

pub mod gadgets;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod risk;
pub mod simulation;
pub mod solver;
pub mod synthesis;

pub use model::{
    induced_chain, mix_strategies, validate_chain, validate_mdp, Action, DimQuery, Dist,
    InducedChain, MarkovChain, Mdp, MdpBuilder, Objective, PayoffLaw, Query, Status, StrategySpec,
    ValidationReport, Verdict,
};
pub use risk::{cvar, expectation, var, FiniteDistribution, Quantile};

/// `n / d` as a rational. Panics on a zero denominator.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

/// Parses `"a/b"`, `"a"` or a plain decimal such as `"0.05"` exactly.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: num::BigInt = n.trim().parse().ok()?;
        let d: num::BigInt = d.trim().parse().ok()?;
        if num::Zero::is_zero(&d) {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let negative = int.starts_with('-');
        let int_digits = int.trim_start_matches(['-', '+']);
        if !int_digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let digits: num::BigInt = format!("{int_digits}{frac}").parse().ok()?;
        let scale = num::pow(num::BigInt::from(10), frac.len());
        let v = Rational::new(digits, scale);
        return Some(if negative { -v } else { v });
    }
    Some(Rational::from_integer(s.parse().ok()?))
}

/// Canonical text form: `"a/b"`, or `"a"` for integers.
pub fn format_rational(r: &Rational) -> String {
    r.to_string()
}
