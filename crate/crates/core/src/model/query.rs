use std::fmt;

use num::{One, Signed};
use thiserror::Error;

use crate::risk::{cvar, expectation, var, FiniteDistribution};
use crate::Rational;

use super::StrategySpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Objective {
    /// Reward of the first target reached, 0 if none is reached.
    Reach,
    /// Liminf of the average reward per step.
    Mean,
}

/// Optional lower bounds on one dimension: `E >= e`, `CVaR_p >= c` and
/// `VaR_q >= v`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DimQuery {
    pub e: Option<Rational>,
    /// `(p, c)`
    pub cvar: Option<(Rational, Rational)>,
    /// `(q, v)`
    pub var: Option<(Rational, Rational)>,
}

impl DimQuery {
    pub fn count(&self) -> usize {
        self.e.is_some() as usize + self.cvar.is_some() as usize + self.var.is_some() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn satisfied_by(&self, d: &FiniteDistribution) -> bool {
        self.e.as_ref().map_or(true, |e| expectation(d) >= *e)
            && self.cvar.as_ref().map_or(true, |(p, c)| cvar(d, p) >= *c)
            && self
                .var
                .as_ref()
                .map_or(true, |(q, v)| var(d, q).at_least(v))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub objective: Objective,
    pub dims: Vec<DimQuery>,
}

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("dimension {dim}: level {level} must lie strictly between 0 and 1")]
    Level { dim: usize, level: Rational },
    #[error("query has {query} dimensions but the model has {model}")]
    Dimension { query: usize, model: usize },
    #[error("{0}")]
    Unsupported(String),
}

impl Query {
    pub fn new(objective: Objective, dims: Vec<DimQuery>) -> Self {
        Self { objective, dims }
    }

    pub fn single(objective: Objective, dim: DimQuery) -> Self {
        Self {
            objective,
            dims: vec![dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn constraint_count(&self) -> usize {
        self.dims.iter().map(DimQuery::count).sum()
    }

    pub fn has_var(&self) -> bool {
        self.dims.iter().any(|d| d.var.is_some())
    }

    /// Levels strictly inside (0,1) and dimension matching the model.
    pub fn validate(&self, model_dim: usize) -> Result<(), QueryError> {
        if self.dims.len() != model_dim {
            return Err(QueryError::Dimension {
                query: self.dims.len(),
                model: model_dim,
            });
        }
        for (j, d) in self.dims.iter().enumerate() {
            for level in [d.cvar.as_ref().map(|x| &x.0), d.var.as_ref().map(|x| &x.0)]
                .into_iter()
                .flatten()
            {
                if !level.is_positive() || *level >= Rational::one() {
                    return Err(QueryError::Level {
                        dim: j,
                        level: level.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn satisfied_by(&self, law: &PayoffLaw) -> bool {
        self.dims.len() == law.marginals.len()
            && self
                .dims
                .iter()
                .zip(&law.marginals)
                .all(|(q, d)| q.satisfied_by(d))
    }
}

/// Per-dimension marginal laws of the payoff.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffLaw {
    pub marginals: Vec<FiniteDistribution>,
}

impl PayoffLaw {
    /// Marginals of a law given as weighted reward vectors.
    pub fn from_vectors<'a>(
        atoms: impl IntoIterator<Item = (&'a [Rational], Rational)> + Clone,
        dim: usize,
    ) -> Self {
        let marginals = (0..dim)
            .map(|j| {
                FiniteDistribution::new(atoms.clone().into_iter().map(|(r, p)| (r[j].clone(), p)))
                    .expect("law sums to 1")
            })
            .collect();
        Self { marginals }
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }
}

impl fmt::Display for PayoffLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (j, d) in self.marginals.iter().enumerate() {
            writeln!(f, "dim {j}: {d}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Sat,
    Unsat,
    Unknown,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Sat => "SAT",
            Status::Unsat => "UNSAT",
            Status::Unknown => "UNKNOWN",
        })
    }
}

/// Audit trail of a SAT answer: which procedure, the guessed thresholds and
/// the non-zero LP assignment that was turned into the witness.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Certificate {
    pub procedure: String,
    pub guess: Vec<(String, Rational)>,
    pub lp_values: Vec<(String, Rational)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub status: Status,
    pub witness: Option<StrategySpec>,
    pub certificate: Option<Certificate>,
    /// Exact payoff law of the witness, when there is one.
    pub law: Option<PayoffLaw>,
}

impl Verdict {
    pub fn unsat() -> Self {
        Self {
            status: Status::Unsat,
            witness: None,
            certificate: None,
            law: None,
        }
    }

    pub fn unknown() -> Self {
        Self {
            status: Status::Unknown,
            witness: None,
            certificate: None,
            law: None,
        }
    }

    pub fn is_sat(&self) -> bool {
        self.status == Status::Sat
    }
}
