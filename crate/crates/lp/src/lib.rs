//! Linear programs over exact rationals.
//!
//! A [`LinearProgram`] is a list of named variables (non-negative or free),
//! linear constraints with a relation and a right-hand side, and an optional
//! objective. [`solve_feasibility`] and [`solve_optimize`] answer exactly:
//! small programs go through a rational two-phase simplex, larger ones
//! through a floating-point simplex whose final basis is certified in
//! rational arithmetic (falling back to the exact simplex when it is not).

use std::collections::BTreeMap;
use std::fmt;

use num::{BigRational, Signed, Zero};

mod guided;
mod simplex;
pub mod sparse;

pub use simplex::{PivotRule, SolverOptions};

pub type Rational = BigRational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn holds(self, lhs: &Rational, rhs: &Rational) -> bool {
        match self {
            Relation::Le => lhs <= rhs,
            Relation::Eq => lhs == rhs,
            Relation::Ge => lhs >= rhs,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub nonneg: bool,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub label: String,
    pub terms: Vec<(VarId, Rational)>,
    pub relation: Relation,
    pub rhs: Rational,
}

impl Constraint {
    pub fn lhs(&self, values: &[Rational]) -> Rational {
        self.terms
            .iter()
            .fold(Rational::zero(), |acc, (v, c)| acc + c * &values[v.0])
    }
}

#[derive(Clone, Debug)]
pub struct Objective {
    pub sense: Sense,
    pub terms: Vec<(VarId, Rational)>,
}

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Option<Objective>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, nonneg: bool) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            nonneg,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn nonneg(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, true)
    }

    /// Adds `Σ terms rel rhs`. Terms on the same variable are summed and
    /// zero coefficients dropped.
    pub fn add_constraint(
        &mut self,
        label: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, Rational)>,
        relation: Relation,
        rhs: Rational,
    ) -> usize {
        let mut merged: BTreeMap<VarId, Rational> = BTreeMap::new();
        for (v, c) in terms {
            assert!(v.0 < self.variables.len(), "undeclared variable {v:?}");
            *merged.entry(v).or_insert_with(Rational::zero) += c;
        }
        let terms = merged.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        self.constraints.push(Constraint {
            label: label.into(),
            terms,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn set_objective(
        &mut self,
        sense: Sense,
        terms: impl IntoIterator<Item = (VarId, Rational)>,
    ) {
        let mut merged: BTreeMap<VarId, Rational> = BTreeMap::new();
        for (v, c) in terms {
            *merged.entry(v).or_insert_with(Rational::zero) += c;
        }
        let terms = merged.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        self.objective = Some(Objective { sense, terms });
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> Option<&Objective> {
        self.objective.as_ref()
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .map(VarId)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    values: Vec<Rational>,
}

impl LpSolution {
    pub fn new(values: Vec<Rational>) -> Self {
        Self { values }
    }

    pub fn value(&self, v: VarId) -> &Rational {
        &self.values[v.0]
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    /// Named, non-zero assignments in declaration order.
    pub fn named<'a>(
        &'a self,
        lp: &'a LinearProgram,
    ) -> impl Iterator<Item = (&'a str, &'a Rational)> {
        lp.variables
            .iter()
            .zip(&self.values)
            .filter(|(_, x)| !x.is_zero())
            .map(|(v, x)| (v.name.as_str(), x))
    }

    /// Exact re-check against every constraint and sign restriction.
    /// Returns the label of the first violated one.
    pub fn check(&self, lp: &LinearProgram) -> Result<(), String> {
        if self.values.len() != lp.variables.len() {
            return Err("dimension mismatch".into());
        }
        for (v, x) in lp.variables.iter().zip(&self.values) {
            if v.nonneg && x.is_negative() {
                return Err(format!("{} >= 0", v.name));
            }
        }
        for c in &lp.constraints {
            if !c.relation.holds(&c.lhs(&self.values), &c.rhs) {
                return Err(c.label.clone());
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, lp: &LinearProgram) -> Option<Rational> {
        lp.objective.as_ref().map(|o| {
            o.terms
                .iter()
                .fold(Rational::zero(), |acc, (v, c)| acc + c * &self.values[v.0])
        })
    }
}

#[derive(Clone, Debug)]
pub enum Feasibility {
    Feasible(LpSolution),
    Infeasible,
}

impl Feasibility {
    pub fn solution(self) -> Option<LpSolution> {
        match self {
            Feasibility::Feasible(s) => Some(s),
            Feasibility::Infeasible => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

#[derive(Clone, Debug)]
pub enum Optimum {
    Optimal {
        solution: LpSolution,
        value: Rational,
    },
    Infeasible,
    Unbounded,
}

pub fn solve_feasibility(lp: &LinearProgram) -> Feasibility {
    solve_feasibility_with(lp, &SolverOptions::default())
}

pub fn solve_feasibility_with(lp: &LinearProgram, opts: &SolverOptions) -> Feasibility {
    match simplex::solve(lp, false, opts) {
        simplex::Outcome::Optimal(values) => Feasibility::Feasible(LpSolution::new(values)),
        simplex::Outcome::Infeasible => Feasibility::Infeasible,
        simplex::Outcome::Unbounded => unreachable!("feasibility runs without objective"),
    }
}

/// Panics if the program has no objective.
pub fn solve_optimize(lp: &LinearProgram) -> Optimum {
    solve_optimize_with(lp, &SolverOptions::default())
}

pub fn solve_optimize_with(lp: &LinearProgram, opts: &SolverOptions) -> Optimum {
    assert!(lp.objective.is_some(), "solve_optimize needs an objective");
    match simplex::solve(lp, true, opts) {
        simplex::Outcome::Optimal(values) => {
            let solution = LpSolution::new(values);
            let value = solution.objective_value(lp).unwrap();
            Optimum::Optimal { solution, value }
        }
        simplex::Outcome::Infeasible => Optimum::Infeasible,
        simplex::Outcome::Unbounded => Optimum::Unbounded,
    }
}

fn write_terms(
    f: &mut fmt::Formatter<'_>,
    lp: &LinearProgram,
    terms: &[(VarId, Rational)],
) -> fmt::Result {
    if terms.is_empty() {
        return write!(f, "0");
    }
    for (i, (v, c)) in terms.iter().enumerate() {
        let name = &lp.variables[v.0].name;
        match (i, c.is_negative()) {
            (0, false) => write!(f, "{c} {name}")?,
            (0, true) => write!(f, "-{} {name}", -c)?,
            (_, false) => write!(f, " + {c} {name}")?,
            (_, true) => write!(f, " - {} {name}", -c)?,
        }
    }
    Ok(())
}

/// Plain-text dump, one constraint per line.
impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.objective {
            Some(o) => {
                let sense = match o.sense {
                    Sense::Maximize => "maximize",
                    Sense::Minimize => "minimize",
                };
                write!(f, "{sense} ")?;
                write_terms(f, self, &o.terms)?;
                writeln!(f)?;
            }
            None => writeln!(f, "feasibility")?,
        }
        writeln!(f, "subject to")?;
        for c in &self.constraints {
            write!(f, "  {}: ", c.label)?;
            write_terms(f, self, &c.terms)?;
            writeln!(f, " {} {}", c.relation.symbol(), c.rhs)?;
        }
        let free: Vec<&str> = self
            .variables
            .iter()
            .filter(|v| !v.nonneg)
            .map(|v| v.name.as_str())
            .collect();
        if !free.is_empty() {
            writeln!(f, "free {}", free.join(" "))?;
        }
        Ok(())
    }
}
