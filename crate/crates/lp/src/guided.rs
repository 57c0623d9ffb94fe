//! Floating-point simplex used only to find a basis, which is then
//! certified in exact arithmetic.
//!
//! A feasible basis is certified by solving `B x_B = b` exactly and checking
//! signs, infeasibility by a Farkas vector taken from the exact phase-1
//! duals (`y^T A <= 0`, `y^T b > 0`), optimality by exact dual feasibility.
//! When a certificate does not hold the caller falls back to the exact
//! tableau, so floating point never decides an answer.

use num::{One, Signed, ToPrimitive, Zero};

use crate::simplex::Outcome;
use crate::sparse::solve_sparse;
use crate::{LinearProgram, Rational, Relation, Sense};

/// Pivot, optimality and feasibility tolerance.
const EPS: f64 = 1e-9;
/// Smallest admissible pivot element.
const PIVOT: f64 = 1e-7;
/// Scale of the right-hand-side perturbation against degeneracy.
const PERTURB: f64 = 1e-6;
/// Entries below this are flushed to zero to keep the tableau sparse.
const DROP: f64 = 1e-12;

/// `A x = b`, `x >= 0`, `b >= 0` with sparse columns.
struct Standard {
    m: usize,
    cols: Vec<Vec<(usize, Rational)>>,
    b: Vec<Rational>,
    first_artificial: usize,
    /// Structural column (and its negative part for free variables).
    col_of: Vec<(usize, Option<usize>)>,
    /// Starting basis: the slack or artificial of each row.
    start: Vec<usize>,
}

/// `None` when a trivially violated empty constraint makes the program
/// infeasible.
fn standard_form(lp: &LinearProgram) -> Option<Standard> {
    let mut col_of = Vec::with_capacity(lp.variables.len());
    let mut ncols = 0;
    for v in &lp.variables {
        if v.nonneg {
            col_of.push((ncols, None));
            ncols += 1;
        } else {
            col_of.push((ncols, Some(ncols + 1)));
            ncols += 2;
        }
    }
    let mut cols: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); ncols];
    let mut b = Vec::new();
    let mut relations = Vec::new();
    for c in &lp.constraints {
        if c.terms.is_empty() {
            if !c.relation.holds(&Rational::zero(), &c.rhs) {
                return None;
            }
            continue;
        }
        let i = b.len();
        let flip = c.rhs.is_negative();
        let mut merged: std::collections::BTreeMap<usize, Rational> = Default::default();
        for (v, a) in &c.terms {
            let a = if flip { -a } else { a.clone() };
            let (p, n) = col_of[v.0];
            if let Some(n) = n {
                *merged.entry(n).or_insert_with(Rational::zero) -= &a;
            }
            *merged.entry(p).or_insert_with(Rational::zero) += a;
        }
        for (j, a) in merged {
            if !a.is_zero() {
                cols[j].push((i, a));
            }
        }
        relations.push(match (c.relation, flip) {
            (Relation::Le, true) => Relation::Ge,
            (Relation::Ge, true) => Relation::Le,
            (r, _) => r,
        });
        b.push(if flip { -&c.rhs } else { c.rhs.clone() });
    }
    let m = b.len();
    let mut start = vec![0; m];
    for (i, r) in relations.iter().enumerate() {
        if *r != Relation::Eq {
            let sign = if *r == Relation::Le {
                Rational::one()
            } else {
                -Rational::one()
            };
            cols.push(vec![(i, sign)]);
            start[i] = cols.len() - 1;
        }
    }
    let first_artificial = cols.len();
    for (i, r) in relations.iter().enumerate() {
        if *r != Relation::Le {
            cols.push(vec![(i, Rational::one())]);
            start[i] = cols.len() - 1;
        }
    }
    Some(Standard {
        m,
        cols,
        b,
        first_artificial,
        col_of,
        start,
    })
}

struct FloatTableau {
    t: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    /// Reduced costs of the maximization; a column may enter when negative.
    obj: Vec<f64>,
    obj_value: f64,
    basis: Vec<usize>,
    allowed: Vec<bool>,
}

enum Run {
    Optimal,
    Unbounded,
    /// Iteration limit hit.
    Stalled,
}

impl FloatTableau {
    fn new(sf: &Standard) -> Self {
        let n = sf.cols.len();
        let mut t = vec![vec![0.0; n]; sf.m];
        for (j, col) in sf.cols.iter().enumerate() {
            for (i, a) in col {
                t[*i][j] = a.to_f64().unwrap_or(0.0);
            }
        }
        Self {
            t,
            rhs: sf
                .b
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    x.to_f64().unwrap_or(0.0)
                        + PERTURB * (1.0 + ((i * 7919) % 1009) as f64 / 1009.0)
                })
                .collect(),
            obj: vec![0.0; n],
            obj_value: 0.0,
            basis: sf.start.clone(),
            allowed: vec![true; n],
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let inv = 1.0 / self.t[r][c];
        for x in self.t[r].iter_mut() {
            *x *= inv;
        }
        self.rhs[r] *= inv;
        self.t[r][c] = 1.0;
        let nz: Vec<usize> = (0..self.t[r].len())
            .filter(|&j| self.t[r][j].abs() > DROP)
            .collect();
        let prow = std::mem::take(&mut self.t[r]);
        let prhs = self.rhs[r];
        let eliminate = |row: &mut [f64], f: f64| {
            for &j in &nz {
                let v = row[j] - f * prow[j];
                row[j] = if v.abs() < DROP { 0.0 } else { v };
            }
            row[c] = 0.0;
        };
        for i in 0..self.t.len() {
            if i == r {
                continue;
            }
            let f = self.t[i][c];
            if f == 0.0 {
                continue;
            }
            eliminate(&mut self.t[i], f);
            let v = self.rhs[i] - f * prhs;
            self.rhs[i] = if v < EPS && v > -EPS { v.max(0.0) } else { v };
        }
        let f = self.obj[c];
        if f != 0.0 {
            eliminate(&mut self.obj, f);
            self.obj_value -= f * prhs;
        }
        self.t[r] = prow;
        self.basis[r] = c;
    }

    fn set_objective(&mut self, cost: &[f64]) {
        self.obj = cost.iter().map(|c| -c).collect();
        self.obj_value = 0.0;
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb == 0.0 {
                continue;
            }
            for (o, a) in self.obj.iter_mut().zip(&self.t[i]) {
                *o += cb * a;
            }
            self.obj_value += cb * self.rhs[i];
        }
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (j, &d) in self.obj.iter().enumerate() {
            if !self.allowed[j] || d >= -EPS {
                continue;
            }
            if bland {
                return Some(j);
            }
            if best.map_or(true, |b| d < self.obj[b]) {
                best = Some(j);
            }
        }
        best
    }

    /// Harris two-pass ratio test: the bound allows each basic variable a
    /// violation of `EPS`, and among the rows within it the largest pivot
    /// wins (in Bland mode the least basic index).
    fn leaving(&self, c: usize, bland: bool) -> Option<usize> {
        let mut bound = f64::INFINITY;
        for (i, row) in self.t.iter().enumerate() {
            if row[c] > PIVOT {
                bound = bound.min((self.rhs[i].max(0.0) + EPS) / row[c]);
            }
        }
        if !bound.is_finite() {
            return None;
        }
        let mut best: Option<usize> = None;
        for (i, row) in self.t.iter().enumerate() {
            let a = row[c];
            if a <= PIVOT || self.rhs[i].max(0.0) / a > bound {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) if bland => self.basis[i] < self.basis[b],
                Some(b) => a > self.t[b][c],
            };
            if better {
                best = Some(i);
            }
        }
        best
    }

    /// Columns whose only positive entries are below the pivot tolerance are
    /// noise rather than rays; they are skipped for the rest of the run and
    /// left for the exact certificate to judge.
    fn run(&mut self, limit: usize) -> Run {
        let mut degenerate = 0;
        let mut skipped = Vec::new();
        for _ in 0..limit {
            let bland = degenerate > 50;
            let Some(c) = self.entering(bland) else {
                for j in skipped {
                    self.allowed[j] = true;
                }
                return Run::Optimal;
            };
            let Some(r) = self.leaving(c, bland) else {
                if self.t.iter().any(|row| row[c] > 0.0) {
                    self.allowed[c] = false;
                    skipped.push(c);
                    continue;
                }
                return Run::Unbounded;
            };
            if self.rhs[r] <= EPS {
                degenerate += 1;
                self.rhs[r] = self.rhs[r].max(0.0);
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
        }
        Run::Stalled
    }
}

impl FloatTableau {
    /// Dual simplex on a dual-feasible basis until every basic value is
    /// nonnegative. Used once the perturbation is taken out of the
    /// right-hand side.
    fn restore_feasibility(&mut self, limit: usize) -> bool {
        for _ in 0..limit {
            let Some(r) = (0..self.rhs.len())
                .filter(|&i| self.rhs[i] < -EPS)
                .min_by(|&a, &b| self.rhs[a].total_cmp(&self.rhs[b]))
            else {
                return true;
            };
            let row = &self.t[r];
            let mut best: Option<(usize, f64)> = None;
            for (j, &a) in row.iter().enumerate() {
                if !self.allowed[j] || a >= -PIVOT {
                    continue;
                }
                let ratio = self.obj[j].max(0.0) / -a;
                let better = match best {
                    None => true,
                    Some((b, q)) => ratio < q - EPS || (ratio <= q + EPS && a < row[b]),
                };
                if better {
                    best = Some((j, ratio));
                }
            }
            let Some((c, _)) = best else {
                return false;
            };
            self.pivot(r, c);
        }
        false
    }
}

/// Exact values of the basic columns, `None` if the basis is singular.
fn primal(sf: &Standard, basis: &[usize]) -> Option<Vec<Rational>> {
    let mut rows: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); sf.m];
    for (k, &j) in basis.iter().enumerate() {
        for (i, a) in &sf.cols[j] {
            rows[*i].push((k, a.clone()));
        }
    }
    solve_sparse(&rows, &sf.b)
}

/// Exact duals `B^T y = c_B`.
fn duals(sf: &Standard, basis: &[usize], cost: &[Rational]) -> Option<Vec<Rational>> {
    let rows: Vec<Vec<(usize, Rational)>> = basis.iter().map(|&j| sf.cols[j].clone()).collect();
    let rhs: Vec<Rational> = basis.iter().map(|&j| cost[j].clone()).collect();
    solve_sparse(&rows, &rhs)
}

fn dot(col: &[(usize, Rational)], y: &[Rational]) -> Rational {
    col.iter()
        .fold(Rational::zero(), |acc, (i, a)| acc + a * &y[*i])
}

/// Solves with a floating-point simplex and certifies the answer exactly;
/// `None` when no certificate could be established.
pub(crate) fn solve(lp: &LinearProgram, optimize: bool) -> Option<Outcome> {
    let Some(sf) = standard_form(lp) else {
        return Some(Outcome::Infeasible);
    };
    let n = sf.cols.len();
    let limit = 50 * (sf.m + n) + 1000;
    let mut ft = FloatTableau::new(&sf);

    if sf.first_artificial < n {
        let cost: Vec<f64> = (0..n)
            .map(|j| if j >= sf.first_artificial { -1.0 } else { 0.0 })
            .collect();
        ft.set_objective(&cost);
        if !matches!(ft.run(limit), Run::Optimal) {
            return None;
        }
        let scale = 1.0 + ft.rhs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if ft.obj_value < -1e-7 * scale - 2.0 * PERTURB * sf.m as f64 {
            if let Some(o) = certify_infeasible(&sf, &ft.basis) {
                return Some(o);
            }
        }
        for i in 0..sf.m {
            if ft.basis[i] >= sf.first_artificial {
                let best = (0..sf.first_artificial)
                    .filter(|&j| ft.t[i][j].abs() > 1e-7)
                    .max_by(|&a, &b| ft.t[i][a].abs().total_cmp(&ft.t[i][b].abs()));
                if let Some(j) = best {
                    ft.pivot(i, j);
                }
            }
        }
        for a in ft.allowed.iter_mut().skip(sf.first_artificial) {
            *a = false;
        }
    }

    let mut exact_cost = vec![Rational::zero(); n];
    if optimize {
        let o = lp.objective.as_ref().expect("objective");
        let negate = o.sense == Sense::Minimize;
        for (v, a) in &o.terms {
            let a = if negate { -a } else { a.clone() };
            let (p, neg) = sf.col_of[v.0];
            if let Some(neg) = neg {
                exact_cost[neg] -= &a;
            }
            exact_cost[p] += a;
        }
        ft.set_objective(
            &exact_cost
                .iter()
                .map(|c| c.to_f64().unwrap_or(0.0))
                .collect::<Vec<_>>(),
        );
        if !matches!(ft.run(limit), Run::Optimal) {
            return None;
        }
    }

    // The basis was found for the perturbed right-hand side; certify it for
    // the real one, repairing with dual simplex steps where it fails.
    let mut x_b = None;
    for _ in 0..4 {
        let x = primal(&sf, &ft.basis)?;
        if x.iter().all(|v| !v.is_negative()) {
            x_b = Some(x);
            break;
        }
        ft.rhs = x.iter().map(|v| v.to_f64().unwrap_or(0.0)).collect();
        if !ft.restore_feasibility(limit) {
            return None;
        }
    }
    let x_b = x_b?;
    for (k, &j) in ft.basis.iter().enumerate() {
        if j >= sf.first_artificial && !x_b[k].is_zero() {
            return None;
        }
    }
    if optimize {
        let y = duals(&sf, &ft.basis, &exact_cost)?;
        if (0..sf.first_artificial).any(|j| dot(&sf.cols[j], &y) < exact_cost[j]) {
            return None;
        }
    }
    let mut col_value = vec![Rational::zero(); sf.first_artificial];
    for (k, &j) in ft.basis.iter().enumerate() {
        if j < sf.first_artificial {
            col_value[j] = x_b[k].clone();
        }
    }
    let values: Vec<Rational> = sf
        .col_of
        .iter()
        .map(|&(p, neg)| match neg {
            Some(neg) => &col_value[p] - &col_value[neg],
            None => col_value[p].clone(),
        })
        .collect();
    debug_assert!(crate::LpSolution::new(values.clone()).check(lp).is_ok());
    Some(Outcome::Optimal(values))
}

/// Farkas certificate from the phase-1 basis: `y^T A_j <= 0` for every
/// real column and `y^T b > 0` rule out any `x >= 0` with `A x = b`.
fn certify_infeasible(sf: &Standard, basis: &[usize]) -> Option<Outcome> {
    let cost: Vec<Rational> = (0..sf.cols.len())
        .map(|j| {
            if j >= sf.first_artificial {
                Rational::one()
            } else {
                Rational::zero()
            }
        })
        .collect();
    let y = duals(sf, basis, &cost)?;
    let yb =
        sf.b.iter()
            .zip(&y)
            .fold(Rational::zero(), |acc, (b, y)| acc + b * y);
    if !yb.is_positive() || (0..sf.first_artificial).any(|j| dot(&sf.cols[j], &y).is_positive()) {
        return None;
    }
    Some(Outcome::Infeasible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::VarId;

    fn int(n: i64) -> Rational {
        Rational::from_integer(n.into())
    }

    #[test]
    fn infeasibility_comes_with_a_farkas_vector() {
        // x + y = 1, x + y >= 2
        let mut lp = LinearProgram::new();
        let x = lp.nonneg("x");
        let y = lp.nonneg("y");
        lp.add_constraint("a", [(x, int(1)), (y, int(1))], Relation::Eq, int(1));
        lp.add_constraint("b", [(x, int(1)), (y, int(1))], Relation::Ge, int(2));
        assert!(matches!(solve(&lp, false), Some(Outcome::Infeasible)));
    }

    #[test]
    fn optimum_is_certified_exactly() {
        // max x + y with 3x + y <= 2, x + 3y <= 2: optimum 1 at (1/2, 1/2)
        let mut lp = LinearProgram::new();
        let x = lp.nonneg("x");
        let y = lp.nonneg("y");
        lp.add_constraint("a", [(x, int(3)), (y, int(1))], Relation::Le, int(2));
        lp.add_constraint("b", [(x, int(1)), (y, int(3))], Relation::Le, int(2));
        lp.set_objective(Sense::Maximize, [(x, int(1)), (y, int(1))]);
        match solve(&lp, true) {
            Some(Outcome::Optimal(v)) => {
                let half = Rational::new(1.into(), 2.into());
                assert_eq!(v, vec![half.clone(), half]);
            }
            _ => panic!("expected a certified optimum"),
        }
    }

    #[test]
    fn free_variables_and_negative_rhs() {
        // min z with z >= -3, z free
        let mut lp = LinearProgram::new();
        let z = lp.add_var("z", false);
        lp.add_constraint("lo", [(z, int(1))], Relation::Ge, int(-3));
        lp.set_objective(Sense::Minimize, [(z, int(1))]);
        match solve(&lp, true) {
            Some(Outcome::Optimal(v)) => assert_eq!(v[VarId(0).0], int(-3)),
            _ => panic!("expected a certified optimum"),
        }
    }

    /// Absorption flow on a ring of `n` nodes leaking to two sinks: highly
    /// degenerate, and the certified basis must come from the float path.
    #[test]
    fn degenerate_flow_program_is_certified() {
        let n = 150;
        let mut lp = LinearProgram::new();
        let stay: Vec<VarId> = (0..n).map(|i| lp.nonneg(&format!("s{i}"))).collect();
        let leak: Vec<VarId> = (0..n).map(|i| lp.nonneg(&format!("l{i}"))).collect();
        let third = Rational::new(1.into(), 3.into());
        for i in 0..n {
            // outflow of i minus inflow from its predecessor equals the initial mass
            let prev = (i + n - 1) % n;
            let terms = vec![
                (stay[i], int(1)),
                (leak[i], int(1)),
                (stay[prev], -third.clone() - &third),
            ];
            lp.add_constraint(
                &format!("c{i}"),
                terms,
                Relation::Eq,
                if i == 0 { int(1) } else { int(0) },
            );
        }
        let sink: Vec<(VarId, Rational)> = leak.iter().step_by(2).map(|&l| (l, int(1))).collect();
        lp.add_constraint(
            "half",
            sink.clone(),
            Relation::Ge,
            Rational::new(1.into(), 4.into()),
        );
        lp.set_objective(Sense::Maximize, sink);
        let Some(Outcome::Optimal(v)) = solve(&lp, true) else {
            panic!("float path did not certify");
        };
        assert!(crate::LpSolution::new(v).check(&lp).is_ok());
    }
}
