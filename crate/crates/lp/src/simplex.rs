//! Dense two-phase tableau simplex.
//!
//! Free variables are split into a positive and a negative column. Rows are
//! normalized to a non-negative right-hand side; `<=` rows start with their
//! slack in the basis, all others with an artificial. Phase 1 drives the
//! artificials to zero, then pivots any left in the basis out (or drops the
//! row as redundant) before phase 2 optimizes the real objective.

use num::{One, Signed, Zero};

use crate::{LinearProgram, Rational, Relation, Sense};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PivotRule {
    /// Bland's least-index rule throughout.
    Bland,
    /// Most negative reduced cost, falling back to Bland's rule while a run
    /// of degenerate pivots is longer than `degenerate_limit`.
    Dantzig,
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub rule: PivotRule,
    pub degenerate_limit: usize,
    /// Programs with at least this many rows times columns are first run
    /// through a floating-point simplex whose basis is certified exactly;
    /// `usize::MAX` keeps everything on the exact tableau.
    pub guided_min_size: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rule: PivotRule::Dantzig,
            degenerate_limit: 25,
            guided_min_size: 4096,
        }
    }
}

pub(crate) enum Outcome {
    Optimal(Vec<Rational>),
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
    obj: Vec<Rational>,
    obj_value: Rational,
    /// Columns that may enter the basis.
    allowed: Vec<bool>,
    degenerate_run: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let inv = self.rows[r][c].recip();
        if !inv.is_one() {
            for x in self.rows[r].iter_mut() {
                if !x.is_zero() {
                    *x *= &inv;
                }
            }
            self.rhs[r] *= &inv;
        }
        let nz: Vec<usize> = (0..self.rows[r].len())
            .filter(|&j| !self.rows[r][j].is_zero())
            .collect();
        let (prow, prhs) = (self.rows[r].clone(), self.rhs[r].clone());
        for i in 0..self.rows.len() {
            if i == r || self.rows[i][c].is_zero() {
                continue;
            }
            let f = self.rows[i][c].clone();
            let row = &mut self.rows[i];
            for &j in &nz {
                row[j] -= &f * &prow[j];
            }
            self.rhs[i] -= &f * &prhs;
        }
        if !self.obj[c].is_zero() {
            let f = self.obj[c].clone();
            for &j in &nz {
                self.obj[j] -= &f * &prow[j];
            }
            self.obj_value -= &f * &prhs;
        }
        self.basis[r] = c;
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (j, d) in self.obj.iter().enumerate() {
            if !self.allowed[j] || !d.is_negative() {
                continue;
            }
            if bland {
                return Some(j);
            }
            if best.map_or(true, |b| d < &self.obj[b]) {
                best = Some(j);
            }
        }
        best
    }

    fn leaving(&self, c: usize) -> Option<usize> {
        let mut best: Option<(usize, Rational)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            let a = &row[c];
            if !a.is_positive() {
                continue;
            }
            let ratio = &self.rhs[i] / a;
            let better = match &best {
                None => true,
                Some((b, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*b]),
            };
            if better {
                best = Some((i, ratio));
            }
        }
        best.map(|(i, _)| i)
    }

    /// One maximization step on the current objective row.
    fn step(&mut self, opts: &SolverOptions) -> Step {
        let bland = opts.rule == PivotRule::Bland || self.degenerate_run > opts.degenerate_limit;
        let Some(c) = self.entering(bland) else {
            return Step::Optimal;
        };
        let Some(r) = self.leaving(c) else {
            return Step::Unbounded;
        };
        if self.rhs[r].is_zero() {
            self.degenerate_run += 1;
        } else {
            self.degenerate_run = 0;
        }
        self.pivot(r, c);
        Step::Pivoted
    }

    fn run(&mut self, opts: &SolverOptions) -> Step {
        self.degenerate_run = 0;
        loop {
            match self.step(opts) {
                Step::Pivoted => continue,
                other => return other,
            }
        }
    }

    fn set_objective(&mut self, cost: &[Rational]) {
        self.obj = cost.iter().map(|c| -c).collect();
        self.obj_value = Rational::zero();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = &cost[b];
            if cb.is_zero() {
                continue;
            }
            for (j, a) in self.rows[i].iter().enumerate() {
                if !a.is_zero() {
                    self.obj[j] += cb * a;
                }
            }
            self.obj_value += cb * &self.rhs[i];
        }
    }
}

pub(crate) fn solve(lp: &LinearProgram, optimize: bool, opts: &SolverOptions) -> Outcome {
    let size = lp.constraints.len() * lp.variables.len();
    if size >= opts.guided_min_size {
        if let Some(out) = crate::guided::solve(lp, optimize) {
            return out;
        }
    }
    solve_exact(lp, optimize, opts)
}

fn solve_exact(lp: &LinearProgram, optimize: bool, opts: &SolverOptions) -> Outcome {
    // Structural columns: one per non-negative variable, two per free one.
    let mut col_of: Vec<(usize, Option<usize>)> = Vec::with_capacity(lp.variables.len());
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
    let structural = ncols;

    struct Row {
        coeffs: Vec<(usize, Rational)>,
        relation: Relation,
        rhs: Rational,
    }
    let mut rows = Vec::new();
    for c in &lp.constraints {
        if c.terms.is_empty() {
            if !c.relation.holds(&Rational::zero(), &c.rhs) {
                return Outcome::Infeasible;
            }
            continue;
        }
        let flip = c.rhs.is_negative();
        let sign = if flip {
            -Rational::one()
        } else {
            Rational::one()
        };
        let mut coeffs = Vec::new();
        for (v, a) in &c.terms {
            let (p, n) = col_of[v.0];
            coeffs.push((p, &sign * a));
            if let Some(n) = n {
                coeffs.push((n, -(&sign * a)));
            }
        }
        let relation = match (c.relation, flip) {
            (Relation::Le, true) => Relation::Ge,
            (Relation::Ge, true) => Relation::Le,
            (r, _) => r,
        };
        rows.push(Row {
            coeffs,
            relation,
            rhs: &sign * &c.rhs,
        });
    }

    // Slack/surplus columns, then artificials.
    let m = rows.len();
    let mut slack_col = vec![None; m];
    for (i, r) in rows.iter().enumerate() {
        if r.relation != Relation::Eq {
            slack_col[i] = Some(ncols);
            ncols += 1;
        }
    }
    let first_artificial = ncols;
    let mut art_col = vec![None; m];
    for (i, r) in rows.iter().enumerate() {
        if r.relation != Relation::Le {
            art_col[i] = Some(ncols);
            ncols += 1;
        }
    }

    let mut t = Tableau {
        rows: Vec::with_capacity(m),
        rhs: Vec::with_capacity(m),
        basis: Vec::with_capacity(m),
        obj: Vec::new(),
        obj_value: Rational::zero(),
        allowed: vec![true; ncols],
        degenerate_run: 0,
    };
    for (i, r) in rows.into_iter().enumerate() {
        let mut dense = vec![Rational::zero(); ncols];
        for (j, a) in r.coeffs {
            dense[j] += a;
        }
        if let Some(s) = slack_col[i] {
            dense[s] = if r.relation == Relation::Le {
                Rational::one()
            } else {
                -Rational::one()
            };
        }
        match art_col[i] {
            Some(a) => {
                dense[a] = Rational::one();
                t.basis.push(a);
            }
            None => t.basis.push(slack_col[i].unwrap()),
        }
        t.rows.push(dense);
        t.rhs.push(r.rhs);
    }

    if first_artificial < ncols {
        let mut cost = vec![Rational::zero(); ncols];
        for c in cost.iter_mut().skip(first_artificial) {
            *c = -Rational::one();
        }
        t.set_objective(&cost);
        match t.run(opts) {
            Step::Optimal => {}
            _ => unreachable!("phase 1 is bounded"),
        }
        if t.obj_value.is_negative() {
            return Outcome::Infeasible;
        }
        // Pivot remaining (zero-valued) artificials out, or drop their rows.
        let mut i = 0;
        while i < t.rows.len() {
            if t.basis[i] >= first_artificial {
                match (0..first_artificial).find(|&j| !t.rows[i][j].is_zero()) {
                    Some(j) => {
                        t.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        t.rows.swap_remove(i);
                        t.rhs.swap_remove(i);
                        t.basis.swap_remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
        for a in t.allowed.iter_mut().skip(first_artificial) {
            *a = false;
        }
    }

    let mut cost = vec![Rational::zero(); ncols];
    if optimize {
        let o = lp.objective.as_ref().expect("objective");
        let sign = match o.sense {
            Sense::Maximize => Rational::one(),
            Sense::Minimize => -Rational::one(),
        };
        for (v, a) in &o.terms {
            let (p, n) = col_of[v.0];
            cost[p] += &sign * a;
            if let Some(n) = n {
                cost[n] -= &sign * a;
            }
        }
    }
    t.set_objective(&cost);
    if optimize {
        if let Step::Unbounded = t.run(opts) {
            return Outcome::Unbounded;
        }
    }

    let mut col_value = vec![Rational::zero(); structural];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < structural {
            col_value[b] = t.rhs[i].clone();
        }
    }
    let values = col_of
        .iter()
        .map(|&(p, n)| match n {
            Some(n) => &col_value[p] - &col_value[n],
            None => col_value[p].clone(),
        })
        .collect();
    Outcome::Optimal(values)
}
