//! Brute-force LP oracle: enumerate every basic solution of a small program
//! with non-negative variables and keep the best feasible one. Independent
//! of the simplex code (own elimination, own feasibility check).

use num::{BigRational, One, Signed, Zero};

pub type Q = BigRational;

#[derive(Clone, Debug)]
pub struct SmallLp {
    pub n: usize,
    /// (coefficients, kind, rhs) with kind -1 for <=, 0 for =, 1 for >=.
    pub rows: Vec<(Vec<Q>, i8, Q)>,
    pub objective: Vec<Q>,
}

fn solve_square(mut a: Vec<Vec<Q>>, mut b: Vec<Q>) -> Option<Vec<Q>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = &a[r][col] / &a[col][col];
                for k in col..n {
                    let t = &f * &a[col][k];
                    a[r][k] -= t;
                }
                let t = &f * &b[col];
                b[r] -= t;
            }
        }
    }
    Some((0..n).map(|i| &b[i] / &a[i][i]).collect())
}

fn feasible(lp: &SmallLp, x: &[Q]) -> bool {
    if x.iter().any(|v| v.is_negative()) {
        return false;
    }
    lp.rows.iter().all(|(a, k, rhs)| {
        let lhs: Q = a.iter().zip(x).map(|(c, v)| c * v).sum();
        match k {
            -1 => lhs <= *rhs,
            0 => lhs == *rhs,
            _ => lhs >= *rhs,
        }
    })
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Best objective over all vertices, or None if there is no feasible vertex.
/// Only meaningful for bounded feasible regions.
pub fn best_vertex(lp: &SmallLp) -> Option<Q> {
    let n = lp.n;
    // Hyperplanes: every row, plus x_i = 0.
    let mut planes: Vec<(Vec<Q>, Q)> = lp
        .rows
        .iter()
        .map(|(a, _, b)| (a.clone(), b.clone()))
        .collect();
    for i in 0..n {
        let mut e = vec![Q::zero(); n];
        e[i] = Q::one();
        planes.push((e, Q::zero()));
    }
    let mut best: Option<Q> = None;
    for choice in subsets(planes.len(), n) {
        let a = choice.iter().map(|&i| planes[i].0.clone()).collect();
        let b = choice.iter().map(|&i| planes[i].1.clone()).collect();
        let Some(x) = solve_square(a, b) else {
            continue;
        };
        if !feasible(lp, &x) {
            continue;
        }
        let v: Q = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        if best.as_ref().map_or(true, |b| v > *b) {
            best = Some(v);
        }
    }
    best
}
