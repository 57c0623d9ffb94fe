//! Exact sparse Gaussian elimination.

use std::collections::{BTreeMap, BTreeSet};

use num::Zero;

use crate::Rational;

/// Solves the square system `A x = b` exactly, `A` given as sparse rows.
/// Returns `None` when `A` is singular.
///
/// Pivots follow a Markowitz-style order (shortest remaining row, then the
/// column with the fewest entries), so the triangular-ish systems arising
/// from chains with attractor moves are solved with little fill-in.
pub fn solve_sparse(rows: &[Vec<(usize, Rational)>], rhs: &[Rational]) -> Option<Vec<Rational>> {
    let n = rows.len();
    assert_eq!(rhs.len(), n);
    let mut a: Vec<BTreeMap<usize, Rational>> = rows
        .iter()
        .map(|r| {
            let mut m = BTreeMap::new();
            for (c, v) in r {
                assert!(*c < n, "column {c} out of range");
                *m.entry(*c).or_insert_with(Rational::zero) += v;
            }
            m.retain(|_, v: &mut Rational| !v.is_zero());
            m
        })
        .collect();
    let mut b = rhs.to_vec();
    let mut col_rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (r, row) in a.iter().enumerate() {
        for &c in row.keys() {
            col_rows[c].insert(r);
        }
    }
    let mut active: BTreeSet<usize> = (0..n).collect();
    let mut pivots = Vec::with_capacity(n);
    for _ in 0..n {
        let &r = active.iter().min_by_key(|&&r| (a[r].len(), r))?;
        if a[r].is_empty() {
            return None;
        }
        let c = *a[r]
            .keys()
            .min_by_key(|&&c| (col_rows[c].len(), c))
            .unwrap();
        active.remove(&r);
        for &cc in a[r].keys() {
            col_rows[cc].remove(&r);
        }
        let pivot_row = a[r].clone();
        let piv = pivot_row[&c].clone();
        let targets: Vec<usize> = col_rows[c].iter().copied().collect();
        for i in targets {
            let f = &a[i][&c] / &piv;
            for (cc, v) in &pivot_row {
                let e = a[i].entry(*cc).or_insert_with(Rational::zero);
                let was_zero = e.is_zero();
                *e -= &f * v;
                if e.is_zero() {
                    a[i].remove(cc);
                    col_rows[*cc].remove(&i);
                } else if was_zero {
                    col_rows[*cc].insert(i);
                }
            }
            let delta = &f * &b[r];
            b[i] -= delta;
        }
        pivots.push((r, c));
    }
    let mut x = vec![Rational::zero(); n];
    for &(r, c) in pivots.iter().rev() {
        let mut acc = b[r].clone();
        for (cc, v) in &a[r] {
            if *cc != c {
                acc -= v * &x[*cc];
            }
        }
        x[c] = acc / &a[r][&c];
    }
    Some(x)
}
