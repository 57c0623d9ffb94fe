//! Exact sparse Gaussian elimination, shared with the LP solver.

pub use crate::lp::sparse::solve_sparse;
