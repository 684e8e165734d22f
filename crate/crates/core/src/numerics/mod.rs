//! Precision-parameterized complex arithmetic, dense LU and polynomial
//! roots. Everything here is a pure function of its inputs and the working
//! precision, so repeated runs reproduce results bit for bit.

mod complex;
mod linalg;
mod poly;

pub use complex::{max_abs, PComplex, Precision};
pub use linalg::{lu_factor, lu_solve, CMatrix, LuFactors};
pub use poly::{backward_error, poly_roots, poly_roots_with, Polynomial, RootOptions};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NumericsError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular to working precision at column {column} (pivot {pivot:e} <= {threshold:e})")]
    Singular {
        column: usize,
        pivot: f64,
        threshold: f64,
    },
    #[error("constant polynomial has no roots")]
    ConstantPolynomial,
    #[error("root finder did not converge for {} of {degree} roots (indices {failed:?})", failed.len())]
    RootsNotConverged { failed: Vec<usize>, degree: usize },
}
