//! Power-flow solution and feasibility classification by holomorphic
//! embedding with voltage-controlled buses, analytic continuation through
//! Padé approximants, and a Newton-Raphson baseline.

pub mod helm;
pub mod netmodel;
pub mod nr;
pub mod numerics;
pub mod pade;
pub mod solver;

pub use netmodel::{Branch, Bus, BusKind, Network};
pub use num_complex::Complex64;
pub use numerics::{PComplex, Precision};
pub use solver::{solve, SolveConfig, SolveReport, Verdict};
