//! Conic program description and solve contract.
//!
//! Complex decision quantities are stored as interleaved real/imaginary
//! pairs ([`ComplexVars`]). Hermitian matrix expressions are lifted to the
//! real symmetric form `[[Re X, -Im X], [Im X, Re X]]` before being handed to
//! the backend, which is Clarabel.

mod backend;
mod program;

pub use backend::{solve, solve_with, SolveSettings};
pub use program::{
    AffineExpr, ComplexAffine, ComplexVars, Constraint, ConvexProgram, HermitianAffine, Sense, SolveResult, SolveStatus,
};
