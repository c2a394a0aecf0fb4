//! Small-block conic programs and an embedded interior-point solver.
//!
//! A [`ConicProgram`] holds a linear objective over a real vector `x` and a
//! list of labelled constraints, each one of
//!
//! * `aᵀx + b >= 0`,
//! * `||A x + b||_2 <= eᵀx + d`,
//! * `F₀ + Σ xᵢ Fᵢ ⪰ 0`.
//!
//! [`transform`] builds the structured constraints used by robust
//! beamforming models (quantile cones, Schur complements, S-procedure
//! certificates, rank-one lifts), [`solve`] runs the interior-point method and
//! [`verify_solution`] re-checks a point against the raw program data.

pub mod dump;
pub mod error;
pub mod expr;
pub mod program;
pub mod solver;
pub mod transform;
pub mod verify;

pub use error::{ModelError, ParseError};
pub use expr::{LinExpr, SymAffine};
pub use program::{
    ConicProgram, Constraint, ConstraintKind, Lift, MatVar, Metadata, ProgramStats, VarBlock,
};
pub use solver::{
    solve, ConicSolver, InteriorPoint, Residuals, SolveReport, SolveStatus, SolverOptions,
};
pub use transform::{
    add_quantile_soc, bordered, convert_soc_to_lmi, lift_rank_one, s_procedure_lmi, soc_to_lmi,
    ConeForm, QuantileSoc,
};
pub use verify::{min_eigenvalue, verify_solution, ConstraintResidual, VerifyReport};
