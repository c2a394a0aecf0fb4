//! Multi-cell symbol-level precoding with constructive interference under
//! imperfect CSI.
//!
//! Build a [`scenario::Scenario`], draw an [`experiment::Instance`], and solve
//! it with [`schemes::solve_scheme`]. [`montecarlo`] validates the solutions
//! against fresh CSI errors and [`analysis`] evaluates the closed-form
//! overhead and complexity expressions.

pub mod analysis;
pub mod baselines;
pub mod bounds;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod montecarlo;
pub mod parallel;
pub mod scenario;
pub mod schemes;

pub use error::{CoordError, Result};
pub use experiment::Instance;
pub use parallel::Execution;
pub use scenario::{load_scenario, Scenario, ScenarioConfig};
pub use schemes::{solve_scheme, PrecoderSolution, Scheme, SchemeKind, BaselineKind, SchemeOptions};
