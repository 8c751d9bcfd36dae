//! Finite-volume simulation of a degenerate haptotaxis model for tumor
//! invasion under the go-or-grow dichotomy.
//!
//! Migrating cells `m` diffuse with a coefficient that vanishes where tissue
//! `v` or the total tumor density `c = m + p` vanishes and drift up the
//! tissue gradient. Proliferating cells `p` and tissue `v` follow cell-wise
//! ODEs. Each time step integrates the reactions with classical RK4 and then
//! solves an implicit Euler step for the transport of `m` with a two-point
//! flux finite-volume scheme and Newton's method.
//!
//! ```no_run
//! use haptogrow::{Grid, ModelParams, TimeStepConfig, InitialConditionSpec};
//! use haptogrow::integrate::{run_simulation, RunOptions};
//!
//! let grid = Grid::new(50, 50).unwrap();
//! let params = ModelParams::default();
//! let init = haptogrow::initial::generate_initial_state(&grid, &InitialConditionSpec::default(), 7);
//! let cfg = TimeStepConfig { t_end: 1.0, ..TimeStepConfig::default() };
//! let summary = run_simulation(init, &grid, &params, &cfg, &RunOptions::default(), |_| Ok(())).unwrap();
//! println!("{} steps", summary.steps);
//! ```

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fv;
pub mod grid;
pub mod initial;
pub mod integrate;
pub mod model;
pub mod snapshot;
pub mod study;

pub use config::{OutputFormat, RunConfig};
pub use diagnostics::{BoundViolation, DiagnosticsRecord};
pub use error::{Error, Result};
pub use fv::{CsrMatrix, FvSystem, NewtonStats};
pub use grid::{Axis, EdgeRef, Grid};
pub use initial::InitialConditionSpec;
pub use integrate::{StepStats, TimeStepConfig};
pub use model::{Field, ModelParams, Scalar, State, TaxisVariant};
