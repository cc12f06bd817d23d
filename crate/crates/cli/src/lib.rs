//! Batch front door for the hessq laboratory: JSON run configurations, the
//! expression language for right hand sides and background perturbations,
//! and the `certify` / `solve` / `flow` / `sweep` drivers.

pub mod commands;
pub mod config;
pub mod expr;

pub use commands::{run, Subcommand, EXIT_OK, EXIT_SOLVER, EXIT_VALIDATION};
pub use config::{RunConfig, Setup};
pub use expr::{parse_expr, PsiExpression};
