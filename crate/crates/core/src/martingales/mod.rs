//! Martingale constructions for `(Z_t, M_t)`: the difference-equation
//! certificate for `f(t, M_t - Z_t, M_t)`, the Kennedy family, and the
//! two-argument family `H(Z_t, M_t)` generated by a boundary function.

mod azema_yor;
mod grid;
mod kennedy;

use thiserror::Error;

pub use azema_yor::{
    azema_yor_h, expected_path, g_pq, g_pq_exact, reachable_states, tabulate_h, verify_martingale_fn,
    verify_martingale_h, verify_martingale_table, AzemaYorSpec, Counterexample, MartingaleVerdict,
};
pub use grid::{
    check_sufficient_condition, diff_ops, Differences, ResidualSummary, SufficiencyReport,
    TimeSpaceFunction,
};
pub use kennedy::{
    kennedy_build, kennedy_build_with_range, kennedy_pgf, truncated_pgf, KennedyParams, TruncatedPgf,
    KENNEDY_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum MartingaleError {
    #[error("grid index ({t}, {x}, {y}) out of range")]
    OutOfGrid { t: i64, x: i64, y: i64 },
    #[error("H is undefined at (x={x}, y={y}); need max(x, 0) <= y <= {}", y_max - 1)]
    Domain { x: i64, y: i64, y_max: i64 },
    #[error("bad grid: {0}")]
    Grid(String),
    #[error("insufficient coverage: {0}")]
    Coverage(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("parameter regime not supported: {0}")]
    Regime(String),
    #[error("internal consistency check failed: {0}")]
    Consistency(String),
    #[error("pole: {0}")]
    Pole(String),
    #[error("malformed spec file: {0}")]
    Format(#[from] serde_json::Error),
    #[error("cannot access spec file: {0}")]
    Io(#[from] std::io::Error),
}
