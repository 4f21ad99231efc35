//! Minimum-exponential product formulas for time-dependent two-term
//! generators `A(t) = x(t) X + y(t) Y`, with the Magnus coefficient
//! machinery, reference propagators and an Ising gate compiler.

pub mod formulas;
pub mod linalg;
pub mod magnus;
pub mod models;
pub mod quadrature;
pub mod reference;

pub use formulas::{evaluate, ExponentSchedule, FormulaError, FormulaId, Slot, Step};
pub use linalg::{CMatrix, C64};
pub use magnus::{beta_set, BetaSet, TwoTermGenerator};
pub use models::{Assignment, IsingParams};
pub use quadrature::{ScalarFn, Window};
pub use reference::{ErrorRecord, Norm, OracleConfig};

/// Decimal with 17 significant digits; round-trips every finite `f64`.
pub fn format_decimal(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}
