//! Computational calculus for rectifiable metric currents in truncated
//! Hilbert spaces.

pub mod boundary_solver;
pub mod complex_ops;
pub mod current;
pub mod error;
pub mod expr;
pub mod field;
pub mod fixtures;
pub mod hilbert;
pub mod king;
pub mod poly;
pub mod quadrature;
pub mod slicing;
pub mod tape;

pub use current::{Cell, Current, ExpressionMap, MetricForm, QuadOptions, RectifiableCurrent};
pub use error::{CurrentError, Result};
pub use expr::Expr;
pub use field::C64;
pub use hilbert::{AmbientSpace, CoordinateProjection};

/// Crate version, echoed in report bundles.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
