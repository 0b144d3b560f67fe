//! Extreme generalized singular value decomposition components of a sparse
//! matrix pair {A, L} by implicitly restarted joint bidiagonalization.
//!
//! The entry point is [`driver::irjbd_solve`]. The lower-level modules expose
//! the joint bidiagonalization process, the small projected GSVD, implicit and
//! thick restarting, and the dense reference implementations used in tests.

pub mod bidiag;
pub mod driver;
pub mod error;
pub mod jbd;
pub mod oracle;
pub mod restart;
pub mod shifts;
pub mod sparsemat;
pub mod stackedls;

pub use driver::{
    irjbd_solve, Criterion, GsvdComponent, RestartMode, SolveOutcome, SolverConfig, Status,
};
pub use error::{Error, Result};
pub use shifts::Which;
pub use sparsemat::SparseMatrix;
pub use stackedls::StackedOperator;
