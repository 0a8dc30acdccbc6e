//! Asynchronous randomized Gauss-Seidel for symmetric positive definite
//! systems and least-squares problems.
//!
//! The crate offers a synchronous reference solver ([`rgs`]), a serialized
//! replay of the bounded-delay read models ([`replay`]), a shared-memory
//! multi-threaded solver ([`async_solver`]), closed-form convergence bounds
//! ([`theory`]), the least-squares variant ([`lsq`]) and a flexible CG that
//! uses the asynchronous solver as a preconditioner ([`fcg`]).

pub mod async_solver;
pub mod dense;
pub mod direction;
pub mod error;
pub mod fcg;
pub mod lsq;
pub mod mm;
pub mod replay;
pub mod rgs;
pub mod sparse;
pub mod spectral;
pub mod testkit;
pub mod theory;

pub use async_solver::{set_write_mode, solve_async, AsyncConfig, AsyncResult, RunMetadata, SharedIterate, WriteMode};
pub use direction::{DirectionStream, IterationCounter};
pub use error::{Error, Result};
pub use replay::{make_schedule, replay_consistent, replay_inconsistent, DelaySchedule, ReadModel, ReplayResult, ScheduleKind};
pub use rgs::{rgs_step, solve_sync, ErrorTrace, SolveConfig};
pub use sparse::{compute_stats, rescale_to_unit_diagonal, MatrixStats, SparseMatrix, UnitDiagonalSystem};
pub use spectral::{SpectralEstimates, SpectralMethod};
