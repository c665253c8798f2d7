//! Label consistency checking for cells ordered along a developmental
//! trajectory.
//!
//! Cells are embedded, fitted with a principal curve or tree skeleton and
//! ordered by pseudotime. Their expert labels then become the observations
//! of an inhomogeneous hidden Markov tree whose transitions depend on the
//! pseudotime gap between neighbouring cells. The most probable hidden
//! states are compared with the expert labels to flag likely mistakes.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod markov;
pub mod model;
pub mod params;
pub mod pipeline;
pub mod pseudotime;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{
    Border, CellRecord, ConsistencyReport, HmtParams, LineageTopology, OrderedDataset,
    PseudotimeFrame, Rate, ReportCell,
};
