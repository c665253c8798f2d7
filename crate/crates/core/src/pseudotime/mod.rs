//! Trajectory inference: embedding, curve or tree skeleton fitting, and
//! projection of cells to pseudotime.

mod curve;
mod embed;
mod kmeans;
mod project;
mod skeleton;
mod tree;

pub use curve::{fit_curve, CurveConfig};
pub use embed::{embed, EmbedMethod, Embedding};
pub use kmeans::{kmeans, KMeans};
pub use project::{project, project_new};
pub use skeleton::{Branch, TrajectoryKind, TrajectoryModel};
pub use tree::fit_tree;
