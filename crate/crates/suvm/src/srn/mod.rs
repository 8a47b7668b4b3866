//! Spring-network estimation: pairwise relative-position statistics, the
//! sparse stiffness estimate with its variance-threshold rule, precision
//! matrices, Gaussian log-likelihoods, and an exact convex solver used as
//! a verification oracle.
//!
//! The statistic attached to an ordered word pair (i, j) co-detected in an
//! image is the scale-normalized offset
//! `(x_j - x_i) / (ex_i + ex_j)` per axis and the log extent ratio
//! `log(ex_j / ex_i)`. These are invariant to translation and to joint
//! rescaling of positions and extents, which is what makes the learned
//! springs transfer across object sizes.

mod convex;
mod estimate;
mod model;
mod stats;

pub use convex::{solve_convex_exact, ConvexInstance, ConvexSolution};
pub use estimate::{giant_components, sparsify, ComponentParams, SparsifyParams};
pub use model::{
    log_likelihood, precision_matrix, Axis, Configuration, NodeState, NormalizedGaussian,
    PrecisionMatrix, SpringEdge, Srn,
};
pub use stats::{PairAccum, PairStats};
