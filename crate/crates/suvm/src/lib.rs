//! # suvm
//!
//! Unsupervised learning of part-aware object prototypes from unlabeled
//! image corpora, plus generative sampling, detection/localization and
//! evaluation tooling.
//!
//! The pipeline has four learning stages and two inference tasks:
//!
//! 1. **Visual dictionary** ([`dictionary`]): random patches from a scale
//!    pyramid are described by dimension-reduced HOG vectors and clustered
//!    with k-means; every patch of every image can then be assigned a word.
//! 2. **Spring network** ([`srn`]): scale-normalized relative offsets and
//!    log scale ratios of co-detected word pairs are accumulated over the
//!    corpus; a variance threshold (backed by the KKT bound of the exact
//!    L1-regularized convex problem) selects a sparse edge set and its
//!    spring stiffnesses. Giant connected components are the object models.
//! 3. **Semantic structure** ([`semantics`]): viewlets are grouped into
//!    parts (mutual-exclusion and stable-edge rules) and embedded into a
//!    global position/scale map by weighted least squares.
//! 4. **Generative model** ([`generative`]): the learned network is a
//!    Gaussian Markov random field that can sample synthetic exemplars and
//!    score the likelihood of observed viewlet groups.
//!
//! Detection ([`detection`]) groups word detections into structurally
//! compatible components in time linear in the number of scanned patches;
//! evaluation ([`eval`]) scores detections against ground truth.

pub mod detection;
pub mod dictionary;
pub mod error;
pub mod eval;
pub mod generative;
pub mod imaging;
pub mod modelfile;
pub mod pipeline;
pub mod raster;
pub mod semantics;
pub mod srn;
pub mod synth;
pub mod util;
pub mod viz;

pub use error::{Error, Result};
