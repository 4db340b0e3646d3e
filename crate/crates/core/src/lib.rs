//! Summary-association estimation for automated meta-analysis.
//!
//! Risk-of-bias indicators extracted from RCT reports are treated as multiple
//! causes of each trial's reported association. A probabilistic PCA over the
//! bias matrix yields a substitute confounder; an outcome classifier fitted on
//! biases plus the substitute confounder is then queried with every bias set
//! to low, giving the interventional distribution `p(Y | do(a = 0))`.

pub mod classifiers;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod factor;
pub mod pipeline;
pub mod rng;
pub mod synthgen;

pub use data::{AssociationLabels, BiasMatrix, Dataset, Provenance, Simplex3, SyntheticParams};
pub use error::{McmaError, Result};
pub use exec::Exec;
