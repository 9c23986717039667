//! Learning-to-hash with privileged information.
//!
//! Plain iterative quantization ([`itq`]), its slack-regularised transfer
//! variant ITQ+ ([`itq_plus`]) and the graph-regularised LapITQ+
//! ([`lap_itq_plus`]), together with the preprocessing, baselines,
//! retrieval evaluation and experiment harness used to compare them.

pub mod baselines;
pub mod codes;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod itq;
pub mod itq_plus;
pub mod lap_itq_plus;
pub mod linalg;
pub mod model;
pub mod preprocess;
pub mod synth;

pub use codes::{hamming_distance, sgn, BinaryCodeMatrix};
pub use data::{CenteringInfo, DataMatrix, MatrixFormat, SplitBundle};
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use linalg::OrthonormalMatrix;
pub use model::{HashModel, Hyperparams, Method};
pub use preprocess::{LinearProjection, ProjectionKind};
