//! Dirichlet-process mixtures of inverted Dirichlet distributions, fitted by
//! extended variational inference on a single surrogate lower bound.

pub mod cli;
pub mod error;
pub mod evalgen;
pub mod inference;
pub mod model;
pub mod specfun;

pub use error::{Error, Result};
pub use evalgen::{builtin_model, builtin_models, GroundTruthModel, MixtureDensity};
pub use inference::{fit, FitResult};
pub use model::{MixtureEstimate, PositiveDataset, PriorConfig, VariationalPosterior};
pub use specfun::{InvertedDirichletParams, RandomSeed};
