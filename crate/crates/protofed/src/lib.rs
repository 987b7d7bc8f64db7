//! Deterministic simulator of prototype-aligned federated unsupervised domain
//! adaptation for cross-camera retrieval.
//!
//! Camera clients hold unlabeled data that never leaves the device; only model
//! parameters travel. The server trains a supervised pseudo-client on a labeled
//! source set and ships per-identity mean features (prototypes) to clients,
//! which align their local feature distributions to them through an MMD loss
//! while self-training on DBSCAN pseudo-labels with a teacher-student pair.
//!
//! The numeric core ([`mat`], [`kernel`], [`mmd`], [`encoder`],
//! [`evaluation`], [`pseudolabel`]) is generic over the scalar type via
//! [`scalar::Real`]; the simulator layers ([`federation`], [`synthgen`],
//! [`config`], [`harness`]) instantiate it at `f64` — see the aliases below.

pub mod config;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod federation;
pub mod harness;
pub mod kernel;
pub mod mat;
pub mod mmd;
pub mod pseudolabel;
pub mod scalar;
pub mod synthgen;

#[doc(hidden)]
pub mod testutil;

pub use error::{Error, Result};

/// Concrete `f64` instantiations used throughout the simulator.
pub type FeatureMat = mat::FeatureMatrix<f64>;
pub type Params = encoder::ModelParams<f64>;
pub type Head = encoder::ClassifierHead<f64>;
pub type Kernel = kernel::KernelSpec<f64>;
pub type Split = evaluation::RetrievalSplit<f64>;
