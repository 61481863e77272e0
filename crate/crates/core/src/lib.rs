//! Semi-supervised domain adaptation for anticausal linear structural causal models.
//!
//! The crate is organised bottom-up:
//!
//! - [`scm`] builds source/target domains under the three intervention families
//!   and samples labeled and unlabeled data from them.
//! - [`subspace`] extracts eigen/singular bases and their complements.
//! - [`estimators`] holds the unsupervised baselines (OLS, DIP, CIP) and the
//!   population oracle.
//! - [`finetune`] fine-tunes a baseline on a few labeled target samples.
//! - [`masft`] runs several fine-tuned candidates and picks one on validation data.
//! - [`experiment`] is the Monte-Carlo harness behind the `ssda` binary.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod experiment;
pub mod finetune;
pub mod io;
pub mod linalg;
pub mod masft;
pub mod rng;
pub mod scm;
pub mod subspace;

pub use nalgebra::{DMatrix, DVector};

pub use error::{Result, SsdaError};
pub use estimators::{LinearPredictor, Moments, PredictorMeta};
pub use finetune::{AnchoredPenalty, PenaltyNorm, SubspaceConstraint};
pub use masft::{Candidate, CandidateSuite, DomainData, SsdaData, SuiteConfig};
pub use scm::{Confounder, Dataset, DomainParams, EnvironmentSet, Intervention, PopulationMoments};
pub use subspace::{BasisOrigin, OrthoBasis};

/// Dense real matrix used throughout the crate.
pub type Mat = DMatrix<f64>;
/// Dense real column vector used throughout the crate.
pub type Vector = DVector<f64>;
