//! Solvers for partially observable Markov decision processes posed on
//! Wasserstein belief spaces.
//!
//! Beliefs are finite-support measures on a metric state grid. The crate
//! provides the belief-MDP reduction (prediction, observation marginal,
//! Bayes posterior), weighted-norm value iteration with its a-priori error
//! certificate, and set iteration, which represents value functions as upper
//! envelopes of finitely many Lipschitz alpha-functions.

pub mod conjugate;
pub mod csvio;
pub mod error;
pub mod filter;
pub mod kalman;
pub mod measure;
pub mod model;
pub mod quadrature;
pub mod rollout;
pub mod sample;
pub mod toy;
pub mod transport;
pub mod value_iteration;

pub use error::{Error, Result};
pub use measure::{DiscreteMeasure, GridRef, LipschitzFn, MetricKind, StateGrid, WeightFunction};
pub use model::{certify, CertifiedConstants, CertifiedModel, PomdpModel};
