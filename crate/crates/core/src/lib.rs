//! Gradient-norm out-of-distribution scoring.
//!
//! The score of an input is the Lp norm of the gradient, with respect to a
//! chosen set of network parameters, of the KL divergence between the uniform
//! distribution and the model's softmax output. Confident (in-distribution)
//! predictions produce large gradients; near-uniform ones produce small
//! gradients.
//!
//! The crate provides:
//!
//! - [`nn`]: a ReLU MLP with hand-written reverse mode, exposing per-block
//!   parameter gradients and input gradients.
//! - [`losses`]: temperature softmax, cross-entropy and KL-to-uniform with
//!   closed-form logit gradients.
//! - [`scores`]: GradNorm (backprop and the closed form `U·V / (C·T)` for
//!   last-layer weights), one-hot gradient norm, direct KL, U, V, MSP, ODIN,
//!   energy and Mahalanobis scores; all oriented so higher means more ID.
//! - [`metrics`]: FPR at 95% TPR, AUROC, histograms and report types.
//! - [`data`], [`train`], [`experiments`]: synthetic data, the `FLOG`
//!   interchange file, SGD training, sweeps and the pinned benchmark.
//! - [`cli`]: the `gradnorm-ood` command-line tool.

#![allow(clippy::needless_range_loop)]

mod binio;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod losses;
pub mod mahalanobis;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scores;
pub mod train;

pub use error::{Error, Result};
pub use linalg::{lp_norm, Matrix, NormOrder, Vector};
pub use losses::Temperature;
pub use nn::{Gradients, MlpModel, ParamSelection};
pub use scores::{ScoreConfig, ScoreMethod};
