//! Decision-focused learning with a locally convex global surrogate loss.
//!
//! The pipeline has three stages:
//!
//! 1. [`sampling`] collects `(prediction, target, regret)` triples from the
//!    trajectory of a sampling model trained with plain MSE, plus one
//!    zero-regret anchor per instance.
//! 2. [`train::fit_surrogate`] fits a [`picnn::Picnn`], a network convex in the
//!    prediction, to those regrets.
//! 3. [`train::train_lcgln`] trains the predictive [`net::DenseNet`] end to end
//!    through the surrogate's gradient.
//!
//! [`problems`] holds the three benchmark problems with exact solvers, and
//! [`harness`] runs experiment grids and writes tables and plots.

pub mod error;
pub mod harness;
pub mod net;
pub mod optim;
pub mod picnn;
pub mod problems;
pub mod sampling;
pub mod train;

pub use error::{Error, Result};
