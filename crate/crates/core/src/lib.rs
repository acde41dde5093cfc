//! Regional SEIR-type epidemic model with social distancing, a delayed
//! negative-binomial observation model and Bayesian estimation by HMC.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calendar;
pub mod cases;
pub mod dual;
pub mod dynamics;
pub mod error;
pub mod observation;
pub mod posterior;
pub mod reproduction;
pub mod sampler;
pub mod schedules;
pub mod simstudy;
pub mod stats;
pub mod workbench;

pub use error::{Error, Result};
