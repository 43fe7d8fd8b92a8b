//! Age-of-information modelling for sensor → edge → vehicular-fog pipelines.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod analytics;
pub mod channel;
pub mod des;
pub mod env;
pub mod harness;
pub mod model;
pub mod net;
pub mod quadrature;
pub mod seed;
pub mod units;
