//! Pinning synchronization of networks whose topology switches according to
//! a continuous-time Markov chain.
//!
//! The crate bundles the dense linear algebra it needs ([`matlin`]), Markov
//! chain tooling ([`markov`]), node dynamics and the QUAD condition
//! ([`dynamics`]), the switched network integrator ([`switchnet`]),
//! stabilization certificates ([`certificates`]), the mobile-agent topology
//! generator ([`mobility`]) and experiment drivers ([`experiment`]).

// `!(x > 0.0)` is used on purpose: it rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod markov;
pub mod matlin;
pub mod mobility;
pub mod output;
pub mod report;
pub mod rng;
pub mod switchnet;

pub use error::{Error, Result};
