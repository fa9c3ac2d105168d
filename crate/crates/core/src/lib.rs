//! Particle estimators for scaled cumulant generating functions of finite
//! continuous-time Markov jump processes.
//!
//! The crate provides
//!
//! * models and additive observables ([`model`], [`model_file`]),
//! * the tilted generator split into jump rates and a potential ([`tilt`]),
//! * deterministic reference solutions ([`oracle`]),
//! * McKean selection rates ([`mckean`]),
//! * the mean-field particle engine ([`meanfield`]) and the cloning
//!   algorithm ([`cloning`]), both exact event-driven simulations,
//! * estimators, error statistics and scaling sweeps ([`estimators`]).

pub mod cloning;
pub mod ensemble;
pub mod error;
pub mod estimators;
pub mod event_log;
pub mod mckean;
pub mod meanfield;
pub mod model;
pub mod model_file;
pub mod oracle;
pub mod rng;
pub mod tilt;

pub use error::{Error, Result};
