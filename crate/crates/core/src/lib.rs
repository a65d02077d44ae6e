//! Risk-sensitive variational Bayes for data-driven decisions, instantiated on
//! the newsvendor problem with exponential demand.

pub mod bayes;
pub mod bounds;
pub mod error;
pub mod experiments;
pub mod newsvendor;
pub mod optim;
pub mod special;
pub mod variational;

pub use error::{Error, Result};
