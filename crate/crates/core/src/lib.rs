//! Hypothetical what-if and how-to query evaluation over relational data with
//! causal dependencies.

pub mod agg;
pub mod blocks;
pub mod causal;
pub mod datamodel;
pub mod engine;
pub mod error;
pub mod estimator;
pub mod fsum;
pub mod howto;
pub mod hql;
pub mod oracle;
pub mod session;
pub mod value;
pub mod view;

pub use error::{Error, Result};
