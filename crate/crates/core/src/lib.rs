//! Online RLHF under f-divergence regularization on a synthetic
//! contextual bandit with Bradley–Terry preferences.

pub mod algorithms;
pub mod divergence;
pub mod env;
pub mod error;
pub mod harness;
pub mod policy;
pub mod reward;
pub mod roots;
pub mod uncertainty;

pub use error::{Error, Result};
