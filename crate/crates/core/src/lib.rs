//! Dyadic item response theory.
//!
//! Responses of an actor about a partner follow a partial credit model whose
//! latent trait is the sum of an actor effect, a partner effect and a directed
//! dyadic effect. The crate builds and checks dyadic designs, simulates data,
//! fits the model by adaptive Metropolis-within-Gibbs, regresses binary
//! outcomes on the latent traits (jointly or by multiple imputation), and runs
//! parameter-recovery studies.

pub mod cli;
pub mod data;
pub mod design;
pub mod error;
pub mod inference;
pub mod model;
pub mod recovery;
pub mod rng;
pub mod simulate;
pub mod workflows;

pub use error::{Error, Result};
