//! Semantic-consistent GAN for unsupervised domain adaptation.
//!
//! One encoder, one domain-key-conditioned generator, a classifier on the
//! latent code and two dual-head discriminators, trained jointly with
//! confidence-thresholded pseudo labels on the target domain.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod networks;
pub mod optim;
pub mod oracle;
pub mod pseudo;
pub mod schedule;
pub mod tape;
pub mod trainer;
pub mod types;

pub use error::{Result, ScganError};
