//! Diffusion-generated initialization for variational quantum algorithms.
//!
//! The pipeline covers Hamiltonian construction, VQE optimization for
//! dataset building, conditional DDPM training and sampling with
//! classifier-free guidance, and an evaluation harness comparing
//! diffusion-based against random initialization.

pub mod config;
pub mod dataset;
pub mod ddpm;
pub mod denoiser;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod rng;
pub mod sim;
pub mod tasks;
pub mod vqe;

pub use error::{Error, Result};

/// Version tag recorded in generated artifacts.
pub const GENERATOR_VERSION: &str = "diffq-0.1";
