//! Estimating normalizing constants and sampling from unnormalized mass
//! functions with a reversed variational autoencoder.
//!
//! A fixed simple latent prior is decoded into a mixture of product
//! distributions over the variables of interest, and an encoder network maps
//! configurations back to latent codes. Maximizing the joint Jensen bound
//! trains both networks using nothing but evaluations of `ln f(x)`; the
//! trained bound is a rigorous lower bound on `ln Z` and the decoder is an
//! independent-sample generator.
//!
//! Modules:
//! - [`diffcore`]: the single-hidden-layer SELU network, its hand-written
//!   gradients and Adam.
//! - [`relax`]: binary Concrete spins, Kumaraswamy / Beta reparameterized
//!   sampling and the steep-sigmoid indicator.
//! - [`targets`]: Ising, stochastic block model and noisy-ranking targets.
//! - [`vaecore`]: the bound, training, sampling, latent-size sweeps.
//! - [`oracles`]: exact enumeration, the exact finite-torus Ising partition
//!   function, and MCMC baselines.

pub mod diffcore;
pub mod error;
pub mod oracles;
pub mod relax;
pub mod rng;
pub mod targets;
pub mod vaecore;

pub use error::{Error, Result};
pub use targets::{Domain, Graph, IsingTarget, RankTarget, SbmTarget, TargetModel};
pub use vaecore::{ElboEstimate, LatentSpec, TrainConfig, Vae};
