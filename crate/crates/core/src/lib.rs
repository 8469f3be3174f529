//! Asymptotic-preserving neural surrogates for the multiscale radiative
//! transfer equation, built on a multiscale parity decomposition.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: a small tape with forward tangents and reverse sweeps.
//! - [`quadrature`]: Gauss-Legendre rules and the velocity average `⟨·⟩`.
//! - [`nets`]: adaptive residual networks, the periodic input embedding and
//!   the parity-preserving wrappers.
//! - [`physics`]: residuals of the parity systems, the loss, initial data and
//!   the diffusion limit.
//! - [`sampler`], [`train`]: collocation batches, Adam and the training loop.
//! - [`reference`]: a finite-difference solver used as ground truth.
//! - [`experiment`], [`plot`]: configs, artifacts and SVG figures.

pub mod autodiff;
pub mod error;
pub mod experiment;
pub mod io;
pub mod nets;
pub mod physics;
pub mod plot;
pub mod quadrature;
pub mod reference;
pub mod sampler;
pub mod train;

pub use error::{Error, Result};
