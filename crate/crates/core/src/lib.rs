//! Black-box variational inference over location-scale families.
//!
//! The crate fits `q(z) = q₀(L⁻¹(z − ν)) |LLᵀ|^{-1/2}` to a target density
//! by stochastic ascent on the ELBO, and measures how far the fit is from
//! the target: reflection-symmetry violation, scaled moment errors, the
//! scale multiplier of the optimal Gaussian fit to an elliptical target,
//! and the convexity of the KL along location segments. A simple MCMC
//! sampler provides reference moments where none are known in closed form.
//!
//! Monte Carlo loops run on rayon when the `parallel` feature is enabled
//! (the default). Results are bit-identical with [`Exec::Sequential`].

pub mod datasets;
pub mod diagnostics;
pub mod elbo;
pub mod error;
pub mod families;
pub mod linalg;
pub mod mcmc;
pub mod par;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod targets;

pub use error::{Error, Result};
pub use par::Exec;
