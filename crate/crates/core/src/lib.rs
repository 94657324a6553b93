//! Latent-space analysis of daily loop trajectories.
//!
//! The crate covers the full pipeline from raw position pings to behavioural
//! groups of vessels:
//!
//! 1. [`trajdata`] — synchronize pings onto fixed hourly grids, normalize,
//!    encode seasonal covariates, and generate synthetic fleets with planted
//!    behavioural groups.
//! 2. [`nncore`] — a small deterministic numeric core: dense rank-3 tensors,
//!    1D (transposed) convolutions, batch normalization, reverse-mode
//!    gradients and the Adam optimizer.
//! 3. [`cvae`] — a convolutional (conditional) variational auto-encoder that
//!    maps each daily trajectory to a diagonal-Gaussian latent posterior.
//! 4. [`latent`] — Bhattacharyya overlap of latent Gaussians and the daily /
//!    global stability indices built on top of it.
//! 5. [`proximity`] — per-period ternary proximity graphs ({0, 1, NA}) from
//!    same-day overlaps.
//! 6. [`colsbm`] — a shared-parameter Bernoulli stochastic block model fitted
//!    to a collection of graphs with NA dyads, with penalized selection of
//!    the number of groups.
//! 7. [`pipeline`] — file-based orchestration of the above; the `latloop`
//!    binary is a thin CLI over it.
//!
//! Every stage is deterministic given the run seed: RNG streams are derived
//! per stage through [`rng::substream`].

pub mod colsbm;
pub mod cvae;
pub mod latent;
pub mod nncore;
pub mod pipeline;
pub mod proximity;
pub mod rng;
pub mod trajdata;




