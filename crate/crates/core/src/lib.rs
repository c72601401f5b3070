//! Discrete diffusion over motion-token sequences.
//!
//! Tokens index a codebook of `K` latent vectors; the corruption chain mixes
//! each token toward other tokens (uniformly or by distance rank) and into an
//! absorbing MASK state. A denoiser predicts clean tokens from corrupted ones
//! and the sampler runs the reverse chain, either for a single segment or for
//! several segments at once with two-phase sampling (joint steps over the
//! concatenated sequence, then independent steps per segment).
//!
//! Modules:
//! - [`codebook`]: vocabulary geometry, distance ranks, quantizer, decoder
//! - [`schedule`]: noise schedules, transition matrices, posterior
//! - [`denoiser`]: denoiser contract, oracle and tabular denoisers, training
//! - [`sampler`]: guidance, reverse steps, single and multi-segment generation
//! - [`metrics`]: jerk, transition windows, diversity, Frechet distance
//! - [`cli`]: configuration, file formats and subcommands

pub mod cli;
pub mod codebook;
pub mod denoiser;
pub mod error;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod tokens;

pub use codebook::{Codebook, MotionTrajectory, RankMatrix};
pub use error::{Error, Result};
pub use schedule::{NoiseSchedule, TransitionKind, TransitionModel};
pub use tokens::{Condition, TokenSequence};
