//! Hierarchical synthesis of human-object interaction motion.
//!
//! The library is organized around a generation hierarchy: a goal pose is
//! sampled from a part-wise VQ-VAE, a transformer DDPM predicts a set of
//! milestones (including how many there should be), and two further DDPMs
//! complete the root trajectory between consecutive milestones and infill
//! the local poses along it. Everything runs on a small self-contained
//! tensor/autodiff substrate so the whole pipeline is trainable on a CPU.
//!
//! Module map:
//! - [`motion`]: skeleton, frame and sequence data model plus ground-plane
//!   transform algebra and motion file I/O.
//! - [`sensing`]: scene container, voxel object features, cylindrical
//!   environment occupancy and contact labels.
//! - [`nn`]: tensors, reverse-mode autodiff, transformer layers, Adam and
//!   gradient checking.
//! - [`vqvae`]: part-wise codebooks with an autoregressive index prior for
//!   goal pose generation.
//! - [`diffusion`]: DDPM schedule, losses, sampling loop and the conditioned
//!   transformer denoiser with an optional sequence-length head.
//! - [`pipeline`]: training-pair extraction, training entry points for the
//!   six sub-models, and the end-to-end interaction generator.
//! - [`synth`]: procedural walk-approach-sit/lie dataset generator.
//! - [`metrics`]: Fréchet distance, diversity and plausibility metrics plus
//!   the A* baseline planner.

pub mod diffusion;
pub mod hash;
pub mod metrics;
pub mod motion;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod sensing;
pub mod synth;
pub mod vqvae;
