//! Orchestration of the generation hierarchy: goal sampling, goal pose,
//! milestone points, milestone poses, trajectory completion, motion
//! infilling, and the stitched approach-interact-leave protocol. Also the
//! training entry points for all six sub-models.

mod extract;
mod features;
mod generate;
mod train;

pub use extract::{
    extract_item, find_goal_frame, prepare_training_set, ExtractedItem, GtMilestone,
    PreparedSegment, TrainingSet, GOAL_HOLD_FRAMES,
};
pub use features::{
    build_infill_condition, build_milestone_condition, build_pose_condition,
    build_trajectory_condition, decode_blended_roots, frame_condition, milestone_vector,
    state_action, FrameConditionInputs, GAMMA_DIM, GOAL_TOKEN_DIM, MILESTONE_DIM,
    START_TOKEN_DIM, TRAJ_LEN,
};
pub use generate::{
    astar_milestones, complete_trajectory, generate_interaction, generate_milestone_poses,
    generate_milestones, infill_motion, run_leg, sample_goal, sample_goal_with_noise,
    GeneratedLeg, GeneratedMilestone, GenerationInfo, LegTarget, MilestoneSource, StartSpec,
    TrajPoint,
};
pub use train::{
    train_full_bundle, train_infill_model, train_milestones_model, train_pose_model,
    train_prior_model, train_submodel, train_trajectory_model, train_vqvae_model,
    BundleTrainConfig, ModelBundle, ModelDims, PipelineParams, SubModel, TrainConfig, TrainCurve,
};

use crate::diffusion::DiffusionError;
use crate::motion::MotionError;
use crate::sensing::SensingError;
use crate::vqvae::VqError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("object has no goal anchor for action {0:?}")]
    NoAnchor(crate::motion::Action),
    #[error("generated sequence exceeds the {max}-frame budget ({got})")]
    LengthBudget { got: usize, max: usize },
    #[error("milestone count {n} outside [1, {n_max}]")]
    BadMilestoneCount { n: usize, n_max: usize },
    #[error("ground-truth sequence length {0} is not 60k+1")]
    MisalignedSequence(usize),
    #[error("no goal pose found in sequence (no {0:?} hold)")]
    NoGoalPose(crate::motion::Action),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),
    #[error("unknown submodel {0:?}; expected one of vqvae, prior, milestones, milestone-poses, trajectory, infill")]
    UnknownSubModel(String),
    #[error("no path for the A* baseline")]
    NoPlannerPath,
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Vq(#[from] VqError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Hard ceiling on stitched sequence length.
pub const FRAME_BUDGET: usize = 1500;
