//! Condition assembly shared by training and generation: milestone vectors,
//! per-frame condition bundles, and the fixed token layouts of the four
//! denoisers.

use crate::diffusion::ConditionSet;
use crate::motion::{
    relative, slerp_facing, Action, Pose, RootTransform, SceneObject, NUM_ACTIONS, NUM_CONTACTS,
};
use crate::sensing::{environment_occupancy, object_feature, Scene, SensorConfig, OBJECT_FEATURE_DIM};

/// Character-state feature width for the default 15-joint skeleton.
pub const STATE_DIM: usize = crate::motion::state_dim(15);
/// Milestone vector: bi-directional root (8), contacts (5), state.
pub const MILESTONE_DIM: usize = 8 + NUM_CONTACTS + STATE_DIM;
/// Per-frame condition bundle: object feature, occupancy, contacts, state.
pub const GAMMA_DIM: usize = OBJECT_FEATURE_DIM + 128 + NUM_CONTACTS + STATE_DIM;
/// Fixed trajectory window between consecutive milestones.
pub const TRAJ_LEN: usize = 61;
/// Goal token: relative root (4), action one-hot (4), pose (45).
pub const GOAL_TOKEN_DIM: usize = 4 + NUM_ACTIONS + 45;
/// Start token: action one-hot (4), pose (45).
pub const START_TOKEN_DIM: usize = NUM_ACTIONS + 45;

/// Relative transform packed as [pos_x, pos_z, facing_x, facing_z].
pub fn rel4(from: &RootTransform, to: &RootTransform) -> [f64; 4] {
    let r = relative(from, to);
    [r.pos[0], r.pos[1], r.facing[0], r.facing[1]]
}

fn unpack4(v: &[f64]) -> RootTransform {
    let facing = facing_or_default([v[2], v[3]]);
    RootTransform::new([v[0], v[1]], facing).expect("non-degenerate facing")
}

/// Normalizes a possibly degenerate facing, falling back to +z.
pub fn facing_or_default(f: [f64; 2]) -> [f64; 2] {
    let n = (f[0] * f[0] + f[1] * f[1]).sqrt();
    if n < 1e-6 || !n.is_finite() {
        [0.0, 1.0]
    } else {
        [f[0] / n, f[1] / n]
    }
}

/// Packs a milestone into the diffusion representation relative to the two
/// given frames.
pub fn milestone_vector(
    world_root: &RootTransform,
    frame_a: &RootTransform,
    frame_b: &RootTransform,
    contacts: &[f64; NUM_CONTACTS],
    state: &[f64],
) -> Vec<f64> {
    let mut v = Vec::with_capacity(MILESTONE_DIM);
    v.extend_from_slice(&rel4(frame_a, world_root));
    v.extend_from_slice(&rel4(frame_b, world_root));
    v.extend_from_slice(contacts);
    v.extend_from_slice(state);
    v
}

/// Decodes the bi-directional root of a milestone vector, blending the two
/// frame decodings with weight `lambda` toward `frame_b`.
pub fn decode_blended_roots(
    vec: &[f64],
    frame_a: &RootTransform,
    frame_b: &RootTransform,
    lambda: f64,
) -> RootTransform {
    let via_a = frame_a.compose(&unpack4(&vec[0..4]));
    let via_b = frame_b.compose(&unpack4(&vec[4..8]));
    let pos = [
        via_a.pos[0] + lambda * (via_b.pos[0] - via_a.pos[0]),
        via_a.pos[1] + lambda * (via_b.pos[1] - via_a.pos[1]),
    ];
    let facing = slerp_facing(via_a.facing, via_b.facing, lambda);
    RootTransform::new(pos, facing).expect("unit facing")
}

/// Contacts slice of a milestone vector.
pub fn milestone_contacts(vec: &[f64]) -> [f64; NUM_CONTACTS] {
    let mut c = [0.0; NUM_CONTACTS];
    c.copy_from_slice(&vec[8..8 + NUM_CONTACTS]);
    c
}

/// State slice of a milestone vector.
pub fn milestone_state(vec: &[f64]) -> &[f64] {
    &vec[8 + NUM_CONTACTS..]
}

/// Action recovered from the state feature's one-hot block.
pub fn state_action(state: &[f64]) -> Action {
    let block = &state[STATE_DIM - NUM_ACTIONS..];
    let mut best = 0;
    for (i, v) in block.iter().enumerate() {
        if *v > block[best] {
            best = i;
        }
    }
    Action::from_index(best)
}

/// Inputs for one per-frame condition bundle.
pub struct FrameConditionInputs<'a> {
    pub scene: &'a Scene,
    pub object: &'a SceneObject,
    pub sensor: &'a SensorConfig,
}

/// Frame-wise condition: object feature and environment occupancy at the
/// frame's root, plus its contacts and state.
pub fn frame_condition(
    inputs: &FrameConditionInputs,
    root: &RootTransform,
    contacts: &[f64; NUM_CONTACTS],
    state: &[f64],
) -> Result<Vec<f64>, crate::sensing::SensingError> {
    let mut v = Vec::with_capacity(GAMMA_DIM);
    v.extend(object_feature(inputs.object, root));
    v.extend(environment_occupancy(inputs.scene, root, inputs.sensor)?);
    v.extend_from_slice(contacts);
    v.extend_from_slice(state);
    Ok(v)
}

pub(crate) fn contacts_as_f64(c: &[bool; NUM_CONTACTS]) -> [f64; NUM_CONTACTS] {
    let mut out = [0.0; NUM_CONTACTS];
    for (o, &b) in out.iter_mut().zip(c) {
        *o = if b { 1.0 } else { 0.0 };
    }
    out
}

/// Milestone-point condition: object features and occupancies at the start
/// and goal, the goal description, and the start description, in fixed
/// token order.
pub fn build_milestone_condition(
    start_root: &RootTransform,
    start_action: Action,
    start_pose: &Pose,
    goal_root: &RootTransform,
    goal_action: Action,
    goal_pose: &Pose,
    object: &SceneObject,
    scene: &Scene,
    sensor: &SensorConfig,
) -> Result<ConditionSet, crate::sensing::SensingError> {
    let mut g_tok = Vec::with_capacity(GOAL_TOKEN_DIM);
    g_tok.extend_from_slice(&rel4(start_root, goal_root));
    g_tok.extend_from_slice(&goal_action.one_hot());
    g_tok.extend(goal_pose.flatten());
    let mut s_tok = Vec::with_capacity(START_TOKEN_DIM);
    s_tok.extend_from_slice(&start_action.one_hot());
    s_tok.extend(start_pose.flatten());
    Ok(ConditionSet::new(vec![
        ("I_s".into(), object_feature(object, start_root)),
        ("I_g".into(), object_feature(object, goal_root)),
        (
            "O_s".into(),
            environment_occupancy(scene, start_root, sensor)?,
        ),
        (
            "O_g".into(),
            environment_occupancy(scene, goal_root, sensor)?,
        ),
        ("g".into(), g_tok),
        ("s".into(), s_tok),
    ]))
}

/// Milestone-pose condition: start and goal poses as tokens plus one
/// frame-wise bundle per milestone.
pub fn build_pose_condition(
    start_pose: &Pose,
    goal_pose: &Pose,
    inputs: &FrameConditionInputs,
    milestones: &[(RootTransform, [f64; NUM_CONTACTS], Vec<f64>)],
) -> Result<ConditionSet, crate::sensing::SensingError> {
    let mut per_frame = Vec::with_capacity(milestones.len());
    for (root, contacts, state) in milestones {
        per_frame.push(frame_condition(inputs, root, contacts, state)?);
    }
    Ok(ConditionSet::new(vec![
        ("theta_s".into(), start_pose.flatten()),
        ("theta_g".into(), goal_pose.flatten()),
    ])
    .with_per_frame(per_frame))
}

/// Trajectory-completion condition for the segment between milestones `a`
/// and `b` (given as full milestone vectors in leg coordinates plus their
/// decoded world roots).
#[allow(clippy::too_many_arguments)]
pub fn build_trajectory_condition(
    a_vec: &[f64],
    b_vec: &[f64],
    a_root: &RootTransform,
    b_root: &RootTransform,
    object: &SceneObject,
    scene: &Scene,
    sensor: &SensorConfig,
) -> Result<ConditionSet, crate::sensing::SensingError> {
    Ok(ConditionSet::new(vec![
        ("I_a".into(), object_feature(object, a_root)),
        ("I_b".into(), object_feature(object, b_root)),
        ("O_a".into(), environment_occupancy(scene, a_root, sensor)?),
        ("O_b".into(), environment_occupancy(scene, b_root, sensor)?),
        ("m_a".into(), a_vec.to_vec()),
        ("m_b".into(), b_vec.to_vec()),
        ("t_ab".into(), rel4(a_root, b_root).to_vec()),
    ]))
}

/// Infilling condition: bounding milestone poses plus 61 frame-wise
/// bundles computed from the trajectory points.
pub fn build_infill_condition(
    pose_a: &Pose,
    pose_b: &Pose,
    inputs: &FrameConditionInputs,
    trajectory: &[(RootTransform, [f64; NUM_CONTACTS], Vec<f64>)],
) -> Result<ConditionSet, crate::sensing::SensingError> {
    let mut per_frame = Vec::with_capacity(trajectory.len());
    for (root, contacts, state) in trajectory {
        per_frame.push(frame_condition(inputs, root, contacts, state)?);
    }
    Ok(ConditionSet::new(vec![
        ("pose_a".into(), pose_a.flatten()),
        ("pose_b".into(), pose_b.flatten()),
    ])
    .with_per_frame(per_frame))
}

pub(crate) fn bool_contacts(c: &[f64; NUM_CONTACTS]) -> [bool; NUM_CONTACTS] {
    let mut out = [false; NUM_CONTACTS];
    for (o, &v) in out.iter_mut().zip(c) {
        *o = v >= 0.5;
    }
    out
}
