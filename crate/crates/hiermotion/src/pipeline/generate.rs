//! Inference-time orchestration: goal sampling, the four-stage hierarchy
//! per leg, and the stitched approach-interact-leave protocol.

use super::features::{
    bool_contacts, build_infill_condition, build_milestone_condition, build_pose_condition,
    build_trajectory_condition, contacts_as_f64, decode_blended_roots, facing_or_default,
    milestone_contacts, milestone_state, milestone_vector, state_action, FrameConditionInputs,
    STATE_DIM, TRAJ_LEN,
};
use super::train::ModelBundle;
use super::{PipelineError, FRAME_BUDGET};
use crate::diffusion::LengthMode;
use crate::metrics::{astar_grid, rasterize_scene};
use crate::motion::{
    character_state, Action, Frame, GoalAnchor, MotionSequence, Pose, RootTransform, SceneObject,
    NUM_CONTACTS,
};
use crate::nn::Scalar;
use crate::sensing::{contact_labels, environment_occupancy, Scene, CONTACT_EPS};
use crate::synth::stand_pose;
use rand::Rng;
use rand_distr::Distribution;

/// Where the character starts a leg.
#[derive(Debug, Clone)]
pub struct StartSpec {
    pub root: RootTransform,
    pub action: Action,
    pub pose: Pose,
}

/// Where a leg should end.
#[derive(Debug, Clone)]
pub struct LegTarget {
    pub root: RootTransform,
    pub action: Action,
    pub pose: Pose,
}

/// How milestone points are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilestoneSource {
    /// The milestone diffusion model with its length head.
    Diffusion,
    /// Evenly spaced points along an A* grid path (ablation baseline).
    AStar,
}

/// A decoded milestone in leg coordinates.
#[derive(Debug, Clone)]
pub struct GeneratedMilestone {
    /// Milestone vector relative to the leg's start and goal frames.
    pub vec: Vec<f64>,
    pub world_root: RootTransform,
    pub contacts: [f64; NUM_CONTACTS],
    pub state: Vec<f64>,
}

/// A fully generated leg.
pub struct GeneratedLeg {
    pub frames: Vec<Frame>,
    pub milestone_roots: Vec<RootTransform>,
    pub n: usize,
}

/// Summary of one generated interaction.
#[derive(Debug, Clone)]
pub struct GenerationInfo {
    pub n_approach: usize,
    pub n_leave: usize,
    pub goal_root: RootTransform,
    pub goal_action: Action,
    pub frames: usize,
    pub approach_milestone_roots: Vec<RootTransform>,
    pub leave_milestone_roots: Vec<RootTransform>,
}

/// Position jitter applied to sampled goal anchors.
const GOAL_NOISE_STD: f64 = 0.05;
/// Cap on the total anchor perturbation.
const GOAL_NOISE_CLIP: f64 = 0.15;

/// Uniformly picks a goal anchor for the action and perturbs its position,
/// resampling until the perturbed point stays collision-free (same support
/// surface as the anchor).
pub fn sample_goal(
    object: &SceneObject,
    action: Action,
    rng: &mut impl Rng,
) -> Result<(RootTransform, Action), PipelineError> {
    sample_goal_with_noise(object, action, GOAL_NOISE_STD, rng)
}

pub fn sample_goal_with_noise(
    object: &SceneObject,
    action: Action,
    noise_std: f64,
    rng: &mut impl Rng,
) -> Result<(RootTransform, Action), PipelineError> {
    let anchors: Vec<&GoalAnchor> = object
        .goal_anchors
        .iter()
        .filter(|a| a.action == action)
        .collect();
    if anchors.is_empty() {
        return Err(PipelineError::NoAnchor(action));
    }
    let anchor = anchors[rng.gen_range(0..anchors.len())];
    if noise_std <= 0.0 {
        return Ok((anchor.root, action));
    }
    let support = object.support_height(anchor.root.pos);
    let normal = rand_distr::Normal::new(0.0, noise_std).expect("valid std");
    for _ in 0..1000 {
        let dx = normal.sample(rng);
        let dz = normal.sample(rng);
        if (dx * dx + dz * dz).sqrt() > GOAL_NOISE_CLIP {
            continue;
        }
        let pos = [anchor.root.pos[0] + dx, anchor.root.pos[1] + dz];
        // collision-free: the perturbed root must rest on the same support
        // surface (not moved onto or into the object relative to the anchor)
        if (object.support_height(pos) - support).abs() < 1e-9 {
            return Ok((
                RootTransform::new(pos, anchor.root.facing)?,
                action,
            ));
        }
    }
    Ok((anchor.root, action))
}

fn start_leg_point(
    start: &StartSpec,
    target: &LegTarget,
    scene: &Scene,
) -> (GeneratedMilestone, Pose) {
    let frame = Frame {
        root: start.root,
        pose: start.pose.clone(),
        contacts: [false; NUM_CONTACTS],
        action: start.action,
    };
    let contacts = contacts_as_f64(&contact_labels(&frame, scene, CONTACT_EPS));
    let state = character_state(&frame, &frame, crate::motion::FPS);
    let vec = milestone_vector(&start.root, &start.root, &target.root, &contacts, &state);
    (
        GeneratedMilestone {
            vec,
            world_root: start.root,
            contacts,
            state,
        },
        start.pose.clone(),
    )
}

/// Samples N from the length head and denoises N milestone vectors, then
/// decodes world roots by blending the start-frame and goal-frame
/// decodings (blend weight i/(N-1) toward the goal; 1 for N = 1). The
/// final milestone is pinned to the leg target.
pub fn generate_milestones<F: Scalar>(
    bundle: &ModelBundle<F>,
    start: &StartSpec,
    target: &LegTarget,
    object: &SceneObject,
    scene: &Scene,
    rng: &mut impl Rng,
) -> Result<Vec<GeneratedMilestone>, PipelineError> {
    let cond = build_milestone_condition(
        &start.root,
        start.action,
        &start.pose,
        &target.root,
        target.action,
        &target.pose,
        object,
        scene,
        &bundle.params.sensor,
    )?;
    let n = bundle
        .milestones
        .predict_length(&cond, rng, LengthMode::Sample)?;
    if n == 0 || n > bundle.params.n_max {
        return Err(PipelineError::BadMilestoneCount {
            n,
            n_max: bundle.params.n_max,
        });
    }
    let x = bundle.milestones.sample(&cond, n, &bundle.schedule, rng)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = x.row(i).to_vec();
        let lambda = if n == 1 {
            1.0
        } else {
            i as f64 / (n - 1) as f64
        };
        let world_root = if i == n - 1 {
            target.root
        } else {
            decode_blended_roots(&row, &start.root, &target.root, lambda)
        };
        let contacts = milestone_contacts(&row);
        let state = milestone_state(&row).to_vec();
        let vec = milestone_vector(&world_root, &start.root, &target.root, &contacts, &state);
        out.push(GeneratedMilestone {
            vec,
            world_root,
            contacts,
            state,
        });
    }
    Ok(out)
}

/// Denoises the local pose at each milestone, conditioned on the start and
/// goal poses and each milestone's frame-wise bundle (computed from the
/// generated milestones, not ground truth). The final pose is pinned to the
/// leg target's pose.
pub fn generate_milestone_poses<F: Scalar>(
    bundle: &ModelBundle<F>,
    milestones: &[GeneratedMilestone],
    start_pose: &Pose,
    target: &LegTarget,
    object: &SceneObject,
    scene: &Scene,
    rng: &mut impl Rng,
) -> Result<Vec<Pose>, PipelineError> {
    let inputs = FrameConditionInputs {
        scene,
        object,
        sensor: &bundle.params.sensor,
    };
    let gamma: Vec<(RootTransform, [f64; NUM_CONTACTS], Vec<f64>)> = milestones
        .iter()
        .map(|m| (m.world_root, m.contacts, m.state.clone()))
        .collect();
    let cond = build_pose_condition(start_pose, &target.pose, &inputs, &gamma)?;
    let x = bundle
        .milestone_poses
        .sample(&cond, milestones.len(), &bundle.schedule, rng)?;
    let mut poses = Vec::with_capacity(milestones.len());
    for i in 0..milestones.len() {
        if i == milestones.len() - 1 {
            poses.push(target.pose.clone());
        } else {
            poses.push(Pose::from_flat(&x.row(i).to_vec())?);
        }
    }
    Ok(poses)
}

/// Trajectory point: blended world root, contact values, state feature.
pub type TrajPoint = (RootTransform, [f64; NUM_CONTACTS], Vec<f64>);

/// Completes the 61-point trajectory between two consecutive milestones;
/// endpoints are overwritten to the milestones exactly.
pub fn complete_trajectory<F: Scalar>(
    bundle: &ModelBundle<F>,
    a: &GeneratedMilestone,
    b: &GeneratedMilestone,
    object: &SceneObject,
    scene: &Scene,
    rng: &mut impl Rng,
) -> Result<Vec<TrajPoint>, PipelineError> {
    let cond = build_trajectory_condition(
        &a.vec,
        &b.vec,
        &a.world_root,
        &b.world_root,
        object,
        scene,
        &bundle.params.sensor,
    )?;
    let x = bundle
        .trajectory
        .sample(&cond, TRAJ_LEN, &bundle.schedule, rng)?;
    let mut points = Vec::with_capacity(TRAJ_LEN);
    for j in 0..TRAJ_LEN {
        if j == 0 {
            points.push((a.world_root, a.contacts, a.state.clone()));
            continue;
        }
        if j == TRAJ_LEN - 1 {
            points.push((b.world_root, b.contacts, b.state.clone()));
            continue;
        }
        let row: Vec<f64> = x.row(j).to_vec();
        let lambda = j as f64 / (TRAJ_LEN - 1) as f64;
        let root = decode_blended_roots(&row, &a.world_root, &b.world_root, lambda);
        points.push((root, milestone_contacts(&row), milestone_state(&row).to_vec()));
    }
    Ok(points)
}

/// Infills the 61 local poses over a completed trajectory; the first and
/// last poses are overwritten to the bounding milestone poses.
pub fn infill_motion<F: Scalar>(
    bundle: &ModelBundle<F>,
    trajectory: &[TrajPoint],
    pose_a: &Pose,
    pose_b: &Pose,
    object: &SceneObject,
    scene: &Scene,
    rng: &mut impl Rng,
) -> Result<Vec<Pose>, PipelineError> {
    let inputs = FrameConditionInputs {
        scene,
        object,
        sensor: &bundle.params.sensor,
    };
    let cond = build_infill_condition(pose_a, pose_b, &inputs, trajectory)?;
    let x = bundle
        .infill
        .sample(&cond, TRAJ_LEN, &bundle.schedule, rng)?;
    let mut poses = Vec::with_capacity(TRAJ_LEN);
    for j in 0..TRAJ_LEN {
        if j == 0 {
            poses.push(pose_a.clone());
        } else if j == TRAJ_LEN - 1 {
            poses.push(pose_b.clone());
        } else {
            poses.push(Pose::from_flat(&x.row(j).to_vec())?);
        }
    }
    Ok(poses)
}

fn walking_state(speed: f64) -> Vec<f64> {
    let mut w = Vec::with_capacity(STATE_DIM);
    let stand = stand_pose();
    w.extend(stand.flatten());
    for _ in 0..stand.num_joints() {
        w.extend_from_slice(&[0.0, 0.0, speed]);
    }
    w.extend_from_slice(&[0.0, 1.0]);
    w.extend_from_slice(&[0.0, speed]);
    w.extend_from_slice(&Action::Walk.one_hot());
    w
}

fn stationary_state(pose: &Pose, action: Action) -> Vec<f64> {
    let mut w = Vec::with_capacity(STATE_DIM);
    w.extend(pose.flatten());
    w.extend(std::iter::repeat(0.0).take(pose.num_joints() * 3));
    w.extend_from_slice(&[0.0, 1.0]);
    w.extend_from_slice(&[0.0, 0.0]);
    w.extend_from_slice(&action.one_hot());
    w
}

/// Nominal walking speed assumed by the A* baseline, m/s.
const BASELINE_SPEED: f64 = 1.2;
/// Nominal distance between consecutive milestones (2 s of walking).
const MILESTONE_SPACING: f64 = BASELINE_SPEED * 2.0;

/// Milestones from an A* grid plan: evenly spaced points along the planned
/// path with synthetic walking states, the final one pinned to the target.
pub fn astar_milestones<F: Scalar>(
    bundle: &ModelBundle<F>,
    start: &StartSpec,
    target: &LegTarget,
    scene: &Scene,
    _object: &SceneObject,
) -> Result<Vec<GeneratedMilestone>, PipelineError> {
    let grid = rasterize_scene(scene, 0.25, 0.35);
    let start_cell = grid
        .nearest_free_cell(start.root.pos)
        .ok_or(PipelineError::NoPlannerPath)?;
    let goal_cell = grid
        .nearest_free_cell(target.root.pos)
        .ok_or(PipelineError::NoPlannerPath)?;
    let path = astar_grid(&grid.blocked, grid.nx, grid.nz, start_cell, goal_cell)
        .map_err(|_| PipelineError::NoPlannerPath)?;
    let mut polyline: Vec<[f64; 2]> = Vec::with_capacity(path.cells.len() + 2);
    polyline.push(start.root.pos);
    polyline.extend(path.cells.iter().map(|&c| grid.cell_center(c)));
    polyline.push(target.root.pos);

    let mut cumulative = vec![0.0f64];
    for w in polyline.windows(2) {
        let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        cumulative.push(cumulative.last().unwrap() + d);
    }
    let total = *cumulative.last().unwrap();
    let n = ((total / MILESTONE_SPACING).ceil() as usize).clamp(1, bundle.params.n_max);

    let point_at = |arc: f64| -> ([f64; 2], [f64; 2]) {
        let target_arc = arc.clamp(0.0, total);
        let mut idx = 0;
        while idx + 1 < cumulative.len() - 1 && cumulative[idx + 1] < target_arc {
            idx += 1;
        }
        let seg = (cumulative[idx + 1] - cumulative[idx]).max(1e-12);
        let w = (target_arc - cumulative[idx]) / seg;
        let p = [
            polyline[idx][0] + w * (polyline[idx + 1][0] - polyline[idx][0]),
            polyline[idx][1] + w * (polyline[idx + 1][1] - polyline[idx][1]),
        ];
        let t = facing_or_default([
            polyline[idx + 1][0] - polyline[idx][0],
            polyline[idx + 1][1] - polyline[idx][1],
        ]);
        (p, t)
    };

    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        if i == n {
            let goal_frame = Frame {
                root: target.root,
                pose: target.pose.clone(),
                contacts: [false; NUM_CONTACTS],
                action: target.action,
            };
            let contacts = contacts_as_f64(&contact_labels(&goal_frame, scene, CONTACT_EPS));
            let state = stationary_state(&target.pose, target.action);
            let vec =
                milestone_vector(&target.root, &start.root, &target.root, &contacts, &state);
            out.push(GeneratedMilestone {
                vec,
                world_root: target.root,
                contacts,
                state,
            });
        } else {
            let (p, t) = point_at(total * i as f64 / n as f64);
            let root = RootTransform::new(p, t)?;
            let contacts = [0.0, 0.5, 0.5, 0.0, 0.0];
            let state = walking_state(BASELINE_SPEED);
            let vec = milestone_vector(&root, &start.root, &target.root, &contacts, &state);
            out.push(GeneratedMilestone {
                vec,
                world_root: root,
                contacts,
                state,
            });
        }
    }
    Ok(out)
}

/// Runs the hierarchy for one leg and assembles its frames. Frame j of each
/// 61-frame segment supplies the root, thresholded contacts, and the action
/// recovered from the state feature; poses come from the infill model.
pub fn run_leg<F: Scalar>(
    bundle: &ModelBundle<F>,
    start: &StartSpec,
    target: &LegTarget,
    object: &SceneObject,
    scene: &Scene,
    source: MilestoneSource,
    rng: &mut impl Rng,
) -> Result<GeneratedLeg, PipelineError> {
    let milestones = match source {
        MilestoneSource::Diffusion => {
            generate_milestones(bundle, start, target, object, scene, rng)?
        }
        MilestoneSource::AStar => astar_milestones(bundle, start, target, scene, object)?,
    };
    let poses = generate_milestone_poses(
        bundle,
        &milestones,
        &start.pose,
        target,
        object,
        scene,
        rng,
    )?;
    let (m0, pose0) = start_leg_point(start, target, scene);
    let n = milestones.len();

    let mut bounded: Vec<(&GeneratedMilestone, &Pose)> = Vec::with_capacity(n + 1);
    bounded.push((&m0, &pose0));
    for (m, p) in milestones.iter().zip(&poses) {
        bounded.push((m, p));
    }

    let mut frames: Vec<Frame> = Vec::with_capacity(60 * n + 1);
    for s in 0..n {
        let (a, pose_a) = bounded[s];
        let (b, pose_b) = bounded[s + 1];
        let traj = complete_trajectory(bundle, a, b, object, scene, rng)?;
        let poses61 = infill_motion(bundle, &traj, pose_a, pose_b, object, scene, rng)?;
        let from = if s == 0 { 0 } else { 1 };
        for j in from..TRAJ_LEN {
            frames.push(Frame {
                root: traj[j].0,
                pose: poses61[j].clone(),
                contacts: bool_contacts(&traj[j].1),
                action: state_action(&traj[j].2),
            });
        }
    }
    Ok(GeneratedLeg {
        frames,
        milestone_roots: bounded.iter().map(|(m, _)| m.world_root).collect(),
        n,
    })
}

/// Full test protocol: approach the object and interact with it, then leave
/// toward the endpoint. The leaving leg reuses the same models with an idle
/// target and an empty voxel grid placed at the endpoint.
#[allow(clippy::too_many_arguments)]
pub fn generate_interaction<F: Scalar>(
    bundle: &ModelBundle<F>,
    start: &StartSpec,
    object: &SceneObject,
    endpoint: &RootTransform,
    scene: &Scene,
    source: MilestoneSource,
    rng: &mut impl Rng,
    mut on_stage: impl FnMut(&str),
) -> Result<(MotionSequence, GenerationInfo), PipelineError> {
    // pick the interaction among the object's annotated actions
    let mut actions: Vec<Action> = object.goal_anchors.iter().map(|a| a.action).collect();
    actions.dedup();
    let action = actions[rng.gen_range(0..actions.len())];
    on_stage("goal");
    let (goal_root, goal_action) = sample_goal(object, action, rng)?;
    let occupancy = environment_occupancy(scene, &goal_root, &bundle.params.sensor)?;
    let goal_pose = crate::vqvae::sample_goal_pose(
        &bundle.vqvae,
        &bundle.prior,
        &occupancy,
        goal_action,
        1.0,
        rng,
    )?;

    on_stage("approach");
    let target1 = LegTarget {
        root: goal_root,
        action: goal_action,
        pose: goal_pose.clone(),
    };
    let leg1 = run_leg(bundle, start, &target1, object, scene, source, rng)?;

    on_stage("leave");
    let start2 = StartSpec {
        root: goal_root,
        action: goal_action,
        pose: goal_pose,
    };
    // synthetic empty grid at the endpoint stands in for the absent object
    let empty_object = SceneObject::new(
        vec![false; crate::motion::GRID_CELLS],
        0.25,
        *endpoint,
        vec![GoalAnchor {
            root: *endpoint,
            action: Action::Sit,
        }],
    )?;
    let target2 = LegTarget {
        root: *endpoint,
        action: Action::Idle,
        pose: stand_pose(),
    };
    let leg2 = run_leg(bundle, &start2, &target2, &empty_object, scene, source, rng)?;

    let mut frames = leg1.frames;
    frames.extend(leg2.frames.iter().skip(1).cloned());
    if frames.len() > FRAME_BUDGET {
        return Err(PipelineError::LengthBudget {
            got: frames.len(),
            max: FRAME_BUDGET,
        });
    }
    let info = GenerationInfo {
        n_approach: leg1.n,
        n_leave: leg2.n,
        goal_root,
        goal_action,
        frames: frames.len(),
        approach_milestone_roots: leg1.milestone_roots,
        leave_milestone_roots: leg2.milestone_roots,
    };
    Ok((MotionSequence::new_unchecked(frames)?, info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::train::{ModelDims, PipelineParams};
    use crate::synth::{make_scene, GenConfig};
    use crate::vqvae::{PriorConfig, VqvaeConfig};

    fn tiny_params() -> PipelineParams {
        PipelineParams {
            t_max: 8,
            beta_start: 1e-3,
            beta_end: 0.3,
            dims: ModelDims {
                model_dim: 32,
                heads: 2,
                blocks: 1,
                ff_dim: 64,
            },
            vqvae: VqvaeConfig {
                codebook_size: 8,
                code_dim: 8,
                enc_hidden: 16,
                dec_hidden: 32,
                ..Default::default()
            },
            prior: PriorConfig {
                model_dim: 16,
                heads: 2,
                blocks: 1,
                ff_dim: 32,
                codebook_size: 8,
                occupancy_dim: 128,
                trained: false,
            },
            ..Default::default()
        }
    }

    fn test_scene() -> Scene {
        let cfg = GenConfig {
            seed: 71,
            n_sequences: 1,
            ..Default::default()
        };
        let mut rng = crate::rng::stream_rng(71, "pipeline/scene");
        make_scene(&cfg, &mut rng).unwrap()
    }

    #[test]
    fn sample_goal_respects_anchor_and_noise() {
        let scene = test_scene();
        let obj = &scene.objects[0];
        let mut rng = crate::rng::stream_rng(72, "pipeline/goal");
        // zero noise returns the anchor exactly
        let (root, action) = sample_goal_with_noise(obj, Action::Sit, 0.0, &mut rng).unwrap();
        let anchor = obj
            .goal_anchors
            .iter()
            .find(|a| a.action == Action::Sit)
            .unwrap();
        assert_eq!(root, anchor.root);
        assert_eq!(action, Action::Sit);
        // no anchor for walk
        assert!(matches!(
            sample_goal(obj, Action::Walk, &mut rng),
            Err(PipelineError::NoAnchor(Action::Walk))
        ));
        // 1000 draws: never inside an occupied voxel (probe just above the
        // support surface), never further than the clip radius
        for _ in 0..1000 {
            let (root, _) = sample_goal(obj, Action::Lie, &mut rng).unwrap();
            let support = obj.support_height(root.pos);
            assert!(!obj.point_occupied([root.pos[0], support + 0.01, root.pos[1]]));
            let d = ((root.pos[0] - anchor.root.pos[0]).powi(2)
                + (root.pos[1] - anchor.root.pos[1]).powi(2))
            .sqrt();
            let lie = obj
                .goal_anchors
                .iter()
                .find(|a| a.action == Action::Lie)
                .unwrap();
            let d_lie = ((root.pos[0] - lie.root.pos[0]).powi(2)
                + (root.pos[1] - lie.root.pos[1]).powi(2))
            .sqrt();
            let _ = d;
            assert!(d_lie <= GOAL_NOISE_CLIP + 1e-9);
        }
    }

    #[test]
    fn two_anchor_pick_ratio_is_balanced() {
        let scene = test_scene();
        let mut obj = scene.objects[0].clone();
        // two sit anchors at distinct positions
        let a0 = obj.goal_anchors[0].clone();
        let mut a1 = a0.clone();
        a1.root = RootTransform::new(
            [a0.root.pos[0] + 0.5, a0.root.pos[1]],
            a0.root.facing,
        )
        .unwrap();
        obj.goal_anchors = vec![a0.clone(), a1.clone()];
        let mut rng = crate::rng::stream_rng(73, "pipeline/ratio");
        let mut first = 0usize;
        let n = 2000;
        for _ in 0..n {
            let (root, _) = sample_goal_with_noise(&obj, Action::Sit, 0.0, &mut rng).unwrap();
            if (root.pos[0] - a0.root.pos[0]).abs() < 1e-9 {
                first += 1;
            }
        }
        let ratio = first as f64 / n as f64;
        assert!((ratio - 0.5).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn untrained_pipeline_satisfies_structural_invariants() {
        let scene = test_scene();
        let obj = scene.objects[0].clone();
        let bundle = ModelBundle::<f32>::untrained(tiny_params(), 7).unwrap();
        let start = StartSpec {
            root: RootTransform::new([3.0, 3.0], [0.0, -1.0]).unwrap(),
            action: Action::Idle,
            pose: stand_pose(),
        };
        let endpoint = RootTransform::new([-3.0, 3.0], [0.0, 1.0]).unwrap();
        let mut rng = crate::rng::stream_rng(74, "pipeline/untrained");
        let (seq, info) = generate_interaction(
            &bundle,
            &start,
            &obj,
            &endpoint,
            &scene,
            MilestoneSource::Diffusion,
            &mut rng,
            |_| {},
        )
        .unwrap();
        // stitched length pattern and per-leg milestone counts
        assert_eq!(seq.len(), 60 * (info.n_approach + info.n_leave) + 1);
        assert!(info.n_approach >= 1 && info.n_approach <= 12);
        assert!(info.n_leave >= 1 && info.n_leave <= 12);
        // first frame equals the start spec exactly
        assert_eq!(seq.frames[0].root, start.root);
        assert_eq!(seq.frames[0].pose, start.pose);
        assert_eq!(seq.frames[0].action, start.action);
        // milestones appear verbatim at multiples of 60 within the approach
        for (i, root) in info.approach_milestone_roots.iter().enumerate() {
            assert_eq!(&seq.frames[60 * i].root, root, "milestone {i}");
        }
        // goal pose appears at the leg boundary
        let boundary = 60 * info.n_approach;
        assert_eq!(seq.frames[boundary].root, info.goal_root);
        // leave-leg milestones line up after the boundary
        for (i, root) in info.leave_milestone_roots.iter().enumerate() {
            assert_eq!(&seq.frames[boundary + 60 * i].root, root);
        }
        // endpoint pinned
        assert_eq!(seq.frames.last().unwrap().root, endpoint);

        // determinism: same seed, same bytes
        let mut rng2 = crate::rng::stream_rng(74, "pipeline/untrained");
        let (seq2, _) = generate_interaction(
            &bundle,
            &start,
            &obj,
            &endpoint,
            &scene,
            MilestoneSource::Diffusion,
            &mut rng2,
            |_| {},
        )
        .unwrap();
        assert_eq!(seq, seq2);
    }

    #[test]
    fn astar_milestones_are_deterministic_and_reach_target() {
        let scene = test_scene();
        let obj = scene.objects[0].clone();
        let bundle = ModelBundle::<f32>::untrained(tiny_params(), 8).unwrap();
        let start = StartSpec {
            root: RootTransform::new([3.0, -3.0], [0.0, 1.0]).unwrap(),
            action: Action::Idle,
            pose: stand_pose(),
        };
        let anchor = obj
            .goal_anchors
            .iter()
            .find(|a| a.action == Action::Sit)
            .unwrap();
        let target = LegTarget {
            root: anchor.root,
            action: Action::Sit,
            pose: crate::synth::sit_pose(0.5),
        };
        let a = astar_milestones(&bundle, &start, &target, &scene, &obj).unwrap();
        let b = astar_milestones(&bundle, &start, &target, &scene, &obj).unwrap();
        assert_eq!(a.len(), b.len());
        assert_eq!(a.last().unwrap().world_root, target.root);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.world_root, y.world_root);
        }
    }
}
