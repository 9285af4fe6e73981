//! Memorization oracles: a small bundle trained on a 3-sequence dataset
//! must reproduce the training data through every stage of the hierarchy.

use hiermotion::motion::Action;
use hiermotion::pipeline::{
    complete_trajectory, extract_item, generate_milestone_poses, generate_milestones,
    infill_motion, train_full_bundle, BundleTrainConfig, GeneratedMilestone, LegTarget,
    ModelBundle, ModelDims, PipelineParams, StartSpec, TrainConfig,
};
use hiermotion::synth::{make_dataset, Dataset, GenConfig};
use hiermotion::vqvae::{PriorConfig, VqvaeConfig};
use once_cell_lite::Lazy;

/// Tiny once-initialized fixture shared by the oracle tests.
mod once_cell_lite {
    use std::sync::OnceLock;

    pub struct Lazy<T> {
        cell: OnceLock<T>,
        init: fn() -> T,
    }

    impl<T> Lazy<T> {
        pub const fn new(init: fn() -> T) -> Self {
            Self {
                cell: OnceLock::new(),
                init,
            }
        }

        pub fn get(&self) -> &T {
            self.cell.get_or_init(self.init)
        }
    }
}

struct Fixture {
    dataset: Dataset,
    bundle: ModelBundle<f32>,
    _dir: tempfile::TempDir,
}

fn desk_params() -> PipelineParams {
    PipelineParams {
        t_max: 60,
        beta_start: 1e-4,
        beta_end: 0.12,
        dims: ModelDims {
            model_dim: 64,
            heads: 4,
            blocks: 2,
            ff_dim: 128,
        },
        vqvae: VqvaeConfig {
            codebook_size: 16,
            code_dim: 16,
            enc_hidden: 32,
            dec_hidden: 64,
            ..Default::default()
        },
        prior: PriorConfig {
            model_dim: 32,
            heads: 2,
            blocks: 1,
            ff_dim: 64,
            codebook_size: 16,
            occupancy_dim: 128,
            trained: false,
        },
        ..Default::default()
    }
}

fn build_fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GenConfig {
        seed: 505,
        n_sequences: 3,
        distance_range: Some([2.0, 4.5]),
        ..Default::default()
    };
    let dataset = make_dataset(&cfg, dir.path()).unwrap();
    let params = desk_params();
    let fast = |steps: usize, lr: f64| TrainConfig {
        steps,
        batch: 8,
        lr,
        seed: 21,
    };
    let train = BundleTrainConfig {
        vqvae: fast(700, 3e-3),
        prior: fast(400, 3e-3),
        milestones: fast(2000, 2e-3),
        milestone_poses: fast(1100, 2e-3),
        trajectory: fast(2200, 2e-3),
        infill: fast(1100, 2e-3),
    };
    let bundle = train_full_bundle(&dataset, &params, &train).unwrap();
    Fixture {
        dataset,
        bundle,
        _dir: dir,
    }
}

static FIXTURE: Lazy<Fixture> = Lazy::new(build_fixture);

fn gt_milestone_points(
    item: &hiermotion::synth::DatasetItem,
    ex: &hiermotion::pipeline::ExtractedItem,
) -> Vec<GeneratedMilestone> {
    let _ = item;
    ex.milestones
        .iter()
        .map(|m| GeneratedMilestone {
            vec: hiermotion::pipeline::milestone_vector(
                &m.world_root,
                &ex.start_frame.root,
                &ex.goal_root,
                &m.contacts,
                &m.state,
            ),
            world_root: m.world_root,
            contacts: m.contacts,
            state: m.state.clone(),
        })
        .collect()
}

#[test]
fn milestone_points_memorize_training_roots() {
    let fx = FIXTURE.get();
    let sensor = fx.bundle.params.sensor;
    let mut rng = hiermotion::rng::stream_rng(31, "overfit/milestones");
    for item in fx.dataset.train_items() {
        let ex = extract_item(item, &sensor).unwrap();
        let start = StartSpec {
            root: ex.start_frame.root,
            action: ex.start_frame.action,
            pose: ex.start_frame.pose.clone(),
        };
        let target = LegTarget {
            root: ex.goal_root,
            action: ex.goal_action,
            pose: ex.goal_pose.clone(),
        };
        let object = &item.scene.objects[0];
        let ms = generate_milestones(&fx.bundle, &start, &target, object, &item.scene, &mut rng)
            .unwrap();
        assert_eq!(ms.len(), ex.n, "length head must recover N");
        for (g, t) in ms.iter().zip(&ex.milestones) {
            let d = ((g.world_root.pos[0] - t.world_root.pos[0]).powi(2)
                + (g.world_root.pos[1] - t.world_root.pos[1]).powi(2))
            .sqrt();
            assert!(d < 0.1, "milestone root deviation {d:.3} m");
        }
    }
}

#[test]
fn milestone_poses_memorize_training_poses() {
    let fx = FIXTURE.get();
    let sensor = fx.bundle.params.sensor;
    let mut rng = hiermotion::rng::stream_rng(32, "overfit/poses");
    for item in fx.dataset.train_items() {
        let ex = extract_item(item, &sensor).unwrap();
        let target = LegTarget {
            root: ex.goal_root,
            action: ex.goal_action,
            pose: ex.goal_pose.clone(),
        };
        let object = &item.scene.objects[0];
        let points = gt_milestone_points(item, &ex);
        let poses = generate_milestone_poses(
            &fx.bundle,
            &points,
            &ex.start_frame.pose,
            &target,
            object,
            &item.scene,
            &mut rng,
        )
        .unwrap();
        assert_eq!(poses.len(), ex.n);
        for (p, m) in poses.iter().zip(&ex.milestones) {
            let mut worst = 0.0f64;
            for (a, b) in p.joints.iter().zip(&m.pose.joints) {
                let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2))
                    .sqrt();
                worst = worst.max(d);
            }
            assert!(worst < 0.03, "per-joint pose error {worst:.4} m");
        }
    }
}

#[test]
fn trajectory_completion_memorizes_segments() {
    let fx = FIXTURE.get();
    let sensor = fx.bundle.params.sensor;
    let mut rng = hiermotion::rng::stream_rng(33, "overfit/trajectory");
    for item in fx.dataset.train_items() {
        let ex = extract_item(item, &sensor).unwrap();
        let object = &item.scene.objects[0];
        let mut bounded = vec![GeneratedMilestone {
            vec: hiermotion::pipeline::milestone_vector(
                &ex.start_frame.root,
                &ex.start_frame.root,
                &ex.goal_root,
                &[
                    0.0, 1.0, 1.0, 0.0, 0.0, // standing feet contact
                ],
                &hiermotion::motion::character_state(
                    &ex.start_frame,
                    &ex.start_frame,
                    item.sequence.fps,
                ),
            ),
            world_root: ex.start_frame.root,
            contacts: [0.0, 1.0, 1.0, 0.0, 0.0],
            state: hiermotion::motion::character_state(
                &ex.start_frame,
                &ex.start_frame,
                item.sequence.fps,
            ),
        }];
        bounded.extend(gt_milestone_points(item, &ex));
        for s in 0..ex.n {
            let traj = complete_trajectory(
                &fx.bundle,
                &bounded[s],
                &bounded[s + 1],
                object,
                &item.scene,
                &mut rng,
            )
            .unwrap();
            assert_eq!(traj.len(), 61);
            // endpoints exact
            assert_eq!(traj[0].0, bounded[s].world_root);
            assert_eq!(traj[60].0, bounded[s + 1].world_root);
            let mut total = 0.0;
            for (j, point) in traj.iter().enumerate() {
                let gt = &item.sequence.frames[60 * s + j].root;
                total += ((point.0.pos[0] - gt.pos[0]).powi(2)
                    + (point.0.pos[1] - gt.pos[1]).powi(2))
                .sqrt();
            }
            let mean = total / 61.0;
            assert!(mean < 0.05, "segment {s}: mean root deviation {mean:.4} m");
        }
    }
}

#[test]
fn infill_memorizes_segment_poses() {
    let fx = FIXTURE.get();
    let sensor = fx.bundle.params.sensor;
    let mut rng = hiermotion::rng::stream_rng(34, "overfit/infill");
    let item = fx.dataset.train_items().next().unwrap();
    let _goal_check = extract_item(item, &sensor).unwrap();
    let object = &item.scene.objects[0];
    // ground-truth trajectory for the first segment
    let traj: Vec<hiermotion::pipeline::TrajPoint> = (0..61)
        .map(|j| {
            let frame = &item.sequence.frames[j];
            let prev = if j == 0 {
                frame
            } else {
                &item.sequence.frames[j - 1]
            };
            let mut contacts = [0.0; 5];
            for (c, &b) in contacts.iter_mut().zip(&frame.contacts) {
                *c = if b { 1.0 } else { 0.0 };
            }
            (
                frame.root,
                contacts,
                hiermotion::motion::character_state(frame, prev, item.sequence.fps),
            )
        })
        .collect();
    let pose_a = &item.sequence.frames[0].pose;
    let pose_b = &item.sequence.frames[60].pose;
    let poses = infill_motion(
        &fx.bundle,
        &traj,
        pose_a,
        pose_b,
        object,
        &item.scene,
        &mut rng,
    )
    .unwrap();
    assert_eq!(poses.len(), 61);
    assert_eq!(&poses[0], pose_a);
    assert_eq!(&poses[60], pose_b);
    let mut total = 0.0;
    let mut count = 0usize;
    let mut max_step = 0.0f64;
    for (j, p) in poses.iter().enumerate() {
        for (a, b) in p.joints.iter().zip(&item.sequence.frames[j].pose.joints) {
            total +=
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            count += 1;
        }
        if j > 0 {
            for (a, b) in p.joints.iter().zip(&poses[j - 1].joints) {
                let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2))
                    .sqrt();
                max_step = max_step.max(d);
            }
        }
    }
    let mean = total / count as f64;
    assert!(mean < 0.03, "mean per-joint error {mean:.4} m");
    // continuity sanity: no joint jumps more than 0.3 m between frames
    assert!(max_step < 0.3, "max per-frame joint step {max_step:.3} m");
}

#[test]
fn goal_pose_pipeline_memorizes() {
    let fx = FIXTURE.get();
    let sensor = fx.bundle.params.sensor;
    // the vqvae reconstructs goal poses to < 2 cm per joint, the prior
    // reproduces the right codes from the goal conditions
    let poses: Vec<_> = fx
        .dataset
        .train_items()
        .map(|item| {
            let ex = extract_item(item, &sensor).unwrap();
            ex.goal_pose.clone()
        })
        .collect();
    let err = fx.bundle.vqvae.mean_joint_error(&poses).unwrap();
    assert!(err < 0.02, "vqvae mean joint error {err:.4} m");

    let mut rng = hiermotion::rng::stream_rng(35, "overfit/goalpose");
    for item in fx.dataset.train_items() {
        let ex = extract_item(item, &sensor).unwrap();
        let sampled = hiermotion::vqvae::sample_goal_pose(
            &fx.bundle.vqvae,
            &fx.bundle.prior,
            &ex.goal_occupancy,
            ex.goal_action,
            0.0,
            &mut rng,
        )
        .unwrap();
        let expected_idx = fx.bundle.vqvae.encode_pose(&ex.goal_pose).unwrap();
        let decoded = fx.bundle.vqvae.decode_indices(&expected_idx).unwrap();
        // greedy sampling under the overfit prior lands on the stored code
        let mut worst = 0.0f64;
        for (a, b) in sampled.joints.iter().zip(&decoded.joints) {
            let d =
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            worst = worst.max(d);
        }
        assert!(worst < 0.01, "greedy goal pose deviates {worst:.4} m");
    }
}

#[test]
fn sampling_loop_is_finite_over_100_seeds() {
    // trained desk-scale models never emit NaN across the reverse chain
    let fx = FIXTURE.get();
    let sensor = fx.bundle.params.sensor;
    let item = fx.dataset.train_items().next().unwrap();
    let ex = extract_item(item, &sensor).unwrap();
    for seed in 0..100u64 {
        let mut rng = hiermotion::rng::stream_rng(seed, "overfit/nan-scan");
        let out = fx
            .bundle
            .trajectory
            .sample(&ex.segments[0].traj_cond, 61, &fx.bundle.schedule, &mut rng)
            .unwrap();
        assert!(out.iter().all(|v| v.is_finite()), "seed {seed} produced non-finite output");
    }
}

#[test]
fn action_labels_on_generated_frames_recover_gt() {
    // argmax over the state's action block recovers labels on GT milestones
    let fx = FIXTURE.get();
    let sensor = fx.bundle.params.sensor;
    let item = fx.dataset.train_items().next().unwrap();
    let ex = extract_item(item, &sensor).unwrap();
    for m in &ex.milestones {
        let action = hiermotion::pipeline::state_action(&m.state);
        let gt = item.sequence.frames[m.frame_idx].action;
        assert_eq!(action, gt);
    }
    let _ = Action::Walk;
}
