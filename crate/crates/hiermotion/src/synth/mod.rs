//! Procedural ground-truth generator: deterministic walk-approach-sit/lie
//! sequences in box-object scenes, replacing licensed motion-capture data
//! for training and desk-scale evaluation.
//!
//! Construction guarantees the properties the metrics rely on: no joint
//! ever penetrates an occupied voxel, stance feet are pinned (near-zero
//! foot sliding), and every dataset sequence has length 61 + 60k so
//! milestone extraction at every 60th frame is exact.

mod gait;

pub use gait::{lie_pose, sit_pose, stand_pose, INTERACTION_HOLD_FRAMES};

use crate::motion::{
    Action, Frame, GoalAnchor, MotionError, MotionSequence, Pose, RootTransform, SceneObject,
    Skeleton, GRID_CELLS, GRID_DIM,
};
use crate::sensing::{contact_labels, Bounds, Scene, SensingError, CONTACT_EPS};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    BadConfig(String),
    #[error("no goal anchor for action {0:?}")]
    NoAnchor(Action),
    #[error("path rejection failed after {0} tries")]
    RejectionFailure(usize),
    #[error("constructed sequence penetrates the scene at frame {0}")]
    ConstructionPenetration(usize),
    #[error("could not build sequence {0} after retries")]
    SequenceRetriesExhausted(usize),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Configuration of the procedural generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub seed: u64,
    pub n_sequences: usize,
    /// Arena half-extent in meters; bounds are the square [-h, h]².
    pub arena_half: f64,
    /// Box edge-length range (meters) for the object footprint.
    pub object_size_range: [f64; 2],
    /// Box height range (meters).
    pub object_height_range: [f64; 2],
    /// Maximum lateral Bézier control-point offset as a fraction of the
    /// start-goal distance.
    pub curvature_range: f64,
    /// Gait period in frames.
    pub gait_period: usize,
    /// Sit/lie blend duration in frames (transition plus a static hold).
    pub sit_blend: usize,
    /// Voxel cell size of generated objects.
    pub cell_size: f64,
    /// Optional start-to-goal distance constraint (used to pin the
    /// milestone count of generated sequences).
    pub distance_range: Option<[f64; 2]>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_sequences: 100,
            arena_half: 4.0,
            object_size_range: [0.4, 0.9],
            object_height_range: [0.35, 0.55],
            curvature_range: 0.6,
            gait_period: 30,
            sit_blend: 30,
            cell_size: 0.25,
            distance_range: None,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: &str| Err(SynthError::BadConfig(msg.to_string()));
        if self.n_sequences == 0 {
            return bad("n_sequences must be positive");
        }
        if self.arena_half < 2.5 {
            return bad("arena_half must be at least 2.5 m");
        }
        if self.object_size_range[0] <= 0.0
            || self.object_size_range[1] < self.object_size_range[0]
        {
            return bad("object_size_range must be a positive increasing pair");
        }
        if self.object_height_range[0] <= 0.0
            || self.object_height_range[1] < self.object_height_range[0]
        {
            return bad("object_height_range must be a positive increasing pair");
        }
        if self.curvature_range < 0.0 {
            return bad("curvature_range must be non-negative");
        }
        if self.gait_period < 8 || self.gait_period % 2 != 0 {
            return bad("gait_period must be an even number of frames >= 8");
        }
        if self.sit_blend < 2 * INTERACTION_HOLD_FRAMES {
            return bad("sit_blend too short for the interaction hold");
        }
        if self.cell_size <= 0.0 {
            return bad("cell_size must be positive");
        }
        if let Some([lo, hi]) = self.distance_range {
            if lo <= 0.0 || hi < lo {
                return bad("distance_range must be a positive increasing pair");
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            min: [-self.arena_half, -self.arena_half],
            max: [self.arena_half, self.arena_half],
        }
    }
}

/// Offset of interaction anchors from the supporting face, meters.
const ANCHOR_FACE_OFFSET: f64 = 0.05;
/// Root standoff from the sit anchor where walking hands over to the blend.
const APPROACH_STANDOFF: f64 = 0.45;
/// Clearance the walking path keeps from the object footprint.
const PATH_CLEARANCE: f64 = 0.50;
/// Nominal walking speed in meters per second.
const WALK_SPEED: f64 = 1.2;

/// Voxelizes an axis-aligned box (centered horizontally, resting on the
/// ground) into the 8×8×8 grid: a cell is occupied iff its center lies
/// inside the box.
pub fn voxelize_box(dims: [f64; 3], cell_size: f64) -> Vec<bool> {
    let mut grid = vec![false; GRID_CELLS];
    let half = GRID_DIM as f64 / 2.0 * cell_size;
    for ix in 0..GRID_DIM {
        for iy in 0..GRID_DIM {
            for iz in 0..GRID_DIM {
                let cx = (ix as f64 + 0.5) * cell_size - half;
                let cy = (iy as f64 + 0.5) * cell_size;
                let cz = (iz as f64 + 0.5) * cell_size - half;
                if cx.abs() < dims[0] / 2.0 && cy < dims[1] && cz.abs() < dims[2] / 2.0 {
                    grid[SceneObject::cell_index(ix, iy, iz)] = true;
                }
            }
        }
    }
    grid
}

/// One box-shaped object with a sit anchor on its front face and a lie
/// anchor on top, placed uniformly in the arena.
pub fn make_scene(cfg: &GenConfig, rng: &mut impl Rng) -> Result<Scene, SynthError> {
    cfg.validate()?;
    let [lo, hi] = cfg.object_size_range;
    let wx = rng.gen_range(lo..=hi);
    let wz = rng.gen_range(lo..=hi);
    let [hlo, hhi] = cfg.object_height_range;
    let wy = rng.gen_range(hlo..=hhi);
    let grid = voxelize_box([wx, wy, wz], cfg.cell_size);

    // rotated grid corners reach half·√2 from the center
    let margin = GRID_DIM as f64 / 2.0 * cfg.cell_size * std::f64::consts::SQRT_2 + 0.05;
    let lim = cfg.arena_half - margin;
    let pos = [rng.gen_range(-lim..=lim), rng.gen_range(-lim..=lim)];
    let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let frame = RootTransform::from_angle(pos, angle);

    // Grid voxel faces land on multiples of cell_size; quantize the actual
    // box extents to the voxelized surface so anchors sit on voxel faces.
    let vox_top = (wy / cfg.cell_size).ceil() * cfg.cell_size;
    let vox_half_z = ((wz / 2.0) / cfg.cell_size).ceil() * cfg.cell_size;
    let _ = vox_top;

    // Sit anchor: centered on the front (+z) face, just outside the
    // footprint, facing away from the box; the sitting pose leans back over
    // the box edge.
    let sit_root = RootTransform::new(
        frame.apply_point([0.0, vox_half_z + ANCHOR_FACE_OFFSET]),
        frame.apply_dir([0.0, 1.0]),
    )?;
    // Lie anchor: centered on the top face.
    let lie_root = RootTransform::new(frame.apply_point([0.0, 0.0]), frame.apply_dir([0.0, 1.0]))?;
    let object = SceneObject::new(
        grid,
        cfg.cell_size,
        frame,
        vec![
            GoalAnchor {
                root: sit_root,
                action: Action::Sit,
            },
            GoalAnchor {
                root: lie_root,
                action: Action::Lie,
            },
        ],
    )?;
    Ok(Scene::new(vec![object], cfg.bounds())?)
}

fn smootherstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

fn bezier(p0: [f64; 2], c: [f64; 2], p1: [f64; 2], t: f64) -> [f64; 2] {
    let u = 1.0 - t;
    [
        u * u * p0[0] + 2.0 * u * t * c[0] + t * t * p1[0],
        u * u * p0[1] + 2.0 * u * t * c[1] + t * t * p1[1],
    ]
}

/// Horizontal distance from a world point to the object's occupied
/// footprint (axis-aligned in the object frame). 0 inside the footprint.
fn footprint_distance(obj: &SceneObject, world: [f64; 2]) -> f64 {
    let local = obj.frame.to_local_point(world);
    let c = obj.cell_size;
    let half = GRID_DIM as f64 / 2.0 * c;
    let mut best = f64::INFINITY;
    for ix in 0..GRID_DIM {
        for iz in 0..GRID_DIM {
            let mut occupied = false;
            for iy in 0..GRID_DIM {
                if obj.grid[SceneObject::cell_index(ix, iy, iz)] {
                    occupied = true;
                    break;
                }
            }
            if !occupied {
                continue;
            }
            let lo = [ix as f64 * c - half, iz as f64 * c - half];
            let hi = [lo[0] + c, lo[1] + c];
            let dx = (lo[0] - local[0]).max(local[0] - hi[0]).max(0.0);
            let dz = (lo[1] - local[1]).max(local[1] - hi[1]).max(0.0);
            best = best.min((dx * dx + dz * dz).sqrt());
        }
    }
    best
}

fn sample_bezier(p0: [f64; 2], c: [f64; 2], p1: [f64; 2], n: usize) -> Vec<[f64; 2]> {
    (0..=n)
        .map(|i| bezier(p0, c, p1, i as f64 / n as f64))
        .collect()
}

/// Arc-length lookup table over a sampled path.
struct ArcPath {
    points: Vec<[f64; 2]>,
    cumulative: Vec<f64>,
}

impl ArcPath {
    fn new(p0: [f64; 2], c: [f64; 2], p1: [f64; 2]) -> Self {
        Self::from_points(sample_bezier(p0, c, p1, 400))
    }

    fn from_points(points: Vec<[f64; 2]>) -> Self {
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in points.windows(2) {
            acc += ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            cumulative.push(acc);
        }
        Self { points, cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn at(&self, arc: f64) -> ([f64; 2], [f64; 2]) {
        let target = arc.clamp(0.0, self.length());
        let idx = match self
            .cumulative
            .binary_search_by(|v| v.partial_cmp(&target).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let idx = idx.min(self.points.len() - 2);
        let seg = (self.cumulative[idx + 1] - self.cumulative[idx]).max(1e-12);
        let w = (target - self.cumulative[idx]) / seg;
        let p = [
            self.points[idx][0] + w * (self.points[idx + 1][0] - self.points[idx][0]),
            self.points[idx][1] + w * (self.points[idx + 1][1] - self.points[idx][1]),
        ];
        let mut tangent = [
            self.points[idx + 1][0] - self.points[idx][0],
            self.points[idx + 1][1] - self.points[idx][1],
        ];
        let norm = (tangent[0] * tangent[0] + tangent[1] * tangent[1]).sqrt();
        if norm > 1e-12 {
            tangent = [tangent[0] / norm, tangent[1] / norm];
        } else {
            tangent = [0.0, 1.0];
        }
        (p, tangent)
    }
}

/// Builds one ground-truth approach-and-interact sequence.
///
/// The root follows a quadratic Bézier from `start_pos` to a standoff in
/// front of the goal anchor (control point rejected until the path clears
/// the object), walks with a phase-driven gait whose stance feet are
/// pinned, then blends into the canonical interaction pose over the
/// configured blend window with a static hold at the end.
pub fn make_sequence(
    scene: &Scene,
    start_pos: [f64; 2],
    action: Action,
    cfg: &GenConfig,
    rng: &mut impl Rng,
) -> Result<MotionSequence, SynthError> {
    cfg.validate()?;
    let skeleton = Skeleton::default15();
    let obj = scene
        .objects
        .first()
        .ok_or(SynthError::NoAnchor(action))?;
    let anchor = obj
        .goal_anchors
        .iter()
        .find(|a| a.action == action)
        .ok_or(SynthError::NoAnchor(action))?;
    let box_top = obj.support_height(anchor.root.pos).max(
        obj.support_height(anchor.root.apply_point([0.0, -0.2])),
    );
    let goal_pose = interaction_pose(action, box_top);

    let hold = INTERACTION_HOLD_FRAMES;
    let blend = cfg.sit_blend;
    let transition = blend - hold;

    // Degenerate start: emit only the blend.
    let start_to_anchor = dist(start_pos, anchor.root.pos);
    if start_to_anchor < 1e-9 {
        let mut frames = Vec::with_capacity(blend);
        let stand = stand_pose();
        for i in 0..blend {
            let s = if transition <= 1 {
                1.0
            } else {
                (i.min(transition - 1) as f64 / (transition - 1) as f64).min(1.0)
            };
            let w = smootherstep(s);
            let pose = blend_pose_world(
                &stand,
                &anchor.root,
                &goal_pose,
                &anchor.root,
                &anchor.root,
                w,
                blend_bump(action, box_top),
            )?;
            let action_label = if i >= transition { action } else { Action::Walk };
            let mut frame = Frame {
                root: anchor.root,
                pose,
                contacts: [false; 5],
                action: action_label,
            };
            frame.contacts = contact_labels(&frame, scene, CONTACT_EPS);
            frames.push(frame);
        }
        let seq = MotionSequence::new(frames)?;
        verify_no_penetration(&seq, scene)?;
        return Ok(seq);
    }

    // Standoff point on the far side of the anchor from the object.
    let standoff = compute_standoff(obj, &anchor.root);
    let path = plan_root_path(scene, obj, start_pos, standoff, cfg, rng)?;

    // Frame budget: total length 60k + 1.
    let walk_raw = (path.length() / (WALK_SPEED / crate::motion::FPS)).ceil() as usize;
    let total_raw = walk_raw + blend;
    let k = ((total_raw as f64 / 60.0).round() as usize).clamp(1, 12);
    let total = 60 * k + 1;
    let walk_frames = total - blend;

    let mut frames = Vec::with_capacity(total);
    let mut gait = gait::GaitState::new(&path, walk_frames, cfg.gait_period);

    for i in 0..walk_frames {
        let (root, pose) = gait.frame(&path, i, walk_frames);
        let action_label = if i == 0 { Action::Idle } else { Action::Walk };
        let mut frame = Frame {
            root,
            pose,
            contacts: [false; 5],
            action: action_label,
        };
        frame.contacts = contact_labels(&frame, scene, CONTACT_EPS);
        frames.push(frame);
    }

    // Blend from the last walking frame into the interaction pose.
    let last_walk = frames.last().unwrap().clone();
    for i in 0..blend {
        let s = if transition <= 1 {
            1.0
        } else {
            (i.min(transition - 1) as f64 / (transition - 1) as f64).min(1.0)
        };
        let w = smootherstep(s);
        let root = RootTransform::new(
            [
                last_walk.root.pos[0] + w * (anchor.root.pos[0] - last_walk.root.pos[0]),
                last_walk.root.pos[1] + w * (anchor.root.pos[1] - last_walk.root.pos[1]),
            ],
            crate::motion::slerp_facing(last_walk.root.facing, anchor.root.facing, w),
        )?;
        let pose = blend_pose_world(
            &last_walk.pose,
            &last_walk.root,
            &goal_pose,
            &anchor.root,
            &root,
            w,
            blend_bump(action, box_top),
        )?;
        let action_label = if i >= transition { action } else { Action::Walk };
        let mut frame = Frame {
            root,
            pose,
            contacts: [false; 5],
            action: action_label,
        };
        frame.contacts = contact_labels(&frame, scene, CONTACT_EPS);
        frames.push(frame);
    }

    let seq = MotionSequence::new(frames)?;
    debug_assert_eq!(seq.len(), total);
    verify_no_penetration(&seq, scene)?;
    let _ = skeleton;
    Ok(seq)
}

/// Canonical interaction pose for an action on a support of height `top`.
pub fn interaction_pose(action: Action, top: f64) -> Pose {
    match action {
        Action::Lie => lie_pose(top),
        _ => sit_pose(top),
    }
}

/// Vertical arc added mid-blend so limbs clear the support surface.
fn blend_bump(action: Action, box_top: f64) -> f64 {
    match action {
        Action::Lie => box_top * 0.8 + 0.05,
        _ => 0.06,
    }
}

/// Samples a collision-free root path from `p0` to `p1`: direct quadratic
/// Bézier arcs first, then two-segment detours around the object when the
/// direct line is blocked. Clearance requirements funnel down near both
/// endpoints (the start may legitimately be close to the object, and the
/// standoff is close by construction).
fn plan_root_path(
    scene: &Scene,
    obj: &SceneObject,
    p0: [f64; 2],
    p1: [f64; 2],
    cfg: &GenConfig,
    rng: &mut impl Rng,
) -> Result<ArcPath, SynthError> {
    let start_fp = footprint_distance(obj, p0);
    let clear_ok = |p: [f64; 2]| -> bool {
        let required = PATH_CLEARANCE
            .min(APPROACH_STANDOFF - 0.02 + 0.25 * dist(p, p1))
            .min((start_fp - 0.02).max(0.05) + 0.25 * dist(p, p0));
        footprint_distance(obj, p) >= required && scene.bounds.contains(p)
    };
    let dist_sg = dist(p0, p1);
    let mid = [(p0[0] + p1[0]) / 2.0, (p0[1] + p1[1]) / 2.0];
    let dir = [(p1[0] - p0[0]) / dist_sg, (p1[1] - p0[1]) / dist_sg];
    let normal = [-dir[1], dir[0]];
    const DIRECT_TRIES: usize = 400;
    const DETOUR_TRIES: usize = 600;
    for _ in 0..DIRECT_TRIES {
        let lateral = rng.gen_range(-cfg.curvature_range..=cfg.curvature_range) * dist_sg;
        let c = [mid[0] + normal[0] * lateral, mid[1] + normal[1] * lateral];
        let path = ArcPath::new(p0, c, p1);
        if path.points.iter().all(|p| clear_ok(*p)) {
            return Ok(path);
        }
    }
    // Detour through a waypoint on a circle around the object, with a
    // smooth (shared-tangent) junction.
    let center = obj.frame.pos;
    let radius_base = footprint_radius(obj) + PATH_CLEARANCE;
    for _ in 0..DETOUR_TRIES {
        let r = radius_base + rng.gen_range(0.2..1.2);
        let ang = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let w = [center[0] + r * ang.sin(), center[1] + r * ang.cos()];
        if !scene.bounds.contains(w) {
            continue;
        }
        let radial = [(w[0] - center[0]) / r, (w[1] - center[1]) / r];
        let mut tangent = [-radial[1], radial[0]];
        if tangent[0] * (p1[0] - w[0]) + tangent[1] * (p1[1] - w[1]) < 0.0 {
            tangent = [-tangent[0], -tangent[1]];
        }
        let d_a = dist(p0, w);
        let d_b = dist(w, p1);
        let ca = [w[0] - tangent[0] * d_a * 0.4, w[1] - tangent[1] * d_a * 0.4];
        let cb = [w[0] + tangent[0] * d_b * 0.4, w[1] + tangent[1] * d_b * 0.4];
        let mut points = sample_bezier(p0, ca, w, 240);
        points.extend_from_slice(&sample_bezier(w, cb, p1, 240)[1..]);
        if points.iter().all(|p| clear_ok(*p)) {
            return Ok(ArcPath::from_points(points));
        }
    }
    Err(SynthError::RejectionFailure(DIRECT_TRIES + DETOUR_TRIES))
}

/// Largest horizontal distance from the object origin to an occupied cell
/// corner.
fn footprint_radius(obj: &SceneObject) -> f64 {
    let c = obj.cell_size;
    let half = GRID_DIM as f64 / 2.0 * c;
    let mut best = 0.0f64;
    for ix in 0..GRID_DIM {
        for iz in 0..GRID_DIM {
            let occupied = (0..GRID_DIM).any(|iy| obj.grid[SceneObject::cell_index(ix, iy, iz)]);
            if !occupied {
                continue;
            }
            for (dx, dz) in [(0.0, 0.0), (c, 0.0), (0.0, c), (c, c)] {
                let x = ix as f64 * c - half + dx;
                let z = iz as f64 * c - half + dz;
                best = best.max((x * x + z * z).sqrt());
            }
        }
    }
    best
}

fn compute_standoff(obj: &SceneObject, anchor: &RootTransform) -> [f64; 2] {
    let mut u = 0.0;
    loop {
        let p = anchor.apply_point([0.0, u]);
        if footprint_distance(obj, p) >= APPROACH_STANDOFF && obj.support_height(p) == 0.0 {
            return p;
        }
        u += 0.05;
        if u > 4.0 {
            return anchor.apply_point([0.0, 4.0]);
        }
    }
}

/// Interpolates two poses through world space (so the blend is rigid-frame
/// independent), adding a vertical sine arc of amplitude `bump`, and
/// re-expresses the result in `out_root`.
#[allow(clippy::too_many_arguments)]
fn blend_pose_world(
    from: &Pose,
    from_root: &RootTransform,
    to: &Pose,
    to_root: &RootTransform,
    out_root: &RootTransform,
    w: f64,
    bump: f64,
) -> Result<Pose, MotionError> {
    let mut joints = Vec::with_capacity(from.num_joints());
    for (a, b) in from.joints.iter().zip(&to.joints) {
        let wa = from_root.apply_point3(*a);
        let wb = to_root.apply_point3(*b);
        let arc = bump * (std::f64::consts::PI * w).sin();
        let world = [
            wa[0] + w * (wb[0] - wa[0]),
            wa[1] + w * (wb[1] - wa[1]) + arc,
            wa[2] + w * (wb[2] - wa[2]),
        ];
        joints.push(out_root.to_local_point3(world));
    }
    Pose::new(joints)
}

/// Penetration guard: every joint of every frame must stay out of the
/// (shrunken-by-2cm) occupied region.
fn verify_no_penetration(seq: &MotionSequence, scene: &Scene) -> Result<(), SynthError> {
    for (i, frame) in seq.frames.iter().enumerate() {
        for j in 0..frame.pose.num_joints() {
            let w = frame.joint_world(j);
            if crate::metrics::penetration_depth(scene, w) > 0.02 {
                return Err(SynthError::ConstructionPenetration(i));
            }
        }
    }
    Ok(())
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

// --- dataset assembly ---

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub config: GenConfig,
    pub splits: SplitIds,
    pub sequences: Vec<SequenceEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub id: usize,
    pub motion: String,
    pub scene: String,
    pub action: String,
    pub n_milestones: usize,
    pub frames: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub id: usize,
    pub scene: Scene,
    pub sequence: MotionSequence,
    pub action: Action,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Vec<DatasetItem>,
    pub manifest: DatasetManifest,
    pub manifest_hash: String,
}

impl Dataset {
    pub fn train_items(&self) -> impl Iterator<Item = &DatasetItem> {
        self.manifest
            .splits
            .train
            .iter()
            .map(move |&id| &self.items[id])
    }

    pub fn val_items(&self) -> impl Iterator<Item = &DatasetItem> {
        self.manifest
            .splits
            .val
            .iter()
            .map(move |&id| &self.items[id])
    }
}

/// Generates one (scene, sequence) pair from a per-sequence stream.
fn generate_item(cfg: &GenConfig, id: usize) -> Result<(Scene, MotionSequence, Action), SynthError> {
    for retry in 0..40 {
        let mut rng = crate::rng::stream_rng(cfg.seed, &format!("dataset/seq/{id}/try{retry}"));
        let scene = make_scene(cfg, &mut rng)?;
        let action = if rng.gen_bool(0.5) {
            Action::Sit
        } else {
            Action::Lie
        };
        let obj = &scene.objects[0];
        let anchor = obj
            .goal_anchors
            .iter()
            .find(|a| a.action == action)
            .expect("generated anchors");
        // sample a start point compatible with the constraints; without an
        // explicit range, stratify distances by id so the dataset spans
        // several milestone counts
        let bands = [[1.3, 3.0], [3.0, 5.5], [5.5, 8.5]];
        let mut start = None;
        for attempt in 0..400 {
            let lim = cfg.arena_half - 0.2;
            let p = [rng.gen_range(-lim..=lim), rng.gen_range(-lim..=lim)];
            let d = dist(p, anchor.root.pos);
            let d_ok = match cfg.distance_range {
                Some([lo, hi]) => d >= lo && d <= hi,
                None => {
                    let [lo, hi] = bands[id % bands.len()];
                    // loosen the band if it proves infeasible in this arena
                    (d >= lo && d <= hi) || (attempt > 300 && d >= 1.2)
                }
            };
            if d_ok && footprint_distance(obj, p) >= PATH_CLEARANCE + 0.2 {
                start = Some(p);
                break;
            }
        }
        let Some(start) = start else { continue };
        match make_sequence(&scene, start, action, cfg, &mut rng) {
            Ok(seq) => return Ok((scene, seq, action)),
            Err(SynthError::RejectionFailure(_)) | Err(SynthError::ConstructionPenetration(_)) => {
                continue
            }
            Err(e) => return Err(e),
        }
    }
    Err(SynthError::SequenceRetriesExhausted(id))
}

/// Generates the full dataset on disk: per-sequence motion and scene JSON
/// plus a manifest with the deterministic 90/10 split.
pub fn make_dataset(cfg: &GenConfig, out_dir: &Path) -> Result<Dataset, SynthError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let results: Vec<Result<(Scene, MotionSequence, Action), SynthError>> = (0..cfg.n_sequences)
        .into_par_iter()
        .map(|id| generate_item(cfg, id))
        .collect();
    let skeleton = Skeleton::default15();
    let mut items = Vec::with_capacity(cfg.n_sequences);
    let mut entries = Vec::with_capacity(cfg.n_sequences);
    for (id, res) in results.into_iter().enumerate() {
        let (scene, sequence, action) = res?;
        let motion_name = format!("motion_{id:04}.json");
        let scene_name = format!("scene_{id:04}.json");
        crate::motion::save_motion_json(&out_dir.join(&motion_name), &sequence, &skeleton)?;
        crate::sensing::save_scene_json(&out_dir.join(&scene_name), &scene)?;
        entries.push(SequenceEntry {
            id,
            motion: motion_name,
            scene: scene_name,
            action: action.name().to_string(),
            n_milestones: (sequence.len() - 1) / 60,
            frames: sequence.len(),
        });
        items.push(DatasetItem {
            id,
            scene,
            sequence,
            action,
        });
    }
    let splits = SplitIds {
        train: (0..cfg.n_sequences).filter(|i| i % 10 != 9).collect(),
        val: (0..cfg.n_sequences).filter(|i| i % 10 == 9).collect(),
    };
    let manifest = DatasetManifest {
        seed: cfg.seed,
        config: cfg.clone(),
        splits,
        sequences: entries,
    };
    let manifest_bytes = serde_json::to_vec_pretty(&manifest)?;
    std::fs::write(out_dir.join("manifest.json"), &manifest_bytes)?;
    let manifest_hash = crate::hash::sha256_hex(&manifest_bytes);
    Ok(Dataset {
        items,
        manifest,
        manifest_hash,
    })
}

/// Expected schema for importing externally captured interaction datasets.
///
/// An import directory mirrors the procedural layout: a `manifest.json`
/// with `{seed, config, splits, sequences}` where each sequence entry names
/// a motion JSON (`{fps, joint_names, frames: [{root: {pos, facing},
/// joints: [[x, y, z]; J], contacts: [bool; 5], action}]}`, 30 fps,
/// lengths of 60k+1 frames) and a scene JSON (`{bounds, objects: [{frame,
/// cell_size, grid: "512 chars of 0/1", goal_anchors}]}`). Coordinates are
/// meters on a y-up, (x, z) ground plane; joints are root-local and the
/// skeleton must provide the five contact effectors (pelvis, ankles,
/// wrists).
///
/// This entry point is a stub: mapping proprietary capture formats onto
/// that schema is out of scope here, so it only validates the directory
/// shape and refuses otherwise. It ships untested.
pub fn load_external_dataset(dir: &Path) -> Result<Dataset, SynthError> {
    if !dir.join("manifest.json").exists() {
        return Err(SynthError::BadConfig(format!(
            "no manifest.json under {}; see load_external_dataset docs for the expected schema",
            dir.display()
        )));
    }
    load_dataset(dir)
}

/// Loads a dataset directory written by [`make_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset, SynthError> {
    let manifest_bytes = std::fs::read(dir.join("manifest.json"))?;
    let manifest: DatasetManifest = serde_json::from_slice(&manifest_bytes)?;
    let manifest_hash = crate::hash::sha256_hex(&manifest_bytes);
    let mut items = Vec::with_capacity(manifest.sequences.len());
    for entry in &manifest.sequences {
        let (sequence, _) = crate::motion::load_motion_json(&dir.join(&entry.motion))?;
        let scene = crate::sensing::load_scene_json(&dir.join(&entry.scene))?;
        items.push(DatasetItem {
            id: entry.id,
            scene,
            sequence,
            action: Action::parse(&entry.action)?,
        });
    }
    Ok(Dataset {
        items,
        manifest,
        manifest_hash,
    })
}
