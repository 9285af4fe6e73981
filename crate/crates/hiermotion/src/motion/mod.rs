//! Canonical data model for skeletons, frames, sequences, milestones and
//! scene objects, plus the ground-plane transform algebra everything else
//! builds on.
//!
//! Conventions: the ground plane is (x, z), height is y. A [`RootTransform`]
//! is a 2-D rigid transform given by a position and a unit forward vector;
//! local +z is forward, local +x is right. Poses store root-local joint
//! positions in meters.

mod io;

pub use io::{load_motion_json, save_motion_csv, save_motion_json};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of body part groups.
pub const NUM_PARTS: usize = 5;
/// Number of contact channels: pelvis, left/right foot, left/right hand.
pub const NUM_CONTACTS: usize = 5;
/// Number of action labels.
pub const NUM_ACTIONS: usize = 4;
/// Fixed playback rate, frames per second.
pub const FPS: f64 = 30.0;

/// Dimension of the character-state feature for a skeleton with `j` joints:
/// joint positions (3j), joint velocities (3j), root forward (2), root
/// velocity (2) and the action one-hot (4).
pub const fn state_dim(j: usize) -> usize {
    6 * j + 8
}

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("facing vector has near-zero norm")]
    DegenerateFacing,
    #[error("motion sequence must not be empty")]
    EmptySequence,
    #[error("resample needs n >= 2, got {0}")]
    ResampleTooShort(usize),
    #[error("per-frame root displacement {0:.3} m exceeds the 0.5 m sanity bound")]
    DisplacementTooLarge(f64),
    #[error("pose has {got} joints, skeleton expects {expected}")]
    JointCountMismatch { expected: usize, got: usize },
    #[error("part map must cover all joints with disjoint non-empty groups")]
    BadPartMap,
    #[error("non-finite coordinate in pose")]
    NonFinitePose,
    #[error("unknown action label {0:?}")]
    UnknownAction(String),
    #[error("scene object grid must have exactly 512 cells, got {0}")]
    BadGridSize(usize),
    #[error("scene object cell size must be positive")]
    BadCellSize,
    #[error("scene object needs at least one goal anchor")]
    NoGoalAnchor,
    #[error("interaction goal must be sit or lie, got {0:?}")]
    BadGoalAction(Action),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Rigid transform on the ground plane: position plus unit forward vector.
///
/// With facing = (sin φ, cos φ) the rotation maps a local direction
/// (x, z) to (cos φ · x + sin φ · z, −sin φ · x + cos φ · z), so local
/// (0, 1) goes to the facing itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootTransform {
    pub pos: [f64; 2],
    pub facing: [f64; 2],
}

impl RootTransform {
    pub fn new(pos: [f64; 2], facing: [f64; 2]) -> Result<Self, MotionError> {
        let norm = (facing[0] * facing[0] + facing[1] * facing[1]).sqrt();
        if norm < 1e-9 {
            return Err(MotionError::DegenerateFacing);
        }
        // Keep already-unit facings bit-exact so file round trips are lossless.
        let facing = if (norm - 1.0).abs() <= 1e-12 {
            facing
        } else {
            [facing[0] / norm, facing[1] / norm]
        };
        Ok(Self { pos, facing })
    }

    pub fn identity() -> Self {
        Self {
            pos: [0.0, 0.0],
            facing: [0.0, 1.0],
        }
    }

    /// Heading angle φ with facing = (sin φ, cos φ).
    pub fn angle(&self) -> f64 {
        self.facing[0].atan2(self.facing[1])
    }

    pub fn from_angle(pos: [f64; 2], angle: f64) -> Self {
        Self {
            pos,
            facing: [angle.sin(), angle.cos()],
        }
    }

    /// Rotates a local direction into this frame's parent coordinates.
    pub fn apply_dir(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = (self.facing[0], self.facing[1]);
        [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
    }

    /// Maps a local point into this frame's parent coordinates.
    pub fn apply_point(&self, p: [f64; 2]) -> [f64; 2] {
        let r = self.apply_dir(p);
        [r[0] + self.pos[0], r[1] + self.pos[1]]
    }

    /// Maps a local 3-D point; height passes through unchanged.
    pub fn apply_point3(&self, p: [f64; 3]) -> [f64; 3] {
        let ground = self.apply_point([p[0], p[2]]);
        [ground[0], p[1], ground[1]]
    }

    /// Expresses `b` in this transform's parent frame: self ∘ b.
    pub fn compose(&self, b: &RootTransform) -> RootTransform {
        let pos = self.apply_point(b.pos);
        let facing = self.apply_dir(b.facing);
        // Renormalize so long chains keep the unit-facing invariant.
        RootTransform::new(pos, facing).expect("rotation preserves norm")
    }

    pub fn invert(&self) -> RootTransform {
        let (s, c) = (self.facing[0], self.facing[1]);
        // Inverse rotation is the transpose; inverse translation is -Rᵀ·pos.
        let px = -(c * self.pos[0] - s * self.pos[1]);
        let pz = -(s * self.pos[0] + c * self.pos[1]);
        RootTransform {
            pos: [px, pz],
            facing: [-s, c],
        }
    }

    /// Inverse of `apply_point`: expresses a parent-frame point locally.
    pub fn to_local_point(&self, p: [f64; 2]) -> [f64; 2] {
        self.invert().apply_point(p)
    }

    pub fn to_local_point3(&self, p: [f64; 3]) -> [f64; 3] {
        let ground = self.to_local_point([p[0], p[2]]);
        [ground[0], p[1], ground[1]]
    }
}

/// The transform `r` with `from.compose(r) == to`.
pub fn relative(from: &RootTransform, to: &RootTransform) -> RootTransform {
    from.invert().compose(to)
}

/// Shortest-arc interpolation between two unit facings.
pub fn slerp_facing(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    let ang_a = a[0].atan2(a[1]);
    let ang_b = b[0].atan2(b[1]);
    let mut d = ang_b - ang_a;
    while d > std::f64::consts::PI {
        d -= 2.0 * std::f64::consts::PI;
    }
    while d < -std::f64::consts::PI {
        d += 2.0 * std::f64::consts::PI;
    }
    let ang = ang_a + t * d;
    [ang.sin(), ang.cos()]
}

/// Skeleton description: joint names, number of joints, and the assignment
/// of joints to the five part groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub joint_names: Vec<String>,
    pub parts: [Vec<usize>; NUM_PARTS],
}

impl Skeleton {
    /// 15-joint toy skeleton: pelvis, spine, head, two arms, two legs.
    /// Parts: torso/head, left arm, right arm, left leg, right leg.
    pub fn default15() -> Self {
        let names = [
            "pelvis",
            "spine",
            "head",
            "l_shoulder",
            "l_elbow",
            "l_wrist",
            "r_shoulder",
            "r_elbow",
            "r_wrist",
            "l_hip",
            "l_knee",
            "l_ankle",
            "r_hip",
            "r_knee",
            "r_ankle",
        ];
        Self {
            joint_names: names.iter().map(|s| s.to_string()).collect(),
            parts: [
                vec![0, 1, 2],
                vec![3, 4, 5],
                vec![6, 7, 8],
                vec![9, 10, 11],
                vec![12, 13, 14],
            ],
        }
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    /// Indices of the contact joints in the fixed contact-channel order:
    /// pelvis, left foot, right foot, left hand, right hand.
    pub fn contact_joints(&self) -> [usize; NUM_CONTACTS] {
        let find = |n: &str| {
            self.joint_names
                .iter()
                .position(|j| j == n)
                .expect("default joint present")
        };
        [
            find("pelvis"),
            find("l_ankle"),
            find("r_ankle"),
            find("l_wrist"),
            find("r_wrist"),
        ]
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        let j = self.num_joints();
        let mut seen = vec![false; j];
        for group in &self.parts {
            if group.is_empty() {
                return Err(MotionError::BadPartMap);
            }
            for &idx in group {
                if idx >= j || seen[idx] {
                    return Err(MotionError::BadPartMap);
                }
                seen[idx] = true;
            }
        }
        if seen.iter().all(|&s| s) {
            Ok(())
        } else {
            Err(MotionError::BadPartMap)
        }
    }
}

/// Root-local joint positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub joints: Vec<[f64; 3]>,
}

impl Pose {
    pub fn new(joints: Vec<[f64; 3]>) -> Result<Self, MotionError> {
        if joints.iter().flatten().any(|c| !c.is_finite()) {
            return Err(MotionError::NonFinitePose);
        }
        Ok(Self { joints })
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    /// Flattened coordinates, joint-major.
    pub fn flatten(&self) -> Vec<f64> {
        self.joints.iter().flatten().copied().collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self, MotionError> {
        let joints = flat
            .chunks(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect::<Vec<_>>();
        Pose::new(joints)
    }

    /// Flattened coordinates of one part group.
    pub fn part_flat(&self, skeleton: &Skeleton, part: usize) -> Vec<f64> {
        skeleton.parts[part]
            .iter()
            .flat_map(|&j| self.joints[j])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Idle,
    Walk,
    Sit,
    Lie,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [Action::Idle, Action::Walk, Action::Sit, Action::Lie];

    pub fn one_hot(&self) -> [f64; NUM_ACTIONS] {
        let mut v = [0.0; NUM_ACTIONS];
        v[self.index()] = 1.0;
        v
    }

    pub fn index(&self) -> usize {
        match self {
            Action::Idle => 0,
            Action::Walk => 1,
            Action::Sit => 2,
            Action::Lie => 3,
        }
    }

    pub fn from_index(i: usize) -> Action {
        Self::ALL[i % NUM_ACTIONS]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Action::Idle => "idle",
            Action::Walk => "walk",
            Action::Sit => "sit",
            Action::Lie => "lie",
        }
    }

    pub fn parse(s: &str) -> Result<Action, MotionError> {
        match s {
            "idle" => Ok(Action::Idle),
            "walk" => Ok(Action::Walk),
            "sit" => Ok(Action::Sit),
            "lie" => Ok(Action::Lie),
            other => Err(MotionError::UnknownAction(other.to_string())),
        }
    }
}

/// One motion frame: root transform, root-local pose, contact labels and the
/// action label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub root: RootTransform,
    pub pose: Pose,
    pub contacts: [bool; NUM_CONTACTS],
    pub action: Action,
}

impl Frame {
    /// World position of joint `j`.
    pub fn joint_world(&self, j: usize) -> [f64; 3] {
        self.root.apply_point3(self.pose.joints[j])
    }
}

/// An ordered sequence of frames at the fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub frames: Vec<Frame>,
    pub fps: f64,
}

impl MotionSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self, MotionError> {
        let seq = Self::new_unchecked(frames)?;
        for w in seq.frames.windows(2) {
            let d = dist2(w[0].root.pos, w[1].root.pos);
            if d >= 0.5 {
                return Err(MotionError::DisplacementTooLarge(d));
            }
        }
        Ok(seq)
    }

    /// Construction without the per-frame displacement sanity bound.
    ///
    /// Generated sequences from partially trained models can violate the
    /// ground-truth bound and still need to flow through metrics and file
    /// I/O; synthesis of ground truth always uses the checked constructor.
    pub fn new_unchecked(frames: Vec<Frame>) -> Result<Self, MotionError> {
        if frames.is_empty() {
            return Err(MotionError::EmptySequence);
        }
        Ok(Self { frames, fps: FPS })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Ground root path, one (x, z) per frame.
    pub fn root_path(&self) -> Vec<[f64; 2]> {
        self.frames.iter().map(|f| f.root.pos).collect()
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Linearly resamples a sequence to `n` frames. Endpoints are copied
/// verbatim; joint and root positions interpolate, facings interpolate by
/// shortest arc, contacts and actions take the nearest source frame.
pub fn resample(seq: &MotionSequence, n: usize) -> Result<MotionSequence, MotionError> {
    if n < 2 {
        return Err(MotionError::ResampleTooShort(n));
    }
    let m = seq.len();
    if m == 1 {
        return Err(MotionError::EmptySequence);
    }
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        if i == 0 {
            frames.push(seq.frames[0].clone());
            continue;
        }
        if i == n - 1 {
            frames.push(seq.frames[m - 1].clone());
            continue;
        }
        let t = i as f64 * (m - 1) as f64 / (n - 1) as f64;
        let lo = t.floor() as usize;
        let hi = (lo + 1).min(m - 1);
        let w = t - lo as f64;
        let (a, b) = (&seq.frames[lo], &seq.frames[hi]);
        let joints = a
            .pose
            .joints
            .iter()
            .zip(&b.pose.joints)
            .map(|(pa, pb)| {
                [
                    pa[0] + w * (pb[0] - pa[0]),
                    pa[1] + w * (pb[1] - pa[1]),
                    pa[2] + w * (pb[2] - pa[2]),
                ]
            })
            .collect();
        let root = RootTransform::new(
            [
                a.root.pos[0] + w * (b.root.pos[0] - a.root.pos[0]),
                a.root.pos[1] + w * (b.root.pos[1] - a.root.pos[1]),
            ],
            slerp_facing(a.root.facing, b.root.facing, w),
        )?;
        let nearest = if w < 0.5 { a } else { b };
        frames.push(Frame {
            root,
            pose: Pose { joints },
            contacts: nearest.contacts,
            action: nearest.action,
        });
    }
    MotionSequence::new_unchecked(frames)
}

/// Character-state feature at `cur` with finite-difference velocities taken
/// against `prev`: root-local joint positions, joint velocities expressed in
/// the current root frame, the root motion relative to the previous frame,
/// and the action one-hot.
pub fn character_state(cur: &Frame, prev: &Frame, fps: f64) -> Vec<f64> {
    let j = cur.pose.num_joints();
    let mut w = Vec::with_capacity(state_dim(j));
    for p in &cur.pose.joints {
        w.extend_from_slice(p);
    }
    for idx in 0..j {
        let cur_world = cur.joint_world(idx);
        let prev_world = prev.joint_world(idx);
        let cur_local = cur.root.to_local_point3(cur_world);
        let prev_local = cur.root.to_local_point3(prev_world);
        w.push((cur_local[0] - prev_local[0]) * fps);
        w.push((cur_local[1] - prev_local[1]) * fps);
        w.push((cur_local[2] - prev_local[2]) * fps);
    }
    let rel = relative(&prev.root, &cur.root);
    w.extend_from_slice(&rel.facing);
    w.push(rel.pos[0] * fps);
    w.push(rel.pos[1] * fps);
    w.extend_from_slice(&cur.action.one_hot());
    w
}

/// A sparse keyframe along the motion: root expressed in both the start and
/// the goal coordinate frames, contact labels, and the character state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Milestone {
    pub root_from_start: RootTransform,
    pub root_from_goal: RootTransform,
    pub contacts: [bool; NUM_CONTACTS],
    pub state: Vec<f64>,
}

impl Milestone {
    /// Builds a milestone for a world root given the start and goal frames.
    pub fn from_world(
        world_root: &RootTransform,
        start: &RootTransform,
        goal: &RootTransform,
        contacts: [bool; NUM_CONTACTS],
        state: Vec<f64>,
    ) -> Self {
        Self {
            root_from_start: relative(start, world_root),
            root_from_goal: relative(goal, world_root),
            contacts,
            state,
        }
    }

    /// World root recovered through the start frame.
    pub fn world_via_start(&self, start: &RootTransform) -> RootTransform {
        start.compose(&self.root_from_start)
    }

    /// World root recovered through the goal frame.
    pub fn world_via_goal(&self, goal: &RootTransform) -> RootTransform {
        goal.compose(&self.root_from_goal)
    }

    /// Checks the two encodings agree on the world point within `tol` meters.
    pub fn consistent(&self, start: &RootTransform, goal: &RootTransform, tol: f64) -> bool {
        let a = self.world_via_start(start);
        let b = self.world_via_goal(goal);
        dist2(a.pos, b.pos) <= tol
    }
}

/// Grid dimensions of a scene object voxelization.
pub const GRID_DIM: usize = 8;
/// Total cell count of a scene object voxelization.
pub const GRID_CELLS: usize = GRID_DIM * GRID_DIM * GRID_DIM;

/// A goal anchor on an object: a root transform plus the action performed
/// there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalAnchor {
    pub root: RootTransform,
    pub action: Action,
}

/// A static scene object as an 8×8×8 occupancy grid with annotated goal
/// anchors.
///
/// Grid local coordinates: the cube spans x, z in [-4c, 4c) around the
/// object frame and y in [0, 8c); cell (ix, iy, iz) is flattened row-major
/// as ix·64 + iy·8 + iz.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub grid: Vec<bool>,
    pub cell_size: f64,
    pub frame: RootTransform,
    pub goal_anchors: Vec<GoalAnchor>,
}

impl SceneObject {
    pub fn new(
        grid: Vec<bool>,
        cell_size: f64,
        frame: RootTransform,
        goal_anchors: Vec<GoalAnchor>,
    ) -> Result<Self, MotionError> {
        if grid.len() != GRID_CELLS {
            return Err(MotionError::BadGridSize(grid.len()));
        }
        if cell_size <= 0.0 {
            return Err(MotionError::BadCellSize);
        }
        if goal_anchors.is_empty() {
            return Err(MotionError::NoGoalAnchor);
        }
        Ok(Self {
            grid,
            cell_size,
            frame,
            goal_anchors,
        })
    }

    pub fn cell_index(ix: usize, iy: usize, iz: usize) -> usize {
        ix * GRID_DIM * GRID_DIM + iy * GRID_DIM + iz
    }

    /// Local coordinates of a cell center.
    pub fn cell_center_local(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        let c = self.cell_size;
        let half = GRID_DIM as f64 / 2.0 * c;
        [
            (ix as f64 + 0.5) * c - half,
            (iy as f64 + 0.5) * c,
            (iz as f64 + 0.5) * c - half,
        ]
    }

    /// World coordinates of a cell center.
    pub fn cell_center_world(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        self.frame.apply_point3(self.cell_center_local(ix, iy, iz))
    }

    /// Whether the world point falls inside an occupied cell.
    pub fn point_occupied(&self, world: [f64; 3]) -> bool {
        self.cell_of_point(world)
            .map(|(ix, iy, iz)| self.grid[Self::cell_index(ix, iy, iz)])
            .unwrap_or(false)
    }

    /// Grid cell containing a world point, if inside the cube.
    pub fn cell_of_point(&self, world: [f64; 3]) -> Option<(usize, usize, usize)> {
        let local = self.frame.to_local_point3(world);
        let c = self.cell_size;
        let half = GRID_DIM as f64 / 2.0 * c;
        let fx = (local[0] + half) / c;
        let fy = local[1] / c;
        let fz = (local[2] + half) / c;
        let in_range = |f: f64| f >= 0.0 && f < GRID_DIM as f64;
        if in_range(fx) && in_range(fy) && in_range(fz) {
            Some((fx as usize, fy as usize, fz as usize))
        } else {
            None
        }
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..GRID_DIM).flat_map(move |ix| {
            (0..GRID_DIM).flat_map(move |iy| {
                (0..GRID_DIM).filter_map(move |iz| {
                    if self.grid[Self::cell_index(ix, iy, iz)] {
                        Some((ix, iy, iz))
                    } else {
                        None
                    }
                })
            })
        })
    }

    /// Top height (world y) of the highest occupied cell whose (x, z) column
    /// contains the world point, or 0.0 (ground) if none does.
    pub fn support_height(&self, world_xz: [f64; 2]) -> f64 {
        let local = self.frame.to_local_point([world_xz[0], world_xz[1]]);
        let c = self.cell_size;
        let half = GRID_DIM as f64 / 2.0 * c;
        let fx = (local[0] + half) / c;
        let fz = (local[1] + half) / c;
        let in_range = |f: f64| f >= 0.0 && f < GRID_DIM as f64;
        if !in_range(fx) || !in_range(fz) {
            return 0.0;
        }
        let (ix, iz) = (fx as usize, fz as usize);
        let mut top = 0.0;
        for iy in 0..GRID_DIM {
            if self.grid[Self::cell_index(ix, iy, iz)] {
                top = (iy + 1) as f64 * c;
            }
        }
        top
    }
}

/// Target of an interaction: where to stand, what to do, and the pose to
/// arrive in.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSpec {
    pub root: RootTransform,
    pub action: Action,
    pub pose: Pose,
}

impl GoalSpec {
    pub fn new(root: RootTransform, action: Action, pose: Pose) -> Result<Self, MotionError> {
        if !matches!(action, Action::Sit | Action::Lie) {
            return Err(MotionError::BadGoalAction(action));
        }
        Ok(Self { root, action, pose })
    }
}
