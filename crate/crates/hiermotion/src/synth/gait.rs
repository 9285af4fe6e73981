//! Canonical poses and the phase-driven walking engine.
//!
//! The gait pins stance feet at fixed world positions for half a period
//! each, which keeps the foot-sliding metric of generated ground truth
//! near zero. Swing feet travel to their next plant with a smootherstep
//! horizontal profile (near-zero velocity when low) and a sine lift.

use super::{smootherstep, ArcPath};
use crate::motion::{Pose, RootTransform};

/// Frames the interaction pose is held statically at the end of a blend;
/// also the window used to detect goal poses in ground truth.
pub const INTERACTION_HOLD_FRAMES: usize = 12;

const PELVIS_H: f64 = 0.90;
const ANKLE_H: f64 = 0.03;
const STEP_LIFT: f64 = 0.12;
const FOOT_LATERAL: f64 = 0.12;

/// Standing pose, root-local. Joint order matches `Skeleton::default15`.
pub fn stand_pose() -> Pose {
    Pose::new(vec![
        [0.0, PELVIS_H, 0.0],        // pelvis
        [0.0, 1.15, 0.0],            // spine
        [0.0, 1.45, 0.0],            // head
        [-0.20, 1.30, 0.0],          // l_shoulder
        [-0.25, 1.05, 0.0],          // l_elbow
        [-0.27, 0.82, 0.02],         // l_wrist
        [0.20, 1.30, 0.0],           // r_shoulder
        [0.25, 1.05, 0.0],           // r_elbow
        [0.27, 0.82, 0.02],          // r_wrist
        [-0.10, 0.85, 0.0],          // l_hip
        [-0.11, 0.45, 0.02],         // l_knee
        [-FOOT_LATERAL, ANKLE_H, 0.0], // l_ankle
        [0.10, 0.85, 0.0],           // r_hip
        [0.11, 0.45, 0.02],          // r_knee
        [FOOT_LATERAL, ANKLE_H, 0.0],  // r_ankle
    ])
    .expect("finite")
}

/// Sitting pose on a support of height `top`. The root faces away from the
/// support; the pelvis leans back over its edge while the feet stay on the
/// ground in front.
pub fn sit_pose(top: f64) -> Pose {
    let h = top;
    Pose::new(vec![
        [0.0, h + 0.01, -0.18],   // pelvis over the edge
        [0.0, h + 0.32, -0.16],   // spine
        [0.0, h + 0.60, -0.12],   // head
        [-0.20, h + 0.44, -0.14], // l_shoulder
        [-0.24, h + 0.22, -0.02], // l_elbow
        [-0.18, h + 0.10, 0.10],  // l_wrist on the lap
        [0.20, h + 0.44, -0.14],  // r_shoulder
        [0.24, h + 0.22, -0.02],  // r_elbow
        [0.18, h + 0.10, 0.10],   // r_wrist
        [-0.10, h + 0.02, -0.16], // l_hip
        [-0.11, h + 0.04, 0.17],  // l_knee forward
        [-0.12, 0.04, 0.22],      // l_ankle on the ground
        [0.10, h + 0.02, -0.16],  // r_hip
        [0.11, h + 0.04, 0.17],   // r_knee
        [0.12, 0.04, 0.22],       // r_ankle
    ])
    .expect("finite")
}

/// Lying pose on top of a support of height `top`, body along local +z.
pub fn lie_pose(top: f64) -> Pose {
    let h = top;
    Pose::new(vec![
        [0.0, h + 0.05, 0.0],     // pelvis
        [0.0, h + 0.06, 0.28],    // spine
        [0.0, h + 0.08, 0.60],    // head
        [-0.20, h + 0.06, 0.42],  // l_shoulder
        [-0.26, h + 0.05, 0.22],  // l_elbow
        [-0.28, h + 0.04, 0.02],  // l_wrist
        [0.20, h + 0.06, 0.42],   // r_shoulder
        [0.26, h + 0.05, 0.22],   // r_elbow
        [0.28, h + 0.04, 0.02],   // r_wrist
        [-0.10, h + 0.05, -0.06], // l_hip
        [-0.12, h + 0.08, -0.45], // l_knee
        [-0.13, h + 0.12, -0.82], // l_ankle
        [0.10, h + 0.05, -0.06],  // r_hip
        [0.12, h + 0.08, -0.45],  // r_knee
        [0.13, h + 0.12, -0.82],  // r_ankle
    ])
    .expect("finite")
}

#[derive(Debug, Clone, Copy)]
struct FootState {
    plant: [f64; 2],
    swing_from: [f64; 2],
    target: [f64; 2],
}

/// Frame-by-frame kinematic walker along an arc-length parameterized path.
pub struct GaitState {
    period: usize,
    half: usize,
    speed_per_frame: f64,
    left: FootState,
    right: FootState,
    next_frame: usize,
}

impl GaitState {
    pub fn new(path: &ArcPath, walk_frames: usize, period: usize) -> Self {
        let speed_per_frame = if walk_frames > 1 {
            path.length() / (walk_frames - 1) as f64
        } else {
            0.0
        };
        let (p0, t0) = path.at(0.0);
        let left_off = left_normal(t0);
        let left_plant = [
            p0[0] + left_off[0] * FOOT_LATERAL,
            p0[1] + left_off[1] * FOOT_LATERAL,
        ];
        let right_plant = [
            p0[0] - left_off[0] * FOOT_LATERAL,
            p0[1] - left_off[1] * FOOT_LATERAL,
        ];
        Self {
            period,
            half: period / 2,
            speed_per_frame,
            left: FootState {
                plant: left_plant,
                swing_from: left_plant,
                target: left_plant,
            },
            right: FootState {
                plant: right_plant,
                swing_from: right_plant,
                target: right_plant,
            },
            next_frame: 0,
        }
    }

    fn step_target(&self, path: &ArcPath, end_frame: usize, walk_frames: usize, left: bool) -> [f64; 2] {
        let end = end_frame.min(walk_frames - 1);
        let arc = self.speed_per_frame * end as f64 + self.speed_per_frame * self.half as f64 * 0.5;
        let (p, t) = path.at(arc.min(path.length()));
        let n = left_normal(t);
        let sign = if left { 1.0 } else { -1.0 };
        [
            p[0] + sign * n[0] * FOOT_LATERAL,
            p[1] + sign * n[1] * FOOT_LATERAL,
        ]
    }

    /// Produces the root and pose for walking frame `i`; must be called in
    /// order from i = 0.
    pub fn frame(&mut self, path: &ArcPath, i: usize, walk_frames: usize) -> (RootTransform, Pose) {
        assert_eq!(i, self.next_frame, "gait frames must be produced in order");
        self.next_frame += 1;

        let arc = self.speed_per_frame * i as f64;
        let (pos, tangent) = path.at(arc);
        let root = RootTransform::new(pos, tangent).expect("unit tangent");

        if i == 0 {
            return (root, stand_pose());
        }

        let c = (i - 1) % self.period;
        let (left_swing, s) = if c < self.half {
            (true, (c + 1) as f64 / self.half as f64)
        } else {
            (false, (c - self.half + 1) as f64 / self.half as f64)
        };

        // At swing start, freeze the origin and pick the landing target.
        if left_swing && c == 0 {
            self.left.swing_from = self.left.plant;
            self.left.target = self.step_target(path, i + self.half - 1, walk_frames, true);
        }
        if !left_swing && c == self.half {
            self.right.swing_from = self.right.plant;
            self.right.target = self.step_target(path, i + self.half - 1, walk_frames, false);
        }

        let swing_pos = |st: &FootState, s: f64| -> ([f64; 2], f64) {
            let w = smootherstep(s);
            let p = [
                st.swing_from[0] + w * (st.target[0] - st.swing_from[0]),
                st.swing_from[1] + w * (st.target[1] - st.swing_from[1]),
            ];
            let lift = STEP_LIFT * (std::f64::consts::PI * s.min(1.0)).sin();
            (p, lift)
        };

        let (left_xy, left_lift, right_xy, right_lift);
        if left_swing {
            let (p, l) = swing_pos(&self.left, s);
            left_xy = p;
            left_lift = l;
            right_xy = self.right.plant;
            right_lift = 0.0;
            if s >= 1.0 {
                self.left.plant = self.left.target;
            }
        } else {
            let (p, l) = swing_pos(&self.right, s);
            right_xy = p;
            right_lift = l;
            left_xy = self.left.plant;
            left_lift = 0.0;
            if s >= 1.0 {
                self.right.plant = self.right.target;
            }
        }

        let mut pose = stand_pose();
        // feet in root-local coordinates
        let l_local = root.to_local_point([left_xy[0], left_xy[1]]);
        let r_local = root.to_local_point([right_xy[0], right_xy[1]]);
        pose.joints[11] = [l_local[0], ANKLE_H + left_lift, l_local[1]];
        pose.joints[14] = [r_local[0], ANKLE_H + right_lift, r_local[1]];
        // knees bend between hip and ankle, bowing forward with the lift
        let knee = |hip: [f64; 3], ankle: [f64; 3], lift: f64| -> [f64; 3] {
            [
                0.5 * (hip[0] + ankle[0]),
                0.5 * (hip[1] + ankle[1]) + 0.02,
                0.5 * (hip[2] + ankle[2]) + 0.06 + 0.8 * lift,
            ]
        };
        pose.joints[10] = knee(pose.joints[9], pose.joints[11], left_lift);
        pose.joints[13] = knee(pose.joints[12], pose.joints[14], right_lift);
        // arms counter-swing
        let phase = 2.0 * std::f64::consts::PI * c as f64 / self.period as f64;
        let swing = 0.16 * phase.sin();
        pose.joints[5][2] += swing; // l_wrist
        pose.joints[4][2] += 0.5 * swing;
        pose.joints[8][2] -= swing; // r_wrist
        pose.joints[7][2] -= 0.5 * swing;
        // slight pelvis bob, twice per period
        let bob = 0.015 * (2.0 * phase).sin();
        for j in [0usize, 1, 2, 3, 6] {
            pose.joints[j][1] += bob;
        }
        (root, pose)
    }
}

fn left_normal(tangent: [f64; 2]) -> [f64; 2] {
    [-tangent[1], tangent[0]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stance_feet_are_pinned() {
        let path = ArcPath::new([0.0, 0.0], [2.0, 0.5], [4.0, 0.0]);
        let walk_frames = 90;
        let mut gait = GaitState::new(&path, walk_frames, 30);
        let mut prev_feet: Option<([f64; 3], [f64; 3])> = None;
        let mut pinned_checks = 0;
        for i in 0..walk_frames {
            let (root, pose) = gait.frame(&path, i, walk_frames);
            let l = root.apply_point3(pose.joints[11]);
            let r = root.apply_point3(pose.joints[14]);
            if let Some((pl, pr)) = prev_feet {
                // whichever foot is low in both frames must not move
                if l[1] < 0.04 && pl[1] < 0.04 {
                    let d = ((l[0] - pl[0]).powi(2) + (l[2] - pl[2]).powi(2)).sqrt();
                    assert!(d < 1e-9, "left foot slid {d} at frame {i}");
                    pinned_checks += 1;
                }
                if r[1] < 0.04 && pr[1] < 0.04 {
                    let d = ((r[0] - pr[0]).powi(2) + (r[2] - pr[2]).powi(2)).sqrt();
                    assert!(d < 1e-9, "right foot slid {d} at frame {i}");
                    pinned_checks += 1;
                }
            }
            prev_feet = Some((l, r));
        }
        assert!(pinned_checks > 40, "stance phases present: {pinned_checks}");
    }

    #[test]
    fn poses_stay_upright_and_finite() {
        let path = ArcPath::new([0.0, 0.0], [1.0, 1.0], [2.0, 2.0]);
        let walk_frames = 61;
        let mut gait = GaitState::new(&path, walk_frames, 30);
        for i in 0..walk_frames {
            let (_, pose) = gait.frame(&path, i, walk_frames);
            assert!(pose.joints.iter().flatten().all(|v| v.is_finite()));
            assert!(pose.joints[2][1] > 1.2, "head height");
        }
    }
}
