//! Conditioning features: voxel object features, cylindrical environment
//! occupancy, and contact labels.

use crate::motion::{
    Action, Frame, GoalAnchor, MotionError, RootTransform, SceneObject, GRID_CELLS, GRID_DIM,
    NUM_CONTACTS,
};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Length of the flattened object feature: 512 cells × (3 position
/// coordinates + 1 occupancy).
pub const OBJECT_FEATURE_DIM: usize = GRID_CELLS * 4;

#[derive(Debug, Error)]
pub enum SensingError {
    #[error("sensor config values must be positive")]
    BadSensorConfig,
    #[error("n_spheres {0} does not factorize as rings x levels x 8 spokes")]
    BadLattice(usize),
    #[error("scene bounds must have positive extent")]
    BadBounds,
    #[error("object at ({0:.2}, {1:.2}) outside scene bounds")]
    ObjectOutsideBounds(f64, f64),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Axis-aligned ground rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1]]
    }
}

/// A static scene: objects plus the walkable ground rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub bounds: Bounds,
}

impl Scene {
    pub fn new(objects: Vec<SceneObject>, bounds: Bounds) -> Result<Self, SensingError> {
        let ext = bounds.extent();
        if ext[0] <= 0.0 || ext[1] <= 0.0 {
            return Err(SensingError::BadBounds);
        }
        for obj in &objects {
            // The full grid cube has to fit inside the bounds.
            let half = GRID_DIM as f64 / 2.0 * obj.cell_size;
            for corner in [[-half, -half], [-half, half], [half, -half], [half, half]] {
                let world = obj.frame.apply_point(corner);
                if !bounds.contains(world) {
                    return Err(SensingError::ObjectOutsideBounds(world[0], world[1]));
                }
            }
        }
        Ok(Self { objects, bounds })
    }

    pub fn point_occupied(&self, world: [f64; 3]) -> bool {
        self.objects.iter().any(|o| o.point_occupied(world))
    }

    /// Highest support surface under a ground point (0 = bare ground).
    pub fn support_height(&self, world_xz: [f64; 2]) -> f64 {
        self.objects
            .iter()
            .map(|o| o.support_height(world_xz))
            .fold(0.0, f64::max)
    }

    /// Distance from a world point to the nearest occupied voxel, as
    /// axis-aligned box distance in each object's local frame. Returns
    /// `f64::INFINITY` for an empty scene.
    pub fn distance_to_occupied(&self, world: [f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        for obj in &self.objects {
            let local = obj.frame.to_local_point3(world);
            let c = obj.cell_size;
            let half = GRID_DIM as f64 / 2.0 * c;
            for (ix, iy, iz) in obj.occupied_cells() {
                let lo = [
                    ix as f64 * c - half,
                    iy as f64 * c,
                    iz as f64 * c - half,
                ];
                let hi = [lo[0] + c, lo[1] + c, lo[2] + c];
                let mut d2 = 0.0;
                for k in 0..3 {
                    let d = if local[k] < lo[k] {
                        lo[k] - local[k]
                    } else if local[k] > hi[k] {
                        local[k] - hi[k]
                    } else {
                        0.0
                    };
                    d2 += d * d;
                }
                best = best.min(d2.sqrt());
            }
        }
        best
    }
}

/// Cylindrical sensor lattice configuration. The sphere centers form a
/// deterministic lattice of `rings x levels x spokes` points; `n_spheres`
/// must factorize that way with 8 spokes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    pub cyl_radius: f64,
    pub cyl_height: f64,
    pub n_spheres: usize,
    pub sphere_radius: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            cyl_radius: 1.0,
            cyl_height: 2.0,
            n_spheres: 128,
            sphere_radius: 0.1,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), SensingError> {
        if self.cyl_radius <= 0.0
            || self.cyl_height <= 0.0
            || self.sphere_radius <= 0.0
            || self.n_spheres == 0
        {
            return Err(SensingError::BadSensorConfig);
        }
        self.lattice()?;
        Ok(())
    }

    /// (levels, rings, spokes) factorization of the lattice.
    pub fn lattice(&self) -> Result<(usize, usize, usize), SensingError> {
        const SPOKES: usize = 8;
        if self.n_spheres % SPOKES != 0 {
            return Err(SensingError::BadLattice(self.n_spheres));
        }
        let rest = self.n_spheres / SPOKES;
        let mut levels = (rest as f64).sqrt().floor() as usize;
        while levels > 1 && rest % levels != 0 {
            levels -= 1;
        }
        if levels == 0 || rest % levels != 0 {
            return Err(SensingError::BadLattice(self.n_spheres));
        }
        Ok((levels, rest / levels, SPOKES))
    }

    /// Sphere centers in the reference frame's local coordinates, ordered
    /// level-major, then ring, then spoke.
    pub fn sphere_centers_local(&self) -> Result<Vec<[f64; 3]>, SensingError> {
        let (levels, rings, spokes) = self.lattice()?;
        let mut centers = Vec::with_capacity(self.n_spheres);
        for l in 0..levels {
            let y = (l as f64 + 0.5) * self.cyl_height / levels as f64;
            for r in 0..rings {
                let rad = (r as f64 + 0.5) * self.cyl_radius / rings as f64;
                for s in 0..spokes {
                    let ang = 2.0 * std::f64::consts::PI * s as f64 / spokes as f64;
                    centers.push([rad * ang.sin(), y, rad * ang.cos()]);
                }
            }
        }
        Ok(centers)
    }
}

/// Flattened voxel feature of an object relative to a reference frame: per
/// cell, the cell center expressed in `ref_frame` followed by its occupancy,
/// in fixed row-major cell order.
pub fn object_feature(obj: &SceneObject, ref_frame: &RootTransform) -> Vec<f64> {
    let mut feat = Vec::with_capacity(OBJECT_FEATURE_DIM);
    for ix in 0..GRID_DIM {
        for iy in 0..GRID_DIM {
            for iz in 0..GRID_DIM {
                let world = obj.cell_center_world(ix, iy, iz);
                let local = ref_frame.to_local_point3(world);
                feat.extend_from_slice(&local);
                feat.push(if obj.grid[SceneObject::cell_index(ix, iy, iz)] {
                    1.0
                } else {
                    0.0
                });
            }
        }
    }
    feat
}

/// Binary occupancy of the cylindrical sphere lattice around a reference
/// frame: component i is 1 if sphere center i lies inside any occupied
/// voxel.
pub fn environment_occupancy(
    scene: &Scene,
    ref_frame: &RootTransform,
    cfg: &SensorConfig,
) -> Result<Vec<f64>, SensingError> {
    let centers = cfg.sphere_centers_local()?;
    let mut occ = Vec::with_capacity(centers.len());
    for c in centers {
        let world = ref_frame.apply_point3(c);
        occ.push(if scene.point_occupied(world) { 1.0 } else { 0.0 });
    }
    Ok(occ)
}

/// Default contact distance threshold in meters.
pub const CONTACT_EPS: f64 = 0.05;

/// Contact labels for the five end effectors: true when the joint is within
/// `eps` of an occupied voxel, or (for the feet) below height `eps`.
pub fn contact_labels(frame: &Frame, scene: &Scene, eps: f64) -> [bool; NUM_CONTACTS] {
    let skel_contacts = crate::motion::Skeleton::default15().contact_joints();
    let mut out = [false; NUM_CONTACTS];
    for (slot, &joint) in skel_contacts.iter().enumerate() {
        if joint >= frame.pose.num_joints() {
            continue;
        }
        let world = frame.joint_world(joint);
        let near_voxel = scene.distance_to_occupied(world) <= eps;
        let is_foot = slot == 1 || slot == 2;
        out[slot] = near_voxel || (is_foot && world[1] < eps);
    }
    out
}

// --- scene file format ---

#[derive(Serialize, Deserialize)]
struct SceneDoc {
    bounds: Bounds,
    objects: Vec<ObjectDoc>,
}

#[derive(Serialize, Deserialize)]
struct ObjectDoc {
    frame: RootDoc,
    cell_size: f64,
    grid: String,
    goal_anchors: Vec<AnchorDoc>,
}

#[derive(Serialize, Deserialize)]
struct RootDoc {
    pos: [f64; 2],
    facing: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct AnchorDoc {
    root: RootDoc,
    action: String,
}

pub fn save_scene_json(path: &Path, scene: &Scene) -> Result<(), SensingError> {
    let doc = SceneDoc {
        bounds: scene.bounds,
        objects: scene
            .objects
            .iter()
            .map(|o| ObjectDoc {
                frame: RootDoc {
                    pos: o.frame.pos,
                    facing: o.frame.facing,
                },
                cell_size: o.cell_size,
                grid: o
                    .grid
                    .iter()
                    .map(|&b| if b { '1' } else { '0' })
                    .collect(),
                goal_anchors: o
                    .goal_anchors
                    .iter()
                    .map(|a| AnchorDoc {
                        root: RootDoc {
                            pos: a.root.pos,
                            facing: a.root.facing,
                        },
                        action: a.action.name().to_string(),
                    })
                    .collect(),
            })
            .collect(),
    };
    std::fs::write(path, serde_json::to_vec(&doc)?)?;
    Ok(())
}

pub fn load_scene_json(path: &Path) -> Result<Scene, SensingError> {
    let doc: SceneDoc = serde_json::from_slice(&std::fs::read(path)?)?;
    let mut objects = Vec::with_capacity(doc.objects.len());
    for od in doc.objects {
        let grid: Vec<bool> = od.grid.chars().map(|c| c == '1').collect();
        let anchors = od
            .goal_anchors
            .into_iter()
            .map(|a| {
                Ok(GoalAnchor {
                    root: RootTransform::new(a.root.pos, a.root.facing)?,
                    action: Action::parse(&a.action)?,
                })
            })
            .collect::<Result<Vec<_>, MotionError>>()?;
        objects.push(SceneObject::new(
            grid,
            od.cell_size,
            RootTransform::new(od.frame.pos, od.frame.facing)?,
            anchors,
        )?);
    }
    Scene::new(objects, doc.bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{Pose, Skeleton};
    use approx::assert_abs_diff_eq;

    fn solid_block_object(frame: RootTransform, cell: f64) -> SceneObject {
        SceneObject::new(
            vec![true; GRID_CELLS],
            cell,
            frame,
            vec![GoalAnchor {
                root: RootTransform::identity(),
                action: Action::Sit,
            }],
        )
        .unwrap()
    }

    fn box_object(frame: RootTransform, cell: f64, nx: usize, ny: usize, nz: usize) -> SceneObject {
        let mut grid = vec![false; GRID_CELLS];
        let off = (GRID_DIM - nx) / 2;
        let offz = (GRID_DIM - nz) / 2;
        for ix in off..off + nx {
            for iy in 0..ny {
                for iz in offz..offz + nz {
                    grid[SceneObject::cell_index(ix, iy, iz)] = true;
                }
            }
        }
        SceneObject::new(
            grid,
            cell,
            frame,
            vec![GoalAnchor {
                root: RootTransform::identity(),
                action: Action::Sit,
            }],
        )
        .unwrap()
    }

    fn arena(objects: Vec<SceneObject>) -> Scene {
        Scene::new(
            objects,
            Bounds {
                min: [-6.0, -6.0],
                max: [6.0, 6.0],
            },
        )
        .unwrap()
    }

    #[test]
    fn object_feature_positions_and_occupancy() {
        let obj = box_object(RootTransform::identity(), 0.25, 2, 2, 2);
        // Reference at the object's own frame: positions equal the local lattice.
        let feat = object_feature(&obj, &obj.frame);
        assert_eq!(feat.len(), OBJECT_FEATURE_DIM);
        let local = obj.cell_center_local(0, 0, 0);
        assert_abs_diff_eq!(feat[0], local[0], epsilon = 1e-12);
        assert_abs_diff_eq!(feat[1], local[1], epsilon = 1e-12);
        assert_abs_diff_eq!(feat[2], local[2], epsilon = 1e-12);

        // Empty grid: every 4th component is zero.
        let empty = SceneObject::new(
            vec![false; GRID_CELLS],
            0.25,
            RootTransform::identity(),
            vec![GoalAnchor {
                root: RootTransform::identity(),
                action: Action::Sit,
            }],
        )
        .unwrap();
        let feat = object_feature(&empty, &RootTransform::identity());
        for i in 0..GRID_CELLS {
            assert_eq!(feat[4 * i + 3], 0.0);
        }

        // Translating the reference by (1, 0) shifts every x coordinate by -1.
        let base = object_feature(&obj, &RootTransform::identity());
        let shifted = object_feature(
            &obj,
            &RootTransform::new([1.0, 0.0], [0.0, 1.0]).unwrap(),
        );
        for i in 0..GRID_CELLS {
            assert_abs_diff_eq!(shifted[4 * i], base[4 * i] - 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(shifted[4 * i + 1], base[4 * i + 1], epsilon = 1e-12);
            assert_abs_diff_eq!(shifted[4 * i + 2], base[4 * i + 2] - 0.0, epsilon = 1e-12);
            assert_eq!(shifted[4 * i + 3], base[4 * i + 3]);
        }
    }

    #[test]
    fn object_feature_occupancy_invariant_to_reference() {
        let obj = box_object(RootTransform::from_angle([0.3, -0.2], 0.7), 0.25, 3, 2, 2);
        let mut rng = crate::rng::stream_rng(21, "sensing/occ-invariant");
        let base: Vec<f64> = object_feature(&obj, &RootTransform::identity())
            .chunks(4)
            .map(|c| c[3])
            .collect();
        for _ in 0..20 {
            use rand::Rng;
            let r = RootTransform::from_angle(
                [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                rng.gen_range(-3.0..3.0),
            );
            let occ: Vec<f64> = object_feature(&obj, &r).chunks(4).map(|c| c[3]).collect();
            assert_eq!(occ, base);
        }
    }

    #[test]
    fn environment_occupancy_empty_and_solid() {
        let cfg = SensorConfig::default();
        cfg.validate().unwrap();
        let empty = arena(vec![]);
        let occ = environment_occupancy(&empty, &RootTransform::identity(), &cfg).unwrap();
        assert_eq!(occ.len(), 128);
        assert!(occ.iter().all(|&v| v == 0.0));

        // Reference centered inside a solid 2 m cube with a small radius: all
        // centers are inside occupied voxels.
        let solid = arena(vec![solid_block_object(RootTransform::identity(), 0.25)]);
        let tight = SensorConfig {
            cyl_radius: 0.5,
            cyl_height: 1.9,
            ..cfg
        };
        let occ = environment_occupancy(&solid, &RootTransform::identity(), &tight).unwrap();
        assert!(occ.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn environment_occupancy_matches_brute_force_point_test() {
        // Half-space-filling object: occupancy matches an independent
        // point-in-voxel check per center.
        let obj = box_object(RootTransform::from_angle([0.5, 0.4], 0.3), 0.25, 4, 8, 8);
        let scene = arena(vec![obj]);
        let cfg = SensorConfig::default();
        let r = RootTransform::from_angle([0.2, -0.1], 1.1);
        let occ = environment_occupancy(&scene, &r, &cfg).unwrap();
        let centers = cfg.sphere_centers_local().unwrap();
        let mut ones = 0;
        for (v, c) in occ.iter().zip(centers) {
            let world = r.apply_point3(c);
            let expect = if scene.point_occupied(world) { 1.0 } else { 0.0 };
            assert_eq!(*v, expect);
            if expect == 1.0 {
                ones += 1;
            }
        }
        assert!(ones > 0 && ones < cfg.n_spheres);
    }

    #[test]
    fn environment_occupancy_rigid_invariant_bitwise() {
        // Exactly representable translation + 90 degree rotation applied to
        // both the scene and the reference leaves the vector unchanged.
        let obj = box_object(RootTransform::new([0.5, 0.25], [0.0, 1.0]).unwrap(), 0.25, 3, 3, 3);
        let cfg = SensorConfig::default();
        let r = RootTransform::new([0.25, -0.5], [0.0, 1.0]).unwrap();
        let scene = arena(vec![obj.clone()]);
        let base = environment_occupancy(&scene, &r, &cfg).unwrap();

        let rigid = RootTransform::new([1.0, 2.0], [1.0, 0.0]).unwrap();
        let mut moved_obj = obj;
        moved_obj.frame = rigid.compose(&moved_obj.frame);
        let moved_scene = Scene::new(
            vec![moved_obj],
            Bounds {
                min: [-8.0, -8.0],
                max: [8.0, 8.0],
            },
        )
        .unwrap();
        let moved_ref = rigid.compose(&r);
        let moved = environment_occupancy(&moved_scene, &moved_ref, &cfg).unwrap();
        assert_eq!(base, moved);
    }

    #[test]
    fn lattice_factorization() {
        let cfg = SensorConfig::default();
        assert_eq!(cfg.lattice().unwrap(), (4, 4, 8));
        let bad = SensorConfig {
            n_spheres: 7,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }

    fn standing_frame() -> Frame {
        let skel = Skeleton::default15();
        let mut joints = vec![[0.0, 0.9, 0.0]; skel.num_joints()];
        joints[11] = [-0.1, 0.02, 0.0]; // l_ankle
        joints[14] = [0.1, 0.02, 0.0]; // r_ankle
        joints[5] = [-0.25, 0.9, 0.05]; // l_wrist
        joints[8] = [0.25, 0.9, 0.05]; // r_wrist
        joints[2] = [0.0, 1.6, 0.0]; // head
        Frame {
            root: RootTransform::identity(),
            pose: Pose::new(joints).unwrap(),
            contacts: [false; NUM_CONTACTS],
            action: Action::Idle,
        }
    }

    #[test]
    fn contact_labels_standing_and_airborne() {
        let scene = arena(vec![]);
        let frame = standing_frame();
        let c = contact_labels(&frame, &scene, CONTACT_EPS);
        assert_eq!(c, [false, true, true, false, false]);

        let mut airborne = frame;
        for j in airborne.pose.joints.iter_mut() {
            j[1] += 1.0;
        }
        let c = contact_labels(&airborne, &scene, CONTACT_EPS);
        assert_eq!(c, [false; NUM_CONTACTS]);
    }

    #[test]
    fn contact_labels_pelvis_near_seat() {
        // Seat block top at 0.5; pelvis hovers 0.03 above it.
        let obj = box_object(RootTransform::identity(), 0.25, 2, 2, 2);
        let scene = arena(vec![obj]);
        let mut frame = standing_frame();
        frame.pose.joints[0] = [0.0, 0.53, 0.0];
        // Independent distance check: the pelvis is 0.03 above the top face.
        let d = scene.distance_to_occupied(frame.joint_world(0));
        assert_abs_diff_eq!(d, 0.03, epsilon = 1e-9);
        let c = contact_labels(&frame, &scene, 0.05);
        assert!(c[0]);
    }

    #[test]
    fn scene_json_round_trip() {
        let obj = box_object(RootTransform::from_angle([0.4, 0.2], 0.5), 0.25, 2, 2, 2);
        let scene = arena(vec![obj]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        save_scene_json(&path, &scene).unwrap();
        let back = load_scene_json(&path).unwrap();
        assert_eq!(back, scene);
    }

    #[test]
    fn scene_rejects_object_outside_bounds() {
        let obj = box_object(RootTransform::new([5.9, 0.0], [0.0, 1.0]).unwrap(), 0.25, 2, 2, 2);
        let res = Scene::new(
            vec![obj],
            Bounds {
                min: [-6.0, -6.0],
                max: [6.0, 6.0],
            },
        );
        assert!(matches!(res, Err(SensingError::ObjectOutsideBounds(..))));
    }
}
