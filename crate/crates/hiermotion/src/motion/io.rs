//! Motion file formats: JSON for lossless round trips, CSV for inspection.

use super::{
    Action, Frame, MotionError, MotionSequence, Pose, RootTransform, Skeleton, NUM_CONTACTS,
};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct MotionDoc {
    fps: f64,
    joint_names: Vec<String>,
    frames: Vec<FrameDoc>,
}

#[derive(Serialize, Deserialize)]
struct FrameDoc {
    root: RootDoc,
    joints: Vec<[f64; 3]>,
    contacts: Vec<bool>,
    action: String,
}

#[derive(Serialize, Deserialize)]
struct RootDoc {
    pos: [f64; 2],
    facing: [f64; 2],
}

pub fn save_motion_json(
    path: &Path,
    seq: &MotionSequence,
    skeleton: &Skeleton,
) -> Result<(), MotionError> {
    let doc = MotionDoc {
        fps: seq.fps,
        joint_names: skeleton.joint_names.clone(),
        frames: seq
            .frames
            .iter()
            .map(|f| FrameDoc {
                root: RootDoc {
                    pos: f.root.pos,
                    facing: f.root.facing,
                },
                joints: f.pose.joints.clone(),
                contacts: f.contacts.to_vec(),
                action: f.action.name().to_string(),
            })
            .collect(),
    };
    let bytes = serde_json::to_vec(&doc)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_motion_json(path: &Path) -> Result<(MotionSequence, Skeleton), MotionError> {
    let bytes = std::fs::read(path)?;
    let doc: MotionDoc = serde_json::from_slice(&bytes)?;
    let mut skeleton = Skeleton::default15();
    if doc.joint_names == skeleton.joint_names {
        // keep default part groups
    } else {
        skeleton.joint_names = doc.joint_names.clone();
    }
    let mut frames = Vec::with_capacity(doc.frames.len());
    for fd in doc.frames {
        let mut contacts = [false; NUM_CONTACTS];
        for (i, c) in fd.contacts.iter().take(NUM_CONTACTS).enumerate() {
            contacts[i] = *c;
        }
        frames.push(Frame {
            root: RootTransform::new(fd.root.pos, fd.root.facing)?,
            pose: Pose::new(fd.joints)?,
            contacts,
            action: Action::parse(&fd.action)?,
        });
    }
    Ok((MotionSequence::new_unchecked(frames)?, skeleton))
}

/// CSV export, one row per frame: root, facing, joint coordinates, contacts
/// and the action label.
pub fn save_motion_csv(
    path: &Path,
    seq: &MotionSequence,
    skeleton: &Skeleton,
) -> Result<(), MotionError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec![
        "frame".to_string(),
        "root_x".to_string(),
        "root_z".to_string(),
        "facing_x".to_string(),
        "facing_z".to_string(),
    ];
    for name in &skeleton.joint_names {
        for axis in ["x", "y", "z"] {
            header.push(format!("{name}_{axis}"));
        }
    }
    for c in ["pelvis", "l_foot", "r_foot", "l_hand", "r_hand"] {
        header.push(format!("contact_{c}"));
    }
    header.push("action".to_string());
    writeln!(out, "{}", header.join(","))?;
    for (i, f) in seq.frames.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            f.root.pos[0].to_string(),
            f.root.pos[1].to_string(),
            f.root.facing[0].to_string(),
            f.root.facing[1].to_string(),
        ];
        for j in &f.pose.joints {
            row.push(j[0].to_string());
            row.push(j[1].to_string());
            row.push(j[2].to_string());
        }
        for c in &f.contacts {
            row.push(if *c { "1" } else { "0" }.to_string());
        }
        row.push(f.action.name().to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
