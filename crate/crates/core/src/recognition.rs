//! Target recognition by nearest shape descriptor, and the target/structure
//! cloud split.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    back_project_where, check_mask_dims, is_valid_depth, CameraIntrinsics, CloudRole, DepthImage,
    GeometryError, MaskImage, PointCloud, RigidTransform, Vec3,
};

pub const DESCRIPTOR_BINS: usize = 4;
pub const DESCRIPTOR_LEN: usize = DESCRIPTOR_BINS * DESCRIPTOR_BINS * DESCRIPTOR_BINS;

#[derive(Debug, Error)]
pub enum RecognitionError {
    #[error("no instances in the scene mask")]
    NoInstances,
    #[error("instance {0} has no valid-depth pixels")]
    EmptyInstance(i32),
    #[error("instance {0} is not present in the mask")]
    AbsentInstance(i32),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Normalized 4×4×4 occupancy histogram of a centered, scale-normalized cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDescriptor(pub [f64; DESCRIPTOR_LEN]);

impl ShapeDescriptor {
    pub fn l1(&self, other: &ShapeDescriptor) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }

    /// 64 little-endian f64 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, crate::FormatError> {
        if bytes.len() != DESCRIPTOR_LEN * 8 {
            return Err(crate::FormatError(format!(
                "descriptor needs {} bytes, got {}",
                DESCRIPTOR_LEN * 8,
                bytes.len()
            )));
        }
        let mut d = [0.0; DESCRIPTOR_LEN];
        for (i, c) in bytes.chunks_exact(8).enumerate() {
            d[i] = f64::from_le_bytes(c.try_into().unwrap());
        }
        Ok(Self(d))
    }
}

/// Descriptor of a non-empty point set.
pub fn describe_points(points: &[Vec3]) -> Option<ShapeDescriptor> {
    if points.is_empty() {
        return None;
    }
    let centroid: Vec3 = points.iter().sum::<Vec3>() / points.len() as f64;
    let scale = points
        .iter()
        .map(|p| (p - centroid).amax())
        .fold(0.0, f64::max);
    let mut hist = [0.0; DESCRIPTOR_LEN];
    let b = DESCRIPTOR_BINS as f64;
    for p in points {
        let q = if scale > 0.0 {
            (p - centroid) / scale
        } else {
            Vec3::zeros()
        };
        let idx = |c: f64| (((c + 1.0) / 2.0 * b).floor() as i64).clamp(0, DESCRIPTOR_BINS as i64 - 1) as usize;
        let (i, j, k) = (idx(q.x), idx(q.y), idx(q.z));
        hist[i + DESCRIPTOR_BINS * (j + DESCRIPTOR_BINS * k)] += 1.0;
    }
    let n = points.len() as f64;
    for h in &mut hist {
        *h /= n;
    }
    Some(ShapeDescriptor(hist))
}

/// Describes the pixels labeled `instance` (any instance label when `None`).
pub fn describe(
    depth: &DepthImage,
    mask: &MaskImage,
    instance: Option<i32>,
    intrinsics: &CameraIntrinsics,
    camera_pose: &RigidTransform,
) -> Result<ShapeDescriptor, RecognitionError> {
    check_mask_dims(depth, mask)?;
    let cloud = back_project_where(depth, intrinsics, camera_pose, CloudRole::Target, |i| {
        let l = mask.labels[i];
        match instance {
            Some(id) => l == id,
            None => l >= 0,
        }
    })?;
    describe_points(&cloud.points).ok_or(RecognitionError::EmptyInstance(instance.unwrap_or(-1)))
}

/// Depth view of the target alone, as supplied by the operator.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryObservation {
    pub depth: DepthImage,
    pub mask: MaskImage,
    pub intrinsics: CameraIntrinsics,
    pub camera_pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recognition {
    pub target_id: i32,
    /// `(instance id, L1 distance)` in increasing id order.
    pub distances: Vec<(i32, f64)>,
}

/// Picks the scene instance whose descriptor is nearest (L1) to the query's;
/// ties go to the lowest id.
pub fn recognize_target(
    scene_depth: &DepthImage,
    scene_mask: &MaskImage,
    intrinsics: &CameraIntrinsics,
    camera_pose: &RigidTransform,
    query: &QueryObservation,
) -> Result<Recognition, RecognitionError> {
    check_mask_dims(scene_depth, scene_mask)?;
    let qd = describe(
        &query.depth,
        &query.mask,
        None,
        &query.intrinsics,
        &query.camera_pose,
    )?;
    let ids: Vec<i32> = scene_mask
        .instance_ids()
        .into_iter()
        .filter(|&id| {
            scene_mask
                .labels
                .iter()
                .zip(&scene_depth.depth)
                .any(|(&l, &d)| l == id && is_valid_depth(d))
        })
        .collect();
    if ids.is_empty() {
        return Err(RecognitionError::NoInstances);
    }
    let mut distances = Vec::with_capacity(ids.len());
    for id in ids {
        let d = describe(scene_depth, scene_mask, Some(id), intrinsics, camera_pose)?;
        distances.push((id, d.l1(&qd)));
    }
    let (target_id, _) = distances
        .iter()
        .copied()
        .fold((i32::MIN, f64::INFINITY), |best, (id, d)| {
            if d < best.1 {
                (id, d)
            } else {
                best
            }
        });
    Ok(Recognition {
        target_id,
        distances,
    })
}

/// Target pixels versus every other valid-depth pixel.
pub fn split_scene(
    scene_depth: &DepthImage,
    scene_mask: &MaskImage,
    target_id: i32,
    intrinsics: &CameraIntrinsics,
    camera_pose: &RigidTransform,
) -> Result<(PointCloud, PointCloud), RecognitionError> {
    check_mask_dims(scene_depth, scene_mask)?;
    if target_id < 0 || !scene_mask.labels.contains(&target_id) {
        return Err(RecognitionError::AbsentInstance(target_id));
    }
    let target = back_project_where(scene_depth, intrinsics, camera_pose, CloudRole::Target, |i| {
        scene_mask.labels[i] == target_id
    })?;
    let structure =
        back_project_where(scene_depth, intrinsics, camera_pose, CloudRole::Structure, |i| {
            scene_mask.labels[i] != target_id
        })?;
    Ok((target, structure))
}
