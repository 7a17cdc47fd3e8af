//! Points, rigid transforms, pinhole back-projection, cropping and grasp-frame
//! voxelization.

mod camera;
mod cloud;
mod transform;
mod voxel;

use thiserror::Error;

pub use camera::{
    back_project, back_project_where, is_valid_depth, CameraIntrinsics, DepthImage, MaskImage,
};
pub(crate) use camera::check_mask_dims;
pub use cloud::{center_crop, estimate_normal, transform_cloud, CloudRole, PointCloud};
pub use transform::{orthonormal_drift, RigidTransform, ROTATION_TOLERANCE};
pub use voxel::{voxelize, GridSpec, VoxelGrid, VOXEL_MAGIC};

/// Meters, world or local frame depending on context.
pub type Vec3 = nalgebra::Vector3<f64>;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("normal estimation failed: {0}")]
    NormalEstimation(String),
}
