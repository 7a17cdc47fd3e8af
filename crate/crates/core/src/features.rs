//! Predictor inputs: grasp-frame voxel grids of the structure cloud and of the
//! scene neighborhood around the grasp point.

use serde::{Deserialize, Serialize};

use crate::geometry::{center_crop, voxelize, GridSpec, PointCloud, RigidTransform, VoxelGrid};
use crate::grasp::GraspCandidate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub carp_grid: GridSpec,
    pub gsp_grid: GridSpec,
    /// Half side of the world-aligned crop fed to the stability grid.
    pub crop_half_extent: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            carp_grid: GridSpec::default(),
            gsp_grid: GridSpec::new([40, 40, 40], 0.005),
            crop_half_extent: 0.05,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, g) in [("carp_grid", &self.carp_grid), ("gsp_grid", &self.gsp_grid)] {
            if g.dims.contains(&0) || !(g.voxel_size > 0.0 && g.voxel_size.is_finite()) {
                return Err(format!("{name}: dims must be positive and voxel_size > 0"));
            }
        }
        if !(self.crop_half_extent > 0.0) {
            return Err("crop_half_extent must be > 0".into());
        }
        Ok(())
    }
}

/// The grasp frame moved to the grasp point; both grids live in it.
pub fn voxel_frame(c: &GraspCandidate) -> RigidTransform {
    c.pose.with_translation(c.grasp_point)
}

/// Collision-predictor input: the structure cloud in the grasp frame.
pub fn carp_grid(structure: &PointCloud, c: &GraspCandidate, cfg: &FeatureConfig) -> VoxelGrid {
    voxelize(structure, &voxel_frame(c), cfg.carp_grid)
}

/// Stability-predictor input: the scene cloud cropped around the grasp point,
/// in the grasp frame.
pub fn gsp_grid(scene: &PointCloud, c: &GraspCandidate, cfg: &FeatureConfig) -> VoxelGrid {
    let crop = center_crop(scene, &c.grasp_point, cfg.crop_half_extent);
    voxelize(&crop, &voxel_frame(c), cfg.gsp_grid)
}
