use serde::{Deserialize, Serialize};

use super::{CloudRole, GeometryError, PointCloud, RigidTransform, Vec3};

/// Pinhole intrinsics. Pixel `(u, v)` has its center at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidIntrinsics(format!("{self:?}")))
        }
    }

    /// Unnormalized camera-frame ray through pixel `(u, v)`; its z component is 1,
    /// so a point at depth `d` along the ray is `d * ray`.
    #[inline]
    pub fn pixel_ray(&self, u: usize, v: usize) -> Vec3 {
        Vec3::new(
            (u as f64 - self.cx) / self.fx,
            (v as f64 - self.cy) / self.fy,
            1.0,
        )
    }

    /// Projects a camera-frame point to continuous pixel coordinates and depth.
    pub fn project(&self, p_cam: &Vec3) -> (f64, f64, f64) {
        (
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
            p_cam.z,
        )
    }
}

/// Row-major depth image in meters; pixels without a surface hold `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

impl DepthImage {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            depth: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    pub fn finite_count(&self) -> usize {
        self.depth.iter().filter(|d| is_valid_depth(**d)).count()
    }
}

/// Row-major instance labels: object id, or −1 for background and structures.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskImage {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<i32>,
}

impl MaskImage {
    pub const BACKGROUND: i32 = -1;

    pub fn filled(width: usize, height: usize, value: i32) -> Self {
        Self {
            width,
            height,
            labels: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> i32 {
        self.labels[v * self.width + u]
    }

    /// Distinct non-negative labels in ascending order.
    pub fn instance_ids(&self) -> Vec<i32> {
        let mut ids: Vec<i32> = self.labels.iter().copied().filter(|&l| l >= 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[inline]
pub fn is_valid_depth(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

/// Back-projects every valid-depth pixel, optionally restricted to pixels whose
/// mask label is an instance (label ≥ 0), into the world frame.
pub fn back_project(
    depth: &DepthImage,
    intrinsics: &CameraIntrinsics,
    camera_pose: &RigidTransform,
    mask: Option<&MaskImage>,
) -> Result<PointCloud, GeometryError> {
    if let Some(m) = mask {
        check_mask_dims(depth, m)?;
        back_project_where(depth, intrinsics, camera_pose, CloudRole::Scene, |i| {
            m.labels[i] >= 0
        })
    } else {
        back_project_where(depth, intrinsics, camera_pose, CloudRole::Scene, |_| true)
    }
}

/// Back-projection with an arbitrary pixel predicate on the row-major index.
pub fn back_project_where(
    depth: &DepthImage,
    intrinsics: &CameraIntrinsics,
    camera_pose: &RigidTransform,
    role: CloudRole,
    keep: impl Fn(usize) -> bool,
) -> Result<PointCloud, GeometryError> {
    if depth.width != intrinsics.width
        || depth.height != intrinsics.height
        || depth.depth.len() != depth.width * depth.height
    {
        return Err(GeometryError::DimensionMismatch(format!(
            "depth {}x{} vs intrinsics {}x{}",
            depth.width, depth.height, intrinsics.width, intrinsics.height
        )));
    }
    let mut points = Vec::new();
    for v in 0..depth.height {
        for u in 0..depth.width {
            let i = v * depth.width + u;
            let d = depth.depth[i];
            if !is_valid_depth(d) || !keep(i) {
                continue;
            }
            let p_cam = intrinsics.pixel_ray(u, v) * d;
            points.push(camera_pose.apply(&p_cam));
        }
    }
    Ok(PointCloud::new(points, role))
}

pub(crate) fn check_mask_dims(depth: &DepthImage, mask: &MaskImage) -> Result<(), GeometryError> {
    if depth.width != mask.width
        || depth.height != mask.height
        || mask.labels.len() != mask.width * mask.height
    {
        return Err(GeometryError::DimensionMismatch(format!(
            "depth {}x{} vs mask {}x{}",
            depth.width, depth.height, mask.width, mask.height
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 120.0, 32.0, 24.0, 64, 48).unwrap()
    }

    #[test]
    fn principal_point_back_projects_onto_optical_axis() {
        let k = intrinsics();
        let mut depth = DepthImage::filled(64, 48, 0.0);
        depth.depth[24 * 64 + 32] = 1.0;
        let cloud = back_project(&depth, &k, &RigidTransform::identity(), None).unwrap();
        assert_eq!(cloud.points, vec![Vec3::new(0.0, 0.0, 1.0)]);
    }

    #[test]
    fn unit_tangent_pixel_scales_with_depth() {
        let k = CameraIntrinsics::new(10.0, 10.0, 5.0, 5.0, 20, 20).unwrap();
        let mut depth = DepthImage::filled(20, 20, f64::INFINITY);
        depth.depth[5 * 20 + 15] = 2.0;
        let cloud = back_project(&depth, &k, &RigidTransform::identity(), None).unwrap();
        assert_eq!(cloud.len(), 1);
        assert!((cloud.points[0] - Vec3::new(2.0, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_depth_gives_empty_cloud() {
        let k = intrinsics();
        let depth = DepthImage::filled(64, 48, 0.0);
        let cloud = back_project(&depth, &k, &RigidTransform::identity(), None).unwrap();
        assert!(cloud.is_empty());
    }

    #[test]
    fn mask_restricts_pixels() {
        let k = intrinsics();
        let depth = DepthImage::filled(64, 48, 1.0);
        let mut mask = MaskImage::filled(64, 48, -1);
        mask.labels[10] = 3;
        mask.labels[11] = 4;
        let cloud = back_project(&depth, &k, &RigidTransform::identity(), Some(&mask)).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(mask.instance_ids(), vec![3, 4]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let k = intrinsics();
        let depth = DepthImage::filled(10, 10, 1.0);
        assert!(matches!(
            back_project(&depth, &k, &RigidTransform::identity(), None),
            Err(GeometryError::DimensionMismatch(_))
        ));
        let depth = DepthImage::filled(64, 48, 1.0);
        let mask = MaskImage::filled(64, 47, 0);
        assert!(back_project(&depth, &k, &RigidTransform::identity(), Some(&mask)).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.9, 0.0, 4, 4).is_ok());
    }
}
