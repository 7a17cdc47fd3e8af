use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{GeometryError, RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudRole {
    Scene,
    Target,
    Structure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub role: CloudRole,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, role: CloudRole) -> Self {
        Self { points, role }
    }

    pub fn empty(role: CloudRole) -> Self {
        Self::new(Vec::new(), role)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_role(mut self, role: CloudRole) -> Self {
        self.role = role;
        self
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vec3 = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }
}

pub fn transform_cloud(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| t.apply(p)).collect(),
        role: cloud.role,
    }
}

/// Keeps points inside the world-axis-aligned cube of half side `half_extent`
/// around `center` (boundary inclusive).
pub fn center_crop(cloud: &PointCloud, center: &Vec3, half_extent: f64) -> PointCloud {
    let points = cloud
        .points
        .iter()
        .filter(|p| {
            (p.x - center.x).abs() <= half_extent
                && (p.y - center.y).abs() <= half_extent
                && (p.z - center.z).abs() <= half_extent
        })
        .copied()
        .collect();
    PointCloud {
        points,
        role: cloud.role,
    }
}

/// Surface normal at `at` from the covariance of neighbors within `radius`,
/// oriented toward `viewpoint`.
pub fn estimate_normal(
    cloud: &PointCloud,
    at: &Vec3,
    radius: f64,
    viewpoint: &Vec3,
) -> Result<Vec3, GeometryError> {
    let r2 = radius * radius;
    let mut n = 0usize;
    let mut mean = Vec3::zeros();
    for p in &cloud.points {
        if (p - at).norm_squared() <= r2 {
            n += 1;
            mean += p;
        }
    }
    if n < 3 {
        return Err(GeometryError::NormalEstimation(format!(
            "{n} neighbors within {radius} m, need at least 3"
        )));
    }
    mean /= n as f64;
    let mut cov = Matrix3::zeros();
    for p in &cloud.points {
        if (p - at).norm_squared() <= r2 {
            let d = p - mean;
            cov += d * d.transpose();
        }
    }
    cov /= n as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    // Collinear (or coincident) neighborhoods leave two eigenvalues at zero.
    if largest <= 1e-18 || middle <= 1e-9 * largest {
        return Err(GeometryError::NormalEstimation(
            "degenerate neighborhood (collinear points)".into(),
        ));
    }
    let mut normal: Vec3 = eig.eigenvectors.column(order[0]).into_owned().normalize();
    if normal.dot(&(viewpoint - at)) < 0.0 {
        normal = -normal;
    }
    Ok(normal)
}
