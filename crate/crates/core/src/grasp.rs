//! Parallel-jaw gripper geometry and the 6-DoF grasp candidate sampler.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{estimate_normal, PointCloud, RigidTransform, Vec3};

#[derive(Debug, Error)]
pub enum GraspError {
    #[error("grasp sampling needs a non-empty target cloud")]
    EmptyCloud,
    #[error("invalid sampler input: {0}")]
    InvalidInput(String),
    #[error("normal estimation failed for {failures} of {attempts} sampled points")]
    TooManyFailures { failures: usize, attempts: usize },
}

/// Gripper dimensions in the grasp frame: z is the approach axis, x the
/// closing axis, and the origin sits at the center of the palm face.
///
/// The palm occupies `|x| ≤ palm_width/2`, `|y| ≤ palm_thickness/2`,
/// `-palm_depth ≤ z ≤ 0`. Each finger occupies `finger_thickness` along x
/// outside the jaw opening, `|y| ≤ finger_width/2`, `0 ≤ z ≤ finger_length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GripperModel {
    pub finger_length: f64,
    pub finger_width: f64,
    pub finger_thickness: f64,
    pub palm_depth: f64,
    pub palm_width: f64,
    pub palm_thickness: f64,
    pub jaw_opening: f64,
    pub approach_clearance: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self {
            finger_length: 0.05,
            finger_width: 0.02,
            finger_thickness: 0.01,
            palm_depth: 0.04,
            palm_width: 0.12,
            palm_thickness: 0.04,
            jaw_opening: 0.08,
            approach_clearance: 0.10,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<(), GraspError> {
        let dims = [
            self.finger_length,
            self.finger_width,
            self.finger_thickness,
            self.palm_depth,
            self.palm_width,
            self.palm_thickness,
            self.jaw_opening,
            self.approach_clearance,
        ];
        if !dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            return Err(GraspError::InvalidInput(format!(
                "gripper dimensions must be positive: {self:?}"
            )));
        }
        if self.jaw_opening <= 2.0 * self.finger_thickness {
            return Err(GraspError::InvalidInput(
                "jaw_opening must exceed twice the finger thickness".into(),
            ));
        }
        Ok(())
    }

    /// Every dimension multiplied by `f`.
    pub fn scaled(&self, f: f64) -> Self {
        Self {
            finger_length: self.finger_length * f,
            finger_width: self.finger_width * f,
            finger_thickness: self.finger_thickness * f,
            palm_depth: self.palm_depth * f,
            palm_width: self.palm_width * f,
            palm_thickness: self.palm_thickness * f,
            jaw_opening: self.jaw_opening * f,
            approach_clearance: self.approach_clearance * f,
        }
    }

    /// Outer x extent of the open finger pair.
    pub fn outer_half_span(&self) -> f64 {
        self.jaw_opening / 2.0 + self.finger_thickness
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub pose: RigidTransform,
    pub grasp_point: Vec3,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_f: Option<f64>,
}

impl GraspCandidate {
    pub fn new(pose: RigidTransform, grasp_point: Vec3) -> Self {
        Self {
            pose,
            grasp_point,
            p_c: None,
            p_g: None,
            p_f: None,
        }
    }

    pub fn approach(&self) -> Vec3 {
        self.pose.axis(2)
    }

    pub fn closing_axis(&self) -> Vec3 {
        self.pose.axis(0)
    }

    /// Stores both scores and their product.
    pub fn with_scores(mut self, p_c: f64, p_g: f64) -> Self {
        self.p_c = Some(p_c);
        self.p_g = Some(p_g);
        self.p_f = Some(p_c * p_g);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub n_candidates: usize,
    /// Half-angle of the approach perturbation cone, degrees.
    pub cone_angle_deg: f64,
    /// Maximum standoff as a fraction of the finger length.
    pub max_standoff_fraction: f64,
    pub normal_radius: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_candidates: 64,
            cone_angle_deg: 30.0,
            max_standoff_fraction: 0.5,
            normal_radius: 0.015,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), GraspError> {
        if self.n_candidates == 0 {
            return Err(GraspError::InvalidInput("n_candidates must be >= 1".into()));
        }
        if !(0.0..=90.0).contains(&self.cone_angle_deg)
            || !(0.0..=1.0).contains(&self.max_standoff_fraction)
            || !(self.normal_radius > 0.0)
        {
            return Err(GraspError::InvalidInput(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Any unit vector perpendicular to `z`.
fn perpendicular(z: &Vec3) -> Vec3 {
    let helper = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    z.cross(&helper).normalize()
}

/// Uniform direction in the spherical cap of half-angle `max_angle` about `axis`.
fn sample_in_cone(axis: &Vec3, max_angle: f64, rng: &mut impl Rng) -> Vec3 {
    let cos_max = max_angle.cos();
    let cos_t = if cos_max < 1.0 {
        rng.random_range(cos_max..=1.0)
    } else {
        1.0
    };
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = rng.random_range(0.0..TAU);
    let e1 = perpendicular(axis);
    let e2 = axis.cross(&e1);
    (axis * cos_t + (e1 * phi.cos() + e2 * phi.sin()) * sin_t).normalize()
}

/// Grasp frame with approach `z`, closing axis rolled by `roll` about `z`, and
/// origin `origin`.
pub fn grasp_frame(z: &Vec3, roll: f64, origin: Vec3) -> RigidTransform {
    let e1 = perpendicular(z);
    let e2 = z.cross(&e1);
    let x = e1 * roll.cos() + e2 * roll.sin();
    let y = z.cross(&x);
    RigidTransform::from_axes(x, y, *z, origin).expect("orthonormal by construction")
}

/// Samples `config.n_candidates` grasps on `target`.
///
/// Each grasp picks a cloud point uniformly, approaches along its inward
/// normal perturbed inside a cone, rolls uniformly about the approach axis and
/// backs the palm off by a uniform standoff. Normals are oriented toward
/// `viewpoint`. Points whose normal cannot be estimated are redrawn; more than
/// 90% failures over the attempt budget is an error.
pub fn sample_grasp_poses(
    target: &PointCloud,
    config: &SamplerConfig,
    gripper: &GripperModel,
    viewpoint: &Vec3,
    seed: u64,
) -> Result<Vec<GraspCandidate>, GraspError> {
    if target.is_empty() {
        return Err(GraspError::EmptyCloud);
    }
    config.validate()?;
    let n = config.n_candidates;
    let max_attempts = 10 * n;
    let cone = config.cone_angle_deg.to_radians();
    let max_standoff = config.max_standoff_fraction * gripper.finger_length;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut failures = 0usize;
    let mut attempts = 0usize;
    while out.len() < n {
        if attempts == max_attempts {
            return Err(GraspError::TooManyFailures { failures, attempts });
        }
        attempts += 1;
        let p = target.points[rng.random_range(0..target.len())];
        let normal = match estimate_normal(target, &p, config.normal_radius, viewpoint) {
            Ok(nrm) => nrm,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let z = sample_in_cone(&-normal, cone, &mut rng);
        let roll = rng.random_range(0.0..TAU);
        let standoff = if max_standoff > 0.0 {
            rng.random_range(0.0..=max_standoff)
        } else {
            0.0
        };
        out.push(GraspCandidate::new(grasp_frame(&z, roll, p - z * standoff), p));
    }
    Ok(out)
}

/// One JSON object per line.
pub fn candidates_to_json_lines(cands: &[GraspCandidate]) -> String {
    let mut s = String::new();
    for c in cands {
        s.push_str(&serde_json::to_string(c).expect("candidate serializes"));
        s.push('\n');
    }
    s
}
