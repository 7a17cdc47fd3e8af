use serde::{Deserialize, Serialize};

use super::SceneError;
use crate::geometry::{RigidTransform, Vec3};

/// Analytic solid in its local frame. Cylinders are aligned with local z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Box { half_extents: [f64; 3] },
    Cylinder { radius: f64, half_height: f64 },
    Sphere { radius: f64 },
    /// Union of basic shapes placed by local offsets.
    Compound { parts: Vec<Part> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Part {
    pub shape: Shape,
    pub offset: RigidTransform,
}

/// Entry and exit of a line `o + t d` through a convex solid, with outward
/// normals at both crossings.
#[derive(Debug, Clone, Copy)]
struct Crossing {
    t0: f64,
    n0: Vec3,
    t1: f64,
    n1: Vec3,
}

const PARALLEL_EPS: f64 = 1e-18;

impl Shape {
    pub fn validate(&self) -> Result<(), SceneError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match self {
            Shape::Box { half_extents } => {
                if !half_extents.iter().all(|&h| ok(h)) {
                    return Err(SceneError::InvalidShape(format!("{self:?}")));
                }
            }
            Shape::Cylinder {
                radius,
                half_height,
            } => {
                if !ok(*radius) || !ok(*half_height) {
                    return Err(SceneError::InvalidShape(format!("{self:?}")));
                }
            }
            Shape::Sphere { radius } => {
                if !ok(*radius) {
                    return Err(SceneError::InvalidShape(format!("{self:?}")));
                }
            }
            Shape::Compound { parts } => {
                if parts.is_empty() {
                    return Err(SceneError::InvalidShape("compound without parts".into()));
                }
                for p in parts {
                    if matches!(p.shape, Shape::Compound { .. }) {
                        return Err(SceneError::InvalidShape("nested compound".into()));
                    }
                    p.shape.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Exact signed distance for the basic shapes; for compounds the union
    /// minimum (exact outside, a bound inside).
    pub fn sdf(&self, q: &Vec3) -> f64 {
        match self {
            Shape::Box { half_extents: h } => {
                let d = Vec3::new(q.x.abs() - h[0], q.y.abs() - h[1], q.z.abs() - h[2]);
                let outside = Vec3::new(d.x.max(0.0), d.y.max(0.0), d.z.max(0.0)).norm();
                let inside = d.x.max(d.y).max(d.z).min(0.0);
                outside + inside
            }
            Shape::Cylinder {
                radius,
                half_height,
            } => {
                let dr = (q.x * q.x + q.y * q.y).sqrt() - radius;
                let dz = q.z.abs() - half_height;
                let outside = (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt();
                outside + dr.max(dz).min(0.0)
            }
            Shape::Sphere { radius } => q.norm() - radius,
            Shape::Compound { parts } => parts
                .iter()
                .map(|p| p.shape.sdf(&p.offset.inverse_apply(q)))
                .fold(f64::INFINITY, f64::min),
        }
    }

    fn crossing(&self, o: &Vec3, d: &Vec3) -> Option<Crossing> {
        match self {
            Shape::Box { half_extents: h } => {
                let mut c = Crossing {
                    t0: f64::NEG_INFINITY,
                    n0: Vec3::zeros(),
                    t1: f64::INFINITY,
                    n1: Vec3::zeros(),
                };
                for a in 0..3 {
                    if d[a].abs() < PARALLEL_EPS {
                        if o[a].abs() > h[a] {
                            return None;
                        }
                        continue;
                    }
                    let ta = (-h[a] - o[a]) / d[a];
                    let tb = (h[a] - o[a]) / d[a];
                    let (lo, hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
                    let s = d[a].signum();
                    if lo > c.t0 {
                        c.t0 = lo;
                        c.n0 = Vec3::zeros();
                        c.n0[a] = -s;
                    }
                    if hi < c.t1 {
                        c.t1 = hi;
                        c.n1 = Vec3::zeros();
                        c.n1[a] = s;
                    }
                }
                (c.t0 <= c.t1).then_some(c)
            }
            Shape::Sphere { radius } => {
                let b = o.dot(d);
                let c = o.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let (t0, t1) = (-b - sq, -b + sq);
                Some(Crossing {
                    t0,
                    n0: (o + d * t0) / *radius,
                    t1,
                    n1: (o + d * t1) / *radius,
                })
            }
            Shape::Cylinder {
                radius,
                half_height,
            } => {
                let a = d.x * d.x + d.y * d.y;
                let b = o.x * d.x + o.y * d.y;
                let cc = o.x * o.x + o.y * o.y - radius * radius;
                let radial_normal = |t: f64| {
                    let p = o + d * t;
                    Vec3::new(p.x / radius, p.y / radius, 0.0)
                };
                let (mut t0, mut n0, mut t1, mut n1);
                if a < PARALLEL_EPS {
                    if cc > 0.0 {
                        return None;
                    }
                    t0 = f64::NEG_INFINITY;
                    n0 = Vec3::zeros();
                    t1 = f64::INFINITY;
                    n1 = Vec3::zeros();
                } else {
                    let disc = b * b - a * cc;
                    if disc < 0.0 {
                        return None;
                    }
                    let sq = disc.sqrt();
                    t0 = (-b - sq) / a;
                    t1 = (-b + sq) / a;
                    n0 = radial_normal(t0);
                    n1 = radial_normal(t1);
                }
                if d.z.abs() < PARALLEL_EPS {
                    if o.z.abs() > *half_height {
                        return None;
                    }
                } else {
                    let ta = (-half_height - o.z) / d.z;
                    let tb = (half_height - o.z) / d.z;
                    let (lo, hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
                    let s = d.z.signum();
                    if lo > t0 {
                        t0 = lo;
                        n0 = Vec3::new(0.0, 0.0, -s);
                    }
                    if hi < t1 {
                        t1 = hi;
                        n1 = Vec3::new(0.0, 0.0, s);
                    }
                }
                (t0 <= t1).then_some(Crossing { t0, n0, t1, n1 })
            }
            Shape::Compound { .. } => None,
        }
    }

    /// First surface crossing at `t ≥ 0` of the unit-direction ray `o + t d`,
    /// with the outward local normal there. A ray starting inside reports its exit.
    pub fn ray(&self, o: &Vec3, d: &Vec3) -> Option<(f64, Vec3)> {
        match self {
            Shape::Compound { parts } => parts
                .iter()
                .filter_map(|p| {
                    let lo = p.offset.inverse_apply(o);
                    let ld = p.offset.inverse_apply_vector(d);
                    p.shape
                        .ray(&lo, &ld)
                        .map(|(t, n)| (t, p.offset.apply_vector(&n)))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0)),
            _ => {
                let c = self.crossing(o, d)?;
                if c.t1 < 0.0 {
                    None
                } else if c.t0 >= 0.0 {
                    Some((c.t0, c.n0))
                } else {
                    Some((c.t1, c.n1))
                }
            }
        }
    }

    /// Parameter intervals where the line `o + t d` is inside the solid
    /// (one per convex part).
    pub fn line_intervals(&self, o: &Vec3, d: &Vec3, out: &mut Vec<(f64, f64)>) {
        match self {
            Shape::Compound { parts } => {
                for p in parts {
                    let lo = p.offset.inverse_apply(o);
                    let ld = p.offset.inverse_apply_vector(d);
                    p.shape.line_intervals(&lo, &ld, out);
                }
            }
            _ => {
                if let Some(c) = self.crossing(o, d) {
                    out.push((c.t0, c.t1));
                }
            }
        }
    }

    /// Radius of a sphere about the local origin enclosing the solid.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Shape::Box { half_extents: h } => Vec3::new(h[0], h[1], h[2]).norm(),
            Shape::Cylinder {
                radius,
                half_height,
            } => radius.hypot(*half_height),
            Shape::Sphere { radius } => *radius,
            Shape::Compound { parts } => parts
                .iter()
                .map(|p| p.offset.translation().norm() + p.shape.bounding_radius())
                .fold(0.0, f64::max),
        }
    }

    /// Support function `max_{x in solid} x · dir` for a unit local direction.
    pub fn support(&self, dir: &Vec3) -> f64 {
        match self {
            Shape::Box { half_extents: h } => {
                dir.x.abs() * h[0] + dir.y.abs() * h[1] + dir.z.abs() * h[2]
            }
            Shape::Cylinder {
                radius,
                half_height,
            } => radius * dir.x.hypot(dir.y) + half_height * dir.z.abs(),
            Shape::Sphere { radius } => *radius,
            Shape::Compound { parts } => parts
                .iter()
                .map(|p| {
                    p.offset.translation().dot(dir)
                        + p.shape.support(&p.offset.inverse_apply_vector(dir))
                })
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// A placed solid with a scene-unique id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitive {
    pub id: u32,
    pub shape: Shape,
    pub pose: RigidTransform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    /// Outward unit normal in world coordinates.
    pub normal: Vec3,
}

impl Primitive {
    pub fn new(id: u32, shape: Shape, pose: RigidTransform) -> Self {
        Self { id, shape, pose }
    }

    #[inline]
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.shape.sdf(&self.pose.inverse_apply(p))
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.signed_distance(p) < 0.0
    }

    /// First crossing of the unit-direction ray from `origin`.
    pub fn ray_cast(&self, origin: &Vec3, dir: &Vec3) -> Option<RayHit> {
        let o = self.pose.inverse_apply(origin);
        let d = self.pose.inverse_apply_vector(dir);
        self.shape.ray(&o, &d).map(|(t, n)| RayHit {
            t,
            normal: self.pose.apply_vector(&n),
        })
    }

    /// Inside-intervals of the world line `origin + t dir` (unit `dir`).
    pub fn line_intervals(&self, origin: &Vec3, dir: &Vec3, out: &mut Vec<(f64, f64)>) {
        let o = self.pose.inverse_apply(origin);
        let d = self.pose.inverse_apply_vector(dir);
        self.shape.line_intervals(&o, &d, out);
    }

    pub fn center(&self) -> Vec3 {
        *self.pose.translation()
    }

    pub fn bounding_radius(&self) -> f64 {
        self.shape.bounding_radius()
    }

    /// Extent of the solid from its center along a world unit direction.
    pub fn support(&self, dir: &Vec3) -> f64 {
        self.shape.support(&self.pose.inverse_apply_vector(dir))
    }

    /// Surface points found by casting rays outward from the center of each
    /// convex part along `n` quasi-uniform directions.
    pub fn surface_samples(&self, n: usize) -> Vec<Vec3> {
        let dirs = fibonacci_directions(n);
        let parts: Vec<(Shape, RigidTransform)> = match &self.shape {
            Shape::Compound { parts } => parts
                .iter()
                .map(|p| (p.shape.clone(), self.pose.compose(&p.offset)))
                .collect(),
            s => vec![(s.clone(), self.pose)],
        };
        let mut out = Vec::with_capacity(n * parts.len());
        for (shape, pose) in &parts {
            for d in &dirs {
                if let Some((t, _)) = shape.ray(&Vec3::zeros(), d) {
                    let p = pose.apply(&(d * t));
                    if parts.len() == 1 || self.signed_distance(&p) > -1e-9 {
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    /// Grid points at `pitch` spacing that lie strictly inside the solid.
    pub fn interior_samples(&self, pitch: f64) -> Vec<Vec3> {
        let r = self.bounding_radius();
        let n = (2.0 * r / pitch).ceil() as i64;
        let c = self.center();
        let mut out = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let p = c + Vec3::new(
                        -r + i as f64 * pitch,
                        -r + j as f64 * pitch,
                        -r + k as f64 * pitch,
                    );
                    if self.contains(&p) {
                        out.push(p);
                    }
                }
            }
        }
        out
    }
}

/// Minimum signed distance over a non-empty primitive list.
pub fn signed_distance(prims: &[Primitive], p: &Vec3) -> Result<f64, SceneError> {
    if prims.is_empty() {
        return Err(SceneError::EmptyPrimitiveList);
    }
    Ok(prims
        .iter()
        .map(|q| q.signed_distance(p))
        .fold(f64::INFINITY, f64::min))
}

pub(crate) fn fibonacci_directions(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}
