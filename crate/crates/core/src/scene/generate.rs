use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Part, Primitive, SceneError, Shape};
use crate::geometry::{CameraIntrinsics, RigidTransform, Vec3};

pub const FLOOR_ID: u32 = 0;
const FLOOR_HALF: [f64; 3] = [1.5, 1.5, 0.01];
const PANEL_THICKNESS: f64 = 0.02;
const TABLE_TOP_SIDE: f64 = 0.4;
const OVERLAP_PITCH: f64 = 0.005;
const MAX_REJECTIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureKind {
    Wall,
    LargeBin,
    SmallBin,
    /// Floor only; used for stability data.
    TableTop,
}

impl StructureKind {
    pub fn name(self) -> &'static str {
        match self {
            StructureKind::Wall => "wall",
            StructureKind::LargeBin => "large-bin",
            StructureKind::SmallBin => "small-bin",
            StructureKind::TableTop => "table-top",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arrangement {
    Standard,
    /// Target placed against a structure panel.
    Challenging,
}

impl Arrangement {
    pub fn name(self) -> &'static str {
        match self {
            Arrangement::Standard => "standard",
            Arrangement::Challenging => "challenging",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectSet {
    Training,
    /// Held-out size ranges plus two-part compounds.
    Novel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneGenConfig {
    pub structure_kind: StructureKind,
    /// Inner side length range of the structure, meters.
    pub structure_extent_range: [f64; 2],
    /// Panel height as a fraction of the drawn extent.
    pub panel_height_ratio: f64,
    /// Inner side of a large bin relative to the drawn extent.
    pub large_bin_scale: f64,
    pub n_objects: usize,
    pub arrangement: Arrangement,
    pub object_set: ObjectSet,
    /// Range of the target-to-panel gap in the challenging arrangement.
    pub challenging_gap: [f64; 2],
    pub camera_pose: RigidTransform,
    pub intrinsics: CameraIntrinsics,
    /// Gaussian depth noise, meters; zero disables it.
    pub depth_noise_std: f64,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            structure_kind: StructureKind::SmallBin,
            structure_extent_range: [0.3, 0.5],
            panel_height_ratio: 0.4,
            large_bin_scale: 1.5,
            n_objects: 5,
            arrangement: Arrangement::Standard,
            object_set: ObjectSet::Training,
            challenging_gap: [0.003, 0.026],
            camera_pose: default_camera_pose(),
            intrinsics: default_intrinsics(),
            depth_noise_std: 0.0,
        }
    }
}

impl SceneGenConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let [lo, hi] = self.structure_extent_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(SceneError::InvalidConfig(format!(
                "structure extent range {lo}..{hi} must lie in (0, 1]"
            )));
        }
        if self.n_objects == 0 {
            return Err(SceneError::InvalidConfig("n_objects must be at least 1".into()));
        }
        if !(self.panel_height_ratio > 0.0 && self.large_bin_scale >= 1.0) {
            return Err(SceneError::InvalidConfig(
                "panel_height_ratio must be positive and large_bin_scale at least 1".into(),
            ));
        }
        let [g0, g1] = self.challenging_gap;
        if !(g0 >= 0.0 && g0 <= g1) {
            return Err(SceneError::InvalidConfig(format!("challenging gap {g0}..{g1}")));
        }
        if !(self.depth_noise_std >= 0.0 && self.depth_noise_std.is_finite()) {
            return Err(SceneError::InvalidConfig("depth_noise_std must be >= 0".into()));
        }
        self.intrinsics
            .validate()
            .map_err(|e| SceneError::InvalidConfig(e.to_string()))
    }
}

/// 320 × 240 pinhole camera with a roughly 55° horizontal field of view.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 304.0,
        fy: 304.0,
        cx: 159.5,
        cy: 119.5,
        width: 320,
        height: 240,
    }
}

/// Oblique overhead view of the workspace center.
pub fn default_camera_pose() -> RigidTransform {
    RigidTransform::look_at(
        Vec3::new(0.0, -0.45, 0.85),
        Vec3::new(0.0, 0.0, 0.03),
        Vec3::z(),
    )
    .expect("fixed camera pose")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescription {
    /// Floor (id 0) and panels.
    pub structures: Vec<Primitive>,
    pub objects: Vec<Primitive>,
    pub target_id: u32,
    pub rng_seed: u64,
}

impl SceneDescription {
    pub fn target(&self) -> &Primitive {
        self.object(self.target_id)
            .expect("target id refers to an object")
    }

    pub fn object(&self, id: u32) -> Option<&Primitive> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn primitives(&self) -> impl Iterator<Item = &Primitive> {
        self.structures.iter().chain(&self.objects)
    }

    /// Panels only, without the floor.
    pub fn panels(&self) -> impl Iterator<Item = &Primitive> {
        self.structures.iter().filter(|s| s.id != FLOOR_ID)
    }

    /// Same scene with another object as the target.
    pub fn with_target(&self, id: u32) -> Result<Self, SceneError> {
        if self.object(id).is_none() {
            return Err(SceneError::InvalidConfig(format!("no object with id {id}")));
        }
        let mut s = self.clone();
        s.target_id = id;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let mut ids: Vec<u32> = self.primitives().map(|p| p.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(SceneError::InvalidConfig("duplicate primitive ids".into()));
        }
        if self.objects.iter().filter(|o| o.id == self.target_id).count() != 1 {
            return Err(SceneError::InvalidConfig(format!(
                "target id {} is not an object",
                self.target_id
            )));
        }
        for p in self.primitives() {
            p.shape.validate()?;
        }
        Ok(())
    }
}

/// True when any point of a `pitch`-spaced interior grid of `obj` lies strictly
/// inside one of `others`.
pub fn overlaps_any(obj: &Primitive, others: &[Primitive], pitch: f64) -> bool {
    let near: Vec<&Primitive> = others
        .iter()
        .filter(|o| {
            (o.center() - obj.center()).norm() < o.bounding_radius() + obj.bounding_radius()
        })
        .collect();
    if near.is_empty() {
        return false;
    }
    obj.interior_samples(pitch)
        .iter()
        .any(|p| near.iter().any(|o| o.signed_distance(p) < 0.0))
}

/// Smallest signed distance from sampled surface points of `obj` to `others`.
pub fn surface_distance(obj: &Primitive, others: &[Primitive]) -> f64 {
    obj.surface_samples(2000)
        .iter()
        .map(|p| {
            others
                .iter()
                .map(|o| o.signed_distance(p))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Inward unit normal and a point on the inner face of one panel, in world frame.
struct PanelFace {
    point: Vec3,
    inward: Vec3,
    /// Unit direction along the panel.
    along: Vec3,
}

struct Layout {
    structures: Vec<Primitive>,
    faces: Vec<PanelFace>,
    frame: RigidTransform,
    /// Inner placement square side.
    side: f64,
}

fn build_structure(cfg: &SceneGenConfig, rng: &mut ChaCha8Rng) -> Layout {
    let floor = Primitive::new(
        FLOOR_ID,
        Shape::Box {
            half_extents: FLOOR_HALF,
        },
        RigidTransform::from_translation(Vec3::new(0.0, 0.0, -FLOOR_HALF[2])),
    );
    let mut structures = vec![floor];
    let [lo, hi] = cfg.structure_extent_range;
    let e = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let yaw = rng.random_range(0.0..TAU);
    let frame = RigidTransform::rot_z(yaw);
    let h = cfg.panel_height_ratio * e;
    let t = PANEL_THICKNESS;

    let side = match cfg.structure_kind {
        StructureKind::LargeBin => cfg.large_bin_scale * e,
        StructureKind::TableTop => TABLE_TOP_SIDE,
        _ => e,
    };
    let s = side / 2.0;
    // (center in structure frame, half extents, inward normal)
    let mut panels: Vec<(Vec3, [f64; 3], Vec3)> = Vec::new();
    match cfg.structure_kind {
        StructureKind::TableTop => {}
        StructureKind::Wall => {
            panels.push((Vec3::new(0.0, s + t / 2.0, h / 2.0), [s + t, t / 2.0, h / 2.0], -Vec3::y()));
        }
        StructureKind::LargeBin | StructureKind::SmallBin => {
            panels.push((Vec3::new(0.0, s + t / 2.0, h / 2.0), [s + t, t / 2.0, h / 2.0], -Vec3::y()));
            panels.push((Vec3::new(0.0, -s - t / 2.0, h / 2.0), [s + t, t / 2.0, h / 2.0], Vec3::y()));
            panels.push((Vec3::new(s + t / 2.0, 0.0, h / 2.0), [t / 2.0, s, h / 2.0], -Vec3::x()));
            panels.push((Vec3::new(-s - t / 2.0, 0.0, h / 2.0), [t / 2.0, s, h / 2.0], Vec3::x()));
        }
    }
    let mut faces = Vec::new();
    for (c, half, n) in panels {
        let id = structures.len() as u32;
        let pose = frame.compose(&RigidTransform::from_translation(c));
        structures.push(Primitive::new(
            id,
            Shape::Box { half_extents: half },
            pose,
        ));
        let face_point = c + n * (t / 2.0);
        faces.push(PanelFace {
            point: frame.apply(&Vec3::new(face_point.x, face_point.y, 0.0)),
            inward: frame.apply_vector(&n),
            along: frame.apply_vector(&Vec3::new(-n.y, n.x, 0.0)),
        });
    }
    Layout {
        structures,
        faces,
        frame,
        side,
    }
}

fn sample_basic(set: ObjectSet, rng: &mut ChaCha8Rng) -> Shape {
    let kind = rng.random_range(0..3);
    match (set, kind) {
        (ObjectSet::Training, 0) => Shape::Box {
            half_extents: [
                rng.random_range(0.02..0.035),
                rng.random_range(0.02..0.035),
                rng.random_range(0.02..0.035),
            ],
        },
        (ObjectSet::Training, 1) => Shape::Cylinder {
            radius: rng.random_range(0.018..0.035),
            half_height: rng.random_range(0.025..0.05),
        },
        (ObjectSet::Training, _) => Shape::Sphere {
            radius: rng.random_range(0.02..0.035),
        },
        (ObjectSet::Novel, 0) => Shape::Box {
            half_extents: [
                rng.random_range(0.015..0.03),
                rng.random_range(0.035..0.05),
                rng.random_range(0.015..0.03),
            ],
        },
        (ObjectSet::Novel, 1) => Shape::Cylinder {
            radius: rng.random_range(0.015..0.03),
            half_height: rng.random_range(0.05..0.065),
        },
        (ObjectSet::Novel, _) => Shape::Sphere {
            radius: rng.random_range(0.015..0.038),
        },
    }
}

fn sample_shape(set: ObjectSet, rng: &mut ChaCha8Rng) -> Shape {
    if set == ObjectSet::Novel && rng.random_bool(0.3) {
        // Box base with a cylinder or sphere stacked on top.
        let base = [
            rng.random_range(0.02..0.03),
            rng.random_range(0.02..0.03),
            rng.random_range(0.015..0.025),
        ];
        let top = if rng.random_bool(0.5) {
            Shape::Cylinder {
                radius: rng.random_range(0.012..0.018),
                half_height: rng.random_range(0.015..0.025),
            }
        } else {
            Shape::Sphere {
                radius: rng.random_range(0.015..0.02),
            }
        };
        let lift = base[2] + top.support(&Vec3::z()) * 0.8;
        return Shape::Compound {
            parts: vec![
                Part {
                    shape: Shape::Box { half_extents: base },
                    offset: RigidTransform::identity(),
                },
                Part {
                    shape: top,
                    offset: RigidTransform::from_translation(Vec3::new(0.0, 0.0, lift)),
                },
            ],
        };
    }
    sample_basic(set, rng)
}

/// A statically stable resting orientation: a box face down, a cylinder
/// upright or lying, any orientation for a sphere; then a random yaw.
fn rest_orientation(shape: &Shape, rng: &mut ChaCha8Rng) -> RigidTransform {
    let tilt = match shape {
        Shape::Box { .. } => match rng.random_range(0..3) {
            0 => RigidTransform::identity(),
            1 => RigidTransform::rot_x(FRAC_PI_2),
            _ => RigidTransform::rot_y(FRAC_PI_2),
        },
        Shape::Cylinder { .. } => {
            if rng.random_bool(0.5) {
                RigidTransform::identity()
            } else {
                RigidTransform::rot_x(FRAC_PI_2)
            }
        }
        Shape::Sphere { .. } => RigidTransform::from_axis_angle(
            Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.1..1.0),
            ),
            rng.random_range(0.0..PI),
        ),
        Shape::Compound { .. } => RigidTransform::identity(),
    };
    RigidTransform::rot_z(rng.random_range(0.0..TAU)).compose(&tilt)
}

/// Places the object centered at `xy` with its lowest point on the floor.
fn settle(id: u32, shape: Shape, orient: RigidTransform, xy: Vec3) -> Primitive {
    let mut prim = Primitive::new(id, shape, orient);
    let z = prim.support(&-Vec3::z());
    prim.pose = orient.with_translation(Vec3::new(xy.x, xy.y, z));
    prim
}

fn xy_radius(p: &Primitive) -> f64 {
    (0..8)
        .map(|k| {
            let a = k as f64 * PI / 4.0;
            p.support(&Vec3::new(a.cos(), a.sin(), 0.0))
        })
        .fold(0.0, f64::max)
        / (PI / 8.0).cos()
}

/// Exact clearance from the inner panel planes.
fn clear_of_faces(p: &Primitive, faces: &[PanelFace]) -> bool {
    faces
        .iter()
        .all(|f| (p.center() - f.point).dot(&f.inward) - p.support(&-f.inward) >= 0.002)
}

fn xy_clear(p: &Primitive, placed: &[Primitive]) -> bool {
    let r = xy_radius(p);
    placed.iter().all(|q| {
        let d = p.center() - q.center();
        d.x.hypot(d.y) > r + xy_radius(q) + 0.002
    })
}

/// Builds a structure with random extent and yaw, then drops objects into it.
///
/// Deterministic in `(config, seed)`. Fails after 1000 rejected placements.
pub fn generate_scene(config: &SceneGenConfig, seed: u64) -> Result<SceneDescription, SceneError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = build_structure(config, &mut rng);
    let first_object_id = layout.structures.len() as u32;
    let mut objects: Vec<Primitive> = Vec::with_capacity(config.n_objects);
    let mut rejections = 0usize;
    let challenging =
        config.arrangement == Arrangement::Challenging && !layout.faces.is_empty();

    while objects.len() < config.n_objects {
        if rejections > MAX_REJECTIONS {
            return Err(SceneError::Generation(format!(
                "placed {} of {} objects after {MAX_REJECTIONS} rejections",
                objects.len(),
                config.n_objects
            )));
        }
        let id = first_object_id + objects.len() as u32;
        let shape = sample_shape(config.object_set, &mut rng);
        let orient = rest_orientation(&shape, &mut rng);
        let probe = Primitive::new(id, shape.clone(), orient);
        let r = xy_radius(&probe);
        let half = layout.side / 2.0 - r - 0.002;
        if half <= 0.0 {
            rejections += 1;
            continue;
        }

        let xy = if challenging && objects.is_empty() {
            let face = &layout.faces[rng.random_range(0..layout.faces.len())];
            let [g0, g1] = config.challenging_gap;
            let gap = if g1 > g0 { rng.random_range(g0..g1) } else { g0 };
            let reach = probe.support(&-face.inward);
            let slide = rng.random_range(-half..half);
            face.point + face.inward * (gap + reach) + face.along * slide
        } else {
            let local = Vec3::new(rng.random_range(-half..half), rng.random_range(-half..half), 0.0);
            layout.frame.apply(&local)
        };
        let prim = settle(id, shape, orient, xy);
        if !xy_clear(&prim, &objects)
            || !clear_of_faces(&prim, &layout.faces)
            || overlaps_any(&prim, &layout.structures, OVERLAP_PITCH)
        {
            rejections += 1;
            continue;
        }
        objects.push(prim);
    }

    let target_id = if challenging {
        first_object_id
    } else {
        first_object_id + rng.random_range(0..config.n_objects) as u32
    };
    Ok(SceneDescription {
        structures: layout.structures,
        objects,
        target_id,
        rng_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: StructureKind, arrangement: Arrangement) -> SceneGenConfig {
        SceneGenConfig {
            structure_kind: kind,
            arrangement,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let c = cfg(StructureKind::SmallBin, Arrangement::Standard);
        assert_eq!(generate_scene(&c, 11).unwrap(), generate_scene(&c, 11).unwrap());
        assert_ne!(generate_scene(&c, 11).unwrap(), generate_scene(&c, 12).unwrap());
    }

    #[test]
    fn panel_counts() {
        for (kind, n) in [
            (StructureKind::Wall, 1),
            (StructureKind::SmallBin, 4),
            (StructureKind::LargeBin, 4),
            (StructureKind::TableTop, 0),
        ] {
            let s = generate_scene(&cfg(kind, Arrangement::Standard), 5).unwrap();
            assert_eq!(s.panels().count(), n, "{kind:?}");
            assert_eq!(s.structures[0].id, FLOOR_ID);
            s.validate().unwrap();
        }
    }

    #[test]
    fn objects_rest_on_floor_without_overlap() {
        for seed in 0..10 {
            let s = generate_scene(&cfg(StructureKind::SmallBin, Arrangement::Challenging), seed)
                .unwrap();
            for o in &s.objects {
                let bottom = o.center().z - o.support(&-Vec3::z());
                assert!(bottom.abs() < 1e-12);
                assert!(!overlaps_any(o, &s.structures, 0.005));
            }
        }
    }

    #[test]
    fn challenging_target_hugs_a_panel() {
        for seed in 0..20 {
            let s = generate_scene(&cfg(StructureKind::SmallBin, Arrangement::Challenging), seed)
                .unwrap();
            let panels: Vec<Primitive> = s.panels().cloned().collect();
            let d = surface_distance(s.target(), &panels);
            assert!(d <= 0.03, "seed {seed}: {d}");
            assert!(d > 0.0, "seed {seed}: {d}");
        }
    }

    #[test]
    fn crowded_config_fails_cleanly() {
        let c = SceneGenConfig {
            n_objects: 200,
            ..cfg(StructureKind::SmallBin, Arrangement::Standard)
        };
        assert!(matches!(generate_scene(&c, 1), Err(SceneError::Generation(_))));
    }

    #[test]
    fn json_round_trip() {
        let c = SceneGenConfig {
            object_set: ObjectSet::Novel,
            ..cfg(StructureKind::LargeBin, Arrangement::Standard)
        };
        let s = generate_scene(&c, 3).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: SceneDescription = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
