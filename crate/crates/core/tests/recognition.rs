use carp_core::features::FeatureConfig;
use carp_core::geometry::{is_valid_depth, voxelize, MaskImage, RigidTransform, Vec3};
use carp_core::pipeline::render_query;
use carp_core::recognition::{describe, describe_points, recognize_target, split_scene, QueryObservation, RecognitionError};
use carp_core::scene::{
    generate_scene, render_depth, Primitive, SceneDescription, SceneGenConfig, Shape, FLOOR_ID,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn floor() -> Primitive {
    Primitive::new(
        FLOOR_ID,
        Shape::Box {
            half_extents: [1.5, 1.5, 0.01],
        },
        RigidTransform::from_translation(Vec3::new(0.0, 0.0, -0.01)),
    )
}

/// Box, sphere and upright cylinder resting on the floor, no structure panels.
fn trio(target_id: u32) -> SceneDescription {
    let at = |x: f64, y: f64, z: f64| RigidTransform::from_translation(Vec3::new(x, y, z));
    SceneDescription {
        structures: vec![floor()],
        objects: vec![
            Primitive::new(
                1,
                Shape::Box {
                    half_extents: [0.045, 0.025, 0.02],
                },
                RigidTransform::rot_z(0.3).compose(&at(-0.12, 0.02, 0.02)),
            ),
            Primitive::new(2, Shape::Sphere { radius: 0.03 }, at(0.0, -0.06, 0.03)),
            Primitive::new(
                3,
                Shape::Cylinder {
                    radius: 0.022,
                    half_height: 0.05,
                },
                at(0.12, 0.03, 0.05),
            ),
        ],
        target_id,
        rng_seed: 0,
    }
}

fn erase(query: &mut QueryObservation, fraction: f64, seed: u64) {
    let mut idx: Vec<usize> = (0..query.mask.labels.len())
        .filter(|&i| query.mask.labels[i] >= 0)
        .collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = (fraction * idx.len() as f64).round() as usize;
    for &i in &idx[..k] {
        query.mask.labels[i] = MaskImage::BACKGROUND;
    }
}

#[test]
fn trio_targets_are_recognized_from_novel_views() {
    let cfg = SceneGenConfig::default();
    for target in 1..=3 {
        let scene = trio(target);
        let (d, m) = render_depth(&scene, &cfg.intrinsics, &cfg.camera_pose);
        for seed in 0..4 {
            for erased in [0.0, 0.25] {
                let mut q = render_query(&scene, &cfg.intrinsics, &cfg.camera_pose, seed);
                assert!(q.camera_pose.max_abs_diff(&cfg.camera_pose) > 0.1);
                erase(&mut q, erased, seed);
                let r = recognize_target(&d, &m, &cfg.intrinsics, &cfg.camera_pose, &q).unwrap();
                assert_eq!(r.target_id, target as i32, "seed {seed} erased {erased}: {:?}", r.distances);

                // Independent distance table from per-instance descriptors.
                let qd = describe(&q.depth, &q.mask, None, &q.intrinsics, &q.camera_pose).unwrap();
                for &(id, dist) in &r.distances {
                    let di = describe(&d, &m, Some(id), &cfg.intrinsics, &cfg.camera_pose).unwrap();
                    assert!((di.l1(&qd) - dist).abs() < 1e-12);
                }
                let best = r.distances.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
                assert!(r.distances.iter().all(|&(id, x)| x > best || id == r.target_id));
            }
        }
    }
}

#[test]
fn self_match_is_exact() {
    let cfg = SceneGenConfig::default();
    for seed in 0..6 {
        let scene = generate_scene(&cfg, seed).unwrap();
        let (d, m) = render_depth(&scene, &cfg.intrinsics, &cfg.camera_pose);
        for id in m.instance_ids() {
            let mut mask = m.clone();
            for l in &mut mask.labels {
                if *l != id {
                    *l = MaskImage::BACKGROUND;
                }
            }
            let q = QueryObservation {
                depth: d.clone(),
                mask,
                intrinsics: cfg.intrinsics,
                camera_pose: cfg.camera_pose,
            };
            let r = recognize_target(&d, &m, &cfg.intrinsics, &cfg.camera_pose, &q).unwrap();
            let own = r.distances.iter().find(|x| x.0 == id).unwrap().1;
            assert!(own < 1e-6);
            let nearest = r.distances.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
            assert_eq!(nearest, own);
        }
    }
}

#[test]
fn split_partitions_valid_pixels() {
    let cfg = SceneGenConfig::default();
    for seed in 10..16 {
        let scene = generate_scene(&cfg, seed).unwrap();
        let (d, m) = render_depth(&scene, &cfg.intrinsics, &cfg.camera_pose);
        let total = d.depth.iter().filter(|&&z| is_valid_depth(z)).count();
        for id in m.instance_ids() {
            let (t, s) = split_scene(&d, &m, id, &cfg.intrinsics, &cfg.camera_pose).unwrap();
            assert_eq!(t.len() + s.len(), total);
            let target_pixels = m
                .labels
                .iter()
                .zip(&d.depth)
                .filter(|(l, z)| **l == id && is_valid_depth(**z))
                .count();
            assert_eq!(t.len(), target_pixels);
            assert!(t.points.iter().all(|p| !s.points.contains(p)));
        }
        assert!(matches!(
            split_scene(&d, &m, 99, &cfg.intrinsics, &cfg.camera_pose),
            Err(RecognitionError::AbsentInstance(99))
        ));
    }
}

#[test]
fn bare_floor_structure_is_only_ground() {
    let cfg = SceneGenConfig::default();
    let scene = SceneDescription {
        structures: vec![floor()],
        objects: vec![Primitive::new(1, Shape::Sphere { radius: 0.04 }, RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.04)))],
        target_id: 1,
        rng_seed: 0,
    };
    let (d, m) = render_depth(&scene, &cfg.intrinsics, &cfg.camera_pose);
    let (_, s) = split_scene(&d, &m, 1, &cfg.intrinsics, &cfg.camera_pose).unwrap();
    assert!(!s.is_empty());
    assert!(s.points.iter().all(|p| p.z.abs() < 1e-9));

    // A grid one meter above the scene sees at most the far edge of the floor.
    let far = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 1.0));
    let grid = voxelize(&s, &far, FeatureConfig::default().carp_grid);
    let inside = s.points.iter().filter(|p| (*p - far.translation()).amax() < 0.5).count();
    assert_eq!(grid.count_occupied(), 0);
    assert_eq!(inside, 0);
}

#[test]
fn empty_query_is_an_error() {
    let cfg = SceneGenConfig::default();
    let scene = trio(1);
    let (d, m) = render_depth(&scene, &cfg.intrinsics, &cfg.camera_pose);
    let mut q = render_query(&scene, &cfg.intrinsics, &cfg.camera_pose, 0);
    erase(&mut q, 1.0, 0);
    assert!(recognize_target(&d, &m, &cfg.intrinsics, &cfg.camera_pose, &q).is_err());
    let blank = MaskImage::filled(m.width, m.height, MaskImage::BACKGROUND);
    assert!(matches!(
        recognize_target(&d, &blank, &cfg.intrinsics, &cfg.camera_pose, &render_query(&scene, &cfg.intrinsics, &cfg.camera_pose, 0)),
        Err(RecognitionError::NoInstances)
    ));
}

fn points() -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec((-0.1f64..0.1, -0.1f64..0.1, -0.1f64..0.1), 1..200)
        .prop_map(|v| v.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect())
}

proptest! {
    #[test]
    fn descriptor_ignores_translation_and_scale(pts in points(), t in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), s in 0.2f64..5.0) {
        let d = describe_points(&pts).unwrap();
        prop_assert!((d.0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(d.0.iter().all(|v| (0.0..=1.0).contains(v)));
        let shift = Vec3::new(t.0, t.1, t.2);
        let moved: Vec<Vec3> = pts.iter().map(|p| p + shift).collect();
        let scaled: Vec<Vec3> = pts.iter().map(|p| p * s).collect();
        prop_assert!(describe_points(&moved).unwrap().l1(&d) < 1e-6);
        prop_assert!(describe_points(&scaled).unwrap().l1(&d) < 1e-6);
    }
}
