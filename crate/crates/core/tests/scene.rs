use carp_core::geometry::{back_project, is_valid_depth, RigidTransform, Vec3};
use carp_core::scene::{
    generate_scene, overlaps_any, read_depth, read_mask, render_depth, render_with_noise,
    signed_distance, surface_distance, write_depth, write_mask, Arrangement, ObjectSet, Primitive,
    SceneDescription, SceneError, SceneGenConfig, Shape, StructureKind,
};
use carp_core::grasp::GripperModel;
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = StructureKind> {
    prop_oneof![
        Just(StructureKind::Wall),
        Just(StructureKind::LargeBin),
        Just(StructureKind::SmallBin),
    ]
}

fn config() -> impl Strategy<Value = SceneGenConfig> {
    (
        kind(),
        prop_oneof![Just(Arrangement::Standard), Just(Arrangement::Challenging)],
        prop_oneof![Just(ObjectSet::Training), Just(ObjectSet::Novel)],
    )
        .prop_map(|(structure_kind, arrangement, object_set)| SceneGenConfig {
            structure_kind,
            arrangement,
            object_set,
            ..Default::default()
        })
}

/// Distance from `p` to the surface of whatever the mask says was hit.
fn labeled_surface_distance(scene: &SceneDescription, label: i32, p: &Vec3) -> f64 {
    if label >= 0 {
        scene.object(label as u32).unwrap().signed_distance(p).abs()
    } else {
        scene
            .structures
            .iter()
            .map(|s| s.signed_distance(p).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rendered_pixels_lie_on_labeled_surfaces(cfg in config(), seed in 0u64..1_000_000, yaw in -0.6f64..0.6) {
        let scene = generate_scene(&cfg, seed).unwrap();
        let pose = RigidTransform::rot_z(yaw).compose(&cfg.camera_pose);
        let (d, m) = render_depth(&scene, &cfg.intrinsics, &pose);
        let cloud = back_project(&d, &cfg.intrinsics, &pose, None).unwrap();
        let labels: Vec<i32> = m
            .labels
            .iter()
            .zip(&d.depth)
            .filter(|(_, z)| is_valid_depth(**z))
            .map(|(l, _)| *l)
            .collect();
        prop_assert_eq!(labels.len(), cloud.len());
        prop_assert!(labels.iter().any(|&l| l == scene.target_id as i32));
        for (p, l) in cloud.points.iter().zip(labels) {
            let e = labeled_surface_distance(&scene, l, p);
            prop_assert!(e < 1e-4, "label {} off surface by {}", l, e);
        }
    }

    #[test]
    fn generated_scenes_are_valid(cfg in config(), seed in 0u64..1_000_000) {
        let scene = generate_scene(&cfg, seed).unwrap();
        scene.validate().unwrap();
        prop_assert_eq!(scene.objects.len(), cfg.n_objects);
        for (i, o) in scene.objects.iter().enumerate() {
            prop_assert!(!overlaps_any(o, &scene.structures, 0.005));
            let others: Vec<Primitive> = scene
                .objects
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| q.clone())
                .collect();
            prop_assert!(!overlaps_any(o, &others, 0.005));
        }
    }

    #[test]
    fn generation_and_rendering_are_deterministic(cfg in config(), seed in 0u64..1_000_000) {
        let a = generate_scene(&cfg, seed).unwrap();
        let b = generate_scene(&cfg, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let ra = render_with_noise(&a, &cfg.intrinsics, &cfg.camera_pose, 0.001, seed);
        let rb = render_with_noise(&b, &cfg.intrinsics, &cfg.camera_pose, 0.001, seed);
        prop_assert_eq!(write_depth(&ra.0), write_depth(&rb.0));
        prop_assert_eq!(write_mask(&ra.1), write_mask(&rb.1));
    }
}

#[test]
fn structure_panel_counts() {
    for seed in 0..5 {
        for (kind, n) in [
            (StructureKind::Wall, 1),
            (StructureKind::SmallBin, 4),
            (StructureKind::LargeBin, 4),
        ] {
            let cfg = SceneGenConfig {
                structure_kind: kind,
                ..Default::default()
            };
            let s = generate_scene(&cfg, seed).unwrap();
            assert_eq!(s.panels().count(), n);
            assert_eq!(s.structures.len(), n + 1);
        }
    }
}

#[test]
fn challenging_targets_sit_near_a_panel() {
    let limit = 1.5 * GripperModel::default().finger_width;
    for kind in [StructureKind::Wall, StructureKind::LargeBin, StructureKind::SmallBin] {
        let cfg = SceneGenConfig {
            structure_kind: kind,
            arrangement: Arrangement::Challenging,
            ..Default::default()
        };
        for seed in 100..130 {
            let s = generate_scene(&cfg, seed).unwrap();
            let panels: Vec<Primitive> = s.panels().cloned().collect();
            let d = surface_distance(s.target(), &panels);
            assert!(d <= limit, "{kind:?} seed {seed}: {d} > {limit}");
        }
    }
}

#[test]
fn images_round_trip_through_binary() {
    let cfg = SceneGenConfig::default();
    let s = generate_scene(&cfg, 2).unwrap();
    let (d, m) = render_depth(&s, &cfg.intrinsics, &cfg.camera_pose);
    let db = write_depth(&d);
    assert_eq!(&db[..4], b"DPT1");
    assert_eq!(db.len(), 16 + 8 * d.depth.len());
    let back = read_depth(&db).unwrap();
    assert_eq!(back.width, d.width);
    assert!(back.depth.iter().zip(&d.depth).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(read_mask(&write_mask(&m)).unwrap(), m);
    assert!(read_depth(&db[..20]).is_err());
    assert!(read_mask(&db).is_err());
}

#[test]
fn signed_distance_examples() {
    let sphere = Primitive::new(1, Shape::Sphere { radius: 1.0 }, RigidTransform::identity());
    let cube = Primitive::new(
        2,
        Shape::Box {
            half_extents: [1.0, 1.0, 1.0],
        },
        RigidTransform::identity(),
    );
    assert!((signed_distance(&[sphere.clone()], &Vec3::new(2.0, 0.0, 0.0)).unwrap() - 1.0).abs() < 1e-12);
    assert!((signed_distance(&[cube.clone()], &Vec3::zeros()).unwrap() + 1.0).abs() < 1e-12);
    assert!(matches!(signed_distance(&[], &Vec3::zeros()), Err(SceneError::EmptyPrimitiveList)));

    let cyl = Primitive::new(
        3,
        Shape::Cylinder {
            radius: 0.5,
            half_height: 0.2,
        },
        RigidTransform::rot_x(0.4).with_translation(Vec3::new(0.3, -0.1, 0.2)),
    );
    for prim in [&sphere, &cube, &cyl] {
        for p in prim.surface_samples(200) {
            assert!(prim.signed_distance(&p).abs() < 1e-9);
        }
    }
}
