use carp_core::geometry::{orthonormal_drift, CloudRole, PointCloud, Vec3};
use carp_core::grasp::{sample_grasp_poses, GripperModel, SamplerConfig};
use proptest::prelude::*;

fn plate() -> PointCloud {
    let mut pts = Vec::new();
    for i in -12..=12 {
        for j in -12..=12 {
            pts.push(Vec3::new(i as f64 * 0.004, j as f64 * 0.004, 0.1));
        }
    }
    PointCloud::new(pts, CloudRole::Target)
}

fn sample(cloud: &PointCloud, n: usize, cone: f64, seed: u64) -> Vec<carp_core::grasp::GraspCandidate> {
    let cfg = SamplerConfig {
        n_candidates: n,
        cone_angle_deg: cone,
        ..Default::default()
    };
    sample_grasp_poses(cloud, &cfg, &GripperModel::default(), &Vec3::new(0.0, 0.0, 1.0), seed).unwrap()
}

#[test]
fn plate_approaches_are_near_vertical() {
    let cands = sample(&plate(), 10_000, 30.0, 3);
    let mean: Vec3 = cands.iter().map(|c| c.approach()).sum::<Vec3>() / cands.len() as f64;
    let angle = mean.normalize().dot(&-Vec3::z()).acos().to_degrees();
    assert!(angle < 35.0, "mean approach {angle} deg from vertical");
    // Every approach stays inside the cone about the downward normal.
    let cos_cone = 30f64.to_radians().cos() - 1e-9;
    assert!(cands.iter().all(|c| c.approach().dot(&-Vec3::z()) >= cos_cone));
}

#[test]
fn roll_covers_all_bins() {
    let cands = sample(&plate(), 10_000, 0.0, 5);
    let mut bins = [0usize; 8];
    for c in &cands {
        let x = c.closing_axis();
        let roll = x.y.atan2(x.x).rem_euclid(std::f64::consts::TAU);
        bins[((roll / std::f64::consts::TAU * 8.0) as usize).min(7)] += 1;
    }
    assert!(bins.iter().all(|&b| b >= 500), "{bins:?}");
}

#[test]
fn standoff_stays_within_half_a_finger() {
    let g = GripperModel::default();
    for c in sample(&plate(), 2000, 30.0, 8) {
        let s = (c.grasp_point - c.pose.translation()).dot(&c.approach());
        assert!((-1e-12..=0.5 * g.finger_length + 1e-12).contains(&s), "standoff {s}");
        let off_axis = (c.grasp_point - c.pose.translation() - c.approach() * s).norm();
        assert!(off_axis < 1e-12);
    }
}

#[test]
fn mostly_degenerate_cloud_still_samples() {
    // A plate plus a long collinear tail: most draws fail normal estimation.
    let mut pts: Vec<Vec3> = plate().points.into_iter().filter(|p| p.x.abs() <= 0.02 && p.y.abs() <= 0.02).collect();
    assert_eq!(pts.len(), 121);
    pts.extend((0..600).map(|i| Vec3::new(1.0 + i as f64 * 0.05, 0.0, 0.0)));
    let cloud = PointCloud::new(pts, CloudRole::Target);
    let cands = sample(&cloud, 64, 30.0, 1);
    assert_eq!(cands.len(), 64);
    assert!(cands.iter().all(|c| c.grasp_point.x < 0.5));
}

fn cloud() -> impl Strategy<Value = PointCloud> {
    (
        prop::collection::vec((-0.05f64..0.05, -0.05f64..0.05), 20..80),
        -0.5f64..0.5,
        0.0f64..0.02,
    )
        .prop_map(|(xy, h, bump)| {
            let pts = xy
                .into_iter()
                .map(|(x, y)| Vec3::new(x, y, h + bump * (x * 60.0).sin()))
                .collect();
            PointCloud::new(pts, CloudRole::Target)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn candidates_are_valid_and_reproducible(c in cloud(), seed in any::<u64>(), n in 1usize..100) {
        let cfg = SamplerConfig { n_candidates: n, normal_radius: 0.03, ..Default::default() };
        let g = GripperModel::default();
        let a = sample_grasp_poses(&c, &cfg, &g, &Vec3::new(0.0, 0.0, 2.0), seed).unwrap();
        let b = sample_grasp_poses(&c, &cfg, &g, &Vec3::new(0.0, 0.0, 2.0), seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), n);
        for cand in &a {
            prop_assert!(c.points.contains(&cand.grasp_point));
            prop_assert!(orthonormal_drift(cand.pose.rotation()) < 1e-9);
            prop_assert!(cand.p_c.is_none() && cand.p_g.is_none() && cand.p_f.is_none());
        }
    }
}
