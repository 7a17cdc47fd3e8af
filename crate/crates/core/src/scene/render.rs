use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Primitive, SceneDescription};
use crate::geometry::{CameraIntrinsics, DepthImage, MaskImage, RigidTransform, Vec3};

struct Candidate<'a> {
    prim: &'a Primitive,
    center: Vec3,
    radius2: f64,
    label: i32,
}

/// Ray-casts every pixel against all primitives.
///
/// Depth is the z coordinate of the nearest hit in the camera frame (+inf on a
/// miss); the mask holds the id of the nearest object, or −1 for structures and
/// background.
pub fn render_depth(
    scene: &SceneDescription,
    intrinsics: &CameraIntrinsics,
    camera_pose: &RigidTransform,
) -> (DepthImage, MaskImage) {
    let (w, h) = (intrinsics.width, intrinsics.height);
    let mut depth = DepthImage::filled(w, h, f64::INFINITY);
    let mut mask = MaskImage::filled(w, h, MaskImage::BACKGROUND);
    let eye = *camera_pose.translation();
    let cands: Vec<Candidate> = scene
        .structures
        .iter()
        .map(|p| (p, MaskImage::BACKGROUND))
        .chain(scene.objects.iter().map(|p| (p, p.id as i32)))
        .map(|(prim, label)| Candidate {
            prim,
            center: prim.center(),
            radius2: prim.bounding_radius().powi(2),
            label,
        })
        .collect();

    for v in 0..h {
        for u in 0..w {
            let ray_cam = intrinsics.pixel_ray(u, v);
            let scale = ray_cam.norm();
            let dir = camera_pose.apply_vector(&(ray_cam / scale));
            let mut best = f64::INFINITY;
            let mut label = MaskImage::BACKGROUND;
            for c in &cands {
                // Bounding-sphere rejection.
                let oc = c.center - eye;
                let along = oc.dot(&dir);
                if oc.norm_squared() - along * along > c.radius2 {
                    continue;
                }
                if let Some(hit) = c.prim.ray_cast(&eye, &dir) {
                    if hit.t > 0.0 && hit.t < best {
                        best = hit.t;
                        label = c.label;
                    }
                }
            }
            let i = v * w + u;
            if best.is_finite() {
                depth.depth[i] = best / scale;
                mask.labels[i] = label;
            }
        }
    }
    (depth, mask)
}

/// [`render_depth`] followed by seeded Gaussian jitter on every finite depth.
pub fn render_with_noise(
    scene: &SceneDescription,
    intrinsics: &CameraIntrinsics,
    camera_pose: &RigidTransform,
    noise_std: f64,
    seed: u64,
) -> (DepthImage, MaskImage) {
    let (mut depth, mask) = render_depth(scene, intrinsics, camera_pose);
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).expect("finite positive std");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for d in depth.depth.iter_mut().filter(|d| d.is_finite()) {
            *d = (*d + normal.sample(&mut rng)).max(1e-6);
        }
    }
    (depth, mask)
}
