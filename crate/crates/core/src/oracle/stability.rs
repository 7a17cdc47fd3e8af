use crate::geometry::{RigidTransform, Vec3};
use crate::grasp::GripperModel;
use crate::scene::Primitive;

/// Where the two closing fingers touch the object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contacts {
    /// Contact of the finger on the +x side, then the −x side.
    pub points: [Vec3; 2],
    /// Outward object normals at the contacts.
    pub normals: [Vec3; 2],
}

/// Grasp-frame depth of the contact rays: `offset` past the grasp point along
/// the approach, capped at the fingertips.
pub fn contact_depth(gripper: &GripperModel, pose: &RigidTransform, grasp_point: &Vec3, offset: f64) -> f64 {
    (pose.inverse_apply(grasp_point).z + offset).min(gripper.finger_length)
}

/// Casts one ray per finger from its inner face toward the jaw center, at
/// grasp-frame depth `contact_depth`. Returns `None` unless both rays hit the
/// object within the jaw opening from outside it.
pub fn find_contacts(
    object: &Primitive,
    gripper: &GripperModel,
    pose: &RigidTransform,
    contact_depth: f64,
) -> Option<Contacts> {
    let half = gripper.jaw_opening / 2.0;
    let x = pose.axis(0);
    let mut points = [Vec3::zeros(); 2];
    let mut normals = [Vec3::zeros(); 2];
    for (i, side) in [1.0, -1.0].into_iter().enumerate() {
        let origin = pose.apply(&Vec3::new(side * half, 0.0, contact_depth));
        if object.signed_distance(&origin) <= 0.0 {
            return None;
        }
        let dir = x * -side;
        let hit = object.ray_cast(&origin, &dir)?;
        if hit.t > gripper.jaw_opening {
            return None;
        }
        points[i] = origin + dir * hit.t;
        normals[i] = hit.normal;
    }
    Some(Contacts { points, normals })
}

/// Antipodal stability label.
///
/// 1 when both finger rays find the object, each contact normal lies inside
/// the friction cone about the closing axis (angle ≤ atan μ), and the grasp
/// point is within one finger length of both contacts along the approach.
/// Rays are cast `contact_offset` past the grasp point.
pub fn stability_label(
    object: &Primitive,
    gripper: &GripperModel,
    pose: &RigidTransform,
    grasp_point: &Vec3,
    friction_mu: f64,
    contact_offset: f64,
) -> u8 {
    let depth = contact_depth(gripper, pose, grasp_point, contact_offset);
    let Some(c) = find_contacts(object, gripper, pose, depth) else {
        return 0;
    };
    let x = pose.axis(0);
    let z = pose.axis(2);
    let cos_cone = friction_mu.atan().cos();
    let in_cone = c.normals[0].dot(&x) >= cos_cone && c.normals[1].dot(&-x) >= cos_cone;
    let reach = c
        .points
        .iter()
        .all(|p| (p - grasp_point).dot(&z).abs() <= gripper.finger_length);
    u8::from(in_cone && reach)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grasp::grasp_frame;
    use crate::scene::Shape;

    #[test]
    fn face_centered_box_grasp_is_stable() {
        let g = GripperModel::default();
        let obj = Primitive::new(
            5,
            Shape::Box {
                half_extents: [0.025, 0.03, 0.03],
            },
            RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.03)),
        );
        let top = Vec3::new(0.0, 0.0, 0.06);
        let pose = grasp_frame(&-Vec3::z(), 0.0, top + Vec3::z() * 0.01);
        assert_eq!(stability_label(&obj, &g, &pose, &top, 0.5, 0.02), 1);
        let far = pose.with_translation(Vec3::new(0.5, 0.0, 0.07));
        let far_point = Vec3::new(0.5, 0.0, 0.06);
        assert_eq!(stability_label(&obj, &g, &far, &far_point, 0.5, 0.02), 0);
    }

    #[test]
    fn object_wider_than_jaw_is_unstable() {
        let g = GripperModel::default();
        let obj = Primitive::new(
            5,
            Shape::Box {
                half_extents: [0.06, 0.06, 0.03],
            },
            RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.03)),
        );
        let top = Vec3::new(0.0, 0.0, 0.06);
        let pose = grasp_frame(&-Vec3::z(), 0.3, top);
        assert_eq!(stability_label(&obj, &g, &pose, &top, 0.5, 0.02), 0);
    }
}
