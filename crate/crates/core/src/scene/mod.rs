//! Analytic scenes: primitive solids, constrained scene generation and
//! ray-cast depth rendering with ground-truth instance masks.

mod generate;
mod io;
mod render;
mod shape;

use thiserror::Error;

pub use generate::{
    default_camera_pose, default_intrinsics, generate_scene, overlaps_any, surface_distance,
    Arrangement, ObjectSet, SceneDescription, SceneGenConfig, StructureKind, FLOOR_ID,
};
pub use io::{
    read_depth, read_mask, write_depth, write_mask, DEPTH_MAGIC, MASK_MAGIC,
};
pub use render::{render_depth, render_with_noise};
pub use shape::{signed_distance, Part, Primitive, RayHit, Shape};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("signed distance over an empty primitive list")]
    EmptyPrimitiveList,
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("scene generation failed: {0}")]
    Generation(String),
    #[error(transparent)]
    Format(#[from] crate::FormatError),
}
