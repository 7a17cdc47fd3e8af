//! Brute-force ground truth: swept-volume collision labels, antipodal
//! stability labels, grasp outcomes and the labeled datasets built from them.

mod collision;
mod dataset;
mod outcome;
mod stability;

use serde::{Deserialize, Serialize};

pub use collision::{
    boxes_collide, collision_label, collision_label_brute, lattice, lattice_points, swept_boxes,
    FrameBox,
};
pub use dataset::{
    generate_dataset, read_dataset, replay_grid, write_dataset, DatasetConfig, DatasetError, LabelingSetup,
    LabeledSample, SampleKind, DATASET_MAGIC,
};
pub use outcome::{lift_blocked, simulate_grasp_outcome, Outcome};
pub use stability::{contact_depth, find_contacts, stability_label, Contacts};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Point-sampling pitch of swept volumes, meters.
    pub pitch: f64,
    pub friction_mu: f64,
    /// Contact rays sit this far past the grasp point along the approach.
    pub contact_offset: f64,
    pub lift_height: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            pitch: 0.005,
            friction_mu: 0.5,
            contact_offset: 0.02,
            lift_height: 0.15,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.pitch > 0.0 && self.pitch <= 0.05) {
            return Err(format!("oracle pitch {} out of (0, 0.05]", self.pitch));
        }
        if !(self.friction_mu > 0.0) || !(self.contact_offset >= 0.0) {
            return Err("friction_mu must be positive and contact_offset non-negative".into());
        }
        if !(self.lift_height >= 0.0) {
            return Err("lift_height must be >= 0".into());
        }
        Ok(())
    }
}
