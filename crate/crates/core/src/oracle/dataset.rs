use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{collision_label, stability_label, OracleConfig};
use crate::binio::Reader;
use crate::features::{carp_grid, gsp_grid, FeatureConfig};
use crate::geometry::{back_project, PointCloud, VoxelGrid};
use crate::grasp::{sample_grasp_poses, GraspCandidate, GripperModel, SamplerConfig};
use crate::mix_seed;
use crate::recognition::split_scene;
use crate::scene::{
    generate_scene, render_with_noise, Arrangement, SceneDescription, SceneGenConfig, StructureKind,
};
use crate::FormatError;

pub const DATASET_MAGIC: &[u8; 7] = b"CARPDS1";

/// Scenes labeled per parallel batch; fixed so output never depends on threads.
const SCENES_PER_BATCH: usize = 16;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error("class balance not reached after examining {examined} candidates ({positives} positive, {negatives} negative)")]
    Budget {
        examined: usize,
        positives: usize,
        negatives: usize,
    },
    #[error("sample replay failed: {0}")]
    Replay(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleKind {
    Collision,
    Stability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub grid: VoxelGrid,
    pub label: u8,
    pub kind: SampleKind,
    pub scene_seed: u64,
    pub candidate_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_samples: usize,
    /// Grasps sampled for each object serving as the target.
    pub candidates_per_target: usize,
    /// Upper bound on either class's share of the emitted samples.
    pub max_class_fraction: f64,
    /// Candidates examined before giving up, as a multiple of `n_samples`.
    pub budget_factor: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            candidates_per_target: 16,
            max_class_fraction: 0.5,
            budget_factor: 20,
        }
    }
}

/// Everything needed to turn a scene seed into labeled samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelingSetup {
    pub scene: SceneGenConfig,
    pub gripper: GripperModel,
    pub sampler: SamplerConfig,
    pub oracle: OracleConfig,
    pub features: FeatureConfig,
}

impl LabelingSetup {
    /// Scene config for one dataset scene: stability data uses bare table
    /// tops; collision data mixes structure kinds and arrangements.
    pub fn scene_config(&self, kind: SampleKind, scene_seed: u64) -> SceneGenConfig {
        let mut cfg = self.scene.clone();
        match kind {
            SampleKind::Stability => {
                cfg.structure_kind = StructureKind::TableTop;
                cfg.arrangement = Arrangement::Standard;
            }
            SampleKind::Collision => {
                let r = mix_seed(scene_seed, 0x5eed);
                cfg.structure_kind = [
                    StructureKind::Wall,
                    StructureKind::LargeBin,
                    StructureKind::SmallBin,
                ][(r % 3) as usize];
                cfg.arrangement = if (r >> 8) & 1 == 0 {
                    Arrangement::Standard
                } else {
                    Arrangement::Challenging
                };
            }
        }
        cfg
    }
}

/// Labeled candidates of one scene plus the clouds their grids come from.
struct SceneLabels {
    scene_seed: u64,
    /// `(candidate, label, cloud slot)` in candidate-index order.
    items: Vec<(GraspCandidate, u8, usize)>,
    clouds: Vec<PointCloud>,
}

fn label_scene(
    setup: &LabelingSetup,
    kind: SampleKind,
    per_target: usize,
    scene_seed: u64,
) -> Option<(SceneDescription, SceneLabels)> {
    let cfg = setup.scene_config(kind, scene_seed);
    let scene = generate_scene(&cfg, scene_seed).ok()?;
    let (depth, mask) = render_with_noise(
        &scene,
        &cfg.intrinsics,
        &cfg.camera_pose,
        cfg.depth_noise_std,
        mix_seed(scene_seed, 1),
    );
    let viewpoint = *cfg.camera_pose.translation();
    let scene_cloud = back_project(&depth, &cfg.intrinsics, &cfg.camera_pose, None).ok()?;
    let sampler = SamplerConfig {
        n_candidates: per_target,
        ..setup.sampler
    };
    let mut labels = SceneLabels {
        scene_seed,
        items: Vec::new(),
        clouds: Vec::new(),
    };
    if kind == SampleKind::Stability {
        labels.clouds.push(scene_cloud);
    }
    for (slot, obj) in scene.objects.iter().enumerate() {
        let Ok((target, structure)) =
            split_scene(&depth, &mask, obj.id as i32, &cfg.intrinsics, &cfg.camera_pose)
        else {
            continue;
        };
        let Ok(cands) = sample_grasp_poses(
            &target,
            &sampler,
            &setup.gripper,
            &viewpoint,
            mix_seed(scene_seed, 100 + slot as u64),
        ) else {
            continue;
        };
        let cloud_slot = match kind {
            SampleKind::Collision => {
                labels.clouds.push(structure);
                labels.clouds.len() - 1
            }
            SampleKind::Stability => 0,
        };
        for c in cands {
            let label = match kind {
                SampleKind::Collision => {
                    collision_label(&scene.structures, &setup.gripper, &c.pose, setup.oracle.pitch)
                }
                SampleKind::Stability => stability_label(
                    obj,
                    &setup.gripper,
                    &c.pose,
                    &c.grasp_point,
                    setup.oracle.friction_mu,
                    setup.oracle.contact_offset,
                ),
            };
            labels.items.push((c, label, cloud_slot));
        }
    }
    Some((scene, labels))
}

fn grid_for(
    setup: &LabelingSetup,
    kind: SampleKind,
    labels: &SceneLabels,
    index: usize,
) -> VoxelGrid {
    let (c, _, slot) = &labels.items[index];
    let cloud = &labels.clouds[*slot];
    match kind {
        SampleKind::Collision => carp_grid(cloud, c, &setup.features),
        SampleKind::Stability => gsp_grid(cloud, c, &setup.features),
    }
}

/// Emits exactly `cfg.n_samples` labeled grids.
///
/// Scenes are drawn from seeds `mix_seed(seed, i)` in order, labeled in
/// fixed-size parallel batches and merged in (scene, candidate) order. A
/// candidate is kept only while its class is below its quota, so neither class
/// exceeds `max_class_fraction`. The result is identical for any thread count.
pub fn generate_dataset(
    setup: &LabelingSetup,
    cfg: &DatasetConfig,
    kind: SampleKind,
    seed: u64,
) -> Result<Vec<LabeledSample>, DatasetError> {
    let n = cfg.n_samples;
    if n == 0 || cfg.candidates_per_target == 0 {
        return Err(DatasetError::InvalidConfig(
            "n_samples and candidates_per_target must be >= 1".into(),
        ));
    }
    if !(0.5..=1.0).contains(&cfg.max_class_fraction) {
        return Err(DatasetError::InvalidConfig(
            "max_class_fraction must lie in [0.5, 1]".into(),
        ));
    }
    let quota = ((cfg.max_class_fraction * n as f64).ceil() as usize).max(n.div_ceil(2));
    let budget = cfg.budget_factor * n;
    let mut counts = [0usize; 2];
    let mut examined = 0usize;
    let mut out = Vec::with_capacity(n);
    let mut next_scene = 0u64;

    while out.len() < n {
        let batch: Vec<u64> = (next_scene..next_scene + SCENES_PER_BATCH as u64).collect();
        next_scene += SCENES_PER_BATCH as u64;
        let labeled: Vec<Option<SceneLabels>> = batch
            .par_iter()
            .map(|&i| {
                label_scene(setup, kind, cfg.candidates_per_target, mix_seed(seed, i))
                    .map(|(_, l)| l)
            })
            .collect();

        let mut picks: Vec<(usize, usize)> = Vec::new();
        'scenes: for (si, labels) in labeled.iter().enumerate() {
            let Some(labels) = labels else { continue };
            for (ci, &(_, label, _)) in labels.items.iter().enumerate() {
                if out.len() + picks.len() == n {
                    break 'scenes;
                }
                if examined == budget {
                    return Err(DatasetError::Budget {
                        examined,
                        positives: counts[1],
                        negatives: counts[0],
                    });
                }
                examined += 1;
                if counts[label as usize] < quota {
                    counts[label as usize] += 1;
                    picks.push((si, ci));
                }
            }
        }
        let grids: Vec<LabeledSample> = picks
            .par_iter()
            .map(|&(si, ci)| {
                let labels = labeled[si].as_ref().expect("picked scenes were labeled");
                LabeledSample {
                    grid: grid_for(setup, kind, labels, ci),
                    label: labels.items[ci].1,
                    kind,
                    scene_seed: labels.scene_seed,
                    candidate_index: ci as u32,
                }
            })
            .collect();
        out.extend(grids);
    }
    Ok(out)
}

/// Rebuilds the grid of one sample from its provenance.
pub fn replay_grid(
    setup: &LabelingSetup,
    cfg: &DatasetConfig,
    kind: SampleKind,
    scene_seed: u64,
    candidate_index: u32,
) -> Result<(VoxelGrid, u8), DatasetError> {
    let (_, labels) = label_scene(setup, kind, cfg.candidates_per_target, scene_seed)
        .ok_or_else(|| DatasetError::Replay(format!("scene {scene_seed} failed to generate")))?;
    let i = candidate_index as usize;
    if i >= labels.items.len() {
        return Err(DatasetError::Replay(format!(
            "candidate {i} out of range for scene {scene_seed}"
        )));
    }
    Ok((grid_for(setup, kind, &labels, i), labels.items[i].1))
}

/// `CARPDS1`, u32 count, then `{VXG1 grid, label u8, scene_seed u64,
/// candidate_index u32}` records, all little-endian.
pub fn write_dataset(samples: &[LabeledSample]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    for s in samples {
        s.grid.write_to(&mut out);
        out.push(s.label);
        out.extend_from_slice(&s.scene_seed.to_le_bytes());
        out.extend_from_slice(&s.candidate_index.to_le_bytes());
    }
    out
}

/// Parses a dataset file; `kind` is not stored in the file.
pub fn read_dataset(bytes: &[u8], kind: SampleKind) -> Result<Vec<LabeledSample>, FormatError> {
    let mut r = Reader::new(bytes);
    r.expect_magic(DATASET_MAGIC)?;
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let grid = VoxelGrid::read_from(&mut r)?;
        let label = r.u8()?;
        if label > 1 {
            return Err(FormatError(format!("label byte {label} is not 0 or 1")));
        }
        out.push(LabeledSample {
            grid,
            label,
            kind,
            scene_seed: r.u64()?,
            candidate_index: r.u32()?,
        });
    }
    r.finish()?;
    Ok(out)
}
