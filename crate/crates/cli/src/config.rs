//! The run configuration: every tunable in one TOML document.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use carp_core::features::FeatureConfig;
use carp_core::grasp::{GripperModel, SamplerConfig};
use carp_core::nn::{default_architecture, LayerSpec, Model, ModelKind, TrainConfig};
use carp_core::oracle::{DatasetConfig, LabelingSetup, OracleConfig};
use carp_core::pipeline::{Method, PlanConfig};
use carp_core::scene::SceneGenConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    /// Layers of the collision predictor; the default family when absent.
    pub carp: Option<Vec<LayerSpec>>,
    pub gsp: Option<Vec<LayerSpec>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub method: Method,
    pub trials: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            method: Method::Ours,
            trials: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Candidates with a lower collision-free probability are never chosen.
    pub min_p_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scene: SceneGenConfig,
    pub gripper: GripperModel,
    pub sampler: SamplerConfig,
    pub oracle: OracleConfig,
    pub features: FeatureConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub architecture: ArchitectureConfig,
    pub planner: PlannerConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// sha256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.scene.validate().map_err(|e| format!("[scene] {e}"))?;
        self.gripper.validate().map_err(|e| format!("[gripper] {e}"))?;
        self.sampler.validate().map_err(|e| format!("[sampler] {e}"))?;
        self.oracle.validate().map_err(|e| format!("[oracle] {e}"))?;
        self.features.validate().map_err(|e| format!("[features] {e}"))?;
        self.train.validate().map_err(|e| format!("[train] {e}"))?;
        let d = &self.dataset;
        if d.n_samples == 0
            || d.candidates_per_target == 0
            || d.budget_factor == 0
            || !(0.5..=1.0).contains(&d.max_class_fraction)
        {
            return Err(format!("[dataset] invalid values {d:?}"));
        }
        if self.eval.trials == 0 {
            return Err("[eval] trials must be >= 1".into());
        }
        if let Some(m) = self.planner.min_p_c {
            if !(0.0..=1.0).contains(&m) {
                return Err(format!("[planner] min_p_c {m} outside [0, 1]"));
            }
        }
        for kind in [ModelKind::Carp, ModelKind::Gsp] {
            self.new_model(kind, 0)
                .map_err(|e| format!("[architecture] {}: {e}", kind.name()))?;
        }
        Ok(())
    }

    pub fn layers(&self, kind: ModelKind) -> Vec<LayerSpec> {
        let (custom, spec) = match kind {
            ModelKind::Carp => (&self.architecture.carp, self.features.carp_grid),
            ModelKind::Gsp => (&self.architecture.gsp, self.features.gsp_grid),
        };
        custom
            .clone()
            .unwrap_or_else(|| default_architecture(spec.dims))
    }

    pub fn input_shape(&self, kind: ModelKind) -> [usize; 4] {
        let spec = match kind {
            ModelKind::Carp => self.features.carp_grid,
            ModelKind::Gsp => self.features.gsp_grid,
        };
        let [dx, dy, dz] = spec.dims;
        [1, dz, dy, dx]
    }

    pub fn new_model(&self, kind: ModelKind, seed: u64) -> Result<Model, carp_core::nn::NnError> {
        Model::new(kind, self.input_shape(kind), self.layers(kind), seed)
    }

    pub fn labeling(&self) -> LabelingSetup {
        LabelingSetup {
            scene: self.scene.clone(),
            gripper: self.gripper,
            sampler: self.sampler,
            oracle: self.oracle,
            features: self.features,
        }
    }

    pub fn plan(&self) -> PlanConfig {
        PlanConfig {
            gripper: self.gripper,
            sampler: self.sampler,
            features: self.features,
            min_p_c: self.planner.min_p_c,
        }
    }
}
