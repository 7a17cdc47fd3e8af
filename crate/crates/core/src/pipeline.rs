//! Single-shot grasp planning over learned feasibility scores, and the
//! evaluation harness that scores chosen grasps with the oracles.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{carp_grid, gsp_grid, FeatureConfig};
use crate::geometry::{
    back_project, CameraIntrinsics, DepthImage, GeometryError, MaskImage, RigidTransform,
};
use crate::grasp::{sample_grasp_poses, GraspCandidate, GraspError, GripperModel, SamplerConfig};
use crate::mix_seed;
use crate::nn::{Model, ModelKind, NnError};
use crate::oracle::{simulate_grasp_outcome, OracleConfig, Outcome};
use crate::recognition::{recognize_target, split_scene, QueryObservation, RecognitionError};
use crate::scene::{
    generate_scene, render_depth, render_with_noise, Arrangement, SceneDescription,
    SceneGenConfig, StructureKind,
};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("recognition stage: {0}")]
    Recognition(#[from] RecognitionError),
    #[error("sampling stage: {0}")]
    Sampling(#[from] GraspError),
    #[error("scoring stage: {0}")]
    Scoring(#[from] NnError),
    #[error("back-projection stage: {0}")]
    Geometry(#[from] GeometryError),
    #[error("selection stage: no candidate has p_c >= {0}")]
    NoFeasible(f64),
    #[error("invalid planner setup: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Argmax of `p_c · p_g`.
    Ours,
    /// Uniform choice among the sampled candidates.
    Rand,
    /// Argmax of `p_g` alone.
    GspOnly,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Rand => "rand",
            Method::GspOnly => "gsp-only",
        }
    }
}

/// The two trained predictors.
#[derive(Debug, Clone)]
pub struct Predictors {
    pub carp: Model,
    pub gsp: Model,
}

impl Predictors {
    pub fn new(carp: Model, gsp: Model) -> Result<Self, PlanError> {
        if carp.kind != ModelKind::Carp || gsp.kind != ModelKind::Gsp {
            return Err(PlanError::Setup(
                "expected a CARP model and a GSP model".into(),
            ));
        }
        Ok(Self { carp, gsp })
    }

    fn check(&self, features: &FeatureConfig) -> Result<(), PlanError> {
        for (m, spec) in [
            (&self.carp, features.carp_grid),
            (&self.gsp, features.gsp_grid),
        ] {
            let [dx, dy, dz] = spec.dims;
            if m.input_shape() != [1, dz, dy, dx] {
                return Err(PlanError::Setup(format!(
                    "{} model expects input {:?} but the grid is {:?}",
                    m.kind.name(),
                    m.input_shape(),
                    spec.dims
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    pub gripper: GripperModel,
    pub sampler: SamplerConfig,
    pub features: FeatureConfig,
    /// Candidates with `p_c` below this are dropped before selection.
    pub min_p_c: Option<f64>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            gripper: GripperModel::default(),
            sampler: SamplerConfig::default(),
            features: FeatureConfig::default(),
            min_p_c: None,
        }
    }
}

/// A depth view with its instance mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub depth: DepthImage,
    pub mask: MaskImage,
    pub intrinsics: CameraIntrinsics,
    pub camera_pose: RigidTransform,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTiming {
    pub recognition: Duration,
    pub sampling: Duration,
    pub scoring: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanResult {
    pub method: Method,
    pub target_id: i32,
    pub chosen_index: usize,
    pub chosen: GraspCandidate,
    pub all_candidates: Vec<GraspCandidate>,
    /// Wall-clock only; never serialized so outputs stay reproducible.
    #[serde(skip)]
    pub timing: StageTiming,
}

/// Index of the first maximum.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Recognize, split, sample, score and select.
///
/// `seed` drives the candidate sampler and, for [`Method::Rand`], the choice.
pub fn plan_grasp(
    scene: &Observation,
    query: &QueryObservation,
    predictors: Option<&Predictors>,
    cfg: &PlanConfig,
    method: Method,
    seed: u64,
) -> Result<PlanResult, PlanError> {
    let predictors = match (method, predictors) {
        (_, Some(p)) => {
            p.check(&cfg.features)?;
            Some(p)
        }
        (Method::Rand, None) => None,
        (m, None) => {
            return Err(PlanError::Setup(format!(
                "method {} needs trained CARP and GSP models",
                m.name()
            )))
        }
    };
    cfg.gripper.validate()?;
    let t0 = Instant::now();
    let scene_cloud = back_project(&scene.depth, &scene.intrinsics, &scene.camera_pose, None)?;
    let rec = recognize_target(
        &scene.depth,
        &scene.mask,
        &scene.intrinsics,
        &scene.camera_pose,
        query,
    )?;
    let (target, structure) = split_scene(
        &scene.depth,
        &scene.mask,
        rec.target_id,
        &scene.intrinsics,
        &scene.camera_pose,
    )?;
    let t1 = Instant::now();
    let candidates = sample_grasp_poses(
        &target,
        &cfg.sampler,
        &cfg.gripper,
        scene.camera_pose.translation(),
        mix_seed(seed, 0),
    )?;
    let t2 = Instant::now();

    let (scored, chosen_index) = match method {
        Method::Rand => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));
            let i = rng.random_range(0..candidates.len());
            (candidates, i)
        }
        Method::GspOnly => {
            let predictors = predictors.expect("checked above");
            let p_g = candidates
                .par_iter()
                .map(|c| predictors.gsp.predict_grid(&gsp_grid(&scene_cloud, c, &cfg.features)))
                .collect::<Result<Vec<f64>, NnError>>()?;
            let scored: Vec<GraspCandidate> = candidates
                .iter()
                .zip(&p_g)
                .map(|(c, &g)| GraspCandidate { p_g: Some(g), ..*c })
                .collect();
            let i = argmax_first(&p_g).expect("sampler returns candidates");
            (scored, i)
        }
        Method::Ours => {
            let predictors = predictors.expect("checked above");
            let scored = candidates
                .par_iter()
                .map(|c| {
                    let p_c = predictors.carp.predict_grid(&carp_grid(&structure, c, &cfg.features))?;
                    let p_g = predictors.gsp.predict_grid(&gsp_grid(&scene_cloud, c, &cfg.features))?;
                    Ok(c.with_scores(p_c, p_g))
                })
                .collect::<Result<Vec<GraspCandidate>, NnError>>()?;
            let p_f: Vec<f64> = scored
                .iter()
                .map(|c| match cfg.min_p_c {
                    Some(m) if c.p_c.unwrap() < m => f64::NEG_INFINITY,
                    _ => c.p_f.unwrap(),
                })
                .collect();
            let i = argmax_first(&p_f).expect("sampler returns candidates");
            if p_f[i] == f64::NEG_INFINITY {
                return Err(PlanError::NoFeasible(cfg.min_p_c.unwrap()));
            }
            (scored, i)
        }
    };
    let t3 = Instant::now();
    Ok(PlanResult {
        method,
        target_id: rec.target_id,
        chosen_index,
        chosen: scored[chosen_index],
        all_candidates: scored,
        timing: StageTiming {
            recognition: t1 - t0,
            sampling: t2 - t1,
            scoring: t3 - t2,
        },
    })
}

/// The target alone, seen from the scene camera orbited about the world z
/// axis by a seeded angle in [20°, 30°] (either direction).
pub fn render_query(
    scene: &SceneDescription,
    intrinsics: &CameraIntrinsics,
    camera_pose: &RigidTransform,
    seed: u64,
) -> QueryObservation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut angle = rng.random_range(20f64..=30.0).to_radians();
    if rng.random_bool(0.5) {
        angle = -angle;
    }
    let pose = RigidTransform::rot_z(angle).compose(camera_pose);
    let alone = SceneDescription {
        structures: Vec::new(),
        objects: vec![scene.target().clone()],
        target_id: scene.target_id,
        rng_seed: scene.rng_seed,
    };
    let (depth, mask) = render_depth(&alone, intrinsics, &pose);
    QueryObservation {
        depth,
        mask,
        intrinsics: *intrinsics,
        camera_pose: pose,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub scene_seed: u64,
    pub target_id: Option<u32>,
    pub recognized_id: Option<i32>,
    pub chosen_index: Option<usize>,
    pub p_c: Option<f64>,
    pub p_g: Option<f64>,
    pub p_f: Option<f64>,
    /// `None` for skipped trials.
    pub outcome: Option<Outcome>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub arrangement: Arrangement,
    pub structure_kind: StructureKind,
    pub n_trials: usize,
    pub skipped: usize,
    pub planning_rate: f64,
    pub grasping_rate: f64,
    pub trials: Vec<TrialRecord>,
}

impl EvalReport {
    /// Rates over the trials that produced an outcome.
    pub fn from_trials(
        method: Method,
        scene: &SceneGenConfig,
        trials: Vec<TrialRecord>,
    ) -> Self {
        let done: Vec<Outcome> = trials.iter().filter_map(|t| t.outcome).collect();
        let n = done.len();
        let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        Self {
            method,
            arrangement: scene.arrangement,
            structure_kind: scene.structure_kind,
            n_trials: trials.len(),
            skipped: trials.len() - n,
            planning_rate: rate(done.iter().filter(|o| **o != Outcome::PlanFail).count()),
            grasping_rate: rate(done.iter().filter(|o| **o == Outcome::Success).count()),
            trials,
        }
    }
}

/// Trials whose pipeline errors count as plan failures; scene-generation
/// failures are skipped and excluded from both rates.
pub fn evaluate_method(
    method: Method,
    scene_cfg: &SceneGenConfig,
    predictors: Option<&Predictors>,
    plan_cfg: &PlanConfig,
    oracle: &OracleConfig,
    n_trials: usize,
    seed: u64,
) -> EvalReport {
    let trials = (0..n_trials)
        .into_par_iter()
        .map(|i| run_trial(method, scene_cfg, predictors, plan_cfg, oracle, i, mix_seed(seed, i as u64)))
        .collect();
    EvalReport::from_trials(method, scene_cfg, trials)
}

fn run_trial(
    method: Method,
    scene_cfg: &SceneGenConfig,
    predictors: Option<&Predictors>,
    plan_cfg: &PlanConfig,
    oracle: &OracleConfig,
    trial: usize,
    scene_seed: u64,
) -> TrialRecord {
    let mut rec = TrialRecord {
        trial,
        scene_seed,
        target_id: None,
        recognized_id: None,
        chosen_index: None,
        p_c: None,
        p_g: None,
        p_f: None,
        outcome: None,
        note: String::new(),
    };
    let scene = match generate_scene(scene_cfg, scene_seed) {
        Ok(s) => s,
        Err(e) => {
            rec.note = format!("skipped: {e}");
            return rec;
        }
    };
    rec.target_id = Some(scene.target_id);
    let (depth, mask) = render_with_noise(
        &scene,
        &scene_cfg.intrinsics,
        &scene_cfg.camera_pose,
        scene_cfg.depth_noise_std,
        mix_seed(scene_seed, 1),
    );
    let obs = Observation {
        depth,
        mask,
        intrinsics: scene_cfg.intrinsics,
        camera_pose: scene_cfg.camera_pose,
    };
    let query = render_query(
        &scene,
        &scene_cfg.intrinsics,
        &scene_cfg.camera_pose,
        mix_seed(scene_seed, 2),
    );
    match plan_grasp(&obs, &query, predictors, plan_cfg, method, mix_seed(scene_seed, 3)) {
        Ok(plan) => {
            rec.recognized_id = Some(plan.target_id);
            rec.chosen_index = Some(plan.chosen_index);
            rec.p_c = plan.chosen.p_c;
            rec.p_g = plan.chosen.p_g;
            rec.p_f = plan.chosen.p_f;
            rec.outcome = Some(simulate_grasp_outcome(
                &scene,
                &plan_cfg.gripper,
                &plan.chosen,
                oracle,
            ));
        }
        Err(e) => {
            rec.outcome = Some(Outcome::PlanFail);
            rec.note = e.to_string();
        }
    }
    rec
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const TRIALS_HEADER: &str =
    "trial,seed,method,arrangement,structure,target_id,recognized_id,candidate,p_c,p_g,p_f,outcome,note";

/// One row per trial (no header).
pub fn trials_csv_rows(report: &EvalReport) -> String {
    let mut s = String::new();
    for t in &report.trials {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            t.trial,
            t.scene_seed,
            report.method.name(),
            report.arrangement.name(),
            report.structure_kind.name(),
            opt(t.target_id),
            opt(t.recognized_id),
            opt(t.chosen_index),
            opt(t.p_c),
            opt(t.p_g),
            opt(t.p_f),
            t.outcome.map(|o| o.name()).unwrap_or("skipped"),
            csv_field(&t.note),
        ));
    }
    s
}

pub const SUMMARY_HEADER: &str =
    "method,arrangement,structure,n_trials,skipped,planning_rate,grasping_rate";

pub fn summary_csv_row(report: &EvalReport) -> String {
    format!(
        "{},{},{},{},{},{},{}\n",
        report.method.name(),
        report.arrangement.name(),
        report.structure_kind.name(),
        report.n_trials,
        report.skipped,
        report.planning_rate,
        report.grasping_rate
    )
}
