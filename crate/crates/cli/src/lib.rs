//! The `carp` command line: scene and dataset generation, training, evaluation
//! and single-scene planning.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use carp_core::geometry::{CameraIntrinsics, RigidTransform};
use carp_core::grasp::candidates_to_json_lines;
use carp_core::mix_seed;
use carp_core::nn::{history_csv, read_model, train, write_model, ModelKind};
use carp_core::oracle::{generate_dataset, read_dataset, write_dataset, SampleKind};
use carp_core::pipeline::{
    evaluate_method, plan_grasp, render_query, summary_csv_row, trials_csv_rows, Method,
    Observation, Predictors, SUMMARY_HEADER, TRIALS_HEADER,
};
use carp_core::recognition::QueryObservation;
use carp_core::scene::{
    generate_scene, read_depth, read_mask, render_with_noise, write_depth, write_mask,
    Arrangement, SceneDescription, StructureKind,
};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "carp", version, about = "Collision-aware target-driven grasp planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Master seed; every output records it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to all cores). Outputs do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory; nothing is written elsewhere.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// TOML run configuration; unspecified keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DataKind {
    Collision,
    Stability,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NetKind {
    Carp,
    Gsp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Ours,
    Rand,
    GspOnly,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ArrangementArg {
    Standard,
    Challenging,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StructureArg {
    Wall,
    LargeBin,
    SmallBin,
    TableTop,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate scenes with their renders and target queries.
    GenScenes {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, value_enum)]
        arrangement: Option<ArrangementArg>,
        #[arg(long, value_enum)]
        structure: Option<StructureArg>,
    },
    /// Generate a labeled CARPDS1 dataset.
    GenDataset {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: DataKind,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train a predictor on a dataset file.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: NetKind,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Run seeded trials and write per-trial and summary CSVs.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long, value_enum)]
        arrangement: Option<ArrangementArg>,
        #[arg(long, value_enum)]
        structure: Option<StructureArg>,
        #[arg(long)]
        trials: Option<usize>,
        /// CARPW1 weights (not needed for `rand`).
        #[arg(long)]
        carp: Option<PathBuf>,
        #[arg(long)]
        gsp: Option<PathBuf>,
    },
    /// Plan one grasp for a scene file and a query file.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        carp: Option<PathBuf>,
        #[arg(long)]
        gsp: Option<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenScenes { common, .. }
            | Command::GenDataset { common, .. }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Plan { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::GenScenes { .. } => "gen-scenes",
            Command::GenDataset { .. } => "gen-dataset",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Plan { .. } => "plan",
        }
    }
}

/// Configuration problems exit with 2, module failures with 1.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Module(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Module(e)
    }
}

fn method_of(m: MethodArg) -> Method {
    match m {
        MethodArg::Ours => Method::Ours,
        MethodArg::Rand => Method::Rand,
        MethodArg::GspOnly => Method::GspOnly,
    }
}

fn arrangement_of(a: ArrangementArg) -> Arrangement {
    match a {
        ArrangementArg::Standard => Arrangement::Standard,
        ArrangementArg::Challenging => Arrangement::Challenging,
    }
}

fn structure_of(s: StructureArg) -> StructureKind {
    match s {
        StructureArg::Wall => StructureKind::Wall,
        StructureArg::LargeBin => StructureKind::LargeBin,
        StructureArg::SmallBin => StructureKind::SmallBin,
        StructureArg::TableTop => StructureKind::TableTop,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("carp: usage error: {m}");
            2
        }
        Err(Failure::Module(e)) => {
            eprintln!("carp: error: {e:#}");
            1
        }
    }
}

/// Loads the config file and applies command-line overrides.
fn effective_config(cmd: &Command) -> Result<RunConfig, Failure> {
    let mut cfg = match &cmd.common().config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_toml(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    match cmd {
        Command::GenScenes {
            arrangement,
            structure,
            ..
        } => {
            if let Some(a) = arrangement {
                cfg.scene.arrangement = arrangement_of(*a);
            }
            if let Some(s) = structure {
                cfg.scene.structure_kind = structure_of(*s);
            }
        }
        Command::GenDataset { n, .. } => {
            if let Some(n) = n {
                cfg.dataset.n_samples = *n;
            }
        }
        Command::Train {
            epochs,
            learning_rate,
            ..
        } => {
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            if let Some(lr) = learning_rate {
                cfg.train.learning_rate = *lr;
            }
        }
        Command::Eval {
            method,
            arrangement,
            structure,
            trials,
            ..
        } => {
            if let Some(m) = method {
                cfg.eval.method = method_of(*m);
            }
            if let Some(a) = arrangement {
                cfg.scene.arrangement = arrangement_of(*a);
            }
            if let Some(s) = structure {
                cfg.scene.structure_kind = structure_of(*s);
            }
            if let Some(t) = trials {
                cfg.eval.trials = *t;
            }
        }
        Command::Plan { method, .. } => {
            if let Some(m) = method {
                cfg.eval.method = method_of(*m);
            }
        }
    }
    cfg.validate().map_err(Failure::Usage)?;
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<(), Failure> {
    let cfg = effective_config(&cmd)?;
    let common = cmd.common().clone();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(Failure::Usage("--workers must be >= 1".into()));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| Failure::Module(anyhow!("thread pool: {e}")))?;
    let out = Output::create(&common.out, &cfg, common.seed, cmd.name())?;
    out.write_text(
        "effective_config.toml",
        &format!(
            "# config_hash = \"{}\"\n# seed = {}\n{}",
            out.hash,
            out.seed,
            cfg.to_toml()
        ),
    )?;
    pool.install(|| match &cmd {
        Command::GenScenes { n, .. } => gen_scenes(&cfg, &out, *n),
        Command::GenDataset { kind, .. } => gen_dataset(&cfg, &out, *kind),
        Command::Train { kind, dataset, .. } => train_cmd(&cfg, &out, *kind, dataset),
        Command::Eval { carp, gsp, .. } => eval_cmd(&cfg, &out, carp.as_deref(), gsp.as_deref()),
        Command::Plan {
            scene,
            query,
            carp,
            gsp,
            ..
        } => plan_cmd(&cfg, &out, scene, query, carp.as_deref(), gsp.as_deref()),
    })?;
    Ok(())
}

/// Writes files under one directory, tagging each with the config hash and
/// seed.
struct Output {
    dir: PathBuf,
    hash: String,
    seed: u64,
    command: &'static str,
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    file: &'a str,
    config_hash: &'a str,
    seed: u64,
    sha256: String,
    bytes: usize,
}

impl Output {
    fn create(dir: &Path, cfg: &RunConfig, seed: u64, command: &'static str) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: cfg.hash(),
            seed,
            command,
        })
    }

    fn write_text(&self, name: &str, text: &str) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    /// Binary payload plus a `<name>.meta.json` sidecar.
    fn write_binary(&self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        let meta = Meta {
            command: self.command,
            file: name,
            config_hash: &self.hash,
            seed: self.seed,
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        };
        self.write_text(
            &format!("{name}.meta.json"),
            &(serde_json::to_string_pretty(&meta)? + "\n"),
        )
    }

    /// `value` must serialize to a JSON object; the hash and seed are added.
    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut v = serde_json::to_value(value)?;
        let obj = v
            .as_object_mut()
            .ok_or_else(|| anyhow!("{name} is not a JSON object"))?;
        obj.insert("config_hash".into(), self.hash.clone().into());
        obj.insert("seed".into(), self.seed.into());
        self.write_text(name, &(serde_json::to_string_pretty(&v)? + "\n"))
    }
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    scene_seed: u64,
    scene: SceneDescription,
}

/// A query view stored as image files next to this record.
#[derive(Serialize, Deserialize)]
struct QueryFile {
    intrinsics: CameraIntrinsics,
    camera_pose: RigidTransform,
    depth: String,
    mask: String,
}

fn gen_scenes(cfg: &RunConfig, out: &Output, n: usize) -> anyhow::Result<()> {
    let sc = &cfg.scene;
    let results: Vec<(u64, Result<SceneDescription, String>)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let s = mix_seed(out.seed, i);
            (s, generate_scene(sc, s).map_err(|e| e.to_string()))
        })
        .collect();
    let mut index = String::from("index,scene_seed,status,config_hash,run_seed\n");
    for (i, (scene_seed, r)) in results.iter().enumerate() {
        let status = match r {
            Ok(scene) => {
                let (depth, mask) = render_with_noise(
                    scene,
                    &sc.intrinsics,
                    &sc.camera_pose,
                    sc.depth_noise_std,
                    mix_seed(*scene_seed, 1),
                );
                let q = render_query(scene, &sc.intrinsics, &sc.camera_pose, mix_seed(*scene_seed, 2));
                out.write_json(
                    &format!("scene_{i:04}.json"),
                    &SceneFile {
                        scene_seed: *scene_seed,
                        scene: scene.clone(),
                    },
                )?;
                out.write_binary(&format!("scene_{i:04}.dpt"), &write_depth(&depth))?;
                out.write_binary(&format!("scene_{i:04}.msk"), &write_mask(&mask))?;
                out.write_binary(&format!("query_{i:04}.dpt"), &write_depth(&q.depth))?;
                out.write_binary(&format!("query_{i:04}.msk"), &write_mask(&q.mask))?;
                out.write_json(
                    &format!("query_{i:04}.json"),
                    &QueryFile {
                        intrinsics: q.intrinsics,
                        camera_pose: q.camera_pose,
                        depth: format!("query_{i:04}.dpt"),
                        mask: format!("query_{i:04}.msk"),
                    },
                )?;
                "ok".to_string()
            }
            Err(e) => {
                eprintln!("carp: scene {i} (seed {scene_seed}) skipped: {e}");
                format!("skipped: {}", e.replace(',', ";"))
            }
        };
        index.push_str(&format!("{i},{scene_seed},{status},{},{}\n", out.hash, out.seed));
    }
    out.write_text("scenes.csv", &index)
}

fn sample_kind(kind: DataKind) -> SampleKind {
    match kind {
        DataKind::Collision => SampleKind::Collision,
        DataKind::Stability => SampleKind::Stability,
    }
}

fn gen_dataset(cfg: &RunConfig, out: &Output, kind: DataKind) -> anyhow::Result<()> {
    let kind = sample_kind(kind);
    let samples = generate_dataset(&cfg.labeling(), &cfg.dataset, kind, out.seed)?;
    let name = match kind {
        SampleKind::Collision => "collision.carpds",
        SampleKind::Stability => "stability.carpds",
    };
    out.write_binary(name, &write_dataset(&samples))
}

fn train_cmd(cfg: &RunConfig, out: &Output, kind: NetKind, dataset: &Path) -> anyhow::Result<()> {
    let (model_kind, sample_kind) = match kind {
        NetKind::Carp => (ModelKind::Carp, SampleKind::Collision),
        NetKind::Gsp => (ModelKind::Gsp, SampleKind::Stability),
    };
    let bytes = fs::read(dataset).with_context(|| format!("reading {}", dataset.display()))?;
    let samples = read_dataset(&bytes, sample_kind)
        .with_context(|| format!("parsing {}", dataset.display()))?;
    // The file does not record its kind; the grid spec tells the two apart.
    let expected = match model_kind {
        ModelKind::Carp => cfg.features.carp_grid,
        ModelKind::Gsp => cfg.features.gsp_grid,
    };
    if let Some(s) = samples.iter().find(|s| s.grid.spec() != expected) {
        bail!(
            "{}: grids have spec {:?}, the {} input needs {:?}",
            dataset.display(),
            s.grid.spec(),
            model_kind.name(),
            expected
        );
    }
    let data: Vec<_> = samples.iter().map(|s| (&s.grid, s.label)).collect();
    let mut model = cfg.new_model(model_kind, mix_seed(out.seed, 1))?;
    let history = train(&mut model, &data, &cfg.train, out.seed)?;
    out.write_binary(&format!("{}.carpw", model_kind.name()), &write_model(&model))?;
    let mut csv = String::new();
    for (i, line) in history_csv(&history).lines().enumerate() {
        let extra = if i == 0 {
            "config_hash,run_seed".to_string()
        } else {
            format!("{},{}", out.hash, out.seed)
        };
        csv.push_str(&format!("{line},{extra}\n"));
    }
    out.write_text(&format!("{}_history.csv", model_kind.name()), &csv)
}

fn load_predictors(
    cfg: &RunConfig,
    method: Method,
    carp: Option<&Path>,
    gsp: Option<&Path>,
) -> anyhow::Result<Option<Predictors>> {
    let load = |p: &Path| -> anyhow::Result<_> {
        let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        read_model(&bytes).with_context(|| format!("parsing {}", p.display()))
    };
    match (carp, gsp) {
        (Some(c), Some(g)) => {
            let p = Predictors::new(load(c)?, load(g)?)?;
            for (m, kind) in [(&p.carp, ModelKind::Carp), (&p.gsp, ModelKind::Gsp)] {
                if m.input_shape() != cfg.input_shape(kind) {
                    bail!(
                        "{} weights expect input {:?}, the config gives {:?}",
                        kind.name(),
                        m.input_shape(),
                        cfg.input_shape(kind)
                    );
                }
            }
            Ok(Some(p))
        }
        (None, None) if method == Method::Rand => Ok(None),
        _ => bail!(
            "method {} needs both --carp and --gsp weight files",
            method.name()
        ),
    }
}

fn with_run_columns(header: &str, rows: &str, out: &Output) -> String {
    let mut s = format!("{header},config_hash,run_seed\n");
    for line in rows.lines() {
        s.push_str(&format!("{line},{},{}\n", out.hash, out.seed));
    }
    s
}

fn eval_cmd(cfg: &RunConfig, out: &Output, carp: Option<&Path>, gsp: Option<&Path>) -> anyhow::Result<()> {
    let method = cfg.eval.method;
    let predictors = load_predictors(cfg, method, carp, gsp)?;
    let report = evaluate_method(
        method,
        &cfg.scene,
        predictors.as_ref(),
        &cfg.plan(),
        &cfg.oracle,
        cfg.eval.trials,
        out.seed,
    );
    if report.skipped > 0 {
        eprintln!("carp: {} of {} trials skipped", report.skipped, report.n_trials);
    }
    out.write_text(
        "trials.csv",
        &with_run_columns(TRIALS_HEADER, &trials_csv_rows(&report), out),
    )?;
    out.write_text(
        "summary.csv",
        &with_run_columns(SUMMARY_HEADER, &summary_csv_row(&report), out),
    )
}

fn read_query(path: &Path) -> anyhow::Result<QueryObservation> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let q: QueryFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let depth = read_depth(&fs::read(dir.join(&q.depth)).with_context(|| format!("reading {}", q.depth))?)?;
    let mask = read_mask(&fs::read(dir.join(&q.mask)).with_context(|| format!("reading {}", q.mask))?)?;
    Ok(QueryObservation {
        depth,
        mask,
        intrinsics: q.intrinsics,
        camera_pose: q.camera_pose,
    })
}

fn plan_cmd(
    cfg: &RunConfig,
    out: &Output,
    scene_path: &Path,
    query_path: &Path,
    carp: Option<&Path>,
    gsp: Option<&Path>,
) -> anyhow::Result<()> {
    let method = cfg.eval.method;
    let text = fs::read_to_string(scene_path)
        .with_context(|| format!("reading {}", scene_path.display()))?;
    let file: SceneFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", scene_path.display()))?;
    file.scene.validate()?;
    let query = read_query(query_path)?;
    let predictors = load_predictors(cfg, method, carp, gsp)?;
    let sc = &cfg.scene;
    let (depth, mask) = render_with_noise(
        &file.scene,
        &sc.intrinsics,
        &sc.camera_pose,
        sc.depth_noise_std,
        mix_seed(file.scene_seed, 1),
    );
    let obs = Observation {
        depth,
        mask,
        intrinsics: sc.intrinsics,
        camera_pose: sc.camera_pose,
    };
    let plan = plan_grasp(
        &obs,
        &query,
        predictors.as_ref(),
        &cfg.plan(),
        method,
        mix_seed(out.seed, 3),
    )?;
    eprintln!(
        "carp: recognition {:?}, sampling {:?}, scoring {:?}",
        plan.timing.recognition, plan.timing.sampling, plan.timing.scoring
    );
    out.write_json("plan.json", &plan)?;
    out.write_text("candidates.jsonl", &candidates_to_json_lines(&plan.all_candidates))
}
