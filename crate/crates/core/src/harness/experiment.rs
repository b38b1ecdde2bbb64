//! Config-driven training runs that write a self-describing output directory:
//! `manifest.json`, `model.cbn`, `history.csv`, `spectrum.csv`, `bounds.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{
    bounds_report, default_probes, layer_concentration, layer_spectrum_report, spectrum_csv, BoundsReport,
    LayerConcentration,
};
use crate::error::{Error, Result};
use crate::fourier::Grid;
use crate::harness::checkpoint::save_checkpoint;
use crate::harness::data::{
    gen_ball_trajectory, gen_bump_parity, gen_shape_pattern, gen_translated_bumps, Dataset,
};
use crate::harness::mnist::load_mnist_idx;
use crate::linalg::{PoolingKind, PoolingSpec};
use crate::network::{train, History, LossKind, NetworkParams, Optimizer, Targets, TrainConfig};
use crate::TAU_RANK;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[serde(rename = "autoencode_bumps_1d")]
    AutoencodeBumps1d,
    /// Bump-position parity classification; stands in for MNIST when the files are absent.
    BumpParity,
    MnistClassify,
    MnistZeroAutoencode,
    ShapePattern,
    BallTrajectory,
}

fn default_count() -> usize {
    32
}
fn default_init() -> f64 {
    1.0
}
fn default_optimizer() -> Optimizer {
    Optimizer::GdMomentum { mu: 0.9 }
}
fn default_width() -> usize {
    6
}
fn default_log_every() -> usize {
    100
}
fn default_mass() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Grid side.
    pub n: usize,
    /// Grid dimension; defaults to 2 for MNIST and shape tasks, 1 otherwise.
    #[serde(default)]
    pub dims: Option<usize>,
    #[serde(rename = "L")]
    pub depth: usize,
    /// Hidden width `c_1 = ... = c_{L-1}`.
    pub channels: usize,
    pub pooling: PoolingKind,
    pub lambda: f64,
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
    /// 1-based layers whose input is subsampled by 2.
    #[serde(default)]
    pub downsample_layers: Vec<usize>,
    #[serde(default = "default_optimizer")]
    pub optimizer: Optimizer,
    #[serde(default = "default_init")]
    pub init_scale: f64,
    #[serde(default = "default_count")]
    pub count: usize,
    /// Seed of the data generator; defaults to `seed`.
    #[serde(default)]
    pub data_seed: Option<u64>,
    #[serde(default = "default_width")]
    pub bump_width: usize,
    #[serde(default)]
    pub mnist_images: Option<PathBuf>,
    #[serde(default)]
    pub mnist_labels: Option<PathBuf>,
    /// Keep at most this many MNIST items (after filtering).
    #[serde(default)]
    pub mnist_limit: Option<usize>,
    #[serde(default)]
    pub shape_max_freq: usize,
    #[serde(default)]
    pub pattern_freq: [usize; 2],
    #[serde(default)]
    pub frames_in: Option<usize>,
    #[serde(default)]
    pub frames_out: Option<usize>,
    #[serde(default)]
    pub gravity: f64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    /// Spectral mass threshold for the concentration summary.
    #[serde(default = "default_mass")]
    pub mass: f64,
}

impl ExperimentConfig {
    /// Baseline config for a task; the caller overrides fields as needed.
    pub fn for_task(task: Task) -> Self {
        let (n, depth, channels, beta, lambda, lr, steps) = match task {
            Task::AutoencodeBumps1d => (16, 8, 16, 0.25, 1e-3, 0.005, 5000),
            Task::BumpParity => (16, 6, 16, 0.9, 1e-4, 0.02, 20000),
            Task::MnistClassify => (13, 6, 16, 0.5, 1e-4, 0.02, 2000),
            Task::MnistZeroAutoencode => (13, 8, 16, 0.5, 1e-3, 0.005, 2000),
            Task::ShapePattern => (12, 6, 8, 0.5, 1e-3, 0.005, 2000),
            Task::BallTrajectory => (32, 6, 16, 0.5, 1e-3, 0.005, 3000),
        };
        ExperimentConfig {
            task,
            n,
            dims: None,
            depth,
            channels,
            pooling: PoolingKind::BlendAvg3 { beta },
            lambda,
            lr,
            steps,
            seed: 0,
            downsample_layers: if matches!(task, Task::BumpParity | Task::MnistClassify) {
                vec![2, 4]
            } else {
                Vec::new()
            },
            optimizer: default_optimizer(),
            init_scale: 1.0,
            count: 32,
            data_seed: None,
            bump_width: if task == Task::BumpParity { 2 } else { 6 },
            mnist_images: None,
            mnist_labels: None,
            mnist_limit: Some(256),
            shape_max_freq: 1,
            pattern_freq: [3, 3],
            frames_in: Some(3),
            frames_out: Some(1),
            gravity: 1.0,
            log_every: 100,
            mass: 0.95,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims.unwrap_or(match self.task {
            Task::MnistClassify | Task::MnistZeroAutoencode | Task::ShapePattern => 2,
            _ => 1,
        })
    }

    pub fn loss(&self) -> LossKind {
        match self.task {
            Task::BumpParity | Task::MnistClassify => LossKind::SoftmaxXent,
            _ => LossKind::Mse,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            lr: self.lr,
            steps: self.steps,
            optimizer: self.optimizer,
            seed: self.seed,
            init_scale: self.init_scale,
            loss: self.loss(),
            log_every: self.log_every,
        }
    }

    /// Per-layer input strides.
    pub fn strides(&self) -> Vec<usize> {
        (1..=self.depth)
            .map(|l| if self.downsample_layers.contains(&l) { 2 } else { 1 })
            .collect()
    }

    /// Shape checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.channels == 0 || self.count == 0 {
            return Err(Error::arg("L, channels and count must be positive"));
        }
        let dims = self.dims();
        if dims != 1 && dims != 2 {
            return Err(Error::arg(format!("dims must be 1 or 2, got {dims}")));
        }
        if let Some(&l) = self.downsample_layers.iter().find(|&&l| l == 0 || l > self.depth) {
            return Err(Error::arg(format!("downsample layer {l} outside 1..={}", self.depth)));
        }
        let mut side = self.n;
        for s in self.strides() {
            side /= s;
            if side == 0 {
                return Err(Error::arg("downsampling shrinks the grid to nothing"));
            }
        }
        if !self.downsample_layers.is_empty() && self.loss() == LossKind::Mse {
            return Err(Error::arg("downsampling is only supported for classification tasks"));
        }
        if !(0.0..=1.0).contains(&self.mass) {
            return Err(Error::arg("mass must lie in [0, 1]"));
        }
        match self.task {
            Task::AutoencodeBumps1d | Task::BumpParity | Task::BallTrajectory if dims != 1 => {
                return Err(Error::arg("this task lives on a 1D ring"));
            }
            Task::AutoencodeBumps1d | Task::BumpParity if self.bump_width == 0 || self.bump_width >= self.n => {
                return Err(Error::arg(format!("bump_width must lie in 1..{}", self.n)));
            }
            Task::BumpParity if self.n % 2 != 0 => return Err(Error::arg("parity labels need an even ring")),
            Task::MnistClassify | Task::MnistZeroAutoencode => {
                if self.mnist_images.is_none() || self.mnist_labels.is_none() {
                    return Err(Error::arg("MNIST tasks need mnist_images and mnist_labels paths"));
                }
                if dims != 2 {
                    return Err(Error::arg("MNIST tasks live on a 2D grid"));
                }
            }
            Task::ShapePattern if self.pattern_freq.iter().take(dims).any(|&f| 2 * f > self.n) => {
                return Err(Error::arg("pattern frequency above Nyquist"));
            }
            Task::BallTrajectory if self.frames_in.unwrap_or(0) == 0 || self.frames_out.unwrap_or(0) == 0 => {
                return Err(Error::arg("ball_trajectory needs frames_in and frames_out >= 1"));
            }
            _ => {}
        }
        self.train_config().validate()
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let seed = self.data_seed.unwrap_or(self.seed);
        let grid = Grid::new(self.n, self.dims())?;
        match self.task {
            Task::AutoencodeBumps1d => gen_translated_bumps(self.count, self.n, self.bump_width, seed),
            Task::BumpParity => gen_bump_parity(self.count, self.n, self.bump_width, seed),
            Task::ShapePattern => gen_shape_pattern(self.count, grid, self.shape_max_freq, self.pattern_freq, seed),
            Task::BallTrajectory => gen_ball_trajectory(
                self.count,
                self.n,
                self.frames_in.unwrap_or(1),
                self.frames_out.unwrap_or(1),
                self.gravity,
                seed,
            ),
            Task::MnistClassify | Task::MnistZeroAutoencode => {
                let (ip, lp) = match (&self.mnist_images, &self.mnist_labels) {
                    (Some(i), Some(l)) => (i, l),
                    _ => return Err(Error::arg("MNIST paths missing")),
                };
                let digit = (self.task == Task::MnistZeroAutoencode).then_some(0);
                let mut d = load_mnist_idx(ip, lp, digit, Some(self.n))?;
                if let Some(limit) = self.mnist_limit {
                    d.inputs.truncate(limit);
                    if let Targets::Labels { labels, .. } = &mut d.targets {
                        labels.truncate(limit);
                    }
                }
                if self.task == Task::MnistZeroAutoencode {
                    let meta = d.meta.clone();
                    d = Dataset::autoencode(d.inputs, meta)?;
                }
                Ok(d)
            }
        }
    }

    pub fn widths(&self, data: &Dataset) -> Vec<usize> {
        let c_out = match &data.targets {
            Targets::Labels { classes, .. } => *classes,
            Targets::Signals(ys) => ys[0].channels(),
        };
        let mut w = vec![data.channels()];
        w.extend(std::iter::repeat_n(self.channels, self.depth.saturating_sub(1)));
        w.push(c_out);
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub data_seed: u64,
    pub dataset: serde_json::Value,
    /// How in-network downsampling is realized.
    pub downsampling: String,
    pub files: Vec<String>,
    pub final_objective: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub concentration: Vec<LayerConcentration>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub params: NetworkParams,
    pub history: History,
    pub bounds: BoundsReport,
    pub concentration: Vec<LayerConcentration>,
    pub manifest: Manifest,
    pub dir: PathBuf,
}

pub const FAILURE_MARKER: &str = "FAILED";

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(m)?)?;
    Ok(())
}

/// Fraction of samples whose pixel-averaged logits pick the right class.
pub fn train_accuracy(params: &NetworkParams, data: &Dataset) -> Result<Option<f64>> {
    let Targets::Labels { labels, .. } = &data.targets else {
        return Ok(None);
    };
    let outs = crate::network::evaluate_batch(params, &data.inputs)?;
    let hits = outs
        .iter()
        .zip(labels)
        .filter(|(y, &l)| {
            let m = y.channel_means();
            let best = (0..m.len()).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap_or(0);
            best == l
        })
        .count();
    Ok(Some(hits as f64 / labels.len() as f64))
}

/// Trains the configured network and writes all artifacts to `out`.
/// On a training failure the manifest records the error and a `FAILED`
/// marker file is written next to it.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<ExperimentOutcome> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    let data = config.dataset()?;
    let grid = Grid::new(config.n, config.dims())?;
    if data.grid() != grid {
        return Err(Error::dim(format!("dataset grid {:?} differs from config {:?}", data.grid(), grid)));
    }
    let pooling = PoolingSpec::new(config.pooling.clone(), grid)?;
    let init = NetworkParams::random_with_downsampling(
        pooling,
        &config.widths(&data),
        &config.strides(),
        config.init_scale,
        config.seed,
    )?;
    let mut manifest = Manifest {
        status: "running".into(),
        config: config.clone(),
        config_hash: config.hash()?,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        data_seed: config.data_seed.unwrap_or(config.seed),
        dataset: serde_json::to_value(&data.meta)?,
        downsampling: if config.downsample_layers.is_empty() {
            "none".into()
        } else {
            format!(
                "subsampling x -> x_(2i) (Fourier Down_2) applied to the input of layers {:?}; pooling on coarse layers is the low-frequency truncation",
                config.downsample_layers
            )
        },
        files: vec!["manifest.json".into()],
        final_objective: None,
        train_accuracy: None,
        concentration: Vec::new(),
        error: None,
    };
    write_manifest(out, &manifest)?;
    let _ = std::fs::remove_file(out.join(FAILURE_MARKER));

    let (params, history) = match train(&init, &data.inputs, &data.targets, &config.train_config()) {
        Ok(v) => v,
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(e.to_string());
            save_checkpoint(&out.join("init.cbn"), &init, Some(config.seed))?;
            manifest.files.push("init.cbn".into());
            write_manifest(out, &manifest)?;
            std::fs::write(out.join(FAILURE_MARKER), format!("{e}\n"))?;
            return Err(e);
        }
    };
    save_checkpoint(&out.join("model.cbn"), &params, Some(config.seed))?;
    std::fs::write(out.join("history.csv"), history.to_csv())?;
    std::fs::write(out.join("spectrum.csv"), spectrum_csv(&layer_spectrum_report(&params)?))?;
    let probes = default_probes(&data.inputs, &[0.25, 0.5, 1.0]);
    let bounds = bounds_report(&params, &probes, None, TAU_RANK)?;
    std::fs::write(out.join("bounds.json"), serde_json::to_string_pretty(&bounds)?)?;
    let concentration = layer_concentration(&params, config.mass)?;
    manifest.status = "ok".into();
    manifest.files.extend(["model.cbn", "history.csv", "spectrum.csv", "bounds.json"].map(String::from));
    manifest.final_objective = history.last().map(|r| r.objective);
    manifest.train_accuracy = train_accuracy(&params, &data)?;
    manifest.concentration = concentration.clone();
    write_manifest(out, &manifest)?;
    Ok(ExperimentOutcome {
        params,
        history,
        bounds,
        concentration,
        manifest,
        dir: out.to_path_buf(),
    })
}
