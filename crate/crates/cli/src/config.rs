//! Effective run configuration: command-line flags over a TOML config file
//! over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dualband_core::channel::ArrayConfig;
use dualband_core::dataset::{DatasetKind, Labeling};
use dualband_core::experiment::NetworkConfig;
use dualband_core::mlp::TrainConfig;
use dualband_core::scene::{demo_blockage_scene, demo_los_scene, Scene};

pub const OUTPUT_ROOT_ENV: &str = "DUALBAND_OUTPUT_ROOT";
pub const CONFIG_ECHO: &str = "run-config.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Demo {
    Los,
    Blockage,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            other => bail!("unknown precision tag {other:?}"),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Self::F32 => "f32",
            Self::F64 => "f64",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub split: u64,
    pub noise: u64,
    pub init: u64,
    pub shuffle: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            split: 1,
            noise: 2,
            init: 3,
            shuffle: 0,
        }
    }
}

/// Training hyperparameters left unset fall back to the default for the
/// dataset kind (100 epochs for beams, 50 for blockage).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_drop_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_drop_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freeze_base: Option<bool>,
}

impl TrainOverrides {
    pub fn merge(&mut self, over: &TrainOverrides) {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(initial_lr, lr_drop_factor, lr_drop_epoch, momentum, l2, max_epochs, batch_size, freeze_base);
    }

    pub fn resolve(&self, kind: DatasetKind, shuffle_seed: u64) -> TrainConfig {
        let base = match kind {
            DatasetKind::Beam => TrainConfig::default(),
            DatasetKind::Blockage => TrainConfig::blockage_default(),
        };
        TrainConfig {
            initial_lr: self.initial_lr.unwrap_or(base.initial_lr),
            lr_drop_factor: self.lr_drop_factor.unwrap_or(base.lr_drop_factor),
            lr_drop_epoch: self.lr_drop_epoch.unwrap_or(base.lr_drop_epoch),
            momentum: self.momentum.unwrap_or(base.momentum),
            l2: self.l2.unwrap_or(base.l2),
            max_epochs: self.max_epochs.unwrap_or(base.max_epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            seed: shuffle_seed,
            freeze_base: self.freeze_base.unwrap_or(base.freeze_base),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scene: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demo: Option<Demo>,
    /// External channel tensor manifest (`.bim`) used instead of a scene.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sub6_antennas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mmw_antennas: Option<usize>,
    /// mmWave array sizes visited by `sweep`; empty means the scene's own.
    pub sweep_mmw_antennas: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_spacing: Option<f64>,
    /// Defaults to the mmWave array size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codebook_size: Option<usize>,
    pub snr_db: Vec<f64>,
    pub labeling: Labeling,
    pub train_fraction: f64,
    pub subsample: f64,
    pub seeds: Seeds,
    pub network: NetworkConfig,
    pub train: TrainOverrides,
    pub precision: Precision,
    pub ks: Vec<usize>,
    pub jobs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: None,
            demo: None,
            channels: None,
            sub6_antennas: None,
            mmw_antennas: None,
            sweep_mmw_antennas: Vec::new(),
            grid_spacing: None,
            codebook_size: None,
            snr_db: vec![20.0],
            labeling: Labeling::GroundTruth,
            train_fraction: 0.7,
            subsample: 1.0,
            seeds: Seeds::default(),
            network: NetworkConfig::default(),
            train: TrainOverrides::default(),
            precision: Precision::F32,
            ks: vec![1, 3],
            jobs: 1,
            output_dir: None,
        }
    }
}

impl RunConfig {
    /// Defaults, overlaid with `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.scene {
            if !p.is_file() {
                bail!("scene file {} does not exist", p.display());
            }
        }
        if let Some(p) = &self.channels {
            if !p.is_file() {
                bail!("channel manifest {} does not exist", p.display());
            }
        }
        if self.scene.is_some() as u8 + self.demo.is_some() as u8 + self.channels.is_some() as u8 > 1 {
            bail!("at most one of scene, demo and channels may be set");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            bail!("train_fraction must lie in (0, 1), got {}", self.train_fraction);
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            bail!("subsample must lie in (0, 1], got {}", self.subsample);
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            bail!("ks must be a non-empty list of positive integers");
        }
        if self.sweep_mmw_antennas.contains(&0) {
            bail!("sweep_mmw_antennas entries must be positive");
        }
        if self.jobs == 0 {
            bail!("jobs must be positive");
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            bail!("snr_db entries must be numbers or inf");
        }
        Ok(())
    }

    /// The selected scene with array and grid overrides applied.
    pub fn resolve_scene(&self, fallback: Demo) -> Result<Scene> {
        let mut scene = match (&self.scene, self.demo) {
            (Some(path), _) => Scene::load(path).with_context(|| format!("loading scene {}", path.display()))?,
            (None, Some(Demo::Blockage)) => demo_blockage_scene(),
            (None, Some(Demo::Los)) => demo_los_scene(),
            (None, None) => match fallback {
                Demo::Los => demo_los_scene(),
                Demo::Blockage => demo_blockage_scene(),
            },
        };
        if let Some(m) = self.sub6_antennas {
            scene.sub6.array = ArrayConfig { num_antennas: m, ..scene.sub6.array };
        }
        if let Some(m) = self.mmw_antennas {
            scene.mmw.array = ArrayConfig { num_antennas: m, ..scene.mmw.array };
        }
        if let Some(s) = self.grid_spacing {
            scene.user_region.spacing = s;
        }
        scene.validate().context("invalid scene")?;
        Ok(scene)
    }

    pub fn output_dir(&self, command: &str) -> PathBuf {
        if let Some(dir) = &self.output_dir {
            return dir.clone();
        }
        let root = std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(command)
    }

    /// Creates `dir` and records the effective configuration in it.
    pub fn echo_into(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let text = toml::to_string(self).context("serializing the effective config")?;
        let path = dir.join(CONFIG_ECHO);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// `start:step:end` (inclusive) or a comma-separated list.
pub fn parse_snr_list(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let number = |s: &str| -> Result<f64> { s.trim().parse::<f64>().with_context(|| format!("bad SNR value {s:?}")) };
    match parts.as_slice() {
        [start, step, end] => {
            let (start, step, end) = (number(start)?, number(step)?, number(end)?);
            if !(step > 0.0) || end < start {
                bail!("SNR range {text:?} needs step > 0 and end >= start");
            }
            let count = ((end - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + step * i as f64).collect())
        }
        [_] => text.split(',').map(number).collect(),
        _ => bail!("SNR list {text:?} is neither start:step:end nor a comma-separated list"),
    }
}
