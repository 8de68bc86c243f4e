//! Train/evaluate loops shared by the command-line tool and the acceptance
//! suite.

use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, RateProfile};
use crate::dataset::{
    build_beam_dataset_with_profiles, build_blockage_dataset, split_indices, BuildOptions, Dataset, Labeling,
    LearningRecord, Normalization, BLOCKED_CLASS,
};
use crate::eval::{blockage_report, BlockageReport, EvalReport};
use crate::mlp::{init_model, train, MlpModel, Samples, Scalar, TrainConfig, TrainHistory};
use crate::scene::DualBandChannels;
use crate::util::derive_seed;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub dropout_rate: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 5,
            width: 2048,
            dropout_rate: 0.4,
        }
    }
}

impl NetworkConfig {
    /// Reduced network that trains in minutes on one CPU core.
    pub fn desk() -> Self {
        Self {
            hidden_layers: 3,
            width: 512,
            dropout_rate: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamExperiment {
    pub snr_db: f64,
    pub train_fraction: f64,
    /// Share of the training split actually used; the test split is fixed.
    pub subsample: f64,
    pub split_seed: u64,
    pub noise_seed: u64,
    pub init_seed: u64,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub ks: Vec<usize>,
    /// Evaluate the test split after every epoch.
    pub track_validation: bool,
}

impl Default for BeamExperiment {
    fn default() -> Self {
        Self {
            snr_db: 20.0,
            train_fraction: 0.7,
            subsample: 1.0,
            split_seed: 1,
            noise_seed: 2,
            init_seed: 3,
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            ks: vec![1, 3],
            track_validation: false,
        }
    }
}

pub struct BeamOutcome<T> {
    pub report: EvalReport,
    pub history: TrainHistory,
    pub model: MlpModel<T>,
    pub train_size: usize,
    pub test_size: usize,
}

/// Train and test indices, with only the first `subsample` share of the
/// shuffled training indices kept.
pub fn experiment_split(n: usize, train_fraction: f64, subsample: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(subsample > 0.0 && subsample <= 1.0) {
        return Err(Error::invalid(format!("subsample {subsample} outside (0, 1]")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid("train_fraction must lie in (0, 1)"));
    }
    let (mut train_idx, test_idx) = split_indices(n, train_fraction, seed);
    let keep = ((train_idx.len() as f64) * subsample).round().max(1.0) as usize;
    train_idx.truncate(keep.min(train_idx.len()));
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::invalid(format!("{n} records are too few to split")));
    }
    Ok((train_idx, test_idx))
}

fn pick(records: &[LearningRecord], idx: &[usize]) -> Vec<LearningRecord> {
    idx.iter().map(|&i| records[i].clone()).collect()
}

/// Trains a fresh network on an already built beam dataset and evaluates it
/// on the held-out split.
pub fn train_beam_model<T: Scalar>(dataset: &Dataset, exp: &BeamExperiment) -> Result<BeamOutcome<T>> {
    let profiles = dataset
        .rate_profiles
        .as_ref()
        .ok_or_else(|| Error::invalid("beam dataset carries no rate profiles"))?;
    let (train_idx, test_idx) =
        experiment_split(dataset.records.len(), exp.train_fraction, exp.subsample, exp.split_seed)?;
    let train_set = Samples::<T>::from_records(&pick(&dataset.records, &train_idx))?;
    let test_set = Samples::<T>::from_records(&pick(&dataset.records, &test_idx))?;
    let mut model = init_model::<T>(
        dataset.manifest.input_dim,
        exp.network.hidden_layers,
        exp.network.width,
        dataset.manifest.label_dim,
        exp.network.dropout_rate,
        exp.init_seed,
    )?;
    let validation = exp.track_validation.then_some(&test_set);
    let history = train(&mut model, &train_set, &exp.train, validation)?;
    let kmax = exp.ks.iter().copied().max().unwrap_or(1).min(dataset.manifest.label_dim);
    let ranked = model.rank_batch(test_set.inputs.view(), kmax, 1024)?;
    let test_profiles: Vec<RateProfile> = test_idx.iter().map(|&i| profiles[i].clone()).collect();
    let report = EvalReport::for_beams(dataset.manifest.snr_db, &ranked, &test_profiles, &exp.ks)?;
    Ok(BeamOutcome {
        report,
        history,
        model,
        train_size: train_idx.len(),
        test_size: test_idx.len(),
    })
}

/// Builds the noisy beam dataset for `exp.snr_db`, then trains and evaluates.
pub fn run_beam_experiment<T: Scalar>(
    pairs: &[DualBandChannels],
    codebook: &Codebook,
    profiles: &[RateProfile],
    exp: &BeamExperiment,
) -> Result<BeamOutcome<T>> {
    let options = BuildOptions {
        snr_db: exp.snr_db,
        normalization: Normalization::CleanCorpus,
        seed: exp.noise_seed,
        train_fraction: exp.train_fraction,
    };
    let dataset = build_beam_dataset_with_profiles(pairs, codebook, profiles.to_vec(), &options)?;
    train_beam_model(&dataset, exp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockageExperiment {
    pub snr_db: f64,
    pub labeling: Labeling,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub noise_seed: u64,
    pub init_seed: u64,
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

impl Default for BlockageExperiment {
    fn default() -> Self {
        Self {
            snr_db: 10.0,
            labeling: Labeling::GroundTruth,
            train_fraction: 0.7,
            split_seed: 11,
            noise_seed: 12,
            init_seed: 13,
            network: NetworkConfig::default(),
            train: TrainConfig::blockage_default(),
        }
    }
}

pub struct BlockageOutcome<T> {
    /// Test accuracy against the geometric ground truth.
    pub ground_truth: BlockageReport,
    /// Test accuracy against the labels the network was trained on.
    pub training_labels: BlockageReport,
    /// Share of all records whose training label equals the ground truth.
    pub label_agreement: f64,
    pub history: TrainHistory,
    pub model: MlpModel<T>,
}

/// Blockage dataset construction, training (from scratch or from a beam
/// model with its head replaced) and evaluation.
pub fn run_blockage_experiment<T: Scalar>(
    blocked: &[DualBandChannels],
    los: &[DualBandChannels],
    codebook: Option<&Codebook>,
    exp: &BlockageExperiment,
    transfer_from: Option<&MlpModel<T>>,
) -> Result<BlockageOutcome<T>> {
    let options = BuildOptions {
        snr_db: exp.snr_db,
        normalization: Normalization::CleanCorpus,
        seed: exp.noise_seed,
        train_fraction: exp.train_fraction,
    };
    let dataset = build_blockage_dataset(blocked, los, exp.labeling, codebook, &options)?;
    train_blockage_model(&dataset, exp, transfer_from)
}

pub fn train_blockage_model<T: Scalar>(
    dataset: &Dataset,
    exp: &BlockageExperiment,
    transfer_from: Option<&MlpModel<T>>,
) -> Result<BlockageOutcome<T>> {
    let (train_idx, test_idx) = experiment_split(dataset.records.len(), exp.train_fraction, 1.0, exp.split_seed)?;
    let train_set = Samples::<T>::from_records(&pick(&dataset.records, &train_idx))?;
    let test_records = pick(&dataset.records, &test_idx);
    let test_set = Samples::<T>::from_records(&test_records)?;
    let mut model = match transfer_from {
        Some(base) => {
            if base.input_dim() != dataset.manifest.input_dim {
                return Err(Error::invalid(format!(
                    "transfer source takes {} inputs, dataset has {}",
                    base.input_dim(),
                    dataset.manifest.input_dim
                )));
            }
            base.transfer_head(2, exp.init_seed)?
        }
        None => init_model::<T>(
            dataset.manifest.input_dim,
            exp.network.hidden_layers,
            exp.network.width,
            2,
            exp.network.dropout_rate,
            exp.init_seed,
        )?,
    };
    // Validation follows the ground truth so that curves of differently
    // labeled runs are comparable.
    let gt_test = Samples::new(
        test_set.inputs.clone(),
        ndarray::Array2::from_shape_fn((test_records.len(), 2), |(i, c)| {
            let class = if test_records[i].meta.blocked_ground_truth { BLOCKED_CLASS } else { 1 - BLOCKED_CLASS };
            T::from_f64((c == class) as u8 as f64)
        }),
    )?;
    let history = train(&mut model, &train_set, &exp.train, Some(&gt_test))?;
    let predicted: Vec<usize> = model
        .rank_batch(test_set.inputs.view(), 1, 1024)?
        .into_iter()
        .map(|r| r[0])
        .collect();
    let ground_truth = blockage_report(&predicted, &gt_test.classes())?;
    let training_labels = blockage_report(&predicted, &test_set.classes())?;
    let agree = dataset
        .records
        .iter()
        .filter(|r| (r.class() == BLOCKED_CLASS) == r.meta.blocked_ground_truth)
        .count();
    Ok(BlockageOutcome {
        ground_truth,
        training_labels,
        label_agreement: agree as f64 / dataset.records.len() as f64,
        history,
        model,
    })
}

/// Seed for the `index`-th point of a sweep.
pub fn sweep_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, index as u64)
}
