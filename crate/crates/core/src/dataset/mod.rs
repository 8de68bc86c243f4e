//! Learning records built from dual-band channels.
//!
//! Inputs are sub-6 GHz channels divided by one global factor (the largest
//! entry magnitude of the clean corpus) and flattened subcarrier by
//! subcarrier as `[Re(h[k]) ; Im(h[k])]`. Beam labels come from the
//! exhaustive search on the clean mmWave channel; blockage labels are
//! `[1, 0]` for blocked and `[0, 1]` for unblocked.

mod import;
mod io;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{add_channel_noise_with_reference, OfdmChannel};
use crate::codebook::{optimal_beam, power_ratio_label, Codebook, RateProfile};
use crate::scene::{realize_channels, DualBandChannels, Scene, UserSample};
use crate::util::{derive_seed, sha256_hex};
use crate::{Error, Result};

pub use import::{export_external_channels, import_external_channels, BandDeclaration, ImportManifest};
pub use io::{dataset_paths, read_dataset, write_dataset};

/// Class index of "blocked" in blockage labels.
pub const BLOCKED_CLASS: usize = 0;
/// Class index of "unblocked" in blockage labels.
pub const UNBLOCKED_CLASS: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub user_index: u64,
    pub snr_db: f64,
    pub blocked_ground_truth: bool,
    pub best_beam_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearningRecord {
    pub input: Vec<f32>,
    pub label: Vec<f32>,
    pub meta: RecordMeta,
}

impl LearningRecord {
    pub fn class(&self) -> usize {
        self.label.iter().position(|&v| v == 1.0).unwrap_or(0)
    }

    pub fn is_valid_one_hot(&self) -> bool {
        self.label.iter().filter(|&&v| v == 1.0).count() == 1
            && self.label.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

pub fn one_hot(class: usize, dim: usize) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[class] = 1.0;
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Beam,
    Blockage,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Labeling {
    GroundTruth,
    PowerRule { threshold: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub kind: DatasetKind,
    pub normalization_factor: f64,
    pub record_count: usize,
    pub input_dim: usize,
    pub label_dim: usize,
    pub train_fraction: f64,
    pub master_seed: u64,
    pub snr_db: f64,
    /// Records per class, in label order.
    pub class_counts: Vec<usize>,
    /// Users whose best beam rate is tied with another beam.
    pub tie_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeling: Option<Labeling>,
    /// SHA-256 of the configuration that produced the records.
    pub config_digest: String,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if !(self.normalization_factor > 0.0) {
            return Err(Error::Schema("normalization_factor must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Schema("train_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Records plus, for beam datasets, the clean per-beam rates of each user.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Vec<LearningRecord>,
    pub rate_profiles: Option<Vec<RateProfile>>,
}

/// Global normalization factor: the largest entry magnitude over the corpus.
pub fn compute_normalization<'a>(channels: impl IntoIterator<Item = &'a OfdmChannel>) -> Result<f64> {
    let mut seen = false;
    let mut max = 0.0f64;
    for ch in channels {
        seen = true;
        max = max.max(ch.max_magnitude());
    }
    if !seen {
        return Err(Error::invalid("normalization needs at least one channel"));
    }
    if max == 0.0 {
        return Err(Error::invalid("all channels are zero"));
    }
    Ok(max)
}

/// Real-valued network input: per subcarrier, `M` real parts then `M`
/// imaginary parts, all divided by `delta`.
pub fn vectorize(channel: &OfdmChannel, delta: f64) -> Vec<f64> {
    let m = channel.num_antennas();
    let mut out = Vec::with_capacity(2 * m * channel.num_subcarriers());
    for h in channel.entries.columns() {
        out.extend(h.iter().map(|z| z.re / delta));
        out.extend(h.iter().map(|z| z.im / delta));
    }
    out
}

/// How the normalization factor is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Normalization {
    /// Largest magnitude over the clean sub-6 corpus being built.
    CleanCorpus,
    Fixed(f64),
}

/// Parameters shared by both dataset builders.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    pub snr_db: f64,
    pub normalization: Normalization,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            snr_db: f64::INFINITY,
            normalization: Normalization::CleanCorpus,
            seed: 0,
            train_fraction: 0.7,
        }
    }
}

fn mean_power(channels: &[&OfdmChannel]) -> f64 {
    let total: f64 = channels.iter().map(|c| c.mean_power() * c.entries.len() as f64).sum();
    let count: usize = channels.iter().map(|c| c.entries.len()).sum();
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Normalization factor, noise reference power and the noisy vectorized inputs.
fn noisy_inputs(channels: &[&OfdmChannel], user_indices: &[usize], options: &BuildOptions) -> Result<(f64, Vec<Vec<f32>>)> {
    let delta = match options.normalization {
        Normalization::CleanCorpus => compute_normalization(channels.iter().copied())?,
        Normalization::Fixed(d) if d > 0.0 => d,
        Normalization::Fixed(d) => return Err(Error::invalid(format!("normalization factor must be positive, got {d}"))),
    };
    let reference = mean_power(channels);
    let inputs = channels
        .iter()
        .zip(user_indices)
        .map(|(ch, &u)| {
            let noisy = add_channel_noise_with_reference(ch, options.snr_db, reference, derive_seed(options.seed, u as u64));
            vectorize(&noisy, delta).into_iter().map(|v| v as f32).collect()
        })
        .collect();
    Ok((delta, inputs))
}

#[derive(Serialize)]
struct DigestInput<'a> {
    kind: DatasetKind,
    snr_db: f64,
    seed: u64,
    train_fraction: f64,
    normalization: f64,
    labeling: Option<Labeling>,
    codebook_size: usize,
    codebook_antennas: usize,
    users: usize,
    sub6_band: &'a crate::channel::BandConfig,
    mmw_band: &'a crate::channel::BandConfig,
    source_digest: String,
}

fn corpus_digest(pairs: &[&DualBandChannels]) -> String {
    let mut hasher = Sha256::new();
    for p in pairs {
        hasher.update((p.user_index as u64).to_le_bytes());
        for ch in [&p.sub6, &p.mmw] {
            for z in ch.entries.iter() {
                hasher.update(z.re.to_le_bytes());
                hasher.update(z.im.to_le_bytes());
            }
        }
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn config_digest(input: &DigestInput<'_>) -> String {
    let text = toml::to_string(input).unwrap_or_default();
    sha256_hex(text.as_bytes())
}

fn check_options(options: &BuildOptions) -> Result<()> {
    if !(options.train_fraction > 0.0 && options.train_fraction < 1.0) {
        return Err(Error::invalid("train_fraction must lie in (0, 1)"));
    }
    if options.snr_db.is_nan() {
        return Err(Error::invalid("snr_db is NaN"));
    }
    Ok(())
}

/// Oracle rate profiles of every user on the clean mmWave channels.
pub fn beam_labels(pairs: &[DualBandChannels], codebook: &Codebook) -> Result<Vec<RateProfile>> {
    pairs
        .iter()
        .map(|p| optimal_beam(&p.mmw, codebook, p.mmw.band.per_subcarrier_snr()))
        .collect()
}

/// Beam-prediction records from clean channel pairs.
pub fn build_beam_dataset_from_channels(
    pairs: &[DualBandChannels],
    codebook: &Codebook,
    options: &BuildOptions,
) -> Result<Dataset> {
    if codebook.is_empty() {
        return Err(Error::invalid("empty codebook"));
    }
    let profiles = beam_labels(pairs, codebook)?;
    build_beam_dataset_with_profiles(pairs, codebook, profiles, options)
}

/// Same as [`build_beam_dataset_from_channels`] with the oracle profiles
/// already computed by [`beam_labels`].
pub fn build_beam_dataset_with_profiles(
    pairs: &[DualBandChannels],
    codebook: &Codebook,
    profiles: Vec<RateProfile>,
    options: &BuildOptions,
) -> Result<Dataset> {
    check_options(options)?;
    if codebook.is_empty() {
        return Err(Error::invalid("empty codebook"));
    }
    if pairs.is_empty() {
        return Err(Error::invalid("no users to build a dataset from"));
    }
    if profiles.len() != pairs.len() || profiles.iter().any(|p| p.rates.len() != codebook.len()) {
        return Err(Error::invalid("rate profiles do not match the users and codebook"));
    }
    let sub6: Vec<&OfdmChannel> = pairs.iter().map(|p| &p.sub6).collect();
    let users: Vec<usize> = pairs.iter().map(|p| p.user_index).collect();
    let (delta, inputs) = noisy_inputs(&sub6, &users, options)?;

    let label_dim = codebook.len();
    let mut class_counts = vec![0; label_dim];
    let records: Vec<LearningRecord> = pairs
        .iter()
        .zip(inputs)
        .zip(&profiles)
        .map(|((p, input), profile)| {
            class_counts[profile.best_index] += 1;
            LearningRecord {
                input,
                label: one_hot(profile.best_index, label_dim),
                meta: RecordMeta {
                    user_index: p.user_index as u64,
                    snr_db: options.snr_db,
                    blocked_ground_truth: p.los_blocked,
                    best_beam_index: Some(profile.best_index),
                },
            }
        })
        .collect();
    let tie_count = profiles.iter().filter(|p| p.tie_count() > 0).count();

    let refs: Vec<&DualBandChannels> = pairs.iter().collect();
    let digest = config_digest(&DigestInput {
        kind: DatasetKind::Beam,
        snr_db: options.snr_db,
        seed: options.seed,
        train_fraction: options.train_fraction,
        normalization: delta,
        labeling: None,
        codebook_size: codebook.len(),
        codebook_antennas: codebook.num_antennas(),
        users: pairs.len(),
        sub6_band: &pairs[0].sub6.band,
        mmw_band: &pairs[0].mmw.band,
        source_digest: corpus_digest(&refs),
    });
    Ok(Dataset {
        manifest: DatasetManifest {
            kind: DatasetKind::Beam,
            normalization_factor: delta,
            record_count: records.len(),
            input_dim: records[0].input.len(),
            label_dim,
            train_fraction: options.train_fraction,
            master_seed: options.seed,
            snr_db: options.snr_db,
            class_counts,
            tie_count,
            labeling: None,
            config_digest: digest,
        },
        records,
        rate_profiles: Some(profiles),
    })
}

/// Beam-prediction records straight from traced samples.
pub fn build_beam_dataset(
    scene: &Scene,
    samples: &[UserSample],
    codebook: &Codebook,
    options: &BuildOptions,
) -> Result<Dataset> {
    build_beam_dataset_from_channels(&realize_channels(scene, samples)?, codebook, options)
}

/// Users of the blocked scene whose line of sight is blocked, paired with the
/// same grid users of the line-of-sight scene.
pub fn select_marked_region(
    blocked_scene: &[DualBandChannels],
    los_scene: &[DualBandChannels],
) -> Result<(Vec<DualBandChannels>, Vec<DualBandChannels>)> {
    let by_index: std::collections::HashMap<usize, &DualBandChannels> =
        los_scene.iter().map(|p| (p.user_index, p)).collect();
    let mut blocked = Vec::new();
    let mut los = Vec::new();
    for p in blocked_scene.iter().filter(|p| p.los_blocked) {
        let Some(q) = by_index.get(&p.user_index) else {
            return Err(Error::invalid(format!(
                "user {} of the blocked scene is missing from the line-of-sight scene",
                p.user_index
            )));
        };
        if q.position != p.position {
            return Err(Error::invalid("scenes do not share one user region"));
        }
        blocked.push(p.clone());
        los.push((*q).clone());
    }
    Ok((blocked, los))
}

/// Blockage-prediction records: the blocked-scene users first, then the
/// line-of-sight users.
pub fn build_blockage_dataset(
    blocked_set: &[DualBandChannels],
    los_set: &[DualBandChannels],
    labeling: Labeling,
    codebook: Option<&Codebook>,
    options: &BuildOptions,
) -> Result<Dataset> {
    check_options(options)?;
    if blocked_set.is_empty() || los_set.is_empty() {
        return Err(Error::invalid(format!(
            "blockage dataset needs both sets non-empty (blocked set {}, line-of-sight set {})",
            blocked_set.len(),
            los_set.len()
        )));
    }
    let all: Vec<&DualBandChannels> = blocked_set.iter().chain(los_set).collect();
    let sub6: Vec<&OfdmChannel> = all.iter().map(|p| &p.sub6).collect();
    // Record order doubles as the noise stream index, so the two halves never
    // share a stream even when they share user indices.
    let streams: Vec<usize> = (0..all.len()).collect();
    let (delta, inputs) = noisy_inputs(&sub6, &streams, options)?;

    let mut class_counts = vec![0; 2];
    let mut records = Vec::with_capacity(all.len());
    for (p, input) in all.iter().zip(inputs) {
        let blocked = match labeling {
            Labeling::GroundTruth => p.los_blocked,
            Labeling::PowerRule { threshold } => {
                let cb = codebook.ok_or_else(|| Error::invalid("power-rule labeling needs a codebook"))?;
                power_ratio_label(&p.mmw, cb, threshold)?
            }
        };
        let class = if blocked { BLOCKED_CLASS } else { UNBLOCKED_CLASS };
        class_counts[class] += 1;
        records.push(LearningRecord {
            input,
            label: one_hot(class, 2),
            meta: RecordMeta {
                user_index: p.user_index as u64,
                snr_db: options.snr_db,
                blocked_ground_truth: p.los_blocked,
                best_beam_index: None,
            },
        });
    }

    let digest = config_digest(&DigestInput {
        kind: DatasetKind::Blockage,
        snr_db: options.snr_db,
        seed: options.seed,
        train_fraction: options.train_fraction,
        normalization: delta,
        labeling: Some(labeling),
        codebook_size: codebook.map_or(0, Codebook::len),
        codebook_antennas: codebook.map_or(0, Codebook::num_antennas),
        users: all.len(),
        sub6_band: &all[0].sub6.band,
        mmw_band: &all[0].mmw.band,
        source_digest: corpus_digest(&all),
    });
    Ok(Dataset {
        manifest: DatasetManifest {
            kind: DatasetKind::Blockage,
            normalization_factor: delta,
            record_count: records.len(),
            input_dim: records[0].input.len(),
            label_dim: 2,
            train_fraction: options.train_fraction,
            master_seed: options.seed,
            snr_db: options.snr_db,
            class_counts,
            tie_count: 0,
            labeling: Some(labeling),
            config_digest: digest,
        },
        records,
        rate_profiles: None,
    })
}

/// Seeded shuffle split into (train, test) index lists.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let test = idx.split_off(n_train.min(n));
    (idx, test)
}

pub fn split<T: Clone>(items: &[T], train_fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let (train, test) = split_indices(items.len(), train_fraction, seed);
    (
        train.iter().map(|&i| items[i].clone()).collect(),
        test.iter().map(|&i| items[i].clone()).collect(),
    )
}
