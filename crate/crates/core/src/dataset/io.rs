//! Dataset files: a TOML manifest (`.bcm`) next to a little-endian record
//! payload (`.bct`).
//!
//! Payload layout:
//!
//! ```text
//! magic "BCT1" | version u32 | records u64 | input_dim u32 | label_dim u32 | rate_dim u32
//! records x { input f32 x input_dim | label f32 x label_dim
//!             | user u64 | snr f64 | blocked u8 | best_beam u32 (u32::MAX = none) }
//! records x rate_dim x f64   (only when rate_dim > 0)
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetManifest, LearningRecord, RecordMeta};
use crate::codebook::RateProfile;
use crate::util::{parse_toml, read_file, read_text, sha256_hex, to_toml, write_file, ByteReader};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"BCT1";
const VERSION: u32 = 1;
const NO_BEAM: u32 = u32::MAX;

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    format_version: u32,
    payload: String,
    payload_sha256: String,
    manifest: DatasetManifest,
}

/// Manifest and payload paths for a file stem.
pub fn dataset_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bcm"), stem.with_extension("bct"))
}

fn encode(dataset: &Dataset) -> Result<Vec<u8>> {
    let m = &dataset.manifest;
    let rate_dim = dataset
        .rate_profiles
        .as_ref()
        .and_then(|p| p.first())
        .map_or(0, |p| p.rates.len());
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dataset.records.len() as u64).to_le_bytes());
    out.extend_from_slice(&(m.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(m.label_dim as u32).to_le_bytes());
    out.extend_from_slice(&(rate_dim as u32).to_le_bytes());
    for r in &dataset.records {
        if r.input.len() != m.input_dim || r.label.len() != m.label_dim {
            return Err(Error::invalid("record dimensions disagree with the manifest"));
        }
        for v in r.input.iter().chain(&r.label) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&r.meta.user_index.to_le_bytes());
        out.extend_from_slice(&r.meta.snr_db.to_le_bytes());
        out.push(r.meta.blocked_ground_truth as u8);
        let beam = r.meta.best_beam_index.map_or(NO_BEAM, |b| b as u32);
        out.extend_from_slice(&beam.to_le_bytes());
    }
    if let Some(profiles) = &dataset.rate_profiles {
        if profiles.len() != dataset.records.len() {
            return Err(Error::invalid("one rate profile per record is required"));
        }
        for p in profiles {
            if p.rates.len() != rate_dim {
                return Err(Error::invalid("rate profiles have differing lengths"));
            }
            for v in &p.rates {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn decode(name: &str, bytes: &[u8], manifest: DatasetManifest) -> Result<Dataset> {
    let mut r = ByteReader::new(name, bytes);
    if &r.array::<4>()? != MAGIC {
        return Err(Error::Parse {
            location: format!("{name} byte offset 0"),
            message: "bad magic, not a record payload".into(),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.error(format!("unsupported payload version {version}")));
    }
    let count = r.u64()? as usize;
    let input_dim = r.u32()? as usize;
    let label_dim = r.u32()? as usize;
    let rate_dim = r.u32()? as usize;
    if count != manifest.record_count || input_dim != manifest.input_dim || label_dim != manifest.label_dim {
        return Err(Error::Schema(format!(
            "payload holds {count} records of {input_dim} -> {label_dim}, manifest declares {} of {} -> {}",
            manifest.record_count, manifest.input_dim, manifest.label_dim
        )));
    }
    let record_bytes = 4 * (input_dim + label_dim) + 8 + 8 + 1 + 4;
    let expected = count * (record_bytes + 8 * rate_dim);
    if r.remaining() != expected {
        return Err(r.error(format!("payload body is {} bytes, expected {expected}", r.remaining())));
    }

    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let input = (0..input_dim).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        let label_at = r.offset();
        let label = (0..label_dim).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        let user_index = r.u64()?;
        let snr_db = r.f64()?;
        let blocked = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(r.error(format!("blocked flag must be 0 or 1, got {b}"))),
        };
        let beam = r.u32()?;
        let record = LearningRecord {
            input,
            label,
            meta: RecordMeta {
                user_index,
                snr_db,
                blocked_ground_truth: blocked,
                best_beam_index: (beam != NO_BEAM).then_some(beam as usize),
            },
        };
        if !record.is_valid_one_hot() {
            return Err(Error::Parse {
                location: format!("{name} byte offset {label_at}"),
                message: "label is not one-hot".into(),
            });
        }
        records.push(record);
    }
    let rate_profiles = if rate_dim > 0 {
        let mut profiles = Vec::with_capacity(count);
        for _ in 0..count {
            let rates = (0..rate_dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            profiles.push(RateProfile::from_rates(rates));
        }
        Some(profiles)
    } else {
        None
    };
    r.finish()?;
    Ok(Dataset {
        manifest,
        records,
        rate_profiles,
    })
}

/// Writes `<stem>.bcm` and `<stem>.bct`.
pub fn write_dataset(dataset: &Dataset, stem: &Path) -> Result<()> {
    let (manifest_path, payload_path) = dataset_paths(stem);
    let payload = encode(dataset)?;
    let file = ManifestFile {
        format_version: VERSION,
        payload: payload_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        payload_sha256: sha256_hex(&payload),
        manifest: dataset.manifest.clone(),
    };
    write_file(&payload_path, &payload)?;
    write_file(&manifest_path, to_toml(&file)?.as_bytes())
}

/// Reads a dataset from its manifest path (or stem).
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let manifest_path = path.with_extension("bcm");
    let text = read_text(&manifest_path)?;
    let name = manifest_path.display().to_string();
    let file: ManifestFile = parse_toml(&name, &text)?;
    if file.format_version != VERSION {
        return Err(Error::Schema(format!("unsupported manifest version {}", file.format_version)));
    }
    file.manifest.validate()?;
    let payload_path = manifest_path.with_file_name(&file.payload);
    let bytes = read_file(&payload_path)?;
    if sha256_hex(&bytes) != file.payload_sha256 {
        return Err(Error::Schema(format!("{} does not match the manifest checksum", payload_path.display())));
    }
    decode(&payload_path.display().to_string(), &bytes, file.manifest)
}
