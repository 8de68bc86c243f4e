//! Model checkpoints: a TOML manifest (`.ckm`) and a little-endian parameter
//! blob (`.ckb`). The blob holds magic `CKB1` followed by each layer's
//! weights (row-major, `fan_in x fan_out`) then biases, base stacks first.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Layer, MlpModel, Scalar, TrainConfig};
use crate::util::{parse_toml, read_file, read_text, sha256_hex, to_toml, write_file, ByteReader};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"CKB1";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    /// Epochs trained so far.
    pub epoch: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub model: MlpModel<T>,
    pub info: CheckpointInfo,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    precision: String,
    input_dim: usize,
    hidden_layers: usize,
    width: usize,
    output_dim: usize,
    dropout_rate: f64,
    blob: String,
    blob_sha256: String,
    info: CheckpointInfo,
}

fn layer_shapes(m: &Manifest) -> Vec<(usize, usize)> {
    let mut shapes = Vec::with_capacity(m.hidden_layers + 1);
    let mut fan_in = m.input_dim;
    for _ in 0..m.hidden_layers {
        shapes.push((fan_in, m.width));
        fan_in = m.width;
    }
    shapes.push((fan_in, m.output_dim));
    shapes
}

/// Writes `<stem>.ckm` and `<stem>.ckb`.
pub fn save_checkpoint<T: Scalar>(checkpoint: &Checkpoint<T>, stem: &Path) -> Result<()> {
    let model = &checkpoint.model;
    model.validate()?;
    let mut blob = MAGIC.to_vec();
    for layer in model.layers() {
        layer.weights.iter().for_each(|v| v.write_le(&mut blob));
        layer.biases.iter().for_each(|v| v.write_le(&mut blob));
    }
    let blob_path = stem.with_extension("ckb");
    let manifest = Manifest {
        format_version: VERSION,
        precision: T::NAME.to_string(),
        input_dim: model.input_dim(),
        hidden_layers: model.hidden_layers(),
        width: model.width(),
        output_dim: model.output_dim(),
        dropout_rate: model.dropout_rate,
        blob: blob_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        blob_sha256: sha256_hex(&blob),
        info: checkpoint.info.clone(),
    };
    write_file(&blob_path, &blob)?;
    write_file(&stem.with_extension("ckm"), to_toml(&manifest)?.as_bytes())
}

fn read_manifest(path: &Path) -> Result<(Manifest, std::path::PathBuf)> {
    let manifest_path = path.with_extension("ckm");
    let name = manifest_path.display().to_string();
    let manifest: Manifest = parse_toml(&name, &read_text(&manifest_path)?)?;
    if manifest.format_version != VERSION {
        return Err(Error::Schema(format!("unsupported checkpoint version {}", manifest.format_version)));
    }
    Ok((manifest, manifest_path))
}

/// Precision tag (`f32` or `f64`) stored in a checkpoint manifest.
pub fn checkpoint_precision(path: &Path) -> Result<String> {
    Ok(read_manifest(path)?.0.precision)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let (manifest, manifest_path) = read_manifest(path)?;
    if manifest.precision != T::NAME {
        return Err(Error::Schema(format!(
            "checkpoint holds {} parameters, {} requested",
            manifest.precision,
            T::NAME
        )));
    }
    let blob_path = manifest_path.with_file_name(&manifest.blob);
    let bytes = read_file(&blob_path)?;
    if sha256_hex(&bytes) != manifest.blob_sha256 {
        return Err(Error::Schema(format!("{} does not match the manifest checksum", blob_path.display())));
    }
    let name = blob_path.display().to_string();
    let mut r = ByteReader::new(&name, &bytes);
    if &r.array::<4>()? != MAGIC {
        return Err(Error::Parse {
            location: format!("{name} byte offset 0"),
            message: "bad magic, not a checkpoint blob".into(),
        });
    }
    let mut layers = Vec::new();
    for (fan_in, fan_out) in layer_shapes(&manifest) {
        let mut read = |n: usize| -> Result<Vec<T>> {
            let raw = r.take(n * T::BYTES)?;
            Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
        };
        let weights = Array2::from_shape_vec((fan_in, fan_out), read(fan_in * fan_out)?).expect("sized");
        let biases = Array1::from_vec(read(fan_out)?);
        layers.push(Layer { weights, biases });
    }
    r.finish()?;
    let head = layers.pop().expect("head layer");
    let model = MlpModel {
        base: layers,
        head,
        dropout_rate: manifest.dropout_rate,
    };
    model.validate()?;
    Ok(Checkpoint {
        model,
        info: manifest.info,
    })
}
