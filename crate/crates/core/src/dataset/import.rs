//! Externally generated channels: a TOML manifest (`.bim`) and a binary
//! complex tensor file (`.bix`).
//!
//! Tensor layout, little endian:
//!
//! ```text
//! magic "BIX1" | version u32 | users u64
//! sub6 antennas u32 | sub6 subcarriers u32 | mmw antennas u32 | mmw subcarriers u32
//! sub6 tensor: users x antennas x subcarriers x (re f64, im f64)
//! mmw tensor:  users x antennas x subcarriers x (re f64, im f64)
//! positions:   users x 3 x f64
//! blocked:     users x u8
//! ```

use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ArrayConfig, BandConfig, OfdmChannel};
use crate::scene::DualBandChannels;
use crate::util::{parse_toml, read_file, read_text, to_toml, write_file, ByteReader};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"BIX1";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandDeclaration {
    pub band: BandConfig,
    pub array: ArrayConfig,
    pub antennas: usize,
    pub subcarriers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportManifest {
    pub format_version: u32,
    /// Tensor file name, relative to the manifest.
    pub tensor: String,
    pub users: usize,
    pub sub6: BandDeclaration,
    pub mmw: BandDeclaration,
}

impl BandDeclaration {
    fn check(&self, which: &str) -> Result<()> {
        if self.antennas != self.array.num_antennas {
            return Err(Error::Schema(format!(
                "{which}.antennas = {} but {which}.array.num_antennas = {}",
                self.antennas, self.array.num_antennas
            )));
        }
        if self.subcarriers != self.band.num_subcarriers_used {
            return Err(Error::Schema(format!(
                "{which}.subcarriers = {} but {which}.band.num_subcarriers_used = {}",
                self.subcarriers, self.band.num_subcarriers_used
            )));
        }
        Ok(())
    }
}

fn declaration(ch: &OfdmChannel) -> BandDeclaration {
    BandDeclaration {
        band: ch.band,
        array: ch.array,
        antennas: ch.num_antennas(),
        subcarriers: ch.num_subcarriers(),
    }
}

fn push_channel(out: &mut Vec<u8>, ch: &OfdmChannel) {
    for z in ch.entries.iter() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
}

/// Writes channel pairs as `<stem>.bim` plus `<stem>.bix`. An empty list needs
/// both declarations passed explicitly.
pub fn export_external_channels(
    pairs: &[DualBandChannels],
    stem: &Path,
    empty_layout: Option<(BandDeclaration, BandDeclaration)>,
) -> Result<()> {
    let (sub6, mmw) = match (pairs.first(), empty_layout) {
        (Some(p), _) => (declaration(&p.sub6), declaration(&p.mmw)),
        (None, Some(layout)) => layout,
        (None, None) => return Err(Error::invalid("exporting no users needs the band layouts")),
    };
    for p in pairs {
        if declaration(&p.sub6) != sub6 || declaration(&p.mmw) != mmw {
            return Err(Error::invalid("all exported users must share one band layout"));
        }
    }
    let tensor_path = stem.with_extension("bix");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(pairs.len() as u64).to_le_bytes());
    for d in [&sub6, &mmw] {
        out.extend_from_slice(&(d.antennas as u32).to_le_bytes());
        out.extend_from_slice(&(d.subcarriers as u32).to_le_bytes());
    }
    pairs.iter().for_each(|p| push_channel(&mut out, &p.sub6));
    pairs.iter().for_each(|p| push_channel(&mut out, &p.mmw));
    for p in pairs {
        for v in p.position {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend(pairs.iter().map(|p| p.los_blocked as u8));

    let manifest = ImportManifest {
        format_version: VERSION,
        tensor: tensor_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        users: pairs.len(),
        sub6,
        mmw,
    };
    write_file(&tensor_path, &out)?;
    write_file(&stem.with_extension("bim"), to_toml(&manifest)?.as_bytes())
}

fn read_tensor(r: &mut ByteReader<'_>, users: usize, d: &BandDeclaration) -> Result<Vec<Array2<Complex64>>> {
    (0..users)
        .map(|_| {
            let mut values = Vec::with_capacity(d.antennas * d.subcarriers);
            for _ in 0..d.antennas * d.subcarriers {
                let re = r.f64()?;
                let im = r.f64()?;
                if !(re.is_finite() && im.is_finite()) {
                    return Err(r.error("non-finite channel entry"));
                }
                values.push(Complex64::new(re, im));
            }
            Ok(Array2::from_shape_vec((d.antennas, d.subcarriers), values).expect("shape checked"))
        })
        .collect()
}

/// Reads channel pairs from a `.bim` manifest (or its stem).
pub fn import_external_channels(path: &Path) -> Result<Vec<DualBandChannels>> {
    let manifest_path = path.with_extension("bim");
    let name = manifest_path.display().to_string();
    let manifest: ImportManifest = parse_toml(&name, &read_text(&manifest_path)?)?;
    if manifest.format_version != VERSION {
        return Err(Error::Schema(format!("unsupported import version {}", manifest.format_version)));
    }
    manifest.sub6.check("sub6")?;
    manifest.mmw.check("mmw")?;
    manifest.sub6.band.validate().map_err(|e| Error::Schema(format!("sub6.band: {e}")))?;
    manifest.mmw.band.validate().map_err(|e| Error::Schema(format!("mmw.band: {e}")))?;

    let tensor_path = manifest_path.with_file_name(&manifest.tensor);
    let bytes = read_file(&tensor_path)?;
    let tensor_name = tensor_path.display().to_string();
    let mut r = ByteReader::new(&tensor_name, &bytes);
    if &r.array::<4>()? != MAGIC {
        return Err(Error::Parse {
            location: format!("{tensor_name} byte offset 0"),
            message: "bad magic, not a channel tensor".into(),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.error(format!("unsupported tensor version {version}")));
    }
    let users = r.u64()? as usize;
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let declared = [
        manifest.sub6.antennas,
        manifest.sub6.subcarriers,
        manifest.mmw.antennas,
        manifest.mmw.subcarriers,
    ];
    if users != manifest.users || dims != declared {
        return Err(Error::Schema(format!(
            "tensor holds {users} users with dims {dims:?}, manifest declares {} users with dims {declared:?}",
            manifest.users
        )));
    }
    let sub6 = read_tensor(&mut r, users, &manifest.sub6)?;
    let mmw = read_tensor(&mut r, users, &manifest.mmw)?;
    let positions = (0..users)
        .map(|_| Ok([r.f64()?, r.f64()?, r.f64()?]))
        .collect::<Result<Vec<_>>>()?;
    let mut blocked = Vec::with_capacity(users);
    for _ in 0..users {
        blocked.push(match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(r.error(format!("blocked flag must be 0 or 1, got {b}"))),
        });
    }
    r.finish()?;

    sub6.into_iter()
        .zip(mmw)
        .zip(positions.into_iter().zip(blocked))
        .enumerate()
        .map(|(i, ((hs, hm), (position, los_blocked)))| {
            Ok(DualBandChannels {
                user_index: i,
                position,
                sub6: OfdmChannel::from_entries(hs, manifest.sub6.band, manifest.sub6.array)?,
                mmw: OfdmChannel::from_entries(hm, manifest.mmw.band, manifest.mmw.array)?,
                los_blocked,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{demo_blockage_scene, generate_dual_band_samples, realize_channels, UserRegion};

    fn pairs() -> Vec<DualBandChannels> {
        let mut scene = demo_blockage_scene();
        scene.user_region = UserRegion {
            spacing: 6.0,
            ..scene.user_region
        };
        realize_channels(&scene, &generate_dual_band_samples(&scene).unwrap()).unwrap()
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ext");
        let original = pairs();
        export_external_channels(&original, &stem, None).unwrap();
        let back = import_external_channels(&stem.with_extension("bim")).unwrap();
        assert_eq!(back, original);
    }

    #[test]
    fn empty_file_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("empty");
        let p = &pairs()[0];
        export_external_channels(&[], &stem, Some((declaration(&p.sub6), declaration(&p.mmw)))).unwrap();
        assert!(import_external_channels(&stem).unwrap().is_empty());
    }

    #[test]
    fn truncated_tensor_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ext");
        export_external_channels(&pairs(), &stem, None).unwrap();
        let bytes = std::fs::read(stem.with_extension("bix")).unwrap();
        std::fs::write(stem.with_extension("bix"), &bytes[..bytes.len() / 2]).unwrap();
        let err = import_external_channels(&stem).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        assert!(err.to_string().contains("byte offset"));
    }

    #[test]
    fn declared_dims_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ext");
        export_external_channels(&pairs(), &stem, None).unwrap();
        let path = stem.with_extension("bim");
        let mut manifest: ImportManifest = toml::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        manifest.users += 1;
        std::fs::write(&path, toml::to_string(&manifest).unwrap()).unwrap();
        assert!(matches!(import_external_channels(&path), Err(Error::Schema(_))));

        manifest.users -= 1;
        manifest.mmw.antennas = 3;
        std::fs::write(&path, toml::to_string(&manifest).unwrap()).unwrap();
        assert!(matches!(import_external_channels(&path), Err(Error::Schema(_))));
    }

    #[test]
    fn malformed_manifest_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bim");
        std::fs::write(&path, "format_version = 1\ntensor = \"x.bix\"\nusers = \"many\"\n").unwrap();
        let err = import_external_channels(&path).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
