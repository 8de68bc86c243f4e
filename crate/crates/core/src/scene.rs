//! Synthetic propagation scenes traced with the image method.
//!
//! A scene holds one base station, a set of axis-aligned planar reflectors and
//! an optional blockage screen. Paths are line-of-sight plus one first-order
//! specular reflection per visible reflector. The screen is the only occluder.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{
    assemble_ofdm_channel, ArrayConfig, BandConfig, OfdmChannel, PathComponent, PathKind, SPEED_OF_LIGHT,
};
use crate::util::{parse_toml, read_text, to_toml, write_file};
use crate::{Error, Result};

pub type Point3 = [f64; 3];

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: Point3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn lerp(a: Point3, b: Point3, t: f64) -> Point3 {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
}

/// Axis-aligned rectangle: `min` and `max` agree on exactly one axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point3,
    pub max: Point3,
}

impl Rect {
    pub fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    /// Axis orthogonal to the rectangle.
    pub fn normal_axis(&self) -> Result<usize> {
        let flat: Vec<usize> = (0..3).filter(|&a| self.min[a] == self.max[a]).collect();
        if flat.len() != 1 {
            return Err(Error::config(format!(
                "rectangle {:?}..{:?} must be flat along exactly one axis",
                self.min, self.max
            )));
        }
        Ok(flat[0])
    }

    pub fn validate(&self) -> Result<()> {
        let axis = self.normal_axis()?;
        for a in (0..3).filter(|&a| a != axis) {
            if !(self.max[a] > self.min[a]) {
                return Err(Error::config(format!(
                    "rectangle {:?}..{:?} has non-positive extent on axis {a}",
                    self.min, self.max
                )));
            }
        }
        if self.min.iter().chain(self.max.iter()).any(|v| !v.is_finite()) {
            return Err(Error::config("rectangle corners must be finite"));
        }
        Ok(())
    }

    fn contains_in_plane(&self, p: Point3, axis: usize) -> bool {
        (0..3)
            .filter(|&a| a != axis)
            .all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Whether the open segment `from -> to` crosses the rectangle.
    pub fn intersects_segment(&self, from: Point3, to: Point3) -> bool {
        let Ok(axis) = self.normal_axis() else {
            return false;
        };
        let plane = self.min[axis];
        let denom = to[axis] - from[axis];
        if denom == 0.0 {
            return false;
        }
        let t = (plane - from[axis]) / denom;
        if !(t > 1e-12 && t < 1.0 - 1e-12) {
            return false;
        }
        self.contains_in_plane(lerp(from, to, t), axis)
    }

    /// Same rectangle grown by `margin` in both in-plane directions.
    pub fn enlarged(&self, margin: f64) -> Self {
        let axis = self.normal_axis().unwrap_or(0);
        let mut out = *self;
        for a in (0..3).filter(|&a| a != axis) {
            out.min[a] -= margin;
            out.max[a] += margin;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    pub name: String,
    pub surface: Rect,
    /// Reflection coefficient in the sub-6 GHz band.
    pub sub6: Complex64,
    /// Reflection coefficient in the mmWave band.
    pub mmw: Complex64,
}

/// Rectangular grid of user positions at a fixed height.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserRegion {
    pub origin: Point3,
    /// Extent along x and y, meters.
    pub extent: [f64; 2],
    pub spacing: f64,
}

impl UserRegion {
    pub fn dims(&self) -> (usize, usize) {
        let n = |e: f64| (e / self.spacing + 1e-9).floor() as usize + 1;
        (n(self.extent[0]), n(self.extent[1]))
    }

    pub fn len(&self) -> usize {
        let (nx, ny) = self.dims();
        nx * ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid point `index`, x varying fastest.
    pub fn point(&self, index: usize) -> Point3 {
        let (nx, _) = self.dims();
        let (i, j) = (index % nx, index / nx);
        [
            self.origin[0] + i as f64 * self.spacing,
            self.origin[1] + j as f64 * self.spacing,
            self.origin[2],
        ]
    }

    pub fn points(&self) -> impl Iterator<Item = Point3> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::config("user_region.spacing must be positive"));
        }
        if self.extent.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(Error::config("user_region.extent must be non-negative"));
        }
        Ok(())
    }
}

/// Band, array and path budget for one of the two bands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSetup {
    pub band: BandConfig,
    pub array: ArrayConfig,
    /// Strongest paths kept per user.
    pub max_paths: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandId {
    Sub6,
    Mmw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub name: String,
    pub bs_position: Point3,
    /// Attenuation of the sub-6 GHz line-of-sight path behind the screen, dB.
    #[serde(default = "default_penetration_loss")]
    pub sub6_penetration_loss_db: f64,
    pub user_region: UserRegion,
    pub sub6: BandSetup,
    pub mmw: BandSetup,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blockage: Option<Rect>,
    #[serde(default)]
    pub reflectors: Vec<Reflector>,
}

fn default_penetration_loss() -> f64 {
    20.0
}

/// One grid user with its traced paths in both bands.
#[derive(Clone, Debug, PartialEq)]
pub struct UserSample {
    pub user_index: usize,
    pub position: Point3,
    pub paths_sub6: Vec<PathComponent>,
    pub paths_mmw: Vec<PathComponent>,
    pub los_blocked: bool,
}

impl Scene {
    pub fn band(&self, id: BandId) -> &BandSetup {
        match id {
            BandId::Sub6 => &self.sub6,
            BandId::Mmw => &self.mmw,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| Error::config(format!("{name}: {e}"));
        if self.bs_position.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("bs_position must be finite"));
        }
        self.user_region.validate().map_err(|e| field("user_region", e))?;
        for (name, setup) in [("sub6", &self.sub6), ("mmw", &self.mmw)] {
            setup.band.validate().map_err(|e| field(&format!("{name}.band"), e))?;
            setup.array.validate().map_err(|e| field(&format!("{name}.array"), e))?;
            if setup.max_paths == 0 {
                return Err(Error::config(format!("{name}.max_paths must be at least 1")));
            }
        }
        if let Some(screen) = &self.blockage {
            screen.validate().map_err(|e| field("blockage", e))?;
        }
        for (i, r) in self.reflectors.iter().enumerate() {
            r.surface
                .validate()
                .map_err(|e| field(&format!("reflectors[{i}] ({})", r.name), e))?;
            for (band, g) in [("sub6", r.sub6), ("mmw", r.mmw)] {
                let mag = g.norm();
                if !(mag > 0.0 && mag <= 1.0) {
                    return Err(Error::config(format!(
                        "reflectors[{i}] ({}).{band}: reflection magnitude {mag} outside (0, 1]",
                        r.name
                    )));
                }
            }
        }
        if !(self.sub6_penetration_loss_db >= 0.0) {
            return Err(Error::config("sub6_penetration_loss_db must be non-negative"));
        }
        Ok(())
    }

    /// Same scene with the blockage screen removed.
    pub fn without_blockage(&self) -> Scene {
        Scene {
            name: format!("{}-los", self.name),
            blockage: None,
            ..self.clone()
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        to_toml(self)
    }

    pub fn from_toml_str(text: &str) -> Result<Scene> {
        let scene: Scene = parse_toml("scene", text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Scene> {
        let text = read_text(path)?;
        let scene: Scene = parse_toml(&path.display().to_string(), &text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        write_file(path, self.to_toml_string()?.as_bytes())
    }
}

fn default_bands(mmw_antennas: usize) -> (BandSetup, BandSetup) {
    (
        BandSetup {
            band: BandConfig::sub6_default(),
            array: ArrayConfig::ula(4),
            max_paths: 15,
        },
        BandSetup {
            band: BandConfig::mmwave_default(),
            array: ArrayConfig::ula(mmw_antennas),
            max_paths: 5,
        },
    )
}

fn reflector(name: &str, surface: Rect) -> Reflector {
    Reflector {
        name: name.to_string(),
        surface,
        sub6: Complex64::new(0.7, 0.0),
        mmw: Complex64::new(0.3, 0.0),
    }
}

/// Street-canyon scene without blockage: one base station, two building
/// facades, and a 241 x 121 user grid.
pub fn demo_los_scene() -> Scene {
    let (sub6, mmw) = default_bands(64);
    Scene {
        name: "los-demo".into(),
        bs_position: [0.0, 0.0, 6.0],
        sub6_penetration_loss_db: 20.0,
        user_region: UserRegion {
            origin: [-30.0, 10.0, 1.5],
            extent: [60.0, 30.0],
            spacing: 0.25,
        },
        sub6,
        mmw,
        blockage: None,
        reflectors: vec![
            reflector("facade-west", Rect::new([-35.0, 0.0, 0.0], [-35.0, 60.0, 20.0])),
            reflector("facade-east", Rect::new([35.0, 0.0, 0.0], [35.0, 60.0, 20.0])),
        ],
    }
}

/// One base station with a 6 m screen right in front of it and one lateral
/// reflector on each side. Users sit in the region behind the screen.
pub fn demo_blockage_scene() -> Scene {
    let (sub6, mmw) = default_bands(64);
    Scene {
        name: "blockage-demo".into(),
        bs_position: [0.0, 0.0, 6.0],
        sub6_penetration_loss_db: 20.0,
        user_region: UserRegion {
            origin: [-12.0, 6.0, 1.5],
            extent: [24.0, 24.0],
            spacing: 0.25,
        },
        sub6,
        mmw,
        blockage: Some(Rect::new([-1.5, 4.0, 0.0], [1.5, 4.0, 6.0])),
        reflectors: vec![
            reflector("wall-west", Rect::new([-8.0, 0.0, 0.0], [-8.0, 40.0, 6.0])),
            reflector("wall-east", Rect::new([8.0, 0.0, 0.0], [8.0, 40.0, 6.0])),
        ],
    }
}

/// Whether the base-station-to-user segment crosses the blockage screen.
///
/// The bands share one answer because the arrays are co-located.
pub fn is_los_blocked(scene: &Scene, user_position: Point3) -> bool {
    scene
        .blockage
        .as_ref()
        .is_some_and(|s| s.intersects_segment(scene.bs_position, user_position))
}

fn path_towards(
    bs: Point3,
    first_hop: Point3,
    length: f64,
    wavelength: f64,
    coefficient: Complex64,
    kind: PathKind,
) -> PathComponent {
    let dir = sub(first_hop, bs);
    let r = norm(dir);
    let azimuth = dir[1].atan2(dir[0]);
    let elevation = (dir[2] / r).clamp(-1.0, 1.0).acos();
    let amplitude = wavelength / (4.0 * std::f64::consts::PI * length);
    let phase = -2.0 * std::f64::consts::PI * length / wavelength;
    PathComponent {
        gain: coefficient * Complex64::from_polar(amplitude, phase),
        delay: length / SPEED_OF_LIGHT,
        azimuth,
        elevation,
        kind,
    }
}

/// Traces line-of-sight and first-order specular paths for one band.
///
/// Paths are returned in tracing order (line of sight first); the per-band
/// path budget is applied by [`generate_dual_band_samples`].
pub fn trace_paths(scene: &Scene, user_position: Point3, band_id: BandId) -> Result<Vec<PathComponent>> {
    if user_position.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("user position must be finite"));
    }
    let bs = scene.bs_position;
    let los_length = norm(sub(user_position, bs));
    if los_length < 1e-9 {
        return Err(Error::invalid("user position coincides with the base station"));
    }
    let wavelength = scene.band(band_id).band.wavelength();
    let screen = scene.blockage.as_ref();
    let occluded = |a: Point3, b: Point3| screen.is_some_and(|s| s.intersects_segment(a, b));

    let mut paths = Vec::new();
    let blocked = is_los_blocked(scene, user_position);
    let los_coefficient = match (blocked, band_id) {
        (false, _) => Some(Complex64::new(1.0, 0.0)),
        (true, BandId::Sub6) => Some(Complex64::new(10f64.powf(-scene.sub6_penetration_loss_db / 20.0), 0.0)),
        (true, BandId::Mmw) => None,
    };
    if let Some(c) = los_coefficient {
        paths.push(path_towards(
            bs,
            user_position,
            los_length,
            wavelength,
            c,
            PathKind::LineOfSight,
        ));
    }

    for (index, r) in scene.reflectors.iter().enumerate() {
        let axis = r.surface.normal_axis()?;
        let plane = r.surface.min[axis];
        let (bs_side, user_side) = (bs[axis] - plane, user_position[axis] - plane);
        if bs_side * user_side <= 0.0 {
            continue;
        }
        let mut image = bs;
        image[axis] = 2.0 * plane - bs[axis];
        let t = (plane - image[axis]) / (user_position[axis] - image[axis]);
        let mut specular = lerp(image, user_position, t);
        specular[axis] = plane;
        if !r.surface.contains_in_plane(specular, axis) {
            continue;
        }
        if occluded(bs, specular) || occluded(specular, user_position) {
            continue;
        }
        let length = norm(sub(user_position, image));
        let coefficient = match band_id {
            BandId::Sub6 => r.sub6,
            BandId::Mmw => r.mmw,
        };
        paths.push(path_towards(
            bs,
            specular,
            length,
            wavelength,
            coefficient,
            PathKind::Reflection { reflector: index },
        ));
    }
    Ok(paths)
}

fn keep_strongest(mut paths: Vec<PathComponent>, max_paths: usize) -> Vec<PathComponent> {
    if paths.len() > max_paths {
        // Stable sort keeps tracing order among equal-strength paths.
        paths.sort_by(|a, b| b.gain.norm().partial_cmp(&a.gain.norm()).unwrap_or(std::cmp::Ordering::Equal));
        paths.truncate(max_paths);
    }
    paths
}

/// Traces one user of the scene's grid.
pub fn sample_user(scene: &Scene, user_index: usize) -> Result<UserSample> {
    let position = scene.user_region.point(user_index);
    Ok(UserSample {
        user_index,
        position,
        paths_sub6: keep_strongest(trace_paths(scene, position, BandId::Sub6)?, scene.sub6.max_paths),
        paths_mmw: keep_strongest(trace_paths(scene, position, BandId::Mmw)?, scene.mmw.max_paths),
        los_blocked: is_los_blocked(scene, position),
    })
}

/// One sample per grid point, in grid order.
///
/// Tracing is purely geometric, so the output depends only on the scene.
pub fn generate_dual_band_samples(scene: &Scene) -> Result<Vec<UserSample>> {
    scene.validate()?;
    (0..scene.user_region.len()).map(|i| sample_user(scene, i)).collect()
}

/// Clean channels of one user in both bands.
#[derive(Clone, Debug, PartialEq)]
pub struct DualBandChannels {
    pub user_index: usize,
    pub position: Point3,
    pub sub6: OfdmChannel,
    pub mmw: OfdmChannel,
    pub los_blocked: bool,
}

/// Assembles the OFDM channels of every sample.
pub fn realize_channels(scene: &Scene, samples: &[UserSample]) -> Result<Vec<DualBandChannels>> {
    samples
        .iter()
        .map(|s| {
            Ok(DualBandChannels {
                user_index: s.user_index,
                position: s.position,
                sub6: assemble_ofdm_channel(&s.paths_sub6, &scene.sub6.band, &scene.sub6.array)?,
                mmw: assemble_ofdm_channel(&s.paths_mmw, &scene.mmw.band, &scene.mmw.array)?,
                los_blocked: s.los_blocked,
            })
        })
        .collect()
}
