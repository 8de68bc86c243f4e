//! Wideband geometric channel model.
//!
//! A user's channel on subcarrier `k` is the sum over propagation paths of the
//! path gain, the tapped-delay-line response of the pulse shape, and the array
//! response at the path's angle of arrival:
//!
//! ```text
//! h[k] = sum_{d<D} sum_l  gain_l * exp(-j 2 pi k d / K) * p(d Ts - delay_l) * a(az_l, el_l)
//! ```
//!
//! Only the first `num_subcarriers_used` subcarriers are materialized.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use crate::util::derive_seed;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum PathKind {
    LineOfSight,
    Reflection { reflector: usize },
}

/// One propagation path between the base station and a user.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    /// Complex amplitude including path loss and carrier phase.
    pub gain: Complex64,
    /// Propagation delay in seconds.
    pub delay: f64,
    /// Azimuth of arrival, radians, measured from the array axis.
    pub azimuth: f64,
    /// Polar angle of arrival, radians; `pi/2` is the horizontal plane.
    pub elevation: f64,
    pub kind: PathKind,
}

impl PathComponent {
    pub fn new(gain: Complex64, delay: f64, azimuth: f64, elevation: f64) -> Self {
        Self {
            gain,
            delay,
            azimuth,
            elevation,
            kind: PathKind::LineOfSight,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrayGeometry {
    #[default]
    UniformLinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub num_antennas: usize,
    #[serde(default = "default_spacing")]
    pub spacing_wavelengths: f64,
    #[serde(default)]
    pub geometry: ArrayGeometry,
}

fn default_spacing() -> f64 {
    0.5
}

impl ArrayConfig {
    /// Half-wavelength uniform linear array.
    pub fn ula(num_antennas: usize) -> Self {
        Self {
            num_antennas,
            spacing_wavelengths: 0.5,
            geometry: ArrayGeometry::UniformLinear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 {
            return Err(Error::config("array needs at least one antenna"));
        }
        if !(self.spacing_wavelengths > 0.0 && self.spacing_wavelengths.is_finite()) {
            return Err(Error::config(format!(
                "antenna spacing must be positive, got {}",
                self.spacing_wavelengths
            )));
        }
        Ok(())
    }
}

/// Pulse-shaping function sampled by the tapped delay line.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pulse {
    /// Normalized sinc, `sin(pi x) / (pi x)` with `x = t / Ts`.
    #[default]
    Sinc,
    /// Unit-height pulse on `-Ts/2 <= t < Ts/2`.
    Rectangular,
}

impl Pulse {
    /// Pulse value at `t = x * Ts`.
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Pulse::Sinc => {
                if x == 0.0 {
                    1.0
                } else {
                    let px = PI * x;
                    px.sin() / px
                }
            }
            Pulse::Rectangular => {
                if (-0.5..0.5).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// OFDM and link-budget parameters for one band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub carrier_frequency: f64,
    pub bandwidth: f64,
    pub num_subcarriers_total: usize,
    pub num_subcarriers_used: usize,
    pub cyclic_prefix_taps: usize,
    /// Transmit power in watts.
    pub tx_power: f64,
    /// Noise variance on one subcarrier, watts.
    pub noise_power_per_subcarrier: f64,
    pub sampling_time: f64,
    #[serde(default)]
    pub pulse: Pulse,
}

impl BandConfig {
    /// Builds a band with `sampling_time = 1 / bandwidth`.
    ///
    /// The noise variance per subcarrier is thermal noise (-174 dBm/Hz) over one
    /// subcarrier spacing plus `noise_figure_db`.
    pub fn new(
        carrier_frequency: f64,
        bandwidth: f64,
        num_subcarriers_total: usize,
        num_subcarriers_used: usize,
        cyclic_prefix_taps: usize,
        tx_power_dbm: f64,
        noise_figure_db: f64,
    ) -> Self {
        let spacing = bandwidth / num_subcarriers_total as f64;
        let noise_dbm = -174.0 + 10.0 * spacing.log10() + noise_figure_db;
        Self {
            carrier_frequency,
            bandwidth,
            num_subcarriers_total,
            num_subcarriers_used,
            cyclic_prefix_taps,
            tx_power: dbm_to_watts(tx_power_dbm),
            noise_power_per_subcarrier: dbm_to_watts(noise_dbm),
            sampling_time: 1.0 / bandwidth,
            pulse: Pulse::Sinc,
        }
    }

    /// 3.5 GHz, 20 MHz, 32 subcarriers, 0 dBm uplink pilot, 5 dB noise figure.
    pub fn sub6_default() -> Self {
        Self::new(3.5e9, 20e6, 32, 32, 16, 0.0, 5.0)
    }

    /// 28 GHz, 500 MHz, 512 subcarriers of which 32 are used, 30 dBm, 5 dB noise figure.
    pub fn mmwave_default() -> Self {
        Self::new(28e9, 500e6, 512, 32, 256, 30.0, 5.0)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Largest admissible path delay (exclusive), `D * Ts`.
    pub fn max_delay(&self) -> f64 {
        self.cyclic_prefix_taps as f64 * self.sampling_time
    }

    /// Per-subcarrier SNR `P / (K sigma^2)`.
    pub fn per_subcarrier_snr(&self) -> f64 {
        self.tx_power / (self.num_subcarriers_total as f64 * self.noise_power_per_subcarrier)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_frequency", self.carrier_frequency),
            ("bandwidth", self.bandwidth),
            ("sampling_time", self.sampling_time),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tx_power >= 0.0 && self.tx_power.is_finite()) {
            return Err(Error::config(format!("tx_power must be non-negative, got {}", self.tx_power)));
        }
        if !(self.noise_power_per_subcarrier >= 0.0 && self.noise_power_per_subcarrier.is_finite()) {
            return Err(Error::config("noise_power_per_subcarrier must be non-negative"));
        }
        if self.num_subcarriers_total == 0 || self.num_subcarriers_used == 0 || self.cyclic_prefix_taps == 0 {
            return Err(Error::config("subcarrier and cyclic prefix counts must be positive"));
        }
        if self.num_subcarriers_used > self.num_subcarriers_total {
            return Err(Error::config(format!(
                "num_subcarriers_used ({}) exceeds num_subcarriers_total ({})",
                self.num_subcarriers_used, self.num_subcarriers_total
            )));
        }
        if ((self.sampling_time * self.bandwidth) - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "sampling_time * bandwidth must equal 1, got {}",
                self.sampling_time * self.bandwidth
            )));
        }
        Ok(())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Per-subcarrier channel vectors of one user in one band.
#[derive(Clone, Debug, PartialEq)]
pub struct OfdmChannel {
    /// `num_antennas x num_subcarriers_used`.
    pub entries: Array2<Complex64>,
    pub band: BandConfig,
    pub array: ArrayConfig,
}

impl OfdmChannel {
    pub fn zeros(band: BandConfig, array: ArrayConfig) -> Self {
        Self {
            entries: Array2::zeros((array.num_antennas, band.num_subcarriers_used)),
            band,
            array,
        }
    }

    /// Wraps an entry matrix, checking its shape and finiteness.
    pub fn from_entries(entries: Array2<Complex64>, band: BandConfig, array: ArrayConfig) -> Result<Self> {
        if entries.dim() != (array.num_antennas, band.num_subcarriers_used) {
            return Err(Error::Schema(format!(
                "channel shape {:?} does not match {} antennas x {} subcarriers",
                entries.dim(),
                array.num_antennas,
                band.num_subcarriers_used
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("channel contains non-finite entries"));
        }
        Ok(Self { entries, band, array })
    }

    pub fn num_antennas(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.entries.ncols()
    }

    /// Mean of `|h|^2` over all entries.
    pub fn mean_power(&self) -> f64 {
        let n = self.entries.len();
        if n == 0 {
            return 0.0;
        }
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64
    }

    pub fn max_magnitude(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Array response of a uniform linear array.
///
/// Element `m` is `exp(j 2 pi d m cos(az) sin(el))`.
pub fn array_response(azimuth: f64, elevation: f64, array: &ArrayConfig) -> Result<Vec<Complex64>> {
    if !azimuth.is_finite() || !elevation.is_finite() {
        return Err(Error::invalid(format!(
            "non-finite angles (azimuth {azimuth}, elevation {elevation})"
        )));
    }
    array.validate()?;
    match array.geometry {
        ArrayGeometry::UniformLinear => {
            let step = 2.0 * PI * array.spacing_wavelengths * azimuth.cos() * elevation.sin();
            Ok((0..array.num_antennas)
                .map(|m| Complex64::from_polar(1.0, step * m as f64))
                .collect())
        }
    }
}

/// Frequency response of one path on the used subcarriers, without the gain
/// and array response: `sum_{d<D} exp(-j 2 pi k d / K) p(d - delay/Ts)`.
fn delay_response(delay: f64, band: &BandConfig, twiddles: &[Complex64]) -> Vec<Complex64> {
    let k_total = band.num_subcarriers_total;
    let taps: Vec<f64> = (0..band.cyclic_prefix_taps)
        .map(|d| band.pulse.eval(d as f64 - delay / band.sampling_time))
        .collect();
    (0..band.num_subcarriers_used)
        .map(|k| {
            taps.iter()
                .enumerate()
                .filter(|(_, &p)| p != 0.0)
                .map(|(d, &p)| twiddles[(k * d) % k_total] * p)
                .sum()
        })
        .collect()
}

/// Builds the OFDM channel from a set of propagation paths.
pub fn assemble_ofdm_channel(
    paths: &[PathComponent],
    band: &BandConfig,
    array: &ArrayConfig,
) -> Result<OfdmChannel> {
    band.validate()?;
    array.validate()?;
    let limit = band.max_delay();
    for p in paths {
        if !(p.delay >= 0.0 && p.delay < limit) {
            return Err(Error::OutOfPrefix { delay: p.delay, limit });
        }
        if !p.gain.re.is_finite() || !p.gain.im.is_finite() {
            return Err(Error::invalid("non-finite path gain"));
        }
    }

    let mut channel = OfdmChannel::zeros(*band, *array);
    if paths.is_empty() {
        return Ok(channel);
    }
    let k_total = band.num_subcarriers_total;
    let twiddles: Vec<Complex64> = (0..k_total)
        .map(|i| Complex64::from_polar(1.0, -2.0 * PI * i as f64 / k_total as f64))
        .collect();

    for p in paths {
        let response = array_response(p.azimuth, p.elevation, array)?;
        let freq = delay_response(p.delay, band, &twiddles);
        for (m, a) in response.iter().enumerate() {
            let ga = p.gain * a;
            for (k, f) in freq.iter().enumerate() {
                channel.entries[[m, k]] += ga * f;
            }
        }
    }
    Ok(channel)
}

fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Adds circular complex Gaussian noise of the given per-entry variance.
pub fn add_noise_variance(channel: &OfdmChannel, variance: f64, rng_seed: u64) -> OfdmChannel {
    if variance == 0.0 {
        return channel.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = channel.clone();
    for z in out.entries.iter_mut() {
        *z += complex_gaussian(&mut rng, variance);
    }
    out
}

/// Noise variance giving `reference_power / variance = 10^(snr_db/10)`.
///
/// `snr_db = +inf` means noiseless and yields zero.
pub fn noise_variance_for_snr(reference_power: f64, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        reference_power / 10f64.powf(snr_db / 10.0)
    }
}

/// Adds noise at `snr_db` relative to the channel's own mean entry power.
///
/// Datasets use [`add_channel_noise_with_reference`] so one noise variance is
/// shared by every user.
pub fn add_channel_noise(channel: &OfdmChannel, snr_db: f64, rng_seed: u64) -> OfdmChannel {
    add_channel_noise_with_reference(channel, snr_db, channel.mean_power(), rng_seed)
}

pub fn add_channel_noise_with_reference(
    channel: &OfdmChannel,
    snr_db: f64,
    reference_power: f64,
    rng_seed: u64,
) -> OfdmChannel {
    add_noise_variance(channel, noise_variance_for_snr(reference_power, snr_db), rng_seed)
}

/// Least-squares channel estimate from one uplink pilot per subcarrier.
///
/// The pilot carries `tx_power / num_subcarriers_total` per subcarrier and the
/// receiver adds noise of variance `noise_power_per_subcarrier` per antenna.
pub fn simulate_uplink_pilot(channel: &OfdmChannel, band: &BandConfig, rng_seed: u64) -> Result<OfdmChannel> {
    if !channel.is_finite() {
        return Err(Error::invalid("channel contains non-finite entries"));
    }
    let pilot_power = band.tx_power / band.num_subcarriers_total as f64;
    if !(pilot_power > 0.0) {
        return Err(Error::config("uplink pilot power must be positive"));
    }
    let sigma2 = band.noise_power_per_subcarrier;
    if sigma2 == 0.0 {
        return Ok(channel.clone());
    }
    let pilot = pilot_power.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = channel.clone();
    for z in out.entries.iter_mut() {
        let received = *z * pilot + complex_gaussian(&mut rng, sigma2);
        *z = received / pilot;
    }
    Ok(out)
}
