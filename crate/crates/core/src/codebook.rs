//! Beam-steering codebook, achievable rate and the exhaustive-search oracle.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::{ArrayConfig, OfdmChannel};
use crate::util::{argmax, top_n_indices};
use crate::{Error, Result};

/// Ordered set of unit-norm analog beamforming vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    beams: Vec<Vec<Complex64>>,
}

impl Codebook {
    /// Wraps explicit beams; all must share one length.
    pub fn from_beams(beams: Vec<Vec<Complex64>>) -> Result<Self> {
        let Some(first) = beams.first() else {
            return Err(Error::invalid("codebook must contain at least one beam"));
        };
        let m = first.len();
        if m == 0 || beams.iter().any(|b| b.len() != m) {
            return Err(Error::invalid("codebook beams must share one non-zero length"));
        }
        Ok(Self { beams })
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn num_antennas(&self) -> usize {
        self.beams.first().map_or(0, Vec::len)
    }

    pub fn beam(&self, n: usize) -> &[Complex64] {
        &self.beams[n]
    }

    pub fn beams(&self) -> impl Iterator<Item = &[Complex64]> {
        self.beams.iter().map(Vec::as_slice)
    }
}

/// Quantized steering codebook with `size` beams.
///
/// Beam `n` has per-element phase increment `2 pi n / size`, i.e. the array
/// response with `2 pi d cos(az) sin(el)` replaced by the sampled phase, and
/// entries of modulus `1 / sqrt(M)`.
pub fn build_steering_codebook(array: &ArrayConfig, size: usize) -> Result<Codebook> {
    if size < 1 {
        return Err(Error::invalid("codebook size must be at least 1"));
    }
    array.validate()?;
    let m = array.num_antennas;
    let scale = 1.0 / (m as f64).sqrt();
    let beams = (0..size)
        .map(|n| {
            let step = 2.0 * PI * n as f64 / size as f64;
            (0..m).map(|i| Complex64::from_polar(scale, step * i as f64)).collect()
        })
        .collect();
    Ok(Codebook { beams })
}

/// Rates of every codebook beam for one user and the oracle beam.
#[derive(Clone, Debug, PartialEq)]
pub struct RateProfile {
    pub rates: Vec<f64>,
    pub best_index: usize,
}

impl RateProfile {
    pub fn from_rates(rates: Vec<f64>) -> Self {
        let best_index = argmax(&rates);
        Self { rates, best_index }
    }

    pub fn best_rate(&self) -> f64 {
        self.rates[self.best_index]
    }

    /// Number of beams other than the best one with exactly the best rate.
    pub fn tie_count(&self) -> usize {
        let best = self.best_rate();
        self.rates.iter().filter(|&&r| r == best).count() - 1
    }
}

fn check_beam(channel: &OfdmChannel, beam: &[Complex64]) -> Result<()> {
    if beam.len() != channel.num_antennas() {
        return Err(Error::invalid(format!(
            "beam length {} does not match {} channel antennas",
            beam.len(),
            channel.num_antennas()
        )));
    }
    Ok(())
}

/// `|h[k]^T f|^2` for every used subcarrier.
fn beam_gains<'a>(channel: &'a OfdmChannel, beam: &'a [Complex64]) -> impl Iterator<Item = f64> + 'a {
    channel.entries.columns().into_iter().map(move |h| {
        h.iter()
            .zip(beam.iter())
            .map(|(a, b)| a * b)
            .sum::<Complex64>()
            .norm_sqr()
    })
}

/// `sum_k log2(1 + snr |h[k]^T f|^2)` over the used subcarriers.
pub fn achievable_rate(channel: &OfdmChannel, beam: &[Complex64], snr_linear: f64) -> Result<f64> {
    check_beam(channel, beam)?;
    Ok(beam_gains(channel, beam).map(|g| (1.0 + snr_linear * g).log2()).sum())
}

/// Exhaustive search over the codebook; lowest index wins ties.
pub fn optimal_beam(channel: &OfdmChannel, codebook: &Codebook, snr_linear: f64) -> Result<RateProfile> {
    if codebook.is_empty() {
        return Err(Error::invalid("empty codebook"));
    }
    let rates = codebook
        .beams()
        .map(|b| achievable_rate(channel, b, snr_linear))
        .collect::<Result<Vec<_>>>()?;
    Ok(RateProfile::from_rates(rates))
}

/// Indices of the `n` best beams, descending by rate.
pub fn top_n_beams(profile: &RateProfile, n: usize) -> Result<Vec<usize>> {
    if n < 1 || n > profile.rates.len() {
        return Err(Error::invalid(format!(
            "n = {n} outside 1..={}",
            profile.rates.len()
        )));
    }
    Ok(top_n_indices(&profile.rates, n))
}

/// Received power `sum_k |h[k]^T f_n|^2` of every beam.
pub fn beam_powers(channel: &OfdmChannel, codebook: &Codebook) -> Result<Vec<f64>> {
    codebook
        .beams()
        .map(|b| {
            check_beam(channel, b)?;
            Ok(beam_gains(channel, b).sum())
        })
        .collect()
}

/// Strongest-to-second-strongest beam power ratio.
///
/// Returns `+inf` when the second strongest beam carries no power.
pub fn power_ratio(channel: &OfdmChannel, codebook: &Codebook) -> Result<f64> {
    if codebook.len() < 2 {
        return Err(Error::invalid("power ratio needs at least two beams"));
    }
    let powers = beam_powers(channel, codebook)?;
    let order = top_n_indices(&powers, 2);
    let (first, second) = (powers[order[0]], powers[order[1]]);
    Ok(if second == 0.0 { f64::INFINITY } else { first / second })
}

/// Power-rule blockage label: blocked iff the beam power ratio is below `threshold`.
pub fn power_ratio_label(channel: &OfdmChannel, codebook: &Codebook, threshold: f64) -> Result<bool> {
    if !(threshold >= 1.0) {
        return Err(Error::invalid(format!("power-rule threshold must be >= 1, got {threshold}")));
    }
    Ok(power_ratio(channel, codebook)? < threshold)
}
