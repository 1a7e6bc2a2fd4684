//! Emission source: pairs of blue/green wave packets leaving the source at
//! the same instant, emitted as a homogeneous Poisson process.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erf;

use crate::error::{require, require_positive, ConfigError};
use crate::rng::{lane_rng, Lane};

/// Gaussian envelopes are cut at this many standard deviations.
pub const GAUSSIAN_SUPPORT_SIGMAS: f64 = 4.0;

/// Expected number of emissions per generation shard.
const SHARD_EXPECTED_EMISSIONS: f64 = 65_536.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeShape {
    Rectangular,
    Gaussian,
}

/// Temporal intensity profile of one packet.
///
/// The intensity is `amplitude_scale²` times a unit-height shape: a box of
/// width `duration_or_sigma`, or a Gaussian of standard deviation
/// `duration_or_sigma` truncated at ±4σ. Offsets are measured from the packet
/// centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub shape: EnvelopeShape,
    pub duration_or_sigma: f64,
    pub amplitude_scale: f64,
}

impl Default for EnvelopeSpec {
    fn default() -> Self {
        Self::gaussian(1e-9, 1.0)
    }
}

impl EnvelopeSpec {
    pub fn gaussian(sigma: f64, amplitude_scale: f64) -> Self {
        Self {
            shape: EnvelopeShape::Gaussian,
            duration_or_sigma: sigma,
            amplitude_scale,
        }
    }

    pub fn rectangular(duration: f64, amplitude_scale: f64) -> Self {
        Self {
            shape: EnvelopeShape::Rectangular,
            duration_or_sigma: duration,
            amplitude_scale,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        require_positive(self.duration_or_sigma, "duration_or_sigma")?;
        require_positive(self.amplitude_scale, "amplitude_scale")
    }

    /// Full width of the interval outside which the intensity is zero.
    pub fn support_width(&self) -> f64 {
        match self.shape {
            EnvelopeShape::Rectangular => self.duration_or_sigma,
            EnvelopeShape::Gaussian => 2.0 * GAUSSIAN_SUPPORT_SIGMAS * self.duration_or_sigma,
        }
    }

    pub fn half_support(&self) -> f64 {
        0.5 * self.support_width()
    }

    /// Integral of the unit-height shape over its support.
    pub fn shape_normalization(&self) -> f64 {
        match self.shape {
            EnvelopeShape::Rectangular => self.duration_or_sigma,
            EnvelopeShape::Gaussian => {
                let k = GAUSSIAN_SUPPORT_SIGMAS;
                self.duration_or_sigma * (2.0 * std::f64::consts::PI).sqrt() * erf(k / 2f64.sqrt())
            }
        }
    }

    /// Time-integrated intensity of the whole packet.
    pub fn energy(&self) -> f64 {
        self.amplitude_scale * self.amplitude_scale * self.shape_normalization()
    }

    /// Instantaneous intensity at `offset` from the packet centre.
    pub fn intensity(&self, offset: f64) -> f64 {
        if offset.abs() > self.half_support() {
            return 0.0;
        }
        let a2 = self.amplitude_scale * self.amplitude_scale;
        match self.shape {
            EnvelopeShape::Rectangular => a2,
            EnvelopeShape::Gaussian => {
                let z = offset / self.duration_or_sigma;
                a2 * (-0.5 * z * z).exp()
            }
        }
    }

    /// Fraction of the packet energy that has arrived by `offset`.
    pub fn cumulative_fraction(&self, offset: f64) -> f64 {
        let h = self.half_support();
        if offset <= -h {
            return 0.0;
        }
        if offset >= h {
            return 1.0;
        }
        match self.shape {
            EnvelopeShape::Rectangular => (offset + h) / self.duration_or_sigma,
            EnvelopeShape::Gaussian => {
                let k = GAUSSIAN_SUPPORT_SIGMAS;
                let z = offset / self.duration_or_sigma;
                let lo = standard_normal_cdf(-k);
                let span = standard_normal_cdf(k) - lo;
                ((standard_normal_cdf(z) - lo) / span).clamp(0.0, 1.0)
            }
        }
    }

    /// Offset at which the given energy fraction has arrived.
    pub fn inverse_cumulative(&self, fraction: f64) -> f64 {
        let fraction = fraction.clamp(0.0, 1.0);
        let h = self.half_support();
        match self.shape {
            EnvelopeShape::Rectangular => fraction * self.duration_or_sigma - h,
            EnvelopeShape::Gaussian => {
                let k = GAUSSIAN_SUPPORT_SIGMAS;
                let lo = standard_normal_cdf(-k);
                let span = standard_normal_cdf(k) - lo;
                let normal = Normal::new(0.0, 1.0).expect("unit normal");
                let z = normal.inverse_cdf(lo + fraction * span);
                (z * self.duration_or_sigma).clamp(-h, h)
            }
        }
    }

    /// Variance of the normalized intensity profile.
    pub fn profile_variance(&self) -> f64 {
        let w = self.duration_or_sigma;
        match self.shape {
            EnvelopeShape::Rectangular => w * w / 12.0,
            EnvelopeShape::Gaussian => {
                let k = GAUSSIAN_SUPPORT_SIGMAS;
                let pdf = (-0.5 * k * k).exp() / (2.0 * std::f64::consts::PI).sqrt();
                let mass = erf(k / 2f64.sqrt());
                w * w * (1.0 - 2.0 * k * pdf / mass)
            }
        }
    }

    /// Draw an arrival offset from the normalized intensity profile.
    pub fn sample_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.shape {
            EnvelopeShape::Rectangular => (rng.random::<f64>() - 0.5) * self.duration_or_sigma,
            EnvelopeShape::Gaussian => loop {
                let z: f64 = StandardNormal.sample(rng);
                if z.abs() <= GAUSSIAN_SUPPORT_SIGMAS {
                    break z * self.duration_or_sigma;
                }
            },
        }
    }
}

fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / 2f64.sqrt()))
}

/// One emission: a blue and a green packet that leave the source together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavePacketPair {
    pub emission_time: f64,
    pub blue: EnvelopeSpec,
    pub green: EnvelopeSpec,
    pub pair_id: u64,
}

impl WavePacketPair {
    /// Both packets peak here (before path delays). The emission time is the
    /// leading edge of the wider packet, so no intensity precedes it.
    pub fn center_time(&self) -> f64 {
        self.emission_time + self.blue.half_support().max(self.green.half_support())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    /// Emissions per second.
    pub mean_emission_rate: f64,
    /// Seconds.
    pub run_duration: f64,
    pub rng_seed: u64,
    pub blue: EnvelopeSpec,
    pub green: EnvelopeSpec,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            mean_emission_rate: 1_000.0,
            run_duration: 1_150.0,
            rng_seed: 1,
            blue: EnvelopeSpec::default(),
            green: EnvelopeSpec::default(),
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require_positive(self.mean_emission_rate, "mean_emission_rate")?;
        require_positive(self.run_duration, "run_duration")?;
        require(
            self.mean_emission_rate * self.run_duration >= 1.0,
            "mean_emission_rate",
            "rate x duration must be at least 1 expected emission",
        )?;
        self.blue.validate().map_err(|e| e.nested("blue"))?;
        self.green.validate().map_err(|e| e.nested("green"))
    }

    /// Widest packet support among the two colours.
    pub fn packet_support(&self) -> f64 {
        self.blue.support_width().max(self.green.support_width())
    }

    fn shard_span(&self) -> f64 {
        SHARD_EXPECTED_EMISSIONS / self.mean_emission_rate
    }

    pub fn shard_count(&self) -> u64 {
        (self.run_duration / self.shard_span()).ceil().max(1.0) as u64
    }
}

/// Poisson emission times on `[0, run_duration]`, sorted, with sequential ids.
///
/// The run is cut into fixed shards, each drawn from its own seed lane, so the
/// output does not depend on the number of worker threads.
pub fn generate_emissions(config: &SourceConfig) -> Result<Vec<WavePacketPair>, ConfigError> {
    config.validate().map_err(|e| e.nested("source"))?;
    let span = config.shard_span();
    let gaps = Exp::new(config.mean_emission_rate)
        .map_err(|e| ConfigError::new("source.mean_emission_rate", e.to_string()))?;
    let shards: Vec<Vec<f64>> = (0..config.shard_count())
        .into_par_iter()
        .map(|k| {
            let start = k as f64 * span;
            let end = ((k + 1) as f64 * span).min(config.run_duration);
            let mut rng = lane_rng(config.rng_seed, Lane::Source, k);
            let mut times = Vec::with_capacity(SHARD_EXPECTED_EMISSIONS as usize + 1024);
            let mut t = start;
            loop {
                t += gaps.sample(&mut rng);
                if t > end {
                    break;
                }
                times.push(t);
            }
            times
        })
        .collect();

    Ok(shards
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(i, emission_time)| WavePacketPair {
            emission_time,
            blue: config.blue,
            green: config.green,
            pair_id: i as u64,
        })
        .collect())
}

/// Probability that some other emission lands within `±(2α + support)` of a
/// given one, i.e. `1 − exp(−rate·(4α + 2·support))`.
pub fn expected_overlap_probability(config: &SourceConfig, alpha: f64) -> Result<f64, ConfigError> {
    require_positive(alpha, "alpha")?;
    let window = 4.0 * alpha + 2.0 * config.packet_support();
    Ok(-(-config.mean_emission_rate * window).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(rate: f64, duration: f64, seed: u64) -> SourceConfig {
        SourceConfig {
            mean_emission_rate: rate,
            run_duration: duration,
            rng_seed: seed,
            ..SourceConfig::default()
        }
    }

    #[test]
    fn zero_rate_rejected() {
        let err = generate_emissions(&config(0.0, 1.0, 1)).unwrap_err();
        assert_eq!(err.field, "source.mean_emission_rate");
    }

    #[test]
    fn nonpositive_sigma_rejected() {
        let mut c = config(10.0, 1.0, 1);
        c.green.duration_or_sigma = 0.0;
        assert_eq!(
            generate_emissions(&c).unwrap_err().field,
            "source.green.duration_or_sigma"
        );
    }

    #[test]
    fn equal_seeds_give_identical_streams() {
        let c = config(5e4, 3.0, 99);
        assert_eq!(generate_emissions(&c).unwrap(), generate_emissions(&c).unwrap());
        let other = generate_emissions(&config(5e4, 3.0, 100)).unwrap();
        assert_ne!(generate_emissions(&c).unwrap(), other);
    }

    #[test]
    fn output_is_sorted_with_increasing_ids() {
        let pairs = generate_emissions(&config(2e5, 1.0, 3)).unwrap();
        assert!(pairs.len() > 1000);
        for w in pairs.windows(2) {
            assert!(w[0].emission_time < w[1].emission_time);
            assert_eq!(w[0].pair_id + 1, w[1].pair_id);
        }
        assert!(pairs.iter().all(|p| (0.0..=1.0).contains(&p.emission_time)));
        assert!(pairs.iter().all(|p| p.blue == p.green));
    }

    #[test]
    fn gaussian_energy_matches_quadrature() {
        let env = EnvelopeSpec::gaussian(2e-9, 1.5);
        let h = env.half_support();
        let n = 20_000;
        let dx = 2.0 * h / n as f64;
        let trapezoid: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * env.intensity(-h + i as f64 * dx)
            })
            .sum::<f64>()
            * dx;
        assert!((trapezoid - env.energy()).abs() / env.energy() < 1e-6);
    }

    #[test]
    fn inverse_cumulative_inverts_cumulative() {
        for env in [EnvelopeSpec::gaussian(1.0, 1.0), EnvelopeSpec::rectangular(3.0, 2.0)] {
            for i in 1..100 {
                let f = i as f64 / 100.0;
                let x = env.inverse_cumulative(f);
                assert!((env.cumulative_fraction(x) - f).abs() < 1e-9, "{env:?} {f}");
            }
        }
    }

    #[test]
    fn truncated_gaussian_variance_close_to_sigma_squared() {
        let env = EnvelopeSpec::gaussian(1.0, 1.0);
        let v = env.profile_variance();
        assert!(v < 1.0 && v > 0.998, "{v}");
    }

    #[test]
    fn overlap_probability_limits() {
        let tiny = config(1e-12, 1e12, 1);
        assert!(expected_overlap_probability(&tiny, 1e-9).unwrap() < 1e-18);
        let busy = config(1e6, 1.0, 1);
        assert!(expected_overlap_probability(&busy, 1.0).unwrap() > 1.0 - 1e-12);
        assert!(expected_overlap_probability(&busy, 0.0).is_err());
    }

    #[test]
    fn overlap_probability_formula() {
        let c = config(1e4, 1.0, 1);
        let alpha: f64 = 5e-9;
        let w = 4.0 * alpha + 2.0 * 8e-9;
        let expected = 1.0 - (-1e4 * w).exp();
        assert!((expected_overlap_probability(&c, alpha).unwrap() - expected).abs() < 1e-15);
    }
}
