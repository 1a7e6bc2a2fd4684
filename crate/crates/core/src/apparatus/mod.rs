//! Filters, the half-transparent mirror and the three detectors.
//!
//! Two detector physics are available. [`copenhagen`] routes each green photon
//! as a whole to exactly one of D1/D2. [`planck`] splits the green intensity
//! between D1 and D2 and lets banks of microscopic absorbers fill continuously
//! and fire independently.

pub mod copenhagen;
pub mod planck;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{require, require_nonnegative, require_probability, ConfigError};
use crate::source::WavePacketPair;
use crate::timetag::{Channel, EventStreams, RunMetadata, StreamError, CHANNELS};

pub use copenhagen::detect_copenhagen;
pub use planck::{detect_planck, replay_packet, AbsorberBank, EnergyAccount};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicsModel {
    Copenhagen,
    Planck,
}

impl PhysicsModel {
    pub fn label(self) -> &'static str {
        match self {
            PhysicsModel::Copenhagen => "copenhagen",
            PhysicsModel::Planck => "planck",
        }
    }
}

impl std::str::FromStr for PhysicsModel {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "copenhagen" => Ok(PhysicsModel::Copenhagen),
            "planck" => Ok(PhysicsModel::Planck),
            other => Err(ConfigError::new(
                "physics_model",
                format!("unknown model {other:?} (expected copenhagen or planck)"),
            )),
        }
    }
}

/// What an absorber's fill level becomes right after it signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsorberReset {
    FreshUniform,
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanckParams {
    pub absorbers_per_detector: usize,
    /// Fill units per (intensity × second), applied to each absorber's share.
    pub fill_gain: f64,
    /// Delay between saturation and the emitted signal.
    pub signal_latency: f64,
    pub reset: AbsorberReset,
}

impl Default for PlanckParams {
    fn default() -> Self {
        Self {
            absorbers_per_detector: 64,
            fill_gain: 2.0e8,
            signal_latency: 0.0,
            reset: AbsorberReset::FreshUniform,
        }
    }
}

/// Optical layout and detector parameters. Arrays are indexed D0, D1, D2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApparatusConfig {
    /// Fraction of the green intensity sent to D1; the rest goes to D2.
    pub splitter_transmittance: f64,
    pub path_delays: [f64; CHANNELS],
    pub detector_efficiencies: [f64; CHANNELS],
    pub dead_time: [f64; CHANNELS],
    pub physics_model: PhysicsModel,
    pub planck: PlanckParams,
}

impl Default for ApparatusConfig {
    fn default() -> Self {
        Self {
            splitter_transmittance: 0.5,
            path_delays: [0.0; CHANNELS],
            detector_efficiencies: [0.95, 0.9, 0.9],
            dead_time: [0.0; CHANNELS],
            physics_model: PhysicsModel::Planck,
            planck: PlanckParams::default(),
        }
    }
}

impl ApparatusConfig {
    pub fn reflectance(&self) -> f64 {
        1.0 - self.splitter_transmittance
    }

    /// Fraction of a packet's intensity that reaches each detector's absorbers.
    pub fn intensity_share(&self, channel: Channel) -> f64 {
        let eff = self.detector_efficiencies[channel.index()];
        match channel {
            Channel::D0 => eff,
            Channel::D1 => self.splitter_transmittance * eff,
            Channel::D2 => self.reflectance() * eff,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        require_probability(self.splitter_transmittance, "splitter_transmittance")?;
        for ch in Channel::ALL {
            let i = ch.index();
            require_nonnegative(self.path_delays[i], &format!("path_delays[{i}]"))?;
            require_probability(
                self.detector_efficiencies[i],
                &format!("detector_efficiencies[{i}]"),
            )?;
            require_nonnegative(self.dead_time[i], &format!("dead_time[{i}]"))?;
        }
        let p = &self.planck;
        require(
            p.absorbers_per_detector >= 1,
            "planck.absorbers_per_detector",
            "must be at least 1",
        )?;
        require_nonnegative(p.fill_gain, "planck.fill_gain")?;
        require_nonnegative(p.signal_latency, "planck.signal_latency")
    }
}

/// A detection with the pair that caused it (simulation ground truth).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedEvent {
    pub channel: Channel,
    pub timestamp: f64,
    pub pair_id: u64,
}

/// Detector output: the analysable streams plus the ground truth behind them.
#[derive(Debug, Clone)]
pub struct DetectionRun {
    pub streams: EventStreams,
    /// Every registered event before dead time, in generation order.
    pub events: Vec<TaggedEvent>,
    /// Planck model only: per-detector energy bookkeeping.
    pub energy: Option<[EnergyAccount; CHANNELS]>,
}

#[derive(Debug, Error)]
pub enum ApparatusError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("channel {channel:?} is not sorted at index {index}")]
    Unsorted { channel: Channel, index: usize },
    #[error(transparent)]
    Stream(#[from] StreamError),
}

/// Runs whichever physics `config.physics_model` selects, with fresh absorber
/// banks for the Planck model.
pub fn detect(
    pairs: &[WavePacketPair],
    config: &ApparatusConfig,
    rng_seed: u64,
) -> Result<DetectionRun, ApparatusError> {
    match config.physics_model {
        PhysicsModel::Copenhagen => detect_copenhagen(pairs, config, rng_seed),
        PhysicsModel::Planck => {
            let banks = planck::fresh_banks(config, rng_seed);
            detect_planck(pairs, config, banks, rng_seed)
        }
    }
}

/// Drops every event closer than `dead_time` to the last retained one.
pub fn dead_time_filter(times: &[f64], dead_time: f64) -> Result<Vec<f64>, usize> {
    if let Some(i) = (1..times.len()).find(|&i| times[i] < times[i - 1]) {
        return Err(i);
    }
    if dead_time == 0.0 {
        return Ok(times.to_vec());
    }
    let mut kept: Vec<f64> = Vec::with_capacity(times.len());
    for &t in times {
        if kept.last().is_none_or(|&last| t - last >= dead_time) {
            kept.push(t);
        }
    }
    Ok(kept)
}

/// Applies a per-channel dead time to already sorted streams.
pub fn apply_dead_time(
    streams: &EventStreams,
    dead_time: [f64; CHANNELS],
) -> Result<EventStreams, ApparatusError> {
    let mut channels: [Vec<f64>; CHANNELS] = Default::default();
    for ch in Channel::ALL {
        let i = ch.index();
        require_nonnegative(dead_time[i], &format!("dead_time[{i}]"))?;
        channels[i] = dead_time_filter(streams.channel(ch), dead_time[i])
            .map_err(|index| ApparatusError::Unsorted { channel: ch, index })?;
    }
    Ok(EventStreams::new(channels, streams.metadata.clone())?)
}

/// Sorts tagged events into channels and applies the configured dead time.
pub(crate) fn assemble(
    events: &[TaggedEvent],
    config: &ApparatusConfig,
    rng_seed: u64,
) -> Result<EventStreams, ApparatusError> {
    let mut channels: [Vec<f64>; CHANNELS] = Default::default();
    for e in events {
        channels[e.channel.index()].push(e.timestamp);
    }
    channels.par_iter_mut().enumerate().for_each(|(i, times)| {
        times.sort_by(f64::total_cmp);
        *times = dead_time_filter(times, config.dead_time[i]).expect("sorted above");
    });
    let metadata = RunMetadata {
        seed: Some(rng_seed),
        physics_model: Some(config.physics_model),
        ..RunMetadata::default()
    };
    Ok(EventStreams::from_unsorted(channels, metadata)?)
}

/// Splits a pair sequence into fixed-size chunks for lane-seeded parallel work.
pub(crate) const PAIR_CHUNK: usize = 65_536;
