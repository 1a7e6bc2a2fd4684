//! Whole-photon detection: each green photon goes one way at the mirror.

use rand::Rng;
use rayon::prelude::*;

use super::{assemble, ApparatusConfig, ApparatusError, DetectionRun, PhysicsModel, TaggedEvent, PAIR_CHUNK};
use crate::rng::{lane_rng, Lane};
use crate::source::WavePacketPair;
use crate::timetag::Channel;

/// Each pair yields at most one D0 event and at most one event in {D1, D2}.
///
/// Timestamps are the packet centre plus the path delay plus a draw from the
/// packet's normalized intensity profile.
pub fn detect_copenhagen(
    pairs: &[WavePacketPair],
    config: &ApparatusConfig,
    rng_seed: u64,
) -> Result<DetectionRun, ApparatusError> {
    config.validate().map_err(|e| e.nested("apparatus"))?;
    if config.physics_model != PhysicsModel::Copenhagen {
        return Err(ApparatusError::Config(crate::error::ConfigError::new(
            "apparatus.physics_model",
            "detect_copenhagen requires the copenhagen model",
        )));
    }
    let eff = config.detector_efficiencies;
    let delay = config.path_delays;

    let chunks: Vec<Vec<TaggedEvent>> = pairs
        .par_chunks(PAIR_CHUNK)
        .enumerate()
        .map(|(k, chunk)| {
            let mut rng = lane_rng(rng_seed, Lane::Copenhagen, k as u64);
            let mut out = Vec::with_capacity(chunk.len() * 2);
            for pair in chunk {
                let center = pair.center_time();
                if rng.random::<f64>() < eff[0] {
                    out.push(TaggedEvent {
                        channel: Channel::D0,
                        timestamp: center + delay[0] + pair.blue.sample_offset(&mut rng),
                        pair_id: pair.pair_id,
                    });
                }
                let channel = if rng.random::<f64>() < config.splitter_transmittance {
                    Channel::D1
                } else {
                    Channel::D2
                };
                let i = channel.index();
                if rng.random::<f64>() < eff[i] {
                    out.push(TaggedEvent {
                        channel,
                        timestamp: center + delay[i] + pair.green.sample_offset(&mut rng),
                        pair_id: pair.pair_id,
                    });
                }
            }
            out
        })
        .collect();
    let events: Vec<TaggedEvent> = chunks.into_iter().flatten().collect();
    let streams = assemble(&events, config, rng_seed)?;
    Ok(DetectionRun {
        streams,
        events,
        energy: None,
    })
}
