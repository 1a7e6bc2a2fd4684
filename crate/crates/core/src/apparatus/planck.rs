//! Continuous-absorption detectors.
//!
//! Each detector holds a bank of `n` absorbers that share the incident
//! intensity equally. An absorber's fill level rises at `fill_gain` times its
//! share of the intensity; when the level reaches 1 it signals and is reset.
//! Fill levels persist from one packet to the next.
//!
//! Work is done in "fill coordinates": within a burst of overlapping packets
//! every absorber receives the same total fill `F`, so an absorber at level
//! `L` fires at coordinates `1 − L`, then after each reset `1 − L'` further,
//! for as long as the coordinate stays `≤ F`. A coordinate `c` is mapped back
//! to time through the burst's cumulative intensity.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    assemble, AbsorberReset, ApparatusConfig, ApparatusError, DetectionRun, PhysicsModel,
    TaggedEvent,
};
use crate::error::ConfigError;
use crate::rng::{lane_rng, Lane};
use crate::source::{EnvelopeSpec, WavePacketPair};
use crate::timetag::{Channel, CHANNELS};

/// Lane offset for the initial fill draws, separate from the dynamics lanes.
const INITIAL_FILL_LANE: u64 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorberBank {
    pub fill_levels: Vec<f64>,
    pub fill_gain: f64,
}

impl AbsorberBank {
    /// `count` absorbers with i.i.d. uniform fill levels.
    pub fn fresh<R: Rng + ?Sized>(count: usize, fill_gain: f64, rng: &mut R) -> Self {
        let mut bank = Self {
            fill_levels: vec![0.0; count],
            fill_gain,
        };
        bank.refill_uniform(rng);
        bank
    }

    pub fn refill_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for level in &mut self.fill_levels {
            *level = rng.random::<f64>();
        }
    }

    pub fn count(&self) -> usize {
        self.fill_levels.len()
    }

    /// Adds `fill` to every absorber, calling `on_fire(coordinate)` for each
    /// signal. Returns the number of signals.
    fn absorb<R: Rng + ?Sized>(
        &mut self,
        fill: f64,
        reset: AbsorberReset,
        rng: &mut R,
        mut on_fire: impl FnMut(f64),
    ) -> u64 {
        let mut fired = 0;
        for level in &mut self.fill_levels {
            let mut next = 1.0 - *level;
            while next <= fill {
                on_fire(next);
                fired += 1;
                let fresh = match reset {
                    AbsorberReset::FreshUniform => rng.random::<f64>(),
                    AbsorberReset::Empty => 0.0,
                };
                next += 1.0 - fresh;
            }
            *level = (1.0 - (next - fill)).clamp(0.0, 1.0);
        }
        fired
    }
}

/// Energy bookkeeping for one detector over a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyAccount {
    /// Integrated intensity arriving at the detector after the mirror.
    pub incident_energy: f64,
    /// Total fill added across the bank.
    pub fill_added: f64,
    /// Largest per-burst ratio of fill added to `fill_gain × incident`.
    pub max_fill_ratio: f64,
}

/// Replays one packet with intensity share `share` against `bank` and returns
/// the number of dots.
pub fn replay_packet<R: Rng + ?Sized>(
    envelope: &EnvelopeSpec,
    share: f64,
    bank: &mut AbsorberBank,
    reset: AbsorberReset,
    rng: &mut R,
) -> u64 {
    let fill = bank.fill_gain * share * envelope.energy() / bank.count() as f64;
    if fill <= 0.0 {
        return 0;
    }
    bank.absorb(fill, reset, rng, |_| {})
}

/// Fresh banks for D0, D1, D2 as configured.
pub fn fresh_banks(config: &ApparatusConfig, rng_seed: u64) -> [AbsorberBank; CHANNELS] {
    let p = &config.planck;
    Channel::ALL.map(|ch| {
        let mut rng = lane_rng(rng_seed, Lane::Planck, INITIAL_FILL_LANE + ch.index() as u64);
        AbsorberBank::fresh(p.absorbers_per_detector, p.fill_gain, &mut rng)
    })
}

#[derive(Debug, Clone, Copy)]
struct Arrival {
    center: f64,
    envelope: EnvelopeSpec,
    /// Fraction of the packet intensity reaching the absorbers.
    share: f64,
    /// Fraction reaching the detector (before efficiency).
    incident_share: f64,
    pair_id: u64,
}

impl Arrival {
    fn start(&self) -> f64 {
        self.center - self.envelope.half_support()
    }

    fn end(&self) -> f64 {
        self.center + self.envelope.half_support()
    }

    fn energy(&self) -> f64 {
        self.share * self.envelope.energy()
    }

    fn intensity_at(&self, t: f64) -> f64 {
        self.share * self.envelope.intensity(t - self.center)
    }

    fn energy_before(&self, t: f64) -> f64 {
        self.energy() * self.envelope.cumulative_fraction(t - self.center)
    }
}

/// A burst of overlapping arrivals, sorted by start, indexed for
/// cumulative-intensity queries that only touch arrivals near the query time.
struct Burst<'a> {
    arrivals: &'a [Arrival],
    /// `prefix[k]` is the energy of `arrivals[..k]`.
    prefix: Vec<f64>,
    widest: f64,
}

impl<'a> Burst<'a> {
    fn new(arrivals: &'a [Arrival]) -> Self {
        let mut prefix = Vec::with_capacity(arrivals.len() + 1);
        let mut acc = 0.0;
        prefix.push(acc);
        for a in arrivals {
            acc += a.energy();
            prefix.push(acc);
        }
        let widest = arrivals.iter().map(|a| a.end() - a.start()).fold(0.0, f64::max);
        Self { arrivals, prefix, widest }
    }

    fn total(&self) -> f64 {
        self.prefix[self.arrivals.len()]
    }

    /// Number of arrivals starting strictly before `t`.
    fn started(&self, t: f64) -> usize {
        self.arrivals.partition_point(|a| a.start() < t)
    }

    fn delivered(&self, t: f64) -> f64 {
        let done = self.started(t - self.widest);
        let live = self.started(t);
        self.prefix[done] + self.arrivals[done..live].iter().map(|a| a.energy_before(t)).sum::<f64>()
    }

    /// Time at which the burst has delivered `fraction` of its energy.
    fn time_at_fraction(&self, fraction: f64) -> f64 {
        if let [single] = self.arrivals {
            return single.center + single.envelope.inverse_cumulative(fraction);
        }
        let target = fraction * self.total();
        let mut lo = self.arrivals[0].start();
        let mut hi = self.arrivals.iter().map(Arrival::end).fold(f64::NEG_INFINITY, f64::max);
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.delivered(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// The packet contributing most intensity at `t`.
    fn dominant_pair(&self, t: f64) -> u64 {
        let first = self.started(t - self.widest);
        let last = self.arrivals.partition_point(|a| a.start() <= t);
        let candidates = if first < last { &self.arrivals[first..last] } else { self.arrivals };
        candidates
            .iter()
            .max_by(|a, b| a.intensity_at(t).total_cmp(&b.intensity_at(t)))
            .map(|a| a.pair_id)
            .expect("bursts are nonempty")
    }
}

fn run_lane(
    channel: Channel,
    mut arrivals: Vec<Arrival>,
    bank: &mut AbsorberBank,
    reset: AbsorberReset,
    latency: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<TaggedEvent>, EnergyAccount) {
    if !arrivals.is_sorted_by(|a, b| a.start() <= b.start()) {
        arrivals.sort_by(|a, b| a.start().total_cmp(&b.start()));
    }
    let n = bank.count() as f64;
    let gain = bank.fill_gain;
    let mut events = Vec::new();
    let mut account = EnergyAccount::default();
    let mut coordinates = Vec::new();

    let mut i = 0;
    while i < arrivals.len() {
        let mut end = arrivals[i].end();
        let mut j = i + 1;
        while j < arrivals.len() && arrivals[j].start() < end {
            end = end.max(arrivals[j].end());
            j += 1;
        }
        let burst = Burst::new(&arrivals[i..j]);
        i = j;

        let incident: f64 = burst.arrivals.iter().map(|a| a.incident_share * a.envelope.energy()).sum();
        let delivered = burst.total();
        account.incident_energy += incident;
        let per_absorber = gain * delivered / n;
        if per_absorber <= 0.0 {
            continue;
        }
        let added = per_absorber * n;
        account.fill_added += added;
        if incident > 0.0 {
            account.max_fill_ratio = account.max_fill_ratio.max(added / (gain * incident));
        }

        coordinates.clear();
        bank.absorb(per_absorber, reset, rng, |c| coordinates.push(c));
        for &c in &coordinates {
            let t = burst.time_at_fraction(c / per_absorber);
            events.push(TaggedEvent {
                channel,
                timestamp: t + latency,
                pair_id: burst.dominant_pair(t),
            });
        }
    }
    (events, account)
}

/// Splits the green intensity between D1 and D2 and lets each detector's
/// absorber bank fire independently.
///
/// `banks` are the initial states for D0, D1, D2. Each detector runs in its
/// own seed lane, so detectors share no randomness.
pub fn detect_planck(
    pairs: &[WavePacketPair],
    config: &ApparatusConfig,
    banks: [AbsorberBank; CHANNELS],
    rng_seed: u64,
) -> Result<DetectionRun, ApparatusError> {
    config.validate().map_err(|e| e.nested("apparatus"))?;
    if config.physics_model != PhysicsModel::Planck {
        return Err(ConfigError::new(
            "apparatus.physics_model",
            "detect_planck requires the planck model",
        )
        .into());
    }
    for (ch, bank) in Channel::ALL.iter().zip(&banks) {
        if bank.count() == 0 || !(bank.fill_gain >= 0.0 && bank.fill_gain.is_finite()) {
            return Err(ConfigError::new(
                format!("banks[{}]", ch.index()),
                "absorber bank needs at least one absorber and a finite, nonnegative gain",
            )
            .into());
        }
    }
    let params = config.planck;
    let lanes: Vec<(Vec<TaggedEvent>, EnergyAccount)> = banks
        .into_par_iter()
        .enumerate()
        .map(|(i, mut bank)| {
            let channel = Channel::ALL[i];
            let delay = config.path_delays[i];
            let share = config.intensity_share(channel);
            let incident_share = match channel {
                Channel::D0 => 1.0,
                Channel::D1 => config.splitter_transmittance,
                Channel::D2 => config.reflectance(),
            };
            let arrivals = pairs
                .iter()
                .map(|p| Arrival {
                    center: p.center_time() + delay,
                    envelope: if channel == Channel::D0 { p.blue } else { p.green },
                    share,
                    incident_share,
                    pair_id: p.pair_id,
                })
                .collect();
            let mut rng = lane_rng(rng_seed, Lane::Planck, i as u64);
            run_lane(channel, arrivals, &mut bank, params.reset, params.signal_latency, &mut rng)
        })
        .collect();

    let mut events = Vec::new();
    let mut energy = [EnergyAccount::default(); CHANNELS];
    for (i, (lane_events, account)) in lanes.into_iter().enumerate() {
        events.extend(lane_events);
        energy[i] = account;
    }
    let streams = assemble(&events, config, rng_seed)?;
    Ok(DetectionRun {
        streams,
        events,
        energy: Some(energy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::lane_rng;

    fn planck() -> ApparatusConfig {
        ApparatusConfig::default()
    }

    fn pairs(n: usize, spacing: f64) -> Vec<WavePacketPair> {
        (0..n)
            .map(|i| WavePacketPair {
                emission_time: i as f64 * spacing,
                blue: EnvelopeSpec::default(),
                green: EnvelopeSpec::default(),
                pair_id: i as u64,
            })
            .collect()
    }

    #[test]
    fn zero_gain_gives_no_events() {
        let mut c = planck();
        c.planck.fill_gain = 0.0;
        let run = detect(&pairs(1000, 1e-6), &c);
        assert_eq!(run.streams.counts(), [0, 0, 0]);
    }

    fn detect(ps: &[WavePacketPair], c: &ApparatusConfig) -> DetectionRun {
        detect_planck(ps, c, fresh_banks(c, 9), 9).unwrap()
    }

    #[test]
    fn first_packet_fires_absorbers_whose_level_is_within_reach() {
        let mut rng = lane_rng(1, Lane::Diagnostic, 0);
        let mut bank = AbsorberBank {
            fill_levels: vec![0.1, 0.75, 0.95, 0.5],
            fill_gain: 1.0,
        };
        let mut coords = Vec::new();
        let fired = bank.absorb(0.3, AbsorberReset::Empty, &mut rng, |c| coords.push(c));
        assert_eq!(fired, 2);
        assert!((coords[0] - 0.25).abs() < 1e-12 && (coords[1] - 0.05).abs() < 1e-12);
        let expected = [0.4, 0.05, 0.25, 0.8];
        for (l, e) in bank.fill_levels.iter().zip(expected) {
            assert!((l - e).abs() < 1e-12, "{l} vs {e}");
        }
    }

    #[test]
    fn levels_stay_in_unit_interval() {
        let mut rng = lane_rng(2, Lane::Diagnostic, 0);
        let mut bank = AbsorberBank::fresh(256, 1.0, &mut rng);
        for k in 0..2000 {
            let fill = (k % 7) as f64 * 0.37;
            bank.absorb(fill, AbsorberReset::FreshUniform, &mut rng, |_| {});
            assert!(bank.fill_levels.iter().all(|l| (0.0..=1.0).contains(l)));
        }
    }

    #[test]
    fn energy_never_created() {
        let c = planck();
        // tight spacing forces overlapping bursts
        let run = detect(&pairs(20_000, 3e-9), &c);
        for account in run.energy.unwrap() {
            assert!(account.max_fill_ratio <= 1.0 + 1e-12);
            assert!(account.fill_added <= c.planck.fill_gain * account.incident_energy * (1.0 + 1e-12));
        }
    }

    #[test]
    fn events_lie_within_burst_support() {
        let mut c = planck();
        c.path_delays = [0.0, 5e-9, 1e-9];
        c.planck.fill_gain *= 5.0;
        let ps = pairs(5_000, 1e-6);
        let run = detect(&ps, &c);
        assert!(!run.events.is_empty());
        for e in &run.events {
            let p = &ps[e.pair_id as usize];
            let lo = p.emission_time + c.path_delays[e.channel.index()];
            assert!(e.timestamp >= lo - 1e-18 && e.timestamp <= lo + 8e-9 + 1e-18);
        }
    }

    #[test]
    fn overlapping_bursts_resolve_times_monotonically() {
        let env = EnvelopeSpec::gaussian(1.0, 1.0);
        let burst = [
            Arrival { center: 0.0, envelope: env, share: 1.0, incident_share: 1.0, pair_id: 0 },
            Arrival { center: 2.0, envelope: env, share: 1.0, incident_share: 1.0, pair_id: 1 },
        ];
        let burst = Burst::new(&burst);
        let mid = burst.time_at_fraction(0.5);
        assert!((mid - 1.0).abs() < 1e-9);
        let mut prev = f64::NEG_INFINITY;
        for k in 1..100 {
            let t = burst.time_at_fraction(k as f64 / 100.0);
            assert!(t > prev);
            prev = t;
        }
        assert_eq!(burst.dominant_pair(-0.5), 0);
        assert_eq!(burst.dominant_pair(2.5), 1);
    }

    #[test]
    fn detectors_fire_for_the_same_packet() {
        let mut c = planck();
        c.planck.fill_gain *= 4.0;
        let run = detect(&pairs(50_000, 1e-6), &c);
        let mut fired = vec![[false; 3]; 50_000];
        for e in &run.events {
            fired[e.pair_id as usize][e.channel.index()] = true;
        }
        let both = fired.iter().filter(|f| f[1] && f[2]).count();
        assert!(both > 1000, "{both}");
    }

    #[test]
    fn deterministic() {
        let c = planck();
        let ps = pairs(30_000, 1e-6);
        assert_eq!(detect(&ps, &c).streams, detect(&ps, &c).streams);
    }

    #[test]
    fn wrong_model_rejected() {
        let mut c = planck();
        c.physics_model = PhysicsModel::Copenhagen;
        assert!(detect_planck(&pairs(1, 1.0), &c, fresh_banks(&c, 1), 1).is_err());
    }
}
