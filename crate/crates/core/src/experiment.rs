//! End-to-end runs: configuration, simulation, analysis and the diagnostic
//! drivers behind the command-line tool. Nothing here touches the file system.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apparatus::{detect, AbsorberReset, ApparatusConfig, ApparatusError, EnergyAccount, PhysicsModel};
use crate::apparatus::planck::{replay_packet, AbsorberBank};
use crate::coincidence::{
    estimate_p, low_intensity_guard, recover_profile, shape_scan, AnalysisError, CoincidenceReport,
    LowIntensityDiagnostic, ProfileSummary, ShapePoint, WindowConfig, DEFAULT_INTENSITY_FLOOR,
};
use crate::error::{require_probability, ConfigError};
use crate::rng::{lane_rng, Lane};
use crate::source::{generate_emissions, EnvelopeShape, EnvelopeSpec, SourceConfig};
use crate::stats::{chi_square_poisson, ChiSquareFit};
use crate::timetag::{EventStreams, CHANNELS};

/// `α` must exceed the timestamp spacing at the end of the run by this factor.
const MIN_ALPHA_RESOLUTION_STEPS: f64 = 16.0;

pub const MIN_POISSON_REPLICATIONS: u64 = 1_000;
const POISSON_CHUNK: u64 = 4_096;

/// Particle species. They share the physics and differ only in source defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Species {
    #[default]
    Photon,
    Electron,
    Atom,
}

impl Species {
    pub fn source_defaults(self) -> SourceConfig {
        let base = SourceConfig::default();
        match self {
            Species::Photon => base,
            Species::Electron => SourceConfig {
                mean_emission_rate: 2_000.0,
                run_duration: 600.0,
                blue: EnvelopeSpec::gaussian(0.5e-9, 1.0),
                green: EnvelopeSpec::gaussian(0.5e-9, 1.0),
                ..base
            },
            Species::Atom => SourceConfig {
                mean_emission_rate: 200.0,
                run_duration: 5_000.0,
                blue: EnvelopeSpec::gaussian(2e-9, 1.0),
                green: EnvelopeSpec::gaussian(2e-9, 1.0),
                ..base
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub format: ReportFormat,
    /// Treat an inconclusive verdict as a failure.
    pub fail_on_inconclusive: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".to_string(),
            format: ReportFormat::Json,
            fail_on_inconclusive: false,
        }
    }
}

/// Complete description of a run. The seed lives in `source.rng_seed` and
/// also drives the detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub species: Species,
    pub source: SourceConfig,
    pub apparatus: ApparatusConfig,
    pub window: WindowConfig,
    pub intensity_floor: f64,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_species(Species::Photon)
    }
}

impl RunConfig {
    pub fn for_species(species: Species) -> Self {
        Self {
            species,
            source: species.source_defaults(),
            apparatus: ApparatusConfig::default(),
            window: WindowConfig::default(),
            intensity_floor: DEFAULT_INTENSITY_FLOOR,
            output: OutputConfig::default(),
        }
    }

    /// Parses a TOML document. Keys that are absent take the defaults of the
    /// selected `species`; unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let user: toml::Table = toml::from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))?;
        let species = match user.get("species") {
            Some(v) => v
                .clone()
                .try_into::<Species>()
                .map_err(|e| ConfigError::new("species", e.to_string()))?,
            None => Species::default(),
        };
        let base = toml::Table::try_from(Self::for_species(species))
            .map_err(|e| ConfigError::new("config", e.to_string()))?;
        let merged = merge_tables(base, user);
        let config: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::new("config", e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::new("config", e.to_string()))
    }

    pub fn seed(&self) -> u64 {
        self.source.rng_seed
    }

    /// Latest timestamp the run can produce.
    pub fn time_horizon(&self) -> f64 {
        let delay = self.apparatus.path_delays.iter().cloned().fold(0.0, f64::max);
        self.source.run_duration + self.source.packet_support() + delay + self.apparatus.planck.signal_latency
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.source.validate().map_err(|e| e.nested("source"))?;
        self.apparatus.validate().map_err(|e| e.nested("apparatus"))?;
        self.window.validate().map_err(|e| e.nested("window"))?;
        require_probability(self.intensity_floor, "intensity_floor")?;
        let step = ulp(self.time_horizon());
        if self.window.alpha < MIN_ALPHA_RESOLUTION_STEPS * step {
            return Err(ConfigError::new(
                "window.alpha",
                format!(
                    "{:e} s is below {MIN_ALPHA_RESOLUTION_STEPS} timestamp steps ({step:e} s) at the end of the run",
                    self.window.alpha
                ),
            ));
        }
        Ok(())
    }
}

fn ulp(x: f64) -> f64 {
    f64::from_bits(x.abs().to_bits() + 1) - x.abs()
}

fn merge_tables(mut base: toml::Table, user: toml::Table) -> toml::Table {
    for (key, value) in user {
        match (base.remove(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => {
                base.insert(key, toml::Value::Table(merge_tables(b, u)));
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
    base
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Apparatus(#[from] ApparatusError),
    #[error("{0}")]
    Analysis(#[from] AnalysisError),
}

impl ExperimentError {
    /// Whether the failure stems from invalid configuration or input values.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config(_)
                | ExperimentError::Apparatus(ApparatusError::Config(_))
                | ExperimentError::Analysis(AnalysisError::Window(_))
        )
    }
}

/// Analysis of one stream set, including the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: Option<RunConfig>,
    pub seed: Option<u64>,
    pub physics_model: Option<PhysicsModel>,
    pub channel_counts: [usize; CHANNELS],
    pub coincidence: CoincidenceReport,
    pub low_intensity: LowIntensityDiagnostic,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub streams: EventStreams,
    pub report: ExperimentReport,
    pub emissions: usize,
    pub energy: Option<[EnergyAccount; CHANNELS]>,
}

/// Simulates a run and analyzes it. The streams carry the full configuration,
/// so [`analyze`] on them reproduces the report.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutput, ExperimentError> {
    let streams = simulate(config)?;
    let report = analyze(&streams.0, None)?;
    Ok(ExperimentOutput {
        streams: streams.0,
        report,
        emissions: streams.1,
        energy: streams.2,
    })
}

type Simulation = (EventStreams, usize, Option<[EnergyAccount; CHANNELS]>);

fn simulate(config: &RunConfig) -> Result<Simulation, ExperimentError> {
    config.validate()?;
    let pairs = generate_emissions(&config.source)?;
    let run = detect(&pairs, &config.apparatus, config.seed())?;
    let mut streams = run.streams;
    streams.metadata.run_duration = Some(config.source.run_duration);
    streams.metadata.run_config = Some(config.clone());
    Ok((streams, pairs.len(), run.energy))
}

/// Simulates without analysis.
pub fn simulate_streams(config: &RunConfig) -> Result<EventStreams, ExperimentError> {
    Ok(simulate(config)?.0)
}

/// Analyzes streams using the window and floor recorded in their metadata,
/// or `window` when given.
pub fn analyze(streams: &EventStreams, window: Option<WindowConfig>) -> Result<ExperimentReport, ExperimentError> {
    let config = streams.metadata.run_config.clone();
    let window = window
        .or(config.as_ref().map(|c| c.window))
        .unwrap_or_default();
    let floor = config.as_ref().map_or(DEFAULT_INTENSITY_FLOOR, |c| c.intensity_floor);
    let coincidence = estimate_p(streams, &window)?;
    let low_intensity = low_intensity_guard(&coincidence, floor);
    Ok(ExperimentReport {
        config,
        seed: streams.metadata.seed,
        physics_model: streams.metadata.physics_model,
        channel_counts: streams.counts(),
        coincidence,
        low_intensity,
    })
}

/// Dot-count histogram for one packet replayed against fresh banks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonDiagnostic {
    /// `fill_gain × per-absorber integrated intensity × absorber count`.
    pub lambda: f64,
    pub absorbers: usize,
    pub replications: u64,
    /// `histogram[n]` counts replications with `n` dots.
    pub histogram: Vec<u64>,
    pub mean: f64,
    pub variance: f64,
    /// `None` when the histogram is degenerate (e.g. zero gain).
    pub fit: Option<ChiSquareFit>,
}

impl PoissonDiagnostic {
    pub fn frequency(&self, n: usize) -> f64 {
        self.histogram.get(n).copied().unwrap_or(0) as f64 / self.replications as f64
    }

    pub fn mode(&self) -> usize {
        self.histogram
            .iter()
            .enumerate()
            .max_by_key(|&(n, c)| (*c, std::cmp::Reverse(n)))
            .map_or(0, |(n, _)| n)
    }
}

/// Replays `packet` at full intensity against a fresh copy of `bank` (same
/// size and gain, new uniform fill levels) `replications` times.
pub fn run_poisson_diagnostic(
    packet: &EnvelopeSpec,
    bank: &AbsorberBank,
    replications: u64,
    seed: u64,
) -> Result<PoissonDiagnostic, ConfigError> {
    packet.validate().map_err(|e| e.nested("packet"))?;
    if replications < MIN_POISSON_REPLICATIONS {
        return Err(ConfigError::new(
            "replications",
            format!("at least {MIN_POISSON_REPLICATIONS} required, got {replications}"),
        ));
    }
    if bank.count() == 0 || !(bank.fill_gain.is_finite() && bank.fill_gain >= 0.0) {
        return Err(ConfigError::new("absorbers", "need at least one absorber and a finite, nonnegative gain"));
    }
    let n = bank.count();
    let per_absorber = packet.energy() / n as f64;
    let lambda = bank.fill_gain * per_absorber * n as f64;
    let chunks = replications.div_ceil(POISSON_CHUNK);
    let partial: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = lane_rng(seed, Lane::Diagnostic, k);
            let mut hist = Vec::new();
            let mut scratch = AbsorberBank {
                fill_levels: vec![0.0; n],
                fill_gain: bank.fill_gain,
            };
            let todo = POISSON_CHUNK.min(replications - k * POISSON_CHUNK);
            for _ in 0..todo {
                scratch.refill_uniform(&mut rng);
                let dots = replay_packet(packet, 1.0, &mut scratch, AbsorberReset::FreshUniform, &mut rng) as usize;
                if hist.len() <= dots {
                    hist.resize(dots + 1, 0);
                }
                hist[dots] += 1;
            }
            hist
        })
        .collect();
    let mut histogram = vec![0u64; partial.iter().map(Vec::len).max().unwrap_or(1)];
    for h in &partial {
        for (total, c) in histogram.iter_mut().zip(h) {
            *total += c;
        }
    }
    let r = replications as f64;
    let mean = histogram.iter().enumerate().map(|(k, c)| k as f64 * *c as f64).sum::<f64>() / r;
    let variance = histogram
        .iter()
        .enumerate()
        .map(|(k, c)| (k as f64 - mean).powi(2) * *c as f64)
        .sum::<f64>()
        / r;
    Ok(PoissonDiagnostic {
        lambda,
        absorbers: n,
        replications,
        fit: chi_square_poisson(&histogram, lambda),
        histogram,
        mean,
        variance,
    })
}

/// Gain that makes a full-intensity replay of `packet` expect `lambda` dots.
pub fn fill_gain_for_lambda(packet: &EnvelopeSpec, lambda: f64) -> f64 {
    lambda / packet.energy()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeScanOutput {
    pub points: Vec<ShapePoint>,
    pub profile: Option<ProfileSummary>,
    /// Green width parameter implied by the profile (σ or duration).
    pub recovered_width: Option<f64>,
    pub configured_width: f64,
    pub shape: EnvelopeShape,
    pub triggers: usize,
}

impl ShapeScanOutput {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,p,lower,upper\n");
        for pt in &self.points {
            out.push_str(&format!("{:e},{},{},{}\n", pt.s, pt.p.value, pt.p.lower, pt.p.upper));
        }
        out
    }

    pub fn summary(&self) -> String {
        let Some(profile) = &self.profile else {
            return format!("shape scan: {} shifts, no recoverable profile\n", self.points.len());
        };
        let param = match self.shape {
            EnvelopeShape::Gaussian => "sigma",
            EnvelopeShape::Rectangular => "duration",
        };
        format!(
            "shape scan: {} shifts, {} triggers\npeak s = {:e} s\ncentroid = {:e} s\nbackground = {:e}\nrms width = {:e} s\nfwhm = {:e} s\nrecovered {param} = {:e} s (configured {:e} s)\n",
            self.points.len(),
            self.triggers,
            profile.peak_s,
            profile.centroid,
            profile.background,
            profile.rms_width,
            profile.fwhm,
            self.recovered_width.unwrap_or(f64::NAN),
            self.configured_width,
        )
    }
}

/// Simulates with the mirror removed and measures `p(s)` on `s_grid`.
pub fn run_shape_scan(config: &RunConfig, s_grid: &[f64]) -> Result<ShapeScanOutput, ExperimentError> {
    let t = config.apparatus.splitter_transmittance;
    if t != 1.0 {
        return Err(ConfigError::new(
            "apparatus.splitter_transmittance",
            format!("shape scan needs the mirror removed (transmittance 1), got {t}"),
        )
        .into());
    }
    config.validate()?;
    let green = config.source.green;
    let mut out = ShapeScanOutput {
        points: Vec::new(),
        profile: None,
        recovered_width: None,
        configured_width: green.duration_or_sigma,
        shape: green.shape,
        triggers: 0,
    };
    if s_grid.is_empty() {
        return Ok(out);
    }
    let streams = simulate_streams(config)?;
    out.triggers = streams.counts()[0];
    out.points = shape_scan(&streams, config.window.alpha, s_grid)?;
    out.profile = recover_profile(&out.points, config.window.alpha, config.source.blue.profile_variance());
    out.recovered_width = out.profile.map(|p| p.equivalent_width(green.shape));
    Ok(out)
}

/// `count` evenly spaced shifts covering `[start, end]`.
pub fn linear_grid(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut c = RunConfig::default();
        c.source.run_duration = 5.0;
        c
    }

    #[test]
    fn toml_merges_species_defaults() {
        let c = RunConfig::from_toml_str("species = \"atom\"\n[source]\nrun_duration = 10.0\n").unwrap();
        assert_eq!(c.source.run_duration, 10.0);
        assert_eq!(c.source.mean_emission_rate, 200.0);
        assert_eq!(c.source.green.duration_or_sigma, 2e-9);
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::for_species(Species::Electron);
        c.apparatus.physics_model = PhysicsModel::Copenhagen;
        let text = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::from_toml_str("[source]\nrate = 5.0\n").unwrap_err();
        assert!(err.message.contains("rate"), "{err}");
    }

    #[test]
    fn field_level_errors() {
        let err = RunConfig::from_toml_str("[apparatus]\ndetector_efficiencies = [0.9, 1.5, 0.9]\n").unwrap_err();
        assert_eq!(err.field, "apparatus.detector_efficiencies[1]");
        let err = RunConfig::from_toml_str("[source]\nmean_emission_rate = 0.0\n").unwrap_err();
        assert_eq!(err.field, "source.mean_emission_rate");
    }

    #[test]
    fn alpha_below_resolution_rejected() {
        let mut c = small();
        c.window.alpha = 1e-18;
        assert_eq!(c.validate().unwrap_err().field, "window.alpha");
    }

    #[test]
    fn report_reproducible_from_streams() {
        let out = run_experiment(&small()).unwrap();
        assert_eq!(analyze(&out.streams, None).unwrap(), out.report);
        assert_eq!(out.report.config.as_ref(), Some(&small()));
    }

    #[test]
    fn poisson_rejects_few_replications() {
        let bank = AbsorberBank { fill_levels: vec![0.0; 4], fill_gain: 1.0 };
        let err = run_poisson_diagnostic(&EnvelopeSpec::default(), &bank, 999, 1).unwrap_err();
        assert_eq!(err.field, "replications");
    }

    #[test]
    fn zero_gain_is_degenerate() {
        let bank = AbsorberBank { fill_levels: vec![0.0; 8], fill_gain: 0.0 };
        let d = run_poisson_diagnostic(&EnvelopeSpec::default(), &bank, 1_000, 1).unwrap();
        assert_eq!(d.histogram, vec![1_000]);
        assert!(d.fit.is_none());
    }

    #[test]
    fn shape_scan_needs_mirror_removed() {
        let err = run_shape_scan(&small(), &[0.0]).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn empty_grid_gives_header_only() {
        let mut c = small();
        c.apparatus.splitter_transmittance = 1.0;
        let out = run_shape_scan(&c, &[]).unwrap();
        assert_eq!(out.to_csv(), "s,p,lower,upper\n");
    }

    #[test]
    fn grid_endpoints() {
        assert_eq!(linear_grid(-1.0, 1.0, 5), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(linear_grid(0.0, 1.0, 0).is_empty());
    }
}
