//! Coincidence estimators: single and double detections of the green branch
//! inside `±α` windows opened by each D0 detection.
//!
//! For a trigger at `t0`, D_i counts as hit when some D_i event satisfies
//! `|t0 + s − t_i| ≤ α` (`s = 0` except in the shape scan). Several events in
//! one window count once. One event may serve several nearby triggers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{require_positive, ConfigError};
use crate::source::{expected_overlap_probability, EnvelopeShape};
use crate::stats::{binomial_std_error, wilson_interval, Estimate, Z_95};
use crate::timetag::{Channel, EventStreams};

/// Width, in standard errors, of the intervals used to render a verdict.
pub const VERDICT_Z: f64 = 3.0;

/// Default floor on `p̂1·p̂2` below which a run cannot tell the models apart.
pub const DEFAULT_INTENSITY_FLOOR: f64 = 1e-4;

/// `α` closer than this many resolution steps to the stream resolution
/// triggers a warning.
const RESOLUTION_MARGIN: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// Half-width of the coincidence window, seconds.
    pub alpha: f64,
    /// Offset added to the trigger time; only the shape scan moves it.
    pub shift_s: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            alpha: 10e-9,
            shift_s: 0.0,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require_positive(self.alpha, "alpha")?;
        if !self.shift_s.is_finite() {
            return Err(ConfigError::new("shift_s", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no trigger events on D0")]
    NoTriggers,
    #[error("window: {0}")]
    Window(#[from] ConfigError),
    #[error("shape scan needs the mirror removed (transmittance 1), found {0}")]
    SplitterPresent(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    CopenhagenConsistent,
    PlanckConsistent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoincidenceCounts {
    pub n0: u64,
    pub hits1: u64,
    pub hits2: u64,
    pub hits12: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceReport {
    pub n0: u64,
    pub counts: CoincidenceCounts,
    pub p1: Estimate,
    pub p2: Estimate,
    pub p3: Estimate,
    /// `p̂1·p̂2` with a first-order propagated 95% interval.
    pub product_p1p2: Estimate,
    /// Propagated standard error of `p̂3 − p̂1·p̂2`.
    pub difference_std_error: f64,
    pub p0_theoretical: Option<f64>,
    pub verdict: Verdict,
    pub alpha_used: f64,
    pub shift_s: f64,
    pub warnings: Vec<String>,
}

impl CoincidenceReport {
    /// `(p̂3 − p̂1·p̂2)` in units of its propagated standard error.
    pub fn difference_in_std_errors(&self) -> f64 {
        (self.p3.value - self.product_p1p2.value) / self.difference_std_error
    }
}

struct WindowCursor<'a> {
    times: &'a [f64],
    next: usize,
}

impl<'a> WindowCursor<'a> {
    fn new(times: &'a [f64]) -> Self {
        Self { times, next: 0 }
    }

    /// Whether some event lies within `alpha` of `centre`. Centres must be
    /// presented in nondecreasing order.
    fn hit(&mut self, centre: f64, alpha: f64) -> bool {
        while self.next < self.times.len() && centre - self.times[self.next] > alpha {
            self.next += 1;
        }
        self.times
            .get(self.next)
            .is_some_and(|&t| (centre - t).abs() <= alpha)
    }
}

/// Two-pointer pass over the three channels; linear in the number of events.
pub fn count_coincidences(d0: &[f64], d1: &[f64], d2: &[f64], alpha: f64, shift: f64) -> CoincidenceCounts {
    let mut c1 = WindowCursor::new(d1);
    let mut c2 = WindowCursor::new(d2);
    let mut counts = CoincidenceCounts {
        n0: d0.len() as u64,
        ..Default::default()
    };
    for &t0 in d0 {
        let centre = t0 + shift;
        let h1 = c1.hit(centre, alpha);
        let h2 = c2.hit(centre, alpha);
        counts.hits1 += h1 as u64;
        counts.hits2 += h2 as u64;
        counts.hits12 += (h1 && h2) as u64;
    }
    counts
}

fn product_estimate(p1: &Estimate, p2: &Estimate, n0: u64) -> Estimate {
    let value = p1.value * p2.value;
    let se1 = binomial_std_error(p1.value, n0);
    let se2 = binomial_std_error(p2.value, n0);
    let std_error = (p2.value * p2.value * se1 * se1 + p1.value * p1.value * se2 * se2).sqrt();
    Estimate {
        value,
        lower: (value - Z_95 * std_error).max(0.0),
        upper: (value + Z_95 * std_error).min(1.0),
        std_error,
    }
}

/// Estimates `p1(α)`, `p2(α)` and `p3(α)` from the streams and renders a verdict.
///
/// The overlap probability `p0` is taken from the run configuration recorded
/// in the stream metadata; without one it is assumed to be 0 and a warning is
/// recorded.
pub fn estimate_p(streams: &EventStreams, window: &WindowConfig) -> Result<CoincidenceReport, AnalysisError> {
    window.validate()?;
    let d0 = streams.channel(Channel::D0);
    if d0.is_empty() {
        return Err(AnalysisError::NoTriggers);
    }
    let alpha = window.alpha;
    let mut warnings = Vec::new();
    let resolution = streams.metadata.time_resolution;
    if alpha <= RESOLUTION_MARGIN * resolution {
        warnings.push(format!(
            "alpha {alpha:e} s is within {RESOLUTION_MARGIN} steps of the stream resolution {resolution:e} s"
        ));
    }

    let counts = count_coincidences(
        d0,
        streams.channel(Channel::D1),
        streams.channel(Channel::D2),
        alpha,
        window.shift_s,
    );
    let n0 = counts.n0;
    let p1 = Estimate::proportion(counts.hits1, n0);
    let p2 = Estimate::proportion(counts.hits2, n0);
    let p3 = Estimate::proportion(counts.hits12, n0);
    let product_p1p2 = product_estimate(&p1, &p2, n0);
    let difference_std_error = (p3.std_error.powi(2) + product_p1p2.std_error.powi(2)).sqrt();

    let p0_theoretical = match &streams.metadata.run_config {
        Some(config) => Some(expected_overlap_probability(&config.source, alpha)?),
        None => {
            warnings.push("no source configuration in metadata; p0 assumed 0".to_string());
            None
        }
    };

    let mut report = CoincidenceReport {
        n0,
        counts,
        p1,
        p2,
        p3,
        product_p1p2,
        difference_std_error,
        p0_theoretical,
        verdict: Verdict::Inconclusive,
        alpha_used: alpha,
        shift_s: window.shift_s,
        warnings,
    };
    report.verdict = render_verdict(&report, p0_theoretical.unwrap_or(0.0));
    Ok(report)
}

/// Decides which model the estimates support.
///
/// A run is significant only when `p0 < p̂1·p̂2`. Using a 3σ-equivalent
/// Wilson interval for `p̂3`: Planck-consistent when that interval contains
/// `p̂1·p̂2` and lies above `p0`; Copenhagen-consistent when it lies entirely
/// below `p̂1·p̂2` and its lower end does not exceed `p0`.
pub fn render_verdict(report: &CoincidenceReport, p0: f64) -> Verdict {
    let product = report.p1.value * report.p2.value;
    if p0.is_nan() || p0 >= product {
        return Verdict::Inconclusive;
    }
    let (lower, upper) = wilson_interval(report.counts.hits12, report.n0, VERDICT_Z);
    if lower <= product && product <= upper && p0 < lower {
        Verdict::PlanckConsistent
    } else if upper < product && lower <= p0 {
        Verdict::CopenhagenConsistent
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowIntensityDiagnostic {
    pub flagged: bool,
    pub product_p1p2: f64,
    pub floor: f64,
}

/// Flags runs where `p̂1·p̂2 ≤ floor`: both models then predict almost no
/// double detections.
pub fn low_intensity_guard(report: &CoincidenceReport, floor: f64) -> LowIntensityDiagnostic {
    let product = report.p1.value * report.p2.value;
    LowIntensityDiagnostic {
        flagged: product <= floor,
        product_p1p2: product,
        floor,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapePoint {
    pub s: f64,
    pub p: Estimate,
}

/// `p(s)`: probability that a D0 detection at `t0` has a D1 detection with
/// `|t0 + s − t1| ≤ α`, for each shift in `s_values` (returned sorted).
pub fn shape_scan(streams: &EventStreams, alpha: f64, s_values: &[f64]) -> Result<Vec<ShapePoint>, AnalysisError> {
    WindowConfig { alpha, shift_s: 0.0 }.validate()?;
    if let Some(config) = &streams.metadata.run_config {
        let t = config.apparatus.splitter_transmittance;
        if t != 1.0 {
            return Err(AnalysisError::SplitterPresent(t));
        }
    }
    if let Some(bad) = s_values.iter().find(|s| !s.is_finite()) {
        return Err(ConfigError::new("s", format!("shift {bad} is not finite")).into());
    }
    let d0 = streams.channel(Channel::D0);
    if d0.is_empty() {
        return Err(AnalysisError::NoTriggers);
    }
    let d1 = streams.channel(Channel::D1);
    let mut s_sorted = s_values.to_vec();
    s_sorted.sort_by(f64::total_cmp);
    Ok(s_sorted
        .par_iter()
        .map(|&s| {
            let c = count_coincidences(d0, d1, &[], alpha, s);
            ShapePoint {
                s,
                p: Estimate::proportion(c.hits1, c.n0),
            }
        })
        .collect())
}

/// Packet profile recovered from a shape scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    /// Shift with the largest `p(s)`.
    pub peak_s: f64,
    /// Mean of the background-subtracted curve.
    pub centroid: f64,
    /// Flat accidental level, estimated from the two ends of the grid.
    pub background: f64,
    /// Standard deviation of the green profile after removing the `2α`
    /// window and the trigger packet's own spread.
    pub rms_width: f64,
    /// Full width at half maximum of the raw curve.
    pub fwhm: f64,
}

impl ProfileSummary {
    /// Converts the deconvolved rms width into the shape's own width parameter.
    pub fn equivalent_width(&self, shape: EnvelopeShape) -> f64 {
        match shape {
            EnvelopeShape::Gaussian => self.rms_width,
            EnvelopeShape::Rectangular => 12f64.sqrt() * self.rms_width,
        }
    }
}

/// Moments and half-maximum width of `p(s)`.
///
/// `p(s)` is the distribution of `t1 − t0` smoothed by a box of width `2α`,
/// so its variance is `var(green) + var(trigger) + α²/3`.
pub fn recover_profile(points: &[ShapePoint], alpha: f64, trigger_variance: f64) -> Option<ProfileSummary> {
    if points.len() < 3 {
        return None;
    }
    let s: Vec<f64> = points.iter().map(|p| p.s).collect();
    let raw: Vec<f64> = points.iter().map(|p| p.p.value).collect();
    let background = 0.5 * (raw[0] + raw[raw.len() - 1]);
    let y: Vec<f64> = raw.iter().map(|v| (v - background).max(0.0)).collect();

    let last = s.len() - 1;
    let weight = |i: usize| match i {
        0 => 0.5 * (s[1] - s[0]),
        i if i == last => 0.5 * (s[last] - s[last - 1]),
        i => 0.5 * (s[i + 1] - s[i - 1]),
    };
    let mass: f64 = (0..s.len()).map(|i| weight(i) * y[i]).sum();
    if mass <= 0.0 {
        return None;
    }
    let centroid = (0..s.len()).map(|i| weight(i) * y[i] * s[i]).sum::<f64>() / mass;
    let variance = (0..s.len())
        .map(|i| weight(i) * y[i] * (s[i] - centroid).powi(2))
        .sum::<f64>()
        / mass;
    let rms_width = (variance - alpha * alpha / 3.0 - trigger_variance).max(0.0).sqrt();

    let (peak, &peak_value) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let half = 0.5 * peak_value;
    let left_index = (0..=peak).find(|&i| y[i] >= half).expect("peak qualifies");
    let right_index = (peak..=last).rev().find(|&i| y[i] >= half).expect("peak qualifies");
    let crossing = |inside: usize, outside: usize| {
        let (yi, yo) = (y[inside], y[outside]);
        if yi == yo {
            return s[inside];
        }
        s[outside] + (half - yo) / (yi - yo) * (s[inside] - s[outside])
    };
    let left = if left_index == 0 { s[0] } else { crossing(left_index, left_index - 1) };
    let right = if right_index == last { s[last] } else { crossing(right_index, right_index + 1) };

    Some(ProfileSummary {
        peak_s: s[raw
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("nonempty")],
        centroid,
        background,
        rms_width,
        fwhm: right - left,
    })
}
