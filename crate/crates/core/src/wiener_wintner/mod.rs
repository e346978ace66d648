//! Wiener–Wintner averages
//! `Av_n[f, xi](x) = (1/n) * sum_{j<n} xi^{-j} f(T^j x)` with `xi = e^{2 pi i theta}`,
//! their convergence diagnostics along checkpoint schedules, frequency scans
//! and the spectral-mass identity checks built on top of them.
//!
//! All averages are taken over a precomputed series `f(T^j x)` (see
//! [`crate::dynsys::eval_series`]).

mod scan;

use std::f64::consts::TAU;

use num_complex::Complex64;
use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::dynsys::frac;
use crate::error::{Error, Result};
use crate::schedule::CheckpointSchedule;
use crate::TAU_NUM;

pub use scan::{
    frequency_scan, snap_rational, FrequencySpectrum, GridMeta, ScanConfig, ScanThresholds, SpectrumEntry,
};

/// Phasors are recomputed from the exact phase every this many steps.
pub const REANCHOR_INTERVAL: usize = 1 << 16;

/// Default relative spectral-mass tolerance.
pub const DEFAULT_TAU_REG: f64 = 0.02;

/// A point `xi = e^{2 pi i theta}` of the unit circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProbe {
    theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exact_rational: Option<(u64, u64)>,
}

impl FrequencyProbe {
    /// `theta` is reduced mod 1.
    pub fn new(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::argument("probe frequency must be finite"));
        }
        Ok(Self { theta: frac(theta), exact_rational: None })
    }

    /// The exact probe `p/q`, stored in lowest terms.
    pub fn rational(p: u64, q: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::argument("probe denominator must be positive"));
        }
        let p = p % q;
        let g = p.gcd(&q);
        let (p, q) = (p / g, q / g);
        Ok(Self { theta: p as f64 / q as f64, exact_rational: Some((p, q)) })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn exact_rational(&self) -> Option<(u64, u64)> {
        self.exact_rational
    }

    /// `frac(j * theta)`, exact for rational probes.
    pub(crate) fn phase(&self, j: usize) -> f64 {
        match self.exact_rational {
            Some((p, q)) => {
                let r = (j as u128 % q as u128) * p as u128 % q as u128;
                r as f64 / q as f64
            }
            None => {
                let jf = j as f64;
                let hi = jf * self.theta;
                let lo = jf.mul_add(self.theta, -hi);
                frac(frac(hi) + lo)
            }
        }
    }

    /// `xi^{-j}`.
    pub(crate) fn conj_power(&self, j: usize) -> Complex64 {
        Complex64::from_polar(1.0, -TAU * self.phase(j))
    }

    /// Circular distance between two probes.
    pub fn distance(&self, other: &FrequencyProbe) -> f64 {
        circle_distance(self.theta, other.theta)
    }
}

pub(crate) fn circle_distance(a: f64, b: f64) -> f64 {
    let d = frac(a - b);
    d.min(1.0 - d)
}

/// Visits the running sums `sum_{j<n} xi^{-j} s_j` at each `n` in `stops`
/// (ascending) with a single pass over the series.
fn twisted_partial_sums(series: &[Complex64], probe: &FrequencyProbe, stops: &[usize]) -> Vec<Complex64> {
    let step = Complex64::from_polar(1.0, -TAU * probe.theta);
    let mut out = Vec::with_capacity(stops.len());
    let mut acc = Complex64::new(0.0, 0.0);
    let mut w = Complex64::new(1.0, 0.0);
    let mut j = 0;
    for &stop in stops {
        while j < stop {
            if j % REANCHOR_INTERVAL == 0 {
                w = probe.conj_power(j);
            }
            acc += series[j] * w;
            w *= step;
            j += 1;
        }
        out.push(acc);
    }
    out
}

/// `Av_n` of the series at the probe.
pub fn ww_average(series: &[Complex64], probe: &FrequencyProbe, n: usize) -> Result<Complex64> {
    if n == 0 || n > series.len() {
        return Err(Error::argument(format!("average length {n} outside 1..={}", series.len())));
    }
    Ok(twisted_partial_sums(series, probe, &[n])[0] / n as f64)
}

/// `Av_n` at every checkpoint of the schedule.
pub fn ww_averages(
    series: &[Complex64],
    probe: &FrequencyProbe,
    schedule: &CheckpointSchedule,
) -> Result<Vec<Complex64>> {
    schedule.fits(series.len())?;
    let stops = schedule.checkpoints();
    Ok(twisted_partial_sums(series, probe, stops)
        .into_iter()
        .zip(stops)
        .map(|(s, &n)| s / n as f64)
        .collect())
}

/// Convergence verdict for a sequence of checkpoint averages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Converged { limit: Complex64 },
    Oscillating { diameter: f64 },
    Undetermined { diameter: f64 },
}

impl Verdict {
    pub fn is_converged(&self) -> bool {
        matches!(self, Verdict::Converged { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Converged { .. } => "converged",
            Verdict::Oscillating { .. } => "oscillating",
            Verdict::Undetermined { .. } => "undetermined",
        }
    }
}

/// Default convergence tolerance `10 / sqrt(n_m)`.
pub fn default_tau_conv(n_last: usize) -> f64 {
    10.0 / (n_last as f64).sqrt()
}

/// Averages of one probe along a schedule with a verdict on their limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragesTrace {
    pub probe: FrequencyProbe,
    pub checkpoints: Vec<usize>,
    pub values: Vec<Complex64>,
    pub verdict: Verdict,
    pub tau_conv: f64,
}

impl AveragesTrace {
    pub fn last(&self) -> Complex64 {
        *self.values.last().expect("trace is nonempty")
    }
}

/// Classifies checkpoint values: converged when the last three values lie
/// within `tau_conv` of each other, oscillating above `4 * tau_conv`.
pub fn classify(values: &[Complex64], tau_conv: f64) -> Verdict {
    let tail = &values[values.len().saturating_sub(3)..];
    let mut diameter: f64 = 0.0;
    for (i, a) in tail.iter().enumerate() {
        for b in &tail[i + 1..] {
            diameter = diameter.max((a - b).norm());
        }
    }
    if diameter <= tau_conv {
        Verdict::Converged { limit: *tail.last().expect("nonempty") }
    } else if diameter > 4.0 * tau_conv {
        Verdict::Oscillating { diameter }
    } else {
        Verdict::Undetermined { diameter }
    }
}

pub fn ww_trace(
    series: &[Complex64],
    probe: &FrequencyProbe,
    schedule: &CheckpointSchedule,
) -> Result<AveragesTrace> {
    ww_trace_with(series, probe, schedule, default_tau_conv(schedule.last()))
}

pub fn ww_trace_with(
    series: &[Complex64],
    probe: &FrequencyProbe,
    schedule: &CheckpointSchedule,
    tau_conv: f64,
) -> Result<AveragesTrace> {
    if !(tau_conv > 0.0) {
        return Err(Error::argument("convergence tolerance must be positive"));
    }
    let values = ww_averages(series, probe, schedule)?;
    let verdict = classify(&values, tau_conv);
    Ok(AveragesTrace {
        probe: *probe,
        checkpoints: schedule.checkpoints().to_vec(),
        values,
        verdict,
        tau_conv,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularityClass {
    DiscreteSpectrumConsistent,
    SpectralMassDeficit,
    /// Detected mass exceeds the L2 norm; only possible through leakage or
    /// non-converged averages.
    SpectralMassExcess,
}

/// Comparison of `sum |Av|^2` over detected frequencies with `(1/N) sum |f|^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub observable: String,
    pub target: f64,
    pub mass: f64,
    pub defect: f64,
    pub tau_reg: f64,
    pub classification: RegularityClass,
}

pub fn regularity_check(series: &[Complex64], spectrum: &FrequencySpectrum) -> Result<RegularityReport> {
    regularity_check_with("f", series, spectrum, DEFAULT_TAU_REG)
}

pub fn regularity_check_with(
    observable: &str,
    series: &[Complex64],
    spectrum: &FrequencySpectrum,
    tau_reg: f64,
) -> Result<RegularityReport> {
    if series.is_empty() {
        return Err(Error::argument("regularity check needs a nonempty series"));
    }
    let n = spectrum.n.min(series.len());
    let target = series[..n].iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
    let mass: f64 = spectrum.entries.iter().map(|e| e.amplitude * e.amplitude).sum();
    let defect = target - mass;
    let classification = if defect.abs() <= tau_reg * target {
        RegularityClass::DiscreteSpectrumConsistent
    } else if defect > 0.0 {
        RegularityClass::SpectralMassDeficit
    } else {
        RegularityClass::SpectralMassExcess
    };
    Ok(RegularityReport { observable: observable.to_string(), target, mass, defect, tau_reg, classification })
}

/// `max_n |Av_n(x) - xi^{-k} Av_n(T^k x)|` over the checkpoints, where the
/// shifted orbit is read off the same series.
pub fn shift_invariance_check(
    series: &[Complex64],
    probe: &FrequencyProbe,
    shift: usize,
    schedule: &CheckpointSchedule,
) -> Result<f64> {
    if shift + schedule.last() > series.len() {
        return Err(Error::argument(format!(
            "shift {shift} plus window {} exceeds series length {}",
            schedule.last(),
            series.len()
        )));
    }
    let direct = ww_averages(series, probe, schedule)?;
    let shifted = ww_averages(&series[shift..], probe, schedule)?;
    let twist = probe.conj_power(shift);
    Ok(direct.iter().zip(&shifted).map(|(a, b)| (a - twist * b).norm()).fold(0.0, f64::max))
}

/// Outcome of testing whether every detected frequency lies in a candidate set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub covered: bool,
    pub escapees: Vec<FrequencyProbe>,
    pub tolerance: f64,
    pub spectrum: FrequencySpectrum,
}

pub fn spectrum_containment(
    series: &[Complex64],
    candidates: &[FrequencyProbe],
    schedule: &CheckpointSchedule,
    config: &ScanConfig,
) -> Result<ContainmentReport> {
    let spectrum = frequency_scan(series, schedule, config)?;
    let tolerance = 1.0 / (2.0 * schedule.last() as f64);
    let escapees: Vec<FrequencyProbe> = spectrum
        .entries
        .iter()
        .map(|e| e.probe)
        .filter(|p| !candidates.iter().any(|c| c.distance(p) <= tolerance + TAU_NUM))
        .collect();
    Ok(ContainmentReport { covered: escapees.is_empty(), escapees, tolerance, spectrum })
}
