//! B-free characteristic sequences, their periodic truncations and the
//! experiments built on them.

use num_complex::Complex64;
use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::besicovitch::{dbar_estimate, PseudometricTrace};
use crate::dynsys::Symbol;
use crate::error::{Error, Result};
use crate::schedule::CheckpointSchedule;
use crate::wiener_wintner::{
    frequency_scan, regularity_check_with, FrequencyProbe, FrequencySpectrum, RegularityClass,
    RegularityReport, ScanConfig, DEFAULT_TAU_REG,
};
use crate::TAU_NUM;

const SIEVE_SEGMENT: usize = 1 << 16;

/// A set `B` of generators `b_1 < b_2 < ...`, all at least 2.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSet {
    Finite {
        generators: Vec<u64>,
    },
    /// `{p^2 : p prime}`, optionally restricted to `p^2 <= cap`.
    SquaresOfPrimes {
        #[serde(default)]
        cap: Option<u64>,
    },
}

impl GeneratorSet {
    pub fn finite(generators: Vec<u64>) -> Result<Self> {
        let set = GeneratorSet::Finite { generators };
        set.validate()?;
        Ok(set)
    }

    pub fn squares_of_primes() -> Self {
        GeneratorSet::SquaresOfPrimes { cap: None }
    }

    pub fn validate(&self) -> Result<()> {
        if let GeneratorSet::Finite { generators } = self {
            if generators.is_empty() {
                return Err(Error::argument("generator set is empty"));
            }
            if generators.iter().any(|&b| b < 2) {
                return Err(Error::argument("generators must be at least 2"));
            }
            if generators.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::argument("generators must be strictly increasing"));
            }
        }
        Ok(())
    }

    /// Number of generators, `None` for an uncapped infinite family.
    pub fn len(&self) -> Option<usize> {
        match self {
            GeneratorSet::Finite { generators } => Some(generators.len()),
            GeneratorSet::SquaresOfPrimes { cap: Some(cap) } => Some(self.up_to(*cap).len()),
            GeneratorSet::SquaresOfPrimes { cap: None } => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    /// All generators `<= limit`.
    pub fn up_to(&self, limit: u64) -> Vec<u64> {
        match self {
            GeneratorSet::Finite { generators } => {
                generators.iter().copied().take_while(|&b| b <= limit).collect()
            }
            GeneratorSet::SquaresOfPrimes { cap } => {
                let limit = cap.map_or(limit, |c| c.min(limit));
                primes_up_to(limit.isqrt()).into_iter().map(|p| p * p).collect()
            }
        }
    }

    /// The first `k` generators `b_1, ..., b_k`.
    pub fn truncation(&self, k: usize) -> Result<Vec<u64>> {
        if k == 0 {
            return Err(Error::argument("truncation index must be positive"));
        }
        let gens = match self {
            GeneratorSet::Finite { generators } => generators.iter().copied().take(k).collect(),
            GeneratorSet::SquaresOfPrimes { .. } => {
                // The k-th prime is below k (ln k + ln ln k) + 3 for every k.
                let kf = k as f64;
                let bound = (kf * (kf.ln() + kf.ln().ln().max(0.0)) + 3.0).ceil() as u64;
                let mut gens = self.up_to(bound.saturating_mul(bound));
                gens.truncate(k);
                gens
            }
        };
        if gens.len() < k {
            return Err(Error::argument(format!(
                "truncation {k} exceeds the {} available generators",
                gens.len()
            )));
        }
        Ok(gens)
    }

    /// `lcm(b_1, ..., b_k)`, the period of `eta_{B(k)}`.
    pub fn truncation_lcm(&self, k: usize) -> Result<u64> {
        checked_lcm(&self.truncation(k)?)
    }
}

fn checked_lcm(gens: &[u64]) -> Result<u64> {
    gens.iter().try_fold(1u64, |acc, &b| {
        (acc / acc.gcd(&b))
            .checked_mul(b)
            .ok_or_else(|| Error::Capacity(format!("lcm of {gens:?} exceeds 64 bits")))
    })
}

fn primes_up_to(n: u64) -> Vec<u64> {
    let n = n as usize;
    if n < 2 {
        return Vec::new();
    }
    let mut composite = vec![false; n + 1];
    let mut primes = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            primes.push(i as u64);
            for m in (i * i..=n).step_by(i) {
                composite[m] = true;
            }
        }
    }
    primes
}

/// `eta` on `[0, N)`: position `j` is true iff no sieved generator divides `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EtaWindow {
    /// Generators actually sieved.
    pub generators: Vec<u64>,
    /// Exact period when the window comes from a truncation.
    pub period: Option<u64>,
    bits: Vec<bool>,
}

impl EtaWindow {
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn density(&self) -> f64 {
        self.ones() as f64 / self.len() as f64
    }

    pub fn symbols(&self) -> Vec<Symbol> {
        self.bits.iter().map(|&b| Symbol::from(b)).collect()
    }

    /// The observable "symbol at coordinate 0" along the window.
    pub fn series(&self) -> Vec<Complex64> {
        self.bits.iter().map(|&b| Complex64::new(f64::from(u8::from(b)), 0.0)).collect()
    }
}

/// Sieves `eta_B` (or `eta_{B(k)}` when `truncation` is `Some(k)`) on `[0, n)`.
pub fn eta_window(set: &GeneratorSet, n: usize, truncation: Option<usize>) -> Result<EtaWindow> {
    set.validate()?;
    if n == 0 {
        return Err(Error::argument("window length must be positive"));
    }
    let (generators, period) = match truncation {
        Some(k) => {
            let gens = set.truncation(k)?;
            let l = checked_lcm(&gens)?;
            (gens, Some(l))
        }
        // Generators above n only remove multiples >= n, apart from 0.
        None => (set.up_to(n as u64), None),
    };
    let bits = sieve(&generators, n);
    Ok(EtaWindow { generators, period, bits })
}

/// Segmented sieve: `j` survives iff no generator divides it.
fn sieve(generators: &[u64], n: usize) -> Vec<bool> {
    let mut bits = vec![true; n];
    bits[0] = false;
    bits.par_chunks_mut(SIEVE_SEGMENT).enumerate().for_each(|(s, chunk)| {
        let start = (s * SIEVE_SEGMENT) as u64;
        let end = start + chunk.len() as u64;
        for &b in generators {
            let mut m = start.div_ceil(b) * b;
            while m < end {
                chunk[(m - start) as usize] = false;
                m += b;
            }
        }
    });
    bits
}

/// d-bar trace between `eta_{B(k)}` and `eta_B` for one truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationTrace {
    pub k: usize,
    pub generators: Vec<u64>,
    pub trace: PseudometricTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DavenportErdosReport {
    pub n: usize,
    pub traces: Vec<TruncationTrace>,
    /// Tail values, one per truncation.
    pub tails: Vec<f64>,
    pub nonincreasing: bool,
    pub tolerance: f64,
}

pub fn davenport_erdos_trace(
    set: &GeneratorSet,
    truncations: &[usize],
    schedule: &CheckpointSchedule,
) -> Result<DavenportErdosReport> {
    davenport_erdos_trace_with(set, truncations, schedule, TAU_NUM)
}

pub fn davenport_erdos_trace_with(
    set: &GeneratorSet,
    truncations: &[usize],
    schedule: &CheckpointSchedule,
    tolerance: f64,
) -> Result<DavenportErdosReport> {
    if truncations.is_empty() || truncations.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::argument("truncations must be nonempty and strictly increasing"));
    }
    let n = schedule.last();
    let full = eta_window(set, n, None)?.symbols();
    let traces = truncations
        .par_iter()
        .map(|&k| {
            // The comparison needs no period, so large truncations are fine here.
            let generators = set.truncation(k)?;
            let bits: Vec<Symbol> = sieve(&generators, n).into_iter().map(Symbol::from).collect();
            let trace = dbar_estimate(&bits, &full, schedule)?;
            Ok(TruncationTrace { k, generators, trace })
        })
        .collect::<Result<Vec<_>>>()?;
    let tails: Vec<f64> = traces.iter().map(|t| t.trace.estimate).collect();
    let nonincreasing = tails.windows(2).all(|w| w[1] <= w[0] + tolerance);
    Ok(DavenportErdosReport { n, traces, tails, nonincreasing, tolerance })
}

/// Parameters of the Mirsky experiment; unset scan fields get experiment defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MirskyConfig {
    pub scan: ScanConfig,
    /// Window length as a multiple of the period, used unless `n` is set.
    pub length_factor: usize,
    pub n: Option<usize>,
    pub tau_reg: f64,
    pub amplitude_tol: f64,
    /// Window for the `eta_B` containment scan; skipped when unset.
    pub liminf_n: Option<usize>,
    /// Detection threshold of the containment scans.
    pub liminf_tau_det: Option<f64>,
}

impl Default for MirskyConfig {
    fn default() -> Self {
        Self {
            // Mixed-generator coefficients of size 1/36 and below must be
            // detected for the spectral mass to add up.
            scan: ScanConfig { tau_det: Some(0.005), ..ScanConfig::default() },
            length_factor: 16,
            n: None,
            tau_reg: DEFAULT_TAU_REG,
            amplitude_tol: 1e-6,
            liminf_n: None,
            liminf_tau_det: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertifiedFrequency {
    pub theta: f64,
    pub refined_theta: f64,
    pub p: Option<u64>,
    pub q: Option<u64>,
    pub amplitude: f64,
    /// `|c|` for the exact one-period coefficient `c` at `p/q`.
    pub exact_amplitude: Option<f64>,
    pub amplitude_error: Option<f64>,
    pub divides_period: bool,
}

/// Certification of the rational discrete spectrum of `eta_{B(k)}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MirskyCertificate {
    pub k: usize,
    pub generators: Vec<u64>,
    pub period: u64,
    pub n: usize,
    pub density: f64,
    pub frequencies: Vec<CertifiedFrequency>,
    pub regularity: RegularityReport,
    pub rational_ok: bool,
    pub amplitudes_ok: bool,
    pub regularity_ok: bool,
    pub spectrum: FrequencySpectrum,
}

impl MirskyCertificate {
    pub fn passed(&self) -> bool {
        self.rational_ok && self.amplitudes_ok && self.regularity_ok
    }
}

/// `(1/L) sum_{j<L} eta_j e^{-2 pi i j p/q}` over one period `L`, `q | L`.
pub fn period_coefficient(period_word: &[bool], p: u64, q: u64) -> Complex64 {
    let l = period_word.len() as u64;
    debug_assert_eq!(l % q, 0);
    let step = (p % q) * (l / q);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut idx = 0u64;
    for &b in period_word {
        if b {
            sum += Complex64::from_polar(1.0, -std::f64::consts::TAU * idx as f64 / l as f64);
        }
        idx = (idx + step) % l;
    }
    sum / l as f64
}

pub fn mirsky_certificate(set: &GeneratorSet, k: usize, config: &MirskyConfig) -> Result<MirskyCertificate> {
    let period = set.truncation_lcm(k)?;
    let l = usize::try_from(period).map_err(|_| Error::Capacity(format!("period {period} too large")))?;
    let n = match config.n {
        Some(n) => n,
        None => l
            .checked_mul(config.length_factor)
            .ok_or_else(|| Error::Capacity(format!("window {}*{l} too large", config.length_factor)))?,
    };
    if n < 16 * l {
        return Err(Error::argument(format!("window {n} shorter than 16 periods ({})", 16 * l)));
    }
    let window = eta_window(set, n, Some(k))?;
    let series = window.series();
    let schedule = CheckpointSchedule::new((0..4).rev().map(|i| n >> i).collect())?;
    let mut scan = config.scan.clone();
    scan.q_max = period;
    scan.snap_tol = Some(scan.snap_tol.unwrap_or(1.0 / (4.0 * n as f64)));
    let spectrum = frequency_scan(&series, &schedule, &scan)?;
    let one_period = &window.bits()[..l];
    let frequencies: Vec<CertifiedFrequency> = spectrum
        .entries
        .iter()
        .map(|e| {
            let rational = e.probe.exact_rational();
            let divides = rational.is_some_and(|(_, q)| period % q == 0);
            let exact =
                rational.filter(|_| divides).map(|(p, q)| period_coefficient(one_period, p, q).norm());
            CertifiedFrequency {
                theta: e.probe.theta(),
                refined_theta: e.refined_theta,
                p: rational.map(|r| r.0),
                q: rational.map(|r| r.1),
                amplitude: e.amplitude,
                exact_amplitude: exact,
                amplitude_error: exact.map(|x| (x - e.amplitude).abs()),
                divides_period: divides,
            }
        })
        .collect();
    let regularity = regularity_check_with("eta[0]", &series, &spectrum, config.tau_reg)?;
    let rational_ok = frequencies.iter().all(|f| f.divides_period);
    let amplitudes_ok =
        frequencies.iter().all(|f| f.amplitude_error.is_some_and(|e| e <= config.amplitude_tol));
    let regularity_ok = regularity.classification == RegularityClass::DiscreteSpectrumConsistent;
    Ok(MirskyCertificate {
        k,
        generators: window.generators.clone(),
        period,
        n,
        density: one_period.iter().filter(|&&b| b).count() as f64 / l as f64,
        frequencies,
        regularity,
        rational_ok,
        amplitudes_ok,
        regularity_ok,
        spectrum,
    })
}

/// Frequencies of `eta_B` missing from the spectrum of one truncation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationContainment {
    pub k: usize,
    pub thetas: Vec<f64>,
    pub missing: Vec<f64>,
}

/// Finite-window shadow of `Spec(eta_B) ⊆ liminf_k Spec(eta_{B(k)})`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiminfContainment {
    pub n: usize,
    pub tau_det: f64,
    pub tolerance: f64,
    pub target_thetas: Vec<f64>,
    pub truncations: Vec<TruncationContainment>,
}

impl LiminfContainment {
    /// Smallest tested `k` from which every truncation contains the target spectrum.
    pub fn holds_from(&self) -> Option<usize> {
        let mut from = None;
        for t in self.truncations.iter().rev() {
            if !t.missing.is_empty() {
                break;
            }
            from = Some(t.k);
        }
        from
    }

    pub fn holds_for_all_from(&self, k0: usize) -> bool {
        self.truncations.iter().filter(|t| t.k >= k0).all(|t| t.missing.is_empty())
    }
}

pub fn liminf_containment(
    set: &GeneratorSet,
    truncations: &[usize],
    n: usize,
    scan: &ScanConfig,
) -> Result<LiminfContainment> {
    let schedule = CheckpointSchedule::new((0..4).rev().map(|i| n >> i).collect())?;
    let scan_of = |truncation: Option<usize>| -> Result<FrequencySpectrum> {
        frequency_scan(&eta_window(set, n, truncation)?.series(), &schedule, scan)
    };
    let target = scan_of(None)?;
    let spectra = truncations.par_iter().map(|&k| scan_of(Some(k))).collect::<Result<Vec<_>>>()?;
    let tolerance = spectra.iter().map(|s| s.resolution()).fold(target.resolution(), f64::max);
    let target_thetas = target.thetas();
    let truncations = truncations
        .iter()
        .zip(&spectra)
        .map(|(&k, s)| {
            let probes: Vec<FrequencyProbe> = s.entries.iter().map(|e| e.probe).collect();
            let missing = target
                .entries
                .iter()
                .filter(|e| !probes.iter().any(|p| p.distance(&e.probe) <= tolerance + TAU_NUM))
                .map(|e| e.probe.theta())
                .collect();
            TruncationContainment { k, thetas: s.thetas(), missing }
        })
        .collect();
    Ok(LiminfContainment { n, tau_det: target.thresholds.tau_det, tolerance, target_thetas, truncations })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MirskyReport {
    pub certificates: Vec<MirskyCertificate>,
    pub containment: Option<LiminfContainment>,
}

impl MirskyReport {
    pub fn passed(&self) -> bool {
        self.certificates.iter().all(MirskyCertificate::passed)
            && self.containment.as_ref().is_none_or(|c| c.holds_from().is_some())
    }
}

pub fn mirsky_spectrum_experiment(
    set: &GeneratorSet,
    truncations: &[usize],
    config: &MirskyConfig,
) -> Result<MirskyReport> {
    if truncations.is_empty() {
        return Err(Error::argument("no truncations given"));
    }
    let certificates =
        truncations.iter().map(|&k| mirsky_certificate(set, k, config)).collect::<Result<Vec<_>>>()?;
    let containment = match config.liminf_n {
        Some(n) => {
            let mut scan = config.scan.clone();
            scan.tau_det = config.liminf_tau_det.or(scan.tau_det);
            Some(liminf_containment(set, truncations, n, &scan)?)
        }
        None => None,
    };
    Ok(MirskyReport { certificates, containment })
}
