//! Besicovitch-type pseudometrics between orbits, estimated along
//! checkpoint schedules.
//!
//! Every `limsup` is replaced by the maximum over the last
//! `max(2, ceil(m/3))` checkpoints (see [`CheckpointSchedule::tail_len`]).
//! Symbolic states are compared with the `2^-|k|` metric truncated at
//! [`LOOKAHEAD`]; indices whose `LOOKAHEAD`-neighborhood is not fully known
//! are excluded from the averages and the exclusion is reported.

use serde::{Deserialize, Serialize};

use crate::dynsys::{
    state_metric, Cost, OrbitWindow, StateMetric, StatePoint, Symbol, SymbolicPoint, SystemSpec,
};
use crate::error::{Error, Result};
use crate::schedule::CheckpointSchedule;
use crate::TAU_NUM;

/// Coordinates searched on each side when evaluating the symbolic metric.
pub const LOOKAHEAD: usize = 32;

/// Ratios `|Q ∩ [0, n_k)| / n_k` along a schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityTrace {
    pub checkpoints: Vec<usize>,
    pub ratios: Vec<f64>,
    /// Tail maximum: the upper-density surrogate.
    pub upper: f64,
    /// Tail minimum: the lower-density surrogate.
    pub lower: f64,
    pub tail_len: usize,
}

pub fn upper_density(indicator: &[bool], schedule: &CheckpointSchedule) -> Result<DensityTrace> {
    schedule.fits(indicator.len())?;
    let mut ratios = Vec::with_capacity(schedule.len());
    let mut count = 0usize;
    let mut j = 0;
    for &n in schedule.checkpoints() {
        count += indicator[j..n].iter().filter(|&&b| b).count();
        j = n;
        ratios.push(count as f64 / n as f64);
    }
    let tail = schedule.tail(&ratios);
    Ok(DensityTrace {
        checkpoints: schedule.checkpoints().to_vec(),
        upper: tail.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        lower: tail.iter().copied().fold(f64::INFINITY, f64::min),
        ratios,
        tail_len: schedule.tail_len(),
    })
}

/// Time averages `(1/n_k) sum_{j<n_k} rho(T^j x, T^j y)` along a schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudometricTrace {
    pub checkpoints: Vec<usize>,
    pub averages: Vec<f64>,
    /// Tail maximum: the limsup surrogate.
    pub estimate: f64,
    pub tail_len: usize,
    pub metric: String,
    /// Indices below each checkpoint left out because the metric could not
    /// be evaluated exactly there.
    pub excluded: Vec<usize>,
}

impl PseudometricTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("checkpoint,value\n");
        for (n, v) in self.checkpoints.iter().zip(&self.averages) {
            out.push_str(&format!("{n},{v}\n"));
        }
        out
    }
}

/// Per-index costs `c_j = cost(T^j x, T^j y)` for `j < n`, with the indices
/// at which the cost is exactly known.
#[derive(Clone, Debug)]
pub struct CostProfile {
    pub values: Vec<f64>,
    pub included: Vec<bool>,
    pub metric: String,
    pub diameter: f64,
}

impl CostProfile {
    /// Averages over included indices at each checkpoint and the excluded counts.
    fn averages(&self, schedule: &CheckpointSchedule) -> Result<(Vec<f64>, Vec<usize>)> {
        self.ratios_of(schedule, |v| v)
    }

    fn ratios_of(
        &self,
        schedule: &CheckpointSchedule,
        f: impl Fn(f64) -> f64,
    ) -> Result<(Vec<f64>, Vec<usize>)> {
        let mut sum = 0.0;
        let mut used = 0usize;
        let mut j = 0;
        let mut averages = Vec::with_capacity(schedule.len());
        let mut excluded = Vec::with_capacity(schedule.len());
        for &n in schedule.checkpoints() {
            while j < n {
                if self.included[j] {
                    sum += f(self.values[j]);
                    used += 1;
                }
                j += 1;
            }
            if used == 0 {
                return Err(Error::argument(format!(
                    "no index below {n} has a fully known {LOOKAHEAD}-neighborhood"
                )));
            }
            averages.push(sum / used as f64);
            excluded.push(n - used);
        }
        Ok((averages, excluded))
    }
}

fn check_pair(x: &OrbitWindow, y: &OrbitWindow, schedule: &CheckpointSchedule) -> Result<()> {
    if state_metric(x.spec()) != state_metric(y.spec()) {
        return Err(Error::argument("orbits live in systems with different metrics"));
    }
    schedule.fits(x.len().min(y.len()))
}

/// Costs along paired orbits for the first `n` indices.
pub fn cost_profile(x: &OrbitWindow, y: &OrbitWindow, n: usize, cost: Cost) -> Result<CostProfile> {
    if n > x.len() || n > y.len() {
        return Err(Error::argument(format!("orbits shorter than {n}")));
    }
    match (cost, x.labels(), y.labels()) {
        (Cost::D0, Some(a), Some(b)) => Ok(CostProfile {
            values: a[..n].iter().zip(&b[..n]).map(|(p, q)| f64::from(u8::from(p != q))).collect(),
            included: vec![true; n],
            metric: "d0 (coordinate-0 mismatch)".into(),
            diameter: 1.0,
        }),
        (Cost::D0, _, _) => Err(Error::domain("the d0 cost needs symbolic orbits")),
        (Cost::Rho2k, _, _) => match (x.origin(), y.origin()) {
            (StatePoint::Symbolic(a), StatePoint::Symbolic(b)) => Ok(symbolic_profile(a, b, n, LOOKAHEAD)),
            (StatePoint::Angle(_), StatePoint::Angle(_)) => {
                let m = StateMetric::Circle;
                let values =
                    (0..n).map(|j| m.distance(&x.state(j), &y.state(j))).collect::<Result<Vec<_>>>()?;
                Ok(CostProfile {
                    values,
                    included: vec![true; n],
                    metric: m.describe(),
                    diameter: m.diameter(),
                })
            }
            _ => {
                let m = with_lookahead(state_metric(x.spec()));
                let values =
                    (0..n).map(|j| m.distance(&x.state(j), &y.state(j))).collect::<Result<Vec<_>>>()?;
                Ok(CostProfile {
                    values,
                    included: vec![true; n],
                    metric: m.describe(),
                    diameter: m.diameter(),
                })
            }
        },
    }
}

fn with_lookahead(m: StateMetric) -> StateMetric {
    match m {
        StateMetric::Symbolic { .. } => StateMetric::Symbolic { lookahead: Some(LOOKAHEAD) },
        StateMetric::Max(a, b) => {
            StateMetric::Max(Box::new(with_lookahead(*a)), Box::new(with_lookahead(*b)))
        }
        other => other,
    }
}

/// `rho(sigma^j a, sigma^j b) = 2^-d` with `d` the distance from `j` to the
/// nearest mismatch within `k` coordinates (0 if there is none).
fn symbolic_profile(a: &SymbolicPoint, b: &SymbolicPoint, n: usize, k: usize) -> CostProfile {
    let k_i = k as i64;
    let span = n + 2 * k;
    // Index t of these arrays is coordinate t - k.
    let mut mismatch = vec![false; span];
    let mut unknown_prefix = vec![0usize; span + 1];
    for t in 0..span {
        let i = t as i64 - k_i;
        let known = match (a.symbol(i), b.symbol(i)) {
            (Some(p), Some(q)) => {
                mismatch[t] = p != q;
                true
            }
            _ => false,
        };
        unknown_prefix[t + 1] = unknown_prefix[t] + usize::from(!known);
    }
    let mut prev = vec![None; span];
    let mut last = None;
    for t in 0..span {
        if mismatch[t] {
            last = Some(t);
        }
        prev[t] = last;
    }
    let mut next = vec![None; span];
    let mut upcoming = None;
    for t in (0..span).rev() {
        if mismatch[t] {
            upcoming = Some(t);
        }
        next[t] = upcoming;
    }
    let mut values = Vec::with_capacity(n);
    let mut included = Vec::with_capacity(n);
    for j in 0..n {
        let t = j + k;
        let d_prev = prev[t].map(|p| t - p);
        let d_next = next[t].map(|q| q - t);
        let d = match (d_prev, d_next) {
            (Some(p), Some(q)) => Some(p.min(q)),
            (p, q) => p.or(q),
        };
        values.push(match d {
            Some(d) if d <= k => (-(d as f64)).exp2(),
            _ => 0.0,
        });
        included.push(unknown_prefix[t + k + 1] == unknown_prefix[t - k]);
    }
    CostProfile { values, included, metric: format!("symbolic 2^-|k| (lookahead {k})"), diameter: 1.0 }
}

fn trace_from(profile: &CostProfile, schedule: &CheckpointSchedule) -> Result<PseudometricTrace> {
    let (averages, excluded) = profile.averages(schedule)?;
    let estimate = schedule.tail(&averages).iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(PseudometricTrace {
        checkpoints: schedule.checkpoints().to_vec(),
        averages,
        estimate,
        tail_len: schedule.tail_len(),
        metric: profile.metric.clone(),
        excluded,
    })
}

/// `D_B` along the schedule with the state metric of the orbits' system.
pub fn besicovitch_estimate(
    x: &OrbitWindow,
    y: &OrbitWindow,
    schedule: &CheckpointSchedule,
) -> Result<PseudometricTrace> {
    besicovitch_estimate_with(x, y, schedule, Cost::Rho2k)
}

pub fn besicovitch_estimate_with(
    x: &OrbitWindow,
    y: &OrbitWindow,
    schedule: &CheckpointSchedule,
    cost: Cost,
) -> Result<PseudometricTrace> {
    check_pair(x, y, schedule)?;
    trace_from(&cost_profile(x, y, schedule.last(), cost)?, schedule)
}

/// Result of the exceedance-density variant of `D_B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TildeEstimate {
    pub value: f64,
    /// Ascending grid of thresholds.
    pub delta_grid: Vec<f64>,
    /// Upper-density surrogate of `{j : rho_j >= delta}` for each grid value.
    pub exceedance: Vec<f64>,
    pub metric: String,
}

/// `count` log-spaced thresholds in `[2^-10 * diameter, diameter]`.
pub fn default_delta_grid(diameter: f64, count: usize) -> Vec<f64> {
    let lo = (2f64.powi(-10)).ln();
    (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1).max(1) as f64;
            diameter * (lo * (1.0 - t)).exp()
        })
        .collect()
}

/// `inf { delta : d*({j : rho(T^j x, T^j y) >= delta}) < delta }` over the grid.
pub fn tilde_besicovitch(
    x: &OrbitWindow,
    y: &OrbitWindow,
    schedule: &CheckpointSchedule,
    delta_grid: &[f64],
) -> Result<TildeEstimate> {
    tilde_besicovitch_with(x, y, schedule, delta_grid, Cost::Rho2k)
}

pub fn tilde_besicovitch_with(
    x: &OrbitWindow,
    y: &OrbitWindow,
    schedule: &CheckpointSchedule,
    delta_grid: &[f64],
    cost: Cost,
) -> Result<TildeEstimate> {
    check_pair(x, y, schedule)?;
    let profile = cost_profile(x, y, schedule.last(), cost)?;
    tilde_from_profile(&profile, schedule, delta_grid)
}

fn tilde_from_profile(
    profile: &CostProfile,
    schedule: &CheckpointSchedule,
    delta_grid: &[f64],
) -> Result<TildeEstimate> {
    if delta_grid.is_empty() {
        return Err(Error::argument("delta grid is empty"));
    }
    if delta_grid.iter().any(|&d| !(d > 0.0 && d <= profile.diameter + TAU_NUM)) {
        return Err(Error::argument(format!("delta grid must lie in (0, {}]", profile.diameter)));
    }
    let mut grid = delta_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut exceedance = Vec::with_capacity(grid.len());
    for &delta in &grid {
        let (ratios, _) = profile.ratios_of(schedule, |v| f64::from(u8::from(v >= delta)))?;
        exceedance.push(schedule.tail(&ratios).iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    let value = grid
        .iter()
        .zip(&exceedance)
        .find(|(d, e)| *e < *d)
        .map_or(*grid.last().expect("nonempty"), |(d, _)| *d);
    Ok(TildeEstimate { value, delta_grid: grid, exceedance, metric: profile.metric.clone() })
}

/// `dbar` along the schedule: the Hamming-mismatch fraction of prefixes.
pub fn dbar_estimate(x: &[Symbol], y: &[Symbol], schedule: &CheckpointSchedule) -> Result<PseudometricTrace> {
    if x.len() != y.len() {
        return Err(Error::argument(format!("sequence lengths differ: {} vs {}", x.len(), y.len())));
    }
    schedule.fits(x.len())?;
    let n = schedule.last();
    let profile = CostProfile {
        values: x[..n].iter().zip(&y[..n]).map(|(a, b)| f64::from(u8::from(a != b))).collect(),
        included: vec![true; n],
        metric: "d0 (Hamming)".into(),
        diameter: 1.0,
    };
    // Integer counts keep the averages exact.
    let mut trace = trace_from(&profile, schedule)?;
    let mut count = 0usize;
    let mut j = 0;
    for (avg, &cp) in trace.averages.iter_mut().zip(schedule.checkpoints()) {
        count += x[j..cp].iter().zip(&y[j..cp]).filter(|(a, b)| a != b).count();
        j = cp;
        *avg = count as f64 / cp as f64;
    }
    trace.estimate = schedule.tail(&trace.averages).iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(trace)
}

/// Cross-check of `D_B`, its exceedance variant and `dbar` on one pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairAudit {
    pub dbar: PseudometricTrace,
    pub besicovitch: PseudometricTrace,
    pub tilde: TildeEstimate,
    /// `dbar` restricted to the indices included in the `D_B` averages.
    pub dbar_included: Vec<f64>,
    /// Mismatches in `[0, n + K)` divided by the included count.
    pub dbar_extended: Vec<f64>,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub lookahead: usize,
    pub pairs: Vec<PairAudit>,
    pub violations: usize,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks, per pair and checkpoint, the uniform-equivalence inequalities for
/// the `2^-|k|` metric with lookahead `K`:
///
/// * `dbar <= D_B` (the cost is 1 at every mismatch),
/// * `D_B <= 3 * dbar_ext` (`2^-d <= sum_{|i|<=K} 2^-|i| 1[mismatch at j+i]`),
/// * `D_B <= (1 + diameter) * tilde` (Markov, exceedance set below `tilde`),
/// * `tilde <= min{delta : delta^2 > D_B}` (Markov, the other direction),
///
/// and that the three estimates vanish together.
pub fn equivalence_audit(
    pairs: &[(Vec<Symbol>, Vec<Symbol>)],
    schedule: &CheckpointSchedule,
    delta_grid: &[f64],
) -> Result<AuditReport> {
    use rayon::prelude::*;

    let audits =
        pairs.par_iter().map(|(x, y)| audit_pair(x, y, schedule, delta_grid)).collect::<Result<Vec<_>>>()?;
    let violations = audits.iter().map(|a| a.violations.len()).sum();
    Ok(AuditReport { lookahead: LOOKAHEAD, pairs: audits, violations })
}

fn audit_pair(
    x: &[Symbol],
    y: &[Symbol],
    schedule: &CheckpointSchedule,
    delta_grid: &[f64],
) -> Result<PairAudit> {
    let dbar = dbar_estimate(x, y, schedule)?;
    let alphabet = x.iter().chain(y).copied().max().map_or(1, |m| m as usize + 1);
    let spec = SystemSpec::full_shift(alphabet)?;
    let orbit = |w: &[Symbol]| -> Result<OrbitWindow> {
        let origin = StatePoint::Symbolic(SymbolicPoint::window(w.to_vec(), 0)?);
        crate::dynsys::generate_orbit(&spec, &origin, schedule.last())
    };
    let (ox, oy) = (orbit(x)?, orbit(y)?);
    let profile = cost_profile(&ox, &oy, schedule.last(), Cost::Rho2k)?;
    let besicovitch = trace_from(&profile, schedule)?;
    let tilde = tilde_from_profile(&profile, schedule, delta_grid)?;

    let mut dbar_included = Vec::with_capacity(schedule.len());
    let mut dbar_extended = Vec::with_capacity(schedule.len());
    for (&n, &excluded) in schedule.checkpoints().iter().zip(&besicovitch.excluded) {
        let used = (n - excluded) as f64;
        let inc = (0..n).filter(|&j| profile.included[j] && x[j] != y[j]).count();
        let ext_end = (n + LOOKAHEAD).min(x.len());
        let ext = (0..ext_end).filter(|&j| x[j] != y[j]).count();
        dbar_included.push(inc as f64 / used);
        dbar_extended.push(ext as f64 / used);
    }

    let mut violations = Vec::new();
    for (i, &n) in schedule.checkpoints().iter().enumerate() {
        let db = besicovitch.averages[i];
        if dbar_included[i] > db + TAU_NUM {
            violations.push(format!("n={n}: dbar {} exceeds D_B {db}", dbar_included[i]));
        }
        if db > 3.0 * dbar_extended[i] + TAU_NUM {
            violations.push(format!("n={n}: D_B {db} exceeds 3 * dbar_ext {}", dbar_extended[i]));
        }
    }
    if besicovitch.estimate > 2.0 * tilde.value + TAU_NUM && tilde.value < *tilde.delta_grid.last().unwrap() {
        violations
            .push(format!("D_B {} exceeds (1 + diameter) * tilde {}", besicovitch.estimate, tilde.value));
    }
    if let Some(markov) = tilde.delta_grid.iter().find(|&&d| d * d > besicovitch.estimate) {
        if tilde.value > *markov + TAU_NUM {
            violations.push(format!("tilde {} exceeds Markov bound {markov}", tilde.value));
        }
    }
    let zero_dbar = dbar.estimate == 0.0;
    let zero_db = besicovitch.estimate == 0.0;
    let zero_tilde = tilde.value == tilde.delta_grid[0] && tilde.exceedance[0] == 0.0;
    if zero_dbar != zero_db || zero_db != zero_tilde {
        violations.push(format!(
            "estimates do not vanish together: dbar {}, D_B {}, tilde {}",
            dbar.estimate, besicovitch.estimate, tilde.value
        ));
    }
    Ok(PairAudit { dbar, besicovitch, tilde, dbar_included, dbar_extended, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::generate_orbit;
    use proptest::prelude::*;

    fn periodic(word: &[Symbol], phase: usize, n: usize) -> OrbitWindow {
        let spec = SystemSpec::full_shift(2).unwrap();
        let origin = StatePoint::Symbolic(SymbolicPoint::periodic(word.to_vec(), phase).unwrap());
        generate_orbit(&spec, &origin, n).unwrap()
    }

    fn window(word: Vec<Symbol>) -> OrbitWindow {
        let spec = SystemSpec::full_shift(2).unwrap();
        let n = word.len();
        let origin = StatePoint::Symbolic(SymbolicPoint::window(word, 0).unwrap());
        generate_orbit(&spec, &origin, n).unwrap()
    }

    fn sched(v: &[usize]) -> CheckpointSchedule {
        CheckpointSchedule::new(v.to_vec()).unwrap()
    }

    /// Independent squarefree test by trial division.
    fn squarefree(j: u64) -> bool {
        let mut p = 2;
        while p * p <= j {
            if j.is_multiple_of(p * p) {
                return false;
            }
            p += 1;
        }
        j != 0
    }

    #[test]
    fn density_examples() {
        let s = sched(&[10, 100, 1000]);
        let all = vec![true; 1000];
        let d = upper_density(&all, &s).unwrap();
        assert_eq!(d.ratios, vec![1.0; 3]);
        assert_eq!((d.upper, d.lower), (1.0, 1.0));

        let even: Vec<bool> = (0..1000).map(|j| j % 2 == 0).collect();
        assert_eq!(upper_density(&even, &s).unwrap().ratios, vec![0.5; 3]);

        let n = 1_000_000;
        let sf: Vec<bool> = (0..n as u64).map(squarefree).collect();
        let d = upper_density(&sf, &sched(&[100_000, n])).unwrap();
        assert!((d.ratios[1] - 0.6079).abs() < 1e-3);
        assert!(d.upper >= d.lower);
        assert!(upper_density(&all, &sched(&[10, 2000])).is_err());
    }

    #[test]
    fn besicovitch_examples() {
        let s = sched(&[64, 128, 256]);
        let x = periodic(&[0, 1], 0, 256);
        let same = besicovitch_estimate(&x, &x, &s).unwrap();
        assert_eq!(same.averages, vec![0.0; 3]);
        let y = periodic(&[0, 1], 1, 256);
        let t = besicovitch_estimate(&x, &y, &s).unwrap();
        assert_eq!(t.averages, vec![1.0; 3]);
        assert_eq!(t.estimate, 1.0);
        assert_eq!(t.excluded, vec![0; 3]);

        let rot = SystemSpec::rational_rotation(1, 4).unwrap();
        let a = generate_orbit(&rot, &StatePoint::Angle(0.0), 256).unwrap();
        let b = generate_orbit(&rot, &StatePoint::Angle(0.1), 256).unwrap();
        let t = besicovitch_estimate(&a, &b, &s).unwrap();
        for v in &t.averages {
            assert!((v - 0.1).abs() < 1e-12);
        }
        assert!(besicovitch_estimate(&a, &x, &s).is_err());
        assert!(besicovitch_estimate(&x, &y, &sched(&[64, 512])).is_err());
    }

    #[test]
    fn irrational_rotation_is_isometric() {
        let rot = SystemSpec::rotation((5f64.sqrt() - 1.0) / 2.0).unwrap();
        let a = generate_orbit(&rot, &StatePoint::Angle(0.05), 10_000).unwrap();
        let b = generate_orbit(&rot, &StatePoint::Angle(0.3), 10_000).unwrap();
        let t = besicovitch_estimate(&a, &b, &sched(&[100, 1000, 10_000])).unwrap();
        for v in &t.averages {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_windows_report_exclusions() {
        let x = window(vec![0; 200]);
        let mut w = vec![0; 200];
        w[100] = 1;
        let y = window(w);
        let t = besicovitch_estimate(&x, &y, &sched(&[100, 200])).unwrap();
        assert_eq!(t.excluded, vec![32, 64]);
        // Included indices 32..168; the mismatch at 100 contributes 1 + 2*(1/2 + ... + 2^-32).
        let contribution: f64 = 1.0 + 2.0 * (1..=32).map(|d| (-(d as f64)).exp2()).sum::<f64>();
        assert!((t.averages[1] - contribution / 136.0).abs() < 1e-12);
    }

    #[test]
    fn tilde_examples() {
        let s = sched(&[1000, 2000, 4000]);
        let grid = default_delta_grid(1.0, 64);
        let x = periodic(&[0, 1], 0, 4000);
        assert_eq!(tilde_besicovitch(&x, &x, &s, &grid).unwrap().value, grid[0]);

        // Mismatch exactly on multiples of 10 (density 0.1).
        let mut wa = vec![0; 10];
        let wb = wa.clone();
        wa[0] = 1;
        let a = periodic(&wa, 0, 4000);
        let b = periodic(&wb, 0, 4000);
        let t = tilde_besicovitch_with(&a, &b, &s, &grid, Cost::D0).unwrap();
        let expected = *grid.iter().find(|&&d| d > 0.1).unwrap();
        assert_eq!(t.value, expected);
        // With 2^-|k|, the exceedance set of delta in (1/4, 1/2] also holds the
        // two neighbors of each mismatch: density 0.3.
        let t = tilde_besicovitch(&a, &b, &s, &grid).unwrap();
        let expected = *grid.iter().find(|&&d| d > 0.3).unwrap();
        assert_eq!(t.value, expected);

        let y = periodic(&[0, 1], 1, 4000);
        assert_eq!(tilde_besicovitch(&x, &y, &s, &grid).unwrap().value, 1.0);
        assert!(tilde_besicovitch(&x, &y, &s, &[0.0, 0.5]).is_err());
        assert!(tilde_besicovitch(&x, &y, &s, &[]).is_err());
    }

    #[test]
    fn dbar_examples() {
        let s = sched(&[10, 100]);
        let w: Vec<Symbol> = (0..100).map(|j| (j % 2) as Symbol).collect();
        let v: Vec<Symbol> = (0..100).map(|j| ((j + 1) % 2) as Symbol).collect();
        assert_eq!(dbar_estimate(&w, &w, &s).unwrap().estimate, 0.0);
        assert_eq!(dbar_estimate(&w, &v, &s).unwrap().estimate, 1.0);
        assert!(dbar_estimate(&w, &v[..99], &s).is_err());

        // eta_{2} vs eta_{2,3}: mismatch exactly at odd multiples of 3.
        let n = 1_000_000;
        let e2: Vec<Symbol> = (0..n).map(|j| u8::from(j % 2 != 0)).collect();
        let e23: Vec<Symbol> = (0..n).map(|j| u8::from(j % 2 != 0 && j % 3 != 0)).collect();
        let t = dbar_estimate(&e2, &e23, &sched(&[n / 10, n])).unwrap();
        assert!((t.estimate - 1.0 / 6.0).abs() < 1e-3);
    }

    #[test]
    fn audit_examples() {
        let s = sched(&[2000, 4000, 8000]);
        let grid = default_delta_grid(1.0, 64);
        let n = 8000 + LOOKAHEAD;
        let zeros = vec![0u8; n];
        let ones = vec![1u8; n];
        let tenth: Vec<Symbol> = (0..n).map(|j| u8::from(j % 10 == 0)).collect();
        let report = equivalence_audit(
            &[(zeros.clone(), zeros.clone()), (zeros.clone(), ones), (zeros, tenth)],
            &s,
            &grid,
        )
        .unwrap();
        assert!(report.passed(), "{:?}", report.pairs.iter().map(|p| &p.violations).collect::<Vec<_>>());
        let p = &report.pairs;
        assert_eq!((p[0].dbar.estimate, p[0].besicovitch.estimate), (0.0, 0.0));
        assert_eq!(p[0].tilde.value, grid[0]);
        assert_eq!((p[1].dbar.estimate, p[1].besicovitch.estimate, p[1].tilde.value), (1.0, 1.0, 1.0));
        assert!((p[2].dbar.estimate - 0.1).abs() < 1e-3);
        let db = p[2].besicovitch.estimate;
        assert!((0.1 - 1e-3..=0.3 + 1e-3).contains(&db), "{db}");
    }

    proptest! {
        #[test]
        fn dbar_matches_naive_count(
            x in proptest::collection::vec(0u8..3, 100),
            y in proptest::collection::vec(0u8..3, 100),
        ) {
            let s = sched(&[7, 33, 100]);
            let t = dbar_estimate(&x, &y, &s).unwrap();
            for (avg, &n) in t.averages.iter().zip(s.checkpoints()) {
                let mut hamming = 0;
                for j in 0..n {
                    if x[j] != y[j] {
                        hamming += 1;
                    }
                }
                prop_assert_eq!(*avg, hamming as f64 / n as f64);
            }
            prop_assert_eq!(t.averages.clone(), dbar_estimate(&y, &x, &s).unwrap().averages);
        }

        #[test]
        fn besicovitch_triangle_inequality(
            wx in proptest::collection::vec(0u8..2, 1..9),
            wy in proptest::collection::vec(0u8..2, 1..9),
            wz in proptest::collection::vec(0u8..2, 1..9),
        ) {
            let s = sched(&[50, 100, 200]);
            let (x, y, z) = (periodic(&wx, 0, 200), periodic(&wy, 0, 200), periodic(&wz, 0, 200));
            let d = |a: &OrbitWindow, b: &OrbitWindow| besicovitch_estimate(a, b, &s).unwrap().averages;
            let (xy, yz, xz, yx) = (d(&x, &y), d(&y, &z), d(&x, &z), d(&y, &x));
            for i in 0..3 {
                prop_assert!(xz[i] <= xy[i] + yz[i] + 1e-12);
                prop_assert_eq!(xy[i], yx[i]);
            }
        }

        #[test]
        fn tilde_markov_direction(
            mism in proptest::collection::vec(proptest::bool::weighted(0.1), 2000),
        ) {
            let s = sched(&[500, 1000, 2000]);
            let grid = default_delta_grid(1.0, 64);
            let y: Vec<Symbol> = mism.iter().map(|&b| u8::from(b)).collect();
            let report = equivalence_audit(&[(vec![0; 2000], y)], &s, &grid).unwrap();
            let pair = &report.pairs[0];
            let delta = pair.tilde.value;
            if delta < 1.0 {
                prop_assert!(pair.besicovitch.estimate <= delta * delta + delta * 1.0 + delta);
            }
            prop_assert!(report.passed(), "{:?}", pair.violations);
        }
    }
}
