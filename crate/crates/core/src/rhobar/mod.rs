//! `rho-bar` / `d-bar` distances between invariant measures: exact for pairs
//! of periodic orbits, certified brackets for measures given by orbit data.

pub mod transport;

use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use transport::{
    transport_lower_bound, transport_lp, Atoms, CouplingPlan, TransportSolution, SUPPORT_CAP,
};

use crate::besicovitch::{besicovitch_estimate_with, dbar_estimate, PseudometricTrace};
use crate::dynsys::{
    least_period, state_metric, Continuation, Cost, OrbitWindow, StatePoint, Symbol, SymbolicPoint,
    SystemSpec,
};
use crate::error::{Error, Result};
use crate::measures::{empirical_measure_windows, hamming, PeriodicMeasure};
use crate::schedule::CheckpointSchedule;
use crate::TAU_NUM;

/// Largest `gcd * lcm` (pair evaluations) accepted by the exact enumeration.
const EXACT_WORK_CAP: u128 = 1 << 34;

/// Exact distance between two periodic-orbit measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactDistance {
    pub value: f64,
    /// Smallest optimal relative offset `r < gcd(p, q)`.
    pub offset: usize,
    pub period_a: usize,
    pub period_b: usize,
    pub lcm: usize,
    pub cost: Cost,
    pub metric: String,
}

fn check_work(p: usize, q: usize) -> Result<(usize, usize)> {
    let g = p.gcd(&q);
    let l = p.lcm(&q);
    if (g as u128) * (l as u128) > EXACT_WORK_CAP {
        return Err(Error::Capacity(format!(
            "exact enumeration over {g} offsets of an lcm window of {l} is too large"
        )));
    }
    Ok((g, l))
}

/// Minimum over `r < gcd(p, q)` of `sum_{j<L} cost(a_j, b_{j+r}) / L`, where
/// `per_offset(r)` returns the sum.
fn min_over_offsets(g: usize, l: usize, per_offset: impl Fn(usize) -> f64 + Sync + Send) -> (f64, usize) {
    let sums: Vec<f64> = (0..g).into_par_iter().map(per_offset).collect();
    let (offset, sum) =
        sums.iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (r, &s)| if s < best.1 { (r, s) } else { best });
    (sum / l as f64, offset)
}

/// `d-bar` between periodic measures: the least mismatch density over the
/// ergodic joinings, indexed by the relative offset.
pub fn dbar_periodic_exact(a: &PeriodicMeasure, b: &PeriodicMeasure) -> Result<ExactDistance> {
    if a.alphabet() != b.alphabet() {
        return Err(Error::argument(format!("alphabets differ: {} vs {}", a.alphabet(), b.alphabet())));
    }
    let (wa, wb) = (a.word(), b.word());
    let (p, q) = (wa.len(), wb.len());
    let (g, l) = check_work(p, q)?;
    let (value, offset) =
        min_over_offsets(g, l, |r| (0..l).filter(|&j| wa[j % p] != wb[(j + r) % q]).count() as f64);
    Ok(ExactDistance {
        value,
        offset,
        period_a: p,
        period_b: q,
        lcm: l,
        cost: Cost::D0,
        metric: "d0 (coordinate-0 mismatch)".into(),
    })
}

/// A periodic orbit of some system, listed over one period.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicOrbit {
    pub spec: SystemSpec,
    pub states: Vec<StatePoint>,
    /// One period of coordinate-0 symbols, for symbolic systems.
    pub labels: Option<Vec<Symbol>>,
}

impl PeriodicOrbit {
    pub fn from_measure(m: &PeriodicMeasure) -> Result<Self> {
        let spec = SystemSpec::full_shift(m.alphabet())?;
        let origin = StatePoint::Symbolic(SymbolicPoint::periodic(m.word().to_vec(), 0)?);
        Self::from_point(&spec, &origin)
    }

    /// The orbit of `origin`, which must be periodic.
    pub fn from_point(spec: &SystemSpec, origin: &StatePoint) -> Result<Self> {
        spec.check_state(origin)?;
        let period = orbit_period(spec, origin)?;
        let mut states = Vec::with_capacity(period);
        for j in 0..period {
            states.push(spec.iterate(origin, j as u64)?);
        }
        let labels =
            states.iter().map(|s| s.as_symbolic().and_then(|p| p.symbol(0))).collect::<Option<Vec<_>>>();
        Ok(Self { spec: spec.clone(), states, labels })
    }

    pub fn period(&self) -> usize {
        self.states.len()
    }
}

fn orbit_period(spec: &SystemSpec, x: &StatePoint) -> Result<usize> {
    match (spec, x) {
        (SystemSpec::Rotation { rational: Some((_, q)), .. }, _) => {
            usize::try_from(*q).map_err(|_| Error::Capacity(format!("rotation period {q} too large")))
        }
        (SystemSpec::Rotation { .. }, _) => {
            Err(Error::domain("orbits of an irrational rotation are not periodic"))
        }
        (SystemSpec::Product { left, right }, StatePoint::Pair(a, b)) => {
            Ok(orbit_period(left, a)?.lcm(&orbit_period(right, b)?))
        }
        (_, StatePoint::Symbolic(p)) if p.rule() == Continuation::Periodic => Ok(least_period(p.data())),
        _ => Err(Error::domain("the point is not known to be periodic")),
    }
}

/// Exact `rho-bar` (or `d-bar` for `Cost::D0`) between periodic orbits. The
/// symbolic metric uses the exact periodic continuation of both orbits.
pub fn rhobar_periodic_exact(a: &PeriodicOrbit, b: &PeriodicOrbit, cost: Cost) -> Result<ExactDistance> {
    let metric = state_metric(&a.spec);
    if metric != state_metric(&b.spec) {
        return Err(Error::argument("orbits live in systems with different metrics"));
    }
    let (p, q) = (a.period(), b.period());
    let (g, l) = check_work(p, q)?;
    let (value, offset, metric) = match (cost, &a.labels, &b.labels) {
        (Cost::D0, Some(wa), Some(wb)) => {
            let (v, r) =
                min_over_offsets(g, l, |r| (0..l).filter(|&j| wa[j % p] != wb[(j + r) % q]).count() as f64);
            (v, r, "d0 (coordinate-0 mismatch)".to_string())
        }
        (Cost::D0, _, _) => return Err(Error::domain("the d0 cost needs symbolic orbits")),
        (Cost::Rho2k, Some(wa), Some(wb))
            if matches!(
                a.spec,
                SystemSpec::FullShift { .. } | SystemSpec::PeriodicOrbit { .. } | SystemSpec::BFree { .. }
            ) =>
        {
            let (v, r) = min_over_offsets(g, l, |r| {
                let mismatch: Vec<bool> = (0..l).map(|j| wa[j % p] != wb[(j + r) % q]).collect();
                cyclic_symbolic_costs(&mismatch).iter().sum()
            });
            (v, r, "symbolic 2^-|k| (exact periodic continuation)".to_string())
        }
        (Cost::Rho2k, _, _) => {
            // Pairs (i, i') with i' - i = r mod g each occur once in the lcm window.
            let d = a
                .states
                .par_iter()
                .map(|x| b.states.iter().map(|y| metric.distance(x, y)).collect::<Result<Vec<f64>>>())
                .collect::<Result<Vec<_>>>()?;
            let (v, r) = min_over_offsets(g, l, |r| {
                let mut s = 0.0;
                for (i, row) in d.iter().enumerate() {
                    for (i2, &dist) in row.iter().enumerate() {
                        if (i2 + g - i % g) % g == r {
                            s += dist;
                        }
                    }
                }
                s
            });
            (v, r, metric.describe())
        }
    };
    Ok(ExactDistance { value, offset, period_a: p, period_b: q, lcm: l, cost, metric })
}

/// `2^-d_j` with `d_j` the cyclic distance from `j` to the nearest mismatch
/// (0 everywhere if there is none).
fn cyclic_symbolic_costs(mismatch: &[bool]) -> Vec<f64> {
    let l = mismatch.len();
    let Some(first) = mismatch.iter().position(|&m| m) else {
        return vec![0.0; l];
    };
    let mut dist = vec![usize::MAX; l];
    // Forward and backward sweeps, twice around the cycle.
    let mut last = None;
    for t in first..first + 2 * l {
        let j = t % l;
        if mismatch[j] {
            last = Some(t);
        }
        if let Some(s) = last {
            dist[j] = dist[j].min(t - s);
        }
    }
    let mut next = None;
    for t in (0..first + 2 * l).rev() {
        let j = t % l;
        if mismatch[j] {
            next = Some(t);
        }
        if let Some(s) = next {
            dist[j] = dist[j].min(s - t);
        }
    }
    dist.iter().map(|&d| (-(d as f64)).exp2()).collect()
}

/// Per-coordinate cost averaged over a block, a lower bound for the
/// coordinate costs of any pair of sequences extending the blocks.
pub fn block_cost(cost: Cost, a: &[Symbol], b: &[Symbol]) -> f64 {
    match cost {
        Cost::D0 => hamming(a, b),
        Cost::Rho2k => {
            let mismatch: Vec<bool> = a.iter().zip(b).map(|(x, y)| x != y).collect();
            let k = a.len();
            let mut total = 0.0;
            for t in 0..k {
                let d = (0..k).filter(|&s| mismatch[s]).map(|s| s.abs_diff(t)).min();
                if let Some(d) = d {
                    total += (-(d as f64)).exp2();
                }
            }
            total / k as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Exact,
    Bracket,
}

/// How the upper bound was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperWitness {
    pub pairing: String,
    pub checkpoints: Vec<usize>,
    pub averages: Vec<f64>,
    pub tail_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witnesses {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<CouplingPlan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<UpperWitness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactDistance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoBarBracket {
    pub cost: Cost,
    pub k: usize,
    pub lower: f64,
    pub upper: f64,
    pub regime: Regime,
    pub tolerance: f64,
    pub witnesses: Witnesses,
}

impl RhoBarBracket {
    pub fn exact(e: ExactDistance) -> Self {
        Self {
            cost: e.cost,
            k: 0,
            lower: e.value,
            upper: e.value,
            regime: Regime::Exact,
            tolerance: TAU_NUM,
            witnesses: Witnesses { lower: None, upper: None, exact: Some(e) },
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value + self.tolerance && value <= self.upper + self.tolerance
    }
}

/// Coordinate-0 symbols of the orbit from index 0, as far as they are known (up to `n`).
fn known_labels(x: &OrbitWindow, n: usize) -> Option<Vec<Symbol>> {
    let origin = x.origin().as_symbolic()?;
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        match origin.symbol(j as i64) {
            Some(s) => out.push(s),
            None => break,
        }
    }
    Some(out)
}

/// Bracket for `rho-bar(mu, nu)` from orbits `x` of `mu` and `y` of `nu`.
///
/// Lower: transport between the `k`-block distributions of the windows
/// starting in `[0, n_m)`, with [`block_cost`]. Upper: minimum over the tail
/// checkpoints of the paired-orbit cost averages.
pub fn rhobar_bracket(
    x: &OrbitWindow,
    y: &OrbitWindow,
    k: usize,
    schedule: &CheckpointSchedule,
    cost: Cost,
) -> Result<RhoBarBracket> {
    if k == 0 {
        return Err(Error::argument("block length must be positive"));
    }
    let trace = besicovitch_estimate_with(x, y, schedule, cost)?;
    let upper = schedule.tail(&trace.averages).iter().copied().fold(f64::INFINITY, f64::min);
    let n = schedule.last();

    let lower_plan = match (known_labels(x, n + k - 1), known_labels(y, n + k - 1)) {
        (Some(lx), Some(ly)) => {
            let windows = n.min(lx.len() + 1 - k.min(lx.len())).min(ly.len() + 1 - k.min(ly.len()));
            if windows == 0 {
                return Err(Error::argument(format!("windows too short for {k}-blocks")));
            }
            let a = empirical_measure_windows(&lx, k, windows)?;
            let b = empirical_measure_windows(&ly, k, windows)?;
            Some(transport_lower_bound(
                &Atoms::from_measure(&a),
                &Atoms::from_measure(&b),
                &|p: &[Symbol], q: &[Symbol]| block_cost(cost, p, q),
            )?)
        }
        // No finite cylinder structure to compare: the trivial bound.
        _ => None,
    };
    let lower = lower_plan.as_ref().map_or(0.0, |p| p.0);
    if lower > upper + TAU_NUM {
        return Err(Error::DataQuality(format!(
            "bracket inverted: lower {lower} > upper {upper}; the orbits are not generic enough \
             for k = {k} on this schedule"
        )));
    }
    Ok(RhoBarBracket {
        cost,
        k,
        lower: lower.min(upper),
        upper,
        regime: Regime::Bracket,
        tolerance: TAU_NUM,
        witnesses: Witnesses {
            lower: lower_plan.map(|p| p.1),
            upper: Some(UpperWitness {
                pairing: format!("T^j x against T^j y, {}", trace.metric),
                checkpoints: trace.checkpoints,
                averages: trace.averages,
                tail_len: trace.tail_len,
            }),
            exact: None,
        },
    })
}

/// A periodic measure together with the phase of the orbit point used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasedPeriodic {
    pub measure: PeriodicMeasure,
    #[serde(default)]
    pub phase: usize,
}

impl PhasedPeriodic {
    /// From one period of an orbit, keeping its phase.
    pub fn from_window(period_word: &[Symbol]) -> Result<Self> {
        let (measure, phase) = PeriodicMeasure::with_phase(period_word)?;
        Ok(Self { measure, phase })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceAudit {
    pub traces: Vec<PseudometricTrace>,
    /// Tail `d-bar` values: certified upper bounds on `d-bar(nu_m, mu)`.
    pub upper_bounds: Vec<f64>,
    /// `d-bar(nu_m, nu_{m+1})`, exact.
    pub consecutive: Vec<f64>,
    pub nonincreasing: bool,
    /// Every consecutive distance is within the triangle bound of the tails.
    pub cauchy_consistent: bool,
    pub tolerance: f64,
}

pub fn rhobar_sequence_audit(
    measures: &[PhasedPeriodic],
    target: &OrbitWindow,
    schedule: &CheckpointSchedule,
) -> Result<SequenceAudit> {
    let n = schedule.last();
    let labels = target.labels().ok_or_else(|| Error::domain("the target orbit has no symbolic labels"))?;
    schedule.fits(labels.len())?;
    let target_labels = &labels[..n];
    let traces = measures
        .par_iter()
        .map(|m| dbar_estimate(target_labels, &m.measure.orbit_labels(m.phase, n), schedule))
        .collect::<Result<Vec<_>>>()?;
    let upper_bounds: Vec<f64> = traces.iter().map(|t| t.estimate).collect();
    let consecutive = measures
        .windows(2)
        .map(|w| {
            let a = w[0].measure.clone();
            let b = w[1].measure.clone();
            let alphabet = a.alphabet().max(b.alphabet());
            dbar_periodic_exact(&a.with_alphabet(alphabet)?, &b.with_alphabet(alphabet)?).map(|e| e.value)
        })
        .collect::<Result<Vec<_>>>()?;
    let nonincreasing = upper_bounds.windows(2).all(|w| w[1] <= w[0] + TAU_NUM);
    let cauchy_consistent =
        consecutive.iter().enumerate().all(|(i, &d)| d <= upper_bounds[i] + upper_bounds[i + 1] + TAU_NUM);
    Ok(SequenceAudit {
        traces,
        upper_bounds,
        consecutive,
        nonincreasing,
        cauchy_consistent,
        tolerance: TAU_NUM,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bfree::{eta_window, GeneratorSet};
    use crate::dynsys::{generate_orbit, parse_word};
    use crate::measures::periodic_from_word;
    use proptest::prelude::*;

    fn pm(s: &str) -> PeriodicMeasure {
        periodic_from_word(&parse_word(s).unwrap()).unwrap()
    }

    /// Brute force over every offset in the lcm window.
    fn brute_dbar(a: &[Symbol], b: &[Symbol]) -> f64 {
        let (p, q) = (a.len(), b.len());
        let l = p.lcm(&q);
        (0..l).map(|r| (0..l).filter(|&j| a[j % p] != b[(j + r) % q]).count()).min().unwrap() as f64
            / l as f64
    }

    /// Brute force with the metric evaluated directly on shifted periodic points.
    fn brute_rho(a: &[Symbol], b: &[Symbol]) -> f64 {
        let (p, q) = (a.len(), b.len());
        let l = p.lcm(&q);
        let mut best = f64::INFINITY;
        for r in 0..l {
            let mut s = 0.0;
            for j in 0..l {
                let mut d = None;
                for i in 0..=(l as i64) {
                    let hit = |t: i64| {
                        a[(j as i64 + t).rem_euclid(p as i64) as usize]
                            != b[(j as i64 + r as i64 + t).rem_euclid(q as i64) as usize]
                    };
                    if hit(i) || hit(-i) {
                        d = Some(i);
                        break;
                    }
                }
                if let Some(d) = d {
                    s += (-(d as f64)).exp2();
                }
            }
            best = best.min(s / l as f64);
        }
        best
    }

    fn all_words(max_len: usize) -> Vec<Vec<Symbol>> {
        let mut out = Vec::new();
        for len in 1..=max_len {
            for bits in 0..(1u32 << len) {
                out.push((0..len).map(|i| ((bits >> i) & 1) as Symbol).collect());
            }
        }
        out
    }

    #[test]
    fn dbar_exact_examples() {
        let e = dbar_periodic_exact(&pm("01"), &pm("01")).unwrap();
        assert_eq!((e.value, e.offset), (0.0, 0));
        let e = dbar_periodic_exact(&pm("01"), &pm("001")).unwrap();
        assert_eq!((e.value, e.lcm), (0.5, 6));
        assert_eq!(brute_dbar(&[0, 1], &[0, 0, 1]), 0.5);
        let e = dbar_periodic_exact(&pm("01"), &pm("0011")).unwrap();
        assert_eq!((e.value, e.offset), (0.5, 0));
        let three = pm("012");
        assert!(dbar_periodic_exact(&pm("01"), &three).is_err());
    }

    #[test]
    fn dbar_exact_is_a_metric_on_short_words() {
        let mut measures: Vec<PeriodicMeasure> =
            all_words(6).iter().map(|w| periodic_from_word(w).unwrap().with_alphabet(2).unwrap()).collect();
        measures.sort();
        measures.dedup();
        let n = measures.len();
        let d: Vec<Vec<f64>> = measures
            .iter()
            .map(|a| measures.iter().map(|b| dbar_periodic_exact(a, b).unwrap().value).collect())
            .collect();
        for i in 0..n {
            assert_eq!(d[i][i], 0.0);
            for j in 0..n {
                assert_eq!(d[i][j], d[j][i]);
                assert_eq!(d[i][j] == 0.0, i == j);
                for k in 0..n {
                    assert!(d[i][k] <= d[i][j] + d[j][k] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn offsets_mod_gcd_cover_all_offsets() {
        let words = all_words(12);
        let mut rng = 0u64;
        for _ in 0..400 {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = &words[(rng >> 33) as usize % words.len()];
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = &words[(rng >> 33) as usize % words.len()];
            let ea = periodic_from_word(a).unwrap().with_alphabet(2).unwrap();
            let eb = periodic_from_word(b).unwrap().with_alphabet(2).unwrap();
            assert_eq!(dbar_periodic_exact(&ea, &eb).unwrap().value, brute_dbar(ea.word(), eb.word()));
        }
    }

    #[test]
    fn rho_exact_examples() {
        let a = PeriodicOrbit::from_measure(&pm("01")).unwrap();
        assert_eq!(rhobar_periodic_exact(&a, &a, Cost::Rho2k).unwrap().value, 0.0);
        let b = PeriodicOrbit::from_measure(&pm("001")).unwrap();
        let e = rhobar_periodic_exact(&a, &b, Cost::Rho2k).unwrap();
        assert!((e.value - brute_rho(&[0, 1], &[0, 0, 1])).abs() < 1e-15);
        assert!(e.value >= 0.5);
        assert_eq!(rhobar_periodic_exact(&a, &b, Cost::D0).unwrap().value, 0.5);

        let rot = SystemSpec::rational_rotation(1, 4).unwrap();
        let x = PeriodicOrbit::from_point(&rot, &StatePoint::Angle(0.0)).unwrap();
        let y = PeriodicOrbit::from_point(&rot, &StatePoint::Angle(0.1)).unwrap();
        let e = rhobar_periodic_exact(&x, &y, Cost::Rho2k).unwrap();
        assert!((e.value - 0.1).abs() < 1e-12);
        assert!(rhobar_periodic_exact(&x, &y, Cost::D0).is_err());
        assert!(rhobar_periodic_exact(&x, &a, Cost::Rho2k).is_err());
        let irr = SystemSpec::rotation(0.3819660112501051).unwrap();
        assert!(PeriodicOrbit::from_point(&irr, &StatePoint::Angle(0.0)).is_err());
    }

    #[test]
    fn cyclic_costs_match_brute_force() {
        for a in all_words(5) {
            for b in all_words(4) {
                let orbit_a =
                    PeriodicOrbit::from_measure(&periodic_from_word(&a).unwrap().with_alphabet(2).unwrap())
                        .unwrap();
                let orbit_b =
                    PeriodicOrbit::from_measure(&periodic_from_word(&b).unwrap().with_alphabet(2).unwrap())
                        .unwrap();
                let fast = rhobar_periodic_exact(&orbit_a, &orbit_b, Cost::Rho2k).unwrap().value;
                let slow = brute_rho(orbit_a.labels.as_ref().unwrap(), orbit_b.labels.as_ref().unwrap());
                assert!((fast - slow).abs() < 1e-15, "{a:?} {b:?}");
            }
        }
    }

    fn periodic_window(word: &str, n: usize) -> OrbitWindow {
        let spec = SystemSpec::full_shift(2).unwrap();
        let origin = StatePoint::Symbolic(SymbolicPoint::periodic(parse_word(word).unwrap(), 0).unwrap());
        generate_orbit(&spec, &origin, n).unwrap()
    }

    #[test]
    fn bracket_examples() {
        let s = CheckpointSchedule::new(vec![1200, 2400, 4800, 9600]).unwrap();
        let x = periodic_window("01", 9600);
        let b = rhobar_bracket(&x, &x, 2, &s, Cost::D0).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));

        let y = periodic_window("0011", 9600);
        let b = rhobar_bracket(&x, &y, 1, &s, Cost::D0).unwrap();
        assert!(b.lower.abs() < 1e-12);
        assert_eq!(b.upper, 0.5);
        assert!(b.contains(0.5));

        let y = periodic_window("001", 9600);
        let b = rhobar_bracket(&x, &y, 6, &s, Cost::D0).unwrap();
        assert!(b.lower > 0.0);
        assert!(b.contains(0.5), "{b:?}");
        let json = serde_json::to_value(&b).unwrap();
        assert_eq!(json["regime"], "bracket");
        assert_eq!(json["cost"], "d0");
    }

    #[test]
    fn inverted_bracket_is_a_data_quality_error() {
        // Mismatches only in [30, 40): the tail minimum (checkpoint 20) sees
        // none, the block census over [0, 40) sees density 1/4.
        let spec = SystemSpec::full_shift(2).unwrap();
        let mut a = vec![0u8; 30];
        a.extend(vec![1u8; 10]);
        let x =
            generate_orbit(&spec, &StatePoint::Symbolic(SymbolicPoint::window(a, 0).unwrap()), 40).unwrap();
        let y =
            generate_orbit(&spec, &StatePoint::Symbolic(SymbolicPoint::periodic(vec![0], 0).unwrap()), 40)
                .unwrap();
        let s = CheckpointSchedule::new(vec![10, 20, 40]).unwrap();
        let err = rhobar_bracket(&x, &y, 1, &s, Cost::D0).unwrap_err();
        assert_eq!(err.kind(), "data_quality");
    }

    #[test]
    fn sequence_audit_examples() {
        let s = CheckpointSchedule::new(vec![600, 1200]).unwrap();
        let target = periodic_window("001", 1200);
        let own = PhasedPeriodic::from_window(&parse_word("001").unwrap()).unwrap();
        let r = rhobar_sequence_audit(&[own.clone(), own.clone(), own], &target, &s).unwrap();
        assert!(r.upper_bounds.iter().all(|&v| v == 0.0));
        assert!(r.consecutive.iter().all(|&v| v == 0.0));

        let alt = [
            PhasedPeriodic::from_window(&parse_word("01").unwrap()).unwrap(),
            PhasedPeriodic::from_window(&parse_word("10").unwrap()).unwrap(),
        ];
        let r = rhobar_sequence_audit(&alt, &periodic_window("01", 1200), &s).unwrap();
        assert_eq!(r.consecutive, vec![0.0]);
        assert_eq!(r.upper_bounds, vec![0.0, 1.0]);

        let sq = GeneratorSet::squares_of_primes();
        let n = 200_000;
        let eta = eta_window(&sq, n, None).unwrap();
        let spec = SystemSpec::full_shift(2).unwrap();
        let origin = StatePoint::Symbolic(SymbolicPoint::window(eta.symbols(), 0).unwrap());
        let target = generate_orbit(&spec, &origin, n).unwrap();
        let measures: Vec<PhasedPeriodic> = (1..=4)
            .map(|k| {
                let l = sq.truncation_lcm(k).unwrap() as usize;
                PhasedPeriodic::from_window(&eta_window(&sq, l, Some(k)).unwrap().symbols()).unwrap()
            })
            .collect();
        let s = CheckpointSchedule::new(vec![50_000, 100_000, 200_000]).unwrap();
        let r = rhobar_sequence_audit(&measures, &target, &s).unwrap();
        assert!(r.nonincreasing, "{:?}", r.upper_bounds);
        assert!(r.cauchy_consistent);
    }

    proptest! {
        #[test]
        fn lower_bound_monotone_in_k(
            a in proptest::collection::vec(0u8..2, 1..7),
            b in proptest::collection::vec(0u8..2, 1..7),
        ) {
            let s = CheckpointSchedule::new(vec![1800, 3600, 7200]).unwrap();
            let x = periodic_window(&crate::dynsys::format_word(&a), 7200);
            let y = periodic_window(&crate::dynsys::format_word(&b), 7200);
            let exact = dbar_periodic_exact(
                &periodic_from_word(&a).unwrap().with_alphabet(2).unwrap(),
                &periodic_from_word(&b).unwrap().with_alphabet(2).unwrap(),
            ).unwrap().value;
            let mut prev = 0.0;
            for k in [1, 2, 4, 8] {
                let br = rhobar_bracket(&x, &y, k, &s, Cost::D0).unwrap();
                prop_assert!(br.lower + TAU_NUM >= prev);
                prop_assert!(br.contains(exact));
                prev = br.lower;
            }
        }

        #[test]
        fn tv_matches_lp_with_01_cost(
            a in proptest::collection::vec(0u8..4, 1..30),
            b in proptest::collection::vec(0u8..4, 1..30),
        ) {
            use crate::measures::{empirical_measure, weakstar_distance, WeakStarCost};
            let ma = empirical_measure(&a, 1).unwrap();
            let mb = empirical_measure(&b, 1).unwrap();
            let (lp, _) = transport_lower_bound(
                &Atoms::from_measure(&ma),
                &Atoms::from_measure(&mb),
                &|p: &[Symbol], q: &[Symbol]| f64::from(u8::from(p != q)),
            ).unwrap();
            let tv = weakstar_distance(&ma, &mb, WeakStarCost::Tv).unwrap();
            prop_assert!((lp - tv).abs() < 1e-9);
        }
    }
}
