//! One runner per command. Runners return the raw result, the assertions
//! checked on it and, where the result is tabular, a CSV rendering.

use ergolab::besicovitch::{
    besicovitch_estimate_with, dbar_estimate, default_delta_grid, equivalence_audit, tilde_besicovitch_with,
    LOOKAHEAD,
};
use ergolab::bfree::{davenport_erdos_trace_with, mirsky_spectrum_experiment};
use ergolab::dynsys::{eval_series, state_metric, Cost, Observable};
use ergolab::measures::{block_entropy, empirical_measure};
use ergolab::rhobar::{rhobar_bracket, rhobar_periodic_exact, RhoBarBracket};
use ergolab::wiener_wintner::{frequency_scan, regularity_check_with, FrequencySpectrum};
use ergolab::TAU_NUM;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::*;
use crate::Failure;

/// A checked property of the result, with the number it was decided on.
#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl Assertion {
    /// Passes when `value <= tolerance`.
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), passed: value <= tolerance, value, tolerance }
    }
}

pub struct Outcome {
    pub result: Value,
    pub assertions: Vec<Assertion>,
    pub csv: Option<String>,
}

fn to_value(v: &impl Serialize) -> Result<Value, Failure> {
    serde_json::to_value(v).map_err(|e| Failure::new("json", e.to_string()))
}

fn scan_series(
    orbit: &OrbitConfig,
    observable: &str,
    n: usize,
    ctx: &mut Context,
) -> Result<Vec<num_complex::Complex64>, Failure> {
    let obs = Observable::parse(observable)?;
    let window = orbit.orbit(n, ctx)?;
    Ok(eval_series(&obs, &window)?)
}

fn frequency_assertions(spectrum: &FrequencySpectrum, expect: &ExpectFrequencies) -> Vec<Assertion> {
    let found = spectrum.thetas();
    let dist = |a: f64, b: f64| {
        let d = (a - b).rem_euclid(1.0);
        d.min(1.0 - d)
    };
    let mut out: Vec<Assertion> = expect
        .thetas
        .iter()
        .map(|&t| {
            let d = found.iter().map(|&f| dist(f, t)).fold(f64::INFINITY, f64::min);
            Assertion::at_most(format!("detected {t}"), d, expect.tolerance)
        })
        .collect();
    let extra =
        found.iter().filter(|&&f| !expect.thetas.iter().any(|&t| dist(f, t) <= expect.tolerance)).count();
    out.push(Assertion::at_most("unexpected frequencies", extra as f64, 0.0));
    out
}

pub fn scan(cfg: &ScanCommand, ctx: &mut Context) -> Result<Outcome, Failure> {
    check_seeded(&[&cfg.orbit.origin], cfg.seed)?;
    check_positive(&[
        ("scan.tau_det", cfg.scan.tau_det),
        ("scan.tau_conv", cfg.scan.tau_conv),
        ("scan.snap_tol", cfg.scan.snap_tol),
        ("expect.tolerance", cfg.expect.as_ref().map(|e| e.tolerance)),
    ])?;
    let series = scan_series(&cfg.orbit, &cfg.observable, cfg.schedule.last(), ctx)?;
    let spectrum = frequency_scan(&series, &cfg.schedule, &cfg.scan)?;
    let assertions = cfg.expect.as_ref().map_or_else(Vec::new, |e| frequency_assertions(&spectrum, e));
    Ok(Outcome { result: to_value(&spectrum)?, assertions, csv: Some(spectrum.to_csv()) })
}

pub fn regularity(cfg: &RegularityCommand, ctx: &mut Context) -> Result<Outcome, Failure> {
    check_seeded(&[&cfg.orbit.origin], cfg.seed)?;
    check_positive(&[
        ("tau_reg", Some(cfg.tau_reg)),
        ("scan.tau_det", cfg.scan.tau_det),
        ("scan.tau_conv", cfg.scan.tau_conv),
        ("scan.snap_tol", cfg.scan.snap_tol),
    ])?;
    let series = scan_series(&cfg.orbit, &cfg.observable, cfg.schedule.last(), ctx)?;
    let spectrum = frequency_scan(&series, &cfg.schedule, &cfg.scan)?;
    let report = regularity_check_with(&cfg.observable, &series, &spectrum, cfg.tau_reg)?;
    let relative = if report.target > 0.0 { report.defect / report.target } else { report.defect };
    let assertions = vec![Assertion {
        name: format!("classification is {}", to_value(&cfg.expect)?.as_str().unwrap_or("")),
        passed: report.classification == cfg.expect,
        value: relative,
        tolerance: cfg.tau_reg,
    }];
    Ok(Outcome {
        result: json!({ "regularity": to_value(&report)?, "spectrum": to_value(&spectrum)? }),
        assertions,
        csv: Some(spectrum.to_csv()),
    })
}

fn expect_assertion(name: &str, value: f64, expect: &Option<Expect>) -> Vec<Assertion> {
    expect
        .iter()
        .map(|e| Assertion {
            name: format!("{name} = {}", e.value),
            passed: (value - e.value).abs() <= e.tolerance,
            value,
            tolerance: e.tolerance,
        })
        .collect()
}

pub fn besicovitch(cfg: &BesicovitchCommand, ctx: &mut Context) -> Result<Outcome, Failure> {
    check_seeded(&[&cfg.x.origin, &cfg.y.origin], cfg.seed)?;
    check_positive(&[("expect.tolerance", cfg.expect.as_ref().map(|e| e.tolerance))])?;
    let n = cfg.schedule.last();
    let (x, y) = (cfg.x.orbit(n, ctx)?, cfg.y.orbit(n, ctx)?);
    let trace = besicovitch_estimate_with(&x, &y, &cfg.schedule, cfg.cost)?;
    let diameter = match cfg.cost {
        Cost::D0 => 1.0,
        Cost::Rho2k => state_metric(&cfg.x.system).diameter(),
    };
    let grid = cfg.delta_grid.clone().unwrap_or_else(|| default_delta_grid(diameter, cfg.grid_count));
    let tilde = tilde_besicovitch_with(&x, &y, &cfg.schedule, &grid, cfg.cost)?;
    Ok(Outcome {
        assertions: expect_assertion("estimate", trace.estimate, &cfg.expect),
        csv: Some(trace.to_csv()),
        result: json!({ "estimate": trace.estimate, "trace": to_value(&trace)?, "tilde": to_value(&tilde)? }),
    })
}

pub fn dbar(cfg: &DbarCommand, ctx: &mut Context) -> Result<Outcome, Failure> {
    check_seeded(&[&cfg.x.origin, &cfg.y.origin], cfg.seed)?;
    check_positive(&[("expect.tolerance", cfg.expect.as_ref().map(|e| e.tolerance))])?;
    let n = cfg.schedule.last();
    let trace = dbar_estimate(&cfg.x.labels(n, ctx)?, &cfg.y.labels(n, ctx)?, &cfg.schedule)?;
    Ok(Outcome {
        assertions: expect_assertion("estimate", trace.estimate, &cfg.expect),
        csv: Some(trace.to_csv()),
        result: json!({ "estimate": trace.estimate, "trace": to_value(&trace)? }),
    })
}

pub fn rhobar(cfg: &RhobarCommand, ctx: &mut Context) -> Result<Outcome, Failure> {
    check_seeded(&[&cfg.x.origin, &cfg.y.origin], cfg.seed)?;
    check_positive(&[("expect.tolerance", cfg.expect.as_ref().map(|e| e.tolerance))])?;
    let bracket = match (cfg.x.periodic(ctx)?, cfg.y.periodic(ctx)?) {
        (Some(a), Some(b)) => RhoBarBracket::exact(rhobar_periodic_exact(&a, &b, cfg.cost)?),
        _ => {
            let (Some(k), Some(schedule)) = (cfg.k, &cfg.schedule) else {
                return Err(Failure::config(
                    "a bracket needs `k` and `schedule` unless both orbits are periodic",
                ));
            };
            let n = schedule.last();
            let (x, y) = (cfg.x.orbit(n, ctx)?, cfg.y.orbit(n, ctx)?);
            rhobar_bracket(&x, &y, k, schedule, cfg.cost)?
        }
    };
    let value = (bracket.lower == bracket.upper).then_some(bracket.lower);
    let assertions = cfg
        .expect
        .iter()
        .map(|e| {
            // Distance from the expected value to the bracket.
            let gap = (bracket.lower - e.value).max(e.value - bracket.upper).max(0.0);
            Assertion::at_most(format!("value = {}", e.value), gap, e.tolerance)
        })
        .collect();
    let csv = format!(
        "cost,k,lower,upper,regime\n{},{},{},{},{}\n",
        bracket.cost.label(),
        bracket.k,
        bracket.lower,
        bracket.upper,
        to_value(&bracket.regime)?.as_str().unwrap_or("")
    );
    let mut result = to_value(&bracket)?;
    result["value"] = to_value(&value)?;
    Ok(Outcome { result, assertions, csv: Some(csv) })
}

pub fn bfree(cfg: &BfreeCommand) -> Result<Outcome, Failure> {
    check_positive(&[
        ("de_tolerance", Some(cfg.de_tolerance)),
        ("mirsky.tau_reg", Some(cfg.mirsky.tau_reg)),
        ("mirsky.amplitude_tol", Some(cfg.mirsky.amplitude_tol)),
        ("mirsky.scan.tau_det", cfg.mirsky.scan.tau_det),
        ("mirsky.liminf_tau_det", cfg.mirsky.liminf_tau_det),
    ])?;
    let set = cfg.generator_set()?;
    let truncations = cfg.truncations.to_vec();
    let mut mirsky = cfg.mirsky.clone();
    mirsky.n = cfg.n.or(mirsky.n);
    mirsky.scan.grid_size = cfg.grid.or(mirsky.scan.grid_size);
    let report = mirsky_spectrum_experiment(&set, &truncations, &mirsky)?;

    let mut assertions = Vec::new();
    let mut csv = String::from("k,theta,p,q,amplitude,exact_amplitude,amplitude_error\n");
    for c in &report.certificates {
        let k = c.k;
        let off_period = c.frequencies.iter().filter(|f| !f.divides_period).count();
        assertions.push(Assertion::at_most(
            format!("k={k} frequencies divide the period"),
            off_period as f64,
            0.0,
        ));
        let worst =
            c.frequencies.iter().map(|f| f.amplitude_error.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
        assertions.push(Assertion::at_most(format!("k={k} amplitudes"), worst, mirsky.amplitude_tol));
        let r = &c.regularity;
        assertions.push(Assertion {
            name: format!("k={k} spectral mass"),
            passed: c.regularity_ok,
            value: r.defect.abs() / r.target,
            tolerance: r.tau_reg,
        });
        for f in &c.frequencies {
            let opt = |v: Option<u64>| v.map_or(String::new(), |v| v.to_string());
            let optf = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
            csv.push_str(&format!(
                "{k},{},{},{},{},{},{}\n",
                f.theta,
                opt(f.p),
                opt(f.q),
                f.amplitude,
                optf(f.exact_amplitude),
                optf(f.amplitude_error)
            ));
        }
    }
    if let Some(c) = &report.containment {
        let failing = c.truncations.iter().filter(|t| !t.missing.is_empty()).count();
        assertions.push(Assertion {
            name: "full spectrum contained from some truncation on".into(),
            passed: c.holds_from().is_some(),
            value: failing as f64,
            tolerance: c.tolerance,
        });
    }
    let mut result = json!({
        "certificates": to_value(&report.certificates)?,
        "containment": to_value(&report.containment)?,
    });
    if let Some(schedule) = &cfg.schedule {
        let de = davenport_erdos_trace_with(&set, &truncations, schedule, cfg.de_tolerance)?;
        let rise = de.tails.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assertions.push(Assertion {
            name: "d-bar tails nonincreasing in k".into(),
            passed: de.nonincreasing,
            value: rise,
            tolerance: de.tolerance,
        });
        result["davenport_erdos"] = to_value(&de)?;
    }
    Ok(Outcome { result, assertions, csv: Some(csv) })
}

pub fn entropy(cfg: &EntropyCommand, ctx: &mut Context) -> Result<Outcome, Failure> {
    check_seeded(&[&cfg.orbit.origin], cfg.seed)?;
    if cfg.ks.is_empty() || cfg.ks.contains(&0) {
        return Err(Failure::config("`ks` must list positive block lengths"));
    }
    let labels = cfg.orbit.labels(cfg.schedule.last(), ctx)?;
    let period = cfg.orbit.periodic(ctx)?.map(|o| o.period());
    let mut rows = Vec::new();
    let mut csv = String::from("n,k,entropy\n");
    for &n in cfg.schedule.checkpoints() {
        for &k in &cfg.ks {
            let h = block_entropy(&empirical_measure(&labels[..n], k)?);
            csv.push_str(&format!("{n},{k},{h}\n"));
            rows.push((n, k, h));
        }
    }
    let mut assertions = Vec::new();
    if let Some(max) = cfg.max_entropy {
        let top = rows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
        assertions.push(Assertion::at_most(format!("entropy <= {max}"), top - max, TAU_NUM));
    }
    if let Some(min) = cfg.min_entropy {
        let bottom = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
        assertions.push(Assertion::at_most(format!("entropy >= {min}"), min - bottom, TAU_NUM));
    }
    if let Some(p) = period {
        // At most p distinct blocks once k >= p and the window covers the orbit.
        let excess = rows
            .iter()
            .filter(|&&(n, k, _)| n >= 4 * p && k >= p)
            .map(|&(_, k, h)| h - (p as f64).log2() / k as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        if excess.is_finite() {
            assertions.push(Assertion::at_most("periodic bound log2(p)/k", excess, TAU_NUM));
        }
    }
    let table: Vec<Value> = rows.iter().map(|&(n, k, h)| json!({ "n": n, "k": k, "entropy": h })).collect();
    Ok(Outcome { result: json!({ "period": period, "entropies": table }), assertions, csv: Some(csv) })
}

pub fn audit(cfg: &AuditCommand, ctx: &mut Context) -> Result<Outcome, Failure> {
    let origins: Vec<&Origin> = cfg.pairs.iter().flat_map(|p| [&p.x.origin, &p.y.origin]).collect();
    check_seeded(&origins, cfg.seed)?;
    let len = cfg.schedule.last() + LOOKAHEAD;
    let mut pairs = Vec::new();
    for p in &cfg.pairs {
        pairs.push((p.x.labels(len, ctx)?, p.y.labels(len, ctx)?));
    }
    if let Some(r) = &cfg.random_pairs {
        check_positive(&[("random_pairs.mismatch", Some(r.mismatch))])?;
        if !(2..=36).contains(&r.alphabet) || r.mismatch > 1.0 {
            return Err(Failure::config("random pairs need an alphabet in 2..=36 and mismatch <= 1"));
        }
        let rng = ctx
            .rng
            .as_mut()
            .ok_or_else(|| Failure::config("random pairs need a seed (config `seed` or --seed)"))?;
        for _ in 0..r.count {
            let x: Vec<u8> = (0..len).map(|_| rng.gen_range(0..r.alphabet) as u8).collect();
            let y = x
                .iter()
                .map(|&s| {
                    if rng.gen_bool(r.mismatch) {
                        ((s as usize + rng.gen_range(1..r.alphabet)) % r.alphabet) as u8
                    } else {
                        s
                    }
                })
                .collect();
            pairs.push((x, y));
        }
    }
    if pairs.is_empty() {
        return Err(Failure::config("the audit needs `pairs` or `random_pairs`"));
    }
    let grid = cfg.delta_grid.clone().unwrap_or_else(|| default_delta_grid(1.0, cfg.grid_count));
    let report = equivalence_audit(&pairs, &cfg.schedule, &grid)?;
    let mut csv = String::from("pair,dbar,besicovitch,tilde,violations\n");
    for (i, p) in report.pairs.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{}\n",
            p.dbar.estimate,
            p.besicovitch.estimate,
            p.tilde.value,
            p.violations.len()
        ));
    }
    let assertions = vec![Assertion::at_most("equivalence violations", report.violations as f64, 0.0)];
    Ok(Outcome { result: to_value(&report)?, assertions, csv: Some(csv) })
}
