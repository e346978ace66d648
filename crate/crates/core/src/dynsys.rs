//! Concrete invertible systems `(X, T)`, their states, orbit windows,
//! observables and compatible metrics.
//!
//! Symbolic states never materialize a bi-infinite sequence: a
//! [`SymbolicPoint`] stores a finite block of symbols, the index of
//! coordinate 0 inside it and a continuation rule for everything outside.

use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::bfree::{self, GeneratorSet};
use crate::error::{Error, Result};

pub type Symbol = u8;

/// Symbols are written with the characters `0-9a-z`.
pub const MAX_ALPHABET: usize = 36;

/// Lookback/lookahead stored around canonical B-free origins.
pub const CANONICAL_MARGIN: usize = 32;

pub fn symbol_from_char(c: char) -> Option<Symbol> {
    match c {
        '0'..='9' => Some(c as u8 - b'0'),
        'a'..='z' => Some(c as u8 - b'a' + 10),
        _ => None,
    }
}

pub fn symbol_to_char(s: Symbol) -> char {
    match s {
        0..=9 => (b'0' + s) as char,
        10..=35 => (b'a' + s - 10) as char,
        _ => '?',
    }
}

/// Parses a word in the sequence alphabet. Newlines and carriage returns are
/// ignored so that chunked files parse the same as single-line ones.
pub fn parse_word(text: &str) -> Result<Vec<Symbol>> {
    text.chars()
        .filter(|c| *c != '\n' && *c != '\r')
        .enumerate()
        .map(|(i, c)| {
            symbol_from_char(c).ok_or_else(|| Error::domain(format!("invalid symbol {c:?} at position {i}")))
        })
        .collect()
}

pub fn format_word(word: &[Symbol]) -> String {
    word.iter().map(|&s| symbol_to_char(s)).collect()
}

/// Loads a sequence file and checks every symbol against the declared alphabet.
pub fn load_sequence(path: impl AsRef<Path>, alphabet_size: usize) -> Result<Vec<Symbol>> {
    let text = std::fs::read_to_string(path)?;
    let word = parse_word(&text)?;
    check_alphabet(&word, alphabet_size)?;
    Ok(word)
}

/// Writes a sequence in 80-symbol lines.
pub fn write_sequence(path: impl AsRef<Path>, word: &[Symbol]) -> Result<()> {
    let mut out = String::with_capacity(word.len() + word.len() / 80 + 1);
    for chunk in word.chunks(80) {
        out.push_str(&format_word(chunk));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn check_alphabet(word: &[Symbol], alphabet_size: usize) -> Result<()> {
    if alphabet_size == 0 || alphabet_size > MAX_ALPHABET {
        return Err(Error::domain(format!("alphabet size {alphabet_size} outside 1..=36")));
    }
    if let Some((i, &s)) = word.iter().enumerate().find(|(_, &s)| s as usize >= alphabet_size) {
        return Err(Error::domain(format!(
            "symbol {} at position {i} outside alphabet of size {alphabet_size}",
            symbol_to_char(s)
        )));
    }
    Ok(())
}

pub(crate) mod word_string {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::{format_word, parse_word, Symbol};

    pub fn serialize<S: Serializer>(word: &[Symbol], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_word(word))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Symbol>, D::Error> {
        let text = String::deserialize(d)?;
        parse_word(&text).map_err(serde::de::Error::custom)
    }
}

/// `x - floor(x)`, guaranteed to land in `[0, 1)`.
pub fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Declarative description of a system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSpec {
    FullShift {
        alphabet_size: usize,
    },
    /// `theta -> theta + alpha (mod 1)`; `rational = (p, q)` marks `alpha = p/q` exactly.
    Rotation {
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rational: Option<(u64, u64)>,
    },
    /// The shift restricted to the orbit of a periodic word.
    PeriodicOrbit {
        #[serde(with = "word_string")]
        word: Vec<Symbol>,
    },
    /// The orbit closure of a B-free characteristic sequence.
    BFree {
        generators: Vec<u64>,
    },
    Product {
        left: Box<SystemSpec>,
        right: Box<SystemSpec>,
    },
}

impl SystemSpec {
    pub fn full_shift(alphabet_size: usize) -> Result<Self> {
        let s = SystemSpec::FullShift { alphabet_size };
        s.validate()?;
        Ok(s)
    }

    /// Irrational (or unflagged) rotation; `alpha` is reduced to `[0, 1)`.
    pub fn rotation(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::domain("rotation angle must be finite"));
        }
        Ok(SystemSpec::Rotation { alpha: frac(alpha), rational: None })
    }

    /// Rotation by the exact rational `p/q`, stored in lowest terms.
    pub fn rational_rotation(p: u64, q: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::domain("rotation denominator must be positive"));
        }
        let p = p % q;
        let g = p.gcd(&q);
        let (p, q) = (p / g, q / g);
        Ok(SystemSpec::Rotation { alpha: p as f64 / q as f64, rational: Some((p, q)) })
    }

    pub fn periodic_orbit(word: Vec<Symbol>) -> Result<Self> {
        let s = SystemSpec::PeriodicOrbit { word };
        s.validate()?;
        Ok(s)
    }

    pub fn b_free(generators: Vec<u64>) -> Result<Self> {
        let s = SystemSpec::BFree { generators };
        s.validate()?;
        Ok(s)
    }

    pub fn product(left: SystemSpec, right: SystemSpec) -> Self {
        SystemSpec::Product { left: Box::new(left), right: Box::new(right) }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SystemSpec::FullShift { alphabet_size } => {
                if *alphabet_size == 0 || *alphabet_size > MAX_ALPHABET {
                    return Err(Error::domain(format!("alphabet size {alphabet_size} outside 1..=36")));
                }
            }
            SystemSpec::Rotation { alpha, rational } => {
                if !(0.0..1.0).contains(alpha) {
                    return Err(Error::domain(format!("rotation angle {alpha} outside [0, 1)")));
                }
                if let Some((p, q)) = rational {
                    if *q == 0 || p >= q || p.gcd(q) != 1 && !(*p == 0 && *q == 1) {
                        return Err(Error::domain(format!("rational angle {p}/{q} not reduced")));
                    }
                    if (alpha - *p as f64 / *q as f64).abs() > 1e-15 {
                        return Err(Error::domain(format!(
                            "rational flag {p}/{q} inconsistent with alpha {alpha}"
                        )));
                    }
                }
            }
            SystemSpec::PeriodicOrbit { word } => {
                if word.is_empty() {
                    return Err(Error::domain("periodic orbit word is empty"));
                }
                check_alphabet(word, MAX_ALPHABET)?;
            }
            SystemSpec::BFree { generators } => {
                GeneratorSet::finite(generators.clone())?;
            }
            SystemSpec::Product { left, right } => {
                left.validate()?;
                right.validate()?;
            }
        }
        Ok(())
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(
            self,
            SystemSpec::FullShift { .. } | SystemSpec::PeriodicOrbit { .. } | SystemSpec::BFree { .. }
        )
    }

    /// Alphabet size for symbolic systems.
    pub fn alphabet_size(&self) -> Option<usize> {
        match self {
            SystemSpec::FullShift { alphabet_size } => Some(*alphabet_size),
            SystemSpec::PeriodicOrbit { word } => {
                Some(word.iter().copied().max().map_or(1, |m| m as usize + 1))
            }
            SystemSpec::BFree { .. } => Some(2),
            _ => None,
        }
    }

    /// Point of a periodic-orbit system whose coordinate 0 is `word[phase]`.
    pub fn point_at_phase(&self, phase: usize) -> Result<StatePoint> {
        match self {
            SystemSpec::PeriodicOrbit { word } => {
                Ok(StatePoint::Symbolic(SymbolicPoint::periodic(word.clone(), phase)?))
            }
            _ => Err(Error::domain("phases are only defined for periodic-orbit systems")),
        }
    }

    /// A natural starting point: the fixed point `...000...` of a full shift,
    /// angle 0 for rotations, phase 0 of a periodic orbit, and `eta_B` itself
    /// (exact on `[-32, len + 32)`) for B-free systems.
    pub fn canonical_origin(&self, len: usize) -> Result<StatePoint> {
        Ok(match self {
            SystemSpec::FullShift { .. } => StatePoint::Symbolic(SymbolicPoint::periodic(vec![0], 0)?),
            SystemSpec::Rotation { .. } => StatePoint::Angle(0.0),
            SystemSpec::PeriodicOrbit { .. } => self.point_at_phase(0)?,
            SystemSpec::BFree { generators } => {
                let set = GeneratorSet::finite(generators.clone())?;
                let window = bfree::eta_window(&set, len + CANONICAL_MARGIN, None)?;
                // eta is symmetric: b | j iff b | -j.
                let mut data: Vec<Symbol> =
                    window.bits()[1..=CANONICAL_MARGIN].iter().rev().map(|&b| b as Symbol).collect();
                data.extend(window.bits().iter().map(|&b| b as Symbol));
                StatePoint::Symbolic(SymbolicPoint::window(data, CANONICAL_MARGIN)?)
            }
            SystemSpec::Product { left, right } => StatePoint::Pair(
                Box::new(left.canonical_origin(len)?),
                Box::new(right.canonical_origin(len)?),
            ),
        })
    }

    /// Checks that `x` is a state of this system.
    pub fn check_state(&self, x: &StatePoint) -> Result<()> {
        match (self, x) {
            (SystemSpec::Rotation { .. }, StatePoint::Angle(a)) => {
                if (0.0..1.0).contains(a) {
                    Ok(())
                } else {
                    Err(Error::domain(format!("angle {a} outside [0, 1)")))
                }
            }
            (SystemSpec::PeriodicOrbit { word }, StatePoint::Symbolic(p)) => {
                let period = least_period(word);
                let known = p.data();
                let on_orbit = p.rule() == Continuation::Periodic
                    && known.len() % period == 0
                    && (0..period)
                        .any(|r| known.iter().enumerate().all(|(i, &s)| s == word[(i + r) % period]));
                if on_orbit {
                    Ok(())
                } else {
                    Err(Error::domain("point does not lie on the periodic orbit"))
                }
            }
            (spec, StatePoint::Symbolic(p)) if spec.is_symbolic() => {
                check_alphabet(p.data(), spec.alphabet_size().unwrap_or(MAX_ALPHABET))
            }
            (SystemSpec::Product { left, right }, StatePoint::Pair(a, b)) => {
                left.check_state(a)?;
                right.check_state(b)
            }
            _ => Err(Error::domain("state kind does not match system kind")),
        }
    }

    /// `T(x)`.
    pub fn step(&self, x: &StatePoint) -> Result<StatePoint> {
        self.iterate(x, 1)
    }

    /// `T^j(x)`. Rotations are evaluated as `x + j*alpha (mod 1)` directly,
    /// never by repeated addition.
    pub fn iterate(&self, x: &StatePoint, j: u64) -> Result<StatePoint> {
        match (self, x) {
            (SystemSpec::Rotation { alpha, rational }, StatePoint::Angle(a)) => {
                Ok(StatePoint::Angle(rotate(*a, *alpha, *rational, j)))
            }
            (spec, StatePoint::Symbolic(p)) if spec.is_symbolic() => Ok(StatePoint::Symbolic(p.shift(j))),
            (SystemSpec::Product { left, right }, StatePoint::Pair(a, b)) => {
                Ok(StatePoint::Pair(Box::new(left.iterate(a, j)?), Box::new(right.iterate(b, j)?)))
            }
            _ => Err(Error::domain("state kind does not match system kind")),
        }
    }
}

fn rotate(origin: f64, alpha: f64, rational: Option<(u64, u64)>, j: u64) -> f64 {
    match rational {
        Some((p, q)) => {
            let r = ((j % q) as u128 * p as u128 % q as u128) as u64;
            frac(origin + r as f64 / q as f64)
        }
        None => {
            // j*alpha split exactly into hi + lo so the reduction mod 1 loses nothing.
            let jf = j as f64;
            let hi = jf * alpha;
            let lo = jf.mul_add(alpha, -hi);
            frac(frac(hi) + lo + origin)
        }
    }
}

/// How a symbolic point is continued outside its stored block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuation {
    /// The stored block is one period of the sequence.
    Periodic,
    /// Coordinates outside the stored block are unknown.
    Truncated,
}

/// A two-sided symbol sequence represented by a finite block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolicPoint {
    data: Arc<[Symbol]>,
    zero: usize,
    rule: Continuation,
}

impl SymbolicPoint {
    /// The periodic sequence `x_i = word[(phase + i) mod p]`.
    pub fn periodic(word: Vec<Symbol>, phase: usize) -> Result<Self> {
        if word.is_empty() {
            return Err(Error::domain("periodic word is empty"));
        }
        let zero = phase % word.len();
        Ok(Self { data: word.into(), zero, rule: Continuation::Periodic })
    }

    /// A known block `x_i = data[zero + i]` for `-zero <= i < len - zero`.
    pub fn window(data: Vec<Symbol>, zero: usize) -> Result<Self> {
        if zero >= data.len() {
            return Err(Error::domain("coordinate 0 lies outside the stored block"));
        }
        Ok(Self { data: data.into(), zero, rule: Continuation::Truncated })
    }

    pub fn data(&self) -> &[Symbol] {
        &self.data
    }

    pub fn zero(&self) -> usize {
        self.zero
    }

    pub fn rule(&self) -> Continuation {
        self.rule
    }

    /// Coordinate `i` of the sequence, if it is known.
    pub fn symbol(&self, i: i64) -> Option<Symbol> {
        let idx = self.zero as i64 + i;
        match self.rule {
            Continuation::Periodic => Some(self.data[idx.rem_euclid(self.data.len() as i64) as usize]),
            Continuation::Truncated => {
                (0..self.data.len() as i64).contains(&idx).then(|| self.data[idx as usize])
            }
        }
    }

    /// Known coordinate range `[lo, hi)`; `None` means all of Z.
    pub fn known_range(&self) -> Option<(i64, i64)> {
        match self.rule {
            Continuation::Periodic => None,
            Continuation::Truncated => Some((-(self.zero as i64), self.data.len() as i64 - self.zero as i64)),
        }
    }

    /// The shifted sequence `(sigma^k x)_i = x_{i+k}`. Truncated points may
    /// shift past their block; coordinate 0 then becomes unknown.
    pub fn shift(&self, k: u64) -> Self {
        let zero = match self.rule {
            Continuation::Periodic => ((self.zero as u128 + k as u128) % self.data.len() as u128) as usize,
            Continuation::Truncated => self.zero.saturating_add(k as usize),
        };
        Self { data: Arc::clone(&self.data), zero, rule: self.rule }
    }

    fn period(&self) -> Option<usize> {
        (self.rule == Continuation::Periodic).then_some(self.data.len())
    }
}

/// A state `x` of some system.
#[derive(Clone, Debug, PartialEq)]
pub enum StatePoint {
    Symbolic(SymbolicPoint),
    Angle(f64),
    Pair(Box<StatePoint>, Box<StatePoint>),
}

impl StatePoint {
    pub fn as_symbolic(&self) -> Option<&SymbolicPoint> {
        match self {
            StatePoint::Symbolic(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_angle(&self) -> Option<f64> {
        match self {
            StatePoint::Angle(a) => Some(*a),
            _ => None,
        }
    }
}

/// A finite orbit segment `x, T(x), ..., T^(N-1)(x)`. States are produced
/// lazily from the origin; symbolic orbits also carry the coordinate-0 labels.
#[derive(Clone, Debug)]
pub struct OrbitWindow {
    spec: SystemSpec,
    origin: StatePoint,
    len: usize,
    labels: Option<Vec<Symbol>>,
}

pub fn generate_orbit(spec: &SystemSpec, origin: &StatePoint, n: usize) -> Result<OrbitWindow> {
    if n == 0 {
        return Err(Error::argument("orbit length must be positive"));
    }
    spec.validate()?;
    spec.check_state(origin)?;
    let labels = match origin {
        StatePoint::Symbolic(p) => {
            let labels: Option<Vec<Symbol>> = (0..n as i64).map(|i| p.symbol(i)).collect();
            Some(
                labels
                    .ok_or_else(|| Error::domain(format!("origin does not determine coordinates 0..{n}")))?,
            )
        }
        _ => None,
    };
    Ok(OrbitWindow { spec: spec.clone(), origin: origin.clone(), len: n, labels })
}

impl OrbitWindow {
    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn origin(&self) -> &StatePoint {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Coordinate-0 readout `x_0, x_1, ..., x_{N-1}` for symbolic orbits.
    pub fn labels(&self) -> Option<&[Symbol]> {
        self.labels.as_deref()
    }

    /// `T^j(origin)` for `j < len`.
    pub fn state(&self, j: usize) -> StatePoint {
        assert!(j < self.len, "state index {j} out of orbit window of length {}", self.len);
        self.spec.iterate(&self.origin, j as u64).expect("origin was validated")
    }

    pub fn states(&self) -> impl Iterator<Item = StatePoint> + '_ {
        (0..self.len).map(move |j| self.state(j))
    }
}

/// What an observable computes.
#[derive(Clone, Debug, PartialEq)]
pub enum ObservableKind {
    Constant(Complex64),
    /// `theta -> e^{2 pi i m theta}` on rotations.
    Character(i64),
    /// `x -> 1[x_0 = s]`.
    SymbolIndicator(Symbol),
    /// `x -> (-1)^{x_0}`.
    SymbolSign,
    /// `x -> x_0` as a number.
    SymbolValue,
    Left(Box<Observable>),
    Right(Box<Observable>),
}

/// A continuous function `f: X -> C` with a declared bound on `|f|`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    name: String,
    kind: ObservableKind,
    sup_bound: f64,
}

impl Observable {
    pub fn new(name: impl Into<String>, kind: ObservableKind) -> Self {
        let sup_bound = match &kind {
            ObservableKind::Constant(c) => c.norm(),
            ObservableKind::Character(_)
            | ObservableKind::SymbolIndicator(_)
            | ObservableKind::SymbolSign => 1.0,
            ObservableKind::SymbolValue => (MAX_ALPHABET - 1) as f64,
            ObservableKind::Left(o) | ObservableKind::Right(o) => o.sup_bound,
        };
        Self { name: name.into(), kind, sup_bound }
    }

    /// Parses the observable names used in configs:
    /// `const[:re]`, `exp2pi`, `character:m`, `indicator:s`, `sign`, `symbol`,
    /// `left:<name>`, `right:<name>`.
    pub fn parse(name: &str) -> Result<Self> {
        let bad = || Error::argument(format!("unknown observable {name:?}"));
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (name, None),
        };
        let kind = match (head, arg) {
            ("const", None) => ObservableKind::Constant(Complex64::new(1.0, 0.0)),
            ("const", Some(v)) => {
                ObservableKind::Constant(Complex64::new(v.parse().map_err(|_| bad())?, 0.0))
            }
            ("exp2pi", None) => ObservableKind::Character(1),
            ("character", Some(m)) => ObservableKind::Character(m.parse().map_err(|_| bad())?),
            ("indicator", Some(s)) => {
                let mut chars = s.chars();
                match (chars.next().and_then(symbol_from_char), chars.next()) {
                    (Some(sym), None) => ObservableKind::SymbolIndicator(sym),
                    _ => return Err(bad()),
                }
            }
            ("sign", None) => ObservableKind::SymbolSign,
            ("symbol", None) => ObservableKind::SymbolValue,
            ("left", Some(inner)) => ObservableKind::Left(Box::new(Observable::parse(inner)?)),
            ("right", Some(inner)) => ObservableKind::Right(Box::new(Observable::parse(inner)?)),
            _ => return Err(bad()),
        };
        Ok(Observable::new(name, kind))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ObservableKind {
        &self.kind
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    /// Checks that the observable can be evaluated on states of `spec`.
    pub fn check_domain(&self, spec: &SystemSpec) -> Result<()> {
        let ok = match (&self.kind, spec) {
            (ObservableKind::Constant(_), _) => true,
            (ObservableKind::Character(_), SystemSpec::Rotation { .. }) => true,
            (
                ObservableKind::SymbolIndicator(_) | ObservableKind::SymbolSign | ObservableKind::SymbolValue,
                s,
            ) => s.is_symbolic(),
            (ObservableKind::Left(o), SystemSpec::Product { left, .. }) => return o.check_domain(left),
            (ObservableKind::Right(o), SystemSpec::Product { right, .. }) => return o.check_domain(right),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("observable {} is not defined on this system", self.name)))
        }
    }

    pub fn eval(&self, x: &StatePoint) -> Result<Complex64> {
        let mismatch = || Error::domain(format!("observable {} got a foreign state", self.name));
        match (&self.kind, x) {
            (ObservableKind::Constant(c), _) => Ok(*c),
            (ObservableKind::Character(m), StatePoint::Angle(a)) => {
                // Reduce m*theta mod 1 before scaling by 2 pi.
                Ok(Complex64::from_polar(1.0, TAU * frac(*m as f64 * a)))
            }
            (ObservableKind::Left(o), StatePoint::Pair(a, _)) => o.eval(a),
            (ObservableKind::Right(o), StatePoint::Pair(_, b)) => o.eval(b),
            (_, StatePoint::Symbolic(p)) => {
                let s = p.symbol(0).ok_or_else(|| Error::domain("coordinate 0 is unknown"))?;
                self.eval_symbol(s).ok_or_else(mismatch)
            }
            _ => Err(mismatch()),
        }
    }

    fn eval_symbol(&self, s: Symbol) -> Option<Complex64> {
        let v = match &self.kind {
            ObservableKind::Constant(c) => return Some(*c),
            ObservableKind::SymbolIndicator(t) => f64::from(u8::from(s == *t)),
            ObservableKind::SymbolSign => {
                if s.is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                }
            }
            ObservableKind::SymbolValue => s as f64,
            _ => return None,
        };
        Some(Complex64::new(v, 0.0))
    }
}

/// `f(T^j x)` for `j < N`.
pub fn eval_series(obs: &Observable, orbit: &OrbitWindow) -> Result<Vec<Complex64>> {
    obs.check_domain(orbit.spec())?;
    if let Some(labels) = orbit.labels() {
        return labels
            .iter()
            .map(|&s| {
                obs.eval_symbol(s)
                    .ok_or_else(|| Error::domain(format!("observable {} needs a symbol", obs.name)))
            })
            .collect();
    }
    orbit.states().map(|x| obs.eval(&x)).collect()
}

/// Per-index cost used when comparing two orbits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cost {
    /// `1[x_0 != y_0]` on symbolic states: the d-bar cost.
    D0,
    /// The compatible metric of [`state_metric`] (`2^-|k|` on symbolic states).
    #[default]
    #[serde(alias = "rho")]
    Rho2k,
}

impl Cost {
    pub fn label(&self) -> &'static str {
        match self {
            Cost::D0 => "d0",
            Cost::Rho2k => "rho2k",
        }
    }
}

/// Compatible metric on the state space.
#[derive(Clone, Debug, PartialEq)]
pub enum StateMetric {
    /// `2^(-min{|k| : x_k != y_k})`, searching at most `lookahead` coordinates
    /// away from 0 when set.
    Symbolic { lookahead: Option<usize> },
    /// Arc distance on `R/Z`.
    Circle,
    /// Max of the coordinate metrics.
    Max(Box<StateMetric>, Box<StateMetric>),
}

pub fn state_metric(spec: &SystemSpec) -> StateMetric {
    match spec {
        SystemSpec::Rotation { .. } => StateMetric::Circle,
        SystemSpec::Product { left, right } => {
            StateMetric::Max(Box::new(state_metric(left)), Box::new(state_metric(right)))
        }
        _ => StateMetric::Symbolic { lookahead: None },
    }
}

impl StateMetric {
    pub fn diameter(&self) -> f64 {
        match self {
            StateMetric::Symbolic { .. } => 1.0,
            StateMetric::Circle => 0.5,
            StateMetric::Max(a, b) => a.diameter().max(b.diameter()),
        }
    }

    /// Human-readable name recorded in reports.
    pub fn describe(&self) -> String {
        match self {
            StateMetric::Symbolic { lookahead: None } => "symbolic 2^-|k| (exact)".into(),
            StateMetric::Symbolic { lookahead: Some(k) } => {
                format!("symbolic 2^-|k| (lookahead {k})")
            }
            StateMetric::Circle => "circle arc".into(),
            StateMetric::Max(a, b) => format!("max({}, {})", a.describe(), b.describe()),
        }
    }

    pub fn distance(&self, x: &StatePoint, y: &StatePoint) -> Result<f64> {
        match (self, x, y) {
            (StateMetric::Circle, StatePoint::Angle(a), StatePoint::Angle(b)) => {
                let d = (a - b).abs();
                Ok(d.min(1.0 - d))
            }
            (StateMetric::Symbolic { lookahead }, StatePoint::Symbolic(a), StatePoint::Symbolic(b)) => {
                Ok(symbolic_distance(a, b, *lookahead))
            }
            (StateMetric::Max(ma, mb), StatePoint::Pair(xa, xb), StatePoint::Pair(ya, yb)) => {
                Ok(ma.distance(xa, ya)?.max(mb.distance(xb, yb)?))
            }
            _ => Err(Error::domain("metric applied to states of the wrong kind")),
        }
    }
}

fn symbolic_distance(a: &SymbolicPoint, b: &SymbolicPoint, lookahead: Option<usize>) -> f64 {
    // Farthest coordinate where both sequences could still be compared.
    let reach = |p: &SymbolicPoint| p.known_range().map(|(lo, hi)| (-lo).max(hi - 1));
    let mut radius = match (reach(a), reach(b)) {
        (Some(ra), Some(rb)) => ra.max(rb),
        (Some(r), None) | (None, Some(r)) => r,
        (None, None) => {
            let (p, q) = (a.period().unwrap_or(1), b.period().unwrap_or(1));
            p.lcm(&q) as i64
        }
    };
    if let Some(k) = lookahead {
        radius = radius.min(k as i64);
    }
    for k in 0..=radius {
        for i in if k == 0 { [0, 0] } else { [k, -k] } {
            if let (Some(sa), Some(sb)) = (a.symbol(i), b.symbol(i)) {
                if sa != sb {
                    return (-(k as f64)).exp2();
                }
            }
        }
    }
    0.0
}

/// Least period of a finite word viewed as one period of a periodic sequence.
pub fn least_period(word: &[Symbol]) -> usize {
    let n = word.len();
    (1..=n).filter(|d| n.is_multiple_of(*d)).find(|&d| (d..n).all(|i| word[i] == word[i - d])).unwrap_or(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn angles(orbit: &OrbitWindow) -> Vec<f64> {
        orbit.states().map(|s| s.as_angle().unwrap()).collect()
    }

    #[test]
    fn rational_rotation_orbit() {
        let spec = SystemSpec::rational_rotation(1, 4).unwrap();
        let orbit = generate_orbit(&spec, &StatePoint::Angle(0.0), 4).unwrap();
        assert_eq!(angles(&orbit), vec![0.0, 0.25, 0.5, 0.75]);
    }

    #[test]
    fn periodic_orbit_labels() {
        let spec = SystemSpec::periodic_orbit(vec![0, 1]).unwrap();
        let origin = spec.point_at_phase(0).unwrap();
        let orbit = generate_orbit(&spec, &origin, 5).unwrap();
        assert_eq!(orbit.labels().unwrap(), &[0, 1, 0, 1, 0]);
    }

    #[test]
    fn full_shift_fixed_point() {
        let spec = SystemSpec::full_shift(2).unwrap();
        let origin = spec.canonical_origin(3).unwrap();
        let orbit = generate_orbit(&spec, &origin, 3).unwrap();
        assert_eq!(orbit.labels().unwrap(), &[0, 0, 0]);
    }

    #[test]
    fn invalid_origins_are_domain_errors() {
        let shift = SystemSpec::full_shift(2).unwrap();
        let bad = StatePoint::Symbolic(SymbolicPoint::window(vec![0, 2, 1], 0).unwrap());
        assert!(matches!(generate_orbit(&shift, &bad, 2), Err(Error::Domain(_))));
        let rot = SystemSpec::rotation(0.3).unwrap();
        assert!(matches!(generate_orbit(&rot, &StatePoint::Angle(1.2), 2), Err(Error::Domain(_))));
        assert!(matches!(generate_orbit(&rot, &bad, 2), Err(Error::Domain(_))));
        // A truncated window must cover the requested orbit.
        let short = StatePoint::Symbolic(SymbolicPoint::window(vec![0, 1], 0).unwrap());
        assert!(generate_orbit(&shift, &short, 3).is_err());
        let periodic = SystemSpec::periodic_orbit(vec![0, 0, 1]).unwrap();
        let foreign = StatePoint::Symbolic(SymbolicPoint::periodic(vec![0, 1], 0).unwrap());
        assert!(generate_orbit(&periodic, &foreign, 3).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(SystemSpec::full_shift(0).is_err());
        assert!(SystemSpec::periodic_orbit(vec![]).is_err());
        assert!(SystemSpec::b_free(vec![4, 4]).is_err());
        assert!(SystemSpec::b_free(vec![1, 4]).is_err());
        assert!(SystemSpec::b_free(vec![4, 9]).is_ok());
        let bad = SystemSpec::Rotation { alpha: 0.3, rational: Some((1, 4)) };
        assert!(bad.validate().is_err());
        assert_eq!(
            SystemSpec::rational_rotation(6, 8).unwrap(),
            SystemSpec::Rotation { alpha: 0.75, rational: Some((3, 4)) }
        );
        assert_eq!(SystemSpec::rotation(1.25).unwrap(), SystemSpec::Rotation { alpha: 0.25, rational: None });
    }

    #[test]
    fn spec_json_has_kind_discriminator() {
        let spec = SystemSpec::product(
            SystemSpec::periodic_orbit(vec![0, 1]).unwrap(),
            SystemSpec::rational_rotation(1, 4).unwrap(),
        );
        let json = serde_json::to_value(&spec).unwrap();
        assert_eq!(json["kind"], "product");
        assert_eq!(json["left"]["kind"], "periodic_orbit");
        assert_eq!(json["left"]["word"], "01");
        let back: SystemSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn eval_series_examples() {
        let rot = SystemSpec::rational_rotation(1, 4).unwrap();
        let orbit = generate_orbit(&rot, &StatePoint::Angle(0.0), 4).unwrap();
        let ones = eval_series(&Observable::parse("const").unwrap(), &orbit).unwrap();
        assert_eq!(ones, vec![Complex64::new(1.0, 0.0); 4]);
        let chars = eval_series(&Observable::parse("exp2pi").unwrap(), &orbit).unwrap();
        let expected = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        for (z, (re, im)) in chars.iter().zip(expected) {
            assert!((z - Complex64::new(re, im)).norm() < 1e-15);
        }
        let per = SystemSpec::periodic_orbit(vec![0, 1]).unwrap();
        let orbit = generate_orbit(&per, &per.point_at_phase(0).unwrap(), 4).unwrap();
        let ind = eval_series(&Observable::parse("indicator:1").unwrap(), &orbit).unwrap();
        let re: Vec<f64> = ind.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![0.0, 1.0, 0.0, 1.0]);
        // Kind mismatch.
        assert!(eval_series(&Observable::parse("exp2pi").unwrap(), &orbit).is_err());
    }

    #[test]
    fn product_observables() {
        let spec = SystemSpec::product(
            SystemSpec::periodic_orbit(vec![0, 1]).unwrap(),
            SystemSpec::rational_rotation(1, 4).unwrap(),
        );
        let origin = spec.canonical_origin(4).unwrap();
        let orbit = generate_orbit(&spec, &origin, 4).unwrap();
        let left = eval_series(&Observable::parse("left:sign").unwrap(), &orbit).unwrap();
        assert_eq!(left.iter().map(|z| z.re).collect::<Vec<_>>(), vec![1.0, -1.0, 1.0, -1.0]);
        let right = eval_series(&Observable::parse("right:exp2pi").unwrap(), &orbit).unwrap();
        assert!((right[1] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!(eval_series(&Observable::parse("right:sign").unwrap(), &orbit).is_err());
    }

    #[test]
    fn metric_examples() {
        let m = StateMetric::Symbolic { lookahead: None };
        let x = StatePoint::Symbolic(SymbolicPoint::periodic(vec![0, 1], 0).unwrap());
        let y = StatePoint::Symbolic(SymbolicPoint::periodic(vec![0, 1], 1).unwrap());
        assert_eq!(m.distance(&x, &x).unwrap(), 0.0);
        assert_eq!(m.distance(&x, &y).unwrap(), 1.0);
        let a = StatePoint::Symbolic(SymbolicPoint::window(vec![0, 0, 0, 1, 0], 2).unwrap());
        let b = StatePoint::Symbolic(SymbolicPoint::window(vec![0, 0, 0, 0, 0], 2).unwrap());
        assert_eq!(m.distance(&a, &b).unwrap(), 0.5);
        let circle = StateMetric::Circle;
        let d = circle.distance(&StatePoint::Angle(0.1), &StatePoint::Angle(0.9)).unwrap();
        assert!((d - 0.2).abs() < 1e-15);
        assert!(circle.distance(&x, &y).is_err());
    }

    #[test]
    fn periodic_metric_uses_continuation() {
        let m = StateMetric::Symbolic { lookahead: None };
        for (wa, pa, wb, pb) in [
            (vec![0, 0, 0, 1], 2, vec![0, 0, 1, 0], 1),
            (vec![0, 1], 0, vec![0, 0, 1], 0),
            (vec![0, 0, 1, 1], 1, vec![0, 1, 1, 0], 0),
        ] {
            let x = SymbolicPoint::periodic(wa.clone(), pa).unwrap();
            let y = SymbolicPoint::periodic(wb.clone(), pb).unwrap();
            let first = (0i64..24).find(|&k| {
                let at = |i: i64| {
                    wa[(pa as i64 + i).rem_euclid(wa.len() as i64) as usize]
                        != wb[(pb as i64 + i).rem_euclid(wb.len() as i64) as usize]
                };
                at(k) || at(-k)
            });
            let expected = first.map_or(0.0, |k| (-(k as f64)).exp2());
            let got = m.distance(&StatePoint::Symbolic(x), &StatePoint::Symbolic(y)).unwrap();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn least_period_examples() {
        assert_eq!(least_period(&[0, 1, 0, 1]), 2);
        assert_eq!(least_period(&[0, 0, 1]), 3);
        assert_eq!(least_period(&[1, 1, 1]), 1);
    }

    #[test]
    fn sequence_file_round_trip() {
        let dir = std::env::temp_dir().join(format!("ergolab-seq-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s.txt");
        let word: Vec<Symbol> = (0..200).map(|i| (i % 36) as Symbol).collect();
        write_sequence(&path, &word).unwrap();
        assert_eq!(load_sequence(&path, 36).unwrap(), word);
        assert!(matches!(load_sequence(&path, 10), Err(Error::Domain(_))));
        std::fs::write(&path, "01\n10\r\n").unwrap();
        assert_eq!(load_sequence(&path, 2).unwrap(), vec![0, 1, 1, 0]);
        std::fs::write(&path, "01A").unwrap();
        assert!(load_sequence(&path, 2).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn sup_bound_holds_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for name in ["exp2pi", "character:3", "character:-5", "const:2"] {
            let obs = Observable::parse(name).unwrap();
            for _ in 0..1_000_000 {
                let z = obs.eval(&StatePoint::Angle(rng.gen::<f64>())).unwrap();
                assert!(z.norm() <= obs.sup_bound() + 1e-12);
            }
        }
        for name in ["indicator:1", "sign", "symbol"] {
            let obs = Observable::parse(name).unwrap();
            for _ in 0..1_000_000 {
                let s = rng.gen_range(0..MAX_ALPHABET as u8);
                assert!(obs.eval_symbol(s).unwrap().norm() <= obs.sup_bound());
            }
        }
    }

    #[test]
    fn bfree_canonical_origin_is_symmetric() {
        let spec = SystemSpec::b_free(vec![4, 9]).unwrap();
        let origin = spec.canonical_origin(100).unwrap();
        let p = origin.as_symbolic().unwrap();
        for j in 1..=32 {
            assert_eq!(p.symbol(j), p.symbol(-j));
        }
        assert_eq!(p.symbol(0), Some(0));
        assert_eq!(p.symbol(1), Some(1));
        assert_eq!(p.symbol(4), Some(0));
        assert_eq!(p.symbol(18), Some(0));
    }

    proptest! {
        #[test]
        fn irrational_rotation_semigroup(alpha in 0.0f64..1.0, origin in 0.0f64..1.0, n in 2usize..5000) {
            let spec = SystemSpec::rotation(alpha).unwrap();
            let x = StatePoint::Angle(origin);
            let full = generate_orbit(&spec, &x, n).unwrap();
            let tail = generate_orbit(&spec, &spec.step(&x).unwrap(), n - 1).unwrap();
            let m = StateMetric::Circle;
            for j in 0..n - 1 {
                prop_assert!(m.distance(&full.state(j + 1), &tail.state(j)).unwrap() <= 1e-12);
            }
        }

        #[test]
        fn rational_rotation_semigroup(p in 0u64..50, q in 1u64..50, origin in 0.0f64..1.0, n in 2usize..300) {
            let spec = SystemSpec::rational_rotation(p, q).unwrap();
            let x = StatePoint::Angle(origin);
            let full = generate_orbit(&spec, &x, n).unwrap();
            let tail = generate_orbit(&spec, &spec.step(&x).unwrap(), n - 1).unwrap();
            let m = StateMetric::Circle;
            for j in 0..n - 1 {
                prop_assert!(m.distance(&full.state(j + 1), &tail.state(j)).unwrap() <= 1e-15);
            }
        }

        #[test]
        fn symbolic_semigroup(word in proptest::collection::vec(0u8..3, 1..12), phase in 0usize..12, n in 2usize..60) {
            let spec = SystemSpec::periodic_orbit(word).unwrap();
            let x = spec.point_at_phase(phase).unwrap();
            let full = generate_orbit(&spec, &x, n).unwrap();
            let tail = generate_orbit(&spec, &spec.step(&x).unwrap(), n - 1).unwrap();
            prop_assert_eq!(&full.labels().unwrap()[1..], tail.labels().unwrap());
            for j in 0..n - 1 {
                prop_assert_eq!(full.state(j + 1), tail.state(j));
            }
        }

        #[test]
        fn triangle_inequality_on_orbit_samples(
            data in proptest::collection::vec(0u8..2, 40..80),
            i in 0usize..20, j in 0usize..20, k in 0usize..20,
            a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0,
        ) {
            let spec = SystemSpec::full_shift(2).unwrap();
            let origin = StatePoint::Symbolic(SymbolicPoint::window(data, 10).unwrap());
            let orbit = generate_orbit(&spec, &origin, 20).unwrap();
            let m = state_metric(&spec);
            let (x, y, z) = (orbit.state(i), orbit.state(j), orbit.state(k));
            let d = |u: &StatePoint, v: &StatePoint| m.distance(u, v).unwrap();
            prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z));
            prop_assert_eq!(d(&x, &y), d(&y, &x));

            let circle = StateMetric::Circle;
            let (x, y, z) = (StatePoint::Angle(a), StatePoint::Angle(b), StatePoint::Angle(c));
            let d = |u: &StatePoint, v: &StatePoint| circle.distance(u, v).unwrap();
            prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-15);
        }
    }
}
