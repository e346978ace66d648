//! Empirical block measures, periodic-orbit measures, block entropy and
//! weak* distances on fixed-length cylinders.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynsys::{format_word, least_period, parse_word, Symbol};
use crate::error::{Error, Result};
use crate::rhobar::transport::{transport_lower_bound, Atoms};

/// Alphabet size inferred from the symbols present (at least 2).
pub fn inferred_alphabet(word: &[Symbol]) -> usize {
    word.iter().map(|&s| s as usize + 1).max().unwrap_or(0).max(2)
}

/// Sliding-window counts of `k`-blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BlockMeasureRepr", into = "BlockMeasureRepr")]
pub struct EmpiricalBlockMeasure {
    k: usize,
    alphabet: usize,
    counts: BTreeMap<Vec<Symbol>, u64>,
    total: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockMeasureRepr {
    k: usize,
    alphabet: usize,
    counts: BTreeMap<String, u64>,
}

impl TryFrom<BlockMeasureRepr> for EmpiricalBlockMeasure {
    type Error = Error;

    fn try_from(r: BlockMeasureRepr) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for (key, c) in r.counts {
            let block = parse_word(&key)?;
            if block.len() != r.k {
                return Err(Error::argument(format!("block {key} does not have length {}", r.k)));
            }
            if block.iter().any(|&s| s as usize >= r.alphabet) {
                return Err(Error::argument(format!("block {key} leaves the alphabet")));
            }
            if c > 0 {
                counts.insert(block, c);
            }
        }
        let total = counts.values().sum();
        if r.k == 0 || total == 0 {
            return Err(Error::argument("block measure needs k >= 1 and positive counts"));
        }
        Ok(Self { k: r.k, alphabet: r.alphabet, counts, total })
    }
}

impl From<EmpiricalBlockMeasure> for BlockMeasureRepr {
    fn from(m: EmpiricalBlockMeasure) -> Self {
        BlockMeasureRepr {
            k: m.k,
            alphabet: m.alphabet,
            counts: m.counts.iter().map(|(b, &c)| (format_word(b), c)).collect(),
        }
    }
}

impl EmpiricalBlockMeasure {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<Vec<Symbol>, u64> {
        &self.counts
    }

    pub fn count(&self, block: &[Symbol]) -> u64 {
        self.counts.get(block).copied().unwrap_or(0)
    }

    pub fn probability(&self, block: &[Symbol]) -> f64 {
        self.count(block) as f64 / self.total as f64
    }

    /// Blocks with their probabilities, in lexicographic order.
    pub fn atoms(&self) -> Vec<(Vec<Symbol>, f64)> {
        self.counts.iter().map(|(b, &c)| (b.clone(), c as f64 / self.total as f64)).collect()
    }
}

/// Counts of all `k`-blocks of `labels`.
pub fn empirical_measure(labels: &[Symbol], k: usize) -> Result<EmpiricalBlockMeasure> {
    if k == 0 || k > labels.len() {
        return Err(Error::argument(format!("block length {k} must be in 1..={}", labels.len())));
    }
    empirical_measure_windows(labels, k, labels.len() - k + 1)
}

/// Counts of the `k`-blocks starting at `0..windows`.
pub fn empirical_measure_windows(
    labels: &[Symbol],
    k: usize,
    windows: usize,
) -> Result<EmpiricalBlockMeasure> {
    if k == 0 || windows == 0 || windows + k - 1 > labels.len() {
        return Err(Error::argument(format!(
            "{windows} windows of length {k} do not fit in {} symbols",
            labels.len()
        )));
    }
    let mut counts = BTreeMap::new();
    for block in labels[..windows + k - 1].windows(k) {
        *counts.entry(block.to_vec()).or_insert(0) += 1;
    }
    Ok(EmpiricalBlockMeasure { k, alphabet: inferred_alphabet(labels), counts, total: windows as u64 })
}

/// Shannon entropy of the block distribution, in bits per symbol.
pub fn block_entropy(em: &EmpiricalBlockMeasure) -> f64 {
    let total = em.total as f64;
    let h: f64 = em
        .counts
        .values()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    h.max(0.0) / em.k as f64
}

/// The uniform measure on a periodic orbit, stored as its canonical word:
/// least period, then least rotation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "PeriodicRepr", into = "PeriodicRepr")]
pub struct PeriodicMeasure {
    word: Vec<Symbol>,
    alphabet: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PeriodicRepr {
    word: String,
    #[serde(default)]
    alphabet: Option<usize>,
}

impl TryFrom<PeriodicRepr> for PeriodicMeasure {
    type Error = Error;

    fn try_from(r: PeriodicRepr) -> Result<Self> {
        let m = periodic_from_word(&parse_word(&r.word)?)?;
        match r.alphabet {
            Some(a) => m.with_alphabet(a),
            None => Ok(m),
        }
    }
}

impl From<PeriodicMeasure> for PeriodicRepr {
    fn from(m: PeriodicMeasure) -> Self {
        PeriodicRepr { word: format_word(&m.word), alphabet: Some(m.alphabet) }
    }
}

impl PeriodicMeasure {
    pub fn word(&self) -> &[Symbol] {
        &self.word
    }

    pub fn period(&self) -> usize {
        self.word.len()
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn with_alphabet(mut self, alphabet: usize) -> Result<Self> {
        if self.word.iter().any(|&s| s as usize >= alphabet) {
            return Err(Error::argument(format!(
                "word {} leaves an alphabet of size {alphabet}",
                format_word(&self.word)
            )));
        }
        self.alphabet = alphabet;
        Ok(self)
    }

    /// Canonical measure of the orbit of `word^∞` and the phase `s` with
    /// `word[j] = canonical[(s + j) mod p]`.
    pub fn with_phase(word: &[Symbol]) -> Result<(Self, usize)> {
        if word.is_empty() {
            return Err(Error::argument("periodic word is empty"));
        }
        let p = least_period(word);
        let base = &word[..p];
        let r = least_rotation(base);
        let canonical: Vec<Symbol> = (0..p).map(|i| base[(r + i) % p]).collect();
        let alphabet = inferred_alphabet(&canonical);
        Ok((Self { word: canonical, alphabet }, (p - r) % p))
    }

    /// Symbols `x_j = word[(phase + j) mod p]` for `j < n`.
    pub fn orbit_labels(&self, phase: usize, n: usize) -> Vec<Symbol> {
        let p = self.word.len();
        (0..n).map(|j| self.word[(phase + j) % p]).collect()
    }

    /// `k`-block marginal: every block counted once per starting phase.
    pub fn block_measure(&self, k: usize) -> Result<EmpiricalBlockMeasure> {
        let p = self.period();
        let labels = self.orbit_labels(0, p + k.saturating_sub(1));
        let mut em = empirical_measure_windows(&labels, k, p)?;
        em.alphabet = self.alphabet;
        Ok(em)
    }
}

fn least_rotation(word: &[Symbol]) -> usize {
    let p = word.len();
    (0..p)
        .min_by(|&a, &b| (0..p).map(|i| word[(a + i) % p]).cmp((0..p).map(|i| word[(b + i) % p])))
        .unwrap_or(0)
}

pub fn periodic_from_word(word: &[Symbol]) -> Result<PeriodicMeasure> {
    PeriodicMeasure::with_phase(word).map(|(m, _)| m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakStarCost {
    Tv,
    HammingK,
}

/// Normalized Hamming distance between equal-length blocks.
pub fn hamming(a: &[Symbol], b: &[Symbol]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64
}

pub fn weakstar_distance(
    a: &EmpiricalBlockMeasure,
    b: &EmpiricalBlockMeasure,
    cost: WeakStarCost,
) -> Result<f64> {
    if a.k != b.k {
        return Err(Error::argument(format!("block lengths differ: {} vs {}", a.k, b.k)));
    }
    Ok(match cost {
        WeakStarCost::Tv => {
            let mut keys: Vec<&Vec<Symbol>> = a.counts.keys().chain(b.counts.keys()).collect();
            keys.sort();
            keys.dedup();
            let diff: f64 = keys.iter().map(|k| (a.probability(k) - b.probability(k)).abs()).sum();
            (0.5 * diff).min(1.0)
        }
        WeakStarCost::HammingK => {
            let (value, _) = transport_lower_bound(
                &Atoms::from_measure(a),
                &Atoms::from_measure(b),
                &|x: &[Symbol], y: &[Symbol]| hamming(x, y),
            )?;
            value.clamp(0.0, 1.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(s: &str) -> Vec<Symbol> {
        parse_word(s).unwrap()
    }

    fn eta23(n: usize) -> Vec<Symbol> {
        (0..n).map(|j| u8::from(j % 2 != 0 && j % 3 != 0)).collect()
    }

    #[test]
    fn empirical_examples() {
        let m = empirical_measure(&w("0101"), 1).unwrap();
        assert_eq!((m.count(&[0]), m.count(&[1]), m.total()), (2, 2, 4));
        let m = empirical_measure(&w("0101"), 2).unwrap();
        assert_eq!((m.count(&w("01")), m.count(&w("10")), m.total()), (2, 1, 3));
        let m = empirical_measure(&eta23(36), 1).unwrap();
        assert_eq!((m.count(&[1]), m.count(&[0])), (12, 24));
        assert!(empirical_measure(&w("01"), 3).is_err());
        assert!(empirical_measure(&w("01"), 0).is_err());
    }

    #[test]
    fn periodic_examples() {
        let m = periodic_from_word(&w("0101")).unwrap();
        assert_eq!((m.word(), m.period()), (&[0, 1][..], 2));
        assert_eq!(periodic_from_word(&w("10")).unwrap(), m);
        let m = periodic_from_word(&eta23(6)).unwrap();
        assert_eq!(format_word(&eta23(6)), "010001");
        assert_eq!(m.word(), &w("000101")[..]);
        assert!(periodic_from_word(&[]).is_err());

        let (m, phase) = PeriodicMeasure::with_phase(&w("100")).unwrap();
        assert_eq!(m.word(), &w("001")[..]);
        assert_eq!(m.orbit_labels(phase, 6), w("100100"));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(block_entropy(&empirical_measure(&w("0101"), 1).unwrap()), 1.0);
        let alt: Vec<Symbol> = (0..1000).map(|j| (j % 2) as Symbol).collect();
        assert!((block_entropy(&empirical_measure(&alt, 8).unwrap()) - 0.125).abs() < 1e-3);
        // Exactly 2 blocks with equal weight over windows starting at 0..1000.
        let m = empirical_measure_windows(&alt[..], 8, 990).unwrap();
        assert_eq!(block_entropy(&m), 0.125);
        assert_eq!(block_entropy(&empirical_measure(&[0; 100], 5).unwrap()), 0.0);
    }

    #[test]
    fn weakstar_examples() {
        let a = empirical_measure(&w("0110"), 2).unwrap();
        for c in [WeakStarCost::Tv, WeakStarCost::HammingK] {
            assert_eq!(weakstar_distance(&a, &a, c).unwrap(), 0.0);
        }
        let zero = empirical_measure(&[0], 1).unwrap();
        let one = empirical_measure(&[1], 1).unwrap();
        assert_eq!(weakstar_distance(&zero, &one, WeakStarCost::Tv).unwrap(), 1.0);
        assert!((weakstar_distance(&zero, &one, WeakStarCost::HammingK).unwrap() - 1.0).abs() < 1e-12);
        let p01 = periodic_from_word(&w("01")).unwrap().block_measure(1).unwrap();
        let p0011 = periodic_from_word(&w("0011")).unwrap().block_measure(1).unwrap();
        assert_eq!(weakstar_distance(&p01, &p0011, WeakStarCost::Tv).unwrap(), 0.0);
        assert!(weakstar_distance(&a, &zero, WeakStarCost::Tv).is_err());
    }

    #[test]
    fn json_forms() {
        let m = empirical_measure(&w("0101"), 2).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"k":2,"alphabet":2,"counts":{"01":2,"10":1}}"#);
        assert_eq!(serde_json::from_str::<EmpiricalBlockMeasure>(&json).unwrap(), m);
        assert!(serde_json::from_str::<EmpiricalBlockMeasure>(r#"{"k":2,"alphabet":2,"counts":{"0":1}}"#)
            .is_err());
        let p: PeriodicMeasure = serde_json::from_str(r#"{"word":"10"}"#).unwrap();
        assert_eq!(p, periodic_from_word(&w("01")).unwrap());
    }

    fn measure_strategy() -> impl Strategy<Value = Vec<Symbol>> {
        proptest::collection::vec(0u8..2, 8..40)
    }

    proptest! {
        #[test]
        fn weakstar_is_a_metric(x in measure_strategy(), y in measure_strategy(), z in measure_strategy(), k in 1usize..4) {
            let (a, b, c) = (
                empirical_measure(&x, k).unwrap(),
                empirical_measure(&y, k).unwrap(),
                empirical_measure(&z, k).unwrap(),
            );
            for cost in [WeakStarCost::Tv, WeakStarCost::HammingK] {
                let d = |p: &EmpiricalBlockMeasure, q: &EmpiricalBlockMeasure| weakstar_distance(p, q, cost).unwrap();
                prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-9);
                prop_assert!(d(&a, &a).abs() < 1e-12);
                prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
            }
            let tv = weakstar_distance(&a, &b, WeakStarCost::Tv).unwrap();
            let ham = weakstar_distance(&a, &b, WeakStarCost::HammingK).unwrap();
            prop_assert!(ham <= tv + 1e-9 && tv <= 1.0);
        }

        #[test]
        fn canonical_form_is_rotation_and_repetition_invariant(
            word in proptest::collection::vec(0u8..3, 1..10),
            r in 0usize..10,
            reps in 1usize..4,
        ) {
            let m = periodic_from_word(&word).unwrap();
            let p = word.len();
            let rotated: Vec<Symbol> = (0..p * reps).map(|i| word[(r + i) % p]).collect();
            let m2 = periodic_from_word(&rotated).unwrap();
            prop_assert_eq!(&m.word, &m2.word);
            prop_assert_eq!(m.period(), least_period(&word));
            let (c, phase) = PeriodicMeasure::with_phase(&rotated).unwrap();
            prop_assert_eq!(c.orbit_labels(phase, rotated.len()), rotated);
        }

        #[test]
        fn periodic_entropy_bound(word in proptest::collection::vec(0u8..2, 1..9), extra in 0usize..4) {
            let p = least_period(&word);
            let k = p + extra;
            let labels: Vec<Symbol> = (0..8 * p + k).map(|j| word[j % word.len()]).collect();
            let h = block_entropy(&empirical_measure(&labels, k).unwrap());
            prop_assert!(h <= (p as f64).log2() / k as f64 + 1e-12);
        }
    }
}
