//! Experiment configs: one JSON schema per command, validated before anything runs.

use std::path::{Path, PathBuf};

use ergolab::bfree::{GeneratorSet, MirskyConfig};
use ergolab::dynsys::{
    generate_orbit, load_sequence, parse_word, Cost, OrbitWindow, StatePoint, SymbolicPoint, SystemSpec,
    CANONICAL_MARGIN, MAX_ALPHABET,
};
use ergolab::rhobar::PeriodicOrbit;
use ergolab::wiener_wintner::{RegularityClass, ScanConfig, DEFAULT_TAU_REG};
use ergolab::CheckpointSchedule;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Where an orbit starts.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Origin {
    /// The system's natural starting point.
    #[default]
    Canonical,
    Angle {
        value: f64,
    },
    /// Phase of a periodic orbit.
    Phase {
        phase: usize,
    },
    /// A finite block with coordinate 0 at index `zero`.
    Word {
        word: String,
        #[serde(default)]
        zero: usize,
    },
    /// A sequence file, resolved relative to the config file.
    File {
        path: PathBuf,
        #[serde(default)]
        zero: usize,
    },
    /// Seeded uniform symbols, angle or phase.
    Random,
    Pair {
        left: Box<Origin>,
        right: Box<Origin>,
    },
}

impl Origin {
    fn is_random(&self) -> bool {
        match self {
            Origin::Random => true,
            Origin::Pair { left, right } => left.is_random() || right.is_random(),
            _ => false,
        }
    }

    fn resolve(
        &self,
        spec: &SystemSpec,
        len: usize,
        base: &Path,
        rng: &mut Option<ChaCha8Rng>,
    ) -> Result<StatePoint, Failure> {
        Ok(match (self, spec) {
            (Origin::Canonical, _) => spec.canonical_origin(len)?,
            (Origin::Angle { value }, SystemSpec::Rotation { .. }) => StatePoint::Angle(*value),
            (Origin::Phase { phase }, _) => spec.point_at_phase(*phase)?,
            (Origin::Word { word, zero }, _) => {
                StatePoint::Symbolic(SymbolicPoint::window(parse_word(word)?, *zero)?)
            }
            (Origin::File { path, zero }, _) => {
                let alphabet = spec.alphabet_size().unwrap_or(MAX_ALPHABET);
                let word = load_sequence(base.join(path), alphabet)?;
                StatePoint::Symbolic(SymbolicPoint::window(word, *zero)?)
            }
            (Origin::Random, _) => {
                let rng = rng.as_mut().ok_or_else(|| Failure::config("a random origin needs a seed"))?;
                random_state(spec, len, rng)?
            }
            (Origin::Pair { left, right }, SystemSpec::Product { left: ls, right: rs }) => StatePoint::Pair(
                Box::new(left.resolve(ls, len, base, rng)?),
                Box::new(right.resolve(rs, len, base, rng)?),
            ),
            _ => return Err(Failure::config("origin kind does not fit the system kind")),
        })
    }
}

fn random_state(spec: &SystemSpec, len: usize, rng: &mut ChaCha8Rng) -> Result<StatePoint, Failure> {
    Ok(match spec {
        SystemSpec::FullShift { alphabet_size } => {
            let data =
                (0..len + 2 * CANONICAL_MARGIN).map(|_| rng.gen_range(0..*alphabet_size) as u8).collect();
            StatePoint::Symbolic(SymbolicPoint::window(data, CANONICAL_MARGIN)?)
        }
        SystemSpec::Rotation { .. } => StatePoint::Angle(rng.gen::<f64>()),
        SystemSpec::PeriodicOrbit { word } => spec.point_at_phase(rng.gen_range(0..word.len()))?,
        SystemSpec::Product { left, right } => StatePoint::Pair(
            Box::new(random_state(left, len, rng)?),
            Box::new(random_state(right, len, rng)?),
        ),
        SystemSpec::BFree { .. } => {
            return Err(Failure::config("random origins are not defined for B-free systems"))
        }
    })
}

/// A system together with a starting point.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub origin: Origin,
}

/// Shared context for resolving orbits.
pub struct Context {
    pub base: PathBuf,
    pub rng: Option<ChaCha8Rng>,
}

impl OrbitConfig {
    pub fn state(&self, len: usize, ctx: &mut Context) -> Result<StatePoint, Failure> {
        self.system.validate()?;
        self.origin.resolve(&self.system, len, &ctx.base, &mut ctx.rng)
    }

    pub fn orbit(&self, len: usize, ctx: &mut Context) -> Result<OrbitWindow, Failure> {
        let x = self.state(len, ctx)?;
        Ok(generate_orbit(&self.system, &x, len)?)
    }

    /// The whole orbit when the starting point is periodic.
    pub fn periodic(&self, ctx: &mut Context) -> Result<Option<PeriodicOrbit>, Failure> {
        let x = self.state(1, ctx)?;
        Ok(PeriodicOrbit::from_point(&self.system, &x).ok())
    }

    pub fn labels(&self, len: usize, ctx: &mut Context) -> Result<Vec<u8>, Failure> {
        let orbit = self.orbit(len, ctx)?;
        orbit
            .labels()
            .map(<[u8]>::to_vec)
            .ok_or_else(|| Failure::config("this command needs a symbolic system"))
    }
}

/// An expected value with its tolerance.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    pub value: f64,
    pub tolerance: f64,
}

/// Expected detected frequencies.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectFrequencies {
    pub thetas: Vec<f64>,
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanCommand {
    pub orbit: OrbitConfig,
    pub observable: String,
    pub schedule: CheckpointSchedule,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<ExpectFrequencies>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_tau_reg() -> f64 {
    DEFAULT_TAU_REG
}

fn default_class() -> RegularityClass {
    RegularityClass::DiscreteSpectrumConsistent
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityCommand {
    pub orbit: OrbitConfig,
    pub observable: String,
    pub schedule: CheckpointSchedule,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default = "default_tau_reg")]
    pub tau_reg: f64,
    #[serde(default = "default_class")]
    pub expect: RegularityClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_grid_count() -> usize {
    64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesicovitchCommand {
    pub x: OrbitConfig,
    pub y: OrbitConfig,
    pub schedule: CheckpointSchedule,
    #[serde(default)]
    pub cost: Cost,
    /// Explicit thresholds for the exceedance variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_grid: Option<Vec<f64>>,
    /// Size of the default log-spaced grid.
    #[serde(default = "default_grid_count")]
    pub grid_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbarCommand {
    pub x: OrbitConfig,
    pub y: OrbitConfig,
    pub schedule: CheckpointSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhobarCommand {
    pub x: OrbitConfig,
    pub y: OrbitConfig,
    #[serde(default = "default_rhobar_cost")]
    pub cost: Cost,
    /// Block length of the lower bound; needed unless both orbits are periodic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<CheckpointSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_rhobar_cost() -> Cost {
    Cost::D0
}

/// A single truncation or a list of them.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Truncations {
    One(usize),
    Many(Vec<usize>),
}

impl Truncations {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            Truncations::One(k) => vec![*k],
            Truncations::Many(ks) => ks.clone(),
        }
    }
}

fn default_de_tolerance() -> f64 {
    1e-4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BfreeCommand {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<GeneratorSet>,
    pub truncations: Truncations,
    /// Window length of the spectrum certificates.
    #[serde(default, rename = "N", alias = "n", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Checkpoints of the d-bar comparison with the full sequence; skipped when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<CheckpointSchedule>,
    /// Scan grid size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default)]
    pub mirsky: MirskyConfig,
    #[serde(default = "default_de_tolerance")]
    pub de_tolerance: f64,
}

impl BfreeCommand {
    pub fn generator_set(&self) -> Result<GeneratorSet, Failure> {
        match (&self.generators, &self.family) {
            (Some(g), None) => Ok(GeneratorSet::finite(g.clone())?),
            (None, Some(f)) => {
                f.validate()?;
                Ok(f.clone())
            }
            _ => Err(Failure::config("give exactly one of `generators` and `family`")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyCommand {
    pub orbit: OrbitConfig,
    /// Block lengths.
    pub ks: Vec<usize>,
    /// Window lengths.
    pub schedule: CheckpointSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_entropy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_entropy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    pub x: OrbitConfig,
    pub y: OrbitConfig,
}

/// Seeded pairs `(x, y)` where `y` differs from uniform `x` with probability `mismatch`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPairs {
    pub count: usize,
    pub alphabet: usize,
    pub mismatch: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditCommand {
    #[serde(default)]
    pub pairs: Vec<PairConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_pairs: Option<RandomPairs>,
    pub schedule: CheckpointSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_grid: Option<Vec<f64>>,
    #[serde(default = "default_grid_count")]
    pub grid_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Fails unless every listed threshold is positive.
pub fn check_positive(pairs: &[(&str, Option<f64>)]) -> Result<(), Failure> {
    for (name, v) in pairs {
        if let Some(v) = v {
            if !(*v > 0.0) {
                return Err(Failure::config(format!("{name} must be positive, got {v}")));
            }
        }
    }
    Ok(())
}

/// Fails if the command uses randomness without a seed.
pub fn check_seeded(origins: &[&Origin], seed: Option<u64>) -> Result<(), Failure> {
    if seed.is_none() && origins.iter().any(|o| o.is_random()) {
        return Err(Failure::config("randomized configs need a seed (config `seed` or --seed)"));
    }
    Ok(())
}
