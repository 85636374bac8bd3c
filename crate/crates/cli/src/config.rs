//! Run configuration: one TOML file with flat tables, every key optional.
//! See `config.example.toml` at the crate root for the annotated defaults.

use anyhow::{anyhow, bail, Context, Result};
use galerkin_core::ergodicity::BoxGrid;
use galerkin_core::lattice::{ModeIndex, Truncation};
use galerkin_core::sde::{ForcedMode, Mat3, NoiseSpec, Scheme, SimulationConfig};
use galerkin_core::state::SpectralState;
use galerkin_core::steering::SteeringConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(rename = "N")]
    pub cutoff: u32,
    pub nu: f64,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub ensemble: usize,
    pub scheme: Scheme,
    pub noise_substeps: u32,
    /// Steps between recorded samples.
    pub stride: u64,
    pub forced: Vec<[i32; 3]>,
    /// Amplitude of the default noise `q^r = q^s = sigma0 P_k`.
    pub sigma0: f64,
    pub initial: StateSource,
    pub mixing: MixingBlock,
    pub support: SupportBlock,
    pub steering: SteeringBlock,
    pub closure: ClosureBlock,
    pub selftest: SelftestBlock,
    /// Explicit noise matrices; when present they replace `forced` and `sigma0`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub noise: Vec<NoiseEntry>,
}

/// A state given by a CSV file, or drawn at random with a given energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateSource {
    pub energy: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixingBlock {
    pub energy_b: f64,
    pub seed_b: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file_b: Option<PathBuf>,
    pub dictionary_forms: usize,
    pub dictionary_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupportBlock {
    /// Frame coordinate ids `4 * slot + c`.
    pub coordinates: Vec<usize>,
    pub lower: f64,
    pub upper: f64,
    pub bins: usize,
    /// Final visited fraction required for a pass.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteeringBlock {
    pub horizon: f64,
    pub intervals: usize,
    pub target_energy: f64,
    pub target_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_file: Option<PathBuf>,
    pub substeps: usize,
    pub max_iterations: usize,
    pub restarts: usize,
    pub solver_seed: u64,
    pub lambda0: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrderName {
    Lexicographic,
    Shuffled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClosureBlock {
    pub order: PairOrderName,
    pub order_seed: u64,
    /// Random points for the numerical rank cross-check (0 skips it).
    pub numeric_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelftestBlock {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEntry {
    pub k: [i32; 3],
    pub qr: Mat3,
    pub qs: Mat3,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cutoff: 1,
            nu: 1.0,
            dt: 0.01,
            horizon: 10.0,
            seed: 0,
            ensemble: 1000,
            scheme: Scheme::default(),
            noise_substeps: 1,
            stride: 10,
            forced: vec![[1, 0, 0], [0, 1, 0], [0, 0, 1]],
            sigma0: 1.0,
            initial: StateSource::default(),
            mixing: MixingBlock::default(),
            support: SupportBlock::default(),
            steering: SteeringBlock::default(),
            closure: ClosureBlock::default(),
            selftest: SelftestBlock::default(),
            noise: Vec::new(),
        }
    }
}

impl Default for StateSource {
    fn default() -> Self {
        StateSource { energy: 0.0, seed: 1, file: None }
    }
}

impl Default for MixingBlock {
    fn default() -> Self {
        MixingBlock { energy_b: 10.0, seed_b: 2, file_b: None, dictionary_forms: 10, dictionary_seed: 0 }
    }
}

impl Default for SupportBlock {
    fn default() -> Self {
        SupportBlock { coordinates: vec![36, 38], lower: -1.0, upper: 1.0, bins: 4, threshold: 0.95 }
    }
}

impl Default for SteeringBlock {
    fn default() -> Self {
        let s = SteeringConfig::new(1.0);
        SteeringBlock {
            horizon: 1.0,
            intervals: 6,
            target_energy: 1.0,
            target_seed: 3,
            target_file: None,
            substeps: s.substeps,
            max_iterations: s.max_iterations,
            restarts: s.restarts,
            solver_seed: s.seed,
            lambda0: s.lambda0,
            tolerance: s.tolerance,
        }
    }
}

impl Default for ClosureBlock {
    fn default() -> Self {
        ClosureBlock { order: PairOrderName::Lexicographic, order_seed: 0, numeric_points: 0 }
    }
}

impl Default for SelftestBlock {
    fn default() -> Self {
        SelftestBlock { samples: 1000, seed: 0 }
    }
}

/// Everything the subcommands need, built from a validated [`RunConfig`].
pub struct Resolved {
    pub truncation: Arc<Truncation>,
    pub spec: NoiseSpec,
    pub sim: SimulationConfig,
    /// Stability warning from the step-size guard.
    pub warning: Option<String>,
}

impl RunConfig {
    /// Parse a TOML file. Relative state-file paths are resolved against the
    /// file's directory so the echoed config is location independent.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for file in [&mut cfg.initial.file, &mut cfg.mixing.file_b, &mut cfg.steering.target_file]
            .into_iter()
            .flatten()
        {
            if file.is_relative() {
                *file = base.join(&*file);
            }
            *file = file.canonicalize().with_context(|| format!("state file {}", file.display()))?;
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("{e}"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn forced_modes(&self) -> Vec<ModeIndex> {
        if self.noise.is_empty() {
            self.forced.iter().map(|&k| ModeIndex(k)).collect()
        } else {
            self.noise.iter().map(|n| ModeIndex(n.k)).collect()
        }
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let truncation = Arc::new(Truncation::new(self.cutoff)?);
        let spec = if self.noise.is_empty() {
            if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
                bail!("sigma0 must be positive, got {}", self.sigma0);
            }
            NoiseSpec::isotropic(&truncation, &self.forced_modes(), self.sigma0)?
        } else {
            let modes = self.noise.iter().map(|n| ForcedMode { k: ModeIndex(n.k), qr: n.qr, qs: n.qs }).collect();
            NoiseSpec::new(&truncation, modes)?
        };
        let mut sim = SimulationConfig::new(self.nu, self.dt, self.horizon, self.seed, self.ensemble);
        sim.scheme = self.scheme;
        sim.noise_substeps = self.noise_substeps;
        let warning = sim.validate(self.cutoff)?;
        sim.steps()?;
        if self.stride == 0 {
            bail!("stride must be positive");
        }
        if self.ensemble == 0 {
            bail!("ensemble must be positive");
        }
        self.support_grid().validate(truncation.dim())?;
        if self.steering.intervals == 0 || !(self.steering.horizon > 0.0) {
            bail!("steering needs a positive horizon and at least one interval");
        }
        Ok(Resolved { truncation, spec, sim, warning })
    }

    pub fn support_grid(&self) -> BoxGrid {
        BoxGrid {
            coordinates: self.support.coordinates.clone(),
            lower: self.support.lower,
            upper: self.support.upper,
            bins: self.support.bins,
        }
    }

    pub fn steering_config(&self) -> SteeringConfig {
        let s = &self.steering;
        SteeringConfig {
            nu: self.nu,
            substeps: s.substeps,
            max_iterations: s.max_iterations,
            restarts: s.restarts,
            seed: s.solver_seed,
            lambda0: s.lambda0,
            tolerance: s.tolerance,
            nonlinear: true,
        }
    }
}

/// Load a state from a CSV file or draw a random one.
pub fn load_state(t: &Arc<Truncation>, energy: f64, seed: u64, file: Option<&Path>) -> Result<SpectralState> {
    match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SpectralState::from_csv(t.clone(), &text).with_context(|| format!("parsing {}", path.display()))
        }
        None if energy == 0.0 => Ok(SpectralState::zeros(t.clone())),
        None if energy > 0.0 && energy.is_finite() => {
            Ok(SpectralState::random(t.clone(), &mut ChaCha8Rng::seed_from_u64(seed), energy, None))
        }
        None => bail!("state energy must be finite and nonnegative, got {energy}"),
    }
}
