//! Time stepping of the truncated stochastic system
//!
//! ```text
//! du_k = [-nu |k|^2 u_k - i E_k(u)] dt + q^r_k dbeta^r_k + i q^s_k dbeta^s_k
//! ```
//!
//! with mode-diagonal noise on a set of forced canonical modes. Gaussian
//! increments are addressed by `(seed, trajectory, step, mode, component)` so
//! ensembles are reproducible regardless of how trajectories are scheduled.

use crate::drift::convolution;
use crate::error::{Error, Result};
use crate::lattice::{canonicalize, ModeIndex, Truncation};
use crate::state::{project_unchecked, snap_complex, SpectralState};
use crate::vec3::{self, Vec3};
use nalgebra::Matrix3;
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub type Mat3 = [[f64; 3]; 3];

/// Relative tolerance for `q^T k = 0` and for the rank-2 test.
pub const NOISE_TOLERANCE: f64 = 1e-10;

/// Noise matrices at one forced mode. The columns of `qr`, `qs` are the
/// directions hit by the three components of the Brownian increments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcedMode {
    pub k: ModeIndex,
    pub qr: Mat3,
    pub qs: Mat3,
}

/// Validated noise specification.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseSpec {
    cutoff: u32,
    modes: Vec<ForcedMode>,
    slots: Vec<usize>,
    sigma_sq: f64,
}

fn frobenius_sqr(q: &Mat3) -> f64 {
    q.iter().flatten().map(|x| x * x).sum()
}

fn column(q: &Mat3, j: usize) -> Vec3 {
    [q[0][j], q[1][j], q[2][j]]
}

fn check_matrix(k: ModeIndex, q: &Mat3, part: &'static str) -> Result<()> {
    let invalid = |reason: String| Error::InvalidNoise { mode: k, part, reason };
    if q.iter().flatten().any(|x| !x.is_finite()) {
        return Err(invalid("non-finite entry".into()));
    }
    let norm = frobenius_sqr(q).sqrt();
    if norm == 0.0 {
        return Err(invalid("zero matrix at a forced mode".into()));
    }
    let kf = k.as_f64();
    let kn = vec3::norm(&kf);
    for j in 0..3 {
        let c = vec3::dot(&column(q, j), &kf);
        if c.abs() > NOISE_TOLERANCE * norm * kn {
            return Err(invalid(format!("column {j} is not orthogonal to k (k.q = {c:e})")));
        }
    }
    let m = Matrix3::from_fn(|i, j| q[i][j]);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[1] <= NOISE_TOLERANCE * sv[0] {
        return Err(invalid("rank is below 2".into()));
    }
    Ok(())
}

impl NoiseSpec {
    /// Validate and store the noise. Non-canonical indices are replaced by
    /// their canonical representative.
    pub fn new(truncation: &Truncation, modes: Vec<ForcedMode>) -> Result<Self> {
        let mut out: Vec<ForcedMode> = Vec::with_capacity(modes.len());
        for mut m in modes {
            truncation.check_member(m.k)?;
            let (rep, _) = canonicalize(m.k)?;
            check_matrix(rep, &m.qr, "q^r")?;
            check_matrix(rep, &m.qs, "q^s")?;
            if out.iter().any(|o| o.k == rep) {
                return Err(Error::InvalidNoise { mode: rep, part: "q", reason: "mode listed twice".into() });
            }
            m.k = rep;
            out.push(m);
        }
        out.sort_by_key(|m| truncation.canonical_slot(m.k));
        let slots = out.iter().map(|m| truncation.canonical_slot(m.k).expect("member")).collect();
        let sigma_sq = out.iter().map(|m| frobenius_sqr(&m.qr) + frobenius_sqr(&m.qs)).sum();
        Ok(NoiseSpec { cutoff: truncation.cutoff(), modes: out, slots, sigma_sq })
    }

    /// Default noise `q^r_k = q^s_k = sigma0 P_k` on every forced mode.
    pub fn isotropic(truncation: &Truncation, forced: &[ModeIndex], sigma0: f64) -> Result<Self> {
        let modes = forced
            .iter()
            .map(|&k| {
                let p = projector_matrix(k, sigma0);
                ForcedMode { k, qr: p, qs: p }
            })
            .collect();
        NoiseSpec::new(truncation, modes)
    }

    /// No forcing at all.
    pub fn none(truncation: &Truncation) -> Self {
        NoiseSpec { cutoff: truncation.cutoff(), modes: Vec::new(), slots: Vec::new(), sigma_sq: 0.0 }
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn modes(&self) -> &[ForcedMode] {
        &self.modes
    }

    pub fn forced(&self) -> Vec<ModeIndex> {
        self.modes.iter().map(|m| m.k).collect()
    }

    /// `sum_k ||q^r_k||_F^2 + ||q^s_k||_F^2`
    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    /// Every matrix multiplied by `c` (`c != 0`).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let t = Truncation::new(self.cutoff)?;
        let scale = |q: &Mat3| q.map(|row| row.map(|x| c * x));
        NoiseSpec::new(
            &t,
            self.modes.iter().map(|m| ForcedMode { k: m.k, qr: scale(&m.qr), qs: scale(&m.qs) }).collect(),
        )
    }
}

/// `c P_k` as a row-major matrix.
pub fn projector_matrix(k: ModeIndex, c: f64) -> Mat3 {
    let mut p = [[0.0; 3]; 3];
    for j in 0..3 {
        let mut e = [0.0; 3];
        e[j] = 1.0;
        let col = project_unchecked(&k, &e);
        for i in 0..3 {
            p[i][j] = c * col[i];
        }
    }
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    #[default]
    ExponentialEuler,
}

/// Integration settings shared by every trajectory of an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub nu: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub horizon: f64,
    pub seed: u64,
    pub ensemble: usize,
    /// Each increment is the sum of this many sub-increments on the finer
    /// grid `dt / noise_substeps`. Runs whose `dt / noise_substeps` agree see
    /// the same Brownian path.
    pub noise_substeps: u32,
}

/// `dt nu N^2` above which a warning is issued.
pub const STABILITY_WARN: f64 = 0.5;
/// `dt nu N^2` above which a configuration is rejected.
pub const STABILITY_REJECT: f64 = 1.0;

impl SimulationConfig {
    pub fn new(nu: f64, dt: f64, horizon: f64, seed: u64, ensemble: usize) -> Self {
        SimulationConfig { nu, dt, scheme: Scheme::default(), horizon, seed, ensemble, noise_substeps: 1 }
    }

    pub fn stability_number(&self, cutoff: u32) -> f64 {
        self.dt * self.nu * (cutoff as f64).powi(2)
    }

    /// Check the configuration at cut-off `cutoff`; returns a warning when
    /// the stability guard is exceeded but not violated.
    pub fn validate(&self, cutoff: u32) -> Result<Option<String>> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be nonnegative, got {}", self.horizon));
        }
        if self.ensemble == 0 {
            return bad("ensemble must be positive".into());
        }
        if self.noise_substeps == 0 {
            return bad("noise_substeps must be positive".into());
        }
        self.steps()?;
        let g = self.stability_number(cutoff);
        if g > STABILITY_REJECT {
            return bad(format!(
                "stability guard violated: dt * nu * N^2 = {} * {} * {}^2 = {g} > {STABILITY_REJECT}",
                self.dt, self.nu, cutoff
            ));
        }
        if g > STABILITY_WARN {
            return Ok(Some(format!("dt * nu * N^2 = {g} exceeds {STABILITY_WARN}; expect poor accuracy")));
        }
        Ok(None)
    }

    /// Number of steps covering the horizon; the horizon must be a multiple of `dt`.
    pub fn steps(&self) -> Result<u64> {
        let n = (self.horizon / self.dt).round();
        if (n * self.dt - self.horizon).abs() > 1e-9 * self.horizon.max(self.dt) {
            return Err(Error::InvalidConfig(format!(
                "horizon {} is not a multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        Ok(n as u64)
    }
}

/// Brownian increments `xi^r_k, xi^s_k ~ N(0, dt I)` for one step, one pair
/// per forced mode in the order of [`NoiseSpec::modes`].
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDraw {
    pub step: u64,
    pub increments: Vec<(Vec3, Vec3)>,
}

/// 32-bit words consumed by one forced mode on one fine step.
const WORDS_PER_MODE: u128 = 12;

fn stream_key(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(b"galerkin");
    key
}

fn unit_open(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

impl NoiseDraw {
    /// Increments for `step` of trajectory `trajectory`. The random stream is
    /// positioned directly from the counters, so draws can be generated in any
    /// order.
    pub fn generate(spec: &NoiseSpec, cfg: &SimulationConfig, trajectory: u64, step: u64) -> Self {
        let n = spec.modes.len();
        let mut increments = vec![(vec3::ZERO, vec3::ZERO); n];
        if n == 0 {
            return NoiseDraw { step, increments };
        }
        let sub = cfg.noise_substeps as u64;
        let scale = (cfg.dt / sub as f64).sqrt();
        let mut rng = ChaCha8Rng::from_seed(stream_key(cfg.seed));
        rng.set_stream(trajectory);
        for f in step * sub..(step + 1) * sub {
            rng.set_word_pos(f as u128 * WORDS_PER_MODE * n as u128);
            for inc in increments.iter_mut() {
                // three Box-Muller pairs, each from two u64 words
                let mut z = [0.0; 6];
                for pair in z.chunks_mut(2) {
                    let u1 = unit_open(rng.next_u64());
                    let u2 = unit_open(rng.next_u64());
                    let rad = (-2.0 * u1.ln()).sqrt();
                    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
                    pair[0] = rad * c;
                    pair[1] = rad * s;
                }
                for i in 0..3 {
                    inc.0[i] += scale * z[i];
                    inc.1[i] += scale * z[3 + i];
                }
            }
        }
        NoiseDraw { step, increments }
    }

    /// All-zero increments.
    pub fn zero(spec: &NoiseSpec, step: u64) -> Self {
        NoiseDraw { step, increments: vec![(vec3::ZERO, vec3::ZERO); spec.modes.len()] }
    }
}

fn check_compatible(state: &SpectralState, spec: &NoiseSpec, draw: &NoiseDraw) -> Result<()> {
    let cutoff = state.truncation().cutoff();
    if spec.cutoff != cutoff {
        return Err(Error::TruncationMismatch { expected: cutoff, found: spec.cutoff });
    }
    if draw.increments.len() != spec.modes.len() {
        return Err(Error::InvalidConfig(format!(
            "noise draw has {} modes, spec has {}",
            draw.increments.len(),
            spec.modes.len()
        )));
    }
    Ok(())
}

/// One step of the configured scheme from `state`.
pub fn step(state: &SpectralState, cfg: &SimulationConfig, spec: &NoiseSpec, draw: &NoiseDraw) -> Result<SpectralState> {
    check_compatible(state, spec, draw)?;
    let mut next = state.clone();
    advance(&mut next, cfg, spec, draw)?;
    Ok(next)
}

fn advance(state: &mut SpectralState, cfg: &SimulationConfig, spec: &NoiseSpec, draw: &NoiseDraw) -> Result<()> {
    let conv = convolution(state);
    let t = state.truncation().clone();
    let dt = cfg.dt;
    let minus_i_dt = Complex64::new(0.0, -dt);
    let modes = state.modes_mut();
    for (slot, u) in modes.iter_mut().enumerate() {
        let a = cfg.nu * t.mode(slot).norm_sqr() as f64;
        let e = &conv[slot];
        match cfg.scheme {
            Scheme::EulerMaruyama => {
                for i in 0..3 {
                    u[i] = u[i] * (1.0 - a * dt) + minus_i_dt * e[i];
                }
            }
            Scheme::ExponentialEuler => {
                for i in 0..3 {
                    u[i] += minus_i_dt * e[i];
                }
            }
        }
    }
    for (j, &slot) in spec.slots.iter().enumerate() {
        let m = &spec.modes[j];
        let (xr, xs) = &draw.increments[j];
        let nr = vec3::mat_vec(&m.qr, xr);
        let ns = vec3::mat_vec(&m.qs, xs);
        let u = &mut modes[slot];
        for i in 0..3 {
            u[i] += Complex64::new(nr[i], ns[i]);
        }
    }
    for (slot, u) in modes.iter_mut().enumerate() {
        let k = t.mode(slot);
        if cfg.scheme == Scheme::ExponentialEuler {
            let damp = (-cfg.nu * k.norm_sqr() as f64 * dt).exp();
            for c in u.iter_mut() {
                *c *= damp;
            }
        }
        snap_complex(&k, u);
    }
    if !state.is_finite() {
        return Err(Error::BlowUp { time: (draw.step + 1) as f64 * dt, step: draw.step + 1 });
    }
    Ok(())
}

/// Snapshots of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralState>,
}

impl Trajectory {
    /// Snapshot table: the state CSV columns prefixed by `t`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("t,{}\n", crate::state::CSV_HEADER);
        for (t, s) in self.times.iter().zip(&self.states) {
            for row in s.csv_rows() {
                out.push_str(&format!("{t},{row}\n"));
            }
        }
        out
    }
}

/// Integrate one trajectory, keeping every `stride`-th state (and the initial one).
pub fn run_trajectory(
    initial: &SpectralState,
    cfg: &SimulationConfig,
    spec: &NoiseSpec,
    trajectory: u64,
    stride: u64,
) -> Result<Trajectory> {
    let (times, states) = run_observed(initial, cfg, spec, trajectory, stride, |t, s| (t, s.clone()))?
        .into_iter()
        .unzip();
    Ok(Trajectory { times, states })
}

/// Integrate one trajectory and record `observe(t, state)` at `t = 0` and
/// every `stride` steps.
pub fn run_observed<T>(
    initial: &SpectralState,
    cfg: &SimulationConfig,
    spec: &NoiseSpec,
    trajectory: u64,
    stride: u64,
    mut observe: impl FnMut(f64, &SpectralState) -> T,
) -> Result<Vec<T>> {
    cfg.validate(initial.truncation().cutoff())?;
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be positive".into()));
    }
    check_compatible(initial, spec, &NoiseDraw::zero(spec, 0))?;
    let steps = cfg.steps()?;
    let mut state = initial.clone();
    let mut out = Vec::with_capacity((steps / stride + 1) as usize);
    out.push(observe(0.0, &state));
    for n in 0..steps {
        let draw = NoiseDraw::generate(spec, cfg, trajectory, n);
        advance(&mut state, cfg, spec, &draw)?;
        if (n + 1) % stride == 0 {
            out.push(observe((n + 1) as f64 * cfg.dt, &state));
        }
    }
    Ok(out)
}

/// Observation times of [`run_observed`].
pub fn sample_times(cfg: &SimulationConfig, stride: u64) -> Result<Vec<f64>> {
    let steps = cfg.steps()?;
    Ok((0..=steps / stride).map(|j| (j * stride) as f64 * cfg.dt).collect())
}

/// [`run_observed`] for trajectories `0..cfg.ensemble`, in parallel. The
/// result is indexed by trajectory id; the first failing trajectory (by id)
/// determines the error.
pub fn run_ensemble<T: Send>(
    initial: &SpectralState,
    cfg: &SimulationConfig,
    spec: &NoiseSpec,
    stride: u64,
    observe: impl Fn(f64, &SpectralState) -> T + Sync,
) -> Result<Vec<Vec<T>>> {
    (0..cfg.ensemble as u64)
        .into_par_iter()
        .map(|id| run_observed(initial, cfg, spec, id, stride, &observe))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Run metadata written next to simulation outputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunMetadata {
    pub schema_version: u32,
    pub config: SimulationConfig,
    pub cutoff: u32,
    pub forced: Vec<ModeIndex>,
    pub sigma_sq: f64,
    pub wall_time_s: f64,
    pub steps: u64,
    pub blow_up: Option<(f64, u64)>,
    pub warning: Option<String>,
}

/// Run one trajectory and return it with its metadata.
pub fn simulate(
    initial: &SpectralState,
    cfg: &SimulationConfig,
    spec: &NoiseSpec,
    trajectory: u64,
    stride: u64,
) -> Result<(Option<Trajectory>, RunMetadata)> {
    let warning = cfg.validate(initial.truncation().cutoff())?;
    let start = Instant::now();
    let result = run_trajectory(initial, cfg, spec, trajectory, stride);
    let (traj, blow_up) = match result {
        Ok(t) => (Some(t), None),
        Err(Error::BlowUp { time, step }) => (None, Some((time, step))),
        Err(e) => return Err(e),
    };
    let meta = RunMetadata {
        schema_version: 1,
        config: cfg.clone(),
        cutoff: initial.truncation().cutoff(),
        forced: spec.forced(),
        sigma_sq: spec.sigma_sq(),
        wall_time_s: start.elapsed().as_secs_f64(),
        steps: cfg.steps()?,
        blow_up,
        warning,
    };
    Ok((traj, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::divergence;
    use std::sync::Arc;

    fn e(i: usize) -> ModeIndex {
        let mut k = [0; 3];
        k[i] = 1;
        ModeIndex(k)
    }

    #[test]
    fn default_noise_has_expected_variance() {
        let t = Truncation::new(1).unwrap();
        let spec = NoiseSpec::isotropic(&t, &[e(0), e(1), e(2)], 0.5).unwrap();
        // ||P_k||_F^2 = 2 for each of q^r, q^s
        assert!((spec.sigma_sq() - 3.0 * 4.0 * 0.25).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_matrices() {
        let t = Truncation::new(1).unwrap();
        let k = e(2);
        let p = projector_matrix(k, 1.0);
        let mut along_k = p;
        along_k[2][0] = 1.0;
        let bad = NoiseSpec::new(&t, vec![ForcedMode { k, qr: along_k, qs: p }]);
        assert!(matches!(bad, Err(Error::InvalidNoise { part: "q^r", .. })));
        let zero = NoiseSpec::new(&t, vec![ForcedMode { k, qr: p, qs: [[0.0; 3]; 3] }]);
        assert!(matches!(zero, Err(Error::InvalidNoise { part: "q^s", .. })));
        let mut rank1 = [[0.0; 3]; 3];
        rank1[0][0] = 1.0;
        let r1 = NoiseSpec::new(&t, vec![ForcedMode { k, qr: rank1, qs: p }]);
        assert!(matches!(r1, Err(Error::InvalidNoise { .. })));
        let outside = NoiseSpec::isotropic(&t, &[ModeIndex::new(2, 0, 0)], 1.0);
        assert!(matches!(outside, Err(Error::OutsideTruncation(..))));
    }

    #[test]
    fn stability_guard() {
        let mut cfg = SimulationConfig::new(1.0, 0.1, 1.0, 0, 1);
        assert_eq!(cfg.validate(2).unwrap(), None);
        cfg.dt = 0.2;
        assert!(cfg.validate(2).unwrap().is_some());
        cfg.dt = 0.5;
        let err = cfg.validate(2).unwrap_err().to_string();
        assert!(err.contains("dt * nu * N^2"), "{err}");
        cfg.dt = 0.3;
        assert!(cfg.validate(1).is_err());
    }

    #[test]
    fn zero_state_single_step_is_the_noise() {
        let t = Arc::new(Truncation::new(1).unwrap());
        let spec = NoiseSpec::isotropic(&t, &[e(2)], 1.0).unwrap();
        let mut cfg = SimulationConfig::new(1.0, 0.01, 0.01, 3, 1);
        cfg.scheme = Scheme::EulerMaruyama;
        let draw = NoiseDraw::generate(&spec, &cfg, 0, 0);
        let next = step(&SpectralState::zeros(t.clone()), &cfg, &spec, &draw).unwrap();
        let slot = t.canonical_slot(e(2)).unwrap();
        for (s, u) in next.modes().iter().enumerate() {
            if s != slot {
                assert!(u.iter().all(|c| c.norm() == 0.0));
            }
        }
        let u = next.mode(slot);
        let (xr, xs) = draw.increments[0];
        assert_eq!(vec3::re(u), [xr[0], xr[1], 0.0]);
        assert_eq!(vec3::im(u), [xs[0], xs[1], 0.0]);
        assert_eq!(divergence(&e(2), &vec3::re(u)), 0.0);
    }

    #[test]
    fn draws_are_addressable() {
        let t = Truncation::new(1).unwrap();
        let spec = NoiseSpec::isotropic(&t, &[e(0), e(1)], 1.0).unwrap();
        let cfg = SimulationConfig::new(1.0, 0.01, 1.0, 42, 1);
        let a = NoiseDraw::generate(&spec, &cfg, 3, 17);
        let _ = NoiseDraw::generate(&spec, &cfg, 3, 5);
        assert_eq!(a, NoiseDraw::generate(&spec, &cfg, 3, 17));
        assert_ne!(a, NoiseDraw::generate(&spec, &cfg, 4, 17));
        assert_ne!(a, NoiseDraw::generate(&spec, &cfg, 3, 18));
    }

    #[test]
    fn coarse_increment_sums_fine_ones() {
        let t = Truncation::new(1).unwrap();
        let spec = NoiseSpec::isotropic(&t, &[e(0)], 1.0).unwrap();
        let fine = SimulationConfig::new(1.0, 0.01, 1.0, 9, 1);
        let mut coarse = SimulationConfig::new(1.0, 0.02, 1.0, 9, 1);
        coarse.noise_substeps = 2;
        let c = NoiseDraw::generate(&spec, &coarse, 0, 3);
        let f0 = NoiseDraw::generate(&spec, &fine, 0, 6);
        let f1 = NoiseDraw::generate(&spec, &fine, 0, 7);
        for i in 0..3 {
            let sum = f0.increments[0].0[i] + f1.increments[0].0[i];
            assert!((c.increments[0].0[i] - sum).abs() < 1e-15);
        }
    }

    #[test]
    fn horizon_zero_returns_initial() {
        let t = Arc::new(Truncation::new(1).unwrap());
        let spec = NoiseSpec::isotropic(&t, &[e(0)], 1.0).unwrap();
        let cfg = SimulationConfig::new(1.0, 0.01, 0.0, 1, 1);
        let init = SpectralState::random(t, &mut ChaCha8Rng::seed_from_u64(0), 1.0, None);
        let traj = run_trajectory(&init, &cfg, &spec, 0, 1).unwrap();
        assert_eq!(traj.times, vec![0.0]);
        assert_eq!(traj.states, vec![init]);
    }

    #[test]
    fn blow_up_is_reported() {
        let t = Arc::new(Truncation::new(1).unwrap());
        let spec = NoiseSpec::none(&t);
        let mut cfg = SimulationConfig::new(1.0, 0.5, 50.0, 1, 1);
        cfg.scheme = Scheme::EulerMaruyama;
        let init = SpectralState::random(t, &mut ChaCha8Rng::seed_from_u64(2), 1e6, None);
        let err = run_trajectory(&init, &cfg, &spec, 0, 1).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }), "{err:?}");
    }
}
