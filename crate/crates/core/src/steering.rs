//! Steering the deterministic control system
//!
//! ```text
//! du_k/dt = F_k(u) + q^r_k v^r_k(t) + i q^s_k v^s_k(t)
//! ```
//!
//! between two states in a given time, by single shooting: piecewise-constant
//! controls on a uniform grid, RK4 integration, forward sensitivities through
//! the drift Jacobian, and Levenberg-Marquardt on the terminal mismatch.

use crate::brackets::drift_jacobian;
use crate::drift::eval_drift;
use crate::error::{Error, Result};
use crate::hormander::check_hormander;
use crate::lattice::{ModeIndex, Truncation};
use crate::sde::NoiseSpec;
use crate::state::SpectralState;
use crate::vec3::{self, CVec3};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Piecewise-constant controls: `values[j][m]` holds `[v^r, v^s]` of forced
/// mode `forced[m]` on `[grid[j], grid[j + 1])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    pub grid: Vec<f64>,
    pub forced: Vec<ModeIndex>,
    pub values: Vec<Vec<[f64; 6]>>,
}

impl ControlSignal {
    /// Zero control on `intervals` equal pieces of `[0, horizon]`.
    pub fn zero(forced: Vec<ModeIndex>, horizon: f64, intervals: usize) -> Self {
        let grid = (0..=intervals).map(|j| horizon * j as f64 / intervals as f64).collect();
        let values = vec![vec![[0.0; 6]; forced.len()]; intervals];
        ControlSignal { grid, forced, values }
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().unwrap_or(&0.0)
    }

    pub fn intervals(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self, spec: &NoiseSpec) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidControl(m.into()));
        if self.grid.len() < 2 || self.grid[0] != 0.0 {
            return bad("grid must start at 0 and have at least two knots");
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("grid must be strictly increasing");
        }
        if self.values.len() != self.grid.len() - 1 {
            return bad("one control value per grid interval is required");
        }
        if self.forced != spec.forced() {
            return bad("controlled modes differ from the forced modes of the noise");
        }
        if self.values.iter().any(|v| v.len() != self.forced.len()) {
            return bad("one control vector per forced mode is required");
        }
        if self.values.iter().flatten().flatten().any(|x| !x.is_finite()) {
            return bad("non-finite control value");
        }
        Ok(())
    }

    fn to_params(&self) -> DVector<f64> {
        DVector::from_iterator(self.values.len() * self.forced.len() * 6, self.values.iter().flatten().flatten().copied())
    }

    fn with_params(&self, p: &DVector<f64>) -> Self {
        let mut out = self.clone();
        for (dst, src) in out.values.iter_mut().flatten().flatten().zip(p.iter()) {
            *dst = *src;
        }
        out
    }

    /// The control of the mirrored trajectory under `u -> -conj(u)`: `v^r` changes sign.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut().flatten() {
            for x in &mut v[..3] {
                *x = -*x;
            }
        }
        out
    }
}

/// Settings of the controlled integration and of the solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringConfig {
    pub nu: f64,
    /// RK4 steps per control interval.
    pub substeps: usize,
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    pub lambda0: f64,
    /// Relative terminal tolerance: converged when `|u(T) - target| <= tolerance (1 + |target|)`.
    pub tolerance: f64,
    /// Switch off the quadratic term (linear test dynamics).
    pub nonlinear: bool,
}

impl SteeringConfig {
    pub fn new(nu: f64) -> Self {
        SteeringConfig {
            nu,
            substeps: 32,
            max_iterations: 200,
            restarts: 8,
            seed: 0,
            lambda0: 1e-3,
            tolerance: 1e-6,
            nonlinear: true,
        }
    }
}

fn vector_field(state: &SpectralState, forcing: &[(usize, CVec3)], cfg: &SteeringConfig) -> Vec<CVec3> {
    let mut f = if cfg.nonlinear {
        eval_drift(state, cfg.nu).total
    } else {
        eval_drift(state, cfg.nu).linear
    };
    for (slot, g) in forcing {
        for i in 0..3 {
            f[*slot][i] += g[i];
        }
    }
    f
}

fn combine(base: &SpectralState, k: &[CVec3], h: f64) -> SpectralState {
    let modes = base
        .modes()
        .iter()
        .zip(k)
        .map(|(u, d)| [u[0] + d[0] * h, u[1] + d[1] * h, u[2] + d[2] * h])
        .collect();
    SpectralState::from_modes(base.truncation().clone(), modes).expect("same truncation")
}

fn forcing(spec: &NoiseSpec, t: &Truncation, values: &[[f64; 6]]) -> Vec<(usize, CVec3)> {
    spec.modes()
        .iter()
        .zip(values)
        .map(|(m, v)| {
            let r = vec3::mat_vec(&m.qr, &[v[0], v[1], v[2]]);
            let s = vec3::mat_vec(&m.qs, &[v[3], v[4], v[5]]);
            (t.canonical_slot(m.k).expect("forced member"), vec3::complex(&r, &s))
        })
        .collect()
}

fn check_state(state: &SpectralState, time: f64, step: u64) -> Result<()> {
    if state.is_finite() {
        Ok(())
    } else {
        Err(Error::BlowUp { time, step })
    }
}

/// RK4 integration of the controlled system over the whole control grid.
pub fn integrate_controlled(
    initial: &SpectralState,
    control: &ControlSignal,
    spec: &NoiseSpec,
    cfg: &SteeringConfig,
) -> Result<SpectralState> {
    control.validate(spec)?;
    let t = initial.truncation().clone();
    let mut u = initial.clone();
    let mut step = 0u64;
    for (j, values) in control.values.iter().enumerate() {
        let g = forcing(spec, &t, values);
        let h = (control.grid[j + 1] - control.grid[j]) / cfg.substeps as f64;
        for sub in 1..=cfg.substeps {
            let k1 = vector_field(&u, &g, cfg);
            let k2 = vector_field(&combine(&u, &k1, h / 2.0), &g, cfg);
            let k3 = vector_field(&combine(&u, &k2, h / 2.0), &g, cfg);
            let k4 = vector_field(&combine(&u, &k3, h), &g, cfg);
            let incr: Vec<CVec3> = (0..t.dim())
                .map(|s| std::array::from_fn(|i| (k1[s][i] + 2.0 * k2[s][i] + 2.0 * k3[s][i] + k4[s][i]) / 6.0))
                .collect();
            u = combine(&u, &incr, h);
            step += 1;
            check_state(&u, control.grid[j] + sub as f64 * h, step)?;
        }
    }
    Ok(u)
}

/// Linearized dynamics in raw coordinates for the sensitivity system.
struct RealSystem<'a> {
    t: Arc<Truncation>,
    cfg: &'a SteeringConfig,
    /// Raw-coordinate columns of the control map, one per parameter of an interval.
    control_map: DMatrix<f64>,
}

impl<'a> RealSystem<'a> {
    fn new(t: Arc<Truncation>, spec: &'a NoiseSpec, cfg: &'a SteeringConfig) -> Self {
        let nm = spec.modes().len();
        let mut b = DMatrix::zeros(6 * t.dim(), 6 * nm);
        for (m, fm) in spec.modes().iter().enumerate() {
            let slot = t.canonical_slot(fm.k).expect("forced member");
            for i in 0..3 {
                for j in 0..3 {
                    b[(6 * slot + i, 6 * m + j)] = fm.qr[i][j];
                    b[(6 * slot + 3 + i, 6 * m + 3 + j)] = fm.qs[i][j];
                }
            }
        }
        RealSystem { t, cfg, control_map: b }
    }

    fn jacobian(&self, x: &SpectralState) -> DMatrix<f64> {
        if self.cfg.nonlinear {
            drift_jacobian(x, self.cfg.nu)
        } else {
            let zero = SpectralState::zeros(self.t.clone());
            drift_jacobian(&zero, self.cfg.nu)
        }
    }
}

/// Terminal state and its derivative with respect to the stacked control
/// parameters, in raw coordinates (6 per canonical mode).
///
/// The variational equation is integrated with the same RK4 stages as the
/// state, so the result is the exact derivative of the discrete flow map.
pub fn terminal_sensitivity(
    initial: &SpectralState,
    control: &ControlSignal,
    spec: &NoiseSpec,
    cfg: &SteeringConfig,
) -> Result<(SpectralState, DMatrix<f64>)> {
    control.validate(spec)?;
    let t = initial.truncation().clone();
    let sys = RealSystem::new(t.clone(), spec, cfg);
    let per = sys.control_map.ncols();
    let n = 6 * t.dim();
    let p = per * control.intervals();
    let mut u = initial.clone();
    let mut s = DMatrix::<f64>::zeros(n, p);
    let mut step = 0u64;
    for (j, values) in control.values.iter().enumerate() {
        let g = forcing(spec, &t, values);
        let h = (control.grid[j + 1] - control.grid[j]) / cfg.substeps as f64;
        let cols = j * per..(j + 1) * per;
        // S' = J(u) S + B, with B nonzero only in this interval's columns
        let rhs = |x: &SpectralState, sm: &DMatrix<f64>| {
            let mut d = sys.jacobian(x) * sm;
            let mut block = d.columns_mut(cols.start, per);
            block += &sys.control_map;
            d
        };
        for sub in 1..=cfg.substeps {
            let k1 = vector_field(&u, &g, cfg);
            let l1 = rhs(&u, &s);
            let u2 = combine(&u, &k1, h / 2.0);
            let k2 = vector_field(&u2, &g, cfg);
            let l2 = rhs(&u2, &(&s + &l1 * (h / 2.0)));
            let u3 = combine(&u, &k2, h / 2.0);
            let k3 = vector_field(&u3, &g, cfg);
            let l3 = rhs(&u3, &(&s + &l2 * (h / 2.0)));
            let u4 = combine(&u, &k3, h);
            let k4 = vector_field(&u4, &g, cfg);
            let l4 = rhs(&u4, &(&s + &l3 * h));
            let incr: Vec<CVec3> = (0..t.dim())
                .map(|q| std::array::from_fn(|i| (k1[q][i] + 2.0 * k2[q][i] + 2.0 * k3[q][i] + k4[q][i]) / 6.0))
                .collect();
            u = combine(&u, &incr, h);
            s += (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
            step += 1;
            check_state(&u, control.grid[j] + sub as f64 * h, step)?;
        }
    }
    Ok((u, s))
}

/// Map raw coordinates to the frame coordinates (4 per mode) used for residuals.
fn raw_to_frame(t: &Truncation) -> DMatrix<f64> {
    let d = t.dim();
    let mut m = DMatrix::zeros(4 * d, 6 * d);
    for slot in 0..d {
        let [e1, e2] = t.frame(slot);
        for i in 0..3 {
            m[(4 * slot, 6 * slot + i)] = e1[i];
            m[(4 * slot + 1, 6 * slot + i)] = e2[i];
            m[(4 * slot + 2, 6 * slot + 3 + i)] = e1[i];
            m[(4 * slot + 3, 6 * slot + 3 + i)] = e2[i];
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeError {
    pub k: ModeIndex,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringResult {
    pub schema_version: u32,
    pub control: ControlSignal,
    /// Euclidean norm of `u(T) - target`.
    pub terminal_error: f64,
    /// `tolerance (1 + |target|)`
    pub threshold: f64,
    pub iterations: usize,
    /// Restart that produced this result (0 is the zero-control start).
    pub restart: usize,
    pub converged: bool,
    /// Whether the forced set satisfies the rank condition.
    pub hypothesis_satisfied: bool,
    pub mode_errors: Vec<ModeError>,
    pub config: SteeringConfig,
}

fn mode_errors(end: &SpectralState, target: &SpectralState) -> Vec<ModeError> {
    let t = end.truncation();
    (0..t.dim())
        .map(|s| {
            let d: CVec3 = std::array::from_fn(|i| end.mode(s)[i] - target.mode(s)[i]);
            ModeError { k: t.mode(s), error: vec3::cnorm_sqr(&d).sqrt() }
        })
        .collect()
}

fn distance(a: &SpectralState, b: &SpectralState) -> f64 {
    a.modes()
        .iter()
        .zip(b.modes())
        .map(|(x, y)| (0..3).map(|i| (x[i] - y[i]).norm_sqr()).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

struct Attempt {
    control: ControlSignal,
    error: f64,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(
    initial: &SpectralState,
    target: &SpectralState,
    start: ControlSignal,
    spec: &NoiseSpec,
    cfg: &SteeringConfig,
    threshold: f64,
) -> Result<Attempt> {
    let t = initial.truncation().clone();
    let to_frame = raw_to_frame(&t);
    let goal = DVector::from_vec(target.to_frame());
    let residual = |end: &SpectralState| DVector::from_vec(end.to_frame()) - &goal;

    let mut control = start;
    let (mut end, mut sens) = terminal_sensitivity(initial, &control, spec, cfg)?;
    let mut r = residual(&end);
    let mut cost = r.norm_squared();
    let mut lambda = cfg.lambda0;
    let mut iterations = 0;
    while r.norm() > threshold && iterations < cfg.max_iterations {
        iterations += 1;
        let jac = &to_frame * &sens;
        let jt = jac.transpose();
        let mut a = &jt * &jac;
        for i in 0..a.nrows() {
            a[(i, i)] += lambda;
        }
        let g = &jt * &r;
        let delta = match a.cholesky() {
            Some(ch) => -ch.solve(&g),
            None => {
                lambda *= 2.0;
                continue;
            }
        };
        let trial = control.with_params(&(control.to_params() + delta));
        let accepted = match terminal_sensitivity(initial, &trial, spec, cfg) {
            Ok((e, s)) => {
                let rt = residual(&e);
                let ct = rt.norm_squared();
                if ct < cost {
                    control = trial;
                    end = e;
                    sens = s;
                    r = rt;
                    cost = ct;
                    true
                } else {
                    false
                }
            }
            Err(Error::BlowUp { .. }) => false,
            Err(e) => return Err(e),
        };

        lambda = if accepted { (lambda * 0.5).max(1e-15) } else { lambda * 2.0 };
    }
    let error = distance(&end, target);
    Ok(Attempt { control, error, iterations, converged: error <= threshold })
}

/// Find piecewise-constant controls on `intervals` equal pieces of
/// `[0, horizon]` steering `initial` to `target`.
///
/// The first attempt starts from zero control; if it does not converge, up to
/// `cfg.restarts` seeded random starts run in parallel and the lowest-index
/// converged one (or else the smallest error) is returned.
pub fn solve_steering(
    initial: &SpectralState,
    target: &SpectralState,
    horizon: f64,
    intervals: usize,
    spec: &NoiseSpec,
    cfg: &SteeringConfig,
) -> Result<SteeringResult> {
    let t = initial.truncation();
    if target.truncation().cutoff() != t.cutoff() {
        return Err(Error::TruncationMismatch { expected: t.cutoff(), found: target.truncation().cutoff() });
    }
    if spec.cutoff() != t.cutoff() {
        return Err(Error::TruncationMismatch { expected: t.cutoff(), found: spec.cutoff() });
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidConfig(format!("steering time must be positive, got {horizon}")));
    }
    let forced = spec.forced();
    if forced.is_empty() {
        return Err(Error::InvalidConfig("no controlled modes".into()));
    }
    let needed = (4 * t.dim()).div_ceil(4 * forced.len());
    if intervals < needed {
        return Err(Error::InvalidConfig(format!(
            "{intervals} control intervals leave the problem underdetermined: need at least 4D / (4 |forced|) = {needed}"
        )));
    }
    if cfg.substeps == 0 || !(cfg.nu > 0.0) {
        return Err(Error::InvalidConfig("steering needs substeps > 0 and nu > 0".into()));
    }
    let hypothesis_satisfied = check_hormander(&forced, t.cutoff())?.passed;
    let threshold = cfg.tolerance * (1.0 + target.energy().sqrt());

    let zero = ControlSignal::zero(forced.clone(), horizon, intervals);
    let mut best = levenberg_marquardt(initial, target, zero.clone(), spec, cfg, threshold)?;
    let mut restart = 0;
    if !best.converged && cfg.restarts > 0 {
        let attempts: Vec<Result<Attempt>> = (1..=cfg.restarts)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
                let p = DVector::from_fn(zero.to_params().len(), |_, _| rng.gen_range(-1.0..1.0));
                levenberg_marquardt(initial, target, zero.with_params(&p), spec, cfg, threshold)
            })
            .collect();
        for (i, a) in attempts.into_iter().enumerate() {
            let a = a?;
            let better = if best.converged { false } else { a.converged || a.error < best.error };
            if better {
                best = a;
                restart = i + 1;
            }
        }
    }
    let end = integrate_controlled(initial, &best.control, spec, cfg)?;
    Ok(SteeringResult {
        schema_version: 1,
        terminal_error: best.error,
        threshold,
        iterations: best.iterations,
        restart,
        converged: best.converged,
        hypothesis_satisfied,
        mode_errors: mode_errors(&end, target),
        control: best.control,
        config: cfg.clone(),
    })
}

/// Re-integrate a stored result and return the terminal error.
pub fn replay(
    initial: &SpectralState,
    target: &SpectralState,
    result: &SteeringResult,
    spec: &NoiseSpec,
) -> Result<f64> {
    let end = integrate_controlled(initial, &result.control, spec, &result.config)?;
    Ok(distance(&end, target))
}
