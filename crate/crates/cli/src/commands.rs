use crate::config::{load_state, PairOrderName, Resolved, RunConfig};
use crate::selftest;
use anyhow::{bail, Context, Result};
use galerkin_core::ergodicity::{lyapunov_check, mixing_probe, support_probe, MixingOptions, Verdict};
use galerkin_core::hormander::{check_hormander, numeric_rank_probe};
use galerkin_core::lattice::{determining_closure_with, PairOrder};
use galerkin_core::sde::{run_ensemble, simulate};
use galerkin_core::state::SpectralState;
use galerkin_core::steering::{replay, solve_steering, SteeringResult};
use galerkin_core::Error;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::Path;

/// What a subcommand hands back for writing into the run directory.
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
    pub verdict: Value,
    pub series: String,
    /// Additional files, by name.
    pub extra: Vec<(&'static str, String)>,
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = format!("{header}\n");
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn initial_state(cfg: &RunConfig, r: &Resolved) -> Result<SpectralState> {
    let s = &cfg.initial;
    load_state(&r.truncation, s.energy, s.seed, s.file.as_deref()).context("initial state")
}

pub fn simulate_cmd(cfg: &RunConfig, r: &Resolved) -> Result<Outcome> {
    let init = initial_state(cfg, r)?;
    let (traj, meta) = simulate(&init, &r.sim, &r.spec, 0, cfg.stride)?;
    let mut verdict = serde_json::to_value(&meta)?;
    // the wall time goes to timing.json so the verdict stays reproducible
    verdict.as_object_mut().expect("object").remove("wall_time_s");
    let mut extra = Vec::new();
    if let Some(t) = &traj {
        extra.push(("trajectory.csv", t.to_csv()));
    }
    let ensemble = run_ensemble(&init, &r.sim, &r.spec, cfg.stride, |t, s| (t, s.energy()));
    let (passed, summary, series) = match ensemble {
        Ok(runs) if meta.blow_up.is_none() => {
            let n = runs.len() as f64;
            let rows = (0..runs[0].len()).map(|i| {
                let t = runs[0][i].0;
                let mean = runs.iter().map(|v| v[i].1).sum::<f64>() / n;
                let var = if runs.len() > 1 {
                    runs.iter().map(|v| (v[i].1 - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                format!("{t},{mean},{}", (var / n).sqrt())
            });
            let series = csv("t,mean_v,stderr_v", rows);
            let last = runs.iter().map(|v| v.last().expect("sample").1).sum::<f64>() / n;
            (true, format!("{} trajectories, final mean energy {last:.6}", runs.len()), series)
        }
        Ok(_) => (false, "trajectory 0 blew up".to_string(), csv("t,mean_v,stderr_v", [])),
        Err(Error::BlowUp { time, step }) => {
            verdict["ensemble_blow_up"] = json!({ "time": time, "step": step });
            (false, format!("ensemble blew up at t = {time}; reduce dt"), csv("t,mean_v,stderr_v", []))
        }
        Err(e) => return Err(e.into()),
    };
    verdict["passed"] = json!(passed);
    Ok(Outcome { passed, summary, verdict, series, extra })
}

pub fn check_determining_cmd(cfg: &RunConfig, _r: &Resolved) -> Result<Outcome> {
    let order = match cfg.closure.order {
        PairOrderName::Lexicographic => PairOrder::Lexicographic,
        PairOrderName::Shuffled => PairOrder::Shuffled(cfg.closure.order_seed),
    };
    let result = determining_closure_with(&cfg.forced_modes(), cfg.cutoff, order)?;
    let series = csv("k1,k2,k3,dim", result.modes.iter().map(|m| {
        let [a, b, c] = m.index.0;
        format!("{a},{b},{c},{}", m.dim())
    }));
    let summary = format!(
        "is_determining = {}, rank {} of {}",
        result.is_determining,
        result.total_dim(),
        4 * result.modes.len()
    );
    let mut verdict = serde_json::to_value(&result)?;
    verdict["schema_version"] = json!(1);
    Ok(Outcome { passed: result.is_determining, summary, verdict, series, extra: Vec::new() })
}

pub fn hormander_rank_cmd(cfg: &RunConfig, r: &Resolved) -> Result<Outcome> {
    let report = check_hormander(&r.spec.forced(), cfg.cutoff)?;
    let numeric = if cfg.closure.numeric_points > 0 {
        Some(numeric_rank_probe(&r.spec, cfg.nu, cfg.closure.numeric_points, cfg.closure.order_seed)?)
    } else {
        None
    };
    let numeric_ok = numeric.as_ref().is_none_or(|ranks| ranks.iter().all(|&k| k == report.dim_u));
    let passed = report.passed && numeric_ok;
    let series = csv("k1,k2,k3,dim", report.per_mode_dims.iter().map(|m| {
        let [a, b, c] = m.k.0;
        format!("{a},{b},{c},{}", m.dim)
    }));
    let summary = format!("rank {} of {}{}", report.achieved_rank, report.dim_u, match &numeric {
        Some(ranks) => format!(", numeric ranks {ranks:?}"),
        None => String::new(),
    });
    let verdict = json!({ "schema_version": 1, "report": report, "numeric_ranks": numeric, "passed": passed });
    Ok(Outcome { passed, summary, verdict, series, extra: Vec::new() })
}

pub fn lyapunov_cmd(cfg: &RunConfig, r: &Resolved) -> Result<Outcome> {
    let init = initial_state(cfg, r)?;
    let report = lyapunov_check(&r.sim, &r.spec, &init, cfg.stride)?;
    let series = csv("t,v,stderr,envelope,generator_estimate", report.samples.iter().map(|s| {
        format!("{},{},{},{},{}", s.t, s.v, s.stderr, s.envelope, s.generator_estimate)
    }));
    let summary = format!(
        "verdict {:?}: {} envelope violations, long-run mean {:.5} +- {:.5} vs ceiling {:.5}",
        report.verdict,
        report.violations.len(),
        report.long_run_mean,
        report.long_run_stderr,
        report.ceiling
    );
    Ok(Outcome {
        passed: report.verdict == Verdict::Pass,
        summary,
        verdict: serde_json::to_value(&report)?,
        series,
        extra: Vec::new(),
    })
}

pub fn mixing_cmd(cfg: &RunConfig, r: &Resolved) -> Result<Outcome> {
    let a = initial_state(cfg, r)?;
    let m = &cfg.mixing;
    let b = load_state(&r.truncation, m.energy_b, m.seed_b, m.file_b.as_deref()).context("second initial state")?;
    let options = MixingOptions { dictionary_forms: m.dictionary_forms, dictionary_seed: m.dictionary_seed };
    let est = mixing_probe(&r.sim, &r.spec, &a, &b, cfg.stride, &options)?;
    let series = csv("t,d,stderr,argmax,mean_v_a,mean_v_b", est.series.iter().map(|s| {
        format!("{},{},{},{},{},{}", s.t, s.d, s.stderr, s.argmax, s.mean_v_a, s.mean_v_b)
    }));
    let summary = if est.hypothesis_violated {
        est.note.clone()
    } else {
        match (&est.fit, &est.fit_rejection) {
            (Some(f), rejection) => format!(
                "rho_hat {:.4}, 95% CI ({:.4}, {:.4}), held-out violations {}/{}{}",
                f.rho_hat,
                f.rho_ci.0,
                f.rho_ci.1,
                f.held_out_violations,
                f.held_out_points,
                rejection.as_ref().map(|r| format!(", fit rejected: {r}")).unwrap_or_default()
            ),
            (None, rejection) => format!("no fit: {}", rejection.clone().unwrap_or_default()),
        }
    };
    Ok(Outcome { passed: est.passed, summary, verdict: serde_json::to_value(&est)?, series, extra: Vec::new() })
}

pub fn support_cmd(cfg: &RunConfig, r: &Resolved) -> Result<Outcome> {
    let init = initial_state(cfg, r)?;
    let grid = cfg.support_grid();
    let samples = support_probe(&r.sim, &r.spec, &init, &grid, cfg.stride)?;
    let last = samples.last().map_or(0.0, |s| s.visited_fraction);
    let passed = last >= cfg.support.threshold;
    let series = csv("t,visited_fraction", samples.iter().map(|s| format!("{},{}", s.t, s.visited_fraction)));
    let verdict = json!({
        "schema_version": 1,
        "boxes": grid,
        "total_boxes": grid.total(),
        "final_visited_fraction": last,
        "threshold": cfg.support.threshold,
        "passed": passed,
    });
    let summary = format!("visited {:.1}% of {} boxes (threshold {:.1}%)", 100.0 * last, grid.total(), 100.0 * cfg.support.threshold);
    Ok(Outcome { passed, summary, verdict, series, extra: Vec::new() })
}

fn steering_states(cfg: &RunConfig, r: &Resolved) -> Result<(SpectralState, SpectralState)> {
    let s = &cfg.steering;
    let init = initial_state(cfg, r)?;
    let target =
        load_state(&r.truncation, s.target_energy, s.target_seed, s.target_file.as_deref()).context("target state")?;
    Ok((init, target))
}

pub fn steer_cmd(cfg: &RunConfig, r: &Resolved) -> Result<Outcome> {
    let (init, target) = steering_states(cfg, r)?;
    let s = &cfg.steering;
    let result = solve_steering(&init, &target, s.horizon, s.intervals, &r.spec, &cfg.steering_config())?;
    let series = csv("k1,k2,k3,error", result.mode_errors.iter().map(|m| {
        let [a, b, c] = m.k.0;
        format!("{a},{b},{c},{}", m.error)
    }));
    let mut summary = format!(
        "converged = {}, terminal error {:.3e} (threshold {:.3e}), {} iterations, restart {}",
        result.converged, result.terminal_error, result.threshold, result.iterations, result.restart
    );
    if !result.hypothesis_satisfied {
        summary.push_str("; forced set is not determining");
    }
    Ok(Outcome { passed: result.converged, summary, verdict: serde_json::to_value(&result)?, series, extra: Vec::new() })
}

/// Re-integrate a stored steering result and check the terminal error is reproduced bit for bit.
pub fn replay_cmd(cfg: &RunConfig, r: &Resolved, stored: &Path) -> Result<Outcome> {
    let path = if stored.is_dir() { stored.join("verdict.json") } else { stored.to_path_buf() };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let result: SteeringResult =
        serde_json::from_str(&text).with_context(|| format!("{} is not a steering verdict", path.display()))?;
    if result.control.forced != r.spec.forced() {
        bail!("stored control acts on {:?}, the config forces {:?}", result.control.forced, r.spec.forced());
    }
    let (init, target) = steering_states(cfg, r)?;
    let replayed = replay(&init, &target, &result, &r.spec)?;
    let identical = replayed.to_bits() == result.terminal_error.to_bits();
    let mut summary = String::new();
    write!(summary, "stored terminal error {:e}, replayed {:e}, identical = {identical}", result.terminal_error, replayed)?;
    let verdict = json!({
        "schema_version": 1,
        "source": path,
        "stored_terminal_error": result.terminal_error,
        "replayed_terminal_error": replayed,
        "identical": identical,
        "passed": identical,
    });
    let series = csv("stored,replayed", [format!("{},{}", result.terminal_error, replayed)]);
    Ok(Outcome { passed: identical, summary, verdict, series, extra: Vec::new() })
}

pub fn drift_selftest_cmd(cfg: &RunConfig, r: &Resolved) -> Result<Outcome> {
    let (report, rows) = selftest::run(&r.truncation, cfg.selftest.samples, cfg.selftest.seed);
    let series = csv("sample,relative_flux,bracket_gap", rows.iter().map(|(i, f, g)| format!("{i},{f},{g}")));
    let summary = format!(
        "max relative flux {:.2e} (tol {:.0e}), max bracket gap {:.2e} (tol {:.0e})",
        report.max_relative_flux, report.flux_tolerance, report.max_bracket_gap, report.bracket_tolerance
    );
    Ok(Outcome { passed: report.passed, summary, verdict: serde_json::to_value(&report)?, series, extra: Vec::new() })
}
