//! `drift-selftest`: energy orthogonality of the nonlinearity and agreement
//! of the closed-form double bracket with its finite-difference oracle.

use galerkin_core::brackets::{double_bracket, double_bracket_oracle, TangentField};
use galerkin_core::drift::{convolution, energy_flux, flux_scale};
use galerkin_core::lattice::Truncation;
use galerkin_core::state::SpectralState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

pub const FLUX_TOLERANCE: f64 = 1e-12;
pub const BRACKET_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Serialize)]
pub struct SelftestReport {
    pub schema_version: u32,
    pub cutoff: u32,
    pub samples: usize,
    /// Largest `|sum conj(u) . E(u)|` relative to its natural scale.
    pub max_relative_flux: f64,
    pub flux_tolerance: f64,
    /// Largest max-norm gap between the closed form and the oracle.
    pub max_bracket_gap: f64,
    pub bracket_tolerance: f64,
    pub passed: bool,
}

/// Runs both suites; returns the report and `(sample, flux, bracket gap)` rows.
pub fn run(t: &Arc<Truncation>, samples: usize, seed: u64) -> (SelftestReport, Vec<(usize, f64, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(samples);
    for i in 0..samples {
        let energy = 10f64.powf(rng.gen_range(-2.0..2.0));
        let s = SpectralState::random(t.clone(), &mut rng, energy, None);
        let flux = energy_flux(&s, &convolution(&s)).norm() / flux_scale(&s);
        let v = random_single(t, &mut rng);
        let w = random_single(t, &mut rng);
        let gap = double_bracket(t, &v, &w)
            .expect("single-mode inputs")
            .max_abs_diff(&double_bracket_oracle(t, &v, &w));
        rows.push((i, flux, gap));
    }
    let max_relative_flux = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let max_bracket_gap = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let report = SelftestReport {
        schema_version: 1,
        cutoff: t.cutoff(),
        samples,
        max_relative_flux,
        flux_tolerance: FLUX_TOLERANCE,
        max_bracket_gap,
        bracket_tolerance: BRACKET_TOLERANCE,
        passed: max_relative_flux <= FLUX_TOLERANCE && max_bracket_gap <= BRACKET_TOLERANCE,
    };
    (report, rows)
}

fn random_single(t: &Truncation, rng: &mut ChaCha8Rng) -> TangentField {
    let k = t.mode(rng.gen_range(0..t.dim()));
    let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    TangentField::from_frame(t, k, &c)
}
