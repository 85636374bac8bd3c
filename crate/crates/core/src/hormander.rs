//! Rank condition for the Lie algebra generated by the drift and the noise
//! fields. Only constant fields are needed: the double brackets of constant
//! fields are constant, so the rank they reach is the same at every point.

use crate::brackets::{double_bracket_oracle, drift_jacobian, TangentField};
use crate::error::{Error, Result};
use crate::lattice::{determining_closure, ModeIndex, Truncation};
use crate::sde::NoiseSpec;
use crate::state::SpectralState;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeDim {
    pub k: ModeIndex,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankReport {
    pub schema_version: u32,
    pub cutoff: u32,
    pub forced: Vec<ModeIndex>,
    pub dim_u: usize,
    pub achieved_rank: usize,
    pub per_mode_dims: Vec<ModeDim>,
    pub passed: bool,
    /// Recorded instead of sampling points: the spanning fields are constant.
    pub point_independent: bool,
}

impl RankReport {
    pub fn dims(&self) -> BTreeMap<ModeIndex, usize> {
        self.per_mode_dims.iter().map(|m| (m.k, m.dim)).collect()
    }
}

/// Rank reached by the constant fields of the Lie algebra generated by
/// full noise on `forced`.
pub fn check_hormander(forced: &[ModeIndex], cutoff: u32) -> Result<RankReport> {
    let closure = determining_closure(forced, cutoff)?;
    let per_mode_dims: Vec<ModeDim> = closure.modes.iter().map(|m| ModeDim { k: m.index, dim: m.dim() }).collect();
    let achieved_rank = per_mode_dims.iter().map(|m| m.dim).sum();
    let dim_u = 4 * closure.modes.len();
    let mut forced: Vec<ModeIndex> = forced.to_vec();
    forced.sort();
    forced.dedup();
    Ok(RankReport {
        schema_version: 1,
        cutoff,
        forced,
        dim_u,
        achieved_rank,
        per_mode_dims,
        passed: achieved_rank == dim_u,
        point_independent: true,
    })
}

/// The constant fields `X^r_{k,i}` and `X^s_{k,i}`: column `i` of `q^r_k`
/// in the `r_k` block, column `i` of `q^s_k` in the `s_k` block.
pub fn noise_field_basis(spec: &NoiseSpec) -> Result<Vec<TangentField>> {
    let t = Truncation::new(spec.cutoff())?;
    let mut out = Vec::new();
    for m in spec.modes() {
        let mut coords = Vec::new();
        for (q, is_r) in [(&m.qr, true), (&m.qs, false)] {
            for i in 0..3 {
                let col = [q[0][i], q[1][i], q[2][i]];
                let f = if is_r {
                    TangentField::single(m.k, col, [0.0; 3])
                } else {
                    TangentField::single(m.k, [0.0; 3], col)
                };
                let (r, s) = f.components[&m.k];
                coords.push(TangentField::frame_coords(&t, m.k, &r, &s));
                out.push(f);
            }
        }
        let rank = DMatrix::from_fn(4, coords.len(), |i, j| coords[j][i]).rank(1e-10);
        if rank != 4 {
            return Err(Error::InvalidNoise {
                mode: m.k,
                part: "q",
                reason: format!("noise fields span {rank} of the 4 dimensions at this mode"),
            });
        }
    }
    Ok(out)
}

fn to_frame_vec(t: &Truncation, f: &TangentField) -> DVector<f64> {
    let mut v = DVector::zeros(4 * t.dim());
    for (k, (r, s)) in &f.components {
        if let Some(slot) = t.canonical_slot(*k) {
            let c = TangentField::frame_coords(t, *k, r, s);
            for i in 0..4 {
                v[4 * slot + i] = c[i];
            }
        }
    }
    v
}

fn from_frame_vec(t: &Truncation, v: &DVector<f64>) -> TangentField {
    let mut f = TangentField::default();
    for slot in 0..t.dim() {
        let c = [v[4 * slot], v[4 * slot + 1], v[4 * slot + 2], v[4 * slot + 3]];
        if c.iter().any(|x| *x != 0.0) {
            f = f.add(&TangentField::from_frame(t, t.mode(slot), &c));
        }
    }
    f
}

/// Orthonormal basis grown by Gram-Schmidt with a relative acceptance threshold.
struct Span {
    basis: Vec<DVector<f64>>,
}

impl Span {
    fn try_add(&mut self, v: &DVector<f64>) -> Option<DVector<f64>> {
        let own = v.norm();
        if own <= 1e-10 {
            return None;
        }
        let mut r = v.clone();
        for _ in 0..2 {
            for b in &self.basis {
                let c = b.dot(&r);
                r.axpy(-c, b, 1.0);
            }
        }
        let rn = r.norm();
        if rn <= 1e-9 * own {
            return None;
        }
        r /= rn;
        self.basis.push(r.clone());
        Some(r)
    }
}

/// Independent numerical check of the rank condition.
///
/// Builds the span of the noise fields closed under double brackets, with
/// every bracket taken from [`double_bracket_oracle`] on arbitrary (not
/// single-mode) fields. At `points` random states it then appends the single
/// brackets `DF(x) X` of the noise fields and returns the singular-value rank
/// (threshold `1e-8` relative to the largest) at each point.
pub fn numeric_rank_probe(spec: &NoiseSpec, nu: f64, points: usize, seed: u64) -> Result<Vec<usize>> {
    let t = Arc::new(Truncation::new(spec.cutoff())?);
    let noise = noise_field_basis(spec)?;
    let mut span = Span { basis: Vec::new() };
    let mut frontier: Vec<DVector<f64>> = noise.iter().filter_map(|f| span.try_add(&to_frame_vec(&t, f))).collect();
    while !frontier.is_empty() {
        let fields: Vec<TangentField> = span.basis.iter().map(|v| from_frame_vec(&t, v)).collect();
        let news: Vec<TangentField> = frontier.iter().map(|v| from_frame_vec(&t, v)).collect();
        let mut next = Vec::new();
        for a in &news {
            for b in &fields {
                let z = double_bracket_oracle(&t, a, b);
                if let Some(v) = span.try_add(&to_frame_vec(&t, &z)) {
                    next.push(v);
                }
            }
        }
        frontier = next;
    }

    let dim = 4 * t.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranks = Vec::with_capacity(points);
    for _ in 0..points {
        let x = SpectralState::random(t.clone(), &mut rng, 1.0, None);
        let jac = drift_jacobian(&x, nu);
        let to_raw = |f: &TangentField| DVector::from_vec(f.to_state(t.clone()).to_real());
        let mut cols: Vec<DVector<f64>> = span.basis.iter().cloned().collect();
        for f in &noise {
            let jx = &jac * to_raw(f);
            let st = SpectralState::from_real(t.clone(), jx.as_slice())?;
            cols.push(DVector::from_vec(st.to_frame()));
        }
        let m = DMatrix::from_columns(&cols);
        let sv = m.singular_values();
        let top = sv.max();
        let rank = sv.iter().filter(|s| **s > 1e-8 * top).count().min(dim);
        ranks.push(rank);
    }
    Ok(ranks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{projector_matrix, ForcedMode};

    fn e(i: usize) -> ModeIndex {
        let mut k = [0; 3];
        k[i] = 1;
        ModeIndex(k)
    }

    #[test]
    fn unit_forcing_has_full_rank_at_n1() {
        let r = check_hormander(&[e(0), e(1), e(2)], 1).unwrap();
        assert_eq!((r.dim_u, r.achieved_rank, r.passed), (52, 52, true));
    }

    #[test]
    fn single_forced_mode_fails() {
        let r = check_hormander(&[e(0)], 1).unwrap();
        assert_eq!((r.achieved_rank, r.passed), (4, false));
        assert_eq!(r.dims()[&e(0)], 4);
    }

    #[test]
    fn noise_basis_spans_each_forced_mode() {
        let t = Truncation::new(1).unwrap();
        let spec = NoiseSpec::isotropic(&t, &[e(2)], 1.0).unwrap();
        let fields = noise_field_basis(&spec).unwrap();
        assert_eq!(fields.len(), 6);
        let p = projector_matrix(e(2), 1.0);
        let one = NoiseSpec::new(&t, vec![ForcedMode { k: e(2), qr: p, qs: p }]).unwrap();
        assert_eq!(noise_field_basis(&one).unwrap(), fields);
    }

    #[test]
    fn numeric_probe_agrees_at_n1() {
        let t = Truncation::new(1).unwrap();
        let full = NoiseSpec::isotropic(&t, &[e(0), e(1), e(2)], 1.0).unwrap();
        assert_eq!(numeric_rank_probe(&full, 1.0, 3, 1).unwrap(), vec![52; 3]);
        let single = NoiseSpec::isotropic(&t, &[e(0)], 1.0).unwrap();
        // the single brackets DF(x) X add point-dependent directions on top
        // of the 4 constant ones
        for rank in numeric_rank_probe(&single, 1.0, 3, 2).unwrap() {
            assert!((4..52).contains(&rank), "{rank}");
        }
    }
}
