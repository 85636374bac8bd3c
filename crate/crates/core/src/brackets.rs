//! Iterated brackets `[[F0, V], W]` of the drift with constant vector fields.
//!
//! `F0` is quadratic, so for constant `V`, `W` the double bracket is the
//! constant field `D^2 F0[V, W]`. For single-mode `V` at `m` and `W` at `n` it
//! lives on `k = m + n`, `h = n - m` and `g = m - n` and has the closed form
//! implemented in [`double_bracket`]. [`double_bracket_oracle`] recomputes it
//! from drift evaluations alone.

use crate::drift::convolution;
use crate::error::{Error, Result};
use crate::lattice::{ModeIndex, ModeSubspace, Truncation};
use crate::state::{snap_divfree, SpectralState};
use crate::vec3::{self, Vec3, ZERO};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Constant vector field: per canonical mode, the coefficients of
/// `d/dr_k` and `d/ds_k`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TangentField {
    pub components: BTreeMap<ModeIndex, (Vec3, Vec3)>,
}

#[derive(Serialize, Deserialize)]
struct FieldEntry {
    k: ModeIndex,
    r: Vec3,
    s: Vec3,
}

impl TangentField {
    pub fn single(k: ModeIndex, r: Vec3, s: Vec3) -> Self {
        let mut components = BTreeMap::new();
        components.insert(k, (r, s));
        TangentField { components }
    }

    /// Field at `k` from frame coordinates `[r.e1, r.e2, s.e1, s.e2]`.
    pub fn from_frame(t: &Truncation, k: ModeIndex, c: &[f64; 4]) -> Self {
        let slot = t.canonical_slot(k).expect("canonical mode");
        let [e1, e2] = t.frame(slot);
        let r = vec3::add(&vec3::scale(c[0], e1), &vec3::scale(c[1], e2));
        let s = vec3::add(&vec3::scale(c[2], e1), &vec3::scale(c[3], e2));
        TangentField::single(k, r, s)
    }

    pub fn frame_coords(t: &Truncation, k: ModeIndex, r: &Vec3, s: &Vec3) -> [f64; 4] {
        let slot = t.canonical_slot(k).expect("canonical mode");
        let [e1, e2] = t.frame(slot);
        [vec3::dot(r, e1), vec3::dot(r, e2), vec3::dot(s, e1), vec3::dot(s, e2)]
    }

    pub fn is_zero(&self) -> bool {
        self.components.values().all(|(r, s)| r.iter().chain(s).all(|x| *x == 0.0))
    }

    pub fn add(&self, other: &TangentField) -> TangentField {
        let mut out = self.clone();
        for (k, (r, s)) in &other.components {
            let e = out.components.entry(*k).or_insert((ZERO, ZERO));
            e.0 = vec3::add(&e.0, r);
            e.1 = vec3::add(&e.1, s);
        }
        out
    }

    pub fn scaled(&self, c: f64) -> TangentField {
        TangentField {
            components: self
                .components
                .iter()
                .map(|(k, (r, s))| (*k, (vec3::scale(c, r), vec3::scale(c, s))))
                .collect(),
        }
    }

    /// Largest absolute coefficient difference over the union of supports.
    pub fn max_abs_diff(&self, other: &TangentField) -> f64 {
        let diff = self.add(&other.scaled(-1.0));
        diff.components
            .values()
            .flat_map(|(r, s)| r.iter().chain(s.iter()))
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .values()
            .flat_map(|(r, s)| r.iter().chain(s.iter()))
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Build the state `u_k = r + i s` carrying this field (modes outside the
    /// truncation are dropped).
    pub fn to_state(&self, t: Arc<Truncation>) -> SpectralState {
        let mut st = SpectralState::zeros(t);
        for (k, (r, s)) in &self.components {
            let _ = st.set(*k, vec3::complex(r, s));
        }
        st
    }

    /// Debug dump for failure triage.
    pub fn to_json(&self) -> String {
        let entries: Vec<FieldEntry> = self
            .components
            .iter()
            .map(|(k, (r, s))| FieldEntry { k: *k, r: *r, s: *s })
            .collect();
        serde_json::to_string_pretty(&entries).expect("field serializes")
    }

    fn single_mode(&self) -> Result<(ModeIndex, Vec3, Vec3)> {
        if self.components.len() != 1 {
            return Err(Error::NotSingleMode(self.components.len()));
        }
        let (k, (r, s)) = self.components.iter().next().expect("one entry");
        Ok((*k, *r, *s))
    }
}

/// `(a.k) P_k(b) + (b.k) P_k(a)`, the contraction of `a`, `b` with the
/// second-derivative tensor `A^i_{jl}(k) = delta_il k_j + delta_ij k_l - 2 k_i k_j k_l / |k|^2`.
fn pair(k: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let ak = vec3::dot(a, k);
    let bk = vec3::dot(b, k);
    let k2 = vec3::dot(k, k);
    let pa = vec3::sub(a, &vec3::scale(ak / k2, k));
    let pb = vec3::sub(b, &vec3::scale(bk / k2, k));
    vec3::add(&vec3::scale(ak, &pb), &vec3::scale(bk, &pa))
}

fn push(field: &mut TangentField, k: ModeIndex, mut r: Vec3, mut s: Vec3) {
    snap_divfree(&k, &mut r);
    snap_divfree(&k, &mut s);
    field.components.insert(k, (r, s));
}

/// Closed-form `[[F0, V], W]` for `V` supported on `m` and `W` on `n`.
/// Targets outside the canonical half of the truncation are dropped.
pub fn double_bracket(t: &Truncation, v: &TangentField, w: &TangentField) -> Result<TangentField> {
    let (m, mut vr, mut vs) = v.single_mode()?;
    let (n, mut wr, mut ws) = w.single_mode()?;
    for x in [&mut vr, &mut vs] {
        snap_divfree(&m, x);
    }
    for x in [&mut wr, &mut ws] {
        snap_divfree(&n, x);
    }
    let mut out = TangentField::default();

    let k = m + n;
    if t.canonical_slot(k).is_some() {
        let kf = k.as_f64();
        let r = vec3::add(&pair(&kf, &vr, &ws), &pair(&kf, &vs, &wr));
        let s = vec3::sub(&pair(&kf, &vs, &ws), &pair(&kf, &vr, &wr));
        push(&mut out, k, r, s);
    }
    let h = n - m;
    if t.canonical_slot(h).is_some() {
        let hf = h.as_f64();
        let r = vec3::sub(&pair(&hf, &vr, &ws), &pair(&hf, &vs, &wr));
        let s = vec3::scale(-1.0, &vec3::add(&pair(&hf, &vr, &wr), &pair(&hf, &vs, &ws)));
        push(&mut out, h, r, s);
    }
    let g = m - n;
    if t.canonical_slot(g).is_some() {
        let gf = g.as_f64();
        let r = vec3::sub(&pair(&gf, &vs, &wr), &pair(&gf, &vr, &ws));
        let s = vec3::scale(-1.0, &vec3::add(&pair(&gf, &vr, &wr), &pair(&gf, &vs, &ws)));
        push(&mut out, g, r, s);
    }
    Ok(out)
}

fn quadratic_field(st: &SpectralState) -> Vec<(Vec3, Vec3)> {
    // real parts of -i E: (Im E, -Re E)
    convolution(st)
        .iter()
        .map(|e| (vec3::im(e), vec3::scale(-1.0, &vec3::re(e))))
        .collect()
}

/// `[[F0, V], W]` as the second difference
/// `F0(V + W) - F0(V) - F0(W) + F0(0)` of the quadratic drift, which is exact
/// for a quadratic. Any supports are allowed.
pub fn double_bracket_oracle(t: &Arc<Truncation>, v: &TangentField, w: &TangentField) -> TangentField {
    let fvw = quadratic_field(&v.add(w).to_state(t.clone()));
    let fv = quadratic_field(&v.to_state(t.clone()));
    let fw = quadratic_field(&w.to_state(t.clone()));
    let mut out = TangentField::default();
    for slot in 0..t.dim() {
        let r = vec3::sub(&vec3::sub(&fvw[slot].0, &fv[slot].0), &fw[slot].0);
        let s = vec3::sub(&vec3::sub(&fvw[slot].1, &fv[slot].1), &fw[slot].1);
        if r.iter().chain(s.iter()).any(|x| *x != 0.0) {
            out.components.insert(t.mode(slot), (r, s));
        }
    }
    out
}

/// Span of `[[F0, V], W]` over `V` in `source_m` and `W` in `source_n`,
/// split by target mode.
pub fn bracket_span(
    t: &Truncation,
    m: ModeIndex,
    n: ModeIndex,
    source_m: &ModeSubspace,
    source_n: &ModeSubspace,
) -> BTreeMap<ModeIndex, ModeSubspace> {
    let mut out: BTreeMap<ModeIndex, ModeSubspace> = BTreeMap::new();
    for bm in &source_m.basis {
        let v = TangentField::from_frame(t, m, bm);
        for bn in &source_n.basis {
            let w = TangentField::from_frame(t, n, bn);
            let z = double_bracket(t, &v, &w).expect("single-mode inputs");
            for (k, (r, s)) in &z.components {
                let c = TangentField::frame_coords(t, *k, r, s);
                out.entry(*k).or_insert_with(|| ModeSubspace::empty(*k)).try_add(&c);
            }
        }
    }
    out.retain(|_, s| s.dim() > 0);
    out
}

/// Jacobian of the drift in raw coordinates, per slot `[r1, r2, r3, s1, s2, s3]`.
///
/// Block `(k, m)` couples `F_{r_k}, F_{s_k}` to `r_m, s_m` through the
/// neighbours `k - m`, `m - k` and `m + k` (zero outside the canonical half).
pub fn drift_jacobian(state: &SpectralState, nu: f64) -> DMatrix<f64> {
    let t = state.truncation();
    let d = t.dim();
    let mut jac = DMatrix::zeros(6 * d, 6 * d);
    let part = |k: ModeIndex, real: bool| -> Vec3 {
        match t.canonical_slot(k) {
            Some(slot) => {
                let u = state.mode(slot);
                if real {
                    vec3::re(u)
                } else {
                    vec3::im(u)
                }
            }
            None => ZERO,
        }
    };
    for ks in 0..d {
        let k = t.mode(ks);
        let kf = k.as_f64();
        let k2 = vec3::dot(&kf, &kf);
        // kernel(X)_ij = k_j X_i + (k.X)(delta_ij - 2 k_i k_j / |k|^2)
        let kernel = |x: &Vec3| {
            let kx = vec3::dot(&kf, x);
            let mut b = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    b[i][j] = kf[j] * x[i] + kx * (delta - 2.0 * kf[i] * kf[j] / k2);
                }
            }
            b
        };
        for ms in 0..d {
            let m = t.mode(ms);
            let (km, mk, mpk) = (k - m, m - k, m + k);
            let (s1, s2, s3) = (part(km, false), part(mk, false), part(mpk, false));
            let (r1, r2, r3) = (part(km, true), part(mk, true), part(mpk, true));
            let a = vec3::add(&vec3::sub(&s1, &s2), &s3);
            let b = vec3::sub(&vec3::add(&r1, &r2), &r3);
            let c = vec3::add(&vec3::add(&r1, &r2), &r3);
            let g = vec3::sub(&vec3::sub(&s1, &s2), &s3);
            let (ba, bb, bc, bg) = (kernel(&a), kernel(&b), kernel(&c), kernel(&g));
            let decay = if ks == ms { -nu * k2 } else { 0.0 };
            for i in 0..3 {
                for j in 0..3 {
                    let diag = if i == j { decay } else { 0.0 };
                    jac[(6 * ks + i, 6 * ms + j)] = diag + ba[i][j];
                    jac[(6 * ks + i, 6 * ms + 3 + j)] = bb[i][j];
                    jac[(6 * ks + 3 + i, 6 * ms + j)] = -bc[i][j];
                    jac[(6 * ks + 3 + i, 6 * ms + 3 + j)] = diag + bg[i][j];
                }
            }
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::eval_drift;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(n: u32) -> Arc<Truncation> {
        Arc::new(Truncation::new(n).unwrap())
    }

    #[test]
    fn hand_evaluated_example() {
        let tr = t(1);
        let v = TangentField::single(ModeIndex::new(1, 0, 0), [0.0, 1.0, 0.0], ZERO);
        let w = TangentField::single(ModeIndex::new(0, 1, 0), ZERO, [0.0, 0.0, 1.0]);
        let z = double_bracket(&tr, &v, &w).unwrap();
        let mut expected = TangentField::default();
        expected.components.insert(ModeIndex::new(1, 1, 0), ([0.0, 0.0, 1.0], ZERO));
        expected.components.insert(ModeIndex::new(-1, 1, 0), ([0.0, 0.0, 1.0], ZERO));
        assert!(z.max_abs_diff(&expected) < 1e-15, "{}", z.to_json());
        let o = double_bracket_oracle(&tr, &v, &w);
        assert!(o.max_abs_diff(&expected) < 1e-15, "{}", o.to_json());
    }

    #[test]
    fn rejects_composite_inputs() {
        let tr = t(1);
        let v = TangentField::single(ModeIndex::new(1, 0, 0), [0.0, 1.0, 0.0], ZERO)
            .add(&TangentField::single(ModeIndex::new(0, 1, 0), [1.0, 0.0, 0.0], ZERO));
        let w = TangentField::single(ModeIndex::new(0, 0, 1), [1.0, 0.0, 0.0], ZERO);
        assert_eq!(double_bracket(&tr, &v, &w).unwrap_err(), Error::NotSingleMode(2));
    }

    #[test]
    fn oracle_is_symmetric_and_bilinear_at_zero() {
        let tr = t(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_field(&tr, &mut rng, 2);
        let w = random_field(&tr, &mut rng, 3);
        let a = double_bracket_oracle(&tr, &v, &w);
        let b = double_bracket_oracle(&tr, &w, &v);
        assert!(a.max_abs_diff(&b) < 1e-12);
        assert!(double_bracket_oracle(&tr, &TangentField::default(), &w).is_zero());
    }

    fn random_field(tr: &Truncation, rng: &mut ChaCha8Rng, modes: usize) -> TangentField {
        let mut f = TangentField::default();
        for _ in 0..modes {
            let k = tr.mode(rng.gen_range(0..tr.dim()));
            let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            f = f.add(&TangentField::from_frame(tr, k, &c));
        }
        f
    }

    #[test]
    fn equal_norm_pair_gives_two_dimensions() {
        let tr = t(1);
        let (m, n) = (ModeIndex::new(1, 0, 0), ModeIndex::new(0, 1, 0));
        let span = bracket_span(&tr, m, n, &ModeSubspace::full(m), &ModeSubspace::full(n));
        let target = span.get(&ModeIndex::new(1, 1, 0)).unwrap();
        assert_eq!(target.dim(), 2);
        // the span is {lambda E d/dr + mu E d/ds} with E = (0,0,1)
        let slot = tr.canonical_slot(ModeIndex::new(1, 1, 0)).unwrap();
        let [e1, e2] = tr.frame(slot);
        let e_coords = [e1[2], e2[2]];
        let p = target.projector();
        let er = [e_coords[0], e_coords[1], 0.0, 0.0];
        let es = [0.0, 0.0, e_coords[0], e_coords[1]];
        for e in [er, es] {
            let pe: Vec<f64> = (0..4).map(|i| (0..4).map(|j| p[i][j] * e[j]).sum()).collect();
            for i in 0..4 {
                assert!((pe[i] - e[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let tr = t(1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let nu = 0.9;
        for _ in 0..5 {
            let x = SpectralState::random(tr.clone(), &mut rng, 2.0, None);
            let dir = SpectralState::random(tr.clone(), &mut rng, 1.0, None);
            let jac = drift_jacobian(&x, nu);
            let dv = nalgebra::DVector::from_vec(dir.to_real());
            let analytic = &jac * &dv;
            let eps = 1e-6;
            let xr = x.to_real();
            let shifted = |sign: f64| {
                let y: Vec<f64> = xr.iter().zip(dv.iter()).map(|(a, b)| a + sign * eps * b).collect();
                let st = SpectralState::from_real(tr.clone(), &y).unwrap();
                let f = eval_drift(&st, nu).total;
                f.iter()
                    .flat_map(|u| vec3::re(u).into_iter().chain(vec3::im(u)))
                    .collect::<Vec<f64>>()
            };
            let (fp, fm) = (shifted(1.0), shifted(-1.0));
            let fd: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            let scale = analytic.amax();
            for (a, b) in analytic.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * scale, "{a} vs {b}");
            }
        }
    }
}
