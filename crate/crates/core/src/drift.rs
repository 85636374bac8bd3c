//! Truncated Navier-Stokes drift
//!
//! ```text
//! F_k(u) = -nu |k|^2 u_k - i E_k(u),   E_k(u) = sum_{h+l=k, h,l in K_N} (k.u_h) P_k(u_l)
//! ```
//!
//! Three evaluation routes share no code beyond the index tables:
//! the complex convolution over `K_N` ([`eval_drift`]), the same sum split into
//! three sums over the canonical half ([`starred_convolution`]), and the real
//! component formulas for `F_r`, `F_s` ([`eval_drift_real`]).

use crate::state::{project_complex, project_unchecked, snap_complex, SpectralState};
use crate::vec3::{self, CVec3, Vec3, CZERO};
use num_complex::Complex64;

const MINUS_I: Complex64 = Complex64 { re: 0.0, im: -1.0 };

/// Drift split into its viscous and quadratic parts, per canonical mode.
#[derive(Clone, Debug)]
pub struct DriftEvaluation {
    /// `-nu |k|^2 u_k`
    pub linear: Vec<CVec3>,
    /// `E_k(u)`, the projected convolution (without the `-i` factor).
    pub convolution: Vec<CVec3>,
    /// `linear - i * convolution`
    pub total: Vec<CVec3>,
}

impl DriftEvaluation {
    /// Quadratic part of the drift, `-i E_k(u)`.
    pub fn quadratic(&self) -> Vec<CVec3> {
        self.convolution.iter().map(|e| e.map(|c| MINUS_I * c)).collect()
    }
}

/// `E_k(u)` for every canonical `k`, via the convolution over `K_N`.
pub fn convolution(state: &SpectralState) -> Vec<CVec3> {
    let t = state.truncation();
    (0..t.dim())
        .map(|slot| {
            let k = t.wavevector(slot);
            let mut acc = CZERO;
            for p in t.convolution_pairs(slot) {
                let uh = state.fetch(p.h);
                let ul = state.fetch(p.l);
                let c = vec3::cdot_real(k, &uh);
                acc[0] += c * ul[0];
                acc[1] += c * ul[1];
                acc[2] += c * ul[2];
            }
            project_complex(&t.mode(slot), &acc)
        })
        .collect()
}

/// Drift of the truncated system at `state`.
pub fn eval_drift(state: &SpectralState, nu: f64) -> DriftEvaluation {
    let t = state.truncation();
    let conv = convolution(state);
    let mut linear = Vec::with_capacity(t.dim());
    let mut total = Vec::with_capacity(t.dim());
    for slot in 0..t.dim() {
        let k = t.mode(slot);
        let decay = -nu * k.norm_sqr() as f64;
        let u = state.mode(slot);
        let mut lin = u.map(|c| c * decay);
        snap_complex(&k, &mut lin);
        let e = &conv[slot];
        let mut tot = [lin[0] + MINUS_I * e[0], lin[1] + MINUS_I * e[1], lin[2] + MINUS_I * e[2]];
        snap_complex(&k, &mut tot);
        linear.push(lin);
        total.push(tot);
    }
    DriftEvaluation { linear, convolution: conv, total }
}

/// `E_k(u)` from the three sums over the canonical half:
/// `h + l = k`, `h - l = k` (with `conj(u_l)`) and `l - h = k` (with `conj(u_h)`).
pub fn starred_convolution(state: &SpectralState) -> Vec<CVec3> {
    let t = state.truncation();
    let canon = t.canonical();
    (0..t.dim())
        .map(|slot| {
            let k = t.mode(slot);
            let kf = k.as_f64();
            let mut acc = CZERO;
            let mut add = |c: Complex64, v: CVec3| {
                for i in 0..3 {
                    acc[i] += c * v[i];
                }
            };
            for &h in canon {
                let uh = state.get(h);
                if let Some(l) = t.canonical_slot(k - h) {
                    add(vec3::cdot_real(&kf, &uh), *state.mode(l));
                }
                if let Some(l) = t.canonical_slot(h - k) {
                    add(vec3::cdot_real(&kf, &uh), vec3::conj(state.mode(l)));
                }
                if let Some(l) = t.canonical_slot(k + h) {
                    add(vec3::cdot_real(&kf, &vec3::conj(&uh)), *state.mode(l));
                }
            }
            project_complex(&k, &acc)
        })
        .collect()
}

/// Real drift components `(F_r, F_s)` per canonical mode.
#[derive(Clone, Debug, PartialEq)]
pub struct RealDrift {
    pub fr: Vec<Vec3>,
    pub fs: Vec<Vec3>,
}

/// `F_{r_k}` and `F_{s_k}` written out term by term in real arithmetic.
pub fn eval_drift_real(state: &SpectralState, nu: f64) -> RealDrift {
    let t = state.truncation();
    let canon = t.canonical();
    let d = t.dim();
    let mut fr = Vec::with_capacity(d);
    let mut fs = Vec::with_capacity(d);
    let parts = |slot: usize| {
        let u = state.mode(slot);
        (vec3::re(u), vec3::im(u))
    };
    for slot in 0..d {
        let k = t.mode(slot);
        let kf = k.as_f64();
        let (rk, sk) = parts(slot);
        let decay = -nu * k.norm_sqr() as f64;
        let mut ar = vec3::scale(decay, &rk);
        let mut as_ = vec3::scale(decay, &sk);
        let p = |v: &Vec3| project_unchecked(&k, v);
        let term = |a: f64, v: &Vec3, b: f64, w: &Vec3| vec3::add(&vec3::scale(a, &p(v)), &vec3::scale(b, &p(w)));
        for (hslot, &h) in canon.iter().enumerate() {
            let (rh, sh) = parts(hslot);
            let kr = vec3::dot(&kf, &rh);
            let ks = vec3::dot(&kf, &sh);
            // h + l = k
            if let Some(l) = t.canonical_slot(k - h) {
                let (rl, sl) = parts(l);
                ar = vec3::add(&ar, &term(kr, &sl, ks, &rl));
                as_ = vec3::sub(&as_, &term(kr, &rl, -ks, &sl));
            }
            // h - l = k
            if let Some(l) = t.canonical_slot(h - k) {
                let (rl, sl) = parts(l);
                ar = vec3::sub(&ar, &term(kr, &sl, -ks, &rl));
                as_ = vec3::sub(&as_, &term(kr, &rl, ks, &sl));
            }
            // l - h = k
            if let Some(l) = t.canonical_slot(k + h) {
                let (rl, sl) = parts(l);
                ar = vec3::add(&ar, &term(kr, &sl, -ks, &rl));
                as_ = vec3::sub(&as_, &term(kr, &rl, ks, &sl));
            }
        }
        fr.push(ar);
        fs.push(as_);
    }
    RealDrift { fr, fs }
}

/// `sum_{k in K_N} conj(u_k) . E_k(u)`; zero for every state.
pub fn energy_flux(state: &SpectralState, conv: &[CVec3]) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    for (u, e) in state.modes().iter().zip(conv) {
        let mut z = Complex64::new(0.0, 0.0);
        for i in 0..3 {
            z += u[i].conj() * e[i];
        }
        // the -k member contributes conj(conj(u_k)) . E_{-k} = u_k . (-conj(E_k))
        total += z - z.conj();
    }
    total
}

/// `sum_{k in K~} r_k . E_{r_k} + s_k . E_{s_k}` from the real quadratic parts.
pub fn real_energy_flux(state: &SpectralState, quad: &RealDrift) -> f64 {
    state
        .modes()
        .iter()
        .enumerate()
        .map(|(slot, u)| vec3::dot(&vec3::re(u), &quad.fr[slot]) + vec3::dot(&vec3::im(u), &quad.fs[slot]))
        .sum()
}

/// Scale used to make energy-flux residuals relative: `V^{3/2} max|k|`.
pub fn flux_scale(state: &SpectralState) -> f64 {
    let kmax = state
        .truncation()
        .canonical()
        .iter()
        .map(|k| (k.norm_sqr() as f64).sqrt())
        .fold(0.0, f64::max);
    state.energy().powf(1.5) * kmax
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{ModeIndex, Truncation};
    use crate::state::divergence;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn trunc(n: u32) -> Arc<Truncation> {
        Arc::new(Truncation::new(n).unwrap())
    }

    #[test]
    fn zero_state_has_zero_drift() {
        let s = SpectralState::zeros(trunc(2));
        let d = eval_drift(&s, 0.7);
        assert!(d.total.iter().flatten().all(|c| *c == Complex64::new(0.0, 0.0)));
        let r = eval_drift_real(&s, 0.7);
        assert!(r.fr.iter().chain(&r.fs).flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn single_mode_has_no_self_interaction() {
        let t = trunc(2);
        let mut s = SpectralState::zeros(t.clone());
        let m = ModeIndex::new(1, 0, 0);
        let (a, b) = (0.8, -1.3);
        s.set(m, vec3::complex(&[0.0, a, 0.0], &[0.0, 0.0, b])).unwrap();
        let nu = 0.5;
        let d = eval_drift(&s, nu);
        assert!(d.convolution.iter().flatten().all(|c| c.norm() == 0.0));
        let slot = t.canonical_slot(m).unwrap();
        assert_eq!(d.total[slot][1], Complex64::new(-nu * a, 0.0));
        assert_eq!(d.total[slot][2], Complex64::new(0.0, -nu * b));
    }

    #[test]
    fn drift_is_divergence_free_exactly() {
        let t = trunc(2);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let s = SpectralState::random(t.clone(), &mut rng, 3.0, None);
            let d = eval_drift(&s, 1.0);
            for (slot, f) in d.total.iter().enumerate() {
                let k = t.mode(slot);
                assert_eq!(divergence(&k, &vec3::re(f)), 0.0);
                assert_eq!(divergence(&k, &vec3::im(f)), 0.0);
            }
        }
    }

    #[test]
    fn quadratic_homogeneity() {
        let t = trunc(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = SpectralState::random(t, &mut rng, 1.0, None);
        let lambda = -2.7;
        let mut scaled = s.clone();
        scaled.scale_in_place(lambda);
        let e1 = convolution(&s);
        let e2 = convolution(&scaled);
        let scale = e1.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
        for (a, b) in e1.iter().flatten().zip(e2.iter().flatten()) {
            assert!((a * lambda * lambda - b).norm() <= 1e-12 * scale * lambda * lambda);
        }
    }

    #[test]
    fn purely_real_state_quadratic_structure() {
        // every quadratic term of F_r carries exactly one s factor
        let t = trunc(2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = SpectralState::random(t.clone(), &mut rng, 2.0, None);
        let real_only = SpectralState::from_modes(
            t,
            s.modes().iter().map(|u| vec3::complex(&vec3::re(u), &vec3::ZERO)).collect(),
        )
        .unwrap();
        let q = eval_drift_real(&real_only, 0.0);
        assert!(q.fr.iter().flatten().all(|x| *x == 0.0));
        assert!(q.fs.iter().flatten().any(|x| x.abs() > 1e-3));
    }
}
