//! Spectral velocity state on the canonical half of the truncation, plus the
//! CSV and JSON record formats.
//!
//! CSV: header `k1,k2,k3,r1,r2,r3,s1,s2,s3`, one row per canonical mode in
//! storage order, where `u_k = r + i s`. Floats are written in shortest
//! round-trip form, so a write/read cycle is bit-exact.

use crate::error::{Error, Result};
use crate::lattice::{ModeIndex, ModeRef, Truncation};
use crate::vec3::{self, CVec3, Vec3, CZERO};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const CSV_HEADER: &str = "k1,k2,k3,r1,r2,r3,s1,s2,s3";
pub const STATE_SCHEMA_VERSION: u32 = 1;

/// `k . v` evaluated left to right in floating point.
#[inline]
pub fn divergence(k: &ModeIndex, v: &Vec3) -> f64 {
    k.0[0] as f64 * v[0] + k.0[1] as f64 * v[1] + k.0[2] as f64 * v[2]
}

/// Adjust the last component of `v` coupled to `k` so that the floating-point
/// divergence `k . v` evaluates to exactly zero. The adjustment is a few ulps
/// on a vector that is already orthogonal up to rounding.
pub fn snap_divfree(k: &ModeIndex, v: &mut Vec3) {
    if divergence(k, v) == 0.0 || !v.iter().all(|x| x.is_finite()) {
        return;
    }
    let Some(pivot) = (0..3).rev().find(|&j| k.0[j] != 0) else {
        return;
    };
    let mut partial = 0.0;
    for j in 0..pivot {
        partial += k.0[j] as f64 * v[j];
    }
    let kp = k.0[pivot] as f64;
    let guess = -partial / kp;
    let mut cand = guess;
    let mut down = guess;
    // |k_j| a power of two makes the first candidate exact; otherwise walk a few ulps
    for _ in 0..8 {
        v[pivot] = cand;
        if divergence(k, v) == 0.0 {
            return;
        }
        v[pivot] = down;
        if divergence(k, v) == 0.0 {
            return;
        }
        cand = cand.next_up();
        down = down.next_down();
    }
    v[pivot] = guess;
}

/// Leray projection `P_k v = v - (v.k / |k|^2) k`, snapped onto the constraint.
pub fn project_divfree(k: ModeIndex, v: &Vec3) -> Result<Vec3> {
    if k.is_zero() {
        return Err(Error::ZeroMode);
    }
    Ok(project_unchecked(&k, v))
}

#[inline]
pub(crate) fn project_unchecked(k: &ModeIndex, v: &Vec3) -> Vec3 {
    let kf = k.as_f64();
    let c = vec3::dot(v, &kf) / vec3::dot(&kf, &kf);
    let mut out = vec3::sub(v, &vec3::scale(c, &kf));
    snap_divfree(k, &mut out);
    out
}

#[inline]
pub(crate) fn project_complex(k: &ModeIndex, u: &CVec3) -> CVec3 {
    let r = project_unchecked(k, &vec3::re(u));
    let s = project_unchecked(k, &vec3::im(u));
    vec3::complex(&r, &s)
}

#[inline]
pub(crate) fn snap_complex(k: &ModeIndex, u: &mut CVec3) {
    let mut r = vec3::re(u);
    let mut s = vec3::im(u);
    snap_divfree(k, &mut r);
    snap_divfree(k, &mut s);
    *u = vec3::complex(&r, &s);
}

/// Complex velocity coefficients `u_k = r_k + i s_k` on the canonical half.
#[derive(Clone, Debug)]
pub struct SpectralState {
    truncation: Arc<Truncation>,
    modes: Vec<CVec3>,
}

impl PartialEq for SpectralState {
    fn eq(&self, other: &Self) -> bool {
        self.truncation.cutoff() == other.truncation.cutoff() && self.modes == other.modes
    }
}

impl SpectralState {
    pub fn zeros(truncation: Arc<Truncation>) -> Self {
        let d = truncation.dim();
        SpectralState { truncation, modes: vec![CZERO; d] }
    }

    /// Build from per-slot coefficients; each one is projected onto `k^perp`.
    pub fn from_modes(truncation: Arc<Truncation>, modes: Vec<CVec3>) -> Result<Self> {
        if modes.len() != truncation.dim() {
            return Err(Error::Parse(format!(
                "expected {} modes, got {}",
                truncation.dim(),
                modes.len()
            )));
        }
        let mut s = SpectralState { truncation, modes };
        for slot in 0..s.modes.len() {
            let k = s.truncation.mode(slot);
            s.modes[slot] = project_complex(&k, &s.modes[slot]);
        }
        Ok(s)
    }

    /// Gaussian coefficients on the given modes (all when `support` is `None`),
    /// projected and rescaled to the requested energy `V`.
    pub fn random<R: Rng + ?Sized>(
        truncation: Arc<Truncation>,
        rng: &mut R,
        energy: f64,
        support: Option<&[ModeIndex]>,
    ) -> Self {
        let mut s = SpectralState::zeros(truncation);
        for slot in 0..s.modes.len() {
            let k = s.truncation.mode(slot);
            if support.is_some_and(|sup| !sup.contains(&k)) {
                continue;
            }
            let mut u = CZERO;
            for c in u.iter_mut() {
                *c = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            }
            s.modes[slot] = project_complex(&k, &u);
        }
        let v = s.energy();
        if v > 0.0 {
            s.scale_in_place((energy / v).sqrt());
        }
        s
    }

    pub fn truncation(&self) -> &Arc<Truncation> {
        &self.truncation
    }

    pub fn modes(&self) -> &[CVec3] {
        &self.modes
    }

    pub fn mode(&self, slot: usize) -> &CVec3 {
        &self.modes[slot]
    }

    /// Coefficient of any member of `K_N` (zero outside), using `u_{-k} = conj(u_k)`.
    pub fn get(&self, k: ModeIndex) -> CVec3 {
        match self.truncation.lookup(k) {
            Some(r) => self.fetch(r),
            None => CZERO,
        }
    }

    #[inline]
    pub fn fetch(&self, r: ModeRef) -> CVec3 {
        let u = &self.modes[r.slot];
        if r.conj {
            vec3::conj(u)
        } else {
            *u
        }
    }

    /// Set a canonical mode; the value is projected onto `k^perp`.
    pub fn set(&mut self, k: ModeIndex, u: CVec3) -> Result<()> {
        let slot = self
            .truncation
            .canonical_slot(k)
            .ok_or(Error::OutsideTruncation(k, self.truncation.cutoff()))?;
        self.modes[slot] = project_complex(&k, &u);
        Ok(())
    }

    pub(crate) fn modes_mut(&mut self) -> &mut [CVec3] {
        &mut self.modes
    }

    /// Kinetic energy `V = sum_k |r_k|^2 + |s_k|^2` over the canonical half.
    pub fn energy(&self) -> f64 {
        self.modes.iter().map(vec3::cnorm_sqr).sum()
    }

    pub fn scale_in_place(&mut self, c: f64) {
        for slot in 0..self.modes.len() {
            let k = self.truncation.mode(slot);
            for x in self.modes[slot].iter_mut() {
                *x *= c;
            }
            snap_complex(&k, &mut self.modes[slot]);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.modes.iter().flatten().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest `|k.r_k| + |k.s_k|` over the stored modes, in floating point.
    pub fn divergence_residual(&self) -> f64 {
        self.modes
            .iter()
            .enumerate()
            .map(|(slot, u)| {
                let k = self.truncation.mode(slot);
                divergence(&k, &vec3::re(u)).abs() + divergence(&k, &vec3::im(u)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Conjugate every coefficient (`s -> -s`).
    pub fn conjugated(&self) -> Self {
        SpectralState {
            truncation: self.truncation.clone(),
            modes: self.modes.iter().map(vec3::conj).collect(),
        }
    }

    /// Raw real coordinates, per slot `[r1, r2, r3, s1, s2, s3]`.
    pub fn to_real(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(6 * self.modes.len());
        for u in &self.modes {
            out.extend(u.iter().map(|c| c.re));
            out.extend(u.iter().map(|c| c.im));
        }
        out
    }

    pub fn from_real(truncation: Arc<Truncation>, x: &[f64]) -> Result<Self> {
        if x.len() != 6 * truncation.dim() {
            return Err(Error::Parse(format!(
                "expected {} real coordinates, got {}",
                6 * truncation.dim(),
                x.len()
            )));
        }
        let modes = x
            .chunks_exact(6)
            .map(|c| vec3::complex(&[c[0], c[1], c[2]], &[c[3], c[4], c[5]]))
            .collect();
        SpectralState::from_modes(truncation, modes)
    }

    /// Coordinates in the orthonormal frames, per slot `[r.e1, r.e2, s.e1, s.e2]`.
    pub fn to_frame(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.modes.len());
        for (slot, u) in self.modes.iter().enumerate() {
            let [e1, e2] = self.truncation.frame(slot);
            let (r, s) = (vec3::re(u), vec3::im(u));
            out.extend([vec3::dot(&r, e1), vec3::dot(&r, e2), vec3::dot(&s, e1), vec3::dot(&s, e2)]);
        }
        out
    }

    pub fn from_frame(truncation: Arc<Truncation>, x: &[f64]) -> Result<Self> {
        if x.len() != 4 * truncation.dim() {
            return Err(Error::Parse(format!(
                "expected {} frame coordinates, got {}",
                4 * truncation.dim(),
                x.len()
            )));
        }
        let modes = x
            .chunks_exact(4)
            .enumerate()
            .map(|(slot, c)| {
                let [e1, e2] = truncation.frame(slot);
                let r = vec3::add(&vec3::scale(c[0], e1), &vec3::scale(c[1], e2));
                let s = vec3::add(&vec3::scale(c[2], e1), &vec3::scale(c[3], e2));
                vec3::complex(&r, &s)
            })
            .collect();
        SpectralState::from_modes(truncation, modes)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in self.csv_rows() {
            out.push_str(&row);
            out.push('\n');
        }
        out
    }

    /// One CSV row per mode, without the header.
    pub fn csv_rows(&self) -> impl Iterator<Item = String> + '_ {
        self.modes.iter().enumerate().map(|(slot, u)| {
            let k = self.truncation.mode(slot);
            format!(
                "{},{},{},{},{},{},{},{},{}",
                k.0[0], k.0[1], k.0[2], u[0].re, u[1].re, u[2].re, u[0].im, u[1].im, u[2].im
            )
        })
    }

    /// Parse the CSV produced by [`SpectralState::to_csv`]. Rows may come in any
    /// order; modes not listed are zero.
    pub fn from_csv(truncation: Arc<Truncation>, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => return Err(Error::Parse(format!("bad header {other:?}"))),
        }
        let mut modes = vec![CZERO; truncation.dim()];
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 9 {
                return Err(Error::Parse(format!("line {}: expected 9 fields", lineno + 2)));
            }
            let int = |s: &str| {
                s.parse::<i32>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
            };
            let flt = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
            };
            let k = ModeIndex([int(fields[0])?, int(fields[1])?, int(fields[2])?]);
            let slot = truncation
                .canonical_slot(k)
                .ok_or(Error::OutsideTruncation(k, truncation.cutoff()))?;
            let r = [flt(fields[3])?, flt(fields[4])?, flt(fields[5])?];
            let s = [flt(fields[6])?, flt(fields[7])?, flt(fields[8])?];
            modes[slot] = vec3::complex(&r, &s);
        }
        SpectralState::from_modes(truncation, modes)
    }

    pub fn to_record(&self) -> StateRecord {
        StateRecord {
            schema_version: STATE_SCHEMA_VERSION,
            cutoff: self.truncation.cutoff(),
            modes: self
                .modes
                .iter()
                .enumerate()
                .map(|(slot, u)| ModeRecord {
                    k: self.truncation.mode(slot),
                    r: vec3::re(u),
                    s: vec3::im(u),
                })
                .collect(),
        }
    }

    pub fn from_record(truncation: Arc<Truncation>, rec: &StateRecord) -> Result<Self> {
        if rec.cutoff != truncation.cutoff() {
            return Err(Error::TruncationMismatch {
                expected: truncation.cutoff(),
                found: rec.cutoff,
            });
        }
        let mut modes = vec![CZERO; truncation.dim()];
        for m in &rec.modes {
            let slot = truncation
                .canonical_slot(m.k)
                .ok_or(Error::OutsideTruncation(m.k, truncation.cutoff()))?;
            modes[slot] = vec3::complex(&m.r, &m.s);
        }
        SpectralState::from_modes(truncation, modes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub k: ModeIndex,
    pub r: Vec3,
    pub s: Vec3,
}

/// JSON form of a [`SpectralState`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub schema_version: u32,
    pub cutoff: u32,
    pub modes: Vec<ModeRecord>,
}
