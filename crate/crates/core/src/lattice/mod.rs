//! Integer-lattice bookkeeping for the Galerkin truncation.
//!
//! The truncation keeps the wavenumbers `k != 0` with `|k|_inf <= N`. Because
//! the velocity is real, `u_{-k} = conj(u_k)`, so only one representative of
//! each pair `{k, -k}` is stored: the canonical half picks `k3 > 0`, or
//! `k3 = 0, k2 > 0`, or `k3 = k2 = 0, k1 > 0`.

mod closure;
mod generators;

pub use closure::{determining_closure, determining_closure_with, ClosureResult, ModeSubspace, PairOrder};
pub use generators::{is_generator_set, minors_gcd};

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};
use serde::{Deserialize, Serialize};
use std::fmt;

/// A wavenumber on the integer lattice `Z^3`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeIndex(pub [i32; 3]);

impl ModeIndex {
    pub const fn new(k1: i32, k2: i32, k3: i32) -> Self {
        ModeIndex([k1, k2, k3])
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0, 0, 0]
    }

    pub fn sup_norm(&self) -> u32 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn norm_sqr(&self) -> i64 {
        self.0.iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    pub fn as_f64(&self) -> Vec3 {
        [self.0[0] as f64, self.0[1] as f64, self.0[2] as f64]
    }

    /// True when `self` lies in the canonical half of the lattice.
    pub fn is_canonical(&self) -> bool {
        let [k1, k2, k3] = self.0;
        k3 > 0 || (k3 == 0 && k2 > 0) || (k3 == 0 && k2 == 0 && k1 > 0)
    }

    pub fn dot(&self, other: &ModeIndex) -> i64 {
        (0..3).map(|i| self.0[i] as i64 * other.0[i] as i64).sum()
    }
}

impl std::ops::Add for ModeIndex {
    type Output = ModeIndex;
    fn add(self, o: ModeIndex) -> ModeIndex {
        ModeIndex([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl std::ops::Sub for ModeIndex {
    type Output = ModeIndex;
    fn sub(self, o: ModeIndex) -> ModeIndex {
        ModeIndex([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl std::ops::Neg for ModeIndex {
    type Output = ModeIndex;
    fn neg(self) -> ModeIndex {
        ModeIndex([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl fmt::Debug for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Map `k` to its canonical representative. `flipped` is true when the
/// representative is `-k`, in which case `u_k = conj(u_rep)`.
pub fn canonicalize(k: ModeIndex) -> Result<(ModeIndex, bool)> {
    if k.is_zero() {
        return Err(Error::ZeroMode);
    }
    if k.is_canonical() {
        Ok((k, false))
    } else {
        Ok((-k, true))
    }
}

/// Position of a mode of `K_N` in canonical storage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeRef {
    pub slot: usize,
    pub conj: bool,
}

/// Ordered pair `(h, l)` of `K_N` members with `h + l = k`.
#[derive(Clone, Copy, Debug)]
pub struct ConvolutionPair {
    pub h: ModeRef,
    pub l: ModeRef,
}

/// The cut-off sets `K_N` and the canonical half, plus lookup tables shared by
/// the drift, bracket and Jacobian kernels.
#[derive(Clone, Debug)]
pub struct Truncation {
    cutoff: u32,
    canonical: Vec<ModeIndex>,
    full: Vec<ModeIndex>,
    grid: Vec<Option<ModeRef>>,
    pairs: Vec<Vec<ConvolutionPair>>,
    wavevectors: Vec<Vec3>,
    frames: Vec<[Vec3; 2]>,
}

impl Truncation {
    pub fn new(cutoff: u32) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::ZeroCutoff(cutoff));
        }
        let n = cutoff as i32;
        let mut full = Vec::new();
        for k1 in -n..=n {
            for k2 in -n..=n {
                for k3 in -n..=n {
                    let k = ModeIndex::new(k1, k2, k3);
                    if !k.is_zero() {
                        full.push(k);
                    }
                }
            }
        }
        full.sort();
        let canonical: Vec<ModeIndex> = full.iter().copied().filter(ModeIndex::is_canonical).collect();

        let side = (2 * cutoff + 1) as usize;
        let mut grid = vec![None; side * side * side];
        for (slot, k) in canonical.iter().enumerate() {
            grid[grid_index(*k, cutoff)] = Some(ModeRef { slot, conj: false });
            grid[grid_index(-*k, cutoff)] = Some(ModeRef { slot, conj: true });
        }

        let mut t = Truncation {
            cutoff,
            wavevectors: canonical.iter().map(ModeIndex::as_f64).collect(),
            frames: canonical.iter().map(|&k| frame(k)).collect(),
            canonical,
            full,
            grid,
            pairs: Vec::new(),
        };
        t.pairs = t
            .canonical
            .iter()
            .map(|&k| {
                t.full
                    .iter()
                    .filter_map(|&h| {
                        let l = t.lookup(k - h)?;
                        Some(ConvolutionPair { h: t.lookup(h)?, l })
                    })
                    .collect()
            })
            .collect();
        Ok(t)
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    /// Canonical half, sorted lexicographically. Storage order of every state.
    pub fn canonical(&self) -> &[ModeIndex] {
        &self.canonical
    }

    /// All of `K_N`, sorted lexicographically.
    pub fn full(&self) -> &[ModeIndex] {
        &self.full
    }

    /// Number of canonical modes, `((2N+1)^3 - 1) / 2`.
    pub fn dim(&self) -> usize {
        self.canonical.len()
    }

    pub fn contains(&self, k: ModeIndex) -> bool {
        !k.is_zero() && k.sup_norm() <= self.cutoff
    }

    pub fn lookup(&self, k: ModeIndex) -> Option<ModeRef> {
        if !self.contains(k) {
            return None;
        }
        self.grid[grid_index(k, self.cutoff)]
    }

    /// Slot of a canonical member, `None` for `-K~` or out-of-range indices.
    pub fn canonical_slot(&self, k: ModeIndex) -> Option<usize> {
        self.lookup(k).filter(|r| !r.conj).map(|r| r.slot)
    }

    pub fn mode(&self, slot: usize) -> ModeIndex {
        self.canonical[slot]
    }

    pub fn wavevector(&self, slot: usize) -> &Vec3 {
        &self.wavevectors[slot]
    }

    /// Orthonormal frame of the plane orthogonal to the mode in `slot`.
    pub fn frame(&self, slot: usize) -> &[Vec3; 2] {
        &self.frames[slot]
    }

    /// Ordered pairs `(h, l)` in `K_N` with `h + l = k` for the canonical mode in `slot`.
    pub fn convolution_pairs(&self, slot: usize) -> &[ConvolutionPair] {
        &self.pairs[slot]
    }

    pub fn check_member(&self, k: ModeIndex) -> Result<()> {
        if self.contains(k) {
            Ok(())
        } else {
            Err(Error::OutsideTruncation(k, self.cutoff))
        }
    }
}

fn grid_index(k: ModeIndex, cutoff: u32) -> usize {
    let n = cutoff as i32;
    let side = 2 * n + 1;
    (((k.0[0] + n) * side + (k.0[1] + n)) * side + (k.0[2] + n)) as usize
}

/// Orthonormal frame `(e1, e2)` of the plane orthogonal to `k`.
///
/// Standard basis vectors are taken in order of increasing `|k_j|` (ties by
/// index) and Gram-Schmidt orthogonalized against `k` and each other.
pub fn frame(k: ModeIndex) -> [Vec3; 2] {
    let kf = k.as_f64();
    let khat = vec3::scale(1.0 / vec3::norm(&kf), &kf);
    let mut order = [0usize, 1, 2];
    order.sort_by_key(|&j| (k.0[j].unsigned_abs(), j));
    let mut basis: Vec<Vec3> = Vec::with_capacity(2);
    for &j in &order {
        let mut v = [0.0; 3];
        v[j] = 1.0;
        v = vec3::sub(&v, &vec3::scale(vec3::dot(&v, &khat), &khat));
        for b in &basis {
            v = vec3::sub(&v, &vec3::scale(vec3::dot(&v, b), b));
        }
        let len = vec3::norm(&v);
        if len > 1e-8 {
            basis.push(vec3::scale(1.0 / len, &v));
        }
        if basis.len() == 2 {
            break;
        }
    }
    [basis[0], basis[1]]
}
