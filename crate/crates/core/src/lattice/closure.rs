//! Determining-set closure: propagate spans of constant vector fields through
//! the double brackets `[[F0, V], W]` until no per-mode subspace grows.

use super::{canonicalize, ModeIndex, Truncation};
use crate::brackets::bracket_span;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Relative residual above which a candidate direction counts as new.
pub const GROWTH_TOLERANCE: f64 = 1e-9;
/// Candidates below this absolute norm are rounding noise of a vanishing bracket.
pub const NOISE_FLOOR: f64 = 1e-10;

/// Subspace of the four-dimensional space of constant fields at one mode,
/// in frame coordinates `[r.e1, r.e2, s.e1, s.e2]` with an orthonormal basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSubspace {
    pub index: ModeIndex,
    pub basis: Vec<[f64; 4]>,
}

impl ModeSubspace {
    pub fn empty(index: ModeIndex) -> Self {
        ModeSubspace { index, basis: Vec::new() }
    }

    pub fn full(index: ModeIndex) -> Self {
        let mut basis = Vec::with_capacity(4);
        for i in 0..4 {
            let mut e = [0.0; 4];
            e[i] = 1.0;
            basis.push(e);
        }
        ModeSubspace { index, basis }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn is_full(&self) -> bool {
        self.basis.len() == 4
    }

    fn residual(&self, v: &[f64; 4]) -> [f64; 4] {
        let mut r = *v;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &self.basis {
                let c: f64 = (0..4).map(|i| r[i] * b[i]).sum();
                for i in 0..4 {
                    r[i] -= c * b[i];
                }
            }
        }
        r
    }

    /// Add `v` to the span if it is not already (numerically) contained.
    pub fn try_add(&mut self, v: &[f64; 4]) -> bool {
        if self.is_full() {
            return false;
        }
        let own = norm4(v);
        if own <= NOISE_FLOOR {
            return false;
        }
        let r = self.residual(v);
        let rn = norm4(&r);
        if rn <= GROWTH_TOLERANCE * own {
            return false;
        }
        self.basis.push(r.map(|x| x / rn));
        true
    }

    /// Orthogonal projector `B B^T` onto the span, row-major 4x4.
    pub fn projector(&self) -> [[f64; 4]; 4] {
        let mut p = [[0.0; 4]; 4];
        for b in &self.basis {
            for i in 0..4 {
                for j in 0..4 {
                    p[i][j] += b[i] * b[j];
                }
            }
        }
        p
    }
}

fn norm4(v: &[f64; 4]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Outcome of [`determining_closure`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClosureResult {
    pub cutoff: u32,
    /// One entry per canonical mode, in storage order.
    pub modes: Vec<ModeSubspace>,
    pub is_determining: bool,
    pub generations: usize,
}

impl ClosureResult {
    pub fn dims(&self) -> BTreeMap<ModeIndex, usize> {
        self.modes.iter().map(|m| (m.index, m.dim())).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.modes.iter().map(ModeSubspace::dim).sum()
    }

    pub fn subspace(&self, k: ModeIndex) -> Option<&ModeSubspace> {
        self.modes.iter().find(|m| m.index == k)
    }

    /// Modes whose subspace is nonzero.
    pub fn support(&self) -> BTreeSet<ModeIndex> {
        self.modes.iter().filter(|m| m.dim() > 0).map(|m| m.index).collect()
    }
}

/// Order in which source pairs are visited within a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairOrder {
    Lexicographic,
    Shuffled(u64),
}

/// Closure of the forced set under double brackets, at cut-off `cutoff`.
pub fn determining_closure(forced: &[ModeIndex], cutoff: u32) -> Result<ClosureResult> {
    determining_closure_with(forced, cutoff, PairOrder::Lexicographic)
}

pub fn determining_closure_with(forced: &[ModeIndex], cutoff: u32, order: PairOrder) -> Result<ClosureResult> {
    let t = Truncation::new(cutoff)?;
    let d = t.dim();
    let mut spaces: Vec<ModeSubspace> = t.canonical().iter().map(|&k| ModeSubspace::empty(k)).collect();
    for &k in forced {
        t.check_member(k)?;
        let (rep, _) = canonicalize(k)?;
        let slot = t.canonical_slot(rep).expect("canonical member");
        spaces[slot] = ModeSubspace::full(rep);
    }

    let mut rng = match order {
        PairOrder::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        PairOrder::Lexicographic => None,
    };
    let mut changed: Vec<bool> = spaces.iter().map(|s| s.dim() > 0).collect();
    let max_sweeps = 4 * d;
    let mut generations = 0;

    loop {
        // pairs touching a subspace that grew in the previous sweep
        let mut pairs = Vec::new();
        for a in 0..d {
            if spaces[a].dim() == 0 {
                continue;
            }
            for b in a + 1..d {
                if spaces[b].dim() > 0 && (changed[a] || changed[b]) {
                    pairs.push((a, b));
                }
            }
        }
        if let Some(rng) = rng.as_mut() {
            pairs.shuffle(rng);
        }

        let snapshot = spaces.clone();
        let mut grew = vec![false; d];
        for (a, b) in pairs {
            let (m, n) = (t.mode(a), t.mode(b));
            let targets = [m + n, n - m, m - n];
            let all_full = targets.iter().all(|&x| match t.canonical_slot(x) {
                Some(s) => spaces[s].is_full(),
                None => true,
            });
            if all_full {
                continue;
            }
            for (target, span) in bracket_span(&t, m, n, &snapshot[a], &snapshot[b]) {
                let slot = t.canonical_slot(target).expect("bracket targets are canonical");
                for v in &span.basis {
                    if spaces[slot].try_add(v) {
                        grew[slot] = true;
                    }
                }
            }
        }
        generations += 1;
        if !grew.iter().any(|&g| g) {
            break;
        }
        if generations >= max_sweeps {
            return Err(Error::ClosureDiverged(max_sweeps));
        }
        changed = grew;
    }

    let is_determining = spaces.iter().all(ModeSubspace::is_full);
    Ok(ClosureResult { cutoff, modes: spaces, is_determining, generations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growth_test_rejects_dependent_vectors() {
        let mut s = ModeSubspace::empty(ModeIndex::new(1, 0, 0));
        assert!(s.try_add(&[1.0, 1.0, 0.0, 0.0]));
        assert!(!s.try_add(&[2.0, 2.0, 0.0, 0.0]));
        assert!(!s.try_add(&[1e-12, 0.0, 0.0, 0.0]));
        assert!(s.try_add(&[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(s.dim(), 2);
    }

    #[test]
    fn rejects_forced_outside_truncation() {
        let err = determining_closure(&[ModeIndex::new(5, 0, 0)], 1).unwrap_err();
        assert_eq!(err, Error::OutsideTruncation(ModeIndex::new(5, 0, 0), 1));
    }

    #[test]
    fn negative_forced_index_is_canonicalized() {
        let r = determining_closure(&[ModeIndex::new(-1, 0, 0)], 1).unwrap();
        assert_eq!(r.subspace(ModeIndex::new(1, 0, 0)).unwrap().dim(), 4);
    }
}
