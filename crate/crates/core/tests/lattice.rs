use galerkin_core::lattice::{
    canonicalize, determining_closure, determining_closure_with, is_generator_set, ModeIndex, PairOrder, Truncation,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const E1: ModeIndex = ModeIndex::new(1, 0, 0);
const E2: ModeIndex = ModeIndex::new(0, 1, 0);
const E3: ModeIndex = ModeIndex::new(0, 0, 1);

fn is_odd(k: &ModeIndex) -> bool {
    k.0.iter().any(|c| c % 2 != 0)
}

#[test]
fn unit_vectors_are_determining_at_small_cutoffs() {
    for (n, rank) in [(1, 52), (2, 248)] {
        let r = determining_closure(&[E1, E2, E3], n).unwrap();
        assert!(r.is_determining, "N = {n}");
        assert_eq!(r.total_dim(), rank);
    }
}

#[test]
fn single_mode_closure_stays_put() {
    let r = determining_closure(&[E1], 1).unwrap();
    assert!(!r.is_determining);
    assert_eq!(r.support().into_iter().collect::<Vec<_>>(), vec![E1]);
    assert_eq!(r.total_dim(), 4);
}

#[test]
fn even_forcing_never_reaches_odd_modes() {
    let even = [ModeIndex::new(2, 0, 0), ModeIndex::new(0, 2, 0), ModeIndex::new(0, 0, 2)];
    let r = determining_closure(&even, 2).unwrap();
    assert!(!r.is_determining);
    for m in &r.modes {
        if is_odd(&m.index) {
            assert_eq!(m.dim(), 0, "{:?}", m.index);
        } else {
            assert_eq!(m.dim(), 4, "{:?}", m.index);
        }
    }
}

#[test]
fn pair_order_does_not_change_the_fixpoint() {
    let forced = [E1, ModeIndex::new(1, 1, 0), ModeIndex::new(0, 1, 2)];
    let reference = determining_closure(&forced, 2).unwrap();
    for seed in 0..3 {
        let shuffled = determining_closure_with(&forced, 2, PairOrder::Shuffled(seed)).unwrap();
        assert_eq!(shuffled.is_determining, reference.is_determining);
        for (a, b) in reference.modes.iter().zip(&shuffled.modes) {
            assert_eq!(a.dim(), b.dim());
            let (pa, pb) = (a.projector(), b.projector());
            for i in 0..4 {
                for j in 0..4 {
                    assert!((pa[i][j] - pb[i][j]).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn closure_is_monotone_in_the_forced_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let t = Truncation::new(2).unwrap();
    for _ in 0..5 {
        let small: Vec<ModeIndex> = (0..2).map(|_| t.mode(rng.gen_range(0..t.dim()))).collect();
        let mut large = small.clone();
        large.push(t.mode(rng.gen_range(0..t.dim())));
        let a = determining_closure(&small, 2).unwrap();
        let b = determining_closure(&large, 2).unwrap();
        for (x, y) in a.modes.iter().zip(&b.modes) {
            assert!(x.dim() <= y.dim(), "{:?}: {} > {}", x.index, x.dim(), y.dim());
        }
    }
}

#[test]
fn determining_sets_generate_the_lattice() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut determining = 0;
    for n in [1u32, 2] {
        let t = Truncation::new(n).unwrap();
        for _ in 0..15 {
            let size = rng.gen_range(2..=4);
            let forced: Vec<ModeIndex> = (0..size).map(|_| t.mode(rng.gen_range(0..t.dim()))).collect();
            let r = determining_closure(&forced, n).unwrap();
            if r.is_determining {
                determining += 1;
                assert!(is_generator_set(&forced), "{forced:?}");
            }
        }
    }
    assert!(determining > 0);
}

#[test]
fn determining_at_one_cutoff_stays_determining_above() {
    for n in 1..=3 {
        assert!(determining_closure(&[E1, E2, E3], n).unwrap().is_determining);
    }
}

#[test]
fn closure_report_serializes() {
    let r = determining_closure(&[E1, E2], 1).unwrap();
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["is_determining"], serde_json::Value::Bool(r.is_determining));
    assert_eq!(json["modes"].as_array().unwrap().len(), 13);
}

proptest! {
    #[test]
    fn canonicalize_picks_exactly_one_of_a_pair(k in prop::array::uniform3(-4i32..=4)) {
        let k = ModeIndex(k);
        prop_assume!(!k.is_zero());
        let (rep, flipped) = canonicalize(k).unwrap();
        prop_assert!(rep.is_canonical());
        prop_assert_eq!(rep, if flipped { -k } else { k });
        prop_assert_eq!(canonicalize(-k).unwrap().0, rep);
        prop_assert!(k.is_canonical() != (-k).is_canonical());
    }

    #[test]
    fn generator_test_is_invariant_under_row_operations(
        rows in prop::collection::vec(prop::array::uniform3(-3i32..=3), 3..5),
        c in -3i32..=3,
    ) {
        let a: Vec<ModeIndex> = rows.into_iter().map(ModeIndex).collect();
        let mut b = a.clone();
        // adding a multiple of one row to another keeps the generated lattice
        b[0] = b[0] + ModeIndex([c * a[1].0[0], c * a[1].0[1], c * a[1].0[2]]);
        b.swap(1, 2);
        prop_assert_eq!(is_generator_set(&a), is_generator_set(&b));
    }
}
