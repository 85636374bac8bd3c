use galerkin_core::brackets::{bracket_span, double_bracket, double_bracket_oracle, TangentField};
use galerkin_core::lattice::{ModeIndex, ModeSubspace, Truncation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn trunc(n: u32) -> Arc<Truncation> {
    Arc::new(Truncation::new(n).unwrap())
}

fn random_single(t: &Truncation, rng: &mut ChaCha8Rng, k: ModeIndex) -> TangentField {
    let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    TangentField::from_frame(t, k, &c)
}

fn random_mode(t: &Truncation, rng: &mut ChaCha8Rng) -> ModeIndex {
    t.mode(rng.gen_range(0..t.dim()))
}

#[test]
fn closed_form_matches_oracle_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for n in [1, 2] {
        let t = trunc(n);
        for _ in 0..300 {
            let (m, k) = (random_mode(&t, &mut rng), random_mode(&t, &mut rng));
            let v = random_single(&t, &mut rng, m);
            let w = random_single(&t, &mut rng, k);
            let closed = double_bracket(&t, &v, &w).unwrap();
            let oracle = double_bracket_oracle(&t, &v, &w);
            assert!(closed.max_abs_diff(&oracle) <= 1e-10, "{}\n{}", closed.to_json(), oracle.to_json());
        }
    }
}

#[test]
fn collinear_pairs_vanish() {
    let t = trunc(2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for &m in t.canonical() {
        for &n in t.canonical() {
            let cross = [
                m.0[1] * n.0[2] - m.0[2] * n.0[1],
                m.0[2] * n.0[0] - m.0[0] * n.0[2],
                m.0[0] * n.0[1] - m.0[1] * n.0[0],
            ];
            if cross != [0, 0, 0] {
                continue;
            }
            checked += 1;
            let (v, w) = (random_single(&t, &mut rng, m), random_single(&t, &mut rng, n));
            let z = double_bracket(&t, &v, &w).unwrap();
            assert!(z.is_zero(), "{m:?} {n:?}: {}", z.to_json());
        }
    }
    assert!(checked > t.dim());
}

#[test]
fn polarization_identity() {
    let t = trunc(2);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let (m, n) = (random_mode(&t, &mut rng), random_mode(&t, &mut rng));
        if m == n {
            continue;
        }
        let v = random_single(&t, &mut rng, m);
        let w = random_single(&t, &mut rng, n);
        let lhs = double_bracket(&t, &v, &w).unwrap();
        let sum = v.add(&w);
        let rhs = double_bracket_oracle(&t, &sum, &sum).scaled(0.5);
        let scale = lhs.max_abs().max(rhs.max_abs()).max(1e-300);
        assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * scale.max(1.0));
    }
}

#[test]
fn sign_combinations_isolate_one_block() {
    // [[F0,V^r],W^s] + [[F0,V^s],W^r] is pure d/dr at m + n, and
    // [[F0,V^r],W^r] - [[F0,V^s],W^s] is pure d/ds there
    let t = trunc(2);
    let m = ModeIndex::new(1, 0, 0);
    let n = ModeIndex::new(0, 1, 1);
    let (v, w) = ([0.0, 0.3, -0.7], [0.5, 0.2, -0.2]);
    let z = [0.0; 3];
    let b = |a: TangentField, c: TangentField| double_bracket(&t, &a, &c).unwrap();
    let mixed = b(TangentField::single(m, v, z), TangentField::single(n, z, w))
        .add(&b(TangentField::single(m, z, v), TangentField::single(n, w, z)));
    let same = b(TangentField::single(m, v, z), TangentField::single(n, w, z))
        .add(&b(TangentField::single(m, z, v), TangentField::single(n, z, w)).scaled(-1.0));
    let (r, s) = mixed.components[&(m + n)];
    assert!(s.iter().all(|x| x.abs() < 1e-15) && r.iter().any(|x| x.abs() > 1e-3));
    let (r, s) = same.components[&(m + n)];
    assert!(r.iter().all(|x| x.abs() < 1e-15) && s.iter().any(|x| x.abs() > 1e-3));
}

#[test]
fn unit_chain_reaches_the_diagonal_mode() {
    let t = trunc(1);
    let (e1, e2, e3) = (ModeIndex::new(1, 0, 0), ModeIndex::new(0, 1, 0), ModeIndex::new(0, 0, 1));
    let first = bracket_span(&t, e1, e2, &ModeSubspace::full(e1), &ModeSubspace::full(e2));
    let diag = ModeIndex::new(1, 1, 0);
    let two_dim = first[&diag].clone();
    assert_eq!(two_dim.dim(), 2);
    let second = bracket_span(&t, diag, e3, &two_dim, &ModeSubspace::full(e3));
    assert_eq!(second[&ModeIndex::new(1, 1, 1)].dim(), 4);
}

#[test]
fn unequal_norms_give_full_target() {
    let t = trunc(2);
    let (m, n) = (ModeIndex::new(1, 0, 0), ModeIndex::new(0, 1, 1));
    let span = bracket_span(&t, m, n, &ModeSubspace::full(m), &ModeSubspace::full(n));
    assert_eq!(span[&(m + n)].dim(), 4);
}

#[test]
fn field_dump_is_json() {
    let f = TangentField::single(ModeIndex::new(0, 0, 1), [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]);
    let v: serde_json::Value = serde_json::from_str(&f.to_json()).unwrap();
    assert_eq!(v[0]["k"], serde_json::json!([0, 0, 1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bilinear_and_divergence_free(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let t = trunc(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = (random_mode(&t, &mut rng), random_mode(&t, &mut rng));
        let (v1, v2) = (random_single(&t, &mut rng, m), random_single(&t, &mut rng, m));
        let w = random_single(&t, &mut rng, n);
        let combo = v1.scaled(a).add(&v2.scaled(b));
        let lhs = double_bracket(&t, &combo, &w).unwrap();
        let rhs = double_bracket(&t, &v1, &w).unwrap().scaled(a).add(&double_bracket(&t, &v2, &w).unwrap().scaled(b));
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * (1.0 + lhs.max_abs()));
        for (k, (r, s)) in &lhs.components {
            let kf = k.as_f64();
            prop_assert_eq!(r.iter().zip(&kf).map(|(x, y)| x * y).sum::<f64>(), 0.0);
            prop_assert_eq!(s.iter().zip(&kf).map(|(x, y)| x * y).sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn oracle_is_symmetric(seed in any::<u64>()) {
        let t = trunc(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = (random_mode(&t, &mut rng), random_mode(&t, &mut rng));
        let v = random_single(&t, &mut rng, m);
        let w = random_single(&t, &mut rng, n).add(&v);
        let a = double_bracket_oracle(&t, &v, &w);
        let b = double_bracket_oracle(&t, &w, &v);
        prop_assert!(a.max_abs_diff(&b) <= 1e-13 * (1.0 + a.max_abs()));
    }
}
