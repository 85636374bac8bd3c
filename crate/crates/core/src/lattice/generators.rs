use super::ModeIndex;

fn det3(a: &ModeIndex, b: &ModeIndex, c: &ModeIndex) -> i64 {
    let [a1, a2, a3] = a.0.map(i64::from);
    let [b1, b2, b3] = b.0.map(i64::from);
    let [c1, c2, c3] = c.0.map(i64::from);
    a1 * (b2 * c3 - b3 * c2) - a2 * (b1 * c3 - b3 * c1) + a3 * (b1 * c2 - b2 * c1)
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// gcd of all order-3 minors of the matrix whose rows are `indices`.
/// Zero when there are fewer than three rows or every minor vanishes.
pub fn minors_gcd(indices: &[ModeIndex]) -> i64 {
    let n = indices.len();
    let mut g = 0;
    for i in 0..n {
        for j in i + 1..n {
            for l in j + 1..n {
                g = gcd(g, det3(&indices[i], &indices[j], &indices[l]));
                if g == 1 {
                    return 1;
                }
            }
        }
    }
    g
}

/// Whether the rows generate the group `(Z^3, +)`: the gcd of the 3x3 minors is 1.
pub fn is_generator_set(indices: &[ModeIndex]) -> bool {
    minors_gcd(indices) == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(k: [i32; 3]) -> ModeIndex {
        ModeIndex(k)
    }

    #[test]
    fn unit_vectors_generate() {
        assert!(is_generator_set(&[m([1, 0, 0]), m([0, 1, 0]), m([0, 0, 1])]));
    }

    #[test]
    fn scaled_axis_does_not() {
        assert!(!is_generator_set(&[m([2, 0, 0]), m([0, 1, 0]), m([0, 0, 1])]));
        assert_eq!(minors_gcd(&[m([2, 0, 0]), m([0, 1, 0]), m([0, 0, 1])]), 2);
    }

    #[test]
    fn four_rows_with_coprime_minors() {
        // minors: det(r1,r2,r3) = 2, det(r1,r2,r4) = 1, ...
        let rows = [m([1, 1, 0]), m([0, 1, 1]), m([1, 0, 1]), m([1, 1, 1])];
        assert_eq!(det3(&rows[0], &rows[1], &rows[2]), 2);
        assert_eq!(det3(&rows[0], &rows[1], &rows[3]).abs(), 1);
        assert!(is_generator_set(&rows));
    }

    #[test]
    fn too_few_rows() {
        assert!(!is_generator_set(&[m([1, 0, 0]), m([0, 1, 0])]));
        assert_eq!(minors_gcd(&[m([1, 0, 0])]), 0);
    }

    #[test]
    fn coplanar_rows() {
        assert!(!is_generator_set(&[m([1, 0, 0]), m([0, 1, 0]), m([1, 1, 0]), m([2, 3, 0])]));
    }
}
