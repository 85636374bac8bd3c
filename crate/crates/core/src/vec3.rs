//! Small helpers for real and complex 3-vectors stored as arrays.

use num_complex::Complex64;

pub type Vec3 = [f64; 3];
pub type CVec3 = [Complex64; 3];

pub const ZERO: Vec3 = [0.0; 3];
pub const CZERO: CVec3 = [Complex64 { re: 0.0, im: 0.0 }; 3];

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(s: f64, a: &Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

#[inline]
pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn cdot_real(k: &Vec3, u: &CVec3) -> Complex64 {
    u[0] * k[0] + u[1] * k[1] + u[2] * k[2]
}

#[inline]
pub fn conj(u: &CVec3) -> CVec3 {
    [u[0].conj(), u[1].conj(), u[2].conj()]
}

#[inline]
pub fn re(u: &CVec3) -> Vec3 {
    [u[0].re, u[1].re, u[2].re]
}

#[inline]
pub fn im(u: &CVec3) -> Vec3 {
    [u[0].im, u[1].im, u[2].im]
}

#[inline]
pub fn complex(r: &Vec3, s: &Vec3) -> CVec3 {
    [
        Complex64::new(r[0], s[0]),
        Complex64::new(r[1], s[1]),
        Complex64::new(r[2], s[2]),
    ]
}

#[inline]
pub fn cnorm_sqr(u: &CVec3) -> f64 {
    u.iter().map(|c| c.norm_sqr()).sum()
}

pub fn mat_vec(m: &[[f64; 3]; 3], v: &Vec3) -> Vec3 {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}
