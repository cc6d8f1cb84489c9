//! Minimal fixed-size vector helpers for particle positions.

pub type Vec3 = [f64; 3];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Wraps every component into `[-len/2, len/2)`.
#[inline]
pub fn wrap_periodic(a: Vec3, len: f64) -> Vec3 {
    let w = |v: f64| {
        let r = v - len * (v / len + 0.5).floor();
        // rounding can land exactly on +len/2
        if r >= 0.5 * len {
            r - len
        } else {
            r
        }
    };
    [w(a[0]), w(a[1]), w(a[2])]
}
