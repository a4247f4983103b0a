//! Small dense helpers for frames (d ≤ 3 rows of length n).

use crate::scalar::Real;

/// Largest plane dimension supported by the determinant/cofactor routines.
pub const MAX_PLANE_DIM: usize = 3;

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

#[inline]
pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a)
}

#[inline]
pub fn dist2<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        s += d * d;
    }
    s
}

/// `out += s * v`
#[inline]
pub fn axpy<T: Real>(out: &mut [T], s: T, v: &[T]) {
    for (o, x) in out.iter_mut().zip(v) {
        *o += s * *x;
    }
}

/// Determinant of a d×d row-major matrix, d ≤ 3.
pub fn det<T: Real>(m: &[T], d: usize) -> T {
    match d {
        0 => T::one(),
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => panic!("determinant only implemented for d <= {MAX_PLANE_DIM}"),
    }
}

/// Cofactor matrix of a d×d row-major matrix (d ≤ 3): `∂det/∂m[k][l] = cof[k][l]`.
pub fn cofactor<T: Real>(m: &[T], d: usize, out: &mut [T]) {
    match d {
        0 => {}
        1 => out[0] = T::one(),
        2 => {
            out[0] = m[3];
            out[1] = -m[2];
            out[2] = -m[1];
            out[3] = m[0];
        }
        3 => {
            out[0] = m[4] * m[8] - m[5] * m[7];
            out[1] = -(m[3] * m[8] - m[5] * m[6]);
            out[2] = m[3] * m[7] - m[4] * m[6];
            out[3] = -(m[1] * m[8] - m[2] * m[7]);
            out[4] = m[0] * m[8] - m[2] * m[6];
            out[5] = -(m[0] * m[7] - m[1] * m[6]);
            out[6] = m[1] * m[5] - m[2] * m[4];
            out[7] = -(m[0] * m[5] - m[2] * m[3]);
            out[8] = m[0] * m[4] - m[1] * m[3];
        }
        _ => panic!("cofactor only implemented for d <= {MAX_PLANE_DIM}"),
    }
}

/// Cross Gram matrix `G[k][l] = a_k · b_l` of two frames stored as d rows of length n.
pub fn cross_gram<T: Real>(a: &[T], b: &[T], d: usize, n: usize, out: &mut [T]) {
    for k in 0..d {
        for l in 0..d {
            out[k * d + l] = dot(&a[k * n..(k + 1) * n], &b[l * n..(l + 1) * n]);
        }
    }
}

/// Determinant of an n×n row-major matrix by partial-pivot elimination.
pub fn det_general<T: Real>(m: &[T], n: usize) -> T {
    let mut a = m.to_vec();
    let mut det = T::one();
    for c in 0..n {
        let mut p = c;
        for r in c + 1..n {
            if a[r * n + c].abs() > a[p * n + c].abs() {
                p = r;
            }
        }
        if a[p * n + c] == T::zero() {
            return T::zero();
        }
        if p != c {
            for k in 0..n {
                a.swap(c * n + k, p * n + k);
            }
            det = -det;
        }
        let piv = a[c * n + c];
        det *= piv;
        for r in c + 1..n {
            let f = a[r * n + c] / piv;
            for k in c..n {
                let v = a[c * n + k];
                a[r * n + k] -= f * v;
            }
        }
    }
    det
}
