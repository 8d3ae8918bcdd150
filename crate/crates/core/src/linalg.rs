//! Small dense kernels for the K x K row solves.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a += w * v v^T` for row-major `a` of size `v.len()` squared.
pub(crate) fn add_outer(a: &mut [f64], v: &[f64], w: f64) {
    let k = v.len();
    for (p, &vp) in v.iter().enumerate() {
        let s = w * vp;
        for (q, &vq) in v.iter().enumerate() {
            a[p * k + q] += s * vq;
        }
    }
}

/// `y += w * x`
pub(crate) fn axpy(y: &mut [f64], x: &[f64], w: f64) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += w * xi;
    }
}

pub(crate) fn add_diagonal(a: &mut [f64], k: usize, d: f64) {
    for p in 0..k {
        a[p * k + p] += d;
    }
}

/// Solves `a x = b` for symmetric positive definite `a` by Cholesky.
/// `a` is overwritten with its factor and `b` with the solution. Returns
/// `false` if a pivot is not safely positive.
pub(crate) fn cholesky_solve(a: &mut [f64], b: &mut [f64], k: usize) -> bool {
    let scale = (0..k).map(|p| a[p * k + p].abs()).fold(0.0, f64::max);
    let floor = f64::EPSILON * k as f64 * scale;
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= a[j * k + p] * a[j * k + p];
        }
        if !d.is_finite() || d <= floor {
            return false;
        }
        let d = libm::sqrt(d);
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = s / d;
        }
    }
    // L z = b
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= a[i * k + p] * b[p];
        }
        b[i] = s / a[i * k + i];
    }
    // L^T x = z
    for i in (0..k).rev() {
        let mut s = b[i];
        for p in i + 1..k {
            s -= a[p * k + i] * b[p];
        }
        b[i] = s / a[i * k + i];
    }
    true
}
