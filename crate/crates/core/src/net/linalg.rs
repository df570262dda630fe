//! Small dense kernels. Accumulation order is fixed so results are reproducible.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// y += alpha * x
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// out = M v for row-major `m` with `out.len()` rows.
#[inline]
pub fn matvec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o = dot(row, v);
    }
}

/// out += M^T v for row-major `m` with `v.len()` rows.
#[inline]
pub fn matvec_t_acc(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (vi, row) in v.iter().zip(m.chunks_exact(cols)) {
        if *vi != 0.0 {
            axpy(*vi, row, out);
        }
    }
}

/// M += u v^T for row-major `m` with `u.len()` rows.
#[inline]
pub fn outer_acc(u: &[f64], v: &[f64], m: &mut [f64]) {
    let cols = v.len();
    for (ui, row) in u.iter().zip(m.chunks_exact_mut(cols)) {
        if *ui != 0.0 {
            axpy(*ui, v, row);
        }
    }
}
