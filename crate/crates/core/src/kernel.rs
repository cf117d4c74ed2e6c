//! Low-level helpers shared by the kernel sums: max-shifted log-sum-exp,
//! triangular whitening and squared distances on flat row-major buffers.

/// `ln(2π)`
pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log of the sum of exponentials, shifted by the maximum. Summation runs in
/// slice order so the result does not depend on how the terms were produced.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Multiplies `x` by a lower-triangular matrix stored row-major (`d x d`).
#[inline]
pub(crate) fn lower_mul(tri: &[f64], d: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..d {
        let row = &tri[r * d..r * d + r + 1];
        out[r] = row.iter().zip(&x[..=r]).map(|(a, b)| a * b).sum();
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Applies `tri` to every row of `rows` (row width `stride`), picking the
/// columns listed in `cols`. Returns a flat buffer of width `cols.len()`.
pub(crate) fn whiten_rows(rows: &[f64], stride: usize, cols: &[usize], tri: &[f64]) -> Vec<f64> {
    let d = cols.len();
    let m = rows.len() / stride;
    let mut out = vec![0.0; m * d];
    let mut picked = vec![0.0; d];
    for i in 0..m {
        let row = &rows[i * stride..(i + 1) * stride];
        for (slot, &c) in picked.iter_mut().zip(cols) {
            *slot = row[c];
        }
        lower_mul(tri, d, &picked, &mut out[i * d..(i + 1) * d]);
    }
    out
}
