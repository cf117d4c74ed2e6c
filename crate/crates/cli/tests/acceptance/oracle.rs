//! Brute-force reference computations written directly from the textbook
//! formulas: explicit matrix inverses and determinants, refits with a row
//! removed, and numerical quadrature instead of closed forms.

use std::f64::consts::PI;

use kdecorrect::BandwidthSpec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn covariance(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let m = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / m as f64).collect();
    DMatrix::from_fn(d, d, |a, b| {
        rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (m - 1) as f64
    })
}

/// `h^2 K` for scalar factors; `sum_k h_k^2 l_k q_k q_k^T` over eigenpairs in
/// ascending eigenvalue order for selective ones.
pub fn bandwidth(rows: &[Vec<f64>], spec: &BandwidthSpec) -> DMatrix<f64> {
    let k = covariance(rows);
    let d = k.nrows();
    let hs = spec.factor().components(d);
    if !spec.method().is_selective() {
        return &k * (hs[0] * hs[0]);
    }
    let eig = SymmetricEigen::new(k);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut h = DMatrix::zeros(d, d);
    for (pos, &src) in idx.iter().enumerate() {
        let q: DVector<f64> = eig.eigenvectors.column(src).into_owned();
        h += &q * q.transpose() * (hs[pos] * hs[pos] * eig.eigenvalues[src]);
    }
    h
}

/// Multivariate normal density with covariance `s`.
pub fn gauss(delta: &[f64], s: &DMatrix<f64>) -> f64 {
    let d = delta.len();
    let inv = s.clone().try_inverse().expect("invertible");
    let v = DVector::from_column_slice(delta);
    let q = (v.transpose() * inv * &v)[(0, 0)];
    (-0.5 * q).exp() / ((2.0 * PI).powi(d as i32) * s.determinant()).sqrt()
}

pub struct Oracle {
    pub rows: Vec<Vec<f64>>,
    pub h: DMatrix<f64>,
    pub lambdas: Vec<f64>,
    h_inv: DMatrix<f64>,
    h_det: f64,
}

impl Oracle {
    pub fn new(rows: &[Vec<f64>], spec: &BandwidthSpec) -> Self {
        let h = bandwidth(rows, spec);
        let m = rows.len();
        let lambdas = match spec.alpha() {
            None => vec![1.0; m],
            Some(alpha) => {
                let pilot: Vec<f64> = rows
                    .iter()
                    .map(|xi| {
                        rows.iter().map(|xj| gauss(&diff(xi, xj), &h)).sum::<f64>() / m as f64
                    })
                    .collect();
                let g = (pilot.iter().map(|p| p.ln()).sum::<f64>() / m as f64).exp();
                pilot.iter().map(|p| (p / g).powf(-alpha)).collect()
            }
        };
        let h_inv = h.clone().try_inverse().expect("invertible");
        let h_det = h.determinant();
        Self { rows: rows.to_vec(), h, lambdas, h_inv, h_det }
    }

    fn dims(&self) -> usize {
        self.h.nrows()
    }

    fn kernel(&self, j: usize, x: &[f64]) -> f64 {
        let d = self.dims();
        let l2 = self.lambdas[j] * self.lambdas[j];
        let v = DVector::from_column_slice(&diff(x, &self.rows[j]));
        let q = (v.transpose() * &self.h_inv * &v)[(0, 0)] / l2;
        (-0.5 * q).exp() / ((2.0 * PI).powi(d as i32) * l2.powi(d as i32) * self.h_det).sqrt()
    }

    /// KDE over every row except `skip`, normalized by the rows kept.
    pub fn density_without(&self, x: &[f64], skip: Option<usize>) -> f64 {
        let kept: Vec<usize> = (0..self.rows.len()).filter(|&j| Some(j) != skip).collect();
        kept.iter().map(|&j| self.kernel(j, x)).sum::<f64>() / kept.len() as f64
    }

    pub fn loo(&self, i: usize) -> f64 {
        self.density_without(&self.rows[i], Some(i))
    }

    /// `int f^2` by a midpoint rule in coordinates where `H` is the identity.
    pub fn squared_integral_grid(&self) -> f64 {
        let d = self.dims();
        let m = self.rows.len();
        let chol = self.h.clone().cholesky().expect("positive definite");
        let l = chol.l();
        let l_inv = l.clone().try_inverse().unwrap();
        let us: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| (&l_inv * DVector::from_column_slice(r)).iter().copied().collect())
            .collect();
        let lmin = self.lambdas.iter().copied().fold(f64::INFINITY, f64::min);
        let lmax = self.lambdas.iter().copied().fold(0.0, f64::max);
        let step = 0.6 * lmin;
        let lo: Vec<f64> = (0..d).map(|k| us.iter().map(|u| u[k]).fold(f64::INFINITY, f64::min) - 8.0 * lmax).collect();
        let hi: Vec<f64> = (0..d).map(|k| us.iter().map(|u| u[k]).fold(f64::NEG_INFINITY, f64::max) + 8.0 * lmax).collect();
        let n: Vec<usize> = (0..d).map(|k| ((hi[k] - lo[k]) / step).ceil() as usize).collect();
        let norms: Vec<f64> = self
            .lambdas
            .iter()
            .map(|lj| 1.0 / ((2.0 * PI).powi(d as i32) * lj.powi(2 * d as i32)).sqrt())
            .collect();
        let total: usize = n.iter().product();
        let mut idx = vec![0usize; d];
        let mut u = vec![0.0; d];
        let mut acc = 0.0;
        for _ in 0..total {
            for k in 0..d {
                u[k] = lo[k] + (idx[k] as f64 + 0.5) * step;
            }
            let mut f = 0.0;
            for j in 0..m {
                let r2: f64 = (0..d).map(|k| (u[k] - us[j][k]).powi(2)).sum();
                let lj = self.lambdas[j];
                f += norms[j] * (-0.5 * r2 / (lj * lj)).exp();
            }
            f /= m as f64;
            acc += f * f;
            for k in 0..d {
                idx[k] += 1;
                if idx[k] < n[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        // Back to data coordinates: dx = |L| du and f_x = f_u / |L|.
        acc * step.powi(d as i32) / self.h_det.sqrt()
    }

    pub fn lscv(&self) -> f64 {
        let m = self.rows.len();
        let loo: f64 = (0..m).map(|i| self.loo(i)).sum::<f64>() / m as f64;
        self.squared_integral_grid() - 2.0 * loo
    }

    /// Joint density along the output axis at fixed inputs, sampled on a
    /// grid fine enough for every kernel. Returns `(ys, f(x, y))`.
    pub fn profile(&self, inputs: &[f64], skip: Option<usize>) -> (Vec<f64>, Vec<f64>) {
        let d = self.dims();
        let out = d - 1;
        let pyy = self.h_inv[(out, out)];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut smin = f64::INFINITY;
        for (j, r) in self.rows.iter().enumerate() {
            if Some(j) == skip {
                continue;
            }
            let pull: f64 = (0..out).map(|k| self.h_inv[(out, k)] * (inputs[k] - r[k])).sum::<f64>() / pyy;
            let centre = r[out] - pull;
            let s = self.lambdas[j] / pyy.sqrt();
            lo = lo.min(centre - 12.0 * s);
            hi = hi.max(centre + 12.0 * s);
            smin = smin.min(s);
        }
        let mut n = ((hi - lo) / (0.05 * smin)).ceil().max(4096.0) as usize;
        n += n % 2;
        let ys: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
        let fs = ys.iter().map(|&y| self.joint_at(inputs, y, skip)).collect();
        (ys, fs)
    }

    fn joint_at(&self, inputs: &[f64], y: f64, skip: Option<usize>) -> f64 {
        let mut p = inputs.to_vec();
        p.push(y);
        self.density_without(&p, skip)
    }

    pub fn expectation(&self, inputs: &[f64], skip: Option<usize>) -> f64 {
        let (ys, fs) = self.profile(inputs, skip);
        let yf: Vec<f64> = ys.iter().zip(&fs).map(|(y, f)| y * f).collect();
        simpson(&ys, &yf) / simpson(&ys, &fs)
    }

    /// Inverts the quadrature CDF: cumulative Simpson sums locate the cell,
    /// then bisection with a fine Simpson rule inside it.
    pub fn quantile(&self, inputs: &[f64], p: f64) -> f64 {
        let (ys, fs) = self.profile(inputs, None);
        let n = ys.len() - 1;
        let h = ys[1] - ys[0];
        let mut cum = vec![0.0; n / 2 + 1];
        for k in 1..=n / 2 {
            let a = 2 * k - 2;
            cum[k] = cum[k - 1] + h / 3.0 * (fs[a] + 4.0 * fs[a + 1] + fs[a + 2]);
        }
        let target = p * cum[n / 2];
        let k = (1..=n / 2).find(|&k| cum[k] >= target).unwrap();
        let start = ys[2 * k - 2];
        let base = cum[k - 1];
        let partial = |q: f64| {
            let m = 32;
            let pts: Vec<f64> = (0..=m).map(|i| start + (q - start) * i as f64 / m as f64).collect();
            let vals: Vec<f64> = pts.iter().map(|&y| self.joint_at(inputs, y, None)).collect();
            base + simpson(&pts, &vals)
        };
        let (mut a, mut b) = (start, ys[2 * k]);
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if partial(mid) < target {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    pub fn mcse(&self) -> f64 {
        let m = self.rows.len();
        let out = self.dims() - 1;
        (0..m)
            .map(|i| {
                let x = &self.rows[i][..out];
                let e = self.expectation(x, Some(i));
                (e - self.rows[i][out]).powi(2)
            })
            .sum::<f64>()
            / m as f64
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Composite Simpson rule on an even number of equal intervals.
pub fn simpson(xs: &[f64], fs: &[f64]) -> f64 {
    let n = xs.len() - 1;
    assert!(n.is_multiple_of(2), "Simpson needs an even interval count");
    let h = (xs[n] - xs[0]) / n as f64;
    let inner: f64 = (1..n).map(|k| if k % 2 == 1 { 4.0 } else { 2.0 } * fs[k]).sum();
    h / 3.0 * (fs[0] + inner + fs[n])
}
