//! Dense matrix factorizations on row-major `f64` buffers.
//!
//! Householder QR and one-sided Jacobi SVD, sized for the small matrices a
//! reference interpreter meets.

/// Reduced QR of the `m x n` row-major matrix `a`.
///
/// Returns `(q, r, k)` with `k = min(m, n)`, `q` of shape `m x k` with
/// orthonormal columns and `r` of shape `k x n`, upper triangular with a
/// non-negative diagonal. Entries below the diagonal of `r` are exactly zero.
pub fn householder_qr(m: usize, n: usize, a: &[f64]) -> (Vec<f64>, Vec<f64>, usize) {
    assert_eq!(a.len(), m * n);
    let k = m.min(n);
    let mut r = a.to_vec();
    let mut reflectors: Vec<(usize, Vec<f64>)> = Vec::with_capacity(k);

    for j in 0..k {
        let norm = (j..m).map(|i| r[i * n + j].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = r[j * n + j];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..m).map(|i| r[i * n + j]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        for col in j..n {
            let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * r[(j + t) * n + col]).sum();
            let f = 2.0 * dot / vv;
            for (t, vi) in v.iter().enumerate() {
                r[(j + t) * n + col] -= f * vi;
            }
        }
        r[j * n + j] = alpha;
        for i in j + 1..m {
            r[i * n + j] = 0.0;
        }
        reflectors.push((j, v));
    }

    // Q = H_0 H_1 ... applied to the first k columns of the identity.
    let mut q = vec![0.0; m * k];
    for i in 0..k {
        q[i * k + i] = 1.0;
    }
    for (j, v) in reflectors.iter().rev() {
        let vv: f64 = v.iter().map(|x| x * x).sum();
        for col in 0..k {
            let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * q[(j + t) * k + col]).sum();
            let f = 2.0 * dot / vv;
            for (t, vi) in v.iter().enumerate() {
                q[(j + t) * k + col] -= f * vi;
            }
        }
    }

    let mut r_out = vec![0.0; k * n];
    for i in 0..k {
        let flip = r[i * n + i] < 0.0;
        for col in i..n {
            let x = r[i * n + col];
            r_out[i * n + col] = if flip { -x } else { x };
        }
        if flip {
            for row in 0..m {
                q[row * k + i] = -q[row * k + i];
            }
        }
    }
    (q, r_out, k)
}

/// Thin SVD `a = u * diag(s) * vt` of the `m x n` row-major matrix `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub m: usize,
    pub n: usize,
    /// `min(m, n)` singular values, descending.
    pub s: Vec<f64>,
    /// `m x p`, orthonormal columns.
    pub u: Vec<f64>,
    /// `p x n`, orthonormal rows.
    pub vt: Vec<f64>,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// Keeps the leading `k` triplets.
    pub fn truncated(&self, k: usize) -> Svd {
        let p = self.rank();
        assert!(k <= p);
        let mut u = vec![0.0; self.m * k];
        for i in 0..self.m {
            u[i * k..(i + 1) * k].copy_from_slice(&self.u[i * p..i * p + k]);
        }
        Svd {
            m: self.m,
            n: self.n,
            s: self.s[..k].to_vec(),
            u,
            vt: self.vt[..k * self.n].to_vec(),
        }
    }
}

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;

pub fn jacobi_svd(m: usize, n: usize, a: &[f64]) -> Svd {
    assert_eq!(a.len(), m * n);
    if m < n {
        let mut at = vec![0.0; n * m];
        for i in 0..m {
            for j in 0..n {
                at[j * m + i] = a[i * n + j];
            }
        }
        let t = jacobi_tall(n, m, &at);
        // a = (t.u diag(s) t.vt)^T = t.vt^T diag(s) t.u^T
        let p = t.s.len();
        let mut u = vec![0.0; m * p];
        for i in 0..m {
            for j in 0..p {
                u[i * p + j] = t.vt[j * m + i];
            }
        }
        let mut vt = vec![0.0; p * n];
        for j in 0..p {
            for i in 0..n {
                vt[j * n + i] = t.u[i * p + j];
            }
        }
        return Svd { m, n, s: t.s, u, vt };
    }
    jacobi_tall(m, n, a)
}

/// One-sided Jacobi for `m >= n`: rotate column pairs of `a` until they are
/// mutually orthogonal, accumulating the rotations in `v`.
fn jacobi_tall(m: usize, n: usize, a: &[f64]) -> Svd {
    let mut w = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (wp, wq) = (w[i * n + p], w[i * n + q]);
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (wp, wq) = (w[i * n + p], w[i * n + q]);
                    w[i * n + p] = c * wp - s * wq;
                    w[i * n + q] = s * wp + c * wq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[i * n + p], v[i * n + q]);
                    v[i * n + p] = c * vp - s * vq;
                    v[i * n + q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w[i * n + j].powi(2)).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut u = vec![0.0; m * n];
    let mut vt = vec![0.0; n * n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (out, &j) in order.iter().enumerate() {
        let col: Vec<f64> = (0..m).map(|i| w[i * n + j]).collect();
        let unit = orthonormal_completion(&basis, &col, s[out]);
        for i in 0..m {
            u[i * n + out] = unit[i];
        }
        basis.push(unit);
        for i in 0..n {
            vt[out * n + i] = v[i * n + j];
        }
    }
    Svd { m, n, s, u, vt }
}

/// Normalizes `col / sigma` against the accepted `basis`. Columns whose
/// direction is lost to rounding (tiny or zero `sigma`) are replaced by the
/// unit vector with the largest component outside the basis.
fn orthonormal_completion(basis: &[Vec<f64>], col: &[f64], sigma: f64) -> Vec<f64> {
    let m = col.len();
    let project = |mut x: Vec<f64>| {
        for _ in 0..2 {
            for b in basis {
                let d: f64 = b.iter().zip(&x).map(|(p, q)| p * q).sum();
                for (xi, bi) in x.iter_mut().zip(b) {
                    *xi -= d * bi;
                }
            }
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        (x, norm)
    };
    if sigma > 0.0 {
        let (x, norm) = project(col.iter().map(|c| c / sigma).collect());
        if norm > 0.5 {
            return x.into_iter().map(|v| v / norm).collect();
        }
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for e in 0..m {
        let mut unit = vec![0.0; m];
        unit[e] = 1.0;
        let (x, norm) = project(unit);
        if best.as_ref().is_none_or(|(_, b)| norm > *b) {
            best = Some((x, norm));
        }
    }
    let (x, norm) = best.expect("m > 0");
    x.into_iter().map(|v| v / norm).collect()
}

/// Number of singular values to keep: those above `cutoff`, at most
/// `max_bond`, and never fewer than one.
pub fn kept_count(s: &[f64], cutoff: f64, max_bond: Option<usize>) -> usize {
    let above = s.iter().filter(|&&x| x > cutoff).count();
    let capped = max_bond.map_or(above, |b| above.min(b));
    capped.max(1).min(s.len())
}
