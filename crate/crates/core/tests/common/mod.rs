//! Independent reference implementations used as test oracles. Everything is
//! written from the textbook definitions with dense matrix products; none of
//! it calls into the library's numerical code.

#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn seeded_normal(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (descending) and eigenvectors as columns.
pub fn jacobi_eigen(a: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    (values, vectors)
}

/// Dominant right singular vector of `c`, from the eigenvectors of `cᵀc`,
/// with the largest-magnitude entry made positive.
pub fn dominant_right_singular(c: ArrayView2<f64>) -> Array1<f64> {
    let ctc = c.t().dot(&c);
    let (_, vecs) = jacobi_eigen(ctc.view());
    let mut v = vecs.column(0).to_owned();
    let pivot = v.iter().fold(0.0f64, |p, &x| if x.abs() > p.abs() { x } else { p });
    if pivot < 0.0 {
        v.mapv_inplace(|x| -x);
    }
    v
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut r = b.to_owned();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().partial_cmp(&m[[j, col]].abs()).unwrap())
            .unwrap();
        if piv != col {
            for k in 0..n {
                m.swap([col, k], [piv, k]);
            }
            for k in 0..r.ncols() {
                r.swap([col, k], [piv, k]);
            }
        }
        for row in (col + 1)..n {
            let f = m[[row, col]] / m[[col, col]];
            for k in col..n {
                m[[row, k]] -= f * m[[col, k]];
            }
            for k in 0..r.ncols() {
                r[[row, k]] -= f * r[[col, k]];
            }
        }
    }
    let mut x = Array2::zeros(r.dim());
    for k in 0..r.ncols() {
        for row in (0..n).rev() {
            let s: f64 = ((row + 1)..n).map(|j| m[[row, j]] * x[[j, k]]).sum();
            x[[row, k]] = (r[[row, k]] - s) / m[[row, row]];
        }
    }
    x
}

pub fn inverse(a: ArrayView2<f64>) -> Array2<f64> {
    solve(a, Array2::<f64>::eye(a.nrows()).view())
}

/// Least squares through the normal equations `(XᵀX) B = XᵀY`.
pub fn normal_equations(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Array2<f64> {
    solve(x.t().dot(&x).view(), x.t().dot(&y).view())
}

/// SIMPLS regression coefficients. Each step takes the dominant right
/// singular vector of the covariance `YᵀX` projected off the span of all
/// loadings so far, `C₀ (I − P(PᵀP)⁻¹Pᵀ)`.
pub fn simpls_coefficients(x: ArrayView2<f64>, y: ArrayView2<f64>, n_lv: usize) -> Array2<f64> {
    let p = x.ncols();
    let c0 = y.t().dot(&x);
    let mut ws: Vec<Array1<f64>> = Vec::new();
    let mut ps: Vec<Array1<f64>> = Vec::new();
    let mut qs: Vec<Array1<f64>> = Vec::new();
    for _ in 0..n_lv {
        let c = if ps.is_empty() {
            c0.clone()
        } else {
            let pm = columns(&ps);
            let projector = Array2::<f64>::eye(p) - pm.dot(&inverse(pm.t().dot(&pm).view())).dot(&pm.t());
            c0.dot(&projector)
        };
        let w = dominant_right_singular(c.view());
        let t = x.dot(&w);
        let tt = t.dot(&t);
        ps.push(x.t().dot(&t) / tt);
        qs.push(y.t().dot(&t) / tt);
        ws.push(w);
    }
    let w = columns(&ws);
    let pm = columns(&ps);
    let q = columns(&qs);
    w.dot(&inverse(pm.t().dot(&w).view())).dot(&q.t())
}

pub fn columns(vs: &[Array1<f64>]) -> Array2<f64> {
    let mut m = Array2::zeros((vs[0].len(), vs.len()));
    for (j, v) in vs.iter().enumerate() {
        m.column_mut(j).assign(v);
    }
    m
}

pub fn gaussian(a: ArrayView2<f64>, b: ArrayView2<f64>, sigma: f64) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        let d2: f64 = a.row(i).iter().zip(b.row(j)).map(|(u, v)| (u - v).powi(2)).sum();
        (-d2 / (2.0 * sigma * sigma)).exp()
    })
}

/// `I − 11ᵀ/n`.
pub fn centering_matrix(n: usize) -> Array2<f64> {
    Array2::<f64>::eye(n) - Array2::from_elem((n, n), 1.0 / n as f64)
}

/// Centered ridge Gram `H (K + δI) H` with a Gaussian kernel.
pub fn centered_ridge_gram(x: ArrayView2<f64>, sigma: f64, delta: f64) -> Array2<f64> {
    let n = x.nrows();
    let k = gaussian(x, x, sigma) + Array2::<f64>::eye(n) * delta;
    let h = centering_matrix(n);
    h.dot(&k).dot(&h)
}

pub fn center_columns(y: ArrayView2<f64>) -> Array2<f64> {
    let means = y.mean_axis(Axis(0)).unwrap();
    &y - &means
}

/// Gaussian K-PLS predictions: SIMPLS on the centered ridge Gram against
/// centered responses; test kernels centered as
/// `(K_t − 1 1ᵀ K / n)(I − 11ᵀ/n)` with the ridge-included training Gram.
pub fn kpls_predict(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    x_test: ArrayView2<f64>,
    sigma: f64,
    delta: f64,
    n_lv: usize,
) -> Array2<f64> {
    let n = x.nrows();
    let k = gaussian(x, x, sigma) + Array2::<f64>::eye(n) * delta;
    let h = centering_matrix(n);
    let kc = h.dot(&k).dot(&h);
    let b = simpls_coefficients(kc.view(), center_columns(y).view(), n_lv);
    let kt = gaussian(x_test, x, sigma);
    let ones = Array2::from_elem((x_test.nrows(), n), 1.0 / n as f64);
    let ktc = (&kt - &ones.dot(&k)).dot(&h);
    ktc.dot(&b) + &y.mean_axis(Axis(0)).unwrap()
}

/// `trace(Bᵀ K̃ B)` of a Gaussian K-PLS fit.
pub fn kpls_norm(x: ArrayView2<f64>, y: ArrayView2<f64>, sigma: f64, delta: f64, n_lv: usize) -> f64 {
    let kc = centered_ridge_gram(x, sigma, delta);
    let b = simpls_coefficients(kc.view(), center_columns(y).view(), n_lv);
    b.t().dot(&kc).dot(&b).diag().sum()
}

/// `1 − ‖f_s‖² / ‖f_b‖²` for a sub-batch against its minibatch.
pub fn kf_loss_literal(
    xb: ArrayView2<f64>,
    yb: ArrayView2<f64>,
    xs: ArrayView2<f64>,
    ys: ArrayView2<f64>,
    sigma: f64,
    delta: f64,
    n_lv: usize,
) -> f64 {
    1.0 - kpls_norm(xs, ys, sigma, delta, n_lv) / kpls_norm(xb, yb, sigma, delta, n_lv)
}

/// Richardson-extrapolated central difference: `(4 D(h/2) − D(h)) / 3`.
pub fn richardson<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64], h: f64) -> Vec<f64> {
    let d = |i: usize, h: f64| {
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[i] += h;
        minus[i] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    };
    (0..theta.len())
        .map(|i| (4.0 * d(i, h / 2.0) - d(i, h)) / 3.0)
        .collect()
}

pub fn max_abs(a: ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn frobenius(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
