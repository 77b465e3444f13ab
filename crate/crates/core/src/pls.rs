//! SIMPLS partial least squares.
//!
//! Latent variables are extracted from the cross-covariance `C = YᵀX` one at a
//! time: the weight vector is the dominant right singular direction of the
//! current `C`, and `C` is then deflated by projecting out the span of all
//! x-loadings found so far. `X` and `Y` are used as given; any centering is the
//! caller's business.

use log::warn;
use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{ensure_finite, Error, Result};

/// Extraction stops once `tᵀt` falls below this multiple of the row count.
pub const SCORE_FLOOR: f64 = 1e-12;

/// Largest acceptable condition estimate of `PᵀW`.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative Frobenius norm below which the deflated covariance counts as empty.
const COVARIANCE_FLOOR: f64 = 1e-12;

/// A fitted SIMPLS model.
///
/// Every factor matrix has one column per extracted latent variable. The
/// coefficient matrix maps `X` rows directly to `Y` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsModel {
    weights: Array2<f64>,
    x_loadings: Array2<f64>,
    y_loadings: Array2<f64>,
    x_scores: Array2<f64>,
    y_scores: Array2<f64>,
    coefficients: Array2<f64>,
    requested_lv: usize,
}

impl PlsModel {
    /// Number of latent variables actually extracted.
    pub fn n_lv(&self) -> usize {
        self.weights.ncols()
    }

    /// Number of latent variables the caller asked for.
    pub fn requested_lv(&self) -> usize {
        self.requested_lv
    }

    /// `W`, p × a.
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// `P`, p × a.
    pub fn x_loadings(&self) -> &Array2<f64> {
        &self.x_loadings
    }

    /// `Q`, m × a.
    pub fn y_loadings(&self) -> &Array2<f64> {
        &self.y_loadings
    }

    /// `T`, n × a.
    pub fn x_scores(&self) -> &Array2<f64> {
        &self.x_scores
    }

    /// `U`, n × a. Kept for completeness; prediction does not use it.
    pub fn y_scores(&self) -> &Array2<f64> {
        &self.y_scores
    }

    /// `B = W (PᵀW)⁻¹ Qᵀ`, p × m.
    pub fn coefficients(&self) -> &Array2<f64> {
        &self.coefficients
    }

    pub fn n_features(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn n_targets(&self) -> usize {
        self.coefficients.ncols()
    }

    /// Predicts `X_new · B`.
    pub fn predict(&self, x_new: ArrayView2<f64>) -> Result<Array2<f64>> {
        predict_pls(self, x_new)
    }

    pub(crate) fn from_parts(
        weights: Array2<f64>,
        x_loadings: Array2<f64>,
        y_loadings: Array2<f64>,
        x_scores: Array2<f64>,
        y_scores: Array2<f64>,
        requested_lv: usize,
    ) -> Result<Self> {
        let coefficients = regression_coefficients(&weights, &x_loadings, &y_loadings)?;
        Ok(Self {
            weights,
            x_loadings,
            y_loadings,
            x_scores,
            y_scores,
            coefficients,
            requested_lv,
        })
    }
}

/// Dominant right singular direction of `c` (m × p), as a unit p-vector.
///
/// The sign is fixed so that the entry of largest magnitude is positive (the
/// first such entry on exact ties). An all-zero `c` yields
/// [`Error::RankExhausted`].
pub fn first_pc(c: ArrayView2<f64>) -> Result<Array1<f64>> {
    let (m, p) = c.dim();
    if m == 0 || p == 0 {
        return Err(Error::DimensionMismatch(format!(
            "covariance matrix is {m}x{p}"
        )));
    }
    ensure_finite(c.iter(), "covariance matrix")?;
    if c.iter().all(|&v| v == 0.0) {
        return Err(Error::RankExhausted);
    }

    let mut direction = if m == 1 {
        // Rank one: the only right singular direction is the row itself.
        let row = c.row(0);
        let norm = row.dot(&row).sqrt();
        row.mapv(|v| v / norm)
    } else {
        // Top eigenvector of the smaller of CCᵀ and CᵀC, mapped to the right
        // side when needed. The general SVD routine loses accuracy on wide
        // matrices with close trailing singular values.
        let mut v = if m <= p {
            let u = top_eigenvector(c.dot(&c.t()).view());
            c.t().dot(&u)
        } else {
            top_eigenvector(c.t().dot(&c).view())
        };
        let norm = v.dot(&v).sqrt();
        if !(norm > 0.0) {
            return Err(Error::RankExhausted);
        }
        v.mapv_inplace(|x| x / norm);
        // Power-iteration polish against the original matrix.
        for _ in 0..2 {
            let next = c.t().dot(&c.dot(&v));
            let n2 = next.dot(&next).sqrt();
            if !(n2 > 0.0) {
                break;
            }
            v = next / n2;
        }
        v
    };
    fix_sign(&mut direction);
    Ok(direction)
}

fn top_eigenvector(g: ArrayView2<f64>) -> Array1<f64> {
    let k = g.nrows();
    let sym = DMatrix::from_fn(k, k, |i, j| 0.5 * (g[[i, j]] + g[[j, i]]));
    let eig = sym.symmetric_eigen();
    let top = eig.eigenvalues.imax();
    Array1::from_iter(eig.eigenvectors.column(top).iter().copied())
}

fn fix_sign(v: &mut Array1<f64>) {
    let mut pivot = 0.0f64;
    for &x in v.iter() {
        if x.abs() > pivot.abs() {
            pivot = x;
        }
    }
    if pivot < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Fits SIMPLS with up to `n_lv` latent variables.
///
/// `n_lv` larger than `min(n, p)` is clamped (with a logged warning). Fewer
/// factors are kept when the scores or the deflated covariance vanish; the
/// model records how many were actually extracted.
pub fn fit_pls(x: ArrayView2<f64>, y: ArrayView2<f64>, n_lv: usize) -> Result<PlsModel> {
    let (n, p) = x.dim();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "X has {n} rows but Y has {}",
            y.nrows()
        )));
    }
    if n == 0 || p == 0 || y.ncols() == 0 {
        return Err(Error::EmptyData("PLS needs at least one row and column".into()));
    }
    if n_lv == 0 {
        return Err(Error::InvalidArgument(
            "number of latent variables must be at least 1".into(),
        ));
    }
    ensure_finite(x.iter(), "X")?;
    ensure_finite(y.iter(), "Y")?;

    let limit = n.min(p);
    let target = if n_lv > limit {
        warn!("requested {n_lv} latent variables but min(n, p) = {limit}; clamping");
        limit
    } else {
        n_lv
    };

    let mut state = Simpls::new(x, y);
    while state.extracted() < target {
        if !state.step()? {
            break;
        }
    }
    state.finish(n_lv)
}

/// Predicts `X_new · B`.
pub fn predict_pls(model: &PlsModel, x_new: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x_new.ncols() != model.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} features, got {}",
            model.n_features(),
            x_new.ncols()
        )));
    }
    Ok(x_new.dot(&model.coefficients))
}

/// Incremental SIMPLS extraction.
pub(crate) struct Simpls<'a> {
    x: ArrayView2<'a, f64>,
    y: ArrayView2<'a, f64>,
    covariance: Array2<f64>,
    initial_norm: f64,
    // Orthonormal basis of span(P), used to apply C ← C − C P (PᵀP)⁻¹ Pᵀ.
    basis: Vec<Array1<f64>>,
    w: Vec<Array1<f64>>,
    p: Vec<Array1<f64>>,
    q: Vec<Array1<f64>>,
    t: Vec<Array1<f64>>,
    u: Vec<Array1<f64>>,
}

impl<'a> Simpls<'a> {
    pub(crate) fn new(x: ArrayView2<'a, f64>, y: ArrayView2<'a, f64>) -> Self {
        let covariance = y.t().dot(&x);
        let initial_norm = frobenius(covariance.view());
        Self {
            x,
            y,
            covariance,
            initial_norm,
            basis: Vec::new(),
            w: Vec::new(),
            p: Vec::new(),
            q: Vec::new(),
            t: Vec::new(),
            u: Vec::new(),
        }
    }

    pub(crate) fn extracted(&self) -> usize {
        self.w.len()
    }

    #[cfg(test)]
    pub(crate) fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    /// Extracts one more latent variable. Returns `false` when the data
    /// cannot support another one.
    pub(crate) fn step(&mut self) -> Result<bool> {
        let n = self.x.nrows();
        if frobenius(self.covariance.view()) <= COVARIANCE_FLOOR * self.initial_norm {
            return Ok(false);
        }
        let w = match first_pc(self.covariance.view()) {
            Ok(w) => w,
            Err(Error::RankExhausted) => return Ok(false),
            Err(e) => return Err(e),
        };

        let t = self.x.dot(&w);
        let tt = t.dot(&t);
        if !(tt >= SCORE_FLOOR * n as f64) {
            return Ok(false);
        }
        let q = self.y.t().dot(&t) / tt;
        let qq = q.dot(&q);
        let u = if qq > 0.0 {
            self.y.dot(&q) / qq
        } else {
            Array1::zeros(n)
        };
        let loading = self.x.t().dot(&t) / tt;

        let Some(direction) = orthonormal_extension(&self.basis, loading.view()) else {
            return Ok(false);
        };
        self.basis.push(direction);
        self.deflate();

        self.w.push(w);
        self.p.push(loading);
        self.q.push(q);
        self.t.push(t);
        self.u.push(u);
        Ok(true)
    }

    fn deflate(&mut self) {
        for b in &self.basis {
            let cb = self.covariance.dot(b);
            for (mut row, &coef) in self.covariance.axis_iter_mut(Axis(0)).zip(cb.iter()) {
                row.scaled_add(-coef, b);
            }
        }
    }

    pub(crate) fn finish(self, requested_lv: usize) -> Result<PlsModel> {
        if self.w.is_empty() {
            return Err(Error::RankExhausted);
        }
        PlsModel::from_parts(
            stack_columns(&self.w),
            stack_columns(&self.p),
            stack_columns(&self.q),
            stack_columns(&self.t),
            stack_columns(&self.u),
            requested_lv,
        )
    }
}

/// Unit vector spanning the part of `v` outside span(`basis`), or `None` if
/// `v` lies (numerically) inside it.
fn orthonormal_extension(basis: &[Array1<f64>], v: ArrayView1<f64>) -> Option<Array1<f64>> {
    let original = v.dot(&v).sqrt();
    if !(original > 0.0) {
        return None;
    }
    let mut r = v.to_owned();
    // Two Gram-Schmidt passes keep the basis orthogonal to working precision.
    for _ in 0..2 {
        for b in basis {
            let proj = b.dot(&r);
            r.scaled_add(-proj, b);
        }
    }
    let norm = r.dot(&r).sqrt();
    if norm <= 1e-10 * original {
        return None;
    }
    r.mapv_inplace(|x| x / norm);
    Some(r)
}

/// `B = W (PᵀW)⁻¹ Qᵀ`, solving the a × a system rather than inverting it.
fn regression_coefficients(
    w: &Array2<f64>,
    p: &Array2<f64>,
    q: &Array2<f64>,
) -> Result<Array2<f64>> {
    let a = w.ncols();
    let ptw = p.t().dot(w);
    let system = DMatrix::from_fn(a, a, |i, j| ptw[[i, j]]);
    let singular = system.clone().singular_values();
    let smax = singular.max();
    let smin = singular.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned(condition));
    }
    let m = q.nrows();
    let rhs = DMatrix::from_fn(a, m, |i, j| q[[j, i]]);
    let z = system
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditioned(f64::INFINITY))?;
    let z = Array2::from_shape_fn((a, m), |(i, j)| z[(i, j)]);
    Ok(w.dot(&z))
}

fn stack_columns(cols: &[Array1<f64>]) -> Array2<f64> {
    let rows = cols.first().map_or(0, |c| c.len());
    Array2::from_shape_fn((rows, cols.len()), |(i, j)| cols[j][i])
}

pub(crate) fn frobenius(m: ArrayView2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}
