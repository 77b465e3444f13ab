//! Stationary kernels, Gram matrices and kernel centering.
//!
//! Every kernel here depends on its inputs only through the Euclidean distance
//! `r = ‖x − y‖` and equals one at `r = 0`. A [`KernelSpec`] combines one or
//! more families as a weighted sum and carries the ridge `δ` that is added to
//! square training Grams. All parameters are stored as logarithms, so any real
//! parameter vector maps to a valid kernel.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{ensure_finite, Error, Result};

/// Default initial length-scale.
pub const DEFAULT_SIGMA: f64 = 1.0;
/// Default initial ridge.
pub const DEFAULT_DELTA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Matern12,
    Matern32,
    Matern52,
    Cauchy,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 5] = [
        KernelFamily::Gaussian,
        KernelFamily::Matern12,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
        KernelFamily::Cauchy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Matern12 => "matern12",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
            KernelFamily::Cauchy => "cauchy",
        }
    }

    /// Kernel value for squared distance `r2` and length-scale `sigma`.
    #[inline]
    pub fn value(self, r2: f64, sigma: f64) -> f64 {
        let r2 = r2.max(0.0);
        match self {
            KernelFamily::Gaussian => (-r2 / (2.0 * sigma * sigma)).exp(),
            KernelFamily::Matern12 => (-r2.sqrt() / sigma).exp(),
            KernelFamily::Matern32 => {
                let s = 3f64.sqrt() * r2.sqrt() / sigma;
                (1.0 + s) * (-s).exp()
            }
            KernelFamily::Matern52 => {
                let s = 5f64.sqrt() * r2.sqrt() / sigma;
                (1.0 + s + 5.0 * r2 / (3.0 * sigma * sigma)) * (-s).exp()
            }
            KernelFamily::Cauchy => 1.0 / (1.0 + r2 / (sigma * sigma)),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        KernelFamily::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown kernel family `{s}`")))
    }
}

/// Parses a comma-separated family list such as `gaussian,cauchy`.
pub fn parse_families(list: &str) -> Result<Vec<KernelFamily>> {
    let families = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    validate_families(&families)?;
    Ok(families)
}

fn validate_families(families: &[KernelFamily]) -> Result<()> {
    if families.is_empty() {
        return Err(Error::InvalidArgument("no kernel family given".into()));
    }
    for (i, a) in families.iter().enumerate() {
        if families[..i].contains(a) {
            return Err(Error::InvalidArgument(format!(
                "kernel family `{a}` listed twice"
            )));
        }
    }
    Ok(())
}

/// A weighted sum of kernel families plus a ridge term, parameterized in log
/// space.
///
/// The flat parameter vector (see [`KernelSpec::theta`]) is laid out as the
/// log length-scales of each family, then (only with two or more families) the
/// log weights, then the log ridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    families: Vec<KernelFamily>,
    log_sigma: Vec<f64>,
    log_gamma: Vec<f64>,
    log_delta: f64,
}

impl KernelSpec {
    /// Default initialization: `σ = 1`, `γ = 1/|families|`, `δ = 1e-3`.
    pub fn new(families: Vec<KernelFamily>) -> Result<Self> {
        let k = families.len();
        let gammas = vec![1.0 / k.max(1) as f64; k];
        Self::with_params(families, &vec![DEFAULT_SIGMA; k], &gammas, DEFAULT_DELTA)
    }

    pub fn single(family: KernelFamily, sigma: f64, delta: f64) -> Result<Self> {
        Self::with_params(vec![family], &[sigma], &[1.0], delta)
    }

    /// Builds a spec from positive parameters. `gammas` is ignored for a single
    /// family, whose weight is fixed at one.
    pub fn with_params(
        families: Vec<KernelFamily>,
        sigmas: &[f64],
        gammas: &[f64],
        delta: f64,
    ) -> Result<Self> {
        validate_families(&families)?;
        let k = families.len();
        if sigmas.len() != k {
            return Err(Error::InvalidArgument(format!(
                "{k} kernel families but {} length-scales",
                sigmas.len()
            )));
        }
        if k > 1 && gammas.len() != k {
            return Err(Error::InvalidArgument(format!(
                "{k} kernel families but {} weights",
                gammas.len()
            )));
        }
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{what} must be positive and finite, got {v}"
                )))
            }
        };
        let log_sigma = sigmas
            .iter()
            .map(|&s| positive(s, "length-scale"))
            .collect::<Result<Vec<_>>>()?;
        let log_gamma = if k > 1 {
            gammas
                .iter()
                .map(|&g| positive(g, "kernel weight"))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let log_delta = positive(delta, "ridge")?;
        Ok(Self {
            families,
            log_sigma,
            log_gamma,
            log_delta,
        })
    }

    pub fn families(&self) -> &[KernelFamily] {
        &self.families
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.log_sigma[i].exp()
    }

    /// Weight of family `i`; always one for single-family specs.
    pub fn kernel_weight(&self, i: usize) -> f64 {
        if self.log_gamma.is_empty() {
            1.0
        } else {
            self.log_gamma[i].exp()
        }
    }

    pub fn delta(&self) -> f64 {
        self.log_delta.exp()
    }

    /// Sum of the kernel weights, i.e. `k(x, x)`.
    pub fn total_weight(&self) -> f64 {
        (0..self.families.len()).map(|i| self.kernel_weight(i)).sum()
    }

    pub fn theta_len(&self) -> usize {
        self.log_sigma.len() + self.log_gamma.len() + 1
    }

    /// Flat log-parameter vector.
    pub fn theta(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.theta_len());
        theta.extend_from_slice(&self.log_sigma);
        theta.extend_from_slice(&self.log_gamma);
        theta.push(self.log_delta);
        theta
    }

    /// Copy of this spec with the log-parameters replaced.
    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.theta_len() {
            return Err(Error::DimensionMismatch(format!(
                "kernel has {} parameters, got {}",
                self.theta_len(),
                theta.len()
            )));
        }
        ensure_finite(theta.iter(), "kernel parameters")?;
        let k = self.log_sigma.len();
        let g = self.log_gamma.len();
        Ok(Self {
            families: self.families.clone(),
            log_sigma: theta[..k].to_vec(),
            log_gamma: theta[k..k + g].to_vec(),
            log_delta: theta[k + g],
        })
    }

    /// Names of the entries of [`KernelSpec::theta`], in order.
    pub fn theta_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self
            .families
            .iter()
            .map(|f| format!("log_sigma_{f}"))
            .collect();
        if !self.log_gamma.is_empty() {
            labels.extend(self.families.iter().map(|f| format!("log_gamma_{f}")));
        }
        labels.push("log_delta".to_string());
        labels
    }

    /// Comma-separated family list, e.g. `gaussian,cauchy`.
    pub fn family_list(&self) -> String {
        self.families
            .iter()
            .map(|f| f.name())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Kernel value for a squared distance, excluding the ridge.
    #[inline]
    pub fn value_sq(&self, r2: f64) -> f64 {
        self.families
            .iter()
            .enumerate()
            .map(|(i, f)| self.kernel_weight(i) * f.value(r2, self.sigma(i)))
            .sum()
    }
}

#[inline]
fn squared_distance(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let d: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    d.max(0.0)
}

/// `Σ γᵢ kᵢ(x, y)`; the ridge is not part of a pointwise evaluation.
pub fn kernel_eval(spec: &KernelSpec, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "points have {} and {} coordinates",
            x.len(),
            y.len()
        )));
    }
    ensure_finite(x.iter().chain(y.iter()), "kernel input")?;
    Ok(spec.value_sq(squared_distance(x, y)))
}

/// Kernel matrix between the rows of `a` and `b`, without ridge.
pub fn cross_gram(spec: &KernelSpec, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "inputs have {} and {} features",
            a.ncols(),
            b.ncols()
        )));
    }
    ensure_finite(a.iter().chain(b.iter()), "kernel input")?;
    let weights: Vec<(KernelFamily, f64, f64)> = spec
        .families
        .iter()
        .enumerate()
        .map(|(i, &f)| (f, spec.kernel_weight(i), spec.sigma(i)))
        .collect();
    let mut k = Array2::zeros((a.nrows(), b.nrows()));
    for (i, xa) in a.outer_iter().enumerate() {
        for (j, xb) in b.outer_iter().enumerate() {
            let r2 = squared_distance(xa, xb);
            k[[i, j]] = weights.iter().map(|&(f, g, s)| g * f.value(r2, s)).sum();
        }
    }
    Ok(k)
}

/// Training Gram matrix `K + δI`. Exactly symmetric.
pub fn gram_train(spec: &KernelSpec, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::EmptyData(format!(
            "a training Gram needs at least 2 samples, got {n}"
        )));
    }
    ensure_finite(x.iter(), "kernel input")?;
    let delta = spec.delta();
    let diag = spec.total_weight() + delta;
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = diag;
        for j in (i + 1)..n {
            let v = spec.value_sq(squared_distance(x.row(i), x.row(j)));
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    Ok(k)
}

/// Training-kernel statistics needed to center test kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteringStats {
    /// Number of training samples.
    pub n: usize,
    /// Column means of the (uncentered) training kernel.
    pub column_means: Array1<f64>,
    /// Mean of all entries of the training kernel.
    pub grand_mean: f64,
}

/// `(I − 11ᵀ/n) K (I − 11ᵀ/n)` together with the statistics of `K`.
pub fn center_train(k: ArrayView2<f64>) -> Result<(Array2<f64>, CenteringStats)> {
    let (n, cols) = k.dim();
    if n != cols || n == 0 {
        return Err(Error::DimensionMismatch(format!(
            "centering needs a non-empty square matrix, got {n}x{cols}"
        )));
    }
    let column_means = k.mean_axis(Axis(0)).expect("non-empty");
    let row_means = k.mean_axis(Axis(1)).expect("non-empty");
    let grand_mean = column_means.mean().expect("non-empty");
    let centered = Array2::from_shape_fn((n, n), |(i, j)| {
        k[[i, j]] - row_means[i] - column_means[j] + grand_mean
    });
    Ok((
        centered,
        CenteringStats {
            n,
            column_means,
            grand_mean,
        },
    ))
}

/// Centers a raw test kernel (q × n) with training statistics:
/// `(K_test − 1_q 1ₙᵀ K / n)(I − 11ᵀ/n)`.
pub fn center_test(k_test: ArrayView2<f64>, stats: &CenteringStats) -> Result<Array2<f64>> {
    let (q, n) = k_test.dim();
    if n != stats.n {
        return Err(Error::DimensionMismatch(format!(
            "test kernel has {n} columns, training set has {}",
            stats.n
        )));
    }
    let mut out = Array2::zeros((q, n));
    for (i, row) in k_test.outer_iter().enumerate() {
        let row_mean = if n > 0 { row.sum() / n as f64 } else { 0.0 };
        for j in 0..n {
            out[[i, j]] = row[j] - stats.column_means[j] - row_mean + stats.grand_mean;
        }
    }
    Ok(out)
}

/// Centered test kernel between `x_test` and the training rows. The ridge is
/// not added.
pub fn gram_test(
    spec: &KernelSpec,
    x_test: ArrayView2<f64>,
    x_train: ArrayView2<f64>,
    stats: &CenteringStats,
) -> Result<Array2<f64>> {
    if x_train.nrows() != stats.n {
        return Err(Error::DimensionMismatch(format!(
            "{} training rows but centering statistics for {}",
            x_train.nrows(),
            stats.n
        )));
    }
    let raw = cross_gram(spec, x_test, x_train)?;
    center_test(raw.view(), stats)
}
