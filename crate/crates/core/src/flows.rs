//! Kernel Flows: stochastic minimization of the batch/sub-batch discrepancy
//! `ρ = 1 − ‖f_s‖² / ‖f_b‖²` over the log-parameters of a kernel.
//!
//! Each iteration draws a minibatch, draws `n_s` sub-batches from it, and
//! steps along a central-difference gradient of the averaged loss `ρ̄`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{ArrayView2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernels::KernelSpec;
use crate::kpls::{argmax_rows, fit_with_gram};
use crate::{Error, Result};

/// Default central-difference step in log-parameter space.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
/// Repeats per grid point in [`loss_surface`].
pub const SURFACE_REPEATS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    #[default]
    Vanilla,
    Polyak,
    Nesterov,
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateRule::Vanilla => "vanilla",
            UpdateRule::Polyak => "polyak",
            UpdateRule::Nesterov => "nesterov",
        })
    }
}

impl FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vanilla" => Ok(UpdateRule::Vanilla),
            "polyak" => Ok(UpdateRule::Polyak),
            "nesterov" => Ok(UpdateRule::Nesterov),
            other => Err(Error::InvalidArgument(format!("unknown update rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub n_iter: usize,
    pub n_subsamples: usize,
    /// Fraction of the data drawn into each minibatch.
    pub batch_fraction: f64,
    /// Fraction of the minibatch drawn into each sub-batch.
    pub sub_fraction: f64,
    /// Latent variables used by every K-PLS fit inside the loss.
    pub n_lv: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov_gamma: f64,
    pub update_rule: UpdateRule,
    pub seed: u64,
    pub smoothing_window: usize,
    pub tolerance: f64,
    /// Iterations without a `tolerance` improvement of the smoothed loss
    /// before stopping. Zero runs all iterations.
    pub patience: usize,
    /// Scale the step by `1/√t`.
    pub lr_decay: bool,
    /// Sample minibatches and sub-batches per class (one-hot responses).
    pub stratified: bool,
    pub fd_step: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            n_iter: 500,
            n_subsamples: 20,
            batch_fraction: 0.25,
            sub_fraction: 0.5,
            n_lv: 5,
            learning_rate: 0.1,
            momentum: 0.0,
            nesterov_gamma: 0.1,
            update_rule: UpdateRule::Vanilla,
            seed: 0,
            smoothing_window: 20,
            tolerance: 1e-5,
            patience: 50,
            lr_decay: false,
            stratified: false,
            fd_step: DEFAULT_FD_STEP,
        }
    }
}

fn fraction_of(fraction: f64, n: usize) -> usize {
    let k = (fraction * n as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(n)
}

impl FlowConfig {
    /// Minibatch size for `n` samples.
    pub fn batch_size(&self, n: usize) -> usize {
        fraction_of(self.batch_fraction, n)
    }

    /// Sub-batch size for `n` samples.
    pub fn sub_size(&self, n: usize) -> usize {
        fraction_of(self.sub_fraction, self.batch_size(n))
    }

    /// Checks ranges and that the sub-batch can hold `n_lv + 1` samples.
    pub fn validate(&self, n: usize) -> Result<()> {
        self.check_ranges()?;
        let sub = self.sub_size(n);
        if sub < self.n_lv + 1 || sub < 2 {
            return Err(Error::InvalidArgument(format!(
                "sub-batch of {sub} samples (from {n}) cannot support {} latent variables",
                self.n_lv
            )));
        }
        Ok(())
    }

    /// The checks of [`validate`](Self::validate) that do not depend on the
    /// sample count.
    pub fn check_ranges(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_iter == 0 {
            return bad("n_iter must be positive".into());
        }
        if self.n_subsamples == 0 {
            return bad("n_subsamples must be positive".into());
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return bad(format!("batch_fraction {} not in (0, 1]", self.batch_fraction));
        }
        if !(self.sub_fraction > 0.0 && self.sub_fraction <= 1.0) {
            return bad(format!("sub_fraction {} not in (0, 1]", self.sub_fraction));
        }
        if self.n_lv == 0 {
            return bad("n_lv must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return bad(format!("momentum {} not in [0, 1]", self.momentum));
        }
        if !(self.nesterov_gamma > 0.0 && self.nesterov_gamma.is_finite()) {
            return bad(format!("nesterov_gamma {} must be positive", self.nesterov_gamma));
        }
        if self.smoothing_window == 0 {
            return bad("smoothing_window must be positive".into());
        }
        if !(self.tolerance >= 0.0) {
            return bad(format!("tolerance {} must be >= 0", self.tolerance));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return bad(format!("fd_step {} must be positive", self.fd_step));
        }
        Ok(())
    }
}

/// One minibatch with its sub-batches. `batch` holds sorted row indices into
/// the data; each subset holds sorted positions into `batch`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Minibatch {
    pub batch: Vec<usize>,
    pub subsets: Vec<Vec<usize>>,
}

impl Minibatch {
    /// Samples without replacement. With `labels`, each class contributes in
    /// proportion to its size (at least one sample when present).
    pub fn sample(
        rng: &mut ChaCha8Rng,
        n: usize,
        config: &FlowConfig,
        labels: Option<&[usize]>,
    ) -> Self {
        let nb = config.batch_size(n);
        let batch = match labels {
            None => sorted_sample(rng, n, nb),
            Some(labels) => stratified_sample(rng, labels, config.batch_fraction),
        };
        let ns = fraction_of(config.sub_fraction, batch.len());
        let batch_labels: Option<Vec<usize>> = labels.map(|l| batch.iter().map(|&i| l[i]).collect());
        let subsets = (0..config.n_subsamples)
            .map(|_| match &batch_labels {
                None => sorted_sample(rng, batch.len(), ns),
                Some(l) => stratified_sample(rng, l, config.sub_fraction),
            })
            .collect();
        Self { batch, subsets }
    }
}

fn sorted_sample(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut v = index::sample(rng, n, k).into_vec();
    v.sort_unstable();
    v
}

fn stratified_sample(rng: &mut ChaCha8Rng, labels: &[usize], fraction: f64) -> Vec<usize> {
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = Vec::new();
    for c in 0..n_classes {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let k = fraction_of(fraction, members.len());
        out.extend(index::sample(rng, members.len(), k).into_iter().map(|j| members[j]));
    }
    out.sort_unstable();
    out
}

/// The Kernel Flows loss between a minibatch fit and a sub-batch fit, each
/// with its own centered ridge Gram.
pub fn kf_loss(
    xb: ArrayView2<f64>,
    yb: ArrayView2<f64>,
    xs: ArrayView2<f64>,
    ys: ArrayView2<f64>,
    n_lv: usize,
    spec: &KernelSpec,
) -> Result<f64> {
    let norm_b = batch_norm(xb, yb, n_lv, spec)?;
    let norm_s = fit_with_gram(xs, ys, n_lv, spec)?.coefficient_norm();
    ratio_loss(norm_s, norm_b)
}

fn batch_norm(xb: ArrayView2<f64>, yb: ArrayView2<f64>, n_lv: usize, spec: &KernelSpec) -> Result<f64> {
    let norm = fit_with_gram(xb, yb, n_lv, spec)?.coefficient_norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateKernel(format!("minibatch norm is {norm:e}")));
    }
    Ok(norm)
}

fn ratio_loss(norm_s: f64, norm_b: f64) -> Result<f64> {
    let rho = 1.0 - norm_s / norm_b;
    if !rho.is_finite() {
        return Err(Error::NonFinite("kernel flows loss".into()));
    }
    Ok(rho)
}

/// `ρ̄`: the loss averaged over the sub-batches of `mb`. The minibatch is
/// fitted once; sub-batch fits run in parallel and are summed in order.
pub fn averaged_loss(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    mb: &Minibatch,
    n_lv: usize,
    spec: &KernelSpec,
) -> Result<f64> {
    if mb.subsets.is_empty() {
        return Err(Error::InvalidArgument("no sub-batches".into()));
    }
    let xb = x.select(Axis(0), &mb.batch);
    let yb = y.select(Axis(0), &mb.batch);
    let norm_b = batch_norm(xb.view(), yb.view(), n_lv, spec)?;
    let losses: Vec<Result<f64>> = mb
        .subsets
        .par_iter()
        .map(|subset| {
            let xs = xb.select(Axis(0), subset);
            let ys = yb.select(Axis(0), subset);
            let norm_s = fit_with_gram(xs.view(), ys.view(), n_lv, spec)?.coefficient_norm();
            ratio_loss(norm_s, norm_b)
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / mb.subsets.len() as f64)
}

/// Central differences of `f` at `theta` with step `h` per coordinate. A
/// coordinate whose probes fail is retried once with `h/2`.
pub fn central_difference<F>(mut f: F, theta: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut grad = Vec::with_capacity(theta.len());
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        let mut step = h;
        let mut attempt = 0;
        let g = loop {
            probe[i] = theta[i] + step;
            let plus = f(&probe);
            probe[i] = theta[i] - step;
            let minus = f(&probe);
            probe[i] = theta[i];
            let failure = match (plus, minus) {
                (Ok(p), Ok(m)) if p.is_finite() && m.is_finite() => break (p - m) / (2.0 * step),
                (Err(e), _) | (_, Err(e)) => e,
                _ => Error::NonFinite(format!("loss probe on coordinate {i}")),
            };
            attempt += 1;
            if attempt == 2 {
                return Err(failure);
            }
            step *= 0.5;
        };
        grad.push(g);
    }
    Ok(grad)
}

/// Gradient of an arbitrary minibatch objective with the sub-batches of `mb`
/// held fixed for every probe.
pub fn gradient_with<O>(objective: &O, theta: &[f64], mb: &Minibatch, h: f64) -> Result<Vec<f64>>
where
    O: Fn(&[f64], &Minibatch) -> Result<f64>,
{
    central_difference(|t| objective(t, mb), theta, h)
}

/// Gradient of `ρ̄` with respect to the log-parameters of `spec`.
pub fn kf_gradient(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    mb: &Minibatch,
    n_lv: usize,
    spec: &KernelSpec,
    h: f64,
) -> Result<Vec<f64>> {
    let objective = spec_objective(x, y, n_lv, spec);
    gradient_with(&objective, &spec.theta(), mb, h)
}

fn spec_objective<'a>(
    x: ArrayView2<'a, f64>,
    y: ArrayView2<'a, f64>,
    n_lv: usize,
    spec: &'a KernelSpec,
) -> impl Fn(&[f64], &Minibatch) -> Result<f64> + 'a {
    move |theta, mb| averaged_loss(x, y, mb, n_lv, &spec.with_theta(theta)?)
}

/// Step sizes for [`update_theta`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov_gamma: f64,
}

/// One optimizer step. `grad` is called once: at `theta` for the vanilla and
/// Polyak rules, at the lookahead `θ + μ(θ − θ_prev)` for Nesterov. Returns
/// the new parameters and the gradient used.
pub fn update_theta<G>(
    theta: &[f64],
    prev_theta: &[f64],
    mut grad: G,
    rule: UpdateRule,
    steps: StepSizes,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if theta.len() != prev_theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, previous theta {}",
            theta.len(),
            prev_theta.len()
        )));
    }
    let velocity: Vec<f64> = theta.iter().zip(prev_theta).map(|(a, b)| a - b).collect();
    let (g, next) = match rule {
        UpdateRule::Vanilla | UpdateRule::Polyak => {
            let g = grad(theta)?;
            let mu = if rule == UpdateRule::Polyak { steps.momentum } else { 0.0 };
            let next = (0..theta.len())
                .map(|i| theta[i] - steps.learning_rate * g[i] + mu * velocity[i])
                .collect();
            (g, next)
        }
        UpdateRule::Nesterov => {
            let ahead: Vec<f64> = (0..theta.len())
                .map(|i| theta[i] + steps.momentum * velocity[i])
                .collect();
            let g = grad(&ahead)?;
            let next = (0..theta.len())
                .map(|i| ahead[i] - steps.nesterov_gamma * g[i])
                .collect();
            (g, next)
        }
    };
    if g.len() != theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "gradient has {} entries, theta {}",
            g.len(),
            theta.len()
        )));
    }
    Ok((next, g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration number, counting skipped iterations.
    pub iteration: usize,
    /// Parameters at which `loss` was evaluated.
    pub theta: Vec<f64>,
    pub loss: f64,
    /// Moving average of `loss` once a full window is available.
    pub smoothed: Option<f64>,
    pub best_smoothed: Option<f64>,
    pub gradient: Vec<f64>,
    pub gradient_norm: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub theta_labels: Vec<String>,
    pub records: Vec<IterationRecord>,
    /// Mean parameters over the window with the lowest smoothed loss.
    pub best_theta: Vec<f64>,
    pub best_smoothed_loss: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub skipped: usize,
}

impl FlowTrace {
    /// Flat table: iteration, loss, smoothed loss, each θ coordinate,
    /// gradient norm and step size. Missing smoothed values are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string(), "loss".into(), "smoothed_loss".into()];
        header.extend(self.theta_labels.iter().cloned());
        header.extend(["gradient_norm".to_string(), "learning_rate".into()]);
        w.write_record(&header).map_err(csv_write_error)?;
        for r in &self.records {
            let mut row = vec![
                r.iteration.to_string(),
                r.loss.to_string(),
                r.smoothed.map_or_else(String::new, |s| s.to_string()),
            ];
            row.extend(r.theta.iter().map(f64::to_string));
            row.push(r.gradient_norm.to_string());
            row.push(r.learning_rate.to_string());
            w.write_record(&row).map_err(csv_write_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

fn csv_write_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Runs Kernel Flows from `spec0` on standardized data and returns the spec
/// at the best smoothed loss together with the full trace.
pub fn run_kernel_flows(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    config: &FlowConfig,
    spec0: &KernelSpec,
) -> Result<(KernelSpec, FlowTrace)> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows but Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let labels = if config.stratified {
        if y.ncols() < 2 {
            return Err(Error::InvalidArgument(
                "stratified sampling needs one-hot responses".into(),
            ));
        }
        Some(argmax_rows(y))
    } else {
        None
    };
    let objective = spec_objective(x, y, config.n_lv, spec0);
    let mut trace = run_with_objective(x.nrows(), labels.as_deref(), config, &spec0.theta(), objective)?;
    trace.theta_labels = spec0.theta_labels();
    let spec = spec0.with_theta(&trace.best_theta)?;
    Ok((spec, trace))
}

/// The optimizer loop over an arbitrary minibatch objective.
pub fn run_with_objective<O>(
    n: usize,
    labels: Option<&[usize]>,
    config: &FlowConfig,
    theta0: &[f64],
    objective: O,
) -> Result<FlowTrace>
where
    O: Fn(&[f64], &Minibatch) -> Result<f64>,
{
    config.validate(n)?;
    if labels.is_some_and(|l| l.len() != n) {
        return Err(Error::DimensionMismatch("one label per sample required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let window = config.smoothing_window.min(config.n_iter);
    let mut theta = theta0.to_vec();
    let mut prev = theta.clone();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stall = 0;
    let mut skipped = 0;
    let mut converged = false;
    let mut iterations_run = 0;

    for it in 1..=config.n_iter {
        iterations_run = it;
        let scale = if config.lr_decay { 1.0 / (it as f64).sqrt() } else { 1.0 };
        let steps = StepSizes {
            learning_rate: config.learning_rate * scale,
            momentum: config.momentum,
            nesterov_gamma: config.nesterov_gamma * scale,
        };
        let mut outcome = None;
        for _attempt in 0..2 {
            let mb = Minibatch::sample(&mut rng, n, config, labels);
            let step = objective(&theta, &mb).and_then(|loss| {
                if !loss.is_finite() {
                    return Err(Error::NonFinite("kernel flows loss".into()));
                }
                let (next, g) = update_theta(
                    &theta,
                    &prev,
                    |t| gradient_with(&objective, t, &mb, config.fd_step),
                    config.update_rule,
                    steps,
                )?;
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("updated parameters".into()));
                }
                Ok((loss, next, g))
            });
            match step {
                Ok(v) => {
                    outcome = Some(v);
                    break;
                }
                Err(e) => {
                    log::debug!("iteration {it}: degenerate minibatch ({e})");
                    outcome = None;
                    if _attempt == 1 {
                        skipped += 1;
                        log::warn!("iteration {it} skipped: {e}");
                        if 2 * skipped > config.n_iter {
                            return Err(Error::TooManySkipped {
                                skipped,
                                total: config.n_iter,
                                cause: e.to_string(),
                            });
                        }
                    }
                }
            }
        }
        let Some((loss, next, gradient)) = outcome else {
            continue;
        };
        let gradient_norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
        records.push(IterationRecord {
            iteration: it,
            theta: theta.clone(),
            loss,
            smoothed: None,
            best_smoothed: None,
            gradient,
            gradient_norm,
            learning_rate: match config.update_rule {
                UpdateRule::Nesterov => steps.nesterov_gamma,
                _ => steps.learning_rate,
            },
        });
        prev = std::mem::replace(&mut theta, next);

        if records.len() >= window {
            let tail = &records[records.len() - window..];
            let smoothed = tail.iter().map(|r| r.loss).sum::<f64>() / window as f64;
            let improvement = match &best {
                None => f64::INFINITY,
                Some((b, _)) => b - smoothed,
            };
            if improvement > 0.0 {
                best = Some((smoothed, mean_theta(tail)));
            }
            if improvement >= config.tolerance && improvement.is_finite() || best.is_none() {
                stall = 0;
            } else if records.len() > window {
                stall += 1;
            }
            let last = records.last_mut().expect("just pushed");
            last.smoothed = Some(smoothed);
            last.best_smoothed = best.as_ref().map(|b| b.0);
            if config.patience > 0 && stall >= config.patience {
                converged = true;
                break;
            }
        }
    }

    let (best_smoothed_loss, best_theta) = match best {
        Some(b) => b,
        None => {
            let loss = records.iter().map(|r| r.loss).sum::<f64>() / records.len() as f64;
            (loss, mean_theta(&records))
        }
    };
    Ok(FlowTrace {
        theta_labels: (0..theta0.len()).map(|i| format!("theta_{i}")).collect(),
        records,
        best_theta,
        best_smoothed_loss,
        iterations_run,
        converged,
        skipped,
    })
}

fn mean_theta(records: &[IterationRecord]) -> Vec<f64> {
    let dim = records[0].theta.len();
    let mut mean = vec![0.0; dim];
    for r in records {
        for (m, t) in mean.iter_mut().zip(&r.theta) {
            *m += t;
        }
    }
    mean.iter_mut().for_each(|m| *m /= records.len() as f64);
    mean
}

/// One grid point of [`loss_surface`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub theta: Vec<f64>,
    /// Mean of `ρ̄` over the successful repeats; NaN when none succeeded.
    pub mean: f64,
    /// Sample standard deviation of `ρ̄` over the repeats.
    pub std: f64,
    pub failed: usize,
}

/// `ρ̄` on each grid θ, averaged over [`SURFACE_REPEATS`] minibatches of
/// `config.n_subsamples` sub-batches each. All grid points see the same
/// minibatches, drawn from `config.seed`.
pub fn loss_surface(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    grid: &[Vec<f64>],
    spec: &KernelSpec,
    config: &FlowConfig,
) -> Result<Vec<SurfacePoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty parameter grid".into()));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows but Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    config.validate(x.nrows())?;
    for theta in grid {
        spec.with_theta(theta)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let labels = if config.stratified { Some(argmax_rows(y)) } else { None };
    let batches: Vec<Minibatch> = (0..SURFACE_REPEATS)
        .map(|_| Minibatch::sample(&mut rng, x.nrows(), config, labels.as_deref()))
        .collect();
    Ok(grid
        .par_iter()
        .map(|theta| {
            let spec = spec.with_theta(theta).expect("validated above");
            let values: Vec<f64> = batches
                .iter()
                .filter_map(|mb| averaged_loss(x, y, mb, config.n_lv, &spec).ok())
                .collect();
            let k = values.len();
            let mean = if k == 0 { f64::NAN } else { values.iter().sum::<f64>() / k as f64 };
            let std = if k < 2 {
                0.0
            } else {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
            };
            SurfacePoint {
                theta: theta.clone(),
                mean,
                std,
                failed: SURFACE_REPEATS - k,
            }
        })
        .collect())
}
