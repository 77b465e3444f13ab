//! Data loading, Kernel Flows, latent-variable line search, final fit and
//! evaluation, plus the plain-PLS and un-optimized K-PLS baselines.

use std::path::Path;

use kfpls::datasets::{gen_circles, gen_peaks, load_csv, split_indices, ColumnRef, Dataset, Task};
use kfpls::flows::{run_kernel_flows, FlowTrace};
use kfpls::kernels::KernelSpec;
use kfpls::kpls::{argmax_rows, fit_kpls, KplsModel};
use kfpls::metrics::{accuracy, q2, EvalReport};
use kfpls::pls::fit_pls;
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, Settings, Source, STREAM_LV_SPLIT};
use crate::{CliError, Result};

pub fn load_data(settings: &Settings) -> Result<Dataset> {
    let seed = settings.seed;
    Ok(match &settings.source {
        Source::Peaks { n_points, noise } => gen_peaks(*n_points, *noise, seed)?,
        Source::Circles { n_per_class, n_classes, radial_noise } => {
            gen_circles(*n_per_class, *n_classes, *radial_noise, seed)?
        }
        Source::Csv { path, response, task } => {
            let response = if response.is_empty() {
                vec![ColumnRef::Index(last_column(path)?)]
            } else {
                response.clone()
            };
            load_csv(path, &response, *task, seed)?
        }
    })
}

fn last_column(path: &Path) -> Result<usize> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let n = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .len();
    n.checked_sub(1)
        .ok_or_else(|| CliError::Data(format!("{} has an empty header", path.display())))
}

/// Validation score of one latent-variable count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvScore {
    pub n_lv: usize,
    /// Accuracy for classification, Q² otherwise.
    pub score: f64,
    pub q2: f64,
}

/// Picks the latent-variable count with the best score on a held-out fifth
/// of the calibration rows; ties go to the higher Q², then the smaller count.
pub fn select_n_lv<F>(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    task: Task,
    lv_max: usize,
    seed: u64,
    fit_predict: F,
) -> Result<(usize, Vec<LvScore>)>
where
    F: Fn(usize, ArrayView2<f64>, ArrayView2<f64>, ArrayView2<f64>) -> kfpls::Result<Array2<f64>>,
{
    let (fit, val) = split_indices(x.nrows(), seed);
    let x_fit = x.select(Axis(0), &fit);
    let y_fit = y.select(Axis(0), &fit);
    let x_val = x.select(Axis(0), &val);
    let y_val = y.select(Axis(0), &val);
    let labels_val = argmax_rows(y_val.view());
    let top = lv_max.min(fit.len().saturating_sub(1)).max(1);
    let mut scores = Vec::new();
    for lv in 1..=top {
        let Ok(pred) = fit_predict(lv, x_fit.view(), y_fit.view(), x_val.view()) else {
            continue;
        };
        let q = q2(y_val.view(), pred.view(), y_fit.view()).unwrap_or(f64::NEG_INFINITY);
        let score = match task {
            Task::Regression => q,
            Task::Classification => accuracy(&labels_val, &argmax_rows(pred.view()))?,
        };
        scores.push(LvScore { n_lv: lv, score, q2: q });
    }
    let best = scores
        .iter()
        .fold(None::<&LvScore>, |best, s| match best {
            Some(b) if (b.score, b.q2) >= (s.score, s.q2) => Some(b),
            _ => Some(s),
        })
        .ok_or_else(|| CliError::Numeric("no latent-variable count could be fitted".into()))?;
    Ok((best.n_lv, scores))
}

/// Test-partition evaluation of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEval {
    pub n_lv: usize,
    /// Against the observed test responses.
    pub report: EvalReport,
    /// Against the noise-free test responses, when known.
    pub report_true: Option<EvalReport>,
    #[serde(skip)]
    pub predictions: Array2<f64>,
    #[serde(skip)]
    pub labels_pred: Vec<usize>,
}

fn evaluate(data: &Dataset, pred: Array2<f64>, n_lv: usize) -> Result<ModelEval> {
    let raw = data.responses_to_raw(pred.view())?;
    let cal = data.y_cal_raw.view();
    Ok(match data.task {
        Task::Regression => ModelEval {
            n_lv,
            report: EvalReport::regression(data.y_test_raw.view(), raw.view(), cal)?,
            report_true: match &data.y_true_test {
                Some(t) => Some(EvalReport::regression(t.view(), raw.view(), cal)?),
                None => None,
            },
            predictions: raw,
            labels_pred: Vec::new(),
        },
        Task::Classification => {
            let labels = argmax_rows(raw.view());
            ModelEval {
                n_lv,
                report: EvalReport::classification(
                    &data.labels_test,
                    &labels,
                    data.y_test_raw.view(),
                    raw.view(),
                    cal,
                )?,
                report_true: None,
                predictions: raw,
                labels_pred: labels,
            }
        }
    })
}

pub fn evaluate_kpls(data: &Dataset, spec: &KernelSpec, n_lv: usize) -> Result<(KplsModel, ModelEval)> {
    let model = fit_kpls(data.x_cal.view(), data.y_cal.view(), n_lv, spec)?;
    let pred = model.predict(data.x_test.view())?;
    let eval = evaluate(data, pred, model.n_lv())?;
    Ok((model, eval))
}

/// Linear PLS with response centering, predicting in model units.
pub fn pls_fit_predict(
    n_lv: usize,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    x_new: ArrayView2<f64>,
) -> kfpls::Result<Array2<f64>> {
    let means = y.mean_axis(Axis(0)).expect("non-empty");
    let model = fit_pls(x, (&y - &means).view(), n_lv)?;
    Ok(model.predict(x_new)? + &means)
}

pub fn kpls_fit_predict(
    spec: &KernelSpec,
) -> impl Fn(usize, ArrayView2<f64>, ArrayView2<f64>, ArrayView2<f64>) -> kfpls::Result<Array2<f64>> + '_ {
    move |lv, x, y, x_new| fit_kpls(x, y, lv, spec)?.predict(x_new)
}

pub fn evaluate_pls(data: &Dataset, n_lv: usize) -> Result<ModelEval> {
    let pred = pls_fit_predict(n_lv, data.x_cal.view(), data.y_cal.view(), data.x_test.view())?;
    evaluate(data, pred, n_lv.min(data.x_cal.ncols()))
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineResult {
    pub initial_spec: KernelSpec,
    pub spec: KernelSpec,
    pub trace: FlowTrace,
    pub lv_scores: Vec<LvScore>,
    pub kf_pls: ModelEval,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pls_baseline: Option<ModelEval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unoptimized: Option<ModelEval>,
    #[serde(skip)]
    pub model: Option<KplsModel>,
}

/// Kernel Flows from the initial spec, latent-variable line search (unless
/// `n_lv` is fixed), final fit on the calibration partition and evaluation on
/// the test partition. With `baselines`, plain PLS (its own line search) and
/// the initial spec at the final count are evaluated alongside.
pub fn run_pipeline(settings: &Settings, data: &Dataset, baselines: bool) -> Result<PipelineResult> {
    let initial_spec = settings.initial_spec()?;
    settings.flow.validate(data.x_cal.nrows())?;
    let (spec, trace) = run_kernel_flows(data.x_cal.view(), data.y_cal.view(), &settings.flow, &initial_spec)?;
    log::info!(
        "kernel flows: {} iterations, best smoothed loss {:.4}",
        trace.iterations_run,
        trace.best_smoothed_loss
    );
    let lv_seed = derive_seed(settings.seed, STREAM_LV_SPLIT);
    let (n_lv, lv_scores) = match settings.n_lv {
        Some(n) => (n, Vec::new()),
        None => select_n_lv(
            data.x_cal.view(),
            data.y_cal.view(),
            data.task,
            settings.lv_max,
            lv_seed,
            kpls_fit_predict(&spec),
        )?,
    };
    let (model, kf_pls) = evaluate_kpls(data, &spec, n_lv)?;
    let (pls_baseline, unoptimized) = if baselines {
        let p = data.x_cal.ncols();
        let (pls_lv, _) = select_n_lv(
            data.x_cal.view(),
            data.y_cal.view(),
            data.task,
            settings.lv_max.min(p),
            lv_seed,
            pls_fit_predict,
        )?;
        (
            Some(evaluate_pls(data, pls_lv)?),
            Some(evaluate_kpls(data, &initial_spec, n_lv)?.1),
        )
    } else {
        (None, None)
    };
    Ok(PipelineResult {
        initial_spec,
        spec,
        trace,
        lv_scores,
        kf_pls,
        pls_baseline,
        unoptimized,
        model: Some(model),
    })
}
