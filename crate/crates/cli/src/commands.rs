//! Subcommand bodies. Each returns its results and writes its files under the
//! settings' output directory.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use kfpls::datasets::{Dataset, Task};
use kfpls::flows::{loss_surface, SurfacePoint};
use kfpls::kernels::KernelSpec;
use kfpls::kpls::argmax_rows;
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{derive_seed, Settings, Source};
use crate::output::{
    ensure_dir, fmt_opt, write_lv_scores, write_predictions, write_report, write_table, ModelBundle,
};
use crate::pipeline::{evaluate_kpls, load_data, run_pipeline, PipelineResult};
use crate::{CliError, Result};

/// Offset of the per-point seed streams of a sweep.
pub const STREAM_SWEEP: u64 = 1000;
/// Records at the end of a trace used for the loss-spread column.
pub const TAIL_RECORDS: usize = 100;

fn write_pipeline_files(dir: &Path, data: &Dataset, result: &PipelineResult) -> Result<()> {
    let mut trace = Vec::new();
    result.trace.write_csv(&mut trace)?;
    std::fs::write(dir.join("trace.csv"), trace)?;
    write_predictions(&dir.join("predictions.csv"), data, &result.kf_pls)?;
    write_lv_scores(&dir.join("lv_search.csv"), &result.lv_scores)?;
    if let Some(model) = &result.model {
        ModelBundle::new(data, model.clone()).save(&dir.join("model.json"))?;
    }
    Ok(())
}

/// Full case-study pipeline with both baselines.
pub fn cmd_case(settings: &Settings) -> Result<PipelineResult> {
    run_and_write(settings, "case", true)
}

/// Kernel Flows and final fit on a CSV, without baselines.
pub fn cmd_optimize(settings: &Settings) -> Result<PipelineResult> {
    if !matches!(settings.source, Source::Csv { .. }) {
        return Err(CliError::Usage("optimize needs --csv".into()));
    }
    run_and_write(settings, "optimize", false)
}

fn run_and_write(settings: &Settings, command: &str, baselines: bool) -> Result<PipelineResult> {
    let data = load_data(settings)?;
    let result = run_pipeline(settings, &data, baselines)?;
    ensure_dir(&settings.out_dir)?;
    write_pipeline_files(&settings.out_dir, &data, &result)?;
    write_report(&settings.out_dir, command, settings, &result)?;
    Ok(result)
}

/// Predicts every row of a CSV with a saved model bundle. Predictor columns are
/// matched by header name; other columns are ignored.
pub fn cmd_predict(model_path: &Path, csv_path: &Path, output: &Path) -> Result<Array2<f64>> {
    let bundle = ModelBundle::load(model_path)?;
    let x = read_named_columns(csv_path, &bundle.feature_names)?;
    let pred = bundle.predict_raw(x.view())?;
    let mut header = vec!["row".to_string()];
    let mut rows = Vec::with_capacity(pred.nrows());
    match bundle.task {
        Task::Regression => {
            header.extend(bundle.response_names.iter().map(|n| format!("{n}_predicted")));
            for (i, r) in pred.rows().into_iter().enumerate() {
                let mut row = vec![i.to_string()];
                row.extend(r.iter().map(f64::to_string));
                rows.push(row);
            }
        }
        Task::Classification => {
            header.push("predicted".into());
            header.extend(bundle.class_names.iter().map(|c| format!("score_{c}")));
            let labels = argmax_rows(pred.view());
            for (i, r) in pred.rows().into_iter().enumerate() {
                let mut row = vec![i.to_string(), bundle.class_names[labels[i]].clone()];
                row.extend(r.iter().map(f64::to_string));
                rows.push(row);
            }
        }
    }
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_table(output, &header, &rows)?;
    Ok(pred)
}

fn read_named_columns(path: &Path, names: &[String]) -> Result<Array2<f64>> {
    let data_err = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| data_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| data_err(e.to_string()))?.clone();
    let cols: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h.trim() == n)
                .ok_or_else(|| data_err(format!("column `{n}` not found")))
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::new();
    let mut n_rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| data_err(e.to_string()))?;
        let line = r + 2;
        for (&c, name) in cols.iter().zip(names) {
            let field = record.get(c).unwrap_or("").trim();
            let v: f64 = field
                .parse()
                .map_err(|_| data_err(format!("line {line}, column `{name}`: `{field}` is not a number")))?;
            values.push(v);
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(data_err("no data rows".into()));
    }
    Array2::from_shape_vec((n_rows, cols.len()), values).map_err(|e| data_err(e.to_string()))
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NLv,
    Noise,
    LearningRate,
    NSubsamples,
    InitTheta,
}

impl FromStr for SweepAxis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "n_lv" => SweepAxis::NLv,
            "noise" => SweepAxis::Noise,
            "learning_rate" => SweepAxis::LearningRate,
            "n_subsamples" => SweepAxis::NSubsamples,
            "init_theta" => SweepAxis::InitTheta,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown sweep axis `{other}`; expected n_lv, noise, learning_rate, n_subsamples or init_theta"
                )))
            }
        })
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::NLv => "n_lv",
            SweepAxis::Noise => "noise",
            SweepAxis::LearningRate => "learning_rate",
            SweepAxis::NSubsamples => "n_subsamples",
            SweepAxis::InitTheta => "init_theta",
        })
    }
}

/// Comma-separated grid of numbers.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let grid: Vec<f64> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::Usage(format!("`{s}` is not a number"))))
        .collect::<Result<_>>()?;
    if grid.is_empty() {
        return Err(CliError::Usage("empty grid".into()));
    }
    Ok(grid)
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub n_lv: usize,
    pub sigma: f64,
    pub delta: f64,
    pub iterations: usize,
    pub best_loss: f64,
    pub q2: f64,
    pub nrmse: f64,
    pub rmse: f64,
    pub rmse_true: Option<f64>,
    pub q2_true: Option<f64>,
    pub accuracy: Option<f64>,
    pub tail_loss_std: f64,
}

impl SweepRow {
    const HEADER: [&'static str; 13] = [
        "value",
        "n_lv",
        "sigma",
        "delta",
        "iterations",
        "best_loss",
        "q2",
        "nrmse",
        "rmse",
        "rmse_true",
        "q2_true",
        "accuracy",
        "tail_loss_std",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.value.to_string(),
            self.n_lv.to_string(),
            self.sigma.to_string(),
            self.delta.to_string(),
            self.iterations.to_string(),
            self.best_loss.to_string(),
            self.q2.to_string(),
            self.nrmse.to_string(),
            self.rmse.to_string(),
            fmt_opt(self.rmse_true),
            fmt_opt(self.q2_true),
            fmt_opt(self.accuracy),
            self.tail_loss_std.to_string(),
        ]
    }
}

/// Sample standard deviation of the last `TAIL_RECORDS` raw losses.
pub fn tail_std(losses: &[f64]) -> f64 {
    let tail = &losses[losses.len().saturating_sub(TAIL_RECORDS)..];
    if tail.len() < 2 {
        return 0.0;
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    (tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (tail.len() - 1) as f64).sqrt()
}

fn sweep_row(value: f64, spec: &KernelSpec, result: &PipelineResult, eval: &crate::pipeline::ModelEval) -> SweepRow {
    let losses = result.trace.losses();
    SweepRow {
        value,
        n_lv: eval.n_lv,
        sigma: spec.sigma(0),
        delta: spec.delta(),
        iterations: result.trace.iterations_run,
        best_loss: result.trace.best_smoothed_loss,
        q2: eval.report.q2,
        nrmse: eval.report.nrmse_percent,
        rmse: eval.report.rmse,
        rmse_true: eval.report_true.as_ref().map(|r| r.rmse),
        q2_true: eval.report_true.as_ref().map(|r| r.q2),
        accuracy: eval.report.accuracy,
        tail_loss_std: tail_std(&losses),
    }
}

/// Settings for grid point `index` with the axis set to `value`. The data
/// keep the root seed; Kernel Flows gets its own stream per point.
pub fn point_settings(base: &Settings, axis: SweepAxis, index: usize, value: f64) -> Result<Settings> {
    let mut s = base.clone();
    s.flow.seed = derive_seed(base.seed, STREAM_SWEEP + index as u64);
    let positive = |name: &str| {
        if value > 0.0 && value.is_finite() {
            Ok(())
        } else {
            Err(CliError::Config(format!("{name} grid values must be positive, got {value}")))
        }
    };
    let count = |name: &str| {
        if value >= 1.0 && value.fract() == 0.0 {
            Ok(value as usize)
        } else {
            Err(CliError::Config(format!("{name} grid values must be positive integers, got {value}")))
        }
    };
    match axis {
        SweepAxis::NLv => s.n_lv = Some(count("n_lv")?),
        SweepAxis::Noise => {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(CliError::Config(format!("noise grid values must be non-negative, got {value}")));
            }
            match &mut s.source {
                Source::Peaks { noise, .. } => *noise = value,
                Source::Circles { radial_noise, .. } => *radial_noise = value,
                Source::Csv { .. } => {
                    return Err(CliError::Usage("the noise axis needs a generated case (1 or 2)".into()))
                }
            }
        }
        SweepAxis::LearningRate => {
            positive("learning_rate")?;
            s.flow.learning_rate = value;
            s.flow.nesterov_gamma = value;
        }
        SweepAxis::NSubsamples => s.flow.n_subsamples = count("n_subsamples")?,
        SweepAxis::InitTheta => {
            positive("init_theta")?;
            s.sigma = value;
            s.delta = value;
        }
    }
    s.flow.check_ranges()?;
    Ok(s)
}

/// One row per grid value, in grid order. The `n_lv` axis runs Kernel Flows
/// once and refits the optimized kernel at each count.
pub fn run_sweep(settings: &Settings, axis: SweepAxis, grid: &[f64]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(CliError::Usage("empty grid".into()));
    }
    if axis == SweepAxis::NLv {
        let counts: Vec<usize> = grid
            .iter()
            .enumerate()
            .map(|(i, &v)| point_settings(settings, axis, i, v).map(|s| s.n_lv.expect("set by axis")))
            .collect::<Result<_>>()?;
        let data = load_data(settings)?;
        let mut fixed = settings.clone();
        fixed.n_lv = Some(counts[0]);
        let result = run_pipeline(&fixed, &data, false)?;
        return counts
            .iter()
            .zip(grid)
            .map(|(&lv, &value)| {
                let (_, eval) = evaluate_kpls(&data, &result.spec, lv)?;
                Ok(sweep_row(value, &result.spec, &result, &eval))
            })
            .collect();
    }
    let points: Vec<Settings> = grid
        .iter()
        .enumerate()
        .map(|(i, &v)| point_settings(settings, axis, i, v))
        .collect::<Result<_>>()?;
    points
        .par_iter()
        .zip(grid.par_iter())
        .map(|(s, &value)| {
            let data = load_data(s)?;
            let result = run_pipeline(s, &data, false)?;
            Ok(sweep_row(value, &result.spec, &result, &result.kf_pls))
        })
        .collect()
}

#[derive(Serialize)]
struct SweepResults<'a> {
    axis: SweepAxis,
    grid: &'a [f64],
    rows: &'a [SweepRow],
}

pub fn cmd_sweep(settings: &Settings, axis: SweepAxis, grid: &[f64]) -> Result<Vec<SweepRow>> {
    let rows = run_sweep(settings, axis, grid)?;
    ensure_dir(&settings.out_dir)?;
    let header: Vec<String> = SweepRow::HEADER.iter().map(|s| s.to_string()).collect();
    let table: Vec<Vec<String>> = rows.iter().map(SweepRow::fields).collect();
    write_table(&settings.out_dir.join("sweep.csv"), &header, &table)?;
    write_report(&settings.out_dir, "sweep", settings, SweepResults { axis, grid, rows: &rows })?;
    Ok(rows)
}

/// One (σ, δ) cell of a loss map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceCell {
    pub sigma: f64,
    pub delta: f64,
    pub mean: f64,
    pub std: f64,
    pub failed: usize,
}

/// Averaged loss over the product of the σ and δ grids (σ varies slowest).
/// With several kernel families every family gets the same σ.
pub fn run_loss_surface(settings: &Settings, sigmas: &[f64], deltas: &[f64]) -> Result<Vec<SurfaceCell>> {
    if sigmas.is_empty() || deltas.is_empty() {
        return Err(CliError::Usage("sigma and delta grids must be non-empty".into()));
    }
    let base = settings.initial_spec()?;
    let k = base.families().len();
    let mut grid = Vec::with_capacity(sigmas.len() * deltas.len());
    for &sigma in sigmas {
        for &delta in deltas {
            let spec = KernelSpec::with_params(
                base.families().to_vec(),
                &vec![sigma; k],
                &vec![1.0 / k as f64; k],
                delta,
            )?;
            grid.push(spec.theta());
        }
    }
    let data = load_data(settings)?;
    let points: Vec<SurfacePoint> =
        loss_surface(data.x_cal.view(), data.y_cal.view(), &grid, &base, &settings.flow)?;
    let mut cells = Vec::with_capacity(points.len());
    let mut it = points.into_iter();
    for &sigma in sigmas {
        for &delta in deltas {
            let p = it.next().expect("one point per cell");
            cells.push(SurfaceCell { sigma, delta, mean: p.mean, std: p.std, failed: p.failed });
        }
    }
    Ok(cells)
}

#[derive(Serialize)]
struct SurfaceResults<'a> {
    sigmas: &'a [f64],
    deltas: &'a [f64],
    cells: &'a [SurfaceCell],
}

pub fn cmd_loss_surface(settings: &Settings, sigmas: &[f64], deltas: &[f64]) -> Result<Vec<SurfaceCell>> {
    let cells = run_loss_surface(settings, sigmas, deltas)?;
    ensure_dir(&settings.out_dir)?;
    let header = ["sigma", "delta", "mean", "std", "failed"].map(String::from);
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.sigma.to_string(),
                c.delta.to_string(),
                c.mean.to_string(),
                c.std.to_string(),
                c.failed.to_string(),
            ]
        })
        .collect();
    write_table(&settings.out_dir.join("loss_surface.csv"), &header, &rows)?;
    write_report(
        &settings.out_dir,
        "loss-surface",
        settings,
        SurfaceResults { sigmas, deltas, cells: &cells },
    )?;
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_names_round_trip() {
        for name in ["n_lv", "noise", "learning_rate", "n_subsamples", "init_theta"] {
            assert_eq!(name.parse::<SweepAxis>().unwrap().to_string(), name);
        }
        assert!(matches!("sigma".parse::<SweepAxis>(), Err(CliError::Usage(_))));
    }

    #[test]
    fn grids_parse_and_reject_garbage() {
        assert_eq!(parse_grid("0.05, 0.1,0.2").unwrap(), vec![0.05, 0.1, 0.2]);
        assert!(parse_grid("").is_err());
        assert!(parse_grid("1,x").is_err());
    }

    #[test]
    fn tail_std_uses_last_records_only() {
        let mut losses = vec![100.0; 50];
        losses.extend(std::iter::repeat_n(1.0, TAIL_RECORDS));
        assert_eq!(tail_std(&losses), 0.0);
        assert_eq!(tail_std(&[3.0]), 0.0);
        assert!((tail_std(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
    }
}
