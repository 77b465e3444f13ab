//! Report, table and model-bundle files.

use std::fs;
use std::path::{Path, PathBuf};

use kfpls::datasets::{ColumnStats, Dataset, Task};
use kfpls::kpls::KplsModel;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::pipeline::{LvScore, ModelEval};
use crate::{CliError, Result};

pub const TOOL: &str = "kfpls";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const BUNDLE_FORMAT: &str = "kfpls-pipeline";
pub const BUNDLE_VERSION: u32 = 1;

/// Header of every report file.
#[derive(Debug, Clone, Serialize)]
pub struct Report<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub settings: &'a Settings,
    pub results: T,
}

pub fn write_report<T: Serialize>(dir: &Path, command: &str, settings: &Settings, results: T) -> Result<PathBuf> {
    let report = Report {
        tool: TOOL,
        version: VERSION,
        command,
        seed: settings.seed,
        settings,
        results,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    let path = dir.join("report.json");
    fs::write(&path, text + "\n")?;
    Ok(path)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

/// A fitted model together with the scaling it expects, so raw CSV rows can
/// be predicted directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub format: String,
    pub version: u32,
    pub task: Task,
    pub feature_names: Vec<String>,
    pub response_names: Vec<String>,
    pub class_names: Vec<String>,
    pub x_stats: ColumnStats,
    pub y_stats: Option<ColumnStats>,
    pub model: KplsModel,
}

impl ModelBundle {
    pub fn new(data: &Dataset, model: KplsModel) -> Self {
        Self {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            task: data.task,
            feature_names: data.feature_names.clone(),
            response_names: data.response_names.clone(),
            class_names: data.class_names.clone(),
            x_stats: data.x_stats.clone(),
            y_stats: data.y_stats.clone(),
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let bundle: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if bundle.format != BUNDLE_FORMAT || bundle.version != BUNDLE_VERSION {
            return Err(CliError::Data(format!(
                "{}: expected {BUNDLE_FORMAT} v{BUNDLE_VERSION}, found {} v{}",
                path.display(),
                bundle.format,
                bundle.version
            )));
        }
        Ok(bundle)
    }

    /// Predictions in original response units for raw predictor rows.
    pub fn predict_raw(&self, x_raw: ArrayView2<f64>) -> Result<Array2<f64>> {
        let x = kfpls::datasets::standardize(x_raw, &self.x_stats)?;
        let pred = self.model.predict(x.view())?;
        Ok(match &self.y_stats {
            Some(stats) => kfpls::datasets::destandardize(pred.view(), stats)?,
            None => pred,
        })
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Writes a CSV table from a header and string rows.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Test predictions next to the observed (and noise-free) responses.
pub fn write_predictions(path: &Path, data: &Dataset, eval: &ModelEval) -> Result<()> {
    let mut header = vec!["row".to_string()];
    let mut rows = Vec::new();
    match data.task {
        Task::Regression => {
            for name in &data.response_names {
                header.push(format!("{name}_observed"));
                if data.y_true_test.is_some() {
                    header.push(format!("{name}_true"));
                }
                header.push(format!("{name}_predicted"));
            }
            for (i, &row) in data.test_indices.iter().enumerate() {
                let mut r = vec![row.to_string()];
                for j in 0..data.response_names.len() {
                    r.push(data.y_test_raw[[i, j]].to_string());
                    if let Some(t) = &data.y_true_test {
                        r.push(t[[i, j]].to_string());
                    }
                    r.push(eval.predictions[[i, j]].to_string());
                }
                rows.push(r);
            }
        }
        Task::Classification => {
            header.push("label".into());
            header.push("predicted".into());
            header.extend(data.class_names.iter().map(|c| format!("score_{c}")));
            for (i, &row) in data.test_indices.iter().enumerate() {
                let mut r = vec![
                    row.to_string(),
                    data.class_names[data.labels_test[i]].clone(),
                    data.class_names[eval.labels_pred[i]].clone(),
                ];
                r.extend(eval.predictions.row(i).iter().map(f64::to_string));
                rows.push(r);
            }
        }
    }
    write_table(path, &header, &rows)
}

pub fn write_lv_scores(path: &Path, scores: &[LvScore]) -> Result<()> {
    let header = ["n_lv", "score", "q2"].map(String::from);
    let rows: Vec<Vec<String>> = scores
        .iter()
        .map(|s| vec![s.n_lv.to_string(), s.score.to_string(), s.q2.to_string()])
        .collect();
    write_table(path, &header, &rows)
}
