//! Kernel PLS: SIMPLS between the centered training Gram matrix and the
//! responses.
//!
//! Responses are column-centered before SIMPLS and the means are added back
//! at prediction time, so the kernel-space coefficients carry no intercept.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::kernels::{center_train, gram_test, gram_train, CenteringStats, KernelSpec};
use crate::pls::{fit_pls, PlsModel};
use crate::{Error, Result};

/// Format tag written into serialized model files.
pub const MODEL_FORMAT: &str = "kfpls-model";
/// Current model file schema version.
pub const MODEL_VERSION: u32 = 1;

/// A fitted kernel PLS model. Self-contained: it keeps the training inputs
/// needed to build test kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KplsModel {
    spec: KernelSpec,
    x_train: Array2<f64>,
    stats: CenteringStats,
    pls: PlsModel,
    y_means: Array1<f64>,
}

/// A fit together with the centered training Gram it was computed from.
pub(crate) struct KplsFit {
    pub model: KplsModel,
    pub centered_gram: Array2<f64>,
}

impl KplsFit {
    /// `trace(Bᵀ K̃ B)`, the squared kernel-space norm of the fitted map.
    pub fn coefficient_norm(&self) -> f64 {
        let b = self.model.pls.coefficients();
        let kb = self.centered_gram.dot(b);
        b.iter().zip(kb.iter()).map(|(x, y)| x * y).sum()
    }
}

/// Fits K-PLS: builds `K + δI`, centers it, runs SIMPLS against the centered
/// responses and keeps `B = W(PᵀW)⁻¹Qᵀ`.
pub fn fit_kpls(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    n_lv: usize,
    spec: &KernelSpec,
) -> Result<KplsModel> {
    fit_with_gram(x, y, n_lv, spec).map(|fit| fit.model)
}

pub(crate) fn fit_with_gram(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    n_lv: usize,
    spec: &KernelSpec,
) -> Result<KplsFit> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "X has {n} rows but Y has {}",
            y.nrows()
        )));
    }
    if y.ncols() == 0 {
        return Err(Error::EmptyData("no response columns".into()));
    }
    let gram = gram_train(spec, x)?;
    let (centered_gram, stats) = center_train(gram.view())?;
    let y_means = y.mean_axis(Axis(0)).expect("n >= 2");
    let y_centered = &y - &y_means;
    let pls = fit_pls(centered_gram.view(), y_centered.view(), n_lv)?;
    Ok(KplsFit {
        model: KplsModel {
            spec: spec.clone(),
            x_train: x.to_owned(),
            stats,
            pls,
            y_means,
        },
        centered_gram,
    })
}

impl KplsModel {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn n_lv(&self) -> usize {
        self.pls.n_lv()
    }

    pub fn pls(&self) -> &PlsModel {
        &self.pls
    }

    /// Kernel-space coefficients, n × m.
    pub fn coefficients(&self) -> &Array2<f64> {
        self.pls.coefficients()
    }

    pub fn centering(&self) -> &CenteringStats {
        &self.stats
    }

    pub fn x_train(&self) -> &Array2<f64> {
        &self.x_train
    }

    pub fn y_means(&self) -> &Array1<f64> {
        &self.y_means
    }

    pub fn n_features(&self) -> usize {
        self.x_train.ncols()
    }

    pub fn n_targets(&self) -> usize {
        self.y_means.len()
    }

    /// `Ŷ = K̃_test B + ȳ`.
    pub fn predict(&self, x_new: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x_new.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x_new.ncols()
            )));
        }
        let k_test = gram_test(&self.spec, x_new, self.x_train.view(), &self.stats)?;
        Ok(k_test.dot(self.pls.coefficients()) + &self.y_means)
    }

    /// Class index per row: argmax over the predicted one-hot columns, ties
    /// going to the lowest index.
    pub fn classify(&self, x_new: ArrayView2<f64>) -> Result<Vec<usize>> {
        if self.n_targets() < 2 {
            return Err(Error::InvalidArgument(
                "classification needs a model fitted on two or more one-hot columns".into(),
            ));
        }
        Ok(argmax_rows(self.predict(x_new)?.view()))
    }

    /// Writes the model as a versioned JSON document. Floats round-trip
    /// exactly.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFileRef {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            model: self,
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Format(format!("unexpected format tag `{}`", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                file.version
            )));
        }
        Ok(file.model)
    }
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format: &'a str,
    version: u32,
    model: &'a KplsModel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    model: KplsModel,
}

/// Row-wise argmax with ties broken towards the lowest column.
pub fn argmax_rows(scores: ArrayView2<f64>) -> Vec<usize> {
    scores
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
