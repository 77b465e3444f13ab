//! Run configuration: a flat TOML file, case presets and command-line
//! overrides, resolved into [`Settings`].

use std::fs;
use std::path::{Path, PathBuf};

use kfpls::datasets::{ColumnRef, Task};
use kfpls::flows::{FlowConfig, UpdateRule};
use kfpls::kernels::{parse_families, KernelFamily, KernelSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Keys accepted in a config file. Every key is optional; unknown keys are
/// rejected.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub case: Option<u8>,
    pub csv: Option<PathBuf>,
    /// Response column names or 0-based indices, comma separated.
    pub response: Option<String>,
    pub task: Option<String>,
    pub kernel: Option<String>,
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
    pub n_points: Option<usize>,
    pub noise: Option<f64>,
    pub n_per_class: Option<usize>,
    pub n_classes: Option<usize>,
    pub radial_noise: Option<f64>,
    pub n_lv: Option<usize>,
    pub lv_max: Option<usize>,
    pub iterations: Option<usize>,
    pub n_subsamples: Option<usize>,
    pub batch_fraction: Option<f64>,
    pub sub_fraction: Option<f64>,
    pub kf_n_lv: Option<usize>,
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub nesterov_gamma: Option<f64>,
    pub update_rule: Option<String>,
    pub smoothing_window: Option<usize>,
    pub tolerance: Option<f64>,
    pub patience: Option<usize>,
    pub lr_decay: Option<bool>,
    pub stratified: Option<bool>,
    pub fd_step: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn merge(mut self, other: FileConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            case, csv, response, task, kernel, sigma, delta, n_points, noise, n_per_class,
            n_classes, radial_noise, n_lv, lv_max, iterations, n_subsamples, batch_fraction,
            sub_fraction, kf_n_lv, learning_rate, momentum, nesterov_gamma, update_rule,
            smoothing_window, tolerance, patience, lr_decay, stratified, fd_step, seed, out_dir
        );
        self
    }
}

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Peaks { n_points: usize, noise: f64 },
    Circles { n_per_class: usize, n_classes: usize, radial_noise: f64 },
    /// An empty `response` list selects the last column.
    Csv { path: PathBuf, response: Vec<ColumnRef>, task: Task },
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub case: Option<u8>,
    pub source: Source,
    pub kernel: Vec<KernelFamily>,
    pub sigma: f64,
    pub delta: f64,
    /// Fixed final latent-variable count; `None` selects it by line search.
    pub n_lv: Option<usize>,
    pub lv_max: usize,
    pub flow: FlowConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Settings {
    pub fn initial_spec(&self) -> Result<KernelSpec, CliError> {
        let k = self.kernel.len();
        let spec = KernelSpec::with_params(
            self.kernel.clone(),
            &vec![self.sigma; k],
            &vec![1.0 / k as f64; k],
            self.delta,
        )?;
        Ok(spec)
    }

    pub fn task(&self) -> Task {
        match &self.source {
            Source::Peaks { .. } => Task::Regression,
            Source::Circles { .. } => Task::Classification,
            Source::Csv { task, .. } => *task,
        }
    }
}

/// Values a case starts from before the config file and flags apply.
pub fn preset(case: Option<u8>) -> Result<FileConfig, CliError> {
    let base = FileConfig {
        kernel: Some("gaussian".into()),
        sigma: Some(1.0),
        delta: Some(1.0),
        lv_max: Some(25),
        iterations: Some(500),
        seed: Some(0),
        out_dir: Some(PathBuf::from("kfpls-out")),
        ..FileConfig::default()
    };
    let case_values = match case {
        None => FileConfig {
            kf_n_lv: Some(5),
            ..FileConfig::default()
        },
        Some(1) => FileConfig {
            case,
            n_points: Some(200),
            noise: Some(0.05),
            kf_n_lv: Some(15),
            batch_fraction: Some(0.5),
            sub_fraction: Some(0.5),
            learning_rate: Some(0.1),
            ..FileConfig::default()
        },
        Some(2) => FileConfig {
            case,
            n_per_class: Some(100),
            n_classes: Some(4),
            radial_noise: Some(kfpls::datasets::DEFAULT_RADIAL_NOISE),
            kf_n_lv: Some(15),
            batch_fraction: Some(0.25),
            sub_fraction: Some(0.5),
            learning_rate: Some(0.1),
            momentum: Some(0.9),
            update_rule: Some("nesterov".into()),
            stratified: Some(true),
            patience: Some(0),
            ..FileConfig::default()
        },
        Some(3) => FileConfig {
            case,
            kernel: Some("cauchy".into()),
            kf_n_lv: Some(10),
            ..FileConfig::default()
        },
        Some(4) => FileConfig {
            case,
            kf_n_lv: Some(10),
            ..FileConfig::default()
        },
        Some(other) => {
            return Err(CliError::Usage(format!("unknown case `{other}`; expected 1 to 4")))
        }
    };
    Ok(base.merge(case_values))
}

fn parse_responses(list: &str) -> Result<Vec<ColumnRef>, CliError> {
    list.split(',')
        .map(|s| s.parse::<ColumnRef>().map_err(CliError::from))
        .collect()
}

/// Resolves merged values into settings, validating everything that can be
/// checked without data.
pub fn resolve(c: FileConfig) -> Result<Settings, CliError> {
    let need = |name: &str| CliError::Config(format!("missing `{name}`"));
    let source = match (c.case, &c.csv) {
        (Some(1), _) => Source::Peaks {
            n_points: c.n_points.ok_or_else(|| need("n_points"))?,
            noise: c.noise.ok_or_else(|| need("noise"))?,
        },
        (Some(2), _) => Source::Circles {
            n_per_class: c.n_per_class.ok_or_else(|| need("n_per_class"))?,
            n_classes: c.n_classes.ok_or_else(|| need("n_classes"))?,
            radial_noise: c.radial_noise.ok_or_else(|| need("radial_noise"))?,
        },
        (case, Some(path)) => {
            let task = match &c.task {
                Some(t) => t.parse()?,
                None => Task::Regression,
            };
            let response = match &c.response {
                Some(r) => parse_responses(r)?,
                None if case == Some(3) || case == Some(4) => Vec::new(),
                None => return Err(need("response")),
            };
            Source::Csv { path: path.clone(), response, task }
        }
        (Some(case), None) => {
            return Err(CliError::Data(format!(
                "case {case} needs an external CSV; pass --csv <file>"
            )))
        }
        (None, None) => return Err(CliError::Usage("no data source; give a case or a CSV".into())),
    };

    let kernel = parse_families(c.kernel.as_deref().unwrap_or("gaussian"))?;
    let sigma = c.sigma.ok_or_else(|| need("sigma"))?;
    let delta = c.delta.ok_or_else(|| need("delta"))?;
    for (name, v) in [("sigma", sigma), ("delta", delta)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Config(format!("`{name}` must be positive, got {v}")));
        }
    }
    let defaults = FlowConfig::default();
    let update_rule: UpdateRule = match &c.update_rule {
        Some(r) => r.parse()?,
        None => defaults.update_rule,
    };
    let learning_rate = c.learning_rate.unwrap_or(defaults.learning_rate);
    let seed = c.seed.unwrap_or(0);
    let flow = FlowConfig {
        n_iter: c.iterations.unwrap_or(defaults.n_iter),
        n_subsamples: c.n_subsamples.unwrap_or(defaults.n_subsamples),
        batch_fraction: c.batch_fraction.unwrap_or(defaults.batch_fraction),
        sub_fraction: c.sub_fraction.unwrap_or(defaults.sub_fraction),
        n_lv: c.kf_n_lv.unwrap_or(defaults.n_lv),
        learning_rate,
        momentum: c.momentum.unwrap_or(defaults.momentum),
        nesterov_gamma: c.nesterov_gamma.unwrap_or(learning_rate),
        update_rule,
        seed: derive_seed(seed, STREAM_FLOWS),
        smoothing_window: c.smoothing_window.unwrap_or(defaults.smoothing_window),
        tolerance: c.tolerance.unwrap_or(defaults.tolerance),
        patience: c.patience.unwrap_or(defaults.patience),
        lr_decay: c.lr_decay.unwrap_or(defaults.lr_decay),
        stratified: c.stratified.unwrap_or(defaults.stratified),
        fd_step: c.fd_step.unwrap_or(defaults.fd_step),
    };
    flow.check_ranges()?;
    if c.n_lv == Some(0) {
        return Err(CliError::Config("`n_lv` must be positive".into()));
    }
    let lv_max = c.lv_max.unwrap_or(25);
    if lv_max == 0 {
        return Err(CliError::Config("`lv_max` must be positive".into()));
    }
    Ok(Settings {
        case: c.case,
        source,
        kernel,
        sigma,
        delta,
        n_lv: c.n_lv,
        lv_max,
        flow,
        seed,
        out_dir: c.out_dir.unwrap_or_else(|| PathBuf::from("kfpls-out")),
    })
}

pub const STREAM_FLOWS: u64 = 1;
pub const STREAM_LV_SPLIT: u64 = 2;

/// Independent seed for a named stream under a root seed (SplitMix64 mix).
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut z = root
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
