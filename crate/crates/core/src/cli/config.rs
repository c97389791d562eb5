use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lla::{DEFAULT_EXACT_CAP, DEFAULT_PARAM_CAP, PRIOR_GRID};
use crate::nn::Activation;
use crate::valla::TrainSchedule;

/// Posterior method selected by a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Map,
    LlaExact,
    LlaDiag,
    LlaLastLayer,
    Valla,
    Ella,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Map,
        Method::LlaExact,
        Method::LlaDiag,
        Method::LlaLastLayer,
        Method::Valla,
        Method::Ella,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Map => "map",
            Method::LlaExact => "lla_exact",
            Method::LlaDiag => "lla_diag",
            Method::LlaLastLayer => "lla_last_layer",
            Method::Valla => "valla",
            Method::Ella => "ella",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s.trim()).ok_or_else(|| {
            let valid: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            Error::config(format!("unknown method `{s}`; valid methods: {}", valid.join(", ")))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Toy,
    Csv,
    Idx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Toy: number of points.
    pub n: usize,
    /// CSV: file path.
    pub path: Option<PathBuf>,
    /// CSV: zero-based target column; the last column when absent.
    pub target_column: Option<usize>,
    /// CSV: number of classes for classification; regression when absent.
    pub classes: Option<usize>,
    /// IDX: image and label files of the training set.
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// IDX: optional separate test files, replacing the test split.
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// IDX: read at most this many examples per file.
    pub limit: Option<usize>,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub shuffle: bool,
    pub standardize: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Toy,
            n: 200,
            path: None,
            target_column: None,
            classes: None,
            images: None,
            labels: None,
            test_images: None,
            test_labels: None,
            limit: None,
            split: [0.8, 0.1, 0.1],
            shuffle: true,
            standardize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            hidden: vec![50, 50],
            activation: Activation::Tanh,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            iterations: 12_000,
            batch_size: 64,
            learning_rate: 1e-3,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorConfig {
    /// σ₀²; tuned on `prior_grid` when absent.
    pub prior_variance: Option<f64>,
    /// σ² (regression); tuned on `noise_grid` when absent.
    pub noise_variance: Option<f64>,
    /// `[lo, hi, points]`, log-spaced.
    pub prior_grid: (f64, f64, usize),
    pub noise_grid: (f64, f64, usize),
    pub exact_cap: usize,
    pub param_cap: usize,
    /// VaLLA: inducing points `M_β`.
    pub inducing: usize,
    pub alpha: f64,
    /// VaLLA: also train σ₀² and σ².
    pub train_hyperparameters: bool,
    pub train_inducing: bool,
    /// ELLA: anchors `M` and feature dimension `K`.
    pub anchors: usize,
    pub feature_dim: usize,
    pub max_points: Option<usize>,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        PosteriorConfig {
            prior_variance: None,
            noise_variance: None,
            prior_grid: PRIOR_GRID,
            noise_grid: (1e-3, 1.0, 7),
            exact_cap: DEFAULT_EXACT_CAP,
            param_cap: DEFAULT_PARAM_CAP,
            inducing: 20,
            alpha: 1.0,
            train_hyperparameters: true,
            train_inducing: true,
            anchors: 20,
            feature_dim: 10,
            max_points: None,
        }
    }
}

/// Everything a run needs; parsed from TOML, every field optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub method: Method,
    pub dataset: DatasetConfig,
    pub architecture: ArchitectureConfig,
    pub train: TrainSection,
    pub posterior: PosteriorConfig,
    pub schedule: TrainSchedule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            method: Method::Valla,
            dataset: DatasetConfig::default(),
            architecture: ArchitectureConfig::default(),
            train: TrainSection::default(),
            posterior: PosteriorConfig::default(),
            schedule: TrainSchedule::default(),
        }
    }
}

fn require_file(what: &str, path: &Option<PathBuf>) -> Result<()> {
    match path {
        None => Err(Error::config(format!("dataset.{what} is required for this dataset kind"))),
        Some(p) if !p.is_file() => Err(Error::config(format!("dataset.{what} `{}` does not exist", p.display()))),
        Some(_) => Ok(()),
    }
}

fn check_grid(name: &str, g: (f64, f64, usize)) -> Result<()> {
    if !(g.0 > 0.0 && g.1 >= g.0 && g.2 >= 1 && g.1.is_finite()) {
        return Err(Error::config(format!("posterior.{name} must be (lo > 0, hi ≥ lo, points ≥ 1)")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config `{}`: {e}", path.display())))?;
        let cfg = ExperimentConfig::from_toml(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Fails fast on anything that would only surface after compute started.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        match d.kind {
            DatasetKind::Toy => {
                if d.n < 3 {
                    return Err(Error::config("dataset.n must be at least 3"));
                }
            }
            DatasetKind::Csv => {
                require_file("path", &d.path)?;
                if d.classes == Some(0) {
                    return Err(Error::config("dataset.classes must be ≥ 1"));
                }
            }
            DatasetKind::Idx => {
                require_file("images", &d.images)?;
                require_file("labels", &d.labels)?;
                if d.test_images.is_some() != d.test_labels.is_some() {
                    return Err(Error::config("dataset.test_images and dataset.test_labels go together"));
                }
                if d.test_images.is_some() {
                    require_file("test_images", &d.test_images)?;
                    require_file("test_labels", &d.test_labels)?;
                }
            }
        }
        let s: f64 = d.split.iter().sum();
        if d.split.iter().any(|f| !(*f >= 0.0)) || (s - 1.0).abs() > 1e-9 || d.split[0] <= 0.0 {
            return Err(Error::config("dataset.split must be three nonnegative fractions summing to 1"));
        }
        if self.architecture.hidden.iter().any(|w| *w == 0) {
            return Err(Error::config("architecture.hidden widths must be ≥ 1"));
        }
        let t = &self.train;
        if t.iterations == 0 || t.batch_size == 0 || !(t.learning_rate >= 0.0) || !(t.weight_decay >= 0.0) {
            return Err(Error::config("train: iterations and batch_size ≥ 1, learning_rate and weight_decay ≥ 0"));
        }
        let p = &self.posterior;
        for (name, v) in [("prior_variance", p.prior_variance), ("noise_variance", p.noise_variance)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("posterior.{name} must be positive")));
                }
            }
        }
        check_grid("prior_grid", p.prior_grid)?;
        check_grid("noise_grid", p.noise_grid)?;
        if !(p.alpha > 0.0 && p.alpha <= 1.0) {
            return Err(Error::config("posterior.alpha must lie in (0, 1]"));
        }
        if p.inducing == 0 || p.anchors == 0 || p.feature_dim == 0 {
            return Err(Error::config("posterior.inducing, anchors and feature_dim must be ≥ 1"));
        }
        self.schedule.validate()?;
        Ok(())
    }
}

/// The default configuration as commented TOML.
pub fn default_config_toml() -> String {
    let mut out = String::from(
        "# Defaults for every key. Unset optional keys (prior_variance, noise_variance, path,\n\
         # target_column, classes, images, labels, test_images, test_labels, limit, max_points)\n\
         # are omitted. Methods: map, lla_exact, lla_diag, lla_last_layer, valla, ella.\n\
         # Dataset kinds: toy (uses n), csv (path, target_column, classes), idx (images, labels).\n\n",
    );
    out.push_str(&ExperimentConfig::default().to_toml());
    out
}
