use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{DatasetKind, ExperimentConfig, Method, Posterior, StateFile};
use crate::data::{load_csv, load_idx_images, split, synth_toy1d, Dataset, Normalization, SplitOrder, SplitSpec, Task};
use crate::ella::{fit_ella, EllaConfig};
use crate::error::{Error, Result};
use crate::kernel::KernelContext;
use crate::linalg::Matrix;
use crate::lla::{
    fit_exact_with_cap, fit_weight_space_with_cap, log_grid, tune_prior_variance, LikelihoodModel, WeightSpaceKind,
};
use crate::metrics::{entropy, class_probabilities, evaluate, ood_auc, write_coverage_csv, MetricsReport};
use crate::nn::{load_network, save_network, train_map, write_training_log, LossKind, MlpArchitecture, MlpNetwork, TrainConfig};
use crate::valla::{fit_valla, write_valla_log, VallaOptions};

pub const CONFIG_COPY: &str = "config.toml";
pub const CHECKPOINT: &str = "map.ckpt";
pub const TRAIN_LOG: &str = "train_log.csv";

/// Raw splits plus the statistics fitted on the raw training split.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub normalization: Option<Normalization>,
}

impl PreparedData {
    /// A split in the scale the network was trained on.
    pub fn normalized(&self, ds: &Dataset) -> Result<Dataset> {
        match &self.normalization {
            Some(n) => n.apply(ds),
            None => Ok(ds.clone()),
        }
    }

    pub fn split(&self, which: Split) -> &Dataset {
        match which {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!("unknown split `{other}`; valid splits: train, validation, test"))),
        }
    }
}

fn csv_width(path: &Path) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::config(format!("cannot read `{}`: {e}", path.display())))?;
    for record in reader.records() {
        let record = record.map_err(|e| Error::config(format!("cannot read `{}`: {e}", path.display())))?;
        if !record.iter().all(|f| f.trim().is_empty()) {
            return Ok(record.len());
        }
    }
    Err(Error::EmptyFile)
}

/// Loads the configured dataset, splits it and fits the normalization on the training part.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let d = &cfg.dataset;
    let full = match d.kind {
        DatasetKind::Toy => synth_toy1d(d.n, cfg.seed),
        DatasetKind::Csv => {
            let path = d.path.as_ref().expect("validated");
            let target = match d.target_column {
                Some(t) => t,
                None => csv_width(path)?.saturating_sub(1),
            };
            let task = match d.classes {
                Some(classes) => Task::Classification { classes },
                None => Task::Regression,
            };
            load_csv(path, target, task)?
        }
        DatasetKind::Idx => load_idx_images(
            d.images.as_ref().expect("validated"),
            d.labels.as_ref().expect("validated"),
            d.limit,
        )?,
    };
    let order = if d.shuffle {
        SplitOrder::Shuffled { seed: cfg.seed }
    } else {
        SplitOrder::Sequential
    };
    let separate_test = d.kind == DatasetKind::Idx && d.test_images.is_some();
    let fractions = if separate_test {
        // the held-out files replace the test fraction
        let tv = d.split[0] + d.split[1];
        [d.split[0] / tv, d.split[1] / tv, 0.0]
    } else {
        d.split
    };
    let (train, validation, mut test) = split(&full, &SplitSpec { fractions, order })?;
    if separate_test {
        test = load_idx_images(
            d.test_images.as_ref().expect("validated"),
            d.test_labels.as_ref().expect("validated"),
            d.limit,
        )?;
    }
    if train.is_empty() {
        return Err(Error::config("the training split is empty"));
    }
    let normalization = d.standardize.then(|| Normalization::fit(&train));
    Ok(PreparedData {
        train,
        validation,
        test,
        normalization,
    })
}

fn architecture(cfg: &ExperimentConfig, data: &PreparedData) -> MlpArchitecture {
    let mut arch = MlpArchitecture::new(data.train.input_dim(), &cfg.architecture.hidden, data.train.output_dim());
    arch.activation = cfg.architecture.activation;
    arch
}

fn create_output_dir(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    std::fs::write(cfg.output_dir.join(CONFIG_COPY), cfg.to_toml())?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Trains the MAP network and writes the checkpoint and its training log.
pub fn cmd_train_map(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let train = data.normalized(&data.train)?;
    let arch = architecture(cfg, &data);
    arch.validate()?;
    let tc = TrainConfig {
        iterations: cfg.train.iterations,
        batch_size: cfg.train.batch_size,
        learning_rate: cfg.train.learning_rate,
        weight_decay: cfg.train.weight_decay,
        seed: cfg.seed,
        loss: if train.is_classification() {
            LossKind::NllClassification
        } else {
            LossKind::Rmse
        },
    };
    tc.validate()?;
    create_output_dir(cfg)?;
    let outcome = train_map(&arch, &train, &tc)?;
    let path = cfg.output_dir.join(CHECKPOINT);
    save_network(&outcome.network, &path)?;
    write_training_log(&outcome.log, &cfg.output_dir.join(TRAIN_LOG))?;
    log::info!("MAP network written to {}", path.display());
    Ok(path)
}

/// Deterministic summary of a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub method: Method,
    pub prior_variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<f64>,
    /// Hyperparameters came from the grid search rather than the config.
    pub tuned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations_run: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped_early: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_objective: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub method: Method,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub state_path: PathBuf,
    pub summary: FitSummary,
    pub seconds: f64,
}

pub fn state_path(cfg: &ExperimentConfig, method: Method) -> PathBuf {
    cfg.output_dir.join(format!("{}.state", method.name()))
}

fn load_checkpoint(path: &Path, data: &PreparedData) -> Result<MlpNetwork> {
    if !path.is_file() {
        return Err(Error::config(format!("checkpoint `{}` does not exist; run train-map first", path.display())));
    }
    let net = load_network(path)?;
    if net.input_dim() != data.train.input_dim() || net.output_dim() != data.train.output_dim() {
        return Err(Error::config(format!(
            "checkpoint maps {} → {} but the dataset has {} inputs and {} outputs",
            net.input_dim(),
            net.output_dim(),
            data.train.input_dim(),
            data.train.output_dim()
        )));
    }
    Ok(net)
}

/// Prior and noise variance: configured values, else a grid search on the exact marginal
/// likelihood (or Laplace evidence) of the training split.
fn hyperparameters(
    cfg: &ExperimentConfig,
    net: &Arc<MlpNetwork>,
    train: &Dataset,
) -> Result<(f64, Option<f64>, bool)> {
    let p = &cfg.posterior;
    let classification = train.is_classification();
    let noise_known = classification || p.noise_variance.is_some();
    if let (Some(s2), true) = (p.prior_variance, noise_known) {
        return Ok((s2, p.noise_variance.filter(|_| !classification), false));
    }
    let prior_grid = match p.prior_variance {
        Some(v) => vec![v],
        None => log_grid(p.prior_grid.0, p.prior_grid.1, p.prior_grid.2),
    };
    let noise_grid = log_grid(p.noise_grid.0, p.noise_grid.1, p.noise_grid.2);
    let likelihood = if classification {
        LikelihoodModel::Categorical
    } else {
        LikelihoodModel::Gaussian {
            noise_variance: p.noise_variance.unwrap_or(1.0),
        }
    };
    let ctx = KernelContext::new(net.clone(), 0.0)?;
    let grid = tune_prior_variance(
        &ctx,
        likelihood,
        &train.inputs,
        &train.targets,
        &prior_grid,
        (!noise_known).then_some(noise_grid.as_slice()),
    )?;
    log::info!("selected σ₀² = {:e}, σ² = {:?}", grid.prior_variance, grid.noise_variance);
    Ok((grid.prior_variance, grid.noise_variance, true))
}

/// Fits the configured method on top of the checkpoint and writes the state, a deterministic
/// fit summary, and a separate wall-clock record.
pub fn cmd_fit(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<FitOutcome> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let net = Arc::new(load_checkpoint(checkpoint, &data)?);
    std::fs::create_dir_all(&cfg.output_dir)?;
    fit_loaded(cfg, &data, net)
}

fn fit_loaded(cfg: &ExperimentConfig, data: &PreparedData, net: Arc<MlpNetwork>) -> Result<FitOutcome> {
    let method = cfg.method;
    let train = data.normalized(&data.train)?;
    let start = Instant::now();
    let (prior_variance, noise_variance, tuned) = hyperparameters(cfg, &net, &train)?;
    let likelihood = match noise_variance {
        Some(noise_variance) => LikelihoodModel::Gaussian { noise_variance },
        None => LikelihoodModel::Categorical,
    };
    let ctx = KernelContext::new(net.clone(), prior_variance.ln())?;
    let p = &cfg.posterior;
    let mut summary = FitSummary {
        method,
        prior_variance,
        noise_variance,
        tuned,
        iterations_run: None,
        stopped_early: None,
        final_objective: None,
    };
    let x = &train.inputs;
    let posterior = match method {
        Method::Map => Posterior::Map { net, likelihood },
        Method::LlaExact => Posterior::Exact(fit_exact_with_cap(&ctx, likelihood, x, p.exact_cap)?),
        Method::LlaDiag => Posterior::Weight(fit_weight_space_with_cap(
            &ctx,
            likelihood,
            x,
            WeightSpaceKind::Diagonal,
            usize::MAX,
        )?),
        Method::LlaLastLayer => Posterior::Weight(fit_weight_space_with_cap(
            &ctx,
            likelihood,
            x,
            WeightSpaceKind::LastLayer,
            p.param_cap,
        )?),
        Method::Valla => {
            let validation = data.normalized(&data.validation)?;
            let options = VallaOptions {
                alpha: p.alpha,
                train_prior_variance: p.train_hyperparameters,
                train_noise_variance: p.train_hyperparameters && !likelihood.is_categorical(),
                train_inducing: p.train_inducing,
                data_term: None,
            };
            let fit = fit_valla(
                &ctx,
                likelihood,
                &train,
                (!validation.is_empty()).then_some(&validation),
                p.inducing,
                &cfg.schedule,
                &options,
            )?;
            write_valla_log(&fit.log, &cfg.output_dir.join("valla_log.csv"))?;
            summary.iterations_run = Some(fit.iterations_run);
            summary.stopped_early = Some(fit.stopped_early);
            summary.final_objective = fit.log.last().map(|r| r.objective);
            summary.prior_variance = fit.state.log_prior_variance().exp();
            summary.noise_variance = fit.state.likelihood.noise_variance();
            Posterior::Valla(fit.state)
        }
        Method::Ella => {
            let ella = EllaConfig {
                anchors: p.anchors,
                feature_dim: p.feature_dim,
                seed: cfg.seed,
                max_points: p.max_points,
            };
            Posterior::Ella(fit_ella(&ctx, likelihood, x, &ella)?)
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let state = StateFile {
        posterior,
        normalization: data.normalization.clone(),
    };
    let state_path = state_path(cfg, method);
    state.save(&state_path)?;
    write_json(&cfg.output_dir.join(format!("{}_fit.json", method.name())), &summary)?;
    write_json(&cfg.output_dir.join(format!("{}_timing.json", method.name())), &Timing { method, seconds })?;
    log::info!("{} fitted in {seconds:.2}s, state at {}", method.name(), state_path.display());
    Ok(FitOutcome {
        state_path,
        summary,
        seconds,
    })
}

/// Evaluates a fitted state on one split, in the raw target scale. Writes
/// `<method>_<split>_metrics.json` plus the coverage curve (regression) or the per-point
/// predictive entropies (classification).
pub fn cmd_evaluate(cfg: &ExperimentConfig, state: &Path, which: Split) -> Result<MetricsReport> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let state = StateFile::load(state)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    evaluate_loaded(cfg, &data, &state, which)
}

fn evaluate_loaded(cfg: &ExperimentConfig, data: &PreparedData, state: &StateFile, which: Split) -> Result<MetricsReport> {
    let ds = data.split(which);
    if ds.is_empty() {
        return Err(Error::config(format!("the {} split is empty", which.name())));
    }
    let pred = state.predict_raw(&ds.inputs)?;
    let report = evaluate(&pred, &ds.targets, None)?;
    let stem = format!("{}_{}", state.posterior.method().name(), which.name());
    std::fs::write(cfg.output_dir.join(format!("{stem}_metrics.json")), report.to_json() + "\n")?;
    match &report.coverage {
        Some(curve) => write_coverage_csv(curve, &cfg.output_dir.join(format!("{stem}_coverage.csv")))?,
        None => write_entropy_csv(&entropy(&class_probabilities(&pred)), &cfg.output_dir.join(format!("{stem}_entropy.csv")))?,
    }
    Ok(report)
}

/// Writes `index,entropy` rows.
pub fn write_entropy_csv(h: &[f64], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "index,entropy")?;
    for (i, v) in h.iter().enumerate() {
        writeln!(f, "{i},{v}")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_entropy_csv(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::config(format!("cannot read `{}`: {e}", path.display())))?;
    let column = reader
        .headers()
        .map_err(|e| Error::format(e.to_string()))?
        .iter()
        .position(|h| h == "entropy")
        .ok_or_else(|| Error::format(format!("`{}` has no entropy column", path.display())))?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(e.to_string()))?;
        let field = record.get(column).unwrap_or("");
        let v: f64 = field.parse().map_err(|_| Error::Parse {
            row: row + 2,
            col: column + 1,
            message: format!("{field:?} is not a number"),
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(out)
}

/// OOD AUC from an in-distribution and an out-of-distribution entropy dump.
pub fn cmd_ood(in_distribution: &Path, out_of_distribution: &Path) -> Result<f64> {
    Ok(ood_auc(&read_entropy_csv(in_distribution)?, &read_entropy_csv(out_of_distribution)?))
}

/// One grid row in raw units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridRow {
    pub x: f64,
    pub mean: f64,
    pub std_function: f64,
    pub std_y: f64,
}

/// Predictive on a uniform 1-D grid with both endpoints, written as `x,mean,std_function,std_y`.
pub fn cmd_predict_grid(state: &Path, range: (f64, f64), resolution: usize, out: &Path) -> Result<Vec<GridRow>> {
    if resolution < 2 {
        return Err(Error::config(format!("grid resolution must be at least 2, got {resolution}")));
    }
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::config(format!("grid range [{lo}, {hi}] must be finite with lo < hi")));
    }
    let state = StateFile::load(state)?;
    let rows = predict_grid(&state, range, resolution)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(out)?);
    writeln!(f, "x,mean,std_function,std_y")?;
    for r in &rows {
        writeln!(f, "{},{},{},{}", r.x, r.mean, r.std_function, r.std_y)?;
    }
    f.flush()?;
    Ok(rows)
}

pub fn grid_points(lo: f64, hi: f64, resolution: usize) -> Vec<f64> {
    let last = resolution - 1;
    (0..resolution)
        .map(|i| if i == last { hi } else { lo + (hi - lo) * i as f64 / last as f64 })
        .collect()
}

pub fn predict_grid(state: &StateFile, range: (f64, f64), resolution: usize) -> Result<Vec<GridRow>> {
    let net = state.posterior.network();
    if net.input_dim() != 1 || net.output_dim() != 1 || state.posterior.likelihood().is_categorical() {
        return Err(Error::config("predict-grid needs a 1-D regression model"));
    }
    let xs = grid_points(range.0, range.1, resolution);
    let pred = state.predict_raw(&Matrix::from_vec(xs.len(), 1, xs.clone())?)?;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| GridRow {
            x,
            mean: pred.mean[(i, 0)],
            std_function: pred.function_variance(i, 0).sqrt(),
            std_y: pred.observation_variance(i, 0).sqrt(),
        })
        .collect())
}

/// One row of a comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub method: Method,
    pub report: MetricsReport,
    pub seconds: f64,
}

/// Fits and evaluates each method on the shared checkpoint and seed. Writes `compare.csv`
/// (metrics) and `compare_timing.csv`.
pub fn cmd_compare(cfg: &ExperimentConfig, methods: &[Method], checkpoint: &Path, which: Split) -> Result<Vec<CompareRow>> {
    if methods.is_empty() {
        return Err(Error::config("compare needs at least one method"));
    }
    let configs: Vec<ExperimentConfig> = methods
        .iter()
        .map(|&method| ExperimentConfig {
            method,
            ..cfg.clone()
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let data = prepare_data(cfg)?;
    let net = Arc::new(load_checkpoint(checkpoint, &data)?);
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut rows = Vec::with_capacity(methods.len());
    for c in &configs {
        let fit = fit_loaded(c, &data, net.clone())?;
        let state = StateFile::load(&fit.state_path)?;
        let report = evaluate_loaded(c, &data, &state, which)?;
        rows.push(CompareRow {
            method: c.method,
            report,
            seconds: fit.seconds,
        });
    }
    write_compare_csv(&rows, &cfg.output_dir.join("compare.csv"))?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(cfg.output_dir.join("compare_timing.csv"))?);
    writeln!(f, "method,fit_seconds")?;
    for r in &rows {
        writeln!(f, "{},{}", r.method.name(), r.seconds)?;
    }
    f.flush()?;
    Ok(rows)
}

fn write_compare_csv(rows: &[CompareRow], path: &Path) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "method,n_points,nll,crps,cqm,accuracy,ece,brier")?;
    for r in rows {
        let m = &r.report;
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            r.method.name(),
            m.n_points,
            m.nll,
            opt(m.crps),
            opt(m.cqm),
            opt(m.accuracy),
            opt(m.ece),
            opt(m.brier)
        )?;
    }
    f.flush()?;
    Ok(())
}
