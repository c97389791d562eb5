use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::objective::evaluate;
use super::{kmeans_init, DataTerm, VallaState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::KernelContext;
use crate::linalg::{rng_stream, Matrix};
use crate::lla::LikelihoodModel;
use crate::nn::Adam;

/// Optimization schedule for [`fit_valla`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Validation NLL is checked every this many iterations (iteration 0 included).
    pub validate_every: usize,
    /// Consecutive checks without improvement before stopping.
    pub patience: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            iterations: 3000,
            batch_size: 64,
            learning_rate: 1e-2,
            seed: 0,
            validate_every: 100,
            patience: 3,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 || self.validate_every == 0 || self.patience == 0 {
            return Err(Error::config("iterations, batch_size, validate_every and patience must be ≥ 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// What is optimized besides the covariance factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VallaOptions {
    pub alpha: f64,
    pub train_prior_variance: bool,
    pub train_noise_variance: bool,
    pub train_inducing: bool,
    #[serde(skip)]
    pub data_term: Option<DataTerm>,
}

impl Default for VallaOptions {
    fn default() -> Self {
        VallaOptions {
            alpha: 1.0,
            train_prior_variance: true,
            train_noise_variance: true,
            train_inducing: true,
            data_term: None,
        }
    }
}

impl VallaOptions {
    /// Hyperparameters held fixed; only `L` and `Z` move.
    pub fn fixed_hyperparameters() -> Self {
        VallaOptions {
            train_prior_variance: false,
            train_noise_variance: false,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VallaLogRow {
    pub iteration: usize,
    pub objective: f64,
    pub kl: f64,
    pub data_term: f64,
    pub validation_nll: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct VallaFit {
    /// Best-validation state, or the final one without validation data.
    pub state: VallaState,
    pub log: Vec<VallaLogRow>,
    pub iterations_run: usize,
    pub stopped_early: bool,
}

/// Inducing locations by k-means over the training inputs, `L = 1e-3·I`, then Adam on the
/// negative mini-batch objective. See [`fit_valla_from`].
pub fn fit_valla(
    ctx: &KernelContext,
    likelihood: LikelihoodModel,
    train: &Dataset,
    validation: Option<&Dataset>,
    inducing_count: usize,
    schedule: &TrainSchedule,
    options: &VallaOptions,
) -> Result<VallaFit> {
    schedule.validate()?;
    if inducing_count > train.len() {
        return Err(Error::config(format!(
            "{inducing_count} inducing points requested from {} training points",
            train.len()
        )));
    }
    let z = kmeans_init(&train.inputs, inducing_count, schedule.seed)?;
    let state = VallaState::initial(ctx.clone(), z, likelihood, options.alpha)?;
    fit_valla_from(state, train, validation, schedule, options)
}

fn pack(state: &VallaState) -> Vec<f64> {
    let mut p = state.a_factor.as_slice().to_vec();
    p.extend_from_slice(state.inducing.as_slice());
    p.push(state.log_prior_variance());
    p.push(state.log_noise_variance().unwrap_or(0.0));
    p
}

fn unpack(template: &VallaState, p: &[f64]) -> Result<VallaState> {
    let n = template.a_factor.rows();
    let (m, d) = template.inducing.shape();
    let l = Matrix::from_vec(n, n, p[..n * n].to_vec())?;
    let z = Matrix::from_vec(m, d, p[n * n..n * n + m * d].to_vec())?;
    let log_prior = p[n * n + m * d];
    let likelihood = match template.likelihood {
        LikelihoodModel::Gaussian { .. } => LikelihoodModel::Gaussian {
            noise_variance: p[n * n + m * d + 1].exp(),
        },
        LikelihoodModel::Categorical => LikelihoodModel::Categorical,
    };
    let ctx = template.ctx.with_log_prior_variance(log_prior)?;
    VallaState::new(ctx, z, l, likelihood, template.alpha)
}

/// Continues optimizing from `state`. Entries above the diagonal of the factor are held fixed.
/// With validation data the NLL is checked every `validate_every` iterations and training stops
/// after `patience` checks without improvement, returning the best checked state.
pub fn fit_valla_from(
    state: VallaState,
    train: &Dataset,
    validation: Option<&Dataset>,
    schedule: &TrainSchedule,
    options: &VallaOptions,
) -> Result<VallaFit> {
    schedule.validate()?;
    if train.is_empty() {
        return Err(Error::config("VaLLA needs training data"));
    }
    if let Some(v) = validation {
        if v.is_empty() {
            return Err(Error::config("validation set is empty"));
        }
    }
    let term = options.data_term.unwrap_or(DataTerm::Alpha);
    let n_total = train.len();
    let n = state.a_factor.rows();
    let md = state.inducing.rows() * state.inducing.cols();

    let mut state = state;
    let mut params = pack(&state);
    let mut adam = Adam::new(params.len(), schedule.learning_rate, 0.0);
    let mut rng = rng_stream(schedule.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..n_total).collect();
    rng.shuffle(&mut order);
    let mut cursor = 0;

    let mut log = Vec::new();
    let mut best: Option<(f64, VallaState)> = None;
    let mut bad_checks = 0;
    let mut stopped_early = false;
    let mut iterations_run = 0;

    let validation_nll = |s: &VallaState, it: usize| -> Result<f64> {
        let v = validation.expect("checked by caller");
        let nll = crate::metrics::nll(&s.predict(&v.inputs)?, &v.targets)?;
        if nll.is_finite() {
            Ok(nll)
        } else {
            Err(Error::NonFiniteValue {
                context: "validation NLL".into(),
                iteration: Some(it),
            })
        }
    };

    for it in 0..schedule.iterations {
        let check = it % schedule.validate_every == 0;
        let mut val = None;
        if check && validation.is_some() {
            let nll = validation_nll(&state, it)?;
            val = Some(nll);
            match &best {
                Some((b, _)) if nll >= *b => {
                    bad_checks += 1;
                    if bad_checks >= schedule.patience {
                        stopped_early = true;
                        break;
                    }
                }
                _ => {
                    best = Some((nll, state.clone()));
                    bad_checks = 0;
                }
            }
        }

        let take = schedule.batch_size.min(n_total);
        if cursor + take > n_total {
            rng.shuffle(&mut order);
            cursor = 0;
        }
        // sorted so that a batch's sum does not depend on the shuffle order
        let mut idx = order[cursor..cursor + take].to_vec();
        idx.sort_unstable();
        cursor += take;
        let xb = train.inputs.select_rows(&idx);
        let yb = train.targets.select_rows(&idx);

        let diverged = |context: &str| Error::NonFiniteValue {
            context: context.into(),
            iteration: Some(it),
        };
        let (report, grad) = match evaluate(&state, &xb, &yb, n_total, term, true) {
            Ok((r, Some(g))) => (r, g),
            Ok(_) => unreachable!("gradient requested"),
            Err(Error::NotPositiveDefinite { .. }) | Err(Error::NonFiniteValue { .. }) => {
                return Err(diverged("VaLLA objective"))
            }
            Err(e) => return Err(e),
        };
        if !report.objective.is_finite() {
            return Err(diverged("VaLLA objective"));
        }
        if check {
            log.push(VallaLogRow {
                iteration: it,
                objective: report.objective,
                kl: report.kl_value,
                data_term: report.data_term,
                validation_nll: val,
            });
        }

        // descend on the negative objective
        let mut g = vec![0.0; params.len()];
        for i in 0..n {
            for j in 0..=i {
                g[i * n + j] = -grad.a_factor[(i, j)];
            }
        }
        if options.train_inducing {
            for (k, v) in grad.inducing.as_slice().iter().enumerate() {
                g[n * n + k] = -v;
            }
        }
        if options.train_prior_variance {
            g[n * n + md] = -grad.log_prior_variance;
        }
        if options.train_noise_variance {
            g[n * n + md + 1] = -grad.log_noise_variance;
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(diverged("VaLLA gradient"));
        }
        adam.step(&mut params, &g);
        if params.iter().any(|v| !v.is_finite()) {
            return Err(diverged("VaLLA parameters"));
        }
        state = unpack(&state, &params).map_err(|_| diverged("VaLLA parameters"))?;
        iterations_run = it + 1;
    }

    if validation.is_some() && !stopped_early {
        let nll = validation_nll(&state, iterations_run)?;
        if best.as_ref().is_none_or(|(b, _)| nll < *b) {
            best = Some((nll, state.clone()));
        }
    }
    let state = match best {
        Some((_, s)) => s,
        None => state,
    };
    Ok(VallaFit {
        state,
        log,
        iterations_run,
        stopped_early,
    })
}

/// Writes `iteration,objective,kl,data_term,validation_nll`; the last column is empty when no
/// validation set was used.
pub fn write_valla_log(log: &[VallaLogRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iteration,objective,kl,data_term,validation_nll")?;
    for r in log {
        let v = r.validation_nll.map(|v| v.to_string()).unwrap_or_default();
        writeln!(f, "{},{},{},{},{}", r.iteration, r.objective, r.kl, r.data_term, v)?;
    }
    f.flush()?;
    Ok(())
}
