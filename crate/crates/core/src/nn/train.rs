use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{backward, forward, Adam, MlpArchitecture, MlpNetwork};
use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::linalg::{rng_stream, Matrix};

/// Training loss is averaged and logged over windows of this many iterations.
pub const LOG_EVERY: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Squared error; the logged value is the RMSE.
    Rmse,
    /// Softmax cross-entropy on integer labels.
    NllClassification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 12_000,
            batch_size: 64,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            seed: 0,
            loss: LossKind::Rmse,
        }
    }
}

impl TrainConfig {
    /// `learning_rate = 0` is accepted so that a run can be used as a no-op check.
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::config("iterations and batch_size must be >= 1"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::config(format!("invalid weight decay {}", self.weight_decay)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: MlpNetwork,
    /// `(iteration, mean mini-batch loss over the preceding LOG_EVERY iterations)`.
    pub log: Vec<(usize, f64)>,
}

/// Row-wise numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Loss value and its gradient w.r.t. the outputs for one mini-batch.
fn batch_loss(kind: LossKind, output: &Matrix, targets: &Matrix) -> (f64, Matrix) {
    let (b, c) = output.shape();
    let mut grad = Matrix::zeros(b, c);
    match kind {
        LossKind::Rmse => {
            let mut sse = 0.0;
            for i in 0..b {
                for j in 0..c {
                    let r = output[(i, j)] - targets[(i, j)];
                    sse += r * r;
                    grad.as_mut_slice()[i * c + j] = 2.0 * r / (b * c) as f64;
                }
            }
            ((sse / (b * c) as f64).sqrt(), grad)
        }
        LossKind::NllClassification => {
            let mut nll = 0.0;
            for i in 0..b {
                let p = softmax(output.row(i));
                let y = targets[(i, 0)] as usize;
                nll -= p[y].max(f64::MIN_POSITIVE).ln();
                for (j, pj) in p.iter().enumerate() {
                    let e = if j == y { 1.0 } else { 0.0 };
                    grad.as_mut_slice()[i * c + j] = (pj - e) / b as f64;
                }
            }
            (nll / b as f64, grad)
        }
    }
}

/// MAP training with Adam on mini-batches drawn by reshuffling each epoch.
pub fn train_map(arch: &MlpArchitecture, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut rng = rng_stream(cfg.seed);
    let net = MlpNetwork::init(arch, &mut rng)?;
    continue_training(net, data, cfg, &mut rng)
}

fn continue_training(
    mut net: MlpNetwork,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut crate::linalg::RngStream,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::config("training data is empty"));
    }
    if data.input_dim() != net.input_dim() || data.output_dim() != net.output_dim() {
        return Err(Error::dims(format!(
            "data is {}→{}, network {}→{}",
            data.input_dim(),
            data.output_dim(),
            net.input_dim(),
            net.output_dim()
        )));
    }
    match (cfg.loss, data.task) {
        (LossKind::Rmse, Task::Regression) | (LossKind::NllClassification, Task::Classification { .. }) => {}
        _ => return Err(Error::config("loss does not match the dataset task")),
    }
    let n = data.len();
    let batch = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut params = net.to_flat();
    let mut opt = Adam::new(params.len(), cfg.learning_rate, cfg.weight_decay);
    let mut log = Vec::with_capacity(cfg.iterations / LOG_EVERY);
    let mut window = 0.0;
    for it in 1..=cfg.iterations {
        if cursor + batch > n {
            rng.shuffle(&mut order);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + batch];
        cursor += batch;
        let x = data.inputs.select_rows(idx);
        let y = data.targets.select_rows(idx);
        let trace = forward(&net, &x, true).map_err(|e| at_iteration(e, it))?;
        let (loss, out_grad) = batch_loss(cfg.loss, &trace.output, &y);
        if !loss.is_finite() {
            return Err(Error::NonFiniteValue {
                context: "training loss".into(),
                iteration: Some(it),
            });
        }
        window += loss;
        let grad = backward(&net, &trace, &out_grad)?.to_flat();
        opt.step(&mut params, &grad);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteValue {
                context: "network parameters".into(),
                iteration: Some(it),
            });
        }
        net.set_flat(&params);
        if it % LOG_EVERY == 0 {
            log.push((it, window / LOG_EVERY as f64));
            log::debug!("iteration {it}: loss {:.6}", window / LOG_EVERY as f64);
            window = 0.0;
        }
    }
    Ok(TrainOutcome { network: net, log })
}

fn at_iteration(e: Error, it: usize) -> Error {
    match e {
        Error::NonFiniteValue { context, .. } => Error::NonFiniteValue {
            context,
            iteration: Some(it),
        },
        other => other,
    }
}

/// Writes `iteration,loss` rows with a header.
pub fn write_training_log(log: &[(usize, f64)], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iteration,loss")?;
    for (it, loss) in log {
        writeln!(f, "{it},{loss}")?;
    }
    f.flush()?;
    Ok(())
}
