use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::linalg::{rng_stream, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification { classes: usize },
}

/// Inputs `N × D` and targets: `N × C` real values for regression, `N × 1` integer class
/// labels stored as reals for classification.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub targets: Matrix,
    pub task: Task,
    /// Statistics already applied to `inputs`/`targets`, if any.
    pub normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Matrix, task: Task) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(Error::dims(format!(
                "{} input rows vs {} target rows",
                inputs.rows(),
                targets.rows()
            )));
        }
        if !inputs.is_finite() || !targets.is_finite() {
            return Err(Error::non_finite("dataset"));
        }
        if let Task::Classification { classes } = task {
            if targets.cols() != 1 {
                return Err(Error::dims("classification targets must be a single label column"));
            }
            for (row, &t) in targets.as_slice().iter().enumerate() {
                if t < 0.0 || t.fract() != 0.0 || t >= classes as f64 {
                    return Err(Error::config(format!(
                        "label {t} in row {row} is not an integer in [0, {classes})"
                    )));
                }
            }
        }
        Ok(Dataset {
            inputs,
            targets,
            task,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Number of network outputs needed for this task.
    pub fn output_dim(&self) -> usize {
        match self.task {
            Task::Regression => self.targets.cols(),
            Task::Classification { classes } => classes,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self.task, Task::Classification { .. })
    }

    pub fn labels(&self) -> Vec<usize> {
        self.targets.as_slice().iter().map(|&t| t as usize).collect()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(indices),
            targets: self.targets.select_rows(indices),
            task: self.task,
            normalization: self.normalization.clone(),
        }
    }

    /// First `n` rows (or all if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }
}

/// Per-column affine statistics: `z = (v − mean) / std`. Target statistics are identity for
/// classification.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

fn column_stats(m: &Matrix, what: &str) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows();
    let mut mean = vec![0.0; m.cols()];
    let mut std = vec![1.0; m.cols()];
    if n == 0 {
        return (mean, std);
    }
    for j in 0..m.cols() {
        let mu = (0..n).map(|i| m[(i, j)]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (m[(i, j)] - mu).powi(2)).sum::<f64>() / n as f64;
        mean[j] = mu;
        if var.sqrt() <= 1e-12 * mu.abs().max(1.0) {
            log::warn!("{what} column {j} has zero variance; leaving its scale unchanged");
            std[j] = 1.0;
        } else {
            std[j] = var.sqrt();
        }
    }
    (mean, std)
}

fn affine(m: &Matrix, shift: &[f64], scale: &[f64], forward: bool) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| {
        if forward {
            (m[(i, j)] - shift[j]) / scale[j]
        } else {
            m[(i, j)] * scale[j] + shift[j]
        }
    })
}

impl Normalization {
    /// Statistics of `ds` (typically the training split).
    pub fn fit(ds: &Dataset) -> Normalization {
        let (input_mean, input_std) = column_stats(&ds.inputs, "input");
        let (target_mean, target_std) = match ds.task {
            Task::Regression => column_stats(&ds.targets, "target"),
            Task::Classification { .. } => (vec![0.0], vec![1.0]),
        };
        Normalization {
            input_mean,
            input_std,
            target_mean,
            target_std,
        }
    }

    pub fn identity(input_dim: usize, target_dim: usize) -> Normalization {
        Normalization {
            input_mean: vec![0.0; input_dim],
            input_std: vec![1.0; input_dim],
            target_mean: vec![0.0; target_dim],
            target_std: vec![1.0; target_dim],
        }
    }

    pub fn transform_inputs(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_mean.len() {
            return Err(Error::dims(format!(
                "normalization has {} input columns, data {}",
                self.input_mean.len(),
                x.cols()
            )));
        }
        Ok(affine(x, &self.input_mean, &self.input_std, true))
    }

    pub fn inverse_inputs(&self, x: &Matrix) -> Matrix {
        affine(x, &self.input_mean, &self.input_std, false)
    }

    pub fn transform_targets(&self, y: &Matrix) -> Matrix {
        affine(y, &self.target_mean, &self.target_std, true)
    }

    pub fn inverse_targets(&self, y: &Matrix) -> Matrix {
        affine(y, &self.target_mean, &self.target_std, false)
    }

    /// Applies the statistics to a dataset, composing with any normalization it already carries.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let regression = matches!(ds.task, Task::Regression);
        let targets = if regression {
            if ds.targets.cols() != self.target_mean.len() {
                return Err(Error::dims("target column count differs from normalization"));
            }
            self.transform_targets(&ds.targets)
        } else {
            ds.targets.clone()
        };
        let combined = match &ds.normalization {
            None => self.clone(),
            Some(prev) => prev.compose(self),
        };
        Ok(Dataset {
            inputs: self.transform_inputs(&ds.inputs)?,
            targets,
            task: ds.task,
            normalization: Some(combined),
        })
    }

    /// Undoes this normalization on a dataset.
    pub fn invert(&self, ds: &Dataset) -> Dataset {
        let targets = match ds.task {
            Task::Regression => self.inverse_targets(&ds.targets),
            Task::Classification { .. } => ds.targets.clone(),
        };
        Dataset {
            inputs: self.inverse_inputs(&ds.inputs),
            targets,
            task: ds.task,
            normalization: None,
        }
    }

    /// `self` followed by `next`, as a single affine map.
    fn compose(&self, next: &Normalization) -> Normalization {
        let comb = |m0: &[f64], s0: &[f64], m1: &[f64], s1: &[f64]| {
            let mean: Vec<f64> = (0..m0.len()).map(|j| m0[j] + s0[j] * m1[j]).collect();
            let std: Vec<f64> = (0..m0.len()).map(|j| s0[j] * s1[j]).collect();
            (mean, std)
        };
        let (input_mean, input_std) = comb(&self.input_mean, &self.input_std, &next.input_mean, &next.input_std);
        let (target_mean, target_std) =
            comb(&self.target_mean, &self.target_std, &next.target_mean, &next.target_std);
        Normalization {
            input_mean,
            input_std,
            target_mean,
            target_std,
        }
    }

    pub fn encode(&self, w: &mut ByteWriter) {
        for v in [&self.input_mean, &self.input_std, &self.target_mean, &self.target_std] {
            w.u64(v.len() as u64);
            w.f64s(v);
        }
    }

    pub fn decode(r: &mut ByteReader) -> Result<Normalization> {
        let mut read = || -> Result<Vec<f64>> {
            let n = r.usize()?;
            r.f64s(n)
        };
        let n = Normalization {
            input_mean: read()?,
            input_std: read()?,
            target_mean: read()?,
            target_std: read()?,
        };
        if n.input_mean.len() != n.input_std.len() || n.target_mean.len() != n.target_std.len() {
            return Err(Error::format("normalization vectors have inconsistent lengths"));
        }
        Ok(n)
    }
}

/// Standardizes every column of `ds` with its own statistics.
pub fn standardize(ds: &Dataset) -> Result<Dataset> {
    Normalization::fit(ds).apply(ds)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitOrder {
    Sequential,
    Shuffled { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Train, validation and test fractions.
    pub fractions: [f64; 3],
    pub order: SplitOrder,
}

impl SplitSpec {
    pub fn sequential(train: f64, validation: f64, test: f64) -> Self {
        SplitSpec {
            fractions: [train, validation, test],
            order: SplitOrder::Sequential,
        }
    }
}

/// Validation and test get `floor(f·N)` rows, the remainder goes to training. Order is
/// train, validation, test over the (optionally shuffled) row order.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let f = spec.fractions;
    if f.iter().any(|v| !v.is_finite() || *v < 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split fractions {f:?} must be ≥ 0 and sum to 1")));
    }
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    if let SplitOrder::Shuffled { seed } = spec.order {
        rng_stream(seed).shuffle(&mut order);
    }
    let n_val = (f[1] * n as f64 + 1e-9).floor() as usize;
    let n_test = (f[2] * n as f64 + 1e-9).floor() as usize;
    let n_train = n - n_val - n_test;
    Ok((
        ds.select(&order[..n_train]),
        ds.select(&order[n_train..n_train + n_val]),
        ds.select(&order[n_train + n_val..]),
    ))
}
