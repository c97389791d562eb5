use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{brier, class_probabilities, cqm, crps_gaussian, ece, entropy, nll_categorical, nll_gaussian, ood_auc};
use super::{accuracy, CqmCurve, CQM_GRID, ECE_BINS};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lla::Predictions;

/// Flat summary of every metric that applies to a predictive. Absent fields are omitted
/// from the JSON form.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_points: usize,
    pub nll: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cqm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ece: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ood_auc: Option<f64>,
    #[serde(skip)]
    pub coverage: Option<CqmCurve>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn labels_of(targets: &Matrix) -> Result<Vec<usize>> {
    if targets.cols() != 1 {
        return Err(Error::dims(format!("class labels must be one column, got {}", targets.cols())));
    }
    targets
        .as_slice()
        .iter()
        .map(|v| {
            if *v >= 0.0 && v.fract() == 0.0 {
                Ok(*v as usize)
            } else {
                Err(Error::config(format!("invalid class label {v}")))
            }
        })
        .collect()
}

/// Negative log predictive density: Gaussian for regression, probit-softmax for
/// classification (where `targets` is the `N × 1` label column).
pub fn nll(pred: &Predictions, targets: &Matrix) -> Result<f64> {
    if pred.likelihood.is_categorical() {
        nll_categorical(&class_probabilities(pred), &labels_of(targets)?)
    } else {
        nll_gaussian(pred, targets)
    }
}

/// Computes every applicable metric. For classification, passing the predictive on an
/// out-of-distribution set adds the entropy-based OOD AUC.
pub fn evaluate(pred: &Predictions, targets: &Matrix, ood: Option<&Predictions>) -> Result<MetricsReport> {
    let mut report = MetricsReport {
        n_points: pred.len(),
        nll: nll(pred, targets)?,
        ..Default::default()
    };
    if pred.likelihood.is_categorical() {
        let probs = class_probabilities(pred);
        let labels = labels_of(targets)?;
        report.accuracy = Some(accuracy(&probs, &labels)?);
        report.ece = Some(ece(&probs, &labels, ECE_BINS)?);
        report.brier = Some(brier(&probs, &labels)?);
        if let Some(ood) = ood {
            let h_in = entropy(&probs);
            let h_out = entropy(&class_probabilities(ood));
            report.ood_auc = Some(ood_auc(&h_in, &h_out));
        }
    } else {
        report.crps = Some(crps_gaussian(pred, targets)?);
        let curve = cqm(pred, targets, CQM_GRID)?;
        report.cqm = Some(curve.value);
        report.coverage = Some(curve);
    }
    Ok(report)
}

/// Writes the `alpha,coverage` curve.
pub fn write_coverage_csv(curve: &CqmCurve, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "alpha,coverage")?;
    for (a, c) in curve.alphas.iter().zip(&curve.coverage) {
        writeln!(f, "{a},{c}")?;
    }
    f.flush()?;
    Ok(())
}
