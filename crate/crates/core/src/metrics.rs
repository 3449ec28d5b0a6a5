use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmae: f64,
    pub rrmse: f64,
    /// Mean absolute error, deg C.
    pub mae: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
}

/// rMAE = sum|p - u| / sum|u|, rRMSE = sqrt(sum (p - u)^2 / sum u^2),
/// MAE = mean |p - u|.
pub fn evaluate(pred: &[f64], truth: &[f64]) -> Result<MetricReport> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyBatch("metrics"));
    }
    let (mut abs_err, mut sq_err, mut abs_ref, mut sq_ref) = (0.0, 0.0, 0.0, 0.0);
    for (p, u) in pred.iter().zip(truth) {
        let d = p - u;
        abs_err += d.abs();
        sq_err += d * d;
        abs_ref += u.abs();
        sq_ref += u * u;
    }
    if abs_ref == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(MetricReport {
        rmae: abs_err / abs_ref,
        rrmse: (sq_err / sq_ref).sqrt(),
        mae: abs_err / pred.len() as f64,
        n: pred.len(),
        mode: None,
    })
}
