use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub mae: f64,
    /// `None` when every target is zero.
    pub mape: Option<f64>,
    pub rmse: f64,
}

pub fn compute_metrics(pred: &[f64], truth: &[f64]) -> Result<Metrics> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::shape("compute_metrics", format!("{} predictions for {} targets", pred.len(), truth.len())));
    }
    let n = pred.len() as f64;
    let mae = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let rmse = (pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n).sqrt();
    let rel: Vec<f64> = pred
        .iter()
        .zip(truth)
        .filter(|(_, t)| **t != 0.0)
        .map(|(p, t)| (p - t).abs() / t.abs())
        .collect();
    let mape = (!rel.is_empty()).then(|| rel.iter().sum::<f64>() / rel.len() as f64);
    Ok(Metrics { mae, mape, rmse })
}
