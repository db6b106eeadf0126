use crate::diffmath::Tensor;
use crate::error::{Error, Result};

pub const LASSO_TOL: f64 = 1e-8;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

/// Coefficients on the original feature scale.
#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit {
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Objective on standardized features after each sweep, starting with
    /// the all-zero solution.
    pub objective: Vec<f64>,
}

impl LassoFit {
    pub fn predict(&self, x: &Tensor) -> Vec<f64> {
        (0..x.rows())
            .map(|i| self.intercept + x.row(i).iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Minimizes `(1/2n)‖y - ȳ - Zβ‖² + α‖β‖₁` by cyclic coordinate descent on
/// standardized features `Z`, with an unpenalized intercept.
pub fn lasso_fit(x: &Tensor, y: &[f64], alpha: f64) -> Result<LassoFit> {
    let (n, p) = x.shape();
    if n == 0 {
        return Err(Error::Validation("lasso needs at least one training row".into()));
    }
    if y.len() != n {
        return Err(Error::shape("lasso_fit", format!("{n} rows, {} targets", y.len())));
    }
    if !(alpha >= 0.0) {
        return Err(Error::Config(format!("lasso alpha must be non-negative, got {alpha}")));
    }
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let mut mean = vec![0.0; p];
    let mut scale = vec![0.0; p];
    for k in 0..p {
        mean[k] = (0..n).map(|i| x.get(i, k)).sum::<f64>() / nf;
        scale[k] = ((0..n).map(|i| (x.get(i, k) - mean[k]).powi(2)).sum::<f64>() / nf).sqrt();
    }
    let active: Vec<usize> = (0..p).filter(|&k| scale[k] > 1e-12).collect();
    // Column-major standardized copy of the active features.
    let z: Vec<Vec<f64>> = active
        .iter()
        .map(|&k| (0..n).map(|i| (x.get(i, k) - mean[k]) / scale[k]).collect())
        .collect();
    let mut beta = vec![0.0; active.len()];
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let objective = |resid: &[f64], beta: &[f64]| {
        resid.iter().map(|r| r * r).sum::<f64>() / (2.0 * nf) + alpha * beta.iter().map(|b| b.abs()).sum::<f64>()
    };
    let mut history = vec![objective(&resid, &beta)];
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for (k, col) in z.iter().enumerate() {
            let old = beta[k];
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf + old;
            let new = soft_threshold(rho, alpha);
            if new != old {
                let delta = new - old;
                for (r, a) in resid.iter_mut().zip(col) {
                    *r -= delta * a;
                }
                beta[k] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        history.push(objective(&resid, &beta));
        if max_change < LASSO_TOL {
            break;
        }
    }
    let mut coef = vec![0.0; p];
    for (b, &k) in beta.iter().zip(&active) {
        coef[k] = b / scale[k];
    }
    let intercept = y_mean - coef.iter().zip(&mean).map(|(c, m)| c * m).sum::<f64>();
    Ok(LassoFit { coef, intercept, objective: history })
}

pub fn lasso_fit_predict(x: &Tensor, y: &[f64], x_test: &Tensor, alpha: f64) -> Result<Vec<f64>> {
    Ok(lasso_fit(x, y, alpha)?.predict(x_test))
}
