//! Downstream evaluation: Lasso probes, metrics, community recovery and
//! the ablation matrix.

mod cluster;
mod lasso;
mod metrics;
mod report;

pub use cluster::{community_nmi, kmeans, nmi, Clustering, KMEANS_MAX_ITERS, KMEANS_RESTARTS};
pub use lasso::{lasso_fit, lasso_fit_predict, soft_threshold, LassoFit, LASSO_MAX_SWEEPS, LASSO_TOL};
pub use metrics::{compute_metrics, Metrics};
pub use report::{
    density_band, density_strata_eval, evaluate_embeddings, run_ablation, write_eval_report, EvalConfig, EvalRow,
    Stratum, REPORT_FILE,
};

use crate::diffmath::{Rng, Tensor};
use crate::error::{Error, Result};

/// Rows of `x` selected by `idx`.
pub fn select_rows(x: &Tensor, idx: &[usize]) -> Tensor {
    Tensor::from_fn(idx.len(), x.cols(), |i, j| x.get(idx[i], j))
}

/// Shuffled partition of `0..n` into `k` folds of near-equal size.
pub fn kfold_indices(n: usize, k: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::Config(format!("need 2 <= folds <= {n}, got {k}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in order.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Out-of-fold Lasso predictions for every row.
pub fn cross_val_predict(x: &Tensor, y: &[f64], k: usize, alpha: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    let n = x.rows();
    if y.len() != n {
        return Err(Error::shape("cross_val_predict", format!("{n} rows, {} targets", y.len())));
    }
    let mut pred = vec![0.0; n];
    for test in kfold_indices(n, k, rng)? {
        let train: Vec<usize> = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
        let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let p = lasso_fit_predict(&select_rows(x, &train), &ytr, &select_rows(x, &test), alpha)?;
        for (&i, v) in test.iter().zip(p) {
            pred[i] = v;
        }
    }
    Ok(pred)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition() {
        let mut rng = Rng::new(0);
        let folds = kfold_indices(11, 5, &mut rng).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() == 2 || f.len() == 3));
        assert!(kfold_indices(3, 4, &mut rng).is_err());
        assert!(kfold_indices(3, 1, &mut rng).is_err());
    }

    #[test]
    fn cross_validation_recovers_linear_target() {
        let mut rng = Rng::new(2);
        let x = Tensor::from_fn(30, 3, |_, _| rng.normal());
        let y: Vec<f64> = (0..30).map(|i| 1.0 + 2.0 * x.get(i, 0) - x.get(i, 2)).collect();
        let pred = cross_val_predict(&x, &y, 5, 0.0, &mut rng).unwrap();
        assert!(compute_metrics(&pred, &y).unwrap().mae < 1e-6);
    }
}
