use std::fmt::Write as _;
use std::path::Path;

use crate::diffmath::{Rng, Tensor};
use crate::error::{Error, Result};
use crate::region::Dataset;
use crate::trainer::{train, AblationFlags, Hyperparameters};

use super::{community_nmi, compute_metrics, cross_val_predict, select_rows, Metrics};

pub const REPORT_FILE: &str = "eval_report.csv";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub alpha: f64,
    pub folds: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { alpha: 0.01, folds: 5 }
    }
}

/// Density band of a region: the fraction of nonzero entries in its
/// series, times five, falls into `(0, 2.5]` or `(2.5, 5]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stratum {
    Sparse,
    Dense,
}

impl Stratum {
    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::Sparse => "(0.0,2.5]",
            Stratum::Dense => "(2.5,5.0]",
        }
    }
}

/// `None` for an all-zero or empty series.
pub fn density_band(series: &[f64]) -> Option<Stratum> {
    if series.is_empty() {
        return None;
    }
    let scaled = 5.0 * series.iter().filter(|v| **v != 0.0).count() as f64 / series.len() as f64;
    if scaled == 0.0 {
        None
    } else if scaled <= 2.5 {
        Some(Stratum::Sparse)
    } else {
        Some(Stratum::Dense)
    }
}

/// Cross-validated Lasso metrics per density band. A band with fewer than
/// two regions cannot be cross-validated and is left out.
pub fn density_strata_eval(
    embeddings: &Tensor,
    targets: &[f64],
    series: &[Vec<f64>],
    cfg: &EvalConfig,
    rng: &mut Rng,
) -> Result<Vec<(Stratum, Vec<usize>, Metrics)>> {
    if series.len() != embeddings.rows() || targets.len() != embeddings.rows() {
        return Err(Error::shape(
            "density_strata_eval",
            format!("{} rows, {} targets, {} series", embeddings.rows(), targets.len(), series.len()),
        ));
    }
    let mut out = Vec::new();
    for band in [Stratum::Sparse, Stratum::Dense] {
        let members: Vec<usize> = (0..series.len()).filter(|&i| density_band(&series[i]) == Some(band)).collect();
        if members.len() < 2 {
            continue;
        }
        let y: Vec<f64> = members.iter().map(|&i| targets[i]).collect();
        let pred = cross_val_predict(&select_rows(embeddings, &members), &y, cfg.folds.min(members.len()), cfg.alpha, rng)?;
        out.push((band, members, compute_metrics(&pred, &y)?));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub variant: String,
    pub seed: u64,
    pub task: String,
    pub stratum: String,
    pub metrics: Metrics,
    pub nmi: Option<f64>,
}

/// Overall and per-band Lasso metrics for the dataset's targets, plus
/// community NMI on the overall row when communities are known.
pub fn evaluate_embeddings(
    embeddings: &Tensor,
    ds: &Dataset,
    variant: &str,
    seed: u64,
    cfg: &EvalConfig,
) -> Result<Vec<EvalRow>> {
    let labels = ds
        .labels
        .as_ref()
        .ok_or_else(|| Error::Validation("evaluation needs region labels".into()))?;
    let mut rng = Rng::new(seed).substream("eval.folds");
    let pred = cross_val_predict(embeddings, &labels.targets, cfg.folds, cfg.alpha, &mut rng)?;
    let nmi = ds.communities.as_ref().map(|c| community_nmi(embeddings, c, seed)).transpose()?;
    let row = |stratum: &str, metrics, nmi| EvalRow {
        variant: variant.to_string(),
        seed,
        task: "target".into(),
        stratum: stratum.into(),
        metrics,
        nmi,
    };
    let mut rows = vec![row("all", compute_metrics(&pred, &labels.targets)?, nmi)];
    if let Some(series) = &labels.series {
        for (band, _, m) in density_strata_eval(embeddings, &labels.targets, series, cfg, &mut rng)? {
            rows.push(row(band.as_str(), m, None));
        }
    }
    Ok(rows)
}

/// Trains every `(variant, seed)` cell and evaluates its embeddings.
pub fn run_ablation(
    ds: &Dataset,
    hp: &Hyperparameters,
    variants: &[(&str, AblationFlags)],
    seeds: &[u64],
    cfg: &EvalConfig,
) -> Result<Vec<EvalRow>> {
    let mut rows = Vec::new();
    for &(name, flags) in variants {
        for &seed in seeds {
            let mut cell = hp.clone();
            cell.flags = flags;
            cell.seed = seed;
            let (emb, _, _) = train(ds, &cell)?;
            rows.extend(evaluate_embeddings(&emb, ds, name, seed, cfg)?);
        }
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| format!("{x}"))
}

pub fn write_eval_report(rows: &[EvalRow], path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::from("variant,seed,task,stratum,mae,mape,rmse,nmi\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},\"{}\",{},{},{},{}",
            r.variant,
            r.seed,
            r.task,
            r.stratum,
            r.metrics.mae,
            opt(r.metrics.mape),
            r.metrics.rmse,
            opt(r.nmi)
        );
    }
    std::fs::write(path.as_ref(), s).map_err(|e| Error::io(path.as_ref(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_thresholds() {
        // Ratio 0.3 scales to 1.5.
        let s: Vec<f64> = (0..10).map(|i| if i < 3 { 1.0 } else { 0.0 }).collect();
        assert_eq!(density_band(&s), Some(Stratum::Sparse));
        assert_eq!(density_band(&[1.0, 0.0]), Some(Stratum::Sparse));
        assert_eq!(density_band(&[1.0, 1.0, 0.0]), Some(Stratum::Dense));
        assert_eq!(density_band(&[0.0, 0.0]), None);
        assert_eq!(density_band(&[]), None);
    }

    #[test]
    fn identical_density_gives_one_band() {
        let mut rng = Rng::new(4);
        let emb = Tensor::from_fn(10, 2, |_, _| rng.normal());
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let series = vec![vec![1.0, 1.0, 1.0, 0.0]; 10];
        let out = density_strata_eval(&emb, &y, &series, &EvalConfig::default(), &mut rng).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, Stratum::Dense);
        assert_eq!(out[0].1.len(), 10);
    }
}
