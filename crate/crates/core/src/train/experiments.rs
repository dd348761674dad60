use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{inner_products_with, train, Dataset, PenaltyKind, TrainConfig, TrainRun};
use crate::error::{Error, Result};
use crate::taylor::dataset_scale_factor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub regime: String,
    pub penalty: PenaltyKind,
    pub final_loss: f64,
    pub beta: Vec<f64>,
    /// `NaN` when no exact-regularizer run is part of the comparison.
    pub cos_sim_vs_exact: f64,
    pub l2_dist_vs_exact: f64,
    pub frac_b_gt_2pi: f64,
    pub aborted: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub a: String,
    pub b: String,
    pub cos_sim: f64,
    pub l2_dist: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub pairwise: Vec<PairRow>,
}

impl Comparison {
    pub fn row(&self, regime: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.regime == regime)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Trains one run per regime on the same data and seed and compares the
/// final weights. Runs execute concurrently; rows keep the order of
/// `regimes`.
pub fn compare_regimes(ds: &Dataset, base: &TrainConfig, regimes: &[PenaltyKind]) -> Result<Comparison> {
    let runs: Vec<TrainRun> = regimes
        .par_iter()
        .map(|&penalty| {
            train(
                ds,
                &TrainConfig {
                    penalty,
                    ..base.clone()
                },
            )
        })
        .collect::<Result<_>>()?;
    let labels: Vec<String> = regimes.iter().map(|p| p.label()).collect();
    let exact = regimes
        .iter()
        .position(|p| *p == PenaltyKind::Exact)
        .map(|i| runs[i].params.clone());
    let rows = runs
        .iter()
        .zip(&labels)
        .map(|(run, label)| {
            let (cos, dist) = match &exact {
                Some(e) => (cosine(&run.params, e), distance(&run.params, e)),
                None => (f64::NAN, f64::NAN),
            };
            ComparisonRow {
                regime: label.clone(),
                penalty: run.config.penalty,
                final_loss: run.final_loss,
                beta: run.params.clone(),
                cos_sim_vs_exact: cos,
                l2_dist_vs_exact: dist,
                frac_b_gt_2pi: inner_products_with(ds, &run.params, Some(&base.dropout)).1,
                aborted: run.aborted.as_ref().map(|a| format!("epoch {}: {}", a.epoch, a.reason)),
            }
        })
        .collect();
    let mut pairwise = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            pairwise.push(PairRow {
                a: labels[i].clone(),
                b: labels[j].clone(),
                cos_sim: cosine(&runs[i].params, &runs[j].params),
                l2_dist: distance(&runs[i].params, &runs[j].params),
            });
        }
    }
    Ok(Comparison { rows, pairwise })
}

/// Outcome of training with and without the hard weight bound on features
/// scaled so that the bound keeps every `|x.beta|` within `2 pi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundedReport {
    pub cap: f64,
    pub scale_factor: f64,
    pub epochs: usize,
    pub constrained_final_loss: f64,
    pub unconstrained_final_loss: f64,
    /// Constrained minus unconstrained final loss.
    pub loss_gap: f64,
    pub unconstrained_strictly_lower: bool,
    /// Largest `|x_i.beta|` seen at any epoch of the constrained run.
    pub constrained_max_abs_xb: f64,
    pub unconstrained_max_abs_xb: f64,
    pub bounded_throughout: bool,
    #[serde(skip)]
    pub constrained: Option<TrainRun>,
    #[serde(skip)]
    pub unconstrained: Option<TrainRun>,
}

/// Rescales the features by the dataset-wide `2 pi / d` rule for `cap`, then
/// trains the same configuration with and without `||beta||_inf <= cap`.
/// An infinite cap leaves the features alone and makes both runs identical.
pub fn bounded_weight_experiment(ds: &Dataset, cap: f64, base: &TrainConfig) -> Result<BoundedReport> {
    if !(cap > 0.0) {
        return Err(Error::Config(format!("weight cap must be positive, got {cap}")));
    }
    let factor = if cap.is_finite() {
        dataset_scale_factor(ds.examples().iter().map(|e| e.x.as_slice()), cap)?
    } else {
        1.0
    };
    let scaled = ds.scaled(factor);
    let constrained = train(
        &scaled,
        &TrainConfig {
            cap: Some(cap),
            ..base.clone()
        },
    )?;
    let unconstrained = train(
        &scaled,
        &TrainConfig {
            cap: None,
            ..base.clone()
        },
    )?;
    let constrained_max_abs_xb = constrained.max_abs_xb(&scaled);
    Ok(BoundedReport {
        cap,
        scale_factor: factor,
        epochs: base.epochs,
        constrained_final_loss: constrained.final_loss,
        unconstrained_final_loss: unconstrained.final_loss,
        loss_gap: constrained.final_loss - unconstrained.final_loss,
        unconstrained_strictly_lower: unconstrained.final_loss < constrained.final_loss,
        constrained_max_abs_xb,
        unconstrained_max_abs_xb: unconstrained.max_abs_xb(&scaled),
        bounded_throughout: constrained_max_abs_xb < 2.0 * PI,
        constrained: Some(constrained),
        unconstrained: Some(unconstrained),
    })
}
