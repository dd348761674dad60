//! Full-batch gradient-descent training of logistic and single-layer
//! softmax models under the penalty regimes of [`PenaltyKind`].

mod dataset;
mod experiments;
mod objective;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, DatasetKind, Provenance, SyntheticSpec};
pub use experiments::{
    bounded_weight_experiment, compare_regimes, BoundedReport, Comparison, ComparisonRow, PairRow,
};
pub use objective::{
    data_loss, data_objective, glm_loss, log_sum_exp, mc_dropout_objective, mc_samples, penalty,
    softmax_loss, PenaltyKind,
};

use crate::error::{Error, Result};
use crate::noise::{dot, DropoutConfig, NoiseModel, DEFAULT_MC_DRAWS};
use crate::partition::Family;

/// Objective values above this abort a run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub penalty: PenaltyKind,
    pub dropout: DropoutConfig,
    pub family: Family,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Hard bound `||beta||_inf <= cap`, applied after every step.
    pub cap: Option<f64>,
    /// Average loss and per-example penalties over the dataset.
    pub normalize: bool,
    /// Softmax dropout: one mask per example instead of one per class.
    pub shared_masks: bool,
    /// Monte Carlo draws for the exact penalty when `d` is too large to
    /// enumerate.
    pub exact_draws: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            penalty: PenaltyKind::None,
            dropout: DropoutConfig::new(0.5, NoiseModel::IndependentCoordinates).expect("valid"),
            family: Family::Logistic,
            learning_rate: 0.5,
            epochs: 500,
            seed: crate::DEFAULT_SEED,
            cap: None,
            normalize: true,
            shared_masks: false,
            exact_draws: DEFAULT_MC_DRAWS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if let Some(cap) = self.cap {
            if !(cap > 0.0) {
                return Err(Error::Config(format!("weight cap must be positive, got {cap}")));
            }
        }
        if self.exact_draws == 0 {
            return Err(Error::Config("exact_draws must be >= 1".into()));
        }
        Ok(())
    }
}

/// State before the update of one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    /// Clean-data loss.
    pub loss: f64,
    /// Penalty value; for Monte Carlo dropout the noised minus clean loss.
    pub penalty: f64,
    pub beta_norm: f64,
    /// `max_i |x_i.beta|` (over all classes for softmax).
    pub max_xb: f64,
    /// Fraction of examples with `|B_i| = |x_i.beta| delta/(1-delta) > 2 pi`.
    pub frac_b_gt_2pi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub epoch: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub trace: Vec<TraceRow>,
    /// Final parameters (`q` stacked rows for softmax).
    pub params: Vec<f64>,
    /// Clean-data loss at the final parameters.
    pub final_loss: f64,
    pub aborted: Option<Abort>,
}

impl TrainRun {
    pub fn max_abs_xb(&self, ds: &Dataset) -> f64 {
        self.trace
            .iter()
            .map(|r| r.max_xb)
            .fold(inner_products(ds, &self.params).0, f64::max)
    }
}

/// `(max_i |x_i.beta|, fraction of |B_i| > 2 pi)`.
fn inner_products(ds: &Dataset, params: &[f64]) -> (f64, f64) {
    inner_products_with(ds, params, None)
}

fn inner_products_with(ds: &Dataset, params: &[f64], dropout: Option<&DropoutConfig>) -> (f64, f64) {
    let d = ds.dim();
    let odds = dropout.map_or(0.0, |c| c.odds());
    let mut largest = 0.0f64;
    let mut beyond = 0usize;
    for ex in ds.examples() {
        let m = params
            .chunks(d)
            .map(|w| dot(w, &ex.x).abs())
            .fold(0.0, f64::max);
        largest = largest.max(m);
        if m * odds > 2.0 * PI {
            beyond += 1;
        }
    }
    (largest, beyond as f64 / ds.len() as f64)
}

/// Runs full-batch gradient descent from zero.
///
/// The run stops early, and records why, when the objective exceeds
/// [`DIVERGENCE_LIMIT`] or stops being finite, or when a penalty cannot be
/// evaluated.
pub fn train(ds: &Dataset, config: &TrainConfig) -> Result<TrainRun> {
    config.validate()?;
    if let (DatasetKind::Multiclass(_), PenaltyKind::R2 | PenaltyKind::Rk { .. } | PenaltyKind::Exact) =
        (ds.kind(), config.penalty)
    {
        return Err(Error::Unsupported(format!(
            "the {} penalty on a softmax layer",
            config.penalty.label()
        )));
    }
    let mut params = vec![0.0; ds.param_len()];
    let mut trace = Vec::with_capacity(config.epochs);
    let mut aborted = None;
    for epoch in 0..config.epochs {
        let (loss, clean_grad) = data_objective(ds, config, &params);
        let (pen, grad) = match config.penalty {
            PenaltyKind::None => (0.0, clean_grad),
            PenaltyKind::McDropout { .. } => {
                let (noised, g) = mc_dropout_objective(ds, config, &params, epoch);
                (noised - loss, g)
            }
            _ => match penalty(ds, config, &params) {
                Ok((v, pg)) => (v, clean_grad.iter().zip(&pg).map(|(a, b)| a + b).collect()),
                Err(e) => {
                    aborted = Some(Abort {
                        epoch,
                        reason: e.to_string(),
                    });
                    break;
                }
            },
        };
        let (max_xb, frac) = inner_products_with(ds, &params, Some(&config.dropout));
        trace.push(TraceRow {
            epoch,
            loss,
            penalty: pen,
            beta_norm: params.iter().map(|b| b * b).sum::<f64>().sqrt(),
            max_xb,
            frac_b_gt_2pi: frac,
        });
        let objective = loss + pen;
        if !objective.is_finite() || objective > DIVERGENCE_LIMIT {
            aborted = Some(Abort {
                epoch,
                reason: format!("objective {objective:e} exceeded the divergence guard"),
            });
            break;
        }
        for (b, g) in params.iter_mut().zip(&grad) {
            *b -= config.learning_rate * g;
            if let Some(cap) = config.cap {
                *b = b.clamp(-cap, cap);
            }
        }
        if params.iter().any(|b| !b.is_finite()) {
            aborted = Some(Abort {
                epoch,
                reason: "parameters became non-finite".into(),
            });
            break;
        }
    }
    let final_loss = data_loss(ds, config, &params);
    Ok(TrainRun {
        config: config.clone(),
        trace,
        params,
        final_loss,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> Dataset {
        Dataset::synthetic(SyntheticSpec::new(7, 2, 100).separable(0.1)).unwrap()
    }

    #[test]
    fn same_seed_same_trace() {
        let ds = Dataset::synthetic(SyntheticSpec::new(5, 3, 60)).unwrap();
        let cfg = TrainConfig {
            penalty: PenaltyKind::McDropout { samples: 3 },
            epochs: 40,
            ..TrainConfig::default()
        };
        assert_eq!(train(&ds, &cfg).unwrap(), train(&ds, &cfg).unwrap());
    }

    #[test]
    fn noiseless_mc_dropout_is_plain_training() {
        let ds = Dataset::synthetic(SyntheticSpec::new(5, 3, 60)).unwrap();
        let base = TrainConfig {
            dropout: DropoutConfig::new(0.0, NoiseModel::IndependentCoordinates).unwrap(),
            epochs: 80,
            ..TrainConfig::default()
        };
        let plain = train(&ds, &base).unwrap();
        let mc = train(
            &ds,
            &TrainConfig {
                penalty: PenaltyKind::McDropout { samples: 8 },
                ..base.clone()
            },
        )
        .unwrap();
        assert_eq!(plain.trace, mc.trace);
        assert_eq!(plain.params, mc.params);
    }

    #[test]
    fn norm_grows_on_separable_data() {
        let ds = separable();
        let run = train(
            &ds,
            &TrainConfig {
                epochs: 300,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let tail = &run.trace[run.trace.len() - 50..];
        assert!(tail.windows(2).all(|w| w[1].beta_norm >= w[0].beta_norm));
        assert!(run.aborted.is_none());
    }

    #[test]
    fn infinite_cap_changes_nothing() {
        let ds = separable();
        let base = TrainConfig {
            epochs: 50,
            ..TrainConfig::default()
        };
        let capped = TrainConfig {
            cap: Some(f64::INFINITY),
            ..base.clone()
        };
        assert_eq!(train(&ds, &base).unwrap().trace, train(&ds, &capped).unwrap().trace);
    }

    #[test]
    fn cap_is_respected() {
        let ds = separable();
        let run = train(
            &ds,
            &TrainConfig {
                cap: Some(0.3),
                epochs: 100,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert!(run.params.iter().all(|b| b.abs() <= 0.3));
    }

    #[test]
    fn divergence_is_recorded_not_raised() {
        // far outside the radius the truncated series drives the weights off
        let ds = separable().scaled(6.0);
        let run = train(
            &ds,
            &TrainConfig {
                penalty: PenaltyKind::Rk { k: 9 },
                dropout: DropoutConfig::new(0.6, NoiseModel::IndependentCoordinates).unwrap(),
                learning_rate: 2.0,
                epochs: 400,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let first = run.trace.first().unwrap().loss;
        let last = run.trace.last().unwrap().loss;
        assert!(run.aborted.is_some() || last > 1e3 * first, "{:?}", run.trace.last());
    }

    #[test]
    fn softmax_with_two_tied_classes_follows_binary_training() {
        let ds = Dataset::synthetic(SyntheticSpec::new(11, 3, 80)).unwrap();
        let multi = Dataset::new(
            ds.examples().to_vec(),
            DatasetKind::Multiclass(2),
            Provenance::Derived("relabelled".into()),
        )
        .unwrap();
        let base = TrainConfig {
            epochs: 60,
            ..TrainConfig::default()
        };
        let binary = train(&ds, &base).unwrap();
        // rows stay at -beta/2 and beta/2, which moves beta at twice the rate
        let softmax = train(
            &multi,
            &TrainConfig {
                learning_rate: base.learning_rate / 2.0,
                ..base.clone()
            },
        )
        .unwrap();
        for (a, b) in binary.trace.iter().zip(&softmax.trace) {
            assert!((a.loss - b.loss).abs() < 1e-8);
        }
    }

    #[test]
    fn softmax_rejects_series_penalties() {
        let ds = Dataset::synthetic(SyntheticSpec {
            classes: 3,
            ..SyntheticSpec::new(1, 2, 30)
        })
        .unwrap();
        let cfg = TrainConfig {
            penalty: PenaltyKind::R2,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&ds, &cfg), Err(Error::Unsupported(_))));
        let mc = TrainConfig {
            penalty: PenaltyKind::McDropout { samples: 2 },
            epochs: 5,
            ..TrainConfig::default()
        };
        assert!(train(&ds, &mc).is_ok());
        assert!(train(&ds, &TrainConfig { shared_masks: true, ..mc }).is_ok());
    }

    #[test]
    fn config_validation() {
        let ds = separable();
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(train(&ds, &bad).is_err());
        let bad = TrainConfig {
            cap: Some(-1.0),
            ..TrainConfig::default()
        };
        assert!(train(&ds, &bad).is_err());
    }
}
