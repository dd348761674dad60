//! Losses, penalties and their gradients.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, DatasetKind};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::noise::{self, dot, stream_rng, DropoutConfig, Example, MomentMode, NoiseModel};
use crate::partition::Family;
use crate::taylor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PenaltyKind {
    None,
    /// `lambda ||beta||^2`.
    L2 { lambda: f64 },
    R2,
    Rk { k: usize },
    /// The dropout regularizer itself.
    Exact,
    /// Training on dropout-noised inputs, `samples` masks per example and epoch.
    McDropout { samples: usize },
}

impl PenaltyKind {
    pub const DEFAULT_MC_SAMPLES: usize = 8;

    pub fn validate(&self) -> Result<()> {
        match *self {
            PenaltyKind::L2 { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
                Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")))
            }
            PenaltyKind::Rk { k } if k < 2 => Err(Error::Config(format!("k must be >= 2, got {k}"))),
            PenaltyKind::McDropout { samples: 0 } => {
                Err(Error::Config("mc-dropout needs at least one sample".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PenaltyKind::None => "none".into(),
            PenaltyKind::L2 { .. } => "l2".into(),
            PenaltyKind::R2 => "r2".into(),
            PenaltyKind::Rk { k } => format!("r{k}"),
            PenaltyKind::Exact => "exact".into(),
            PenaltyKind::McDropout { .. } => "mc-dropout".into(),
        }
    }
}

/// `log sum_c e^{v_c}`, shifted by the maximum.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + v.iter().map(|a| (a - top).exp()).sum::<f64>().ln()
}

/// Negative log-likelihood `A(x.beta) - y x.beta` of one binary example.
pub fn glm_loss(beta: &[f64], ex: &Example, family: Family) -> f64 {
    let z = ex.dot(beta);
    family.log_partition(z) - ex.y as f64 * z
}

/// Softmax cross-entropy; `weights` holds `q` rows of length `d`.
pub fn softmax_loss(weights: &[f64], ex: &Example, q: usize) -> f64 {
    let logits = class_logits(weights, &ex.x, q);
    log_sum_exp(&logits) - logits[ex.y]
}

fn class_logits(weights: &[f64], x: &[f64], q: usize) -> Vec<f64> {
    weights.chunks(weights.len() / q).map(|w| dot(w, x)).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|l| (l - lse).exp()).collect()
}

fn scale(ds: &Dataset, cfg: &TrainConfig) -> f64 {
    if cfg.normalize {
        1.0 / ds.len() as f64
    } else {
        1.0
    }
}

/// Clean-data loss, averaged over examples when `cfg.normalize`.
pub fn data_loss(ds: &Dataset, cfg: &TrainConfig, params: &[f64]) -> f64 {
    data_loss_and_gradient(ds.examples(), ds.kind(), cfg, params).0 * scale(ds, cfg)
}

/// Summed loss and gradient over `examples`, each example carrying one
/// feature row per class (`rows`) for the noised softmax case.
fn loss_and_gradient_rows<'a>(
    rows: impl Iterator<Item = (&'a [f64], usize)>,
    kind: DatasetKind,
    family: Family,
    params: &[f64],
) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    match kind {
        DatasetKind::Binary => {
            for (x, y) in rows {
                let z = dot(x, params);
                loss += family.log_partition(z) - y as f64 * z;
                let r = family.mean(z) - y as f64;
                for (g, xl) in grad.iter_mut().zip(x) {
                    *g += r * xl;
                }
            }
        }
        DatasetKind::Multiclass(q) => {
            let d = params.len() / q;
            for (x, y) in rows {
                // x is either one row shared by all classes or q stacked rows
                let row = |c: usize| if x.len() == d { x } else { &x[c * d..(c + 1) * d] };
                let logits: Vec<f64> = (0..q).map(|c| dot(&params[c * d..(c + 1) * d], row(c))).collect();
                loss += log_sum_exp(&logits) - logits[y];
                for (c, pc) in softmax(&logits).iter().enumerate() {
                    let r = pc - if c == y { 1.0 } else { 0.0 };
                    for (g, xl) in grad[c * d..(c + 1) * d].iter_mut().zip(row(c)) {
                        *g += r * xl;
                    }
                }
            }
        }
    }
    (loss, grad)
}

fn data_loss_and_gradient(
    examples: &[Example],
    kind: DatasetKind,
    cfg: &TrainConfig,
    params: &[f64],
) -> (f64, Vec<f64>) {
    loss_and_gradient_rows(
        examples.iter().map(|e| (e.x.as_slice(), e.y)),
        kind,
        cfg.family,
        params,
    )
}

/// Clean-data loss and gradient, scaled like [`data_loss`].
pub fn data_objective(ds: &Dataset, cfg: &TrainConfig, params: &[f64]) -> (f64, Vec<f64>) {
    let (loss, mut grad) = data_loss_and_gradient(ds.examples(), ds.kind(), cfg, params);
    let s = scale(ds, cfg);
    if s != 1.0 {
        grad.iter_mut().for_each(|g| *g *= s);
    }
    (loss * s, grad)
}

/// Seed of the Monte Carlo stream behind example `i`'s exact penalty.
fn example_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64)
}

/// Value and gradient of a deterministic penalty (every kind except
/// [`PenaltyKind::McDropout`], which returns zero here).
pub fn penalty(ds: &Dataset, cfg: &TrainConfig, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    let zero = || (0.0, vec![0.0; params.len()]);
    match (cfg.penalty, ds.kind()) {
        (PenaltyKind::None | PenaltyKind::McDropout { .. }, _) => Ok(zero()),
        (PenaltyKind::L2 { lambda }, _) => Ok((
            lambda * params.iter().map(|b| b * b).sum::<f64>(),
            params.iter().map(|b| 2.0 * lambda * b).collect(),
        )),
        (kind, DatasetKind::Multiclass(_)) => Err(Error::Unsupported(format!(
            "the {} penalty on a softmax layer",
            kind.label()
        ))),
        (kind, DatasetKind::Binary) => {
            let mut value = 0.0;
            let mut grad = vec![0.0; params.len()];
            for (i, ex) in ds.examples().iter().enumerate() {
                let (v, g) = match kind {
                    PenaltyKind::R2 => taylor::rk_penalty_with_gradient(2, &ex.x, params, &cfg.dropout, cfg.family)?,
                    PenaltyKind::Rk { k } => {
                        taylor::rk_penalty_with_gradient(k, &ex.x, params, &cfg.dropout, cfg.family)?
                    }
                    PenaltyKind::Exact => {
                        let mode = if ex.dim() <= noise::ENUMERATION_LIMIT {
                            MomentMode::Enumerate
                        } else {
                            MomentMode::MonteCarlo {
                                draws: cfg.exact_draws,
                                seed: example_seed(cfg.seed, i),
                            }
                        };
                        let (e, g) = noise::exact_regularizer_with_gradient(&ex.x, params, &cfg.dropout, cfg.family, mode)?;
                        (e.value, g)
                    }
                    _ => unreachable!(),
                };
                value += v;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let s = scale(ds, cfg);
            grad.iter_mut().for_each(|g| *g *= s);
            Ok((value * s, grad))
        }
    }
}

/// Per-coordinate multipliers `x~ = m (.) x` for one draw.
fn draw_multipliers(rng: &mut ChaCha8Rng, dropout: &DropoutConfig, d: usize, out: &mut Vec<f64>) {
    let keep = 1.0 - dropout.delta();
    out.clear();
    match dropout.model() {
        NoiseModel::IndependentCoordinates => {
            out.extend((0..d).map(|_| if rng.random::<f64>() < keep { dropout.scale() } else { 0.0 }));
        }
        model => {
            let dropped = if model == NoiseModel::ScalarCoupling { 1.0 } else { 0.0 };
            let m = if rng.random::<f64>() < keep { dropout.scale() } else { dropped };
            out.extend(std::iter::repeat_n(m, d));
        }
    }
}

/// Effective number of masks per example and epoch; a single draw when there
/// is no noise, which keeps the run identical to plain training.
pub fn mc_samples(cfg: &TrainConfig) -> usize {
    match cfg.penalty {
        PenaltyKind::McDropout { .. } if cfg.dropout.delta() == 0.0 => 1,
        PenaltyKind::McDropout { samples } => samples,
        _ => 0,
    }
}

/// Loss and gradient on freshly noised inputs for `epoch`, scaled like
/// [`data_loss`].
pub fn mc_dropout_objective(ds: &Dataset, cfg: &TrainConfig, params: &[f64], epoch: usize) -> (f64, Vec<f64>) {
    let samples = mc_samples(cfg).max(1);
    let d = ds.dim();
    let masks_per_example = match ds.kind() {
        DatasetKind::Multiclass(q) if !cfg.shared_masks => q,
        _ => 1,
    };
    let mut rng = stream_rng(cfg.seed, epoch as u64);
    let mut mask = Vec::with_capacity(d);
    let mut total_loss = 0.0;
    let mut total_grad = vec![0.0; params.len()];
    for s in 0..samples {
        let mut noised: Vec<(Vec<f64>, usize)> = Vec::with_capacity(ds.len());
        for ex in ds.examples() {
            let mut row = Vec::with_capacity(d * masks_per_example);
            for _ in 0..masks_per_example {
                draw_multipliers(&mut rng, &cfg.dropout, d, &mut mask);
                row.extend(ex.x.iter().zip(&mask).map(|(x, m)| x * m));
            }
            noised.push((row, ex.y));
        }
        let (loss, grad) = loss_and_gradient_rows(
            noised.iter().map(|(x, y)| (x.as_slice(), *y)),
            ds.kind(),
            cfg.family,
            params,
        );
        if s == 0 {
            total_loss = loss;
            total_grad = grad;
        } else {
            total_loss += loss;
            for (a, b) in total_grad.iter_mut().zip(&grad) {
                *a += b;
            }
        }
    }
    let s = scale(ds, cfg);
    if samples > 1 {
        let inv = 1.0 / samples as f64;
        total_loss *= inv;
        total_grad.iter_mut().for_each(|g| *g *= inv);
    }
    if s != 1.0 {
        total_grad.iter_mut().for_each(|g| *g *= s);
    }
    (total_loss * s, total_grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::log_partition;
    use crate::train::dataset::{Provenance, SyntheticSpec};

    fn ex(x: &[f64], y: usize) -> Example {
        Example { x: x.to_vec(), y }
    }

    #[test]
    fn glm_loss_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((glm_loss(&[0.0, 0.0], &ex(&[1.0, 2.0], 1), Family::Logistic) - ln2).abs() < 1e-15);
        assert!((glm_loss(&[0.0, 0.0], &ex(&[1.0, 2.0], 0), Family::Logistic) - ln2).abs() < 1e-15);
        let v = glm_loss(&[1.0], &ex(&[1.0], 1), Family::Logistic);
        assert!((v - (log_partition(1.0) - 1.0)).abs() < 1e-15);
        assert!((v - 0.313_262).abs() < 1e-6);
        // no overflow far from the origin
        assert!((glm_loss(&[1.0], &ex(&[800.0], 1), Family::Logistic)).abs() < 1e-12);
        assert!((glm_loss(&[1.0], &ex(&[800.0], 0), Family::Logistic) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn tied_softmax_matches_binary() {
        for z in [-30.0, -2.5, 0.0, 0.7, 4.0, 40.0] {
            for y in [0, 1] {
                let e = ex(&[z, 1.0], y);
                let beta = [1.0, 0.0];
                let tied = [-0.5, 0.0, 0.5, 0.0];
                let a = glm_loss(&beta, &e, Family::Logistic);
                let b = softmax_loss(&tied, &e, 2);
                assert!((a - b).abs() < 1e-12, "z={z} y={y}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + std::f64::consts::LN_2)).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[-1e308, 0.0]), 0.0);
    }

    #[test]
    fn plain_gradient_at_zero() {
        let ds = Dataset::synthetic(SyntheticSpec::new(2, 3, 40)).unwrap();
        let cfg = TrainConfig {
            normalize: false,
            ..TrainConfig::default()
        };
        let (_, g) = data_objective(&ds, &cfg, &[0.0; 3]);
        let mut expected = [0.0; 3];
        for e in ds.examples() {
            for l in 0..3 {
                expected[l] += (0.5 - e.y as f64) * e.x[l];
            }
        }
        for l in 0..3 {
            assert!((g[l] - expected[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn unsupported_softmax_penalties() {
        let ds = Dataset::new(
            vec![ex(&[1.0, 0.0], 2), ex(&[0.0, 1.0], 0)],
            DatasetKind::Multiclass(3),
            Provenance::Derived("t".into()),
        )
        .unwrap();
        for penalty in [PenaltyKind::R2, PenaltyKind::Rk { k: 4 }, PenaltyKind::Exact] {
            let cfg = TrainConfig {
                penalty,
                ..TrainConfig::default()
            };
            assert!(matches!(penalty_of(&ds, &cfg), Err(Error::Unsupported(_))));
        }
    }

    fn penalty_of(ds: &Dataset, cfg: &TrainConfig) -> Result<(f64, Vec<f64>)> {
        penalty(ds, cfg, &vec![0.1; ds.param_len()])
    }

    #[test]
    fn penalty_validation() {
        assert!(PenaltyKind::L2 { lambda: -1.0 }.validate().is_err());
        assert!(PenaltyKind::Rk { k: 1 }.validate().is_err());
        assert!(PenaltyKind::McDropout { samples: 0 }.validate().is_err());
        assert!(PenaltyKind::Rk { k: 2 }.validate().is_ok());
    }
}
