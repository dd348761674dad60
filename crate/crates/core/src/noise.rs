//! Dropout noise laws, displacement moments and the exact dropout regularizer
//! `R(beta) = E[A(x~.beta)] - A(x.beta)`.
//!
//! Three laws for the displacement `D = x~.beta - x.beta` are supported:
//!
//! * [`NoiseModel::ScalarCoupling`]: `D = B Y` with `B = (x.beta) delta/(1-delta)`
//!   and `Y ~ Bernoulli(1 - delta)`. This is the law whose moments are
//!   `E[D^n] = (x.beta)^n delta^n / (1-delta)^{n-1}`. It is biased:
//!   `E[D] = (x.beta) delta`.
//! * [`NoiseModel::ScalarDropAll`]: the whole vector is dropped together, so
//!   `D = -x.beta` with probability `delta` and `B` otherwise. Unbiased.
//! * [`NoiseModel::IndependentCoordinates`]: ordinary per-coordinate dropout.
//!   Unbiased.
//!
//! Independent-coordinate moments have three routes: exhaustive enumeration
//! of all `2^d` masks, an exact binomial convolution over coordinates, and
//! seeded Monte Carlo.

use num_traits::Num;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Family;

/// Largest `d` for which masks are enumerated exhaustively.
pub const ENUMERATION_LIMIT: usize = 22;

/// Draws used when Monte Carlo is chosen automatically.
pub const DEFAULT_MC_DRAWS: u64 = 100_000;

/// Draws per independently seeded stream.
const MC_CHUNK: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    ScalarCoupling,
    ScalarDropAll,
    IndependentCoordinates,
}

impl NoiseModel {
    pub fn is_scalar(self) -> bool {
        !matches!(self, NoiseModel::IndependentCoordinates)
    }

    /// Whether `E[D] = 0` under this law.
    pub fn is_unbiased(self) -> bool {
        !matches!(self, NoiseModel::ScalarCoupling)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    delta: f64,
    scale: f64,
    model: NoiseModel,
}

impl DropoutConfig {
    pub fn new(delta: f64, model: NoiseModel) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::Config(format!(
                "drop probability must lie in [0, 1), got {delta}"
            )));
        }
        Ok(DropoutConfig {
            delta,
            scale: 1.0 / (1.0 - delta),
            model,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Retain scaling `1 / (1 - delta)`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn model(&self) -> NoiseModel {
        self.model
    }

    /// `delta / (1 - delta)`, the relative jump of a retained coordinate.
    pub fn odds(&self) -> f64 {
        self.delta / (1.0 - self.delta)
    }

    pub fn with_model(&self, model: NoiseModel) -> Self {
        DropoutConfig { model, ..*self }
    }
}

/// The scalar displacement law at inner product `x.beta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseDisplacement {
    xb: f64,
    b: f64,
    delta: f64,
    model: NoiseModel,
}

impl NoiseDisplacement {
    pub fn new(xb: f64, cfg: &DropoutConfig) -> Result<Self> {
        if !cfg.model.is_scalar() {
            return Err(Error::Unsupported(
                "a scalar displacement law for independent coordinates".into(),
            ));
        }
        Ok(NoiseDisplacement {
            xb,
            b: xb * cfg.odds(),
            delta: cfg.delta,
            model: cfg.model,
        })
    }

    /// `B = (x.beta) delta / (1 - delta)`.
    pub fn b(&self) -> f64 {
        self.b
    }

    /// The two support points with their probabilities.
    pub fn support(&self) -> [(f64, f64); 2] {
        let dropped = match self.model {
            NoiseModel::ScalarDropAll => -self.xb,
            _ => 0.0,
        };
        [(self.b, 1.0 - self.delta), (dropped, self.delta)]
    }

    pub fn mean(&self) -> f64 {
        self.support().iter().map(|(v, p)| v * p).sum()
    }

    /// `E[D^n]`; `n = 0` gives 1.
    pub fn moment(&self, n: u32) -> f64 {
        let mu = scalar_moment_factor(n, self.delta, self.model);
        mu * self.xb.powi(n as i32)
    }
}

/// `E[D^n] / (x.beta)^n` for the scalar laws.
fn scalar_moment_factor(n: u32, delta: f64, model: NoiseModel) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let n = n as i32;
    match model {
        NoiseModel::ScalarCoupling => delta.powi(n) / (1.0 - delta).powi(n - 1),
        NoiseModel::ScalarDropAll => {
            let odds = delta / (1.0 - delta);
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            (1.0 - delta) * odds.powi(n) + delta * sign
        }
        NoiseModel::IndependentCoordinates => unreachable!("scalar law only"),
    }
}

/// A labelled feature vector. `y` is in `{0, 1}` for binary data or a class
/// index for multiclass data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: usize,
}

impl Example {
    pub fn new(x: Vec<f64>, y: usize) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Dataset("feature vector must have d >= 1".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite feature".into()));
        }
        Ok(Example { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn dot(&self, beta: &[f64]) -> f64 {
        dot(&self.x, beta)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(x: &[f64], beta: &[f64]) -> Result<()> {
    if x.len() != beta.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: beta.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Dataset("feature vector must have d >= 1".into()));
    }
    Ok(())
}

/// How an expectation was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    ClosedForm,
    Enumeration { masks: u64 },
    Convolution,
    MonteCarlo { draws: u64, seed: u64 },
}

/// An expectation with its standard error (zero for exact routes).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub method: EstimateMethod,
}

impl Estimate {
    fn exact(value: f64, method: EstimateMethod) -> Self {
        Estimate {
            value,
            std_error: 0.0,
            method,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum MomentMode {
    /// Enumeration up to [`ENUMERATION_LIMIT`], Monte Carlo beyond.
    #[default]
    Auto,
    Enumerate,
    MonteCarlo { draws: u64, seed: u64 },
}

/// `E[D^n] = (x.beta)^n delta^n / (1-delta)^{n-1}` under the scalar law (or
/// its drop-all variant).
pub fn scalar_moment(n: u32, xb: f64, cfg: &DropoutConfig) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("scalar_moment", "moment order must be >= 1"));
    }
    Ok(NoiseDisplacement::new(xb, cfg)?.moment(n))
}

/// Numeric types the exact moment routines run over (`f64`, big rationals).
pub trait Field: Clone + Num {}
impl<T: Clone + Num> Field for T {}

fn pascal<T: Field>(rows: usize) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(rows + 1);
    for m in 0..=rows {
        let mut row = vec![T::one(); m + 1];
        for a in 1..m {
            row[a] = out[m - 1][a - 1].clone() + out[m - 1][a].clone();
        }
        out.push(row);
    }
    out
}

/// Moments `E[u^a]`, `a = 0..=max_m`, of one coordinate's contribution
/// `u = w (xi - 1)`.
fn coordinate_law_moments<T: Field>(max_m: usize, w: &T, delta: &T) -> Vec<T> {
    let keep = T::one() - delta.clone();
    let up = w.clone() * delta.clone() / keep.clone();
    let down = T::zero() - w.clone();
    let mut out = Vec::with_capacity(max_m + 1);
    let (mut up_pow, mut down_pow) = (T::one(), T::one());
    for _ in 0..=max_m {
        out.push(keep.clone() * up_pow.clone() + delta.clone() * down_pow.clone());
        up_pow = up_pow * up.clone();
        down_pow = down_pow * down.clone();
    }
    out
}

fn convolve<T: Field>(a: &[T], b: &[T], binom: &[Vec<T>]) -> Vec<T> {
    (0..a.len())
        .map(|m| {
            (0..=m).fold(T::zero(), |acc, i| {
                acc + binom[m][i].clone() * a[m - i].clone() * b[i].clone()
            })
        })
        .collect()
}

/// Raw moments `E[D^m]`, `m = 0..=max_m`, of independent-coordinate dropout
/// with per-coordinate weights `w = x (.) beta`, by exact binomial
/// convolution in `O(d max_m^2)`.
pub fn convolution_moments<T: Field>(max_m: usize, w: &[T], delta: &T) -> Vec<T> {
    let binom = pascal::<T>(max_m);
    let mut acc = vec![T::zero(); max_m + 1];
    acc[0] = T::one();
    for wl in w {
        acc = convolve(&acc, &coordinate_law_moments(max_m, wl, delta), &binom);
    }
    acc
}

/// Raw moments by summing over all `2^d` masks, each weighted
/// `delta^{#dropped} (1-delta)^{#kept}`.
pub fn enumeration_moments<T: Field>(max_m: usize, w: &[T], delta: &T) -> Result<Vec<T>> {
    let d = w.len();
    if d > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            d,
            limit: ENUMERATION_LIMIT,
        });
    }
    let keep = T::one() - delta.clone();
    let up: Vec<T> = w
        .iter()
        .map(|wl| wl.clone() * delta.clone() / keep.clone())
        .collect();
    let mut acc = vec![T::zero(); max_m + 1];
    for mask in 0u64..(1u64 << d) {
        let mut prob = T::one();
        let mut disp = T::zero();
        for l in 0..d {
            if mask >> l & 1 == 1 {
                prob = prob * keep.clone();
                disp = disp + up[l].clone();
            } else {
                prob = prob * delta.clone();
                disp = disp - w[l].clone();
            }
        }
        let mut power = prob;
        for slot in acc.iter_mut() {
            *slot = slot.clone() + power.clone();
            power = power * disp.clone();
        }
    }
    Ok(acc)
}

fn weights(x: &[f64], beta: &[f64]) -> Vec<f64> {
    x.iter().zip(beta).map(|(a, b)| a * b).collect()
}

/// `E[(x~.beta - x.beta)^m]` under independent per-coordinate dropout.
pub fn coordinate_moment(
    m: u32,
    x: &[f64],
    beta: &[f64],
    cfg: &DropoutConfig,
    mode: MomentMode,
) -> Result<Estimate> {
    check_dims(x, beta)?;
    if m == 0 {
        return Err(Error::domain("coordinate_moment", "moment order must be >= 1"));
    }
    if cfg.model != NoiseModel::IndependentCoordinates {
        return Err(Error::Config(
            "coordinate_moment needs the independent-coordinates model".into(),
        ));
    }
    let w = weights(x, beta);
    let d = w.len();
    let mode = match mode {
        MomentMode::Auto if d <= ENUMERATION_LIMIT => MomentMode::Enumerate,
        MomentMode::Auto => MomentMode::MonteCarlo {
            draws: DEFAULT_MC_DRAWS,
            seed: crate::DEFAULT_SEED,
        },
        other => other,
    };
    match mode {
        MomentMode::Enumerate => {
            let moments = enumeration_moments(m as usize, &w, &cfg.delta)?;
            Ok(Estimate::exact(
                moments[m as usize],
                EstimateMethod::Enumeration { masks: 1 << d },
            ))
        }
        MomentMode::MonteCarlo { draws, seed } => {
            let odds = cfg.odds();
            let keep = 1.0 - cfg.delta;
            Ok(monte_carlo(draws, seed, |rng| {
                let disp: f64 = w
                    .iter()
                    .map(|wl| if rng.random::<f64>() < keep { wl * odds } else { -wl })
                    .sum();
                disp.powi(m as i32)
            }))
        }
        MomentMode::Auto => unreachable!(),
    }
}

/// `E[D^j]` for `j = 0..=max_m` under the configured model, exactly
/// (closed form for scalar laws, convolution for independent coordinates).
pub fn displacement_moments(
    max_m: usize,
    x: &[f64],
    beta: &[f64],
    cfg: &DropoutConfig,
) -> Result<Vec<f64>> {
    check_dims(x, beta)?;
    if cfg.model.is_scalar() {
        let law = NoiseDisplacement::new(dot(x, beta), cfg)?;
        Ok((0..=max_m as u32).map(|n| law.moment(n)).collect())
    } else {
        Ok(convolution_moments(max_m, &weights(x, beta), &cfg.delta))
    }
}

/// Displacement moments together with their gradients with respect to
/// `beta`: `grads[j][l] = d E[D^j] / d beta_l`.
pub fn displacement_moment_gradients(
    max_m: usize,
    x: &[f64],
    beta: &[f64],
    cfg: &DropoutConfig,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_dims(x, beta)?;
    let d = x.len();
    if cfg.model.is_scalar() {
        let z = dot(x, beta);
        let mut moments = Vec::with_capacity(max_m + 1);
        let mut grads = Vec::with_capacity(max_m + 1);
        for j in 0..=max_m {
            let mu = scalar_moment_factor(j as u32, cfg.delta, cfg.model);
            moments.push(mu * z.powi(j as i32));
            let dz = if j == 0 {
                0.0
            } else {
                mu * j as f64 * z.powi(j as i32 - 1)
            };
            grads.push(x.iter().map(|xl| dz * xl).collect());
        }
        return Ok((moments, grads));
    }
    let w = weights(x, beta);
    let binom = pascal::<f64>(max_m);
    let laws: Vec<Vec<f64>> = w
        .iter()
        .map(|wl| coordinate_law_moments(max_m, wl, &cfg.delta))
        .collect();
    let mut unit = vec![0.0; max_m + 1];
    unit[0] = 1.0;
    // prefix[l]: coordinates < l; suffix[l]: coordinates >= l
    let mut prefix = vec![unit.clone()];
    for law in &laws {
        let next = convolve(prefix.last().expect("non-empty"), law, &binom);
        prefix.push(next);
    }
    let mut suffix = vec![unit; d + 1];
    for l in (0..d).rev() {
        suffix[l] = convolve(&suffix[l + 1], &laws[l], &binom);
    }
    let moments = prefix[d].clone();
    let mut grads = vec![vec![0.0; d]; max_m + 1];
    let keep = 1.0 - cfg.delta;
    let odds = cfg.odds();
    for l in 0..d {
        let rest = convolve(&prefix[l], &suffix[l + 1], &binom);
        // d E[u_l^a] / d w_l = a w_l^{a-1} c_a
        let dlaw: Vec<f64> = (0..=max_m)
            .map(|a| {
                if a == 0 {
                    0.0
                } else {
                    let c = keep * odds.powi(a as i32) + cfg.delta * if a % 2 == 0 { 1.0 } else { -1.0 };
                    a as f64 * w[l].powi(a as i32 - 1) * c
                }
            })
            .collect();
        let dm = convolve(&rest, &dlaw, &binom);
        for j in 0..=max_m {
            grads[j][l] = dm[j] * x[l];
        }
    }
    Ok((moments, grads))
}

/// `E_xi[A(x~.beta)] - A(x.beta)`.
pub fn exact_regularizer(
    x: &[f64],
    beta: &[f64],
    cfg: &DropoutConfig,
    family: Family,
    mode: MomentMode,
) -> Result<Estimate> {
    check_dims(x, beta)?;
    let z = dot(x, beta);
    let a_z = family.log_partition(z);
    let keep = 1.0 - cfg.delta;
    match cfg.model {
        NoiseModel::ScalarCoupling => Ok(Estimate::exact(
            keep * (family.log_partition(z * cfg.scale) - a_z),
            EstimateMethod::ClosedForm,
        )),
        NoiseModel::ScalarDropAll => Ok(Estimate::exact(
            keep * (family.log_partition(z * cfg.scale) - a_z)
                + cfg.delta * (family.log_partition(0.0) - a_z),
            EstimateMethod::ClosedForm,
        )),
        NoiseModel::IndependentCoordinates => {
            let w = weights(x, beta);
            let d = w.len();
            let mode = match mode {
                MomentMode::Auto if d <= ENUMERATION_LIMIT => MomentMode::Enumerate,
                MomentMode::Auto => MomentMode::MonteCarlo {
                    draws: DEFAULT_MC_DRAWS,
                    seed: crate::DEFAULT_SEED,
                },
                other => other,
            };
            match mode {
                MomentMode::Enumerate => {
                    if d > ENUMERATION_LIMIT {
                        return Err(Error::EnumerationTooLarge {
                            d,
                            limit: ENUMERATION_LIMIT,
                        });
                    }
                    let mut total = 0.0;
                    for mask in 0u64..(1u64 << d) {
                        let (prob, noised) = mask_outcome(mask, &w, cfg);
                        if prob != 0.0 {
                            total += prob * (family.log_partition(noised) - a_z);
                        }
                    }
                    Ok(Estimate::exact(
                        total,
                        EstimateMethod::Enumeration { masks: 1 << d },
                    ))
                }
                MomentMode::MonteCarlo { draws, seed } => Ok(monte_carlo(draws, seed, |rng| {
                    let noised: f64 = w
                        .iter()
                        .map(|wl| if rng.random::<f64>() < keep { wl * cfg.scale } else { 0.0 })
                        .sum();
                    family.log_partition(noised) - a_z
                })),
                MomentMode::Auto => unreachable!(),
            }
        }
    }
}

/// Probability of `mask` (bit set = kept) and the noised inner product.
pub(crate) fn mask_outcome(mask: u64, w: &[f64], cfg: &DropoutConfig) -> (f64, f64) {
    let keep = 1.0 - cfg.delta;
    let mut prob = 1.0;
    let mut noised = 0.0;
    for (l, wl) in w.iter().enumerate() {
        if mask >> l & 1 == 1 {
            prob *= keep;
            noised += wl * cfg.scale;
        } else {
            prob *= cfg.delta;
        }
    }
    (prob, noised)
}

/// The quadratic approximation `R_2 = A''(x.beta) E[D^2] / 2`.
pub fn variance_r2(x: &[f64], beta: &[f64], cfg: &DropoutConfig, family: Family) -> Result<f64> {
    let moments = displacement_moments(2, x, beta, cfg)?;
    Ok(0.5 * family.derivative(2, dot(x, beta)) * moments[2])
}

/// The generator behind every seeded stream: stream `s` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mean of `sample` over `draws` draws with its standard error.
///
/// Draws are split into fixed chunks; chunk `c` reads stream `c` of `seed`,
/// and chunk statistics are merged in chunk order. The result is therefore
/// bitwise identical for any number of worker threads.
pub fn monte_carlo<F>(draws: u64, seed: u64, sample: F) -> Estimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let (mean, se) = monte_carlo_vec(draws, seed, 1, |rng, out| out[0] = sample(rng));
    Estimate {
        value: mean[0],
        std_error: se[0],
        method: EstimateMethod::MonteCarlo { draws, seed },
    }
}

/// Componentwise means and standard errors of a vector-valued sample; same
/// chunking and merge order as [`monte_carlo`].
pub fn monte_carlo_vec<F>(draws: u64, seed: u64, dim: usize, sample: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    assert!(draws > 0, "monte_carlo needs at least one draw");
    let chunks = draws.div_ceil(MC_CHUNK);
    let parts: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c);
            let n = MC_CHUNK.min(draws - c * MC_CHUNK);
            let mut mean = vec![0.0; dim];
            let mut m2 = vec![0.0; dim];
            let mut v = vec![0.0; dim];
            for i in 0..n {
                sample(&mut rng, &mut v);
                for q in 0..dim {
                    let delta = v[q] - mean[q];
                    mean[q] += delta / (i + 1) as f64;
                    m2[q] += delta * (v[q] - mean[q]);
                }
            }
            (n as f64, mean, m2)
        })
        .collect();
    let mut n = 0.0;
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    for (nb, mb, m2b) in parts {
        let total = n + nb;
        for q in 0..dim {
            let delta = mb[q] - mean[q];
            mean[q] += delta * nb / total;
            m2[q] += m2b[q] + delta * delta * n * nb / total;
        }
        n = total;
    }
    let se = m2
        .iter()
        .map(|s| {
            let variance = if n > 1.0 { s / (n - 1.0) } else { 0.0 };
            (variance / n).sqrt()
        })
        .collect();
    (mean, se)
}

/// [`exact_regularizer`] with its gradient
/// `E[A'(x~.beta) x~] - A'(x.beta) x`. Monte Carlo reuses the same draws for
/// value and gradient.
pub fn exact_regularizer_with_gradient(
    x: &[f64],
    beta: &[f64],
    cfg: &DropoutConfig,
    family: Family,
    mode: MomentMode,
) -> Result<(Estimate, Vec<f64>)> {
    let value = exact_regularizer(x, beta, cfg, family, mode)?;
    let z = dot(x, beta);
    let clean = family.mean(z);
    let slope = match cfg.model {
        NoiseModel::ScalarCoupling => {
            Some(family.mean(z * cfg.scale) - (1.0 - cfg.delta) * clean)
        }
        NoiseModel::ScalarDropAll => Some(family.mean(z * cfg.scale) - clean),
        NoiseModel::IndependentCoordinates => None,
    };
    if let Some(s) = slope {
        return Ok((value, x.iter().map(|xl| s * xl).collect()));
    }
    let w = weights(x, beta);
    let d = w.len();
    let mut grad = vec![0.0; d];
    match value.method {
        EstimateMethod::Enumeration { .. } => {
            for mask in 0u64..(1u64 << d) {
                let (prob, noised) = mask_outcome(mask, &w, cfg);
                if prob == 0.0 {
                    continue;
                }
                let g = prob * family.mean(noised) * cfg.scale;
                for l in 0..d {
                    if mask >> l & 1 == 1 {
                        grad[l] += g * x[l];
                    }
                }
            }
        }
        EstimateMethod::MonteCarlo { draws, seed } => {
            let keep = 1.0 - cfg.delta;
            let (mean, _) = monte_carlo_vec(draws, seed, d + 1, |rng, out| {
                let mut noised = 0.0;
                for l in 0..d {
                    let kept = rng.random::<f64>() < keep;
                    out[l + 1] = if kept { x[l] * cfg.scale } else { 0.0 };
                    noised += out[l + 1] * beta[l];
                }
                let slope = family.mean(noised);
                out[0] = slope;
                for v in out[1..].iter_mut() {
                    *v *= slope;
                }
            });
            grad.copy_from_slice(&mean[1..]);
        }
        _ => unreachable!("independent coordinates use enumeration or Monte Carlo"),
    }
    for (g, xl) in grad.iter_mut().zip(x) {
        *g -= clean * xl;
    }
    Ok((value, grad))
}
