//! Taylor approximations `R_k` of the dropout regularizer, series
//! diagnostics and a root-test estimate of the radius of convergence.
//!
//! Around `z = x.beta` the regularizer expands as
//! `R = sum_{j>=1} A^{(j)}(z) E[D^j] / j!`. The first-order term vanishes for
//! unbiased noise; [`rk_penalty`] is the sum from `j = 2`, and
//! [`taylor_regularizer`] adds the first-order term back for the biased
//! scalar law.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{self, dot, DropoutConfig, NoiseDisplacement, NoiseModel};
use crate::partition::{self, Family, NATIVE_ORDER_LIMIT};

/// Successive partial-sum changes below this mark convergence.
pub const CONVERGENCE_TOL: f64 = 1e-9;

/// Consecutive strictly growing term magnitudes that mark divergence.
pub const GROWTH_RUN: usize = 10;

/// `A^{(j)}(z) / j!`.
pub fn coefficient(family: Family, j: usize, z: f64) -> Result<f64> {
    match family {
        Family::Linear => Ok(match j {
            0 => 0.5 * z * z,
            1 => z,
            2 => 0.5,
            _ => 0.0,
        }),
        Family::Logistic if j <= NATIVE_ORDER_LIMIT => {
            // j! is exact in f64 up to 22!
            let fact: f64 = (1..=j).map(|i| i as f64).product();
            Ok(family.derivative(j, z) / fact)
        }
        Family::Logistic => Ok(partition::taylor_coefficient(j, z)?.value),
    }
}

fn term(c: f64, m: f64) -> f64 {
    if c == 0.0 || m == 0.0 {
        0.0
    } else {
        c * m
    }
}

/// `sum_{j=2..k} A^{(j)}(x.beta) E[D^j] / j!` with moments from `cfg`.
pub fn rk_penalty(
    k: usize,
    x: &[f64],
    beta: &[f64],
    cfg: &DropoutConfig,
    family: Family,
) -> Result<f64> {
    if k < 2 {
        return Err(Error::domain("rk_penalty", "order must be >= 2"));
    }
    let moments = noise::displacement_moments(k, x, beta, cfg)?;
    let z = dot(x, beta);
    let mut sum = 0.0;
    for (j, m) in moments.iter().enumerate().skip(2) {
        sum += term(coefficient(family, j, z)?, *m);
    }
    Ok(sum)
}

/// [`rk_penalty`] and its gradient with respect to `beta`:
/// `sum_j [(j+1) c_{j+1} M_j x + c_j grad M_j]` where `c_j = A^{(j)}/j!`.
pub fn rk_penalty_with_gradient(
    k: usize,
    x: &[f64],
    beta: &[f64],
    cfg: &DropoutConfig,
    family: Family,
) -> Result<(f64, Vec<f64>)> {
    if k < 2 {
        return Err(Error::domain("rk_penalty", "order must be >= 2"));
    }
    let (moments, grads) = noise::displacement_moment_gradients(k, x, beta, cfg)?;
    let z = dot(x, beta);
    let coeffs: Vec<f64> = (0..=k + 1)
        .map(|j| if j < 2 { Ok(0.0) } else { coefficient(family, j, z) })
        .collect::<Result<_>>()?;
    let mut value = 0.0;
    let mut slope = 0.0;
    let mut grad = vec![0.0; x.len()];
    for j in 2..=k {
        value += term(coeffs[j], moments[j]);
        slope += term((j + 1) as f64 * coeffs[j + 1], moments[j]);
        if coeffs[j] != 0.0 {
            for (g, dm) in grad.iter_mut().zip(&grads[j]) {
                *g += coeffs[j] * dm;
            }
        }
    }
    for (g, xl) in grad.iter_mut().zip(x) {
        *g += slope * xl;
    }
    Ok((value, grad))
}

/// `A'(x.beta) E[D]`, zero for unbiased laws.
pub fn first_order_term(x: &[f64], beta: &[f64], cfg: &DropoutConfig, family: Family) -> Result<f64> {
    let moments = noise::displacement_moments(1, x, beta, cfg)?;
    Ok(term(family.mean(dot(x, beta)), moments[1]))
}

/// The full order-`k` Taylor polynomial of `R`, first-order term included.
pub fn taylor_regularizer(
    k: usize,
    x: &[f64],
    beta: &[f64],
    cfg: &DropoutConfig,
    family: Family,
) -> Result<f64> {
    Ok(first_order_term(x, beta, cfg, family)? + rk_penalty(k, x, beta, cfg, family)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Verdict {
    /// The last two partial-sum changes are below `tolerance`, and have
    /// stayed so from `at_order` on.
    Converged { tolerance: f64, at_order: usize },
    /// `|t_k|` strictly increases over at least the final [`GROWTH_RUN`]
    /// orders; `onset` starts the increasing run.
    Diverging { onset: usize },
    Inconclusive,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Converged { .. } => "Converged",
            Verdict::Diverging { .. } => "Diverging",
            Verdict::Inconclusive => "Inconclusive",
        }
    }
}

/// Term-by-term record of the Taylor series of `R` under a scalar law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesDiagnostics {
    pub expansion_point: f64,
    pub delta: f64,
    pub model: NoiseModel,
    /// `|B|`, the largest displacement the law produces.
    pub displacement: f64,
    pub first_order_term: f64,
    /// `t_2 .. t_K`.
    pub terms: Vec<f64>,
    /// `S_2 .. S_K`, with `S_k = first_order_term + t_2 + ... + t_k`.
    pub partial_sums: Vec<f64>,
    /// `|A^{(k)}(z)/k!|^{1/k}` for `k = 2..K`; `None` where the value is zero
    /// or could not be resolved.
    pub root_test: Vec<Option<f64>>,
    pub verdict: Verdict,
    /// Closed-form regularizer under the same law.
    pub exact: f64,
}

impl SeriesDiagnostics {
    pub fn max_order(&self) -> usize {
        self.terms.len() + 1
    }

    /// `S_order`.
    pub fn partial_sum(&self, order: usize) -> Option<f64> {
        order.checked_sub(2).and_then(|i| self.partial_sums.get(i)).copied()
    }

    /// `t_order`.
    pub fn term(&self, order: usize) -> Option<f64> {
        order.checked_sub(2).and_then(|i| self.terms.get(i)).copied()
    }
}

fn verdict(terms: &[f64]) -> Verdict {
    // terms[i] is t_{i+2}
    let n = terms.len();
    let small = |t: &f64| t.abs() < CONVERGENCE_TOL;
    if n >= 2 && small(&terms[n - 1]) && small(&terms[n - 2]) {
        let tail = terms.iter().rev().take_while(|t| small(t)).count();
        return Verdict::Converged {
            tolerance: CONVERGENCE_TOL,
            at_order: (n - tail + 3).max(3),
        };
    }
    let mut run = 1;
    while run < n && terms[n - run - 1].abs() < terms[n - run].abs() {
        run += 1;
    }
    if run >= GROWTH_RUN {
        return Verdict::Diverging {
            onset: n - run + 2,
        };
    }
    Verdict::Inconclusive
}

/// Expands `R` at `x.beta = xb` under the scalar law of `cfg` (independent
/// coordinates fall back to the scalar-coupling law) up to `max_order`.
pub fn diagnose_series(xb: f64, cfg: &DropoutConfig, max_order: usize) -> Result<SeriesDiagnostics> {
    if max_order < 12 {
        return Err(Error::domain("diagnose_series", "max_order must be >= 12"));
    }
    let cfg = if cfg.model().is_scalar() {
        *cfg
    } else {
        cfg.with_model(NoiseModel::ScalarCoupling)
    };
    let law = NoiseDisplacement::new(xb, &cfg)?;
    let family = Family::Logistic;
    let first_order_term = term(family.mean(xb), law.moment(1));
    let mut terms = Vec::with_capacity(max_order - 1);
    let mut partial_sums = Vec::with_capacity(max_order - 1);
    let mut root_test = Vec::with_capacity(max_order - 1);
    let mut sum = first_order_term;
    for j in 2..=max_order {
        let c = coefficient(family, j, xb)?;
        let t = term(c, law.moment(j as u32));
        sum += t;
        terms.push(t);
        partial_sums.push(sum);
        root_test.push(root_value(j, xb));
    }
    let exact = noise::exact_regularizer(&[xb], &[1.0], &cfg, family, noise::MomentMode::Auto)?.value;
    Ok(SeriesDiagnostics {
        expansion_point: xb,
        delta: cfg.delta(),
        model: cfg.model(),
        displacement: law.b().abs(),
        first_order_term,
        verdict: verdict(&terms),
        terms,
        partial_sums,
        root_test,
        exact,
    })
}

fn root_value(k: usize, z: f64) -> Option<f64> {
    let c = partition::taylor_coefficient(k, z).ok()?;
    if c.value == 0.0 && c.ln_abs == f64::NEG_INFINITY {
        return None;
    }
    let r = (c.ln_abs / k as f64).exp();
    (r.is_finite() && r > 0.0).then_some(r)
}

/// Root-test estimate of the radius of convergence of `A` around `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub z: f64,
    pub max_order: usize,
    /// Orders `[lo, hi]` the running maximum is taken over.
    pub window: (usize, usize),
    /// Running maximum of the root sequence over the window.
    pub limsup: f64,
    /// `1 / limsup`.
    pub radius: f64,
    /// `|A^{(k)}(z)/k!|^{1/k}` for `k = 1..=max_order`; `None` where the
    /// coefficient is zero or unresolved.
    pub sequence: Vec<Option<f64>>,
}

impl RadiusEstimate {
    /// `radius - 2 pi`.
    pub fn discrepancy_from_two_pi(&self) -> f64 {
        self.radius - 2.0 * PI
    }
}

/// Estimates the radius from the tail `[max_order/2, max_order]` of the root
/// sequence.
pub fn estimate_radius(z: f64, max_order: usize) -> Result<RadiusEstimate> {
    if max_order < 30 {
        return Err(Error::domain("estimate_radius", "max_order must be >= 30"));
    }
    if !z.is_finite() {
        return Err(Error::domain("estimate_radius", format!("z = {z} is not finite")));
    }
    let sequence: Vec<Option<f64>> = (1..=max_order).map(|k| root_value(k, z)).collect();
    let window = (max_order / 2, max_order);
    let limsup = sequence[window.0 - 1..]
        .iter()
        .flatten()
        .fold(f64::NAN, |acc, &r| if acc.is_nan() || r > acc { r } else { acc });
    if limsup.is_nan() {
        let err = partition::taylor_coefficient(max_order, z).err();
        return Err(err.unwrap_or_else(|| {
            Error::domain("estimate_radius", "every tail coefficient vanished")
        }));
    }
    Ok(RadiusEstimate {
        z,
        max_order,
        window,
        limsup,
        radius: 1.0 / limsup,
        sequence,
    })
}

/// Rescales `x` so that `max_j |x_j| * cap = 2 pi / d`; then
/// `|x.beta| <= 2 pi` whenever `|beta_j| <= cap`. A zero vector is returned
/// unchanged.
pub fn feature_scale_bound(x: &[f64], cap: f64) -> Result<Vec<f64>> {
    let factor = scale_factor(x.iter().map(|v| v.abs()).fold(0.0, f64::max), x.len(), cap)?;
    Ok(x.iter().map(|v| v * factor).collect())
}

/// The single factor that applies the bound to a whole dataset at once, by
/// its largest absolute feature.
pub fn dataset_scale_factor<'a>(rows: impl IntoIterator<Item = &'a [f64]>, cap: f64) -> Result<f64> {
    let mut d = 0;
    let mut largest = 0.0f64;
    for row in rows {
        d = d.max(row.len());
        largest = row.iter().fold(largest, |m, v| m.max(v.abs()));
    }
    scale_factor(largest, d, cap)
}

fn scale_factor(largest: f64, d: usize, cap: f64) -> Result<f64> {
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::Config(format!("weight cap must be positive and finite, got {cap}")));
    }
    if d == 0 {
        return Err(Error::Dataset("feature vector must have d >= 1".into()));
    }
    if largest == 0.0 {
        return Ok(1.0);
    }
    Ok(2.0 * PI / (d as f64 * cap * largest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{variance_r2, MomentMode};
    use crate::partition::{log_partition, sigmoid};
    use proptest::prelude::*;

    fn cfg(delta: f64, model: NoiseModel) -> DropoutConfig {
        DropoutConfig::new(delta, model).unwrap()
    }

    #[test]
    fn order_two_is_the_quadratic_penalty() {
        for model in [NoiseModel::ScalarCoupling, NoiseModel::ScalarDropAll, NoiseModel::IndependentCoordinates] {
            let c = cfg(0.3, model);
            let x = [0.6, -1.3];
            let beta = [2.0, 0.7];
            let a = rk_penalty(2, &x, &beta, &c, Family::Logistic).unwrap();
            let b = variance_r2(&x, &beta, &c, Family::Logistic).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn quadratic_penalty_closed_form() {
        let c = cfg(0.3, NoiseModel::ScalarCoupling);
        let z = 1.7;
        let p = sigmoid(z);
        let expected = 0.5 * p * (1.0 - p) * z * z * 0.09 / 0.7;
        assert!((rk_penalty(2, &[z], &[1.0], &c, Family::Logistic).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn inside_radius_partial_sums_reach_the_closed_form() {
        let c = cfg(0.2, NoiseModel::ScalarCoupling);
        let closed = 0.8 * (log_partition(1.25) - log_partition(1.0));
        let full = taylor_regularizer(40, &[1.0], &[1.0], &c, Family::Logistic).unwrap();
        assert!((full - closed).abs() < 1e-9);
        let diag = diagnose_series(1.0, &c, 40).unwrap();
        assert!(matches!(diag.verdict, Verdict::Converged { .. }));
        assert!((diag.partial_sum(40).unwrap() - diag.exact).abs() < 1e-9);
        assert!((diag.displacement - 0.25).abs() < 1e-15);
    }

    #[test]
    fn unbiased_law_needs_no_first_order_term() {
        let c = cfg(0.2, NoiseModel::ScalarDropAll);
        let exact = noise::exact_regularizer(&[1.0], &[1.0], &c, Family::Logistic, MomentMode::Auto).unwrap().value;
        // drop-all moves z by -1 with probability 0.2, inside the radius pi at z = 1
        let r = rk_penalty(60, &[1.0], &[1.0], &c, Family::Logistic).unwrap();
        assert!((r - exact).abs() < 1e-9);
        assert_eq!(first_order_term(&[1.0], &[1.0], &c, Family::Logistic).unwrap(), 0.0);
    }

    #[test]
    fn no_noise_converges_to_zero() {
        let c = cfg(0.0, NoiseModel::ScalarCoupling);
        let diag = diagnose_series(3.0, &c, 20).unwrap();
        assert!(diag.terms.iter().all(|t| *t == 0.0));
        assert_eq!(diag.partial_sum(20), Some(0.0));
        assert_eq!(diag.verdict, Verdict::Converged { tolerance: CONVERGENCE_TOL, at_order: 3 });
    }

    #[test]
    fn clear_divergence_is_detected() {
        let c = cfg(0.75, NoiseModel::ScalarCoupling);
        let diag = diagnose_series(5.0, &c, 80).unwrap();
        assert!(matches!(diag.verdict, Verdict::Diverging { .. }), "{:?}", diag.verdict);
        assert!(diag.partial_sum(80).unwrap().abs() > 1e6);
    }

    #[test]
    fn partial_sums_accumulate_terms() {
        let c = cfg(0.4, NoiseModel::ScalarCoupling);
        let diag = diagnose_series(-2.0, &c, 30).unwrap();
        let mut s = diag.first_order_term;
        for (t, ps) in diag.terms.iter().zip(&diag.partial_sums) {
            s += t;
            assert_eq!(s.to_bits(), ps.to_bits());
        }
    }

    #[test]
    fn verdict_rules() {
        let growing: Vec<f64> = (0..12).map(|i| (-1f64).powi(i) * 2f64.powi(i)).collect();
        assert_eq!(verdict(&growing), Verdict::Diverging { onset: 2 });
        let mut nine = vec![5.0; 3];
        nine.extend((0..9).map(|i| i as f64 + 1.0));
        assert_eq!(verdict(&nine), Verdict::Inconclusive);
        let shrinking = [1.0, 1e-3, 1e-10, 1e-11, 1e-12];
        assert_eq!(verdict(&shrinking), Verdict::Converged { tolerance: CONVERGENCE_TOL, at_order: 5 });
    }

    #[test]
    fn linear_family_truncations_are_exact() {
        for model in [NoiseModel::ScalarDropAll, NoiseModel::IndependentCoordinates] {
            let c = cfg(0.45, model);
            let x = [1.5, -0.4, 0.9];
            let beta = [-1.0, 2.5, 0.3];
            let exact = noise::exact_regularizer(&x, &beta, &c, Family::Linear, MomentMode::Auto).unwrap().value;
            let r2 = rk_penalty(2, &x, &beta, &c, Family::Linear).unwrap();
            for k in 2..=10 {
                assert_eq!(rk_penalty(k, &x, &beta, &c, Family::Linear).unwrap().to_bits(), r2.to_bits());
            }
            assert!((r2 - exact).abs() < 1e-12);
        }
        let c = cfg(0.45, NoiseModel::ScalarCoupling);
        let exact = noise::exact_regularizer(&[2.0], &[1.5], &c, Family::Linear, MomentMode::Auto).unwrap().value;
        let t = taylor_regularizer(10, &[2.0], &[1.5], &c, Family::Linear).unwrap();
        assert!((t - exact).abs() < 1e-12);
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        for model in [NoiseModel::ScalarCoupling, NoiseModel::IndependentCoordinates] {
            let c = cfg(0.3, model);
            let x = [0.4, -0.9, 0.5];
            let beta = [0.7, 0.2, -1.1];
            for k in [2, 5, 24] {
                let (v, g) = rk_penalty_with_gradient(k, &x, &beta, &c, Family::Logistic).unwrap();
                assert_eq!(v, rk_penalty(k, &x, &beta, &c, Family::Logistic).unwrap());
                let h = 1e-5;
                for l in 0..3 {
                    let mut up = beta;
                    up[l] += h;
                    let mut dn = beta;
                    dn[l] -= h;
                    let fd = (rk_penalty(k, &x, &up, &c, Family::Logistic).unwrap()
                        - rk_penalty(k, &x, &dn, &c, Family::Logistic).unwrap())
                        / (2.0 * h);
                    assert!((fd - g[l]).abs() < 1e-7 * fd.abs().max(1e-3), "k={k} l={l}: {fd} vs {}", g[l]);
                }
            }
        }
    }

    #[test]
    fn radius_estimates_are_finite_and_stable() {
        for z in [0.0, 1.0, 3.0] {
            let a = estimate_radius(z, 60).unwrap();
            let b = estimate_radius(z, 120).unwrap();
            assert!(a.radius.is_finite() && a.radius > 0.0);
            assert!(((a.radius - b.radius) / b.radius).abs() < 0.05);
            // the nearest singularities of log(1 + e^z) sit at z +- i pi
            let nearest = (z * z + PI * PI).sqrt();
            assert!((b.radius - nearest).abs() / nearest < 0.1, "z={z}: {}", b.radius);
        }
        assert!(estimate_radius(0.0, 20).is_err());
    }

    #[test]
    fn radius_sequence_skips_vanishing_orders() {
        let est = estimate_radius(0.0, 31).unwrap();
        // odd orders past the first vanish at z = 0
        assert!(est.sequence[2].is_none());
        assert!(est.sequence[3].is_some());
        assert!(est.sequence.iter().flatten().all(|r| r.is_finite() && *r > 0.0));
    }

    #[test]
    fn feature_scaling_examples() {
        assert_eq!(feature_scale_bound(&[0.0, 0.0], 1.0).unwrap(), vec![0.0, 0.0]);
        let s = feature_scale_bound(&[4.0, 4.0], 1.0).unwrap();
        assert!(s.iter().all(|v| (v - PI).abs() < 1e-15));
        assert!(feature_scale_bound(&[1.0], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn scaled_features_bound_the_inner_product(
            x in prop::collection::vec(-50.0f64..50.0, 1..6),
            cap in 0.01f64..10.0,
            unit in prop::collection::vec(-1.0f64..1.0, 6),
        ) {
            let s = feature_scale_bound(&x, cap).unwrap();
            let beta: Vec<f64> = unit.iter().take(x.len()).map(|u| u * cap).collect();
            let xb: f64 = s.iter().zip(&beta).map(|(a, b)| (a * b).abs()).sum();
            prop_assert!(xb <= 2.0 * PI * (1.0 + 1e-12));
        }

        #[test]
        fn moments_law_is_bounded(xb in -20.0f64..20.0, delta in 0.0f64..0.95) {
            let c = cfg(delta, NoiseModel::ScalarCoupling);
            let law = NoiseDisplacement::new(xb, &c).unwrap();
            prop_assert!((law.mean() - xb * delta).abs() <= 1e-12 * xb.abs().max(1.0));
            for (v, _) in law.support() {
                prop_assert!(v.abs() <= law.b().abs());
            }
        }
    }
}
