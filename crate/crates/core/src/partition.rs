//! The logistic log-partition function `A(z) = log(1 + e^z)`, the sigmoid
//! `p = A'`, and every higher derivative of `A` as an integer polynomial in `p`.
//!
//! Two independent constructions are provided:
//!
//! * [`derivative_closed_form`] expands the closed form
//!   `p' * sum_j (-1)^{j-1} p^{j-1} T(k,j)` built from Triangle numbers;
//! * [`derivative_recurrence`] differentiates formally using only
//!   `dA/dz = p` and `dp/dz = p(1-p)`.
//!
//! Orders are always the true derivative order of `A`. The closed form indexes
//! from `A_0 = p`, so `derivative_closed_form(k)` is the derivative of order `k + 1`.

use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::combinatorics::{self, StirlingTable};
use crate::error::{Error, Result};
use crate::exact::{self, Dyadic};

/// Orders up to this use native doubles when the cancellation check allows.
pub const NATIVE_ORDER_LIMIT: usize = 20;

// relative error of the f64 sigmoid, in ulps
const INPUT_ULPS: f64 = 4.0;

/// Numerically stable `log(1 + e^z)`.
pub fn log_partition(z: f64) -> f64 {
    assert!(z.is_finite(), "log_partition of non-finite {z}");
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-z})`, evaluated so that `sigmoid(-z) == 1 - sigmoid(z)`
/// up to rounding.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A GLM log-partition family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `A(z) = log(1 + e^z)`.
    Logistic,
    /// `A(z) = z^2 / 2`; every derivative past the second vanishes.
    Linear,
}

impl Family {
    pub fn log_partition(self, z: f64) -> f64 {
        match self {
            Family::Logistic => log_partition(z),
            Family::Linear => 0.5 * z * z,
        }
    }

    /// `A'(z)`, the mean function.
    pub fn mean(self, z: f64) -> f64 {
        match self {
            Family::Logistic => sigmoid(z),
            Family::Linear => z,
        }
    }

    /// `A^{(order)}(z)` in `f64`; orders above [`NATIVE_ORDER_LIMIT`] or with
    /// heavy cancellation take the exact route.
    pub fn derivative(self, order: usize, z: f64) -> f64 {
        match self {
            Family::Linear => match order {
                0 => 0.5 * z * z,
                1 => z,
                2 => 1.0,
                _ => 0.0,
            },
            Family::Logistic => match order {
                0 => log_partition(z),
                1 => sigmoid(z),
                _ => logistic_derivative(order, z),
            },
        }
    }
}

/// `A^{(k)}(z) = sum_j coeffs[j-1] p(z)^j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivativePoly {
    order: usize,
    coeffs: Vec<BigInt>,
}

impl DerivativePoly {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Coefficients of `p^1 .. p^order`.
    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    /// The polynomial of the next order: `sum_j j c_j (p^j - p^{j+1})`.
    pub fn differentiate(&self) -> DerivativePoly {
        let mut next = vec![BigInt::zero(); self.coeffs.len() + 1];
        for (i, c) in self.coeffs.iter().enumerate() {
            let scaled = c * BigInt::from(i + 1);
            next[i] += &scaled;
            next[i + 1] -= scaled;
        }
        DerivativePoly {
            order: self.order + 1,
            coeffs: next,
        }
    }

    /// Coefficients rounded to `f64` for the native path.
    pub fn coeffs_f64(&self) -> Vec<f64> {
        self.coeffs
            .iter()
            .map(|c| c.to_f64().unwrap_or(f64::NAN))
            .collect()
    }

    /// Exact value at the dyadic number `p`.
    pub fn eval_exact(&self, p: f64) -> Dyadic {
        exact::eval_poly(&self.coeffs, p)
    }
}

/// The closed form of order `k + 1`, expanded with `p' = p - p^2`:
/// the coefficient of `p^m` is `(-1)^{m-1} (T(k,m) + T(k,m-1))`.
pub fn derivative_closed_form(k: usize) -> Result<DerivativePoly> {
    let table = combinatorics::shared_table(k.max(1));
    derivative_closed_form_with(&table, k)
}

/// As [`derivative_closed_form`] against a caller-supplied table, which must
/// already hold row `k`.
pub fn derivative_closed_form_with(table: &StirlingTable, k: usize) -> Result<DerivativePoly> {
    if k == 0 {
        return Err(Error::domain("derivative_closed_form", "k must be >= 1"));
    }
    if k > table.max_n() {
        return Err(Error::domain(
            "derivative_closed_form",
            format!("k = {k} exceeds Stirling table size {}", table.max_n()),
        ));
    }
    let tri = |j: usize| -> BigInt {
        if j == 0 || j > k {
            BigInt::zero()
        } else {
            BigInt::from(table.triangle(k, j).expect("checked range"))
        }
    };
    let coeffs = (1..=k + 1)
        .map(|m| {
            let magnitude = tri(m) + tri(m - 1);
            if m % 2 == 1 {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect();
    Ok(DerivativePoly {
        order: k + 1,
        coeffs,
    })
}

/// Formal differentiation from `A' = p`.
pub fn derivative_recurrence(k: usize) -> Result<DerivativePoly> {
    if k == 0 {
        return Err(Error::domain("derivative_recurrence", "k must be >= 1"));
    }
    let mut poly = DerivativePoly {
        order: 1,
        coeffs: vec![BigInt::from(1)],
    };
    while poly.order < k {
        poly = poly.differentiate();
    }
    Ok(poly)
}

/// The point `z = x.beta` at which derivatives are evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPoint {
    z: f64,
    p: f64,
}

impl EvalPoint {
    pub fn new(z: f64) -> Result<Self> {
        if !z.is_finite() {
            return Err(Error::domain("EvalPoint", format!("z = {z} is not finite")));
        }
        Ok(EvalPoint { z, p: sigmoid(z) })
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `sigmoid(-|z|)`, which keeps full relative precision.
    fn reflected_p(&self) -> f64 {
        sigmoid(-self.z.abs())
    }

    /// Bound on `|z' - z|` where `z'` is the point the rounded sigmoid
    /// actually represents.
    fn input_error(&self) -> f64 {
        if self.z == 0.0 {
            0.0
        } else {
            // dz = dq / (q (1 - q)) and 1 - q >= 1/2
            2.0 * INPUT_ULPS * f64::EPSILON
        }
    }
}

/// A derivative value with its error bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluated {
    pub order: usize,
    pub value: f64,
    pub error_bound: f64,
    /// `ln |value|`, finite even when `value` over- or underflows.
    pub ln_abs: f64,
}

/// Exact value of `A^{(order)}` at `at`, using the reflection
/// `A^{(k)}(z) = (-1)^k A^{(k)}(-z)` for `k >= 2` so that `p <= 1/2`.
pub fn eval_derivative_exact(poly: &DerivativePoly, at: &EvalPoint) -> Dyadic {
    if poly.order == 1 {
        return Dyadic::from_f64(at.p).expect("finite sigmoid");
    }
    let value = poly.eval_exact(at.reflected_p());
    if at.z > 0.0 && poly.order % 2 == 1 {
        value.negated()
    } else {
        value
    }
}

/// Evaluates `poly` at `at` in exact arithmetic and reports the error carried
/// in from rounding the sigmoid, `|A^{(k+1)}| * |dz| + eps |value|`.
pub fn eval_derivative(poly: &DerivativePoly, at: &EvalPoint) -> Result<Evaluated> {
    let exact_value = eval_derivative_exact(poly, at);
    let value = exact_value.to_f64();
    let slope = eval_derivative_exact(&poly.differentiate(), at).to_f64().abs();
    let error_bound = slope * at.input_error() + f64::EPSILON * value.abs();
    let evaluated = Evaluated {
        order: poly.order,
        value,
        error_bound,
        ln_abs: exact_value.ln_abs(),
    };
    if error_bound > 1e-3 * value.abs() && !(value == 0.0 && error_bound == 0.0) {
        return Err(Error::PrecisionExhausted {
            order: poly.order,
            z: at.z,
            value,
            bound: error_bound,
        });
    }
    Ok(evaluated)
}

/// Relative error bound the native path must meet, otherwise callers go exact.
pub const NATIVE_REL_TOL: f64 = 1e-10;

/// Horner evaluation in doubles with the classical bound
/// `gamma_{2k} sum |c_j| p^j`; `None` when the bound exceeds
/// `NATIVE_REL_TOL * |value|`.
pub fn eval_native(coeffs: &[f64], p: f64) -> Option<(f64, f64)> {
    let k = coeffs.len();
    let mut acc = 0.0;
    let mut magnitude = 0.0;
    for c in coeffs.iter().rev() {
        acc = acc * p + c;
        magnitude = magnitude * p + c.abs();
    }
    let value = acc * p;
    magnitude *= p;
    let u = f64::EPSILON / 2.0;
    let n = (2 * k + 1) as f64;
    let bound = n * u / (1.0 - n * u) * magnitude;
    if bound > NATIVE_REL_TOL * value.abs() {
        None
    } else {
        Some((value, bound))
    }
}

/// Cached derivative polynomials up to a fixed order, with `f64` copies.
#[derive(Clone, Debug)]
pub struct DerivativeTable {
    polys: Vec<DerivativePoly>,
    native: Vec<Vec<f64>>,
}

impl DerivativeTable {
    pub fn up_to(max_order: usize) -> Self {
        let mut polys = Vec::with_capacity(max_order);
        let mut poly = DerivativePoly {
            order: 1,
            coeffs: vec![BigInt::from(1)],
        };
        for _ in 0..max_order.max(1) {
            let next = poly.differentiate();
            polys.push(poly);
            poly = next;
        }
        let native = polys.iter().map(|p| p.coeffs_f64()).collect();
        DerivativeTable { polys, native }
    }

    pub fn max_order(&self) -> usize {
        self.polys.len()
    }

    pub fn poly(&self, order: usize) -> Option<&DerivativePoly> {
        order.checked_sub(1).and_then(|i| self.polys.get(i))
    }

    /// `A^{(order)}(z)` for the logistic family, `order >= 1`.
    pub fn value(&self, order: usize, z: f64) -> f64 {
        assert!(order >= 1 && order <= self.max_order(), "order {order} outside table");
        if order == 1 {
            return sigmoid(z);
        }
        let q = sigmoid(-z.abs());
        let sign = if z > 0.0 && order % 2 == 1 { -1.0 } else { 1.0 };
        if order <= NATIVE_ORDER_LIMIT {
            if let Some((v, _)) = eval_native(&self.native[order - 1], q) {
                return sign * v;
            }
        }
        sign * self.polys[order - 1].eval_exact(q).to_f64()
    }
}

/// The process-wide derivative table, grown to hold at least `min_order`.
pub fn shared_derivatives(min_order: usize) -> Arc<DerivativeTable> {
    use std::sync::{OnceLock, RwLock};
    static CACHE: OnceLock<RwLock<Arc<DerivativeTable>>> = OnceLock::new();
    let slot = CACHE.get_or_init(|| RwLock::new(Arc::new(DerivativeTable::up_to(32))));
    {
        let current = slot.read().expect("derivative cache lock");
        if current.max_order() >= min_order {
            return Arc::clone(&current);
        }
    }
    let mut w = slot.write().expect("derivative cache lock");
    if w.max_order() < min_order {
        *w = Arc::new(DerivativeTable::up_to(min_order.max(2 * w.max_order())));
    }
    Arc::clone(&w)
}

fn logistic_derivative(order: usize, z: f64) -> f64 {
    shared_derivatives(order).value(order, z)
}

/// The Taylor coefficient `A^{(order)}(z) / order!` of the logistic family,
/// evaluated exactly and divided once, with the error bound scaled alike.
///
/// Fails with [`Error::PrecisionExhausted`] under the same rule as
/// [`eval_derivative`].
pub fn taylor_coefficient(order: usize, z: f64) -> Result<Evaluated> {
    if order == 0 {
        return Err(Error::domain("taylor_coefficient", "order must be >= 1"));
    }
    let at = EvalPoint::new(z)?;
    let table = shared_derivatives(order + 1);
    let poly = table.poly(order).expect("table grown");
    let exact_value = eval_derivative_exact(poly, &at);
    let slope = eval_derivative_exact(table.poly(order + 1).expect("table grown"), &at);
    let factorial = combinatorics::shared_table(order)
        .factorial(order)
        .expect("table grown")
        .clone();
    let value = exact_value.div_to_f64(&factorial);
    let ln_abs = exact_value.ln_abs_div(&factorial);
    let carried = if slope.is_zero() || at.input_error() == 0.0 {
        0.0
    } else {
        (slope.ln_abs() + at.input_error().ln() - exact_value.ln_abs()).exp()
    };
    let relative = carried + f64::EPSILON;
    if exact_value.is_zero() {
        if carried == 0.0 {
            return Ok(Evaluated {
                order,
                value: 0.0,
                error_bound: 0.0,
                ln_abs,
            });
        }
        return Err(Error::PrecisionExhausted {
            order,
            z,
            value: 0.0,
            bound: slope.div_to_f64(&factorial).abs() * at.input_error(),
        });
    }
    if relative > 1e-3 {
        return Err(Error::PrecisionExhausted {
            order,
            z,
            value,
            bound: relative * value.abs(),
        });
    }
    Ok(Evaluated {
        order,
        value,
        error_bound: relative * value.abs(),
        ln_abs,
    })
}

/// Largest absolute coefficient, a rough size measure for diagnostics.
pub fn max_coefficient_bits(poly: &DerivativePoly) -> u64 {
    poly.coeffs.iter().map(|c| c.abs().bits()).max().unwrap_or(0)
}
