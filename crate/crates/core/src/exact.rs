//! Exact dyadic-rational arithmetic.
//!
//! Every finite `f64` is a dyadic rational `m / 2^e`, so an integer
//! polynomial evaluated at an `f64` argument has an exact dyadic value. The
//! alternating Stirling/Triangle-number sums lose dozens of decimal digits to
//! cancellation in floating point; evaluating them exactly and rounding once
//! at the end removes that failure mode entirely.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{ToPrimitive, Zero};

/// The exact value `num / 2^shift`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dyadic {
    num: BigInt,
    shift: u64,
}

impl Dyadic {
    pub fn zero() -> Self {
        Dyadic {
            num: BigInt::zero(),
            shift: 0,
        }
    }

    /// Exact conversion; `None` for NaN and infinities.
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        let (mantissa, exponent, sign) = decode(x);
        let mut num = BigInt::from(mantissa);
        if sign < 0 {
            num = -num;
        }
        if exponent >= 0 {
            Some(Dyadic {
                num: num << exponent as usize,
                shift: 0,
            })
        } else {
            Some(Dyadic {
                num,
                shift: (-exponent) as u64,
            })
        }
    }

    pub fn numerator(&self) -> &BigInt {
        &self.num
    }

    pub fn shift(&self) -> u64 {
        self.shift
    }

    pub fn negated(&self) -> Dyadic {
        Dyadic {
            num: -self.num.clone(),
            shift: self.shift,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn signum(&self) -> i32 {
        match self.num.sign() {
            Sign::Minus => -1,
            Sign::NoSign => 0,
            Sign::Plus => 1,
        }
    }

    /// Nearest `f64` (within one ulp; overflow saturates to infinity).
    pub fn to_f64(&self) -> f64 {
        scaled_to_f64(&self.num, -(self.shift as i64))
    }

    /// `ln |self|`, finite for any non-zero value regardless of magnitude.
    pub fn ln_abs(&self) -> f64 {
        ln_abs_big(self.num.magnitude()) - self.shift as f64 * std::f64::consts::LN_2
    }

    /// `self / den` rounded to `f64`.
    pub fn div_to_f64(&self, den: &BigUint) -> f64 {
        assert!(!den.is_zero(), "division by zero");
        if self.num.is_zero() {
            return 0.0;
        }
        let extra = den.bits() + 64;
        let q = (self.num.magnitude() << extra as usize) / den;
        let q = BigInt::from_biguint(self.num.sign(), q);
        scaled_to_f64(&q, -((self.shift + extra) as i64))
    }

    /// `ln |self / den|`.
    pub fn ln_abs_div(&self, den: &BigUint) -> f64 {
        self.ln_abs() - ln_abs_big(den)
    }
}

/// Evaluates `sum_{j=1..k} coeffs[j-1] * x^j` exactly at the dyadic value of `x`.
///
/// There is no constant term: index 0 holds the coefficient of `x^1`.
pub fn eval_poly(coeffs: &[BigInt], x: f64) -> Dyadic {
    let Some(xd) = Dyadic::from_f64(x) else {
        panic!("eval_poly: non-finite argument {x}");
    };
    if coeffs.is_empty() || xd.is_zero() {
        return Dyadic::zero();
    }
    let m = &xd.num;
    let e = xd.shift as usize;
    let k = coeffs.len();
    // I_j = c_j 2^{e(k-j)} + m I_{j+1}, and the value is m I_1 / 2^{ek}.
    let mut acc = coeffs[k - 1].clone();
    for (offset, c) in coeffs[..k - 1].iter().enumerate().rev() {
        let j = offset + 1;
        acc = (c << (e * (k - j))) + m * acc;
    }
    Dyadic {
        num: m * acc,
        shift: (e * k) as u64,
    }
}

fn decode(x: f64) -> (u64, i64, i8) {
    let bits = x.to_bits();
    let sign: i8 = if bits >> 63 == 0 { 1 } else { -1 };
    let exponent = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = if exponent == 0 {
        (bits & 0xf_ffff_ffff_ffff) << 1
    } else {
        (bits & 0xf_ffff_ffff_ffff) | 0x10_0000_0000_0000
    };
    (mantissa, exponent - 1075, sign)
}

/// `num * 2^exp2` as `f64`.
pub(crate) fn scaled_to_f64(num: &BigInt, exp2: i64) -> f64 {
    let bits = num.bits();
    if bits == 0 {
        return 0.0;
    }
    let drop = bits.saturating_sub(64);
    let top = (num.magnitude() >> drop as usize)
        .to_u64()
        .expect("top 64 bits fit");
    let m = top as f64;
    let signed = if num.sign() == Sign::Minus { -m } else { m };
    ldexp(signed, drop as i64 + exp2)
}

pub(crate) fn ln_abs_big(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    let drop = bits.saturating_sub(64);
    let top = (n >> drop as usize).to_u64().expect("top 64 bits fit") as f64;
    top.ln() + drop as f64 * std::f64::consts::LN_2
}

pub(crate) fn ldexp(mut x: f64, mut e: i64) -> f64 {
    let big = 2f64.powi(1000);
    let small = 2f64.powi(-1000);
    while e > 1000 {
        x *= big;
        e -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while e < -1000 {
        x *= small;
        e += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * 2f64.powi(e as i32)
}
