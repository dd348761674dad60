//! Slow, independent reference computations for the test suites.
//!
//! Nothing here shares code with `dropreg`; each routine takes the most
//! direct route available (brute-force enumeration, fixed-point arithmetic,
//! exhaustive grids) so agreement with the library is meaningful.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// `counts[k]` = number of partitions of an `n`-set into `k` blocks, found
/// by walking every restricted growth string of length `n`.
pub fn set_partition_counts(n: usize) -> Vec<u64> {
    assert!(n <= 14, "enumeration is exponential; n = {n} is too large");
    let mut counts = vec![0u64; n + 1];
    if n == 0 {
        counts[0] = 1;
        return counts;
    }
    // a[i] <= 1 + max(a[0..i]), a[0] = 0
    let mut a = vec![0usize; n];
    let mut prefix_max = vec![0usize; n];
    loop {
        counts[prefix_max[n - 1] + 1] += 1;
        let mut i = n - 1;
        loop {
            if i == 0 {
                return counts;
            }
            if a[i] <= prefix_max[i - 1] {
                a[i] += 1;
                prefix_max[i] = prefix_max[i - 1].max(a[i]);
                for j in i + 1..n {
                    a[j] = 0;
                    prefix_max[j] = prefix_max[i];
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Bell numbers `B_0 ..= B_n` from the Bell (Aitken) triangle.
pub fn bell_triangle(n: usize) -> Vec<BigUint> {
    let mut bells = vec![BigUint::one()];
    let mut row = vec![BigUint::one()];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(row.last().expect("non-empty").clone());
        for v in &row {
            let prev = next.last().expect("non-empty").clone();
            next.push(prev + v);
        }
        bells.push(next[0].clone());
        row = next;
    }
    bells.truncate(n + 1);
    bells
}

/// Integer coefficients of `d^order/dz^order log(1 + e^z)` as a polynomial
/// in `p = sigmoid(z)`, index `j` holding the coefficient of `p^j`, derived
/// by repeatedly applying `d(p^j)/dz = j p^j - j p^{j+1}`.
pub fn softplus_derivative_coeffs(order: usize) -> Vec<BigInt> {
    assert!(order >= 1, "order must be >= 1");
    let mut poly = vec![BigInt::zero(), BigInt::one()];
    for _ in 1..order {
        let mut next = vec![BigInt::zero(); poly.len() + 1];
        for (j, c) in poly.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let jc = c * BigInt::from(j);
            next[j] += &jc;
            next[j + 1] -= jc;
        }
        poly = next;
    }
    poly
}

/// Fixed-point reals `v / 2^prec`.
pub struct FixedPoint {
    prec: u32,
    ln2: BigInt,
}

impl FixedPoint {
    pub fn new(prec: u32) -> Self {
        let guard = prec + 16;
        // ln 2 = sum_k 1 / (k 2^k)
        let one = BigInt::one() << guard as usize;
        let mut sum = BigInt::zero();
        let mut k = 1u32;
        loop {
            let term = (&one >> k as usize) / BigInt::from(k);
            if term.is_zero() {
                break;
            }
            sum += term;
            k += 1;
        }
        FixedPoint {
            prec,
            ln2: sum >> 16usize,
        }
    }

    pub fn one(&self) -> BigInt {
        BigInt::one() << self.prec as usize
    }

    /// Exact fixed-point image of `x`, truncated below `2^-prec`.
    pub fn from_f64(&self, x: f64) -> BigInt {
        assert!(x.is_finite(), "non-finite argument");
        let bits = x.to_bits();
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, exp) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        let m = BigInt::from(mant);
        let shift = self.prec as i64 + exp;
        let v = if shift >= 0 { m << shift as usize } else { m >> (-shift) as usize };
        if x < 0.0 {
            -v
        } else {
            v
        }
    }

    pub fn to_f64(&self, v: &BigInt) -> f64 {
        let bits = v.bits();
        let drop = bits.saturating_sub(64);
        let top = (v >> drop as usize).to_f64().expect("fits");
        top * 2f64.powi(drop as i32 - self.prec as i32)
    }

    pub fn mul(&self, a: &BigInt, b: &BigInt) -> BigInt {
        (a * b) >> self.prec as usize
    }

    pub fn div(&self, a: &BigInt, b: &BigInt) -> BigInt {
        (a << self.prec as usize).div_floor(b)
    }

    pub fn exp(&self, x: &BigInt) -> BigInt {
        // x = n ln2 + r with |r| <= ln2 / 2, then e^r by Taylor series
        let n = (x + (&self.ln2 >> 1usize)).div_floor(&self.ln2);
        let r = x - &n * &self.ln2;
        let one = self.one();
        let mut term = one.clone();
        let mut sum = one.clone();
        let mut k = 1u32;
        while !term.is_zero() {
            term = self.mul(&term, &r) / BigInt::from(k);
            sum += &term;
            k += 1;
        }
        let n = n.to_i64().expect("moderate exponent");
        if n >= 0 {
            sum << n as usize
        } else {
            sum >> (-n) as usize
        }
    }

    /// Natural log of a positive fixed-point value.
    pub fn ln(&self, y: &BigInt) -> BigInt {
        assert!(y.is_positive(), "ln of a non-positive value");
        let e = y.bits() as i64 - 1 - self.prec as i64;
        let m = if e >= 0 { y >> e as usize } else { y << (-e) as usize };
        // m in [1, 2): ln m = 2 atanh(u), u = (m - 1)/(m + 1) <= 1/3
        let one = self.one();
        let u = self.div(&(&m - &one), &(&m + &one));
        let u2 = self.mul(&u, &u);
        let mut power = u.clone();
        let mut sum = BigInt::zero();
        let mut k = 1u32;
        while !power.is_zero() {
            sum += &power / BigInt::from(k);
            power = self.mul(&power, &u2);
            k += 2;
        }
        (sum << 1usize) + BigInt::from(e) * &self.ln2
    }

    /// `log(1 + e^x)`.
    pub fn softplus(&self, x: &BigInt) -> BigInt {
        let t = self.exp(x);
        self.ln(&(t + self.one()))
    }
}

/// `d^k/dz^k log(1 + e^z)` by central differences on a fixed-point
/// evaluation, with four levels of Richardson extrapolation from `h = 1/16`.
pub fn softplus_derivative_fd(k: usize, z: f64) -> f64 {
    assert!((1..=8).contains(&k), "finite-difference oracle covers orders 1..=8");
    let fp = FixedPoint::new(400);
    let z = fp.from_f64(z);
    let levels = 4;
    // level l: h = 2^-(4 + l); the error expands in even powers of h
    let mut table: Vec<BigInt> = Vec::with_capacity(levels);
    for l in 0..levels {
        // stencil points sit at multiples of h/2 = 2^-s
        let s = 5 + l as u32;
        let half_step = BigInt::one() << (fp.prec - s) as usize;
        let mut acc = BigInt::zero();
        for i in 0..=k {
            // offset (k - 2i) * (h/2)
            let offset = BigInt::from(k as i64 - 2 * i as i64) * &half_step;
            let f = fp.softplus(&(&z + offset));
            let c = binomial(k, i);
            if i % 2 == 0 {
                acc += f * c;
            } else {
                acc -= f * c;
            }
        }
        // divide by h^k with h = 2^-(s - 1)
        table.push(acc << ((s - 1) as usize * k));
    }
    for j in 1..levels {
        let factor = BigInt::one() << (2 * j);
        for l in (j..levels).rev() {
            table[l] = (&factor * &table[l] - &table[l - 1]) / (&factor - BigInt::one());
        }
    }
    fp.to_f64(&table[levels - 1])
}

fn binomial(n: usize, k: usize) -> BigInt {
    (0..k).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i) / BigInt::from(i + 1))
}

/// `E[(sum_l w_l (xi_l - 1))^m]` in exact rationals over all `2^d` masks,
/// with `xi_l = 0` w.p. `delta` and `1/(1-delta)` otherwise.
pub fn dropout_moment_exact(m: u32, w: &[BigRational], delta: &BigRational) -> BigRational {
    let keep = BigRational::one() - delta;
    let mut total = BigRational::zero();
    for mask in 0u64..(1u64 << w.len()) {
        let mut prob = BigRational::one();
        let mut noised = BigRational::zero();
        let mut clean = BigRational::zero();
        for (l, wl) in w.iter().enumerate() {
            clean += wl;
            if mask >> l & 1 == 1 {
                prob *= &keep;
                noised += wl / &keep;
            } else {
                prob *= delta;
            }
        }
        let disp = noised - clean;
        let mut power = BigRational::one();
        for _ in 0..m {
            power *= &disp;
        }
        total += prob * power;
    }
    total
}

/// Exact rational of a finite double.
pub fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Minimizes `f` over `[lo, hi]^2`: an exhaustive grid at `step`, then grids
/// of ten times finer spacing around the incumbent until spacing drops below
/// `tol`.
pub fn grid_minimize_2d(f: impl Fn(f64, f64) -> f64, lo: f64, hi: f64, step: f64, tol: f64) -> ([f64; 2], f64) {
    let n = ((hi - lo) / step).round() as i64;
    let mut best = ([lo, lo], f64::INFINITY);
    for i in 0..=n {
        for j in 0..=n {
            let p = [lo + i as f64 * step, lo + j as f64 * step];
            let v = f(p[0], p[1]);
            if v < best.1 {
                best = (p, v);
            }
        }
    }
    let mut spacing = step;
    while spacing > tol {
        let center = best.0;
        let fine = spacing / 10.0;
        for i in -20..=20 {
            for j in -20..=20 {
                let p = [
                    (center[0] + i as f64 * fine).clamp(lo, hi),
                    (center[1] + j as f64 * fine).clamp(lo, hi),
                ];
                let v = f(p[0], p[1]);
                if v < best.1 {
                    best = (p, v);
                }
            }
        }
        spacing = fine;
    }
    best
}

/// Central-difference gradient with one Richardson step.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let diff = |l: usize, h: f64| {
        let mut up = x.to_vec();
        up[l] += h;
        let mut dn = x.to_vec();
        dn[l] -= h;
        (f(&up) - f(&dn)) / (2.0 * h)
    };
    (0..x.len())
        .map(|l| (4.0 * diff(l, h / 2.0) - diff(l, h)) / 3.0)
        .collect()
}
