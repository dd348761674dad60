//! Stirling numbers of the second kind, Triangle numbers `T(n,k) = k! S2(n,k)`
//! and the Bernoulli-magnitude asymptotic used by the root test.

use std::sync::{Arc, OnceLock, RwLock};

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::exact::{self, Dyadic};

/// Exact DP table of `S2(n,k)` for `1 <= k <= n <= max_n`.
///
/// Read-only once built. [`StirlingTable::grown`] returns a new, larger table
/// and leaves `self` untouched, so shared references never observe growth.
#[derive(Clone, Debug)]
pub struct StirlingTable {
    // rows[n - 1][k - 1] = S2(n, k)
    rows: Vec<Vec<BigUint>>,
    // factorials[i] = i!
    factorials: Vec<BigUint>,
}

impl StirlingTable {
    pub const DEFAULT_MAX_N: usize = 64;

    pub fn new(max_n: usize) -> Self {
        let empty = StirlingTable {
            rows: Vec::new(),
            factorials: vec![BigUint::one()],
        };
        empty.grown(max_n.max(1))
    }

    pub fn max_n(&self) -> usize {
        self.rows.len()
    }

    /// A copy extended to `max_n` rows by the recurrence
    /// `S2(n+1,k) = k S2(n,k) + S2(n,k-1)`.
    pub fn grown(&self, max_n: usize) -> Self {
        let mut rows = self.rows.clone();
        let mut factorials = self.factorials.clone();
        while rows.len() < max_n {
            let n = rows.len() + 1;
            let row = match rows.last() {
                None => vec![BigUint::one()],
                Some(prev) => (1..=n)
                    .map(|k| {
                        let stay = if k < n {
                            &prev[k - 1] * BigUint::from(k)
                        } else {
                            BigUint::zero()
                        };
                        let join = if k > 1 {
                            prev[k - 2].clone()
                        } else {
                            BigUint::zero()
                        };
                        stay + join
                    })
                    .collect(),
            };
            rows.push(row);
        }
        while factorials.len() <= max_n {
            let i = factorials.len();
            let next = &factorials[i - 1] * BigUint::from(i);
            factorials.push(next);
        }
        StirlingTable { rows, factorials }
    }

    fn check(&self, op: &'static str, n: usize, k: usize) -> Result<()> {
        if n == 0 || k == 0 || k > n {
            return Err(Error::domain(
                op,
                format!("need 1 <= k <= n, got n = {n}, k = {k}"),
            ));
        }
        if n > self.max_n() {
            return Err(Error::domain(
                op,
                format!("n = {n} exceeds table size {}", self.max_n()),
            ));
        }
        Ok(())
    }

    pub fn stirling2(&self, n: usize, k: usize) -> Result<&BigUint> {
        self.check("stirling2", n, k)?;
        Ok(&self.rows[n - 1][k - 1])
    }

    pub fn triangle(&self, n: usize, k: usize) -> Result<BigUint> {
        self.check("triangle", n, k)?;
        Ok(&self.factorials[k] * &self.rows[n - 1][k - 1])
    }

    /// `S2(n, 1..=n)`.
    pub fn row(&self, n: usize) -> Result<&[BigUint]> {
        self.check("row", n, 1)?;
        Ok(&self.rows[n - 1])
    }

    /// `n!` for `n <= max_n`.
    pub fn factorial(&self, n: usize) -> Result<&BigUint> {
        self.factorials.get(n).ok_or_else(|| {
            Error::domain("factorial", format!("n = {n} exceeds table size"))
        })
    }

    /// The Bell number `B_n = sum_k S2(n,k)`.
    pub fn bell(&self, n: usize) -> Result<BigUint> {
        Ok(self.row(n)?.iter().sum())
    }
}

fn shared_slot() -> &'static RwLock<Arc<StirlingTable>> {
    static SLOT: OnceLock<RwLock<Arc<StirlingTable>>> = OnceLock::new();
    SLOT.get_or_init(|| RwLock::new(Arc::new(StirlingTable::new(StirlingTable::DEFAULT_MAX_N))))
}

/// Process-wide table covering at least `min_n` rows.
pub fn shared_table(min_n: usize) -> Arc<StirlingTable> {
    {
        let table = shared_slot().read().expect("stirling table lock");
        if table.max_n() >= min_n {
            return Arc::clone(&table);
        }
    }
    let mut slot = shared_slot().write().expect("stirling table lock");
    if slot.max_n() < min_n {
        let target = min_n.max(2 * slot.max_n());
        *slot = Arc::new(slot.grown(target));
    }
    Arc::clone(&slot)
}

pub fn stirling2(n: usize, k: usize) -> Result<BigUint> {
    shared_table(n).stirling2(n, k).cloned()
}

pub fn triangle(n: usize, k: usize) -> Result<BigUint> {
    shared_table(n).triangle(n, k)
}

/// `sum_{j=1..n} (-p)^j T(n,j)`, evaluated exactly at the dyadic value of `p`.
pub fn alternating_stirling_sum(n: usize, p: f64) -> Result<Dyadic> {
    if n == 0 {
        return Err(Error::domain("alternating_stirling_sum", "n must be >= 1"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(
            "alternating_stirling_sum",
            format!("p = {p} outside (0,1)"),
        ));
    }
    let table = shared_table(n);
    let coeffs: Vec<BigInt> = (1..=n)
        .map(|j| {
            let t = BigInt::from(table.triangle(n, j).expect("in range"));
            if j % 2 == 1 {
                -t
            } else {
                t
            }
        })
        .collect();
    Ok(exact::eval_poly(&coeffs, p))
}

/// Riemann zeta at an integer `s >= 2`.
///
/// Direct summation of the first `N - 1` terms plus an Euler-Maclaurin tail;
/// plain truncation would need ~1e15 terms at `s = 2`.
pub fn riemann_zeta(s: u32) -> Result<f64> {
    if s < 2 {
        return Err(Error::domain("riemann_zeta", format!("s = {s} < 2")));
    }
    const N: u32 = 16;
    // B_2, B_4, ..., B_12
    const BERNOULLI: [f64; 6] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
    ];
    let sf = s as f64;
    let nf = N as f64;
    let mut head = 0.0;
    for n in (1..N).rev() {
        head += (n as f64).powf(-sf);
    }
    let mut tail = nf.powf(1.0 - sf) / (sf - 1.0) + 0.5 * nf.powf(-sf);
    // sum_k B_2k/(2k)! s(s+1)...(s+2k-2) N^{-s-2k+1}
    let mut rising = sf;
    let mut fact = 2.0;
    for (i, b) in BERNOULLI.iter().enumerate() {
        let k = (i + 1) as f64;
        let term = b / fact * rising * nf.powf(-sf - 2.0 * k + 1.0);
        tail += term;
        if term.abs() < 1e-30 {
            break;
        }
        rising *= (sf + 2.0 * k - 1.0) * (sf + 2.0 * k);
        fact *= (2.0 * k + 1.0) * (2.0 * k + 2.0);
    }
    Ok(head + tail)
}

fn check_even(op: &'static str, two_k: u32) -> Result<()> {
    if two_k < 2 || !two_k.is_multiple_of(2) {
        return Err(Error::domain(
            op,
            format!("argument must be even and >= 2, got {two_k}"),
        ));
    }
    Ok(())
}

/// `2 (2k)! zeta(2k) / (2 pi)^{2k}`, the classical magnitude of the
/// Bernoulli number `B_{2k}`. Overflows to infinity past `2k ~ 490`; use
/// [`ln_bernoulli_asymptotic`] there.
pub fn bernoulli_asymptotic(two_k: u32) -> Result<f64> {
    check_even("bernoulli_asymptotic", two_k)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut product = 1.0;
    for i in 1..=two_k {
        product *= i as f64 / two_pi;
    }
    Ok(2.0 * product * riemann_zeta(two_k)?)
}

pub fn ln_bernoulli_asymptotic(two_k: u32) -> Result<f64> {
    check_even("ln_bernoulli_asymptotic", two_k)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    let ln_fact: f64 = (2..=two_k).map(|i| (i as f64).ln()).sum();
    Ok(std::f64::consts::LN_2 + ln_fact + riemann_zeta(two_k)?.ln()
        - two_k as f64 * two_pi.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn u(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn stirling_spot_values() {
        assert_eq!(stirling2(5, 5).unwrap(), u(1));
        assert_eq!(stirling2(3, 2).unwrap(), u(3));
        assert_eq!(stirling2(4, 2).unwrap(), u(7));
        assert_eq!(stirling2(10, 3).unwrap(), u(9330));
    }

    #[test]
    fn triangle_spot_values() {
        assert_eq!(triangle(4, 4).unwrap(), u(24));
        assert_eq!(triangle(3, 2).unwrap(), u(6));
        assert_eq!(triangle(4, 3).unwrap(), u(36));
    }

    #[test]
    fn out_of_range_is_an_error_not_zero() {
        assert!(matches!(stirling2(3, 4), Err(Error::Domain { .. })));
        assert!(matches!(stirling2(0, 0), Err(Error::Domain { .. })));
        assert!(matches!(triangle(3, 0), Err(Error::Domain { .. })));
        let small = StirlingTable::new(5);
        assert!(small.stirling2(6, 2).is_err());
        assert!(small.grown(6).stirling2(6, 2).is_ok());
        // growth leaves the original alone
        assert_eq!(small.max_n(), 5);
    }

    #[test]
    fn boundary_invariants_and_recurrence() {
        let t = StirlingTable::new(40);
        for n in 1..=40 {
            assert_eq!(t.stirling2(n, 1).unwrap(), &u(1));
            assert_eq!(t.stirling2(n, n).unwrap(), &u(1));
            for k in 1..=n {
                assert!(!t.stirling2(n, k).unwrap().is_zero());
            }
        }
        for n in 1..40 {
            for k in 2..=n {
                let lhs = t.stirling2(n + 1, k).unwrap();
                let rhs = t.stirling2(n, k).unwrap() * u(k as u64) + t.stirling2(n, k - 1).unwrap();
                assert_eq!(lhs, &rhs);
            }
        }
    }

    #[test]
    fn entries_exceed_u64_well_before_the_default_size() {
        let t = shared_table(64);
        let big = t.stirling2(30, 15).unwrap();
        assert!(big.bits() > 64);
    }

    #[test]
    fn triangle_is_divisible_by_k_factorial() {
        let t = StirlingTable::new(30);
        for n in 1..=30 {
            for k in 1..=n {
                let tri = t.triangle(n, k).unwrap();
                assert!((tri % t.factorial(k).unwrap()).is_zero());
            }
        }
    }

    #[test]
    fn shared_table_grows_on_demand() {
        let t = shared_table(100);
        assert!(t.max_n() >= 100);
        assert_eq!(t.stirling2(100, 100).unwrap(), &u(1));
    }

    #[test]
    fn alternating_sum_examples() {
        assert_eq!(alternating_stirling_sum(1, 0.5).unwrap().to_f64(), -0.5);
        assert_eq!(alternating_stirling_sum(2, 0.5).unwrap().to_f64(), 0.0);
        let v = alternating_stirling_sum(3, 0.25).unwrap().to_f64();
        assert!((v - 0.03125).abs() < 1e-15);
        assert!(alternating_stirling_sum(0, 0.5).is_err());
        assert!(alternating_stirling_sum(3, 1.0).is_err());
    }

    #[test]
    fn zeta_known_values() {
        assert!((riemann_zeta(2).unwrap() - PI * PI / 6.0).abs() < 1e-15);
        assert!((riemann_zeta(4).unwrap() - PI.powi(4) / 90.0).abs() < 1e-15);
        assert!((riemann_zeta(6).unwrap() - PI.powi(6) / 945.0).abs() < 1e-15);
        assert!((riemann_zeta(60).unwrap() - 1.0).abs() < 1e-17);
        assert!(riemann_zeta(1).is_err());
    }

    #[test]
    fn bernoulli_asymptotic_matches_exact_small_bernoulli_numbers() {
        // |B_2| = 1/6, |B_4| = 1/30, |B_10| = 5/66: the formula is exact.
        assert!((bernoulli_asymptotic(2).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((bernoulli_asymptotic(4).unwrap() - 1.0 / 30.0).abs() < 1e-15);
        assert!((bernoulli_asymptotic(10).unwrap() - 5.0 / 66.0).abs() < 1e-14);
        assert!(bernoulli_asymptotic(3).is_err());
        assert!(bernoulli_asymptotic(0).is_err());
    }

    #[test]
    fn bernoulli_ratio_identity() {
        let two_pi = 2.0 * PI;
        for two_k in (2..40).step_by(2) {
            let ratio = bernoulli_asymptotic(two_k).unwrap() / bernoulli_asymptotic(two_k + 2).unwrap();
            let k2 = two_k as f64;
            let zeta_ratio = riemann_zeta(two_k).unwrap() / riemann_zeta(two_k + 2).unwrap();
            let expected = two_pi * two_pi / ((k2 + 1.0) * (k2 + 2.0)) * zeta_ratio;
            assert!((ratio / expected - 1.0).abs() < 1e-13, "2k = {two_k}");
        }
    }

    #[test]
    fn log_form_agrees_and_extends_range() {
        for two_k in [2, 10, 40, 100] {
            let direct = bernoulli_asymptotic(two_k).unwrap().ln();
            let logged = ln_bernoulli_asymptotic(two_k).unwrap();
            assert!((direct - logged).abs() < 1e-12 * logged.abs().max(1.0));
        }
        assert!(bernoulli_asymptotic(1000).unwrap().is_infinite());
        assert!(ln_bernoulli_asymptotic(1000).unwrap().is_finite());
    }

    #[test]
    fn root_trend_decreases_toward_one_over_two_pi() {
        let limit = 1.0 / (2.0 * PI);
        let mut prev = f64::INFINITY;
        for two_k in (10..=60).step_by(2) {
            let lnfact: f64 = (2..=two_k).map(|i| (i as f64).ln()).sum();
            let root = ((ln_bernoulli_asymptotic(two_k).unwrap() - lnfact) / two_k as f64).exp();
            assert!(root > limit && root < prev);
            prev = root;
        }
        assert!((prev - limit) / limit < 0.02);
    }
}
