//! Exact references: big-rational binomial tails and brute-force
//! signed-rank enumeration.

use motionleak::stats::{signed_ranks, ExtFloat};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub fn rational_of_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

pub fn pow2(e: i64) -> BigRational {
    let two = BigRational::from_integer(BigInt::from(2));
    if e >= 0 {
        num_traits::pow(two, e as usize)
    } else {
        BigRational::one() / num_traits::pow(two, (-e) as usize)
    }
}

pub fn ext_to_rational(x: ExtFloat) -> BigRational {
    let (hi, lo, e) = x.parts();
    (rational_of_f64(hi) + rational_of_f64(lo)) * pow2(e)
}

/// Exact P(X ≥ k) for a binary-fraction `p0 = a / 2^s`: every term shares
/// the denominator `2^(s·n)`, so the sum stays in integers.
pub fn oracle_tail(n: u64, k: u64, p0: f64) -> BigRational {
    let p = rational_of_f64(p0);
    let den = p.denom().clone();
    let a = p.numer().clone();
    let b = &den - &a;
    let mut total = BigInt::zero();
    let mut c = BigInt::one();
    for j in 0..=n {
        if j >= k {
            total += &c * num_traits::pow(a.clone(), j as usize) * num_traits::pow(b.clone(), (n - j) as usize);
        }
        c = c * BigInt::from(n - j) / BigInt::from(j + 1);
    }
    BigRational::new(total, num_traits::pow(den, n as usize))
}

/// Exact P(X ≥ k) at p = 1/2 via integer binomial sums.
pub fn oracle_tail_half(n: u64, k: u64) -> BigRational {
    let mut total = BigInt::zero();
    let mut c = BigInt::one();
    for j in 0..=n {
        if j >= k {
            total += &c;
        }
        c = c * BigInt::from(n - j) / BigInt::from(j + 1);
    }
    BigRational::new(total, num_traits::pow(BigInt::from(2), n as usize))
}

pub fn rel_err(ours: ExtFloat, exact: &BigRational) -> f64 {
    let diff = (ext_to_rational(ours) - exact).abs();
    (diff / exact).to_f64().unwrap()
}

/// Two-sided signed-rank p by enumerating all `2^m` sign assignments.
pub fn brute_force_p(d: &[f64]) -> f64 {
    let ranks = signed_ranks(d);
    let observed: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let m = d.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << m) {
        let w: f64 = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= observed + 1e-9 {
            le += 1;
        }
        if w >= observed - 1e-9 {
            ge += 1;
        }
    }
    let total = (1u64 << m) as f64;
    (2.0 * (le.min(ge) as f64) / total).min(1.0)
}

