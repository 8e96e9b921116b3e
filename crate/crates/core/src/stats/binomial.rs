//! Exact binomial upper tail in double-double arithmetic with an unbounded
//! binary exponent, so tails far below `f64::MIN_POSITIVE` keep full
//! relative precision.

use std::fmt;

use super::StatsError;

/// Unevaluated sum `hi + lo` with |lo| ≤ ulp(hi)/2.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
    }

    fn quick_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd { hi: s, lo: b - (s - a) }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Self::two_sum(self.hi, o.hi);
        let t = Self::two_sum(self.lo, o.lo);
        let r = Self::quick_two_sum(s.hi, s.lo + t.hi);
        Self::quick_two_sum(r.hi, r.lo + t.lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Self::quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul(Dd::from(-q1)));
        let q2 = r.hi / o.hi;
        let r = r.add(o.mul(Dd::from(-q2)));
        let q3 = r.hi / o.hi;
        Self::quick_two_sum(q1, q2).add(Dd::from(q3))
    }

    fn scale2(self, e: i32) -> Dd {
        let f = pow2(e);
        Dd { hi: self.hi * f, lo: self.lo * f }
    }
}

/// 2^e for e in the normal range.
fn pow2(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// Binary exponent `e` with `x = m·2^e`, `m ∈ [0.5, 1)`; `x` finite, non-zero.
fn exponent(x: f64) -> i32 {
    let bits = x.abs().to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i32;
    if raw == 0 {
        // Subnormal: renormalize first.
        exponent(x * pow2(64)) - 64
    } else {
        raw - 1022
    }
}

/// `mantissa · 2^exp2` with a double-double mantissa in [0.5, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtFloat {
    hi: f64,
    lo: f64,
    exp2: i64,
}

impl ExtFloat {
    pub const ZERO: ExtFloat = ExtFloat { hi: 0.0, lo: 0.0, exp2: 0 };

    fn from_dd(d: Dd) -> Self {
        Self { hi: d.hi, lo: d.lo, exp2: 0 }.normalized()
    }

    fn normalized(self) -> Self {
        if self.hi == 0.0 {
            return Self::ZERO;
        }
        let e = exponent(self.hi);
        let d = Dd { hi: self.hi, lo: self.lo }.scale2(-e);
        Self { hi: d.hi, lo: d.lo, exp2: self.exp2 + e as i64 }
    }

    fn dd(self) -> Dd {
        Dd { hi: self.hi, lo: self.lo }
    }

    fn add(self, o: Self) -> Self {
        if self.hi == 0.0 {
            return o;
        }
        if o.hi == 0.0 {
            return self;
        }
        let (big, small) = if self.exp2 >= o.exp2 { (self, o) } else { (o, self) };
        let shift = big.exp2 - small.exp2;
        if shift > 200 {
            return big;
        }
        let s = big.dd().add(small.dd().scale2(-(shift as i32)));
        let mut r = Self::from_dd(s);
        r.exp2 += big.exp2;
        r
    }

    /// Nearest `f64`; underflows to 0 below the subnormal range.
    pub fn to_f64(self) -> f64 {
        if self.hi == 0.0 {
            return 0.0;
        }
        let v = self.hi + self.lo;
        let mut e = self.exp2;
        let mut out = v;
        while e > 0 {
            let step = e.min(1000);
            out *= pow2(step as i32);
            e -= step;
        }
        while e < 0 {
            let step = (-e).min(1000);
            out *= pow2(-(step as i32));
            e += step;
        }
        out
    }

    pub fn log10(self) -> f64 {
        if self.hi == 0.0 {
            return f64::NEG_INFINITY;
        }
        (self.hi + self.lo).log10() + self.exp2 as f64 * std::f64::consts::LOG10_2
    }

    /// Exact value as `(hi, lo, exp2)` with `value = (hi + lo)·2^exp2`.
    pub fn parts(self) -> (f64, f64, i64) {
        (self.hi, self.lo, self.exp2)
    }
}

impl PartialOrd for ExtFloat {
    /// Orders non-negative values; mantissas are normalized so a larger
    /// exponent means a larger value.
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        match (self.hi == 0.0, other.hi == 0.0) {
            (true, true) => Some(std::cmp::Ordering::Equal),
            (true, false) => Some(std::cmp::Ordering::Less),
            (false, true) => Some(std::cmp::Ordering::Greater),
            _ => Some(
                self.exp2
                    .cmp(&other.exp2)
                    .then(self.hi.total_cmp(&other.hi))
                    .then(self.lo.total_cmp(&other.lo)),
            ),
        }
    }
}

impl fmt::Display for ExtFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.hi == 0.0 {
            return write!(f, "0");
        }
        let l = self.log10();
        if l > -300.0 {
            return write!(f, "{:.6e}", self.to_f64());
        }
        let e = l.floor();
        write!(f, "{:.6}e{}", 10f64.powf(l - e), e as i64)
    }
}

/// `x^k` for a double-double base, tracking the exponent separately.
fn ext_pow(x: Dd, mut k: u64) -> ExtFloat {
    let mut result = ExtFloat::from_dd(Dd::ONE);
    let mut base = ExtFloat::from_dd(x);
    while k > 0 {
        if k & 1 == 1 {
            result = ext_mul(result, base);
        }
        base = ext_mul(base, base);
        k >>= 1;
    }
    result
}

fn ext_mul(a: ExtFloat, b: ExtFloat) -> ExtFloat {
    if a.hi == 0.0 || b.hi == 0.0 {
        return ExtFloat::ZERO;
    }
    let mut r = ExtFloat::from_dd(a.dd().mul(b.dd()));
    r.exp2 += a.exp2 + b.exp2;
    r
}

fn ext_mul_dd(a: ExtFloat, d: Dd) -> ExtFloat {
    if a.hi == 0.0 || d.hi == 0.0 {
        return ExtFloat::ZERO;
    }
    let mut r = ExtFloat::from_dd(a.dd().mul(d));
    r.exp2 += a.exp2;
    r
}

fn ratio(a: u64, b: u64) -> Dd {
    Dd::from(a as f64).div(Dd::from(b as f64))
}

/// `P(X ≥ k)` for `X ~ Binomial(n, p0)` in extended precision.
pub fn binomial_tail(n: u64, k: u64, p0: f64) -> Result<ExtFloat, StatsError> {
    if n == 0 || k > n || !(p0 > 0.0 && p0 < 1.0) || n > (1 << 40) {
        return Err(StatsError::DomainError(format!("binomial_p(n={n}, k={k}, p0={p0})")));
    }
    if k == 0 {
        return Ok(ExtFloat::from_dd(Dd::ONE));
    }
    let p = Dd::from(p0);
    let q = Dd::two_sum(1.0, -p0);
    // t_k = C(n, k) p^k q^(n-k), built from exact integer ratios.
    let mut t = ext_mul(ext_pow(p, k), ext_pow(q, n - k));
    let small = k.min(n - k);
    for i in 0..small {
        t = ext_mul_dd(t, ratio(n - i, i + 1));
    }
    let pq = p.div(q);
    let mode = ((n + 1) as f64 * p0).floor() as u64;
    let mut sum = ExtFloat::ZERO;
    let mut j = k;
    loop {
        sum = sum.add(t);
        if j == n {
            break;
        }
        // Past the mode terms only shrink; stop once they no longer register.
        if j >= mode && t.exp2 < sum.exp2 - 120 {
            break;
        }
        t = ext_mul_dd(t, ratio(n - j, j + 1).mul(pq));
        j += 1;
    }
    Ok(sum)
}

/// One-sided exact p-value `P(X ≥ k)` under `Binomial(n, p0)`.
///
/// Values below the `f64` range round to 0; use [`binomial_tail`] to keep
/// them.
pub fn binomial_p(n: u64, k: u64, p0: f64) -> Result<f64, StatsError> {
    Ok(binomial_tail(n, k, p0)?.to_f64())
}
