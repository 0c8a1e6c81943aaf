//! Exact event probabilities of the shared-quantile coupling.
//!
//! Under a uniformly random label arrangement, the number of labels of one
//! class inside a fixed window of positions is hypergeometric, so every
//! quantity here is a ratio of binomial coefficients and is computed as an
//! exact [`Rational`]. Past [`EXACT_LIMIT`] agents the `_f64` variants work in
//! log space instead.
//!
//! The exhaustive oracles ([`enumerate_events`], [`verify_conditioning_claim`])
//! walk every arrangement and every subset of small instances.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::coupling::{event_e1_fsd, label_multiset, sellers_in_top, IndexSets, Label};
use crate::error::{Error, Result};
use crate::money::{serialize_rational, Rational};

/// Largest `m + n + 2c` evaluated with big-integer rationals by [`evaluate`].
pub const EXACT_LIMIT: usize = 10_000;

/// `C(n, k)`, zero when `k < 0` or `k > n`.
pub fn binom(n: i64, k: i64) -> BigUint {
    if k < 0 || n < 0 || k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k) as u64;
    let n = n as u64;
    let mut acc = BigUint::one();
    for i in 1..=k {
        acc *= n - k + i;
        acc /= i;
    }
    acc
}

fn ratio(num: BigUint, den: BigUint) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

fn to_i64(x: usize) -> i64 {
    i64::try_from(x).expect("count fits in i64")
}

/// Window width `ceil(n / 10)`.
pub fn window_width(n: usize) -> usize {
    n.div_ceil(10)
}

/// Probability that exactly `k` of `special` marked positions fall into a
/// fixed window of `window` positions out of `total` (hypergeometric).
pub fn pr_count_in_window(total: usize, special: usize, window: usize, k: usize) -> Result<Rational> {
    if special > total || window > total {
        return Err(Error::Precondition(format!("special={special} and window={window} must not exceed N={total}")));
    }
    let (t, s, w, k) = (to_i64(total), to_i64(special), to_i64(window), to_i64(k));
    Ok(ratio(binom(s, k) * binom(t - s, w - k), binom(t, w)))
}

/// Probability that at least `k` marked positions fall into the window.
pub fn pr_at_least_in_window(total: usize, special: usize, window: usize, k: usize) -> Result<Rational> {
    let mut below = Rational::zero();
    for j in 0..k {
        below += pr_count_in_window(total, special, window, j)?;
    }
    Ok(Rational::one() - below)
}

fn check_counts(m: usize, n: usize, c: usize) -> Result<()> {
    if !(m >= n && n >= c && c >= 1) {
        return Err(Error::Precondition(format!("need m >= n >= c >= 1, got m={m} n={n} c={c}")));
    }
    if n < 20 {
        return Err(Error::Precondition(format!("need n >= 20, got n={n}")));
    }
    Ok(())
}

/// Union bound on `Pr[not E1]` for window width `p`.
pub fn e1_complement_union(m: usize, n: usize, c: usize, p: usize) -> Rational {
    let (m, n, c, p) = (to_i64(m), to_i64(n), to_i64(c), to_i64(p));
    let big = m + n + c;
    let num = BigUint::from(2u8) * binom(big, p)
        + BigUint::from(2 * c as u64) * binom(big, p - 1)
        + binom(n + 2 * c, p)
        + binom(m + 2 * c, p);
    ratio(num, binom(m + n + 2 * c, p))
}

/// `6c exp(-cn / (10 (m + n + 2c)))`.
pub fn e1_complement_closed_form(m: usize, n: usize, c: usize) -> f64 {
    let (m, n, c) = (m as f64, n as f64, c as f64);
    6.0 * c * (-c * n / (10.0 * (m + n + 2.0 * c))).exp()
}

/// Union bound on `Pr[not E1]` at `p = ceil(n/10)`, checked against its
/// closed-form relaxation.
pub fn pr_e1_complement_upper(m: usize, n: usize, c: usize) -> Result<Rational> {
    check_counts(m, n, c)?;
    let value = e1_complement_union(m, n, c, window_width(n));
    let closed = e1_complement_closed_form(m, n, c);
    if value.to_f64().unwrap_or(f64::INFINITY) > closed * (1.0 + 1e-12) {
        return Err(Error::BoundViolated(format!("union bound {value} exceeds 6c exp(-cn/(10(m+n+2c))) = {closed}")));
    }
    Ok(value)
}

/// `Pr[every new seller in the first 2n + 2c positions] = prod_{i=1..c} (2n+c+i)/(m+n+c+i)`,
/// checked against `(4n/m)^c` when `n <= m/4` and `c <= n`.
pub fn pr_sellers_top(m: usize, n: usize, c: usize) -> Result<Rational> {
    if m < n {
        return Err(Error::Precondition(format!("need m >= n, got m={m} n={n}")));
    }
    let mut value = Rational::one();
    for i in 1..=c {
        value *= Rational::new(BigInt::from(2 * n + c + i), BigInt::from(m + n + c + i));
    }
    // the relaxation needs 2n + 2c <= 4n, i.e. c <= n
    if 4 * n <= m && c <= n {
        let bound = num_traits::pow(Rational::new(BigInt::from(4 * n), BigInt::from(m)), c);
        if value > bound {
            return Err(Error::BoundViolated(format!("sellers-top probability {value} exceeds (4n/m)^c = {bound}")));
        }
    }
    Ok(value)
}

fn check_small_n(m: usize, n: usize, c: usize, alpha: &Rational) -> Result<()> {
    if c < 2 || m < n + 2 * c {
        return Err(Error::Precondition(format!("need c >= 2 and m >= n + 2c, got m={m} n={n} c={c}")));
    }
    let ten_alpha = alpha * Rational::from_integer(10.into());
    if *alpha <= Rational::zero() || ten_alpha > Rational::from_integer(c.into()) {
        return Err(Error::Precondition(format!("need 0 < alpha <= c/10, got alpha={alpha}")));
    }
    // n <= 10 alpha m / c - 1
    if Rational::from_integer(((n + 1) * c).into()) > ten_alpha * Rational::from_integer(m.into()) {
        return Err(Error::Precondition(format!("need n <= 10 alpha m / c - 1, got n={n}")));
    }
    Ok(())
}

/// `(1/40) (c/120)^4 (1 - 10 alpha / c)^(2c) (n/m)^6`.
pub fn pr_e1_lower_small_n(m: usize, n: usize, c: usize, alpha: &Rational) -> Result<Rational> {
    check_small_n(m, n, c, alpha)?;
    let int = |x: usize| Rational::from_integer(x.into());
    let shrink = Rational::one() - alpha * int(10) / int(c);
    Ok(Rational::new(1.into(), 40.into())
        * num_traits::pow(int(c) / int(120), 4)
        * num_traits::pow(shrink, 2 * c)
        * num_traits::pow(int(n) / int(m), 6))
}

/// `Pr[|I1 ∩ BN| = 2] = C(c,2) C(m+n+c, p-2) / C(m+n+2c, p)`.
pub fn pr_two_new_buyers_in_i1(m: usize, n: usize, c: usize, p: usize) -> Rational {
    let (m, n, c, p) = (to_i64(m), to_i64(n), to_i64(c), to_i64(p));
    ratio(binom(c, 2) * binom(m + n + c, p - 2), binom(m + n + 2 * c, p))
}

/// `Pr[|J2 ∩ SO| >= 1] = 1 - C(m+2c, p) / C(m+n+2c, p)`.
pub fn pr_old_seller_in_j2(m: usize, n: usize, c: usize, p: usize) -> Rational {
    let (m, n, c, p) = (to_i64(m), to_i64(n), to_i64(c), to_i64(p));
    Rational::one() - ratio(binom(m + 2 * c, p), binom(m + n + 2 * c, p))
}

/// The four window conditions making up E1, each on its own.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct E1Marginals {
    #[serde(serialize_with = "serialize_rational")]
    pub new_buyers_i1: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub old_buyer_i2: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub new_sellers_j1: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub old_seller_j2: Rational,
}

impl E1Marginals {
    pub fn product(&self) -> Rational {
        &self.new_buyers_i1 * &self.old_buyer_i2 * &self.new_sellers_j1 * &self.old_seller_j2
    }
}

pub fn e1_marginals(m: usize, n: usize, c: usize, p: usize) -> Result<E1Marginals> {
    let total = m + n + 2 * c;
    let new_pair = pr_at_least_in_window(total, c, p, 2)?;
    Ok(E1Marginals {
        new_buyers_i1: new_pair.clone(),
        old_buyer_i2: pr_at_least_in_window(total, m, p, 1)?,
        new_sellers_j1: new_pair,
        old_seller_j2: pr_old_seller_in_j2(m, n, c, p),
    })
}

/// Event probabilities obtained by walking every distinct label arrangement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnumeratedEvents {
    pub arrangements: u64,
    #[serde(serialize_with = "serialize_rational")]
    pub e1: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub e2: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub sellers_top: Rational,
    pub marginals: E1Marginals,
}

/// Lexicographic successor; false once `v` is the last permutation.
fn next_permutation<T: Ord>(v: &mut [T]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v.iter().rposition(|x| *x > v[i]).expect("successor exists");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

/// Exhaustive E1 / E2 probabilities with window width `p`; meant for
/// `m + n + 2c <= 12` or so.
pub fn enumerate_events(m: usize, n: usize, c: usize, p: usize) -> Result<EnumeratedEvents> {
    let total = m + n + 2 * c;
    if total > 16 {
        return Err(Error::Precondition(format!("exhaustive enumeration needs N <= 16, got N={total}")));
    }
    let s = IndexSets::with_window(total, p)?;
    let mut labels = label_multiset(m, n, c);
    labels.sort();
    let count_in = |labels: &[Label], range: &std::ops::RangeInclusive<usize>, l: Label| {
        labels[range.start() - 1..*range.end()].iter().filter(|&&x| x == l).count()
    };
    let (mut all, mut e1, mut e2, mut top) = (0u64, 0u64, 0u64, 0u64);
    let mut marg = [0u64; 4];
    loop {
        all += 1;
        let hit = event_e1_fsd(&labels, &s);
        let on_top = sellers_in_top(&labels, n, c);
        e1 += u64::from(hit);
        e2 += u64::from(!hit && on_top);
        top += u64::from(on_top);
        marg[0] += u64::from(count_in(&labels, &s.i1, Label::BuyerNew) >= 2);
        marg[1] += u64::from(count_in(&labels, &s.i2, Label::BuyerOld) >= 1);
        marg[2] += u64::from(count_in(&labels, &s.j1, Label::SellerNew) >= 2);
        marg[3] += u64::from(count_in(&labels, &s.j2, Label::SellerOld) >= 1);
        if !next_permutation(&mut labels) {
            break;
        }
    }
    let frac = |k: u64| Rational::new(k.into(), all.into());
    Ok(EnumeratedEvents {
        arrangements: all,
        e1: frac(e1),
        e2: frac(e2),
        sellers_top: frac(top),
        marginals: E1Marginals {
            new_buyers_i1: frac(marg[0]),
            old_buyer_i2: frac(marg[1]),
            new_sellers_j1: frac(marg[2]),
            old_seller_j2: frac(marg[3]),
        },
    })
}

fn subsets_of_size(total: usize, c: usize) -> Vec<u32> {
    (0u32..1 << total).filter(|x| x.count_ones() as usize == c).collect()
}

/// Conditional and unconditional probability that a uniform `c`-subset `X`
/// of `[N]` meets `I` in at least `r` points, the former given `X ∩ K = ∅`.
/// Sets are bitmasks over positions `1..=N` (bit `i-1` for position `i`).
/// `None` when no subset avoids `K`.
pub fn conditioning_probabilities(total: usize, c: usize, i_mask: u32, k_mask: u32, r: u32) -> Option<(Rational, Rational)> {
    let subsets = subsets_of_size(total, c);
    let avoid: Vec<u32> = subsets.iter().copied().filter(|x| x & k_mask == 0).collect();
    if avoid.is_empty() {
        return None;
    }
    let hits = |xs: &[u32]| xs.iter().filter(|x| (*x & i_mask).count_ones() >= r).count();
    Some((
        Rational::new(hits(&avoid).into(), avoid.len().into()),
        Rational::new(hits(&subsets).into(), subsets.len().into()),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConditioningCounterexample {
    pub total: usize,
    pub c: usize,
    pub i_mask: u32,
    pub k_mask: u32,
    pub r: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConditioningReport {
    /// `(I, K, r)` triples compared.
    pub checked: u64,
    /// Triples skipped because no subset avoids `K`.
    pub skipped: u64,
    pub counterexample: Option<ConditioningCounterexample>,
}

impl ConditioningReport {
    pub fn holds(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Checks `Pr[|X∩I| >= r | X∩K = ∅] >= Pr[|X∩I| >= r]` for every disjoint
/// `I, K ⊆ [N]` and every `r`, over all `C(N, c)` subsets. Comparisons are
/// exact integer cross-multiplications.
pub fn verify_conditioning_claim(total: usize, c: usize) -> ConditioningReport {
    assert!(total <= 20, "exhaustive sweep is exponential in N");
    let subsets = subsets_of_size(total, c);
    let n_subsets = subsets.len() as u64;
    let full: u32 = if total == 32 { u32::MAX } else { (1u32 << total) - 1 };
    let per_i = |i_mask: u32| -> ConditioningReport {
        let mut unconditional = vec![0u64; c + 1];
        for x in &subsets {
            unconditional[(x & i_mask).count_ones() as usize] += 1;
        }
        let tail = |hist: &[u64], r: usize| hist[r..].iter().sum::<u64>();
        let (mut checked, mut skipped) = (0u64, 0u64);
        let rest = full & !i_mask;
        // every submask of the complement, including the empty set
        let mut k_mask = rest;
        loop {
            let mut cond = vec![0u64; c + 1];
            let mut avoid = 0u64;
            for x in subsets.iter().filter(|x| *x & k_mask == 0) {
                cond[(x & i_mask).count_ones() as usize] += 1;
                avoid += 1;
            }
            for r in 0..=c {
                if avoid == 0 {
                    skipped += 1;
                    continue;
                }
                checked += 1;
                if tail(&cond, r) * n_subsets < tail(&unconditional, r) * avoid {
                    return ConditioningReport {
                        checked,
                        skipped,
                        counterexample: Some(ConditioningCounterexample { total, c, i_mask, k_mask, r }),
                    };
                }
            }
            if k_mask == 0 {
                break;
            }
            k_mask = (k_mask - 1) & rest;
        }
        ConditioningReport { checked, skipped, counterexample: None }
    };
    (0..=full)
        .into_par_iter()
        .map(per_i)
        .reduce(
            || ConditioningReport { checked: 0, skipped: 0, counterexample: None },
            |a, b| ConditioningReport {
                checked: a.checked + b.checked,
                skipped: a.skipped + b.skipped,
                counterexample: a.counterexample.or(b.counterexample),
            },
        )
}

/// `exp(-δ² μ / 3)`, the multiplicative Chernoff bound for either tail of a
/// sum of independent `{0,1}` variables with mean `μ`.
pub fn chernoff_bound(mu: f64, delta: f64) -> Result<f64> {
    if mu.is_nan() || mu <= 0.0 || !(0.0..=1.0).contains(&delta) {
        return Err(Error::Precondition(format!("need mu > 0 and delta in [0,1], got mu={mu} delta={delta}")));
    }
    Ok((-delta * delta * mu / 3.0).exp())
}

/// `ln C(n, k)` via log-gamma; `-inf` when the coefficient is zero.
pub fn ln_binom(n: i64, k: i64) -> f64 {
    if k < 0 || n < 0 || k > n {
        return f64::NEG_INFINITY;
    }
    let (n, k) = (n as f64, k as f64);
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

pub fn pr_sellers_top_f64(m: usize, n: usize, c: usize) -> f64 {
    (1..=c).map(|i| ((2 * n + c + i) as f64).ln() - ((m + n + c + i) as f64).ln()).sum::<f64>().exp()
}

pub fn e1_complement_union_f64(m: usize, n: usize, c: usize, p: usize) -> f64 {
    let (m, n, c, p) = (to_i64(m), to_i64(n), to_i64(c), to_i64(p));
    let den = ln_binom(m + n + 2 * c, p);
    let big = m + n + c;
    let term = |ln_num: f64| (ln_num - den).exp();
    2.0 * term(ln_binom(big, p))
        + 2.0 * c as f64 * term(ln_binom(big, p - 1))
        + term(ln_binom(n + 2 * c, p))
        + term(ln_binom(m + 2 * c, p))
}

pub fn pr_e1_lower_small_n_f64(m: usize, n: usize, c: usize, alpha: f64) -> f64 {
    let (m, n, c) = (m as f64, n as f64, c as f64);
    let ln = (1.0f64 / 40.0).ln() + 4.0 * (c / 120.0).ln() + 2.0 * c * (1.0 - 10.0 * alpha / c).ln() + 6.0 * (n / m).ln();
    ln.exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formula {
    E1Upper,
    SellersTop,
    E1Lower,
}

impl std::str::FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e1-upper" => Ok(Self::E1Upper),
            "sellers-top" => Ok(Self::SellersTop),
            "e1-lower" => Ok(Self::E1Lower),
            other => Err(Error::Precondition(format!("unknown formula `{other}` (expected e1-upper, sellers-top or e1-lower)"))),
        }
    }
}

/// A formula value: exact when the market is small enough, always with a decimal.
#[derive(Debug, Clone, PartialEq)]
pub struct FormulaValue {
    pub exact: Option<Rational>,
    pub decimal: f64,
}

/// Evaluates a formula exactly up to [`EXACT_LIMIT`] agents and in log space
/// beyond. `alpha` is only used by [`Formula::E1Lower`].
pub fn evaluate(formula: Formula, m: usize, n: usize, c: usize, alpha: f64) -> Result<FormulaValue> {
    let exact = m + n + 2 * c <= EXACT_LIMIT;
    let wrap = |r: Rational| FormulaValue { decimal: r.to_f64().unwrap_or(f64::NAN), exact: Some(r) };
    match formula {
        Formula::E1Upper if exact => pr_e1_complement_upper(m, n, c).map(wrap),
        Formula::E1Upper => {
            check_counts(m, n, c)?;
            Ok(FormulaValue { exact: None, decimal: e1_complement_union_f64(m, n, c, window_width(n)) })
        }
        Formula::SellersTop if exact => pr_sellers_top(m, n, c).map(wrap),
        Formula::SellersTop => {
            if m < n {
                return Err(Error::Precondition(format!("need m >= n, got m={m} n={n}")));
            }
            Ok(FormulaValue { exact: None, decimal: pr_sellers_top_f64(m, n, c) })
        }
        Formula::E1Lower => {
            let a = crate::money::rational_from_f64(alpha)?;
            if exact {
                pr_e1_lower_small_n(m, n, c, &a).map(wrap)
            } else {
                check_small_n(m, n, c, &a)?;
                Ok(FormulaValue { exact: None, decimal: pr_e1_lower_small_n_f64(m, n, c, alpha) })
            }
        }
    }
}
