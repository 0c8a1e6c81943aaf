//! Trade reduction mechanisms and their incentive / budget checkers.
//!
//! All three mechanisms start from the first-best trade size `r` on the
//! sorted views (`b(1) >= b(2) >= ...`, `s(1) <= s(2) <= ...`) and either keep
//! all `r` trades at a uniform price or drop the marginal trade:
//!
//! | mechanism | keeps `r` trades when            | price           |
//! |-----------|----------------------------------|-----------------|
//! | STR       | `b(r) >= s(r+1)`                 | `s(r+1)`        |
//! | BTR       | `b(r+1) >= s(r)`                 | `b(r+1)`        |
//! | McAfee TR | `s(r) <= (b(r+1)+s(r+1))/2 <= b(r)` | the average  |
//!
//! A missing `(r+1)`-th agent acts as `+inf` on the seller side and `-inf` on
//! the buyer side. In the reduced branch the top `r-1` pairs trade, buyers
//! pay `b(r)` and sellers receive `s(r)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{optimal_trade_size, prefix_gft, sort_views, Allocation, Profile, Side};
use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    /// Seller trade reduction.
    Str,
    /// Buyer trade reduction.
    Btr,
    /// McAfee's trade reduction.
    Tr,
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "str" => Ok(Self::Str),
            "btr" => Ok(Self::Btr),
            "tr" | "mcafee" => Ok(Self::Tr),
            other => Err(Error::Precondition(format!("unknown mechanism `{other}` (expected str, btr or tr)"))),
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Str => "str",
            Self::Btr => "btr",
            Self::Tr => "tr",
        })
    }
}

impl Mechanism {
    pub fn run<T: Money>(self, p: &Profile<T>) -> MechanismOutcome<T> {
        match self {
            Self::Str => str_mechanism(p),
            Self::Btr => btr(p),
            Self::Tr => mcafee_tr(p),
        }
    }

    /// Pricing decision on already sorted views.
    #[inline]
    pub fn price_sorted<T: Money>(self, buyers_desc: &[T], sellers_asc: &[T]) -> Pricing<T> {
        match self {
            Self::Str => str_sorted(buyers_desc, sellers_asc),
            Self::Btr => btr_sorted(buyers_desc, sellers_asc),
            Self::Tr => mcafee_sorted(buyers_desc, sellers_asc),
        }
    }

    /// GFT on sorted views.
    #[inline]
    pub fn gft_sorted<T: Money>(self, buyers_desc: &[T], sellers_asc: &[T]) -> T {
        let pricing = self.price_sorted(buyers_desc, sellers_asc);
        prefix_gft(buyers_desc, sellers_asc, pricing.trades)
    }
}

/// Trades and prices chosen by a mechanism on sorted views.
#[derive(Debug, Clone, PartialEq)]
pub struct Pricing<T> {
    /// First-best trade size `r`.
    pub efficient_size: usize,
    /// Number of pairs that actually trade (`r` or `r - 1`).
    pub trades: usize,
    pub buyer_price: Option<T>,
    pub seller_price: Option<T>,
    pub reduced: bool,
}

impl<T: Money> Pricing<T> {
    fn none() -> Self {
        Self { efficient_size: 0, trades: 0, buyer_price: None, seller_price: None, reduced: false }
    }

    fn uniform(r: usize, price: T) -> Self {
        Self { efficient_size: r, trades: r, buyer_price: Some(price.clone()), seller_price: Some(price), reduced: false }
    }

    fn reduce(r: usize, buyers_desc: &[T], sellers_asc: &[T]) -> Self {
        Self {
            efficient_size: r,
            trades: r - 1,
            buyer_price: Some(buyers_desc[r - 1].clone()),
            seller_price: Some(sellers_asc[r - 1].clone()),
            reduced: true,
        }
    }
}

#[inline]
pub fn str_sorted<T: Money>(buyers_desc: &[T], sellers_asc: &[T]) -> Pricing<T> {
    let r = optimal_trade_size(buyers_desc, sellers_asc);
    if r == 0 {
        return Pricing::none();
    }
    match sellers_asc.get(r) {
        Some(next) if buyers_desc[r - 1] >= *next => Pricing::uniform(r, next.clone()),
        _ => Pricing::reduce(r, buyers_desc, sellers_asc),
    }
}

#[inline]
pub fn btr_sorted<T: Money>(buyers_desc: &[T], sellers_asc: &[T]) -> Pricing<T> {
    let r = optimal_trade_size(buyers_desc, sellers_asc);
    if r == 0 {
        return Pricing::none();
    }
    match buyers_desc.get(r) {
        Some(next) if *next >= sellers_asc[r - 1] => Pricing::uniform(r, next.clone()),
        _ => Pricing::reduce(r, buyers_desc, sellers_asc),
    }
}

#[inline]
pub fn mcafee_sorted<T: Money>(buyers_desc: &[T], sellers_asc: &[T]) -> Pricing<T> {
    let r = optimal_trade_size(buyers_desc, sellers_asc);
    if r == 0 {
        return Pricing::none();
    }
    if let (Some(b_next), Some(s_next)) = (buyers_desc.get(r), sellers_asc.get(r)) {
        let phi = (b_next.clone() + s_next.clone()).half();
        if sellers_asc[r - 1] <= phi && phi <= buyers_desc[r - 1] {
            return Pricing::uniform(r, phi);
        }
    }
    Pricing::reduce(r, buyers_desc, sellers_asc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismOutcome<T = f64> {
    pub allocation: Allocation<T>,
    /// Indexed by buyer; zero for buyers that do not trade.
    pub buyer_payments: Vec<T>,
    /// Indexed by seller; zero for sellers that do not trade.
    pub seller_receipts: Vec<T>,
    /// The marginal efficient trade was dropped.
    pub reduced: bool,
}

impl<T: Money> MechanismOutcome<T> {
    pub fn gft(&self) -> &T {
        &self.allocation.gft
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "allocation": self.allocation.to_json(),
            "buyer_payments": self.buyer_payments.iter().map(Money::to_json).collect::<Vec<_>>(),
            "seller_receipts": self.seller_receipts.iter().map(Money::to_json).collect::<Vec<_>>(),
            "reduced": self.reduced,
        })
    }

    fn buyer_traded(&self, i: usize) -> bool {
        self.allocation.traded_buyers.contains(&i)
    }

    fn seller_traded(&self, j: usize) -> bool {
        self.allocation.traded_sellers.contains(&j)
    }
}

fn outcome_from_pricing<T: Money>(p: &Profile<T>, price: impl FnOnce(&[T], &[T]) -> Pricing<T>) -> MechanismOutcome<T> {
    let views = sort_views(p);
    let b = views.buyer_values(p);
    let s = views.seller_values(p);
    let pricing = price(&b, &s);
    let k = pricing.trades;
    let traded_buyers = views.buyer_order[..k].to_vec();
    let traded_sellers = views.seller_order[..k].to_vec();
    let mut buyer_payments = vec![T::zero(); p.m()];
    let mut seller_receipts = vec![T::zero(); p.n()];
    if let Some(bp) = &pricing.buyer_price {
        traded_buyers.iter().for_each(|&i| buyer_payments[i] = bp.clone());
    }
    if let Some(sp) = &pricing.seller_price {
        traded_sellers.iter().for_each(|&j| seller_receipts[j] = sp.clone());
    }
    MechanismOutcome {
        allocation: Allocation { trade_size: k, traded_buyers, traded_sellers, gft: prefix_gft(&b, &s, k) },
        buyer_payments,
        seller_receipts,
        reduced: pricing.reduced,
    }
}

/// Seller trade reduction.
pub fn str_mechanism<T: Money>(p: &Profile<T>) -> MechanismOutcome<T> {
    outcome_from_pricing(p, str_sorted)
}

/// McAfee's trade reduction.
pub fn mcafee_tr<T: Money>(p: &Profile<T>) -> MechanismOutcome<T> {
    outcome_from_pricing(p, mcafee_sorted)
}

/// Buyer trade reduction, computed as seller trade reduction on the dual
/// market (roles swapped, values negated) and mapped back.
pub fn btr<T: Money>(p: &Profile<T>) -> MechanismOutcome<T> {
    let dual = str_mechanism(&p.dual());
    let mut buyer_payments = vec![T::zero(); p.m()];
    let mut seller_receipts = vec![T::zero(); p.n()];
    // dual buyers are the original sellers and pay what those sellers receive, negated
    for &j in &dual.allocation.traded_buyers {
        seller_receipts[j] = -dual.buyer_payments[j].clone();
    }
    for &i in &dual.allocation.traded_sellers {
        buyer_payments[i] = -dual.seller_receipts[i].clone();
    }
    // same summation order as the other mechanisms, so float results agree bitwise
    let views = sort_views(p);
    let gft = prefix_gft(&views.buyer_values(p), &views.seller_values(p), dual.allocation.trade_size);
    MechanismOutcome {
        allocation: Allocation {
            trade_size: dual.allocation.trade_size,
            traded_buyers: dual.allocation.traded_sellers,
            traded_sellers: dual.allocation.traded_buyers,
            gft,
        },
        buyer_payments,
        seller_receipts,
        reduced: dual.reduced,
    }
}

/// Result of an IR or WBB check with the offending agents spelled out.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PropertyCheck {
    pub violations: Vec<String>,
}

impl PropertyCheck {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Individual rationality, including zero transfers for agents who do not trade.
pub fn check_ir<T: Money>(o: &MechanismOutcome<T>, p: &Profile<T>) -> PropertyCheck {
    let mut violations = Vec::new();
    for (i, (pay, value)) in o.buyer_payments.iter().zip(p.buyers()).enumerate() {
        if o.buyer_traded(i) {
            if pay > value {
                violations.push(format!("buyer {i} pays {pay:?} above value {value:?}"));
            }
        } else if !pay.is_zero() {
            violations.push(format!("untraded buyer {i} pays {pay:?}"));
        }
    }
    for (j, (rec, value)) in o.seller_receipts.iter().zip(p.sellers()).enumerate() {
        if o.seller_traded(j) {
            if rec < value {
                violations.push(format!("seller {j} receives {rec:?} below value {value:?}"));
            }
        } else if !rec.is_zero() {
            violations.push(format!("untraded seller {j} receives {rec:?}"));
        }
    }
    PropertyCheck { violations }
}

/// Weak budget balance: buyers pay at least what sellers receive.
pub fn check_wbb<T: Money>(o: &MechanismOutcome<T>) -> PropertyCheck {
    let paid = o.buyer_payments.iter().fold(T::zero(), |a, x| a + x.clone());
    let received = o.seller_receipts.iter().fold(T::zero(), |a, x| a + x.clone());
    let mut violations = Vec::new();
    if paid < received {
        violations.push(format!("deficit: buyers pay {paid:?}, sellers receive {received:?}"));
    }
    PropertyCheck { violations }
}

/// A profitable unilateral misreport.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DsicViolation {
    pub side: Side,
    pub index: usize,
    pub bid: f64,
    pub truthful_utility: f64,
    pub deviating_utility: f64,
}

pub const DSIC_TOLERANCE: f64 = 1e-9;
const DSIC_PERTURBATION: f64 = 1e-3;

fn utility(o: &MechanismOutcome<f64>, side: Side, index: usize, value: f64) -> f64 {
    match side {
        Side::Buyer if o.buyer_traded(index) => value - o.buyer_payments[index],
        Side::Seller if o.seller_traded(index) => o.seller_receipts[index] - value,
        _ => 0.0,
    }
}

/// Deviation grid: every reported value, midpoints of consecutive values and
/// `+-1e-3` perturbations of both, restricted to nonnegative bids.
pub fn dsic_grid(p: &Profile<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = p.buyers().iter().chain(p.sellers()).copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut grid = values.clone();
    grid.extend(values.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let anchors = grid.clone();
    for x in anchors {
        grid.push(x - DSIC_PERTURBATION);
        grid.push(x + DSIC_PERTURBATION);
    }
    grid.retain(|&x| x >= 0.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Brute-force dominant-strategy check: no agent gains more than
/// [`DSIC_TOLERANCE`] by unilaterally reporting any bid in `bid_grid`.
pub fn check_dsic_with<F>(mechanism: F, p: &Profile<f64>, bid_grid: &[f64]) -> Result<(), DsicViolation>
where
    F: Fn(&Profile<f64>) -> MechanismOutcome<f64>,
{
    let truthful = mechanism(p);
    let agents = (0..p.m()).map(|i| (Side::Buyer, i, p.buyers()[i])).chain((0..p.n()).map(|j| (Side::Seller, j, p.sellers()[j])));
    for (side, index, value) in agents {
        let honest = utility(&truthful, side, index, value);
        for &bid in bid_grid {
            let Ok(deviated) = p.with_bid(side, index, bid) else { continue };
            let lie = utility(&mechanism(&deviated), side, index, value);
            if lie > honest + DSIC_TOLERANCE {
                return Err(DsicViolation { side, index, bid, truthful_utility: honest, deviating_utility: lie });
            }
        }
    }
    Ok(())
}

pub fn check_dsic(mechanism: Mechanism, p: &Profile<f64>, bid_grid: &[f64]) -> Result<(), DsicViolation> {
    check_dsic_with(|q| mechanism.run(q), p, bid_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::first_best;
    use crate::money::{parse_rational, rat, Rational};
    use proptest::prelude::*;

    fn exact(b: &[&str], s: &[&str]) -> Profile<Rational> {
        let conv = |xs: &[&str]| xs.iter().map(|x| parse_rational(x).unwrap()).collect();
        Profile::new(conv(b), conv(s)).unwrap()
    }

    #[test]
    fn str_figure_one_augmented() {
        let p = exact(&["3", "2.3", "2.1", "2"], &["1", "1", "1", "2.2"]);
        let o = str_mechanism(&p);
        assert_eq!(o.allocation.trade_size, 2);
        assert_eq!(o.allocation.gft, rat(33, 10));
        assert!(o.reduced);
        assert_eq!(o.allocation.traded_buyers, vec![0, 1]);
        for &i in &o.allocation.traded_buyers {
            assert_eq!(o.buyer_payments[i], rat(21, 10));
        }
        for &j in &o.allocation.traded_sellers {
            assert_eq!(o.seller_receipts[j], rat(1, 1));
        }
        assert!(check_wbb(&o).passed());
        assert!(check_ir(&o, &p).passed());
    }

    #[test]
    fn str_intro_example() {
        // b = [3, 2+e, 2, 2+3e], s = [1, 1, 1, 2+2e] with e = 1/10
        let p = exact(&["3", "2.1", "2", "2.3"], &["1", "1", "1", "2.2"]);
        assert_eq!(str_mechanism(&p).allocation.gft, rat(33, 10));
    }

    #[test]
    fn bilateral_trade_is_always_reduced() {
        let p = Profile::new(vec![2.0], vec![1.0]).unwrap();
        for m in [Mechanism::Str, Mechanism::Btr, Mechanism::Tr] {
            let o = m.run(&p);
            assert_eq!(o.allocation.trade_size, 0, "{m}");
            assert_eq!(o.allocation.gft, 0.0);
            assert!(o.reduced);
            assert_eq!(o.buyer_payments, vec![0.0]);
            assert_eq!(o.seller_receipts, vec![0.0]);
        }
    }

    #[test]
    fn btr_prices_with_next_buyer() {
        let p = Profile::new(vec![3.0, 2.0], vec![1.0]).unwrap();
        let o = btr(&p);
        assert_eq!(o.allocation.trade_size, 1);
        assert_eq!(o.allocation.gft, 2.0);
        assert_eq!(o.allocation.traded_buyers, vec![0]);
        assert_eq!(o.buyer_payments, vec![2.0, 0.0]);
        assert_eq!(o.seller_receipts, vec![2.0]);
        assert!(!o.reduced);
    }

    #[test]
    fn mcafee_appendix_e_sketch() {
        let p = Profile::new(vec![100.0, 0.0], vec![1.0, 1.0]).unwrap();
        let o = mcafee_tr(&p);
        assert_eq!(o.allocation.trade_size, 0);
        assert_eq!(o.allocation.gft, 0.0);
        assert!(o.reduced);
    }

    #[test]
    fn mcafee_keeps_trades_at_feasible_average() {
        let p = Profile::new(vec![5.0, 4.0, 1.0], vec![0.0, 2.0, 3.0]).unwrap();
        // r = 2, phi = (1 + 3) / 2 = 2 lies in [s(2), b(2)] = [2, 4]
        let o = mcafee_tr(&p);
        assert_eq!(o.allocation.trade_size, 2);
        assert!(!o.reduced);
        assert_eq!(o.buyer_payments, vec![2.0, 2.0, 0.0]);
        assert_eq!(o.seller_receipts, vec![2.0, 2.0, 0.0]);
    }

    fn comparison_instance(n: usize) -> Profile<Rational> {
        // n buyers at 2 and 2c = 4 at 0.9, plus c = 2 new buyers at 0;
        // n-1 sellers at 1, one at 1 + 1/20, plus new sellers at 0.8 and 100.
        let mut b = vec!["2"; n];
        b.extend(["0.9"; 4]);
        b.extend(["0"; 2]);
        let mut s = vec!["1"; n - 1];
        s.extend(["1.05", "0.8", "100"]);
        exact(&b, &s)
    }

    #[test]
    fn appendix_comparison_family() {
        for n in [5i64, 10] {
            let p = comparison_instance(n as usize);
            assert_eq!(mcafee_tr(&p).allocation.gft, Rational::from_integer(n.into()) - rat(4, 5));
            assert_eq!(str_mechanism(&p).allocation.gft, Rational::from_integer(n.into()) + rat(1, 5));
        }
    }

    #[test]
    fn ir_detects_overcharge() {
        let p = Profile::new(vec![2.0], vec![1.0]).unwrap();
        let o = MechanismOutcome {
            allocation: Allocation { trade_size: 1, traded_buyers: vec![0], traded_sellers: vec![0], gft: 1.0 },
            buyer_payments: vec![2.5],
            seller_receipts: vec![1.5],
            reduced: false,
        };
        let c = check_ir(&o, &p);
        assert!(!c.passed());
        assert!(c.violations[0].contains("buyer 0"));
        let untraded = MechanismOutcome {
            allocation: Allocation { trade_size: 0, traded_buyers: vec![], traded_sellers: vec![], gft: 0.0 },
            buyer_payments: vec![0.1],
            seller_receipts: vec![0.0],
            reduced: false,
        };
        assert!(!check_ir(&untraded, &p).passed());
        let deficit = MechanismOutcome { buyer_payments: vec![1.0], seller_receipts: vec![1.5], ..o };
        assert!(!check_wbb(&deficit).passed());
    }

    #[test]
    fn broken_str_fails_dsic() {
        // Prices the r trades at s(r) instead of s(r+1): the marginal seller
        // gains by overbidding up to the next seller's value.
        let broken = |p: &Profile<f64>| {
            outcome_from_pricing(p, |b, s| {
                let r = optimal_trade_size(b, s);
                if r == 0 {
                    return Pricing::none();
                }
                match s.get(r) {
                    Some(next) if b[r - 1] >= *next => Pricing::uniform(r, s[r - 1]),
                    _ => Pricing::reduce(r, b, s),
                }
            })
        };
        let p = Profile::new(vec![3.0, 2.5, 0.5], vec![0.5, 1.0, 2.0]).unwrap();
        let grid = dsic_grid(&p);
        assert!(check_dsic(Mechanism::Str, &p, &grid).is_ok());
        let v = check_dsic_with(broken, &p, &grid).unwrap_err();
        assert_eq!(v.side, Side::Seller);
    }

    #[test]
    fn dsic_grid_contents() {
        let p = Profile::new(vec![1.0], vec![0.0]).unwrap();
        let g = dsic_grid(&p);
        assert_eq!(g, vec![0.0, 0.001, 0.499, 0.5, 0.501, 0.999, 1.0, 1.001]);
    }

    fn profile_strategy() -> impl Strategy<Value = Profile<f64>> {
        (prop::collection::vec(0.0f64..3.0, 1..8), prop::collection::vec(0.0f64..3.0, 1..8))
            .prop_map(|(b, s)| Profile::new(b, s).unwrap())
    }

    proptest! {
        #[test]
        fn btr_duality_and_direct_form_agree(p in profile_strategy()) {
            let via_dual = btr(&p);
            let direct = outcome_from_pricing(&p, btr_sorted);
            prop_assert_eq!(via_dual, direct);
        }

        #[test]
        fn str_loses_at_most_the_marginal_trade(p in profile_strategy()) {
            let fb = first_best(&p);
            let o = str_mechanism(&p);
            let lost = fb.trade_size - o.allocation.trade_size;
            prop_assert!(lost <= 1);
            prop_assert_eq!(lost == 1, o.reduced);
            let v = sort_views(&p);
            let (b, s) = (v.buyer_values(&p), v.seller_values(&p));
            let r = fb.trade_size;
            let expected = if o.reduced { fb.gft - (b[r - 1] - s[r - 1]) } else { fb.gft };
            prop_assert!((o.allocation.gft - expected).abs() < 1e-9);
        }

        #[test]
        fn ir_and_wbb_hold(p in profile_strategy()) {
            for m in [Mechanism::Str, Mechanism::Btr, Mechanism::Tr] {
                let o = m.run(&p);
                prop_assert!(check_ir(&o, &p).passed(), "{} {:?}", m, check_ir(&o, &p));
                prop_assert!(check_wbb(&o).passed(), "{}", m);
            }
        }
    }
}
