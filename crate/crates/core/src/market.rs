//! Realized market profiles, the first-best allocation and GFT accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::{parse_rational, Money, Rational};

/// One realized market: `m` buyer values and `n` seller values, agents
/// identified by position.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile<T = f64> {
    buyers: Vec<T>,
    sellers: Vec<T>,
}

impl<T: Money> Profile<T> {
    pub fn new(buyers: Vec<T>, sellers: Vec<T>) -> Result<Self> {
        if buyers.is_empty() || sellers.is_empty() {
            return Err(Error::InvalidProfile(format!(
                "need at least one buyer and one seller, got m={} n={}",
                buyers.len(),
                sellers.len()
            )));
        }
        for (side, values) in [("buyer", &buyers), ("seller", &sellers)] {
            if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite_value() || v.is_negative()) {
                return Err(Error::InvalidProfile(format!("{side} {i} has value {v:?}; values must be finite and >= 0")));
            }
        }
        Ok(Self { buyers, sellers })
    }

    /// Role-swapped, value-negated market; only used to route buyer trade
    /// reduction through seller trade reduction, so the `>= 0` invariant is waived.
    pub(crate) fn dual(&self) -> Self {
        Self {
            buyers: self.sellers.iter().map(|s| -s.clone()).collect(),
            sellers: self.buyers.iter().map(|b| -b.clone()).collect(),
        }
    }

    pub fn buyers(&self) -> &[T] {
        &self.buyers
    }

    pub fn sellers(&self) -> &[T] {
        &self.sellers
    }

    pub fn m(&self) -> usize {
        self.buyers.len()
    }

    pub fn n(&self) -> usize {
        self.sellers.len()
    }

    /// Copy of the profile with one agent's reported value replaced.
    pub fn with_bid(&self, side: Side, index: usize, bid: T) -> Result<Self> {
        let mut p = self.clone();
        match side {
            Side::Buyer => p.buyers[index] = bid,
            Side::Seller => p.sellers[index] = bid,
        }
        Self::new(p.buyers, p.sellers)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "buyers": self.buyers.iter().map(Money::to_json).collect::<Vec<_>>(),
            "sellers": self.sellers.iter().map(Money::to_json).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buyer,
    Seller,
}

#[derive(Deserialize)]
struct RawProfile {
    buyers: Vec<serde_json::Value>,
    sellers: Vec<serde_json::Value>,
}

impl Profile<f64> {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawProfile = serde_json::from_str(s)?;
        let conv = |vs: Vec<serde_json::Value>| -> Result<Vec<f64>> {
            vs.into_iter()
                .map(|v| match &v {
                    serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| Error::ParseNumber(v.to_string())),
                    serde_json::Value::String(s) => parse_rational(s).map(|r| r.to_f64_lossy()),
                    _ => Err(Error::ParseNumber(v.to_string())),
                })
                .collect()
        };
        Self::new(conv(raw.buyers)?, conv(raw.sellers)?)
    }
}

impl Profile<Rational> {
    /// Reads a profile exactly: JSON number literals are taken digit by digit,
    /// strings may be decimals or `p/q` fractions.
    pub fn from_json_str_exact(s: &str) -> Result<Self> {
        let raw: RawProfile = serde_json::from_str(s)?;
        let conv = |vs: Vec<serde_json::Value>| -> Result<Vec<Rational>> {
            vs.into_iter()
                .map(|v| match &v {
                    serde_json::Value::Number(n) => parse_rational(&n.to_string()),
                    serde_json::Value::String(s) => parse_rational(s),
                    _ => Err(Error::ParseNumber(v.to_string())),
                })
                .collect()
        };
        Self::new(conv(raw.buyers)?, conv(raw.sellers)?)
    }
}

/// Canonical orderings: buyers by descending value, sellers by ascending
/// value, ties broken by lower original index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortedViews {
    pub buyer_order: Vec<usize>,
    pub seller_order: Vec<usize>,
}

pub fn sort_views<T: Money>(p: &Profile<T>) -> SortedViews {
    let mut buyer_order: Vec<usize> = (0..p.m()).collect();
    buyer_order.sort_by(|&a, &b| p.buyers[b].partial_cmp(&p.buyers[a]).expect("finite values"));
    let mut seller_order: Vec<usize> = (0..p.n()).collect();
    seller_order.sort_by(|&a, &b| p.sellers[a].partial_cmp(&p.sellers[b]).expect("finite values"));
    SortedViews { buyer_order, seller_order }
}

impl SortedViews {
    pub fn buyer_values<T: Money>(&self, p: &Profile<T>) -> Vec<T> {
        self.buyer_order.iter().map(|&i| p.buyers[i].clone()).collect()
    }

    pub fn seller_values<T: Money>(&self, p: &Profile<T>) -> Vec<T> {
        self.seller_order.iter().map(|&j| p.sellers[j].clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<T = f64> {
    pub trade_size: usize,
    pub traded_buyers: Vec<usize>,
    pub traded_sellers: Vec<usize>,
    pub gft: T,
}

impl<T: Money> Allocation<T> {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "trade_size": self.trade_size,
            "traded_buyers": self.traded_buyers,
            "traded_sellers": self.traded_sellers,
            "gft": self.gft.to_json(),
        })
    }
}

/// Largest `i` with `b(i) >= s(i)` over descending buyers / ascending sellers.
///
/// `b(i) - s(i)` is nonincreasing in `i`, so this is the length of the
/// prefix on which buyers still cover sellers. Ties count as trades.
#[inline]
pub fn optimal_trade_size<T: PartialOrd>(buyers_desc: &[T], sellers_asc: &[T]) -> usize {
    buyers_desc.iter().zip(sellers_asc).take_while(|(b, s)| b >= s).count()
}

/// GFT of trading the top `k` buyers with the bottom `k` sellers.
#[inline]
pub fn prefix_gft<T: Money>(buyers_desc: &[T], sellers_asc: &[T], k: usize) -> T {
    buyers_desc[..k]
        .iter()
        .zip(&sellers_asc[..k])
        .fold(T::zero(), |acc, (b, s)| acc + b.clone() - s.clone())
}

/// First-best allocation on sorted views; returns `(trade_size, gft)`.
#[inline]
pub fn first_best_sorted<T: Money>(buyers_desc: &[T], sellers_asc: &[T]) -> (usize, T) {
    let r = optimal_trade_size(buyers_desc, sellers_asc);
    (r, prefix_gft(buyers_desc, sellers_asc, r))
}

/// Welfare-maximizing allocation: top `r` buyers trade with bottom `r` sellers.
pub fn first_best<T: Money>(p: &Profile<T>) -> Allocation<T> {
    let views = sort_views(p);
    let b = views.buyer_values(p);
    let s = views.seller_values(p);
    let (r, gft) = first_best_sorted(&b, &s);
    Allocation {
        trade_size: r,
        traded_buyers: views.buyer_order[..r].to_vec(),
        traded_sellers: views.seller_order[..r].to_vec(),
        gft,
    }
}

/// Welfare is the GFT plus the total value of all sellers.
pub fn welfare<T: Money>(p: &Profile<T>, a: &Allocation<T>) -> T {
    p.sellers.iter().fold(a.gft.clone(), |acc, s| acc + s.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::rat;
    use proptest::prelude::*;

    fn exact(xs: &[&str]) -> Vec<Rational> {
        xs.iter().map(|s| parse_rational(s).unwrap()).collect()
    }

    #[test]
    fn sort_view_examples() {
        let p = Profile::new(vec![2.0, 3.0, 2.0], vec![1.0, 1.0, 1.0]).unwrap();
        let v = sort_views(&p);
        assert_eq!(v.buyer_order, vec![1, 0, 2]);
        assert_eq!(v.seller_order, vec![0, 1, 2]);
        let p = Profile::new(vec![3.0, 2.1, 2.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(sort_views(&p).buyer_order, vec![0, 1, 2]);
    }

    #[test]
    fn first_best_figure_one() {
        let orig = Profile::new(exact(&["3", "2.1", "2"]), exact(&["1", "1", "1"])).unwrap();
        let a = first_best(&orig);
        assert_eq!(a.trade_size, 3);
        assert_eq!(a.gft, rat(41, 10));
        assert_eq!(welfare(&orig, &a), rat(71, 10));

        let aug = Profile::new(exact(&["3", "2.3", "2.1", "2"]), exact(&["1", "1", "1", "2.2"])).unwrap();
        let a = first_best(&aug);
        assert_eq!(a.trade_size, 3);
        assert_eq!(a.gft, rat(44, 10));
        assert_eq!(welfare(&aug, &a), rat(96, 10));
    }

    #[test]
    fn no_profitable_trade() {
        let p = Profile::new(vec![0.1], vec![5.0]).unwrap();
        let a = first_best(&p);
        assert_eq!(a.trade_size, 0);
        assert_eq!(a.gft, 0.0);
        assert!(a.traded_buyers.is_empty());
        assert_eq!(welfare(&p, &a), 5.0);
    }

    #[test]
    fn ties_trade() {
        let p = Profile::new(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(first_best(&p).trade_size, 1);
    }

    #[test]
    fn invalid_profiles() {
        assert!(Profile::new(Vec::<f64>::new(), vec![1.0]).is_err());
        assert!(Profile::new(vec![1.0], vec![-1.0]).is_err());
        assert!(Profile::new(vec![f64::INFINITY], vec![1.0]).is_err());
        assert!(Profile::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn json_profiles() {
        let p = Profile::from_json_str(r#"{"buyers":[3,2.1,"2"],"sellers":[1,"1/1",1]}"#).unwrap();
        assert_eq!(p.buyers(), &[3.0, 2.1, 2.0]);
        let q = Profile::from_json_str_exact(r#"{"buyers":[3,2.1,2],"sellers":[1,1,1]}"#).unwrap();
        assert_eq!(q.buyers()[1], rat(21, 10));
        assert!(Profile::from_json_str(r#"{"buyers":[],"sellers":[1]}"#).is_err());
        assert!(Profile::from_json_str(r#"{"buyers":[1]}"#).is_err());
    }

    proptest! {
        #[test]
        fn trade_size_is_maximal(b in prop::collection::vec(0.0f64..5.0, 1..8), s in prop::collection::vec(0.0f64..5.0, 1..8)) {
            let p = Profile::new(b, s).unwrap();
            let a = first_best(&p);
            let v = sort_views(&p);
            let (bd, sa) = (v.buyer_values(&p), v.seller_values(&p));
            let r = a.trade_size;
            prop_assert!(r == p.m().min(p.n()) || bd[r] < sa[r]);
            prop_assert_eq!(a.traded_buyers.len(), r);
            prop_assert_eq!(a.traded_sellers.len(), r);
            let sum: f64 = a.traded_buyers.iter().map(|&i| p.buyers()[i]).sum::<f64>()
                - a.traded_sellers.iter().map(|&j| p.sellers()[j]).sum::<f64>();
            prop_assert!((sum - a.gft).abs() < 1e-9);
        }

        #[test]
        fn adding_agents_never_hurts(b in prop::collection::vec(0.0f64..5.0, 1..7), s in prop::collection::vec(0.0f64..5.0, 1..7), extra in 0.0f64..5.0) {
            let base = first_best(&Profile::new(b.clone(), s.clone()).unwrap()).gft;
            let mut b2 = b.clone();
            b2.push(extra);
            prop_assert!(first_best(&Profile::new(b2, s.clone()).unwrap()).gft >= base - 1e-12);
            let mut s2 = s;
            s2.push(extra);
            prop_assert!(first_best(&Profile::new(b, s2).unwrap()).gft >= base - 1e-12);
        }
    }
}
