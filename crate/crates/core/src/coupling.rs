//! Quantile couplings of an original market with its augmentation.
//!
//! *Shared quantiles* (FSD case): draw `N = m + n + 2c` uniform quantiles,
//! sort them descending and hand them to a uniformly random arrangement of
//! the labels `BO^m BN^c SO^n SN^c`. Positions are 1-based, so position 1
//! carries the largest quantile.
//!
//! *Independent quantiles* (general case): every agent draws its own
//! quantile; buyers are kept descending and sellers ascending.
//!
//! In both cases the original market consists of the `BO`/`SO` agents and the
//! augmented market of everybody, so both markets share one source of
//! randomness.

use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::QuantileDistribution;
use crate::error::{Error, Result};
use crate::market::Profile;
use crate::rng::open_unit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "BO")]
    BuyerOld,
    #[serde(rename = "BN")]
    BuyerNew,
    #[serde(rename = "SO")]
    SellerOld,
    #[serde(rename = "SN")]
    SellerNew,
}

impl Label {
    pub fn is_buyer(self) -> bool {
        matches!(self, Self::BuyerOld | Self::BuyerNew)
    }

    pub fn is_old(self) -> bool {
        matches!(self, Self::BuyerOld | Self::SellerOld)
    }
}

/// `N` quantiles with `1 > q[0] >= q[1] >= ... >= q[N-1] > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuantileVector {
    q: Vec<f64>,
}

impl QuantileVector {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if let Some(x) = q.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
            return Err(Error::QuantileDomain(*x));
        }
        if q.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidAssignment("quantile vector must be sorted descending".into()));
        }
        Ok(Self { q })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// A label per position with exactly `m` BO, `n` SO, `c` BN and `c` SN.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    labels: Vec<Label>,
    m: usize,
    n: usize,
    c: usize,
}

impl Assignment {
    pub fn new(labels: Vec<Label>, m: usize, n: usize, c: usize) -> Result<Self> {
        let count = |l: Label| labels.iter().filter(|&&x| x == l).count();
        let got = [count(Label::BuyerOld), count(Label::SellerOld), count(Label::BuyerNew), count(Label::SellerNew)];
        if got != [m, n, c, c] {
            return Err(Error::InvalidAssignment(format!(
                "label counts (BO, SO, BN, SN) = {got:?}, expected ({m}, {n}, {c}, {c})"
            )));
        }
        Ok(Self { labels, m, n, c })
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.m, self.n, self.c)
    }
}

/// The multiset `BO^m SO^n BN^c SN^c` in a fixed canonical order.
pub fn label_multiset(m: usize, n: usize, c: usize) -> Vec<Label> {
    let mut labels = Vec::with_capacity(m + n + 2 * c);
    labels.extend(std::iter::repeat_n(Label::BuyerOld, m));
    labels.extend(std::iter::repeat_n(Label::SellerOld, n));
    labels.extend(std::iter::repeat_n(Label::BuyerNew, c));
    labels.extend(std::iter::repeat_n(Label::SellerNew, c));
    labels
}

/// Allocation-free variant of [`sample_coupled`]; `labels` must already hold
/// the label multiset (any order), `q` is overwritten.
pub fn sample_coupled_into<R: Rng + ?Sized>(rng: &mut R, q: &mut Vec<f64>, labels: &mut [Label]) {
    let total = labels.len();
    q.clear();
    q.extend((0..total).map(|_| open_unit(rng)));
    // Tied quantiles are bitwise equal and carry no identity until labels are
    // attached, so an unstable sort yields the same vector as draw-order ties.
    q.sort_unstable_by(|a, b| b.total_cmp(a));
    labels.shuffle(rng);
}

/// Sorted iid `U(0,1)` quantiles and a uniformly random label arrangement.
pub fn sample_coupled<R: Rng + ?Sized>(m: usize, n: usize, c: usize, rng: &mut R) -> (QuantileVector, Assignment) {
    let mut q = Vec::with_capacity(m + n + 2 * c);
    let mut labels = label_multiset(m, n, c);
    sample_coupled_into(rng, &mut q, &mut labels);
    (QuantileVector { q }, Assignment { labels, m, n, c })
}

/// Sorted value views of the original and augmented markets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarketPair {
    pub original_buyers: Vec<f64>,
    pub original_sellers: Vec<f64>,
    pub augmented_buyers: Vec<f64>,
    pub augmented_sellers: Vec<f64>,
}

impl MarketPair {
    fn clear(&mut self) {
        self.original_buyers.clear();
        self.original_sellers.clear();
        self.augmented_buyers.clear();
        self.augmented_sellers.clear();
    }
}

/// Fills `out` with buyers descending and sellers ascending. Quantile
/// functions are nondecreasing, so walking positions in order already yields
/// sorted values and no further sort is needed.
pub fn realize_sorted_into(q: &[f64], labels: &[Label], fb: &QuantileDistribution, fs: &QuantileDistribution, out: &mut MarketPair) {
    out.clear();
    for (&x, &l) in q.iter().zip(labels) {
        if l.is_buyer() {
            let v = fb.quantile_unchecked(x);
            out.augmented_buyers.push(v);
            if l.is_old() {
                out.original_buyers.push(v);
            }
        }
    }
    for (&x, &l) in q.iter().zip(labels).rev() {
        if !l.is_buyer() {
            let v = fs.quantile_unchecked(x);
            out.augmented_sellers.push(v);
            if l.is_old() {
                out.original_sellers.push(v);
            }
        }
    }
}

/// Original and augmented profiles. Agents appear in position order, old
/// agents first in the augmented profile.
pub fn realize(
    q: &QuantileVector,
    a: &Assignment,
    fb: &QuantileDistribution,
    fs: &QuantileDistribution,
) -> Result<(Profile, Profile)> {
    if q.len() != a.len() {
        return Err(Error::InvalidAssignment(format!("{} quantiles but {} labels", q.len(), a.len())));
    }
    let value = |label: Label| {
        q.as_slice()
            .iter()
            .zip(a.labels())
            .filter(move |(_, &l)| l == label)
            .map(move |(&x, _)| if label.is_buyer() { fb.quantile_unchecked(x) } else { fs.quantile_unchecked(x) })
    };
    let bo: Vec<f64> = value(Label::BuyerOld).collect();
    let so: Vec<f64> = value(Label::SellerOld).collect();
    let original = Profile::new(bo.clone(), so.clone())?;
    let augmented = Profile::new(
        bo.into_iter().chain(value(Label::BuyerNew)).collect(),
        so.into_iter().chain(value(Label::SellerNew)).collect(),
    )?;
    Ok((original, augmented))
}

/// Index windows over 1-based positions: `I1 = [1, p]`, `I2 = [p+1, 2p]`,
/// `J1 = [N-p+1, N]`, `J2 = [N-2p+1, N-p]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IndexSets {
    pub total: usize,
    pub p: usize,
    pub i1: RangeInclusive<usize>,
    pub i2: RangeInclusive<usize>,
    pub j1: RangeInclusive<usize>,
    pub j2: RangeInclusive<usize>,
}

impl IndexSets {
    /// Windows of width `p = ceil(n / 10)` for a market with `N = m + n + 2c`.
    pub fn for_market(m: usize, n: usize, c: usize) -> Result<Self> {
        if n < 20 {
            return Err(Error::Precondition(format!("index windows need n >= 20, got n={n}")));
        }
        Self::with_window(m + n + 2 * c, n.div_ceil(10))
    }

    /// Explicit window width; the four windows must fit disjointly.
    pub fn with_window(total: usize, p: usize) -> Result<Self> {
        if p == 0 || 4 * p > total {
            return Err(Error::Precondition(format!("window width p={p} does not give four disjoint windows in N={total}")));
        }
        Ok(Self {
            total,
            p,
            i1: 1..=p,
            i2: p + 1..=2 * p,
            j1: total - p + 1..=total,
            j2: total - 2 * p + 1..=total - p,
        })
    }
}

fn count_in(labels: &[Label], window: &RangeInclusive<usize>, label: Label) -> usize {
    labels[window.start() - 1..*window.end()].iter().filter(|&&l| l == label).count()
}

/// `|I1 ∩ BN| >= 2`, `|I2 ∩ BO| >= 1`, `|J1 ∩ SN| >= 2`, `|J2 ∩ SO| >= 1`.
pub fn event_e1_fsd(labels: &[Label], s: &IndexSets) -> bool {
    debug_assert_eq!(labels.len(), s.total);
    count_in(labels, &s.i1, Label::BuyerNew) >= 2
        && count_in(labels, &s.i2, Label::BuyerOld) >= 1
        && count_in(labels, &s.j1, Label::SellerNew) >= 2
        && count_in(labels, &s.j2, Label::SellerOld) >= 1
}

/// Every new seller sits among the first `2n + 2c` positions.
pub fn sellers_in_top(labels: &[Label], n: usize, c: usize) -> bool {
    labels[(2 * n + 2 * c).min(labels.len())..].iter().all(|&l| l != Label::SellerNew)
}

/// Not E1, and every new seller sits among the first `2n + 2c` positions.
pub fn event_e2_fsd(labels: &[Label], s: &IndexSets, n: usize, c: usize) -> bool {
    !event_e1_fsd(labels, s) && sellers_in_top(labels, n, c)
}

/// Probability-width intervals `I_k = (1-kp, 1-(k-1)p]`, `J_k = [(k-1)p, kp)`
/// with `p = r n / (100 m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalScheme {
    pub r: f64,
    pub p: f64,
}

impl IntervalScheme {
    pub fn new(r: f64, m: usize, n: usize) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Precondition(format!("overlap r must lie in (0, 1], got {r}")));
        }
        if m == 0 {
            return Err(Error::Precondition("need m >= 1".into()));
        }
        Ok(Self { r, p: r * n as f64 / (100.0 * m as f64) })
    }

    pub fn in_i(&self, k: u32, q: f64) -> bool {
        let k = f64::from(k);
        q > 1.0 - k * self.p && q <= 1.0 - (k - 1.0) * self.p
    }

    pub fn in_j(&self, k: u32, q: f64) -> bool {
        let k = f64::from(k);
        q >= (k - 1.0) * self.p && q < k * self.p
    }

    pub fn in_i_upto(&self, k: u32, q: f64) -> bool {
        q > 1.0 - f64::from(k) * self.p
    }

    pub fn in_j_upto(&self, k: u32, q: f64) -> bool {
        q < f64::from(k) * self.p
    }
}

/// Independently drawn quantiles, buyers descending and sellers ascending.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledQuantiles {
    pub buyers_old: Vec<f64>,
    pub buyers_new: Vec<f64>,
    pub sellers_old: Vec<f64>,
    pub sellers_new: Vec<f64>,
}

impl LabeledQuantiles {
    pub fn new(mut buyers_old: Vec<f64>, mut buyers_new: Vec<f64>, mut sellers_old: Vec<f64>, mut sellers_new: Vec<f64>) -> Result<Self> {
        for q in buyers_old.iter().chain(&buyers_new).chain(&sellers_old).chain(&sellers_new) {
            if !(*q > 0.0 && *q < 1.0) {
                return Err(Error::QuantileDomain(*q));
            }
        }
        buyers_old.sort_by(|a, b| b.total_cmp(a));
        buyers_new.sort_by(|a, b| b.total_cmp(a));
        sellers_old.sort_by(f64::total_cmp);
        sellers_new.sort_by(f64::total_cmp);
        Ok(Self { buyers_old, buyers_new, sellers_old, sellers_new })
    }
}

pub fn sample_independent_into<R: Rng + ?Sized>(m: usize, n: usize, c: usize, rng: &mut R, out: &mut LabeledQuantiles) {
    let mut fill = |v: &mut Vec<f64>, len: usize, descending: bool| {
        v.clear();
        v.extend((0..len).map(|_| open_unit(rng)));
        if descending {
            v.sort_unstable_by(|a, b| b.total_cmp(a));
        } else {
            v.sort_unstable_by(f64::total_cmp);
        }
    };
    fill(&mut out.buyers_old, m, true);
    fill(&mut out.buyers_new, c, true);
    fill(&mut out.sellers_old, n, false);
    fill(&mut out.sellers_new, c, false);
}

pub fn sample_independent<R: Rng + ?Sized>(m: usize, n: usize, c: usize, rng: &mut R) -> LabeledQuantiles {
    let mut out = LabeledQuantiles::default();
    sample_independent_into(m, n, c, rng, &mut out);
    out
}

fn merge_by<F: Fn(f64, f64) -> bool>(a: &[f64], b: &[f64], first: F, out: &mut Vec<f64>) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if first(a[i], b[j]) {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

/// Sorted value views for independently drawn quantiles.
pub fn realize_independent_into(lq: &LabeledQuantiles, fb: &QuantileDistribution, fs: &QuantileDistribution, out: &mut MarketPair) {
    out.clear();
    out.original_buyers.extend(lq.buyers_old.iter().map(|&q| fb.quantile_unchecked(q)));
    out.original_sellers.extend(lq.sellers_old.iter().map(|&q| fs.quantile_unchecked(q)));
    let new_buyers: Vec<f64> = lq.buyers_new.iter().map(|&q| fb.quantile_unchecked(q)).collect();
    let new_sellers: Vec<f64> = lq.sellers_new.iter().map(|&q| fs.quantile_unchecked(q)).collect();
    merge_by(&out.original_buyers, &new_buyers, |a, b| a >= b, &mut out.augmented_buyers);
    merge_by(&out.original_sellers, &new_sellers, |a, b| a <= b, &mut out.augmented_sellers);
}

/// `|I1 ∩ BN| >= 2`, `|I2 ∩ BO| >= 1`, `|J1 ∩ SN| >= 2`, `|J2 ∩ SO| >= 1`
/// with probability-width intervals.
pub fn event_e1_cont(lq: &LabeledQuantiles, s: &IntervalScheme) -> bool {
    let count = |v: &[f64], pred: &dyn Fn(f64) -> bool| v.iter().filter(|&&q| pred(q)).count();
    count(&lq.buyers_new, &|q| s.in_i(1, q)) >= 2
        && count(&lq.buyers_old, &|q| s.in_i(2, q)) >= 1
        && count(&lq.sellers_new, &|q| s.in_j(1, q)) >= 2
        && count(&lq.sellers_old, &|q| s.in_j(2, q)) >= 1
}

/// Not E1, and either every new seller has quantile above `r/2` or fewer than
/// `n + c` original buyers have quantile above `1 - r/2`.
pub fn event_e2_cont(lq: &LabeledQuantiles, s: &IntervalScheme, n: usize, c: usize) -> bool {
    if event_e1_cont(lq, s) {
        return false;
    }
    let sellers_high = lq.sellers_new.iter().all(|&q| q > s.r / 2.0);
    let top_buyers = lq.buyers_old.iter().filter(|&&q| q > 1.0 - s.r / 2.0).count();
    sellers_high || top_buyers < n + c
}

/// Occupancy concentration: at most `4pm` original buyers in `I_{<=2}` and
/// original sellers in `J_{<=2}`; at least `rn/4` original buyers above
/// `1 - r/2` and original sellers below `r/2`.
pub fn event_e3_cont(lq: &LabeledQuantiles, s: &IntervalScheme, m: usize, n: usize) -> bool {
    let cap = 4.0 * s.p * m as f64;
    let floor = s.r * n as f64 / 4.0;
    let count = |v: &[f64], pred: &dyn Fn(f64) -> bool| v.iter().filter(|&&q| pred(q)).count() as f64;
    count(&lq.buyers_old, &|q| s.in_i_upto(2, q)) <= cap
        && count(&lq.buyers_old, &|q| q > 1.0 - s.r / 2.0) >= floor
        && count(&lq.sellers_old, &|q| s.in_j_upto(2, q)) <= cap
        && count(&lq.sellers_old, &|q| q < s.r / 2.0) >= floor
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::first_best;
    use crate::rng::trial_rng;
    use statrs::distribution::{Beta, Binomial, ChiSquared, ContinuousCDF, Discrete};
    use std::collections::HashMap;

    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        ks(&mut xs, |x| x)
    }

    fn ks(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn coupled_marginals_are_uniform() {
        let mut per_label: HashMap<Label, Vec<f64>> = HashMap::new();
        for t in 0..10_000 {
            let mut rng = trial_rng(11, t);
            let (q, a) = sample_coupled(3, 2, 1, &mut rng);
            assert_eq!(a.counts(), (3, 2, 1));
            // one uniformly chosen agent per label class keeps the sample iid
            for label in [Label::BuyerOld, Label::SellerOld, Label::BuyerNew, Label::SellerNew] {
                let slots: Vec<usize> = (0..a.len()).filter(|&i| a.labels()[i] == label).collect();
                let pos = slots[rng.random_range(0..slots.len())];
                per_label.entry(label).or_default().push(q.as_slice()[pos]);
            }
        }
        for (label, xs) in per_label {
            let d = ks_uniform(xs);
            assert!(d <= 0.02, "{label:?}: KS {d}");
        }
    }

    #[test]
    fn label_orders_are_uniform() {
        let trials = 100_000u64;
        let mut counts: HashMap<Vec<Label>, u64> = HashMap::new();
        let mut rng = trial_rng(5, 0);
        for _ in 0..trials {
            let (_, a) = sample_coupled(1, 1, 1, &mut rng);
            *counts.entry(a.labels().to_vec()).or_default() += 1;
        }
        assert_eq!(counts.len(), 24);
        let expected = trials as f64 / 24.0;
        let sigma = (trials as f64 * (1.0 / 24.0) * (23.0 / 24.0)).sqrt();
        let mut chi2 = 0.0;
        for &k in counts.values() {
            assert!((k as f64 - expected).abs() <= 4.0 * sigma);
            chi2 += (k as f64 - expected).powi(2) / expected;
        }
        let critical = ChiSquared::new(23.0).unwrap().inverse_cdf(1.0 - 1e-6);
        assert!(chi2 < critical, "chi2 {chi2} vs {critical}");
    }

    #[test]
    fn realize_identity_and_inclusion() {
        let u = QuantileDistribution::uniform(0.0, 1.0).unwrap();
        let mut rng = trial_rng(3, 1);
        for _ in 0..200 {
            let (q, a) = sample_coupled(6, 4, 2, &mut rng);
            let (orig, aug) = realize(&q, &a, &u, &u).unwrap();
            for (&x, &l) in q.as_slice().iter().zip(a.labels()) {
                let vals = if l.is_buyer() { aug.buyers() } else { aug.sellers() };
                assert!(vals.contains(&x));
            }
            assert_eq!(&aug.buyers()[..6], orig.buyers());
            assert_eq!(&aug.sellers()[..4], orig.sellers());
            assert!(first_best(&aug).gft >= first_best(&orig).gft);

            let mut pair = MarketPair::default();
            realize_sorted_into(q.as_slice(), a.labels(), &u, &u, &mut pair);
            assert_eq!(pair.original_buyers.len(), 6);
            assert_eq!(crate::market::first_best_sorted(&pair.original_buyers, &pair.original_sellers).1, first_best(&orig).gft);
            assert_eq!(crate::market::first_best_sorted(&pair.augmented_buyers, &pair.augmented_sellers).1, first_best(&aug).gft);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Assignment::new(vec![Label::BuyerOld, Label::SellerOld], 1, 1, 1).is_err());
        assert!(QuantileVector::new(vec![0.5, 0.7]).is_err());
        assert!(QuantileVector::new(vec![1.0, 0.5]).is_err());
        assert!(IndexSets::for_market(40, 19, 1).is_err());
        assert!(IntervalScheme::new(0.0, 10, 10).is_err());
    }

    #[test]
    fn index_windows() {
        let s = IndexSets::for_market(40, 41, 2).unwrap();
        assert_eq!(s.p, 5);
        assert_eq!(s.total, 85);
        assert_eq!(s.i2, 6..=10);
        assert_eq!(s.j1, 81..=85);
        assert_eq!(s.j2, 76..=80);
        assert_eq!(IndexSets::for_market(40, 40, 2).unwrap().p, 4);
    }

    fn witness_labels(m: usize, n: usize, c: usize) -> (Vec<Label>, IndexSets) {
        let s = IndexSets::for_market(m, n, c).unwrap();
        let total = s.total;
        let mut labels = vec![None; total];
        labels[0] = Some(Label::BuyerNew);
        labels[1] = Some(Label::BuyerNew);
        labels[s.p] = Some(Label::BuyerOld);
        labels[total - 1] = Some(Label::SellerNew);
        labels[total - 2] = Some(Label::SellerNew);
        labels[total - s.p - 1] = Some(Label::SellerOld);
        let mut rest = label_multiset(m - 1, n - 1, c - 2).into_iter();
        let labels = labels.into_iter().map(|l| l.unwrap_or_else(|| rest.next().unwrap())).collect();
        (labels, s)
    }

    #[test]
    fn e1_witness_and_e2_disjointness() {
        let (labels, s) = witness_labels(40, 40, 4);
        Assignment::new(labels.clone(), 40, 40, 4).unwrap();
        assert!(event_e1_fsd(&labels, &s));
        assert!(!event_e2_fsd(&labels, &s, 40, 4));

        let mut moved = labels.clone();
        // push both top new buyers out of I1
        moved.swap(0, 50);
        moved.swap(1, 51);
        if moved[..s.p].iter().filter(|&&l| l == Label::BuyerNew).count() < 2 {
            assert!(!event_e1_fsd(&moved, &s));
        }
    }

    #[test]
    fn e2_needs_new_sellers_on_top() {
        let (m, n, c) = (40, 20, 2);
        let s = IndexSets::for_market(m, n, c).unwrap();
        let mut labels = vec![Label::SellerNew, Label::SellerNew];
        labels.extend(label_multiset(m, n, 0));
        labels.extend([Label::BuyerNew, Label::BuyerNew]);
        assert!(!event_e1_fsd(&labels, &s));
        assert!(event_e2_fsd(&labels, &s, n, c));
        let boundary = 2 * n + 2 * c;
        labels.swap(1, boundary);
        assert!(!event_e2_fsd(&labels, &s, n, c));
        labels.swap(1, boundary);
        labels.swap(1, boundary - 1);
        assert!(event_e2_fsd(&labels, &s, n, c));
    }

    #[test]
    fn independent_order_statistics_follow_beta() {
        let (m, draws) = (5usize, 10_000u64);
        let mut kth: Vec<Vec<f64>> = vec![Vec::new(); m];
        let mut low: Vec<Vec<f64>> = vec![Vec::new(); m];
        for t in 0..draws {
            let lq = sample_independent(m, m, 3, &mut trial_rng(21, t));
            assert_eq!((lq.buyers_old.len(), lq.buyers_new.len(), lq.sellers_old.len(), lq.sellers_new.len()), (m, 3, m, 3));
            for k in 0..m {
                kth[k].push(lq.buyers_old[k]);
                low[k].push(lq.sellers_old[k]);
            }
        }
        for k in 0..m {
            // k-th largest of m uniforms ~ Beta(m - k + 1, k), 1-based k
            let hi = Beta::new((m - k) as f64, (k + 1) as f64).unwrap();
            let lo = Beta::new((k + 1) as f64, (m - k) as f64).unwrap();
            assert!(ks(&mut kth[k], |x| hi.cdf(x)) <= 0.03);
            assert!(ks(&mut low[k], |x| lo.cdf(x)) <= 0.03);
        }
    }

    #[test]
    fn new_buyers_in_top_interval_are_binomial() {
        let (m, n, c) = (100usize, 100usize, 50usize);
        let s = IntervalScheme::new(0.5, m, n).unwrap();
        assert!((s.p - 0.005).abs() < 1e-15);
        let draws = 200_000u64;
        let mut hist = vec![0u64; c + 1];
        let mut lq = LabeledQuantiles::default();
        for t in 0..draws {
            sample_independent_into(0, 0, c, &mut trial_rng(8, t), &mut lq);
            hist[lq.buyers_new.iter().filter(|&&q| s.in_i(1, q)).count()] += 1;
        }
        let binom = Binomial::new(s.p, c as u64).unwrap();
        // pool the tail so every bin expects at least 5
        let (mut chi2, mut bins, mut tail_obs, mut tail_exp) = (0.0, 0, 0.0, 0.0);
        for (k, &obs) in hist.iter().enumerate() {
            let exp = binom.pmf(k as u64) * draws as f64;
            if exp >= 5.0 {
                chi2 += (obs as f64 - exp).powi(2) / exp;
                bins += 1;
            } else {
                tail_obs += obs as f64;
                tail_exp += exp;
            }
        }
        chi2 += (tail_obs - tail_exp).powi(2) / tail_exp;
        let critical = ChiSquared::new(bins as f64).unwrap().inverse_cdf(1.0 - 1e-6);
        assert!(chi2 < critical, "chi2 {chi2} over {} bins", bins + 1);
    }

    #[test]
    fn continuous_e1_witness() {
        let (m, n) = (100, 100);
        let s = IntervalScheme::new(0.5, m, n).unwrap();
        let mut bo = vec![0.994];
        bo.extend(std::iter::repeat_n(0.8, 50));
        bo.extend(std::iter::repeat_n(0.3, 49));
        let mut so = vec![0.006];
        so.extend(std::iter::repeat_n(0.2, 50));
        so.extend(std::iter::repeat_n(0.7, 49));
        let lq = LabeledQuantiles::new(bo, vec![0.999, 0.998, 0.1], so, vec![0.001, 0.002, 0.9]).unwrap();
        assert!(event_e1_cont(&lq, &s));
        assert!(event_e3_cont(&lq, &s, m, n));
        assert!(!event_e2_cont(&lq, &s, n, 3));

        let mut no_pair = lq.clone();
        no_pair.buyers_new = vec![0.999, 0.5, 0.1];
        assert!(!event_e1_cont(&no_pair, &s));
        // fewer than n + c old buyers above 1 - r/2
        assert!(event_e2_cont(&no_pair, &s, n, 3));

        let mut crowded = lq.clone();
        crowded.buyers_old[1..4].iter_mut().for_each(|q| *q = 0.995);
        assert!(!event_e3_cont(&crowded, &s, m, n));
    }
}
