//! Value distributions represented by their quantile functions.
//!
//! A distribution is stored as whatever makes its generalized inverse
//! `Q(q) = inf { x : Pr[X <= x] >= q }` cheap to evaluate. All operations are
//! pure functions of immutable values.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{open_unit, trial_rng};

const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Default number of grid points for the dominance check of non-discrete pairs.
pub const DEFAULT_FSD_GRID: usize = 10_001;
/// Default sample count for the Monte Carlo overlap estimate.
pub const DEFAULT_OVERLAP_TRIALS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionKind {
    /// `(value, weight)` pairs.
    Discrete { support: Vec<(f64, f64)> },
    Uniform { lo: f64, hi: f64 },
    /// Piecewise-linear quantile function through `(q, value)` breakpoints,
    /// constant outside the first and last breakpoint.
    #[serde(rename = "pwl_quantile")]
    PiecewiseLinearQuantile { points: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawDistribution {
    #[serde(flatten)]
    kind: DistributionKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct QuantileDistribution {
    kind: DistributionKind,
    name: String,
    /// Cumulative weights of a discrete support, last entry pinned to 1.
    cumulative: Vec<f64>,
}

impl TryFrom<RawDistribution> for QuantileDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        let mut d = Self::new(raw.kind)?;
        d.name = raw.name;
        Ok(d)
    }
}

impl From<QuantileDistribution> for RawDistribution {
    fn from(d: QuantileDistribution) -> Self {
        RawDistribution { kind: d.kind, name: d.name }
    }
}

impl QuantileDistribution {
    pub fn new(kind: DistributionKind) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidDistribution(msg));
        let mut cumulative = Vec::new();
        let kind = match kind {
            DistributionKind::Discrete { mut support } => {
                if support.is_empty() {
                    return invalid("discrete support is empty".into());
                }
                if support.iter().any(|&(v, w)| !v.is_finite() || !w.is_finite() || w < 0.0) {
                    return invalid("discrete support needs finite values and nonnegative weights".into());
                }
                let total: f64 = support.iter().map(|&(_, w)| w).sum();
                if (total - 1.0).abs() > WEIGHT_TOLERANCE {
                    return invalid(format!("discrete weights sum to {total}, not 1"));
                }
                support.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut acc = 0.0;
                for &(_, w) in &support {
                    acc += w;
                    cumulative.push(acc);
                }
                *cumulative.last_mut().unwrap() = 1.0;
                DistributionKind::Discrete { support }
            }
            DistributionKind::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return invalid(format!("uniform needs finite lo <= hi, got [{lo}, {hi}]"));
                }
                DistributionKind::Uniform { lo, hi }
            }
            DistributionKind::PiecewiseLinearQuantile { points } => {
                if points.len() < 2 {
                    return invalid("piecewise-linear quantile needs at least two breakpoints".into());
                }
                for &(q, v) in &points {
                    if !(0.0..=1.0).contains(&q) || !v.is_finite() {
                        return invalid(format!("breakpoint ({q}, {v}) out of range"));
                    }
                }
                for w in points.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return invalid("breakpoint quantiles must be strictly increasing".into());
                    }
                    if w[1].1 < w[0].1 {
                        return invalid("breakpoint values must be nondecreasing".into());
                    }
                }
                DistributionKind::PiecewiseLinearQuantile { points }
            }
        };
        Ok(Self { kind, name: String::new(), cumulative })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(DistributionKind::Uniform { lo, hi })
    }

    pub fn discrete(support: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(DistributionKind::Discrete { support })
    }

    pub fn piecewise_linear(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(DistributionKind::PiecewiseLinearQuantile { points })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &DistributionKind {
        &self.kind
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, DistributionKind::Discrete { .. })
    }

    /// Generalized inverse CDF at `q` in (0, 1).
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::QuantileDomain(q));
        }
        Ok(self.quantile_unchecked(q))
    }

    /// [`quantile`](Self::quantile) without the domain check; `q` must lie in (0, 1).
    #[inline]
    pub fn quantile_unchecked(&self, q: f64) -> f64 {
        match &self.kind {
            DistributionKind::Discrete { support } => {
                let idx = self.cumulative.partition_point(|&c| c < q);
                support[idx.min(support.len() - 1)].0
            }
            DistributionKind::Uniform { lo, hi } => lo + q * (hi - lo),
            DistributionKind::PiecewiseLinearQuantile { points } => {
                let first = points[0];
                let last = points[points.len() - 1];
                if q <= first.0 {
                    return first.1;
                }
                if q >= last.0 {
                    return last.1;
                }
                let k = points.partition_point(|&(pq, _)| pq < q);
                let (q0, v0) = points[k - 1];
                let (q1, v1) = points[k];
                v0 + (v1 - v0) * (q - q0) / (q1 - q0)
            }
        }
    }

    /// `Pr[X <= x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            DistributionKind::Discrete { support } => {
                let idx = support.partition_point(|&(v, _)| v <= x);
                if idx == 0 {
                    0.0
                } else {
                    self.cumulative[idx - 1]
                }
            }
            DistributionKind::Uniform { lo, hi } => {
                if x < *lo {
                    0.0
                } else if x >= *hi {
                    1.0
                } else {
                    (x - lo) / (hi - lo)
                }
            }
            DistributionKind::PiecewiseLinearQuantile { points } => {
                // Measure of { q in (0,1) : Q(q) <= x }, i.e. the largest such q.
                let first = points[0];
                let last = points[points.len() - 1];
                if x < first.1 {
                    return 0.0;
                }
                if x >= last.1 {
                    return 1.0;
                }
                let mut level = first.0;
                for w in points.windows(2) {
                    let ((q0, v0), (q1, v1)) = (w[0], w[1]);
                    if v1 <= x {
                        level = q1;
                    } else {
                        if v0 <= x {
                            level = q0 + (x - v0) / (v1 - v0) * (q1 - q0);
                        }
                        break;
                    }
                }
                level
            }
        }
    }

    /// Inverse-transform sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile_unchecked(open_unit(rng))
    }

    /// Cumulative-weight breakpoints of a discrete distribution (empty otherwise).
    fn breakpoints(&self) -> &[f64] {
        &self.cumulative
    }

    fn discrete_support(&self) -> Option<&[(f64, f64)]> {
        match &self.kind {
            DistributionKind::Discrete { support } => Some(support),
            _ => None,
        }
    }
}

/// First-order stochastic dominance of `fb` over `fs`: `b(q) >= s(q)` for all q.
///
/// Exact for two discrete distributions (both quantile functions are constant
/// between merged cumulative-weight breakpoints), otherwise checked on an
/// evenly spaced grid of `grid_size` interior points.
pub fn check_fsd(fb: &QuantileDistribution, fs: &QuantileDistribution, grid_size: usize) -> bool {
    let levels: Vec<f64> = if fb.is_discrete() && fs.is_discrete() {
        let mut cuts: Vec<f64> = fb.breakpoints().iter().chain(fs.breakpoints()).copied().collect();
        cuts.push(0.0);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2).map(|w| 0.5 * (w[0] + w[1])).filter(|&q| q > 0.0 && q < 1.0).collect()
    } else {
        let g = grid_size.max(2);
        (1..=g).map(|i| i as f64 / (g + 1) as f64).collect()
    };
    levels.iter().all(|&q| fb.quantile_unchecked(q) >= fs.quantile_unchecked(q))
}

/// The overlap parameter `Pr[b >= s]` for independent `b ~ fb`, `s ~ fs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub value: f64,
    /// 95% halfwidth of the estimate; zero when exact.
    pub halfwidth: f64,
    pub exact: bool,
}

/// Exact double sum for two discrete distributions, Monte Carlo otherwise.
pub fn overlap_r(fb: &QuantileDistribution, fs: &QuantileDistribution, trials: u64, seed: u64) -> Overlap {
    if let (Some(bs), Some(ss)) = (fb.discrete_support(), fs.discrete_support()) {
        // Both supports are sorted by value: walk sellers alongside buyers.
        let mut below = 0.0;
        let mut j = 0;
        let mut total = 0.0;
        for &(b, wb) in bs {
            while j < ss.len() && ss[j].0 <= b {
                below += ss[j].1;
                j += 1;
            }
            total += wb * below;
        }
        return Overlap { value: total.clamp(0.0, 1.0), halfwidth: 0.0, exact: true };
    }
    let trials = trials.max(1);
    let mut rng = trial_rng(seed, 0);
    let hits = (0..trials).filter(|_| fb.sample(&mut rng) >= fs.sample(&mut rng)).count() as f64;
    let p = hits / trials as f64;
    Overlap { value: p, halfwidth: 1.96 * (p * (1.0 - p) / trials as f64).sqrt(), exact: false }
}

/// Outcome of checking `b(1 - r/2) >= s(r/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileBoundCheck {
    pub overlap: f64,
    pub holds: bool,
    /// `r` is 0 or 1, where the bound says nothing.
    pub vacuous: bool,
}

/// Checks the overlap quantile bound at the given overlap value.
pub fn verify_r_quantile_bound_at(fb: &QuantileDistribution, fs: &QuantileDistribution, r: f64) -> QuantileBoundCheck {
    if r <= 0.0 || r >= 1.0 {
        return QuantileBoundCheck { overlap: r, holds: true, vacuous: true };
    }
    let holds = fb.quantile_unchecked(1.0 - r / 2.0) >= fs.quantile_unchecked(r / 2.0);
    QuantileBoundCheck { overlap: r, holds, vacuous: false }
}

/// Computes the overlap (exactly when possible) and checks the quantile bound.
pub fn verify_r_quantile_bound(fb: &QuantileDistribution, fs: &QuantileDistribution) -> QuantileBoundCheck {
    let r = overlap_r(fb, fs, DEFAULT_OVERLAP_TRIALS, 0).value;
    verify_r_quantile_bound_at(fb, fs, r)
}
