//! Seeded Monte Carlo engine and the canned worked examples.
//!
//! Trials are cut into fixed blocks of [`BLOCK_TRIALS`]. Each block is run on
//! its own and the per-block statistics are merged in block order, so the
//! output is bit-identical for any number of workers. Trial `t` always draws
//! from [`trial_rng`]`(seed, t)`.
//!
//! Every trial also checks the per-draw implications of the analysis (for
//! instance "E1 implies STR on the augmented market beats the original first
//! best"). A single failure turns the whole run into
//! [`Error::ImplicationViolated`] carrying the earliest offending draw.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::coupling::{
    event_e1_cont, event_e1_fsd, event_e2_cont, event_e3_cont, label_multiset, realize_independent_into, realize_sorted_into,
    sample_coupled_into, sample_independent_into, sellers_in_top, IndexSets, IntervalScheme, Label, LabeledQuantiles, MarketPair,
};
use crate::distribution::{check_fsd, overlap_r, verify_r_quantile_bound_at, QuantileDistribution, DEFAULT_FSD_GRID, DEFAULT_OVERLAP_TRIALS};
use crate::error::{Error, Result};
use crate::market::{first_best, first_best_sorted, optimal_trade_size, Profile};
use crate::mechanisms::{mcafee_tr, str_mechanism, Mechanism};
use crate::money::{parse_rational, rational_string, Rational};
use crate::rng::{mix_seed, open_unit, trial_rng, TrialRng};
use crate::stats::{Frequency, Moments};

/// Trials per independently seeded work unit.
pub const BLOCK_TRIALS: u64 = 4096;
/// Conditional estimates with fewer hits are reported as inconclusive.
pub const MIN_CONDITIONAL_HITS: u64 = 100;
/// Relative slack for comparing floating GFT sums over different agent sets.
const GFT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Shared sorted quantiles with random labels; needs `F_B` to dominate `F_S`.
    CoupledFsd,
    /// Independent quantiles per agent; any pair of distributions.
    IndependentGeneral,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::CoupledFsd => "coupled_fsd",
            Self::IndependentGeneral => "independent_general",
        })
    }
}

fn default_trials() -> u64 {
    100_000
}

fn default_eta() -> f64 {
    0.05
}

fn default_alpha() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub c: usize,
    pub fb: QuantileDistribution,
    pub fs: QuantileDistribution,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    pub mode: Mode,
    /// Reporting threshold for the loss outside the concentration event.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Regime split between the small-`n` and large-`n` analyses.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// `Pr[b >= s]`; estimated from the distributions when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(m: usize, n: usize, c: usize, fb: QuantileDistribution, fs: QuantileDistribution, mode: Mode) -> Self {
        Self { m, n, c, fb, fs, trials: default_trials(), seed: 0, mode, eta: default_eta(), alpha: default_alpha(), overlap: None }
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_overlap(mut self, r: f64) -> Self {
        self.overlap = Some(r);
        self
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn validate(&self) -> Result<Prepared> {
        if self.trials == 0 {
            return Err(Error::Precondition("trials must be at least 1".into()));
        }
        if self.n == 0 || self.m < self.n {
            return Err(Error::Precondition(format!("need m >= n >= 1, got m={} n={}", self.m, self.n)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) || !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Precondition(format!("eta and alpha must lie in (0, 1), got {} and {}", self.eta, self.alpha)));
        }
        match self.mode {
            Mode::CoupledFsd => {
                if !check_fsd(&self.fb, &self.fs, DEFAULT_FSD_GRID) {
                    return Err(Error::Precondition("coupled_fsd mode needs the buyer distribution to dominate the seller distribution".into()));
                }
                let sets = IndexSets::for_market(self.m, self.n, self.c)?;
                Ok(Prepared { config: self.clone(), sets: Some(sets), scheme: None })
            }
            Mode::IndependentGeneral => {
                let r = match self.overlap {
                    Some(r) => r,
                    None => overlap_r(&self.fb, &self.fs, DEFAULT_OVERLAP_TRIALS, self.seed).value,
                };
                let scheme = IntervalScheme::new(r, self.m, self.n)?;
                if !verify_r_quantile_bound_at(&self.fb, &self.fs, r).holds {
                    return Err(Error::Precondition(format!(
                        "overlap r={r} is inconsistent with the distributions: b(1 - r/2) < s(r/2)"
                    )));
                }
                let mut config = self.clone();
                config.overlap = Some(r);
                Ok(Prepared { config, sets: None, scheme: Some(scheme) })
            }
        }
    }
}

struct Prepared {
    config: ExperimentConfig,
    sets: Option<IndexSets>,
    scheme: Option<IntervalScheme>,
}

/// The random draw behind an implication failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Draw {
    Coupled { quantiles: Vec<f64>, labels: Vec<Label> },
    Independent(LabeledQuantiles),
}

/// Serialized counterexample to a per-draw implication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub implication: String,
    pub trial: u64,
    pub seed: u64,
    pub mode: Mode,
    pub m: usize,
    pub n: usize,
    pub c: usize,
    pub opt_original: f64,
    pub str_augmented: f64,
    pub draw: Draw,
}

/// Mean and standard error of a conditional quantity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub hits: u64,
    pub mean: f64,
    pub std_err: f64,
}

impl From<&Moments> for Estimate {
    fn from(m: &Moments) -> Self {
        Self { hits: m.count, mean: m.mean, std_err: m.std_err() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub m: usize,
    pub n: usize,
    pub c: usize,
    pub trials: u64,
    pub seed: u64,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,
    pub mean_opt_original: f64,
    pub mean_str_augmented: f64,
    /// Mean of the paired per-trial difference `STR(aug) - OPT(orig)`.
    pub mean_gap: f64,
    pub gap_std_err: f64,
    /// `1.96` standard errors of the gap.
    pub ci_halfwidth: f64,
    pub freq_e1: f64,
    pub freq_e2: f64,
    pub freq_e3: Option<f64>,
    /// Share of trials with every new seller among the first `2n + 2c` positions.
    pub freq_sellers_top: Option<f64>,
    pub violations: u64,
    /// `STR - OPT` on trials in E1.
    pub gain_given_e1: Estimate,
    /// `OPT - STR` on trials in E2.
    pub loss_given_e2: Estimate,
    /// Per-draw `E[b(q_i) - s(q_j)]`, `i` uniform over `I1`, `j` over `J1` (shared quantiles only).
    pub benchmark: Estimate,
}

pub const CSV_HEADER: &str = "m,n,c,trials,seed,mode,mean_opt,mean_str,gap,ci,freq_e1,freq_e2,freq_e3,violations";

impl ExperimentResult {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.m,
            self.n,
            self.c,
            self.trials,
            self.seed,
            self.mode,
            self.mean_opt_original,
            self.mean_str_augmented,
            self.mean_gap,
            self.ci_halfwidth,
            self.freq_e1,
            self.freq_e2,
            self.freq_e3.map(|x| x.to_string()).unwrap_or_default(),
            self.violations
        )
    }

    /// `mean_gap - ci_halfwidth >= 0`.
    pub fn gap_is_nonnegative(&self) -> bool {
        self.mean_gap - self.ci_halfwidth >= 0.0
    }
}

#[derive(Default)]
struct BlockStats {
    opt: Moments,
    str_: Moments,
    gap: Moments,
    e1: Frequency,
    e2: Frequency,
    e3: Frequency,
    top: Frequency,
    gain_e1: Moments,
    loss_e2: Moments,
    bench: Moments,
    violations: u64,
    witness: Option<Witness>,
}

impl BlockStats {
    fn merge(&mut self, o: BlockStats) {
        self.opt.merge(&o.opt);
        self.str_.merge(&o.str_);
        self.gap.merge(&o.gap);
        self.e1.merge(&o.e1);
        self.e2.merge(&o.e2);
        self.e3.merge(&o.e3);
        self.top.merge(&o.top);
        self.gain_e1.merge(&o.gain_e1);
        self.loss_e2.merge(&o.loss_e2);
        self.bench.merge(&o.bench);
        self.violations += o.violations;
        if self.witness.is_none() {
            self.witness = o.witness;
        }
    }
}

#[derive(Default)]
struct Scratch {
    q: Vec<f64>,
    labels: Vec<Label>,
    lq: LabeledQuantiles,
    pair: MarketPair,
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start {workers} workers: {e}")))
}

/// Runs `kernel` on every trial, block by block, and merges block results in
/// block order. `workers = 0` uses rayon's default.
fn run_blocks<S, K>(trials: u64, workers: usize, block: K) -> Result<Vec<S>>
where
    S: Send,
    K: Fn(std::ops::Range<u64>) -> S + Sync,
{
    let blocks = trials.div_ceil(BLOCK_TRIALS);
    let pool = thread_pool(workers)?;
    Ok(pool.install(|| {
        (0..blocks)
            .into_par_iter()
            .map(|b| block(b * BLOCK_TRIALS..((b + 1) * BLOCK_TRIALS).min(trials)))
            .collect()
    }))
}

fn below(a: f64, b: f64) -> bool {
    a < b - GFT_TOLERANCE * (1.0 + b.abs())
}

impl Prepared {
    fn witness(&self, implication: &str, trial: u64, opt: f64, str_: f64, draw: Draw) -> Witness {
        let c = &self.config;
        Witness {
            implication: implication.to_string(),
            trial,
            seed: c.seed,
            mode: c.mode,
            m: c.m,
            n: c.n,
            c: c.c,
            opt_original: opt,
            str_augmented: str_,
            draw,
        }
    }

    fn block(&self, range: std::ops::Range<u64>) -> BlockStats {
        let cfg = &self.config;
        let mut st = BlockStats::default();
        let mut sc = Scratch { labels: label_multiset(cfg.m, cfg.n, cfg.c), ..Scratch::default() };
        for t in range {
            let mut rng = trial_rng(cfg.seed, t);
            match cfg.mode {
                Mode::CoupledFsd => self.coupled_trial(t, &mut rng, &mut sc, &mut st),
                Mode::IndependentGeneral => self.independent_trial(t, &mut rng, &mut sc, &mut st),
            }
        }
        st
    }

    fn record_common(st: &mut BlockStats, opt: f64, str_: f64, e1: bool, e2: bool) {
        st.opt.push(opt);
        st.str_.push(str_);
        st.gap.push(str_ - opt);
        st.e1.record(e1);
        st.e2.record(e2);
        if e1 {
            st.gain_e1.push(str_ - opt);
        }
        if e2 {
            st.loss_e2.push(opt - str_);
        }
    }

    fn coupled_trial(&self, t: u64, rng: &mut TrialRng, sc: &mut Scratch, st: &mut BlockStats) {
        let cfg = &self.config;
        let sets = self.sets.as_ref().expect("coupled mode has index sets");
        sample_coupled_into(rng, &mut sc.q, &mut sc.labels);
        realize_sorted_into(&sc.q, &sc.labels, &cfg.fb, &cfg.fs, &mut sc.pair);
        let p = &sc.pair;
        let (t_orig, opt) = first_best_sorted(&p.original_buyers, &p.original_sellers);
        let str_ = Mechanism::Str.gft_sorted(&p.augmented_buyers, &p.augmented_sellers);
        let e1 = event_e1_fsd(&sc.labels, sets);
        let top = sellers_in_top(&sc.labels, cfg.n, cfg.c);
        let e2 = !e1 && top;
        Self::record_common(st, opt, str_, e1, e2);
        st.top.record(top);

        let mean_over = |range: &std::ops::RangeInclusive<usize>, d: &QuantileDistribution| {
            let vals = &sc.q[range.start() - 1..*range.end()];
            vals.iter().map(|&x| d.quantile_unchecked(x)).sum::<f64>() / vals.len() as f64
        };
        st.bench.push(mean_over(&sets.i1, &cfg.fb) - mean_over(&sets.j1, &cfg.fs));

        let mut fail = None;
        if e1 && below(str_, opt) {
            fail = Some("E1 => STR(aug) >= OPT(orig)");
        } else if !e2 && below(str_, opt) {
            fail = Some("not E2 => STR(aug) >= OPT(orig)");
        } else if e1 && optimal_trade_size(&p.augmented_buyers, &p.augmented_sellers) < t_orig + 2 {
            fail = Some("E1 => augmented trade size >= original + 2");
        }
        if let Some(what) = fail {
            st.violations += 1;
            if st.witness.is_none() {
                let draw = Draw::Coupled { quantiles: sc.q.clone(), labels: sc.labels.clone() };
                st.witness = Some(self.witness(what, t, opt, str_, draw));
            }
        }
    }

    fn independent_trial(&self, t: u64, rng: &mut TrialRng, sc: &mut Scratch, st: &mut BlockStats) {
        let cfg = &self.config;
        let scheme = self.scheme.as_ref().expect("independent mode has an interval scheme");
        sample_independent_into(cfg.m, cfg.n, cfg.c, rng, &mut sc.lq);
        realize_independent_into(&sc.lq, &cfg.fb, &cfg.fs, &mut sc.pair);
        let p = &sc.pair;
        let (t_orig, opt) = first_best_sorted(&p.original_buyers, &p.original_sellers);
        let str_ = Mechanism::Str.gft_sorted(&p.augmented_buyers, &p.augmented_sellers);
        let e1 = event_e1_cont(&sc.lq, scheme);
        let e2 = event_e2_cont(&sc.lq, scheme, cfg.n, cfg.c);
        let e3 = event_e3_cont(&sc.lq, scheme, cfg.m, cfg.n);
        Self::record_common(st, opt, str_, e1, e2);
        st.e3.record(e3);

        let mut fail = None;
        if e1 && e3 && below(str_, opt) {
            fail = Some("E1 and E3 => STR(aug) >= OPT(orig)");
        } else if e3 && !e2 && below(str_, opt) {
            fail = Some("E3 and not E2 => STR(aug) >= OPT(orig)");
        } else if e1 && e3 && optimal_trade_size(&p.augmented_buyers, &p.augmented_sellers) < t_orig + 2 {
            fail = Some("E1 and E3 => augmented trade size >= original + 2");
        }
        if let Some(what) = fail {
            st.violations += 1;
            if st.witness.is_none() {
                st.witness = Some(self.witness(what, t, opt, str_, Draw::Independent(sc.lq.clone())));
            }
        }
    }
}

/// Monte Carlo comparison of STR on the augmented market with the original
/// first best. Deterministic in `config` for any `workers`.
pub fn run(config: &ExperimentConfig, workers: usize) -> Result<ExperimentResult> {
    let prepared = config.validate()?;
    let blocks = run_blocks(config.trials, workers, |range| prepared.block(range))?;
    let mut st = BlockStats::default();
    blocks.into_iter().for_each(|b| st.merge(b));
    if st.violations > 0 {
        let witness = st.witness.expect("violations carry a witness");
        return Err(Error::ImplicationViolated { count: st.violations, witness: Box::new(witness) });
    }
    let cfg = &prepared.config;
    let coupled = cfg.mode == Mode::CoupledFsd;
    Ok(ExperimentResult {
        m: cfg.m,
        n: cfg.n,
        c: cfg.c,
        trials: cfg.trials,
        seed: cfg.seed,
        mode: cfg.mode,
        overlap: cfg.overlap,
        mean_opt_original: st.opt.mean,
        mean_str_augmented: st.str_.mean,
        mean_gap: st.gap.mean,
        gap_std_err: st.gap.std_err(),
        ci_halfwidth: st.gap.ci95(),
        freq_e1: st.e1.rate(),
        freq_e2: st.e2.rate(),
        freq_e3: (!coupled).then(|| st.e3.rate()),
        freq_sellers_top: coupled.then(|| st.top.rate()),
        violations: st.violations,
        gain_given_e1: (&st.gain_e1).into(),
        loss_given_e2: (&st.loss_e2).into(),
        benchmark: (&st.bench).into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub base_seed: u64,
    pub rows: Vec<ExperimentResult>,
    /// Smallest `c` whose row has `mean_gap - ci >= 0`.
    pub c_star: Option<usize>,
}

/// One [`run`] per `c`, seeded with `mix_seed(seed, c)`.
pub fn sweep_c(config: &ExperimentConfig, c_values: &[usize], workers: usize) -> Result<SweepReport> {
    if c_values.is_empty() || c_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("c values must be nonempty and strictly ascending".into()));
    }
    let mut rows = Vec::with_capacity(c_values.len());
    let mut base = config.clone();
    if base.mode == Mode::IndependentGeneral && base.overlap.is_none() {
        // estimate once so every row shares the interval scheme
        base.overlap = Some(overlap_r(&base.fb, &base.fs, DEFAULT_OVERLAP_TRIALS, base.seed).value);
    }
    for &c in c_values {
        let row = ExperimentConfig { c, seed: mix_seed(config.seed, c as u64), ..base.clone() };
        rows.push(run(&row, workers)?);
    }
    let c_star = rows.iter().find(|r| r.gap_is_nonnegative()).map(|r| r.c);
    Ok(SweepReport { base_seed: config.seed, rows, c_star })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapComparison {
    pub estimate: Estimate,
    pub benchmark: f64,
    /// Combined standard error of the estimate and the benchmark.
    pub sigma: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalGapReport {
    pub result: ExperimentResult,
    /// `E[STR - OPT | E1] >= benchmark - 3 sigma`.
    pub gain: GapComparison,
    /// `E[OPT - STR | E2] <= benchmark + 3 sigma`.
    pub loss: GapComparison,
}

impl ConditionalGapReport {
    pub fn from_result(result: ExperimentResult) -> Result<Self> {
        if result.mode != Mode::CoupledFsd {
            return Err(Error::Precondition("conditional gaps need coupled_fsd mode".into()));
        }
        let bench = result.benchmark;
        let compare = |e: Estimate, ok: &dyn Fn(f64, f64) -> bool| {
            let sigma = (e.std_err.powi(2) + bench.std_err.powi(2)).sqrt();
            let status = if e.hits < MIN_CONDITIONAL_HITS {
                Status::Inconclusive
            } else if ok(e.mean, 3.0 * sigma) {
                Status::Pass
            } else {
                Status::Fail
            };
            GapComparison { estimate: e, benchmark: bench.mean, sigma, status }
        };
        let gain = compare(result.gain_given_e1, &|mean, slack| mean >= bench.mean - slack);
        let loss = compare(result.loss_given_e2, &|mean, slack| mean <= bench.mean + slack);
        Ok(Self { result, gain, loss })
    }
}

pub fn conditional_gaps(config: &ExperimentConfig, workers: usize) -> Result<ConditionalGapReport> {
    if config.mode != Mode::CoupledFsd {
        return Err(Error::Precondition("conditional gaps need coupled_fsd mode".into()));
    }
    ConditionalGapReport::from_result(run(config, workers)?)
}

/// Label-only event frequencies of the shared-quantile coupling; works for any `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabelFrequencies {
    pub trials: u64,
    pub sellers_top: f64,
    pub sellers_top_sigma: f64,
}

pub fn sellers_top_frequency(m: usize, n: usize, c: usize, trials: u64, seed: u64, workers: usize) -> Result<LabelFrequencies> {
    if trials == 0 {
        return Err(Error::Precondition("trials must be at least 1".into()));
    }
    let blocks = run_blocks(trials, workers, |range| {
        let mut labels = label_multiset(m, n, c);
        let mut q = Vec::new();
        let mut f = Frequency::default();
        for t in range {
            sample_coupled_into(&mut trial_rng(seed, t), &mut q, &mut labels);
            f.record(sellers_in_top(&labels, n, c));
        }
        f
    })?;
    let mut f = Frequency::default();
    blocks.iter().for_each(|b| f.merge(b));
    Ok(LabelFrequencies { trials, sellers_top: f.rate(), sellers_top_sigma: f.sigma() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub m: usize,
    pub n: usize,
    pub extra_buyers: usize,
    pub extra_sellers: usize,
    pub mechanism: Mechanism,
    pub fb: QuantileDistribution,
    pub fs: QuantileDistribution,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentationResult {
    pub config: AugmentationConfig,
    pub mean_mechanism: f64,
    pub mean_opt: f64,
    /// Paired `mechanism(aug) - OPT(orig)`.
    pub mean_gap: f64,
    pub gap_std_err: f64,
}

/// A mechanism on a market with extra iid agents against the first best
/// without them; each trial draws the original agents plus the extras.
pub fn augmentation_gap(config: &AugmentationConfig, workers: usize) -> Result<AugmentationResult> {
    let c = config;
    if c.trials == 0 || c.m == 0 || c.n == 0 {
        return Err(Error::Precondition("need trials, m and n of at least 1".into()));
    }
    let blocks = run_blocks(c.trials, workers, |range| {
        let (mut mech, mut opt, mut gap) = (Moments::default(), Moments::default(), Moments::default());
        let (mut b, mut s) = (Vec::new(), Vec::new());
        let (mut bo, mut so) = (Vec::new(), Vec::new());
        for t in range {
            let mut rng = trial_rng(c.seed, t);
            b.clear();
            s.clear();
            b.extend((0..c.m + c.extra_buyers).map(|_| c.fb.quantile_unchecked(open_unit(&mut rng))));
            s.extend((0..c.n + c.extra_sellers).map(|_| c.fs.quantile_unchecked(open_unit(&mut rng))));
            bo.clear();
            so.clear();
            bo.extend_from_slice(&b[..c.m]);
            so.extend_from_slice(&s[..c.n]);
            for v in [&mut b, &mut bo] {
                v.sort_unstable_by(|x, y| y.total_cmp(x));
            }
            for v in [&mut s, &mut so] {
                v.sort_unstable_by(f64::total_cmp);
            }
            let g_opt = first_best_sorted(&bo, &so).1;
            let g_mech = c.mechanism.gft_sorted(&b, &s);
            mech.push(g_mech);
            opt.push(g_opt);
            gap.push(g_mech - g_opt);
        }
        (mech, opt, gap)
    })?;
    let (mut mech, mut opt, mut gap) = (Moments::default(), Moments::default(), Moments::default());
    for (a, b, g) in &blocks {
        mech.merge(a);
        opt.merge(b);
        gap.merge(g);
    }
    Ok(AugmentationResult {
        config: config.clone(),
        mean_mechanism: mech.mean,
        mean_opt: opt.mean,
        mean_gap: gap.mean,
        gap_std_err: gap.std_err(),
    })
}

/// Named values in insertion order; serializes as a JSON object.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OrderedValues(pub Vec<(String, String)>);

impl OrderedValues {
    fn push(&mut self, key: &str, value: &Rational) {
        self.0.push((key.to_string(), rational_string(value)));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

impl Serialize for OrderedValues {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

/// Exact numbers of a worked example and whether they match expectations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reproduction {
    pub id: String,
    pub values: OrderedValues,
    pub checks: Vec<(String, bool)>,
}

impl Reproduction {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Example {
    Figure1,
    IntroEps { eps: Rational },
    B5 { n: usize, eps: Rational },
    AppendixE,
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "figure1" => Ok(Self::Figure1),
            "intro_eps" => Ok(Self::IntroEps { eps: crate::money::rat(1, 10) }),
            "b5" => Ok(Self::B5 { n: 5, eps: crate::money::rat(1, 20) }),
            "appendix_e" => Ok(Self::AppendixE),
            other => Err(Error::UnknownExample(other.to_string())),
        }
    }
}

fn exact_profile(buyers: &[Rational], sellers: &[Rational]) -> Result<Profile<Rational>> {
    Profile::new(buyers.to_vec(), sellers.to_vec())
}

fn q(s: &str) -> Rational {
    parse_rational(s).expect("literal parses")
}

/// Three buyers `3, 2+e, 2` and three sellers at `1`, augmented with a buyer
/// at `2+3e` and a seller at `2+2e`.
pub fn intro_markets(eps: &Rational) -> Result<(Profile<Rational>, Profile<Rational>)> {
    let two = q("2");
    let buyers = [q("3"), &two + eps, two.clone()];
    let sellers = [q("1"), q("1"), q("1")];
    let original = exact_profile(&buyers, &sellers)?;
    let mut aug_b = buyers.to_vec();
    aug_b.push(&two + eps * q("3"));
    let mut aug_s = sellers.to_vec();
    aug_s.push(&two + eps * q("2"));
    Ok((original, exact_profile(&aug_b, &aug_s)?))
}

/// `n` buyers at 2, `4` at 0.9 and two new ones at 0; `n-1` sellers at 1, one
/// at `1+e`, and new sellers at 0.8 and 100.
pub fn b5_markets(n: usize, eps: &Rational) -> Result<(Profile<Rational>, Profile<Rational>)> {
    if n < 2 {
        return Err(Error::Precondition(format!("need n >= 2, got {n}")));
    }
    let mut buyers = vec![q("2"); n];
    buyers.extend(vec![q("0.9"); 4]);
    let mut sellers = vec![q("1"); n - 1];
    sellers.push(q("1") + eps);
    let original = exact_profile(&buyers, &sellers)?;
    buyers.extend([q("0"), q("0")]);
    sellers.extend([q("0.8"), q("100")]);
    Ok((original, exact_profile(&buyers, &sellers)?))
}

/// Worked examples in exact arithmetic.
pub fn reproduce(example: &Example) -> Result<Reproduction> {
    let mut values = OrderedValues::default();
    let mut checks = Vec::new();
    let id = match example {
        Example::Figure1 => {
            let (orig, aug) = intro_markets(&q("0.1"))?;
            let (opt_o, opt_a, str_a) = (first_best(&orig).gft, first_best(&aug).gft, str_mechanism(&aug).allocation.gft);
            checks.push(("opt_orig = 41/10".to_string(), opt_o == q("4.1")));
            checks.push(("opt_aug = 22/5".to_string(), opt_a == q("4.4")));
            checks.push(("str_aug = 33/10".to_string(), str_a == q("3.3")));
            values.push("opt_orig", &opt_o);
            values.push("opt_aug", &opt_a);
            values.push("str_aug", &str_a);
            "figure1"
        }
        Example::IntroEps { eps } => {
            if *eps <= q("0") {
                return Err(Error::Precondition("eps must be positive".into()));
            }
            let (orig, aug) = intro_markets(eps)?;
            let (opt_o, str_a) = (first_best(&orig).gft, str_mechanism(&aug).allocation.gft);
            let three_plus = q("3") + eps * q("3");
            // past eps = 1 the buyer at 2 + eps outranks the one at 3
            if *eps < q("1") {
                checks.push(("str_aug = 3 + 3 eps".to_string(), str_a == three_plus));
            }
            checks.push(("opt_orig = 4 + eps".to_string(), opt_o == q("4") + eps));
            checks.push(("str_aug < opt_orig iff eps < 1/2".to_string(), (str_a < opt_o) == (*eps < q("0.5"))));
            values.push("eps", eps);
            values.push("opt_orig", &opt_o);
            values.push("str_aug", &str_a);
            "intro_eps"
        }
        Example::B5 { n, eps } => {
            let (orig, aug) = b5_markets(*n, eps)?;
            let opt_o = first_best(&orig).gft;
            let tr_a = mcafee_tr(&aug).allocation.gft;
            let str_a = str_mechanism(&aug).allocation.gft;
            let nr = Rational::from_integer((*n).into());
            checks.push(("tr_aug = n - 4/5".to_string(), tr_a == &nr - q("0.8")));
            checks.push(("str_aug = n + 1/5".to_string(), str_a == &nr + q("0.2")));
            checks.push(("opt_orig = n - eps".to_string(), opt_o == &nr - eps));
            checks.push(("tr_aug < opt_orig < str_aug".to_string(), tr_a < opt_o && opt_o < str_a));
            values.push("n", &nr);
            values.push("eps", eps);
            values.push("opt_orig", &opt_o);
            values.push("tr_aug", &tr_a);
            values.push("str_aug", &str_a);
            "b5"
        }
        Example::AppendixE => {
            // one buyer at 1 and one seller at 0.9, plus a new buyer at 0 and a new seller at 0.8
            let orig = exact_profile(&[q("1")], &[q("0.9")])?;
            let aug = exact_profile(&[q("1"), q("0")], &[q("0.9"), q("0.8")])?;
            let (opt_o, opt_a) = (first_best(&orig).gft, first_best(&aug).gft);
            let str_a = str_mechanism(&aug).allocation.gft;
            let tr_a = mcafee_tr(&aug).allocation.gft;
            // a buyer at 100 and one at 0 against two sellers at 1
            let lone = exact_profile(&[q("100"), q("0")], &[q("1"), q("1")])?;
            let tr_lone = mcafee_tr(&lone).allocation.gft;
            checks.push(("opt_orig = 1/10".to_string(), opt_o == q("0.1")));
            checks.push(("str_aug = opt_aug = 1/5".to_string(), str_a == q("0.2") && opt_a == q("0.2")));
            checks.push(("tr_aug = 0".to_string(), tr_a == q("0")));
            checks.push(("tr on [100, 0] vs [1, 1] = 0".to_string(), tr_lone == q("0")));
            values.push("opt_orig", &opt_o);
            values.push("opt_aug", &opt_a);
            values.push("str_aug", &str_a);
            values.push("tr_aug", &tr_a);
            values.push("tr_two_buyers", &tr_lone);
            "appendix_e"
        }
    };
    Ok(Reproduction { id: id.to_string(), values, checks })
}
