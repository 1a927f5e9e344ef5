//! Event-driven Monte Carlo for the dual surplus under a dividend strategy.
//!
//! Between gains the surplus moves linearly, so ruin times and threshold
//! crossings are solved exactly and only gain arrivals are sampled. Every
//! path draws its randomness from ChaCha streams keyed by
//! `(seed, role, path index)`, which makes estimates independent of thread
//! scheduling, and lets different strategies share their gain sequences.
//!
//! Two ways of discounting the dividends:
//!
//! * `Collapsed` integrates the Brownian discount out analytically
//!   (`E exp(-m t - delta B_t) = exp(-theta t)`), valid because the discount
//!   is independent of the surplus;
//! * `Raw` simulates the Brownian path and discounts pathwise, lumps exactly
//!   and rate payments by the trapezoidal rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{full_payout_value, BarrierSolution, ThresholdSolution};
use crate::error::{Error, Result};
use crate::model::{DiscountSpec, ValidatedModel};
use crate::util::{fmt_num, mean_and_se, pairwise_sum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Strategy {
    #[serde(rename = "none")]
    NoDividend,
    /// Pay `rate` for as long as the company survives.
    #[serde(rename = "const")]
    ConstRate { rate: f64 },
    /// Pay `rate` while the surplus is strictly above `level`.
    Threshold { level: f64, rate: f64 },
    /// Pay out everything above `level` immediately.
    Barrier { level: f64 },
}

impl Strategy {
    fn check(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        let valid = match *self {
            Strategy::NoDividend => true,
            Strategy::ConstRate { rate } => ok(rate),
            Strategy::Threshold { level, rate } => ok(level) && ok(rate),
            Strategy::Barrier { level } => ok(level),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "strategy {self:?} needs finite nonnegative rates and levels"
            )))
        }
    }

    /// Upper bound on the dividend rate, used to size the horizon. Barrier
    /// payouts are bounded by ten times the mean gain rate.
    fn rate_bound(&self, model: &ValidatedModel) -> f64 {
        match *self {
            Strategy::NoDividend => 0.0,
            Strategy::ConstRate { rate } | Strategy::Threshold { rate, .. } => rate,
            Strategy::Barrier { .. } => 10.0 * model.lambda() / model.beta(),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Strategy::NoDividend => "none".into(),
            Strategy::ConstRate { rate } => format!("const(rate={rate})"),
            Strategy::Threshold { level, rate } => format!("threshold(level={level},rate={rate})"),
            Strategy::Barrier { level } => format!("barrier(level={level})"),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Strategy::NoDividend => "none",
            Strategy::ConstRate { .. } => "const",
            Strategy::Threshold { .. } => "threshold",
            Strategy::Barrier { .. } => "barrier",
        }
    }

    pub fn level(&self) -> Option<f64> {
        match *self {
            Strategy::Threshold { level, .. } | Strategy::Barrier { level } => Some(level),
            _ => None,
        }
    }

    pub fn rate(&self) -> Option<f64> {
        match *self {
            Strategy::ConstRate { rate } | Strategy::Threshold { rate, .. } => Some(rate),
            _ => None,
        }
    }

    /// Closed-form `e^{-r} F(x)` of this (possibly suboptimal) strategy.
    pub fn closed_form_value(&self, model: &ValidatedModel, x: f64) -> Result<f64> {
        let disc = (-model.r()).exp();
        Ok(match *self {
            Strategy::NoDividend
            | Strategy::ConstRate { rate: 0.0 }
            | Strategy::Threshold { rate: 0.0, .. } => 0.0,
            Strategy::ConstRate { rate } | Strategy::Threshold { level: 0.0, rate } => {
                full_payout_value(model, rate, x, true)?
            }
            Strategy::Threshold { level, rate } => {
                disc * ThresholdSolution::at_level(model, rate, level)?.f(x)
            }
            Strategy::Barrier { level } => disc * BarrierSolution::at_level(model, level)?.f(x),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Collapsed,
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// Skeleton step of the Raw Brownian path; default `0.01 / theta`.
    pub brownian_step: Option<f64>,
    /// Number of bisections of the skeleton used for the Raw quadrature.
    /// Runs that differ only here share their Brownian path, so the
    /// discretisation error can be measured without Monte Carlo noise.
    pub brownian_refinements: u32,
    /// Time truncation; default from `truncation_tol`.
    pub horizon: Option<f64>,
    /// Bound on the bias from truncating at the horizon; default
    /// `1e-6 * rate_bound / theta`.
    pub truncation_tol: Option<f64>,
}

/// Relative truncation tolerance used when none is given.
pub const DEFAULT_REL_TRUNCATION: f64 = 1e-6;
/// Maximum skeleton bisections.
pub const MAX_REFINEMENTS: u32 = 10;

impl SimConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            estimator: Estimator::Collapsed,
            brownian_step: None,
            brownian_refinements: 0,
            horizon: None,
            truncation_tol: None,
        }
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    fn check(&self, model: &ValidatedModel) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidConfig("n_paths must be >= 1".into()));
        }
        if let Some(h) = self.brownian_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "brownian_step must be > 0, got {h}"
                )));
            }
        }
        if self.brownian_refinements > MAX_REFINEMENTS {
            return Err(Error::InvalidConfig(format!(
                "at most {MAX_REFINEMENTS} refinements, got {}",
                self.brownian_refinements
            )));
        }
        if let Some(t) = self.horizon {
            if !(t >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "horizon must be >= 0, got {t}"
                )));
            }
        }
        if let Some(tol) = self.truncation_tol {
            if !(tol > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "truncation_tol must be > 0, got {tol}"
                )));
            }
        }
        if self.estimator == Estimator::Raw && !matches!(model.discount(), DiscountSpec::Gbm { .. })
        {
            return Err(Error::InvalidConfig(
                "the raw estimator needs a GBM discount; use collapsed for exponential-Levy".into(),
            ));
        }
        Ok(())
    }

    /// Horizon `T` with `rate_bound e^{-theta T} / theta <= truncation_tol`.
    pub fn resolve_horizon(&self, model: &ValidatedModel, strategy: &Strategy) -> f64 {
        if let Some(t) = self.horizon {
            return t;
        }
        let theta = model.theta();
        let bound = strategy.rate_bound(model);
        match self.truncation_tol {
            Some(tol) if bound > 0.0 => ((bound / (theta * tol)).ln() / theta).max(0.0),
            _ => (1.0 / DEFAULT_REL_TRUNCATION).ln() / theta,
        }
    }

    pub fn resolve_brownian_step(&self, model: &ValidatedModel) -> f64 {
        self.brownian_step.unwrap_or(0.01 / model.theta())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RuinTime {
    Ruined(f64),
    Censored(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub discounted_dividends: f64,
    pub ruin_time: RuinTime,
    pub n_jumps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub ci95: (f64, f64),
    pub n_paths: usize,
    pub ruin_fraction: f64,
}

impl SimEstimate {
    fn from_samples(totals: &[f64], ruined: usize) -> Self {
        let (mean, std_err) = mean_and_se(totals);
        SimEstimate {
            mean,
            std_err,
            ci95: (mean - 1.96 * std_err, mean + 1.96 * std_err),
            n_paths: totals.len(),
            ruin_fraction: ruined as f64 / totals.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Jump,
    Cross,
    Lump,
    Ruin,
    Horizon,
}

impl EventKind {
    fn as_str(self) -> &'static str {
        match self {
            EventKind::Jump => "jump",
            EventKind::Cross => "cross",
            EventKind::Lump => "lump",
            EventKind::Ruin => "ruin",
            EventKind::Horizon => "horizon",
        }
    }
}

/// One row of the debugging path log. For events that close a stretch of
/// rate payments, `dividend_paid` is the undiscounted amount paid since the
/// previous event and `discount_weight` its average discount factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEvent {
    pub t: f64,
    pub kind: EventKind,
    pub surplus_before: f64,
    pub surplus_after: f64,
    pub dividend_paid: f64,
    pub discount_weight: f64,
}

pub fn path_log_csv(events: &[PathEvent]) -> String {
    let mut out = String::from(
        "t_event,event_type,surplus_before,surplus_after,dividend_paid,discount_weight\n",
    );
    for e in events {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_num(e.t),
            e.kind.as_str(),
            fmt_num(e.surplus_before),
            fmt_num(e.surplus_after),
            fmt_num(e.dividend_paid),
            fmt_num(e.discount_weight)
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Random streams

const ROLE_SURPLUS: u64 = 0x5375_7270_6c75_7300;
const ROLE_COARSE: u64 = 0x4272_6f77_6e43_6f00;
const ROLE_BRIDGE: u64 = 0x4272_6964_6765_0000;
const ROLE_REFINE: u64 = 0x5265_6669_6e65_0000;

/// Words reserved per skeleton interval in the refinement stream; enough
/// for `2^MAX_REFINEMENTS` normals with ziggurat rejections.
const REFINE_WORDS_PER_INTERVAL: u128 = 1 << 20;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, role)`, positioned at the path's stream.
fn stream(seed: u64, role: u64, path: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = seed ^ role;
    for chunk in key.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(path);
    rng
}

// ---------------------------------------------------------------------------
// Discounting

trait Discounter {
    /// Discount factor for a lump paid at `t`.
    fn lump(&mut self, t: f64) -> f64;
    /// `int_{t1}^{t2}` of the discount factor.
    fn rate(&mut self, t1: f64, t2: f64) -> f64;
}

struct Collapsed {
    scale: f64,
    theta: f64,
}

impl Discounter for Collapsed {
    fn lump(&mut self, t: f64) -> f64 {
        self.scale * (-self.theta * t).exp()
    }

    fn rate(&mut self, t1: f64, t2: f64) -> f64 {
        // e^{-theta t1} (1 - e^{-theta (t2 - t1)}) / theta
        -self.scale * (-self.theta * t1).exp() * (-self.theta * (t2 - t1)).exp_m1() / self.theta
    }
}

/// Brownian path sampled lazily at nondecreasing times.
///
/// A skeleton at multiples of `step` is drawn from one stream; each skeleton
/// interval is bisected `refinements` times by Brownian-bridge midpoints
/// drawn from a second stream at a fixed position per interval; event times
/// are filled in by bridges between the neighbouring known points from a
/// third stream. Refining therefore never changes the skeleton.
struct BrownianPath {
    step: f64,
    fine: usize,
    fine_step: f64,
    coarse: ChaCha8Rng,
    bridge: ChaCha8Rng,
    refine: ChaCha8Rng,
    interval: u64,
    nodes: Vec<f64>,
    anchor: Option<(f64, f64)>,
}

impl BrownianPath {
    fn new(seed: u64, path: u64, step: f64, refinements: u32) -> Self {
        let fine = 1usize << refinements;
        let mut bp = BrownianPath {
            step,
            fine,
            fine_step: step / fine as f64,
            coarse: stream(seed, ROLE_COARSE, path),
            bridge: stream(seed, ROLE_BRIDGE, path),
            refine: stream(seed, ROLE_REFINE, path),
            interval: 0,
            nodes: vec![0.0; fine + 1],
            anchor: None,
        };
        bp.fill_interval(0.0);
        bp
    }

    fn fill_interval(&mut self, left: f64) {
        let z: f64 = self.coarse.sample(StandardNormal);
        let fine = self.fine;
        self.nodes[0] = left;
        self.nodes[fine] = left + self.step.sqrt() * z;
        if fine > 1 {
            self.refine
                .set_word_pos(self.interval as u128 * REFINE_WORDS_PER_INTERVAL);
            let mut half = fine / 2;
            while half >= 1 {
                // midpoint of a span of 2*half fine steps has variance half*fine_step/2
                let sd = (0.5 * half as f64 * self.fine_step).sqrt();
                let mut j = half;
                while j < fine {
                    let z: f64 = self.refine.sample(StandardNormal);
                    self.nodes[j] = 0.5 * (self.nodes[j - half] + self.nodes[j + half]) + sd * z;
                    j += 2 * half;
                }
                half /= 2;
            }
        }
    }

    fn advance_to(&mut self, interval: u64) {
        while self.interval < interval {
            self.interval += 1;
            let left = self.nodes[self.fine];
            self.fill_interval(left);
        }
    }

    fn locate(&mut self, t: f64) -> (usize, f64) {
        let interval = (t / self.step).floor() as u64;
        self.advance_to(interval);
        let base = self.interval as f64 * self.step;
        let j = (((t - base) / self.fine_step).floor() as usize).min(self.fine - 1);
        (j, base + j as f64 * self.fine_step)
    }

    /// `B_t` at an event time, consistent with every earlier sample.
    fn at_event(&mut self, t: f64) -> f64 {
        let (j, tj) = self.locate(t);
        let (lt, lb) = match self.anchor {
            Some((at, ab)) if at >= tj => (at, ab),
            _ => (tj, self.nodes[j]),
        };
        let (rt, rb) = (tj + self.fine_step, self.nodes[j + 1]);
        let z: f64 = self.bridge.sample(StandardNormal);
        let value = if t <= lt {
            lb
        } else if t >= rt {
            rb
        } else {
            let w = (t - lt) / (rt - lt);
            let var = (t - lt) * (rt - t) / (rt - lt);
            lb + w * (rb - lb) + var.sqrt() * z
        };
        self.anchor = Some((t, value));
        value
    }

    /// `B` at grid node `k * fine_step`.
    fn at_node(&mut self, k: u64) -> f64 {
        let per = self.fine as u64;
        self.advance_to(k / per);
        self.nodes[(k % per) as usize]
    }
}

struct Raw {
    r: f64,
    m: f64,
    delta: f64,
    path: BrownianPath,
}

impl Raw {
    fn factor(&self, t: f64, b: f64) -> f64 {
        (-self.r - self.m * t - self.delta * b).exp()
    }
}

impl Discounter for Raw {
    fn lump(&mut self, t: f64) -> f64 {
        let b = self.path.at_event(t);
        self.factor(t, b)
    }

    fn rate(&mut self, t1: f64, t2: f64) -> f64 {
        let mut prev_t = t1;
        let mut prev_d = self.lump(t1);
        let h = self.path.fine_step;
        let mut k = (t1 / h).floor() as u64 + 1;
        let mut acc = 0.0;
        loop {
            let tk = k as f64 * h;
            if tk >= t2 {
                break;
            }
            if tk > prev_t {
                let d = {
                    let b = self.path.at_node(k);
                    self.factor(tk, b)
                };
                acc += 0.5 * (prev_d + d) * (tk - prev_t);
                prev_t = tk;
                prev_d = d;
            }
            k += 1;
        }
        let d2 = self.lump(t2);
        acc + 0.5 * (prev_d + d2) * (t2 - prev_t)
    }
}

// ---------------------------------------------------------------------------
// Path simulation

/// Surplus dynamics without validation, so that degenerate cases such as
/// `lambda = 0` can be exercised directly.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Dynamics {
    pub c: f64,
    pub lambda: f64,
    pub beta: f64,
}

struct PathSim<'a, D: Discounter> {
    dynamics: Dynamics,
    strategy: Strategy,
    horizon: f64,
    discount: D,
    log: Option<&'a mut Vec<PathEvent>>,
}

impl<D: Discounter> PathSim<'_, D> {
    fn record(&mut self, event: PathEvent) {
        if let Some(log) = self.log.as_deref_mut() {
            log.push(event);
        }
    }

    /// Pay at rate `rate` on `[t1, t2]`; returns the discounted amount.
    fn pay_rate(&mut self, rate: f64, t1: f64, t2: f64) -> f64 {
        if rate == 0.0 || t2 <= t1 {
            return 0.0;
        }
        rate * self.discount.rate(t1, t2)
    }

    fn close_stretch(
        &mut self,
        t: f64,
        kind: EventKind,
        before: f64,
        after: f64,
        paid: f64,
        pv: f64,
    ) {
        let weight = if paid > 0.0 { pv / paid } else { 0.0 };
        self.record(PathEvent {
            t,
            kind,
            surplus_before: before,
            surplus_after: after,
            dividend_paid: paid,
            discount_weight: weight,
        });
    }

    fn lump(&mut self, t: f64, x: &mut f64, level: f64) -> f64 {
        if *x <= level {
            return 0.0;
        }
        let amount = *x - level;
        let w = self.discount.lump(t);
        self.record(PathEvent {
            t,
            kind: EventKind::Lump,
            surplus_before: *x,
            surplus_after: level,
            dividend_paid: amount,
            discount_weight: w,
        });
        *x = level;
        amount * w
    }

    /// Deterministic motion from `(t, x)` up to `t_end`. Returns the new
    /// surplus, the discounted dividends paid, and whether ruin occurred
    /// (in which case the time of ruin is returned in place of `t_end`).
    fn drift(&mut self, t: f64, x: f64, t_end: f64) -> (f64, f64, Option<f64>) {
        let c = self.dynamics.c;
        match self.strategy {
            Strategy::NoDividend | Strategy::Barrier { .. } => {
                let t_ruin = t + x / c;
                if t_ruin <= t_end {
                    (0.0, 0.0, Some(t_ruin))
                } else {
                    (x - c * (t_end - t), 0.0, None)
                }
            }
            Strategy::ConstRate { rate } => {
                let t_ruin = t + x / (c + rate);
                let stop = t_ruin.min(t_end);
                let pv = self.pay_rate(rate, t, stop);
                if t_ruin <= t_end {
                    (0.0, pv, Some(t_ruin))
                } else {
                    (x - (c + rate) * (t_end - t), pv, None)
                }
            }
            Strategy::Threshold { level, rate } => {
                let mut t = t;
                let mut x = x;
                let mut pv = 0.0;
                if x > level {
                    let t_cross = t + (x - level) / (c + rate);
                    let stop = t_cross.min(t_end);
                    let stretch = self.pay_rate(rate, t, stop);
                    pv += stretch;
                    if t_cross >= t_end {
                        return (x - (c + rate) * (t_end - t), pv, None);
                    }
                    self.close_stretch(
                        t_cross,
                        EventKind::Cross,
                        x,
                        level,
                        rate * (t_cross - t),
                        stretch,
                    );
                    t = t_cross;
                    x = level;
                }
                let t_ruin = t + x / c;
                if t_ruin <= t_end {
                    (0.0, pv, Some(t_ruin))
                } else {
                    (x - c * (t_end - t), pv, None)
                }
            }
        }
    }

    fn run(mut self, x0: f64, rng: &mut ChaCha8Rng) -> PathOutcome {
        let Dynamics { lambda, beta, .. } = self.dynamics;
        let mut t = 0.0;
        let mut x = x0;
        let mut total = 0.0;
        let mut n_jumps = 0u64;

        if let Strategy::Barrier { level } = self.strategy {
            total += self.lump(0.0, &mut x, level);
        }
        if x <= 0.0 {
            self.close_stretch(0.0, EventKind::Ruin, x, x, 0.0, 0.0);
            return PathOutcome {
                discounted_dividends: total,
                ruin_time: RuinTime::Ruined(0.0),
                n_jumps,
            };
        }

        loop {
            // Both draws are always made so strategies share gain sequences.
            let wait: f64 = rng.sample::<f64, _>(Exp1) / lambda;
            let gain: f64 = rng.sample::<f64, _>(Exp1) / beta;
            let t_next = t + wait;
            let t_end = t_next.min(self.horizon);
            let before = x;
            let (x_end, pv, ruin) = self.drift(t, x, t_end);
            total += pv;
            let paid_rate = self.strategy.rate().unwrap_or(0.0);
            if let Some(t_ruin) = ruin {
                let paid = self.paid_since(t, before, t_ruin, paid_rate);
                self.close_stretch(t_ruin, EventKind::Ruin, before, 0.0, paid, pv);
                return PathOutcome {
                    discounted_dividends: total,
                    ruin_time: RuinTime::Ruined(t_ruin),
                    n_jumps,
                };
            }
            if t_next >= self.horizon {
                let paid = self.paid_since(t, before, self.horizon, paid_rate);
                self.close_stretch(self.horizon, EventKind::Horizon, before, x_end, paid, pv);
                return PathOutcome {
                    discounted_dividends: total,
                    ruin_time: RuinTime::Censored(self.horizon),
                    n_jumps,
                };
            }
            t = t_next;
            x = x_end + gain;
            n_jumps += 1;
            let paid = self.paid_since(t - wait, before, t, paid_rate);
            self.close_stretch(t, EventKind::Jump, x_end, x, paid, pv);
            if let Strategy::Barrier { level } = self.strategy {
                total += self.lump(t, &mut x, level);
            }
        }
    }

    /// Undiscounted rate dividends paid on `[t0, t1]` starting from `x0`
    /// (for the log only; after a crossing the stretch already logged is
    /// excluded).
    fn paid_since(&self, t0: f64, x0: f64, t1: f64, rate: f64) -> f64 {
        if self.log.is_none() || rate == 0.0 {
            return 0.0;
        }
        match self.strategy {
            Strategy::ConstRate { .. } => rate * (t1 - t0),
            Strategy::Threshold { level, .. } if x0 > level => {
                let t_cross = t0 + (x0 - level) / (self.dynamics.c + rate);
                if t_cross >= t1 {
                    rate * (t1 - t0)
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }
}

fn run_path(
    dynamics: Dynamics,
    model: &ValidatedModel,
    strategy: &Strategy,
    x: f64,
    cfg: &SimConfig,
    path_index: u64,
    log: Option<&mut Vec<PathEvent>>,
) -> PathOutcome {
    let horizon = cfg.resolve_horizon(model, strategy);
    let mut rng = stream(cfg.seed, ROLE_SURPLUS, path_index);
    match cfg.estimator {
        Estimator::Collapsed => PathSim {
            dynamics,
            strategy: *strategy,
            horizon,
            discount: Collapsed {
                scale: (-model.r()).exp(),
                theta: model.theta(),
            },
            log,
        }
        .run(x, &mut rng),
        Estimator::Raw => {
            let step = cfg.resolve_brownian_step(model);
            PathSim {
                dynamics,
                strategy: *strategy,
                horizon,
                discount: Raw {
                    r: model.r(),
                    m: model.discount().m(),
                    delta: model.delta(),
                    path: BrownianPath::new(cfg.seed, path_index, step, cfg.brownian_refinements),
                },
                log,
            }
            .run(x, &mut rng)
        }
    }
}

fn dynamics_of(model: &ValidatedModel) -> Dynamics {
    Dynamics {
        c: model.c(),
        lambda: model.lambda(),
        beta: model.beta(),
    }
}

fn check_inputs(
    model: &ValidatedModel,
    strategy: &Strategy,
    x: f64,
    cfg: &SimConfig,
) -> Result<()> {
    strategy.check()?;
    cfg.check(model)?;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "initial surplus must be >= 0, got {x}"
        )));
    }
    Ok(())
}

/// Simulate path `path_index` from surplus `x`.
pub fn sample_path(
    model: &ValidatedModel,
    strategy: &Strategy,
    x: f64,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<PathOutcome> {
    check_inputs(model, strategy, x, cfg)?;
    Ok(run_path(
        dynamics_of(model),
        model,
        strategy,
        x,
        cfg,
        path_index,
        None,
    ))
}

/// [`sample_path`] plus the event log.
pub fn sample_path_logged(
    model: &ValidatedModel,
    strategy: &Strategy,
    x: f64,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<(PathOutcome, Vec<PathEvent>)> {
    check_inputs(model, strategy, x, cfg)?;
    let mut log = Vec::new();
    let out = run_path(
        dynamics_of(model),
        model,
        strategy,
        x,
        cfg,
        path_index,
        Some(&mut log),
    );
    Ok((out, log))
}

/// Monte Carlo estimate of `V^D(x, r)` over `cfg.n_paths` paths.
pub fn estimate_value(
    model: &ValidatedModel,
    strategy: &Strategy,
    x: f64,
    cfg: &SimConfig,
) -> Result<SimEstimate> {
    check_inputs(model, strategy, x, cfg)?;
    let dynamics = dynamics_of(model);
    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| run_path(dynamics, model, strategy, x, cfg, i, None))
        .collect();
    let totals: Vec<f64> = outcomes.iter().map(|o| o.discounted_dividends).collect();
    let ruined = outcomes
        .iter()
        .filter(|o| matches!(o.ruin_time, RuinTime::Ruined(_)))
        .count();
    Ok(SimEstimate::from_samples(&totals, ruined))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceRow {
    pub strategy: Strategy,
    pub estimate: SimEstimate,
    /// `mean - best mean` (zero for the first row).
    pub diff_vs_best: f64,
    /// Standard error of the per-path difference to the first row.
    pub diff_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceTable {
    /// Sorted by descending mean.
    pub rows: Vec<DominanceRow>,
    /// `pairwise_se[i][j]`: standard error of the mean difference between
    /// rows `i` and `j`, from per-path differences.
    pub pairwise_se: Vec<Vec<f64>>,
}

impl DominanceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "rank,strategy,level,rate,mean,std_err,ruin_fraction,diff_vs_best,diff_se\n",
        );
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                i + 1,
                row.strategy.kind_name(),
                row.strategy.level().map(fmt_num).unwrap_or_default(),
                row.strategy.rate().map(fmt_num).unwrap_or_default(),
                fmt_num(row.estimate.mean),
                fmt_num(row.estimate.std_err),
                fmt_num(row.estimate.ruin_fraction),
                fmt_num(row.diff_vs_best),
                fmt_num(row.diff_se),
            ));
        }
        out
    }
}

/// Estimate every candidate on common random numbers and rank them.
pub fn dominance_study(
    model: &ValidatedModel,
    x: f64,
    candidates: &[Strategy],
    cfg: &SimConfig,
) -> Result<DominanceTable> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no candidate strategies".into()));
    }
    for s in candidates {
        check_inputs(model, s, x, cfg)?;
    }
    let dynamics = dynamics_of(model);
    let k = candidates.len();
    let per_path: Vec<Vec<PathOutcome>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            candidates
                .iter()
                .map(|s| run_path(dynamics, model, s, x, cfg, i, None))
                .collect()
        })
        .collect();
    let column =
        |j: usize| -> Vec<f64> { per_path.iter().map(|p| p[j].discounted_dividends).collect() };
    let columns: Vec<Vec<f64>> = (0..k).map(column).collect();
    let estimates: Vec<SimEstimate> = (0..k)
        .map(|j| {
            let ruined = per_path
                .iter()
                .filter(|p| matches!(p[j].ruin_time, RuinTime::Ruined(_)))
                .count();
            SimEstimate::from_samples(&columns[j], ruined)
        })
        .collect();

    let mut order: Vec<usize> = (0..k).collect();
    // stable: ties keep candidate order
    order.sort_by(|&a, &b| estimates[b].mean.total_cmp(&estimates[a].mean));

    let diff_se = |a: usize, b: usize| -> f64 {
        if a == b {
            return 0.0;
        }
        let d: Vec<f64> = columns[a]
            .iter()
            .zip(&columns[b])
            .map(|(x, y)| x - y)
            .collect();
        mean_and_se(&d).1
    };
    let pairwise_se: Vec<Vec<f64>> = order
        .iter()
        .map(|&a| order.iter().map(|&b| diff_se(a, b)).collect())
        .collect();
    let best = order[0];
    let rows = order
        .iter()
        .enumerate()
        .map(|(pos, &j)| DominanceRow {
            strategy: candidates[j],
            estimate: estimates[j],
            diff_vs_best: estimates[j].mean - estimates[best].mean,
            diff_se: pairwise_se[0][pos],
        })
        .collect();
    Ok(DominanceTable { rows, pairwise_se })
}

/// Sum of discounted dividends over paths, exposed for the reproducibility
/// check that concurrent and sequential aggregation agree bit for bit.
pub fn sequential_total(
    model: &ValidatedModel,
    strategy: &Strategy,
    x: f64,
    cfg: &SimConfig,
) -> Result<f64> {
    check_inputs(model, strategy, x, cfg)?;
    let dynamics = dynamics_of(model);
    let totals: Vec<f64> = (0..cfg.n_paths as u64)
        .rev()
        .map(|i| run_path(dynamics, model, strategy, x, cfg, i, None).discounted_dividends)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    Ok(pairwise_sum(&totals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{solve_barrier, solve_threshold};
    use crate::model::{validate, DualModelParams};

    fn reference() -> ValidatedModel {
        validate(
            DualModelParams::new(1.0, 2.0, 1.0),
            DiscountSpec::gbm(0.0, 0.1, 0.2),
        )
        .unwrap()
    }

    #[test]
    fn zero_surplus_is_immediate_ruin() {
        let m = reference();
        let cfg = SimConfig::new(1, 1);
        for s in [
            Strategy::NoDividend,
            Strategy::ConstRate { rate: 0.5 },
            Strategy::Threshold {
                level: 1.7,
                rate: 0.5,
            },
            Strategy::Barrier { level: 0.0 },
            Strategy::Barrier { level: 3.9 },
        ] {
            let out = sample_path(&m, &s, 0.0, &cfg, 0).unwrap();
            assert_eq!(out.discounted_dividends, 0.0);
            assert_eq!(out.ruin_time, RuinTime::Ruined(0.0));
        }
    }

    #[test]
    fn no_dividend_pays_nothing() {
        let m = reference();
        let cfg = SimConfig::new(1, 7);
        for i in 0..50 {
            let out = sample_path(&m, &Strategy::NoDividend, 1.0, &cfg, i).unwrap();
            assert_eq!(out.discounted_dividends, 0.0);
        }
    }

    #[test]
    fn deterministic_path_without_gains() {
        let m = reference();
        let cfg = SimConfig::new(1, 3);
        let dynamics = Dynamics {
            c: 1.0,
            lambda: 0.0,
            beta: 1.0,
        };
        let s = Strategy::Threshold {
            level: 1.736,
            rate: 0.5,
        };
        let out = run_path(dynamics, &m, &s, 1.0, &cfg, 0, None);
        assert_eq!(out.discounted_dividends, 0.0);
        assert_eq!(out.ruin_time, RuinTime::Ruined(1.0));
        assert_eq!(out.n_jumps, 0);

        // above the level: pay 0.5 for (3-1.736)/1.5, then decline to ruin
        let out = run_path(dynamics, &m, &s, 3.0, &cfg, 0, None);
        let t_cross: f64 = (3.0 - 1.736) / 1.5;
        let expected = 0.5 * (1.0 - (-0.08 * t_cross).exp()) / 0.08;
        assert!((out.discounted_dividends - expected).abs() < 1e-14);
        match out.ruin_time {
            RuinTime::Ruined(t) => assert!((t - (t_cross + 1.736)).abs() < 1e-14),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn barrier_pays_initial_excess() {
        let m = reference();
        let cfg = SimConfig::new(1, 3);
        let dynamics = Dynamics {
            c: 1.0,
            lambda: 0.0,
            beta: 1.0,
        };
        let out = run_path(
            dynamics,
            &m,
            &Strategy::Barrier { level: 2.0 },
            5.0,
            &cfg,
            0,
            None,
        );
        assert_eq!(out.discounted_dividends, 3.0);
        assert_eq!(out.ruin_time, RuinTime::Ruined(2.0));
    }

    #[test]
    fn horizon_censors() {
        let m = reference();
        let mut cfg = SimConfig::new(1, 3);
        cfg.horizon = Some(0.5);
        let dynamics = Dynamics {
            c: 1.0,
            lambda: 0.0,
            beta: 1.0,
        };
        let out = run_path(
            dynamics,
            &m,
            &Strategy::ConstRate { rate: 1.0 },
            5.0,
            &cfg,
            0,
            None,
        );
        assert_eq!(out.ruin_time, RuinTime::Censored(0.5));
        let expected = (1.0 - (-0.04f64).exp()) / 0.08;
        assert!((out.discounted_dividends - expected).abs() < 1e-14);
    }

    #[test]
    fn paths_are_reproducible() {
        let m = reference();
        let s = Strategy::Threshold {
            level: 1.7,
            rate: 0.5,
        };
        for est in [Estimator::Collapsed, Estimator::Raw] {
            let cfg = SimConfig::new(10, 42).with_estimator(est);
            let a = sample_path(&m, &s, 1.0, &cfg, 3).unwrap();
            let b = sample_path(&m, &s, 1.0, &cfg, 3).unwrap();
            assert_eq!(a, b);
            let c = sample_path(&m, &s, 1.0, &cfg, 4).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn estimate_is_order_independent() {
        let m = reference();
        let s = Strategy::Threshold {
            level: 1.7,
            rate: 0.5,
        };
        let cfg = SimConfig::new(2000, 9);
        let e = estimate_value(&m, &s, 1.0, &cfg).unwrap();
        let seq = sequential_total(&m, &s, 1.0, &cfg).unwrap();
        assert_eq!((e.mean * 2000.0).to_bits(), seq.to_bits());
        assert_eq!(e, estimate_value(&m, &s, 1.0, &cfg).unwrap());
    }

    #[test]
    fn rate_path_total_is_bounded() {
        let m = reference();
        let s = Strategy::ConstRate { rate: 0.5 };
        let cfg = SimConfig::new(1, 5);
        let tol = DEFAULT_REL_TRUNCATION * 0.5 / 0.08;
        for i in 0..500 {
            let out = sample_path(&m, &s, 50.0, &cfg, i).unwrap();
            assert!(out.discounted_dividends <= 0.5 / 0.08 + tol);
        }
    }

    #[test]
    fn log_is_consistent() {
        let m = reference();
        let sol = solve_barrier(&m).unwrap();
        let s = Strategy::Barrier { level: sol.b };
        let cfg = SimConfig::new(1, 11);
        let (out, log) = sample_path_logged(&m, &s, 5.0, &cfg, 0).unwrap();
        let lumps: f64 = log
            .iter()
            .filter(|e| e.kind == EventKind::Lump)
            .map(|e| e.dividend_paid * e.discount_weight)
            .sum();
        assert!((lumps - out.discounted_dividends).abs() < 1e-12);
        assert_eq!(log.first().unwrap().kind, EventKind::Lump);
        let last = log.last().unwrap().kind;
        assert!(last == EventKind::Ruin || last == EventKind::Horizon);
        let csv = path_log_csv(&log);
        assert!(csv.starts_with(
            "t_event,event_type,surplus_before,surplus_after,dividend_paid,discount_weight\n"
        ));

        let ts = solve_threshold(&m, 0.5).unwrap();
        let s = Strategy::Threshold {
            level: ts.xhat,
            rate: 0.5,
        };
        let (out, log) = sample_path_logged(&m, &s, 3.0, &cfg, 1).unwrap();
        let paid: f64 = log
            .iter()
            .map(|e| e.dividend_paid * e.discount_weight)
            .sum();
        assert!(
            (paid - out.discounted_dividends).abs() < 1e-9,
            "{paid} vs {}",
            out.discounted_dividends
        );
    }

    #[test]
    fn raw_rejected_for_levy() {
        use crate::levy::{LevyMeasure, LevyMeasureSpec};
        let m = validate(
            DualModelParams::new(1.0, 2.0, 1.0),
            DiscountSpec::ExpLevy {
                r: 0.0,
                m: 0.1,
                delta: 0.2,
                levy: LevyMeasureSpec {
                    measure: LevyMeasure::Zero,
                    gamma: 0.0,
                },
            },
        )
        .unwrap();
        let cfg = SimConfig::new(10, 1).with_estimator(Estimator::Raw);
        assert!(matches!(
            estimate_value(&m, &Strategy::NoDividend, 1.0, &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let m = reference();
        let s = Strategy::NoDividend;
        assert!(estimate_value(&m, &s, 1.0, &SimConfig::new(0, 1)).is_err());
        let mut cfg = SimConfig::new(1, 1);
        cfg.brownian_step = Some(0.0);
        assert!(estimate_value(&m, &s, 1.0, &cfg).is_err());
        assert!(estimate_value(
            &m,
            &Strategy::ConstRate { rate: -1.0 },
            1.0,
            &SimConfig::new(1, 1)
        )
        .is_err());
        assert!(estimate_value(&m, &s, -1.0, &SimConfig::new(1, 1)).is_err());
    }

    #[test]
    fn brownian_refinement_keeps_skeleton() {
        let mut coarse = BrownianPath::new(1, 0, 0.5, 0);
        let mut fine = BrownianPath::new(1, 0, 0.5, 3);
        for k in 0..20u64 {
            assert_eq!(coarse.at_node(k), fine.at_node(8 * k));
        }
    }

    #[test]
    fn brownian_increments_have_unit_variance() {
        let n = 20_000u64;
        let mut acc = 0.0;
        for p in 0..n {
            let mut bp = BrownianPath::new(5, p, 0.3, 2);
            let b = bp.at_event(1.234);
            acc += b * b;
        }
        let var = acc / n as f64;
        // Var B_t = t; sample variance SE ~ t sqrt(2/n)
        assert!(
            (var - 1.234).abs() < 4.0 * 1.234 * (2.0 / n as f64).sqrt(),
            "{var}"
        );
    }

    #[test]
    fn closed_form_of_candidates() {
        let m = reference();
        let ts = solve_threshold(&m, 0.5).unwrap();
        let v = Strategy::Threshold {
            level: ts.xhat,
            rate: 0.5,
        }
        .closed_form_value(&m, 1.0)
        .unwrap();
        assert!((v - ts.f(1.0)).abs() < 1e-12);
        let v = Strategy::ConstRate { rate: 0.5 }
            .closed_form_value(&m, 1.0)
            .unwrap();
        assert!((v - full_payout_value(&m, 0.5, 1.0, true).unwrap()).abs() < 1e-15);
        assert_eq!(
            Strategy::NoDividend.closed_form_value(&m, 1.0).unwrap(),
            0.0
        );
    }
}
