//! Closed-form value functions.
//!
//! All values are computed on the `F`-scale: the value at discount exponent
//! `r` is `e^{-r} F(x)`, and the factor is applied only by the `*_value`
//! functions that take `r`.
//!
//! Restricted dividends (rate at most `xi`):
//!
//! * full payout `F(x) = xi/theta (1 - e^{alpha x})`, optimal when
//!   `-xi alpha / theta <= 1`;
//! * otherwise a threshold strategy with
//!   `F(x) = B (e^{s1 x} - e^{s2 x})` below `xhat` and
//!   `F(x) = A e^{r1 x} + xi/theta` above it.
//!
//! Unrestricted dividends: barrier strategy with
//! `F(x) = K (e^{s3 x} - e^{s4 x})` below `b` and `x - b + F(b)` above.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ValidatedModel;

/// Regime boundary slack: `-xi alpha / theta <= 1 + REGIME_EPS` counts as
/// full payout.
pub const REGIME_EPS: f64 = 1e-12;

/// Both roots of a quadratic whose roots are known to have opposite signs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticRoots {
    pub pos: f64,
    pub neg: f64,
}

/// Roots of `a2 x^2 + a1 x + a0` for `a2 > 0`, `a0 < 0`.
///
/// The larger-magnitude root comes from the quadratic formula with the sign
/// chosen to avoid cancellation, the other from the product `a0 / a2`.
pub fn solve_signed_quadratic(a2: f64, a1: f64, a0: f64) -> Result<QuadraticRoots> {
    if !(a2 > 0.0 && a0 < 0.0 && a2.is_finite() && a1.is_finite() && a0.is_finite()) {
        return Err(Error::PreconditionViolated(format!(
            "need a2 > 0 and a0 < 0, got a2={a2}, a1={a1}, a0={a0}"
        )));
    }
    // a2 > 0 > a0 makes the discriminant strictly larger than a1^2.
    let disc = a1.mul_add(a1, -4.0 * a2 * a0);
    let q = -0.5 * (a1 + a1.signum() * disc.sqrt());
    let (x1, x2) = (q / a2, a0 / q);
    Ok(if x1 > 0.0 {
        QuadraticRoots { pos: x1, neg: x2 }
    } else {
        QuadraticRoots { pos: x2, neg: x1 }
    })
}

/// Negative root `alpha` of `(c+xi) a^2 + (theta + lambda - beta c - beta xi) a - theta beta`.
fn payout_root(model: &ValidatedModel, xi: f64) -> Result<f64> {
    let (c, lambda, beta, theta) = (model.c(), model.lambda(), model.beta(), model.theta());
    let roots =
        solve_signed_quadratic(c + xi, theta + lambda - beta * c - beta * xi, -theta * beta)?;
    Ok(roots.neg)
}

/// Roots of `(c+xi) x^2 + [m + lambda - delta^2/2 - beta (c+xi)] x - beta (m - delta^2/2)`,
/// written in the drift parameters rather than `theta`.
fn upper_branch_roots(model: &ValidatedModel, xi: f64) -> Result<QuadraticRoots> {
    let (c, lambda, beta) = (model.c(), model.lambda(), model.beta());
    let half_var = 0.5 * model.delta() * model.delta();
    let m = model.effective_drift();
    solve_signed_quadratic(
        c + xi,
        m + lambda - half_var - beta * (c + xi),
        -beta * (m - half_var),
    )
}

/// Roots of `c x^2 + (m + lambda - delta^2/2 - beta c) x - beta (m - delta^2/2)`.
fn lower_branch_roots(model: &ValidatedModel) -> Result<QuadraticRoots> {
    let (c, lambda, beta) = (model.c(), model.lambda(), model.beta());
    let half_var = 0.5 * model.delta() * model.delta();
    let m = model.effective_drift();
    solve_signed_quadratic(c, m + lambda - half_var - beta * c, -beta * (m - half_var))
}

/// Same quadratic as [`lower_branch_roots`], in terms of `theta`.
fn barrier_roots(model: &ValidatedModel) -> Result<QuadraticRoots> {
    let (c, lambda, beta, theta) = (model.c(), model.lambda(), model.beta(), model.theta());
    solve_signed_quadratic(c, theta + lambda - beta * c, -beta * theta)
}

/// Every characteristic root of the model for rate cap `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    /// Full-payout root (from `theta`).
    pub alpha: f64,
    /// Upper-branch root (from `m` and `delta`); equal to `alpha`.
    pub r1: f64,
    pub s1: f64,
    pub s2: f64,
    /// Barrier roots (from `theta`); equal to `(s1, s2)`.
    pub s3: f64,
    pub s4: f64,
}

pub fn characteristic_roots(model: &ValidatedModel, xi: f64) -> Result<RootSet> {
    check_rate(xi)?;
    let lower = lower_branch_roots(model)?;
    let barrier = barrier_roots(model)?;
    Ok(RootSet {
        alpha: payout_root(model, xi)?,
        r1: upper_branch_roots(model, xi)?.neg,
        s1: lower.pos,
        s2: lower.neg,
        s3: barrier.pos,
        s4: barrier.neg,
    })
}

fn check_rate(xi: f64) -> Result<()> {
    if xi.is_finite() && xi > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter("xi"))
    }
}

/// Value of paying the maximal rate `xi` forever:
/// `xi e^{-r} (1 - e^{alpha x}) / theta`, with `e^{-r}` omitted unless
/// `include_r`.
pub fn full_payout_value(model: &ValidatedModel, xi: f64, x: f64, include_r: bool) -> Result<f64> {
    check_rate(xi)?;
    if !(x >= 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "surplus must be >= 0, got {x}"
        )));
    }
    let alpha = payout_root(model, xi)?;
    let f = -xi / model.theta() * (alpha * x).exp_m1();
    Ok(if include_r { (-model.r()).exp() * f } else { f })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    AlwaysMax,
    Threshold,
}

/// Restricted-dividend solution.
///
/// In the `AlwaysMax` regime `xhat = 0`, `a = -xi/theta`, `b = 0`, so the
/// upper branch `a e^{r1 x} + xi/theta` is exactly the full-payout value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSolution {
    pub regime: Regime,
    pub xi: f64,
    pub alpha: f64,
    pub r1: f64,
    pub s1: f64,
    pub s2: f64,
    pub a: f64,
    pub b: f64,
    pub xhat: f64,
    pub theta: f64,
}

impl ThresholdSolution {
    /// Upper-branch constant in `F1 = A e^{r1 x} + xi/theta`.
    pub fn cap_value(&self) -> f64 {
        self.xi / self.theta
    }

    pub fn f1(&self, x: f64) -> f64 {
        self.a * (self.r1 * x).exp() + self.cap_value()
    }

    pub fn f2(&self, x: f64) -> f64 {
        self.b * ((self.s1 * x).exp() - (self.s2 * x).exp())
    }

    pub fn f1_prime(&self, x: f64) -> f64 {
        self.a * self.r1 * (self.r1 * x).exp()
    }

    pub fn f2_prime(&self, x: f64) -> f64 {
        self.b * (self.s1 * (self.s1 * x).exp() - self.s2 * (self.s2 * x).exp())
    }

    /// `F(x)`; the lower branch includes `xhat`.
    pub fn f(&self, x: f64) -> f64 {
        match self.regime {
            Regime::AlwaysMax => -self.cap_value() * (self.alpha * x).exp_m1(),
            Regime::Threshold if x <= self.xhat => self.f2(x),
            Regime::Threshold => self.f1(x),
        }
    }

    /// `F'(x)`, left derivative at `xhat`.
    pub fn f_prime(&self, x: f64) -> f64 {
        match self.regime {
            Regime::AlwaysMax => -self.cap_value() * self.alpha * (self.alpha * x).exp(),
            Regime::Threshold if x <= self.xhat => self.f2_prime(x),
            Regime::Threshold => self.f1_prime(x),
        }
    }

    /// Value of the threshold strategy at an arbitrary level `xhat > 0`
    /// (not necessarily optimal): `A` and `B` from value matching and the
    /// cancellation of the `e^{beta x}` terms below the level.
    pub fn at_level(model: &ValidatedModel, xi: f64, xhat: f64) -> Result<ThresholdSolution> {
        check_rate(xi)?;
        if !(xhat > 0.0 && xhat.is_finite()) {
            return Err(Error::PreconditionViolated(format!(
                "threshold level must be > 0, got {xhat}"
            )));
        }
        let alpha = payout_root(model, xi)?;
        let r1 = upper_branch_roots(model, xi)?.neg;
        let QuadraticRoots { pos: s1, neg: s2 } = lower_branch_roots(model)?;
        let (a, b) = threshold_constants(model.beta(), model.theta(), xi, r1, s1, s2, xhat);
        Ok(ThresholdSolution {
            regime: Regime::Threshold,
            xi,
            alpha,
            r1,
            s1,
            s2,
            a,
            b,
            xhat,
            theta: model.theta(),
        })
    }
}

fn threshold_constants(
    beta: f64,
    theta: f64,
    xi: f64,
    r1: f64,
    s1: f64,
    s2: f64,
    xhat: f64,
) -> (f64, f64) {
    let e1 = (s1 * xhat).exp();
    let e2 = (s2 * xhat).exp();
    let den = (s1 - r1) * (beta - s2) * e1 - (s2 - r1) * (beta - s1) * e2;
    let b = xi * (-r1) / (beta * theta) * (beta - s1) * (beta - s2) / den;
    let a = -xi * (beta - r1) / (beta * theta) * (s1 * (beta - s2) * e1 - s2 * (beta - s1) * e2)
        / den
        * (-r1 * xhat).exp();
    (a, b)
}

/// Optimal restricted-dividend strategy for rate cap `xi`.
pub fn solve_threshold(model: &ValidatedModel, xi: f64) -> Result<ThresholdSolution> {
    check_rate(xi)?;
    let theta = model.theta();
    let beta = model.beta();
    let alpha = payout_root(model, xi)?;
    let r1 = upper_branch_roots(model, xi)?.neg;
    let QuadraticRoots { pos: s1, neg: s2 } = lower_branch_roots(model)?;

    if -xi * alpha / theta <= 1.0 + REGIME_EPS {
        return Ok(ThresholdSolution {
            regime: Regime::AlwaysMax,
            xi,
            alpha,
            r1,
            s1,
            s2,
            a: -xi / theta,
            b: 0.0,
            xhat: 0.0,
            theta,
        });
    }

    let arg = s2 * (s2 - r1) * (beta - s1) / (s1 * (s1 - r1) * (beta - s2));
    if !(arg > 1.0) {
        return Err(Error::DegenerateThreshold { arg });
    }
    let xhat = arg.ln() / (s1 - s2);
    let (a, b) = threshold_constants(beta, theta, xi, r1, s1, s2, xhat);
    Ok(ThresholdSolution {
        regime: Regime::Threshold,
        xi,
        alpha,
        r1,
        s1,
        s2,
        a,
        b,
        xhat,
        theta,
    })
}

/// `e^{-r} F(x)` for the restricted solution.
pub fn threshold_value(sol: &ThresholdSolution, x: f64, r: f64) -> f64 {
    (-r).exp() * sol.f(x)
}

/// Unrestricted-dividend (barrier) solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSolution {
    pub s3: f64,
    pub s4: f64,
    pub k: f64,
    pub b: f64,
    pub theta: f64,
}

impl BarrierSolution {
    fn lower(&self, x: f64) -> f64 {
        self.k * ((self.s3 * x).exp() - (self.s4 * x).exp())
    }

    /// `F(b, b)`, the value at the barrier.
    pub fn value_at_barrier(&self) -> f64 {
        self.lower(self.b)
    }

    pub fn f(&self, x: f64) -> f64 {
        if x <= self.b {
            self.lower(x)
        } else {
            x - self.b + self.value_at_barrier()
        }
    }

    /// `F'(x)`, left derivative at `b`.
    pub fn f_prime(&self, x: f64) -> f64 {
        if x <= self.b {
            self.k * (self.s3 * (self.s3 * x).exp() - self.s4 * (self.s4 * x).exp())
        } else {
            1.0
        }
    }

    /// Value of the barrier strategy at an arbitrary level `b >= 0`.
    pub fn at_level(model: &ValidatedModel, b: f64) -> Result<BarrierSolution> {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::PreconditionViolated(format!(
                "barrier level must be >= 0, got {b}"
            )));
        }
        let QuadraticRoots { pos: s3, neg: s4 } = barrier_roots(model)?;
        let k = barrier_scale(model, s3, s4, b);
        Ok(BarrierSolution {
            s3,
            s4,
            k,
            b,
            theta: model.theta(),
        })
    }
}

fn barrier_scale(model: &ValidatedModel, s3: f64, s4: f64, b: f64) -> f64 {
    let (c, theta) = (model.c(), model.theta());
    model.lambda()
        / model.beta()
        / ((c * s3 + theta) * (s3 * b).exp() - (c * s4 + theta) * (s4 * b).exp())
}

/// Optimal unrestricted-dividend strategy.
pub fn solve_barrier(model: &ValidatedModel) -> Result<BarrierSolution> {
    let (c, theta) = (model.c(), model.theta());
    let QuadraticRoots { pos: s3, neg: s4 } = barrier_roots(model)?;
    let arg = s4 * (c * s4 + theta) / (s3 * (c * s3 + theta));
    if !(arg > 1.0) {
        return Err(Error::DegenerateBarrier { arg });
    }
    let b = arg.ln() / (s3 - s4);
    let k = barrier_scale(model, s3, s4, b);
    Ok(BarrierSolution {
        s3,
        s4,
        k,
        b,
        theta,
    })
}

/// `e^{-r} F(x)` for the barrier solution.
pub fn barrier_value(sol: &BarrierSolution, x: f64, r: f64) -> f64 {
    (-r).exp() * sol.f(x)
}

// ---------------------------------------------------------------------------
// JSON wire format

/// Either solution, tagged by `kind` on the wire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solution {
    Threshold(ThresholdSolution),
    Barrier(BarrierSolution),
}

impl Solution {
    pub fn level(&self) -> f64 {
        match self {
            Solution::Threshold(s) => s.xhat,
            Solution::Barrier(s) => s.b,
        }
    }

    pub fn theta(&self) -> f64 {
        match self {
            Solution::Threshold(s) => s.theta,
            Solution::Barrier(s) => s.theta,
        }
    }

    pub fn f(&self, x: f64) -> f64 {
        match self {
            Solution::Threshold(s) => s.f(x),
            Solution::Barrier(s) => s.f(x),
        }
    }

    pub fn regime_name(&self) -> &'static str {
        match self {
            Solution::Threshold(s) => match s.regime {
                Regime::AlwaysMax => "alwaysmax",
                Regime::Threshold => "threshold",
            },
            Solution::Barrier(_) => "barrier",
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&SolutionWire::from(*self)).expect("solution serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Solution> {
        let wire: SolutionWire = serde_json::from_str(s)?;
        wire.try_into()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum SolutionWire {
    Threshold {
        regime: Regime,
        xi: f64,
        roots: ThresholdRoots,
        constants: ThresholdConstants,
        level: ThresholdLevel,
        theta: f64,
    },
    Barrier {
        regime: String,
        roots: BarrierRoots,
        constants: BarrierConstants,
        level: BarrierLevel,
        theta: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdRoots {
    alpha: f64,
    r1: f64,
    s1: f64,
    s2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdConstants {
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "B")]
    b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdLevel {
    xhat: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BarrierRoots {
    s3: f64,
    s4: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BarrierConstants {
    #[serde(rename = "K")]
    k: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BarrierLevel {
    b: f64,
}

impl From<Solution> for SolutionWire {
    fn from(sol: Solution) -> Self {
        match sol {
            Solution::Threshold(s) => SolutionWire::Threshold {
                regime: s.regime,
                xi: s.xi,
                roots: ThresholdRoots {
                    alpha: s.alpha,
                    r1: s.r1,
                    s1: s.s1,
                    s2: s.s2,
                },
                constants: ThresholdConstants { a: s.a, b: s.b },
                level: ThresholdLevel { xhat: s.xhat },
                theta: s.theta,
            },
            Solution::Barrier(s) => SolutionWire::Barrier {
                regime: "barrier".into(),
                roots: BarrierRoots { s3: s.s3, s4: s.s4 },
                constants: BarrierConstants { k: s.k },
                level: BarrierLevel { b: s.b },
                theta: s.theta,
            },
        }
    }
}

impl TryFrom<SolutionWire> for Solution {
    type Error = Error;

    fn try_from(wire: SolutionWire) -> Result<Solution> {
        Ok(match wire {
            SolutionWire::Threshold {
                regime,
                xi,
                roots,
                constants,
                level,
                theta,
            } => Solution::Threshold(ThresholdSolution {
                regime,
                xi,
                alpha: roots.alpha,
                r1: roots.r1,
                s1: roots.s1,
                s2: roots.s2,
                a: constants.a,
                b: constants.b,
                xhat: level.xhat,
                theta,
            }),
            SolutionWire::Barrier {
                regime,
                roots,
                constants,
                level,
                theta,
            } => {
                if regime != "barrier" {
                    return Err(Error::PreconditionViolated(format!(
                        "barrier solution has regime `{regime}`"
                    )));
                }
                Solution::Barrier(BarrierSolution {
                    s3: roots.s3,
                    s4: roots.s4,
                    k: constants.k,
                    b: level.b,
                    theta,
                })
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, DiscountSpec, DualModelParams};

    fn reference() -> ValidatedModel {
        validate(
            DualModelParams::new(1.0, 2.0, 1.0),
            DiscountSpec::gbm(0.0, 0.1, 0.2),
        )
        .unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn quadratic_examples() {
        let r = solve_signed_quadratic(1.0, 0.0, -1.0).unwrap();
        assert_eq!((r.pos, r.neg), (1.0, -1.0));
        // Frozen from a 40-digit evaluation of the textbook formula.
        let r = solve_signed_quadratic(1.5, 0.58, -0.08).unwrap();
        assert!(close(r.pos, 0.107_849_519_948_707_13, 1e-15), "{}", r.pos);
        assert!(close(r.neg, -0.494_516_186_615_373_8, 1e-15), "{}", r.neg);
        let r = solve_signed_quadratic(1.0, 1.08, -0.08).unwrap();
        assert!(close(r.pos, 0.069_590_026_165_126_82, 1e-15));
        assert!(close(r.neg, -1.149_590_026_165_126_8, 1e-15));
    }

    #[test]
    fn quadratic_sign_precondition() {
        assert!(matches!(
            solve_signed_quadratic(1.0, 0.0, 1.0),
            Err(Error::PreconditionViolated(_))
        ));
        assert!(solve_signed_quadratic(-1.0, 0.0, -1.0).is_err());
        assert!(solve_signed_quadratic(0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn quadratic_without_cancellation() {
        // roots 1e-9 and -1e9: the naive formula loses the small root
        let r = solve_signed_quadratic(1.0, 1e9 - 1e-9, -1.0).unwrap();
        assert!(close(r.pos / 1e-9, 1.0, 1e-12));
        assert!(close(r.neg / -1e9, 1.0, 1e-12));
    }

    #[test]
    fn full_payout_examples() {
        let m = reference();
        assert_eq!(full_payout_value(&m, 0.5, 0.0, false).unwrap(), 0.0);
        assert!(close(
            full_payout_value(&m, 0.5, 1e6, false).unwrap(),
            6.25,
            1e-12
        ));
        let v = full_payout_value(&m, 0.5, 1.0, false).unwrap();
        assert!(close(v, 2.438_338_142_409_88, 1e-12), "{v}");
        let with_r = validate(*m.params(), DiscountSpec::gbm(1.0, 0.1, 0.2)).unwrap();
        let v1 = full_payout_value(&with_r, 0.5, 1.0, true).unwrap();
        assert!(close(v1, v * (-1.0f64).exp(), 1e-14));
    }

    #[test]
    fn reference_threshold() {
        let s = solve_threshold(&reference(), 0.5).unwrap();
        assert_eq!(s.regime, Regime::Threshold);
        assert!(close(
            -s.xi * s.alpha / s.theta,
            3.090_726_166_346_086,
            1e-12
        ));
        assert!(close(s.r1, -0.494_516_186_615_373_8, 1e-14));
        assert!(close(s.s1, 0.069_590_026_165_126_82, 1e-14));
        assert!(close(s.s2, -1.149_590_026_165_126_8, 1e-14));
        assert!(close(s.xhat, 1.736_115_769_521_355_3, 1e-12), "{}", s.xhat);
        assert!(close(s.b, 4.259_702_528_452_646, 1e-12), "{}", s.b);
        assert!(close(s.a, -4.771_748_239_686_143, 1e-12), "{}", s.a);
        assert!(close(s.f2(s.xhat), 4.227_821_500_961_741, 1e-12));
        assert!(close(s.f1(s.xhat), s.f2(s.xhat), 1e-12));
        assert!(close(s.f2_prime(s.xhat), 1.0, 1e-12));
        assert!(close(s.f1_prime(s.xhat), 1.0, 1e-12));
        assert_eq!(threshold_value(&s, 0.0, 0.0), 0.0);
        assert!(close(threshold_value(&s, 1e4, 0.0), 6.25, 1e-12));
    }

    #[test]
    fn tiny_rate_is_always_max() {
        let s = solve_threshold(&reference(), 1e-6).unwrap();
        assert_eq!(s.regime, Regime::AlwaysMax);
        assert_eq!(s.xhat, 0.0);
        let fp = full_payout_value(&reference(), 1e-6, 2.0, false).unwrap();
        assert_eq!(threshold_value(&s, 2.0, 0.0), fp);
    }

    #[test]
    fn threshold_level_maximises_b() {
        let m = reference();
        let opt = solve_threshold(&m, 0.5).unwrap();
        for eps in [0.01, 0.1, 0.5] {
            for lvl in [opt.xhat - eps, opt.xhat + eps] {
                let other = ThresholdSolution::at_level(&m, 0.5, lvl).unwrap();
                assert!(other.b <= opt.b, "B({lvl}) = {} > {}", other.b, opt.b);
            }
        }
        // grid search agrees with the closed-form level
        let (best, _) = (1..4000)
            .map(|i| i as f64 * 1e-3)
            .map(|l| (l, ThresholdSolution::at_level(&m, 0.5, l).unwrap().b))
            .fold(
                (0.0, f64::NEG_INFINITY),
                |acc, p| if p.1 > acc.1 { p } else { acc },
            );
        assert!((best - opt.xhat).abs() < 2e-3);
    }

    #[test]
    fn reference_barrier() {
        let s = solve_barrier(&reference()).unwrap();
        assert!(close(s.s3, 0.069_590_026_165_126_82, 1e-14));
        assert!(close(s.s4, -1.149_590_026_165_126_8, 1e-14));
        assert!(close(s.b, 3.913_836_764_685_92, 1e-12), "{}", s.b);
        assert!(close(s.k, 9.600_996_533_618_756, 1e-11), "{}", s.k);
        assert!(close(s.value_at_barrier(), 12.5, 1e-11));
        assert!(close(s.f_prime(s.b), 1.0, 1e-12));
        assert_eq!(barrier_value(&s, 0.0, 0.0), 0.0);
        assert!(close(barrier_value(&s, s.b + 1.0, 0.0), 13.5, 1e-11));
        assert!(close(
            barrier_value(&s, s.b, 1.0),
            4.598_493_014_643_029,
            1e-11
        ));
    }

    #[test]
    fn barrier_level_maximises_value() {
        let m = reference();
        let opt = solve_barrier(&m).unwrap();
        for eps in [0.01, 0.1, 0.5] {
            for lvl in [opt.b - eps, opt.b + eps] {
                let other = BarrierSolution::at_level(&m, lvl).unwrap();
                for x in [0.3, 1.0, 2.0, 3.5] {
                    assert!(other.f(x) <= opt.f(x));
                }
            }
        }
    }

    #[test]
    fn unprofitable_barrier_is_degenerate() {
        let m = validate(
            DualModelParams::new(1.0, 0.5, 1.0),
            DiscountSpec::gbm(0.0, 0.1, 0.2),
        )
        .unwrap();
        assert!(matches!(
            solve_barrier(&m),
            Err(Error::DegenerateBarrier { .. })
        ));
    }

    #[test]
    fn solution_json_round_trip_is_bit_exact() {
        let m = reference();
        for sol in [
            Solution::Threshold(solve_threshold(&m, 0.5).unwrap()),
            Solution::Threshold(solve_threshold(&m, 0.01).unwrap()),
            Solution::Barrier(solve_barrier(&m).unwrap()),
        ] {
            let s = sol.to_json_string();
            assert_eq!(Solution::from_json_str(&s).unwrap(), sol);
        }
    }

    #[test]
    fn solution_json_shape() {
        let sol = Solution::Threshold(solve_threshold(&reference(), 0.5).unwrap());
        let v: serde_json::Value = serde_json::from_str(&sol.to_json_string()).unwrap();
        assert_eq!(v["kind"], "threshold");
        assert_eq!(v["regime"], "threshold");
        assert!(v["constants"]["A"].is_number());
        assert!(v["level"]["xhat"].is_number());
        let sol = Solution::Barrier(solve_barrier(&reference()).unwrap());
        let v: serde_json::Value = serde_json::from_str(&sol.to_json_string()).unwrap();
        assert_eq!(v["kind"], "barrier");
        assert!(v["constants"]["K"].is_number());
        assert!(v["level"]["b"].is_number());
    }
}
