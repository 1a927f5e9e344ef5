//! HJB residuals of the closed-form solutions.
//!
//! With `V(x, r) = e^{-r} F(x)` the `r`-derivative terms collapse to
//! `-theta F`, so the restricted HJB equation becomes
//!
//! ```text
//! -c F'(x) - theta F(x) + lambda J(x) + xi max(0, 1 - F'(x)) = 0,
//! J(x) = int_0^inf [F(x+y) - F(x)] beta e^{-beta y} dy,
//! ```
//!
//! and the unrestricted one `max{-c F' - theta F + lambda J ; 1 - F'} = 0`.
//! `J` is evaluated analytically from a piecewise exponential-plus-linear
//! description of `F`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{BarrierSolution, Regime, Solution, ThresholdSolution};
use crate::error::{Error, Result};
use crate::model::ValidatedModel;
use crate::util::fmt_num;

/// `coef * e^{rate * u}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm {
    pub coef: f64,
    pub rate: f64,
}

/// `sum exps + constant + slope * u` on `[start, end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub exps: Vec<ExpTerm>,
    pub constant: f64,
    pub slope: f64,
}

impl Segment {
    fn eval(&self, u: f64) -> f64 {
        self.exps
            .iter()
            .map(|t| t.coef * (t.rate * u).exp())
            .sum::<f64>()
            + self.constant
            + self.slope * u
    }

    fn derivative(&self, u: f64) -> f64 {
        self.exps
            .iter()
            .map(|t| t.coef * t.rate * (t.rate * u).exp())
            .sum::<f64>()
            + self.slope
    }
}

/// Piecewise function on `[0, inf)`; the last segment must be unbounded.
/// A point on a boundary belongs to the left segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseFn {
    pub segments: Vec<Segment>,
}

impl PiecewiseFn {
    fn segment(&self, x: f64) -> &Segment {
        self.segments
            .iter()
            .find(|s| x <= s.end)
            .unwrap_or_else(|| self.segments.last().expect("nonempty"))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.segment(x).eval(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.segment(x).derivative(x)
    }

    /// Interior segment boundaries.
    pub fn kinks(&self) -> Vec<f64> {
        self.segments
            .iter()
            .map(|s| s.end)
            .filter(|e| e.is_finite())
            .collect()
    }

    pub fn from_threshold(sol: &ThresholdSolution) -> PiecewiseFn {
        let cap = sol.cap_value();
        match sol.regime {
            Regime::AlwaysMax => PiecewiseFn {
                segments: vec![Segment {
                    start: 0.0,
                    end: f64::INFINITY,
                    exps: vec![ExpTerm {
                        coef: -cap,
                        rate: sol.alpha,
                    }],
                    constant: cap,
                    slope: 0.0,
                }],
            },
            Regime::Threshold => PiecewiseFn {
                segments: vec![
                    Segment {
                        start: 0.0,
                        end: sol.xhat,
                        exps: vec![
                            ExpTerm {
                                coef: sol.b,
                                rate: sol.s1,
                            },
                            ExpTerm {
                                coef: -sol.b,
                                rate: sol.s2,
                            },
                        ],
                        constant: 0.0,
                        slope: 0.0,
                    },
                    Segment {
                        start: sol.xhat,
                        end: f64::INFINITY,
                        exps: vec![ExpTerm {
                            coef: sol.a,
                            rate: sol.r1,
                        }],
                        constant: cap,
                        slope: 0.0,
                    },
                ],
            },
        }
    }

    pub fn from_barrier(sol: &BarrierSolution) -> PiecewiseFn {
        PiecewiseFn {
            segments: vec![
                Segment {
                    start: 0.0,
                    end: sol.b,
                    exps: vec![
                        ExpTerm {
                            coef: sol.k,
                            rate: sol.s3,
                        },
                        ExpTerm {
                            coef: -sol.k,
                            rate: sol.s4,
                        },
                    ],
                    constant: 0.0,
                    slope: 0.0,
                },
                Segment {
                    start: sol.b,
                    end: f64::INFINITY,
                    exps: vec![],
                    constant: sol.value_at_barrier() - sol.b,
                    slope: 1.0,
                },
            ],
        }
    }
}

/// `int_0^inf [F(x+y) - F(x)] beta e^{-beta y} dy`, in closed form.
///
/// Writing the integral as `int_x^inf F(u) w(u) du - F(x)` with
/// `w(u) = beta e^{-beta (u - x)}`, each piece `[a, e]` contributes
///
/// * `k e^{rho u}`: `k beta / (beta - rho) [e^{rho a - beta(a-x)} - e^{rho e - beta(e-x)}]`,
/// * constant: `c0 [e^{-beta(a-x)} - e^{-beta(e-x)}]`,
/// * `c1 u`: `c1 [(a + 1/beta) e^{-beta(a-x)} - (e + 1/beta) e^{-beta(e-x)}]`,
///   i.e. `a P(Y > a-x) + int_{a-x}^inf (1 - P(y)) dy` for the tail parts.
pub fn jump_integral(f: &PiecewiseFn, x: f64, beta: f64) -> Result<f64> {
    let mut acc = 0.0;
    for seg in &f.segments {
        for t in &seg.exps {
            if t.rate >= beta {
                return Err(Error::ExponentAtOrAboveBeta { rate: t.rate, beta });
            }
        }
        if seg.end <= x {
            continue;
        }
        let a = seg.start.max(x);
        let wa = (-beta * (a - x)).exp();
        let bounded = seg.end.is_finite();
        let we = if bounded {
            (-beta * (seg.end - x)).exp()
        } else {
            0.0
        };
        for t in &seg.exps {
            let lo = (t.rate * a - beta * (a - x)).exp();
            let hi = if bounded {
                (t.rate * seg.end - beta * (seg.end - x)).exp()
            } else {
                0.0
            };
            acc += t.coef * beta / (beta - t.rate) * (lo - hi);
        }
        acc += seg.constant * (wa - we);
        if seg.slope != 0.0 {
            let tail_hi = if bounded {
                (seg.end + 1.0 / beta) * we
            } else {
                0.0
            };
            acc += seg.slope * ((a + 1.0 / beta) * wa - tail_hi);
        }
    }
    Ok(acc - f.eval(x))
}

/// Relative step of the central finite difference used to cross-check `F'`.
pub const FD_REL_STEP: f64 = 1e-6;
/// Allowed disagreement between analytic and finite-difference `F'`,
/// relative to `max(1, |F'|)`.
pub const FD_TOL: f64 = 1e-6;

/// Central difference of `F` at `x`, one-sided when the stencil would
/// straddle a kink or leave `[0, inf)`.
pub fn fd_derivative(f: &PiecewiseFn, x: f64) -> f64 {
    let h = FD_REL_STEP * x.max(1.0);
    let straddles = |lo: f64, hi: f64| f.kinks().iter().any(|&k| lo < k && k < hi);
    if x - h >= 0.0 && !straddles(x - h, x + h) {
        (f.eval(x + h) - f.eval(x - h)) / (2.0 * h)
    } else if !straddles(x, x + 2.0 * h) && x + 2.0 * h > x {
        // second-order forward difference
        (-3.0 * f.eval(x) + 4.0 * f.eval(x + h) - f.eval(x + 2.0 * h)) / (2.0 * h)
    } else {
        (3.0 * f.eval(x) - 4.0 * f.eval(x - h) + f.eval(x - 2.0 * h)) / (2.0 * h)
    }
}

fn fd_mismatch(f: &PiecewiseFn, x: f64) -> f64 {
    let analytic = f.derivative(x);
    (analytic - fd_derivative(f, x)).abs() / analytic.abs().max(1.0)
}

fn restricted_at(f: &PiecewiseFn, model: &ValidatedModel, xi: f64, x: f64) -> Result<f64> {
    let fp = f.derivative(x);
    let jump = jump_integral(f, x, model.beta())?;
    Ok(-model.c() * fp - model.theta() * f.eval(x)
        + model.lambda() * jump
        + xi * (1.0 - fp).max(0.0))
}

fn unrestricted_at(f: &PiecewiseFn, model: &ValidatedModel, x: f64) -> Result<(f64, f64)> {
    let fp = f.derivative(x);
    let jump = jump_integral(f, x, model.beta())?;
    let op = -model.c() * fp - model.theta() * f.eval(x) + model.lambda() * jump;
    Ok((op, 1.0 - fp))
}

/// Restricted HJB residual of `sol` at `x` (F-scale).
pub fn residual_restricted(sol: &ThresholdSolution, model: &ValidatedModel, x: f64) -> Result<f64> {
    restricted_at(&PiecewiseFn::from_threshold(sol), model, sol.xi, x)
}

/// `(operator value, 1 - F'(x))` of the unrestricted HJB at `x`.
pub fn residual_unrestricted(
    sol: &BarrierSolution,
    model: &ValidatedModel,
    x: f64,
) -> Result<(f64, f64)> {
    unrestricted_at(&PiecewiseFn::from_barrier(sol), model, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Restricted,
    Unrestricted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Below the switching level (`F2`, or the barrier's exponential part).
    Lower,
    /// Above the switching level (`F1`, or the barrier's linear part).
    Upper,
    /// Full payout: one branch everywhere.
    Full,
}

impl Branch {
    fn as_str(self) -> &'static str {
        match self {
            Branch::Lower => "lower",
            Branch::Upper => "upper",
            Branch::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub x: f64,
    pub residual_or_operator: f64,
    /// `1 - F'(x)`; unrestricted reports only.
    pub gradient_slack: Option<f64>,
    pub branch: Branch,
    /// Analytic vs finite-difference `F'`, relative to `max(1, |F'|)`.
    pub derivative_mismatch: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub kind: ReportKind,
    /// Natural scale of the solution (`xi/theta` or `F(b, b)`).
    pub scale: f64,
    /// Absolute tolerance applied, `rel_tol * scale`.
    pub tol: f64,
    pub max_abs: f64,
    pub pass: bool,
    pub points: Vec<ResidualPoint>,
}

/// Offset used to keep grid points off the switching level.
pub const KINK_OFFSET: f64 = 1e-6;

fn nudge(grid: &[f64], level: f64) -> Vec<f64> {
    let mut xs: Vec<f64> = grid
        .iter()
        .map(|&x| {
            if level > 0.0 && (x - level).abs() < KINK_OFFSET {
                level - KINK_OFFSET
            } else {
                x
            }
        })
        .collect();
    xs.sort_by(f64::total_cmp);
    xs
}

/// Evenly spaced grid of `n` points on `[0, max]`.
pub fn linear_grid(max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Default verification span: three times the switching level, or three
/// decay lengths of the full-payout value when there is no level.
pub fn default_span(sol: &Solution) -> f64 {
    match sol {
        Solution::Threshold(s) if s.regime == Regime::AlwaysMax => 3.0 / s.alpha.abs(),
        other => 3.0 * other.level(),
    }
}

/// Check the restricted HJB on `grid`; `rel_tol` is scaled by `xi/theta`.
pub fn verify_threshold(
    sol: &ThresholdSolution,
    model: &ValidatedModel,
    grid: &[f64],
    rel_tol: f64,
) -> Result<ResidualReport> {
    let f = PiecewiseFn::from_threshold(sol);
    let scale = sol.cap_value();
    let tol = rel_tol * scale;
    let xs = nudge(grid, sol.xhat);
    let points = xs
        .par_iter()
        .map(|&x| {
            let res = restricted_at(&f, model, sol.xi, x)?;
            let mismatch = fd_mismatch(&f, x);
            let branch = match sol.regime {
                Regime::AlwaysMax => Branch::Full,
                Regime::Threshold if x <= sol.xhat => Branch::Lower,
                Regime::Threshold => Branch::Upper,
            };
            Ok(ResidualPoint {
                x,
                residual_or_operator: res,
                gradient_slack: None,
                branch,
                derivative_mismatch: mismatch,
                pass: res.abs() <= tol && mismatch <= FD_TOL,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(ReportKind::Restricted, scale, tol, points))
}

/// Check the unrestricted HJB on `grid`; `rel_tol` is scaled by `F(b, b)`.
///
/// Below `b` the operator must vanish and `F' >= 1`; above `b`, `F' = 1`
/// and the operator must be nonpositive.
pub fn verify_barrier(
    sol: &BarrierSolution,
    model: &ValidatedModel,
    grid: &[f64],
    rel_tol: f64,
) -> Result<ResidualReport> {
    let f = PiecewiseFn::from_barrier(sol);
    let scale = sol.value_at_barrier().abs().max(f64::MIN_POSITIVE);
    let tol = rel_tol * scale;
    let xs = nudge(grid, sol.b);
    let points = xs
        .par_iter()
        .map(|&x| {
            let (op, slack) = unrestricted_at(&f, model, x)?;
            let mismatch = fd_mismatch(&f, x);
            let (branch, ok) = if x <= sol.b {
                (Branch::Lower, op.abs() <= tol && slack <= tol)
            } else {
                (Branch::Upper, slack.abs() <= tol && op <= tol)
            };
            Ok(ResidualPoint {
                x,
                residual_or_operator: op,
                gradient_slack: Some(slack),
                branch,
                derivative_mismatch: mismatch,
                pass: ok && mismatch <= FD_TOL,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(ReportKind::Unrestricted, scale, tol, points))
}

pub fn verify_solution(
    sol: &Solution,
    model: &ValidatedModel,
    grid: &[f64],
    rel_tol: f64,
) -> Result<ResidualReport> {
    match sol {
        Solution::Threshold(s) => verify_threshold(s, model, grid, rel_tol),
        Solution::Barrier(s) => verify_barrier(s, model, grid, rel_tol),
    }
}

fn finish(kind: ReportKind, scale: f64, tol: f64, points: Vec<ResidualPoint>) -> ResidualReport {
    let max_abs = points
        .iter()
        .map(|p| {
            let slack = match (p.branch, p.gradient_slack) {
                (Branch::Upper, Some(s)) => s.abs(),
                (_, Some(s)) => s.max(0.0),
                (_, None) => 0.0,
            };
            let op = match (kind, p.branch) {
                (ReportKind::Unrestricted, Branch::Upper) => p.residual_or_operator.max(0.0),
                _ => p.residual_or_operator.abs(),
            };
            op.max(slack)
        })
        .fold(0.0, f64::max);
    let pass = points.iter().all(|p| p.pass);
    ResidualReport {
        kind,
        scale,
        tol,
        max_abs,
        pass,
        points,
    }
}

impl ResidualReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Columns `x,residual_or_operator,gradient_slack,branch`; the slack is
    /// empty for restricted reports.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,residual_or_operator,gradient_slack,branch\n");
        for p in &self.points {
            let slack = p.gradient_slack.map(fmt_num).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_num(p.x),
                fmt_num(p.residual_or_operator),
                slack,
                p.branch.as_str()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{solve_barrier, solve_threshold};
    use crate::model::{validate, DiscountSpec, DualModelParams};
    use crate::quad;

    fn reference() -> ValidatedModel {
        validate(
            DualModelParams::new(1.0, 2.0, 1.0),
            DiscountSpec::gbm(0.0, 0.1, 0.2),
        )
        .unwrap()
    }

    fn quad_jump(f: &PiecewiseFn, x: f64, beta: f64) -> f64 {
        let ymax = (1e14f64).ln() / beta;
        let mut breaks = vec![0.0];
        breaks.extend(f.kinks().into_iter().filter(|&k| k > x).map(|k| k - x));
        breaks.push(ymax.max(breaks[breaks.len() - 1] + 1.0));
        let fx = f.eval(x);
        quad::integrate_pieces(
            |y| (f.eval(x + y) - fx) * beta * (-beta * y).exp(),
            &breaks,
            1e-13,
        )
    }

    #[test]
    fn constant_and_linear_jump_integrals() {
        let konst = PiecewiseFn {
            segments: vec![Segment {
                start: 0.0,
                end: f64::INFINITY,
                exps: vec![],
                constant: 3.0,
                slope: 0.0,
            }],
        };
        assert!(jump_integral(&konst, 1.7, 2.0).unwrap().abs() < 1e-15);
        let linear = PiecewiseFn {
            segments: vec![Segment {
                start: 0.0,
                end: f64::INFINITY,
                exps: vec![],
                constant: 0.0,
                slope: 1.0,
            }],
        };
        for x in [0.0, 0.5, 4.0] {
            assert!((jump_integral(&linear, x, 2.5).unwrap() - 0.4).abs() < 1e-14);
        }
    }

    #[test]
    fn exponent_at_beta_is_rejected() {
        let f = PiecewiseFn {
            segments: vec![Segment {
                start: 0.0,
                end: f64::INFINITY,
                exps: vec![ExpTerm {
                    coef: 1.0,
                    rate: 1.0,
                }],
                constant: 0.0,
                slope: 0.0,
            }],
        };
        assert!(matches!(
            jump_integral(&f, 0.0, 1.0),
            Err(Error::ExponentAtOrAboveBeta { .. })
        ));
    }

    #[test]
    fn threshold_jump_integral_matches_quadrature() {
        let sol = solve_threshold(&reference(), 0.5).unwrap();
        let f = PiecewiseFn::from_threshold(&sol);
        for x in [sol.xhat / 2.0, 0.0, sol.xhat, 3.0] {
            let a = jump_integral(&f, x, 1.0).unwrap();
            let q = quad_jump(&f, x, 1.0);
            assert!((a - q).abs() < 1e-9, "x={x}: {a} vs {q}");
        }
    }

    #[test]
    fn barrier_jump_integral_matches_quadrature() {
        let sol = solve_barrier(&reference()).unwrap();
        let f = PiecewiseFn::from_barrier(&sol);
        for x in [0.5, 2.0, sol.b, 6.0] {
            let a = jump_integral(&f, x, 1.0).unwrap();
            let q = quad_jump(&f, x, 1.0);
            assert!((a - q).abs() < 1e-9, "x={x}: {a} vs {q}");
        }
    }

    #[test]
    fn reference_restricted_residuals_vanish() {
        let m = reference();
        let sol = solve_threshold(&m, 0.5).unwrap();
        let tol = 1e-8 * sol.cap_value();
        for x in [0.25, 1.0, sol.xhat - 0.01, sol.xhat + 0.01, 3.0, 10.0] {
            let r = residual_restricted(&sol, &m, x).unwrap();
            assert!(r.abs() <= tol, "x={x}: {r}");
        }
    }

    #[test]
    fn corrupted_threshold_is_detected() {
        let m = reference();
        let mut sol = solve_threshold(&m, 0.5).unwrap();
        sol.b *= 1.01;
        let worst = linear_grid(3.0 * sol.xhat, 50)
            .into_iter()
            .map(|x| residual_restricted(&sol, &m, x).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(worst > 1e-3, "{worst}");
    }

    #[test]
    fn reference_unrestricted_contract() {
        let m = reference();
        let sol = solve_barrier(&m).unwrap();
        let tol = 1e-8 * sol.value_at_barrier();
        for x in [0.5, 2.0, sol.b - 0.01] {
            let (op, slack) = residual_unrestricted(&sol, &m, x).unwrap();
            assert!(op.abs() <= tol && slack <= tol, "x={x}: {op} {slack}");
        }
        for x in [sol.b + 0.01, 6.0, 10.0] {
            let (op, slack) = residual_unrestricted(&sol, &m, x).unwrap();
            assert_eq!(slack, 0.0);
            assert!(op <= tol, "x={x}: {op}");
        }
    }

    #[test]
    fn corrupted_barrier_level_is_detected() {
        let m = reference();
        let opt = solve_barrier(&m).unwrap();
        let bad = crate::closed_form::BarrierSolution::at_level(&m, opt.b * 1.05).unwrap();
        let (_, slack) = residual_unrestricted(&bad, &m, bad.b - 0.01).unwrap();
        assert!(slack > 1e-6, "{slack}");
    }

    #[test]
    fn reports_and_csv() {
        let m = reference();
        let sol = solve_threshold(&m, 0.5).unwrap();
        let grid = linear_grid(3.0 * sol.xhat, 200);
        let rep = verify_threshold(&sol, &m, &grid, 1e-8).unwrap();
        assert!(rep.pass, "max_abs {}", rep.max_abs);
        assert_eq!(rep.points.len(), 200);
        let csv = rep.to_csv();
        assert!(csv.starts_with("x,residual_or_operator,gradient_slack,branch\n"));
        assert_eq!(csv.lines().count(), 201);

        let bsol = solve_barrier(&m).unwrap();
        let rep = verify_barrier(&bsol, &m, &[bsol.b, 0.0, 8.0], 1e-8).unwrap();
        assert!(rep.pass);
        // the point on the barrier is moved just below it
        assert!(rep
            .points
            .iter()
            .any(|p| (p.x - (bsol.b - KINK_OFFSET)).abs() < 1e-15));
    }

    #[test]
    fn always_max_satisfies_restricted_hjb() {
        let m = reference();
        let sol = solve_threshold(&m, 0.05).unwrap();
        assert_eq!(sol.regime, Regime::AlwaysMax);
        let grid = linear_grid(default_span(&Solution::Threshold(sol)), 200);
        let rep = verify_threshold(&sol, &m, &grid, 1e-8).unwrap();
        assert!(rep.pass, "{}", rep.max_abs);
        for x in grid {
            assert!(sol.f_prime(x) <= 1.0);
        }
    }
}
