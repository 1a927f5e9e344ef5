//! Exponential-Levy discounting reduced to an effective drift.
//!
//! Substituting `V(x, r) = e^{-r} F(x)` into the generator of the discount
//! exponent, every term is proportional to `V`: the drift contributes
//! `-(m + gamma)`, the diffusion `delta^2/2`, and the jumps
//! `int (e^{-z} - 1 + z 1{z<=1}) nu(dz)`. Hence the GBM formulas apply with
//!
//! ```text
//! mbar = m + gamma - int_0^inf (e^{-z} - 1 + z 1{z<=1}) nu(z) dz
//! ```
//!
//! The split constants `k = int e^{-z} nu`, `l = int_{z<=1} z nu` and the
//! total mass of `nu` are reported as well; `mbar = m + gamma + mass - k - l`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate, DiscountSpec, ValidatedModel};
use crate::quad;

/// Nonnegative-jump Levy measure with finite total mass.
#[derive(Debug, Clone, PartialEq)]
pub enum LevyMeasure {
    Zero,
    /// Density `eta * rho * exp(-rho z)` on `(0, inf)`: jumps arrive at rate
    /// `eta` with exponential(`rho`) sizes.
    CompoundPoissonExp {
        eta: f64,
        rho: f64,
    },
    /// Piecewise-linear density through `(z, nu(z))` points, zero outside
    /// the tabulated range.
    Tabulated {
        points: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevyMeasureSpec {
    pub measure: LevyMeasure,
    /// Drift component of the triplet.
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyReduction {
    /// `int e^{-z} nu(z) dz`.
    pub k: f64,
    /// `int z 1{z<=1} nu(z) dz`.
    pub l: f64,
    /// `int nu(z) dz`.
    pub mass: f64,
    /// `int (e^{-z} - 1 + z 1{z<=1}) nu(z) dz`.
    pub compensator: f64,
    pub gamma: f64,
    pub mbar: f64,
}

const QUAD_TOL: f64 = 1e-12;
const TAIL_TOL: f64 = 1e-14;

impl LevyMeasure {
    pub fn density(&self, z: f64) -> f64 {
        match self {
            LevyMeasure::Zero => 0.0,
            LevyMeasure::CompoundPoissonExp { eta, rho } => {
                if z > 0.0 {
                    eta * rho * (-rho * z).exp()
                } else {
                    0.0
                }
            }
            LevyMeasure::Tabulated { points } => {
                let idx = points.partition_point(|&(pz, _)| pz <= z);
                if idx == 0 || idx == points.len() {
                    // outside the table, except the final node itself
                    return match points.last() {
                        Some(&(lz, lv)) if z == lz => lv,
                        _ => 0.0,
                    };
                }
                let (z0, v0) = points[idx - 1];
                let (z1, v1) = points[idx];
                v0 + (v1 - v0) * (z - z0) / (z1 - z0)
            }
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            LevyMeasure::Zero => Ok(()),
            LevyMeasure::CompoundPoissonExp { eta, rho } => {
                if !(eta.is_finite() && *eta > 0.0 && rho.is_finite() && *rho > 0.0) {
                    return Err(Error::InvalidMeasure(format!(
                        "cpexp needs finite eta > 0 and rho > 0, got eta={eta}, rho={rho}"
                    )));
                }
                Ok(())
            }
            LevyMeasure::Tabulated { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidMeasure(
                        "tabulated measure needs at least two points".into(),
                    ));
                }
                for &(z, v) in points {
                    if !z.is_finite() || !v.is_finite() {
                        return Err(Error::DivergentIntegral(format!(
                            "non-finite tabulated point ({z}, {v})"
                        )));
                    }
                    if z < 0.0 {
                        return Err(Error::InvalidMeasure(format!("negative jump size {z}")));
                    }
                    if v < 0.0 {
                        return Err(Error::InvalidMeasure(format!(
                            "negative density {v} at {z}"
                        )));
                    }
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidMeasure(
                        "tabulated jump sizes must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// `e^{-z} - 1 + z 1{z<=1}`, without cancellation near zero.
fn compensator_kernel(z: f64) -> f64 {
    let e = (-z).exp_m1();
    if z <= 1.0 {
        e + z
    } else {
        e
    }
}

fn tabulated_breaks(points: &[(f64, f64)]) -> Vec<f64> {
    let mut breaks: Vec<f64> = points.iter().map(|p| p.0).collect();
    let first = breaks[0];
    let last = breaks[breaks.len() - 1];
    if first < 1.0 && last > 1.0 && !breaks.contains(&1.0) {
        let pos = breaks.partition_point(|&z| z < 1.0);
        breaks.insert(pos, 1.0);
    }
    breaks
}

/// Compensator integral by adaptive quadrature: on each table segment for
/// tabulated measures, and on `(0, Z]` plus the analytic tail for the
/// compound Poisson measure (`Z` puts the tail below 1e-14).
pub fn compensator_by_quadrature(measure: &LevyMeasure) -> Result<f64> {
    measure.check()?;
    Ok(match measure {
        LevyMeasure::Zero => 0.0,
        LevyMeasure::CompoundPoissonExp { eta, rho } => {
            let (eta, rho) = (*eta, *rho);
            let zmax = ((eta / TAIL_TOL).ln() / rho).max(1.0);
            let body = quad::integrate_pieces(
                |z| compensator_kernel(z) * measure.density(z),
                &[0.0, 1.0, zmax],
                QUAD_TOL,
            );
            let tail =
                eta * rho * (-(rho + 1.0) * zmax).exp() / (rho + 1.0) - eta * (-rho * zmax).exp();
            body + tail
        }
        LevyMeasure::Tabulated { points } => quad::integrate_pieces(
            |z| compensator_kernel(z) * measure.density(z),
            &tabulated_breaks(points),
            QUAD_TOL,
        ),
    })
}

fn split_constants(measure: &LevyMeasure) -> (f64, f64, f64) {
    match measure {
        LevyMeasure::Zero => (0.0, 0.0, 0.0),
        LevyMeasure::CompoundPoissonExp { eta, rho } => {
            let (eta, rho) = (*eta, *rho);
            let k = eta * rho / (rho + 1.0);
            let l = eta * (-(-rho).exp_m1() - rho * (-rho).exp()) / rho;
            (k, l, eta)
        }
        LevyMeasure::Tabulated { points } => {
            let breaks = tabulated_breaks(points);
            let k = quad::integrate_pieces(|z| (-z).exp() * measure.density(z), &breaks, QUAD_TOL);
            let l = quad::integrate_pieces(
                |z| {
                    if z <= 1.0 {
                        z * measure.density(z)
                    } else {
                        0.0
                    }
                },
                &breaks,
                QUAD_TOL,
            );
            let mass = points
                .windows(2)
                .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
                .sum();
            (k, l, mass)
        }
    }
}

/// Reduced drift `mbar` for the given measure, checked against
/// `mbar - delta^2/2 > 0`.
pub fn effective_drift(spec: &LevyMeasureSpec, m: f64, delta: f64) -> Result<LevyReduction> {
    spec.measure.check()?;
    if !spec.gamma.is_finite() {
        return Err(Error::InvalidMeasure(format!(
            "gamma must be finite, got {}",
            spec.gamma
        )));
    }
    let (k, l, mass) = split_constants(&spec.measure);
    let compensator = match &spec.measure {
        LevyMeasure::Zero => 0.0,
        LevyMeasure::CompoundPoissonExp { eta, rho } => {
            // k - mass + l with k - mass folded to avoid cancellation
            -eta / (rho + 1.0) + l
        }
        LevyMeasure::Tabulated { .. } => compensator_by_quadrature(&spec.measure)?,
    };
    let mbar = m + spec.gamma - compensator;
    let theta = mbar - 0.5 * delta * delta;
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::InsufficientDrift { theta });
    }
    Ok(LevyReduction {
        k,
        l,
        mass,
        compensator,
        gamma: spec.gamma,
        mbar,
    })
}

/// Equivalent GBM-discount model with `m := mbar`. GBM models come back
/// unchanged.
pub fn reduce_model(model: &ValidatedModel) -> Result<ValidatedModel> {
    match model.discount() {
        DiscountSpec::Gbm { .. } => Ok(model.clone()),
        DiscountSpec::ExpLevy { r, m, delta, levy } => {
            let red = effective_drift(levy, *m, *delta)?;
            validate(*model.params(), DiscountSpec::gbm(*r, red.mbar, *delta))
        }
    }
}

// ---------------------------------------------------------------------------
// JSON wire format

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevyKind {
    Zero,
    CpExp,
    Tabulated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyInput {
    pub kind: LevyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
}

impl LevyInput {
    /// `outer_gamma` is the `gamma` given on the enclosing discount object;
    /// the two may both be present only if they agree.
    pub fn into_spec(self, outer_gamma: Option<f64>) -> Result<LevyMeasureSpec> {
        let gamma = match (self.gamma, outer_gamma) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::InvalidMeasure(format!(
                    "conflicting gamma values {a} and {b}"
                )))
            }
            (Some(g), _) | (None, Some(g)) => g,
            (None, None) => 0.0,
        };
        let measure = match self.kind {
            LevyKind::Zero => LevyMeasure::Zero,
            LevyKind::CpExp => match (self.eta, self.rho) {
                (Some(eta), Some(rho)) => LevyMeasure::CompoundPoissonExp { eta, rho },
                _ => return Err(Error::InvalidMeasure("cpexp needs `eta` and `rho`".into())),
            },
            LevyKind::Tabulated => match self.points {
                Some(pts) => LevyMeasure::Tabulated {
                    points: pts.into_iter().map(|[z, v]| (z, v)).collect(),
                },
                None => return Err(Error::InvalidMeasure("tabulated needs `points`".into())),
            },
        };
        Ok(LevyMeasureSpec { measure, gamma })
    }
}

impl From<&LevyMeasure> for LevyInput {
    fn from(measure: &LevyMeasure) -> Self {
        let mut out = LevyInput {
            kind: LevyKind::Zero,
            eta: None,
            rho: None,
            gamma: None,
            points: None,
        };
        match measure {
            LevyMeasure::Zero => {}
            LevyMeasure::CompoundPoissonExp { eta, rho } => {
                out.kind = LevyKind::CpExp;
                out.eta = Some(*eta);
                out.rho = Some(*rho);
            }
            LevyMeasure::Tabulated { points } => {
                out.kind = LevyKind::Tabulated;
                out.points = Some(points.iter().map(|&(z, v)| [z, v]).collect());
            }
        }
        out
    }
}
