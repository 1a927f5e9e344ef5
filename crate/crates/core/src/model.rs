//! Model parameters, discount specification and validation.
//!
//! Every other module takes a [`ValidatedModel`]; the only way to build one
//! is [`validate`] (or the JSON loader that calls it), so the positivity
//! constraints and `theta > 0` are checked exactly once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{self, LevyMeasure, LevyMeasureSpec, LevyReduction};

/// Surplus-side parameters: expense rate `c`, gain intensity `lambda` and
/// exponential gain-size rate `beta` (mean gain `1/beta`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualModelParams {
    pub c: f64,
    pub lambda: f64,
    pub beta: f64,
}

impl DualModelParams {
    pub fn new(c: f64, lambda: f64, beta: f64) -> Self {
        Self { c, lambda, beta }
    }

    /// Expected gain per unit time minus expenses. Reported, never enforced.
    pub fn net_drift(&self) -> f64 {
        self.lambda / self.beta - self.c
    }
}

/// Stochastic discount factor.
#[derive(Debug, Clone, PartialEq)]
pub enum DiscountSpec {
    /// `exp(-r - m t - delta B_t)`.
    Gbm { r: f64, m: f64, delta: f64 },
    /// `exp(-r - m t - X_t)` with `X` a Levy process with triplet
    /// `(delta, gamma, nu)` and nonnegative jumps.
    ExpLevy {
        r: f64,
        m: f64,
        delta: f64,
        levy: LevyMeasureSpec,
    },
}

impl DiscountSpec {
    pub fn gbm(r: f64, m: f64, delta: f64) -> Self {
        DiscountSpec::Gbm { r, m, delta }
    }

    pub fn r(&self) -> f64 {
        match *self {
            DiscountSpec::Gbm { r, .. } | DiscountSpec::ExpLevy { r, .. } => r,
        }
    }

    pub fn m(&self) -> f64 {
        match *self {
            DiscountSpec::Gbm { m, .. } | DiscountSpec::ExpLevy { m, .. } => m,
        }
    }

    pub fn delta(&self) -> f64 {
        match *self {
            DiscountSpec::Gbm { delta, .. } | DiscountSpec::ExpLevy { delta, .. } => delta,
        }
    }
}

/// Deterministic rate left after averaging out the stochastic discount.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EffectiveRate(f64);

impl EffectiveRate {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Parameters that passed [`validate`], together with the effective rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel {
    params: DualModelParams,
    discount: DiscountSpec,
    theta: EffectiveRate,
    reduction: Option<LevyReduction>,
}

impl ValidatedModel {
    pub fn params(&self) -> &DualModelParams {
        &self.params
    }

    pub fn discount(&self) -> &DiscountSpec {
        &self.discount
    }

    pub fn c(&self) -> f64 {
        self.params.c
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda
    }

    pub fn beta(&self) -> f64 {
        self.params.beta
    }

    pub fn r(&self) -> f64 {
        self.discount.r()
    }

    pub fn delta(&self) -> f64 {
        self.discount.delta()
    }

    pub fn theta(&self) -> f64 {
        self.theta.0
    }

    pub fn effective_rate(&self) -> EffectiveRate {
        self.theta
    }

    /// Drift entering the closed forms: `m` for GBM, the reduced drift for
    /// exponential-Levy discounting.
    pub fn effective_drift(&self) -> f64 {
        match &self.reduction {
            Some(red) => red.mbar,
            None => self.discount.m(),
        }
    }

    pub fn levy_reduction(&self) -> Option<&LevyReduction> {
        self.reduction.as_ref()
    }

    pub fn net_drift(&self) -> f64 {
        self.params.net_drift()
    }

    /// Copy with one named parameter replaced, revalidated. Names are the
    /// JSON field names plus `r`, `m`, `delta`.
    pub fn with_param(&self, name: &str, value: f64) -> Result<ValidatedModel> {
        let mut params = self.params;
        let mut discount = self.discount.clone();
        match name {
            "c" => params.c = value,
            "lambda" => params.lambda = value,
            "beta" => params.beta = value,
            "r" | "m" | "delta" => match &mut discount {
                DiscountSpec::Gbm { r, m, delta } | DiscountSpec::ExpLevy { r, m, delta, .. } => {
                    match name {
                        "r" => *r = value,
                        "m" => *m = value,
                        _ => *delta = value,
                    }
                }
            },
            other => {
                return Err(Error::PreconditionViolated(format!(
                    "unknown model parameter `{other}`"
                )))
            }
        }
        validate(params, discount)
    }

    pub fn from_json_str(s: &str) -> Result<ValidatedModel> {
        let input: ModelInput = serde_json::from_str(s)?;
        input.into_model()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(ModelInput::from(self)).expect("model serializes")
    }
}

fn require_positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter(name))
    }
}

fn require_nonnegative(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter(name))
    }
}

/// Check every parameter constraint and compute the effective rate.
pub fn validate(params: DualModelParams, disc: DiscountSpec) -> Result<ValidatedModel> {
    require_positive("c", params.c)?;
    require_positive("lambda", params.lambda)?;
    require_positive("beta", params.beta)?;
    // r only scales values by exp(-r); r = 0 gives the F-scale directly.
    require_nonnegative("r", disc.r())?;
    require_positive("m", disc.m())?;
    require_nonnegative("delta", disc.delta())?;

    let (theta, reduction) = match &disc {
        DiscountSpec::Gbm { m, delta, .. } => (gbm_theta(*m, *delta)?, None),
        DiscountSpec::ExpLevy { m, delta, levy, .. } => {
            let red = levy::effective_drift(levy, *m, *delta)?;
            (gbm_theta(red.mbar, *delta)?, Some(red))
        }
    };
    Ok(ValidatedModel {
        params,
        discount: disc,
        theta,
        reduction,
    })
}

fn gbm_theta(m: f64, delta: f64) -> Result<EffectiveRate> {
    let theta = m - 0.5 * delta * delta;
    if theta > 0.0 && theta.is_finite() {
        Ok(EffectiveRate(theta))
    } else {
        Err(Error::InsufficientDrift { theta })
    }
}

/// `m - delta^2/2`, with `m` replaced by the reduced drift for Levy
/// discounting.
pub fn effective_theta(disc: &DiscountSpec) -> Result<EffectiveRate> {
    match disc {
        DiscountSpec::Gbm { m, delta, .. } => gbm_theta(*m, *delta),
        DiscountSpec::ExpLevy { m, delta, levy, .. } => {
            let red = levy::effective_drift(levy, *m, *delta)?;
            gbm_theta(red.mbar, *delta)
        }
    }
}

// ---------------------------------------------------------------------------
// JSON wire format

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelInput {
    pub c: f64,
    pub lambda: f64,
    pub beta: f64,
    pub discount: DiscountInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscountKind {
    Gbm,
    ExpLevy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountInput {
    pub kind: DiscountKind,
    pub r: f64,
    pub m: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levy: Option<levy::LevyInput>,
}

impl ModelInput {
    pub fn into_model(self) -> Result<ValidatedModel> {
        let params = DualModelParams::new(self.c, self.lambda, self.beta);
        let d = self.discount;
        let disc = match d.kind {
            DiscountKind::Gbm => {
                if d.levy.is_some() || d.gamma.is_some() {
                    return Err(Error::PreconditionViolated(
                        "gbm discount takes no `gamma` or `levy`".into(),
                    ));
                }
                DiscountSpec::Gbm {
                    r: d.r,
                    m: d.m,
                    delta: d.delta,
                }
            }
            DiscountKind::ExpLevy => {
                let levy = match d.levy {
                    Some(l) => l.into_spec(d.gamma)?,
                    None => LevyMeasureSpec {
                        measure: LevyMeasure::Zero,
                        gamma: d.gamma.unwrap_or(0.0),
                    },
                };
                DiscountSpec::ExpLevy {
                    r: d.r,
                    m: d.m,
                    delta: d.delta,
                    levy,
                }
            }
        };
        validate(params, disc)
    }
}

impl From<&ValidatedModel> for ModelInput {
    fn from(model: &ValidatedModel) -> Self {
        let p = model.params;
        let discount = match &model.discount {
            DiscountSpec::Gbm { r, m, delta } => DiscountInput {
                kind: DiscountKind::Gbm,
                r: *r,
                m: *m,
                delta: *delta,
                gamma: None,
                levy: None,
            },
            DiscountSpec::ExpLevy { r, m, delta, levy } => DiscountInput {
                kind: DiscountKind::ExpLevy,
                r: *r,
                m: *m,
                delta: *delta,
                gamma: Some(levy.gamma),
                levy: Some(levy::LevyInput::from(&levy.measure)),
            },
        };
        ModelInput {
            c: p.c,
            lambda: p.lambda,
            beta: p.beta,
            discount,
        }
    }
}
