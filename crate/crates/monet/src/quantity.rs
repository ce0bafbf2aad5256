//! Quantity-of-prices model: money supply as a function of the price sum and
//! the gold price, plus the sign analysis of its comparative statics.

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum QuantityError {
    #[error("nominal GDP level must be positive, got {0}")]
    NonPositivePrices(f64),
    #[error("gold price must be positive, got {0}")]
    NonPositiveGold(f64),
    #[error("velocity coefficient must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("scenario delta must be finite")]
    NonFiniteDelta,
}

/// Inputs to the money-supply equation `Q_m = lambda_p / lambda_gold * beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantityInputs {
    /// Nominal GDP level (sum of commodity prices), currency units per quarter.
    pub lambda_p: f64,
    /// Gold price, currency units per ounce.
    pub lambda_gold: f64,
    /// Inverse velocity coefficient, dimensionless.
    pub beta: f64,
}

impl QuantityInputs {
    pub fn new(lambda_p: f64, lambda_gold: f64, beta: f64) -> Result<Self, QuantityError> {
        if !(lambda_p > 0.0) {
            return Err(QuantityError::NonPositivePrices(lambda_p));
        }
        if !(lambda_gold > 0.0) {
            return Err(QuantityError::NonPositiveGold(lambda_gold));
        }
        if !(beta > 0.0) {
            return Err(QuantityError::NonPositiveBeta(beta));
        }
        Ok(Self { lambda_p, lambda_gold, beta })
    }

    /// Unit velocity coefficient, the default throughout the pipeline.
    pub fn with_unit_beta(lambda_p: f64, lambda_gold: f64) -> Result<Self, QuantityError> {
        Self::new(lambda_p, lambda_gold, 1.0)
    }
}

/// Signed changes applied to the two drivers of the money supply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioDelta {
    pub d_lambda_p: f64,
    pub d_lambda_gold: f64,
}

impl ScenarioDelta {
    pub fn new(d_lambda_p: f64, d_lambda_gold: f64) -> Result<Self, QuantityError> {
        if !d_lambda_p.is_finite() || !d_lambda_gold.is_finite() {
            return Err(QuantityError::NonFiniteDelta);
        }
        Ok(Self { d_lambda_p, d_lambda_gold })
    }
}

/// Sign verdict for one of the eight comparative-statics cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioVerdict {
    Positive,
    Negative,
    Zero,
    /// Both drivers move the same way; the sign depends on magnitudes and is
    /// resolved by evaluating the total differential.
    Conditional(ResolvedSign),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolvedSign {
    Positive,
    Negative,
    Zero,
}

impl ScenarioVerdict {
    /// Flattens the verdict to a plain sign of the implied change.
    pub fn sign(&self) -> f64 {
        match self {
            ScenarioVerdict::Positive => 1.0,
            ScenarioVerdict::Negative => -1.0,
            ScenarioVerdict::Zero => 0.0,
            ScenarioVerdict::Conditional(s) => match s {
                ResolvedSign::Positive => 1.0,
                ResolvedSign::Negative => -1.0,
                ResolvedSign::Zero => 0.0,
            },
        }
    }
}

/// Money supply level implied by the price sum, the gold price and the
/// velocity coefficient.
pub fn predict_m1(inputs: QuantityInputs) -> f64 {
    inputs.lambda_p / inputs.lambda_gold * inputs.beta
}

/// Partial derivative of the money supply with respect to the price sum.
pub fn d_dlambda_p(inputs: QuantityInputs) -> f64 {
    inputs.beta / inputs.lambda_gold
}

/// Partial derivative of the money supply with respect to the gold price.
pub fn d_dlambda_gold(inputs: QuantityInputs) -> f64 {
    -inputs.beta * inputs.lambda_p / (inputs.lambda_gold * inputs.lambda_gold)
}

/// Exact first-order total differential of the money supply.
pub fn total_differential(inputs: QuantityInputs, delta: ScenarioDelta) -> f64 {
    d_dlambda_p(inputs) * delta.d_lambda_p + d_dlambda_gold(inputs) * delta.d_lambda_gold
}

/// Maps the signs of the two driver changes to a verdict on the sign of the
/// money-supply change. Same-sign cases are resolved numerically; the verdict
/// sign always equals the sign of [`total_differential`].
pub fn classify_scenario(inputs: QuantityInputs, delta: ScenarioDelta) -> ScenarioVerdict {
    let sp = delta.d_lambda_p.partial_cmp(&0.0).expect("finite delta");
    let sg = delta.d_lambda_gold.partial_cmp(&0.0).expect("finite delta");
    use std::cmp::Ordering::*;
    match (sp, sg) {
        (Equal, Equal) => ScenarioVerdict::Zero,
        (Less, Equal) | (Equal, Greater) | (Less, Greater) => ScenarioVerdict::Negative,
        (Greater, Equal) | (Equal, Less) | (Greater, Less) => ScenarioVerdict::Positive,
        // both drivers move the same way: magnitudes decide
        (Less, Less) | (Greater, Greater) => {
            let d = total_differential(inputs, delta);
            let sign = if d > 0.0 {
                ResolvedSign::Positive
            } else if d < 0.0 {
                ResolvedSign::Negative
            } else {
                ResolvedSign::Zero
            };
            ScenarioVerdict::Conditional(sign)
        }
    }
}
