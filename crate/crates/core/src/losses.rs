//! Training losses for segmentation and detection heads, with analytic
//! gradients and a central-difference checker.

use thiserror::Error;

/// Log clamp used by the cross-entropy style losses.
pub const LOG_EPS: f64 = 1e-12;
/// Additive smoothing in the dice ratio.
pub const DICE_EPS: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("target {0} is not binary")]
    NonBinaryTarget(f64),
    #[error("delta must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("invalid focal parameters alpha={alpha}, gamma={gamma}")]
    InvalidFocalParams { alpha: f64, gamma: f64 },
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("function evaluation is not finite at coordinate {0}")]
    NonFinite(usize),
}

/// Predicted probabilities and binary targets of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTargetPair {
    p: Vec<f64>,
    y: Vec<f64>,
}

impl ProbTargetPair {
    pub fn new(p: Vec<f64>, y: Vec<f64>) -> Result<Self, LossError> {
        if p.len() != y.len() {
            return Err(LossError::LengthMismatch { left: p.len(), right: y.len() });
        }
        if p.is_empty() {
            return Err(LossError::Empty);
        }
        if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(LossError::ProbabilityOutOfRange(bad));
        }
        if let Some(&bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(LossError::NonBinaryTarget(bad));
        }
        Ok(ProbTargetPair { p, y })
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl FocalParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self, LossError> {
        if !(alpha > 0.0 && alpha < 1.0) || !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(LossError::InvalidFocalParams { alpha, gamma });
        }
        Ok(FocalParams { alpha, gamma })
    }
}

impl Default for FocalParams {
    fn default() -> Self {
        FocalParams { alpha: 0.25, gamma: 2.0 }
    }
}

/// Predicted and ground-truth box parameters with the smooth-L1 knee `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegressionPair {
    pred: Vec<f64>,
    gt: Vec<f64>,
    delta: f64,
}

impl BoxRegressionPair {
    pub fn new(pred: Vec<f64>, gt: Vec<f64>, delta: f64) -> Result<Self, LossError> {
        if pred.len() != gt.len() {
            return Err(LossError::LengthMismatch { left: pred.len(), right: gt.len() });
        }
        if pred.is_empty() {
            return Err(LossError::Empty);
        }
        if !(delta > 0.0) {
            return Err(LossError::NonPositiveDelta(delta));
        }
        Ok(BoxRegressionPair { pred, gt, delta })
    }

    pub fn pred(&self) -> &[f64] {
        &self.pred
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Mean absolute elementwise error.
    pub fn mae(&self) -> f64 {
        self.pred.iter().zip(&self.gt).map(|(p, g)| (p - g).abs()).sum::<f64>() / self.pred.len() as f64
    }
}

/// `-Σ y_i · ln(max(p_i, ε))`.
pub fn cross_entropy(pair: &ProbTargetPair) -> f64 {
    -pair.y.iter().zip(&pair.p).map(|(&y, &p)| if y == 0.0 { 0.0 } else { y * p.max(LOG_EPS).ln() }).sum::<f64>()
}

pub fn cross_entropy_grad(pair: &ProbTargetPair) -> Vec<f64> {
    pair.y
        .iter()
        .zip(&pair.p)
        .map(|(&y, &p)| if y == 0.0 || p < LOG_EPS { 0.0 } else { -y / p })
        .collect()
}

fn dice_terms(pair: &ProbTargetPair) -> (f64, f64) {
    let mut inter = 0.0;
    let mut denom = 0.0;
    for (&y, &p) in pair.y.iter().zip(&pair.p) {
        inter += y * p;
        denom += y * y + p * p;
    }
    (2.0 * inter + DICE_EPS, denom + DICE_EPS)
}

/// `1 - (2Σ y p + ε) / (Σ y² + Σ p² + ε)` on soft probabilities.
pub fn dice_loss(pair: &ProbTargetPair) -> f64 {
    let (num, den) = dice_terms(pair);
    1.0 - num / den
}

pub fn dice_loss_grad(pair: &ProbTargetPair) -> Vec<f64> {
    let (num, den) = dice_terms(pair);
    pair.y.iter().zip(&pair.p).map(|(&y, &p)| -(2.0 * y * den - num * 2.0 * p) / (den * den)).collect()
}

/// Sum of cross-entropy and dice loss.
pub fn dual_loss(pair: &ProbTargetPair) -> f64 {
    cross_entropy(pair) + dice_loss(pair)
}

pub fn dual_loss_grad(pair: &ProbTargetPair) -> Vec<f64> {
    cross_entropy_grad(pair).into_iter().zip(dice_loss_grad(pair)).map(|(a, b)| a + b).collect()
}

/// Smooth-L1 as a function of the mean absolute error.
pub fn smooth_l1_from_mae(mae: f64, delta: f64) -> f64 {
    if mae < delta {
        0.5 * mae * mae / delta
    } else {
        mae - 0.5 * delta
    }
}

pub fn smooth_l1(pair: &BoxRegressionPair) -> f64 {
    smooth_l1_from_mae(pair.mae(), pair.delta)
}

/// Gradient with respect to `pred`. Undefined where a residual is exactly
/// zero; the subgradient 0 is returned for those coordinates.
pub fn smooth_l1_grad(pair: &BoxRegressionPair) -> Vec<f64> {
    let mae = pair.mae();
    let outer = if mae < pair.delta { mae / pair.delta } else { 1.0 };
    let n = pair.pred.len() as f64;
    pair.pred
        .iter()
        .zip(&pair.gt)
        .map(|(p, g)| {
            let d: f64 = p - g;
            outer * if d == 0.0 { 0.0 } else { d.signum() } / n
        })
        .collect()
}

fn check_focal_inputs(p: f64, y: u8) -> Result<(), LossError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(LossError::ProbabilityOutOfRange(p));
    }
    if y > 1 {
        return Err(LossError::NonBinaryTarget(f64::from(y)));
    }
    Ok(())
}

/// Focal loss for one prediction.
pub fn focal_loss(p: f64, y: u8, params: FocalParams) -> Result<f64, LossError> {
    check_focal_inputs(p, y)?;
    let FocalParams { alpha, gamma } = params;
    Ok(if y == 1 {
        -alpha * (1.0 - p).powf(gamma) * p.max(LOG_EPS).ln()
    } else {
        -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).max(LOG_EPS).ln()
    })
}

/// d/dp of [`focal_loss`] on the open interval (0, 1).
pub fn focal_loss_grad(p: f64, y: u8, params: FocalParams) -> Result<f64, LossError> {
    check_focal_inputs(p, y)?;
    let FocalParams { alpha, gamma } = params;
    Ok(if y == 1 {
        let q = 1.0 - p;
        let pow_grad = if gamma == 0.0 { 0.0 } else { gamma * q.powf(gamma - 1.0) };
        alpha * (pow_grad * p.ln() - q.powf(gamma) / p)
    } else {
        let q = 1.0 - p;
        let pow_grad = if gamma == 0.0 { 0.0 } else { gamma * p.powf(gamma - 1.0) };
        -(1.0 - alpha) * (pow_grad * q.ln() - p.powf(gamma) / q)
    })
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` per coordinate.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Result<Vec<f64>, LossError> {
    if !(h > 0.0) {
        return Err(LossError::NonPositiveStep(h));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let hi = f(&probe);
        probe[i] = x[i] - h;
        let lo = f(&probe);
        probe[i] = x[i];
        if !hi.is_finite() || !lo.is_finite() {
            return Err(LossError::NonFinite(i));
        }
        out.push((hi - lo) / (2.0 * h));
    }
    Ok(out)
}
