//! Compound losses: Combo (binary CE + Dice) and exponential-logarithmic.

use serde::{Deserialize, Serialize};

use super::distribution::ClassWeights;
use crate::error::{Error, Result};
use crate::tensor::{check_pair, LossConfig, LossResult, OneHot, ProbMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComboParams {
    /// Mix between the CE term (1) and the Dice term (0).
    pub alpha: f64,
    /// Foreground weight inside the CE term.
    pub beta: f64,
}

impl Default for ComboParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
        }
    }
}

impl ComboParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "combo {name} must be in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllParams {
    pub w_dice: f64,
    pub w_ce: f64,
    pub gamma_dice: f64,
    pub gamma_ce: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<ClassWeights>,
}

impl Default for EllParams {
    fn default() -> Self {
        Self {
            w_dice: 0.8,
            w_ce: 0.2,
            gamma_dice: 0.3,
            gamma_ce: 0.3,
            class_weights: None,
        }
    }
}

impl EllParams {
    pub fn validate(&self, classes: usize) -> Result<()> {
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !(nonneg(self.w_dice) && nonneg(self.w_ce) && self.w_dice + self.w_ce > 0.0) {
            return Err(Error::InvalidParameter(
                "ell weights must be nonnegative with a positive sum".into(),
            ));
        }
        if !(self.gamma_dice > 0.0 && self.gamma_ce > 0.0) {
            return Err(Error::InvalidParameter("ell gammas must be positive".into()));
        }
        if let Some(w) = &self.class_weights {
            w.validate(classes)?;
        }
        Ok(())
    }
}

/// `d/dx x^gamma`, taken as 0 at `x = 0` unless `gamma == 1`.
fn pow_slope(x: f64, gamma: f64) -> f64 {
    if x > 0.0 {
        gamma * x.powf(gamma - 1.0)
    } else if gamma == 1.0 {
        1.0
    } else {
        0.0
    }
}

/// Binary Combo loss on the foreground channel. The Dice coefficient is
/// subtracted, so values can be negative.
pub fn combo_loss(g: &OneHot, s: &ProbMap, params: &ComboParams, cfg: &LossConfig) -> Result<LossResult> {
    check_pair(g, s)?;
    cfg.validate()?;
    params.validate()?;
    if g.shape().classes() != 2 {
        return Err(Error::InvalidParameter(format!(
            "combo loss is binary; got {} classes",
            g.shape().classes()
        )));
    }
    let n = g.shape().pixels();
    let nf = n as f64;
    let (alpha, beta, eps) = (params.alpha, params.beta, cfg.epsilon);

    let (mut bce, mut inter, mut total) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (gi, si) = (g.get(i, 1), s.get(i, 1));
        bce -= beta * gi * cfg.clamp(si).ln() + (1.0 - beta) * (1.0 - gi) * cfg.clamp(1.0 - si).ln();
        inter += si * gi;
        total += si + gi;
    }
    let num = 2.0 * inter + eps;
    let den = total + eps;
    let value = alpha * bce / nf - (1.0 - alpha) * num / den;

    let mut grad = vec![0.0; s.values().len()];
    for i in 0..n {
        let (gi, si) = (g.get(i, 1), s.get(i, 1));
        let dbce = -(beta * gi / cfg.clamp(si) - (1.0 - beta) * (1.0 - gi) / cfg.clamp(1.0 - si));
        let ddice = (2.0 * gi * den - num) / (den * den);
        grad[i * 2 + 1] = alpha * dbce / nf - (1.0 - alpha) * ddice;
    }
    Ok(LossResult::new(value, grad))
}

/// Per-class linear Dice coefficients `(2 sum gs + eps) / (sum (g + s) + eps)`.
pub fn class_dice(g: &OneHot, s: &ProbMap, cfg: &LossConfig) -> Vec<f64> {
    let classes = g.shape().classes();
    let mut inter = vec![0.0; classes];
    let mut total = vec![0.0; classes];
    for (k, (gv, sv)) in g.values().iter().zip(s.values()).enumerate() {
        inter[k % classes] += gv * sv;
        total[k % classes] += gv + sv;
    }
    inter
        .iter()
        .zip(&total)
        .map(|(i, t)| (2.0 * i + cfg.epsilon) / (t + cfg.epsilon))
        .collect()
}

/// `w_dice * mean_c (-ln Dice_c)^gd + w_ce * mean_i w_c(i) (-ln s_i^c(i))^gc`.
pub fn ell_loss(g: &OneHot, s: &ProbMap, params: &EllParams, cfg: &LossConfig) -> Result<LossResult> {
    check_pair(g, s)?;
    cfg.validate()?;
    let classes = g.shape().classes();
    params.validate(classes)?;
    let n = g.shape().pixels();
    let eps = cfg.epsilon;
    let included: Vec<usize> = (0..classes).filter(|&c| cfg.includes(c)).collect();
    let nc = included.len() as f64;

    let mut inter = vec![0.0; classes];
    let mut total = vec![0.0; classes];
    for (k, (gv, sv)) in g.values().iter().zip(s.values()).enumerate() {
        inter[k % classes] += gv * sv;
        total[k % classes] += gv + sv;
    }

    let mut value = 0.0;
    let mut grad = vec![0.0; s.values().len()];

    for &c in &included {
        let num = 2.0 * inter[c] + eps;
        let den = total[c] + eps;
        let dice = num / den;
        let x = (-dice.ln()).max(0.0);
        value += params.w_dice * x.powf(params.gamma_dice) / nc;
        // d/ds (x^gd) = gd x^(gd-1) * (-1/dice) * d(dice)/ds
        let outer = params.w_dice / nc * pow_slope(x, params.gamma_dice) * (-1.0 / dice);
        if outer != 0.0 {
            for i in 0..n {
                let k = i * classes + c;
                let ddice = (2.0 * g.values()[k] * den - num) / (den * den);
                grad[k] += outer * ddice;
            }
        }
    }

    let nf = n as f64;
    for (i, &label) in g.labels().iter().enumerate() {
        if !cfg.includes(label) {
            continue;
        }
        let k = i * classes + label;
        let wc = params.class_weights.as_ref().map_or(1.0, |w| w.0[label]);
        let p = cfg.clamp(s.values()[k]);
        let y = (-p.ln()).max(0.0);
        value += params.w_ce * wc * y.powf(params.gamma_ce) / nf;
        grad[k] += params.w_ce * wc / nf * pow_slope(y, params.gamma_ce) * (-1.0 / p);
    }

    Ok(LossResult::new(value, grad))
}
