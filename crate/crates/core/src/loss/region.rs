//! Overlap losses: sensitivity-specificity, Dice, IoU, Tversky and the
//! losses built on it, generalized Dice and its penalized form.
//!
//! Sums run over every included `(pixel, class)` entry unless noted.
//! Ratios carry the smoothing constant `epsilon` in numerator and
//! denominator. The Tversky index uses `epsilon / 2` on the `TP` scale, i.e.
//! `(2TP + eps) / (2TP + 2a FP + 2b FN + eps)`, so that at `a = b = 1/2` it is
//! the same expression as the linear Dice coefficient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{check_pair, LossConfig, LossResult, OneHot, ProbMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsParams {
    /// Weight of the sensitivity term; `1 - w` goes to specificity.
    pub w: f64,
}

impl Default for SsParams {
    fn default() -> Self {
        Self { w: 0.05 }
    }
}

impl SsParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::InvalidParameter(format!(
                "sensitivity-specificity weight must be in [0, 1], got {}",
                self.w
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TverskyParams {
    /// False-positive weight.
    pub alpha: f64,
    /// False-negative weight.
    pub beta: f64,
}

impl Default for TverskyParams {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 0.7,
        }
    }
}

impl TverskyParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.alpha) && ok(self.beta) && self.alpha + self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tversky weights must be nonnegative with a positive sum, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalTverskyParams {
    #[serde(flatten)]
    pub tversky: TverskyParams,
    pub gamma: f64,
}

impl Default for FocalTverskyParams {
    fn default() -> Self {
        Self {
            tversky: TverskyParams::default(),
            gamma: 4.0 / 3.0,
        }
    }
}

impl FocalTverskyParams {
    pub fn validate(&self) -> Result<()> {
        self.tversky.validate()?;
        if !(1.0..=3.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!(
                "focal tversky gamma must be in [1, 3], got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetricParams {
    pub beta: f64,
}

impl Default for AsymmetricParams {
    fn default() -> Self {
        Self { beta: 1.5 }
    }
}

impl AsymmetricParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "asymmetric beta must be >= 0, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Equivalent Tversky weights: false positives `1/(1+b^2)`, false
    /// negatives `b^2/(1+b^2)`.
    pub fn tversky(&self) -> TverskyParams {
        let b2 = self.beta * self.beta;
        TverskyParams {
            alpha: 1.0 / (1.0 + b2),
            beta: b2 / (1.0 + b2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub k: f64,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        Self { k: 2.5 }
    }
}

impl PenaltyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "penalty k must be >= 0, got {}",
                self.k
            )));
        }
        Ok(())
    }
}

fn prepare(g: &OneHot, s: &ProbMap, cfg: &LossConfig) -> Result<()> {
    check_pair(g, s)?;
    cfg.validate()
}

/// Included `(flat index, g, s)` triples.
fn entries<'a>(
    g: &'a OneHot,
    s: &'a ProbMap,
    cfg: &'a LossConfig,
) -> impl Iterator<Item = (usize, f64, f64)> + 'a {
    let c = g.shape().classes();
    g.values()
        .iter()
        .zip(s.values())
        .enumerate()
        .filter(move |(k, _)| cfg.includes(k % c))
        .map(|(k, (&gv, &sv))| (k, gv, sv))
}

/// Gradient of `1 - num/den` given per-entry derivatives of num and den.
fn one_minus_ratio(
    g: &OneHot,
    s: &ProbMap,
    cfg: &LossConfig,
    num: f64,
    den: f64,
    dnum: impl Fn(f64, f64) -> f64,
    dden: impl Fn(f64, f64) -> f64,
) -> LossResult {
    let mut grad = vec![0.0; s.values().len()];
    let den2 = den * den;
    for (k, gv, sv) in entries(g, s, cfg) {
        grad[k] = -(dnum(gv, sv) * den - num * dden(gv, sv)) / den2;
    }
    LossResult::new(1.0 - num / den, grad)
}

pub fn ss_loss(g: &OneHot, s: &ProbMap, params: &SsParams, cfg: &LossConfig) -> Result<LossResult> {
    prepare(g, s, cfg)?;
    params.validate()?;
    let (mut pos, mut neg, mut sens, mut spec) = (0.0, 0.0, 0.0, 0.0);
    for (_, gv, sv) in entries(g, s, cfg) {
        let r2 = (gv - sv) * (gv - sv);
        pos += gv;
        neg += 1.0 - gv;
        sens += r2 * gv;
        spec += r2 * (1.0 - gv);
    }
    let a = pos + cfg.epsilon;
    let b = neg + cfg.epsilon;
    let w = params.w;
    let mut grad = vec![0.0; s.values().len()];
    for (k, gv, sv) in entries(g, s, cfg) {
        let dr2 = -2.0 * (gv - sv);
        grad[k] = w * dr2 * gv / a + (1.0 - w) * dr2 * (1.0 - gv) / b;
    }
    Ok(LossResult::new(w * sens / a + (1.0 - w) * spec / b, grad))
}

/// Soft Dice with squared terms in the denominator.
pub fn dice_loss(g: &OneHot, s: &ProbMap, cfg: &LossConfig) -> Result<LossResult> {
    prepare(g, s, cfg)?;
    let (mut inter, mut sq) = (0.0, 0.0);
    for (_, gv, sv) in entries(g, s, cfg) {
        inter += gv * sv;
        sq += gv * gv + sv * sv;
    }
    let eps = cfg.epsilon;
    Ok(one_minus_ratio(
        g,
        s,
        cfg,
        2.0 * inter + eps,
        sq + eps,
        |gv, _| 2.0 * gv,
        |_, sv| 2.0 * sv,
    ))
}

/// Soft Dice with the linear denominator `sum g + sum s`.
pub fn dice_loss_linear(g: &OneHot, s: &ProbMap, cfg: &LossConfig) -> Result<LossResult> {
    prepare(g, s, cfg)?;
    let (mut inter, mut total) = (0.0, 0.0);
    for (_, gv, sv) in entries(g, s, cfg) {
        inter += gv * sv;
        total += gv + sv;
    }
    let eps = cfg.epsilon;
    Ok(one_minus_ratio(
        g,
        s,
        cfg,
        2.0 * inter + eps,
        total + eps,
        |gv, _| 2.0 * gv,
        |_, _| 1.0,
    ))
}

pub fn iou_loss(g: &OneHot, s: &ProbMap, cfg: &LossConfig) -> Result<LossResult> {
    prepare(g, s, cfg)?;
    let (mut inter, mut union) = (0.0, 0.0);
    for (_, gv, sv) in entries(g, s, cfg) {
        inter += gv * sv;
        union += gv + sv - gv * sv;
    }
    let eps = cfg.epsilon;
    Ok(one_minus_ratio(
        g,
        s,
        cfg,
        inter + eps,
        union + eps,
        |gv, _| gv,
        |gv, _| 1.0 - gv,
    ))
}

/// Tversky index `T` (value) and `dT/ds` (grad). Increases with overlap.
pub fn tversky_index(g: &OneHot, s: &ProbMap, params: &TverskyParams, cfg: &LossConfig) -> Result<LossResult> {
    prepare(g, s, cfg)?;
    params.validate()?;
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (_, gv, sv) in entries(g, s, cfg) {
        tp += gv * sv;
        fp += (1.0 - gv) * sv;
        fn_ += gv * (1.0 - sv);
    }
    let (a, b, eps) = (params.alpha, params.beta, cfg.epsilon);
    let num = 2.0 * tp + eps;
    let den = 2.0 * tp + 2.0 * a * fp + 2.0 * b * fn_ + eps;
    let mut r = one_minus_ratio(
        g,
        s,
        cfg,
        num,
        den,
        |gv, _| 2.0 * gv,
        |gv, _| 2.0 * gv + 2.0 * a * (1.0 - gv) - 2.0 * b * gv,
    );
    r.value = num / den;
    r.grad.iter_mut().for_each(|d| *d = -*d);
    Ok(r)
}

pub fn tversky_loss(g: &OneHot, s: &ProbMap, params: &TverskyParams, cfg: &LossConfig) -> Result<LossResult> {
    let mut r = tversky_index(g, s, params, cfg)?;
    r.value = 1.0 - r.value;
    r.grad.iter_mut().for_each(|d| *d = -*d);
    Ok(r)
}

/// Class weights `1 / (pixel count)^2`; zero for classes absent from `g` or
/// excluded by the config.
pub fn generalized_dice_weights(g: &OneHot, cfg: &LossConfig) -> Vec<f64> {
    (0..g.shape().classes())
        .map(|c| {
            let count = g.class_count(c);
            if count == 0 || !cfg.includes(c) {
                0.0
            } else {
                1.0 / (count as f64 * count as f64)
            }
        })
        .collect()
}

pub fn generalized_dice_loss(g: &OneHot, s: &ProbMap, cfg: &LossConfig) -> Result<LossResult> {
    prepare(g, s, cfg)?;
    let w = generalized_dice_weights(g, cfg);
    let c = g.shape().classes();
    let (mut inter, mut total) = (0.0, 0.0);
    for (k, gv, sv) in entries(g, s, cfg) {
        inter += w[k % c] * gv * sv;
        total += w[k % c] * (gv + sv);
    }
    let eps = cfg.epsilon;
    let num = 2.0 * inter + eps;
    let den = total + eps;
    let mut grad = vec![0.0; s.values().len()];
    for (k, gv, _) in entries(g, s, cfg) {
        let wc = w[k % c];
        grad[k] = -(2.0 * wc * gv * den - num * wc) / (den * den);
    }
    Ok(LossResult::new(1.0 - num / den, grad))
}

/// `(1 - T)^(1/gamma)`.
pub fn focal_tversky_loss(
    g: &OneHot,
    s: &ProbMap,
    params: &FocalTverskyParams,
    cfg: &LossConfig,
) -> Result<LossResult> {
    params.validate()?;
    let t = tversky_index(g, s, &params.tversky, cfg)?;
    let base = (1.0 - t.value).max(0.0);
    let p = 1.0 / params.gamma;
    let value = base.powf(p);
    // Derivative of x^p is unbounded at x = 0 for p < 1; the minimum gets 0.
    let outer = if base > 0.0 { p * base.powf(p - 1.0) } else { 0.0 };
    let grad = t.grad.iter().map(|d| -outer * d).collect();
    Ok(LossResult::new(value, grad))
}

/// Single-channel Tversky form with `alpha + beta = 1`, evaluated on each
/// foreground class (1..C) and averaged. Ignores `include_background`.
pub fn asymmetric_loss(
    g: &OneHot,
    s: &ProbMap,
    params: &AsymmetricParams,
    cfg: &LossConfig,
) -> Result<LossResult> {
    prepare(g, s, cfg)?;
    params.validate()?;
    let b2 = params.beta * params.beta;
    let fn_weight = b2 / (1.0 + b2);
    let fp_weight = 1.0 / (1.0 + b2);
    let classes = g.shape().classes();
    let n = g.shape().pixels();
    let fg = (classes - 1) as f64;
    let eps = cfg.epsilon;
    let mut value = 0.0;
    let mut grad = vec![0.0; s.values().len()];
    for c in 1..classes {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let (gv, sv) = (g.get(i, c), s.get(i, c));
            tp += gv * sv;
            fn_ += gv * (1.0 - sv);
            fp += (1.0 - gv) * sv;
        }
        let num = 2.0 * tp + eps;
        let den = 2.0 * tp + 2.0 * fn_weight * fn_ + 2.0 * fp_weight * fp + eps;
        value += 1.0 - num / den;
        for i in 0..n {
            let gv = g.get(i, c);
            let dnum = 2.0 * gv;
            let dden = 2.0 * gv - 2.0 * fn_weight * gv + 2.0 * fp_weight * (1.0 - gv);
            grad[i * classes + c] = -(dnum * den - num * dden) / (den * den) / fg;
        }
    }
    Ok(LossResult::new(value / fg, grad))
}

/// `L_GD / (1 + k (1 - L_GD))`.
pub fn penalty_gd_loss(g: &OneHot, s: &ProbMap, params: &PenaltyParams, cfg: &LossConfig) -> Result<LossResult> {
    params.validate()?;
    let gd = generalized_dice_loss(g, s, cfg)?;
    let k = params.k;
    let l = gd.value;
    let scale = 1.0 + k * (1.0 - l);
    let value = l / scale;
    let outer = (1.0 + k) / (scale * scale);
    let grad = gd.grad.iter().map(|d| outer * d).collect();
    Ok(LossResult {
        value,
        grad,
        flags: gd.flags,
    })
}
