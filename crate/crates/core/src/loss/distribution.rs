//! Cross-entropy family: CE, weighted CE, TopK, focal, and distance-penalized
//! CE. All are pixel means of `-log s` on the true class, with different
//! per-pixel weights.

use serde::{Deserialize, Serialize};

use crate::distance::PenaltyMap;
use crate::error::{Error, Result};
use crate::tensor::{check_pair, Flag, LossConfig, LossResult, OneHot, ProbMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassWeights(pub Vec<f64>);

impl ClassWeights {
    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0; classes])
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.0.len() != classes {
            return Err(Error::InvalidParameter(format!(
                "expected {classes} class weights, got {}",
                self.0.len()
            )));
        }
        if self.0.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(
                "class weights must be finite and nonnegative".into(),
            ));
        }
        if !self.0.iter().any(|&w| w > 0.0) {
            return Err(Error::InvalidParameter(
                "at least one class weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self { gamma: 2.0 }
    }
}

impl FocalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "focal gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopKParams {
    /// Pixels whose true-class probability is below this are kept.
    pub t: f64,
}

impl Default for TopKParams {
    fn default() -> Self {
        Self { t: 0.85 }
    }
}

impl TopKParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "topk threshold must be in (0, 1], got {}",
                self.t
            )));
        }
        Ok(())
    }
}

/// Shared kernel: `-(1/norm) * sum_i weight_i * log s_i^{c(i)}` over pixels
/// whose true class is included, with `weight` and `dweight` (derivative of
/// the weight in `s`) supplied per pixel.
fn weighted_nll(
    g: &OneHot,
    s: &ProbMap,
    cfg: &LossConfig,
    norm: f64,
    mut weight: impl FnMut(usize, usize, f64) -> (f64, f64),
) -> LossResult {
    let c = g.shape().classes();
    let mut value = 0.0;
    let mut grad = vec![0.0; s.values().len()];
    for (i, &label) in g.labels().iter().enumerate() {
        if !cfg.includes(label) {
            continue;
        }
        let k = i * c + label;
        let p = s.values()[k];
        let clamped = cfg.clamp(p);
        let log = clamped.ln();
        let (w, dw) = weight(i, label, p);
        value -= w * log;
        grad[k] = -(dw * log + w / clamped) / norm;
    }
    LossResult::new(value / norm, grad)
}

pub fn ce(g: &OneHot, s: &ProbMap, cfg: &LossConfig) -> Result<LossResult> {
    check_pair(g, s)?;
    cfg.validate()?;
    let n = g.shape().pixels() as f64;
    Ok(weighted_nll(g, s, cfg, n, |_, _, _| (1.0, 0.0)))
}

pub fn wce(g: &OneHot, s: &ProbMap, w: &ClassWeights, cfg: &LossConfig) -> Result<LossResult> {
    check_pair(g, s)?;
    cfg.validate()?;
    w.validate(g.shape().classes())?;
    let n = g.shape().pixels() as f64;
    Ok(weighted_nll(g, s, cfg, n, |_, c, _| (w.0[c], 0.0)))
}

/// Pixels kept by TopK: true class included and its probability below `t`.
pub fn topk_selection(g: &OneHot, s: &ProbMap, params: &TopKParams, cfg: &LossConfig) -> Result<Vec<bool>> {
    check_pair(g, s)?;
    params.validate()?;
    Ok(g.labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| cfg.includes(l) && s.get(i, l) < params.t)
        .collect())
}

pub fn topk(g: &OneHot, s: &ProbMap, params: &TopKParams, cfg: &LossConfig) -> Result<LossResult> {
    let keep = topk_selection(g, s, params, cfg)?;
    topk_with_selection(g, s, &keep, cfg)
}

/// TopK with the kept set held fixed; this is what the gradient describes.
pub fn topk_with_selection(
    g: &OneHot,
    s: &ProbMap,
    keep: &[bool],
    cfg: &LossConfig,
) -> Result<LossResult> {
    check_pair(g, s)?;
    cfg.validate()?;
    if keep.len() != g.shape().pixels() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} selection entries", g.shape().pixels()),
            got: format!("{} selection entries", keep.len()),
        });
    }
    let kept = keep.iter().filter(|&&k| k).count();
    if kept == 0 {
        let mut r = LossResult::new(0.0, vec![0.0; s.values().len()]);
        r.flags.push(Flag::EmptySelection);
        return Ok(r);
    }
    Ok(weighted_nll(g, s, cfg, kept as f64, |i, _, _| {
        if keep[i] {
            (1.0, 0.0)
        } else {
            (0.0, 0.0)
        }
    }))
}

pub fn focal(g: &OneHot, s: &ProbMap, params: &FocalParams, cfg: &LossConfig) -> Result<LossResult> {
    check_pair(g, s)?;
    cfg.validate()?;
    params.validate()?;
    let gamma = params.gamma;
    let n = g.shape().pixels() as f64;
    Ok(weighted_nll(g, s, cfg, n, |_, _, p| {
        if gamma == 0.0 {
            return (1.0, 0.0);
        }
        let q = 1.0 - p;
        let w = q.powf(gamma);
        // d/dp (1-p)^gamma; taken as 0 at p = 1 where it is singular for gamma < 1.
        let dw = if q > 0.0 { -gamma * q.powf(gamma - 1.0) } else { 0.0 };
        (w, dw)
    }))
}

/// CE weighted per pixel by `1 + D` on the true class; `D` is constant.
pub fn dpce(g: &OneHot, s: &ProbMap, penalty: &PenaltyMap, cfg: &LossConfig) -> Result<LossResult> {
    check_pair(g, s)?;
    cfg.validate()?;
    if penalty.classes() != g.shape().classes() || penalty.values().len() != g.shape().len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} penalty entries", g.shape().len()),
            got: format!("{} penalty entries", penalty.values().len()),
        });
    }
    let n = g.shape().pixels() as f64;
    Ok(weighted_nll(g, s, cfg, n, |i, c, _| (1.0 + penalty.get(i, c), 0.0)))
}
