//! Boundary (level-set) loss, distance-transform Hausdorff loss, and the
//! hard-mask mismatch forms that relate them to Dice.
//!
//! Both losses act on foreground classes `1..C` only.

use crate::distance::{level_set, unsigned_boundary_distance, DistanceMap, LevelSet};
use crate::error::{Error, Result};
use crate::tensor::{check_pair, BinaryMask, Flag, LossConfig, LossResult, OneHot, ProbMap, Shape};

/// Level sets and boundary distances of a fixed ground truth, one per class.
#[derive(Debug, Clone)]
pub struct BoundaryContext {
    shape: Shape,
    labels: Vec<usize>,
    phi: Vec<LevelSet>,
    dist: Vec<DistanceMap>,
}

impl BoundaryContext {
    pub fn new(g: &OneHot, spacing: &[f64]) -> Result<Self> {
        let classes = g.shape().classes();
        let mut phi = Vec::with_capacity(classes);
        let mut dist = Vec::with_capacity(classes);
        for c in 0..classes {
            let mask = g.class_mask(c);
            phi.push(level_set(&mask, spacing)?);
            dist.push(unsigned_boundary_distance(&mask, spacing)?);
        }
        Ok(Self {
            shape: g.shape().clone(),
            labels: g.labels().to_vec(),
            phi,
            dist,
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn level_set(&self, class: usize) -> &LevelSet {
        &self.phi[class]
    }

    pub fn distance(&self, class: usize) -> &DistanceMap {
        &self.dist[class]
    }

    /// Foreground classes whose ground truth has no boundary.
    pub fn degenerate_classes(&self) -> Vec<usize> {
        (1..self.shape.classes())
            .filter(|&c| self.phi[c].is_degenerate())
            .collect()
    }

    fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (1..self.shape.classes()).filter(|&c| !self.phi[c].is_degenerate())
    }

    /// `(1/N) sum phi_G g`, the prediction-independent term dropped from the
    /// boundary loss. `N * (boundary_loss - this)` is the distance-weighted
    /// mismatch area.
    pub fn ground_truth_term(&self) -> f64 {
        let n = self.shape.pixels();
        let total: f64 = self
            .active()
            .map(|c| {
                (0..n)
                    .filter(|&i| self.labels[i] == c)
                    .map(|i| self.phi[c].values()[i])
                    .sum::<f64>()
            })
            .sum();
        total / n as f64
    }
}

/// `(1/N) sum_i sum_{c >= 1} phi_G^c(i) s_i^c`. Linear in `s`, so the
/// gradient is `phi / N`. Degenerate classes are skipped and flagged.
pub fn boundary_loss(ctx: &BoundaryContext, s: &ProbMap, cfg: &LossConfig) -> Result<LossResult> {
    ctx.shape.check_same(s.shape())?;
    cfg.validate()?;
    let classes = ctx.shape.classes();
    let n = ctx.shape.pixels();
    let nf = n as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; s.values().len()];
    for c in ctx.active() {
        let phi = ctx.phi[c].values();
        for (i, &p) in phi.iter().enumerate() {
            let k = i * classes + c;
            value += p * s.values()[k];
            grad[k] = p / nf;
        }
    }
    let mut r = LossResult::new(value / nf, grad);
    r.flags
        .extend(ctx.degenerate_classes().into_iter().map(Flag::DegenerateClass));
    Ok(r)
}

/// Distance maps used by [`hd_loss`] for one foreground class.
#[derive(Debug, Clone)]
pub struct HdClassMaps {
    pub class: usize,
    pub ground_truth: DistanceMap,
    pub prediction: DistanceMap,
}

/// Frozen distance maps for every foreground class of an HD-loss evaluation.
#[derive(Debug, Clone)]
pub struct HdMaps {
    classes: Vec<HdClassMaps>,
    flags: Vec<Flag>,
}

impl HdMaps {
    /// Ground-truth maps from `g`, prediction maps from `s` thresholded at
    /// 0.5 per class.
    pub fn new(g: &OneHot, s: &ProbMap, spacing: &[f64]) -> Result<Self> {
        check_pair(g, s)?;
        let mut classes = Vec::new();
        let mut flags = Vec::new();
        for c in 1..g.shape().classes() {
            let gm = g.class_mask(c);
            let sm = s.threshold_mask(c);
            if gm.none_set() && sm.none_set() {
                return Err(Error::Degenerate(format!(
                    "hd loss: class {c} is empty in both ground truth and thresholded prediction"
                )));
            }
            if gm.is_degenerate() {
                flags.push(Flag::DegenerateClass(c));
            }
            if sm.is_degenerate() {
                flags.push(Flag::DegeneratePrediction(c));
            }
            classes.push(HdClassMaps {
                class: c,
                ground_truth: unsigned_boundary_distance(&gm, spacing)?,
                prediction: unsigned_boundary_distance(&sm, spacing)?,
            });
        }
        Ok(Self { classes, flags })
    }

    pub fn classes(&self) -> &[HdClassMaps] {
        &self.classes
    }
}

/// `(1/N) sum_i (s_i - g_i)^2 (d_G,i^2 + d_S,i^2)` per foreground class, with
/// `d_S` from the thresholded prediction.
pub fn hd_loss(g: &OneHot, s: &ProbMap, spacing: &[f64], cfg: &LossConfig) -> Result<LossResult> {
    let maps = HdMaps::new(g, s, spacing)?;
    hd_loss_with_maps(g, s, &maps, cfg)
}

/// HD loss with the distance maps held fixed; the gradient treats them as
/// constants.
pub fn hd_loss_with_maps(g: &OneHot, s: &ProbMap, maps: &HdMaps, cfg: &LossConfig) -> Result<LossResult> {
    check_pair(g, s)?;
    cfg.validate()?;
    let classes = g.shape().classes();
    let n = g.shape().pixels();
    let nf = n as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; s.values().len()];
    for m in &maps.classes {
        if m.ground_truth.values().len() != n || m.class >= classes {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} pixels"),
                got: format!("{} pixels", m.ground_truth.values().len()),
            });
        }
        let dg = m.ground_truth.values();
        let ds = m.prediction.values();
        for i in 0..n {
            let k = i * classes + m.class;
            let weight = dg[i] * dg[i] + ds[i] * ds[i];
            let diff = s.values()[k] - g.values()[k];
            value += diff * diff * weight;
            grad[k] = 2.0 * diff * weight / nf;
        }
    }
    let mut r = LossResult::new(value / nf, grad);
    r.flags = maps.flags.clone();
    Ok(r)
}

fn mismatch<'a>(g: &'a BinaryMask, s: &'a BinaryMask) -> impl Iterator<Item = usize> + 'a {
    g.values()
        .iter()
        .zip(s.values())
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, _)| i)
}

/// `|G xor S| / (|G| + |S|)`, the Dice loss of hard masks.
pub fn dice_mismatch_form(g: &BinaryMask, s: &BinaryMask) -> Result<f64> {
    g.check_same_dims(s)?;
    let total = g.count() + s.count();
    if total == 0 {
        return Err(Error::Degenerate("dice mismatch: both masks are empty".into()));
    }
    Ok(mismatch(g, s).count() as f64 / total as f64)
}

/// Sum of ground-truth boundary distance over the mismatch region.
pub fn bd_mismatch_form(g: &BinaryMask, s: &BinaryMask, spacing: &[f64]) -> Result<f64> {
    g.check_same_dims(s)?;
    if g.is_degenerate() {
        return Err(Error::Degenerate("bd mismatch: ground truth has no boundary".into()));
    }
    let dg = unsigned_boundary_distance(g, spacing)?;
    Ok(mismatch(g, s).map(|i| dg.values()[i]).sum())
}

/// `(1/N) sum over the mismatch region of d_G^2 + d_S^2`.
pub fn hd_mismatch_form(g: &BinaryMask, s: &BinaryMask, spacing: &[f64]) -> Result<f64> {
    g.check_same_dims(s)?;
    if g.is_degenerate() {
        return Err(Error::Degenerate("hd mismatch: ground truth has no boundary".into()));
    }
    if s.is_degenerate() {
        return Err(Error::Degenerate("hd mismatch: prediction has no boundary".into()));
    }
    let dg = unsigned_boundary_distance(g, spacing)?;
    let ds = unsigned_boundary_distance(s, spacing)?;
    let total: f64 = mismatch(g, s)
        .map(|i| dg.values()[i].powi(2) + ds.values()[i].powi(2))
        .sum();
    Ok(total / g.len() as f64)
}
