//! Loss kernels grouped by family, plus [`LossSpec`], a named and
//! parameterized handle used by the gradient checker, the optimizer and the
//! CLI.

pub mod boundary;
pub mod compound;
pub mod distribution;
pub mod region;

use serde::{Deserialize, Serialize};

use crate::distance::{boundary_penalty_map, PenaltyMap};
use crate::error::{Error, Result};
use crate::tensor::{LossConfig, LossResult, OneHot, ProbMap};

pub use boundary::{
    bd_mismatch_form, boundary_loss, dice_mismatch_form, hd_loss, hd_loss_with_maps, hd_mismatch_form,
    BoundaryContext, HdMaps,
};
pub use compound::{class_dice, combo_loss, ell_loss, ComboParams, EllParams};
pub use distribution::{
    ce, dpce, focal, topk, topk_selection, topk_with_selection, wce, ClassWeights, FocalParams, TopKParams,
};
pub use region::{
    asymmetric_loss, dice_loss, dice_loss_linear, focal_tversky_loss, generalized_dice_loss, iou_loss,
    penalty_gd_loss, ss_loss, tversky_index, tversky_loss, AsymmetricParams, FocalTverskyParams, PenaltyParams,
    SsParams, TverskyParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Distribution,
    Region,
    Boundary,
    Compound,
}

/// A loss together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case")]
pub enum LossSpec {
    Ce,
    /// Weighted CE; without explicit weights, inverse class frequencies of
    /// the ground truth are used.
    Wce {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<ClassWeights>,
    },
    #[serde(rename = "topk")]
    TopK(TopKParams),
    Focal(FocalParams),
    Dpce,
    Ss(SsParams),
    Dice,
    Iou,
    Tversky(TverskyParams),
    GeneralizedDice,
    FocalTversky(FocalTverskyParams),
    Asymmetric(AsymmetricParams),
    PenaltyGd(PenaltyParams),
    Boundary,
    Hd,
    Combo(ComboParams),
    Ell(EllParams),
}

pub const LOSS_NAMES: [&str; 17] = [
    "ce",
    "wce",
    "topk",
    "focal",
    "dpce",
    "ss",
    "dice",
    "iou",
    "tversky",
    "generalized_dice",
    "focal_tversky",
    "asymmetric",
    "penalty_gd",
    "boundary",
    "hd",
    "combo",
    "ell",
];

impl LossSpec {
    /// Spec with default parameters.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "ce" => LossSpec::Ce,
            "wce" => LossSpec::Wce { weights: None },
            "topk" => LossSpec::TopK(TopKParams::default()),
            "focal" => LossSpec::Focal(FocalParams::default()),
            "dpce" => LossSpec::Dpce,
            "ss" => LossSpec::Ss(SsParams::default()),
            "dice" => LossSpec::Dice,
            "iou" => LossSpec::Iou,
            "tversky" => LossSpec::Tversky(TverskyParams::default()),
            "generalized_dice" => LossSpec::GeneralizedDice,
            "focal_tversky" => LossSpec::FocalTversky(FocalTverskyParams::default()),
            "asymmetric" => LossSpec::Asymmetric(AsymmetricParams::default()),
            "penalty_gd" => LossSpec::PenaltyGd(PenaltyParams::default()),
            "boundary" => LossSpec::Boundary,
            "hd" => LossSpec::Hd,
            "combo" => LossSpec::Combo(ComboParams::default()),
            "ell" => LossSpec::Ell(EllParams::default()),
            _ => {
                return Err(Error::UnknownLoss {
                    name: name.to_string(),
                    available: LOSS_NAMES.join(", "),
                })
            }
        })
    }

    /// Every loss with default parameters, in [`LOSS_NAMES`] order.
    pub fn all() -> Vec<Self> {
        LOSS_NAMES
            .iter()
            .map(|n| Self::by_name(n).expect("registered name"))
            .collect()
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::Ce => "ce",
            LossSpec::Wce { .. } => "wce",
            LossSpec::TopK(_) => "topk",
            LossSpec::Focal(_) => "focal",
            LossSpec::Dpce => "dpce",
            LossSpec::Ss(_) => "ss",
            LossSpec::Dice => "dice",
            LossSpec::Iou => "iou",
            LossSpec::Tversky(_) => "tversky",
            LossSpec::GeneralizedDice => "generalized_dice",
            LossSpec::FocalTversky(_) => "focal_tversky",
            LossSpec::Asymmetric(_) => "asymmetric",
            LossSpec::PenaltyGd(_) => "penalty_gd",
            LossSpec::Boundary => "boundary",
            LossSpec::Hd => "hd",
            LossSpec::Combo(_) => "combo",
            LossSpec::Ell(_) => "ell",
        }
    }

    pub fn family(&self) -> Family {
        match self {
            LossSpec::Ce | LossSpec::Wce { .. } | LossSpec::TopK(_) | LossSpec::Focal(_) | LossSpec::Dpce => {
                Family::Distribution
            }
            LossSpec::Boundary | LossSpec::Hd => Family::Boundary,
            LossSpec::Combo(_) | LossSpec::Ell(_) => Family::Compound,
            _ => Family::Region,
        }
    }

    /// Parameters as a JSON value (without the name tag).
    pub fn params_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("specs serialize");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("loss");
        }
        v
    }

    /// Builds the frozen state for ground truth `g`. State that depends on
    /// the prediction (TopK selection, HD prediction maps) is taken from
    /// `s_ref`.
    pub fn prepare(&self, g: &OneHot, s_ref: &ProbMap, spacing: &[f64], cfg: &LossConfig) -> Result<PreparedLoss> {
        let frozen = match self {
            LossSpec::Wce { weights } => Frozen::Weights(match weights {
                Some(w) => w.clone(),
                None => inverse_frequency_weights(g),
            }),
            LossSpec::TopK(p) => Frozen::Selection(topk_selection(g, s_ref, p, cfg)?),
            LossSpec::Dpce => Frozen::Penalty(boundary_penalty_map(g, spacing)?),
            LossSpec::Boundary => Frozen::Boundary(BoundaryContext::new(g, spacing)?),
            LossSpec::Hd => Frozen::Hd(HdMaps::new(g, s_ref, spacing)?),
            _ => Frozen::None,
        };
        Ok(PreparedLoss {
            spec: self.clone(),
            g: g.clone(),
            cfg: *cfg,
            spacing: spacing.to_vec(),
            frozen,
        })
    }

    /// One-shot evaluation with all prediction-dependent state taken from
    /// `s` itself.
    pub fn evaluate(&self, g: &OneHot, s: &ProbMap, spacing: &[f64], cfg: &LossConfig) -> Result<LossResult> {
        self.prepare(g, s, spacing, cfg)?.eval(s)
    }
}

/// `w_c = N / (C * count_c)`, zero for absent classes.
pub fn inverse_frequency_weights(g: &OneHot) -> ClassWeights {
    let n = g.shape().pixels() as f64;
    let classes = g.shape().classes();
    ClassWeights(
        (0..classes)
            .map(|c| match g.class_count(c) {
                0 => 0.0,
                k => n / (classes as f64 * k as f64),
            })
            .collect(),
    )
}

#[derive(Debug, Clone)]
enum Frozen {
    None,
    Weights(ClassWeights),
    Selection(Vec<bool>),
    Penalty(PenaltyMap),
    Boundary(BoundaryContext),
    Hd(HdMaps),
}

/// A loss bound to one ground truth with its non-differentiable state fixed.
#[derive(Debug, Clone)]
pub struct PreparedLoss {
    spec: LossSpec,
    g: OneHot,
    cfg: LossConfig,
    spacing: Vec<f64>,
    frozen: Frozen,
}

impl PreparedLoss {
    pub fn spec(&self) -> &LossSpec {
        &self.spec
    }

    pub fn ground_truth(&self) -> &OneHot {
        &self.g
    }

    /// Recomputes the prediction-dependent state from `s`.
    pub fn refresh(&mut self, s: &ProbMap) -> Result<()> {
        match (&self.spec, &mut self.frozen) {
            (LossSpec::TopK(p), Frozen::Selection(sel)) => {
                *sel = topk_selection(&self.g, s, p, &self.cfg)?;
            }
            (LossSpec::Hd, Frozen::Hd(maps)) => {
                *maps = HdMaps::new(&self.g, s, &self.spacing)?;
            }
            _ => {}
        }
        Ok(())
    }

    pub fn eval(&self, s: &ProbMap) -> Result<LossResult> {
        let (g, cfg) = (&self.g, &self.cfg);
        match (&self.spec, &self.frozen) {
            (LossSpec::Ce, _) => ce(g, s, cfg),
            (LossSpec::Wce { .. }, Frozen::Weights(w)) => wce(g, s, w, cfg),
            (LossSpec::TopK(_), Frozen::Selection(sel)) => topk_with_selection(g, s, sel, cfg),
            (LossSpec::Focal(p), _) => focal(g, s, p, cfg),
            (LossSpec::Dpce, Frozen::Penalty(d)) => dpce(g, s, d, cfg),
            (LossSpec::Ss(p), _) => ss_loss(g, s, p, cfg),
            (LossSpec::Dice, _) => dice_loss(g, s, cfg),
            (LossSpec::Iou, _) => iou_loss(g, s, cfg),
            (LossSpec::Tversky(p), _) => tversky_loss(g, s, p, cfg),
            (LossSpec::GeneralizedDice, _) => generalized_dice_loss(g, s, cfg),
            (LossSpec::FocalTversky(p), _) => focal_tversky_loss(g, s, p, cfg),
            (LossSpec::Asymmetric(p), _) => asymmetric_loss(g, s, p, cfg),
            (LossSpec::PenaltyGd(p), _) => penalty_gd_loss(g, s, p, cfg),
            (LossSpec::Boundary, Frozen::Boundary(ctx)) => boundary_loss(ctx, s, cfg),
            (LossSpec::Hd, Frozen::Hd(maps)) => hd_loss_with_maps(g, s, maps, cfg),
            (LossSpec::Combo(p), _) => combo_loss(g, s, p, cfg),
            (LossSpec::Ell(p), _) => ell_loss(g, s, p, cfg),
            (spec, _) => unreachable!("{} prepared without its frozen state", spec.name()),
        }
    }
}
