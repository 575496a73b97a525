//! Cross-loss identities and oracle comparisons, run as sweeps over seeded
//! random instances or exhaustive tiny grids.

use serde::Serialize;

use crate::distance::{edt_bruteforce, edt_with, unsigned_boundary_distance, PenaltyMap};
use crate::error::Result;
use crate::exec::Exec;
use crate::loss::*;
use crate::metrics::dice_coefficient;
use crate::sample::{all_masks, random_instance, random_mask, rng, InstanceOptions};
use crate::tensor::{BinaryMask, LabelMap, LossConfig, LossResult, OneHot, ProbMap, Shape};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationCheck {
    pub name: String,
    pub cases: usize,
    /// Cases outside the relation's domain (e.g. degenerate masks).
    pub skipped: usize,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl RelationCheck {
    fn from_diffs(name: &str, tolerance: f64, diffs: impl IntoIterator<Item = Option<f64>>) -> Self {
        let (mut cases, mut skipped, mut worst) = (0, 0, 0.0f64);
        let mut nan = false;
        for d in diffs {
            match d {
                Some(d) => {
                    cases += 1;
                    nan |= d.is_nan();
                    worst = worst.max(d);
                }
                None => skipped += 1,
            }
        }
        Self {
            name: name.to_string(),
            cases,
            skipped,
            max_abs_diff: worst,
            tolerance,
            pass: !nan && cases > 0 && worst <= tolerance,
        }
    }
}

fn result_diff(a: &LossResult, b: &LossResult) -> f64 {
    a.grad
        .iter()
        .zip(&b.grad)
        .map(|(x, y)| (x - y).abs())
        .fold((a.value - b.value).abs(), f64::max)
}

/// Two-class view of one channel: `g' = [g != c, g == c]`, `s' = [1 - s_c, s_c]`.
pub fn binarize(g: &OneHot, s: &ProbMap, class: usize) -> (OneHot, ProbMap) {
    let dims = g.shape().dims();
    let labels = g.labels().iter().map(|&l| usize::from(l == class)).collect();
    let shape = Shape::new(dims, 2).expect("dims already validated");
    let g2 = LabelMap::new(shape.clone(), labels).expect("binary labels").one_hot();
    let n = shape.pixels();
    let values = (0..n).flat_map(|i| [1.0 - s.get(i, class), s.get(i, class)]).collect();
    let s2 = ProbMap::from_raw(shape, values).expect("sizes agree");
    (g2, s2)
}

/// Reductions between losses that must agree exactly (up to rounding) on
/// every instance.
pub fn identity_suite(trials: usize, seed: u64, exec: Exec) -> Result<Vec<RelationCheck>> {
    let cfg = LossConfig::default();
    let fg_only = LossConfig {
        include_background: false,
        ..cfg
    };
    let betas = [0.5, 1.0, 1.5, 3.0];

    type Row = Vec<f64>;
    let rows: Vec<Result<Row>> = exec.map(trials, |t| {
        let mut r = rng(seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(t as u64));
        let (g, s) = random_instance(&mut r, &InstanceOptions::default());
        let c = g.shape().classes();
        let base = ce(&g, &s, &cfg)?;
        let mut row = vec![
            result_diff(&focal(&g, &s, &FocalParams { gamma: 0.0 }, &cfg)?, &base),
            result_diff(&wce(&g, &s, &ClassWeights::uniform(c), &cfg)?, &base),
            result_diff(&topk(&g, &s, &TopKParams { t: 1.0 }, &cfg)?, &base),
            result_diff(
                &dpce(&g, &s, &PenaltyMap::from_values(c, vec![0.0; g.shape().len()]), &cfg)?,
                &base,
            ),
            result_diff(
                &tversky_loss(&g, &s, &TverskyParams { alpha: 0.5, beta: 0.5 }, &cfg)?,
                &dice_loss_linear(&g, &s, &cfg)?,
            ),
        ];
        let mut asym = 0.0f64;
        for beta in betas {
            let params = AsymmetricParams { beta };
            let a = asymmetric_loss(&g, &s, &params, &cfg)?;
            let mut mean = 0.0;
            for class in 1..c {
                let (g2, s2) = binarize(&g, &s, class);
                mean += tversky_loss(&g2, &s2, &params.tversky(), &fg_only)?.value;
            }
            mean /= (c - 1) as f64;
            asym = asym.max((a.value - mean).abs());
        }
        row.push(asym);
        row.push(result_diff(
            &penalty_gd_loss(&g, &s, &PenaltyParams { k: 0.0 }, &cfg)?,
            &generalized_dice_loss(&g, &s, &cfg)?,
        ));
        let tv = TverskyParams::default();
        row.push(result_diff(
            &focal_tversky_loss(&g, &s, &FocalTverskyParams { tversky: tv, gamma: 1.0 }, &cfg)?,
            &tversky_loss(&g, &s, &tv, &cfg)?,
        ));
        Ok(row)
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let names: [(&str, f64); 8] = [
        ("focal(gamma=0) = ce", 1e-9),
        ("wce(unit weights) = ce", 1e-9),
        ("topk(t=1) = ce", 1e-9),
        ("dpce(D=0) = ce", 1e-9),
        ("tversky(0.5, 0.5) = linear dice loss", 1e-9),
        ("asymmetric(beta) = tversky(1/(1+beta^2), beta^2/(1+beta^2))", 1e-12),
        ("penalty_gd(k=0) = generalized_dice", 1e-15),
        ("focal_tversky(gamma=1) = tversky loss", 1e-9),
    ];
    Ok(names
        .iter()
        .enumerate()
        .map(|(j, (name, tol))| RelationCheck::from_diffs(name, *tol, rows.iter().map(|r| Some(r[j]))))
        .collect())
}

/// Exhaustive mismatch-form identities over every pair of hard masks on a
/// `dims` grid (at most 16 pixels).
pub fn mismatch_suite(dims: &[usize]) -> Result<Vec<RelationCheck>> {
    let masks = all_masks(dims);
    let spacing = vec![1.0; dims.len()];
    let n = masks[0].len() as f64;
    let cfg = LossConfig::default();
    let exact_iou = LossConfig {
        epsilon: 1e-300,
        include_background: false,
        ..cfg
    };
    let (mut dice, mut hd, mut bd, mut dice_iou) = (vec![], vec![], vec![], vec![]);
    for g in &masks {
        let gh = g.to_one_hot();
        let ctx = BoundaryContext::new(&gh, &spacing)?;
        let dg = unsigned_boundary_distance(g, &spacing)?;
        let inside_sum: f64 = g.values().iter().zip(dg.values()).filter(|(v, _)| **v).map(|(_, d)| d).sum();
        for s in &masks {
            let sp = s.to_prob();
            let coeff = dice_coefficient(g, s)?;
            dice.push(if coeff.both_empty {
                None
            } else {
                Some((dice_mismatch_form(g, s)? - (1.0 - coeff.value)).abs())
            });

            hd.push(if g.is_degenerate() || s.is_degenerate() {
                None
            } else {
                Some((hd_loss(&gh, &sp, &spacing, &cfg)?.value - hd_mismatch_form(g, s, &spacing)?).abs())
            });

            bd.push(if g.is_degenerate() {
                None
            } else {
                let lhs = n * boundary_loss(&ctx, &sp, &cfg)?.value + inside_sum;
                Some((lhs - bd_mismatch_form(g, s, &spacing)?).abs())
            });

            let iou = 1.0 - iou_loss(&gh, &sp, &exact_iou)?.value;
            dice_iou.push(Some((coeff.value - 2.0 * iou / (1.0 + iou)).abs()));
        }
    }
    Ok(vec![
        RelationCheck::from_diffs("dice_mismatch_form = 1 - dice_coefficient", 1e-12, dice),
        RelationCheck::from_diffs("hd_loss = hd_mismatch_form", 1e-12, hd),
        RelationCheck::from_diffs("N * boundary_loss + sum_G d_G = bd_mismatch_form", 1e-12, bd),
        RelationCheck::from_diffs("dice = 2 iou / (1 + iou)", 1e-12, dice_iou),
    ])
}

/// For every non-degenerate ground truth on the grid, the smallest boundary
/// loss over all hard predictions is attained only at the ground truth.
/// `max_abs_diff` reports the negated smallest winning margin, so the check
/// passes when every margin is positive.
pub fn boundary_argmin_check(dims: &[usize]) -> Result<RelationCheck> {
    let masks = all_masks(dims);
    let spacing = vec![1.0; dims.len()];
    let cfg = LossConfig::default();
    let mut cases = 0;
    let mut skipped = 0;
    let mut min_margin = f64::INFINITY;
    for g in &masks {
        if g.is_degenerate() {
            skipped += 1;
            continue;
        }
        cases += 1;
        let ctx = BoundaryContext::new(&g.to_one_hot(), &spacing)?;
        let at_gt = boundary_loss(&ctx, &g.to_prob(), &cfg)?.value;
        for s in masks.iter().filter(|s| *s != g) {
            let v = boundary_loss(&ctx, &s.to_prob(), &cfg)?.value;
            min_margin = min_margin.min(v - at_gt);
        }
    }
    Ok(RelationCheck {
        name: "boundary_loss uniquely minimized at S = G".into(),
        cases,
        skipped,
        max_abs_diff: -min_margin,
        tolerance: 0.0,
        pass: cases > 0 && min_margin > 0.0,
    })
}

/// Separable EDT against brute force on random masks up to 16 x 16 x 4.
pub fn dt_oracle_check(trials: usize, seed: u64, exec: Exec) -> Result<RelationCheck> {
    let diffs: Vec<Result<f64>> = exec.map(trials, |t| {
        let mut r = rng(seed.wrapping_mul(0x9E37_79B9).wrapping_add(t as u64));
        use rand::Rng;
        let rank = r.random_range(1..=3);
        let limits = [16, 16, 4];
        let dims: Vec<usize> = (0..rank).map(|k| r.random_range(1..=limits[k])).collect();
        let density = r.random_range(0.0..0.5);
        let mask: BinaryMask = random_mask(&mut r, &dims, density);
        let spacing: Vec<f64> = if r.random_bool(0.5) {
            vec![1.0; rank]
        } else {
            (0..rank).map(|_| r.random_range(0.25..3.0)).collect()
        };
        let fast = edt_with(&mask, &spacing, Exec::Sequential)?;
        let slow = edt_bruteforce(&mask, &spacing)?;
        Ok(fast
            .values()
            .iter()
            .zip(slow.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    });
    let diffs = diffs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(RelationCheck::from_diffs(
        "edt = edt_bruteforce",
        1e-9,
        diffs.into_iter().map(Some),
    ))
}

/// Every sweep the `relations` subcommand reports.
pub fn run_all(trials: usize, seed: u64, exec: Exec) -> Result<Vec<RelationCheck>> {
    let mut checks = identity_suite(trials, seed, exec)?;
    checks.extend(mismatch_suite(&[1, 4])?);
    checks.push(boundary_argmin_check(&[1, 4])?);
    checks.push(dt_oracle_check(trials, seed, exec)?);
    Ok(checks)
}
