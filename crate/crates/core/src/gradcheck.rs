//! Central-difference verification of the analytic loss gradients.
//!
//! Differences are taken on raw probability entries, one coordinate at a
//! time, without projecting back onto the simplex. State the loss freezes
//! (TopK selection, distance maps) stays fixed across perturbations.
//!
//! The relative error is the worst absolute discrepancy divided by the
//! largest gradient magnitude (analytic or numeric), so entries that are
//! exactly zero do not blow up the ratio.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::loss::{LossSpec, PreparedLoss};
use crate::sample::{random_instance, InstanceOptions};
use crate::tensor::{LossConfig, ProbMap};

pub const DEFAULT_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub loss_name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// `(pixel, class)` of the largest absolute discrepancy.
    pub worst_index: (usize, usize),
    pub tolerance: f64,
    pub pass: bool,
}

pub fn finite_diff_grad(loss: &PreparedLoss, s: &ProbMap, h: f64) -> Result<Vec<f64>> {
    finite_diff_grad_with(loss, s, h, Exec::default())
}

pub fn finite_diff_grad_with(loss: &PreparedLoss, s: &ProbMap, h: f64, exec: Exec) -> Result<Vec<f64>> {
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::InvalidParameter(format!("step must be in (0, 0.5), got {h}")));
    }
    if let Some(k) = s.values().iter().position(|&v| !(h..=1.0 - h).contains(&v)) {
        return Err(Error::InvalidParameter(format!(
            "probability entry {k} = {} is not at least {h} away from 0 and 1",
            s.values()[k]
        )));
    }
    let shape = s.shape().clone();
    let results = exec.map(s.values().len(), |k| -> Result<f64> {
        let mut plus = s.values().to_vec();
        let mut minus = plus.clone();
        plus[k] += h;
        minus[k] -= h;
        let lp = loss.eval(&ProbMap::from_raw(shape.clone(), plus)?)?.value;
        let lm = loss.eval(&ProbMap::from_raw(shape.clone(), minus)?)?.value;
        Ok((lp - lm) / (2.0 * h))
    });
    results.into_iter().collect()
}

/// Compares an analytic gradient with a numeric one.
pub fn compare(name: &str, classes: usize, analytic: &[f64], numeric: &[f64], tol: f64) -> GradReport {
    let mut worst = 0;
    let mut max_abs = 0.0f64;
    let mut scale = 0.0f64;
    for (k, (a, f)) in analytic.iter().zip(numeric).enumerate() {
        let d = (a - f).abs();
        if d > max_abs || d.is_nan() {
            max_abs = d;
            worst = k;
        }
        scale = scale.max(a.abs()).max(f.abs());
    }
    let max_rel = if max_abs == 0.0 { 0.0 } else { max_abs / scale.max(f64::MIN_POSITIVE) };
    GradReport {
        loss_name: name.to_string(),
        max_rel_err: max_rel,
        max_abs_err: max_abs,
        worst_index: (worst / classes, worst % classes),
        tolerance: tol,
        pass: max_rel <= tol,
    }
}

/// Analytic vs central-difference gradient of a prepared loss at `s`.
pub fn gradcheck(loss: &PreparedLoss, s: &ProbMap, h: f64, tol: f64) -> Result<GradReport> {
    let analytic = loss.eval(s)?.grad;
    let numeric = finite_diff_grad(loss, s, h)?;
    Ok(compare(loss.spec().name(), s.shape().classes(), &analytic, &numeric, tol))
}

/// Instance constraints each loss needs for a meaningful check.
pub fn instance_options(spec: &LossSpec) -> InstanceOptions {
    let mut opts = InstanceOptions::default();
    if matches!(spec, LossSpec::Combo(_)) {
        opts.max_classes = 2;
    }
    opts
}

/// Whether an instance is usable for `spec`: ELL is kept away from
/// `Dice_c = 1`, where fractional powers of `-ln Dice_c` have unbounded slope.
fn admissible(spec: &LossSpec, loss: &PreparedLoss, s: &ProbMap, cfg: &LossConfig) -> bool {
    match spec {
        LossSpec::Ell(_) => crate::loss::class_dice(loss.ground_truth(), s, cfg)
            .iter()
            .all(|d| -d.ln() >= 1e-3),
        _ => true,
    }
}

/// Summary of a batch of gradient checks for one loss.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub loss_name: String,
    pub trials: usize,
    pub worst: GradReport,
    pub pass: bool,
}

/// Runs `trials` seeded random checks of `spec`. Trials run in parallel
/// under [`Exec::Parallel`]; the report is independent of scheduling.
pub fn gradcheck_suite(
    spec: &LossSpec,
    trials: usize,
    seed: u64,
    cfg: &LossConfig,
    h: f64,
    tol: f64,
    exec: Exec,
) -> Result<SuiteReport> {
    let opts = instance_options(spec);
    let reports = exec.map(trials, |t| -> Result<GradReport> {
        let mut rng = crate::sample::rng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(t as u64));
        loop {
            let (g, s) = random_instance(&mut rng, &opts);
            let spacing: Vec<f64> = g.shape().dims().iter().map(|_| rng.random_range(0.5..2.0)).collect();
            let loss = spec.prepare(&g, &s, &spacing, cfg)?;
            if !admissible(spec, &loss, &s, cfg) {
                continue;
            }
            let analytic = loss.eval(&s)?.grad;
            let numeric = finite_diff_grad_with(&loss, &s, h, Exec::Sequential)?;
            return Ok(compare(spec.name(), s.shape().classes(), &analytic, &numeric, tol));
        }
    });
    let mut worst: Option<GradReport> = None;
    for r in reports {
        let r = r?;
        if worst.as_ref().is_none_or(|w| r.max_rel_err > w.max_rel_err) {
            worst = Some(r);
        }
    }
    let worst = worst.ok_or_else(|| Error::InvalidParameter("need at least one trial".into()))?;
    Ok(SuiteReport {
        loss_name: spec.name().to_string(),
        trials,
        pass: worst.pass,
        worst,
    })
}
