//! Direct optimization harness: plain gradient descent on per-pixel logits
//! against a fixed ground truth, with the loss gradient pulled back through
//! softmax. Used to check where each loss is minimized without a network.

use serde::Serialize;

use crate::distance::{empty_sentinel, hausdorff_exact};
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::metrics::dice_coefficient;
use crate::sample::{rng, standard_normals, RNG_NAME};
use crate::tensor::{softmax, softmax_vjp, BinaryMask, LabelMap, LossConfig, ProbMap};

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Independent standard normal logits drawn from the seed.
    Random,
    /// Explicit logits in `(pixel, class)` layout.
    Logits(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub spacing: Vec<f64>,
    pub loss_config: LossConfig,
    pub init: Init,
}

impl OptimizeConfig {
    pub fn new(steps: usize, lr: f64, seed: u64, dims: &[usize]) -> Self {
        Self {
            steps,
            lr,
            seed,
            spacing: vec![1.0; dims.len()],
            loss_config: LossConfig::default(),
            init: Init::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub dice_coefficient: f64,
    /// Exact Hausdorff distance between the ground-truth foreground and the
    /// argmax foreground; the empty-source sentinel if either is empty.
    pub hausdorff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptTrajectory {
    pub loss_name: String,
    pub rng: &'static str,
    pub records: Vec<StepRecord>,
    #[serde(skip)]
    pub final_logits: Vec<f64>,
}

impl OptTrajectory {
    pub fn first(&self) -> &StepRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("at least two records")
    }

    /// CSV with header `step,loss,dice_coefficient,hausdorff`; floats use
    /// shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss,dice_coefficient,hausdorff\n");
        for r in &self.records {
            out.push_str(&format!("{},{:?},{:?},{:?}\n", r.step, r.loss, r.dice_coefficient, r.hausdorff));
        }
        out
    }
}

/// Logits favouring `labels` by `margin` over every other class.
pub fn logits_from_labels(labels: &[usize], classes: usize, margin: f64) -> Vec<f64> {
    labels
        .iter()
        .flat_map(|&l| (0..classes).map(move |c| if c == l { margin } else { 0.0 }))
        .collect()
}

fn record(step: usize, loss: f64, gt: &BinaryMask, s: &ProbMap, spacing: &[f64]) -> Result<StepRecord> {
    let pred = s.foreground_mask();
    let dice = dice_coefficient(gt, &pred)?.value;
    let hausdorff = if gt.none_set() || pred.none_set() {
        empty_sentinel(gt.dims(), spacing)
    } else {
        hausdorff_exact(gt, &pred, spacing)?
    };
    Ok(StepRecord {
        step,
        loss,
        dice_coefficient: dice,
        hausdorff,
    })
}

/// Runs `steps` descent updates and records metrics before the first update
/// and after each one (`steps + 1` records). Deterministic for a fixed
/// configuration; single-threaded.
pub fn optimize(spec: &LossSpec, gt: &LabelMap, opts: &OptimizeConfig) -> Result<OptTrajectory> {
    if opts.steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    if !(opts.lr > 0.0 && opts.lr.is_finite()) {
        return Err(Error::InvalidParameter(format!("learning rate must be positive, got {}", opts.lr)));
    }
    let shape = gt.shape().clone();
    let g = gt.one_hot();
    let gt_fg = BinaryMask::new(shape.dims(), gt.values().iter().map(|&l| l != 0).collect())?;

    let mut logits = match &opts.init {
        Init::Random => standard_normals(&mut rng(opts.seed), shape.len()),
        Init::Logits(z) => {
            if z.len() != shape.len() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} logits", shape.len()),
                    got: format!("{} logits", z.len()),
                });
            }
            z.clone()
        }
    };

    let mut s = softmax(&shape, &logits)?;
    let mut loss = spec.prepare(&g, &s, &opts.spacing, &opts.loss_config)?;
    let mut records = Vec::with_capacity(opts.steps + 1);
    for step in 0..=opts.steps {
        if step > 0 {
            loss.refresh(&s)?;
        }
        let r = loss.eval(&s)?;
        if !r.is_finite() {
            return Err(Error::Diverged { step });
        }
        records.push(record(step, r.value, &gt_fg, &s, &opts.spacing)?);
        if step == opts.steps {
            break;
        }
        let dz = softmax_vjp(&s, &r.grad)?;
        for (z, d) in logits.iter_mut().zip(&dz) {
            *z -= opts.lr * d;
        }
        s = softmax(&shape, &logits).map_err(|_| Error::Diverged { step: step + 1 })?;
    }
    Ok(OptTrajectory {
        loss_name: spec.name().to_string(),
        rng: RNG_NAME,
        records,
        final_logits: logits,
    })
}

/// Square ground truth of side `side` centred in an `n x n` grid.
pub fn centered_square(n: usize, side: usize) -> LabelMap {
    let lo = (n - side) / 2;
    let hi = lo + side;
    let labels = (0..n * n)
        .map(|k| {
            let (r, c) = (k / n, k % n);
            usize::from((lo..hi).contains(&r) && (lo..hi).contains(&c))
        })
        .collect();
    LabelMap::new(crate::tensor::Shape::new(&[n, n], 2).expect("n >= 1"), labels).expect("binary labels")
}
