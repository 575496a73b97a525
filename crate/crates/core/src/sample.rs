//! Seeded random instances for gradient and identity suites.
//!
//! All randomness comes from ChaCha8 seeded with a `u64`, with normals drawn
//! by `rand_distr::StandardNormal`, so a seed reproduces the same instances
//! on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{softmax, BinaryMask, LabelMap, OneHot, ProbMap, Shape};

/// Identifier written into reports that depend on generated numbers.
pub const RNG_NAME: &str = "ChaCha8Rng(seed_from_u64) + rand_distr::StandardNormal";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random spatial dims of rank 1 to 3 with at most `max_pixels` pixels.
pub fn random_dims(rng: &mut impl Rng, max_pixels: usize) -> Vec<usize> {
    let max_pixels = max_pixels.max(2);
    loop {
        let rank = rng.random_range(1..=3);
        let dims: Vec<usize> = (0..rank).map(|_| rng.random_range(1..=8)).collect();
        let n: usize = dims.iter().product();
        if (2..=max_pixels).contains(&n) {
            return dims;
        }
    }
}

#[derive(Debug, Clone)]
pub struct InstanceOptions {
    pub max_pixels: usize,
    pub min_classes: usize,
    pub max_classes: usize,
    /// Every class appears at least once in the ground truth.
    pub all_classes_present: bool,
    /// Lower bound on every probability (the map is mixed with uniform).
    pub min_prob: f64,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        Self {
            max_pixels: 64,
            min_classes: 2,
            max_classes: 4,
            all_classes_present: true,
            min_prob: 0.02,
        }
    }
}

/// Random ground truth and a strictly interior probability map.
pub fn random_instance(rng: &mut impl Rng, opts: &InstanceOptions) -> (OneHot, ProbMap) {
    loop {
        let dims = random_dims(rng, opts.max_pixels);
        let classes = rng.random_range(opts.min_classes..=opts.max_classes);
        let n: usize = dims.iter().product();
        if opts.all_classes_present && n < classes {
            continue;
        }
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        if opts.all_classes_present && (0..classes).any(|c| !labels.contains(&c)) {
            continue;
        }
        let shape = Shape::new(&dims, classes).expect("generated dims are valid");
        let g = LabelMap::new(shape.clone(), labels)
            .expect("labels in range")
            .one_hot();
        let s = random_probs(rng, &shape, opts.min_prob);
        return (g, s);
    }
}

/// Softmax of scaled normal logits, mixed with uniform so every entry is at
/// least `min_prob`.
pub fn random_probs(rng: &mut impl Rng, shape: &Shape, min_prob: f64) -> ProbMap {
    let logits: Vec<f64> = (0..shape.len())
        .map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let c = shape.classes() as f64;
    let mix = (min_prob * c).min(1.0);
    let mut s = softmax(shape, &logits).expect("finite logits");
    for v in s.values_mut() {
        *v = (1.0 - mix) * *v + mix / c;
    }
    s
}

pub fn standard_normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn random_mask(rng: &mut impl Rng, dims: &[usize], density: f64) -> BinaryMask {
    let n: usize = dims.iter().product();
    let values = (0..n).map(|_| rng.random_bool(density)).collect();
    BinaryMask::new(dims, values).expect("dims are valid")
}

/// Every binary mask over `n` pixels of a `dims` grid, in counting order.
pub fn all_masks(dims: &[usize]) -> Vec<BinaryMask> {
    let n: usize = dims.iter().product();
    assert!(n <= 16, "exhaustive enumeration is for tiny grids");
    (0..1u32 << n)
        .map(|bits| {
            let values = (0..n).map(|i| bits >> i & 1 == 1).collect();
            BinaryMask::new(dims, values).expect("dims are valid")
        })
        .collect()
}
