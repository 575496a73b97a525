//! Data model shared by every loss: shapes, label maps, one-hot targets,
//! probability maps, masks, and the softmax layer used by the optimizer.
//!
//! Per-class tensors are stored pixel-major: entry `(i, c)` lives at
//! `i * classes + c`. Spatial pixels are row-major with the last axis fastest.

use crate::error::{Error, Result};

/// Default simplex tolerance for [`ProbMap::new`].
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: Vec<usize>,
    classes: usize,
}

impl Shape {
    pub fn new(dims: &[usize], classes: usize) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::InvalidShape(format!(
                "expected 1 to 3 spatial dims, got {}",
                dims.len()
            )));
        }
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidShape(format!("axis {axis} has extent 0")));
        }
        if classes < 2 {
            return Err(Error::InvalidShape(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            classes,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Number of pixels N.
    pub fn pixels(&self) -> usize {
        self.dims.iter().product()
    }

    /// Number of `(pixel, class)` entries.
    pub fn len(&self) -> usize {
        self.pixels() * self.classes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn with_classes(&self, classes: usize) -> Result<Self> {
        Shape::new(&self.dims, classes)
    }

    fn describe(&self) -> String {
        format!("{:?} x {} classes", self.dims, self.classes)
    }

    pub(crate) fn check_same(&self, other: &Shape) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                expected: self.describe(),
                got: other.describe(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    shape: Shape,
    values: Vec<usize>,
}

impl LabelMap {
    pub fn new(shape: Shape, values: Vec<usize>) -> Result<Self> {
        if values.len() != shape.pixels() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} labels", shape.pixels()),
                got: format!("{} labels", values.len()),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| v >= shape.classes())
        {
            return Err(Error::LabelOutOfRange {
                index,
                value,
                classes: shape.classes(),
            });
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn one_hot(&self) -> OneHot {
        OneHot::from_labels(self)
    }

    pub fn class_mask(&self, class: usize) -> BinaryMask {
        BinaryMask::from_fn(self.shape.dims(), |i| self.values[i] == class)
    }
}

/// Encodes raw labels as a one-hot tensor with `classes` channels.
pub fn one_hot(dims: &[usize], labels: &[usize], classes: usize) -> Result<OneHot> {
    let shape = Shape::new(dims, classes)?;
    Ok(LabelMap::new(shape, labels.to_vec())?.one_hot())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneHot {
    shape: Shape,
    labels: Vec<usize>,
    values: Vec<f64>,
}

impl OneHot {
    pub fn from_labels(labels: &LabelMap) -> Self {
        let shape = labels.shape().clone();
        let c = shape.classes();
        let mut values = vec![0.0; shape.len()];
        for (i, &l) in labels.values().iter().enumerate() {
            values[i * c + l] = 1.0;
        }
        Self {
            shape,
            labels: labels.values().to_vec(),
            values,
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Class id of each pixel.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, pixel: usize, class: usize) -> f64 {
        self.values[pixel * self.shape.classes() + class]
    }

    pub fn class_mask(&self, class: usize) -> BinaryMask {
        BinaryMask::from_fn(self.shape.dims(), |i| self.labels[i] == class)
    }

    /// Pixel count of `class`.
    pub fn class_count(&self, class: usize) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    pub fn label_map(&self) -> LabelMap {
        LabelMap {
            shape: self.shape.clone(),
            values: self.labels.clone(),
        }
    }
}

/// Per-pixel class probabilities.
///
/// [`ProbMap::new`] enforces the simplex. [`ProbMap::from_raw`] skips that
/// check so that gradient verification can perturb single entries; every loss
/// is defined for arbitrary entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    shape: Shape,
    values: Vec<f64>,
}

impl ProbMap {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        let s = Self::from_raw(shape, values)?;
        s.validate(SIMPLEX_TOL)?;
        Ok(s)
    }

    pub fn from_raw(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} entries", shape.len()),
                got: format!("{} entries", values.len()),
            });
        }
        Ok(Self { shape, values })
    }

    /// Two-class map from foreground probabilities.
    pub fn binary(dims: &[usize], foreground: &[f64]) -> Result<Self> {
        let shape = Shape::new(dims, 2)?;
        let values = foreground.iter().flat_map(|&p| [1.0 - p, p]).collect();
        Self::new(shape, values)
    }

    /// Hard prediction equal to a one-hot tensor.
    pub fn from_one_hot(g: &OneHot) -> Self {
        Self {
            shape: g.shape().clone(),
            values: g.values().to_vec(),
        }
    }

    /// Uniform `1/C` map.
    pub fn uniform(shape: Shape) -> Self {
        let v = 1.0 / shape.classes() as f64;
        let values = vec![v; shape.len()];
        Self { shape, values }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, pixel: usize, class: usize) -> f64 {
        self.values[pixel * self.shape.classes() + class]
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        validate_prob(self, tol)
    }

    /// Thresholded mask of one channel: `s[i][class] >= 0.5`.
    pub fn threshold_mask(&self, class: usize) -> BinaryMask {
        let c = self.shape.classes();
        BinaryMask::from_fn(self.shape.dims(), |i| self.values[i * c + class] >= 0.5)
    }

    /// Per-pixel argmax with ties resolved to the lowest class id.
    pub fn argmax(&self) -> Vec<usize> {
        self.values
            .chunks(self.shape.classes())
            .map(|row| {
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    /// Mask of pixels whose argmax is not the background class.
    pub fn foreground_mask(&self) -> BinaryMask {
        let labels = self.argmax();
        BinaryMask::from_fn(self.shape.dims(), |i| labels[i] != 0)
    }
}

/// Checks every entry is in `[0, 1]` and each pixel's classes sum to 1 within
/// `tol`.
pub fn validate_prob(s: &ProbMap, tol: f64) -> Result<()> {
    let c = s.shape.classes();
    for (pixel, row) in s.values.chunks(c).enumerate() {
        for (class, &value) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::ProbabilityOutOfRange {
                    pixel,
                    class,
                    value,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::SimplexViolation { pixel, sum });
        }
    }
    Ok(())
}

/// Row-wise softmax over `(pixel, class)` logits.
pub fn softmax(shape: &Shape, logits: &[f64]) -> Result<ProbMap> {
    if logits.len() != shape.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} logits", shape.len()),
            got: format!("{} logits", logits.len()),
        });
    }
    if let Some(index) = logits.iter().position(|z| !z.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let c = shape.classes();
    let mut values = Vec::with_capacity(logits.len());
    for row in logits.chunks(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = values.len();
        values.extend(row.iter().map(|z| (z - max).exp()));
        let sum: f64 = values[start..].iter().sum();
        values[start..].iter_mut().for_each(|v| *v /= sum);
    }
    Ok(ProbMap {
        shape: shape.clone(),
        values,
    })
}

/// Pulls a cotangent on probabilities back to logits:
/// `out[i][c] = s[i][c] * (grad[i][c] - sum_k s[i][k] grad[i][k])`.
pub fn softmax_vjp(s: &ProbMap, grad_s: &[f64]) -> Result<Vec<f64>> {
    if grad_s.len() != s.values.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} entries", s.values.len()),
            got: format!("{} entries", grad_s.len()),
        });
    }
    let c = s.shape.classes();
    let mut out = Vec::with_capacity(grad_s.len());
    for (srow, grow) in s.values.chunks(c).zip(grad_s.chunks(c)) {
        let dot: f64 = srow.iter().zip(grow).map(|(a, b)| a * b).sum();
        out.extend(srow.iter().zip(grow).map(|(si, gi)| si * (gi - dot)));
    }
    Ok(out)
}

/// Binary spatial mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    dims: Vec<usize>,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: &[usize], values: Vec<bool>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 || dims.contains(&0) {
            return Err(Error::InvalidShape(format!("bad mask dims {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if values.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} pixels"),
                got: format!("{} pixels", values.len()),
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            values,
        })
    }

    /// Builds from 0/1 integers; any nonzero counts as set.
    pub fn from_bits(dims: &[usize], bits: &[u8]) -> Result<Self> {
        Self::new(dims, bits.iter().map(|&b| b != 0).collect())
    }

    pub(crate) fn from_fn(dims: &[usize], f: impl Fn(usize) -> bool) -> Self {
        let n: usize = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            values: (0..n).map(f).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn none_set(&self) -> bool {
        !self.values.iter().any(|&v| v)
    }

    pub fn all_set(&self) -> bool {
        self.values.iter().all(|&v| v)
    }

    /// All-zero or all-one: no boundary exists.
    pub fn is_degenerate(&self) -> bool {
        self.none_set() || self.all_set()
    }

    pub fn complement(&self) -> Self {
        Self {
            dims: self.dims.clone(),
            values: self.values.iter().map(|v| !v).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(u8::from(v))).collect()
    }

    /// Two-class one-hot tensor with this mask as the foreground channel.
    pub fn to_one_hot(&self) -> OneHot {
        let labels = self.values.iter().map(|&v| usize::from(v)).collect();
        let shape = Shape::new(&self.dims, 2).expect("mask dims were validated");
        LabelMap::new(shape, labels)
            .expect("labels are 0 or 1")
            .one_hot()
    }

    /// Hard two-class probability map with this mask as foreground.
    pub fn to_prob(&self) -> ProbMap {
        ProbMap::from_one_hot(&self.to_one_hot())
    }

    pub(crate) fn check_same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.dims),
                got: format!("{:?}", other.dims),
            });
        }
        Ok(())
    }
}

/// Loss-wide numerical settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Smoothing constant added to ratio numerators and denominators.
    pub epsilon: f64,
    /// Floor applied to probabilities before taking logarithms.
    pub log_clamp: f64,
    /// When false, class 0 is dropped from every class sum.
    pub include_background: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            log_clamp: 1e-12,
            include_background: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.log_clamp > 0.0 && self.log_clamp < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "log_clamp must be in (0, 1), got {}",
                self.log_clamp
            )));
        }
        Ok(())
    }

    pub fn includes(&self, class: usize) -> bool {
        self.include_background || class != 0
    }

    pub(crate) fn clamp(&self, p: f64) -> f64 {
        p.max(self.log_clamp)
    }
}

/// Conditions a loss met while evaluating that did not prevent a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(tag = "kind", content = "class", rename_all = "snake_case")]
pub enum Flag {
    /// TopK kept no pixel.
    EmptySelection,
    /// Ground-truth class has no boundary (absent or covering the image).
    DegenerateClass(usize),
    /// Thresholded prediction for a class is empty or full.
    DegeneratePrediction(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// dL/ds in the same layout as the probability map.
    pub grad: Vec<f64>,
    pub flags: Vec<Flag>,
}

impl LossResult {
    pub(crate) fn new(value: f64, grad: Vec<f64>) -> Self {
        Self {
            value,
            grad,
            flags: Vec::new(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

pub(crate) fn check_pair(g: &OneHot, s: &ProbMap) -> Result<()> {
    g.shape().check_same(s.shape())
}
