//! Exact Euclidean distance transforms and the maps derived from them.
//!
//! [`edt`] runs one lower-envelope-of-parabolas pass per axis over squared
//! distances, so the result is exact (not a chamfer approximation). Distances
//! are measured between pixel centres, scaled per axis by `spacing`.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tensor::{BinaryMask, OneHot};

/// Per-pixel distances on the spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    dims: Vec<usize>,
    spacing: Vec<f64>,
    values: Vec<f64>,
    degenerate: bool,
}

impl DistanceMap {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Set when some pixels had no source to measure to and hold the
    /// [`empty_sentinel`] instead.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Signed distance: negative inside the mask, positive outside.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    dims: Vec<usize>,
    values: Vec<f64>,
    degenerate: bool,
}

impl LevelSet {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Stand-in for an infinite distance: the sum of the physical axis extents,
/// which bounds every in-grid distance.
pub fn empty_sentinel(dims: &[usize], spacing: &[f64]) -> f64 {
    dims.iter().zip(spacing).map(|(&d, &s)| d as f64 * s).sum()
}

/// Unit spacing for a grid of the given rank.
pub fn unit_spacing(dims: &[usize]) -> Vec<f64> {
    vec![1.0; dims.len()]
}

fn check_spacing(dims: &[usize], spacing: &[f64]) -> Result<()> {
    if spacing.len() != dims.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} spacing values", dims.len()),
            got: format!("{} spacing values", spacing.len()),
        });
    }
    if let Some(bad) = spacing.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "spacing must be positive and finite, got {bad}"
        )));
    }
    Ok(())
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    strides
}

/// One-dimensional squared distance transform of a sampled function:
/// `out[q] = min_p ((q - p) * step)^2 + f[p]`. Infinite samples are not
/// sources. Lower envelope of parabolas, linear time.
fn envelope_1d(f: &[f64], step: f64, out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    let pos = |p: usize| p as f64 * step;
    // Intersection abscissa of the parabolas rooted at p and q (p < q).
    let meet = |p: usize, q: usize| {
        let (xp, xq) = (pos(p), pos(q));
        ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp))
    };
    for (q, fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        loop {
            match sites.last() {
                None => {
                    sites.push(q);
                    bounds.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let x = meet(p, q);
                    if x <= *bounds.last().expect("bounds track sites") {
                        sites.pop();
                        bounds.pop();
                    } else {
                        sites.push(q);
                        bounds.push(x);
                        break;
                    }
                }
            }
        }
    }
    if sites.is_empty() {
        out.iter_mut().for_each(|v| *v = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let x = pos(q);
        while k + 1 < sites.len() && bounds[k + 1] < x {
            k += 1;
        }
        let p = sites[k];
        let d = x - pos(p);
        *o = d * d + f[p];
    }
}

/// Squared EDT; infinite where there is no source at all.
fn squared_edt(source: &BinaryMask, spacing: &[f64], exec: Exec) -> Vec<f64> {
    let dims = source.dims();
    let strides = strides(dims);
    let mut sq: Vec<f64> = source
        .values()
        .iter()
        .map(|&v| if v { 0.0 } else { f64::INFINITY })
        .collect();
    let n = sq.len();
    for axis in 0..dims.len() {
        let len = dims[axis];
        let stride = strides[axis];
        let lines = n / len;
        // Line `l` starts at the l-th flat index whose `axis` coordinate is 0.
        let start = |l: usize| {
            let outer = l / stride;
            let inner = l % stride;
            outer * stride * len + inner
        };
        let input = &sq;
        let transformed: Vec<Vec<f64>> = exec.map(lines, |l| {
            let s0 = start(l);
            let f: Vec<f64> = (0..len).map(|j| input[s0 + j * stride]).collect();
            let mut out = vec![0.0; len];
            envelope_1d(&f, spacing[axis], &mut out, &mut Vec::new(), &mut Vec::new());
            out
        });
        for (l, line) in transformed.into_iter().enumerate() {
            let s0 = start(l);
            for (j, v) in line.into_iter().enumerate() {
                sq[s0 + j * stride] = v;
            }
        }
    }
    sq
}

/// Distance from every pixel to the nearest set pixel of `source`.
///
/// An empty source yields [`empty_sentinel`] everywhere with the degeneracy
/// flag set.
pub fn edt(source: &BinaryMask, spacing: &[f64]) -> Result<DistanceMap> {
    edt_with(source, spacing, Exec::default())
}

pub fn edt_with(source: &BinaryMask, spacing: &[f64], exec: Exec) -> Result<DistanceMap> {
    check_spacing(source.dims(), spacing)?;
    let dims = source.dims().to_vec();
    if source.none_set() {
        let sentinel = empty_sentinel(&dims, spacing);
        return Ok(DistanceMap {
            values: vec![sentinel; source.len()],
            dims,
            spacing: spacing.to_vec(),
            degenerate: true,
        });
    }
    let values = squared_edt(source, spacing, exec)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    Ok(DistanceMap {
        dims,
        spacing: spacing.to_vec(),
        values,
        degenerate: false,
    })
}

fn coords(mut flat: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = flat % dims[k];
        flat /= dims[k];
    }
}

/// Exhaustive nearest-source search; same contract as [`edt`].
pub fn edt_bruteforce(source: &BinaryMask, spacing: &[f64]) -> Result<DistanceMap> {
    check_spacing(source.dims(), spacing)?;
    let dims = source.dims().to_vec();
    let rank = dims.len();
    let sources: Vec<Vec<usize>> = source
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v)
        .map(|(i, _)| {
            let mut c = vec![0; rank];
            coords(i, &dims, &mut c);
            c
        })
        .collect();
    if sources.is_empty() {
        let sentinel = empty_sentinel(&dims, spacing);
        return Ok(DistanceMap {
            values: vec![sentinel; source.len()],
            dims,
            spacing: spacing.to_vec(),
            degenerate: true,
        });
    }
    let mut q = vec![0; rank];
    let values = (0..source.len())
        .map(|i| {
            coords(i, &dims, &mut q);
            sources
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(&q)
                        .zip(spacing)
                        .map(|((&a, &b), &s)| {
                            let d = (a as f64 - b as f64) * s;
                            d * d
                        })
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    Ok(DistanceMap {
        dims,
        spacing: spacing.to_vec(),
        values,
        degenerate: false,
    })
}

/// Inside the mask: distance to the nearest outside pixel. Outside: distance
/// to the nearest inside pixel.
pub fn unsigned_boundary_distance(mask: &BinaryMask, spacing: &[f64]) -> Result<DistanceMap> {
    unsigned_boundary_distance_with(mask, spacing, Exec::default())
}

pub fn unsigned_boundary_distance_with(
    mask: &BinaryMask,
    spacing: &[f64],
    exec: Exec,
) -> Result<DistanceMap> {
    let to_inside = edt_with(mask, spacing, exec)?;
    let to_outside = edt_with(&mask.complement(), spacing, exec)?;
    let values = mask
        .values()
        .iter()
        .zip(to_inside.values.iter().zip(&to_outside.values))
        .map(|(&inside, (&din, &dout))| if inside { dout } else { din })
        .collect();
    Ok(DistanceMap {
        dims: mask.dims().to_vec(),
        spacing: spacing.to_vec(),
        values,
        degenerate: mask.is_degenerate(),
    })
}

pub fn level_set(mask: &BinaryMask, spacing: &[f64]) -> Result<LevelSet> {
    let d = unsigned_boundary_distance(mask, spacing)?;
    let values = mask
        .values()
        .iter()
        .zip(&d.values)
        .map(|(&inside, &v)| if inside { -v } else { v })
        .collect();
    Ok(LevelSet {
        dims: d.dims,
        values,
        degenerate: d.degenerate,
    })
}

/// Per-class boundary emphasis `D^c = 1 - dt^c / max(dt^c)`, zero for
/// degenerate classes. Stored pixel-major like the probability map.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMap {
    classes: usize,
    values: Vec<f64>,
}

impl PenaltyMap {
    /// Wraps explicit penalties, e.g. the constant maps used in identity
    /// checks.
    pub fn from_values(classes: usize, values: Vec<f64>) -> Self {
        Self { classes, values }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, pixel: usize, class: usize) -> f64 {
        self.values[pixel * self.classes + class]
    }
}

pub fn boundary_penalty_map(g: &OneHot, spacing: &[f64]) -> Result<PenaltyMap> {
    let classes = g.shape().classes();
    let n = g.shape().pixels();
    let mut values = vec![0.0; n * classes];
    for c in 0..classes {
        let mask = g.class_mask(c);
        if mask.is_degenerate() {
            continue;
        }
        let dt = unsigned_boundary_distance(&mask, spacing)?;
        let max = dt.max();
        if max <= 0.0 {
            continue;
        }
        for (i, d) in dt.values.iter().enumerate() {
            values[i * classes + c] = 1.0 - d / max;
        }
    }
    Ok(PenaltyMap { classes, values })
}

/// Pixels within `radius` (inclusive) of the mask.
pub fn dilate(mask: &BinaryMask, radius: f64, spacing: &[f64]) -> Result<BinaryMask> {
    let d = edt(mask, spacing)?;
    if d.is_degenerate() {
        return Ok(mask.clone());
    }
    BinaryMask::new(mask.dims(), d.values.iter().map(|&v| v <= radius).collect())
}

/// Symmetric Hausdorff distance between two nonempty masks.
pub fn hausdorff_exact(g: &BinaryMask, s: &BinaryMask, spacing: &[f64]) -> Result<f64> {
    g.check_same_dims(s)?;
    if g.none_set() {
        return Err(Error::Degenerate("hausdorff: ground-truth mask is empty".into()));
    }
    if s.none_set() {
        return Err(Error::Degenerate("hausdorff: predicted mask is empty".into()));
    }
    let to_g = edt(g, spacing)?;
    let to_s = edt(s, spacing)?;
    let directed = |from: &BinaryMask, to: &DistanceMap| {
        from.values()
            .iter()
            .zip(&to.values)
            .filter(|(&v, _)| v)
            .map(|(_, &d)| d)
            .fold(0.0, f64::max)
    };
    Ok(directed(s, &to_g).max(directed(g, &to_s)))
}
