//! Hard-mask evaluation metrics.

use serde::Serialize;

use crate::error::Result;
use crate::tensor::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiceCoefficient {
    pub value: f64,
    /// Both masks empty; the value is then defined as 1.
    pub both_empty: bool,
}

/// `2|G ∩ S| / (|G| + |S|)`.
pub fn dice_coefficient(g: &BinaryMask, s: &BinaryMask) -> Result<DiceCoefficient> {
    g.check_same_dims(s)?;
    let total = g.count() + s.count();
    if total == 0 {
        return Ok(DiceCoefficient {
            value: 1.0,
            both_empty: true,
        });
    }
    let inter = g
        .values()
        .iter()
        .zip(s.values())
        .filter(|(a, b)| **a && **b)
        .count();
    Ok(DiceCoefficient {
        value: 2.0 * inter as f64 / total as f64,
        both_empty: false,
    })
}

/// `|G ∩ S| / |G ∪ S|`; 1 for two empty masks.
pub fn iou_coefficient(g: &BinaryMask, s: &BinaryMask) -> Result<f64> {
    g.check_same_dims(s)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in g.values().iter().zip(s.values()) {
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
