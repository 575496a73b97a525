//! Small reference inputs shared by unit tests, the acceptance suite and the
//! CLI conformance tests.

use crate::tensor::{one_hot, OneHot, ProbMap};

/// Labels of the four-pixel binary fixture; class 1 is foreground.
pub const F1_LABELS: [usize; 4] = [1, 0, 0, 1];
/// Foreground probabilities of the four-pixel fixture.
pub const F1_FOREGROUND: [f64; 4] = [0.8, 0.2, 0.3, 0.9];

/// Four pixels, two classes, true-class probabilities 0.8, 0.8, 0.7, 0.9.
pub fn f1() -> (OneHot, ProbMap) {
    let g = one_hot(&[4], &F1_LABELS, 2).expect("valid fixture");
    let s = ProbMap::binary(&[4], &F1_FOREGROUND).expect("valid fixture");
    (g, s)
}

/// One-dimensional ground truth `[0, 0, 1, 1, 0]` used by the distance and
/// boundary examples.
pub const LINE5: [u8; 5] = [0, 0, 1, 1, 0];
