use proptest::prelude::*;

use segloss::distance::{edt, level_set};
use segloss::io::{decode, encode, Tensor, TensorData};
use segloss::loss::*;
use segloss::metrics::dice_coefficient;
use segloss::sample::{random_instance, rng, InstanceOptions};
use segloss::{softmax, BinaryMask, LabelMap, LossConfig, OneHot, ProbMap, Shape};

fn instance(seed: u64) -> (OneHot, ProbMap) {
    random_instance(&mut rng(seed), &InstanceOptions::default())
}

fn mask_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<bool>, Vec<f64>)> {
    prop::collection::vec(1usize..7, 1..=3).prop_flat_map(|dims| {
        let n: usize = dims.iter().product();
        let rank = dims.len();
        (
            Just(dims),
            prop::collection::vec(prop::bool::weighted(0.3), n),
            prop::collection::vec(0.25f64..3.0, rank),
        )
    })
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edt_is_lipschitz_along_axes((dims, bits, spacing) in mask_strategy()) {
        let mask = BinaryMask::new(&dims, bits).unwrap();
        prop_assume!(!mask.none_set());
        let d = edt(&mask, &spacing).unwrap();
        let st = strides(&dims);
        for p in 0..mask.len() {
            if mask.values()[p] {
                prop_assert_eq!(d.values()[p], 0.0);
            }
            for axis in 0..dims.len() {
                if (p / st[axis]) % dims[axis] + 1 < dims[axis] {
                    let q = p + st[axis];
                    prop_assert!((d.values()[p] - d.values()[q]).abs() <= spacing[axis] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn level_set_flips_under_complement((dims, bits, spacing) in mask_strategy()) {
        let mask = BinaryMask::new(&dims, bits).unwrap();
        prop_assume!(!mask.is_degenerate());
        let a = level_set(&mask, &spacing).unwrap();
        let b = level_set(&mask.complement(), &spacing).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert_eq!(*x, -*y);
        }
        for (inside, v) in mask.values().iter().zip(a.values()) {
            let sign_ok = if *inside { *v < 0.0 } else { *v > 0.0 };
            prop_assert!(sign_ok);
        }
    }

    #[test]
    fn ce_nonnegative_and_focal_below(seed in any::<u64>(), gamma in 0.0f64..5.0) {
        let (g, s) = instance(seed);
        let cfg = LossConfig::default();
        let c = ce(&g, &s, &cfg).unwrap().value;
        prop_assert!(c >= 0.0);
        let f = focal(&g, &s, &FocalParams { gamma }, &cfg).unwrap().value;
        prop_assert!(f <= c + 1e-15);
    }

    #[test]
    fn wce_is_linear_in_weights(seed in any::<u64>(), a in 0.1f64..10.0) {
        let (g, s) = instance(seed);
        let cfg = LossConfig::default();
        let w: Vec<f64> = (0..g.shape().classes()).map(|c| 0.5 + c as f64).collect();
        let base = wce(&g, &s, &ClassWeights(w.clone()), &cfg).unwrap();
        let scaled = wce(&g, &s, &ClassWeights(w.iter().map(|x| a * x).collect()), &cfg).unwrap();
        prop_assert!((scaled.value - a * base.value).abs() <= 1e-12 * scaled.value.abs().max(1.0));
        for (x, y) in scaled.grad.iter().zip(&base.grad) {
            prop_assert!((x - a * y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn region_losses_ignore_pixel_order(seed in any::<u64>(), shift in 1usize..64) {
        let (g, s) = instance(seed);
        let n = g.shape().pixels();
        let c = g.shape().classes();
        // Rotate pixels on a flattened 1D grid.
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let shape = Shape::new(&[n], c).unwrap();
        let labels: Vec<usize> = perm.iter().map(|&p| g.labels()[p]).collect();
        let g2 = LabelMap::new(shape.clone(), labels).unwrap().one_hot();
        let vals: Vec<f64> = perm.iter().flat_map(|&p| (0..c).map(move |k| (p, k))).map(|(p, k)| s.get(p, k)).collect();
        let s2 = ProbMap::from_raw(shape, vals).unwrap();
        let cfg = LossConfig::default();
        let pairs = [
            (dice_loss(&g, &s, &cfg).unwrap().value, dice_loss(&g2, &s2, &cfg).unwrap().value),
            (iou_loss(&g, &s, &cfg).unwrap().value, iou_loss(&g2, &s2, &cfg).unwrap().value),
            (generalized_dice_loss(&g, &s, &cfg).unwrap().value, generalized_dice_loss(&g2, &s2, &cfg).unwrap().value),
            (
                tversky_loss(&g, &s, &TverskyParams::default(), &cfg).unwrap().value,
                tversky_loss(&g2, &s2, &TverskyParams::default(), &cfg).unwrap().value,
            ),
            (
                ss_loss(&g, &s, &SsParams::default(), &cfg).unwrap().value,
                ss_loss(&g2, &s2, &SsParams::default(), &cfg).unwrap().value,
            ),
        ];
        for (a, b) in pairs {
            prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn region_losses_stay_in_unit_interval(seed in any::<u64>()) {
        let (g, s) = instance(seed);
        let cfg = LossConfig::default();
        for v in [
            dice_loss(&g, &s, &cfg).unwrap().value,
            iou_loss(&g, &s, &cfg).unwrap().value,
            tversky_loss(&g, &s, &TverskyParams::default(), &cfg).unwrap().value,
            generalized_dice_loss(&g, &s, &cfg).unwrap().value,
        ] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(logits in prop::collection::vec(-30.0f64..30.0, 12)) {
        let s = softmax(&Shape::new(&[4], 3).unwrap(), &logits).unwrap();
        s.validate(1e-12).unwrap();
    }

    #[test]
    fn ntf1_round_trips_bits(dims in prop::collection::vec(1usize..5, 1..=4), seed in any::<u64>()) {
        let n: usize = dims.iter().product();
        let values: Vec<f64> = (0..n as u64)
            .map(|k| f64::from_bits(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k.wrapping_mul(0xD1B5_4A32_D192_ED03))))
            .collect();
        let t = Tensor::new(dims, TensorData::F64(values.clone())).unwrap();
        let back = decode(&encode(&t)).unwrap();
        let TensorData::F64(got) = back.data else { panic!("dtype changed") };
        prop_assert!(got.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn dice_coefficient_is_symmetric(bits in prop::collection::vec(any::<bool>(), 8), other in prop::collection::vec(any::<bool>(), 8)) {
        let a = BinaryMask::new(&[2, 4], bits).unwrap();
        let b = BinaryMask::new(&[2, 4], other).unwrap();
        prop_assert_eq!(dice_coefficient(&a, &b).unwrap().value, dice_coefficient(&b, &a).unwrap().value);
    }
}
