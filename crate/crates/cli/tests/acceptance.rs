//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::time::Instant;

use segloss::distance::dilate;
use segloss::gradcheck::{gradcheck_suite, DEFAULT_STEP};
use segloss::io::{encode, read_tensor, write_tensor, Tensor, TensorData};
use segloss::optimize::{centered_square, logits_from_labels, optimize, Init, OptimizeConfig};
use segloss::relations::{boundary_argmin_check, dt_oracle_check, identity_suite, mismatch_suite, RelationCheck};
use segloss::sample::{all_masks, rng};
use segloss::{fixtures, BinaryMask, Exec, LabelMap, LossConfig, LossSpec, ProbMap, Shape};

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn summarize(checks: &[RelationCheck]) -> (bool, String) {
    let pass = checks.iter().all(|c| c.pass);
    let detail = checks
        .iter()
        .map(|c| {
            format!(
                "{} [{} cases, {} skipped, max diff {:.3e} <= {:e}: {}]",
                c.name,
                c.cases,
                c.skipped,
                c.max_abs_diff,
                c.tolerance,
                if c.pass { "ok" } else { "FAIL" }
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    (pass, detail)
}

fn identities() -> Outcome {
    let checks = identity_suite(100, 1, Exec::default()).map_err(|e| e.to_string())?;
    Ok(summarize(&checks))
}

fn gradients() -> Outcome {
    let cfg = LossConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for spec in LossSpec::all() {
        let r = gradcheck_suite(&spec, 50, 2, &cfg, DEFAULT_STEP, 1e-5, Exec::default()).map_err(|e| e.to_string())?;
        pass &= r.pass;
        parts.push(format!("{} {:.2e}", r.loss_name, r.worst.max_rel_err));
    }
    Ok((pass, format!("worst relative error per loss over 50 instances: {}", parts.join(", "))))
}

fn distance_oracle() -> Outcome {
    let check = dt_oracle_check(200, 3, Exec::default()).map_err(|e| e.to_string())?;
    Ok(summarize(&[check]))
}

fn mismatch_forms() -> Outcome {
    let checks = mismatch_suite(&[1, 4]).map_err(|e| e.to_string())?;
    Ok(summarize(&checks))
}

/// Boundary loss: exhaustive argmin plus descent from random starts reaching
/// the ground truth for every non-degenerate 1 x 4 mask.
fn boundary_minimizer() -> Result<(bool, String), String> {
    let exhaustive = boundary_argmin_check(&[1, 4]).map_err(|e| e.to_string())?;
    let mut reached = 0;
    let mut total = 0;
    for (k, g) in all_masks(&[1, 4]).iter().enumerate() {
        if g.is_degenerate() {
            continue;
        }
        total += 1;
        let labels = LabelMap::new(
            Shape::new(&[1, 4], 2).unwrap(),
            g.values().iter().map(|&b| usize::from(b)).collect(),
        )
        .unwrap();
        let opts = OptimizeConfig::new(200, 1.0, k as u64, &[1, 4]);
        let t = optimize(&LossSpec::Boundary, &labels, &opts).map_err(|e| e.to_string())?;
        if t.last().dice_coefficient == 1.0 {
            reached += 1;
        }
    }
    let pass = exhaustive.pass && reached == total;
    Ok((
        pass,
        format!(
            "boundary argmin unique on {} masks (smallest margin {:.3}); descent reached S = G on {reached}/{total}",
            exhaustive.cases, -exhaustive.max_abs_diff
        ),
    ))
}

fn dice_optimization() -> Result<(bool, String), String> {
    let gt = centered_square(32, 8);
    let opts = OptimizeConfig::new(2000, 1.0, 7, &[32, 32]);
    let t = optimize(&LossSpec::Dice, &gt, &opts).map_err(|e| e.to_string())?;
    let last = t.last();
    Ok((
        last.dice_coefficient >= 0.99,
        format!(
            "dice optimize 32x32, 8x8 square, seed 7, lr 1, 2000 steps: final dice coefficient {:.6} (need >= 0.99), loss {:.6}",
            last.dice_coefficient, last.loss
        ),
    ))
}

fn hd_optimization() -> Result<(bool, String), String> {
    let gt = centered_square(32, 8);
    let fg = BinaryMask::new(&[32, 32], gt.values().iter().map(|&l| l != 0).collect()).unwrap();
    let start = dilate(&fg, 3.0, &[1.0, 1.0]).map_err(|e| e.to_string())?;
    let labels: Vec<usize> = start.values().iter().map(|&b| usize::from(b)).collect();
    let opts = OptimizeConfig {
        init: Init::Logits(logits_from_labels(&labels, 2, 3.0)),
        ..OptimizeConfig::new(300, 10.0, 7, &[32, 32])
    };
    let t = optimize(&LossSpec::Hd, &gt, &opts).map_err(|e| e.to_string())?;
    let (first, last) = (t.first().hausdorff, t.last().hausdorff);
    Ok((
        last <= first,
        format!("hd optimize from gt dilated by 3, lr 10, 300 steps: hausdorff {first} -> {last}"),
    ))
}

fn minimizers() -> Outcome {
    let parts = [boundary_minimizer()?, dice_optimization()?, hd_optimization()?];
    let pass = parts.iter().all(|p| p.0);
    let detail = parts
        .iter()
        .map(|(ok, d)| format!("{d} [{}]", if *ok { "ok" } else { "FAIL" }))
        .collect::<Vec<_>>()
        .join("; ");
    Ok((pass, detail))
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segloss"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// F1 values from the independent oracle, with epsilon placed as in the
/// library (numerator and denominator; Tversky-type indices on the 2TP scale).
const F1_ORACLE: [(&str, f64); 17] = [
    ("ce", 0.22708064055624455),
    ("wce", 0.22708064055624455),
    ("topk", 0.26765401552238394),
    ("focal", 0.01275145855405024),
    ("dpce", 0.22708064055624455),
    ("ss", 0.04499998875000281),
    ("dice", 0.053254429991948404),
    ("iou", 0.3333332638889034),
    ("tversky", 0.1999999750000031),
    ("generalized_dice", 0.19999990000005008),
    ("focal_tversky", 0.2990697282064575),
    ("asymmetric", 0.17537309179383964),
    ("penalty_gd", 0.06666662777780048),
    ("boundary", -0.30000000000000004),
    ("hd", 0.09),
    ("combo", -0.34799176729857517),
    ("ell", 0.636344211744049),
];

fn cli_conformance() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let mut pass = true;

    // Round trip through files, bit for bit.
    let mut r = rng(11);
    let mut round_trip = true;
    for (k, t) in [
        Tensor::new(vec![3, 5], TensorData::U8((0..15).map(|i| (i * 17) as u8).collect())),
        Tensor::new(vec![2, 3, 2], TensorData::F32((0..12).map(|i| (i as f32).sin() * 1e-20).collect())),
        Tensor::new(vec![7], TensorData::F64(segloss::sample::standard_normals(&mut r, 7))),
    ]
    .into_iter()
    .enumerate()
    {
        let t = t.map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("t{k}.ntf"));
        write_tensor(&path, &t).map_err(|e| e.to_string())?;
        let back = read_tensor(&path).map_err(|e| e.to_string())?;
        round_trip &= encode(&back) == std::fs::read(&path).map_err(|e| e.to_string())? && back == t;
    }
    pass &= round_trip;
    notes.push(format!("NTF1 round trip {}", if round_trip { "bit-exact" } else { "FAILED" }));

    // F1 through the binary.
    let (g, s) = fixtures::f1();
    let gt = dir.path().join("gt.ntf");
    let pred = dir.path().join("pred.ntf");
    write_tensor(&gt, &Tensor::from_labels(&g.label_map()).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    write_tensor(&pred, &Tensor::from_probs(&s)).map_err(|e| e.to_string())?;
    let out = cli(&["eval", "--gt", p(&gt), "--pred", p(&pred), "--loss", "all"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| format!("eval output: {e}"))?;
    let mut worst = 0.0f64;
    for (name, want) in F1_ORACLE {
        let got = report["entries"]
            .as_array()
            .and_then(|es| es.iter().find(|e| e["loss"] == name))
            .and_then(|e| e["value"].as_f64())
            .ok_or_else(|| format!("no value for {name}"))?;
        worst = worst.max((got - want).abs());
    }
    let f1_ok = out.status.success() && worst <= 1e-9;
    pass &= f1_ok;
    notes.push(format!("eval on F1, 17 losses, max |cli - oracle| {worst:.2e} <= 1e-9"));

    // Exit codes for malformed and degenerate inputs.
    let mut bad_magic = std::fs::read(&pred).map_err(|e| e.to_string())?;
    bad_magic[..4].copy_from_slice(b"XXXX");
    let magic = dir.path().join("magic.ntf");
    std::fs::write(&magic, &bad_magic).map_err(|e| e.to_string())?;
    let good = std::fs::read(&pred).map_err(|e| e.to_string())?;
    let short = dir.path().join("short.ntf");
    std::fs::write(&short, &good[..good.len() - 1]).map_err(|e| e.to_string())?;
    let labels = dir.path().join("labels.ntf");
    write_tensor(&labels, &Tensor::new(vec![4], TensorData::U8(vec![0, 3, 1, 1])).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let empty_gt = dir.path().join("empty.ntf");
    write_tensor(&empty_gt, &Tensor::new(vec![4], TensorData::U8(vec![0; 4])).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let low = dir.path().join("low.ntf");
    let low_probs = ProbMap::binary(&[4], &[0.1, 0.2, 0.3, 0.4]).map_err(|e| e.to_string())?;
    write_tensor(&low, &Tensor::from_probs(&low_probs)).map_err(|e| e.to_string())?;

    let cases: [(&str, Vec<&str>, i32, &str); 6] = [
        ("missing --gt", vec!["eval", "--pred", p(&pred)], 2, "Usage"),
        ("bad magic", vec!["eval", "--gt", p(&gt), "--pred", p(&magic)], 2, "bad-magic"),
        ("truncated", vec!["eval", "--gt", p(&gt), "--pred", p(&short)], 2, "truncated"),
        ("label range", vec!["eval", "--gt", p(&labels), "--pred", p(&pred)], 2, "label-range"),
        ("unknown loss", vec!["eval", "--gt", p(&gt), "--pred", p(&pred), "--loss", "dice,x"], 2, "generalized_dice"),
        ("degenerate only", vec!["eval", "--gt", p(&empty_gt), "--pred", p(&low), "--loss", "hd"], 3, "degenerate"),
    ];
    for (what, args, code, needle) in cases {
        let out = cli(&args);
        let ok = out.status.code() == Some(code) && String::from_utf8_lossy(&out.stderr).contains(needle);
        pass &= ok;
        notes.push(format!("{what} -> exit {:?} {}", out.status.code(), if ok { "ok" } else { "FAIL" }));
    }
    Ok((pass, notes.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 6] = [
        ("identity suite", identities),
        ("gradient suite", gradients),
        ("distance-transform oracle", distance_oracle),
        ("mismatch-form connections", mismatch_forms),
        ("minimizer properties", minimizers),
        ("cli conformance", cli_conformance),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let (pass, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!(
            "criterion {} {name}: {} ({:.1}s) {detail}",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
