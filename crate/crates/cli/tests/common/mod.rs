//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::path::Path;

use fin_equity::{Attribute, PredictionRecord};

/// Runs the CLI in-process; returns the exit code and captured stdout.
pub fn cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut argv = vec!["fin-equity"];
    argv.extend_from_slice(args);
    let code = fin_equity_cli::run(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Twice the Mann-Whitney count of positives ranked above negatives (ties
/// count one half).
fn doubled_wins(pos: &[f64], neg_sorted: &[f64]) -> u64 {
    pos.iter()
        .map(|&p| {
            let below = neg_sorted.partition_point(|&n| n < p) as u64;
            let at_most = neg_sorted.partition_point(|&n| n <= p) as u64;
            below + at_most
        })
        .sum()
}

/// `n` negatives at `1..=n` and `n` positives such that the within-group
/// AUC is exactly `wins / n²`. Positive `j` beats `k_j` negatives, with the
/// `k_j` spread over a band around `wins / n`; negatives below the band
/// (returned as `cut`) lose to every positive.
fn group_grid(wins: u64, n: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let q = (wins / n as u64) as i64;
    let n_i = n as i64;
    let t = q.min(n_i - q);
    let mut k: Vec<i64> = (0..n_i).map(|j| (q - t + j * 2 * t / n_i).min(n_i)).collect();
    let mut step = 0usize;
    loop {
        let sum: i64 = k.iter().sum();
        if sum == wins as i64 {
            break;
        }
        // Adjust one positive at a time, from the middle outwards.
        let off = if step.is_multiple_of(2) { (step / 2) as i64 } else { -((step / 2) as i64 + 1) };
        let i = (n_i / 2 + off).rem_euclid(n_i) as usize;
        if sum < wins as i64 && k[i] < n_i {
            k[i] += 1;
        } else if sum > wins as i64 && k[i] > 0 {
            k[i] -= 1;
        }
        step += 1;
    }
    let neg = (1..=n).map(|i| i as f64).collect();
    // The fractional part keeps positives distinct without changing whom they beat.
    let pos = k
        .iter()
        .enumerate()
        .map(|(j, &kj)| kj as f64 + 0.5 + 0.3 * j as f64 / n as f64)
        .collect();
    (neg, pos, (q - t) as f64)
}

/// Prediction records whose per-group AUCs are exactly `groups[g]` and
/// whose overall AUC is exactly `overall`, with `n` negatives and `n`
/// positives per group (targets must be multiples of `1 / n²` and
/// `1 / (G n)²`). Groups are shifted against each other until the
/// cross-group pairs make up the difference.
pub fn craft_predictions(overall: f64, groups: &[f64], n: usize) -> Vec<PredictionRecord> {
    let g_count = groups.len();
    assert!((2..=3).contains(&g_count));
    let grids: Vec<(Vec<f64>, Vec<f64>, f64)> = groups
        .iter()
        .map(|a| group_grid((a * (n * n) as f64).round() as u64, n))
        .collect();
    let total = (g_count * n) as f64;
    let target = (2.0 * overall * total * total).round() as u64;
    // Uncontested negatives sit in a low zone, the rest in a high zone; each
    // group moves by its offset, and the high zone of group 1 can also be
    // lifted. Slightly different widths stagger cross-group crossings.
    let scale = |v: f64, g: usize, offset: f64, lift: f64| {
        let cut = grids[g].2;
        if v < cut + 0.5 {
            offset + 0.3 + 0.1 * v / n as f64
        } else {
            let width = 0.12 * (1.0 + 0.0137 * g as f64);
            offset + lift + 0.42 + width * (v - cut) / (n as f64 - cut + 1.0)
        }
    };

    let steps = 200i64;
    // 0, 1, -1, 2, -2, ...: small shifts first.
    let around = |k: i64| if k % 2 == 0 { k / 2 } else { -(k + 1) / 2 };
    let mut offsets = vec![0.0; g_count];
    let mut lifts = vec![0.0; g_count];
    let mut found = false;
    'search: for a in (0..=2 * steps).map(around) {
        for b in (0..=2 * steps).map(around) {
            offsets[1] = 0.2 * a as f64 / steps as f64;
            if g_count == 3 {
                offsets[2] = 0.2 * b as f64 / steps as f64;
            } else {
                lifts[1] = 0.075 * (b + steps) as f64 / steps as f64;
            }
            let mut neg: Vec<f64> = Vec::new();
            let mut pos: Vec<f64> = Vec::new();
            for (g, (gn, gp, _)) in grids.iter().enumerate() {
                neg.extend(gn.iter().map(|&v| scale(v, g, offsets[g], lifts[g])));
                pos.extend(gp.iter().map(|&v| scale(v, g, offsets[g], lifts[g])));
            }
            neg.sort_by(f64::total_cmp);
            if doubled_wins(&pos, &neg) == target {
                found = true;
                break 'search;
            }
        }
    }
    assert!(found, "no shifts realize overall AUC {overall}");

    let mut records = Vec::new();
    for (g, (gn, gp, _)) in grids.iter().enumerate() {
        for (label, values) in [(0u8, gn), (1u8, gp)] {
            for (k, &v) in values.iter().enumerate() {
                let score = scale(v, g, offsets[g], lifts[g]);
                records.push(
                    PredictionRecord::new(format!("g{g}-y{label}-{k}"), score, label, Attribute(g))
                        .unwrap(),
                );
            }
        }
    }
    records
}
