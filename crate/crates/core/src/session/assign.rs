use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::active::reorder_scored;
use crate::config::{AssignmentConfig, Ordering};

/// Picks instance indices for a new annotator and bumps their counts.
///
/// Without a quota every instance is eligible. With quota `q`, instances below
/// `q` are taken fewest-assignments first, ties by original order. Either way
/// at most `max_instances_per_annotator` are taken.
pub fn select_instances(counts: &mut [u32], config: &AssignmentConfig) -> Vec<usize> {
    let cap = config.max_instances_per_annotator.map(|m| m as usize).unwrap_or(usize::MAX);
    let q = config.annotations_per_instance;
    let mut picked: Vec<usize> = if q == 0 {
        (0..counts.len()).collect()
    } else {
        let mut eligible: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] < q).collect();
        eligible.sort_by_key(|&i| (counts[i], i));
        eligible
    };
    if q != 0 {
        picked.truncate(cap);
    }
    for &i in &picked {
        counts[i] += 1;
    }
    picked
}

/// Orders the selected indices. `confidences`, when present, is the latest
/// model's score per instance index.
pub fn order_selection(
    mut picked: Vec<usize>,
    config: &AssignmentConfig,
    seed: u64,
    active: Option<(&HashMap<usize, f64>, f64)>,
) -> Vec<usize> {
    match config.ordering {
        Ordering::Original => picked.sort_unstable(),
        Ordering::Random => {
            picked.sort_unstable();
            picked.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        Ordering::ActiveLearning => {
            picked.sort_unstable();
            if let Some((conf, ratio)) = active {
                let scored: Vec<(String, f64)> = picked
                    .iter()
                    .map(|i| (i.to_string(), conf.get(i).copied().unwrap_or(1.0)))
                    .collect();
                picked = reorder_scored(&scored, ratio, seed)
                    .ids()
                    .map(|s| s.parse().expect("index ids"))
                    .collect();
            }
        }
    }
    picked
}

/// Applies the per-annotator cap for the no-quota case after ordering.
pub fn apply_cap(mut ordered: Vec<usize>, counts: &mut [u32], config: &AssignmentConfig) -> Vec<usize> {
    if config.annotations_per_instance == 0 {
        if let Some(m) = config.max_instances_per_annotator {
            for &i in ordered.iter().skip(m as usize) {
                counts[i] -= 1;
            }
            ordered.truncate(m as usize);
        }
    }
    ordered
}
