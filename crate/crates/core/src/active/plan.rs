use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ConfidenceModel;
use super::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Uncertain,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSlot {
    pub instance_id: String,
    pub provenance: Provenance,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QueuePlan {
    pub slots: Vec<PlanSlot>,
}

impl QueuePlan {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.instance_id.as_str())
    }

    pub fn random_slots(&self) -> usize {
        self.slots.iter().filter(|s| s.provenance == Provenance::Random).count()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

pub fn random_slot_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64).round() as usize).min(n)
}

/// True at plan position `j` when the position is reserved for a random
/// draw. Spreads `r` such positions evenly over `n`.
fn is_random_position(j: usize, r: usize, n: usize) -> bool {
    (j + 1) * r / n > j * r / n
}

/// Orders unlabeled instances by ascending confidence, with
/// `round(random_ratio * n)` evenly interleaved slots holding a seeded uniform
/// sample of the instances in draw order.
pub fn reorder(
    unlabeled: &[(String, FeatureVector)],
    model: &dyn ConfidenceModel,
    random_ratio: f64,
    seed: u64,
) -> QueuePlan {
    let scored: Vec<(String, f64)> = unlabeled
        .iter()
        .map(|(id, f)| (id.clone(), model.confidence(f)))
        .collect();
    reorder_scored(&scored, random_ratio, seed)
}

/// [`reorder`] over precomputed confidences.
pub fn reorder_scored(scored: &[(String, f64)], random_ratio: f64, seed: u64) -> QueuePlan {
    let n = scored.len();
    if n == 0 {
        return QueuePlan::default();
    }
    let r = random_slot_count(random_ratio, n);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let random_pick: Vec<usize> = order[..r].to_vec();
    let mut is_random = vec![false; n];
    for &i in &random_pick {
        is_random[i] = true;
    }
    let mut uncertain: Vec<usize> = (0..n).filter(|i| !is_random[*i]).collect();
    // Stable sort keeps input order among equal confidences.
    uncertain.sort_by(|a, b| scored[*a].1.total_cmp(&scored[*b].1));

    let mut randoms = random_pick.into_iter();
    let mut sure = uncertain.into_iter();
    let slots = (0..n)
        .map(|j| {
            let (idx, provenance) = if is_random_position(j, r, n) {
                (randoms.next().expect("r random picks"), Provenance::Random)
            } else {
                (sure.next().expect("n - r uncertain picks"), Provenance::Uncertain)
            };
            PlanSlot {
                instance_id: scored[idx].0.clone(),
                provenance,
                confidence: scored[idx].1,
            }
        })
        .collect();
    QueuePlan { slots }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    struct ByLength;
    impl ConfidenceModel for ByLength {
        fn confidence(&self, f: &FeatureVector) -> f64 {
            1.0 / (1.0 + f.len() as f64)
        }
    }

    fn items(n: usize) -> Vec<(String, FeatureVector)> {
        (0..n)
            .map(|i| {
                let text: String = (0..(i * 7) % 11).map(|k| format!("w{k} ")).collect();
                (format!("i{i}"), crate::active::featurize(&text))
            })
            .collect()
    }

    #[test]
    fn zero_ratio_is_sorted() {
        let plan = reorder(&items(30), &ByLength, 0.0, 1);
        assert!(plan.slots.windows(2).all(|w| w[0].confidence <= w[1].confidence));
        assert_eq!(plan.random_slots(), 0);
    }

    #[test]
    fn full_ratio_is_permutation() {
        let plan = reorder(&items(30), &ByLength, 1.0, 9);
        assert_eq!(plan.random_slots(), 30);
        let ids: HashSet<_> = plan.ids().collect();
        assert_eq!(ids.len(), 30);
        assert_eq!(plan, reorder(&items(30), &ByLength, 1.0, 9));
        assert_ne!(plan, reorder(&items(30), &ByLength, 1.0, 10));
    }

    #[test]
    fn exact_random_count() {
        for (n, ratio) in [(100, 0.2), (10, 0.25), (1, 0.5), (7, 0.3)] {
            let plan = reorder(&items(n), &ByLength, ratio, 3);
            assert_eq!(plan.random_slots(), random_slot_count(ratio, n));
            assert_eq!(plan.ids().collect::<HashSet<_>>().len(), n);
        }
        assert_eq!(random_slot_count(0.2, 100), 20);
    }

    #[test]
    fn random_positions_spread_evenly() {
        let plan = reorder(&items(10), &ByLength, 0.2, 3);
        let pos: Vec<_> = plan
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.provenance == Provenance::Random)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(pos, [4, 9]);
    }
}
