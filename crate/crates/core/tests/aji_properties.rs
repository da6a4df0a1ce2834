use std::collections::{BTreeMap, HashSet};

use nucseg_core::metrics::match_instances;
use nucseg_core::{aji, LabelMap};
use proptest::prelude::*;

fn pixel_sets(lm: &LabelMap) -> BTreeMap<u32, HashSet<usize>> {
    let mut m: BTreeMap<u32, HashSet<usize>> = BTreeMap::new();
    for (i, &l) in lm.labels.iter().enumerate().filter(|(_, &l)| l != 0) {
        m.entry(l).or_default().insert(i);
    }
    m
}

/// Σ|G ∩ P*| and Σ|G ∪ P*| + Σ|unselected P| from explicit pixel sets.
fn reference_counts(gt: &LabelMap, pred: &LabelMap) -> (u64, u64) {
    let (g, p) = (pixel_sets(gt), pixel_sets(pred));
    let mut selected = HashSet::new();
    let (mut num, mut den) = (0u64, 0u64);
    for gs in g.values() {
        let best = p
            .iter()
            .map(|(&l, ps)| (l, gs.intersection(ps).count() as u64, gs.union(ps).count() as u64))
            .filter(|&(_, i, _)| i > 0)
            .fold(None, |best: Option<(u32, u64, u64)>, c| match best {
                Some(b) if (c.1 as u128) * (b.2 as u128) <= (b.1 as u128) * (c.2 as u128) => Some(b),
                _ => Some(c),
            });
        match best {
            Some((l, i, u)) => {
                selected.insert(l);
                num += i;
                den += u;
            }
            None => den += gs.len() as u64,
        }
    }
    den += p.iter().filter(|(l, _)| !selected.contains(*l)).map(|(_, s)| s.len() as u64).sum::<u64>();
    (num, den)
}

prop_compose! {
    fn label_pair()(w in 1usize..=24, h in 1usize..=24)
                   (gt in proptest::collection::vec(0u32..=6, w * h),
                    pred in proptest::collection::vec(0u32..=6, w * h),
                    w in Just(w), h in Just(h)) -> (LabelMap, LabelMap) {
        (LabelMap::from_raw(w, h, &gt).unwrap(), LabelMap::from_raw(w, h, &pred).unwrap())
    }
}

proptest! {
    #[test]
    fn counts_match_pixel_set_reference((gt, pred) in label_pair()) {
        let m = match_instances(&gt, &pred).unwrap();
        prop_assert_eq!((m.intersection_sum(), m.union_sum()), reference_counts(&gt, &pred));
    }

    #[test]
    fn score_is_a_fraction_and_perfect_on_itself((gt, pred) in label_pair()) {
        prop_assume!(gt.count > 0);
        let a = aji(&gt, &pred).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(aji(&gt, &gt).unwrap(), 1.0);
    }

    #[test]
    fn renaming_predictions_keeps_the_score((gt, pred) in label_pair(), shift in 1u32..100) {
        prop_assume!(gt.count > 0);
        // Reverse the label order; ties may move, counts may not.
        let renamed: Vec<u32> = pred.labels.iter().map(|&l| if l == 0 { 0 } else { pred.count + shift - l }).collect();
        let renamed = LabelMap { width: pred.width, height: pred.height, labels: renamed, count: pred.count + shift };
        let (a, b) = (match_instances(&gt, &pred).unwrap(), match_instances(&gt, &renamed).unwrap());
        let ious = |m: &nucseg_core::metrics::MatchResult| m.matches.iter().map(|x| (x.intersection, x.union)).collect::<Vec<_>>();
        let iou_of = |v: &[(u64, u64)]| v.iter().map(|&(i, u)| i as f64 / u as f64).collect::<Vec<_>>();
        prop_assert_eq!(iou_of(&ious(&a)), iou_of(&ious(&b)));
    }
}
