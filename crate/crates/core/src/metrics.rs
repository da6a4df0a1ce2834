//! Instance segmentation scores.
//!
//! The Aggregated Jaccard Index matches every ground-truth instance to the
//! prediction with the highest Jaccard overlap, sums matched intersections
//! over matched unions, and adds the area of every prediction that no
//! ground-truth instance selected to the denominator. All counts are exact
//! integers; the final ratio is the only floating-point step.

use std::collections::BTreeMap;

use crate::binarization::BinaryMask;
use crate::error::{Error, Result};
use crate::morphology::LabelMap;

/// Best prediction for one ground-truth instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceMatch {
    pub gt: u32,
    /// `None` when no prediction overlaps the instance.
    pub pred: Option<u32>,
    pub intersection: u64,
    pub union: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// One entry per ground-truth label, ascending.
    pub matches: Vec<InstanceMatch>,
    /// Prediction labels no ground-truth instance selected, ascending.
    pub unmatched: Vec<u32>,
    /// Pixel area per prediction label (index 0 unused).
    pub pred_areas: Vec<u64>,
}

impl MatchResult {
    pub fn intersection_sum(&self) -> u64 {
        self.matches.iter().map(|m| m.intersection).sum()
    }

    pub fn union_sum(&self) -> u64 {
        self.matches.iter().map(|m| m.union).sum::<u64>()
            + self.unmatched.iter().map(|&p| self.pred_areas[p as usize]).sum::<u64>()
    }
}

fn check_dims(gt: &LabelMap, pred: &LabelMap) -> Result<()> {
    if (gt.width, gt.height) != (pred.width, pred.height) {
        return Err(Error::DimensionMismatch(gt.width, gt.height, pred.width, pred.height));
    }
    Ok(())
}

fn label_areas(lm: &LabelMap) -> Vec<u64> {
    let max = lm.labels.iter().copied().max().unwrap_or(0).max(lm.count);
    let mut areas = vec![0u64; max as usize + 1];
    for &l in &lm.labels {
        areas[l as usize] += 1;
    }
    areas
}

/// Match each ground-truth instance to its maximum-Jaccard prediction.
///
/// Ground-truth labels are visited in ascending order; equal Jaccard values
/// go to the lower prediction label. A prediction may be selected by more
/// than one ground-truth instance.
pub fn match_instances(gt: &LabelMap, pred: &LabelMap) -> Result<MatchResult> {
    check_dims(gt, pred)?;
    let gt_areas = label_areas(gt);
    let pred_areas = label_areas(pred);
    let mut overlaps: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for (&g, &p) in gt.labels.iter().zip(&pred.labels) {
        if g != 0 && p != 0 {
            *overlaps.entry((g, p)).or_insert(0) += 1;
        }
    }

    let mut used = vec![false; pred_areas.len()];
    let mut matches = Vec::new();
    for g in 1..gt_areas.len() as u32 {
        let ga = gt_areas[g as usize];
        if ga == 0 {
            continue;
        }
        let mut best: Option<(u32, u64, u64)> = None;
        for (&(_, p), &inter) in overlaps.range((g, 0)..=(g, u32::MAX)) {
            let union = ga + pred_areas[p as usize] - inter;
            // inter/union > best_inter/best_union, compared exactly
            let better = best.is_none_or(|(_, bi, bu)| (inter as u128) * (bu as u128) > (bi as u128) * (union as u128));
            if better {
                best = Some((p, inter, union));
            }
        }
        match best {
            Some((p, intersection, union)) => {
                used[p as usize] = true;
                matches.push(InstanceMatch { gt: g, pred: Some(p), intersection, union });
            }
            None => matches.push(InstanceMatch { gt: g, pred: None, intersection: 0, union: ga }),
        }
    }
    let unmatched = (1..pred_areas.len() as u32).filter(|&p| pred_areas[p as usize] > 0 && !used[p as usize]).collect();
    Ok(MatchResult { matches, unmatched, pred_areas })
}

/// Aggregated Jaccard Index of `pred` against `gt`, in [0, 1].
pub fn aji(gt: &LabelMap, pred: &LabelMap) -> Result<f64> {
    check_dims(gt, pred)?;
    if gt.labels.iter().all(|&l| l == 0) {
        return Err(Error::EmptyGroundTruth);
    }
    let m = match_instances(gt, pred)?;
    Ok(m.intersection_sum() as f64 / m.union_sum() as f64)
}

/// Pixel-level Dice coefficient of two foreground masks; 1.0 when both are empty.
pub fn dice_pixel(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::DimensionMismatch(a.width, a.height, b.width, b.height));
    }
    let (mut na, mut nb, mut both) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        na += x as u64;
        nb += y as u64;
        both += (x && y) as u64;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// Jaccard index of the two foreground unions.
pub fn foreground_iou(gt: &LabelMap, pred: &LabelMap) -> Result<f64> {
    check_dims(gt, pred)?;
    let (mut inter, mut union) = (0u64, 0u64);
    for (&g, &p) in gt.labels.iter().zip(&pred.labels) {
        inter += (g != 0 && p != 0) as u64;
        union += (g != 0 || p != 0) as u64;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
