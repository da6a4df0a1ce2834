#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use nucseg_core::LabelMap;

/// Reference AJI counts computed from explicit pixel sets.
///
/// Returns `(Σ|G ∩ P*|, Σ|G ∪ P*| + Σ|unused P|)`.
pub fn brute_force_aji_counts(gt: &LabelMap, pred: &LabelMap) -> (u64, u64) {
    fn sets(lm: &LabelMap) -> BTreeMap<u32, HashSet<usize>> {
        let mut m: BTreeMap<u32, HashSet<usize>> = BTreeMap::new();
        for (i, &l) in lm.labels.iter().enumerate() {
            if l != 0 {
                m.entry(l).or_default().insert(i);
            }
        }
        m
    }
    let g = sets(gt);
    let p = sets(pred);
    let mut used = BTreeSet::new();
    let (mut inter_sum, mut union_sum) = (0u64, 0u64);
    for gs in g.values() {
        let mut best: Option<(u32, u64, u64)> = None;
        for (&pl, ps) in &p {
            let inter = gs.intersection(ps).count() as u64;
            if inter == 0 {
                continue;
            }
            let union = gs.union(ps).count() as u64;
            let better = match best {
                None => true,
                Some((_, bi, bu)) => inter as u128 * bu as u128 > bi as u128 * union as u128,
            };
            if better {
                best = Some((pl, inter, union));
            }
        }
        match best {
            Some((pl, i, u)) => {
                used.insert(pl);
                inter_sum += i;
                union_sum += u;
            }
            None => union_sum += gs.len() as u64,
        }
    }
    for (pl, ps) in &p {
        if !used.contains(pl) {
            union_sum += ps.len() as u64;
        }
    }
    (inter_sum, union_sum)
}

pub fn brute_force_aji(gt: &LabelMap, pred: &LabelMap) -> f64 {
    let (i, u) = brute_force_aji_counts(gt, pred);
    i as f64 / u as f64
}

/// Seed, nucleus count and file hashes of one frozen synthetic fixture.
pub struct Fixture {
    pub seed: u64,
    pub count: usize,
    pub image_sha256: String,
    pub gt_sha256: String,
}

pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic")
}

pub fn fixtures() -> Vec<Fixture> {
    let text = std::fs::read_to_string(fixture_dir().join("manifest.txt")).expect("fixture manifest");
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            Fixture {
                seed: f[0].parse().unwrap(),
                count: f[1].parse().unwrap(),
                image_sha256: f[2].to_string(),
                gt_sha256: f[3].to_string(),
            }
        })
        .collect()
}

pub fn image_path(seed: u64) -> std::path::PathBuf {
    fixture_dir().join(format!("synth_{seed:04}.png"))
}

pub fn gt_path(seed: u64) -> std::path::PathBuf {
    fixture_dir().join(format!("synth_{seed:04}_gt.png"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
