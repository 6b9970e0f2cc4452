use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::QaPair;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub train: Vec<QaPair>,
    pub dev: Vec<QaPair>,
    pub test: Vec<QaPair>,
}

impl Split {
    pub fn product_ids(pairs: &[QaPair]) -> HashSet<&str> {
        pairs.iter().filter_map(|p| p.product_id.as_deref()).collect()
    }
}

/// Partitions products (never individual pairs) into train/dev/test.
///
/// Products are sorted by id, shuffled with `seed`, and walked in order; a
/// product goes to the split whose cumulative share of positive pairs
/// contains the product's midpoint. Splits with a positive ratio are never
/// left empty.
pub fn split_by_product(pairs: &[QaPair], ratios: [f64; 3], seed: u64) -> Result<Split> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must be non-negative and sum to 1, got {ratios:?}"
        )));
    }
    let mut weight: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let id = p.product_id.as_deref().ok_or_else(|| Error::Schema {
            path: "<pairs>".into(),
            line: i + 1,
            field: "product_id".into(),
        })?;
        *weight.entry(id).or_default() += usize::from(p.label == 1);
    }
    if weight.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "product split needs at least 3 products, found {}",
            weight.len()
        )));
    }
    let mut products: Vec<(&str, usize)> = weight.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    products.shuffle(&mut rng);

    let total: usize = products.iter().map(|(_, w)| w).sum();
    let uniform = total == 0;
    let total = if uniform { products.len() } else { total } as f64;
    let bounds = [ratios[0] * total, (ratios[0] + ratios[1]) * total];

    let mut assigned: [Vec<&str>; 3] = Default::default();
    let mut cumulative = 0.0;
    for &(id, w) in &products {
        let w = if uniform { 1.0 } else { w as f64 };
        let mid = cumulative + w / 2.0;
        let slot = if mid < bounds[0] {
            0
        } else if mid < bounds[1] {
            1
        } else {
            2
        };
        assigned[slot].push(id);
        cumulative += w;
    }
    for target in [1, 2, 0] {
        if ratios[target] > 0.0 && assigned[target].is_empty() {
            let donor = (0..3)
                .filter(|&s| s != target)
                .max_by_key(|&s| assigned[s].len())
                .expect("two other splits");
            let moved = assigned[donor].pop().expect("donor has products");
            assigned[target].push(moved);
        }
    }

    let membership: [HashSet<&str>; 3] = assigned.map(|ids| ids.into_iter().collect());
    let mut split = Split::default();
    for p in pairs {
        let id = p.product_id.as_deref().expect("checked above");
        let bucket = if membership[0].contains(id) {
            &mut split.train
        } else if membership[1].contains(id) {
            &mut split.dev
        } else {
            &mut split.test
        };
        bucket.push(p.clone());
    }
    Ok(split)
}

/// Keeps a seeded sample of `⌈fraction · #positives⌉` positive pairs along
/// with every pair of their groups; all other groups are dropped. Input order
/// is preserved.
pub fn restrict_positive_fraction(pairs: &[QaPair], fraction: f64, seed: u64) -> Result<Vec<QaPair>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let mut positives: Vec<usize> = pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.label == 1)
        .map(|(i, _)| i)
        .collect();
    // Guard against 0.1 * 30 = 3.0000000000000004.
    let keep = ((fraction * positives.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let keep = keep.min(positives.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positives.shuffle(&mut rng);
    let groups: HashSet<&str> = positives[..keep]
        .iter()
        .map(|&i| pairs[i].group_id.as_str())
        .collect();
    Ok(pairs
        .iter()
        .filter(|p| groups.contains(p.group_id.as_str()))
        .cloned()
        .collect())
}
