//! Property tests over ranking metrics, tokenization and data splitting.

use std::collections::HashSet;

use proptest::prelude::*;
use specqa::data::{restrict_positive_fraction, split_by_product, QaPair, Split};
use specqa::eval::{accuracy, mrr, order_by_logit, ranking_from_logits, QueryRanking};
use specqa::text::tokenize;

/// A group of logits with labels that contain at least one positive.
fn group() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (1usize..10).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![-5.0..5.0f64, Just(0.0), Just(1.0)], n),
            prop::collection::vec(0u8..2, n),
            0..n,
        )
            .prop_map(|(logits, mut labels, forced)| {
                labels[forced] = 1;
                (logits, labels)
            })
    })
}

fn rankings(groups: &[(Vec<f64>, Vec<u8>)]) -> Vec<QueryRanking> {
    groups
        .iter()
        .enumerate()
        .map(|(i, (l, y))| ranking_from_logits(i.to_string(), l, y).unwrap())
        .collect()
}

proptest! {
    #[test]
    fn accuracy_never_exceeds_mrr(groups in prop::collection::vec(group(), 1..20)) {
        let r = rankings(&groups);
        let (m, a) = (mrr(&r).unwrap(), accuracy(&r).unwrap());
        prop_assert!(a <= m + 1e-12);
        prop_assert!(m <= 1.0 && m > 0.0);
        let longest = groups.iter().map(|g| g.0.len()).max().unwrap();
        prop_assert!(m >= 1.0 / longest as f64 - 1e-12);
    }

    #[test]
    fn order_is_a_stable_descending_permutation(logits in prop::collection::vec(prop_oneof![-3.0..3.0f64, Just(0.5)], 0..12)) {
        let order = order_by_logit(&logits);
        let mut seen = order.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..logits.len()).collect::<Vec<_>>());
        for w in order.windows(2) {
            let (a, b) = (logits[w[0]], logits[w[1]]);
            prop_assert!(a > b || (a == b && w[0] < w[1]));
        }
    }

    #[test]
    fn rank_ignores_candidate_order_without_ties((logits, labels) in group(), shift in 0usize..10) {
        let distinct: HashSet<u64> = logits.iter().map(|l| l.to_bits()).collect();
        prop_assume!(distinct.len() == logits.len());
        let n = logits.len();
        let rotate = |v: &[f64]| (0..n).map(|i| v[(i + shift) % n]).collect::<Vec<_>>();
        let rot_labels: Vec<u8> = (0..n).map(|i| labels[(i + shift) % n]).collect();
        let a = ranking_from_logits("g", &logits, &labels).unwrap();
        let b = ranking_from_logits("g", &rotate(&logits), &rot_labels).unwrap();
        prop_assert_eq!(a.correct_rank, b.correct_rank);
        prop_assert_eq!(a.positives, b.positives);
    }

    #[test]
    fn raising_a_positive_never_hurts((mut logits, labels) in group(), boost in 0.0..10.0f64) {
        let before = ranking_from_logits("g", &logits, &labels).unwrap().correct_rank;
        let best = ranking_from_logits("g", &logits, &labels).unwrap().ranked[before - 1].index;
        logits[best] += boost;
        let after = ranking_from_logits("g", &logits, &labels).unwrap().correct_rank;
        prop_assert!(after <= before);
    }

    #[test]
    fn tokenization_is_a_fixed_point(text in "[A-Za-z0-9 .,?!'\"()/\t-]{0,60}") {
        let tokens = tokenize(&text);
        prop_assert_eq!(tokenize(&tokens.join(" ")), tokens.clone());
        for t in &tokens {
            prop_assert!(!t.is_empty() && !t.chars().any(char::is_whitespace));
            prop_assert_eq!(t.to_lowercase(), t.clone());
        }
    }
}

/// Products with a varying number of one-positive groups of three candidates.
fn catalog(groups_per_product: &[usize]) -> Vec<QaPair> {
    let mut out = Vec::new();
    for (p, &k) in groups_per_product.iter().enumerate() {
        for q in 0..k {
            for s in 0..3 {
                out.push(QaPair::new(
                    format!("q{p}-{q}"),
                    format!("s{s}"),
                    u8::from(s == 0),
                    format!("{p}:{q}"),
                    Some(format!("prod{p}")),
                ));
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn fraction_keeps_whole_groups(sizes in prop::collection::vec(1usize..5, 1..15), fraction in 0.01..=1.0f64, seed: u64) {
        let pairs = catalog(&sizes);
        let kept = restrict_positive_fraction(&pairs, fraction, seed).unwrap();
        let total = sizes.iter().sum::<usize>();
        let positives = kept.iter().filter(|p| p.label == 1).count();
        let expected = ((fraction * total as f64) - 1e-9).ceil() as usize;
        prop_assert_eq!(positives, expected.min(total));
        prop_assert_eq!(kept.len(), 3 * positives);
        // Order-preserving subsequence of the input.
        let mut it = pairs.iter();
        for k in &kept {
            prop_assert!(it.any(|p| p == k));
        }
        if fraction == 1.0 {
            prop_assert_eq!(kept, pairs);
        }
    }

    #[test]
    fn split_partitions_products(sizes in prop::collection::vec(1usize..4, 3..40), seed: u64, a in 1u32..10, b in 0u32..5, c in 0u32..5) {
        let pairs = catalog(&sizes);
        let total = f64::from(a + b + c);
        let ratios = [f64::from(a) / total, f64::from(b) / total, f64::from(c) / total];
        let split = split_by_product(&pairs, ratios, seed).unwrap();
        let parts = [&split.train, &split.dev, &split.test];
        prop_assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), pairs.len());
        let ids: Vec<HashSet<&str>> = parts.iter().map(|p| Split::product_ids(p)).collect();
        for i in 0..3 {
            for j in i + 1..3 {
                prop_assert!(ids[i].is_disjoint(&ids[j]));
            }
        }
        prop_assert_eq!(ids.iter().map(HashSet::len).sum::<usize>(), sizes.len());
    }
}
