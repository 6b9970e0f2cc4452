//! Candidate ranking and ranking metrics.

mod grid;

use serde::{Deserialize, Serialize};

pub use grid::{run_experiment_grid, GridCell, GridConfig, GridData, GridTable, SeedResult};

use crate::data::{group_pairs, Group, QaPair};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{sigmoid, Graph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    /// Position in the caller's candidate list.
    pub index: usize,
    pub text: String,
    pub logit: f64,
    pub probability: f64,
}

/// Scores every candidate against `question` and sorts by descending logit.
/// Equal logits keep their input order.
pub fn rank_candidates<S: AsRef<str>>(model: &Model, question: &str, candidates: &[S]) -> Result<Vec<RankedCandidate>> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("rank_candidates"));
    }
    let q_ids = model.token_ids(question)?;
    let mut g = Graph::new(model.params());
    let q = model.encode_ids(&mut g, &q_ids)?;
    let mut logits = Vec::with_capacity(candidates.len());
    for (index, c) in candidates.iter().enumerate() {
        let s = model.encode_text(&mut g, c.as_ref())?;
        let z = model.scorer().logit(&mut g, q, s)?;
        let logit = g.value(z).item()?;
        if !logit.is_finite() {
            return Err(Error::Numeric(format!("non-finite score for candidate {index}")));
        }
        logits.push(logit);
    }
    Ok(order_by_logit(&logits)
        .into_iter()
        .map(|index| RankedCandidate {
            index,
            text: candidates[index].as_ref().to_string(),
            logit: logits[index],
            probability: sigmoid(logits[index]),
        })
        .collect())
}

/// Indices sorted by descending logit; equal logits keep input order.
pub fn order_by_logit(logits: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]));
    order
}

/// Ranking of precomputed logits, as [`rank_group`] would build it.
pub fn ranking_from_logits(group_id: impl Into<String>, logits: &[f64], labels: &[u8]) -> Option<QueryRanking> {
    let ranked = order_by_logit(logits)
        .into_iter()
        .map(|index| RankedCandidate {
            index,
            text: String::new(),
            logit: logits[index],
            probability: sigmoid(logits[index]),
        })
        .collect();
    QueryRanking::from_ranked(group_id, ranked, labels)
}

/// Ranking of one labeled group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRanking {
    pub group_id: String,
    pub ranked: Vec<RankedCandidate>,
    /// 1-based rank of the best-ranked positive.
    pub correct_rank: usize,
    pub positives: usize,
}

impl QueryRanking {
    /// Builds a ranking from already-sorted candidates and per-input labels.
    pub fn from_ranked(group_id: impl Into<String>, ranked: Vec<RankedCandidate>, labels: &[u8]) -> Option<Self> {
        let positives = labels.iter().filter(|&&l| l == 1).count();
        let correct_rank = ranked.iter().position(|c| labels[c.index] == 1)? + 1;
        Some(QueryRanking {
            group_id: group_id.into(),
            ranked,
            correct_rank,
            positives,
        })
    }
}

/// Ranks a group; `None` when it has no positive candidate.
pub fn rank_group(model: &Model, group: &Group) -> Result<Option<QueryRanking>> {
    let ranked = rank_candidates(model, &group.question, &group.candidates)?;
    Ok(QueryRanking::from_ranked(group.group_id.clone(), ranked, &group.labels))
}

/// Mean of `1 / rank` of the correct candidate.
pub fn mrr(rankings: &[QueryRanking]) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::EmptyInput("mrr"));
    }
    let sum: f64 = rankings.iter().map(|r| 1.0 / r.correct_rank as f64).sum();
    Ok(sum / rankings.len() as f64)
}

/// Fraction of groups whose correct candidate is ranked first.
pub fn accuracy(rankings: &[QueryRanking]) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::EmptyInput("accuracy"));
    }
    let hits = rankings.iter().filter(|r| r.correct_rank == 1).count();
    Ok(hits as f64 / rankings.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mrr: f64,
    pub accuracy: f64,
    pub group_count: usize,
    /// Groups with more than one positive; scored by their best positive.
    pub multi_positive_groups: usize,
    /// Groups without any positive, excluded from the metrics.
    pub skipped_groups: usize,
}

pub fn evaluate_groups(model: &Model, groups: &[Group]) -> Result<EvalReport> {
    let mut rankings = Vec::with_capacity(groups.len());
    let mut skipped = 0;
    for g in groups {
        match rank_group(model, g)? {
            Some(r) => rankings.push(r),
            None => skipped += 1,
        }
    }
    let multi = rankings.iter().filter(|r| r.positives > 1).count();
    if multi > 0 {
        log::warn!("{multi} groups contain more than one positive");
    }
    Ok(EvalReport {
        mrr: mrr(&rankings)?,
        accuracy: accuracy(&rankings)?,
        group_count: rankings.len(),
        multi_positive_groups: multi,
        skipped_groups: skipped,
    })
}

pub fn evaluate(model: &Model, pairs: &[QaPair]) -> Result<EvalReport> {
    evaluate_groups(model, &group_pairs(pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking(rank: usize) -> QueryRanking {
        QueryRanking {
            group_id: String::new(),
            ranked: Vec::new(),
            correct_rank: rank,
            positives: 1,
        }
    }

    #[test]
    fn hand_cases() {
        let all_first: Vec<_> = (0..4).map(|_| ranking(1)).collect();
        assert_eq!(mrr(&all_first).unwrap(), 1.0);
        assert_eq!(accuracy(&all_first).unwrap(), 1.0);

        let mixed = [ranking(1), ranking(2), ranking(4)];
        assert!((mrr(&mixed).unwrap() - 0.583333).abs() < 1e-6);
        assert!((accuracy(&mixed).unwrap() - 1.0 / 3.0).abs() < 1e-15);

        assert!(matches!(mrr(&[]), Err(Error::EmptyInput(_))));
        assert!(matches!(accuracy(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn best_positive_wins_with_multiple() {
        let ranked = vec![
            RankedCandidate {
                index: 2,
                text: "c".into(),
                logit: 3.0,
                probability: sigmoid(3.0),
            },
            RankedCandidate {
                index: 0,
                text: "a".into(),
                logit: 2.0,
                probability: sigmoid(2.0),
            },
            RankedCandidate {
                index: 1,
                text: "b".into(),
                logit: 1.0,
                probability: sigmoid(1.0),
            },
        ];
        let r = QueryRanking::from_ranked("g", ranked.clone(), &[1, 1, 0]).unwrap();
        assert_eq!(r.correct_rank, 2);
        assert_eq!(r.positives, 2);
        assert!(QueryRanking::from_ranked("g", ranked, &[0, 0, 0]).is_none());
    }

    #[test]
    fn ties_keep_input_order() {
        assert_eq!(order_by_logit(&[0.5, 2.0, 0.5, 2.0]), [1, 3, 0, 2]);
        let r = ranking_from_logits("g", &[1.0, 1.0], &[0, 1]).unwrap();
        assert_eq!(r.correct_rank, 2);
    }
}
