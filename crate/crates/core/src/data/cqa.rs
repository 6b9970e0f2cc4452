//! Community QA cleaning and negative sampling.
//!
//! Rules run in a fixed order and a record is charged to the first rule
//! that rejects it:
//!
//! 1. question or answer contains a URL
//! 2. question shorter than `min_question_tokens`
//! 3. answer shorter than `min_answer_tokens`
//! 4. question or answer longer than the configured maximum
//! 5. answer contains a non-answer phrase

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CqaRecord, QaPair};
use crate::error::{Error, Result};
use crate::text::tokenize;

pub const DEFAULT_BANNED_PHRASES: &[&str] = &["i have no idea", "i am not sure"];

const URL_MARKERS: &[&str] = &["http://", "https://", "www."];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_question_tokens: usize,
    pub min_answer_tokens: usize,
    pub max_question_tokens: usize,
    pub max_answer_tokens: usize,
    /// Matched case-insensitively against the raw answer.
    pub banned_phrases: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_question_tokens: 4,
            min_answer_tokens: 10,
            max_question_tokens: 30,
            max_answer_tokens: 50,
            banned_phrases: DEFAULT_BANNED_PHRASES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input_count: usize,
    /// Rejections charged to rules 1..=5.
    pub removed_by_rule: [usize; 5],
    pub sampled_negatives: usize,
    pub output_positive: usize,
    pub output_negative: usize,
    pub max_question_tokens: usize,
    pub max_answer_tokens: usize,
}

impl FilterReport {
    /// `input − Σ removed = positives` and `negatives = sampled`.
    pub fn reconciles(&self) -> bool {
        let removed: usize = self.removed_by_rule.iter().sum();
        self.input_count.checked_sub(removed) == Some(self.output_positive)
            && self.output_negative == self.sampled_negatives
    }

    /// Fills the negative counters from sampled pairs.
    pub fn record_sampling(&mut self, pairs: &[QaPair]) {
        let negatives = pairs.iter().filter(|p| p.label == 0).count();
        self.sampled_negatives = negatives;
        self.output_negative = negatives;
    }
}

fn has_url(text: &str) -> bool {
    let lower = text.to_lowercase();
    URL_MARKERS.iter().any(|m| lower.contains(m))
}

/// Index (0-based) of the first rule rejecting the record, if any.
fn first_failing_rule(record: &CqaRecord, config: &FilterConfig, banned: &[String]) -> Option<usize> {
    if has_url(&record.question) || has_url(&record.answer) {
        return Some(0);
    }
    let q_len = tokenize(&record.question).len();
    if q_len < config.min_question_tokens {
        return Some(1);
    }
    let a_len = tokenize(&record.answer).len();
    if a_len < config.min_answer_tokens {
        return Some(2);
    }
    if q_len > config.max_question_tokens || a_len > config.max_answer_tokens {
        return Some(3);
    }
    let answer = record.answer.to_lowercase();
    if banned.iter().any(|p| answer.contains(p.as_str())) {
        return Some(4);
    }
    None
}

/// Applies rules 1 to 5 in order.
pub fn filter_cqa(records: &[CqaRecord], config: &FilterConfig) -> (Vec<CqaRecord>, FilterReport) {
    let banned: Vec<String> = config.banned_phrases.iter().map(|p| p.to_lowercase()).collect();
    let mut report = FilterReport {
        input_count: records.len(),
        max_question_tokens: config.max_question_tokens,
        max_answer_tokens: config.max_answer_tokens,
        ..Default::default()
    };
    let mut kept = Vec::new();
    for r in records {
        match first_failing_rule(r, config, &banned) {
            Some(rule) => report.removed_by_rule[rule] += 1,
            None => kept.push(r.clone()),
        }
    }
    report.output_positive = kept.len();
    (kept, report)
}

/// Emits, per record, one positive pair followed by up to
/// `negatives_per_question` negatives whose candidates are answers to other
/// questions. Group ids are `cqa-{index}`.
pub fn sample_negatives(records: &[CqaRecord], negatives_per_question: usize, seed: u64) -> Result<Vec<QaPair>> {
    let distinct: HashSet<&str> = records.iter().map(|r| r.question.as_str()).collect();
    if negatives_per_question > 0 && distinct.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "negative sampling needs at least 2 distinct questions, found {}",
            distinct.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(records.len() * (1 + negatives_per_question));
    for (i, r) in records.iter().enumerate() {
        let group_id = format!("cqa-{i}");
        out.push(QaPair::new(
            r.question.clone(),
            r.answer.clone(),
            1,
            group_id.clone(),
            r.product_id.clone(),
        ));
        if negatives_per_question == 0 {
            continue;
        }
        let eligible = |j: usize| records[j].question != r.question && records[j].answer != r.answer;
        let mut chosen: Vec<usize> = Vec::with_capacity(negatives_per_question);
        let mut seen: HashSet<&str> = HashSet::new();
        let max_attempts = 32 * negatives_per_question + 32;
        for _ in 0..max_attempts {
            if chosen.len() == negatives_per_question {
                break;
            }
            let j = rng.random_range(0..records.len());
            if eligible(j) && seen.insert(records[j].answer.as_str()) {
                chosen.push(j);
            }
        }
        if chosen.len() < negatives_per_question {
            // Dense exclusion: enumerate what is left and draw from it.
            let mut rest: Vec<usize> = (0..records.len())
                .filter(|&j| eligible(j) && !seen.contains(records[j].answer.as_str()))
                .collect();
            rest.shuffle(&mut rng);
            for j in rest {
                if chosen.len() == negatives_per_question {
                    break;
                }
                if seen.insert(records[j].answer.as_str()) {
                    chosen.push(j);
                }
            }
        }
        for j in chosen {
            out.push(QaPair::new(
                r.question.clone(),
                records[j].answer.clone(),
                0,
                group_id.clone(),
                r.product_id.clone(),
            ));
        }
    }
    Ok(out)
}
