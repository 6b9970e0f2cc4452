//! Dataset records, CQA preprocessing, specification pairs and splitting.

mod cqa;
mod jsonl;
mod spec;
mod split;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use cqa::{filter_cqa, sample_negatives, FilterConfig, FilterReport, DEFAULT_BANNED_PHRASES};
pub use jsonl::{load_jsonl, parse_jsonl, save_jsonl, to_jsonl, JsonlRecord};
pub use spec::{generate_spec_pairs, group_id_for, SpecQuestion};
pub use split::{restrict_positive_fraction, split_by_product, Split};

/// One community question with one of its answers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CqaRecord {
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_id: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl CqaRecord {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        CqaRecord {
            question: question.into(),
            answer: answer.into(),
            product_id: None,
            extra: Map::new(),
        }
    }
}

impl JsonlRecord for CqaRecord {
    const REQUIRED: &'static [&'static str] = &["question", "answer"];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Spec {
    pub name: String,
    pub value: String,
}

/// A catalog product and its ordered specifications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecProduct {
    pub product_id: String,
    pub category: String,
    pub specs: Vec<Spec>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl SpecProduct {
    pub fn new(product_id: impl Into<String>, category: impl Into<String>, specs: Vec<(&str, &str)>) -> Self {
        SpecProduct {
            product_id: product_id.into(),
            category: category.into(),
            specs: specs
                .into_iter()
                .map(|(n, v)| Spec {
                    name: n.into(),
                    value: v.into(),
                })
                .collect(),
            extra: Map::new(),
        }
    }

    pub fn spec(&self, name: &str) -> Option<&Spec> {
        self.specs.iter().find(|s| s.name == name)
    }
}

impl JsonlRecord for SpecProduct {
    const REQUIRED: &'static [&'static str] = &["product_id", "category", "specs"];

    fn validate(&self) -> std::result::Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        for s in &self.specs {
            if !seen.insert(s.name.as_str()) {
                return Err(format!(
                    "product {} lists specification {:?} twice",
                    self.product_id, s.name
                ));
            }
        }
        Ok(())
    }
}

/// One (question, candidate, label) example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub candidate: String,
    pub label: u8,
    pub group_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_id: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl QaPair {
    pub fn new(
        question: impl Into<String>,
        candidate: impl Into<String>,
        label: u8,
        group_id: impl Into<String>,
        product_id: Option<String>,
    ) -> Self {
        QaPair {
            question: question.into(),
            candidate: candidate.into(),
            label,
            group_id: group_id.into(),
            product_id,
            extra: Map::new(),
        }
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

impl JsonlRecord for QaPair {
    const REQUIRED: &'static [&'static str] = &["question", "candidate", "label", "group_id"];

    fn validate(&self) -> std::result::Result<(), String> {
        if self.label > 1 {
            return Err(format!("label must be 0 or 1, found {}", self.label));
        }
        if self.candidate.trim().is_empty() {
            return Err("candidate must be non-empty".into());
        }
        Ok(())
    }
}

/// One question with all of its candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub group_id: String,
    pub question: String,
    pub product_id: Option<String>,
    pub candidates: Vec<String>,
    pub labels: Vec<u8>,
}

impl Group {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Groups pairs by `group_id`, in order of first appearance.
pub fn group_pairs(pairs: &[QaPair]) -> Vec<Group> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    for p in pairs {
        let slot = *index.entry(p.group_id.as_str()).or_insert_with(|| {
            groups.push(Group {
                group_id: p.group_id.clone(),
                question: p.question.clone(),
                product_id: p.product_id.clone(),
                candidates: Vec::new(),
                labels: Vec::new(),
            });
            groups.len() - 1
        });
        groups[slot].candidates.push(p.candidate.clone());
        groups[slot].labels.push(p.label);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_jsonl::<QaPair>("not json\n", "pairs").unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }), "{err}");
    }

    #[test]
    fn missing_field_is_named() {
        let line = r#"{"question":"q","candidate":"c","group_id":"g"}"#;
        match parse_jsonl::<QaPair>(line, "pairs").unwrap_err() {
            Error::Schema { field, line, .. } => {
                assert_eq!(field, "label");
                assert_eq!(line, 1);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bad_label_rejected() {
        let line = r#"{"question":"q","candidate":"c","label":2,"group_id":"g"}"#;
        assert!(matches!(
            parse_jsonl::<QaPair>(line, "pairs"),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn extra_fields_survive_round_trip() {
        let line = r#"{"question":"q","candidate":"c","label":1,"group_id":"g","product_id":"p","source":"mturk","score":0.5}"#;
        let items = parse_jsonl::<QaPair>(line, "pairs").unwrap();
        assert_eq!(items[0].extra["source"], "mturk");
        assert_eq!(to_jsonl(&items).unwrap().trim_end(), line);
    }

    #[test]
    fn catalog_line_and_duplicate_specs() {
        let ok = r#"{"product_id":"207025690","category":"Microwaves","specs":[{"name":"Wattage (watts)","value":"1100"}]}"#;
        let products = parse_jsonl::<SpecProduct>(ok, "catalog").unwrap();
        assert_eq!(products[0].spec("Wattage (watts)").unwrap().value, "1100");
        let dup = r#"{"product_id":"x","category":"c","specs":[{"name":"a","value":"1"},{"name":"a","value":"2"}]}"#;
        assert!(parse_jsonl::<SpecProduct>(dup, "catalog").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cqa.jsonl");
        let records = vec![CqaRecord::new("is it loud ?", "no it is quiet")];
        save_jsonl(&path, &records).unwrap();
        assert_eq!(load_jsonl::<CqaRecord>(&path).unwrap(), records);
        assert!(matches!(
            load_jsonl::<CqaRecord>(dir.path().join("missing.jsonl")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn grouping_preserves_first_appearance() {
        let pairs = vec![
            QaPair::new("q1", "a", 0, "g1", None),
            QaPair::new("q2", "b", 1, "g2", None),
            QaPair::new("q1", "c", 1, "g1", None),
        ];
        let groups = group_pairs(&pairs);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].candidates, ["a", "c"]);
        assert_eq!(groups[0].labels, [0, 1]);
        assert_eq!(groups[1].group_id, "g2");
    }

    fn arb_pair() -> impl Strategy<Value = QaPair> {
        (
            "[a-z ?]{1,12}",
            "[a-zA-Z()]{1,10}",
            0u8..2,
            "[a-z0-9:]{1,6}",
            proptest::option::of("[0-9]{1,9}"),
        )
            .prop_map(|(q, c, l, g, p)| QaPair::new(q, c, l, g, p))
    }

    proptest! {
        #[test]
        fn pairs_round_trip(pairs in proptest::collection::vec(arb_pair(), 0..20)) {
            let text = to_jsonl(&pairs).unwrap();
            prop_assert_eq!(parse_jsonl::<QaPair>(&text, "p").unwrap(), pairs);
        }
    }
}
