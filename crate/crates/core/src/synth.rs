//! Synthetic source corpus and target catalog with a shared relevance rule.
//!
//! Every question names one keyword and one confounder token. The relevant
//! answer or specification repeats the keyword; some irrelevant candidates
//! repeat the confounder instead. Surface overlap alone is therefore
//! ambiguous, and a model has to learn which tokens carry relevance. All
//! tokens have independent random embeddings, so that knowledge is per
//! token: the large source corpus covers every keyword, a small target
//! training set covers only a few.

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{generate_spec_pairs, save_jsonl, CqaRecord, QaPair, SpecProduct, SpecQuestion};
use crate::error::{Error, Result};
use crate::numerics::Tensor2D;
use crate::text::{oov_vector, tokenize, write_glove, EmbeddingTable, Vocabulary, DEFAULT_OOV_SEED};

const QUESTION_TEMPLATES: &[&str] = &[
    "what is the {k} of this {c} ?",
    "how good is the {k} on the {c} version ?",
    "does the {k} work with a {c} ?",
    "can you tell me the {k} for {c} use ?",
    "is the {k} ok if i have a {c} ?",
    "what {k} does it have for the {c} ?",
];

const ANSWER_FILLER: &[&str] = &[
    "i", "think", "the", "it", "is", "very", "fine", "we", "use", "ours", "and", "really", "so", "far", "mine", "has",
    "works", "great", "good", "with", "a", "no", "problems", "at", "all",
];

const CATEGORIES: &[&str] = &["appliances", "tools", "lighting", "outdoor", "storage"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub keywords: usize,
    pub confounders: usize,
    pub embedding_dim: usize,
    pub source_records: usize,
    /// Source records per pseudo product, so the source can be split by product.
    pub records_per_source_product: usize,
    pub products: usize,
    pub specs_per_product: usize,
    pub questions_per_product: usize,
    /// Confounder tokens sprinkled into every source answer.
    pub answer_confounders: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            keywords: 120,
            confounders: 12,
            embedding_dim: 16,
            source_records: 2600,
            records_per_source_product: 10,
            products: 60,
            specs_per_product: 6,
            questions_per_product: 3,
            answer_confounders: 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingTable,
    pub cqa: Vec<CqaRecord>,
    pub catalog: Vec<SpecProduct>,
    pub spec_questions: Vec<SpecQuestion>,
}

fn keyword(i: usize) -> String {
    format!("kw{i}")
}

fn confounder(i: usize) -> String {
    format!("cf{i}")
}

fn question(rng: &mut ChaCha8Rng, k: &str, c: &str) -> String {
    QUESTION_TEMPLATES
        .choose(rng)
        .expect("templates")
        .replace("{k}", k)
        .replace("{c}", c)
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.specs_per_product < 2 || self.questions_per_product > self.specs_per_product {
            return Err(Error::Config(
                "need at least 2 specs per product and no more questions than specs".into(),
            ));
        }
        if self.keywords < self.specs_per_product || self.confounders < 2 {
            return Err(Error::Config("keyword or confounder pool too small".into()));
        }
        if self.embedding_dim == 0 || self.records_per_source_product == 0 {
            return Err(Error::Config("embedding_dim and records_per_source_product must be positive".into()));
        }
        Ok(())
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let keywords: Vec<String> = (0..config.keywords).map(keyword).collect();
    let confounders: Vec<String> = (0..config.confounders).map(confounder).collect();

    let mut cqa = Vec::with_capacity(config.source_records);
    for i in 0..config.source_records {
        let k = keywords.choose(&mut rng).expect("keywords");
        let c = confounders.choose(&mut rng).expect("confounders");
        let q = question(&mut rng, k, c);
        let mut tokens: Vec<&str> = (0..8).map(|_| *ANSWER_FILLER.choose(&mut rng).expect("filler")).collect();
        tokens.push(k);
        for _ in 0..config.answer_confounders {
            let other = loop {
                let o = confounders.choose(&mut rng).expect("confounders");
                if o != c {
                    break o;
                }
            };
            tokens.push(other);
        }
        tokens.shuffle(&mut rng);
        let mut record = CqaRecord::new(q, tokens.join(" "));
        record.product_id = Some(format!("src{:05}", i / config.records_per_source_product));
        cqa.push(record);
    }

    let mut catalog = Vec::with_capacity(config.products);
    let mut spec_questions = Vec::new();
    for p in 0..config.products {
        let product_id = format!("p{p:04}");
        let chosen: Vec<&String> = keywords.choose_multiple(&mut rng, config.specs_per_product).collect();
        let spec_conf: Vec<&String> = (0..config.specs_per_product)
            .map(|_| confounders.choose(&mut rng).expect("confounders"))
            .collect();
        let names: Vec<String> = chosen.iter().zip(&spec_conf).map(|(k, c)| format!("{k} {c}")).collect();
        let values: Vec<String> = (0..config.specs_per_product)
            .map(|_| rng.random_range(1..1000).to_string())
            .collect();
        let category = CATEGORIES[p % CATEGORIES.len()];
        let product = SpecProduct::new(
            product_id.clone(),
            category,
            names.iter().map(String::as_str).zip(values.iter().map(String::as_str)).collect(),
        );
        let mut targets: Vec<usize> = (0..config.specs_per_product).collect();
        targets.shuffle(&mut rng);
        for &t in targets.iter().take(config.questions_per_product) {
            // Borrow the confounder of another spec so that a distractor
            // shares one token with the question.
            let decoy = loop {
                let d = rng.random_range(0..config.specs_per_product);
                if d != t {
                    break d;
                }
            };
            let c = if spec_conf[decoy] == spec_conf[t] {
                confounders.iter().find(|c| *c != spec_conf[t]).expect("two confounders")
            } else {
                spec_conf[decoy]
            };
            spec_questions.push(SpecQuestion {
                product_id: product_id.clone(),
                question: question(&mut rng, chosen[t], c),
                spec_name: names[t].clone(),
            });
        }
        catalog.push(product);
    }

    let mut tokens: Vec<String> = Vec::new();
    tokens.extend(keywords);
    tokens.extend(confounders);
    for t in QUESTION_TEMPLATES {
        tokens.extend(tokenize(t).into_iter().filter(|w| !w.starts_with('{')));
    }
    tokens.extend(ANSWER_FILLER.iter().map(|s| s.to_string()));
    let vocab = Vocabulary::from_tokens(tokens);
    let dim = config.embedding_dim;
    let mut data: Vec<f64> = (0..vocab.known_len() * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    data.extend(oov_vector(dim, DEFAULT_OOV_SEED));
    let matrix = Tensor2D::from_vec(vocab.len(), dim, data)?;

    Ok(SynthData {
        vocab,
        embeddings: EmbeddingTable::new(matrix, false),
        cqa,
        catalog,
        spec_questions,
    })
}

impl SynthData {
    /// All target pairs, grouped per product in catalog order.
    pub fn target_pairs(&self) -> Result<Vec<QaPair>> {
        let mut out = Vec::new();
        for product in &self.catalog {
            let qs: Vec<(&str, &str)> = self
                .spec_questions
                .iter()
                .filter(|q| q.product_id == product.product_id)
                .map(|q| (q.question.as_str(), q.spec_name.as_str()))
                .collect();
            out.extend(generate_spec_pairs(product, &qs)?);
        }
        Ok(out)
    }

    /// Writes `cqa.jsonl`, `catalog.jsonl`, `spec_questions.jsonl` and
    /// `embeddings.txt` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_jsonl(dir.join("cqa.jsonl"), &self.cqa)?;
        save_jsonl(dir.join("catalog.jsonl"), &self.catalog)?;
        save_jsonl(dir.join("spec_questions.jsonl"), &self.spec_questions)?;
        // Known tokens only; loading with the default OOV seed restores the
        // same table.
        write_glove(dir.join("embeddings.txt"), &self.vocab, &self.embeddings)
    }
}
