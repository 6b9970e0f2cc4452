use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{BiLstmEncoder, CellVariant};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Var};
use crate::scorer::BilinearScorer;
use crate::text::{tokenize, EmbeddingTable, Vocabulary};

pub const EMBEDDING_NAME: &str = "embedding";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub cell_variant: CellVariant,
    pub forget_bias: f64,
    pub freeze_embeddings: bool,
}

/// Embedding table, shared biLSTM encoder and bilinear scorer over one
/// [`ParamStore`]. Parameter order: embedding, forward LSTM, backward LSTM,
/// scorer.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    vocab: Vocabulary,
    oov_seed: u64,
    params: ParamStore,
    embedding: ParamId,
    encoder: BiLstmEncoder,
    scorer: BilinearScorer,
}

impl Model {
    /// Fresh model; `seed` drives all parameter initialization.
    pub fn new(config: ModelConfig, vocab: Vocabulary, table: EmbeddingTable, seed: u64, oov_seed: u64) -> Result<Self> {
        if table.rows() != vocab.len() {
            return Err(Error::ShapeMismatch {
                name: EMBEDDING_NAME.into(),
                expected: (vocab.len(), table.dim()),
                found: (table.rows(), table.dim()),
            });
        }
        let dim = table.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let embedding = params.insert_with(EMBEDDING_NAME, table.into_matrix(), !config.freeze_embeddings)?;
        let encoder = BiLstmEncoder::register(
            &mut params,
            dim,
            config.hidden,
            config.cell_variant,
            config.forget_bias,
            &mut rng,
        )?;
        let scorer = BilinearScorer::register(&mut params, encoder.output_dim(), &mut rng)?;
        Ok(Model {
            config,
            vocab,
            oov_seed,
            params,
            embedding,
            encoder,
            scorer,
        })
    }

    /// Rebuilds a model around an already populated parameter store.
    pub(crate) fn from_parts(config: ModelConfig, vocab: Vocabulary, oov_seed: u64, mut params: ParamStore) -> Result<Self> {
        let embedding = params
            .id(EMBEDDING_NAME)
            .ok_or_else(|| Error::Corruption("missing embedding tensor".into()))?;
        params.set_trainable(embedding, !config.freeze_embeddings);
        let encoder = BiLstmEncoder::lookup(&params, config.cell_variant)?;
        let scorer = BilinearScorer::lookup(&params)?;
        let model = Model {
            config,
            vocab,
            oov_seed,
            params,
            embedding,
            encoder,
            scorer,
        };
        model.validate_shapes()?;
        Ok(model)
    }

    /// Checks every tensor against the shapes implied by `hidden`, the
    /// embedding width and the vocabulary size.
    pub fn validate_shapes(&self) -> Result<()> {
        for (name, expected) in self.expected_shapes() {
            let found = self
                .params
                .by_name(&name)
                .ok_or_else(|| Error::Corruption(format!("missing parameter {name}")))?
                .value
                .shape();
            if found != expected {
                return Err(Error::ShapeMismatch { name, expected, found });
            }
        }
        Ok(())
    }

    /// `(name, shape)` for every parameter, in store order.
    pub fn expected_shapes(&self) -> Vec<(String, (usize, usize))> {
        let d = self.embedding_dim();
        expected_shapes(self.vocab.len(), d, self.config.hidden)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn oov_seed(&self) -> u64 {
        self.oov_seed
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn encoder(&self) -> &BiLstmEncoder {
        &self.encoder
    }

    pub fn scorer(&self) -> &BilinearScorer {
        &self.scorer
    }

    pub fn embedding_dim(&self) -> usize {
        self.params.value(self.embedding).cols()
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    /// Token indices for `text`; errors when the text has no tokens.
    pub fn token_ids(&self, text: &str) -> Result<Vec<usize>> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyInput("text has no tokens"));
        }
        Ok(self.vocab.indices(&tokens))
    }

    /// `m×d` embedded sequence.
    pub fn embed(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<Var> {
        if ids.is_empty() {
            return Err(Error::EmptyInput("embed_sequence"));
        }
        let table = g.param(self.embedding);
        g.gather_rows(table, ids)
    }

    /// Pooled `2H×1` representation of a token-index sequence.
    pub fn encode_ids(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<Var> {
        let seq = self.embed(g, ids)?;
        self.encoder.encode_pooled(g, seq)
    }

    pub fn encode_text(&self, g: &mut Graph<'_>, text: &str) -> Result<Var> {
        let ids = self.token_ids(text)?;
        self.encode_ids(g, &ids)
    }

    pub fn pair_logit(&self, g: &mut Graph<'_>, question: &[usize], candidate: &[usize]) -> Result<Var> {
        let q = self.encode_ids(g, question)?;
        let s = self.encode_ids(g, candidate)?;
        self.scorer.logit(g, q, s)
    }

    /// `p(relevant | question, candidate)`.
    pub fn probability(&self, question: &str, candidate: &str) -> Result<f64> {
        let (q, s) = (self.token_ids(question)?, self.token_ids(candidate)?);
        let mut g = Graph::new(&self.params);
        let z = self.pair_logit(&mut g, &q, &s)?;
        let p = g.sigmoid(z);
        g.value(p).item()
    }

    /// Copy with every parameter rounded through `f32`, i.e. exactly what a
    /// checkpoint stores.
    pub fn rounded_to_f32(&self) -> Model {
        let mut out = self.clone();
        for p in out.params.iter_mut() {
            p.value = p.value.round_to_f32();
            p.grad.fill(0.0);
        }
        out
    }
}

pub(crate) fn expected_shapes(vocab_len: usize, dim: usize, hidden: usize) -> Vec<(String, (usize, usize))> {
    use crate::encoder::{BACKWARD_PREFIX, FORWARD_PREFIX, GATES};
    let mut out = vec![(EMBEDDING_NAME.to_string(), (vocab_len, dim))];
    for prefix in [FORWARD_PREFIX, BACKWARD_PREFIX] {
        for gate in GATES {
            out.push((format!("{prefix}W_{gate}"), (hidden, dim)));
            out.push((format!("{prefix}U_{gate}"), (hidden, hidden)));
            out.push((format!("{prefix}b_{gate}"), (hidden, 1)));
        }
    }
    out.push((crate::scorer::MATRIX_NAME.into(), (2 * hidden, 2 * hidden)));
    out.push((crate::scorer::BIAS_NAME.into(), (1, 1)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor2D;
    use crate::text::{parse_embeddings, EmbeddingOptions};

    fn tiny(variant: CellVariant) -> Model {
        let (vocab, table) =
            parse_embeddings("what 0.1 0.2\nis -0.3 0.4\nwattage 0.5 0.5\n", "t", EmbeddingOptions::default()).unwrap();
        Model::new(
            ModelConfig {
                hidden: 3,
                cell_variant: variant,
                forget_bias: 1.0,
                freeze_embeddings: true,
            },
            vocab,
            table,
            7,
            0,
        )
        .unwrap()
    }

    #[test]
    fn store_order_matches_expected_shapes() {
        let model = tiny(CellVariant::Linear);
        let names: Vec<_> = model.params().iter().map(|(_, p)| p.name.clone()).collect();
        let expected: Vec<_> = model.expected_shapes().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, expected);
        model.validate_shapes().unwrap();
    }

    #[test]
    fn shared_encoder_same_text_same_vector() {
        let model = tiny(CellVariant::Standard);
        let mut g = Graph::new(model.params());
        let q = model.encode_text(&mut g, "What is the wattage?").unwrap();
        let s = model.encode_text(&mut g, "What is the wattage?").unwrap();
        assert_eq!(g.value(q), g.value(s));
        assert_eq!(g.value(q).shape(), (6, 1));
    }

    #[test]
    fn empty_text_rejected() {
        let model = tiny(CellVariant::Linear);
        assert!(matches!(model.probability("   ", "x"), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn zero_parameters_encode_to_zero_under_linear_variant() {
        let mut model = tiny(CellVariant::Linear);
        for p in model.params_mut().iter_mut() {
            if p.name != EMBEDDING_NAME {
                p.value.fill(0.0);
            }
        }
        let mut g = Graph::new(model.params());
        let v = model.encode_text(&mut g, "what is wattage").unwrap();
        assert_eq!(g.value(v), &Tensor2D::zeros(6, 1));
    }
}
