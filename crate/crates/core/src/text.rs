//! Tokenization, vocabulary and GloVe-format embedding tables.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::Tensor2D;

/// Default seed for the out-of-vocabulary row.
pub const DEFAULT_OOV_SEED: u64 = 0x5eed_00f0;

/// Half-width of the uniform range used for the OOV vector.
pub const OOV_RANGE: f64 = 0.05;

const PUNCTUATION: &[char] = &['.', ',', '?', '!', '\'', '"', '(', ')', '/'];

/// Lowercases, splits on whitespace and splits the marks `. , ? ! ' " ( ) /`
/// into standalone tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for ch in word.chars() {
            if PUNCTUATION.contains(&ch) {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(ch.to_string());
            } else {
                current.extend(ch.to_lowercase());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

/// Token ↔ index map. Index `len() - 1` is reserved for out-of-vocabulary
/// tokens, so `len()` equals the embedding table's row count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in order; later duplicates are ignored.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in tokens {
            vocab.push(t.into());
        }
        vocab
    }

    fn push(&mut self, token: String) -> bool {
        if self.index.contains_key(&token) {
            return false;
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        true
    }

    /// Number of rows including the OOV slot.
    pub fn len(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn known_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn oov_index(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn index_or_oov(&self, token: &str) -> usize {
        self.lookup(token).unwrap_or(self.tokens.len())
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn indices<S: AsRef<str>>(&self, seq: &[S]) -> Vec<usize> {
        seq.iter().map(|t| self.index_or_oov(t.as_ref())).collect()
    }

    /// SHA-256 over the newline-joined token list, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    matrix: Tensor2D,
    pub trainable: bool,
}

impl EmbeddingTable {
    pub fn new(matrix: Tensor2D, trainable: bool) -> Self {
        EmbeddingTable { matrix, trainable }
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Tensor2D {
        &self.matrix
    }

    pub fn into_matrix(self) -> Tensor2D {
        self.matrix
    }

    pub fn row(&self, index: usize) -> &[f64] {
        self.matrix.row_slice(index)
    }
}

/// Options for [`load_embeddings`].
#[derive(Clone, Copy, Debug)]
pub struct EmbeddingOptions {
    /// Keep only the first N lines of the file.
    pub vocab_limit: Option<usize>,
    pub oov_seed: u64,
}

impl Default for EmbeddingOptions {
    fn default() -> Self {
        EmbeddingOptions {
            vocab_limit: None,
            oov_seed: DEFAULT_OOV_SEED,
        }
    }
}

/// Loads a GloVe text file (`token f1 f2 … fd` per line).
pub fn load_embeddings(path: impl AsRef<Path>, options: EmbeddingOptions) -> Result<(Vocabulary, EmbeddingTable)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, &path.display().to_string(), options)
}

/// Parses GloVe-format text. `source` is used in error messages.
pub fn parse_embeddings(text: &str, source: &str, options: EmbeddingOptions) -> Result<(Vocabulary, EmbeddingTable)> {
    let format_err = |line: usize, message: String| Error::Format {
        path: source.to_string(),
        line,
        message,
    };
    let mut vocab = Vocabulary::from_tokens(Vec::<String>::new());
    let mut data: Vec<f64> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut taken = 0usize;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if options.vocab_limit.is_some_and(|limit| taken >= limit) {
            break;
        }
        taken += 1;
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line has a first field");
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| format_err(line_no, format!("invalid number {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(format_err(line_no, format!("token {token:?} has no vector")));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(format_err(line_no, format!("non-finite value {bad}")));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(format_err(
                    line_no,
                    format!("expected {d} values, found {}", values.len()),
                ))
            }
            Some(_) => {}
        }
        if vocab.push(token.to_string()) {
            data.extend(values);
        }
    }

    let dim = dim.ok_or_else(|| format_err(0, "empty embedding file".into()))?;
    data.extend(oov_vector(dim, options.oov_seed));
    let matrix = Tensor2D::from_vec(vocab.len(), dim, data)?;
    Ok((vocab, EmbeddingTable::new(matrix, false)))
}

/// Deterministic OOV vector, uniform in `(-OOV_RANGE, OOV_RANGE)`.
pub fn oov_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.random_range(-OOV_RANGE..OOV_RANGE)).collect()
}

/// Stacks the embedding of each token into an `m×d` matrix.
pub fn embed_sequence<S: AsRef<str>>(seq: &[S], vocab: &Vocabulary, table: &EmbeddingTable) -> Result<Tensor2D> {
    if seq.is_empty() {
        return Err(Error::EmptyInput("embed_sequence"));
    }
    table.matrix.gather_rows(&vocab.indices(seq))
}

/// Writes a vocabulary and table in GloVe text format (OOV row omitted).
pub fn write_glove(path: impl AsRef<Path>, vocab: &Vocabulary, table: &EmbeddingTable) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::new();
    for (i, tok) in vocab.tokens().iter().enumerate() {
        out.push_str(tok);
        for v in table.row(i) {
            write!(out, " {v}").expect("write to string");
        }
        out.push('\n');
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
