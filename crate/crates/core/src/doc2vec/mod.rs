//! Paragraph vectors trained with the distributed bag-of-words objective.
//!
//! Each document owns a vector that is trained to predict tokens sampled from
//! that document, using negative sampling against a unigram^0.75 noise
//! distribution. Unseen documents are embedded by fitting a fresh document
//! vector against the frozen word output vectors ([`Doc2VecModel::infer_vector`]).

mod vocab;

pub use vocab::Vocabulary;

use crate::rng::{child_rng, Rng};
use crate::Matrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type TokenSequence = Vec<String>;

#[derive(Debug, Error)]
pub enum Doc2VecError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no token occurs at least {min_count} times")]
    EmptyVocabulary { min_count: u64 },
    #[error("invalid doc2vec parameters: {0}")]
    InvalidParams(String),
    #[error("invalid vocabulary file at line {line}: {reason}")]
    VocabularyFormat { line: usize, reason: String },
    #[error("token {0:?} cannot be stored (contains tab or newline)")]
    UnstorableToken(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Doc2VecParams {
    pub dim: usize,
    /// Target words sampled per anchor position.
    pub window: usize,
    pub epochs: usize,
    pub negative: usize,
    pub learning_rate: f64,
    pub min_count: u64,
    pub infer_steps: usize,
    pub seed: u64,
}

impl Default for Doc2VecParams {
    fn default() -> Self {
        Self {
            dim: 64,
            window: 5,
            epochs: 20,
            negative: 5,
            learning_rate: 0.025,
            min_count: 1,
            infer_steps: 50,
            seed: 0,
        }
    }
}

/// Learning rates decay linearly to this fraction of the initial rate.
pub const MIN_LEARNING_RATE_RATIO: f64 = 1e-4;

impl Doc2VecParams {
    pub fn validate(&self) -> Result<(), Doc2VecError> {
        let bad = |m: &str| Err(Doc2VecError::InvalidParams(m.into()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.negative == 0 {
            return bad("negative samples must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    fn decayed(&self, progress: f64) -> f64 {
        let lo = self.learning_rate * MIN_LEARNING_RATE_RATIO;
        self.learning_rate - (self.learning_rate - lo) * progress.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Doc2VecModel {
    pub params: Doc2VecParams,
    pub vocab: Vocabulary,
    /// One row per training document.
    pub doc_vectors: Matrix,
    /// Output (context) vector per vocabulary entry.
    pub word_vectors: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    /// Mean negative-sampling loss per update, per epoch.
    pub epoch_losses: Vec<f64>,
    /// Documents with no in-vocabulary token; their vectors stay at initialisation.
    pub skipped_empty_docs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub vector: Vec<f64>,
    /// True when no token was in the vocabulary and the zero vector was returned.
    pub degenerate: bool,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `-ln(sigmoid(x))`, stable for large |x|.
#[inline]
fn neg_log_sigmoid(x: f64) -> f64 {
    (-x).max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Negative-sampling objective for one (document, target) pair:
/// `-ln s(d.w_t) - sum_k ln s(-d.w_k)`.
pub fn negative_sampling_loss(doc: &[f64], words: &Matrix, target: usize, negatives: &[usize]) -> f64 {
    let mut l = neg_log_sigmoid(dot(doc, words.row(target)));
    for &k in negatives {
        l += neg_log_sigmoid(-dot(doc, words.row(k)));
    }
    l
}

/// One SGD step on [`negative_sampling_loss`]. Returns the loss before the
/// step. Word vectors are only touched when `update_words` is set; negatives
/// equal to the target are skipped.
pub fn negative_sampling_step(
    doc: &mut [f64],
    words: &mut Matrix,
    target: usize,
    negatives: &[usize],
    lr: f64,
    update_words: bool,
) -> f64 {
    let mut doc_grad = vec![0.0; doc.len()];
    let mut loss = 0.0;
    let pairs = std::iter::once((target, 1.0)).chain(negatives.iter().filter(|&&k| k != target).map(|&k| (k, 0.0)));
    for (w, label) in pairs {
        let f = dot(doc, words.row(w));
        loss += if label > 0.0 {
            neg_log_sigmoid(f)
        } else {
            neg_log_sigmoid(-f)
        };
        let g = (label - sigmoid(f)) * lr;
        for (acc, wv) in doc_grad.iter_mut().zip(words.row(w)) {
            *acc += g * wv;
        }
        if update_words {
            for (wv, dv) in words.row_mut(w).iter_mut().zip(doc.iter()) {
                *wv += g * dv;
            }
        }
    }
    for (d, g) in doc.iter_mut().zip(&doc_grad) {
        *d += g;
    }
    loss
}

/// One pass over a document: for every anchor position, `min(window, len)`
/// targets are drawn uniformly from the document and each gets one
/// negative-sampling update. Returns (summed loss, number of updates).
#[allow(clippy::too_many_arguments)]
fn dbow_pass(
    doc: &mut [f64],
    tokens: &[usize],
    words: &mut Matrix,
    vocab: &Vocabulary,
    params: &Doc2VecParams,
    lr: f64,
    update_words: bool,
    rng: &mut Rng,
) -> (f64, usize) {
    let len = tokens.len();
    let per_anchor = params.window.min(len);
    let mut negatives = vec![0usize; params.negative];
    let mut loss = 0.0;
    let mut updates = 0;
    for _anchor in 0..len {
        for _ in 0..per_anchor {
            let target = tokens[rng.random_range(0..len)];
            for n in negatives.iter_mut() {
                *n = vocab.sample_negative(rng);
            }
            loss += negative_sampling_step(doc, words, target, &negatives, lr, update_words);
            updates += 1;
        }
    }
    (loss, updates)
}

fn init_vector(dim: usize, rng: &mut Rng) -> Vec<f64> {
    let a = 0.5 / dim as f64;
    (0..dim).map(|_| rng.random_range(-a..a)).collect()
}

/// Trains document and word output vectors over `corpus` with the DBOW
/// negative-sampling objective.
pub fn train_dbow(
    corpus: &[TokenSequence],
    params: &Doc2VecParams,
) -> Result<(Doc2VecModel, TrainSummary), Doc2VecError> {
    params.validate()?;
    let vocab = Vocabulary::build(corpus, params.min_count)?;
    let dim = params.dim;
    let mut rng = child_rng(params.seed, "doc2vec/init");
    let mut doc_vectors = Matrix::zeros(corpus.len(), dim);
    for i in 0..corpus.len() {
        doc_vectors.row_mut(i).copy_from_slice(&init_vector(dim, &mut rng));
    }
    let mut word_vectors = Matrix::zeros(vocab.len(), dim);
    for i in 0..vocab.len() {
        word_vectors.row_mut(i).copy_from_slice(&init_vector(dim, &mut rng));
    }

    let encoded: Vec<Vec<usize>> = corpus.iter().map(|d| vocab.encode(d)).collect();
    let skipped = encoded.iter().filter(|d| d.is_empty()).count();
    let total_steps = (params.epochs * corpus.len()) as f64;
    let mut rng = child_rng(params.seed, "doc2vec/train");
    let mut epoch_losses = Vec::with_capacity(params.epochs);
    let mut done = 0usize;
    for _ in 0..params.epochs {
        let (mut loss, mut updates) = (0.0, 0usize);
        for (i, tokens) in encoded.iter().enumerate() {
            let lr = params.decayed(done as f64 / total_steps);
            done += 1;
            if tokens.is_empty() {
                continue;
            }
            let (l, u) = dbow_pass(
                doc_vectors.row_mut(i),
                tokens,
                &mut word_vectors,
                &vocab,
                params,
                lr,
                true,
                &mut rng,
            );
            loss += l;
            updates += u;
        }
        epoch_losses.push(if updates > 0 { loss / updates as f64 } else { 0.0 });
    }
    Ok((
        Doc2VecModel {
            params: params.clone(),
            vocab,
            doc_vectors,
            word_vectors,
        },
        TrainSummary {
            epoch_losses,
            skipped_empty_docs: skipped,
        },
    ))
}

impl Doc2VecModel {
    pub fn from_parts(
        params: Doc2VecParams,
        vocab: Vocabulary,
        doc_vectors: Matrix,
        word_vectors: Matrix,
    ) -> Result<Self, Doc2VecError> {
        params.validate()?;
        if word_vectors.rows() != vocab.len() || word_vectors.cols() != params.dim || doc_vectors.cols() != params.dim {
            return Err(Doc2VecError::InvalidParams(format!(
                "word matrix {}x{}, doc matrix width {} inconsistent with vocabulary {} and dim {}",
                word_vectors.rows(),
                word_vectors.cols(),
                doc_vectors.cols(),
                vocab.len(),
                params.dim
            )));
        }
        Ok(Self {
            params,
            vocab,
            doc_vectors,
            word_vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    /// Embeds an unseen token list with the default number of steps.
    pub fn infer(&self, tokens: &[String]) -> Inference {
        self.infer_vector(tokens, self.params.infer_steps)
    }

    /// Fits a fresh document vector for `tokens` with the word vectors frozen.
    ///
    /// The starting vector and sampling stream are seeded from the model seed
    /// and the token list, so equal token lists always embed identically.
    /// Out-of-vocabulary tokens are ignored; if none remain the zero vector
    /// is returned with `degenerate` set.
    pub fn infer_vector(&self, tokens: &[String], steps: usize) -> Inference {
        let encoded = self.vocab.encode(tokens);
        if encoded.is_empty() {
            return Inference {
                vector: vec![0.0; self.dim()],
                degenerate: true,
            };
        }
        let stream = format!("doc2vec/infer\n{}", tokens.join("\n"));
        let mut rng = child_rng(self.params.seed, &stream);
        let mut doc = init_vector(self.dim(), &mut rng);
        let mut words = self.word_vectors.clone();
        for s in 0..steps {
            let lr = self.params.decayed(s as f64 / steps as f64);
            dbow_pass(
                &mut doc,
                &encoded,
                &mut words,
                &self.vocab,
                &self.params,
                lr,
                false,
                &mut rng,
            );
        }
        Inference {
            vector: doc,
            degenerate: false,
        }
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len(), "cosine of vectors with different lengths");
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}
