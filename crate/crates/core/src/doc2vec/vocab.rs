use super::Doc2VecError;
use crate::rng::Rng;
use rand::Rng as _;
use std::collections::HashMap;

const NOISE_POWER: f64 = 0.75;

/// Token table ordered by descending count, ties broken lexicographically,
/// with the unigram^0.75 negative-sampling distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    total: u64,
    noise: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Vocabulary {
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], min_count: u64) -> Result<Self, Doc2VecError> {
        if corpus.is_empty() {
            return Err(Doc2VecError::EmptyCorpus);
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for doc in corpus {
            for t in doc {
                *counts.entry(t.as_ref()).or_default() += 1;
            }
        }
        let entries: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .map(|(t, c)| (t.to_string(), c))
            .collect();
        if entries.is_empty() {
            return Err(Doc2VecError::EmptyVocabulary { min_count });
        }
        Ok(Self::from_entries(entries))
    }

    fn from_entries(mut entries: Vec<(String, u64)>) -> Self {
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let total = entries.iter().map(|e| e.1).sum();
        let weights: Vec<f64> = entries.iter().map(|e| (e.1 as f64).powf(NOISE_POWER)).collect();
        let z: f64 = weights.iter().sum();
        let noise: Vec<f64> = weights.iter().map(|w| w / z).collect();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = noise
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        let index = entries.iter().enumerate().map(|(i, e)| (e.0.clone(), i)).collect();
        let (tokens, counts) = entries.into_iter().unzip();
        Self {
            tokens,
            counts,
            index,
            total,
            noise,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn count(&self, token: &str) -> Option<u64> {
        self.index_of(token).map(|i| self.counts[i])
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    /// Sum of counts of retained tokens.
    pub fn total_count(&self) -> u64 {
        self.total
    }

    pub fn noise_distribution(&self) -> &[f64] {
        &self.noise
    }

    /// In-vocabulary token indices, in document order.
    pub fn encode<S: AsRef<str>>(&self, doc: &[S]) -> Vec<usize> {
        doc.iter().filter_map(|t| self.index_of(t.as_ref())).collect()
    }

    pub fn sample_negative(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        self.cumulative.partition_point(|&c| c <= u).min(self.len() - 1)
    }

    /// `token \t count \t index` lines in index order.
    pub fn to_text(&self) -> Result<String, Doc2VecError> {
        let mut out = String::new();
        for (i, (t, c)) in self.tokens.iter().zip(&self.counts).enumerate() {
            if t.contains(['\t', '\n', '\r']) {
                return Err(Doc2VecError::UnstorableToken(t.clone()));
            }
            out.push_str(&format!("{t}\t{c}\t{i}\n"));
        }
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self, Doc2VecError> {
        let mut entries = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let err = |reason: &str| Doc2VecError::VocabularyFormat {
                line: line_no + 1,
                reason: reason.to_string(),
            };
            let mut parts = line.split('\t');
            let (Some(tok), Some(count), Some(idx), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(err("expected three tab-separated fields"));
            };
            let count: u64 = count.parse().map_err(|_| err("bad count"))?;
            let idx: usize = idx.parse().map_err(|_| err("bad index"))?;
            if idx != line_no {
                return Err(err("indices must be dense and in order"));
            }
            entries.push((tok.to_string(), count));
        }
        if entries.is_empty() {
            return Err(Doc2VecError::EmptyVocabulary { min_count: 0 });
        }
        let v = Self::from_entries(entries);
        // Re-sorting must not move anything, otherwise the file was not canonical.
        for (i, t) in v.tokens.iter().enumerate() {
            if text.lines().nth(i).and_then(|l| l.split('\t').next()) != Some(t.as_str()) {
                return Err(Doc2VecError::VocabularyFormat {
                    line: i + 1,
                    reason: "entries are not in count/lexicographic order".into(),
                });
            }
        }
        Ok(v)
    }
}
