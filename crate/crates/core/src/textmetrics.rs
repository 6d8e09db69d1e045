//! BLEU and CIDEr baselines.
//!
//! BLEU is sentence-level with uniform weights, the closest-reference brevity
//! penalty, and add-epsilon smoothing: an n-gram order with no clipped matches
//! contributes `1e-9 / total` instead of zero. A candidate with no unigram
//! match scores 0. CIDEr is the plain TF-IDF cosine variant (no length penalty
//! and no count clipping), averaged over n = 1..4 and scaled by 10.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::model::BaselineScores;

/// Bumped whenever tokenization changes, since scores depend on it.
pub const TOKENIZER_VERSION: &str = "emocue-tok/1";

pub const BLEU_EPSILON: f64 = 1e-9;
pub const CIDER_MAX_N: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum TextMetricError {
    #[error("at least one reference is required")]
    NoReferences,
    #[error("BLEU order must be between 1 and 4, got {0}")]
    BadOrder(usize),
    #[error("document-frequency table is empty")]
    EmptyCorpusStats,
    #[error("token is empty or contains whitespace: {0:?}")]
    BadToken(String),
}

/// Output of the fixed tokenizer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, TextMetricError> {
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(TextMetricError::BadToken(bad.clone()));
        }
        Ok(TokenSequence(tokens))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn ngram_counts(&self, n: usize) -> BTreeMap<&[String], usize> {
        let mut counts = BTreeMap::new();
        if n > 0 && self.0.len() >= n {
            for w in self.0.windows(n) {
                *counts.entry(w).or_insert(0) += 1;
            }
        }
        counts
    }
}

/// Lowercase, split on whitespace, and emit every character that is neither
/// alphanumeric nor `_` as its own token.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() || ch == '_' {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            tokens.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    TokenSequence(tokens)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bleu {
    pub score: f64,
    /// The candidate had no tokens; `score` is 0.
    pub empty_candidate: bool,
}

pub fn bleu(candidate: &TokenSequence, references: &[TokenSequence], max_n: usize) -> Result<Bleu, TextMetricError> {
    if references.is_empty() {
        return Err(TextMetricError::NoReferences);
    }
    if !(1..=4).contains(&max_n) {
        return Err(TextMetricError::BadOrder(max_n));
    }
    let c = candidate.len();
    if c == 0 {
        return Ok(Bleu {
            score: 0.0,
            empty_candidate: true,
        });
    }

    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = candidate.ngram_counts(n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in references {
            for (g, k) in r.ngram_counts(n) {
                let slot = max_ref.entry(g).or_insert(0);
                *slot = (*slot).max(k);
            }
        }
        let clipped: usize = cand.iter().map(|(g, k)| (*k).min(*max_ref.get(g).unwrap_or(&0))).sum();
        let total = cand.values().sum::<usize>().max(1) as f64;
        if clipped == 0 && n == 1 {
            return Ok(Bleu {
                score: 0.0,
                empty_candidate: false,
            });
        }
        let p = if clipped == 0 {
            BLEU_EPSILON / total
        } else {
            clipped as f64 / total
        };
        log_sum += p.ln() / max_n as f64;
    }

    let r = references
        .iter()
        .map(TokenSequence::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("non-empty references");
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(Bleu {
        score: bp * log_sum.exp(),
        empty_candidate: false,
    })
}

/// Document frequencies of 1..4-grams over a corpus of reference sets.
#[derive(Debug, Clone, Default)]
pub struct DocumentFrequency {
    df: HashMap<Vec<String>, usize>,
    documents: usize,
}

impl DocumentFrequency {
    /// `documents[i]` holds the references of item `i`; an n-gram counts once
    /// per item however many of its references contain it.
    pub fn build(documents: &[Vec<TokenSequence>]) -> Self {
        let mut df = HashMap::new();
        for refs in documents {
            let mut seen: HashSet<&[String]> = HashSet::new();
            for r in refs {
                for n in 1..=CIDER_MAX_N {
                    seen.extend(r.ngram_counts(n).into_keys());
                }
            }
            for g in seen {
                *df.entry(g.to_vec()).or_insert(0) += 1;
            }
        }
        DocumentFrequency {
            df,
            documents: documents.len(),
        }
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    fn tfidf<'a>(&self, seq: &'a TokenSequence, n: usize) -> (BTreeMap<&'a [String], f64>, f64) {
        let log_docs = (self.documents as f64).ln();
        let mut vec = BTreeMap::new();
        let mut norm2 = 0.0;
        for (g, tf) in seq.ngram_counts(n) {
            let df = self.df.get(g).copied().unwrap_or(0).max(1) as f64;
            let w = tf as f64 * (log_docs - df.ln());
            norm2 += w * w;
            vec.insert(g, w);
        }
        (vec, norm2.sqrt())
    }
}

/// Plain CIDEr of `candidate` against its references.
pub fn cider(
    candidate: &TokenSequence,
    references: &[TokenSequence],
    stats: &DocumentFrequency,
) -> Result<f64, TextMetricError> {
    if stats.documents == 0 || stats.df.is_empty() {
        return Err(TextMetricError::EmptyCorpusStats);
    }
    if references.is_empty() {
        return Err(TextMetricError::NoReferences);
    }
    let mut per_n = 0.0;
    for n in 1..=CIDER_MAX_N {
        let (cv, cnorm) = stats.tfidf(candidate, n);
        let mut sum = 0.0;
        for r in references {
            let (rv, rnorm) = stats.tfidf(r, n);
            if cnorm == 0.0 || rnorm == 0.0 {
                continue;
            }
            let dot: f64 = cv.iter().filter_map(|(g, w)| rv.get(g).map(|x| w * x)).sum();
            sum += dot / (cnorm * rnorm);
        }
        per_n += sum / references.len() as f64;
    }
    Ok(10.0 * per_n / CIDER_MAX_N as f64)
}

/// Corpus means of BLEU-1, BLEU-4 and CIDEr for (candidate, reference) text
/// pairs, with document frequencies taken over the references.
pub fn corpus_baselines<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<BaselineScores, TextMetricError> {
    if pairs.is_empty() {
        return Err(TextMetricError::NoReferences);
    }
    let tokenized: Vec<(TokenSequence, TokenSequence)> = pairs
        .iter()
        .map(|(c, r)| (tokenize(c.as_ref()), tokenize(r.as_ref())))
        .collect();
    let docs: Vec<Vec<TokenSequence>> = tokenized.iter().map(|(_, r)| vec![r.clone()]).collect();
    let stats = DocumentFrequency::build(&docs);
    let (mut b1, mut b4, mut ci) = (0.0, 0.0, 0.0);
    for (c, r) in &tokenized {
        let refs = std::slice::from_ref(r);
        b1 += bleu(c, refs, 1)?.score;
        b4 += bleu(c, refs, 4)?.score;
        ci += if stats.df.is_empty() {
            0.0
        } else {
            cider(c, refs, &stats)?
        };
    }
    let n = tokenized.len() as f64;
    Ok(BaselineScores {
        bleu1: b1 / n,
        bleu4: b4 / n,
        cider: ci / n,
    })
}
