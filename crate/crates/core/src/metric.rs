//! Cue-level precision, recall and F1.
//!
//! Every candidate cue is matched to its most similar reference cue
//! (precision) and every reference cue to its most similar candidate cue
//! (recall); similarity is the cosine of the cue embeddings with negative
//! values clamped to zero. Scores are macro-averaged over samples per
//! dimension, and the corpus mean is the average of all non-null corpus
//! precision and recall values on a 0-100 scale.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Corpus;
use crate::embed::{EmbedError, Embedder};
use crate::model::{
    cue_key, harmonic_mean, AtomicCue, Dimension, DimensionScore, DimensionScores, EmbeddingVector, EvalSample,
    MetricReport, REPORT_SCHEMA_VERSION,
};
use crate::numeric::NumericError;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("cannot match against an empty cue set")]
    EmptySet,
    #[error("precision and recall must lie in [0, 1], got ({0}, {1})")]
    OutOfRange(f64, f64),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("no embedding for cue {0:?}")]
    MissingEmbedding(String),
    #[error("sample {0:?} has no extracted cues")]
    MissingCues(String),
    #[error("nothing to aggregate: no samples")]
    NoSamples,
    #[error("every dimension is null across the corpus")]
    AllNull,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Similarity floor applied to every cosine before matching.
pub fn clamp_similarity(cosine: f64) -> f64 {
    cosine.max(0.0)
}

/// Highest (clamped) cosine between `cue` and any member of `set`.
pub fn sim_phi(cue: &EmbeddingVector, set: &[EmbeddingVector]) -> Result<f64, MetricError> {
    if set.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let mut best = f64::NEG_INFINITY;
    for member in set {
        best = best.max(cue.cosine(member)?);
    }
    Ok(clamp_similarity(best))
}

/// Mean over candidate cues of their best match among reference cues.
pub fn precision(candidate: &[EmbeddingVector], reference: &[EmbeddingVector]) -> Result<f64, MetricError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let mut total = 0.0;
    for cue in candidate {
        total += sim_phi(cue, reference)?;
    }
    Ok(total / candidate.len() as f64)
}

/// Mean over reference cues of their best match among candidate cues.
pub fn recall(candidate: &[EmbeddingVector], reference: &[EmbeddingVector]) -> Result<f64, MetricError> {
    precision(reference, candidate)
}

pub fn f1(precision: f64, recall: f64) -> Result<f64, MetricError> {
    let in_range = |x: f64| (0.0..=1.0).contains(&x);
    if !in_range(precision) || !in_range(recall) {
        return Err(MetricError::OutOfRange(precision, recall));
    }
    Ok(harmonic_mean(precision, recall))
}

/// Score one dimension from already-resolved cue vectors.
///
/// One empty side scores (0, 0, 0); both empty is a vacuous (1, 1, 1).
pub fn score_dimension(
    candidate: &[EmbeddingVector],
    reference: &[EmbeddingVector],
) -> Result<DimensionScore, MetricError> {
    let (nc, nr) = (candidate.len(), reference.len());
    Ok(match (nc, nr) {
        (0, 0) => DimensionScore {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            candidate_count: 0,
            reference_count: 0,
            vacuous: true,
        },
        (0, _) | (_, 0) => DimensionScore::from_pr(0.0, 0.0, nc, nr),
        _ => DimensionScore::from_pr(precision(candidate, reference)?, recall(candidate, reference)?, nc, nr),
    })
}

/// Score every dimension of a sample. `embeddings` is keyed by normalized cue
/// text (see [`cue_key`]). Unsupported dimensions come back as `None`.
pub fn score_sample(
    sample: &EvalSample,
    embeddings: &BTreeMap<String, EmbeddingVector>,
) -> Result<DimensionScores, MetricError> {
    let (Some(cand), Some(refr)) = (&sample.candidate_cues, &sample.reference_cues) else {
        return Err(MetricError::MissingCues(sample.id.clone()));
    };
    let resolve = |cues: &[AtomicCue]| -> Result<Vec<EmbeddingVector>, MetricError> {
        cues.iter()
            .map(|c| {
                embeddings
                    .get(&c.key())
                    .cloned()
                    .ok_or_else(|| MetricError::MissingEmbedding(c.text().to_string()))
            })
            .collect()
    };
    let mut out = BTreeMap::new();
    for dim in Dimension::ALL {
        let score = if sample.supports(dim) {
            Some(score_dimension(&resolve(cand.get(dim))?, &resolve(refr.get(dim))?)?)
        } else {
            None
        };
        out.insert(dim, score);
    }
    Ok(out)
}

/// Average of every non-null corpus P and R, scaled to 0-100.
pub fn corpus_mean(corpus: &DimensionScores) -> Option<f64> {
    let values: Vec<f64> = corpus
        .values()
        .flatten()
        .flat_map(|s| [s.precision, s.recall])
        .collect();
    if values.is_empty() {
        None
    } else {
        Some(100.0 * values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Macro-average per-sample scores into a corpus report. Vacuous scores are
/// excluded; corpus F1 is recomputed from corpus P and R.
pub fn aggregate(label: &str, per_sample: Vec<(String, DimensionScores)>) -> Result<MetricReport, MetricError> {
    if per_sample.is_empty() {
        return Err(MetricError::NoSamples);
    }
    let mut corpus = BTreeMap::new();
    for dim in Dimension::ALL {
        let scored: Vec<&DimensionScore> = per_sample
            .iter()
            .filter_map(|(_, s)| s.get(&dim).and_then(Option::as_ref))
            .filter(|s| !s.vacuous)
            .collect();
        let score = if scored.is_empty() {
            None
        } else {
            let n = scored.len() as f64;
            let p = scored.iter().map(|s| s.precision).sum::<f64>() / n;
            let r = scored.iter().map(|s| s.recall).sum::<f64>() / n;
            Some(DimensionScore::from_pr(
                p,
                r,
                scored.iter().map(|s| s.candidate_count).sum(),
                scored.iter().map(|s| s.reference_count).sum(),
            ))
        };
        corpus.insert(dim, score);
    }
    let mean = corpus_mean(&corpus).ok_or(MetricError::AllNull)?;
    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        label: label.to_string(),
        per_sample: per_sample.into_iter().collect(),
        corpus,
        mean,
        baselines: None,
    })
}

/// Embed every cue in the corpus and score it end to end. Every sample must
/// already carry both cue sets.
pub fn score_corpus(corpus: &Corpus, embedder: &Embedder, label: &str) -> Result<MetricReport, MetricError> {
    let mut texts: Vec<&str> = Vec::new();
    for s in corpus.samples() {
        for cues in [&s.candidate_cues, &s.reference_cues] {
            let cues = cues.as_ref().ok_or_else(|| MetricError::MissingCues(s.id.clone()))?;
            texts.extend(cues.iter().map(|(_, c)| c.text()));
        }
    }
    let embedded = embedder.embed_many(&texts)?;
    let embeddings: BTreeMap<String, EmbeddingVector> = texts
        .iter()
        .zip(embedded)
        .map(|(t, e)| (cue_key(t), e.vector))
        .collect();
    let per_sample = corpus
        .samples()
        .par_iter()
        .map(|s| score_sample(s, &embeddings).map(|scores| (s.id.clone(), scores)))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate(label, per_sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CueSet;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> EmbeddingVector {
        EmbeddingVector::from_raw(xs.to_vec()).unwrap()
    }

    #[test]
    fn sim_phi_examples() {
        let (e1, e2) = (v(&[1.0, 0.0]), v(&[0.0, 1.0]));
        assert_eq!(sim_phi(&e1, &[e1.clone(), e2.clone()]).unwrap(), 1.0);
        assert_eq!(sim_phi(&e1, std::slice::from_ref(&e2)).unwrap(), 0.0);
        assert!((sim_phi(&v(&[0.6, 0.8]), &[e1, e2]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(sim_phi(&v(&[1.0]), &[]), Err(MetricError::EmptySet)));
    }

    #[test]
    fn negative_cosines_clamp_to_zero() {
        assert_eq!(sim_phi(&v(&[1.0, 0.0]), &[v(&[-1.0, 0.1])]).unwrap(), 0.0);
    }

    #[test]
    fn precision_recall_worked_example() {
        let ca = [v(&[1.0, 0.0]), v(&[0.6, 0.8])];
        let gt = [v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        assert!((precision(&ca, &gt).unwrap() - 0.9).abs() < 1e-15);
        assert!((recall(&ca, &gt).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(precision(&ca, &ca).unwrap(), 1.0);
        assert_eq!(precision(&[v(&[1.0, 0.0])], &[v(&[0.0, 1.0])]).unwrap(), 0.0);
        assert_eq!(recall(&[v(&[0.0, 1.0])], &[v(&[1.0, 0.0])]).unwrap(), 0.0);
        assert!(precision(&[], &gt).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(f1(0.0, 0.0).unwrap(), 0.0);
        assert!((f1(0.5, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(f1(1.2, 0.5).is_err());
        assert!(f1(0.5, -0.1).is_err());
    }

    fn sample(cand: CueSet, refr: CueSet, dims: &[Dimension]) -> EvalSample {
        EvalSample {
            id: "s".into(),
            supported_dimensions: dims.iter().copied().collect(),
            candidate_text: String::new(),
            reference_text: String::new(),
            candidate_cues: Some(cand),
            reference_cues: Some(refr),
        }
    }

    #[test]
    fn empty_side_policy() {
        let embedder = Embedder::deterministic(64).unwrap();
        let cand = CueSet::new(vec!["frown"], vec![], vec![]).unwrap();
        let refr = CueSet::new(vec!["frown"], vec!["low voice", "sigh"], vec![]).unwrap();
        let s = sample(cand.clone(), refr.clone(), &Dimension::ALL);
        let mut emb = embedder.embed_cue_set(&cand).unwrap();
        emb.extend(embedder.embed_cue_set(&refr).unwrap());
        let scores = score_sample(&s, &emb).unwrap();
        let audio = scores[&Dimension::Audio].unwrap();
        assert_eq!((audio.precision, audio.recall, audio.f1), (0.0, 0.0, 0.0));
        assert_eq!((audio.candidate_count, audio.reference_count), (0, 2));
        let global = scores[&Dimension::Global].unwrap();
        assert!(global.vacuous);
        assert_eq!(global.f1, 1.0);
        assert_eq!(scores[&Dimension::Visual].unwrap().f1, 1.0);

        let partial = sample(cand, refr, &[Dimension::Visual]);
        let scores = score_sample(&partial, &emb).unwrap();
        assert!(scores[&Dimension::Audio].is_none());
    }

    #[test]
    fn missing_embedding_names_cue() {
        let s = sample(
            CueSet::new(vec!["tears"], vec![], vec![]).unwrap(),
            CueSet::new(vec!["tears"], vec![], vec![]).unwrap(),
            &[Dimension::Visual],
        );
        match score_sample(&s, &BTreeMap::new()) {
            Err(MetricError::MissingEmbedding(c)) => assert_eq!(c, "tears"),
            other => panic!("{other:?}"),
        }
    }

    fn corpus_scores(pr: &[(Dimension, f64, f64)]) -> DimensionScores {
        let mut scores: DimensionScores = Dimension::ALL.iter().map(|d| (*d, None)).collect();
        for &(d, p, r) in pr {
            scores.insert(d, Some(DimensionScore::from_pr(p, r, 1, 1)));
        }
        scores
    }

    #[test]
    fn aggregate_mean_of_reference_rows() {
        let secap = corpus_scores(&[(Dimension::Audio, 0.287, 0.294), (Dimension::Global, 0.430, 0.354)]);
        let report = aggregate("SECap", vec![("x".into(), secap)]).unwrap();
        assert!(report.corpus[&Dimension::Visual].is_none());
        assert_eq!(crate::numeric::round_half_even(report.mean, 1), 34.1);
    }

    #[test]
    fn aggregate_excludes_vacuous_and_macro_averages() {
        let mut a = corpus_scores(&[(Dimension::Visual, 1.0, 0.5)]);
        a.insert(
            Dimension::Audio,
            Some(DimensionScore {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                candidate_count: 0,
                reference_count: 0,
                vacuous: true,
            }),
        );
        let b = corpus_scores(&[(Dimension::Visual, 0.5, 0.5), (Dimension::Audio, 0.2, 0.4)]);
        let report = aggregate("m", vec![("a".into(), a), ("b".into(), b)]).unwrap();
        let vis = report.corpus[&Dimension::Visual].unwrap();
        assert!((vis.precision - 0.75).abs() < 1e-15);
        assert!((vis.recall - 0.5).abs() < 1e-15);
        assert!((vis.f1 - 0.6).abs() < 1e-12);
        let aud = report.corpus[&Dimension::Audio].unwrap();
        assert!((aud.precision - 0.2).abs() < 1e-15);
        assert!(report.corpus[&Dimension::Global].is_none());
    }

    #[test]
    fn aggregate_errors() {
        assert!(matches!(aggregate("m", vec![]), Err(MetricError::NoSamples)));
        let all_null = corpus_scores(&[]);
        assert!(matches!(
            aggregate("m", vec![("a".into(), all_null)]),
            Err(MetricError::AllNull)
        ));
    }

    #[test]
    fn perfect_sample_means_100() {
        let s = corpus_scores(&[
            (Dimension::Visual, 1.0, 1.0),
            (Dimension::Audio, 1.0, 1.0),
            (Dimension::Global, 1.0, 1.0),
        ]);
        assert_eq!(aggregate("m", vec![("a".into(), s)]).unwrap().mean, 100.0);
    }

    fn cue_lists() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        (2usize..8).prop_flat_map(|d| {
            let vecs = prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), 1..6);
            (vecs.clone(), vecs)
        })
    }

    fn to_vecs(raw: &[Vec<f64>]) -> Option<Vec<EmbeddingVector>> {
        raw.iter().map(|r| EmbeddingVector::from_raw(r.clone()).ok()).collect()
    }

    proptest! {
        #[test]
        fn swap_exchanges_p_and_r((a, b) in cue_lists()) {
            let (Some(ca), Some(gt)) = (to_vecs(&a), to_vecs(&b)) else { return Ok(()) };
            prop_assert_eq!(recall(&ca, &gt).unwrap(), precision(&gt, &ca).unwrap());
            let fwd = score_dimension(&ca, &gt).unwrap();
            let rev = score_dimension(&gt, &ca).unwrap();
            prop_assert_eq!(fwd.precision, rev.recall);
            prop_assert_eq!(fwd.recall, rev.precision);
            prop_assert!((fwd.f1 - rev.f1).abs() < 1e-15);
            for x in [fwd.precision, fwd.recall, fwd.f1] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }

        #[test]
        fn permutation_invariant((a, b) in cue_lists(), rot in 0usize..6) {
            let (Some(ca), Some(gt)) = (to_vecs(&a), to_vecs(&b)) else { return Ok(()) };
            let mut ca2 = ca.clone();
            ca2.rotate_left(rot % ca.len());
            let mut gt2 = gt.clone();
            gt2.reverse();
            let s1 = score_dimension(&ca, &gt).unwrap();
            let s2 = score_dimension(&ca2, &gt2).unwrap();
            prop_assert!((s1.precision - s2.precision).abs() < 1e-12);
            prop_assert!((s1.recall - s2.recall).abs() < 1e-12);
        }

        #[test]
        fn adding_unmatched_candidate_to_reference_never_lowers_precision((a, b) in cue_lists()) {
            let (Some(ca), Some(gt)) = (to_vecs(&a), to_vecs(&b)) else { return Ok(()) };
            let before = precision(&ca, &gt).unwrap();
            let worst = ca
                .iter()
                .min_by(|x, y| sim_phi(x, &gt).unwrap().total_cmp(&sim_phi(y, &gt).unwrap()))
                .unwrap()
                .clone();
            let mut gt2 = gt.clone();
            gt2.push(worst);
            prop_assert!(precision(&ca, &gt2).unwrap() >= before - 1e-15);
        }
    }
}
