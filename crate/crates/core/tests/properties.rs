use std::collections::BTreeMap;

use proptest::prelude::*;

use emocue_core::corpus::{Corpus, CorpusSchema};
use emocue_core::embed::Embedder;
use emocue_core::metric::{precision, recall, score_dimension};
use emocue_core::model::{cue_key, CueSet, Dimension, EmbeddingVector, EvalSample};
use emocue_core::objectives::{infonce_loss, mfm_loss, AlignmentBatch, EmbeddingSequence, MaskedBatch, Modality};

fn cue_text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof!["[a-cA-C]{1,4}", Just(" ".to_string()), Just("\t".to_string())],
        1..6,
    )
    .prop_map(|parts| parts.concat())
    .prop_filter("needs a visible character", |s| !s.trim().is_empty())
}

fn cue_lists() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(cue_text(), 0..5)
}

fn rows(n: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n).prop_filter("rows need nonzero norm", |rs| {
        rs.iter().all(|r| r.iter().any(|v| v.abs() > 1e-3))
    })
}

fn unit(rows: &[Vec<f64>]) -> Vec<EmbeddingVector> {
    rows.iter()
        .map(|r| EmbeddingVector::from_raw(r.clone()).unwrap())
        .collect()
}

proptest! {
    #[test]
    fn cue_set_normalization_is_idempotent(v in cue_lists(), a in cue_lists(), g in cue_lists()) {
        let once = CueSet::new(v, a, g).unwrap();
        let json = serde_json::to_string(&once).unwrap();
        let twice: CueSet = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn corpus_round_trips_through_jsonl(
        samples in prop::collection::vec((cue_lists(), cue_lists(), "[a-z ]{1,20}", any::<bool>()), 1..5)
    ) {
        let corpus = Corpus::new(
            samples
                .into_iter()
                .enumerate()
                .map(|(i, (c, r, text, annotated))| EvalSample {
                    id: format!("s{i}"),
                    supported_dimensions: [Dimension::Visual, Dimension::Global].into_iter().collect(),
                    candidate_text: text.clone(),
                    reference_text: text,
                    candidate_cues: annotated.then(|| CueSet::new(c, vec![], vec![]).unwrap()),
                    reference_cues: annotated.then(|| CueSet::new(vec![], vec![], r).unwrap()),
                })
                .collect(),
        )
        .unwrap();
        let again = Corpus::parse(&corpus.to_jsonl(), CorpusSchema::CandidateReference).unwrap();
        prop_assert_eq!(corpus, again);
    }

    #[test]
    fn recall_is_precision_with_sides_exchanged(a in rows(1..6, 5), b in rows(1..6, 5)) {
        let (a, b) = (unit(&a), unit(&b));
        prop_assert_eq!(recall(&a, &b).unwrap(), precision(&b, &a).unwrap());
    }

    #[test]
    fn scores_stay_in_unit_interval(a in rows(0..6, 4), b in rows(0..6, 4)) {
        let s = score_dimension(&unit(&a), &unit(&b)).unwrap();
        for v in [s.precision, s.recall, s.f1] {
            prop_assert!((0.0..=1.0).contains(&v), "{v}");
        }
    }

    #[test]
    fn hash_embedding_equal_iff_normalized_text_equal(x in cue_text(), y in cue_text()) {
        // separation is probabilistic; it holds comfortably at the default 384
        let e = Embedder::deterministic(384).unwrap();
        let (vx, vy) = (e.embed(&x).unwrap().vector, e.embed(&y).unwrap().vector);
        prop_assert_eq!(vx == vy, cue_key(&x) == cue_key(&y));
        if cue_key(&x) != cue_key(&y) {
            prop_assert!(vx.cosine(&vy).unwrap() <= 0.3 + 1e-6);
        }
    }

    #[test]
    fn infonce_is_non_negative(a in rows(1..6, 4), b in rows(6..7, 4), tau in 0.01f64..2.0) {
        let n = a.len();
        let batch = AlignmentBatch::new(a, b[..n].to_vec(), tau).unwrap();
        prop_assert!(infonce_loss(&batch).unwrap().loss >= 0.0);
    }

    #[test]
    fn mfm_ignores_mask_order(orig in rows(4..5, 3), pred in rows(4..5, 3), mask in prop::collection::vec(0usize..4, 1..6)) {
        let seq = EmbeddingSequence::new(orig, Modality::Video).unwrap();
        let forward = MaskedBatch::new(seq.clone(), pred.clone(), mask.clone()).unwrap();
        let backward = MaskedBatch::new(seq, pred, mask.into_iter().rev()).unwrap();
        prop_assert_eq!(mfm_loss(&forward).loss, mfm_loss(&backward).loss);
    }
}

#[test]
fn scoring_is_reproducible_across_embedders() {
    let set = CueSet::new(vec!["frown", "tears"], vec!["shaky voice"], vec!["bad news"]).unwrap();
    let embed = |e: &Embedder| -> BTreeMap<String, EmbeddingVector> { e.embed_cue_set(&set).unwrap() };
    assert_eq!(
        embed(&Embedder::deterministic(128).unwrap()),
        embed(&Embedder::deterministic(128).unwrap())
    );
}
