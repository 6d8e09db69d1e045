//! BLEU and CIDEr against values frozen from an independent Python
//! implementation (see `oracles/baseline_oracle.py`).

use std::path::Path;

use serde::Deserialize;

use emocue_core::textmetrics::{bleu, cider, corpus_baselines, tokenize, DocumentFrequency, TokenSequence};

#[derive(Deserialize)]
struct Pair {
    candidate: String,
    reference: String,
}

#[derive(Deserialize)]
struct Frozen {
    bleu1: Vec<f64>,
    bleu4: Vec<f64>,
    cider: Vec<f64>,
}

fn fixtures() -> (Vec<Pair>, Frozen) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let pairs = std::fs::read_to_string(dir.join("baseline_pairs.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let frozen = serde_json::from_str(&std::fs::read_to_string(dir.join("baseline_oracle.json")).unwrap()).unwrap();
    (pairs, frozen)
}

#[test]
fn per_pair_scores_match_reference_implementation() {
    let (pairs, frozen) = fixtures();
    assert_eq!(pairs.len(), 20);
    let refs: Vec<Vec<TokenSequence>> = pairs.iter().map(|p| vec![tokenize(&p.reference)]).collect();
    let stats = DocumentFrequency::build(&refs);
    for (i, p) in pairs.iter().enumerate() {
        let c = tokenize(&p.candidate);
        let b1 = bleu(&c, &refs[i], 1).unwrap().score;
        let b4 = bleu(&c, &refs[i], 4).unwrap().score;
        let ci = cider(&c, &refs[i], &stats).unwrap();
        assert!(
            (b1 - frozen.bleu1[i]).abs() < 1e-6,
            "pair {i} BLEU-1 {b1} vs {}",
            frozen.bleu1[i]
        );
        assert!(
            (b4 - frozen.bleu4[i]).abs() < 1e-6,
            "pair {i} BLEU-4 {b4} vs {}",
            frozen.bleu4[i]
        );
        assert!(
            (ci - frozen.cider[i]).abs() < 1e-6,
            "pair {i} CIDEr {ci} vs {}",
            frozen.cider[i]
        );
    }
}

#[test]
fn corpus_means_match_reference_implementation() {
    let (pairs, frozen) = fixtures();
    let texts: Vec<(&str, &str)> = pairs
        .iter()
        .map(|p| (p.candidate.as_str(), p.reference.as_str()))
        .collect();
    let got = corpus_baselines(&texts).unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((got.bleu1 - mean(&frozen.bleu1)).abs() < 1e-6);
    assert!((got.bleu4 - mean(&frozen.bleu4)).abs() < 1e-6);
    assert!((got.cider - mean(&frozen.cider)).abs() < 1e-6);
}
