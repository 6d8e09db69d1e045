//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS or FAIL line, even when all pass.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use emocue_core::corpus::{load_corpus, Corpus, CorpusSchema};
use emocue_core::embed::{Embedder, EmbedderSpec, EmbeddingBackend, EmbeddingCache};
use emocue_core::extract::{
    default_templates, CueExtractor, ExtractError, ExtractionResult, PromptTemplate, StructuredExtractor,
};
use emocue_core::harness::{
    compare_metrics_on_pairs, default_cue_pool, default_style_templates, run_template_sweep, synthesize_style_pairs,
    PairMode,
};
use emocue_core::metric::{aggregate, score_corpus, score_dimension};
use emocue_core::model::{CueSet, Dimension, DimensionScore, EmbeddingVector, EvalSample};
use emocue_core::objectives::{
    check_bce, check_infonce, check_mfm, infonce_loss, mfm_loss, temporal_bce, AlignmentBatch, EmbeddingSequence,
    InfoNceDirection, MaskedBatch, Modality,
};
use emocue_core::remote::{RetryPolicy, TransportError};
use emocue_core::report::{format_mean, render_comparison};
use emocue_core::textmetrics::{bleu, cider, corpus_baselines, tokenize, DocumentFrequency};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn manifest() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

// Exhaustive pairwise oracle on raw vectors. Empty policy: both sides empty
// scores 1, one side empty scores 0.
fn oracle_prf(cand: &[Vec<f64>], refr: &[Vec<f64>]) -> (f64, f64, f64) {
    match (cand.is_empty(), refr.is_empty()) {
        (true, true) => return (1.0, 1.0, 1.0),
        (true, false) | (false, true) => return (0.0, 0.0, 0.0),
        _ => {}
    }
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let table: Vec<Vec<f64>> = cand.iter().map(|c| refr.iter().map(|r| cos(c, r)).collect()).collect();
    let mut p = 0.0;
    for row in &table {
        p += row.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    }
    p /= cand.len() as f64;
    let mut r = 0.0;
    for j in 0..refr.len() {
        r += table
            .iter()
            .map(|row| row[j])
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0);
    }
    r /= refr.len() as f64;
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

fn metric_core_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(4..=16);
        let (nc, nr) = (rng.random_range(0..=5), rng.random_range(0..=5));
        let (cand, refr) = (random_rows(&mut rng, nc, d), random_rows(&mut rng, nr, d));
        let wrap = |rows: &[Vec<f64>]| -> Vec<EmbeddingVector> {
            rows.iter()
                .map(|r| EmbeddingVector::from_raw(r.clone()).unwrap())
                .collect()
        };
        let got = score_dimension(&wrap(&cand), &wrap(&refr)).map_err(|e| format!("seed {seed}: {e}"))?;
        let (p, r, f) = oracle_prf(&cand, &refr);
        for (a, b) in [(got.precision, p), (got.recall, r), (got.f1, f)] {
            worst = worst.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-9, || format!("max deviation {worst:.3e} > 1e-9"))?;
    ensure(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!("1000 pairs, max deviation {worst:.2e}, {secs:.2}s"))
}

fn reference_mean(label: &str, dims: &[(Dimension, f64, f64)]) -> Result<f64, String> {
    let mut scores = BTreeMap::new();
    for dim in Dimension::ALL {
        let entry = dims
            .iter()
            .find(|(d, _, _)| *d == dim)
            .map(|&(_, p, r)| DimensionScore::from_pr(p / 100.0, r / 100.0, 1, 1));
        scores.insert(dim, entry);
    }
    let report = aggregate(label, vec![(label.to_string(), scores)]).map_err(|e| e.to_string())?;
    Ok(report.mean)
}

fn reference_means() -> Outcome {
    use Dimension::*;
    let secap = reference_mean("SECap", &[(Audio, 28.7, 29.4), (Global, 43.0, 35.4)])?;
    let llama = reference_mean(
        "Emotion-LLaMA",
        &[(Visual, 51.1, 39.1), (Audio, 39.2, 46.7), (Global, 49.5, 46.9)],
    )?;
    let (a, b) = (format_mean(secap), format_mean(llama));
    ensure(a == "34.1" && b == "45.4", || format!("got {a} and {b}"))?;
    Ok(format!("SECap {a}, Emotion-LLaMA {b}"))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let step = 1e-5;
    let (mut infonce, mut bce, mut mfm) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d) = (rng.random_range(2..=8), rng.random_range(4..=16));
        let batch = AlignmentBatch::new(random_rows(&mut rng, n, d), random_rows(&mut rng, n, d), 0.07)
            .map_err(|e| e.to_string())?;
        infonce = infonce.max(
            check_infonce(&batch, InfoNceDirection::AnchorToTarget, step)
                .map_err(|e| e.to_string())?
                .max_relative_error,
        );
        let p = rng.random_range(0.05..0.95);
        bce = bce.max(
            check_bce(p, rng.random_bool(0.5), step)
                .map_err(|e| e.to_string())?
                .max_relative_error,
        );
        let t = rng.random_range(2..=8);
        let original =
            EmbeddingSequence::new(random_rows(&mut rng, t, d), Modality::Video).map_err(|e| e.to_string())?;
        let mask: Vec<usize> = (0..t).filter(|_| rng.random_bool(0.5)).chain([0]).collect();
        let masked = MaskedBatch::new(original, random_rows(&mut rng, t, d), mask).map_err(|e| e.to_string())?;
        mfm = mfm.max(check_mfm(&masked, step).map_err(|e| e.to_string())?.max_relative_error);
    }
    let secs = start.elapsed().as_secs_f64();
    let worst = infonce.max(bce).max(mfm);
    ensure(worst < 1e-4, || {
        format!("infonce {infonce:.2e}, bce {bce:.2e}, mfm {mfm:.2e}")
    })?;
    ensure(secs < 30.0, || format!("took {secs:.2}s"))?;
    Ok(format!(
        "100 seeds each; infonce {infonce:.1e}, bce {bce:.1e}, mfm {mfm:.1e}, {secs:.2}s"
    ))
}

fn closed_forms() -> Outcome {
    let err = |e: emocue_core::objectives::ObjectiveError| e.to_string();
    let single = AlignmentBatch::new(vec![vec![1.0, 2.0, -0.5]], vec![vec![0.3, -1.0, 2.0]], 0.07).map_err(err)?;
    let n1 = infonce_loss(&single).map_err(err)?.loss;
    ensure(n1.abs() <= 1e-12, || format!("N=1 InfoNCE {n1:e}"))?;

    let n = 6;
    let uniform = AlignmentBatch::new(vec![vec![1.0, 0.0]; n], vec![vec![0.0, 1.0]; n], 0.07).map_err(err)?;
    let u = infonce_loss(&uniform).map_err(err)?.loss;
    ensure((u - (n as f64).ln()).abs() <= 1e-9, || {
        format!("uniform InfoNCE {u} vs ln {n}")
    })?;

    for ordered in [true, false] {
        let b = temporal_bce(0.5, ordered).loss;
        ensure((b - 2f64.ln()).abs() <= 1e-12, || format!("BCE(0.5) {b}"))?;
    }

    let rows = vec![vec![0.25, -1.5, 3.0], vec![2.0, 0.0, -0.75]];
    let original = EmbeddingSequence::new(rows.clone(), Modality::Audio).map_err(err)?;
    let perfect = MaskedBatch::new(original, rows, [0, 1]).map_err(err)?;
    let m = mfm_loss(&perfect).loss;
    ensure(m == 0.0, || format!("perfect MFM {m:e}"))?;
    Ok("N=1 InfoNCE 0, uniform ln N, BCE ln 2, perfect MFM 0".into())
}

fn style_insensitivity() -> Outcome {
    let pairs = synthesize_style_pairs(
        &default_cue_pool(),
        &default_style_templates(),
        50,
        0x5eed_2026,
        PairMode::Identical,
    )
    .map_err(|e| e.to_string())?;
    let embedder = Embedder::deterministic(384).map_err(|e| e.to_string())?;
    let cmp = compare_metrics_on_pairs(&pairs, &StructuredExtractor, &default_templates()[0], &embedder)
        .map_err(|e| e.to_string())?;
    ensure(cmp.pairs.len() == 50, || format!("{} pairs", cmp.pairs.len()))?;
    if let Some(bad) = cmp.pairs.iter().find(|p| p.emocue_f1 != 1.0) {
        return Err(format!("pair seed {} has F1 {}", bad.seed, bad.emocue_f1));
    }
    ensure(cmp.mean_bleu4 < 0.2, || format!("mean BLEU-4 {:.4}", cmp.mean_bleu4))?;
    Ok(format!("50 pairs, F1 1.0 each, mean BLEU-4 {:.3}", cmp.mean_bleu4))
}

/// Emits one visual cue per side; the candidate cue names the template.
struct PerTemplateStub;

impl CueExtractor for PerTemplateStub {
    fn extract(&self, description: &str, template: &PromptTemplate) -> Result<ExtractionResult, ExtractError> {
        let cue = if description.starts_with("reference") {
            "ref".to_string()
        } else {
            format!("cand-{}", template.id())
        };
        Ok(ExtractionResult {
            cues: CueSet::new(vec![cue.as_str()], vec![], vec![])?,
            template_id: template.id().to_string(),
            raw_model_output: cue,
            cached: false,
        })
    }
}

/// Places `cand-tK` at cosine 0.40 + 0.01 (K - 1) from `ref`.
struct AngleBackend;

impl EmbeddingBackend for AngleBackend {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, TransportError> {
        Ok(texts
            .iter()
            .map(|t| match t.strip_prefix("cand-t") {
                Some(k) => {
                    let c = 0.40 + 0.01 * (k.parse::<f64>().unwrap() - 1.0);
                    vec![c, (1.0 - c * c).sqrt()]
                }
                None => vec![1.0, 0.0],
            })
            .collect())
    }
}

fn sample(id: &str, dims: &[Dimension], cand: &str, refr: &str) -> EvalSample {
    EvalSample {
        id: id.into(),
        supported_dimensions: dims.iter().copied().collect(),
        candidate_text: cand.into(),
        reference_text: refr.into(),
        candidate_cues: None,
        reference_cues: None,
    }
}

fn sweep_control() -> Outcome {
    let s = |e: &dyn std::fmt::Display| e.to_string();
    let corpus = load_corpus(
        &manifest().join("tests/fixtures/annotated.jsonl"),
        CorpusSchema::CandidateReference,
    )
    .map_err(|e| s(&e))?;
    let embedder = Embedder::deterministic(64).map_err(|e| s(&e))?;
    let flat =
        run_template_sweep(&corpus, &default_templates(), &StructuredExtractor, &embedder, 4).map_err(|e| s(&e))?;
    ensure(flat.dispersion.len() == 3, || {
        format!("{} dimensions", flat.dispersion.len())
    })?;
    for (dim, d) in &flat.dispersion {
        let all = [d.p_std, d.r_std, d.f1_std, d.p_range, d.r_range, d.f1_range];
        ensure(all.iter().all(|&v| v == 0.0), || format!("{dim:?} spread {all:?}"))?;
    }

    let corpus = Corpus::new(vec![sample(
        "s1",
        &[Dimension::Visual],
        "candidate text",
        "reference text",
    )])
    .map_err(|e| s(&e))?;
    let templates: Vec<PromptTemplate> = (1..=5)
        .map(|k| PromptTemplate::new(format!("t{k}"), "Extract cues.\n{description}").unwrap())
        .collect();
    let stub = Embedder::new(
        EmbedderSpec::remote("angle-stub", 2).map_err(|e| s(&e))?,
        Box::new(AngleBackend),
        Arc::new(EmbeddingCache::in_memory()),
        RetryPolicy::none(),
    )
    .map_err(|e| s(&e))?;
    let series = run_template_sweep(&corpus, &templates, &PerTemplateStub, &stub, 2).map_err(|e| s(&e))?;
    let v = series
        .dispersion
        .get(&Dimension::Visual)
        .ok_or("no visual dispersion")?;
    ensure((v.p_range - 0.04).abs() <= 1e-6, || {
        format!("visual P range {}", v.p_range)
    })?;
    let std = 0.0002f64.sqrt();
    ensure((v.p_std - std).abs() <= 1e-6, || format!("visual P std {}", v.p_std))?;
    Ok(format!(
        "control spread 0; stub range {:.6}, std {:.6}",
        v.p_range, v.p_std
    ))
}

#[derive(Deserialize)]
struct Pair {
    candidate: String,
    reference: String,
}

#[derive(Deserialize)]
struct Oracle {
    bleu1: Vec<f64>,
    bleu4: Vec<f64>,
    cider: Vec<f64>,
}

fn ngram_oracle() -> Outcome {
    let fixtures = manifest().join("../core/tests/fixtures");
    let pairs: Vec<Pair> = fs::read_to_string(fixtures.join("baseline_pairs.jsonl"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let oracle: Oracle =
        serde_json::from_str(&fs::read_to_string(fixtures.join("baseline_oracle.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure(pairs.len() == 20 && oracle.cider.len() == 20, || {
        "fixture is not 20 pairs".into()
    })?;

    let refs: Vec<Vec<_>> = pairs.iter().map(|p| vec![tokenize(&p.reference)]).collect();
    let stats = DocumentFrequency::build(&refs);
    let mut worst = 0.0f64;
    for (i, p) in pairs.iter().enumerate() {
        let c = tokenize(&p.candidate);
        let b1 = bleu(&c, &refs[i], 1).map_err(|e| e.to_string())?.score;
        let b4 = bleu(&c, &refs[i], 4).map_err(|e| e.to_string())?.score;
        let ci = cider(&c, &refs[i], &stats).map_err(|e| e.to_string())?;
        for (got, want) in [(b1, oracle.bleu1[i]), (b4, oracle.bleu4[i]), (ci, oracle.cider[i])] {
            worst = worst.max((got - want).abs());
        }
    }
    let texts: Vec<(&str, &str)> = pairs
        .iter()
        .map(|p| (p.candidate.as_str(), p.reference.as_str()))
        .collect();
    let means = corpus_baselines(&texts).map_err(|e| e.to_string())?;
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    for (got, want) in [
        (means.bleu1, avg(&oracle.bleu1)),
        (means.bleu4, avg(&oracle.bleu4)),
        (means.cider, avg(&oracle.cider)),
    ] {
        worst = worst.max((got - want).abs());
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("20 pairs, max deviation {worst:.2e}"))
}

fn run_score(out: &Path, cache: &Path) -> Result<Vec<u8>, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_emocue"));
    for (key, _) in std::env::vars() {
        if key.starts_with("EMOCUE_") {
            cmd.env_remove(key);
        }
    }
    let o = cmd
        .args([
            "--embedder",
            "test",
            "--extractor",
            "structured",
            "--seed",
            "7",
            "--jobs",
            "4",
        ])
        .arg("--corpus")
        .arg(manifest().join("tests/fixtures/annotated.jsonl"))
        .arg("--cache-dir")
        .arg(cache)
        .arg("--out")
        .arg(out)
        .arg("score")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
    fs::read(out.join("report.json")).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cache: PathBuf = dir.path().join("cache");
    let cold = run_score(&dir.path().join("cold"), &cache)?;
    let first = run_score(&dir.path().join("first"), &cache)?;
    let second = run_score(&dir.path().join("second"), &cache)?;
    ensure(first == second, || "warm runs differ".into())?;
    ensure(cold == first, || "cold and warm runs differ".into())?;
    Ok(format!("3 runs, {} identical bytes", first.len()))
}

fn degenerate_policy() -> Outcome {
    let s = |e: &dyn std::fmt::Display| e.to_string();
    let corpus = load_corpus(
        &manifest().join("tests/fixtures/degenerate.jsonl"),
        CorpusSchema::CandidateReference,
    )
    .map_err(|e| s(&e))?;
    ensure(corpus.len() == 6, || format!("{} samples", corpus.len()))?;
    let embedder = Embedder::deterministic(64).map_err(|e| s(&e))?;
    let report = score_corpus(&corpus, &embedder, "degenerate").map_err(|e| s(&e))?;
    let get = |id: &str, dim| report.per_sample[id][&dim];

    // one side empty
    for (id, dim) in [("d2", Dimension::Audio), ("d5", Dimension::Visual)] {
        let sc = get(id, dim).ok_or(format!("{id} {dim:?} null"))?;
        ensure(
            (sc.precision, sc.recall, sc.f1) == (0.0, 0.0, 0.0) && !sc.vacuous,
            || format!("{id}: {sc:?}"),
        )?;
    }
    // both empty
    for (id, dim) in [
        ("d3", Dimension::Visual),
        ("d6", Dimension::Visual),
        ("d6", Dimension::Audio),
    ] {
        let sc = get(id, dim).ok_or(format!("{id} {dim:?} null"))?;
        ensure(
            sc.vacuous && (sc.precision, sc.recall, sc.f1) == (1.0, 1.0, 1.0),
            || format!("{id}: {sc:?}"),
        )?;
    }
    // unsupported
    ensure(get("d4", Dimension::Visual).is_none(), || "d4 visual not null".into())?;

    // vacuous and null entries stay out of the averages
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    let corpus_p = |dim| report.corpus[&dim].map(|c: DimensionScore| c.precision);
    ensure(corpus_p(Dimension::Visual).is_some_and(|p| close(p, 2.0 / 3.0)), || {
        format!("visual corpus {:?}", report.corpus[&Dimension::Visual])
    })?;
    ensure(corpus_p(Dimension::Audio).is_some_and(|p| close(p, 0.8)), || {
        format!("audio corpus {:?}", report.corpus[&Dimension::Audio])
    })?;
    ensure(corpus_p(Dimension::Global).is_some_and(|p| close(p, 1.0)), || {
        "global corpus".into()
    })?;
    let mean = 100.0 * (2.0 * 2.0 / 3.0 + 2.0 * 0.8 + 2.0) / 6.0;
    ensure(close(report.mean, mean), || format!("mean {}", report.mean))?;

    let only_d4 = aggregate("d4 only", vec![("d4".into(), report.per_sample["d4"].clone())]).map_err(|e| s(&e))?;
    ensure(only_d4.corpus[&Dimension::Visual].is_none(), || {
        "d4-only visual not null".into()
    })?;
    let table = render_comparison(&[only_d4]).map_err(|e| s(&e))?;
    let row = table.lines().find(|l| l.starts_with("d4 only")).ok_or("no row")?;
    ensure(row.split_whitespace().filter(|c| *c == "-").count() == 2, || {
        format!("row {row:?}")
    })?;
    Ok(format!("6 samples, mean {}", format_mean(report.mean)))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("metric-core oracle equivalence", metric_core_oracle),
        ("reference mean reproduction", reference_means),
        ("gradient suite", gradient_suite),
        ("closed-form loss anchors", closed_forms),
        ("style insensitivity", style_insensitivity),
        ("template-sweep control", sweep_control),
        ("BLEU/CIDEr oracle equivalence", ngram_oracle),
        ("determinism", determinism),
        ("empty and degenerate policy", degenerate_policy),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
