use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use emocue_core::corpus::{load_corpus, Corpus, CorpusSchema};
use emocue_core::embed::{
    Embedder, EmbedderSpec, EmbeddingCache, HashEmbedder, HttpEmbeddingBackend, EMBED_API_KEY_ENV,
};
use emocue_core::extract::{
    default_templates, load_templates, CueExtractor, ExtractionCache, HttpChatClient, LlmExtractor, PromptTemplate,
    StructuredExtractor, LLM_API_KEY_ENV,
};
use emocue_core::harness::{
    compare_metrics_on_pairs, default_cue_pool, default_style_templates, extract_corpus, load_cue_pool,
    load_style_templates, run_template_sweep, synthesize_style_pairs, PairMode,
};
use emocue_core::metric::score_corpus;
use emocue_core::objectives::{
    check_bce, check_infonce, check_mfm, infonce_loss_with, AlignmentBatch, EmbeddingSequence, GradCheckReport,
    InfoNceDirection, MaskedBatch, Modality,
};
use emocue_core::remote::RetryPolicy;
use emocue_core::report::{load_report, render_comparison, render_pairs, render_report, render_sweep};
use emocue_core::textmetrics::corpus_baselines;

use crate::config::{EmbedderChoice, ExtractorChoice, RunConfig};
use crate::failure::Failure;

const EXTRACTION_CACHE: &str = "extractions.jsonl";
const EMBEDDING_CACHE: &str = "embeddings.bin";

fn api_key(var: &str, purpose: &str) -> Result<String, Failure> {
    match std::env::var(var) {
        Ok(k) if !k.trim().is_empty() => Ok(k),
        _ => Err(Failure::usage(format!("{purpose} needs an API key in {var}"))),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::data(format!("{}: {e}", path.display()))
}

/// Output paths under `--out`, refused up front if any exists without `--force`.
fn claim_outputs(cfg: &RunConfig, names: &[&str]) -> Result<Vec<PathBuf>, Failure> {
    let paths: Vec<PathBuf> = names.iter().map(|n| cfg.out.join(n)).collect();
    if !cfg.force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Failure::usage(format!(
                "{} exists; pass --force to overwrite",
                p.display()
            )));
        }
    }
    fs::create_dir_all(&cfg.out).map_err(|e| io_failure(&cfg.out, e))?;
    Ok(paths)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write(path, &text)
}

fn ensure_cache_dir(cfg: &RunConfig) -> Result<(), Failure> {
    fs::create_dir_all(&cfg.cache_dir).map_err(|e| io_failure(&cfg.cache_dir, e))
}

fn templates(cfg: &RunConfig) -> Result<Vec<PromptTemplate>, Failure> {
    match &cfg.templates {
        Some(dir) => Ok(load_templates(dir)?),
        None => Ok(default_templates()),
    }
}

fn pick_template(cfg: &RunConfig, id: Option<&str>) -> Result<PromptTemplate, Failure> {
    let all = templates(cfg)?;
    match id {
        Some(id) => all
            .into_iter()
            .find(|t| t.id() == id)
            .ok_or_else(|| Failure::usage(format!("no template with id {id:?}"))),
        None => all
            .into_iter()
            .next()
            .ok_or_else(|| Failure::usage("template directory holds no *.txt files")),
    }
}

/// Resolve credentials for every remote service the command will touch,
/// before any work starts.
struct Credentials {
    llm: Option<String>,
    embed: Option<String>,
}

fn credentials(cfg: &RunConfig, needs_extraction: bool, needs_embedding: bool) -> Result<Credentials, Failure> {
    let llm = if needs_extraction && cfg.extractor == ExtractorChoice::Llm {
        Some(api_key(LLM_API_KEY_ENV, "LLM cue extraction")?)
    } else {
        None
    };
    let embed = if needs_embedding && cfg.embedder == EmbedderChoice::Remote {
        Some(api_key(EMBED_API_KEY_ENV, "remote embedding")?)
    } else {
        None
    };
    Ok(Credentials { llm, embed })
}

fn build_extractor(cfg: &RunConfig, creds: &Credentials) -> Result<Box<dyn CueExtractor>, Failure> {
    match cfg.extractor {
        ExtractorChoice::Structured => Ok(Box::new(StructuredExtractor)),
        ExtractorChoice::Llm => {
            ensure_cache_dir(cfg)?;
            let cache = ExtractionCache::open(&cfg.cache_dir.join(EXTRACTION_CACHE))?;
            let client = HttpChatClient::new(&cfg.llm_base_url, &cfg.llm_model, creds.llm.clone(), cfg.timeout);
            Ok(Box::new(LlmExtractor::new(
                Box::new(client),
                Arc::new(cache),
                RetryPolicy::default(),
            )))
        }
    }
}

fn build_embedder(cfg: &RunConfig, creds: &Credentials) -> Result<Embedder, Failure> {
    ensure_cache_dir(cfg)?;
    let cache = Arc::new(EmbeddingCache::open(&cfg.cache_dir.join(EMBEDDING_CACHE))?);
    let embedder = match cfg.embedder {
        EmbedderChoice::Test => Embedder::new(
            EmbedderSpec::deterministic_test(cfg.embed_dim)?,
            Box::new(HashEmbedder::new(cfg.embed_dim)),
            cache,
            RetryPolicy::none(),
        )?,
        EmbedderChoice::Remote => Embedder::new(
            EmbedderSpec::remote(&cfg.embed_model, cfg.embed_dim)?,
            Box::new(HttpEmbeddingBackend::new(
                &cfg.embed_base_url,
                &cfg.embed_model,
                creds.embed.clone(),
                cfg.timeout,
            )),
            cache,
            RetryPolicy::default(),
        )?,
    };
    Ok(embedder)
}

fn load(cfg: &RunConfig) -> Result<Corpus, Failure> {
    Ok(load_corpus(cfg.corpus_path()?, CorpusSchema::CandidateReference)?)
}

fn needs_extraction(corpus: &Corpus) -> bool {
    corpus.samples().iter().any(|s| s.needs_extraction())
}

/// Fill missing cue blocks, extracting only when some are missing.
fn with_cues(
    cfg: &RunConfig,
    corpus: Corpus,
    template_id: Option<&str>,
    creds: &Credentials,
) -> Result<Corpus, Failure> {
    if !needs_extraction(&corpus) {
        return Ok(corpus);
    }
    let template = pick_template(cfg, template_id)?;
    let extractor = build_extractor(cfg, creds)?;
    Ok(extract_corpus(&corpus, extractor.as_ref(), &template, cfg.jobs)?)
}

pub fn extract(cfg: &RunConfig, template_id: Option<&str>) -> Result<(), Failure> {
    let corpus = load(cfg)?;
    let creds = credentials(cfg, needs_extraction(&corpus), false)?;
    let [out] = <[PathBuf; 1]>::try_from(claim_outputs(cfg, &["extracted.jsonl"])?).expect("one path");
    let corpus = with_cues(cfg, corpus, template_id, &creds)?;
    write(&out, &corpus.to_jsonl())?;
    eprintln!("wrote {} samples to {}", corpus.len(), out.display());
    Ok(())
}

pub fn embed_cache(cfg: &RunConfig, template_id: Option<&str>) -> Result<(), Failure> {
    let corpus = load(cfg)?;
    let creds = credentials(cfg, needs_extraction(&corpus), true)?;
    let corpus = with_cues(cfg, corpus, template_id, &creds)?;
    let embedder = build_embedder(cfg, &creds)?;
    let mut texts: Vec<&str> = Vec::new();
    for s in corpus.samples() {
        for cues in [&s.candidate_cues, &s.reference_cues].into_iter().flatten() {
            texts.extend(cues.iter().map(|(_, c)| c.text()));
        }
    }
    let embedded = embedder.embed_many(&texts)?;
    embedder.cache().flush()?;
    let fresh = embedded.iter().filter(|e| !e.cached).count();
    eprintln!(
        "{} cue embeddings ({} new) in {}",
        embedded.len(),
        fresh,
        cfg.cache_dir.join(EMBEDDING_CACHE).display()
    );
    Ok(())
}

pub fn score(cfg: &RunConfig, label: Option<&str>, template_id: Option<&str>) -> Result<(), Failure> {
    let corpus = load(cfg)?;
    let creds = credentials(cfg, needs_extraction(&corpus), true)?;
    let outs = claim_outputs(cfg, &["report.json", "report.txt"])?;
    let label = label.map(str::to_string).unwrap_or_else(|| {
        let path = cfg.corpus.as_deref().unwrap_or(Path::new("corpus"));
        path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
    });

    let corpus = with_cues(cfg, corpus, template_id, &creds)?;
    let embedder = build_embedder(cfg, &creds)?;
    let mut report = score_corpus(&corpus, &embedder, &label)?;
    embedder.cache().flush()?;
    let texts: Vec<(&str, &str)> = corpus
        .samples()
        .iter()
        .map(|s| (s.candidate_text.as_str(), s.reference_text.as_str()))
        .collect();
    report.baselines = Some(corpus_baselines(&texts)?);

    write_json(&outs[0], &report)?;
    let table = format!(
        "{}\n{}",
        render_comparison(std::slice::from_ref(&report))?,
        render_report(&report)?
    );
    write(&outs[1], &table)?;
    print!("{table}");
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<(), Failure> {
    let corpus = load(cfg)?;
    let creds = credentials(cfg, true, true)?;
    let templates = templates(cfg)?;
    let outs = claim_outputs(cfg, &["sweep.json", "sweep.txt"])?;
    let extractor = build_extractor(cfg, &creds)?;
    let embedder = build_embedder(cfg, &creds)?;
    let result = run_template_sweep(&corpus, &templates, extractor.as_ref(), &embedder, cfg.jobs)?;
    embedder.cache().flush()?;
    write_json(&outs[0], &result)?;
    let table = render_sweep(&result);
    write(&outs[1], &table)?;
    print!("{table}");
    Ok(())
}

pub struct SynthArgs<'a> {
    pub pairs: usize,
    pub pool: Option<&'a Path>,
    pub styles: Option<&'a Path>,
    pub mode: PairMode,
}

pub fn synth(cfg: &RunConfig, args: SynthArgs<'_>) -> Result<(), Failure> {
    let creds = credentials(cfg, false, true)?;
    let pool = match args.pool {
        Some(p) => load_cue_pool(p)?,
        None => default_cue_pool(),
    };
    let styles = match args.styles {
        Some(d) => load_style_templates(d)?,
        None => default_style_templates(),
    };
    let outs = claim_outputs(cfg, &["pairs.jsonl", "pairs.json", "pairs.txt"])?;
    let pairs = synthesize_style_pairs(&pool, &styles, args.pairs, cfg.seed, args.mode)?;
    let mut jsonl = String::new();
    for p in &pairs {
        jsonl.push_str(&serde_json::to_string(p).expect("pair serializes"));
        jsonl.push('\n');
    }
    write(&outs[0], &jsonl)?;

    let embedder = build_embedder(cfg, &creds)?;
    let cmp = compare_metrics_on_pairs(&pairs, &StructuredExtractor, &pick_template(cfg, None)?, &embedder)?;
    embedder.cache().flush()?;
    write_json(&outs[1], &cmp)?;
    let table = render_pairs(&cmp);
    write(&outs[2], &table)?;
    print!("{table}");
    Ok(())
}

pub struct LossCheckArgs<'a> {
    pub fixture: Option<&'a Path>,
    pub trials: usize,
    pub step: f64,
    pub tolerance: f64,
    pub symmetric: bool,
}

#[derive(Serialize)]
struct FixtureCheck {
    loss: f64,
    grad_temperature: f64,
    check: GradCheckReport,
}

#[derive(Serialize)]
struct RandomChecks {
    trials: usize,
    seed: u64,
    infonce_max_relative_error: f64,
    bce_max_relative_error: f64,
    mfm_max_relative_error: f64,
}

#[derive(Serialize)]
struct LossCheckOutput {
    step: f64,
    tolerance: f64,
    direction: InfoNceDirection,
    #[serde(skip_serializing_if = "Option::is_none")]
    fixture: Option<FixtureCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    random: Option<RandomChecks>,
    passed: bool,
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn random_checks(seed: u64, trials: usize, step: f64, direction: InfoNceDirection) -> Result<RandomChecks, Failure> {
    let (mut infonce, mut bce, mut mfm) = (0.0f64, 0.0f64, 0.0f64);
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
        let (n, d) = (rng.random_range(2..=8), rng.random_range(4..=16));
        let batch = AlignmentBatch::new(random_rows(&mut rng, n, d), random_rows(&mut rng, n, d), 0.07)?;
        infonce = infonce.max(check_infonce(&batch, direction, step)?.max_relative_error);

        let p = rng.random_range(0.05..0.95);
        bce = bce.max(check_bce(p, rng.random_bool(0.5), step)?.max_relative_error);

        let t = rng.random_range(2..=8);
        let original = EmbeddingSequence::new(random_rows(&mut rng, t, d), Modality::Video)?;
        let mask: Vec<usize> = (0..t).filter(|_| rng.random_bool(0.5)).chain([0]).collect();
        let masked = MaskedBatch::new(original, random_rows(&mut rng, t, d), mask)?;
        mfm = mfm.max(check_mfm(&masked, step)?.max_relative_error);
    }
    Ok(RandomChecks {
        trials,
        seed,
        infonce_max_relative_error: infonce,
        bce_max_relative_error: bce,
        mfm_max_relative_error: mfm,
    })
}

pub fn losscheck(cfg: &RunConfig, args: LossCheckArgs<'_>) -> Result<(), Failure> {
    let direction = if args.symmetric {
        InfoNceDirection::Symmetric
    } else {
        InfoNceDirection::AnchorToTarget
    };
    let [out] = <[PathBuf; 1]>::try_from(claim_outputs(cfg, &["losscheck.json"])?).expect("one path");
    let mut result = LossCheckOutput {
        step: args.step,
        tolerance: args.tolerance,
        direction,
        fixture: None,
        random: None,
        passed: true,
    };
    match args.fixture {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            let batch: AlignmentBatch =
                serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            let out = infonce_loss_with(&batch, direction)?;
            let check = check_infonce(&batch, direction, args.step)?;
            result.passed = check.max_relative_error < args.tolerance;
            println!(
                "loss {:.12}  dL/dtau {:.6e}  max relative error {:.3e}",
                out.loss, out.grad_temperature, check.max_relative_error
            );
            result.fixture = Some(FixtureCheck {
                loss: out.loss,
                grad_temperature: out.grad_temperature,
                check,
            });
        }
        None => {
            let r = random_checks(cfg.seed, args.trials, args.step, direction)?;
            for (name, err) in [
                ("infonce", r.infonce_max_relative_error),
                ("temporal_bce", r.bce_max_relative_error),
                ("mfm", r.mfm_max_relative_error),
            ] {
                println!("{name:<13} max relative error {err:.3e} over {} trials", r.trials);
                result.passed &= err < args.tolerance;
            }
            result.random = Some(r);
        }
    }
    write_json(&out, &result)?;
    if !result.passed {
        return Err(Failure::data(format!(
            "gradient check exceeded tolerance {:e}; see {}",
            args.tolerance,
            out.display()
        )));
    }
    Ok(())
}

pub fn report(inputs: &[PathBuf]) -> Result<(), Failure> {
    if inputs.is_empty() {
        return Err(Failure::usage("report needs at least one report.json"));
    }
    let reports = inputs.iter().map(|p| load_report(p)).collect::<Result<Vec<_>, _>>()?;
    print!("{}", render_comparison(&reports)?);
    Ok(())
}
