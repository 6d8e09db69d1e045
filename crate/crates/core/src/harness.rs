//! Robustness experiments: the prompt-template sweep and the
//! style-insensitivity pair study.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError};
use crate::embed::{EmbedError, Embedder};
use crate::extract::{CueExtractor, ExtractError, PromptTemplate};
use crate::metric::{score_corpus, score_sample, MetricError};
use crate::model::{cue_key, CueError, CueSet, Dimension, DimensionScore, EvalSample};
use crate::numeric::{mean, population_std_and_range, NumericError};
use crate::textmetrics::{bleu, cider, tokenize, DocumentFrequency, TextMetricError};

/// Number of prompt templates a sweep compares.
pub const SWEEP_TEMPLATES: usize = 5;
/// Pairs synthesized per style study unless overridden.
pub const DEFAULT_PAIRS: usize = 50;
/// Insertion points every style template carries exactly once.
pub const STYLE_PLACEHOLDERS: [(&str, Dimension); 3] = [
    ("{visual}", Dimension::Visual),
    ("{audio}", Dimension::Audio),
    ("{global}", Dimension::Global),
];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("a sweep needs exactly {SWEEP_TEMPLATES} templates, got {0}")]
    TemplateCount(usize),
    #[error("duplicate template id {0:?}")]
    DuplicateTemplate(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("extraction failed for sample {sample:?} under template {template:?}: {source}")]
    Extraction {
        sample: String,
        template: String,
        source: ExtractError,
    },
    #[error("scoring under template {template:?}: {source}")]
    Scoring { template: String, source: MetricError },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    TextMetric(#[from] TextMetricError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Cue(#[from] CueError),
    #[error("style template {index} must contain {placeholder} exactly once")]
    Placeholder { index: usize, placeholder: &'static str },
    #[error("at least two style templates are required, got {0}")]
    TooFewStyles(usize),
    #[error("cue pool is empty")]
    EmptyPool,
    #[error("n_pairs must be at least 1")]
    ZeroPairs,
    #[error("no pairs to compare")]
    NoPairs,
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Population std and range of P, R and F1 across templates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub p_std: f64,
    pub r_std: f64,
    pub f1_std: f64,
    pub p_range: f64,
    pub r_range: f64,
    pub f1_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub per_template: BTreeMap<String, BTreeMap<Dimension, DimensionScore>>,
    /// Only dimensions scored under every template appear here.
    pub dispersion: BTreeMap<Dimension, Dispersion>,
}

fn bounded_pool(jobs: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))
}

fn extract_or_empty(
    extractor: &dyn CueExtractor,
    text: &str,
    template: &PromptTemplate,
    sample: &str,
) -> Result<CueSet, HarnessError> {
    // an absent description has no cues; no extractor call is made
    if text.trim().is_empty() {
        return Ok(CueSet::empty());
    }
    extractor
        .extract(text, template)
        .map(|r| r.cues)
        .map_err(|source| HarnessError::Extraction {
            sample: sample.to_string(),
            template: template.id().to_string(),
            source,
        })
}

/// Fill every missing cue block of `corpus` by running `extractor` under
/// `template`. Cue blocks already present are kept as given.
pub fn extract_corpus(
    corpus: &Corpus,
    extractor: &dyn CueExtractor,
    template: &PromptTemplate,
    jobs: usize,
) -> Result<Corpus, HarnessError> {
    let filled: Vec<Result<EvalSample, HarnessError>> = bounded_pool(jobs)?.install(|| {
        corpus
            .samples()
            .par_iter()
            .map(|s| {
                let mut out = s.clone();
                if out.candidate_cues.is_none() {
                    out.candidate_cues = Some(extract_or_empty(extractor, &s.candidate_text, template, &s.id)?);
                }
                if out.reference_cues.is_none() {
                    out.reference_cues = Some(extract_or_empty(extractor, &s.reference_text, template, &s.id)?);
                }
                Ok(out)
            })
            .collect()
    });
    Ok(Corpus::new(filled.into_iter().collect::<Result<Vec<_>, _>>()?)?)
}

/// Re-extract both sides of every sample under each template, score each
/// resulting corpus, and summarize the spread. Any extraction failure aborts
/// the whole sweep.
pub fn run_template_sweep(
    corpus: &Corpus,
    templates: &[PromptTemplate],
    extractor: &dyn CueExtractor,
    embedder: &Embedder,
    jobs: usize,
) -> Result<SweepResult, HarnessError> {
    if templates.len() != SWEEP_TEMPLATES {
        return Err(HarnessError::TemplateCount(templates.len()));
    }
    let mut ids = BTreeSet::new();
    for t in templates {
        if !ids.insert(t.id()) {
            return Err(HarnessError::DuplicateTemplate(t.id().to_string()));
        }
    }
    if corpus.is_empty() {
        return Err(HarnessError::EmptyCorpus);
    }

    let work: Vec<(&PromptTemplate, &EvalSample)> = templates
        .iter()
        .flat_map(|t| corpus.samples().iter().map(move |s| (t, s)))
        .collect();
    let extracted: Vec<Result<EvalSample, HarnessError>> = bounded_pool(jobs)?.install(|| {
        work.par_iter()
            .map(|(t, s)| {
                let mut out = (*s).clone();
                out.candidate_cues = Some(extract_or_empty(extractor, &s.candidate_text, t, &s.id)?);
                out.reference_cues = Some(extract_or_empty(extractor, &s.reference_text, t, &s.id)?);
                Ok(out)
            })
            .collect()
    });
    let mut extracted = extracted.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter();

    let mut per_template = BTreeMap::new();
    for t in templates {
        let samples: Vec<EvalSample> = extracted.by_ref().take(corpus.len()).collect();
        let report =
            score_corpus(&Corpus::new(samples)?, embedder, t.id()).map_err(|source| HarnessError::Scoring {
                template: t.id().to_string(),
                source,
            })?;
        let scores: BTreeMap<Dimension, DimensionScore> = report
            .corpus
            .into_iter()
            .filter_map(|(d, s)| s.map(|s| (d, s)))
            .collect();
        per_template.insert(t.id().to_string(), scores);
    }
    let dispersion = dispersion_of(&per_template)?;
    Ok(SweepResult {
        per_template,
        dispersion,
    })
}

/// Spread of per-template scores, in sorted template order.
pub fn dispersion_of(
    per_template: &BTreeMap<String, BTreeMap<Dimension, DimensionScore>>,
) -> Result<BTreeMap<Dimension, Dispersion>, HarnessError> {
    let mut out = BTreeMap::new();
    for dim in Dimension::ALL {
        let scores: Option<Vec<&DimensionScore>> = per_template.values().map(|m| m.get(&dim)).collect();
        let Some(scores) = scores.filter(|s| !s.is_empty()) else {
            continue;
        };
        let series = |f: fn(&DimensionScore) -> f64| scores.iter().map(|s| f(s)).collect::<Vec<_>>();
        let (p_std, p_range) = population_std_and_range(&series(|s| s.precision))?;
        let (r_std, r_range) = population_std_and_range(&series(|s| s.recall))?;
        let (f1_std, f1_range) = population_std_and_range(&series(|s| s.f1))?;
        out.insert(
            dim,
            Dispersion {
                p_std,
                r_std,
                f1_std,
                p_range,
                r_range,
                f1_range,
            },
        );
    }
    Ok(out)
}

/// How the cues of the two texts in a pair relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    /// Both texts carry exactly the planted cues.
    #[default]
    Identical,
    /// Both carry the planted cues; each may add one distinct extra cue per
    /// dimension.
    Overlapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylePair {
    pub text_a: String,
    pub text_b: String,
    pub planted_cues: CueSet,
    pub seed: u64,
}

/// A validated style template with `{visual}`, `{audio}` and `{global}`
/// insertion points.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleTemplate {
    id: String,
    body: String,
}

impl StyleTemplate {
    pub fn new(id: impl Into<String>, body: impl Into<String>, index: usize) -> Result<Self, HarnessError> {
        let body = body.into();
        for (placeholder, _) in STYLE_PLACEHOLDERS {
            if body.matches(placeholder).count() != 1 {
                return Err(HarnessError::Placeholder { index, placeholder });
            }
        }
        Ok(StyleTemplate { id: id.into(), body })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    fn render(&self, sections: &BTreeMap<Dimension, Vec<&str>>) -> String {
        let mut out = self.body.clone();
        for (placeholder, dim) in STYLE_PLACEHOLDERS {
            let joined = sections.get(&dim).map(|c| c.join("; ")).unwrap_or_default();
            out = out.replacen(placeholder, &joined, 1);
        }
        out
    }
}

const DEFAULT_STYLES: [(&str, &str); 5] = [
    ("s1_clinical", include_str!("../templates/style/s1_clinical.txt")),
    ("s2_narrative", include_str!("../templates/style/s2_narrative.txt")),
    ("s3_terse", include_str!("../templates/style/s3_terse.txt")),
    ("s4_casual", include_str!("../templates/style/s4_casual.txt")),
    ("s5_formal", include_str!("../templates/style/s5_formal.txt")),
];
const DEFAULT_POOL: &str = include_str!("../templates/style/cue_pool.json");

/// Bundled style templates; their prose preambles share no wording.
pub fn default_style_templates() -> Vec<StyleTemplate> {
    DEFAULT_STYLES
        .iter()
        .enumerate()
        .map(|(i, (id, body))| StyleTemplate::new(*id, *body, i).expect("bundled style template is valid"))
        .collect()
}

pub fn default_cue_pool() -> CueSet {
    serde_json::from_str(DEFAULT_POOL).expect("bundled cue pool is valid")
}

/// Every `*.txt` in `dir` as a style template, ordered by file name.
pub fn load_style_templates(dir: &Path) -> Result<Vec<StyleTemplate>, HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            StyleTemplate::new(id, fs::read_to_string(p).map_err(io)?, i)
        })
        .collect()
}

pub fn load_cue_pool(path: &Path) -> Result<CueSet, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Seed of pair `i` in a run seeded with `seed`.
fn pair_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

/// Draw `n_pairs` cue subsets from `pool` and render each into two distinct
/// style templates. Pair `i` depends only on `(pool, templates, mode, seed + i)`.
pub fn synthesize_style_pairs(
    pool: &CueSet,
    templates: &[StyleTemplate],
    n_pairs: usize,
    seed: u64,
    mode: PairMode,
) -> Result<Vec<StylePair>, HarnessError> {
    if pool.is_empty() {
        return Err(HarnessError::EmptyPool);
    }
    if templates.len() < 2 {
        return Err(HarnessError::TooFewStyles(templates.len()));
    }
    if n_pairs == 0 {
        return Err(HarnessError::ZeroPairs);
    }
    (0..n_pairs)
        .map(|i| synthesize_one(pool, templates, pair_seed(seed, i), mode))
        .collect()
}

fn synthesize_one(
    pool: &CueSet,
    templates: &[StyleTemplate],
    seed: u64,
    mode: PairMode,
) -> Result<StylePair, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, templates.len(), 2);
    let (ta, tb) = (&templates[picked.index(0)], &templates[picked.index(1)]);

    let mut planted: BTreeMap<Dimension, Vec<&str>> = BTreeMap::new();
    let mut extra_a: BTreeMap<Dimension, Vec<&str>> = BTreeMap::new();
    let mut extra_b: BTreeMap<Dimension, Vec<&str>> = BTreeMap::new();
    for dim in Dimension::ALL {
        let cues: Vec<&str> = pool.get(dim).iter().map(|c| c.text()).collect();
        if cues.is_empty() {
            continue;
        }
        let k = rng.random_range(1..=cues.len().min(3));
        let order = index::sample(&mut rng, cues.len(), cues.len()).into_vec();
        planted.insert(dim, order[..k].iter().map(|&j| cues[j]).collect());
        if mode == PairMode::Overlapping {
            let rest = &order[k..];
            if let Some(&j) = rest.first() {
                extra_a.insert(dim, vec![cues[j]]);
            }
            if let Some(&j) = rest.get(1) {
                extra_b.insert(dim, vec![cues[j]]);
            }
        }
    }

    let sections_a = shuffled_sections(&planted, &extra_a, &mut rng);
    let sections_b = shuffled_sections(&planted, &extra_b, &mut rng);

    let get = |d: Dimension| planted.get(&d).cloned().unwrap_or_default();
    Ok(StylePair {
        text_a: ta.render(&sections_a),
        text_b: tb.render(&sections_b),
        planted_cues: CueSet::new(get(Dimension::Visual), get(Dimension::Audio), get(Dimension::Global))?,
        seed,
    })
}

fn shuffled_sections<'a>(
    planted: &BTreeMap<Dimension, Vec<&'a str>>,
    extra: &BTreeMap<Dimension, Vec<&'a str>>,
    rng: &mut ChaCha8Rng,
) -> BTreeMap<Dimension, Vec<&'a str>> {
    let mut sections = BTreeMap::new();
    for (dim, cues) in planted {
        let mut all = cues.clone();
        all.extend(extra.get(dim).into_iter().flatten());
        all.shuffle(rng);
        sections.insert(*dim, all);
    }
    sections
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub seed: u64,
    pub bleu1: f64,
    pub bleu4: f64,
    pub cider: f64,
    pub emocue_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub pairs: Vec<PairMetrics>,
    pub mean_bleu1: f64,
    pub mean_bleu4: f64,
    pub mean_cider: f64,
    pub mean_emocue_f1: f64,
    /// Cue-level F1 exceeds BLEU-1, BLEU-4 and CIDEr/10 on average.
    pub emocue_exceeds_ngram: bool,
}

/// Mean F1 over non-vacuous dimensions; 1 when every dimension is vacuous.
fn pair_f1(scores: &BTreeMap<Dimension, Option<DimensionScore>>) -> f64 {
    let f1s: Vec<f64> = scores.values().flatten().filter(|s| !s.vacuous).map(|s| s.f1).collect();
    mean(&f1s).unwrap_or(1.0)
}

/// Score `text_b` against `text_a` with the n-gram baselines and with cue F1.
/// CIDEr document frequencies are taken over every pair's `text_a`.
pub fn compare_metrics_on_pairs(
    pairs: &[StylePair],
    extractor: &dyn CueExtractor,
    template: &PromptTemplate,
    embedder: &Embedder,
) -> Result<PairComparison, HarnessError> {
    if pairs.is_empty() {
        return Err(HarnessError::NoPairs);
    }
    let refs: Vec<_> = pairs.iter().map(|p| tokenize(&p.text_a)).collect();
    let cands: Vec<_> = pairs.iter().map(|p| tokenize(&p.text_b)).collect();
    let docs: Vec<_> = refs.iter().map(|r| vec![r.clone()]).collect();
    let stats = DocumentFrequency::build(&docs);

    let mut rows = Vec::with_capacity(pairs.len());
    for (i, pair) in pairs.iter().enumerate() {
        let id = format!("pair-{i}");
        let refs_i = std::slice::from_ref(&refs[i]);
        let sample = EvalSample {
            id: id.clone(),
            supported_dimensions: Dimension::ALL.into_iter().collect(),
            candidate_text: pair.text_b.clone(),
            reference_text: pair.text_a.clone(),
            candidate_cues: Some(extract_or_empty(extractor, &pair.text_b, template, &id)?),
            reference_cues: Some(extract_or_empty(extractor, &pair.text_a, template, &id)?),
        };
        let mut texts: Vec<String> = Vec::new();
        for cues in [&sample.candidate_cues, &sample.reference_cues].into_iter().flatten() {
            texts.extend(cues.iter().map(|(_, c)| c.text().to_string()));
        }
        let embeddings = texts
            .iter()
            .zip(embedder.embed_many(&texts)?)
            .map(|(t, e)| (cue_key(t), e.vector))
            .collect();
        rows.push(PairMetrics {
            seed: pair.seed,
            bleu1: bleu(&cands[i], refs_i, 1)?.score,
            bleu4: bleu(&cands[i], refs_i, 4)?.score,
            cider: cider(&cands[i], refs_i, &stats)?,
            emocue_f1: pair_f1(&score_sample(&sample, &embeddings)?),
        });
    }
    let avg = |f: fn(&PairMetrics) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    let (mean_bleu1, mean_bleu4, mean_cider, mean_emocue_f1) = (
        avg(|r| r.bleu1),
        avg(|r| r.bleu4),
        avg(|r| r.cider),
        avg(|r| r.emocue_f1),
    );
    Ok(PairComparison {
        emocue_exceeds_ngram: mean_emocue_f1 > mean_bleu1.max(mean_bleu4).max(mean_cider / 10.0),
        pairs: rows,
        mean_bleu1,
        mean_bleu4,
        mean_cider,
        mean_emocue_f1,
    })
}
