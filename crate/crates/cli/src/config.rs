use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, ValueEnum};
use serde::Deserialize;

use crate::failure::Failure;

pub const DEFAULT_SEED: u64 = 0x5eed_2026;
pub const DEFAULT_EMBED_DIM: usize = 384;
pub const DEFAULT_OUT: &str = "emocue-out";
const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
const DEFAULT_LLM_MODEL: &str = "gpt-4o-mini";
const DEFAULT_EMBED_MODEL: &str = "text-embedding-3-small";
const DEFAULT_TIMEOUT_SECS: u64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderChoice {
    Remote,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorChoice {
    Llm,
    Structured,
}

/// Options shared by every subcommand. Flags win over environment
/// variables, which win over the config file.
#[derive(Debug, Default, Args)]
pub struct GlobalArgs {
    /// TOML file supplying defaults for any option below
    #[arg(long, global = true, env = "EMOCUE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Corpus JSONL
    #[arg(long, global = true, env = "EMOCUE_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// Directory of extraction prompt templates (*.txt)
    #[arg(long, global = true, env = "EMOCUE_TEMPLATES")]
    pub templates: Option<PathBuf>,
    #[arg(long, global = true, env = "EMOCUE_EMBEDDER", value_enum)]
    pub embedder: Option<EmbedderChoice>,
    #[arg(long, global = true, env = "EMOCUE_EMBED_MODEL")]
    pub embed_model: Option<String>,
    #[arg(long, global = true, env = "EMOCUE_EMBED_DIM")]
    pub embed_dim: Option<usize>,
    #[arg(long, global = true, env = "EMOCUE_EMBED_BASE_URL")]
    pub embed_base_url: Option<String>,
    #[arg(long, global = true, env = "EMOCUE_EXTRACTOR", value_enum)]
    pub extractor: Option<ExtractorChoice>,
    #[arg(long, global = true, env = "EMOCUE_LLM_BASE_URL")]
    pub llm_base_url: Option<String>,
    #[arg(long, global = true, env = "EMOCUE_LLM_MODEL")]
    pub llm_model: Option<String>,
    /// Extraction and embedding caches [default: <out>/cache]
    #[arg(long, global = true, env = "EMOCUE_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "EMOCUE_SEED")]
    pub seed: Option<u64>,
    /// Upper bound on concurrent extraction and scoring jobs
    #[arg(long, global = true, env = "EMOCUE_JOBS")]
    pub jobs: Option<usize>,
    /// Output directory
    #[arg(long, global = true, env = "EMOCUE_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "EMOCUE_TIMEOUT_SECS")]
    pub timeout_secs: Option<u64>,
    /// Overwrite existing output files
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    corpus: Option<PathBuf>,
    templates: Option<PathBuf>,
    embedder: Option<EmbedderChoice>,
    embed_model: Option<String>,
    embed_dim: Option<usize>,
    embed_base_url: Option<String>,
    extractor: Option<ExtractorChoice>,
    llm_base_url: Option<String>,
    llm_model: Option<String>,
    cache_dir: Option<PathBuf>,
    seed: Option<u64>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
    timeout_secs: Option<u64>,
}

impl FileConfig {
    fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: FileConfig =
            toml::from_str(&text).map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))?;
        // relative paths in the file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: Option<PathBuf>| p.map(|p| if p.is_relative() { base.join(p) } else { p });
        Ok(FileConfig {
            corpus: rebase(cfg.corpus),
            templates: rebase(cfg.templates),
            cache_dir: rebase(cfg.cache_dir),
            out: rebase(cfg.out),
            ..cfg
        })
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub embedder: EmbedderChoice,
    pub embed_model: String,
    pub embed_dim: usize,
    pub embed_base_url: String,
    pub extractor: ExtractorChoice,
    pub llm_base_url: String,
    pub llm_model: String,
    pub cache_dir: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
    pub timeout: Duration,
    pub force: bool,
}

impl RunConfig {
    pub fn resolve(args: GlobalArgs) -> Result<Self, Failure> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let out = args.out.or(file.out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let jobs = args
            .jobs
            .or(file.jobs)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if jobs == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        let embed_dim = args.embed_dim.or(file.embed_dim).unwrap_or(DEFAULT_EMBED_DIM);
        if embed_dim == 0 {
            return Err(Failure::usage("--embed-dim must be at least 1"));
        }
        let cfg = RunConfig {
            corpus: args.corpus.or(file.corpus),
            templates: args.templates.or(file.templates),
            embedder: args.embedder.or(file.embedder).unwrap_or(EmbedderChoice::Remote),
            embed_model: args
                .embed_model
                .or(file.embed_model)
                .unwrap_or_else(|| DEFAULT_EMBED_MODEL.into()),
            embed_dim,
            embed_base_url: args
                .embed_base_url
                .or(file.embed_base_url)
                .unwrap_or_else(|| DEFAULT_BASE_URL.into()),
            extractor: args.extractor.or(file.extractor).unwrap_or(ExtractorChoice::Llm),
            llm_base_url: args
                .llm_base_url
                .or(file.llm_base_url)
                .unwrap_or_else(|| DEFAULT_BASE_URL.into()),
            llm_model: args
                .llm_model
                .or(file.llm_model)
                .unwrap_or_else(|| DEFAULT_LLM_MODEL.into()),
            cache_dir: args.cache_dir.or(file.cache_dir).unwrap_or_else(|| out.join("cache")),
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            jobs,
            out,
            timeout: Duration::from_secs(args.timeout_secs.or(file.timeout_secs).unwrap_or(DEFAULT_TIMEOUT_SECS)),
            force: args.force,
        };
        cfg.check_paths()?;
        Ok(cfg)
    }

    fn check_paths(&self) -> Result<(), Failure> {
        if let Some(t) = &self.templates {
            if !t.is_dir() {
                return Err(Failure::usage(format!(
                    "template directory {} does not exist",
                    t.display()
                )));
            }
        }
        Ok(())
    }

    /// The corpus path, which the calling subcommand requires.
    pub fn corpus_path(&self) -> Result<&Path, Failure> {
        self.corpus
            .as_deref()
            .ok_or_else(|| Failure::usage("--corpus is required"))
    }
}
