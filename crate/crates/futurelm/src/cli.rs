//! Command-line driver: ingest/synthesize corpora, train biased models,
//! build year embeddings, evaluate, generate, and export count series.

use crate::bias::encoder::{FineTuneConfig, FineTunedEncoders};
use crate::bias::{attach, build_year_embeddings, BiasHead, HeadResources, YearWordEmbeddings};
use crate::corpus::{
    curate_stopwords, frequency_table, ingest_bibtex, ingest_jsonl, split_by_year, StopwordList,
    TemporalCorpus, Vocabulary,
};
use crate::error::{Error, Result};
use crate::lm::config::{DecoderConfig, DecodingConfig, TrainConfig};
use crate::lm::provider::{BiasProvider, ZeroBias};
use crate::lm::{generate, train, DecoderLM};
use crate::metrics::{evaluate, ContentMeteorConfig, EvalOptions};
use crate::numerics::checkpoint::{self, Checkpoint};
use crate::synth::{export_frequency_csv, generate_drift_corpus, DriftSpec, TrendLabels};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabConfig {
    pub max_size: usize,
    pub min_count: u64,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            max_size: 5000,
            min_count: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StopwordConfig {
    /// Corpus-wide count above which a word becomes a stopword candidate.
    pub threshold: u64,
    /// Optional override file with `+word` / `-word` lines.
    pub override_file: Option<PathBuf>,
}

impl Default for StopwordConfig {
    fn default() -> Self {
        StopwordConfig {
            threshold: 100,
            override_file: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Explicit training years; default is all dataset years except the
    /// last two.
    pub train_years: Option<Vec<i32>>,
    pub dev_year: Option<i32>,
    pub test_year: Option<i32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MeteorSettings {
    /// Generated documents per evaluation.
    pub n_g: usize,
}

impl Default for MeteorSettings {
    fn default() -> Self {
        MeteorSettings { n_g: 20 }
    }
}

/// One configuration file drives every command; unset sections fall back
/// to defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolConfig {
    pub vocab: VocabConfig,
    pub model: DecoderConfig,
    pub train: TrainConfig,
    pub decode: DecodingConfig,
    pub head: Option<BiasHead>,
    pub stopwords: StopwordConfig,
    pub fine_tune: FineTuneConfig,
    pub split: SplitConfig,
    pub synth: Option<DriftSpec>,
    pub meteor: MeteorSettings,
}

impl ToolConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        format!("{:x}", h.finalize())
    }
}

#[derive(Parser, Debug)]
#[command(name = "futurelm", about = "Future language modeling toolkit", version)]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Read JSONL or bibliography files into a year-sliced dataset.
    Ingest {
        /// Input files; `.jsonl`/`.ndjson` or `.bib` by extension.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// JSONL field holding the integer year.
        #[arg(long, default_value = "year")]
        year_field: String,
    },
    /// Generate a synthetic drift dataset.
    Synth,
    /// Train a model (optionally with a temporal bias head) on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Year-embedding file, required by contextual and gated heads.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Build per-year word embeddings from year-fine-tuned encoders.
    BuildEmbeddings {
        #[arg(long)]
        dataset: PathBuf,
        /// Base model checkpoint to fine-tune per year.
        #[arg(long)]
        model: PathBuf,
    },
    /// Evaluate a checkpoint on the dataset's test year.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Also run generation-based content scoring.
        #[arg(long)]
        generation: bool,
    },
    /// Generate documents for a target year.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        year: i32,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Dataset, needed when the checkpoint has a frequency head.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Export per-year counts for chosen words as CSV.
    FreqCsv {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated word list.
        #[arg(long)]
        words: String,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetFile {
    format_version: u32,
    config_digest: String,
    stats: serde_json::Value,
    labels: Option<TrendLabels>,
    corpus: TemporalCorpus,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitMeta {
    train_years: Vec<i32>,
    dev_year: i32,
    test_year: i32,
}

#[derive(Debug, Serialize, Deserialize)]
struct CkptMeta {
    format_version: u32,
    config_digest: String,
    model: DecoderConfig,
    head: Option<BiasHead>,
    vocab: Vocabulary,
    split: SplitMeta,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn load_dataset(path: &Path) -> Result<DatasetFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let ds: DatasetFile = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("bad dataset {}: {e}", path.display())))?;
    if ds.format_version != ARTIFACT_VERSION {
        return Err(Error::Format(format!(
            "dataset format version {} not supported",
            ds.format_version
        )));
    }
    Ok(ds)
}

fn resolve_split(cfg: &SplitConfig, corpus: &TemporalCorpus) -> Result<SplitMeta> {
    let populated: Vec<i32> = corpus
        .docs_by_year
        .iter()
        .filter(|(_, d)| !d.is_empty())
        .map(|(&y, _)| y)
        .collect();
    if populated.len() < 3 {
        return Err(Error::Config(format!(
            "dataset has {} populated years; need at least 3 for train/dev/test",
            populated.len()
        )));
    }
    let test_year = cfg.test_year.unwrap_or(populated[populated.len() - 1]);
    let dev_year = cfg.dev_year.unwrap_or(populated[populated.len() - 2]);
    let train_years = cfg.train_years.clone().unwrap_or_else(|| {
        populated
            .iter()
            .copied()
            .filter(|&y| y != dev_year && y != test_year)
            .collect()
    });
    Ok(SplitMeta {
        train_years,
        dev_year,
        test_year,
    })
}

fn make_split(
    corpus: &TemporalCorpus,
    split: &SplitMeta,
    vocab_cfg: &VocabConfig,
) -> Result<(TemporalCorpus, TemporalCorpus, TemporalCorpus)> {
    let years: BTreeSet<i32> = split.train_years.iter().copied().collect();
    split_by_year(
        corpus,
        &years,
        split.dev_year,
        split.test_year,
        vocab_cfg.max_size,
        vocab_cfg.min_count,
    )
}

fn head_needs_embeddings(head: &BiasHead) -> bool {
    matches!(
        head,
        BiasHead::Contextual(_) | BiasHead::FrequencyContextual { .. } | BiasHead::Gated(_)
    )
}

fn head_needs_freq(head: &BiasHead) -> bool {
    matches!(
        head,
        BiasHead::Frequency(_) | BiasHead::FrequencyContextual { .. }
    )
}

fn stopwords_for(
    train_slice: &TemporalCorpus,
    vocab: &Vocabulary,
    cfg: &StopwordConfig,
) -> Result<StopwordList> {
    let freq = frequency_table(train_slice)?;
    let overrides = match &cfg.override_file {
        Some(p) => Some(std::fs::read_to_string(p)?),
        None => None,
    };
    let (sw, warnings) = curate_stopwords(&freq, vocab, cfg.threshold, overrides.as_deref())?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(sw)
}

/// Run one parsed invocation. Returns the process exit code path through
/// the error type; callers map errors via [`Error::exit_code`].
pub fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => ToolConfig::load(p)?,
        None => ToolConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
        config.decode.seed = seed;
        config.fine_tune.seed = seed;
        if let Some(s) = config.synth.as_mut() {
            s.seed = seed;
        }
    }
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Ingest { input, year_field } => cmd_ingest(&cli, &config, input, year_field),
        Command::Synth => cmd_synth(&cli, &config),
        Command::Train {
            dataset,
            embeddings,
        } => cmd_train(&cli, &config, dataset, embeddings.as_deref()),
        Command::BuildEmbeddings { dataset, model } => {
            cmd_build_embeddings(&cli, &config, dataset, model)
        }
        Command::Eval {
            dataset,
            model,
            embeddings,
            generation,
        } => cmd_eval(&cli, &config, dataset, model, embeddings.as_deref(), *generation),
        Command::Generate {
            model,
            year,
            count,
            dataset,
            embeddings,
        } => cmd_generate(
            &cli,
            &config,
            model,
            *year,
            *count,
            dataset.as_deref(),
            embeddings.as_deref(),
        ),
        Command::FreqCsv { dataset, words } => cmd_freq_csv(&cli, &config, dataset, words),
    }
}

fn write_dataset(
    cli: &Cli,
    config: &ToolConfig,
    corpus: TemporalCorpus,
    labels: Option<TrendLabels>,
    stats: serde_json::Value,
) -> Result<()> {
    let ds = DatasetFile {
        format_version: ARTIFACT_VERSION,
        config_digest: config.digest(),
        stats,
        labels,
        corpus,
    };
    write_json(&cli.out.join("dataset.json"), &ds)?;
    write_json(&cli.out.join("resolved_config.json"), config)?;
    println!("wrote {}", cli.out.join("dataset.json").display());
    Ok(())
}

fn cmd_ingest(
    cli: &Cli,
    config: &ToolConfig,
    inputs: &[PathBuf],
    year_field: &str,
) -> Result<()> {
    let mut all_docs = Vec::new();
    let mut documents = 0usize;
    let mut skipped = 0usize;
    let mut dropped = 0usize;
    for path in inputs {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let (corpus, stats) = match ext {
            "jsonl" | "ndjson" | "json" => ingest_jsonl(path, year_field)?,
            "bib" | "bibtex" => ingest_bibtex(path)?,
            other => {
                return Err(Error::Ingest(format!(
                    "unsupported input extension {other:?} for {}",
                    path.display()
                )))
            }
        };
        documents += stats.documents;
        skipped += stats.skipped;
        dropped += stats.dropped_non_english;
        all_docs.extend(corpus.docs_by_year.into_values().flatten());
    }
    if skipped > 0 || dropped > 0 {
        eprintln!("warning: skipped {skipped} entries, dropped {dropped} non-English entries");
    }
    let corpus = TemporalCorpus::from_documents(all_docs);
    let stats = serde_json::json!({
        "documents": documents,
        "skipped": skipped,
        "dropped_non_english": dropped,
        "years": corpus.years,
    });
    write_dataset(cli, config, corpus, None, stats)
}

fn cmd_synth(cli: &Cli, config: &ToolConfig) -> Result<()> {
    let spec = config
        .synth
        .clone()
        .unwrap_or_else(|| DriftSpec::default_acceptance(config.train.seed));
    let (corpus, labels) = generate_drift_corpus(&spec)?;
    let stats = serde_json::json!({
        "documents": corpus.doc_count(),
        "years": corpus.years,
        "rising": labels.rising.len(),
        "falling": labels.falling.len(),
        "stable": labels.stable.len(),
    });
    write_dataset(cli, config, corpus, Some(labels), stats)
}

fn cmd_train(
    cli: &Cli,
    config: &ToolConfig,
    dataset: &Path,
    embeddings: Option<&Path>,
) -> Result<()> {
    let ds = load_dataset(dataset)?;
    let split = resolve_split(&config.split, &ds.corpus)?;
    let (train_slice, dev_slice, _test) = make_split(&ds.corpus, &split, &config.vocab)?;
    let vocab = train_slice.vocabulary.clone().unwrap();
    let mut model_cfg = config.model.clone();
    model_cfg.vocab_size = vocab.size();
    let mut model = DecoderLM::new(model_cfg.clone(), config.train.seed)?;

    let freq = frequency_table(&train_slice)?;
    let emb = match (&config.head, embeddings) {
        (Some(h), Some(p)) if head_needs_embeddings(h) => Some(YearWordEmbeddings::load(p)?),
        (Some(h), None) if head_needs_embeddings(h) => {
            return Err(Error::Config(
                "this head needs --embeddings (run build-embeddings first)".into(),
            ))
        }
        _ => None,
    };
    if let Some(h) = &config.head {
        let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed ^ 0x6865_6164);
        h.init_params(&mut model.params, &mut rng)?;
    }
    let res = HeadResources {
        freq: Some(&freq),
        embeddings: emb.as_ref(),
    };
    let outcome = train(
        &mut model,
        config.head.as_ref(),
        &res,
        &train_slice,
        &dev_slice,
        &config.train,
    )?;

    let mut log = std::fs::File::create(cli.out.join("train_log.ndjson"))?;
    for rec in &outcome.log {
        writeln!(log, "{}", serde_json::to_string(rec).unwrap())?;
    }
    let meta = CkptMeta {
        format_version: ARTIFACT_VERSION,
        config_digest: config.digest(),
        model: model_cfg,
        head: config.head.clone(),
        vocab,
        split,
    };
    checkpoint::save(
        &cli.out.join("model.ckpt"),
        &Checkpoint {
            digest: config.digest(),
            meta: serde_json::to_value(&meta).map_err(|e| Error::Format(e.to_string()))?,
            params: model.params.clone(),
            adam: None,
        },
    )?;
    write_json(&cli.out.join("resolved_config.json"), config)?;
    println!(
        "wrote {} (best dev ppl {:.4} at epoch {})",
        cli.out.join("model.ckpt").display(),
        outcome.best_dev_ppl,
        outcome.best_epoch
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<(DecoderLM, CkptMeta)> {
    let ckpt = checkpoint::load(path)?;
    let meta: CkptMeta = serde_json::from_value(ckpt.meta.clone())
        .map_err(|e| Error::Format(format!("bad checkpoint metadata: {e}")))?;
    let model = DecoderLM::from_parts(meta.model.clone(), ckpt.params)?;
    Ok((model, meta))
}

fn cmd_build_embeddings(
    cli: &Cli,
    config: &ToolConfig,
    dataset: &Path,
    model_path: &Path,
) -> Result<()> {
    let ds = load_dataset(dataset)?;
    let (model, meta) = load_model(model_path)?;
    let mut corpus = ds.corpus;
    corpus.retokenize(&meta.vocab);
    let years = meta.split.train_years.clone();
    let encoders = FineTunedEncoders::fine_tune(&model, &corpus, &years, &config.fine_tune)?;
    let emb = build_year_embeddings(&corpus, &encoders, &years)?;
    let out = cli.out.join("embeddings.bin");
    emb.save(&out)?;
    write_json(
        &cli.out.join("embeddings_meta.json"),
        &serde_json::json!({
            "format_version": ARTIFACT_VERSION,
            "config_digest": config.digest(),
            "dim": emb.dim,
            "years": years,
            "entries": emb.entry_count(),
        }),
    )?;
    println!("wrote {} ({} entries)", out.display(), emb.entry_count());
    Ok(())
}

/// Resources + provider setup shared by eval and generate.
struct ProviderParts {
    freq: Option<crate::corpus::FrequencyTable>,
    emb: Option<YearWordEmbeddings>,
}

impl ProviderParts {
    fn build(
        meta: &CkptMeta,
        dataset: Option<&Path>,
        embeddings: Option<&Path>,
        vocab_cfg: &VocabConfig,
    ) -> Result<Self> {
        let Some(head) = &meta.head else {
            return Ok(ProviderParts {
                freq: None,
                emb: None,
            });
        };
        let freq = if head_needs_freq(head) {
            let path = dataset.ok_or_else(|| {
                Error::Config("this checkpoint's head needs --dataset for count history".into())
            })?;
            let ds = load_dataset(path)?;
            let split = SplitMeta {
                train_years: meta.split.train_years.clone(),
                dev_year: meta.split.dev_year,
                test_year: meta.split.test_year,
            };
            let (train_slice, dev_slice, _) = make_split(&ds.corpus, &split, vocab_cfg)?;
            // history may extend through the dev year at prediction time
            let mut freq = frequency_table(&train_slice)?;
            freq.merge(&frequency_table(&dev_slice)?)?;
            Some(freq)
        } else {
            None
        };
        let emb = if head_needs_embeddings(head) {
            let path = embeddings.ok_or_else(|| {
                Error::Config("this checkpoint's head needs --embeddings".into())
            })?;
            Some(YearWordEmbeddings::load(path)?)
        } else {
            None
        };
        Ok(ProviderParts { freq, emb })
    }

    fn resources(&self) -> HeadResources<'_> {
        HeadResources {
            freq: self.freq.as_ref(),
            embeddings: self.emb.as_ref(),
        }
    }
}

fn cmd_eval(
    cli: &Cli,
    config: &ToolConfig,
    dataset: &Path,
    model_path: &Path,
    embeddings: Option<&Path>,
    generation: bool,
) -> Result<()> {
    let ds = load_dataset(dataset)?;
    let (model, meta) = load_model(model_path)?;
    let (train_slice, _dev, test_slice) = make_split(&ds.corpus, &meta.split, &config.vocab)?;
    if train_slice.vocabulary.as_ref() != Some(&meta.vocab) {
        return Err(Error::Contract(
            "dataset vocabulary does not match the checkpoint's vocabulary".into(),
        ));
    }
    let stopwords = stopwords_for(&train_slice, &meta.vocab, &config.stopwords)?;
    let parts = ProviderParts::build(&meta, Some(dataset), embeddings, &config.vocab)?;
    let opts = EvalOptions {
        stopwords,
        content_meteor: if generation {
            Some(ContentMeteorConfig {
                n_g: config.meteor.n_g,
                decoding: config.decode.clone(),
            })
        } else {
            None
        },
        checkpoint_id: meta.config_digest.clone(),
        seed: config.decode.seed,
    };
    let report = match &meta.head {
        Some(h) => {
            let provider = attach(h, &model, parts.resources())?;
            evaluate(&model, &provider, &test_slice, &opts)?
        }
        None => evaluate(&model, &ZeroBias, &test_slice, &opts)?,
    };
    write_json(&cli.out.join("report.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}

fn cmd_generate(
    cli: &Cli,
    config: &ToolConfig,
    model_path: &Path,
    year: i32,
    count: usize,
    dataset: Option<&Path>,
    embeddings: Option<&Path>,
) -> Result<()> {
    let (model, meta) = load_model(model_path)?;
    let parts = ProviderParts::build(&meta, dataset, embeddings, &config.vocab)?;
    let provider: Box<dyn BiasProvider> = match &meta.head {
        Some(h) => Box::new(OwnedProvider::new(h.clone(), model.clone(), parts)?),
        None => Box::new(ZeroBias),
    };
    let mut out = std::fs::File::create(cli.out.join("generations.ndjson"))?;
    for i in 0..count {
        let mut dcfg = config.decode.clone();
        dcfg.seed = config.decode.seed + i as u64;
        let tokens = generate(&model, provider.as_ref(), year, &dcfg)?;
        let text = meta.vocab.decode(&tokens);
        writeln!(
            out,
            "{}",
            serde_json::json!({"year": year, "seed": dcfg.seed, "text": text})
        )?;
        println!("{text}");
    }
    Ok(())
}

/// Self-owning provider bundle so generation can hold the head, model,
/// and resources together.
struct OwnedProvider {
    head: BiasHead,
    model: DecoderLM,
    parts: ProviderParts,
}

impl OwnedProvider {
    fn new(head: BiasHead, model: DecoderLM, parts: ProviderParts) -> Result<Self> {
        // validate eagerly so errors surface before the first generation
        let _ = attach(&head, &model, parts.resources())?;
        Ok(OwnedProvider { head, model, parts })
    }
}

impl BiasProvider for OwnedProvider {
    fn bias_for(&self, year: i32, hidden: &crate::numerics::Tensor) -> Result<crate::lm::Bias> {
        let provider = attach(&self.head, &self.model, self.parts.resources())?;
        provider.bias_for(year, hidden)
    }
}

fn cmd_freq_csv(cli: &Cli, config: &ToolConfig, dataset: &Path, words: &str) -> Result<()> {
    let ds = load_dataset(dataset)?;
    let mut corpus = ds.corpus;
    let vocab = crate::corpus::build_vocab(&corpus, config.vocab.max_size, config.vocab.min_count)?;
    corpus.retokenize(&vocab);
    let freq = frequency_table(&corpus)?;
    let word_list: Vec<String> = words
        .split(',')
        .map(|w| w.trim().to_string())
        .filter(|w| !w.is_empty())
        .collect();
    if word_list.is_empty() {
        return Err(Error::Config("no words given for the count export".into()));
    }
    let path = cli.out.join("frequencies.csv");
    let mut file = std::fs::File::create(&path)?;
    let warnings = export_frequency_csv(&freq, &vocab, &word_list, &mut file)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", path.display());
    Ok(())
}
