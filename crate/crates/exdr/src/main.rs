use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use exdr_core::backend::{Backend, FixtureBackend, HttpBackend, HttpConfig};
use exdr_core::index::{build_index, EvidenceIndex};
use exdr_core::model::{load_corpus, load_dataset};
use exdr_core::pipeline::{parse_modes, read_outcomes, summarize, write_summary, Engine, Mode, RunConfig};
use exdr_core::prompts::PromptSet;
use exdr_core::trigger::{SearchConfig, ThresholdTriple, ThresholdsFile};
use exdr_core::{Execution, SupportLexicons};

#[derive(Parser)]
#[command(name = "exdr", version, about = "Explanation-driven dynamic retrieval for image-text claim verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the evidence index from an annotated corpus.
    Index(IndexArgs),
    /// Search trigger thresholds on a labeled validation set.
    Tune(TuneArgs),
    /// Verify a dataset and write summary.json and outcomes.jsonl.
    Run(RunArgs),
    /// Recompute summary metrics from an outcomes file.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Http,
    Fixture,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "http")]
    backend: BackendKind,
    /// Fixture file (JSON lines) for `--backend fixture`.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long, env = "EXDR_BACKEND_URL", default_value = "http://127.0.0.1:8080")]
    backend_url: String,
    /// Worker threads; 1 runs sequentially, 0 lets the pool decide.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl BackendArgs {
    fn open(&self) -> Result<Box<dyn Backend>> {
        Ok(match self.backend {
            BackendKind::Http => Box::new(HttpBackend::new(HttpConfig::new(&self.backend_url))?),
            BackendKind::Fixture => {
                let path = self.fixtures.as_ref().context("--backend fixture needs --fixtures PATH")?;
                Box::new(FixtureBackend::load(path).with_context(|| format!("loading fixtures {}", path.display()))?)
            }
        })
    }

    fn exec(&self) -> Execution {
        if self.jobs == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Prebuilt index; built in memory from the corpus when omitted.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k_vote: usize,
    #[arg(long, default_value_t = 10)]
    k_tok: usize,
    /// Use the fixed "real"/"fake" wording for the two evidence examples.
    #[arg(long)]
    prompt3_literal: bool,
    /// Directory holding prompt2.txt and/or prompt3.txt overrides.
    #[arg(long)]
    prompt_dir: Option<PathBuf>,
    /// JSON file with custom support lexicons.
    #[arg(long)]
    lexicons: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    n_iter: usize,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, conflicts_with = "modes")]
    mode: Option<String>,
    /// Comma-separated, e.g. `no,full,dynamic`; the plain pass is shared.
    #[arg(long)]
    modes: Option<String>,
    /// thresholds.json from `exdr tune`.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Accepted for symmetry with `tune`; inference is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// outcomes.jsonl written by `exdr run`.
    #[arg(long)]
    outcomes: PathBuf,
    /// Where to write the summary; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_index(path: &Path) -> Result<EvidenceIndex> {
    EvidenceIndex::load(path).with_context(|| format!("loading index {}", path.display()))
}

struct Loaded {
    backend: Box<dyn Backend>,
    corpus: Vec<exdr_core::CorpusEntry>,
    index: EvidenceIndex,
    cfg: RunConfig,
}

fn load_engine_parts(a: &EngineArgs, modes: Vec<Mode>, thresholds: Option<ThresholdTriple>) -> Result<Loaded> {
    let backend = a.backend.open()?;
    let corpus = load_corpus(&a.corpus).with_context(|| format!("loading corpus {}", a.corpus.display()))?;
    let index = match &a.index {
        Some(p) => load_index(p)?,
        None => build_index(&corpus, backend.as_ref(), a.backend.exec())?,
    };
    let prompts = match &a.prompt_dir {
        Some(d) => PromptSet::from_dir(d)?,
        None => PromptSet::default(),
    };
    let lexicons = match &a.lexicons {
        Some(p) => SupportLexicons::from_json_file(p)?,
        None => SupportLexicons::default(),
    };
    let cfg = RunConfig {
        modes,
        thresholds,
        k_vote: a.k_vote,
        k_tok: a.k_tok,
        prompt3_literal: a.prompt3_literal,
        prompts,
        lexicons,
        exec: a.backend.exec(),
        jobs: a.backend.jobs,
    };
    Ok(Loaded { backend, corpus, index, cfg })
}

fn cmd_index(a: IndexArgs) -> Result<()> {
    let backend = a.backend.open()?;
    let corpus = load_corpus(&a.corpus).with_context(|| format!("loading corpus {}", a.corpus.display()))?;
    let idx = a.backend.exec().with_jobs(a.backend.jobs, || build_index(&corpus, backend.as_ref(), a.backend.exec()))?;
    idx.save(&a.out)?;
    eprintln!("indexed {} entries (dim {}) -> {}", idx.records.len(), idx.dim(), a.out.display());
    Ok(())
}

fn cmd_tune(a: TuneArgs) -> Result<()> {
    let samples = load_dataset(&a.val).with_context(|| format!("loading {}", a.val.display()))?;
    let parts = load_engine_parts(&a.engine, vec![Mode::FullRag], None)?;
    let engine = Engine::new(parts.backend.as_ref(), &parts.cfg, Some(&parts.index), &parts.corpus)?;
    let search = SearchConfig { n_iter: a.n_iter, seed: a.seed, ..SearchConfig::default() };
    let tuned = engine.tune(&samples, &search)?;
    for (id, err) in &tuned.failures {
        eprintln!("skipped {id}: {err}");
    }
    tuned.thresholds.save(&a.out)?;
    eprintln!(
        "val score {}/{} with {} triggers -> {}",
        tuned.result.best.score,
        tuned.cache.len(),
        tuned.result.best.triggers,
        a.out.display()
    );
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let modes = match (&a.mode, &a.modes) {
        (Some(m), None) | (None, Some(m)) => parse_modes(m)?,
        _ => vec![Mode::DynamicRag],
    };
    let thresholds = match &a.thresholds {
        Some(p) => Some(ThresholdsFile::load(p).with_context(|| format!("loading {}", p.display()))?.thresholds()),
        None => None,
    };
    if modes.contains(&Mode::DynamicRag) && thresholds.is_none() {
        bail!("dynamic mode needs --thresholds");
    }
    let samples = load_dataset(&a.data).with_context(|| format!("loading {}", a.data.display()))?;
    let parts = load_engine_parts(&a.engine, modes, thresholds)?;
    let engine = Engine::new(parts.backend.as_ref(), &parts.cfg, Some(&parts.index), &parts.corpus)?;
    let report = engine.run(&samples)?;
    report.write(&a.out)?;
    let s = &report.summary;
    eprintln!(
        "{} samples, {} evaluated, {} failed -> {}",
        s.n_samples,
        s.n_evaluated,
        s.n_failed,
        a.out.display()
    );
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let outcomes = read_outcomes(&a.outcomes)?;
    let summary = summarize(&outcomes)?;
    match &a.out {
        Some(p) => write_summary(p, &summary)?,
        None => println!("{}", serde_json::to_string_pretty(&summary.to_json())?),
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Index(a) => cmd_index(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
    }
}
