//! Command-line front end.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgAction, ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use xlalign_core::ablation::{self, AblationGrid, AblationTask};
use xlalign_core::corpus::{self, BitextPair, BudgetSpec, TokenCounter};
use xlalign_core::mining::{self, CandidateRule, MiningConfig, MiningReport, Threshold};
use xlalign_core::normalize::normalize_matrix;
use xlalign_core::retrieval::{self, EvalSettings, RetrievalSettings, RetrievalTask};
use xlalign_core::similarity::{pooled_tile, Pooling};
use xlalign_core::synthetic::{generate_synthetic_pair, SyntheticCorpusSpec};
use xlalign_core::trainer::{self, TrainerConfig};
use xlalign_core::{NormScope, NormalizationConfig, ScoreMode, ScorerParams, TokenEmbeddingSet};

use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::error::FormatError;
use crate::report;
use crate::run_manifest::{manifest_path, RunManifest};
use crate::store::{load_embeddings, load_pairs, save_embeddings};
use crate::tsv::{self, ManifestRecord};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] FormatError),
}

impl From<xlalign_core::Error> for CliError {
    fn from(e: xlalign_core::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    /// The reader closed stdout early, as `xlalign score ... | head` does.
    pub fn is_broken_pipe(&self) -> bool {
        matches!(self, CliError::Data(FormatError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "xlalign",
    version,
    about = "Cross-lingual sentence scoring, retrieval and mining"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Normalization strength.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub norm_scope: Option<ScopeArg>,
    #[arg(long, global = true)]
    pub tile_size: Option<usize>,
    /// Disable in-batch normalization.
    #[arg(long, global = true)]
    pub no_norm: bool,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "ALIGNER_JOBS")]
    pub jobs: Option<usize>,
    /// Where to write the run manifest.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Pool,
    Tile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Eval,
    Train,
}

impl From<ModeArg> for ScoreMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Eval => ScoreMode::EvalCosine,
            ModeArg::Train => ScoreMode::TrainDot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Bert,
    Avg,
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::Bert => Pooling::BertScore,
            PoolingArg::Avg => Pooling::AvgPoolCosine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Best,
    Mutual,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the (normalized) similarity matrix of two embedding files.
    Score {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "eval")]
        mode: ModeArg,
        /// Print raw scores instead of normalized ones.
        #[arg(long)]
        raw: bool,
    },
    /// Argmax retrieval accuracy over one or more `--src/--tgt/--gold` triples.
    Retrieve {
        #[arg(long, required = true)]
        src: Vec<PathBuf>,
        #[arg(long, required = true)]
        tgt: Vec<PathBuf>,
        #[arg(long, required = true)]
        gold: Vec<PathBuf>,
        /// Pair label per triple; defaults to the sidecar languages.
        #[arg(long)]
        label: Vec<String>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "bert")]
        pooling: PoolingArg,
        #[arg(long, value_enum, default_value = "eval")]
        mode: ModeArg,
        #[arg(long)]
        bidirectional: bool,
        #[arg(long)]
        band_rows: Option<usize>,
        /// JSONL report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract likely translation pairs.
    #[command(group(ArgGroup::new("threshold_choice").required(true).args(["threshold", "sweep"])))]
    Mine {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Choose the F1-maximizing threshold on `--gold`.
        #[arg(long)]
        sweep: bool,
        #[arg(long, value_enum, default_value = "best")]
        rule: RuleArg,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "eval")]
        mode: ModeArg,
        #[arg(long)]
        band_rows: Option<usize>,
        /// Mined pairs as `src_id<TAB>tgt_id<TAB>score`; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON report with the chosen threshold and scores.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit a projection head with the in-batch contrastive objective.
    Train {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Trainer configuration (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build synthetic embeddings or a budgeted bitext corpus.
    #[command(group(ArgGroup::new("source").required(true).args(["synthetic", "pairs"])))]
    PrepareData {
        /// Synthetic corpus description (JSON).
        #[arg(long)]
        synthetic: Option<PathBuf>,
        /// Directory of `<label>.tsv` bitext files.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        budget: usize,
        #[arg(long, default_value_t = 5)]
        min_tokens: usize,
        /// Directory of test sets (`.tsv` bitext or `.txt` one sentence per line).
        #[arg(long)]
        decontaminate: Vec<PathBuf>,
        #[arg(long)]
        top_k: Option<usize>,
        /// Count whitespace-separated words when no token counts are given.
        #[arg(long)]
        whitespace_tokens: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a pooling × normalization × alpha grid.
    Ablate {
        #[arg(long)]
        grid: PathBuf,
        /// One JSON row per cell.
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Score { .. } => "score",
            Command::Retrieve { .. } => "retrieve",
            Command::Mine { .. } => "mine",
            Command::Train { .. } => "train",
            Command::PrepareData { .. } => "prepare-data",
            Command::Ablate { .. } => "ablate",
        }
    }
}

impl GlobalArgs {
    /// Applies the normalization flags on top of `base`.
    pub fn norm(&self, base: NormalizationConfig) -> CliResult<NormalizationConfig> {
        let mut n = base;
        if let Some(a) = self.alpha {
            n.alpha = a;
        }
        if let Some(s) = self.norm_scope {
            n.scope = match s {
                ScopeArg::Pool => NormScope::Pool,
                ScopeArg::Tile => NormScope::Tile,
            };
        }
        if let Some(t) = self.tile_size {
            n.tile_size = t;
        }
        if self.no_norm {
            n.enabled = false;
        }
        n.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(n)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        CliError::Data(FormatError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    })
}

fn load_params(path: Option<&Path>) -> CliResult<Option<ScorerParams>> {
    match path {
        Some(p) => Ok(Some(read_checkpoint(BufReader::new(File::open(p)?))?)),
        None => Ok(None),
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Runs a parsed command, writing user-facing output to `stdout`.
pub fn run<W: Write>(cli: &Cli, stdout: &mut W) -> CliResult<()> {
    let g = &cli.global;
    let mut text = String::new();
    let (mut manifest, primary) = match &cli.command {
        Command::Score {
            src,
            tgt,
            params,
            mode,
            raw,
        } => cmd_score(g, src, tgt, params.as_deref(), *mode, *raw, &mut text)?,
        Command::Retrieve {
            src,
            tgt,
            gold,
            label,
            params,
            pooling,
            mode,
            bidirectional,
            band_rows,
            out,
        } => {
            let opts = RetrieveOpts {
                params: params.as_deref(),
                pooling: (*pooling).into(),
                mode: (*mode).into(),
                bidirectional: *bidirectional,
                band_rows: *band_rows,
                out: out.as_deref(),
            };
            cmd_retrieve(g, src, tgt, gold, label, &opts, &mut text)?
        }
        Command::Mine {
            src,
            tgt,
            gold,
            threshold,
            sweep: _,
            rule,
            params,
            mode,
            band_rows,
            out,
            report,
        } => {
            let opts = MineOpts {
                gold: gold.as_deref(),
                threshold: *threshold,
                rule: *rule,
                params: params.as_deref(),
                mode: (*mode).into(),
                band_rows: *band_rows,
                out: out.as_deref(),
                report: report.as_deref(),
            };
            cmd_mine(g, src, tgt, &opts, &mut text)?
        }
        Command::Train {
            src,
            tgt,
            gold,
            config,
            out,
        } => cmd_train(g, src, tgt, gold, config.as_deref(), out, &mut text)?,
        Command::PrepareData {
            synthetic,
            pairs,
            budget,
            min_tokens,
            decontaminate,
            top_k,
            whitespace_tokens,
            out,
        } => match (synthetic, pairs) {
            (Some(spec), None) => cmd_prepare_synthetic(g, spec, out, &mut text)?,
            (None, Some(dir)) => {
                let opts = PrepareOpts {
                    budget: *budget,
                    min_tokens: *min_tokens,
                    decontaminate,
                    top_k: *top_k,
                    whitespace_tokens: *whitespace_tokens,
                };
                cmd_prepare_pairs(g, dir, &opts, out, &mut text)?
            }
            _ => unreachable!("clap enforces exactly one source"),
        },
        Command::Ablate { grid, out } => cmd_ablate(g, grid, out, &mut text)?,
    };
    stdout.write_all(text.as_bytes())?;
    stdout.flush()?;
    if !text.is_empty() {
        manifest.add_stdout(text.as_bytes());
    }
    let path = manifest_path(
        g.manifest.as_deref(),
        primary.as_deref(),
        cli.command.name(),
    );
    manifest.write(&path)?;
    log::info!("wrote run manifest {}", path.display());
    Ok(())
}

type Outcome = (RunManifest, Option<PathBuf>);

fn cmd_score(
    g: &GlobalArgs,
    src: &Path,
    tgt: &Path,
    params_path: Option<&Path>,
    mode: ModeArg,
    raw: bool,
    text: &mut String,
) -> CliResult<Outcome> {
    use std::fmt::Write as _;
    let norm = g.norm(NormalizationConfig::default())?;
    let params = load_params(params_path)?;
    let a = load_embeddings(src)?;
    let b = load_embeddings(tgt)?;
    let mode: ScoreMode = mode.into();
    let scores = pooled_tile(
        Pooling::BertScore,
        a.entries(),
        b.entries(),
        mode,
        params.as_ref(),
    )?;
    let shown = if raw {
        scores
    } else {
        normalize_matrix(&scores, &norm)?
    };
    for e in b.entries() {
        let _ = write!(text, "\t{}", e.id());
    }
    let _ = writeln!(text);
    for (i, e) in a.entries().iter().enumerate() {
        let _ = write!(text, "{}", e.id());
        for v in shown.row(i) {
            let _ = write!(text, "\t{v:.6}");
        }
        let _ = writeln!(text);
    }
    let config =
        json!({ "norm": norm, "mode": mode, "raw": raw, "params": params_path.map(path_str) });
    let mut manifest = RunManifest::new("score", config, g.seed);
    manifest.add_input(src)?;
    manifest.add_input(tgt)?;
    if let Some(p) = params_path {
        manifest.add_input(p)?;
    }
    Ok((manifest, None))
}

struct RetrieveOpts<'a> {
    params: Option<&'a Path>,
    pooling: Pooling,
    mode: ScoreMode,
    bidirectional: bool,
    band_rows: Option<usize>,
    out: Option<&'a Path>,
}

fn pair_label(src: &TokenEmbeddingSet, tgt: &TokenEmbeddingSet, index: usize) -> String {
    if !src.language().is_empty() && !tgt.language().is_empty() {
        format!("{}-{}", src.language(), tgt.language())
    } else {
        format!("src{index}-tgt{index}")
    }
}

fn cmd_retrieve(
    g: &GlobalArgs,
    src: &[PathBuf],
    tgt: &[PathBuf],
    gold: &[PathBuf],
    labels: &[String],
    opts: &RetrieveOpts<'_>,
    text: &mut String,
) -> CliResult<Outcome> {
    if src.len() != tgt.len() || src.len() != gold.len() {
        return Err(CliError::Usage(
            "--src, --tgt and --gold must be given the same number of times".into(),
        ));
    }
    if !labels.is_empty() && labels.len() != src.len() {
        return Err(CliError::Usage(
            "--label must be given once per --src".into(),
        ));
    }
    if opts.band_rows == Some(0) {
        return Err(CliError::Usage("--band-rows must be positive".into()));
    }
    let settings = RetrievalSettings {
        pooling: opts.pooling,
        mode: opts.mode,
        norm: g.norm(NormalizationConfig::default())?,
        bidirectional: opts.bidirectional,
        band_rows: opts.band_rows,
    };
    let params = load_params(opts.params)?;
    let mut manifest = RunManifest::new(
        "retrieve",
        json!({ "settings": settings, "params": opts.params.map(path_str), "labels": labels }),
        g.seed,
    );
    let mut outcomes = Vec::with_capacity(src.len());
    for i in 0..src.len() {
        let a = load_embeddings(&src[i])?;
        let b = load_embeddings(&tgt[i])?;
        let pairs = load_pairs(&gold[i])?;
        for p in [&src[i], &tgt[i], &gold[i]] {
            manifest.add_input(p)?;
        }
        let label = labels
            .get(i)
            .cloned()
            .unwrap_or_else(|| pair_label(&a, &b, i));
        let task = RetrievalTask::new(a, b, &pairs, label.clone())?;
        let outcome = retrieval::evaluate_retrieval_with(&task, &settings, params.as_ref())?;
        log::info!("{label}: {:.4}", outcome.accuracy);
        outcomes.push((label, outcome));
    }
    if let Some(p) = opts.params {
        manifest.add_input(p)?;
    }
    let accs: Vec<(String, f64)> = outcomes
        .iter()
        .map(|(l, o)| (l.clone(), o.accuracy))
        .collect();
    let eval_settings = EvalSettings {
        pooling: settings.pooling,
        mode: settings.mode,
        norm: settings.norm,
        bidirectional: settings.bidirectional,
        scorer: opts
            .params
            .map(path_str)
            .unwrap_or_else(|| "identity".into()),
    };
    let rep = retrieval::aggregate(&accs, Some(eval_settings))?;
    text.push_str(&report::render_table(&outcomes, &rep));
    if let Some(out) = opts.out {
        report::write_report(
            BufWriter::new(File::create(out)?),
            &outcomes,
            &rep,
            settings.bidirectional,
        )?;
        manifest.add_output(out)?;
    }
    Ok((manifest, opts.out.map(Path::to_path_buf)))
}

struct MineOpts<'a> {
    gold: Option<&'a Path>,
    threshold: Option<f64>,
    rule: RuleArg,
    params: Option<&'a Path>,
    mode: ScoreMode,
    band_rows: Option<usize>,
    out: Option<&'a Path>,
    report: Option<&'a Path>,
}

fn cmd_mine(
    g: &GlobalArgs,
    src: &Path,
    tgt: &Path,
    opts: &MineOpts<'_>,
    text: &mut String,
) -> CliResult<Outcome> {
    use std::fmt::Write as _;
    let threshold = match opts.threshold {
        Some(t) => Threshold::Fixed(t),
        None => Threshold::Sweep,
    };
    if threshold == Threshold::Sweep && opts.gold.is_none() {
        return Err(CliError::Usage("--sweep needs --gold".into()));
    }
    let config = MiningConfig {
        threshold,
        candidate_rule: match opts.rule {
            RuleArg::Best => CandidateRule::BestPerSource,
            RuleArg::Mutual => CandidateRule::MutualBest,
        },
        norm: g.norm(MiningConfig::default().norm)?,
        mode: opts.mode,
        band_rows: opts.band_rows,
    };
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let params = load_params(opts.params)?;
    let a = load_embeddings(src)?;
    let b = load_embeddings(tgt)?;
    let gold = opts.gold.map(load_pairs).transpose()?;
    let mut manifest = RunManifest::new(
        "mine",
        json!({ "mining": config, "params": opts.params.map(path_str) }),
        g.seed,
    );
    manifest.add_input(src)?;
    manifest.add_input(tgt)?;
    for p in opts.gold.iter().chain(opts.params.iter()) {
        manifest.add_input(p)?;
    }

    let (pairs, chosen) = match (threshold, &gold) {
        (Threshold::Fixed(t), _) => (mining::mine(&a, &b, &config, params.as_ref())?, t),
        (Threshold::Sweep, Some(gold)) => {
            let (pairs, sweep) = mining::mine_with_sweep(&a, &b, &config, params.as_ref(), gold)?;
            (pairs, sweep.threshold)
        }
        (Threshold::Sweep, None) => unreachable!(),
    };
    let scores = gold.as_ref().map(|gold| {
        let predicted: Vec<(String, String)> = pairs
            .iter()
            .map(|c| (c.src_id.clone(), c.tgt_id.clone()))
            .collect();
        mining::f1_against_gold(&predicted, gold)
    });
    if let Some(s) = &scores {
        log::info!(
            "threshold {chosen}: P {:.4} R {:.4} F1 {:.4}",
            s.precision,
            s.recall,
            s.f1
        );
    }

    let mut listing = String::new();
    for c in &pairs {
        let _ = writeln!(listing, "{}\t{}\t{:.6}", c.src_id, c.tgt_id, c.score);
    }
    match opts.out {
        Some(out) => {
            fs::write(out, &listing)?;
            manifest.add_output(out)?;
        }
        None => text.push_str(&listing),
    }
    if let Some(path) = opts.report {
        let rep = MiningReport {
            pairs,
            chosen_threshold: chosen,
            candidate_rule: config.candidate_rule,
            norm: config.norm,
            scores,
        };
        let mut body = serde_json::to_string_pretty(&rep)?;
        body.push('\n');
        fs::write(path, body)?;
        manifest.add_output(path)?;
    }
    Ok((manifest, opts.out.or(opts.report).map(Path::to_path_buf)))
}

fn cmd_train(
    g: &GlobalArgs,
    src: &Path,
    tgt: &Path,
    gold: &Path,
    config_path: Option<&Path>,
    out: &Path,
    text: &mut String,
) -> CliResult<Outcome> {
    use std::fmt::Write as _;
    let mut config: TrainerConfig = match config_path {
        Some(p) => read_json(p)?,
        None => TrainerConfig::default(),
    };
    config.norm = g.norm(config.norm)?;
    if let Some(t) = g.temperature {
        config.temperature = t;
    }
    if let Some(s) = g.seed {
        config.seed = s;
    }
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let a = load_embeddings(src)?;
    let b = load_embeddings(tgt)?;
    let pairs = load_pairs(gold)?;
    let outcome = trainer::train(&a, &b, &pairs, &config)?;
    let _ = writeln!(text, "epoch\ttrain_loss\teval_loss");
    let _ = writeln!(text, "0\t-\t{:.6}", outcome.eval_losses[0]);
    for (e, (tl, el)) in outcome
        .epoch_losses
        .iter()
        .zip(&outcome.eval_losses[1..])
        .enumerate()
    {
        let _ = writeln!(text, "{}\t{tl:.6}\t{el:.6}", e + 1);
    }
    write_checkpoint(&outcome.params, BufWriter::new(File::create(out)?))?;

    let mut manifest = RunManifest::new("train", json!({ "trainer": config }), Some(config.seed));
    for p in [src, tgt, gold] {
        manifest.add_input(p)?;
    }
    if let Some(p) = config_path {
        manifest.add_input(p)?;
    }
    manifest.add_output(out)?;
    Ok((manifest, Some(out.to_path_buf())))
}

fn cmd_prepare_synthetic(
    g: &GlobalArgs,
    spec_path: &Path,
    out: &Path,
    text: &mut String,
) -> CliResult<Outcome> {
    use std::fmt::Write as _;
    let mut spec: SyntheticCorpusSpec = read_json(spec_path)?;
    if let Some(s) = g.seed {
        spec.seed = s;
    }
    spec.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let pair = generate_synthetic_pair(&spec)?;
    fs::create_dir_all(out)?;
    let src_path = out.join("src.temb");
    let tgt_path = out.join("tgt.temb");
    let gold_path = out.join("gold.tsv");
    save_embeddings(&pair.src, &src_path)?;
    save_embeddings(&pair.tgt, &tgt_path)?;
    tsv::write_pairs(
        BufWriter::new(File::create(&gold_path)?),
        pair.gold.iter().map(|(s, t)| (s.as_str(), t.as_str())),
    )?;
    let _ = writeln!(
        text,
        "wrote {} pairs ({} popular targets)",
        pair.gold.len(),
        pair.popular.len()
    );

    let mut manifest = RunManifest::new(
        "prepare-data",
        json!({ "synthetic": spec }),
        Some(spec.seed),
    );
    manifest.add_input(spec_path)?;
    for p in [
        &src_path,
        &tsv::sidecar_path(&src_path),
        &tgt_path,
        &tsv::sidecar_path(&tgt_path),
        &gold_path,
    ] {
        manifest.add_output(p)?;
    }
    Ok((manifest, Some(out.to_path_buf())))
}

struct PrepareOpts<'a> {
    budget: usize,
    min_tokens: usize,
    decontaminate: &'a [PathBuf],
    top_k: Option<usize>,
    whitespace_tokens: bool,
}

/// `<label>.tsv` files under `dir`, sorted by path.
fn listed(dir: &Path, ext: &str) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn load_bitext(path: &Path, label: &str) -> CliResult<Vec<BitextPair>> {
    let mut pairs = tsv::read_bitext(BufReader::new(File::open(path)?), path, label)?;
    let sidecar = tsv::sidecar_path(path);
    if sidecar.is_file() {
        let records = tsv::read_manifest(BufReader::new(File::open(&sidecar)?), &sidecar)?;
        let counts: BTreeMap<&str, (Option<usize>, Option<usize>)> = records
            .iter()
            .map(|r| (r.id.as_str(), (r.src_tokens, r.tgt_tokens)))
            .collect();
        for p in &mut pairs {
            if let Some(&(s, t)) = counts.get(p.id.as_str()) {
                p.src_tokens = s;
                p.tgt_tokens = t;
            }
        }
    }
    Ok(pairs)
}

fn load_test_sentences(dir: &Path, manifest: &mut RunManifest) -> CliResult<Vec<String>> {
    let mut sentences = Vec::new();
    for path in listed(dir, "tsv")? {
        for p in tsv::read_bitext(BufReader::new(File::open(&path)?), &path, "xx-yy")? {
            sentences.push(p.src_text);
            sentences.push(p.tgt_text);
        }
        manifest.add_input(&path)?;
    }
    for path in listed(dir, "txt")? {
        sentences.extend(
            fs::read_to_string(&path)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(str::to_string),
        );
        manifest.add_input(&path)?;
    }
    Ok(sentences)
}

fn cmd_prepare_pairs(
    g: &GlobalArgs,
    dir: &Path,
    opts: &PrepareOpts<'_>,
    out: &Path,
    text: &mut String,
) -> CliResult<Outcome> {
    use std::fmt::Write as _;
    let seed = g.seed.unwrap_or(0);
    let mut manifest = RunManifest::new("prepare-data", serde_json::Value::Null, Some(seed));
    let mut corpora: BTreeMap<String, Vec<BitextPair>> = BTreeMap::new();
    for path in listed(dir, "tsv")? {
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::Usage(format!("{}: unusable file name", path.display())))?
            .to_string();
        retrieval::split_pair_label(&label)?;
        corpora.insert(label.clone(), load_bitext(&path, &label)?);
        manifest.add_input(&path)?;
        let sidecar = tsv::sidecar_path(&path);
        if sidecar.is_file() {
            manifest.add_input(&sidecar)?;
        }
    }
    if corpora.is_empty() {
        return Err(CliError::Data(
            xlalign_core::Error::EmptyInput("bitext directory").into(),
        ));
    }
    let sizes: BTreeMap<String, usize> =
        corpora.iter().map(|(l, p)| (l.clone(), p.len())).collect();
    let k = opts.top_k.unwrap_or(sizes.len());
    let spec: BudgetSpec = corpus::plan_topk(&sizes, k, opts.budget, opts.min_tokens, seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut test_sets = Vec::new();
    for d in opts.decontaminate {
        test_sets.push(load_test_sentences(d, &mut manifest)?);
    }
    let fallback = opts.whitespace_tokens.then_some(TokenCounter::Whitespace);
    let (clean, stats) = corpus::run_pipeline(&corpora, &spec, fallback, &test_sets)?;

    fs::create_dir_all(out)?;
    let by_label = clean.by_label();
    for label in &spec.pair_labels {
        let pairs = by_label.get(label).map(Vec::as_slice).unwrap_or(&[]);
        let tsv_path = out.join(format!("{label}.tsv"));
        tsv::write_bitext(BufWriter::new(File::create(&tsv_path)?), pairs)?;
        let records: Vec<ManifestRecord> = pairs
            .iter()
            .map(|p| ManifestRecord {
                id: p.id.clone(),
                src_tokens: p
                    .src_tokens
                    .or_else(|| fallback.map(|f| f.count(&p.src_text))),
                tgt_tokens: p
                    .tgt_tokens
                    .or_else(|| fallback.map(|f| f.count(&p.tgt_text))),
                ..Default::default()
            })
            .collect();
        let side = tsv::sidecar_path(&tsv_path);
        tsv::write_manifest(BufWriter::new(File::create(&side)?), &records)?;
        manifest.add_output(&tsv_path)?;
        manifest.add_output(&side)?;
        let _ = writeln!(text, "{label}\t{}", pairs.len());
    }
    let stats_path = out.join("stats.json");
    let mut body = serde_json::to_string_pretty(&stats)?;
    body.push('\n');
    fs::write(&stats_path, body)?;
    manifest.add_output(&stats_path)?;
    let _ = writeln!(
        text,
        "sampled {}, kept {} after length filter, removed {} contaminated, final {}",
        stats.sampled, stats.after_filter, stats.decontaminated, stats.final_pairs
    );
    manifest.config = json!({
        "pairs": path_str(dir),
        "budget": spec,
        "whitespace_tokens": opts.whitespace_tokens,
        "decontaminate": opts.decontaminate.iter().map(|p| path_str(p)).collect::<Vec<_>>(),
        "top_k": opts.top_k,
    });
    Ok((manifest, Some(out.to_path_buf())))
}

/// On-disk description of an ablation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub pooling: Vec<Pooling>,
    pub normalization: Vec<bool>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// One synthetic task per seed.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub synthetic: Option<SyntheticCorpusSpec>,
    #[serde(default)]
    pub tasks: Vec<GridTask>,
    #[serde(default)]
    pub norm_scope: Option<NormScope>,
    #[serde(default)]
    pub tile_size: Option<usize>,
    #[serde(default)]
    pub mode: Option<ScoreMode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridTask {
    pub src: PathBuf,
    pub tgt: PathBuf,
    pub gold: PathBuf,
    #[serde(default)]
    pub label: Option<String>,
}

fn cmd_ablate(
    g: &GlobalArgs,
    grid_path: &Path,
    out: &Path,
    text: &mut String,
) -> CliResult<Outcome> {
    let file: GridFile = read_json(grid_path)?;
    let mut manifest = RunManifest::new("ablate", serde_json::to_value(&file)?, g.seed);
    manifest.add_input(grid_path)?;

    let mut tasks = Vec::new();
    if let Some(spec) = &file.synthetic {
        let seeds = if file.seeds.is_empty() {
            vec![spec.seed]
        } else {
            file.seeds.clone()
        };
        for seed in seeds {
            let spec = SyntheticCorpusSpec {
                seed,
                ..spec.clone()
            };
            let pair = generate_synthetic_pair(&spec)?;
            let label = format!("{}-{}", spec.src_lang, spec.tgt_lang);
            tasks.push(AblationTask {
                seed,
                task: RetrievalTask::new(pair.src, pair.tgt, &pair.gold, label)?,
            });
        }
    } else if !file.seeds.is_empty() {
        return Err(CliError::Usage(
            "grid lists seeds but no synthetic spec".into(),
        ));
    }
    for (i, t) in file.tasks.iter().enumerate() {
        let a = load_embeddings(&t.src)?;
        let b = load_embeddings(&t.tgt)?;
        let gold = load_pairs(&t.gold)?;
        for p in [&t.src, &t.tgt, &t.gold] {
            manifest.add_input(p)?;
        }
        let label = t.label.clone().unwrap_or_else(|| pair_label(&a, &b, i));
        tasks.push(AblationTask {
            seed: 0,
            task: RetrievalTask::new(a, b, &gold, label)?,
        });
    }

    let mut template = g.norm(NormalizationConfig::default())?;
    if let Some(s) = file.norm_scope {
        template.scope = s;
    }
    if let Some(t) = file.tile_size {
        template.tile_size = t;
    }
    let grid = AblationGrid {
        pooling: file.pooling,
        normalization: file.normalization,
        alphas: file.alphas,
        tasks,
        norm_template: template,
        mode: file.mode.unwrap_or(ScoreMode::EvalCosine),
    };
    grid.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let rows = ablation::run_grid(&grid)?;
    let mut sink = BufWriter::new(File::create(out)?);
    for r in &rows {
        serde_json::to_writer(&mut sink, r)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    drop(sink);
    manifest.add_output(out)?;
    text.push_str(&ablation::render_grid(&rows));
    Ok((manifest, Some(out.to_path_buf())))
}
