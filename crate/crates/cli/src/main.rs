//! `flowsift` — traffic-flow threat classification pipeline.
//!
//! Subcommands cover the whole pipeline: `extract` (pcap/CSV to normalized
//! CSV), `synth` (labeled synthetic data), `encode` (hashed fixed-length
//! corpus), `train-tokenizer`, `train`, `eval`, `infer`, `bench`, `esd`,
//! and `schema` (dump the built-in schemas). Exit codes: 0 success, 1
//! usage/config error, 2 data error, 3 internal error.

mod config;
mod error;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use flowsift_core::evaluation::bench::bench_inference;
use flowsift_core::evaluation::spectrum::esd_alpha;
use flowsift_core::evaluation::classification_report;
use flowsift_core::ingest::{
    self, labels::CLASS_NAMES, pcap, schema::FeatureSchema, table::FeatureTable,
};
use flowsift_core::model::checkpoint::{load_checkpoint, save_checkpoint};
use flowsift_core::model::{Classifier, ModelConfig};
use flowsift_core::ppfle::{self, HashAlgorithm, HashConfig};
use flowsift_core::tokenizer::{
    load_tokenizer, save_tokenizer, train_bbpe, TokenizerModel, DEFAULT_SPECIALS,
};
use flowsift_core::training::{self, Dataset, Optimizer, TrainConfig};
use flowsift_core::ClassLabelSet;

use config::{merge, merge_opt, PipelineConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "flowsift", version, about = "Traffic-flow threat classification pipeline")]
struct Cli {
    /// TOML config file; command-line flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed propagated to every stage [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump a built-in feature schema
    Schema(SchemaArgs),
    /// Extract features from a pcap or CSV into a normalized CSV
    Extract(ExtractArgs),
    /// Generate a labeled synthetic feature CSV
    Synth(SynthArgs),
    /// Encode a feature CSV into a hashed fixed-length corpus
    Encode(EncodeArgs),
    /// Train the byte-level BPE tokenizer on a corpus
    TrainTokenizer(TrainTokenizerArgs),
    /// Train the classifier on an encoded corpus
    Train(TrainArgs),
    /// Evaluate a checkpoint on an encoded corpus
    Eval(EvalArgs),
    /// Classify one CSV row or corpus line
    Infer(InferArgs),
    /// Measure single-sample inference latency
    Bench(BenchArgs),
    /// Weight-spectrum diagnostics of a checkpoint
    Esd(EsdArgs),
}

#[derive(Args)]
struct SchemaArgs {
    /// Built-in schema: "edge61" or "compact" [default: edge61]
    #[arg(long)]
    builtin: Option<String>,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Input capture (.pcap) or CSV; format sniffed from the file magic
    #[arg(long)]
    input: PathBuf,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Schema file [default: built-in edge61]
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Flow window in seconds [default: whole capture]
    #[arg(long)]
    window: Option<f64>,
    /// Label column to carry through (CSV inputs only)
    #[arg(long)]
    label_column: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Rows per class [default: 500]
    #[arg(long)]
    n_per_class: Option<usize>,
    /// Number of classes, 1..=15 [default: 15]
    #[arg(long)]
    classes: Option<usize>,
    /// Schema file [default: built-in compact]
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    /// Input feature CSV
    #[arg(long)]
    input: PathBuf,
    /// Output corpus path (or [paths].corpus in the config)
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output label sidecar [default: <corpus>.labels when labels exist]
    #[arg(long)]
    labels_out: Option<PathBuf>,
    /// Label column name [default: label]
    #[arg(long)]
    label_column: Option<String>,
    /// Schema file [default: built-in edge61]
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Digest algorithm: sha256 or sha512 [default: sha256]
    #[arg(long)]
    hash_algorithm: Option<String>,
    /// Truncate digests to this many hex chars (even, >= 8) [default: full]
    #[arg(long)]
    truncate_hex: Option<usize>,
}

#[derive(Args)]
struct TrainTokenizerArgs {
    /// Input corpus (or [paths].corpus in the config)
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output tokenizer directory (or [paths].tokenizer_dir)
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Vocabulary budget including specials and bytes [default: 5000]
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Minimum pair frequency for a merge [default: 2]
    #[arg(long)]
    min_frequency: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Input corpus (or [paths].corpus in the config)
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Label sidecar, one class name per line (or [paths].labels)
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Tokenizer directory (or [paths].tokenizer_dir)
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    /// Output checkpoint path (or [paths].checkpoint)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Training history CSV [default: <checkpoint>.history.csv]
    #[arg(long)]
    history: Option<PathBuf>,
    /// Held-out fraction for evaluation [default: 0.2]
    #[arg(long)]
    eval_ratio: Option<f64>,
    /// Sequence length after truncation/padding, <= 512 [default: 512]
    #[arg(long)]
    max_len: Option<usize>,
    /// Lines per encoding chunk [default: 5000]
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Epochs [default: 4]
    #[arg(long)]
    epochs: Option<usize>,
    /// Batch size [default: 128]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Learning rate [default: 0.001]
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Optimizer: adam or sgd [default: adam]
    #[arg(long)]
    optimizer: Option<String>,
    /// Evaluate every N steps, 0 = epoch ends only [default: 0]
    #[arg(long)]
    eval_every: Option<usize>,
    /// Hidden size [default: 128]
    #[arg(long)]
    hidden: Option<usize>,
    /// Encoder layers [default: 2]
    #[arg(long)]
    layers: Option<usize>,
    /// Attention heads [default: 4]
    #[arg(long)]
    heads: Option<usize>,
    /// Feed-forward inner size [default: 512]
    #[arg(long)]
    intermediate: Option<usize>,
    /// Maximum position embeddings [default: 512]
    #[arg(long)]
    max_position: Option<usize>,
    /// Dropout rate [default: 0.1]
    #[arg(long)]
    dropout: Option<f64>,
    /// Where to write the held-out split [default: next to the checkpoint]
    #[arg(long)]
    eval_out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Encoded corpus to evaluate (or [paths].corpus)
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Label sidecar (or [paths].labels)
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Tokenizer directory (or [paths].tokenizer_dir)
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    /// Checkpoint path (or [paths].checkpoint)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Report output directory (or [paths].reports)
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Sequence length [default: 512]
    #[arg(long)]
    max_len: Option<usize>,
    /// Lines per encoding chunk [default: 5000]
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Rows per forward pass [default: 128]
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args)]
struct InferArgs {
    /// Tokenizer directory (or [paths].tokenizer_dir)
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    /// Checkpoint path (or [paths].checkpoint)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// A pre-encoded corpus line
    #[arg(long, conflicts_with = "csv")]
    line: Option<String>,
    /// A feature CSV; the row at --row is encoded and classified
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Row index into --csv [default: 0]
    #[arg(long)]
    row: Option<usize>,
    /// Schema file for --csv [default: built-in edge61]
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Digest algorithm for --csv [default: sha256]
    #[arg(long)]
    hash_algorithm: Option<String>,
    /// Digest truncation for --csv [default: full]
    #[arg(long)]
    truncate_hex: Option<usize>,
    /// Sequence length [default: 512]
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// Tokenizer directory (or [paths].tokenizer_dir)
    #[arg(long)]
    tokenizer: Option<PathBuf>,
    /// Checkpoint path (or [paths].checkpoint)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Report output path
    #[arg(long)]
    out: PathBuf,
    /// Sample corpus line [default: first line of --corpus or a digest-like line]
    #[arg(long)]
    line: Option<String>,
    /// Corpus to draw the sample line from
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Timed runs [default: 1000]
    #[arg(long)]
    n_runs: Option<usize>,
    /// Sequence length [default: 512]
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args)]
struct EsdArgs {
    /// Checkpoint path (or [paths].checkpoint)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Spectrum CSV output path
    #[arg(long)]
    out: PathBuf,
}

fn main() -> std::process::ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return std::process::ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(cli.config.as_deref())?;
    let seed = merge(cli.seed, cfg.seed, 0);
    match cli.command {
        Command::Schema(args) => cmd_schema(args),
        Command::Extract(args) => cmd_extract(args, &cfg),
        Command::Synth(args) => cmd_synth(args, &cfg, seed),
        Command::Encode(args) => cmd_encode(args, &cfg),
        Command::TrainTokenizer(args) => cmd_train_tokenizer(args, &cfg),
        Command::Train(args) => cmd_train(args, &cfg, seed),
        Command::Eval(args) => cmd_eval(args, &cfg),
        Command::Infer(args) => cmd_infer(args, &cfg),
        Command::Bench(args) => cmd_bench(args, &cfg),
        Command::Esd(args) => cmd_esd(args, &cfg),
    }
}

fn builtin_schema(name: &str) -> Option<FeatureSchema> {
    match name {
        "edge61" => Some(FeatureSchema::edge_iiot61()),
        "compact" => Some(FeatureSchema::synthetic_compact()),
        _ => None,
    }
}

/// `--schema` accepts a schema file path or a built-in name ("edge61",
/// "compact"). A real file wins over a built-in of the same name.
fn load_schema(
    flag: Option<&Path>,
    cfg: &PipelineConfig,
    default_builtin: &str,
) -> Result<FeatureSchema, CliError> {
    let path = flag.or(cfg.schema.path.as_deref());
    let mut schema = match path {
        Some(path) if path.is_file() => FeatureSchema::load(path)?,
        Some(path) => builtin_schema(&path.to_string_lossy()).ok_or_else(|| {
            CliError::Usage(format!(
                "schema `{}` is neither a file nor a built-in name (edge61, compact)",
                path.display()
            ))
        })?,
        None => {
            let builtin = cfg.schema.builtin.as_deref().unwrap_or(default_builtin);
            builtin_schema(builtin).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown built-in schema `{builtin}` (expected edge61 or compact)"
                ))
            })?
        }
    };
    if let Some(excluded) = &cfg.schema.excluded {
        schema = FeatureSchema::new(schema.columns().to_vec(), excluded.iter().cloned())
            .map_err(CliError::from)?;
    }
    Ok(schema)
}

fn hash_config(
    algorithm: Option<&str>,
    truncate: Option<usize>,
    cfg: &PipelineConfig,
) -> Result<HashConfig, CliError> {
    let name = algorithm
        .map(|s| s.to_string())
        .or_else(|| cfg.hash.algorithm.clone())
        .unwrap_or_else(|| "sha256".to_string());
    let algorithm = HashAlgorithm::parse(&name)
        .ok_or_else(|| CliError::Usage(format!("unknown hash algorithm `{name}`")))?;
    let config = HashConfig {
        algorithm,
        truncate_hex: merge_opt(truncate, cfg.hash.truncate_hex),
    };
    config.validate().map_err(CliError::from)?;
    Ok(config)
}

fn req_path(
    flag: Option<PathBuf>,
    cfg_value: Option<&PathBuf>,
    flag_name: &str,
    cfg_key: &str,
) -> Result<PathBuf, CliError> {
    flag.or_else(|| cfg_value.cloned()).ok_or_else(|| {
        CliError::Usage(format!(
            "missing --{flag_name} (or [paths].{cfg_key} in the config file)"
        ))
    })
}

fn specials() -> Vec<String> {
    DEFAULT_SPECIALS.iter().map(|s| s.to_string()).collect()
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    std::fs::write(path, contents)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn cmd_schema(args: SchemaArgs) -> Result<(), CliError> {
    let name = args.builtin.as_deref().unwrap_or("edge61");
    let schema = builtin_schema(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown built-in schema `{name}` (expected edge61 or compact)"
        ))
    })?;
    match args.out {
        Some(path) => write_file(&path, &schema.render())?,
        None => print!("{}", schema.render()),
    }
    Ok(())
}

fn sniff_pcap(path: &Path) -> Result<bool, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    if bytes.len() < 4 {
        return Ok(false);
    }
    let be = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let le = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    Ok([0xA1B2_C3D4u32, 0xA1B2_3C4D].contains(&be)
        || [0xA1B2_C3D4u32, 0xA1B2_3C4D].contains(&le))
}

fn cmd_extract(args: ExtractArgs, cfg: &PipelineConfig) -> Result<(), CliError> {
    let schema = load_schema(args.schema.as_deref(), cfg, "edge61")?;
    let table = if sniff_pcap(&args.input)? {
        pcap::extract_flows(&args.input, args.window, &schema)?
    } else {
        ingest::load_csv(&args.input, &schema, args.label_column.as_deref(), None)?
    };
    ensure_parent(&args.out)?;
    ingest::write_csv(&table, &args.out)?;
    eprintln!("wrote {} rows to {}", table.n_rows(), args.out.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs, cfg: &PipelineConfig, seed: u64) -> Result<(), CliError> {
    let schema = load_schema(args.schema.as_deref(), cfg, "compact")?;
    let n_per_class = args.n_per_class.unwrap_or(500);
    let classes = args.classes.unwrap_or(15);
    let table = ingest::generate_synthetic(n_per_class, classes, &schema, seed)?;
    ensure_parent(&args.out)?;
    ingest::write_csv(&table, &args.out)?;
    eprintln!(
        "wrote {} rows ({} classes) to {}",
        table.n_rows(),
        classes,
        args.out.display()
    );
    Ok(())
}

fn cmd_encode(args: EncodeArgs, cfg: &PipelineConfig) -> Result<(), CliError> {
    let corpus_path = req_path(args.corpus, cfg.paths.corpus.as_ref(), "corpus", "corpus")?;
    let schema = load_schema(args.schema.as_deref(), cfg, "edge61")?;
    let hash = hash_config(args.hash_algorithm.as_deref(), args.truncate_hex, cfg)?;
    let label_column = args.label_column.as_deref().unwrap_or("label");
    // The label column is optional on encode: plain feature files work too.
    let table = match ingest::load_csv(&args.input, &schema, Some(label_column), None) {
        Ok(t) => t,
        Err(ingest::IngestError::MissingColumn { name }) if name == label_column => {
            ingest::load_csv(&args.input, &schema, None, None)?
        }
        Err(e) => return Err(e.into()),
    };
    let retained = ingest::drop_excluded(&table);
    let dl = ppfle::encode_table(&retained, &hash)?;
    ensure_parent(&corpus_path)?;
    let labels_path = match (&args.labels_out, &dl.labels) {
        (Some(path), Some(_)) => Some(path.clone()),
        (None, Some(_)) => Some(corpus_path.with_extension("labels")),
        _ => None,
    };
    ppfle::write_corpus(&dl, &corpus_path, labels_path.as_deref())?;
    eprintln!(
        "wrote {} lines to {}{}",
        dl.lines.len(),
        corpus_path.display(),
        labels_path
            .map(|p| format!(" (labels: {})", p.display()))
            .unwrap_or_default()
    );
    Ok(())
}

fn cmd_train_tokenizer(args: TrainTokenizerArgs, cfg: &PipelineConfig) -> Result<(), CliError> {
    let corpus_path = req_path(args.corpus, cfg.paths.corpus.as_ref(), "corpus", "corpus")?;
    let out_dir = req_path(
        args.out_dir,
        cfg.paths.tokenizer_dir.as_ref(),
        "out-dir",
        "tokenizer_dir",
    )?;
    let corpus = ppfle::read_corpus(&corpus_path)?;
    let vocab_size = merge(args.vocab_size, cfg.tokenizer.vocab_size, 5000);
    let min_frequency = merge(args.min_frequency, cfg.tokenizer.min_frequency, 2);
    let tok = train_bbpe(&corpus, vocab_size, min_frequency, &specials())?;
    save_tokenizer(&tok, &out_dir)?;
    eprintln!(
        "trained tokenizer: {} tokens, {} merges -> {}",
        tok.vocab_len(),
        tok.merges().len(),
        out_dir.display()
    );
    Ok(())
}

/// Distinct label names in canonical order when all are canonical classes,
/// lexicographic otherwise.
fn class_set_from_labels(labels: &[String]) -> ClassLabelSet {
    let mut names: Vec<String> = Vec::new();
    for l in labels {
        if !names.contains(l) {
            names.push(l.clone());
        }
    }
    let canonical_rank = |n: &String| CLASS_NAMES.iter().position(|c| c == n);
    if names.iter().all(|n| canonical_rank(n).is_some()) {
        names.sort_by_key(|n| canonical_rank(n).unwrap());
    } else {
        names.sort();
    }
    ClassLabelSet::from_names(names)
}

fn encode_dataset(
    tok: &TokenizerModel,
    lines: &[String],
    labels: &[usize],
    chunk_size: usize,
    max_len: usize,
) -> Result<Dataset, CliError> {
    let batch = tok.encode_chunked(lines, chunk_size, max_len)?;
    Ok(Dataset {
        batch,
        labels: labels.to_vec(),
    })
}

fn check_vocab_compat(tok: &TokenizerModel, model_vocab: usize) -> Result<(), CliError> {
    if tok.vocab_len() > model_vocab {
        return Err(CliError::Data(format!(
            "tokenizer vocabulary ({} tokens) exceeds checkpoint vocabulary size ({model_vocab}); \
             the tokenizer and checkpoint do not belong together",
            tok.vocab_len()
        )));
    }
    Ok(())
}

fn cmd_train(args: TrainArgs, cfg: &PipelineConfig, seed: u64) -> Result<(), CliError> {
    let corpus_path = req_path(args.corpus, cfg.paths.corpus.as_ref(), "corpus", "corpus")?;
    let labels_path = req_path(args.labels, cfg.paths.labels.as_ref(), "labels", "labels")?;
    let tokenizer_dir = req_path(
        args.tokenizer,
        cfg.paths.tokenizer_dir.as_ref(),
        "tokenizer",
        "tokenizer_dir",
    )?;
    let checkpoint_path = req_path(
        args.checkpoint,
        cfg.paths.checkpoint.as_ref(),
        "checkpoint",
        "checkpoint",
    )?;
    let lines = ppfle::read_corpus(&corpus_path)?;
    let label_names = ingest::read_labels(&labels_path)?;
    if lines.len() != label_names.len() {
        return Err(CliError::Data(format!(
            "corpus has {} lines but labels file has {}",
            lines.len(),
            label_names.len()
        )));
    }
    let tok = load_tokenizer(&tokenizer_dir)?;

    let class_set = class_set_from_labels(&label_names);
    let label_ids = class_set.indices_for(&label_names)?;

    let max_len = merge(args.max_len, cfg.tokenizer.max_len, 512);
    if !(2..=512).contains(&max_len) {
        return Err(CliError::Usage(format!("max_len {max_len} outside 2..=512")));
    }
    let chunk_size = merge(args.chunk_size, cfg.tokenizer.chunk_size, 5000);
    let max_position = merge(args.max_position, cfg.model.max_position, 512);
    if max_len > max_position {
        return Err(CliError::Usage(format!(
            "max_len {max_len} exceeds max_position {max_position}"
        )));
    }
    let n_classes_cfg = merge_opt(None, cfg.model.n_classes);
    let n_classes = n_classes_cfg.unwrap_or(class_set.len());
    if n_classes < class_set.len() {
        return Err(CliError::Usage(format!(
            "n_classes {n_classes} smaller than the {} distinct labels",
            class_set.len()
        )));
    }
    let model_config = ModelConfig {
        vocab_size: tok.vocab_len(),
        hidden: merge(args.hidden, cfg.model.hidden, 128),
        layers: merge(args.layers, cfg.model.layers, 2),
        heads: merge(args.heads, cfg.model.heads, 4),
        intermediate: merge(args.intermediate, cfg.model.intermediate, 512),
        max_position,
        type_vocab: merge(None, cfg.model.type_vocab, 2),
        dropout: merge(args.dropout, cfg.model.dropout, 0.1),
        n_classes,
    };
    model_config.validate().map_err(CliError::from)?;

    let eval_ratio = merge(args.eval_ratio, cfg.train.eval_ratio, 0.2);
    let (train_idx, eval_idx, warnings) =
        ingest::stratified_split_indices(&label_names, eval_ratio_to_train(eval_ratio)?, seed)?;
    for w in &warnings {
        eprintln!(
            "warning: class `{}` has {} sample(s); assigned to training",
            w.name, w.count
        );
    }
    let pick = |idx: &[usize]| -> (Vec<String>, Vec<usize>) {
        (
            idx.iter().map(|&i| lines[i].clone()).collect(),
            idx.iter().map(|&i| label_ids[i]).collect(),
        )
    };
    let (train_lines, train_labels) = pick(&train_idx);
    let (eval_lines, eval_labels) = pick(&eval_idx);

    let train_set = encode_dataset(&tok, &train_lines, &train_labels, chunk_size, max_len)?;
    let eval_set = encode_dataset(&tok, &eval_lines, &eval_labels, chunk_size, max_len)?;

    let optimizer = parse_optimizer(args.optimizer.as_deref(), cfg)?;
    let train_config = TrainConfig {
        epochs: merge(args.epochs, cfg.train.epochs, 4),
        batch_size: merge(args.batch_size, cfg.train.batch_size, 128),
        learning_rate: merge(args.learning_rate, cfg.train.learning_rate, 1e-3),
        optimizer,
        seed,
        eval_every: merge(args.eval_every, cfg.train.eval_every, 0),
    };

    let mut model: Classifier<f32> = Classifier::build(model_config, seed)?;
    model.class_names = Some(class_set.names().to_vec());
    eprint!("{}", model.summary());
    let (model, history) =
        training::train(model, &train_set, Some(&eval_set), &train_config)?;

    ensure_parent(&checkpoint_path)?;
    save_checkpoint(&model, &checkpoint_path)?;
    let history_path = args
        .history
        .clone()
        .or_else(|| cfg.paths.history.clone())
        .unwrap_or_else(|| checkpoint_path.with_extension("history.csv"));
    write_file(&history_path, &history.to_csv())?;

    let eval_dir = args
        .eval_out_dir
        .clone()
        .or_else(|| checkpoint_path.parent().map(|p| p.to_path_buf()))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&eval_dir)?;
    let eval_corpus = eval_dir.join("eval.corpus");
    let eval_labels_path = eval_dir.join("eval.labels");
    write_file(
        &eval_corpus,
        &eval_lines
            .iter()
            .map(|l| format!("{l}\n"))
            .collect::<String>(),
    )?;
    write_file(
        &eval_labels_path,
        &eval_idx
            .iter()
            .map(|&i| format!("{}\n", label_names[i]))
            .collect::<String>(),
    )?;

    eprintln!(
        "trained {} epochs ({} steps); eval accuracy {}; checkpoint {}",
        train_config.epochs,
        history.steps.len(),
        history
            .final_eval_accuracy()
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "n/a".into()),
        checkpoint_path.display()
    );
    Ok(())
}

/// The split helper takes the training fraction.
fn eval_ratio_to_train(eval_ratio: f64) -> Result<f64, CliError> {
    if !(eval_ratio > 0.0 && eval_ratio < 1.0) {
        return Err(CliError::Usage(format!(
            "eval_ratio {eval_ratio} outside (0, 1)"
        )));
    }
    Ok(1.0 - eval_ratio)
}

fn parse_optimizer(flag: Option<&str>, cfg: &PipelineConfig) -> Result<Optimizer, CliError> {
    let name = flag
        .map(|s| s.to_string())
        .or_else(|| cfg.train.optimizer.clone())
        .unwrap_or_else(|| "adam".to_string());
    match name.as_str() {
        "adam" => Ok(Optimizer::default()),
        "sgd" => Ok(Optimizer::Sgd),
        other => Err(CliError::Usage(format!(
            "unknown optimizer `{other}` (expected adam or sgd)"
        ))),
    }
}

fn cmd_eval(args: EvalArgs, cfg: &PipelineConfig) -> Result<(), CliError> {
    let corpus_path = req_path(args.corpus, cfg.paths.corpus.as_ref(), "corpus", "corpus")?;
    let labels_path = req_path(args.labels, cfg.paths.labels.as_ref(), "labels", "labels")?;
    let tokenizer_dir = req_path(
        args.tokenizer,
        cfg.paths.tokenizer_dir.as_ref(),
        "tokenizer",
        "tokenizer_dir",
    )?;
    let checkpoint_path = req_path(
        args.checkpoint,
        cfg.paths.checkpoint.as_ref(),
        "checkpoint",
        "checkpoint",
    )?;
    let out_dir = req_path(args.out_dir, cfg.paths.reports.as_ref(), "out-dir", "reports")?;
    let lines = ppfle::read_corpus(&corpus_path)?;
    let label_names = ingest::read_labels(&labels_path)?;
    if lines.len() != label_names.len() {
        return Err(CliError::Data(format!(
            "corpus has {} lines but labels file has {}",
            lines.len(),
            label_names.len()
        )));
    }
    let tok = load_tokenizer(&tokenizer_dir)?;
    let model: Classifier<f32> = load_checkpoint(&checkpoint_path)?;
    check_vocab_compat(&tok, model.config.vocab_size)?;
    let class_names = model.class_names.clone().ok_or_else(|| {
        CliError::Data("checkpoint carries no class names; cannot map labels".into())
    })?;
    let class_set = ClassLabelSet::from_names(class_names.clone());
    let y_true = class_set.indices_for(&label_names)?;

    let max_len = merge(args.max_len, cfg.tokenizer.max_len, 512);
    let chunk_size = merge(args.chunk_size, cfg.tokenizer.chunk_size, 5000);
    let batch_size = merge(args.batch_size, cfg.train.batch_size, 128);
    let batch = tok.encode_chunked(&lines, chunk_size, max_len)?;
    let (y_pred, probs) = training::predict(&model, &batch, batch_size)?;

    let report = classification_report(&y_true, &y_pred, Some(&probs), &class_names)?;
    std::fs::create_dir_all(&out_dir)?;
    write_file(&out_dir.join("report.txt"), &report.to_string())?;
    write_file(
        &out_dir.join("report.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    write_file(&out_dir.join("confusion.csv"), &report.confusion_csv())?;
    eprintln!(
        "accuracy {:.4} over {} samples; reports in {}",
        report.accuracy,
        y_true.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_infer(args: InferArgs, cfg: &PipelineConfig) -> Result<(), CliError> {
    let tokenizer_dir = req_path(
        args.tokenizer,
        cfg.paths.tokenizer_dir.as_ref(),
        "tokenizer",
        "tokenizer_dir",
    )?;
    let checkpoint_path = req_path(
        args.checkpoint,
        cfg.paths.checkpoint.as_ref(),
        "checkpoint",
        "checkpoint",
    )?;
    let tok = load_tokenizer(&tokenizer_dir)?;
    let model: Classifier<f32> = load_checkpoint(&checkpoint_path)?;
    check_vocab_compat(&tok, model.config.vocab_size)?;
    let line = match (&args.line, &args.csv) {
        (Some(line), _) => line.clone(),
        (None, Some(csv)) => {
            let schema = load_schema(args.schema.as_deref(), cfg, "edge61")?;
            let hash = hash_config(args.hash_algorithm.as_deref(), args.truncate_hex, cfg)?;
            let table = ingest::load_csv(csv, &schema, None, None)?;
            let row = args.row.unwrap_or(0);
            if row >= table.n_rows() {
                return Err(CliError::Data(format!(
                    "row {row} out of range ({} rows)",
                    table.n_rows()
                )));
            }
            let one = FeatureTable {
                schema: table.schema.clone(),
                rows: vec![table.rows[row].clone()],
                labels: None,
            };
            let dl = ppfle::encode_table(&ingest::drop_excluded(&one), &hash)?;
            dl.lines[0].render()
        }
        (None, None) => {
            return Err(CliError::Usage(
                "one of --line or --csv is required".into(),
            ))
        }
    };
    let max_len = merge(args.max_len, cfg.tokenizer.max_len, 512);
    let batch = tok.encode_batch(&[line], max_len);
    let (preds, probs) = training::predict(&model, &batch, 1)?;
    let name = model
        .class_names
        .as_ref()
        .and_then(|ns| ns.get(preds[0]).cloned())
        .unwrap_or_else(|| format!("class{}", preds[0]));
    let vector: Vec<String> = probs.row(0).iter().map(|p| format!("{p:.6}")).collect();
    println!("{name}\t{}", vector.join(" "));
    Ok(())
}

fn cmd_bench(args: BenchArgs, cfg: &PipelineConfig) -> Result<(), CliError> {
    let tokenizer_dir = req_path(
        args.tokenizer,
        cfg.paths.tokenizer_dir.as_ref(),
        "tokenizer",
        "tokenizer_dir",
    )?;
    let checkpoint_path = req_path(
        args.checkpoint,
        cfg.paths.checkpoint.as_ref(),
        "checkpoint",
        "checkpoint",
    )?;
    let tok = load_tokenizer(&tokenizer_dir)?;
    let model: Classifier<f32> = load_checkpoint(&checkpoint_path)?;
    check_vocab_compat(&tok, model.config.vocab_size)?;
    let line = match (&args.line, &args.corpus) {
        (Some(line), _) => line.clone(),
        (None, Some(corpus)) => ppfle::read_corpus(corpus)?
            .into_iter()
            .next()
            .ok_or_else(|| CliError::Data(format!("{} is empty", corpus.display())))?,
        (None, None) => "0123456789abcdef ".repeat(8).trim_end().to_string(),
    };
    let n_runs = args.n_runs.unwrap_or(1000);
    let max_len = merge(args.max_len, cfg.tokenizer.max_len, 512);
    let report = bench_inference(&model, &tok, &line, n_runs, max_len)?;
    write_file(&args.out, &report.to_string())?;
    eprintln!(
        "mean {:.6} s over {} runs (p50 {:.6}, p95 {:.6}); report {}",
        report.mean_s,
        report.n_runs,
        report.p50_s,
        report.p95_s,
        args.out.display()
    );
    Ok(())
}

fn cmd_esd(args: EsdArgs, cfg: &PipelineConfig) -> Result<(), CliError> {
    let checkpoint_path = req_path(
        args.checkpoint,
        cfg.paths.checkpoint.as_ref(),
        "checkpoint",
        "checkpoint",
    )?;
    let model: Classifier<f32> = load_checkpoint(&checkpoint_path)?;
    let report = esd_alpha(&model);
    write_file(&args.out, &report.to_csv())?;
    eprintln!(
        "spectra for {} weight matrices -> {}",
        report.layers.len(),
        args.out.display()
    );
    Ok(())
}
