//! Command line front end. Every subcommand is a thin wrapper over a library
//! call; exit codes come from [`Error::exit_code`].

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::data::{
    filter_cqa, generate_spec_pairs, load_jsonl, restrict_positive_fraction, sample_negatives, save_jsonl,
    split_by_product, CqaRecord, FilterConfig, QaPair, SpecQuestion,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, run_experiment_grid, GridConfig, GridData};
use crate::model::Model;
use crate::serve::{rank_product, AnswerTemplates, Catalog, ServeConfig};
use crate::synth::{generate, SynthConfig};
use crate::text::{load_embeddings, EmbeddingOptions, DEFAULT_OOV_SEED};
use crate::train::{file_digest, finetune, fit, load_checkpoint, save_checkpoint, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "specqa", version, about = "Rank product specifications against customer questions")]
struct Cli {
    /// Also write the run manifest to this file.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean a CQA corpus and sample negatives.
    Preprocess(PreprocessArgs),
    /// Cross catalog questions with every specification of their product.
    Pairs(PairsArgs),
    /// Split pairs into train/dev/test by product.
    Split(SplitArgs),
    /// Train a model from scratch.
    Train(TrainArgs),
    /// Continue training from a checkpoint on new data.
    Finetune(FinetuneArgs),
    /// Report MRR and accuracy on labeled pairs.
    Eval(EvalArgs),
    /// Rank one product's specifications for a question.
    Rank(RankArgs),
    /// Run the fraction × pretrained grid over several seeds.
    Grid(GridArgs),
    /// Serve ranking over HTTP.
    Serve(ServeArgs),
    /// Write a synthetic source corpus, catalog and embeddings.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    negatives: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-q-tokens", default_value_t = 30)]
    max_q_tokens: usize,
    #[arg(long = "max-a-tokens", default_value_t = 50)]
    max_a_tokens: usize,
}

#[derive(Args, Debug)]
struct PairsArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.1, 0.1])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes `<prefix>.train.jsonl`, `<prefix>.dev.jsonl`, `<prefix>.test.jsonl`.
    #[arg(long = "out-prefix")]
    out_prefix: String,
}

/// Training knobs that override the config file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// `key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long = "cell-variant")]
    cell_variant: Option<String>,
    #[arg(long)]
    fraction: Option<f64>,
}

impl Overrides {
    fn apply(&self, mut cfg: TrainConfig) -> Result<TrainConfig> {
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_kv(&text)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k, v)?;
        }
        let flags: [(&str, Option<String>); 9] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("learning_rate", self.lr.map(|v| v.to_string())),
            ("epochs_max", self.epochs.map(|v| v.to_string())),
            ("hidden", self.hidden.map(|v| v.to_string())),
            ("patience", self.patience.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("optimizer", self.optimizer.clone()),
            ("cell_variant", self.cell_variant.clone()),
            ("fraction", self.fraction.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn config_path(&self) -> Option<&Path> {
        self.config.as_deref()
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RankArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    question: String,
    #[arg(long = "product-file")]
    product_file: PathBuf,
    #[arg(long = "product-id")]
    product_id: String,
    #[arg(long = "top-k")]
    top_k: Option<usize>,
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Print the same JSON body the HTTP service returns.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long = "source-train")]
    source_train: Option<PathBuf>,
    #[arg(long = "source-dev")]
    source_dev: Option<PathBuf>,
    #[arg(long = "target-train")]
    target_train: PathBuf,
    #[arg(long = "target-dev")]
    target_dev: PathBuf,
    #[arg(long = "target-test")]
    target_test: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0])]
    fractions: Vec<f64>,
    /// Number of seeds, counted up from the config's `seed`.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Only run the from-scratch rows.
    #[arg(long = "no-pretrain")]
    no_pretrain: bool,
    /// `key=value` overrides for the source phase, applied on top of the
    /// shared config.
    #[arg(long = "pretrain-config")]
    pretrain_config: Option<PathBuf>,
    #[arg(long = "out-json")]
    out_json: Option<PathBuf>,
    #[arg(long = "out-text")]
    out_text: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    products: Option<usize>,
    #[arg(long = "source-records")]
    source_records: Option<usize>,
    #[arg(long = "embedding-dim")]
    embedding_dim: Option<usize>,
}

/// Provenance record for one mutating invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

struct Recorder {
    config: Value,
    inputs: Vec<InputDigest>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    fn new() -> Self {
        Recorder {
            config: Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).unwrap_or(Value::Null)
}

fn preprocess(a: &PreprocessArgs, rec: &mut Recorder) -> Result<()> {
    rec.input(&a.input)?;
    let records: Vec<CqaRecord> = load_jsonl(&a.input)?;
    let config = FilterConfig {
        max_question_tokens: a.max_q_tokens,
        max_answer_tokens: a.max_a_tokens,
        ..Default::default()
    };
    rec.config = json!({"filter": to_value(&config), "negatives": a.negatives, "seed": a.seed});
    let (kept, mut report) = filter_cqa(&records, &config);
    let pairs = sample_negatives(&kept, a.negatives, a.seed)?;
    report.record_sampling(&pairs);
    save_jsonl(&a.out, &pairs)?;
    rec.output(&a.out);
    if let Some(path) = &a.report {
        write_json(path, &report)?;
        rec.output(path);
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn pairs(a: &PairsArgs, rec: &mut Recorder) -> Result<()> {
    rec.input(&a.catalog)?;
    rec.input(&a.questions)?;
    let catalog = Catalog::load(&a.catalog)?;
    let questions: Vec<SpecQuestion> = load_jsonl(&a.questions)?;
    let mut out = Vec::new();
    for summary in catalog.summaries() {
        let product = catalog.get(&summary.product_id).expect("listed product");
        let qs: Vec<(&str, &str)> = questions
            .iter()
            .filter(|q| q.product_id == product.product_id)
            .map(|q| (q.question.as_str(), q.spec_name.as_str()))
            .collect();
        out.extend(generate_spec_pairs(product, &qs)?);
    }
    if let Some(q) = questions.iter().find(|q| catalog.get(&q.product_id).is_none()) {
        return Err(Error::UnknownProduct(q.product_id.clone()));
    }
    save_jsonl(&a.out, &out)?;
    rec.output(&a.out);
    println!("{} pairs", out.len());
    Ok(())
}

fn split(a: &SplitArgs, rec: &mut Recorder) -> Result<()> {
    rec.input(&a.input)?;
    let ratios: [f64; 3] = a
        .ratios
        .clone()
        .try_into()
        .map_err(|_| Error::Config("--ratios needs three values".into()))?;
    rec.config = json!({"ratios": ratios, "seed": a.seed});
    let pairs: Vec<QaPair> = load_jsonl(&a.input)?;
    let s = split_by_product(&pairs, ratios, a.seed)?;
    for (name, part) in [("train", &s.train), ("dev", &s.dev), ("test", &s.test)] {
        let path = PathBuf::from(format!("{}.{name}.jsonl", a.out_prefix));
        save_jsonl(&path, part)?;
        rec.output(&path);
        println!("{name}: {} pairs, {} products", part.len(), crate::data::Split::product_ids(part).len());
    }
    Ok(())
}

fn print_fit_summary(ckpt: &crate::train::Checkpoint) {
    match (ckpt.best_epoch, ckpt.best_dev_mrr) {
        (Some(e), Some(m)) => println!("best epoch {e}, dev MRR {m:.6}, {} epochs run", ckpt.history.len()),
        _ => println!("no epochs run"),
    }
}

fn train(a: &TrainArgs, rec: &mut Recorder) -> Result<()> {
    let cfg = a.overrides.apply(TrainConfig::default())?;
    rec.config = to_value(&cfg);
    for p in [&a.train, &a.dev, &a.embeddings] {
        rec.input(p)?;
    }
    if let Some(p) = a.overrides.config_path() {
        rec.input(p)?;
    }
    let options = EmbeddingOptions {
        vocab_limit: cfg.vocab_limit,
        oov_seed: DEFAULT_OOV_SEED,
    };
    let (vocab, table) = load_embeddings(&a.embeddings, options)?;
    let train: Vec<QaPair> = load_jsonl(&a.train)?;
    let dev: Vec<QaPair> = load_jsonl(&a.dev)?;
    let train = restrict_positive_fraction(&train, cfg.fraction, cfg.seed)?;
    let mut model = Model::new(cfg.model_config(), vocab, table, cfg.seed, DEFAULT_OOV_SEED)?;
    let ckpt = fit(&mut model, &train, &dev, &cfg)?;
    save_checkpoint(&a.out, &ckpt)?;
    rec.output(&a.out);
    print_fit_summary(&ckpt);
    Ok(())
}

fn finetune_cmd(a: &FinetuneArgs, rec: &mut Recorder) -> Result<()> {
    rec.input(&a.from)?;
    let from = load_checkpoint(&a.from)?;
    let cfg = a.overrides.apply(from.config.clone())?;
    rec.config = to_value(&cfg);
    for p in [&a.train, &a.dev] {
        rec.input(p)?;
    }
    if let Some(p) = a.overrides.config_path() {
        rec.input(p)?;
    }
    let train: Vec<QaPair> = load_jsonl(&a.train)?;
    let dev: Vec<QaPair> = load_jsonl(&a.dev)?;
    let train = restrict_positive_fraction(&train, cfg.fraction, cfg.seed)?;
    let (_, ckpt) = finetune(&from, &train, &dev, &cfg)?;
    save_checkpoint(&a.out, &ckpt)?;
    rec.output(&a.out);
    print_fit_summary(&ckpt);
    Ok(())
}

fn eval_cmd(a: &EvalArgs, rec: &mut Recorder) -> Result<()> {
    rec.input(&a.ckpt)?;
    rec.input(&a.test)?;
    let model = load_checkpoint(&a.ckpt)?.to_model()?;
    let test: Vec<QaPair> = load_jsonl(&a.test)?;
    let report = evaluate(&model, &test)?;
    if let Some(path) = &a.out {
        write_json(path, &report)?;
        rec.output(path);
    }
    println!("MRR {:.6}  accuracy {:.6}  groups {}", report.mrr, report.accuracy, report.group_count);
    Ok(())
}

fn rank(a: &RankArgs) -> Result<()> {
    let model = load_checkpoint(&a.ckpt)?.to_model()?;
    let catalog = Catalog::load(&a.product_file)?;
    let templates = match &a.templates {
        Some(p) => AnswerTemplates::load(p)?,
        None => AnswerTemplates::default(),
    };
    let product = catalog
        .get(&a.product_id)
        .ok_or_else(|| Error::UnknownProduct(a.product_id.clone()))?;
    if a.top_k == Some(0) {
        return Err(Error::Config("--top-k must be at least 1".into()));
    }
    let response = rank_product(&model, product, &a.question, a.top_k, &templates)?;
    if a.json {
        println!("{}", serde_json::to_string(&response).expect("response serializes"));
    } else {
        for (i, r) in response.ranked.iter().enumerate() {
            println!("{:>3}  {:.6}  {} = {}", i + 1, r.probability, r.spec_name, r.spec_value);
        }
        println!("{}", response.answer_sentence);
    }
    Ok(())
}

fn grid(a: &GridArgs, rec: &mut Recorder) -> Result<()> {
    let finetune_cfg = a.overrides.apply(TrainConfig::default())?;
    let mut pretrain_cfg = finetune_cfg.clone();
    if let Some(p) = &a.pretrain_config {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        pretrain_cfg.apply_kv(&text)?;
        pretrain_cfg.validate()?;
        rec.input(p)?;
    }
    let include_pretrained = !a.no_pretrain;
    let (source_train, source_dev) = if include_pretrained {
        let (st, sd) = match (&a.source_train, &a.source_dev) {
            (Some(t), Some(d)) => (t, d),
            _ => {
                return Err(Error::Config(
                    "--source-train and --source-dev are required unless --no-pretrain".into(),
                ))
            }
        };
        rec.input(st)?;
        rec.input(sd)?;
        (load_jsonl(st)?, load_jsonl(sd)?)
    } else {
        (Vec::new(), Vec::new())
    };
    for p in [&a.target_train, &a.target_dev, &a.target_test, &a.embeddings] {
        rec.input(p)?;
    }
    let options = EmbeddingOptions {
        vocab_limit: finetune_cfg.vocab_limit,
        oov_seed: DEFAULT_OOV_SEED,
    };
    let (vocab, embeddings) = load_embeddings(&a.embeddings, options)?;
    let data = GridData {
        vocab,
        embeddings,
        oov_seed: DEFAULT_OOV_SEED,
        source_train,
        source_dev,
        target_train: load_jsonl(&a.target_train)?,
        target_dev: load_jsonl(&a.target_dev)?,
        target_test: load_jsonl(&a.target_test)?,
    };
    let base = finetune_cfg.seed;
    let config = GridConfig {
        fractions: a.fractions.clone(),
        seeds: (0..a.seeds).map(|i| base + i).collect(),
        pretrain: pretrain_cfg,
        finetune: finetune_cfg,
        include_pretrained,
    };
    rec.config = to_value(&config);
    let table = run_experiment_grid(&data, &config)?;
    let text = table.to_text();
    print!("{text}");
    if let Some(p) = &a.out_json {
        write_json(p, &table)?;
        rec.output(p);
    }
    if let Some(p) = &a.out_text {
        std::fs::write(p, &text).map_err(|e| Error::io(p, e))?;
        rec.output(p);
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
    runtime.block_on(crate::serve::run(ServeConfig {
        addr: a.addr,
        checkpoint: a.ckpt.clone(),
        catalog: a.catalog.clone(),
        templates: a.templates.clone(),
    }))
}

fn synth(a: &SynthArgs, rec: &mut Recorder) -> Result<()> {
    let defaults = SynthConfig::default();
    let config = SynthConfig {
        seed: a.seed,
        products: a.products.unwrap_or(defaults.products),
        source_records: a.source_records.unwrap_or(defaults.source_records),
        embedding_dim: a.embedding_dim.unwrap_or(defaults.embedding_dim),
        ..defaults
    };
    rec.config = to_value(&config);
    let data = generate(&config)?;
    data.write_to(&a.out_dir)?;
    for name in ["cqa.jsonl", "catalog.jsonl", "spec_questions.jsonl", "embeddings.txt"] {
        rec.output(&a.out_dir.join(name));
    }
    println!(
        "{} source records, {} products, {} questions, {} tokens",
        data.cqa.len(),
        data.catalog.len(),
        data.spec_questions.len(),
        data.vocab.known_len()
    );
    Ok(())
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    let started = Instant::now();
    let mut rec = Recorder::new();
    let result = match &cli.command {
        Command::Preprocess(a) => preprocess(a, &mut rec),
        Command::Pairs(a) => pairs(a, &mut rec),
        Command::Split(a) => split(a, &mut rec),
        Command::Train(a) => train(a, &mut rec),
        Command::Finetune(a) => finetune_cmd(a, &mut rec),
        Command::Eval(a) => eval_cmd(a, &mut rec),
        Command::Rank(a) => rank(a),
        Command::Grid(a) => grid(a, &mut rec),
        Command::Serve(a) => serve(a),
        Command::Synth(a) => synth(a, &mut rec),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    let mutating = !matches!(cli.command, Command::Rank(_) | Command::Serve(_));
    if mutating {
        let manifest = RunManifest {
            command_line: args.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
            config: rec.config,
            inputs: rec.inputs,
            outputs: rec.outputs,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        };
        eprintln!(
            "manifest: {}",
            serde_json::to_string(&manifest).expect("manifest serializes")
        );
        if let Some(path) = &cli.manifest {
            if let Err(e) = write_json(path, &manifest) {
                eprintln!("error: {e}");
                return e.exit_code();
            }
        }
    }
    0
}
