//! Command-line pipeline: prepare → train-embeddings → train → evaluate.
//!
//! Prepared data lives in one directory (`--data-dir`, or `SVAE_DATA_DIR`):
//!
//! * `vocab.tsv`: vocabulary built from the training sentences
//! * `train.txt`, `test.txt`: tokenized sentences, one per line
//! * `pi_train.tsv`, `pi_test.tsv`: `label<TAB>sentence a<TAB>sentence b`
//! * `embeddings.txt`: skip-gram word vectors
//!
//! Metric records go to stdout as `metric<TAB>value` lines and, with
//! `--records`, are appended to a file. Logs go to stderr.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, CheckpointError, RngState};
use crate::config::{ConfigError, RunConfig};
use crate::corpus::{
    filter_by_length, make_imputation_example, make_paraphrase_negatives, tokenize, CorpusError, ImputationExample,
    PairLabel, ParaphrasePair, Scenario, TokenId, TokenSeq, Vocab, EOS_ID,
};
use crate::embedding::{train_skipgram, EmbeddingError, EmbeddingMatrix};
use crate::svae::{stream_rng, Example, Model, SvaeError, Trainer, Variant};
use crate::tasks::{
    encode_pairs, eval_imputation, eval_language_modeling, eval_paraphrase, latent_code, mean_std, train_paraphrase,
    write_records, Metric, PiClassifier, Task, TaskError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

const VOCAB_FILE: &str = "vocab.tsv";
const TRAIN_FILE: &str = "train.txt";
const TEST_FILE: &str = "test.txt";
const PI_TRAIN_FILE: &str = "pi_train.tsv";
const PI_TEST_FILE: &str = "pi_test.tsv";
const EMBEDDINGS_FILE: &str = "embeddings.txt";

#[derive(Debug, Parser)]
#[command(
    name = "svae",
    version,
    about = "Sentence autoencoders (AE, VAE, SVAE) and their evaluation tasks"
)]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding prepared data.
    #[arg(long, global = true, env = "SVAE_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also append metric records to this file.
    #[arg(long, global = true)]
    pub records: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize raw text, build the vocabulary and write the datasets.
    Prepare(PrepareArgs),
    /// Train skip-gram word vectors on the prepared training sentences.
    TrainEmbeddings(EmbeddingArgs),
    /// Train a sentence model.
    Train(TrainArgs),
    /// Reconstruction BLEU on the test sentences.
    EvalLm(EvalArgs),
    /// Missing-word imputation on the test sentences.
    EvalImpute(ImputeArgs),
    /// Train paraphrase classifiers on frozen latent codes.
    TrainPi(TrainPiArgs),
    /// Evaluate the stored paraphrase classifiers.
    EvalPi(EvalArgs),
    /// Print the latent code of each input sentence.
    Encode(EncodeArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Raw training text, one sentence per line.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Paraphrase pairs `label<TAB>...<TAB>sentence a<TAB>sentence b`.
    #[arg(long)]
    pub pi_train: Option<PathBuf>,
    #[arg(long)]
    pub pi_test: Option<PathBuf>,
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EmbeddingArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Output file (default: `<data-dir>/embeddings.txt`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Stop after this many batches in total.
    #[arg(long)]
    pub max_batches: Option<u64>,
    /// Word vectors (default: `<data-dir>/embeddings.txt`).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Checkpoint to write after every epoch.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Test file (default: the prepared test split).
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub beam: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Scenario,
}

#[derive(Debug, Args)]
pub struct TrainPiArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Output checkpoint (default: overwrite the input checkpoint).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Raw sentences, one per line (default: stdin).
    #[arg(long)]
    pub input: Option<PathBuf>,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    Scenario::parse(s).ok_or_else(|| format!("unknown scenario `{s}` (expected s1, s2 or s3)"))
}

/// A failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => EXIT_USER,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::User(m) => write!(f, "error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

fn user(e: impl std::fmt::Display) -> CliError {
    CliError::User(e.to_string())
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        user(e)
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        user(e)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        user(e)
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        user(e)
    }
}

impl From<SvaeError> for CliError {
    fn from(e: SvaeError) -> Self {
        match e {
            SvaeError::Neural(_) => CliError::Internal(e.to_string()),
            other => user(other),
        }
    }
}

impl From<TaskError> for CliError {
    fn from(e: TaskError) -> Self {
        match e {
            TaskError::Neural(_) => CliError::Internal(e.to_string()),
            TaskError::Model(m) => m.into(),
            other => user(other),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::User(format!("{}: {e}", path.display()))
}

/// Parses `args` and runs the command, writing records to `out`. Returns
/// the process exit code.
pub fn run<I, T, W>(args: I, out: &mut W) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
    W: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USER } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Configuration precedence: defaults, `--config` file, global flags,
/// `--set` overrides.
fn base_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    apply_globals(cli, &mut c)?;
    Ok(c)
}

fn apply_globals(cli: &Cli, c: &mut RunConfig) -> Result<(), CliError> {
    if let Some(d) = &cli.data_dir {
        c.data_dir = d.clone();
    }
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::User(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        c.set(k, v)?;
    }
    Ok(())
}

fn log_config(c: &RunConfig) {
    info!("resolved configuration:\n{}", c.to_text().trim_end());
    info!("seed {}", c.seed);
}

fn execute<W: Write>(cli: &Cli, out: &mut W) -> Result<(), CliError> {
    let mut records: Vec<Metric> = Vec::new();
    let prefix = match &cli.command {
        Command::Prepare(a) => {
            prepare(cli, a)?;
            ""
        }
        Command::TrainEmbeddings(a) => {
            train_embeddings(cli, a)?;
            ""
        }
        Command::Train(a) => {
            records = train(cli, a)?;
            "train"
        }
        Command::EvalLm(a) => {
            records = eval_lm(cli, a)?;
            "lm"
        }
        Command::EvalImpute(a) => {
            records = eval_impute(cli, a)?;
            "impute"
        }
        Command::TrainPi(a) => {
            records = train_pi(cli, a)?;
            "pi_train"
        }
        Command::EvalPi(a) => {
            records = eval_pi(cli, a)?;
            "pi"
        }
        Command::Encode(a) => return encode(cli, a, out),
    };
    write_records(out, prefix, &records).map_err(|e| CliError::Internal(e.to_string()))?;
    if let Some(path) = &cli.records {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        let mut w = BufWriter::new(f);
        write_records(&mut w, prefix, &records).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))?;
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let f = File::open(path).map_err(io_err(path))?;
    BufReader::new(f)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Whitespace-separated tokens per line, skipping empty lines.
fn read_tokenized(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    Ok(read_lines(path)?
        .iter()
        .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect())
}

fn read_vocab(dir: &Path) -> Result<Vocab, CliError> {
    let path = dir.join(VOCAB_FILE);
    let f = File::open(&path).map_err(io_err(&path))?;
    Ok(Vocab::read(BufReader::new(f))?)
}

fn encode_all(vocab: &Vocab, sentences: &[Vec<String>]) -> Vec<Vec<TokenId>> {
    sentences.iter().map(|s| vocab.encode(s, false).into_inner()).collect()
}

/// Paraphrase file rows: label first, the two sentences last.
fn read_raw_pairs(path: &Path) -> Result<Vec<(bool, String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            continue;
        }
        let label = match fields[0].trim() {
            "1" => true,
            "0" => false,
            _ if i == 0 => continue,
            other => {
                return Err(CliError::User(format!(
                    "{}:{}: bad label `{other}`",
                    path.display(),
                    i + 1
                )))
            }
        };
        let n = fields.len();
        pairs.push((label, fields[n - 2].to_string(), fields[n - 1].to_string()));
    }
    Ok(pairs)
}

fn write_pairs(path: &Path, vocab: &Vocab, pairs: &[ParaphrasePair]) -> Result<(), CliError> {
    let mut s = String::new();
    for p in pairs {
        let label = u8::from(p.label.is_equivalent());
        s.push_str(&format!(
            "{label}\t{}\t{}\n",
            vocab.decode(&p.sent_a).join(" "),
            vocab.decode(&p.sent_b).join(" ")
        ));
    }
    write_text(path, &s)
}

fn read_pairs(path: &Path, vocab: &Vocab) -> Result<Vec<ParaphrasePair>, CliError> {
    read_raw_pairs(path)?
        .into_iter()
        .map(|(label, a, b)| {
            let words = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
            Ok(ParaphrasePair {
                sent_a: vocab.encode(&words(&a), false),
                sent_b: vocab.encode(&words(&b), false),
                label: if label {
                    PairLabel::Equivalent
                } else {
                    PairLabel::NotEquivalent
                },
            })
        })
        .collect()
}

fn prepare(cli: &Cli, a: &PrepareArgs) -> Result<(), CliError> {
    let mut c = base_config(cli)?;
    if let Some(m) = a.min_count {
        c.min_count = m;
    }
    if let Some(m) = a.max_len {
        c.max_len = m;
    }
    log_config(&c);
    let dir = &c.data_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let load = |p: &Path| -> Result<Vec<Vec<String>>, CliError> {
        let sents = read_lines(p)?.iter().map(|l| tokenize(l)).collect();
        Ok(filter_by_length(sents, c.max_len))
    };
    let train = load(&a.train)?;
    let vocab = Vocab::build(&train, c.min_count);
    info!("{} training sentences, vocabulary of {}", train.len(), vocab.len());
    let join = |s: &[Vec<String>]| s.iter().map(|w| w.join(" ") + "\n").collect::<String>();
    write_text(&dir.join(VOCAB_FILE), &vocab.to_text())?;
    write_text(&dir.join(TRAIN_FILE), &join(&train))?;
    if let Some(t) = &a.test {
        write_text(&dir.join(TEST_FILE), &join(&load(t)?))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    for (src, name) in [(&a.pi_train, PI_TRAIN_FILE), (&a.pi_test, PI_TEST_FILE)] {
        let Some(src) = src else { continue };
        let positives: Vec<ParaphrasePair> = read_raw_pairs(src)?
            .into_iter()
            .filter(|(label, _, _)| *label)
            .map(|(_, x, y)| (tokenize(&x), tokenize(&y)))
            .filter(|(x, y)| (1..=c.max_len).contains(&x.len()) && (1..=c.max_len).contains(&y.len()))
            .map(|(x, y)| ParaphrasePair {
                sent_a: vocab.encode(&x, false),
                sent_b: vocab.encode(&y, false),
                label: PairLabel::Equivalent,
            })
            .collect();
        let negatives = make_paraphrase_negatives(&positives, &vocab, &mut rng)?;
        info!(
            "{name}: {} positive and {} negative pairs",
            positives.len(),
            negatives.len()
        );
        let all: Vec<ParaphrasePair> = positives.into_iter().chain(negatives).collect();
        write_pairs(&dir.join(name), &vocab, &all)?;
    }
    Ok(())
}

fn train_embeddings(cli: &Cli, a: &EmbeddingArgs) -> Result<(), CliError> {
    let mut c = base_config(cli)?;
    if let Some(e) = a.epochs {
        c.sg_epochs = e;
    }
    log_config(&c);
    let vocab = read_vocab(&c.data_dir)?;
    let corpus = encode_all(&vocab, &read_tokenized(&c.data_dir.join(TRAIN_FILE))?);
    let emb = train_skipgram(&corpus, &vocab, &c.skipgram_config())?;
    let path = a.out.clone().unwrap_or_else(|| c.data_dir.join(EMBEDDINGS_FILE));
    let f = File::create(&path).map_err(io_err(&path))?;
    emb.write(&vocab, BufWriter::new(f))?;
    info!("wrote {}", path.display());
    Ok(())
}

/// Training examples for a task; sentences too short for an imputation
/// scenario are skipped.
pub fn task_examples(task: Task, sentences: &[Vec<TokenId>], seed: u64) -> Result<Vec<Example>, CliError> {
    match task {
        Task::Lm => Ok(sentences.iter().map(|s| Example::reconstruction(s, EOS_ID)).collect()),
        Task::Impute(sc) => Ok(imputation_examples(sentences, sc, seed)
            .iter()
            .map(|e| Example::imputation(e, EOS_ID))
            .collect()),
    }
}

/// Corrupted copies of every long-enough sentence, sentence `i` drawing
/// from rng stream `i`.
pub fn imputation_examples(sentences: &[Vec<TokenId>], scenario: Scenario, seed: u64) -> Vec<ImputationExample> {
    sentences
        .iter()
        .enumerate()
        .filter(|(_, s)| s.len() >= scenario.min_len())
        .map(|(i, s)| {
            let mut rng = stream_rng(seed, i as u64);
            make_imputation_example(s, scenario, &mut rng).expect("length checked")
        })
        .collect()
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<Vec<Metric>, CliError> {
    let resumed = match &a.resume {
        Some(p) => Some(Checkpoint::load(p, None)?),
        None => None,
    };
    let mut c = match &resumed {
        Some(ck) => {
            let mut c = ck.config.clone();
            apply_globals(cli, &mut c)?;
            c
        }
        None => base_config(cli)?,
    };
    if let Some(v) = a.variant {
        c.variant = v;
    }
    if let Some(t) = a.task {
        c.task = t;
    }
    if let Some(e) = a.epochs {
        c.epochs = e;
    }
    if let Some(b) = a.batch {
        c.batch_size = b;
    }
    if let Some(m) = a.max_batches {
        c.max_batches = m;
    }
    log_config(&c);

    let (vocab, embeddings, trainer) = match resumed {
        Some(ck) => {
            if ck.config.variant != c.variant || ck.config.task != c.task {
                return Err(CliError::User("cannot change variant or task when resuming".into()));
            }
            let model = ck.model();
            let adam = ck
                .optimizer
                .clone()
                .ok_or_else(|| CliError::User("checkpoint has no optimizer state".into()))?;
            let rng = ck
                .rng
                .as_ref()
                .ok_or_else(|| CliError::User("checkpoint has no rng state".into()))?
                .restore();
            let t = Trainer::resume(model, c.train_config(), adam, rng, ck.step, ck.epoch as usize)?;
            (ck.vocab, ck.embeddings, t)
        }
        None => {
            let vocab = read_vocab(&c.data_dir)?;
            let path = a.embeddings.clone().unwrap_or_else(|| c.data_dir.join(EMBEDDINGS_FILE));
            let f = File::open(&path).map_err(io_err(&path))?;
            let emb = EmbeddingMatrix::read(&vocab, BufReader::new(f))?;
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            let model = Model::new(c.model_config(vocab.len()), Arc::new(emb.clone()), &mut rng)?;
            (vocab, emb, Trainer::new(model, c.train_config())?)
        }
    };
    let mut trainer = trainer;
    let sentences = encode_all(&vocab, &read_tokenized(&c.data_dir.join(TRAIN_FILE))?);
    let data = task_examples(c.task, &sentences, c.seed)?;
    info!("{} training examples for task {}", data.len(), c.task);

    let mut last = None;
    while trainer.epoch < c.epochs && (c.max_batches == 0 || trainer.step < c.max_batches) {
        let start = trainer.epoch;
        while trainer.epoch == start && (c.max_batches == 0 || trainer.step < c.max_batches) {
            last = Some(trainer.train_batch(&data)?);
        }
        let ck = Checkpoint {
            config: c.clone(),
            vocab: vocab.clone(),
            embeddings: embeddings.clone(),
            params: trainer.model.params.clone(),
            classifiers: Vec::new(),
            step: trainer.step,
            epoch: trainer.epoch as u64,
            optimizer: Some(trainer.adam.clone()),
            rng: Some(RngState::capture(&trainer.rng)),
        };
        ck.save(&a.out)?;
        info!(
            "epoch {} done at step {}, saved {}",
            trainer.epoch,
            trainer.step,
            a.out.display()
        );
    }
    let mut records = vec![
        ("steps".to_string(), trainer.step as f64),
        ("epochs".to_string(), trainer.epoch as f64),
    ];
    if let Some(s) = last {
        records.push(("final_loss".into(), s.loss));
        records.push(("final_reconstruction".into(), s.reconstruction));
        records.push(("final_kld".into(), s.kld));
    }
    Ok(records)
}

fn load_checkpoint(path: &Option<PathBuf>) -> Result<Checkpoint, CliError> {
    let p = path
        .as_ref()
        .ok_or_else(|| CliError::User("--checkpoint is required".into()))?;
    Ok(Checkpoint::load(p, None)?)
}

/// Evaluation config: the checkpoint's run configuration with global
/// overrides applied on top.
fn eval_config(cli: &Cli, ck: &Checkpoint) -> Result<RunConfig, CliError> {
    let mut c = ck.config.clone();
    if let Some(p) = &cli.config {
        c.apply_text(&fs::read_to_string(p).map_err(io_err(p))?)?;
    }
    apply_globals(cli, &mut c)?;
    Ok(c)
}

fn test_sentences(c: &RunConfig, vocab: &Vocab, test: &Option<PathBuf>) -> Result<Vec<Vec<TokenId>>, CliError> {
    let path = test.clone().unwrap_or_else(|| c.data_dir.join(TEST_FILE));
    let sents: Vec<Vec<String>> = read_tokenized(&path)?
        .into_iter()
        .filter(|s| s.len() <= c.max_len)
        .collect();
    Ok(encode_all(vocab, &sents))
}

fn eval_lm(cli: &Cli, a: &EvalArgs) -> Result<Vec<Metric>, CliError> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let mut c = eval_config(cli, &ck)?;
    if let Some(b) = a.beam {
        c.beam = b;
    }
    log_config(&c);
    let sentences = test_sentences(&c, &ck.vocab, &a.test)?;
    let report = eval_language_modeling(&ck.model(), &sentences, &c.inference_config())?;
    Ok(report.records())
}

fn eval_impute(cli: &Cli, a: &ImputeArgs) -> Result<Vec<Metric>, CliError> {
    let ck = load_checkpoint(&a.eval.checkpoint)?;
    let mut c = eval_config(cli, &ck)?;
    if let Some(b) = a.eval.beam {
        c.beam = b;
    }
    log_config(&c);
    let sentences = test_sentences(&c, &ck.vocab, &a.eval.test)?;
    let examples = imputation_examples(&sentences, a.scenario, c.seed);
    let report = eval_imputation(
        &ck.model(),
        ck.config.task,
        &examples,
        a.scenario,
        &c.inference_config(),
    )?;
    Ok(report.records())
}

fn train_pi(cli: &Cli, a: &TrainPiArgs) -> Result<Vec<Metric>, CliError> {
    let mut ck = load_checkpoint(&a.checkpoint)?;
    let mut c = eval_config(cli, &ck)?;
    if let Some(r) = a.repeats {
        c.repeats = r;
    }
    if let Some(e) = a.epochs {
        c.pi_epochs = e;
    }
    log_config(&c);
    let model = ck.model();
    let pairs = read_pairs(&c.data_dir.join(PI_TRAIN_FILE), &ck.vocab)?;
    let latents = encode_pairs(&model, &pairs, c.latent_samples, c.seed)?;
    let input = 2 * model.config.code_dim();
    let mut classifiers = Vec::with_capacity(c.repeats);
    let mut errors = Vec::new();
    for k in 0..c.repeats {
        let cfg = c.pi_config(k);
        let init = PiClassifier::new(input, &mut stream_rng(cfg.seed, 1));
        let clf = train_paraphrase(init, &latents, &cfg)?;
        errors.push(eval_paraphrase(&clf, &latents)?.error_rate);
        classifiers.push(clf);
        info!("classifier {}/{} trained", k + 1, c.repeats);
    }
    ck.classifiers = classifiers;
    ck.config.repeats = c.repeats;
    ck.config.pi_epochs = c.pi_epochs;
    let out = a.out.clone().or_else(|| a.checkpoint.clone()).expect("checkpoint path");
    ck.save(&out)?;
    let (m, s) = mean_std(&errors);
    Ok(vec![
        ("train_error_rate.mean".into(), 100.0 * m),
        ("train_error_rate.std".into(), 100.0 * s),
        ("repeats".into(), c.repeats as f64),
    ])
}

fn eval_pi(cli: &Cli, a: &EvalArgs) -> Result<Vec<Metric>, CliError> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let c = eval_config(cli, &ck)?;
    log_config(&c);
    if ck.classifiers.is_empty() {
        return Err(CliError::User(
            "checkpoint holds no paraphrase classifier; run train-pi first".into(),
        ));
    }
    let path = a.test.clone().unwrap_or_else(|| c.data_dir.join(PI_TEST_FILE));
    let pairs = read_pairs(&path, &ck.vocab)?;
    let latents = encode_pairs(&ck.model(), &pairs, c.latent_samples, c.seed)?;
    let reports = ck
        .classifiers
        .iter()
        .map(|clf| eval_paraphrase(clf, &latents))
        .collect::<Result<Vec<_>, _>>()?;
    let mut records = Vec::new();
    let stat = |name: &str, vals: Vec<f64>, records: &mut Vec<Metric>| {
        let (m, s) = mean_std(&vals);
        records.push((format!("{name}.mean"), 100.0 * m));
        records.push((format!("{name}.std"), 100.0 * s));
    };
    stat(
        "error_rate",
        reports.iter().map(|r| r.error_rate).collect(),
        &mut records,
    );
    stat(
        "false_alarm_rate",
        reports.iter().map(|r| r.false_alarm_rate).collect(),
        &mut records,
    );
    stat("miss_rate", reports.iter().map(|r| r.miss_rate).collect(), &mut records);
    if let Some(cos) = reports[0].mean_pair_cosine {
        records.push(("mean_pair_cosine".into(), cos));
    }
    for (k, r) in reports.iter().enumerate() {
        for (name, v) in r.records() {
            if name != "mean_pair_cosine" {
                records.push((format!("r{k}.{name}"), v));
            }
        }
    }
    Ok(records)
}

fn encode<W: Write>(cli: &Cli, a: &EncodeArgs, out: &mut W) -> Result<(), CliError> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let c = eval_config(cli, &ck)?;
    log_config(&c);
    let lines = match &a.input {
        Some(p) => read_lines(p)?,
        None => io::stdin().lock().lines().collect::<Result<_, _>>().map_err(user)?,
    };
    let model = ck.model();
    for (i, line) in lines.iter().enumerate() {
        let words = tokenize(line);
        if words.is_empty() {
            continue;
        }
        let ids: TokenSeq = ck.vocab.encode(&words, false);
        let mut rng = stream_rng(c.seed, i as u64);
        let code = latent_code(&model, &ids, None, c.latent_samples, &mut rng)?;
        let text: Vec<String> = code.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", text.join(" ")).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    Ok(())
}
