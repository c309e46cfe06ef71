use std::fs::File;
use std::fmt::Write as _;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use joint_dst::checkpoint::{self, Checkpoint};
use joint_dst::data::synth::{generate_splits, Domain};
use joint_dst::data::{build_vocab, load_corpus, simdial, write_corpus, Dialogue};
use joint_dst::eval::{evaluate, format_table, TableRow};
use joint_dst::repl::{format_prediction, ReplEvent, ReplSession};
use joint_dst::training::{grid_search, init_model, train, GridSpec, MetricsSummary, SsSetup, TrainConfig};
use joint_dst::Error;

const DATA_DIR_ENV: &str = "JOINT_DST_DATA_DIR";

#[derive(Parser)]
#[command(name = "joint-dst", version, about = "Joint language understanding and dialogue state tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a JSON-lines log.
    Train(TrainArgs),
    /// Evaluate a checkpoint in inference mode.
    Eval(EvalArgs),
    /// Interactive session over a checkpoint.
    Repl {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Sweep learning rate, embedding size and p_min; keep the best on dev.
    Gridsearch(GridArgs),
    /// Print checkpoint metadata and parameter shapes.
    InspectCheckpoint {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write a synthetic corpus in the canonical JSON format.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Training corpus: a canonical JSON file or a data directory.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Dev corpus: a canonical JSON file or a data directory.
    #[arg(long)]
    dev_corpus: Option<PathBuf>,
    /// Default data directory, read when no corpus path is given.
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// `key = value` config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Inputs sampled from model predictions: none, tags, state or both.
    #[arg(long)]
    ss: Option<SsSetup>,
    /// Give the tracker its own utterance and state encoders.
    #[arg(long)]
    separate_encoders: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Checkpoint path.
    #[arg(long)]
    output: Option<PathBuf>,
    /// JSON-lines training log path.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corpus file or data directory; defaults to the data directory.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// Write each turn's scored state as JSON lines.
    #[arg(long)]
    dump_states: Option<PathBuf>,
    /// Write the full metrics report, bitmaps included, as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    ss: Option<SsSetup>,
    #[arg(long)]
    separate_encoders: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    learning_rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    embed_dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    p_mins: Option<Vec<f64>>,
    /// Checkpoint path for the selected model.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Restaurant,
    Movie,
    Both,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "both")]
    domain: DomainArg,
    /// Dialogues per split and domain: train,dev,test.
    #[arg(long, value_delimiter = ',', default_values_t = [384, 120, 264])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability that a dev/test entity value was seen in training.
    #[arg(long, default_value_t = 0.5)]
    seen_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

/// CLI failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Diverged { .. } => 3,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

/// Loads `split` from a corpus file, a data directory or the default
/// data directory, in that order.
fn resolve_corpus(path: Option<&Path>, data_dir: Option<&Path>, split: &str) -> Result<Vec<Dialogue>, Failure> {
    let source = path.or(data_dir).ok_or_else(|| {
        usage(format!(
            "no corpus given for the {split} split; pass --corpus or set {DATA_DIR_ENV}"
        ))
    })?;
    if !source.exists() {
        return Err(usage(format!("corpus path {} does not exist", source.display())));
    }
    let corpus = if source.is_dir() {
        simdial::load_split(source, split)?
    } else {
        load_corpus(source)?
    };
    if corpus.is_empty() {
        return Err(usage(format!("corpus {} has no dialogues", source.display())));
    }
    Ok(corpus)
}

/// Dev data is optional: an explicit path must exist, the data directory
/// is used only when it holds a dev split.
fn resolve_dev(path: Option<&Path>, data_dir: Option<&Path>) -> Result<Option<Vec<Dialogue>>, Failure> {
    if path.is_some() {
        return resolve_corpus(path, None, "dev").map(Some);
    }
    match data_dir {
        Some(dir) if dir.is_dir() => match simdial::load_split(dir, "dev") {
            Ok(c) if !c.is_empty() => Ok(Some(c)),
            _ => Ok(None),
        },
        _ => Ok(None),
    }
}

fn base_config(config: Option<&Path>) -> Result<TrainConfig, Failure> {
    match config {
        Some(p) if !p.exists() => Err(usage(format!("config file {} does not exist", p.display()))),
        Some(p) => Ok(TrainConfig::load(p)?),
        None => Ok(TrainConfig::default()),
    }
}

fn apply_flags(cfg: &mut TrainConfig, ss: Option<SsSetup>, separate: bool, seed: Option<u64>, steps: Option<usize>) {
    if let Some(ss) = ss {
        cfg.ss = ss;
    }
    if separate {
        cfg.model.separate_encoders = true;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(steps) = steps {
        cfg.steps = steps;
    }
}

fn run_train(args: TrainArgs) -> Result<(), Failure> {
    let mut cfg = base_config(args.config.as_deref())?;
    apply_flags(&mut cfg, args.ss, args.separate_encoders, args.seed, args.steps);
    if args.data.corpus.is_some() {
        cfg.corpus = args.data.corpus;
    }
    if args.data.dev_corpus.is_some() {
        cfg.dev_corpus = args.data.dev_corpus;
    }
    if args.output.is_some() {
        cfg.output = args.output;
    }
    if args.log.is_some() {
        cfg.log = args.log;
    }
    cfg.output.get_or_insert_with(|| PathBuf::from("model.json"));
    cfg.validate()?;
    let corpus = resolve_corpus(cfg.corpus.as_deref(), args.data.data_dir.as_deref(), "train")?;
    let dev = resolve_dev(cfg.dev_corpus.as_deref(), args.data.data_dir.as_deref())?;
    let vocab = build_vocab(&corpus, cfg.min_token_freq)?;
    let mut model = init_model(&cfg, vocab)?;
    log::info!(
        "training {} parameters on {} dialogues for {} steps (ss = {})",
        model.num_parameters(),
        corpus.len(),
        cfg.steps,
        cfg.ss
    );
    let mut log_file = match &cfg.log {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    let outcome = train(&mut model, &corpus, dev.as_deref(), &cfg, &mut |r| {
        let line = serde_json::to_string(r)?;
        if let Some(f) = log_file.as_mut() {
            writeln!(f, "{line}")?;
        }
        if r.dev.is_some() || r.step == cfg.steps {
            println!("{line}");
        }
        Ok(())
    })?;
    if let Some(mut f) = log_file {
        f.flush()?;
    }
    let out = cfg.output.as_deref().unwrap_or(Path::new("model.json"));
    log::info!(
        "final loss {:.4}; unreachable slot targets {:.4}; checkpoint {}",
        outcome.final_loss,
        outcome.unreachable_fraction,
        out.display()
    );
    if let Some((step, m)) = outcome.best_dev {
        log::info!("best dev joint goal {:.4} at step {step}", m.joint_goal_accuracy);
    }
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<(), Failure> {
    let model = checkpoint::load(&args.checkpoint)?;
    let corpus = resolve_corpus(args.corpus.as_deref(), args.data_dir.as_deref(), &args.split)?;
    model.vocab.check_compatible(&corpus)?;
    let (report, predictions) = evaluate(&model, &corpus)?;
    let setup = if model.config.separate_encoders { "separate" } else { "joint" };
    let row = TableRow {
        eval_set: &args.split,
        setup: "-",
        separate: model.config.separate_encoders.then_some(&report),
        joint: (!model.config.separate_encoders).then_some(&report),
    };
    print!("{}", format_table(&[row]));
    let record = serde_json::json!({
        "checkpoint": args.checkpoint.display().to_string(),
        "split": args.split,
        "model": setup,
        "turns": report.turns,
        "metrics": MetricsSummary::from(&report),
    });
    println!("{record}");
    if let Some(p) = &args.report {
        std::fs::write(p, serde_json::to_string_pretty(&report).map_err(Error::from)?)?;
    }
    if let Some(p) = &args.dump_states {
        let mut f = BufWriter::new(File::create(p)?);
        for (d, preds) in corpus.iter().zip(&predictions) {
            for (t, pred) in preds.iter().enumerate() {
                let line = serde_json::json!({
                    "dialogue": d.id,
                    "turn": t,
                    "state": pred.scored_state,
                });
                writeln!(f, "{line}")?;
            }
        }
        f.flush()?;
    }
    Ok(())
}

fn run_repl(path: &Path) -> Result<(), Failure> {
    let model = checkpoint::load(path)?;
    let mut repl = ReplSession::new(&model);
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    println!("loaded {} ({} parameters); type `help` for commands", path.display(), model.num_parameters());
    loop {
        write!(out, "> ")?;
        out.flush()?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 {
            break;
        }
        match repl.handle_line(&line)? {
            ReplEvent::Empty => {}
            ReplEvent::SystemActs(acts) => println!("system acts set ({})", acts.len()),
            ReplEvent::Reset => println!("state:\n  (empty)"),
            ReplEvent::Turn(p) => print!("{}", format_prediction(&p)),
            ReplEvent::Usage(u) => println!("{u}"),
            ReplEvent::Quit => break,
        }
    }
    Ok(())
}

fn run_grid(args: GridArgs) -> Result<(), Failure> {
    let mut cfg = base_config(args.config.as_deref())?;
    apply_flags(&mut cfg, args.ss, args.separate_encoders, args.seed, args.steps);
    let corpus = resolve_corpus(
        args.data.corpus.as_deref().or(cfg.corpus.as_deref()),
        args.data.data_dir.as_deref(),
        "train",
    )?;
    let dev = resolve_dev(
        args.data.dev_corpus.as_deref().or(cfg.dev_corpus.as_deref()),
        args.data.data_dir.as_deref(),
    )?
    .ok_or_else(|| usage("gridsearch needs a dev corpus (--dev-corpus or a data directory with a dev split)"))?;
    let mut grid = GridSpec::default();
    if let Some(v) = args.learning_rates {
        grid.learning_rates = v;
    }
    if let Some(v) = args.embed_dims {
        grid.embed_dims = v;
    }
    if let Some(v) = args.p_mins {
        grid.p_mins = v;
    }
    let (results, best) = grid_search(&cfg, &grid, &corpus, &dev, &mut |r| {
        if let Ok(line) = serde_json::to_string(r) {
            println!("{line}");
        }
    })?;
    if let Some(i) = joint_dst::training::select_best(&results) {
        println!("{}", serde_json::json!({ "selected": results[i] }));
    }
    let out = args.output.or(cfg.output).unwrap_or_else(|| PathBuf::from("model.json"));
    checkpoint::save(&best, &out)?;
    Ok(())
}

fn run_inspect(path: &Path) -> Result<(), Failure> {
    if !path.exists() {
        return Err(usage(format!("checkpoint {} does not exist", path.display())));
    }
    let text = std::fs::read_to_string(path)?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = String::new();
    let _ = writeln!(out, "format version: {}", ck.format_version);
    let _ = writeln!(out, "feature layout: {}", ck.feature_layout);
    let _ = writeln!(out, "config: {}", serde_json::to_string(&ck.config).map_err(Error::from)?);
    let _ = writeln!(out, "vocab fingerprint: {}", ck.vocab.fingerprint());
    let _ = writeln!(out, 
        "labels: {} intents, {} user acts, {} system acts, {} slots",
        ck.vocab.intents.len(),
        ck.vocab.user_acts.len(),
        ck.vocab.system_acts.len(),
        ck.vocab.slots.len()
    );
    let total: usize = ck.params.values().map(|p| p.values.len()).sum();
    let _ = writeln!(out, "parameters: {total}");
    for (id, p) in &ck.params {
        let _ = writeln!(out, "  {id} {:?}", p.shape);
    }
    if let Err(e) = std::io::stdout().lock().write_all(out.as_bytes()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            return Err(e.into());
        }
    }
    Ok(())
}

fn run_synth(args: SynthArgs) -> Result<(), Failure> {
    let [train_n, dev_n, test_n] = args.sizes[..] else {
        return Err(usage("--sizes takes three counts: train,dev,test"));
    };
    if !(0.0..=1.0).contains(&args.seen_fraction) {
        return Err(usage("--seen-fraction must lie in [0, 1]"));
    }
    let domains: &[Domain] = match args.domain {
        DomainArg::Restaurant => &[Domain::Restaurant],
        DomainArg::Movie => &[Domain::Movie],
        DomainArg::Both => &[Domain::Restaurant, Domain::Movie],
    };
    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &domain) in domains.iter().enumerate() {
        let s = generate_splits(domain, (train_n, dev_n, test_n), args.seed + i as u64, args.seen_fraction);
        train.extend(s.train);
        dev.extend(s.dev);
        test.extend(s.test);
    }
    std::fs::create_dir_all(&args.out)?;
    for (name, split) in [("train", &train), ("dev", &dev), ("test", &test)] {
        write_corpus(args.out.join(format!("{name}.json")), split)?;
        println!("{name}: {} dialogues", split.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Repl { checkpoint } => run_repl(&checkpoint),
        Command::Gridsearch(a) => run_grid(a),
        Command::InspectCheckpoint { checkpoint } => run_inspect(&checkpoint),
        Command::Synth(a) => run_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
