use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use fer_cli::{config, input, predict, service};
use fer_core::augment::AugmentPolicy;
use fer_core::data::{load_fer2013, Usage, CLASS_NAMES};
use fer_core::nn::{Model, Preset};
use fer_core::optim::{OptimizerConfig, OptimizerKind};
use fer_core::rng::streams;
use fer_core::store::{load_model, save_model};
use fer_core::train::{evaluate, train, write_history_csv, ClassWeighting, Monitor, TrainConfig};
use fer_core::Rng;

const DATA_ENV: &str = "FER_DATA_DIR";
const DATA_FILE: &str = "fer2013.csv";

#[derive(Debug, Parser)]
#[command(name = "fer", version, about = "Facial expression recognition on 48×48 grayscale faces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on the Training split, validating on PublicTest.
    Train(TrainArgs),
    /// Report accuracy, per-class precision/recall and the confusion matrix.
    Eval(EvalArgs),
    /// Classify one 48×48 image (PGM P5/P2, or a row of 2304 integers).
    Predict(PredictArgs),
    /// Run the HTTP inference service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct TrainArgs {
    /// key=value file mirroring these flags; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fer2013.csv, or a directory holding it [default: $FER_DATA_DIR/fer2013.csv]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Where to write the selected (best) model.
    #[arg(long, default_value = "model.ferm")]
    out: PathBuf,
    /// fer-ref-v1 or fer-tiny.
    #[arg(long, default_value = "fer-ref-v1")]
    preset: Preset,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// sgd, momentum, adam, nadam or adamax.
    #[arg(long, default_value = "nadam")]
    optimizer: OptimizerKind,
    /// Epochs without improvement before stopping [default: min(10, epochs)]
    #[arg(long)]
    patience: Option<usize>,
    /// val_loss or val_accuracy.
    #[arg(long, default_value = "val_loss")]
    monitor: Monitor,
    /// Stratified fraction of the Training and PublicTest splits to use.
    #[arg(long, default_value_t = 1.0)]
    subset: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable training-time augmentation.
    #[arg(long)]
    no_augment: bool,
    /// balanced or none.
    #[arg(long, default_value = "balanced")]
    class_weights: ClassWeighting,
    /// History CSV path [default: <out>.history.csv]
    #[arg(long)]
    history: Option<PathBuf>,
    /// Also write the best-by-val-loss and best-by-val-accuracy models next to --out.
    #[arg(long)]
    checkpoints: bool,
    /// Store wall-clock seconds in the history (otherwise 0, for reproducible files).
    #[arg(long)]
    record_timing: bool,
}

/// Train flags that take no value, as spelled in config files.
const TRAIN_SWITCHES: &[&str] = &["no-augment", "checkpoints", "record-timing"];

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Training,
    PublicTest,
    PrivateTest,
}

impl From<SplitArg> for Usage {
    fn from(split: SplitArg) -> Self {
        match split {
            SplitArg::Training => Usage::Training,
            SplitArg::PublicTest => Usage::PublicTest,
            SplitArg::PrivateTest => Usage::PrivateTest,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// fer2013.csv, or a directory holding it [default: $FER_DATA_DIR/fer2013.csv]
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::PrivateTest)]
    split: SplitArg,
    /// Write the 7×7 confusion matrix as CSV.
    #[arg(long)]
    confusion: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    batch: usize,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    image: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory of browser assets served at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

fn usage_error(message: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ValueValidation, message).exit()
}

/// Resolves `--data`, falling back to `$FER_DATA_DIR`.
fn dataset_path(arg: Option<PathBuf>) -> PathBuf {
    let path = match arg.or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from)) {
        Some(p) => p,
        None => Cli::command()
            .error(
                ErrorKind::MissingRequiredArgument,
                format!("--data is required (or set {DATA_ENV})"),
            )
            .exit(),
    };
    if path.is_dir() {
        path.join(DATA_FILE)
    } else {
        path
    }
}

/// `m.ferm` → `m.<suffix>`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

/// Re-parses `fer train` with the config file's entries in front of the
/// real arguments, so explicit flags override the file.
fn with_config(args: TrainArgs) -> Result<(TrainArgs, Vec<config::Entry>)> {
    let Some(path) = args.config.clone() else {
        return Ok((args, Vec::new()));
    };
    let entries = config::read(&path)?;
    let command = Cli::command();
    let train = command.find_subcommand("train").expect("train subcommand");
    let flags: Vec<&str> = train
        .get_arguments()
        .filter_map(|a| a.get_long())
        .filter(|&l| l != "config" && l != "help")
        .collect();
    let file_args = config::to_args(&entries, &flags, TRAIN_SWITCHES)?;
    let mut argv: Vec<String> = std::env::args().collect();
    let at = argv.iter().position(|a| a == "train").expect("train subcommand present") + 1;
    argv.splice(at..at, file_args);
    match Cli::try_parse_from(argv) {
        Ok(Cli {
            command: Command::Train(args),
        }) => Ok((args, entries)),
        Ok(_) => unreachable!("argv still names the train subcommand"),
        Err(e) => e.exit(),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let (args, entries) = with_config(args)?;
    let augment = if args.no_augment {
        None
    } else {
        Some(config::apply_augment(&entries, AugmentPolicy::default())?)
    };
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        optimizer: OptimizerConfig {
            learning_rate: args.lr,
            ..OptimizerConfig::with_kind(args.optimizer)
        },
        patience: args.patience.unwrap_or(args.epochs.min(10)),
        monitor: args.monitor,
        seed: args.seed,
        subset_fraction: args.subset,
        augment,
        class_weighting: args.class_weights,
        record_timing: args.record_timing,
    };
    if let Err(e) = config.validate() {
        usage_error(e);
    }
    let data_path = dataset_path(args.data);

    let data = load_fer2013(&data_path)?;
    eprint!("{}", data.summary());
    let model = Model::preset(args.preset, &mut Rng::stream(args.seed, &[streams::INIT]))?;
    eprintln!(
        "training {} ({} parameters), {} optimizer, batch {}, up to {} epochs",
        args.preset,
        model.param_count(),
        args.optimizer,
        args.batch,
        args.epochs
    );
    let epochs = args.epochs;
    let mut observer = |r: &fer_core::train::EpochRecord, elapsed: std::time::Duration| {
        eprintln!(
            "epoch {:>3}/{epochs}  train loss {:.4} acc {:.4}  val loss {:.4} acc {:.4}  {:.1}s",
            r.epoch,
            r.train_loss,
            r.train_accuracy,
            r.val_loss,
            r.val_accuracy,
            elapsed.as_secs_f64()
        );
    };
    let outcome = train(model, &data.training, &data.public_test, &config, Some(&mut observer))?;
    if outcome.stopped_early {
        eprintln!(
            "stopped early after epoch {}: no {} improvement for {} epochs",
            outcome.history.len(),
            config.monitor,
            config.patience
        );
    }

    save_model(&outcome.best_model, &args.out)?;
    println!("best epoch {} by {}: wrote {}", outcome.best_epoch, config.monitor, args.out.display());
    if args.checkpoints {
        for (suffix, (epoch, model)) in [
            ("best-loss.ferm", &outcome.best_by_loss),
            ("best-acc.ferm", &outcome.best_by_accuracy),
        ] {
            let path = sibling(&args.out, suffix);
            save_model(model, &path)?;
            println!("epoch {epoch}: wrote {}", path.display());
        }
    }
    let history = args.history.unwrap_or_else(|| sibling(&args.out, "history.csv"));
    write_history_csv(&outcome.history, &history).with_context(|| format!("cannot write {}", history.display()))?;
    println!("wrote {}", history.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    if args.batch == 0 {
        usage_error("--batch must be at least 1");
    }
    let data_path = dataset_path(args.data);
    let model = load_model(&args.model)?;
    let data = load_fer2013(&data_path)?;
    let usage = Usage::from(args.split);
    let metrics = evaluate(&model, data.split(usage), args.batch)?;
    println!("split {usage}");
    print!("{}", metrics.report());
    if let Some(path) = args.confusion {
        fs::write(&path, metrics.confusion.to_csv()).with_context(|| format!("cannot write {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let bytes = fs::read(&args.image).with_context(|| format!("cannot read {}", args.image.display()))?;
    let pixels = input::decode(&bytes).with_context(|| args.image.display().to_string())?;
    let prediction = predict::predict_pixels(&model, &pixels)?;
    println!("label {}", prediction.label_name());
    for (name, p) in CLASS_NAMES.iter().zip(prediction.probabilities) {
        println!("{name:<9} {p}");
    }
    Ok(())
}

async fn cmd_serve(args: ServeArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    predict::check_model(&model)?;
    if let Some(dir) = &args.static_dir {
        anyhow::ensure!(dir.is_dir(), "static directory {} does not exist", dir.display());
    }
    let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
        .await
        .with_context(|| format!("cannot bind {}:{}", args.host, args.port))?;
    eprintln!("serving {} on http://{}", args.model.display(), listener.local_addr()?);
    let app = service::router(Arc::new(model), args.static_dir);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Serve(args) => tokio::runtime::Runtime::new()
            .context("cannot start the async runtime")
            .and_then(|rt| rt.block_on(cmd_serve(args))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
