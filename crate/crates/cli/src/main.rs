use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stgc::checkpoint::{self, CheckpointMeta};
use stgc::data::{self, Split, SynthSpec};
use stgc::spectral::{channel_responses, graph_spectrum};
use stgc::trainer::{self, TrainConfig};
use stgc::verify::{self, Suite};
use stgc::{Error, StaticGraph};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_FORMAT: u8 = 4;
const EXIT_NUMERIC: u8 = 5;
const EXIT_DIVERGED: u8 = 6;
const EXIT_VERIFY: u8 = 7;

#[derive(Parser)]
#[command(name = "stgc", version, about = "Spatio-temporal graph convolution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split of a dataset.
    Eval(EvalArgs),
    /// Run the numerical self-checks.
    Verify(VerifyArgs),
    /// Dump per-channel frequency responses of a checkpoint's first layer.
    Spectrum(SpectrumArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataFlags {
    /// Frames sampled per sequence.
    #[arg(long)]
    segments: Option<usize>,
    /// Random scale jitter during training (true/false).
    #[arg(long)]
    jitter: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON training configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: DataFlags,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Frames sampled per sequence (defaults to the checkpoint's value).
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// spectral, stability, gradients or all.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Edge list: `n m` header then `i j [weight]` lines.
    #[arg(long)]
    graph: PathBuf,
    /// Layer whose spatial filter is reported.
    #[arg(long, default_value_t = 0)]
    layer: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 50)]
    per_class: usize,
    #[arg(long, default_value_t = 25)]
    test_per_class: usize,
    #[arg(long, default_value_t = 15)]
    joints: usize,
    #[arg(long, default_value_t = 12)]
    frames: usize,
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Verification ran but some check failed.
#[derive(Debug)]
struct VerifyFailed(usize);

impl std::fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} check(s) failed", self.0)
    }
}

impl std::error::Error for VerifyFailed {}

fn read_config(path: Option<&Path>) -> anyhow::Result<TrainConfig> {
    let Some(path) = path else {
        return Ok(TrainConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(Error::from)
        .with_context(|| format!("reading {}", path.display()))?;
    let cfg = serde_json::from_str(&text)
        .map_err(Error::from)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(cfg)
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = read_config(args.config.as_deref())?;
    if let Some(s) = args.flags.segments {
        cfg.segments = s;
    }
    if let Some(j) = args.flags.jitter {
        cfg.jitter = j;
    }
    if let Some(s) = args.flags.seed {
        cfg.seed = s;
    }
    let dataset = data::load_dataset(&args.data).with_context(|| format!("loading {}", args.data.display()))?;
    let quiet = args.quiet;
    let outcome = trainer::train_with(&dataset, &cfg, |s| {
        if !quiet {
            let test = s
                .test_accuracy
                .map(|a| format!("{a:.4}"))
                .unwrap_or_else(|| "-".into());
            eprintln!(
                "epoch {:>4}  loss {:.5}  train {:.4}  test {}  max_w_sum {:.6}",
                s.epoch + 1,
                s.mean_loss,
                s.train_accuracy,
                test,
                s.max_w_norm_sum
            );
        }
    })?;
    let meta = CheckpointMeta {
        model: cfg.model.clone(),
        n_nodes: outcome.net.n_nodes(),
        n_classes: dataset.n_classes(),
        class_names: dataset.class_names.clone(),
        segments: cfg.segments,
        epsilon: cfg.epsilon,
        epochs_run: outcome.history.len(),
    };
    checkpoint::save(&outcome.net, &meta, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {} after {} epochs",
        args.out.display(),
        outcome.history.len()
    );
    Ok(())
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let (net, meta) = checkpoint::load(&args.ckpt).with_context(|| format!("loading {}", args.ckpt.display()))?;
    let dataset = data::load_dataset(&args.data).with_context(|| format!("loading {}", args.data.display()))?;
    let graph = trainer::shared_graph(&dataset)?;
    let mut test = dataset.part(Split::Test);
    if test.is_empty() {
        test = dataset.sequences.iter().collect();
    }
    let metrics = trainer::evaluate(&net, &graph, &test, args.segments.unwrap_or(meta.segments))?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&metrics)?);
        return Ok(());
    }
    println!("sequences  {}", test.len());
    println!("accuracy   {:.4}", metrics.accuracy);
    println!("class      precision  recall");
    for (c, name) in meta.class_names.iter().enumerate() {
        println!("{:<10} {:<10.4} {:.4}", name, metrics.precision[c], metrics.recall[c]);
    }
    Ok(())
}

fn verify_cmd(args: VerifyArgs) -> anyhow::Result<()> {
    let suite: Suite = args.suite.parse()?;
    let checks = verify::run(suite, args.seed)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&checks)?);
    } else {
        for c in &checks {
            println!("{c}");
        }
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(VerifyFailed(failed).into());
    }
    Ok(())
}

fn spectrum(args: SpectrumArgs) -> anyhow::Result<()> {
    let (net, _) = checkpoint::load(&args.ckpt).with_context(|| format!("loading {}", args.ckpt.display()))?;
    let text = std::fs::read_to_string(&args.graph)
        .map_err(Error::from)
        .with_context(|| format!("reading {}", args.graph.display()))?;
    let graph = StaticGraph::<f64>::parse_edge_list(&text)?;
    let Some(bank) = net.layers().get(args.layer) else {
        bail!(Error::Invalid(format!(
            "checkpoint has {} layers, asked for layer {}",
            net.layers().len(),
            args.layer
        )));
    };
    let decomp = graph_spectrum(&graph, 1e-12)?;
    println!("lambda,channel,response");
    for (lambda, channel, h) in channel_responses(&decomp.eigenvalues, bank) {
        println!("{lambda},{channel},{h}");
    }
    Ok(())
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let spec = SynthSpec {
        n_classes: args.classes,
        n_per_class: args.per_class,
        test_per_class: args.test_per_class,
        n_joints: args.joints,
        frames: args.frames,
        noise: args.noise,
    };
    let ds = data::synth_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(args.seed))?;
    data::save_dataset(&ds, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!("wrote {} sequences to {}", ds.len(), args.out.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<VerifyFailed>().is_some() {
        return EXIT_VERIFY;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Io(_)) => EXIT_IO,
        Some(Error::Parse { .. } | Error::Version { .. } | Error::Json(_)) => EXIT_FORMAT,
        Some(Error::Diverged { .. }) => EXIT_DIVERGED,
        Some(_) => EXIT_NUMERIC,
        None => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
