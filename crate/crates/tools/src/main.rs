use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tnn_tools::{Command, RunConfig};

#[derive(Parser)]
#[command(name = "tnn", version, about = "Adversarial training and generalization bounds for t-product networks")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Adversarial generalization gap against training-set size, per rank cap.
    GapVsN(Common),
    /// Stable ranks, adversarial risk and weight norms during over-parameterized training.
    ImplicitBias(Common),
    /// Stable ranks with and without the tubal nuclear-norm prox step.
    NuclearReg(Common),
    /// Evaluate every generalization bound for the given inputs.
    Bounds(Common),
    /// Run the fixed-seed property suite; exits non-zero on any failure.
    Verify(Common),
    /// Truncate a model to low tubal rank and certify the output distance.
    Compress(Common),
    /// Re-run a previous run from its manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Plain `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// identity, dct or custom:<path>
    #[arg(long)]
    transform: Option<String>,
    /// fgm, fgsm, pgd2 or pgdinf
    #[arg(long)]
    attack: Option<String>,
    #[arg(long)]
    xi: Option<f64>,
    /// exponential or logistic
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Minibatch size (0 = full batch).
    #[arg(long)]
    batch: Option<usize>,
    /// Hidden width of the t-product layers.
    #[arg(long)]
    width: Option<usize>,
    /// Number of t-product layers.
    #[arg(long)]
    layers: Option<usize>,
    /// Comma-separated ranks (`full` for no cap).
    #[arg(long)]
    ranks: Option<String>,
    /// Comma-separated nuclear-norm strengths.
    #[arg(long)]
    lambda: Option<String>,
    /// Comma-separated training-set sizes for gap-vs-n.
    #[arg(long)]
    n_values: Option<String>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Model checkpoint (TNNW) for compress.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, requires = "mnist_labels")]
    mnist_images: Option<PathBuf>,
    #[arg(long, requires = "mnist_images")]
    mnist_labels: Option<PathBuf>,
    /// Use seeded synthetic data (the default).
    #[arg(long, conflicts_with = "mnist_images")]
    synth: bool,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.push((k.into(), v));
            }
        };
        put("seed", self.seed.map(|v| v.to_string()));
        put("transform", self.transform.clone());
        put("attack", self.attack.clone());
        put("xi", self.xi.map(|v| v.to_string()));
        put("loss", self.loss.clone());
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("batch", self.batch.map(|v| v.to_string()));
        put("width", self.width.map(|v| v.to_string()));
        put("layers", self.layers.map(|v| v.to_string()));
        put("ranks", self.ranks.clone());
        put("lambda", self.lambda.clone());
        put("n_values", self.n_values.clone());
        put("n_train", self.n_train.map(|v| v.to_string()));
        put("n_test", self.n_test.map(|v| v.to_string()));
        put("repeats", self.repeats.map(|v| v.to_string()));
        put("model", self.model.as_ref().map(|p| p.display().to_string()));
        put("mnist_images", self.mnist_images.as_ref().map(|p| p.display().to_string()));
        put("mnist_labels", self.mnist_labels.as_ref().map(|p| p.display().to_string()));
        if self.synth {
            put("data", Some("synth".into()));
        }
        for s in &self.set {
            match s.split_once('=') {
                Some((k, v)) => put(k.trim(), Some(v.trim().into())),
                None => put(s, Some(String::new())),
            }
        }
        kv
    }

    fn build(&self, command: Command) -> tnn_tools::Result<RunConfig> {
        let mut cfg = RunConfig::defaults(command);
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (k, v) in self.overrides() {
            cfg.set(&k, &v).map_err(|e| tnn_tools::ToolError::Config(format!("--{k}: {e}")))?;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Sub::Replay { manifest, out } => tnn_tools::replay(manifest, out),
        other => {
            let (command, common) = match other {
                Sub::GapVsN(c) => (Command::GapVsN, c),
                Sub::ImplicitBias(c) => (Command::ImplicitBias, c),
                Sub::NuclearReg(c) => (Command::NuclearReg, c),
                Sub::Bounds(c) => (Command::Bounds, c),
                Sub::Verify(c) => (Command::Verify, c),
                Sub::Compress(c) => (Command::Compress, c),
                Sub::Replay { .. } => unreachable!("handled above"),
            };
            common.build(command).and_then(|cfg| tnn_tools::run(&cfg, &common.out))
        }
    };
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
