mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spikedec::cells::RecurrenceKind;
use spikedec::model::Track;

/// Spike-train velocity decoder: training, evaluation, benchmarking,
/// streaming simulation and sweeps.
///
/// File formats:
///   recordings  NDR1 binary ("NDR1", u32 C, u32 bin_us, u64 T, T×C u8 counts,
///               T×2 f32 velocities, little-endian) or CSV with header
///               t,ch0..chN,vx,vy (selected by the .csv extension)
///   checkpoints <prefix>.manifest.json + <prefix>.weights.bin (f32 LE)
///   reports     JSON with keys footprint_bytes, connection_sparsity,
///               activation_sparsity, dense, macs, acs, r2
///
/// Exit status: 0 success, 1 usage error, 2 data or model error.
/// SPIKEDEC_THREADS caps the number of worker threads.
#[derive(Parser, Debug)]
#[command(name = "spikedec", version, verbatim_doc_comment)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a decoder and save the best checkpoint.
    Train(TrainArgs),
    /// Predict velocities for a recording and report R².
    Eval(EvalArgs),
    /// Compute the benchmark metrics of a checkpoint on a test recording.
    Bench(BenchArgs),
    /// Generate a synthetic reaching recording and its train/val/test split.
    Synth(SynthArgs),
    /// Run a checkpoint bin by bin as a streaming decoder.
    Stream(StreamArgs),
    /// Train and benchmark a series of configurations.
    Sweep(SweepArgs),
    /// Plot predicted against true velocities, or interpolation overlays.
    Plot(PlotArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Architecture preset.
    #[arg(long, default_value = "track2")]
    track: Track,
    /// Recurrent unit: gru, lif or sgru.
    #[arg(long, default_value = "gru")]
    recurrence: RecurrenceKind,
    /// Override the preset's recurrent hidden size.
    #[arg(long)]
    hidden: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    /// Maximum number of epochs.
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Windows per optimizer step.
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Seed for initialisation and shuffling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory holding train.ndr and val.ndr (as written by `synth`).
    #[arg(long, required_unless_present_all = ["train", "val"])]
    data: Option<PathBuf>,
    /// Training recording (overrides --data).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Validation recording (overrides --data).
    #[arg(long)]
    val: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Checkpoint prefix to write.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch history CSV (epoch,train_loss,val_r2).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint prefix or manifest path.
    #[arg(long)]
    ckpt: PathBuf,
    /// Recording to evaluate (NDR1 or CSV).
    #[arg(long)]
    data: PathBuf,
    /// Predictions CSV: window,t,pred_vx,pred_vy,vx,vy.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Checkpoint prefix or manifest path.
    #[arg(long)]
    ckpt: PathBuf,
    /// Test recording (NDR1 or CSV).
    #[arg(long)]
    data: PathBuf,
    /// JSON report path; printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write the report as a one-row CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory; receives recording.ndr, train.ndr, val.ndr, test.ndr.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 96)]
    channels: usize,
    /// Simulated duration in seconds.
    #[arg(long, default_value_t = 1200.0)]
    seconds: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Baseline firing rate in Hz.
    #[arg(long, default_value_t = 10.0)]
    base_hz: f64,
    /// Tuning depth in Hz per mm/bin of velocity.
    #[arg(long, default_value_t = 30.0)]
    gain_hz: f64,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.5,0.25,0.25", value_delimiter = ',', num_args = 3)]
    split: Vec<f64>,
    /// Write CSV recordings instead of NDR1.
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Debug)]
pub struct StreamArgs {
    /// Checkpoint prefix or manifest path.
    #[arg(long)]
    ckpt: PathBuf,
    /// Recording whose bins are pushed one at a time.
    #[arg(long)]
    data: PathBuf,
    /// Only stream the first N bins.
    #[arg(long)]
    bins: Option<usize>,
    /// Emitted velocities CSV: t,vx,vy.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Directory holding train.ndr, val.ndr and test.ndr.
    #[arg(long)]
    data: PathBuf,
    /// Keypoint counts to sweep (1025, 513, 257, 129, ...).
    #[arg(long, value_delimiter = ',', conflicts_with = "sizes")]
    keypoints: Vec<usize>,
    /// Hidden sizes to sweep on the chosen preset.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Conv channels of keypoint-sweep configurations.
    #[arg(long, default_value_t = 10)]
    channels: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Predictions CSV written by `eval --out`.
    #[arg(long, required_unless_present = "overlay")]
    predictions: Option<PathBuf>,
    /// Recording for an interpolation overlay of true velocities.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Interpolation strides of the overlay.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
    strides: Vec<usize>,
    /// First bin of the overlay excerpt.
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Length of the overlay excerpt in bins.
    #[arg(long, default_value_t = 1024)]
    len: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// An error caused by how the tool was invoked rather than by the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("SPIKEDEC_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| UsageError(format!("SPIKEDEC_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(UsageError("SPIKEDEC_THREADS must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<spikedec::Error>() {
        Some(spikedec::Error::Usage(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::Synth(a) => commands::synth(a),
        Command::Stream(a) => commands::stream(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Plot(a) => plot::run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
