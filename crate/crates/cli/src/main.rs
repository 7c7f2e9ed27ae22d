use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "pannbeam", version, about = "Beam potentials from cross-section warping, neural surrogates and beam simulations")]
struct Cli {
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mesh a circular or ring cross-section.
    Mesh(MeshArgs),
    /// Sample load paths, solve the warping problem and write a dataset.
    Gendata(GendataArgs),
    /// Calibrate a neural beam potential.
    Train(TrainArgs),
    /// Weighted stress losses of one or more models on a dataset.
    Eval(EvalArgs),
    /// Energy, resultants and stiffness of a model at one strain state.
    Predict(PredictArgs),
    /// Run a beam scenario with the linear model or a trained potential.
    Simulate(SimulateArgs),
    /// Architecture or data-size study.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct MeshArgs {
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 0.0)]
    inner_radius: f64,
    #[arg(long, default_value_t = 800)]
    elements: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GendataArgs {
    /// Geometry grid as `R:P` pairs, e.g. `1.0:0,0.3:0`.
    #[arg(long, default_value = "1.0:0")]
    geometry: String,
    #[arg(long, default_value_t = 64)]
    paths: usize,
    /// Relative perturbation of each sampled state.
    #[arg(long, default_value_t = 0.1)]
    perturb: f64,
    /// Amplitude ladder: `min:max:count` or a comma-separated list.
    #[arg(long, default_value = "0.02:0.6:31")]
    amplitudes: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target triangle count of each cross-section mesh.
    #[arg(long, default_value_t = 800)]
    elements: usize,
    #[arg(long, default_value_t = 70.0)]
    youngs: f64,
    #[arg(long, default_value_t = 0.4)]
    poisson: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Plain,
    Sym,
    Ti,
}

#[derive(Args, Debug, Clone)]
struct TrainOptions {
    #[arg(long, value_enum, default_value_t = VariantArg::Sym)]
    variant: VariantArg,
    /// Feed the ring ratio P to the network.
    #[arg(long)]
    param_ring: bool,
    /// Hidden widths, e.g. `32` or `32,32`.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    epochs: usize,
    #[arg(long, default_value_t = 500)]
    patience: usize,
    #[arg(long, default_value_t = 0.002)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Reference radius of the model (defaults to the largest radius in the data).
    #[arg(long)]
    r_ref: Option<f64>,
    /// Separate validation dataset.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Paths held out of `--data` for validation.
    #[arg(long, default_value_t = 0)]
    val_paths: usize,
    /// Paths held out of `--data` for testing.
    #[arg(long, default_value_t = 0)]
    test_paths: usize,
    /// Keep only every k-th load step of the training and validation data.
    #[arg(long, default_value_t = 1)]
    every: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    opts: TrainOptions,
    #[arg(long)]
    out_model: PathBuf,
    /// Per-epoch loss history (CSV); final metrics go next to it as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// One or more model files; several are summarized as an ensemble.
    #[arg(long, required = true, num_args = 1..)]
    model: Vec<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Per-path losses (CSV).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// `e1,e2,e3,k1,k2,k3`.
    #[arg(long, allow_hyphen_values = true)]
    strain: String,
    #[arg(long = "P")]
    ratio: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scenario {
    Bend,
    Compress,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    scenario: Scenario,
    /// `lem` or the path of a model file.
    #[arg(long, default_value = "lem")]
    constitutive: String,
    #[arg(long, default_value_t = 10.0)]
    length: f64,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 16)]
    elements: usize,
    /// Load steps (defaults: 20 for bending, 50 for compression).
    #[arg(long)]
    steps: Option<usize>,
    /// End moment for bending (defaults to the LEM half-turn moment EI·π/L).
    #[arg(long)]
    moment: Option<f64>,
    /// End shortening for compression (defaults to 30% of the length).
    #[arg(long)]
    shortening: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepAxis {
    Nodes,
    Paths,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: SweepAxis,
    /// Values of the swept quantity, comma-separated.
    #[arg(long)]
    grid: String,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    opts: TrainOptions,
    /// Independent runs per grid value (seeds `seed .. seed + runs`).
    #[arg(long, default_value_t = 1)]
    runs: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(j) = cli.jobs {
        if let Err(e) = commands::set_jobs(j) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Mesh(a) => commands::mesh(a),
        Command::Gendata(a) => commands::gendata(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Predict(a) => commands::predict(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
