//! `thpi`: command-line front end for training, encoding, evaluating and
//! benchmarking hash models.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use thpi_core::data::{load_matrix, make_split, save_matrix};
use thpi_core::eval::{evaluate, EvalOptions};
use thpi_core::experiment::{run_bench, train_on_split, RunConfig};
use thpi_core::linalg::orthonormality_error;
use thpi_core::model::{load_model, save_model};
use thpi_core::synth::{write_dataset, SynthConfig};
use thpi_core::{DataMatrix, Error, MatrixFormat, Method, Result};

#[derive(Parser)]
#[command(name = "thpi", version, about = "Transfer hashing with privileged information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-view dataset.
    Synth(SynthArgs),
    /// Split a parallel corpus into training, unpaired and test parts.
    Split(SplitArgs),
    /// Train one model and write it with its objective log.
    Train(TrainArgs),
    /// Encode a matrix into ±1 codes with a trained model.
    Encode(EncodeArgs),
    /// Evaluate a model on a database and query set.
    Eval(EvalArgs),
    /// Run the method × bits × seed grid and write aggregate tables.
    Bench(BenchArgs),
    /// Print the contents of a model file.
    InspectModel(InspectArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1100)]
    n_pairs: usize,
    #[arg(long, default_value_t = 64)]
    d_target: usize,
    #[arg(long, default_value_t = 64)]
    d_source: usize,
    #[arg(long, default_value_t = 16)]
    latent_dim: usize,
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    /// Target-view noise standard deviation.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 0.5)]
    source_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by `split`, `train` and `bench`. Every flag that is given
/// overrides the value from `--config`.
#[derive(Args, Default)]
struct RunFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    source: Option<String>,
    /// Input matrix format; inferred from the file extension when absent.
    #[arg(long)]
    format: Option<MatrixFormat>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    lambda1: Option<String>,
    #[arg(long)]
    lambda2: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    /// Early-stop relative tolerance, or `off`.
    #[arg(long)]
    tolerance: Option<String>,
    #[arg(long)]
    pca_energy: Option<String>,
    #[arg(long)]
    test_fraction: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl RunFlags {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        [
            ("target", &self.target),
            ("source", &self.source),
            ("alpha", &self.alpha),
            ("lambda1", &self.lambda1),
            ("lambda2", &self.lambda2),
            ("k", &self.k),
            ("iters", &self.iters),
            ("tolerance", &self.tolerance),
            ("pca_energy", &self.pca_energy),
            ("test_fraction", &self.test_fraction),
            ("out", &self.out),
        ]
        .into_iter()
        .filter_map(|(key, v)| v.as_deref().map(|v| (key, v)))
        .collect()
    }

    fn config(&self, extra: &[(&'static str, &Option<String>)]) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for (key, value) in self.overrides() {
            cfg.set(key, value)?;
        }
        for (key, value) in extra {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn load_pair(&self, cfg: &RunConfig) -> Result<(DataMatrix, DataMatrix)> {
        let target = required(&cfg.target, "--target")?;
        let source = required(&cfg.source, "--source")?;
        let t = load(target, self.format)?;
        let s = load(source, self.format)?;
        Ok((t, s))
    }
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    run: RunFlags,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunFlags,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    bits: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Matrix to encode.
    #[arg(long)]
    input: PathBuf,
    /// Format of both input and output; inferred from extensions if absent.
    #[arg(long)]
    format: Option<MatrixFormat>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    database: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    format: Option<MatrixFormat>,
    #[arg(long, default_value_t = thpi_core::eval::DEFAULT_GT_RANK)]
    r_groundtruth: usize,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    /// Output directory for the report files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "report")]
    name: String,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunFlags,
    /// Comma-separated method list.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    bits: Option<String>,
    /// Comma-separated seeds or a range such as `0..10`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    r_groundtruth: Option<String>,
    #[arg(long)]
    ks: Option<String>,
    /// `train` or `all`.
    #[arg(long)]
    database: Option<String>,
}

#[derive(Args)]
struct InspectArgs {
    model: PathBuf,
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("{flag} is required")))
}

fn load(path: &Path, format: Option<MatrixFormat>) -> Result<DataMatrix> {
    load_matrix(path, format.unwrap_or_else(|| MatrixFormat::from_path(path)))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_pairs: args.n_pairs,
        d_target: args.d_target,
        d_source: args.d_source,
        latent_dim: args.latent_dim,
        clusters: args.clusters,
        noise: args.noise,
        source_noise: args.source_noise,
        seed: args.seed,
        ..SynthConfig::default()
    };
    write_dataset(&cfg, &args.out)?;
    println!("wrote {} pairs to {}", cfg.n_pairs, args.out.display());
    Ok(())
}

fn cmd_split(args: &SplitArgs) -> Result<()> {
    let cfg = args.run.config(&[])?;
    let seed: u64 = match &args.seed {
        Some(s) => s
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad seed `{s}`")))?,
        None => cfg.seeds[0],
    };
    let out = required(&cfg.out, "--out")?;
    let (t, s) = args.run.load_pair(&cfg)?;
    let split = make_split(&t, &s, cfg.alpha, cfg.test_fraction, seed)?;
    let parts = [
        ("target_train", Some(&split.target_train)),
        ("source_corr", Some(&split.source_corr)),
        ("source_extra", split.source_extra.as_ref()),
        ("target_extra", split.target_extra.as_ref()),
        ("target_test", split.target_test.as_ref()),
    ];
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    for (name, part) in parts {
        if let Some(m) = part {
            save_matrix(m, &out.join(format!("{name}.bin")), MatrixFormat::ThpiBin)?;
        }
    }
    let join = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
    let indices = format!(
        "seed={seed}\nalpha={}\ncorr={}\nextra={}\ntest={}\n",
        cfg.alpha,
        join(&split.corr_indices),
        join(&split.extra_indices),
        join(&split.test_indices)
    );
    write_text(&out.join("indices.txt"), &indices)?;
    println!(
        "correspondences={} unpaired={} test={}",
        split.n_corr(),
        split.n_extra(),
        split.test_indices.len()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = args.run.config(&[("methods", &args.method), ("bits", &args.bits), ("seeds", &args.seed)])?;
    // Without --seed the first configured seed is used.
    let seed = cfg.seeds[0];
    let (method, bits) = match (&cfg.methods[..], &cfg.bits[..]) {
        ([m], [b]) => (*m, *b),
        _ => {
            return Err(Error::InvalidArgument(
                "train needs exactly one method and one bit length".into(),
            ))
        }
    };
    let out = required(&cfg.out, "--out")?.to_path_buf();
    let (t, s) = args.run.load_pair(&cfg)?;
    // Dataset consistency is checked by the split before training starts.
    let split = make_split(&t, &s, cfg.alpha, cfg.test_fraction, seed)?;
    info!("training {method} with {bits} bits on {} correspondences", split.n_corr());
    let trained = train_on_split(method, bits, &split, &cfg, seed)?;
    save_model(&trained.model, &out)?;
    let log_path = out.with_extension("log");
    write_text(&log_path, &trained.log_lines())?;
    println!(
        "wrote {} ({} objective lines in {})",
        out.display(),
        trained.objective_trace.len(),
        log_path.display()
    );
    Ok(())
}

fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let x = load(&args.input, args.format)?;
    let codes = model.encode(&x)?;
    let out_format = args.format.unwrap_or_else(|| MatrixFormat::from_path(&args.out));
    save_matrix(&DataMatrix::new(codes.to_matrix())?, &args.out, out_format)?;
    println!("encoded {} rows into {} bits", codes.rows(), codes.bits());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let database = load(&args.database, args.format)?;
    let queries = load(&args.queries, args.format)?;
    let mut opts = EvalOptions {
        r: args.r_groundtruth,
        ..EvalOptions::default()
    };
    if let Some(ks) = &args.ks {
        opts.ks = ks.clone();
    }
    let report = evaluate(&model, &database, &queries, &opts)?;
    report.write_files(&args.out, &args.name)?;
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let cfg = args.run.config(&[
        ("methods", &args.method),
        ("bits", &args.bits),
        ("seeds", &args.seeds),
        ("workers", &args.workers),
        ("r_groundtruth", &args.r_groundtruth),
        ("ks", &args.ks),
        ("database", &args.database),
    ])?;
    let out = required(&cfg.out, "--out")?.to_path_buf();
    let (t, s) = args.run.load_pair(&cfg)?;
    let outcome = run_bench(&t, &s, &cfg)?;
    outcome.write_files(&out)?;
    print!("{}", outcome.map_table_csv());
    Ok(())
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let h = model.hyperparams();
    println!("method={}", model.method());
    println!("bits={}", model.bits());
    println!("input_dim={}", model.input_dim());
    println!(
        "preprocessing={} {}x{}",
        model.preprocessing().kind(),
        model.preprocessing().d_in(),
        model.preprocessing().d_out()
    );
    println!("lambda1={}", h.lambda1);
    println!("lambda2={}", h.lambda2);
    println!("k={}", h.k_graph);
    println!("iters={}", h.iters);
    println!("seed={}", h.seed);
    if model.method() != Method::Lsh {
        println!("orthonormality_error={:e}", orthonormality_error(model.rotation()));
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => 2,
        Error::Dimension(_) | Error::Parse { .. } | Error::Version { .. } | Error::Io { .. } => 3,
        Error::Numerical(_) => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::InspectModel(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
