use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aad_rgc::classifiers::{MeanEstimator, SvmCPolicy};
use aad_rgc::dataset::{list_subjects, read_recording, write_recording};
use aad_rgc::evaluation::{mesd, Method};
use aad_rgc::experiment::{
    curves_from_records, records_from_csv, run_experiment, summarize, ExperimentConfig, CONFIG_FILE, RESULTS_FILE,
};
use aad_rgc::synth::{generate_subject, SynthSpec};
use aad_rgc::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aad-rgc",
    version,
    about = "Auditory attention decoding with Riemannian and CSP classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset directory.
    Synth(SynthArgs),
    /// Cross-validate every subject and write results.csv, summary.json and config_resolved.json.
    Run(RunArgs),
    /// Recompute MESD from an accuracy CSV.
    Mesd(MesdArgs),
    /// Recompute the cross-subject summary from results.csv.
    Report(ReportArgs),
    /// Check that a dataset directory loads.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with synthetic-data settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, alias = "n_subjects")]
    n_subjects: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    fs: Option<f64>,
    #[arg(long)]
    minutes: Option<f64>,
    #[arg(long, alias = "trial_minutes")]
    trial_minutes: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    strength: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; every field can also be set by the flag of the same name.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// JSON file with synthetic-data settings, used instead of a dataset.
    #[arg(long)]
    synth: Option<PathBuf>,
    /// Comma-separated, e.g. RGC,CSP.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Comma-separated window lengths in seconds.
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, alias = "band_low_hz")]
    band_low_hz: Option<f64>,
    #[arg(long, alias = "band_high_hz")]
    band_high_hz: Option<f64>,
    #[arg(long, alias = "filter_order")]
    filter_order: Option<usize>,
    #[arg(long, alias = "target_fs")]
    target_fs: Option<f64>,
    #[arg(long, alias = "segment_len_s")]
    segment_len_s: Option<f64>,
    /// A positive number or `grid`.
    #[arg(long, alias = "svm_c")]
    svm_c: Option<SvmCPolicy>,
    /// `log-euclidean` or `iterative`.
    #[arg(long, alias = "mean_estimator")]
    mean_estimator: Option<MeanEstimator>,
    #[arg(long, alias = "csp_filters")]
    csp_filters: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MesdArgs {
    /// CSV with at least subject, method, window_len_s and accuracy columns.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// A results.csv, or a run directory containing one.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    dataset: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

macro_rules! override_fields {
    ($target:expr, $args:expr, $($field:ident),*) => {
        $(if let Some(v) = $args.$field { $target.$field = v; })*
    };
}

fn synth(args: SynthArgs) -> Result<(), Error> {
    let mut spec: SynthSpec = match &args.config {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    override_fields!(
        spec,
        args,
        n_subjects,
        channels,
        fs,
        minutes,
        trial_minutes,
        strength,
        noise,
        seed
    );
    for i in 0..spec.n_subjects {
        let rec = generate_subject(&spec, i)?;
        write_recording(&args.out, &rec)?;
        println!(
            "wrote subject {} ({} channels, {} samples)",
            rec.subject,
            rec.channels(),
            rec.samples()
        );
    }
    Ok(())
}

fn resolve_config(args: RunArgs) -> Result<ExperimentConfig, Error> {
    let mut config: ExperimentConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = args.dataset {
        config.dataset = Some(dir);
        config.synth = None;
    }
    if let Some(p) = &args.synth {
        config.synth = Some(read_json(p)?);
        config.dataset = None;
    }
    override_fields!(
        config,
        args,
        methods,
        windows,
        seed,
        band_low_hz,
        band_high_hz,
        filter_order,
        target_fs,
        segment_len_s,
        svm_c,
        mean_estimator,
        csp_filters,
        alpha,
        out
    );
    config.validate()?;
    Ok(config)
}

fn run(args: RunArgs) -> Result<bool, Error> {
    let config = resolve_config(args)?;
    let output = run_experiment(&config)?;
    println!(
        "{} rows written to {}",
        output.records.len(),
        config.out.join(RESULTS_FILE).display()
    );
    println!("resolved config in {}", config.out.join(CONFIG_FILE).display());
    for f in &output.failures {
        eprintln!("subject {} failed: {}", f.subject, f.error);
    }
    Ok(output.failures.is_empty())
}

fn read_records(path: &Path) -> Result<Vec<aad_rgc::experiment::ResultRecord>, Error> {
    let path = if path.is_dir() {
        path.join(RESULTS_FILE)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    records_from_csv(&text)
}

fn mesd_cmd(args: MesdArgs) -> Result<bool, Error> {
    let records = read_records(&args.input)?;
    println!("subject,method,mesd_s,optimal_window_s,optimal_n_states,converged");
    for curve in curves_from_records(&records) {
        match mesd(&curve) {
            Ok(r) => println!(
                "{},{},{:.6},{:.6},{},{}",
                curve.subject, curve.method, r.mesd_s, r.optimal_window_s, r.optimal_n_states, r.converged
            ),
            Err(Error::NoStableDesign) => println!("{},{},NA,NA,NA,false", curve.subject, curve.method),
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

fn report(args: ReportArgs) -> Result<bool, Error> {
    let records = read_records(&args.input)?;
    let alpha = match args.alpha {
        Some(a) => a,
        None => {
            let dir = if args.input.is_dir() {
                args.input.clone()
            } else {
                args.input.parent().map(Path::to_path_buf).unwrap_or_default()
            };
            let cfg = dir.join(CONFIG_FILE);
            if cfg.exists() {
                read_json::<ExperimentConfig>(&cfg)?.alpha
            } else {
                ExperimentConfig::default().alpha
            }
        }
    };
    let summary = summarize(&records, alpha, &[]);
    println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
    Ok(true)
}

fn validate(args: ValidateArgs) -> Result<bool, Error> {
    let ids = list_subjects(&args.dataset)?;
    if ids.is_empty() {
        return Err(Error::Format(format!(
            "{}: no subject_<id>.json headers",
            args.dataset.display()
        )));
    }
    let mut ok = true;
    for id in ids {
        match read_recording(&args.dataset, &id) {
            Ok(rec) => println!(
                "{id}: ok, {} channels, {} samples at {} Hz, {} trials",
                rec.channels(),
                rec.samples(),
                rec.fs,
                rec.trials.len()
            ),
            Err(e) => {
                ok = false;
                println!("{id}: {e}");
            }
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a).map(|()| true),
        Command::Run(a) => run(a),
        Command::Mesd(a) => mesd_cmd(a),
        Command::Report(a) => report(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidInput(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
