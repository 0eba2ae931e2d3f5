//! The `synspec` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid data or configuration
//! (including failed separability checks), 3 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::bench::{format_report, run_benchmark, runs_csv, BenchOptions, Manifest, Oracle, ReportStyle};
use crate::dataset::{
    build_dataset, generate_dataset_config, load_config, save_config, validate_separability, DatasetConfig,
    DatasetSplits, GenerationConfig,
};
use crate::error::{Error, Result};
use crate::nn::checkpoint;
use crate::rng::{tags, StreamKey};
use crate::spectra::{build_test_grid, render_spectrum, sample_training_variant, ClassFingerprint, IntensityMode};
use crate::zoo::{build_model, evaluate, resolve, train, TrainingConfig};

/// Environment variable naming the base directory for default output paths.
pub const OUT_DIR_ENV: &str = "SYNSPEC_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "synspec",
    version,
    about = "Synthetic 1D spectra generation and CNN classification benchmarks",
    after_help = "Default output paths are relative to $SYNSPEC_OUT_DIR when it is set, else the current directory.\n\
                  Exit codes: 0 ok, 1 usage, 2 invalid data or failed validation, 3 runtime failure."
)]
pub struct Cli {
    /// Worker threads; 0 uses every available core
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// More log output on stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample class fingerprints and write a dataset config file
    GenConfig(GenConfigArgs),
    /// Render train/validation/test arrays from a config file
    GenData(GenDataArgs),
    /// Check that every test-grid sample is closest to its own class
    Validate(ValidateArgs),
    /// Train one architecture and evaluate it on the test split
    Train(TrainArgs),
    /// Train several architectures over several seeds and write reports
    Bench(BenchArgs),
    /// Write plot-ready CSVs of one class's spectra and peak markers
    ExportPlot(ExportPlotArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 500 classes, 5000 datapoints, 2-10 peaks
    Paper500,
    /// 50 classes, 1000 datapoints, 2-6 peaks
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum IntensityModeArg {
    Multiplicative,
    Additive,
}

#[derive(Debug, Args)]
pub struct GenConfigArgs {
    /// Base parameter set; the flags below override single values
    #[arg(long, value_enum, default_value_t = Preset::Paper500)]
    pub preset: Preset,
    /// Master seed of every random draw
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of classes [default: from preset]
    #[arg(long)]
    pub classes: Option<usize>,
    /// Datapoints per spectrum [default: from preset]
    #[arg(long)]
    pub datapoints: Option<usize>,
    /// Peak count range MIN:MAX [default: from preset]
    #[arg(long, value_parser = parse_usize_range)]
    pub peaks: Option<(usize, usize)>,
    /// Minimum distance of ideal peaks from either end [default: from preset]
    #[arg(long)]
    pub margin: Option<f64>,
    /// Minimum distance between ideal peaks of a class [default: from preset]
    #[arg(long)]
    pub separation: Option<f64>,
    /// Lowest ideal peak intensity before normalization [default: from preset]
    #[arg(long)]
    pub intensity_floor: Option<f64>,
    /// Training plus validation samples per class [default: from preset]
    #[arg(long)]
    pub train_samples: Option<usize>,
    /// Share of those samples held out for validation [default: from preset]
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Largest per-peak training shift in datapoints [default: from preset]
    #[arg(long)]
    pub train_shift: Option<f64>,
    /// Largest relative per-peak training intensity change [default: from preset]
    #[arg(long)]
    pub train_intensity: Option<f64>,
    /// Training peak width range LO:HI [default: from preset]
    #[arg(long, value_parser = parse_f64_range)]
    pub train_widths: Option<(f64, f64)>,
    /// How intensity changes apply [default: multiplicative]
    #[arg(long, value_enum)]
    pub intensity_mode: Option<IntensityModeArg>,
    /// Global test-grid shift in datapoints [default: from preset]
    #[arg(long)]
    pub test_shift: Option<f64>,
    /// Relative test-grid intensity change [default: from preset]
    #[arg(long)]
    pub test_intensity: Option<f64>,
    /// Peak width of test samples [default: from preset]
    #[arg(long)]
    pub test_width: Option<f64>,
    /// Output file [default: config.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Dataset config file (required)
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for the six .npy files [default: data]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip the separability check before rendering
    #[arg(long)]
    pub no_validate: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Dataset config file (required)
    #[arg(long)]
    pub config: PathBuf,
    /// Also classify the stored test arrays in this directory [default: none]
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainingFlags {
    /// Maximum epochs
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    /// Minibatch size
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    /// Initial Adam learning rate
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    /// Learning-rate multiplier after a plateau
    #[arg(long, default_value_t = 0.5)]
    pub plateau_factor: f64,
    /// Epochs without improvement before the learning rate drops
    #[arg(long, default_value_t = 10)]
    pub plateau_patience: usize,
    /// Epochs without improvement before training stops
    #[arg(long, default_value_t = 25)]
    pub early_stop_patience: usize,
    /// Keep the training rows in file order every epoch
    #[arg(long)]
    pub no_shuffle: bool,
}

impl TrainingFlags {
    fn config(&self, seed: u64) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            plateau_factor: self.plateau_factor,
            plateau_patience: self.plateau_patience,
            early_stop_patience: self.early_stop_patience,
            shuffle_each_epoch: !self.no_shuffle,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory holding the .npy splits (required)
    #[arg(long)]
    pub data: PathBuf,
    /// Built-in architecture name or architecture file
    #[arg(long, default_value = "desk_cnn2")]
    pub model: String,
    /// Seed for initialization and shuffling
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub training: TrainingFlags,
    /// Output directory for history, checkpoint and result [default: train]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Leave the wall time out of result.json
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated architecture names or files (required)
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<String>,
    /// Directory holding the .npy splits (required)
    #[arg(long)]
    pub data: PathBuf,
    /// Runs per architecture
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    /// Base seed; run i uses a child seed derived from it
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub training: TrainingFlags,
    /// Output directory for reports and manifest [default: bench]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Omit the timestamp and zero timings so reruns are byte-identical
    #[arg(long)]
    pub no_timestamp: bool,
    /// Hardware description for the report header [default: thread count and platform]
    #[arg(long)]
    pub hardware: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExportPlotArgs {
    /// Dataset config file (required)
    #[arg(long)]
    pub config: PathBuf,
    /// Class to export
    #[arg(long, default_value_t = 0)]
    pub class: u32,
    /// Number of random training variants
    #[arg(long, default_value_t = 5)]
    pub variants: usize,
    /// Seed for the variants [default: the config's master seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: plot]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_usize_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected MIN:MAX")?;
    let lo = a.trim().parse().map_err(|_| format!("invalid number `{a}`"))?;
    let hi = b.trim().parse().map_err(|_| format!("invalid number `{b}`"))?;
    Ok((lo, hi))
}

fn parse_f64_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo = a.trim().parse().map_err(|_| format!("invalid number `{a}`"))?;
    let hi = b.trim().parse().map_err(|_| format!("invalid number `{b}`"))?;
    Ok((lo, hi))
}

/// Rendered `--help` text of the top-level command or a subcommand.
pub fn help_text(subcommand: Option<&str>) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let mut target = match subcommand {
        Some(name) => cmd.find_subcommand(name).expect("known subcommand").clone(),
        None => cmd,
    };
    target.render_help().to_string()
}

/// Parses `argv` (including the program name), runs the command, and
/// returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {} worker threads: {e}", cli.threads);
            return EXIT_RUNTIME;
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => EXIT_USAGE,
                ref e if e.is_data_error() => EXIT_DATA,
                _ => EXIT_RUNTIME,
            }
        }
    }
}

fn default_out(given: Option<PathBuf>, name: &str) -> PathBuf {
    given.unwrap_or_else(|| {
        std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))
            .join(name)
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Missing input files are reported as bad input naming the flag.
fn missing_input(flag: &str, e: Error) -> Error {
    match e {
        Error::Io { context, source } if source.kind() == std::io::ErrorKind::NotFound => {
            Error::Validation(format!("{flag}: {context}: file not found"))
        }
        other => other,
    }
}

fn load_splits(dir: &Path) -> Result<DatasetSplits> {
    DatasetSplits::load(dir).map_err(|e| missing_input("--data", e))
}

fn load_config_arg(path: &Path) -> Result<DatasetConfig> {
    load_config(path).map_err(|e| missing_input("--config", e))
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::GenConfig(a) => gen_config(a),
        Command::GenData(a) => gen_data(a),
        Command::Validate(a) => validate(a),
        Command::Train(a) => train_cmd(a),
        Command::Bench(a) => bench(a),
        Command::ExportPlot(a) => export_plot(a),
    }
}

fn gen_config(a: GenConfigArgs) -> Result<i32> {
    let mut g = match a.preset {
        Preset::Paper500 => GenerationConfig::paper500(a.seed),
        Preset::Desk => GenerationConfig::desk(a.seed),
    };
    if let Some(v) = a.classes {
        g.n_classes = v;
    }
    if let Some(v) = a.datapoints {
        g.n_datapoints = v;
    }
    if let Some((lo, hi)) = a.peaks {
        g.min_peaks = lo;
        g.max_peaks = hi;
    }
    if let Some(v) = a.margin {
        g.border_margin = v;
    }
    if let Some(v) = a.separation {
        g.min_peak_separation = v;
    }
    if let Some(v) = a.intensity_floor {
        g.intensity_floor = v;
    }
    if let Some(v) = a.train_samples {
        g.train_samples_per_class = v;
    }
    if let Some(v) = a.val_fraction {
        g.val_fraction = v;
    }
    if let Some(v) = a.train_shift {
        g.training_variation.max_shift = v;
    }
    if let Some(v) = a.train_intensity {
        g.training_variation.max_intensity_delta = v;
    }
    if let Some(v) = a.train_widths {
        g.training_variation.width_range = v;
    }
    if let Some(m) = a.intensity_mode {
        g.training_variation.intensity_mode = match m {
            IntensityModeArg::Multiplicative => IntensityMode::Multiplicative,
            IntensityModeArg::Additive => IntensityMode::Additive,
        };
    }
    if let Some(v) = a.test_shift {
        g.test_grid.grid_shift = v;
    }
    if let Some(v) = a.test_intensity {
        g.test_grid.grid_intensity_delta = v;
    }
    if let Some(v) = a.test_width {
        g.test_grid.test_width = v;
    }
    let config = generate_dataset_config(&g)?;
    let out = default_out(a.out, "config.json");
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_config(&config, &out)?;
    println!(
        "wrote {} ({} classes, {} datapoints)",
        out.display(),
        config.fingerprints.len(),
        g.n_datapoints
    );
    Ok(EXIT_OK)
}

fn report_violations(config: &DatasetConfig) -> Result<usize> {
    let violations = validate_separability(config)?;
    for v in &violations {
        println!(
            "class {} test sample {}: nearest class {}{}",
            v.class_id,
            v.variant_index,
            v.nearest_class_id,
            if v.tie { " (tie)" } else { "" }
        );
    }
    Ok(violations.len())
}

fn gen_data(a: GenDataArgs) -> Result<i32> {
    let config = load_config_arg(&a.config)?;
    if !a.no_validate {
        let n = report_violations(&config)?;
        if n > 0 {
            eprintln!("error: {n} test samples are not separable; refusing to write data (see --no-validate)");
            return Ok(EXIT_DATA);
        }
    }
    let splits = build_dataset(&config)?;
    let out = default_out(a.out, "data");
    create_dir(&out)?;
    splits.save(&out)?;
    println!(
        "wrote {}: {} train, {} validation, {} test rows",
        out.display(),
        splits.train.len(),
        splits.validation.len(),
        splits.test.len()
    );
    Ok(EXIT_OK)
}

fn validate(a: ValidateArgs) -> Result<i32> {
    let config = load_config_arg(&a.config)?;
    let n_samples = 9 * config.fingerprints.len();
    let mut failures = report_violations(&config)?;
    println!(
        "{} classes, {n_samples} test samples, {failures} violations",
        config.fingerprints.len()
    );
    if let Some(dir) = a.data {
        let splits = load_splits(&dir)?;
        let oracle = Oracle::new(&config)?;
        let mut wrong = 0;
        for (i, (row, &label)) in splits.test.rows().zip(&splits.test.labels).enumerate() {
            let m = oracle.classify(row)?;
            if m.class_id as i64 != label || m.tie {
                println!("stored test row {i} (class {label}): nearest class {}", m.class_id);
                wrong += 1;
            }
        }
        println!("{} stored test rows, {wrong} misclassified by the oracle", splits.test.len());
        failures += wrong;
    }
    Ok(if failures == 0 { EXIT_OK } else { EXIT_DATA })
}

fn n_classes(splits: &DatasetSplits) -> usize {
    [&splits.train, &splits.validation, &splits.test]
        .iter()
        .map(|d| d.n_classes())
        .max()
        .unwrap_or(0)
}

fn train_cmd(a: TrainArgs) -> Result<i32> {
    let spec = resolve(&a.model)?;
    let splits = load_splits(&a.data)?;
    let cfg = a.training.config(a.seed);
    let model = build_model(&spec, splits.train.n_datapoints, n_classes(&splits), a.seed)?;
    let trained = train(model, &splits.train, &splits.validation, &cfg)?;
    let eval = evaluate(&trained.model, &splits.test)?;
    let out = default_out(a.out, "train");
    create_dir(&out)?;
    write_file(&out.join("history.csv"), trained.history.to_csv().as_bytes())?;
    checkpoint::save(&out.join("model.ckpt"), &trained.model, Some(&trained.optimizer))?;
    let h = &trained.history;
    let mut result = serde_json::json!({
        "model": spec.name,
        "architecture": spec.architecture,
        "seed": a.seed,
        "trained_epochs": h.trained_epochs(),
        "best_epoch": h.best_epoch,
        "stop_reason": h.stop_reason,
        "test_samples": eval.n_samples,
        "misclassifications": eval.misclassifications,
        "accuracy": eval.accuracy,
        "per_class_errors": eval.per_class_errors,
    });
    if !a.no_timestamp {
        result["wall_time_s"] = serde_json::json!(h.wall_time_s);
    }
    let text = serde_json::to_string_pretty(&result).expect("json") + "\n";
    write_file(&out.join("result.json"), text.as_bytes())?;
    println!(
        "{}: {} of {} test samples misclassified ({:.2}% accuracy) after {} epochs ({})",
        spec.name,
        eval.misclassifications,
        eval.n_samples,
        100.0 * eval.accuracy,
        h.trained_epochs(),
        h.stop_reason
    );
    Ok(EXIT_OK)
}

fn bench(a: BenchArgs) -> Result<i32> {
    let specs = a.models.iter().map(|m| resolve(m)).collect::<Result<Vec<_>>>()?;
    let splits = load_splits(&a.data)?;
    let mut opts = BenchOptions {
        n_seeds: a.seeds,
        base_seed: a.seed,
        training: a.training.config(a.seed),
        dataset_label: a.data.display().to_string(),
        timestamp: !a.no_timestamp,
        ..BenchOptions::default()
    };
    if let Some(h) = a.hardware {
        opts.hardware = h;
    }
    let manifest = Manifest::new(&specs, &a.data, &opts)?;
    let report = run_benchmark(&specs, &splits, &opts)?;
    let out = default_out(a.out, "bench");
    create_dir(&out)?;
    let markdown = format_report(&report, ReportStyle::Markdown);
    write_file(&out.join("report.md"), markdown.as_bytes())?;
    write_file(&out.join("report.csv"), format_report(&report, ReportStyle::Csv).as_bytes())?;
    write_file(&out.join("runs.csv"), runs_csv(&report).as_bytes())?;
    write_file(&out.join("manifest.json"), manifest.to_json().as_bytes())?;
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(markdown.as_bytes());
    if report.complete() {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: some runs failed; see {}", out.join("runs.csv").display());
        Ok(EXIT_RUNTIME)
    }
}

fn write_spectrum_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Format(format!("csv: {e}"));
    w.write_record(["index", "intensity"]).map_err(wrap)?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), (*v as f32).to_string()]).map_err(wrap)?;
    }
    write_file(path, &w.into_inner().map_err(|e| Error::Format(e.to_string()))?)
}

fn export_plot(a: ExportPlotArgs) -> Result<i32> {
    let config = load_config_arg(&a.config)?;
    let g = &config.generation;
    let fp = config
        .fingerprints
        .get(a.class as usize)
        .ok_or_else(|| Error::Usage(format!("--class {}: config has {} classes", a.class, config.fingerprints.len())))?;
    let seed = a.seed.unwrap_or(g.master_seed);
    let mut rng = StreamKey::root(seed).child(tags::PLOT).child(a.class as u64).stream();

    let mut samples: Vec<(String, ClassFingerprint, f64)> = vec![("ideal".into(), fp.clone(), g.test_grid.test_width)];
    for k in 0..a.variants {
        let (v, w) = sample_training_variant(fp, &g.training_variation, g.n_datapoints, &mut rng)?;
        samples.push((format!("variant{k}"), v, w));
    }
    for (k, (v, w)) in build_test_grid(fp, &g.test_grid)?.into_iter().enumerate() {
        samples.push((format!("test{k}"), v, w));
    }

    let out = default_out(a.out, "plot");
    create_dir(&out)?;
    let mut markers = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Format(format!("csv: {e}"));
    markers.write_record(["sample", "width", "position", "intensity"]).map_err(wrap)?;
    for (name, variant, width) in &samples {
        let raw = render_spectrum(variant, *width, g.n_datapoints, false)?;
        let max = raw.values.iter().copied().fold(0.0, f64::max);
        let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
        let values: Vec<f64> = raw.values.iter().map(|v| v * scale).collect();
        write_spectrum_csv(&out.join(format!("class{}_{name}.csv", a.class)), &values)?;
        for p in &variant.peaks {
            markers
                .write_record([name.clone(), width.to_string(), p.position.to_string(), (p.intensity * scale).to_string()])
                .map_err(wrap)?;
        }
    }
    let bytes = markers.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_file(&out.join(format!("class{}_peaks.csv", a.class)), &bytes)?;
    println!("wrote {} spectra of class {} to {}", samples.len(), a.class, out.display());
    Ok(EXIT_OK)
}
