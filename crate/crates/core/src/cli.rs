//! Command-line front end: `synth`, `train`, `score` and `evaluate`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::autoencoder::{train, write_history_csv, Autoencoder};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, format_table, write_outcome, Dataset, Variant};
use crate::numerics::checkpoint::{read_checkpoint, write_checkpoint};
use crate::synthetic::{build_dataset, NoiseSpectrum};
use crate::trigger::{train_projections, write_profiles_csv, Detector, LatentStats, Method, NormSource, ProjectionSet};
use crate::waveform::{load_dataset, preprocess_records, strip_labels, LoadOptions, Waveform};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "covdetect", version, about = "Unsupervised seismic event detection from autoencoder latent covariance")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed applied to every stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (1 gives bit-reproducible runs).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic dataset.
    Synth(SynthArgs),
    /// Train autoencoder(s) on a manifest, ignoring its labels.
    Train(TrainArgs),
    /// Score every record of a manifest with trained models.
    Score(ScoreArgs),
    /// Cross-validate on one manifest, or train on one and test on another.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NoiseArg {
    White,
    Brownish,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Base name of the written files.
    #[arg(long, default_value = "synthetic")]
    pub name: String,
    #[arg(long)]
    pub n_event: Option<usize>,
    #[arg(long)]
    pub n_noise: Option<usize>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    #[arg(long)]
    pub snr_min: Option<f64>,
    #[arg(long)]
    pub snr_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// single, augmented or ensemble (ensemble trains k models and projections).
    #[arg(long)]
    pub method: Option<String>,
    /// Train as a denoising autoencoder; without a value uses the configured sigma.
    #[arg(long, num_args = 0..=1, default_missing_value = "-1")]
    pub denoise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory written by `train` (defaults to the output directory).
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<String>,
    /// Also write every covariance profile to profiles.csv.
    #[arg(long)]
    pub dump_profiles: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Test on this manifest instead of cross-validating.
    #[arg(long)]
    pub test_manifest: Option<PathBuf>,
    /// Only evaluate variants of this method.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Io { .. } | Error::Empty(_) => EXIT_DATA,
        e if e.is_data_error() => EXIT_DATA,
        _ => EXIT_RUNTIME,
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn init_threads(threads: usize) {
    if threads > 0 {
        // Fails only if a pool already exists, e.g. in tests running commands in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

fn load_records(manifest: &Path) -> Result<Vec<Waveform>> {
    let loaded = load_dataset(manifest, LoadOptions::default())?;
    for e in &loaded.errors {
        log::warn!("skipping record: {e}");
    }
    if loaded.waveforms.is_empty() {
        return Err(Error::Empty(format!("{} holds no usable records", manifest.display())));
    }
    Ok(loaded.waveforms)
}

fn preprocessed(cfg: &RunConfig, manifest: &Path) -> Result<Vec<Waveform>> {
    let (mut recs, failed) = preprocess_records(&load_records(manifest)?, &cfg.preprocess, cfg.seed);
    for e in &failed {
        log::warn!("skipping record: {e}");
    }
    if recs.is_empty() {
        return Err(Error::Empty("no record survived preprocessing".into()));
    }
    recs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(recs)
}

fn dataset_name(manifest: &Path) -> String {
    manifest
        .file_stem()
        .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_synth(cfg: &mut RunConfig, args: &SynthArgs) -> Result<()> {
    if let Some(n) = args.n_event {
        cfg.synth.n_event = n;
    }
    if let Some(n) = args.n_noise {
        cfg.synth.n_noise = n;
    }
    if let Some(noise) = args.noise {
        cfg.synth.noise_spectrum = match noise {
            NoiseArg::White => NoiseSpectrum::White,
            NoiseArg::Brownish => NoiseSpectrum::Brownish,
        };
    }
    if let Some(lo) = args.snr_min {
        cfg.synth.snr_range.0 = lo;
    }
    if let Some(hi) = args.snr_max {
        cfg.synth.snr_range.1 = hi;
    }
    cfg.synth.validate()?;
    mkdir(&cfg.out)?;
    let out = build_dataset(&cfg.synth, &cfg.out, &args.name)?;
    cfg.dump(&cfg.out)?;
    println!("{} event and {} noise records", out.n_event, out.n_noise);
    println!("report: {}", out.report.display());
    println!("manifest: {}", out.manifest.display());
    Ok(())
}

fn method_arg(cfg: &mut RunConfig, method: &Option<String>) -> Result<()> {
    if let Some(m) = method {
        cfg.method.method = m.parse()?;
    }
    Ok(())
}

pub fn cmd_train(cfg: &mut RunConfig, args: &TrainArgs) -> Result<()> {
    method_arg(cfg, &args.method)?;
    if let Some(sigma) = args.denoise {
        cfg.train.denoise_sigma = if sigma < 0.0 { cfg.denoise_sigma } else { sigma };
    }
    cfg.validate()?;
    let records = preprocessed(cfg, &args.manifest)?;
    let data = strip_labels(&records);
    mkdir(&cfg.out)?;
    let count = cfg.method.method.model_count(cfg.method.k);
    let mut models = Vec::with_capacity(count);
    for m in 0..count {
        let seed = cfg.train.seed.wrapping_add(m as u64);
        let tc = crate::autoencoder::TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let trained = train(Autoencoder::build(&cfg.arch, seed)?, &data, &tc)?;
        trained.model.save(&cfg.out.join(format!("model_{m}.rcvw")))?;
        write_history_csv(&cfg.out.join(format!("history_{m}.csv")), &trained.history)?;
        println!(
            "model {m}: best epoch {} validation loss {:.5}",
            trained.best_epoch,
            trained.best_val_loss()
        );
        models.push(trained.model);
    }
    let mut det = Detector::new(cfg.method.clone(), cfg.trigger.clone(), models)?;
    if cfg.method.method == Method::Ensemble {
        let fit = train_projections(&det.models, &data, &cfg.projection)?;
        fit.projections.save(&cfg.out.join("projections.rcvw"))?;
        det = det.with_projections(fit.projections)?;
    }
    // Running statistics are cheap and let `score` use either normalization.
    let saved = cfg.method.norm;
    det.method.norm = NormSource::Running;
    det.fit_running_stats(&data)?;
    det.method.norm = saved;
    let stats = det.running_stats.as_ref().expect("just fitted");
    let tensors: Vec<_> = stats.iter().enumerate().flat_map(|(i, s)| s.to_named_tensors(&format!("stream{i}"))).collect();
    write_checkpoint(&cfg.out.join("latent_stats.rcvw"), &tensors)?;
    cfg.dump(&cfg.out)?;
    Ok(())
}

pub fn cmd_score(cfg: &mut RunConfig, args: &ScoreArgs) -> Result<()> {
    let models_dir = args.models.clone().unwrap_or_else(|| cfg.out.clone());
    // The architecture comes from the training run when it left its config.
    let trained_cfg = models_dir.join("effective_config.toml");
    if trained_cfg.exists() {
        let t = RunConfig::load(&trained_cfg)?;
        cfg.arch = t.arch;
        if args.method.is_none() {
            cfg.method.method = t.method.method;
        }
    }
    method_arg(cfg, &args.method)?;
    cfg.validate()?;
    let count = cfg.method.method.model_count(cfg.method.k);
    let models = (0..count)
        .map(|m| Autoencoder::load(&models_dir.join(format!("model_{m}.rcvw")), &cfg.arch))
        .collect::<Result<Vec<_>>>()?;
    let mut det = Detector::new(cfg.method.clone(), cfg.trigger.clone(), models)?;
    if cfg.method.method == Method::Ensemble {
        det = det.with_projections(ProjectionSet::load(&models_dir.join("projections.rcvw"))?)?;
    }
    if cfg.method.norm == NormSource::Running {
        let tensors = read_checkpoint(&models_dir.join("latent_stats.rcvw"))?;
        let n = if cfg.method.method == Method::Ensemble { count } else { 1 };
        det.running_stats = Some(
            (0..n)
                .map(|i| LatentStats::from_named_tensors(&format!("stream{i}"), &tensors))
                .collect::<Result<_>>()?,
        );
    }
    let records = preprocessed(cfg, &args.manifest)?;
    let profiles = det.profiles(&records)?;
    mkdir(&cfg.out)?;
    let mut csv = String::from("id,label,method,score\n");
    for (w, p) in records.iter().zip(&profiles) {
        let label = w.label.map_or("", |l| l.as_str());
        let score = crate::trigger::gaussian_score(p, &cfg.trigger);
        csv.push_str(&format!("{},{label},{},{score}\n", w.id, cfg.method.method));
    }
    let path = cfg.out.join("scores.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    if args.dump_profiles {
        let ids: Vec<&str> = records.iter().map(|w| w.id.as_str()).collect();
        write_profiles_csv(&cfg.out.join("profiles.csv"), &ids, &profiles)?;
    }
    cfg.dump(&cfg.out)?;
    println!("scored {} records -> {}", records.len(), path.display());
    Ok(())
}

pub fn cmd_evaluate(cfg: &mut RunConfig, args: &EvaluateArgs) -> Result<()> {
    if let Some(f) = args.folds {
        cfg.eval.folds = f;
    }
    if let Some(m) = &args.method {
        let m: Method = m.parse()?;
        cfg.eval.variants.retain(|v| v.method == m);
        if cfg.eval.variants.is_empty() {
            cfg.eval.variants.push(Variant::new(m, 0.0));
        }
    }
    cfg.validate()?;
    let train_set = Dataset {
        name: dataset_name(&args.manifest),
        records: load_records(&args.manifest)?,
    };
    let test_set = match &args.test_manifest {
        Some(p) => Some(Dataset {
            name: dataset_name(p),
            records: load_records(p)?,
        }),
        None => None,
    };
    let models_dir = cfg.out.join("models");
    mkdir(&models_dir)?;
    let outcome = evaluate(&cfg.pipeline(), &train_set, test_set.as_ref(), Some(&models_dir))?;
    write_outcome(&cfg.out, &outcome)?;
    cfg.dump(&cfg.out)?;
    print!("{}", format_table(&outcome.reports));
    Ok(())
}

/// Parses arguments and runs one command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
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
    let result = resolve_config(&cli).and_then(|mut cfg| {
        init_threads(cfg.threads);
        match &cli.command {
            Command::Synth(a) => cmd_synth(&mut cfg, a),
            Command::Train(a) => cmd_train(&mut cfg, a),
            Command::Score(a) => cmd_score(&mut cfg, a),
            Command::Evaluate(a) => cmd_evaluate(&mut cfg, a),
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_global_flags_anywhere() {
        let c = Cli::try_parse_from(["covdetect", "train", "--manifest", "m.txt", "--seed", "3", "--denoise"]).unwrap();
        assert_eq!(c.seed, Some(3));
        match c.command {
            Command::Train(t) => assert_eq!(t.denoise, Some(-1.0)),
            _ => panic!("wrong command"),
        }
        let c = Cli::try_parse_from(["covdetect", "--threads", "1", "train", "--manifest", "m", "--denoise", "0.3"]).unwrap();
        assert_eq!(c.threads, Some(1));
        match c.command {
            Command::Train(t) => assert_eq!(t.denoise, Some(0.3)),
            _ => panic!("wrong command"),
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_with_args(["covdetect", "frobnicate"]), EXIT_USAGE);
        assert_eq!(main_with_args(["covdetect", "--help"]), 0);
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Record { id: "a".into(), reason: "b".into() }), EXIT_DATA);
        assert_eq!(exit_code(&Error::Shape("x".into())), EXIT_DATA);
    }
}
