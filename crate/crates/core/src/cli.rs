//! Command-line front end: config-driven, reproducible runs over all
//! toolkit operations.
//!
//! Configuration precedence: command-line flag > `RIF_SEED` environment
//! variable (seed only) > JSON config file > built-in default. Every command
//! writes a `run_meta.json` (config hash, seed, version, wall time) next to
//! its outputs. Exit codes: 0 success, 2 configuration error, 3 numerical
//! failure.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, DataFormat, Dataset, LoadOptions, SyntheticSpec};
use crate::error::{Error, Result};
use crate::evaluation::{self, EffectMode, EvaluationFn, MetricKind, SweepOptions};
use crate::glm::{self, Family, ModelSpec};
use crate::linalg::SampleMatrix;
use crate::oracle::RetrainCache;
use crate::poison;
use crate::rng::derive_seed;
use crate::selection::Strategy;
use crate::theory;

#[derive(Parser)]
#[command(
    name = "rif",
    version,
    about = "Influence-function and rescaled-influence data attribution for regularized GLMs"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic embedded dataset
    Synth(CommonArgs),
    /// Fit the regularized GLM and report accuracy
    Fit(CommonArgs),
    /// Per-sample leverage, IF and RIF dump
    Attribute(CommonArgs),
    /// Actual-vs-predicted sweep over strategies, sizes and metrics
    Evaluate(CommonArgs),
    /// Flipped-label poisoning experiment
    Poison(CommonArgs),
    /// Assumption constants, accuracy-bound verification, lemma and SNR
    Theory(CommonArgs),
    /// Evaluation sweeps across a regularization grid
    SweepLambda(CommonArgs),
    /// Evaluation sweeps across training-set subsample sizes
    SweepN(CommonArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// JSON config file; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// logistic | least-squares
    #[arg(long)]
    family: Option<String>,
    /// Trial count (poison, theory)
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<String>>,
    /// Explicit subset-size schedule (default: 0.1%–5% of n, 40 sizes)
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Removal budgets checked by `theory`
    #[arg(long, value_delimiter = ',')]
    k_list: Option<Vec<usize>>,
    #[arg(long)]
    test_subset_size: Option<usize>,
    /// reeval | linear
    #[arg(long)]
    effect: Option<String>,
    /// Retrain cache directory (shared across runs)
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Standardize features using training-split statistics
    #[arg(long)]
    standardize: bool,
    /// Also write per-coordinate IF/RIF vectors as binary sidecars
    #[arg(long)]
    vectors: bool,
    /// Evaluation functional for `theory`: self-loss | test-loss | single-logit-<t>
    #[arg(long)]
    functional: Option<String>,
    #[arg(long)]
    lemma_trials: Option<usize>,

    // dataset from files
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Single data file combined with --manifest
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON `{"test_indices": [...]}` split manifest
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// csv | binary
    #[arg(long)]
    format: Option<String>,
    /// Map {-1,+1} labels to {0,1} on load
    #[arg(long)]
    map_pm_one: bool,
    #[arg(long)]
    name: Option<String>,

    // synthetic dataset
    #[arg(long)]
    synth_n: Option<usize>,
    #[arg(long)]
    synth_d: Option<usize>,
    /// Norm of the random teacher direction (0 = null teacher)
    #[arg(long)]
    synth_scale: Option<f64>,
    /// logistic | linear
    #[arg(long)]
    synth_label: Option<String>,
    /// Label noise for the linear teacher
    #[arg(long)]
    synth_noise: Option<f64>,
    /// Power-law feature spectrum: coordinate j gets std (1+j)^-decay
    /// (0 = isotropic)
    #[arg(long)]
    synth_decay: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSource {
    Synthetic {
        spec: SyntheticSpec,
    },
    Files {
        train: PathBuf,
        test: Option<PathBuf>,
        #[serde(default = "default_format")]
        format: DataFormat,
        #[serde(default)]
        map_pm_one: bool,
        name: Option<String>,
    },
    Manifest {
        data: PathBuf,
        manifest: PathBuf,
        #[serde(default = "default_format")]
        format: DataFormat,
        #[serde(default)]
        map_pm_one: bool,
        name: Option<String>,
    },
}

fn default_format() -> DataFormat {
    DataFormat::Csv
}

/// Fully resolved run configuration; hashing this (canonical JSON) yields
/// the run's config hash.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: Option<DatasetSource>,
    #[serde(default = "default_family")]
    pub family: Family,
    pub lambda: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub strategies: Option<Vec<String>>,
    pub schedule: Option<Vec<usize>>,
    pub metrics: Option<Vec<String>>,
    #[serde(default = "default_subset_size")]
    pub test_subset_size: usize,
    #[serde(default = "default_effect_mode")]
    pub effect_mode: EffectMode,
    pub trials: Option<usize>,
    pub k_list: Option<Vec<usize>>,
    pub lambda_grid: Option<Vec<f64>>,
    pub n_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub standardize: bool,
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub vectors: bool,
    pub functional: Option<String>,
    #[serde(default = "default_lemma_trials")]
    pub lemma_trials: usize,
    #[serde(default = "default_format")]
    pub output_format: DataFormat,
}

fn default_family() -> Family {
    Family::Logistic
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("rif-out")
}
fn default_subset_size() -> usize {
    50
}
fn default_effect_mode() -> EffectMode {
    EffectMode::Reeval
}
fn default_lemma_trials() -> usize {
    1000
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

impl RunConfig {
    fn from_args(args: &CommonArgs) -> Result<Self> {
        let mut cfg: RunConfig = match &args.config {
            Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            None => RunConfig::default(),
        };

        // Dataset flags override the config's source wholesale.
        if args.synth_n.is_some() || args.synth_d.is_some() {
            let n = args.synth_n.ok_or_else(|| Error::Config("--synth-n required".into()))?;
            let d = args.synth_d.ok_or_else(|| Error::Config("--synth-d required".into()))?;
            let scale = args.synth_scale.unwrap_or(2.0);
            let theta_star = if scale == 0.0 {
                dataset::ThetaStar::Zero
            } else {
                dataset::ThetaStar::RandomUnit { scale }
            };
            let label_model = match args.synth_label.as_deref().unwrap_or("logistic") {
                "logistic" => dataset::LabelModel::Logistic { theta_star },
                "linear" => dataset::LabelModel::Linear {
                    theta_star,
                    noise: args.synth_noise.unwrap_or(0.0),
                },
                other => return Err(Error::Config(format!("unknown label model '{other}'"))),
            };
            let design = match args.synth_decay {
                None | Some(0.0) => dataset::Design::GaussianIsotropic,
                Some(decay) => dataset::Design::GaussianAnisotropic {
                    spectrum: (0..d).map(|j| (1.0 + j as f64).powf(-decay)).collect(),
                },
            };
            cfg.dataset = Some(DatasetSource::Synthetic {
                spec: SyntheticSpec {
                    n,
                    d,
                    design,
                    label_model,
                    seed: 0, // patched after the seed is resolved
                },
            });
        } else if let Some(train) = &args.train {
            cfg.dataset = Some(DatasetSource::Files {
                train: train.clone(),
                test: args.test.clone(),
                format: parse_format(args.format.as_deref())?,
                map_pm_one: args.map_pm_one,
                name: args.name.clone(),
            });
        } else if let (Some(data), Some(manifest)) = (&args.data, &args.manifest) {
            cfg.dataset = Some(DatasetSource::Manifest {
                data: data.clone(),
                manifest: manifest.clone(),
                format: parse_format(args.format.as_deref())?,
                map_pm_one: args.map_pm_one,
                name: args.name.clone(),
            });
        }

        if let Some(f) = &args.family {
            cfg.family = match f.as_str() {
                "logistic" => Family::Logistic,
                "least-squares" => Family::LeastSquares,
                other => return Err(Error::Config(format!("unknown family '{other}'"))),
            };
        }
        if args.lambda.is_some() {
            cfg.lambda = args.lambda;
        }
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        } else if let Ok(env_seed) = std::env::var("RIF_SEED") {
            cfg.seed = env_seed
                .parse()
                .map_err(|_| Error::Config(format!("RIF_SEED='{env_seed}' is not a u64")))?;
        }
        if let Some(dir) = &args.out_dir {
            cfg.out_dir = dir.clone();
        }
        if args.threads.is_some() {
            cfg.threads = args.threads;
        }
        if args.strategies.is_some() {
            cfg.strategies = args.strategies.clone();
        }
        if args.schedule.is_some() {
            cfg.schedule = args.schedule.clone();
        }
        if args.metrics.is_some() {
            cfg.metrics = args.metrics.clone();
        }
        if let Some(s) = args.test_subset_size {
            cfg.test_subset_size = s;
        }
        if let Some(mode) = &args.effect {
            cfg.effect_mode = match mode.as_str() {
                "reeval" => EffectMode::Reeval,
                "linear" => EffectMode::Linear,
                other => return Err(Error::Config(format!("unknown effect mode '{other}'"))),
            };
        }
        if args.trials.is_some() {
            cfg.trials = args.trials;
        }
        if args.k_list.is_some() {
            cfg.k_list = args.k_list.clone();
        }
        if args.lambda_grid.is_some() {
            cfg.lambda_grid = args.lambda_grid.clone();
        }
        if args.n_grid.is_some() {
            cfg.n_grid = args.n_grid.clone();
        }
        if args.standardize {
            cfg.standardize = true;
        }
        if args.cache_dir.is_some() {
            cfg.cache_dir = args.cache_dir.clone();
        }
        if args.vectors {
            cfg.vectors = true;
        }
        if args.functional.is_some() {
            cfg.functional = args.functional.clone();
        }
        if let Some(t) = args.lemma_trials {
            cfg.lemma_trials = t;
        }
        if let Some(f) = &args.format {
            cfg.output_format = parse_format(Some(f))?;
        }

        // The synthetic spec draws from the resolved master seed.
        if let Some(DatasetSource::Synthetic { spec }) = &mut cfg.dataset {
            if spec.seed == 0 {
                spec.seed = derive_seed(cfg.seed, 0xDA7A);
            }
        }
        Ok(cfg)
    }

    pub fn config_hash(&self) -> u64 {
        let canonical = serde_json::to_string(self).unwrap();
        dataset::fnv_str(&canonical)
    }

    fn load_dataset(&self) -> Result<Dataset> {
        let source = self
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("no dataset source configured".into()))?;
        let ds = match source {
            DatasetSource::Synthetic { spec } => dataset::synthesize(spec)?,
            DatasetSource::Files {
                train,
                test,
                format,
                map_pm_one,
                name,
            } => {
                let opts = LoadOptions {
                    format: *format,
                    map_pm_one: *map_pm_one,
                };
                let label = name.clone().unwrap_or_else(|| stem_of(train));
                dataset::load_split(label, train, test.as_deref(), &opts)?
            }
            DatasetSource::Manifest {
                data,
                manifest,
                format,
                map_pm_one,
                name,
            } => {
                let opts = LoadOptions {
                    format: *format,
                    map_pm_one: *map_pm_one,
                };
                let label = name.clone().unwrap_or_else(|| stem_of(data));
                dataset::load_with_manifest(label, data, manifest, &opts)?
            }
        };
        Ok(if self.standardize { ds.standardized() } else { ds })
    }

    fn model_spec(&self) -> Result<ModelSpec> {
        let lambda = match self.lambda {
            Some(l) => l,
            None => match &self.dataset {
                Some(DatasetSource::Synthetic { .. }) => {
                    return Err(Error::Config(
                        "synthetic runs must set lambda explicitly".into(),
                    ))
                }
                _ => glm::DEFAULT_LAMBDA,
            },
        };
        Ok(ModelSpec::new(self.family, lambda))
    }

    fn strategies(&self) -> Result<Vec<Strategy>> {
        match &self.strategies {
            None => Ok(Strategy::ALL.to_vec()),
            Some(names) => names.iter().map(|s| Strategy::from_str(s)).collect(),
        }
    }

    fn metrics(&self) -> Result<Vec<MetricKind>> {
        match &self.metrics {
            None => Ok(MetricKind::STANDARD.to_vec()),
            Some(names) => names.iter().map(|s| MetricKind::from_str(s)).collect(),
        }
    }

    fn sweep_options(&self) -> Result<SweepOptions> {
        Ok(SweepOptions {
            strategies: self.strategies()?,
            schedule: self.schedule.clone(),
            metrics: self.metrics()?,
            seed: self.seed,
            test_subset_size: self.test_subset_size,
            effect_mode: self.effect_mode,
        })
    }

    fn cache(&self) -> Result<RetrainCache> {
        RetrainCache::new(self.cache_dir.clone())
    }
}

fn parse_format(s: Option<&str>) -> Result<DataFormat> {
    match s {
        None | Some("csv") => Ok(DataFormat::Csv),
        Some("binary") => Ok(DataFormat::Binary),
        Some(other) => Err(Error::Config(format!("unknown format '{other}'"))),
    }
}

fn stem_of(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: String,
    seed: u64,
    threads: usize,
    wall_time_s: f64,
    choices: serde_json::Value,
}

fn write_meta(
    cfg: &RunConfig,
    command: &str,
    started: Instant,
    choices: serde_json::Value,
) -> Result<()> {
    let meta = RunMeta {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: format!("{:016x}", cfg.config_hash()),
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        wall_time_s: started.elapsed().as_secs_f64(),
        choices,
    };
    std::fs::write(
        cfg.out_dir.join("run_meta.json"),
        serde_json::to_string_pretty(&meta).unwrap(),
    )?;
    Ok(())
}

fn prepare(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    crate::init_parallelism(cfg.threads);
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    prepare(cfg)?;
    let data = cfg.load_dataset()?;
    let ext = match cfg.output_format {
        DataFormat::Csv => "csv",
        DataFormat::Binary => "bin",
    };
    let train = cfg.out_dir.join(format!("train.{ext}"));
    let test = cfg.out_dir.join(format!("test.{ext}"));
    dataset::save(&data, cfg.output_format, &train, Some(&test))?;
    println!(
        "synth: {} -> n={} d={} m={} ({})",
        data.name,
        data.n(),
        data.dim(),
        data.test_n(),
        train.display()
    );
    write_meta(
        cfg,
        "synth",
        started,
        serde_json::json!({"split": "unstratified-head-tail", "test_fraction": 0.2}),
    )
}

fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    prepare(cfg)?;
    let data = cfg.load_dataset()?;
    let spec = cfg.model_spec()?;
    let model = glm::fit_full(&data, &spec)?;
    let accuracy = model.test_accuracy(&data);
    model.save_json(&cfg.out_dir.join("model.json"))?;
    let report = serde_json::json!({
        "dataset": data.name,
        "n": data.n(),
        "d": data.dim(),
        "family": spec.family.to_string(),
        "lambda": spec.lambda,
        "iterations": model.iters(),
        "grad_norm": model.grad_norm(),
        "test_accuracy": accuracy,
    });
    std::fs::write(
        cfg.out_dir.join("fit_report.json"),
        serde_json::to_string_pretty(&report).unwrap(),
    )?;
    println!(
        "fit: {} iters={} grad_norm={:.3e} test_acc={}",
        data.name,
        model.iters(),
        model.grad_norm(),
        accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
    );
    write_meta(cfg, "fit", started, serde_json::json!({}))
}

fn cmd_attribute(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    prepare(cfg)?;
    let data = cfg.load_dataset()?;
    let spec = cfg.model_spec()?;
    let model = glm::fit_full(&data, &spec)?;
    let batch = crate::attribution::attribute_all(&model, &data)?;
    let rows = crate::attribution::attribution_rows(&batch);

    let mut out = String::from("index,leverage,rescale,if_norm,rif_norm\n");
    for (i, lev, resc, ifn, rifn) in &rows {
        out.push_str(&format!("{i},{lev},{resc},{ifn},{rifn}\n"));
    }
    std::fs::write(cfg.out_dir.join("attribution.csv"), out)?;

    if cfg.vectors {
        let n = data.n();
        let d = data.dim();
        let indices: Vec<f64> = (0..n).map(|i| i as f64).collect();
        for (file, method) in [
            ("attribution_if.bin", crate::attribution::Method::If),
            ("attribution_rif.bin", crate::attribution::Method::Rif),
        ] {
            let vectors = SampleMatrix::from_fn(d, n, |j, i| {
                let v = batch.vector(i, method);
                v.delta_theta[j]
            });
            dataset::save_matrix_binary(&cfg.out_dir.join(file), &indices, &vectors)?;
        }
    }

    println!(
        "attribute: {} samples, max leverage {:.6}",
        rows.len(),
        batch.max_leverage()
    );
    write_meta(cfg, "attribute", started, serde_json::json!({"vectors": cfg.vectors}))
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    prepare(cfg)?;
    let data = cfg.load_dataset()?;
    let spec = cfg.model_spec()?;
    let opts = cfg.sweep_options()?;
    let cache = cfg.cache()?;

    let records_path = cfg.out_dir.join("records.csv");
    let mut writer = std::io::BufWriter::new(std::fs::File::create(&records_path)?);
    use std::io::Write;
    writeln!(writer, "{}", evaluation::RECORDS_CSV_HEADER)?;
    let out = evaluation::run_sweep(&data, &spec, &opts, Some(&cache), |rec| {
        let _ = writeln!(writer, "{}", evaluation::record_csv_line(rec));
    })?;
    drop(writer);

    let summary = evaluation::summarize(&out.records);
    evaluation::write_summary_csv(&cfg.out_dir.join("summary.csv"), &summary)?;

    let if_err = evaluation::mean_abs_error(&out.records, crate::attribution::Method::If);
    let rif_err = evaluation::mean_abs_error(&out.records, crate::attribution::Method::Rif);
    println!(
        "evaluate: {} records, mean |pred-actual| IF={:.4e} RIF={:.4e}, max leverage {:.4}",
        out.records.len(),
        if_err,
        rif_err,
        out.max_leverage
    );
    write_meta(
        cfg,
        "evaluate",
        started,
        serde_json::json!({
            "test_subset_size": cfg.test_subset_size,
            "test_subset_high_loss_fraction": 0.5,
            "effect_mode": cfg.effect_mode,
            "max_leverage": out.max_leverage,
            "test_accuracy": out.test_accuracy,
        }),
    )
}

fn cmd_poison(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    prepare(cfg)?;
    let data = cfg.load_dataset()?;
    let spec = cfg.model_spec()?;
    let trials = cfg.trials.unwrap_or(40);
    let results = poison::run_experiment(&data, &spec, trials, cfg.seed)?;
    poison::write_trials_csv(&cfg.out_dir.join("poison.csv"), &results)?;

    let wins = results
        .iter()
        .filter(|t| {
            (t.pred_rif - t.actual_logit_change).abs() < (t.pred_if - t.actual_logit_change).abs()
        })
        .count();
    let mean = |sel: &dyn Fn(&poison::PoisonTrial) -> f64| {
        results.iter().map(sel).sum::<f64>() / results.len().max(1) as f64
    };
    let if_err = mean(&|t| (t.pred_if - t.actual_logit_change).abs());
    let rif_err = mean(&|t| (t.pred_rif - t.actual_logit_change).abs());
    println!(
        "poison: {trials} trials, RIF closer in {wins}/{trials}, mean |err| IF={if_err:.4} RIF={rif_err:.4}"
    );
    write_meta(cfg, "poison", started, serde_json::json!({"trials": trials}))
}

fn theory_functional(cfg: &RunConfig, data: &Dataset, model: &glm::FittedModel) -> Result<EvaluationFn> {
    match cfg.functional.as_deref() {
        None | Some("self-loss") => Ok(EvaluationFn::self_loss()),
        Some("test-loss") => {
            let subset = evaluation::build_test_subset(
                data,
                model,
                cfg.test_subset_size.min(data.test_n()),
                cfg.seed,
            )?;
            Ok(EvaluationFn::test_loss_sum(subset))
        }
        Some(other) => match other.strip_prefix("single-logit-") {
            Some(t) => Ok(EvaluationFn::single_logit(t.parse().map_err(|_| {
                Error::Config(format!("bad single-logit index in '{other}'"))
            })?)),
            None => Err(Error::Config(format!("unknown functional '{other}'"))),
        },
    }
}

fn cmd_theory(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    prepare(cfg)?;
    let data = cfg.load_dataset()?;
    let spec = cfg.model_spec()?;
    let model = glm::fit_full(&data, &spec)?;
    let f = theory_functional(cfg, &data, &model)?;

    let constants = theory::compute_constants(&model, &data, &f)?;
    let k_list = cfg.k_list.clone().unwrap_or_else(|| vec![2, 5, 10]);
    let trials = cfg.trials.unwrap_or(200);

    let mut bounds = Vec::new();
    let mut snrs = Vec::new();
    for &k in &k_list {
        let report = theory::verify_accuracy_bound(&model, &data, &f, k, trials, cfg.seed, false)?;
        println!(
            "theory: k={k} bound={:.4e} observed={:.4e} satisfied={}",
            report.bound, report.observed_gap, report.satisfied
        );
        bounds.push(report);
        snrs.push(theory::snr_estimate(&model, &data, &f, k, trials, cfg.seed)?);
    }
    let lemma = theory::verify_lemma_psd_sum(cfg.lemma_trials, derive_seed(cfg.seed, 0x1e44));
    println!(
        "theory: lemma {} trials, {} violations",
        lemma.trials, lemma.violations
    );

    let report = serde_json::json!({
        "dataset": data.name,
        "functional": cfg.functional.clone().unwrap_or_else(|| "self-loss".into()),
        "constants": constants,
        "bounds": bounds,
        "snr": snrs,
        "lemma": lemma,
    });
    std::fs::write(
        cfg.out_dir.join("theory.json"),
        serde_json::to_string_pretty(&report).unwrap(),
    )?;
    write_meta(cfg, "theory", started, serde_json::json!({"k_list": k_list, "trials": trials}))
}

fn stacked_sweep<I, F>(
    cfg: &RunConfig,
    command: &str,
    variants: I,
    records_file: &str,
    summary_file: &str,
    mut run_variant: F,
) -> Result<()>
where
    I: IntoIterator<Item = String>,
    F: FnMut(&str) -> Result<(Vec<evaluation::EvaluationRecord>, f64)>,
{
    let started = Instant::now();
    prepare(cfg)?;
    use std::io::Write;
    let mut records_out =
        std::io::BufWriter::new(std::fs::File::create(cfg.out_dir.join(records_file))?);
    writeln!(records_out, "{}", evaluation::RECORDS_CSV_HEADER)?;
    let mut summary_out =
        std::io::BufWriter::new(std::fs::File::create(cfg.out_dir.join(summary_file))?);
    writeln!(summary_out, "variant,{}", evaluation::SUMMARY_CSV_HEADER)?;

    for label in variants {
        let (records, max_leverage) = run_variant(&label)?;
        for rec in &records {
            writeln!(records_out, "{}", evaluation::record_csv_line(rec))?;
        }
        for row in evaluation::summarize(&records) {
            writeln!(summary_out, "{label},{}", evaluation::summary_csv_line(&row))?;
        }
        println!("{command}: variant {label} done (max leverage {max_leverage:.4})");
    }
    write_meta(cfg, command, started, serde_json::json!({}))
}

fn cmd_sweep_lambda(cfg: &RunConfig) -> Result<()> {
    let data = cfg.load_dataset()?;
    let base_spec = cfg.model_spec()?;
    let grid = cfg
        .lambda_grid
        .clone()
        .unwrap_or_else(|| vec![1e-5, 1e-3, 1e-1, 1e1, 1e3]);
    let opts = cfg.sweep_options()?;
    let cache = cfg.cache()?;
    let labels: Vec<String> = grid.iter().map(|l| format!("lambda={l:e}")).collect();
    let mut idx = 0;
    stacked_sweep(
        cfg,
        "sweep-lambda",
        labels,
        "records_lambda.csv",
        "summary_lambda.csv",
        move |_label| {
            let lambda = grid[idx];
            idx += 1;
            let spec = ModelSpec::new(base_spec.family, lambda);
            let mut data_l = data.clone();
            data_l.name = format!("{}@lambda={lambda:e}", data.name);
            let out = evaluation::run_sweep(&data_l, &spec, &opts, Some(&cache), |_| {})?;
            Ok((out.records, out.max_leverage))
        },
    )
}

fn cmd_sweep_n(cfg: &RunConfig) -> Result<()> {
    let data = cfg.load_dataset()?;
    let spec = cfg.model_spec()?;
    let grid = cfg.n_grid.clone().ok_or_else(|| {
        Error::Config("sweep-n needs n_grid (e.g. --n-grid 800,1600,6400)".into())
    })?;
    let opts = cfg.sweep_options()?;
    let cache = cfg.cache()?;
    let seed = cfg.seed;
    let labels: Vec<String> = grid.iter().map(|n| format!("n={n}")).collect();
    let mut idx = 0;
    stacked_sweep(
        cfg,
        "sweep-n",
        labels,
        "records_n.csv",
        "summary_n.csv",
        move |_label| {
            let n_sub = grid[idx];
            idx += 1;
            let sub = data.subsample(n_sub, derive_seed(seed, n_sub as u64))?;
            let out = evaluation::run_sweep(&sub, &spec, &opts, Some(&cache), |_| {})?;
            Ok((out.records, out.max_leverage))
        },
    )
}

/// Parse argv, run, and map errors to exit codes.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let (args, run): (&CommonArgs, fn(&RunConfig) -> Result<()>) = match &cli.command {
        Cmd::Synth(a) => (a, cmd_synth),
        Cmd::Fit(a) => (a, cmd_fit),
        Cmd::Attribute(a) => (a, cmd_attribute),
        Cmd::Evaluate(a) => (a, cmd_evaluate),
        Cmd::Poison(a) => (a, cmd_poison),
        Cmd::Theory(a) => (a, cmd_theory),
        Cmd::SweepLambda(a) => (a, cmd_sweep_lambda),
        Cmd::SweepN(a) => (a, cmd_sweep_n),
    };
    let cfg = match RunConfig::from_args(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match run(&cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_parse() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.test_subset_size, 50);
        assert!(matches!(cfg.effect_mode, EffectMode::Reeval));
        assert_eq!(cfg.lemma_trials, 1000);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn synthetic_requires_explicit_lambda() {
        let mut cfg = RunConfig::default();
        cfg.dataset = Some(DatasetSource::Synthetic {
            spec: SyntheticSpec {
                n: 10,
                d: 2,
                design: dataset::Design::GaussianIsotropic,
                label_model: dataset::LabelModel::Logistic {
                    theta_star: dataset::ThetaStar::Zero,
                },
                seed: 1,
            },
        });
        assert!(cfg.model_spec().is_err());
        cfg.lambda = Some(1e-3);
        assert!(cfg.model_spec().is_ok());
    }
}
