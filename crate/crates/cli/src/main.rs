use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gaitmood::eval::report::lift_test_seed;
use gaitmood::eval::{permutation_test_mean_gt_zero, Protocol};
use gaitmood::ingest::{load_study, manifest_dir, StudyManifest};
use gaitmood::models::{ForestParams, LogregParams};
use gaitmood::pipeline::{self, RunConfig, RunMetadata, RunReport, Task};
use gaitmood::preprocess::participant_windows;
use gaitmood::stats;
use gaitmood::synth::{generate_study, SynthParams};
use gaitmood::{Condition, FeatureSet, ModelKind, ModelSpec};

/// Emotion recognition from wrist-worn accelerometer, gyroscope and heart-rate data.
#[derive(Debug, Parser)]
#[command(name = "gaitmood", version, about)]
struct Cli {
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Master seed; overrides the config file.
    #[arg(long, global = true, env = "GAITMOOD_SEED", value_name = "SEED")]
    seed: Option<u64>,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a manifest and summarize its streams.
    IngestCheck {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write per-window feature vectors and per-emotion heart-rate means.
    Extract {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Personal models under repeated stratified cross-validation.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Personal models tested on contiguous single-emotion blocks.
    BlockCv {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Leave-one-user-out within each condition.
    Louo {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Re-test user lifts stored in a report.
    Lift {
        #[arg(long)]
        report: PathBuf,
        /// Sign assignments; defaults to the report's setting.
        #[arg(long)]
        permutations: Option<usize>,
    },
    /// Print feature-importance distributions stored in a report.
    Importance {
        #[arg(long)]
        report: PathBuf,
        /// Features shown per condition.
        #[arg(long, default_value_t = 30)]
        top: usize,
    },
    /// Paired t, Wilcoxon and ANOVA on questionnaire and heart-rate summaries.
    Stats {
        /// CSV: participant,condition,emotion,phase,positive_affect,negative_affect
        #[arg(long)]
        panas: PathBuf,
        /// CSV: participant,condition,emotion,mean_bpm
        #[arg(long)]
        heart_rate: Option<PathBuf>,
        /// Report path; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic study (manifest plus sensor files).
    Synth {
        #[arg(long)]
        output: PathBuf,
        /// JSON file with generator parameters.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        participants: Option<usize>,
        /// Walk length per emotion, seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Give every emotion the same gait (no signal).
        #[arg(long)]
        identical: bool,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// acc_gyro_hr, acc_hr or acc_only.
    #[arg(long)]
    feature_set: Option<FeatureSet>,
    /// happy_vs_sad or happy_sad_neutral.
    #[arg(long)]
    task: Option<Task>,
    /// Comma-separated: logreg, forest. The baseline always runs.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelKind>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    permutations: Option<usize>,
    /// Trees per forest.
    #[arg(long)]
    n_trees: Option<usize>,
    /// L2 strength of logistic regression.
    #[arg(long)]
    l2: Option<f64>,
    /// Restrict to a condition; repeatable.
    #[arg(long = "condition")]
    conditions: Vec<u8>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self, protocol: Protocol, seed: Option<u64>) -> Result<RunConfig> {
        let mut config = match (&self.config, &self.manifest) {
            (Some(path), _) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            (None, Some(m)) => RunConfig::new(m),
            (None, None) => bail!("either --config or --manifest is required"),
        };
        config.protocol = protocol;
        if let Some(m) = &self.manifest {
            config.manifest = m.clone();
        }
        if let Some(f) = self.feature_set {
            config.feature_set = f;
        }
        if let Some(t) = self.task {
            config.task = t;
        }
        if let Some(kinds) = &self.models {
            config.models = kinds.iter().map(|&k| ModelSpec::default_for(k)).collect();
        }
        for spec in config.models.iter_mut() {
            match spec {
                ModelSpec::Forest(p) => {
                    if let Some(n) = self.n_trees {
                        *p = ForestParams { n_trees: n, ..*p };
                    }
                }
                ModelSpec::Logreg(p) => {
                    if let Some(l2) = self.l2 {
                        *p = LogregParams { l2, ..*p };
                    }
                }
                ModelSpec::Baseline => {}
            }
        }
        if let Some(v) = self.folds {
            config.eval.folds = v;
        }
        if let Some(v) = self.repeats {
            config.eval.repeats = v;
        }
        if let Some(v) = self.permutations {
            config.eval.permutations = v;
        }
        if let Some(s) = seed {
            config.eval.master_seed = s;
        }
        if !self.conditions.is_empty() {
            config.conditions = Some(
                self.conditions
                    .iter()
                    .map(|&c| Condition::new(c))
                    .collect::<gaitmood::Result<Vec<_>>>()?,
            );
        }
        if let Some(o) = &self.output_dir {
            config.output_dir = o.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ingest_check(manifest_path: &Path) -> Result<()> {
    let manifest = StudyManifest::load(manifest_path)?;
    let study = load_study(&manifest, &manifest_dir(manifest_path));
    let summary = study.summary();
    for p in &summary.participants {
        println!(
            "{}\tcondition {}\tacc {} samples ({} Hz)\tgyro {}\thr {} ({} excluded)",
            p.participant,
            p.condition,
            p.acc_samples,
            p.acc_rate_hz.map_or("-".into(), |r| format!("{r:.2}")),
            p.gyro_samples,
            p.hr_samples,
            p.hr_excluded
        );
    }
    for p in &study.participants {
        let w = participant_windows(p);
        for f in &w.failed_segments {
            println!("{}\t{} segment failed: {}", f.participant, f.emotion, f.reason);
        }
        if !w.dropped.is_empty() {
            println!("{}\t{} windows dropped", p.id, w.dropped.len());
        }
    }
    for e in &summary.excluded {
        println!("{}\texcluded: {}", e.participant, e.reason);
    }
    if let Some(rate) = summary.mean_acc_rate_hz {
        println!("mean accelerometer rate: {rate:.3} Hz");
    }
    println!(
        "{} participants loaded, {} excluded",
        summary.participants.len(),
        summary.excluded.len()
    );
    Ok(())
}

fn extract(run: &RunArgs, seed: Option<u64>) -> Result<()> {
    let config = run.resolve(Protocol::Cv, seed)?;
    let extraction = pipeline::extract(&config.manifest, config.feature_set, config.conditions.as_deref())?;
    fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))?;
    let features = config.output_dir.join("features.csv");
    pipeline::write_features(&features, &extraction)?;
    let hr = config.output_dir.join("heart_rate_summary.csv");
    let f = fs::File::create(&hr).with_context(|| format!("creating {}", hr.display()))?;
    stats::write_heart_rate_summary(f, &extraction.heart_rate)?;
    println!(
        "{} windows from {} participants ({} dropped, {} segments failed, {} participants excluded)",
        extraction.vectors().count(),
        extraction.participants.len(),
        extraction.dropped_windows.len(),
        extraction.failed_segments.len(),
        extraction.excluded().len()
    );
    println!("wrote {}", features.display());
    println!("wrote {}", hr.display());
    Ok(())
}

fn run(run: &RunArgs, protocol: Protocol, seed: Option<u64>) -> Result<()> {
    let config = run.resolve(protocol, seed)?;
    let started = RunMetadata::now_ms();
    let report = pipeline::run_pipeline(&config)?;
    let written = pipeline::write_report(&config.output_dir, &report)?;
    pipeline::write_metadata(
        &config.output_dir,
        &RunMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_ms: started,
            finished_unix_ms: RunMetadata::now_ms(),
            threads: rayon::current_num_threads(),
        },
    )?;
    for c in &report.conditions {
        for m in &c.models {
            print!(
                "condition {} {:<8} acc {:.3} ({:.3})  f1 {:.3}",
                c.condition, m.model, m.accuracy.mean, m.accuracy.std, m.macro_f1.mean
            );
            if let Some(a) = m.roc_auc {
                print!("  auc {:.3}", a.mean);
            }
            if let (Some(l), Some(p)) = (m.mean_user_lift, m.lift_p_value) {
                print!("  lift {l:.3} p={p:.4}");
            }
            println!();
        }
    }
    if !report.skipped_users.is_empty() {
        println!("{} participants skipped (see report)", report.skipped_users.len());
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report: RunReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if report.schema != pipeline::REPORT_SCHEMA {
        bail!("unsupported report schema {}", report.schema);
    }
    Ok(report)
}

fn lift(path: &Path, permutations: Option<usize>, seed: Option<u64>) -> Result<()> {
    let report = read_report(path)?;
    let b = permutations.unwrap_or(report.config.eval.permutations);
    let master = seed.unwrap_or(report.config.eval.master_seed);
    for c in &report.conditions {
        for m in c.models.iter().filter(|m| !m.user_lifts.is_empty()) {
            let lifts: Vec<f64> = m.user_lifts.iter().map(|l| l.lift).collect();
            let mean = lifts.iter().sum::<f64>() / lifts.len() as f64;
            let p = if lifts.len() >= 2 {
                let s = lift_test_seed(master, c.condition, m.model);
                format!("{:.4}", permutation_test_mean_gt_zero(&lifts, b, s)?)
            } else {
                "-".into()
            };
            println!(
                "condition {} {:<8} users {:>3}  mean lift {mean:.3}  p={p}",
                c.condition,
                m.model,
                lifts.len()
            );
        }
    }
    Ok(())
}

fn importance(path: &Path, top: usize) -> Result<()> {
    let report = read_report(path)?;
    if report.importance.is_empty() {
        bail!("report has no forest importances (needs a forest evaluated within users)");
    }
    for ci in &report.importance {
        println!("condition {} ({} users)", ci.condition, ci.report.n_users);
        println!("  {:<24} {:>6} {:>6} {:>6} {:>6} {:>6}", "feature", "min", "q25", "median", "q75", "max");
        for f in ci.report.features.iter().take(top) {
            println!(
                "  {:<24} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3}",
                f.feature, f.min, f.q25, f.median, f.q75, f.max
            );
        }
    }
    Ok(())
}

fn run_stats(panas: &Path, heart_rate: Option<&Path>, output: Option<&Path>) -> Result<()> {
    let rows = stats::parse_panas_csv(panas)?;
    let hr = match heart_rate {
        Some(p) => stats::parse_heart_rate_summary(p)?,
        None => Vec::new(),
    };
    let report = stats::stats_report(&rows, &hr)?;
    match output {
        Some(path) => {
            write_json(path, &report)?;
            println!("wrote {}", path.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn synth(
    output: &Path,
    params_path: Option<&Path>,
    participants: Option<usize>,
    duration: Option<f64>,
    identical: bool,
    seed: Option<u64>,
) -> Result<()> {
    let mut params = match params_path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None if identical => SynthParams::identical(),
        None => SynthParams::separable(),
    };
    if identical && params_path.is_some() {
        params.happy = params.neutral;
        params.sad = params.neutral;
    }
    if let Some(n) = participants {
        params.n_participants = n;
    }
    if let Some(d) = duration {
        params.duration_s = d;
    }
    if let Some(s) = seed {
        params.seed = s;
    }
    let manifest = generate_study(&params, output)?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::IngestCheck { manifest } => ingest_check(manifest),
        Command::Extract { run: r } => extract(r, seed),
        Command::Evaluate { run: r } => run(r, Protocol::Cv, seed),
        Command::BlockCv { run: r } => run(r, Protocol::BlockCv, seed),
        Command::Louo { run: r } => run(r, Protocol::Louo, seed),
        Command::Lift { report, permutations } => lift(report, *permutations, seed),
        Command::Importance { report, top } => importance(report, *top),
        Command::Stats {
            panas,
            heart_rate,
            output,
        } => run_stats(panas, heart_rate.as_deref(), output.as_deref()),
        Command::Synth {
            output,
            params,
            participants,
            duration,
            identical,
        } => synth(output, params.as_deref(), *participants, *duration, *identical, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
