use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use symroute_core::calibration::{CalibrationSnapshot, TaskKind};
use symroute_core::harness::longitudinal::{
    evaluate_anchoring, read_longitudinal, write_longitudinal, AnchorMethod,
};
use symroute_core::harness::pipeline::{
    self, audit_jsonl, calibrate, evaluate_stage, fit_stage, risk_coverage_csv, route_stage,
    run_pipeline, snapshot_json, write_atomic, write_outputs, Partition, ThresholdSnapshot,
};
use symroute_core::harness::synth::{
    generate_longitudinal, generate_synthetic_cohort, LongitudinalSpec, SynthSpec,
};
use symroute_core::harness::table::{ingest_csv, write_csv, SampleTable};
use symroute_core::harness::windows::{read_stream, segment_windows, WindowSpec};
use symroute_core::harness::PipelineConfig;
use symroute_core::metrics::report_json;
use symroute_core::ThresholdConfig;

#[derive(Parser)]
#[command(
    name = "symroute",
    version,
    about = "Calibrated four-action routing for symptom predictions"
)]
struct Cli {
    /// Worker threads for per-sample and per-subject work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a sample CSV and print a summary.
    Ingest {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Write the normalized table back out as CSV.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit temperature scaling and the conformal quantile on the calibration split.
    Calibrate {
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Fit and freeze routing thresholds on the validation split.
    FitThresholds {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        calibration: PathBuf,
    },
    /// Route rows with a frozen threshold snapshot and write the audit trail.
    Route {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        thresholds: PathBuf,
        /// Route every row instead of only the test split.
        #[arg(long)]
        all_rows: bool,
    },
    /// Route the test split and write metrics and the risk-coverage curve.
    Evaluate {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        thresholds: PathBuf,
    },
    /// Anchored longitudinal evaluation with an exclusion report.
    AnchorEval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        n_anchor: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::All)]
        method: MethodArg,
        /// Report path; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Cut an annotated sensor stream into labeled windows.
    Segment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 256)]
        length: usize,
        #[arg(long, default_value_t = 64)]
        stride: usize,
        /// Windows whose annotation rate is strictly above this are positive.
        #[arg(long, default_value_t = 0.5)]
        fog_gamma: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a seeded synthetic cohort.
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// Calibrate, fit thresholds, route and evaluate in one pass.
    Run {
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

/// Flags mirroring the pipeline configuration. Values in `--config` win.
#[derive(Args, Clone, Default)]
struct PipelineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long = "out-dir")]
    output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    coverage_budget: Option<f64>,
    #[arg(long)]
    tau_c: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quality_pct: Option<f64>,
    #[arg(long)]
    uncertainty_abstain_pct: Option<f64>,
    #[arg(long)]
    uncertainty_refer_pct: Option<f64>,
    #[arg(long)]
    ood_pct: Option<f64>,
    #[arg(long)]
    cal_fraction: Option<f64>,
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Also REFER when uncertainty exceeds its refer threshold.
    #[arg(long)]
    refer_on_uncertainty: bool,
    /// Never REFER on the OOD score.
    #[arg(long)]
    no_refer_on_ood: bool,
    #[arg(long)]
    clamp_q_hat: bool,
}

#[derive(Args, Clone)]
struct SynthArgs {
    #[arg(long, value_enum, default_value_t = TaskArg::Classification)]
    task: TaskArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 60)]
    n_subjects: usize,
    #[arg(long, default_value_t = 10)]
    samples_per_subject: usize,
    #[arg(long, default_value_t = 3)]
    num_classes: usize,
    #[arg(long, default_value = "pads")]
    dataset: String,
    #[arg(long, default_value_t = 0.8)]
    uncertainty_correlation: f64,
    #[arg(long, default_value_t = 0.1)]
    ood_fraction: f64,
    #[arg(long, default_value_t = 0.03)]
    missing_rate: f64,
    /// Emit a longitudinal visit table instead of a sample table.
    #[arg(long)]
    longitudinal: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Classification,
    Regression,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classification => TaskKind::Classification,
            TaskArg::Regression => TaskKind::Regression,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    All,
    LastAnchor,
    AnchorMean,
    MeanPredictor,
    PersonalizedLsq,
}

impl PipelineArgs {
    /// Defaults, then flags, then the JSON config file on top.
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = PipelineConfig::default();
        if let Some(t) = self.task {
            c.task = t.into();
        }
        let q = &mut c.quantiles;
        for (flag, field) in [
            (self.quality_pct, &mut q.quality_pct),
            (self.uncertainty_abstain_pct, &mut q.uncertainty_abstain_pct),
            (self.uncertainty_refer_pct, &mut q.uncertainty_refer_pct),
            (self.ood_pct, &mut q.ood_pct),
        ] {
            if let Some(v) = flag {
                *field = v;
            }
        }
        for (flag, field) in [
            (self.alpha, &mut c.alpha),
            (self.coverage_budget, &mut c.coverage_budget),
            (self.tau_c, &mut c.tau_c),
            (self.cal_fraction, &mut c.split_fractions.0),
            (self.val_fraction, &mut c.split_fractions.1),
        ] {
            if let Some(v) = flag {
                *field = v;
            }
        }
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        c.input = self.input.clone();
        c.output_dir = self.output_dir.clone();
        c.refer.on_uncertainty |= self.refer_on_uncertainty;
        c.refer.on_ood &= !self.no_refer_on_ood;
        c.clamp_q_hat |= self.clamp_q_hat;

        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let overrides: Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?;
            let Value::Object(overrides) = overrides else {
                bail!(symroute_core::Error::config(
                    "config file must hold a JSON object"
                ));
            };
            let mut merged = serde_json::to_value(&c)?;
            if let Value::Object(base) = &mut merged {
                base.extend(overrides);
            }
            c = serde_json::from_value(merged).map_err(symroute_core::Error::from)?;
        }
        c.validate()?;
        Ok(c)
    }
}

fn input_of(config: &PipelineConfig) -> Result<&Path> {
    match &config.input {
        Some(p) => Ok(p),
        None => bail!(symroute_core::Error::config(
            "no input file: pass --input or set `input` in the config"
        )),
    }
}

fn out_dir_of(config: &PipelineConfig) -> PathBuf {
    config
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load_table(config: &PipelineConfig) -> Result<SampleTable> {
    let path = input_of(config)?;
    ingest_csv(path, config).with_context(|| format!("ingesting {}", path.display()))
}

fn load_calibration(path: &Path) -> Result<CalibrationSnapshot> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).map_err(symroute_core::Error::from)?)
}

fn load_thresholds(path: &Path) -> Result<ThresholdConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let snapshot: ThresholdSnapshot =
        serde_json::from_str(&text).map_err(symroute_core::Error::from)?;
    Ok(snapshot.verified()?)
}

fn write(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest { pipeline, output } => {
            let config = pipeline.resolve()?;
            let table = load_table(&config)?;
            print!("{}", snapshot_json(&table.report())?);
            if let Some(path) = output {
                let mut buf = Vec::new();
                write_csv(&table, &mut buf)?;
                write(&path, std::str::from_utf8(&buf)?)?;
            }
        }
        Command::Calibrate { pipeline } => {
            let config = pipeline.resolve()?;
            let table = load_table(&config)?;
            let partition = Partition::of(&table, &config)?;
            let snapshot = calibrate(&table, &partition, &config)?;
            write(
                &out_dir_of(&config).join(pipeline::CALIBRATION_FILE),
                &snapshot_json(&snapshot)?,
            )?;
        }
        Command::FitThresholds {
            pipeline,
            calibration,
        } => {
            let config = pipeline.resolve()?;
            let table = load_table(&config)?;
            let partition = Partition::of(&table, &config)?;
            let snapshot = load_calibration(&calibration)?;
            let thresholds = fit_stage(&table, &partition, &snapshot, &config)?;
            let text = snapshot_json(&ThresholdSnapshot::new(thresholds))?;
            write(&out_dir_of(&config).join(pipeline::THRESHOLDS_FILE), &text)?;
        }
        Command::Route {
            pipeline,
            calibration,
            thresholds,
            all_rows,
        } => {
            let config = pipeline.resolve()?;
            let table = load_table(&config)?;
            let rows: Vec<usize> = if all_rows {
                (0..table.rows.len()).collect()
            } else {
                Partition::of(&table, &config)?.test
            };
            let (decisions, _, _) = route_stage(
                &table,
                &rows,
                &load_calibration(&calibration)?,
                &load_thresholds(&thresholds)?,
                &config,
            )?;
            write(
                &out_dir_of(&config).join(pipeline::AUDIT_FILE),
                &audit_jsonl(&decisions)?,
            )?;
        }
        Command::Evaluate {
            pipeline,
            calibration,
            thresholds,
        } => {
            let config = pipeline.resolve()?;
            let table = load_table(&config)?;
            let partition = Partition::of(&table, &config)?;
            let (decisions, metrics, curve) = evaluate_stage(
                &table,
                &partition.test,
                &load_calibration(&calibration)?,
                &load_thresholds(&thresholds)?,
                &config,
            )?;
            let dir = out_dir_of(&config);
            write(&dir.join(pipeline::AUDIT_FILE), &audit_jsonl(&decisions)?)?;
            write(&dir.join(pipeline::METRICS_FILE), &report_json(&metrics)?)?;
            write(
                &dir.join(pipeline::RISK_COVERAGE_FILE),
                &risk_coverage_csv(&curve)?,
            )?;
        }
        Command::AnchorEval {
            input,
            n_anchor,
            method,
            output,
        } => {
            let file =
                fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let series = read_longitudinal(file)?;
            let methods: Vec<AnchorMethod> = match method {
                // label-only and personalized methods need at least one anchor
                MethodArg::All if n_anchor == 0 => vec![AnchorMethod::MeanPredictor],
                MethodArg::All => AnchorMethod::ALL.to_vec(),
                MethodArg::LastAnchor => vec![AnchorMethod::LastAnchor],
                MethodArg::AnchorMean => vec![AnchorMethod::AnchorMean],
                MethodArg::MeanPredictor => vec![AnchorMethod::MeanPredictor],
                MethodArg::PersonalizedLsq => vec![AnchorMethod::PersonalizedLsq],
            };
            let reports = methods
                .into_iter()
                .map(|m| evaluate_anchoring(&series, n_anchor, m))
                .collect::<symroute_core::Result<Vec<_>>>()?;
            emit(output.as_deref(), &report_json(&reports)?)?;
        }
        Command::Segment {
            input,
            length,
            stride,
            fog_gamma,
            output,
        } => {
            let spec = WindowSpec::new(length, stride, fog_gamma)?;
            let file =
                fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let segmentation = segment_windows(&read_stream(file)?, &spec)?;
            if let Some(w) = &segmentation.warning {
                eprintln!("warning: {w}");
            }
            let mut text = String::from("index,start,len,positive_rate,label\n");
            for w in &segmentation.windows {
                text.push_str(&format!(
                    "{},{},{},{},{}\n",
                    w.index,
                    w.start,
                    w.len,
                    w.positive_rate,
                    u8::from(w.label)
                ));
            }
            emit(output.as_deref(), &text)?;
        }
        Command::Synth { synth, output } => {
            let mut buf = BufWriter::new(Vec::new());
            if synth.longitudinal {
                let series = generate_longitudinal(&LongitudinalSpec {
                    seed: synth.seed,
                    n_subjects: synth.n_subjects,
                    ..LongitudinalSpec::default()
                })?;
                write_longitudinal(&series, &mut buf)?;
            } else {
                let spec = SynthSpec {
                    task: synth.task.into(),
                    seed: synth.seed,
                    n_subjects: synth.n_subjects,
                    samples_per_subject: synth.samples_per_subject,
                    num_classes: synth.num_classes,
                    dataset_id: synth.dataset,
                    uncertainty_correlation: synth.uncertainty_correlation,
                    ood_fraction: synth.ood_fraction,
                    missing_rate: synth.missing_rate,
                    ..SynthSpec::default()
                };
                write_csv(&generate_synthetic_cohort(&spec)?.table, &mut buf)?;
            }
            let bytes = buf.into_inner()?;
            write(&output, std::str::from_utf8(&bytes)?)?;
        }
        Command::Run { pipeline } => {
            let config = pipeline.resolve()?;
            let table = load_table(&config)?;
            let outputs = run_pipeline(&table, &config)?;
            for path in write_outputs(&outputs, &out_dir_of(&config))? {
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

/// 2 for a violated contract anywhere in the chain, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let contract = err
        .chain()
        .filter_map(|e| e.downcast_ref::<symroute_core::Error>())
        .any(symroute_core::Error::is_contract_violation);
    if contract {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon_pool(n) {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn rayon_pool(threads: usize) -> Result<()> {
    if threads == 0 {
        bail!("--threads must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the worker pool")
}
