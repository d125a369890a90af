use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mdg_core::harness::pipeline::{self, ClassifierKind, FeatureSet, Method, PipelineConfig, RecordFeatures};
use mdg_core::harness::{evaluate, ConfusionMatrix, Dataset, EvalProtocol, Report, TrainedModel};
use mdg_core::{envelope, io, segmentation, simulate, tfr};
use mdg_core::{Error, GestureLabel, IQRecord, Result, SimConfig};

#[derive(Parser)]
#[command(name = "mdg", version, about = "Micro-Doppler gesture simulation and recognition")]
struct Cli {
    /// Base seed for simulation, splits and stochastic fitting.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with optional `pipeline`, `protocol` and `simulation` sections.
    #[arg(long, global = true, value_name = "FILE.json")]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a balanced synthetic dataset.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 120)]
        per_class: usize,
        #[arg(long, value_name = "DB")]
        snr: Option<f64>,
        /// Write only the manifest; records are synthesised when read.
        #[arg(long)]
        manifest_only: bool,
    },
    /// Export the gray spectrogram image of one record.
    Spectrogram {
        #[command(flatten)]
        input: IqInput,
        #[arg(long, value_name = "FILE.pgm")]
        out: PathBuf,
        /// Raw power matrix with a time header row and a frequency column.
        #[arg(long, value_name = "FILE.csv")]
        matrix: Option<PathBuf>,
    },
    /// Split one record into its detected motions.
    Segment {
        #[command(flatten)]
        input: IqInput,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the upper and lower envelopes of one record.
    Envelope {
        #[command(flatten)]
        input: IqInput,
        #[arg(long, value_name = "FILE.json")]
        out: PathBuf,
        /// Spectrogram image with the envelope pixels set to white.
        #[arg(long, value_name = "FILE.pgm")]
        overlay: Option<PathBuf>,
    },
    /// Per-record feature table of a dataset.
    Features {
        #[arg(long, value_enum)]
        kind: FeatureKindArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_name = "FILE.csv")]
        out: PathBuf,
    },
    /// Pairwise class similarity of spectrogram-image subspaces.
    Similarity {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, value_name = "FILE.csv")]
        out: PathBuf,
    },
    /// Evaluate a PCA input variant.
    Pca {
        #[arg(long, value_enum)]
        variant: PcaVariant,
        #[arg(long, default_value = "nn-l1")]
        classifier: ClassifierKind,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a method on every record of a dataset.
    Train {
        #[command(flatten)]
        method: MethodArgs,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_name = "MODEL.json")]
        out: PathBuf,
    },
    /// Monte Carlo holdout evaluation, or scoring of a saved model.
    Eval {
        #[command(flatten)]
        method: MethodArgs,
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory for report.json and report.csv.
        #[arg(long)]
        out: PathBuf,
        /// Score this trained model on every record instead of resampling splits.
        #[arg(long, value_name = "MODEL.json")]
        model: Option<PathBuf>,
    },
    /// Print a saved report.
    Report {
        #[arg(long = "in", value_name = "REPORT.json")]
        input: PathBuf,
    },
}

#[derive(Args)]
struct IqInput {
    #[arg(long = "in", value_name = "FILE.iq")]
    input: PathBuf,
    /// Sample rate of the file.
    #[arg(long, default_value_t = 12_800.0)]
    fs: f64,
}

#[derive(Args)]
struct MethodArgs {
    #[arg(long, default_value = "envelope")]
    features: FeatureSet,
    #[arg(long, default_value = "nn-l1")]
    classifier: ClassifierKind,
}

impl MethodArgs {
    fn method(&self) -> Method {
        Method::new(self.features, self.classifier)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureKindArg {
    Empirical,
    Trajectory,
    Envelope,
}

#[derive(Clone, Copy, ValueEnum)]
enum PcaVariant {
    Spectrogram,
    EnvelopeImage,
    EnvelopeVector,
}

impl PcaVariant {
    fn features(self) -> FeatureSet {
        match self {
            PcaVariant::Spectrogram => FeatureSet::PcaSpec,
            PcaVariant::EnvelopeImage => FeatureSet::PcaEnvimg,
            PcaVariant::EnvelopeVector => FeatureSet::PcaEnv,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    pipeline: PipelineConfig,
    protocol: EvalProtocol,
    simulation: SimConfig,
}

struct Ctx {
    pipeline: PipelineConfig,
    protocol: EvalProtocol,
    simulation: SimConfig,
}

impl Ctx {
    fn load(cli: &Cli) -> Result<Self> {
        let mut fc = match &cli.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                serde_json::from_str::<FileConfig>(&text)
                    .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        if let Some(s) = cli.seed {
            fc.protocol.seed = s;
            fc.simulation.seed = s;
        }
        fc.pipeline.validate()?;
        fc.protocol.validate()?;
        Ok(Self {
            pipeline: fc.pipeline,
            protocol: fc.protocol,
            simulation: fc.simulation,
        })
    }
}

fn read_record(input: &IqInput) -> Result<IQRecord> {
    if !(input.fs > 0.0 && input.fs.is_finite()) {
        return Err(Error::InvalidConfig(format!("sample rate {} must be positive", input.fs)));
    }
    let samples = io::read_iq(&input.input)?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("record samples"));
    }
    Ok(IQRecord {
        samples,
        sample_rate_hz: input.fs,
        // unknown for files; no single-record command uses it
        label: GestureLabel::ALL[0],
        config: SimConfig {
            sample_rate_hz: input.fs,
            ..SimConfig::default()
        },
        truth: Vec::new(),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    io::write_bytes(path, text.as_bytes())
}

fn cmd_simulate(ctx: &Ctx, out: &Path, per_class: usize, snr: Option<f64>, manifest_only: bool) -> Result<()> {
    let base = SimConfig {
        snr_db: snr.unwrap_or(ctx.simulation.snr_db),
        ..ctx.simulation
    };
    let ds = simulate::generate_dataset(per_class, &simulate::protocol_grid(&base))?;
    create_dir(out)?;
    if manifest_only {
        ds.save_manifest(out)?;
    } else {
        ds.save(out)?;
    }
    println!("{} records written to {}", ds.len(), out.display());
    Ok(())
}

fn cmd_spectrogram(ctx: &Ctx, input: &IqInput, out: &Path, matrix: Option<&Path>) -> Result<()> {
    let rec = read_record(input)?;
    let spec = pipeline::cropped_spectrogram(&rec, &ctx.pipeline)?;
    let img = tfr::to_gray(&spec, ctx.pipeline.image_size, ctx.pipeline.dyn_range_db)?;
    io::write_pgm(out, &img)?;
    if let Some(path) = matrix {
        let mut csv = String::from("freq_hz\\time_s");
        for t in spec.times() {
            write!(csv, ",{t}").unwrap();
        }
        csv.push('\n');
        let power = spec.power();
        for (k, f) in spec.freqs().iter().enumerate() {
            write!(csv, "{f}").unwrap();
            for v in power.column(k) {
                write!(csv, ",{v:e}").unwrap();
            }
            csv.push('\n');
        }
        write_text(path, &csv)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SegmentEntry {
    index: usize,
    onset: f64,
    offset: f64,
    file: String,
}

fn cmd_segment(ctx: &Ctx, input: &IqInput, out: &Path) -> Result<()> {
    let rec = read_record(input)?;
    let spec = tfr::spectrogram(&rec, &ctx.pipeline.stft)?;
    let motions = segmentation::segment_motions(&spec, &ctx.pipeline.pbc)?;
    create_dir(out)?;
    let mut entries = Vec::with_capacity(motions.len());
    for (index, iv) in motions.iter().enumerate() {
        let file = format!("motion_{index:03}.iq");
        let w = segmentation::window(&rec, iv, ctx.pipeline.window_s)?;
        io::write_iq(&out.join(&file), &w.samples)?;
        entries.push(SegmentEntry {
            index,
            onset: iv.onset,
            offset: iv.offset,
            file,
        });
    }
    io::write_json(&out.join("segments.json"), &entries)?;
    println!("{} motions", entries.len());
    Ok(())
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    #[serde(rename = "e_U")]
    upper: &'a [f64],
    #[serde(rename = "e_L")]
    lower: &'a [f64],
    times_s: &'a [f64],
    hz_units: bool,
}

fn cmd_envelope(ctx: &Ctx, input: &IqInput, out: &Path, overlay: Option<&Path>) -> Result<()> {
    let rec = read_record(input)?;
    let (rec, _) = pipeline::center_on_motion(&rec, &ctx.pipeline)?;
    let spec = pipeline::cropped_spectrogram(&rec, &ctx.pipeline)?;
    let env = envelope::extract(&spec, &ctx.pipeline.envelope)?;
    io::write_json(
        out,
        &EnvelopeOut {
            upper: &env.upper,
            lower: &env.lower,
            times_s: &env.times,
            hz_units: true,
        },
    )?;
    if let Some(path) = overlay {
        let mut img = tfr::to_gray(&spec, ctx.pipeline.image_size, ctx.pipeline.dyn_range_db)?;
        let marks = envelope::envelope_image(&spec, &env, ctx.pipeline.image_size)?;
        img.pixels_mut().zip_mut_with(marks.pixels(), |p, &m| *p = p.max(m));
        io::write_pgm(path, &img)?;
    }
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    let ds = Dataset::load(dir)?;
    if ds.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    Ok(ds)
}

fn cmd_features(ctx: &Ctx, kind: FeatureKindArg, input: &Path, out: &Path) -> Result<()> {
    let ds = load_dataset(input)?;
    let feats = pipeline::extract_all(&ds, &ctx.pipeline, false)?;
    let pick = |f: &RecordFeatures| match kind {
        FeatureKindArg::Empirical => f.empirical.values.clone(),
        FeatureKindArg::Trajectory => f.trajectory.values.clone(),
        FeatureKindArg::Envelope => f.envelope.values.clone(),
    };
    let width = feats.first().map_or(0, |f| pick(f).len());
    let mut csv = String::from("id,label,onset_s,offset_s");
    let names: Vec<String> = match kind {
        FeatureKindArg::Empirical => vec!["duration_s".into(), "ratio".into(), "bandwidth_hz".into()],
        FeatureKindArg::Trajectory => (0..width / 3)
            .flat_map(|p| [format!("t{p}"), format!("f{p}"), format!("a{p}")])
            .collect(),
        FeatureKindArg::Envelope => (0..width / 2)
            .map(|i| format!("u{i}"))
            .chain((0..width / 2).map(|i| format!("l{i}")))
            .collect(),
    };
    for n in &names {
        write!(csv, ",{n}").unwrap();
    }
    csv.push('\n');
    for (e, f) in ds.entries().iter().zip(&feats) {
        write!(csv, "{},{},{},{}", e.id, e.label.letter(), f.interval.onset, f.interval.offset).unwrap();
        for v in pick(f) {
            write!(csv, ",{v}").unwrap();
        }
        csv.push('\n');
    }
    write_text(out, &csv)
}

fn cmd_similarity(ctx: &Ctx, input: &Path, d: usize, out: &Path) -> Result<()> {
    let ds = load_dataset(input)?;
    let table = pipeline::dataset_similarity(&ds, &ctx.pipeline, d)?;
    let csv = table.to_csv();
    print!("{csv}");
    write_text(out, &csv)
}

fn run_eval(ctx: &Ctx, method: Method, input: &Path, out: &Path) -> Result<Report> {
    let ds = load_dataset(input)?;
    let feats = pipeline::extract_all(&ds, &ctx.pipeline, method.needs_images())?;
    let cm = evaluate(&feats, method, &ctx.pipeline, &ctx.protocol)?;
    let report = Report::new(&cm, method, &ctx.pipeline, &ctx.protocol, ds.len());
    create_dir(out)?;
    report.write(out, "report")?;
    Ok(report)
}

fn cmd_train(ctx: &Ctx, method: Method, input: &Path, out: &Path) -> Result<()> {
    let ds = load_dataset(input)?;
    let feats = pipeline::extract_all(&ds, &ctx.pipeline, method.needs_images())?;
    let model = TrainedModel::fit(&feats, method, &ctx.pipeline, ctx.protocol.seed)?;
    write_text(out, &model.to_json())
}

fn score_model(ctx: &Ctx, model_path: &Path, input: &Path, out: &Path) -> Result<Report> {
    let text = fs::read_to_string(model_path).map_err(|source| Error::Io {
        path: model_path.to_path_buf(),
        source,
    })?;
    let model = TrainedModel::from_json(&text)?;
    let ds = load_dataset(input)?;
    let feats = pipeline::extract_all(&ds, &model.config, model.method.needs_images())?;
    let predicted = feats.iter().map(|f| model.predict(f)).collect::<Result<Vec<_>>>()?;
    let mut cm = ConfusionMatrix::new();
    cm.add_trial(&ds.labels(), &predicted);
    let protocol = EvalProtocol {
        trials: 1,
        ..ctx.protocol
    };
    let report = Report::new(&cm, model.method, &model.config, &protocol, ds.len());
    create_dir(out)?;
    report.write(out, "report")?;
    Ok(report)
}

fn summary(r: &Report) -> String {
    format!(
        "{}: {:.2}% overall ({} trials, std {:.2})",
        r.method, r.overall_accuracy, r.trials, r.accuracy_std
    )
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx::load(cli)?;
    match &cli.command {
        Command::Simulate {
            out,
            per_class,
            snr,
            manifest_only,
        } => cmd_simulate(&ctx, out, *per_class, *snr, *manifest_only),
        Command::Spectrogram { input, out, matrix } => cmd_spectrogram(&ctx, input, out, matrix.as_deref()),
        Command::Segment { input, out } => cmd_segment(&ctx, input, out),
        Command::Envelope { input, out, overlay } => cmd_envelope(&ctx, input, out, overlay.as_deref()),
        Command::Features { kind, input, out } => cmd_features(&ctx, *kind, input, out),
        Command::Similarity { input, d, out } => cmd_similarity(&ctx, input, *d, out),
        Command::Pca {
            variant,
            classifier,
            input,
            out,
        } => {
            let r = run_eval(&ctx, Method::new(variant.features(), *classifier), input, out)?;
            println!("{}", summary(&r));
            Ok(())
        }
        Command::Train { method, input, out } => cmd_train(&ctx, method.method(), input, out),
        Command::Eval {
            method,
            input,
            out,
            model,
        } => {
            let r = match model {
                Some(m) => score_model(&ctx, m, input, out)?,
                None => run_eval(&ctx, method.method(), input, out)?,
            };
            println!("{}", summary(&r));
            Ok(())
        }
        Command::Report { input } => {
            let text = fs::read_to_string(input).map_err(|source| Error::Io {
                path: input.clone(),
                source,
            })?;
            let r = Report::from_json(&text)?;
            println!("{}", summary(&r));
            print!("{}", r.to_csv());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.jobs {
        Some(0) => Err(Error::InvalidConfig("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| run(&cli))),
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mdg: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
