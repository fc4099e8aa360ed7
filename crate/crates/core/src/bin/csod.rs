//! `csod` command line: select, sweep, analyze, synth, bench.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation or I/O error,
//! 3 partial selection (pools drained before the target count).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use csod_core::bench::{bench_selection, linear_fit};
use csod_core::csod::{select_traced, sweep_lambda};
use csod_core::metrics::{analyze, SizeBucket, SizeThresholds};
use csod_core::prototypes::{build, sizewise_report};
use csod_core::selection::AnnotationRange;
use csod_core::synth::{generate, SynthSpec};
use csod_core::{default_lambda, run, CandidateMode, Dataset, Error, Lambda, Method, SelectionConfig, SelectionResult};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

/// Lambda grid swept by default.
const SWEEP_GRID: [f64; 14] = [
    1e-10, 0.0005, 0.005, 0.0125, 0.025, 0.0375, 0.04375, 0.05, 0.0625, 0.1, 0.125, 0.25, 0.5, 1e10,
];

#[derive(Parser)]
#[command(name = "csod", version, about = "Coreset selection for object detection datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select a subset of images with one method.
    Select(SelectArgs),
    /// Run CSOD over a grid of lambda values.
    Sweep(SweepArgs),
    /// Report size, class and coverage statistics of a subset.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Time CSOD selection at several target counts.
    Bench(BenchArgs),
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: PathBuf,
}

#[derive(Args)]
struct SelectionArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target number of images.
    #[arg(long)]
    n: usize,
    /// Per-class candidate cap applied by random pre-sampling.
    #[arg(long)]
    presample: Option<usize>,
    /// File of image ids to exclude (whitespace separated, or a selection result JSON).
    #[arg(long)]
    exclude: Option<PathBuf>,
    /// Comma-separated class visiting order.
    #[arg(long, value_delimiter = ',')]
    class_order: Option<Vec<usize>>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    sel: SelectionArgs,
    #[arg(long, default_value = "csod")]
    method: Method,
    #[arg(long)]
    lambda: Option<f64>,
    /// Per-class lambda override, `class=value`; repeatable.
    #[arg(long = "lambda-class", value_parser = parse_class_lambda)]
    lambda_class: Vec<(usize, f64)>,
    /// Annotation total bounds for random-anno-range, `lo,hi` (`hi` may be `inf`).
    #[arg(long, value_parser = parse_anno_range)]
    anno_range: Option<AnnotationRange>,
    /// Stream per-step JSONL timing lines to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record per-step microseconds in the result (makes output run-dependent).
    #[arg(long)]
    record_timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    sel: SelectionArgs,
    #[arg(long, default_value = "csod")]
    method: Method,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_thresholds)]
    size_thresholds: Option<SizeThresholds>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Selection result JSON to analyze.
    #[arg(long, conflicts_with = "ids")]
    selection: Option<PathBuf>,
    /// File of image ids to analyze.
    #[arg(long)]
    ids: Option<PathBuf>,
    #[arg(long, value_parser = parse_thresholds)]
    size_thresholds: Option<SizeThresholds>,
    /// Also write the size histogram as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Emit the size-bucket prototype similarity report for this class.
    #[arg(long)]
    sizewise_class: Option<usize>,
    #[arg(long, requires = "sizewise_class")]
    sizewise_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    images: usize,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    clusters: usize,
    #[arg(long, default_value_t = 0.1)]
    spread: f64,
    /// Objects per present class, `lo,hi`.
    #[arg(long, value_parser = parse_usize_pair)]
    objects: Option<(usize, usize)>,
    /// Class presence probability (same for every class).
    #[arg(long)]
    presence: Option<f64>,
    /// Draw each object's cluster independently instead of per image.
    #[arg(long)]
    independent_clusters: bool,
    #[arg(long)]
    out_manifest: PathBuf,
    #[arg(long)]
    out_features: PathBuf,
    #[arg(long)]
    out_truth: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, value_delimiter = ',', default_value = "200,500,1000,2000")]
    counts: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long)]
    lambda: Option<f64>,
    /// CSV output (`count,seconds`); standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command_line: Vec<String>,
    config: serde_json::Value,
    timings: serde_json::Value,
    outputs: Vec<&'a Path>,
}

fn parse_class_lambda(s: &str) -> Result<(usize, f64), String> {
    let (c, v) = s.split_once('=').ok_or("expected class=value")?;
    Ok((
        c.trim().parse().map_err(|e| format!("class: {e}"))?,
        v.trim().parse().map_err(|e| format!("value: {e}"))?,
    ))
}

fn parse_usize_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    Ok((
        a.trim().parse().map_err(|e| format!("{e}"))?,
        b.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

fn parse_anno_range(s: &str) -> Result<AnnotationRange, String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = match b.trim() {
        "inf" | "" => None,
        v => Some(v.parse().map_err(|e| format!("{e}"))?),
    };
    Ok(AnnotationRange { lo, hi })
}

fn parse_thresholds(s: &str) -> Result<SizeThresholds, String> {
    let (a, b) = s.split_once(',').ok_or("expected small_max,medium_max")?;
    let small: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let medium: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    SizeThresholds::new(small, medium).map_err(|e| e.to_string())
}

fn read_id_file(path: &Path) -> Result<Vec<usize>, Error> {
    let text = fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        return Ok(SelectionResult::from_json(text.as_bytes())?.selected_image_ids);
    }
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Format(format!("{}: bad image id {t:?}", path.display())))
        })
        .collect()
}

fn build_config(sel: &SelectionArgs) -> Result<SelectionConfig, Error> {
    let mut config = SelectionConfig::new(sel.n).with_seed(sel.seed);
    config.presample_per_class = sel.presample;
    config.class_order = sel.class_order.clone();
    if let Some(path) = &sel.exclude {
        config.excluded_image_ids.extend(read_id_file(path)?);
    }
    Ok(config)
}

fn run_record_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".run.json");
    out.with_file_name(name)
}

fn write_run_record(
    path: &Path,
    config: serde_json::Value,
    timings: serde_json::Value,
    outputs: Vec<&Path>,
) -> Result<(), Error> {
    let record = RunRecord {
        command_line: std::env::args().collect(),
        config,
        timings,
        outputs,
    };
    fs::write(path, serde_json::to_vec_pretty(&record)?)?;
    Ok(())
}

fn write_jsonl(w: &mut impl Write, value: &impl Serialize) -> Result<(), Error> {
    serde_json::to_writer(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

fn load(data: &DatasetArgs) -> Result<Dataset, Error> {
    let ds = Dataset::load(&data.manifest, &data.features)?;
    eprintln!(
        "loaded {} images, {} objects, {} classes, dim {}",
        ds.num_images(),
        ds.num_objects(),
        ds.num_classes(),
        ds.dim()
    );
    Ok(ds)
}

fn cmd_select(args: SelectArgs) -> Result<u8, Error> {
    let started = Instant::now();
    let ds = load(&args.data)?;
    let load_secs = started.elapsed().as_secs_f64();
    let mut config = build_config(&args.sel)?;
    config.record_timing = args.record_timing;
    config.annotation_range = args.anno_range;
    let base = args.lambda.unwrap_or_else(|| default_lambda(args.sel.n));
    config.lambda = if args.lambda_class.is_empty() {
        Lambda::Global(base)
    } else {
        let mut per_class = vec![base; ds.num_classes()];
        for &(c, v) in &args.lambda_class {
            *per_class
                .get_mut(c)
                .ok_or_else(|| Error::InvalidConfig(format!("--lambda-class for unknown class {c}")))? = v;
        }
        Lambda::PerClass(per_class)
    };
    let select_started = Instant::now();
    let result = match (args.method, &args.trace) {
        (Method::Csod | Method::CsodObjectwise, Some(trace_path)) => {
            if args.method == Method::CsodObjectwise {
                config.candidate_mode = CandidateMode::Objectwise;
            }
            let index = build(&ds, config.candidate_mode);
            let mut w = BufWriter::new(File::create(trace_path)?);
            let mut io_err = None;
            let mut result = select_traced(&ds, &index, &config, |step| {
                if io_err.is_none() {
                    io_err = write_jsonl(&mut w, step).err();
                }
            })?;
            if let Some(e) = io_err {
                return Err(e);
            }
            w.flush()?;
            result.method = args.method;
            result
        }
        _ => run(&ds, args.method, &config)?,
    };
    let select_secs = select_started.elapsed().as_secs_f64();
    fs::write(&args.out, result.to_json()?)?;
    let mut outputs = vec![args.out.as_path()];
    if let Some(t) = &args.trace {
        outputs.push(t.as_path());
    }
    write_run_record(
        &run_record_path(&args.out),
        serde_json::to_value(&result.config_echo)?,
        serde_json::json!({ "load_seconds": load_secs, "select_seconds": select_secs }),
        outputs,
    )?;
    eprintln!(
        "{}: selected {} of {} images ({:?}) in {:.3}s",
        result.method,
        result.selected_image_ids.len(),
        config.target_count,
        result.status,
        select_secs
    );
    Ok(if result.is_partial() { EXIT_PARTIAL } else { 0 })
}

fn cmd_sweep(args: SweepArgs) -> Result<u8, Error> {
    let started = Instant::now();
    let ds = load(&args.data)?;
    let mut config = build_config(&args.sel)?;
    config.candidate_mode = match args.method {
        Method::Csod => CandidateMode::Imagewise,
        Method::CsodObjectwise => CandidateMode::Objectwise,
        other => {
            return Err(Error::InvalidConfig(format!(
                "sweep runs csod or csod-objectwise, not {other}"
            )))
        }
    };
    let lambdas = args.lambdas.clone().unwrap_or_else(|| SWEEP_GRID.to_vec());
    let index = build(&ds, config.candidate_mode);
    let mut results = sweep_lambda(&ds, &index, &config, &lambdas)?;
    fs::create_dir_all(&args.out)?;
    let thresholds = args.size_thresholds.unwrap_or_default();
    let summary_path = args.out.join("summary.csv");
    let mut summary = BufWriter::new(File::create(&summary_path)?);
    writeln!(
        summary,
        "lambda,status,image_count,annotation_count,coverage_objective,class_ratio_entropy,kl_to_reference,file"
    )?;
    let mut files = Vec::new();
    let mut any_partial = false;
    for (k, (lambda, result)) in lambdas.iter().zip(results.iter_mut()).enumerate() {
        result.method = args.method;
        let name = format!("lambda_{k:02}.json");
        fs::write(args.out.join(&name), result.to_json()?)?;
        let report = analyze(&result.selected_image_ids, &ds, thresholds)?;
        any_partial |= result.is_partial();
        writeln!(
            summary,
            "{lambda:e},{},{},{},{:.9},{:.9},{:.9},{name}",
            if result.is_partial() { "partial" } else { "complete" },
            report.image_count,
            report.annotation_count,
            report.coverage_objective,
            report.class_ratio_entropy,
            report.kl_to_reference,
        )?;
        files.push(args.out.join(name));
    }
    summary.flush()?;
    let mut outputs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
    outputs.push(&summary_path);
    write_run_record(
        &args.out.join("run.json"),
        serde_json::json!({ "base": config, "lambdas": lambdas }),
        serde_json::json!({ "total_seconds": started.elapsed().as_secs_f64() }),
        outputs,
    )?;
    eprintln!("swept {} lambda values into {}", lambdas.len(), args.out.display());
    Ok(if any_partial { EXIT_PARTIAL } else { 0 })
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<u8, Error> {
    let started = Instant::now();
    let ds = load(&args.data)?;
    let ids = match (&args.selection, &args.ids) {
        (Some(p), _) => SelectionResult::from_json(&fs::read(p)?)?.selected_image_ids,
        (None, Some(p)) => read_id_file(p)?,
        (None, None) => return Err(Error::InvalidConfig("analyze needs --selection or --ids".into())),
    };
    let thresholds = args.size_thresholds.unwrap_or_default();
    let report = analyze(&ids, &ds, thresholds)?;
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    fs::write(&args.out, json)?;
    let mut outputs = vec![args.out.as_path()];
    if let Some(csv) = &args.csv {
        let mut w = BufWriter::new(File::create(csv)?);
        writeln!(w, "size,count,ratio,reference_ratio")?;
        for b in SizeBucket::ALL {
            let i = b.index();
            writeln!(
                w,
                "{},{},{:.9},{:.9}",
                b.name(),
                report.size_histogram[i],
                report.size_ratio[i],
                report.reference_size_ratio[i]
            )?;
        }
        w.flush()?;
        outputs.push(csv);
    }
    if let Some(class_id) = args.sizewise_class {
        let sw = sizewise_report(&ds, class_id, thresholds, Some(&ids))?;
        let path = args
            .sizewise_out
            .clone()
            .unwrap_or_else(|| args.out.with_extension("sizewise.json"));
        fs::write(&path, serde_json::to_vec_pretty(&sw)?)?;
        eprintln!("sizewise report for class {class_id}: {}", path.display());
    }
    write_run_record(
        &run_record_path(&args.out),
        serde_json::json!({ "ids": ids, "size_thresholds": thresholds }),
        serde_json::json!({ "total_seconds": started.elapsed().as_secs_f64() }),
        outputs,
    )?;
    eprintln!(
        "{} images, {} annotations, size ratio {:?}, kl {:.4} nats, class entropy {:.4} nats, coverage {:.4}",
        report.image_count,
        report.annotation_count,
        report.size_ratio,
        report.kl_to_reference,
        report.class_ratio_entropy,
        report.coverage_objective
    );
    Ok(0)
}

fn cmd_synth(args: SynthArgs) -> Result<u8, Error> {
    let started = Instant::now();
    let mut spec = SynthSpec::gaussian_mixture(
        args.classes,
        args.images,
        args.dim,
        args.clusters,
        args.spread,
        args.seed,
    );
    if let Some(range) = args.objects {
        spec.objects_per_class = range;
    }
    if let Some(p) = args.presence {
        spec.class_presence_prob = vec![p; args.classes];
    }
    spec.shared_cluster_per_image = !args.independent_clusters;
    let out = generate(&spec)?;
    out.write(&args.out_manifest, &args.out_features, args.out_truth.as_deref())?;
    let mut outputs = vec![args.out_manifest.as_path(), args.out_features.as_path()];
    if let Some(t) = &args.out_truth {
        outputs.push(t);
    }
    write_run_record(
        &run_record_path(&args.out_manifest),
        serde_json::to_value(&spec)?,
        serde_json::json!({ "total_seconds": started.elapsed().as_secs_f64() }),
        outputs,
    )?;
    eprintln!(
        "generated {} images, {} objects",
        out.dataset.num_images(),
        out.dataset.num_objects()
    );
    Ok(0)
}

fn cmd_bench(args: BenchArgs) -> Result<u8, Error> {
    let started = Instant::now();
    let ds = load(&args.data)?;
    let rows = bench_selection(&ds, &args.counts, args.repeats, args.lambda)?;
    let mut csv = String::from("count,seconds\n");
    for r in &rows {
        csv.push_str(&format!("{},{:.6}\n", r.count, r.seconds));
    }
    match &args.out {
        Some(path) => fs::write(path, &csv)?,
        None => print!("{csv}"),
    }
    if rows.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|r| r.count as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
        let fit = linear_fit(&xs, &ys);
        eprintln!(
            "linear fit: {:.3e} s/image + {:.3e} s, R^2 = {:.4}",
            fit.slope, fit.intercept, fit.r_squared
        );
    }
    if let Some(path) = &args.out {
        write_run_record(
            &run_record_path(path),
            serde_json::json!({ "counts": args.counts, "repeats": args.repeats, "lambda": args.lambda }),
            serde_json::json!({ "total_seconds": started.elapsed().as_secs_f64(), "rows": rows }),
            vec![path.as_path()],
        )?;
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Select(a) => cmd_select(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
