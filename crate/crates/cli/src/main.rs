//! `aaa`: phantom generation, training, inference, measurement, evaluation,
//! cross-validation and overlays, composed through files.
//!
//! Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aaa_core::detect::{aggregate_report, stratified_sensitivity, Grouping, StudyReport};
use aaa_core::phantom::{corpus, CorpusSpec};
use aaa_core::pipeline::{
    self, attach_truth, crossval, detection_csv, history_csv, load_corpus, load_weights, measure_mask, read_json,
    read_manifest, read_mask, read_volume, render_overlay, reports_csv, roles_csv, save_weights, stratified_csv,
    summary_csv, write_corpus, write_json, write_volume, MeasureFile, RunConfig, VolumeMeta, FORMAT_VERSION,
};
use aaa_core::{unet, CtType};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aaa", version, about = "Aortic aneurysm detection from CT-like volumes")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the run configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Keep only slices LO..HI of predicted masks.
    #[arg(long, global = true, value_name = "LO:HI", value_parser = parse_range)]
    z_crop: Option<[usize; 2]>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with ground truth.
    Phantom {
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Fraction of aneurysm-positive studies.
        #[arg(long, default_value_t = 0.5)]
        mix: f64,
        /// Full corpus specification (JSON); overrides --n and --mix.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train on one fold rotation and keep the best-validation weights.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Segment volumes into `<id>_pred` masks.
    Infer {
        #[arg(long)]
        weights: PathBuf,
        #[arg(required = true)]
        volumes: Vec<PathBuf>,
    },
    /// Measure masks into `<id>_report.json`.
    Measure {
        /// CT type for masks whose header does not carry one.
        #[arg(long)]
        ct_type: Option<CtType>,
        #[arg(required = true)]
        masks: Vec<PathBuf>,
    },
    /// Score reports against a corpus and write summary tables.
    Eval {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Run every fold rotation and tabulate per-fold results.
    Crossval {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Render review images for a slice range.
    Overlay {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Measurement report; draws ellipses and long axes.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_name = "LO:HI", value_parser = parse_range)]
        slices: [usize; 2],
    },
}

fn parse_range(s: &str) -> Result<[usize; 2], String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: usize = lo.trim().parse().map_err(|e| format!("bad LO: {e}"))?;
    let hi: usize = hi.trim().parse().map_err(|e| format!("bad HI: {e}"))?;
    if lo >= hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok([lo, hi])
}

enum Failure {
    Usage(String),
    Data(aaa_core::Error),
}

impl From<aaa_core::Error> for Failure {
    fn from(e: aaa_core::Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn require_out(cli: &Cli) -> Result<PathBuf, Failure> {
    cli.out.clone().ok_or_else(|| Failure::Usage("--out DIR is required".into()))
}

fn run_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut run: RunConfig = match &cli.config {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        run.seed = s;
    }
    if cli.z_crop.is_some() {
        run.z_crop = cli.z_crop;
    }
    run.out_dir = cli.out.clone().or(run.out_dir);
    Ok(run)
}

fn corpus_dir(flag: &Option<PathBuf>, run: &RunConfig) -> Result<PathBuf, Failure> {
    flag.clone()
        .or_else(|| run.corpus_dir.clone())
        .ok_or_else(|| Failure::Usage("--corpus DIR (or corpus_dir in the config) is required".into()))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| aaa_core::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| {
        Failure::Data(aaa_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

/// Study id from the header, else the file stem without a stage suffix.
fn study_id(meta: &VolumeMeta, path: &Path) -> String {
    meta.study_id.clone().unwrap_or_else(|| {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("study");
        ["_ct", "_mask", "_pred"]
            .iter()
            .find_map(|suffix| stem.strip_suffix(suffix))
            .unwrap_or(stem)
            .to_string()
    })
}

fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Phantom { n, mix, spec } => {
            let out = require_out(&cli)?;
            let mut cs = match spec {
                Some(p) => read_json(p)?,
                None => CorpusSpec {
                    n: *n,
                    positive_fraction: *mix,
                    ..CorpusSpec::default()
                },
            };
            if let Some(s) = cli.seed {
                cs.seed = s;
            }
            let studies = corpus(&cs)?;
            let manifest = write_corpus(&out, Some(&cs), &studies)?;
            eprintln!("wrote {} studies to {}", manifest.studies.len(), out.display());
        }
        Command::Train { corpus, epochs } => {
            let out = require_out(&cli)?;
            let mut run = run_config(&cli)?;
            run.corpus_dir = Some(corpus_dir(corpus, &run)?);
            if let Some(e) = epochs {
                run.epochs = *e;
            }
            let dir = run.corpus_dir.clone().expect("set above");
            let (_, studies) = load_corpus(&dir)?;
            let plan = pipeline::fold_plan(&studies, run.folds, run.seed)?;
            let outcome = pipeline::run_rotation(&run, &studies, &plan, run.rotation, |r| {
                eprintln!("epoch {} train {:.5} val {:.5}", r.epoch, r.train_loss, r.val_loss);
            })?;
            save_weights(&out.join("weights.json"), &outcome.best, &run.network)?;
            write_text(&out.join("history.csv"), &history_csv(&outcome.history))?;
            write_json(&out.join("run_config.json"), &run)?;
            eprintln!("best epoch {:?}", outcome.best_epoch);
        }
        Command::Infer { weights, volumes } => {
            let out = require_out(&cli)?;
            let (store, config) = load_weights(weights)?;
            for path in volumes {
                let (vol, header) = read_volume::<f32>(path)?;
                let id = study_id(&header.meta, path);
                let mut mask = unet::segment(&store, &config, &vol)?;
                pipeline::apply_z_crop(&mut mask, cli.z_crop);
                let meta = VolumeMeta {
                    study_id: Some(id.clone()),
                    ct_type: header.meta.ct_type,
                };
                write_volume(&out.join(format!("{id}_pred.json")), &mask, &meta)?;
                eprintln!("{id}: {} aorta voxels", mask.count());
            }
        }
        Command::Measure { ct_type, masks } => {
            let out = require_out(&cli)?;
            for path in masks {
                let (mut mask, header) = read_mask(path)?;
                pipeline::apply_z_crop(&mut mask, cli.z_crop);
                let id = study_id(&header.meta, path);
                let ct = header.meta.ct_type.or(*ct_type).ok_or_else(|| {
                    Failure::Usage(format!("{}: no CT type in header; pass --ct-type", path.display()))
                })?;
                let (measurement, report) = measure_mask(&id, ct, &mask)?;
                let file = MeasureFile {
                    format_version: FORMAT_VERSION,
                    mask_file: path.clone(),
                    report,
                    measurement,
                };
                write_json(&out.join(format!("{id}_report.json")), &file)?;
                eprintln!("{id}: max diameter {:?} mm", file.report.max_diameter_mm);
            }
        }
        Command::Eval { reports, corpus } => {
            let out = require_out(&cli)?;
            let manifest = read_manifest(corpus)?;
            let mut files: Vec<PathBuf> = std::fs::read_dir(reports)
                .map_err(|e| aaa_core::Error::Io {
                    path: reports.clone(),
                    source: e,
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.to_str().is_some_and(|s| s.ends_with("_report.json")))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Failure::Usage(format!("no *_report.json files in {}", reports.display())));
            }
            let mut scored = Vec::with_capacity(files.len());
            for path in &files {
                let file: MeasureFile = read_json(path)?;
                let id = file.report.study_id.clone();
                let entry = manifest.entry(&id).ok_or_else(|| {
                    aaa_core::Error::format(path, format!("study `{id}` is not in the corpus manifest"))
                })?;
                let (pred, _) = read_mask(&file.mask_file)?;
                let truth = match &entry.mask {
                    Some(m) => Some(read_mask(&corpus.join(m))?.0),
                    None => None,
                };
                let mut report = file.report;
                report.ct_type = entry.ct_type;
                scored.push(attach_truth(report, entry.reference_diameter_mm, &pred, truth.as_ref())?);
            }
            write_tables(&out, &scored)?;
        }
        Command::Crossval { corpus, epochs } => {
            let out = require_out(&cli)?;
            let mut run = run_config(&cli)?;
            run.corpus_dir = Some(corpus_dir(corpus, &run)?);
            if let Some(e) = epochs {
                run.epochs = *e;
            }
            let (_, studies) = load_corpus(run.corpus_dir.as_ref().expect("set above"))?;
            let result = crossval(&run, &studies)?;
            write_text(&out.join("roles.csv"), &roles_csv(run.folds)?)?;
            for r in &result.rotations {
                write_text(&out.join(format!("history_rotation{}.csv", r.rotation)), &history_csv(&r.history))?;
            }
            write_text(&out.join("reports.csv"), &reports_csv(&result.reports))?;
            write_text(&out.join("crossval.csv"), &summary_csv(&result.rows))?;
            write_text(&out.join("crossval_detection.csv"), &detection_csv(&result.rows))?;
            write_json(&out.join("run_config.json"), &run)?;
            for row in &result.rows {
                if let Some(d) = &row.dice {
                    eprintln!("{}: n={} dice {:.3} ± {:.3}", row.group, row.n, d.mean, d.std);
                }
            }
        }
        Command::Overlay {
            volume,
            mask,
            report,
            slices,
        } => {
            let out = require_out(&cli)?;
            let (vol, _) = read_volume::<f32>(volume)?;
            let (m, _) = read_mask(mask)?;
            let measured: Option<MeasureFile> = report.as_deref().map(read_json).transpose()?;
            let [lo, hi] = *slices;
            let window = match &cli.config {
                Some(_) => run_config(&cli)?.network.intensity_window,
                None => unet::UNetConfig::default().intensity_window,
            };
            for k in lo..hi {
                let slice = measured
                    .as_ref()
                    .and_then(|f| f.measurement.slices.iter().find(|s| s.slice == k));
                let img = render_overlay(&vol, &m, slice, k, window)?;
                let path = out.join(format!("slice_{k:03}.ppm"));
                std::fs::create_dir_all(&out).map_err(|e| aaa_core::Error::Io {
                    path: out.clone(),
                    source: e,
                })?;
                std::fs::write(&path, img).map_err(|e| aaa_core::Error::Io { path, source: e })?;
            }
        }
    }
    Ok(())
}

/// Per-study CSV plus Dice/delta, detection and stratified tables grouped by
/// CT type.
fn write_tables(out: &Path, reports: &[StudyReport]) -> Outcome {
    let rows = aggregate_report(reports, Grouping::CtType)?;
    let mut bins = Vec::new();
    for ct in [CtType::Contrast, CtType::Noncontrast] {
        let group: Vec<StudyReport> = reports.iter().filter(|r| r.ct_type == ct).cloned().collect();
        bins.push((ct.as_str().to_string(), stratified_sensitivity(&group)?));
    }
    bins.push(("All".to_string(), stratified_sensitivity(reports)?));
    write_text(&out.join("reports.csv"), &reports_csv(reports))?;
    write_text(&out.join("table_dice_delta.csv"), &summary_csv(&rows))?;
    write_text(&out.join("table_detection.csv"), &detection_csv(&rows))?;
    write_text(&out.join("table_stratified.csv"), &stratified_csv(&bins))?;
    Ok(())
}
