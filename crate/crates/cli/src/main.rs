use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use prffn_core::config::{Manifest, RunConfig};
use prffn_core::dataset::{
    apply_normalizer, build_feature_table, fit_normalizer, prepare_roi, FeatureConfig, FeatureRow, FeatureTable,
    FoldPlan, NormStats, PreparedRoi, Roi,
};
use prffn_core::evaluation::{
    compute_metrics, predict_map, resolution_sweep, summary_markdown, sweep_markdown, write_fold_csv,
    write_sweep_csv, CvResult, SweepResult, SweepSettings,
};
use prffn_core::mueller::{
    reconstruct_image, AcquisitionMeta, InstrumentField, InstrumentMatrix, IntensityImage, MuellerImage, PsgSequence,
};
use prffn_core::nn::{checkpoint, train_model, write_history_csv, ModelKind, TrainData};
use prffn_core::pbp::{pbp_stack, PBP_COUNT};
use prffn_core::phantom::{generate_dataset, PhantomDataset};
use prffn_core::radiomics::RADIOMICS_COUNT;
use prffn_core::raster::{luminance, read_rgb, render_map, write_rgb, LabelMask};
use prffn_core::registration::{fit_affine, transfer_mask, warp_image, Affine2D, ControlPoints};
use prffn_core::{Error, Result};

/// Polarimetry and radiomics fusion pipeline.
///
/// Settings resolve in this order, later winning: built-in defaults, the
/// `--config` JSON file, then command-line flags.
#[derive(Debug, Parser)]
#[command(name = "prffn", version, about)]
struct Cli {
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true, env = "PRFFN_JOBS", value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    /// Run configuration (JSON, schema-versioned).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Synthetic datasets.
    Phantom {
        #[command(subcommand)]
        cmd: PhantomCmd,
    },
    /// Mueller matrix acquisition model.
    Mueller {
        #[command(subcommand)]
        cmd: MuellerCmd,
    },
    /// Polarimetry basis parameters.
    Pbp {
        #[command(subcommand)]
        cmd: PbpCmd,
    },
    /// Affine co-registration.
    Register {
        #[command(subcommand)]
        cmd: RegisterCmd,
    },
    /// Per-pixel feature tables.
    Features {
        #[command(subcommand)]
        cmd: FeaturesCmd,
    },
    /// Train one model on a whole feature table.
    Train(TrainArgs),
    /// Patient-grouped cross-validation.
    Cv {
        #[command(subcommand)]
        cmd: CvCmd,
    },
    /// Average-filter resolution sweep.
    Sweep {
        #[command(subcommand)]
        cmd: SweepCmd,
    },
    /// Per-pixel prediction maps.
    Map {
        #[command(subcommand)]
        cmd: MapCmd,
    },
    /// Rebuild Markdown summaries from saved results.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
enum PhantomCmd {
    /// Generate ROIs, fold plan and spec.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        patients_per_class: Option<usize>,
        #[arg(long)]
        rois_per_patient: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
enum MuellerCmd {
    /// Intensity stack to Mueller image.
    Reconstruct {
        #[arg(long)]
        intensities: PathBuf,
        /// JSON `{"matrix": 4x4}` analyzer matrix; identity when omitted.
        #[arg(long)]
        instrument: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mueller image to the intensity stack the instrument would record.
    Simulate {
        #[arg(long)]
        mueller: PathBuf,
        #[arg(long)]
        instrument: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum PbpCmd {
    /// Mueller image to the 23 parameter planes.
    Decode {
        #[arg(long)]
        mueller: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum RegisterCmd {
    /// Least-squares affine transform from control-point pairs.
    Fit {
        /// CSV with moving_x, moving_y, fixed_x, fixed_y.
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resample a moving image (or label mask) onto the fixed grid.
    Warp {
        #[arg(long)]
        transform: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Treat the image as a label mask (nearest neighbor).
        #[arg(long)]
        mask: bool,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum FeaturesCmd {
    /// Sample pixels from a dataset directory and write the feature table.
    Build {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        n_per_class: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    model: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset directory (`rois/`, `fold_plan.json`). A phantom is generated
    /// from the configuration when neither this nor `--features` is given.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Feature table CSV; needs `--plan` unless `--data` is also given.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Comma-separated model kinds.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum CvCmd {
    Run(DataArgs),
}

#[derive(Debug, Subcommand)]
enum SweepCmd {
    Run {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        windows: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum MapCmd {
    /// Classify every pixel of one ROI with a trained model.
    Render {
        /// Output directory of `prffn train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        roi: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Output directory of `prffn cv run`.
    #[arg(long)]
    cv: Option<PathBuf>,
    /// Output directory of `prffn sweep run`.
    #[arg(long)]
    sweep: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstrumentFile {
    matrix: [[f64; 4]; 4],
}

#[derive(Debug, Serialize, Deserialize)]
struct FitReport {
    transform: Affine2D,
    rms_residual: f64,
    pairs: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct MapReport {
    roi_id: String,
    classified: usize,
    accuracy: Option<f64>,
}

/// Collects manifest entries while a command runs.
struct Run {
    dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn start(dir: &Path, cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let command = std::env::args().collect();
        Ok(Run { dir: dir.to_path_buf(), manifest: Manifest::new(command, cfg.clone()) })
    }

    fn input(&mut self, name: &str, path: &Path) {
        self.manifest.inputs.insert(name.into(), path.display().to_string());
    }

    fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.into(), seed);
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.into());
        self.dir.join(name)
    }

    fn finish(self) -> Result<()> {
        self.manifest.write(&self.dir)?;
        log::info!("wrote {}", self.dir.display());
        Ok(())
    }
}

fn parse_models(names: &Option<Vec<String>>, fallback: &[ModelKind]) -> Result<Vec<ModelKind>> {
    match names {
        Some(v) => v.iter().map(|s| ModelKind::parse(s.trim())).collect(),
        None => Ok(fallback.to_vec()),
    }
}

fn read_instrument(path: &Option<PathBuf>) -> Result<InstrumentMatrix> {
    match path {
        None => Ok(InstrumentMatrix::identity()),
        Some(p) => {
            let f: InstrumentFile = serde_json::from_str(&fs::read_to_string(p)?)?;
            Ok(InstrumentMatrix(Matrix4::from_fn(|r, c| f.matrix[r][c])))
        }
    }
}

fn load_dataset(dir: &Path) -> Result<PhantomDataset> {
    PhantomDataset::read(dir)
}

fn prepare_all(rois: &[Roi], cfg: &FeatureConfig) -> Result<Vec<PreparedRoi>> {
    use rayon::prelude::*;
    rois.par_iter().map(|r| prepare_roi(r, cfg.patch_source)).collect()
}

/// The dataset of `--data`, or a phantom generated from the configuration.
fn dataset_or_phantom(run: &mut Run, data: &Option<PathBuf>, cfg: &RunConfig) -> Result<PhantomDataset> {
    match data {
        Some(d) => {
            run.input("data", d);
            load_dataset(d)
        }
        None => {
            let p = &cfg.phantom;
            log::info!("generating phantom: {} patients/class, {} ROIs/patient", p.patients_per_class, p.rois_per_patient);
            run.seed("phantom", cfg.seed);
            generate_dataset(&p.spec, p.patients_per_class, p.rois_per_patient, cfg.seed)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn cmd_phantom(cfg: &mut RunConfig, out: &Path, ppc: Option<usize>, rpp: Option<usize>) -> Result<()> {
    if let Some(v) = ppc {
        cfg.phantom.patients_per_class = v;
    }
    if let Some(v) = rpp {
        cfg.phantom.rois_per_patient = v;
    }
    cfg.validate()?;
    let mut run = Run::start(out, cfg)?;
    run.seed("phantom", cfg.seed);
    let p = &cfg.phantom;
    let ds = generate_dataset(&p.spec, p.patients_per_class, p.rois_per_patient, cfg.seed)?;
    ds.write(out)?;
    run.manifest.outputs.extend(["rois".to_string(), "fold_plan.json".to_string()]);
    p.spec.write(&run.path("spec.json"))?;
    log::info!("{} ROIs in {} groups", ds.rois.len(), ds.plan.groups.len());
    run.finish()
}

fn cmd_mueller(cfg: &RunConfig, cmd: &MuellerCmd) -> Result<()> {
    let psg = PsgSequence::polarizer_quarter_wave(cfg.acquisition.psg_angles_deg);
    match cmd {
        MuellerCmd::Reconstruct { intensities, instrument, out } => {
            let mut run = Run::start(out, cfg)?;
            run.input("intensities", intensities);
            let a = read_instrument(instrument)?;
            let img = IntensityImage::read(intensities)?;
            let m = reconstruct_image(&img, &psg, &InstrumentField::Global(a), AcquisitionMeta::default())?;
            m.write(&run.path("mueller"))?;
            run.finish()
        }
        MuellerCmd::Simulate { mueller, instrument, out } => {
            let mut run = Run::start(out, cfg)?;
            run.input("mueller", mueller);
            let a = read_instrument(instrument)?;
            let m = MuellerImage::read(mueller)?;
            IntensityImage::simulate(&m, &psg, &a)?.write(&run.path("intensities"))?;
            run.finish()
        }
    }
}

fn cmd_pbp(cfg: &RunConfig, mueller: &Path, out: &Path) -> Result<()> {
    let mut run = Run::start(out, cfg)?;
    run.input("mueller", mueller);
    let (m, flagged) = MuellerImage::read(mueller)?.normalize_by_m11();
    if flagged > 0 {
        log::warn!("{flagged} pixels with vanishing m11 marked invalid");
    }
    pbp_stack(&m)?.write(&run.path("pbp"))?;
    run.finish()
}

fn cmd_register(cfg: &RunConfig, cmd: &RegisterCmd) -> Result<()> {
    match cmd {
        RegisterCmd::Fit { points, out } => {
            let mut run = Run::start(out, cfg)?;
            run.input("points", points);
            let cp = ControlPoints::read_csv(points)?;
            let fit = fit_affine(&cp)?;
            log::info!("affine fit RMS residual {:.3e} px over {} pairs", fit.rms_residual, cp.pairs.len());
            write_json(&run.path("transform.json"), &fit.transform)?;
            write_json(
                &run.path("fit.json"),
                &FitReport { transform: fit.transform, rms_residual: fit.rms_residual, pairs: cp.pairs.len() },
            )?;
            run.finish()
        }
        RegisterCmd::Warp { transform, image, mask, width, height, out } => {
            let mut run = Run::start(out, cfg)?;
            run.input("transform", transform);
            run.input("image", image);
            let t: Affine2D = serde_json::from_str(&fs::read_to_string(transform)?)?;
            if *mask {
                let m = LabelMask::read_png(image)?;
                transfer_mask(&m, &t, *width, *height)?.write_png(&run.path("mask.png"))?;
            } else {
                let rgb = read_rgb(image)?;
                let mut planes = Vec::new();
                for c in 0..3 {
                    let data = rgb.pixels().map(|p| p.0[c] as f64).collect();
                    let plane = prffn_core::raster::Plane::new(rgb.width() as usize, rgb.height() as usize, data)?;
                    planes.push(warp_image(&plane, &t, *width, *height)?);
                }
                let mut img = image::RgbImage::new(*width as u32, *height as u32);
                for (i, px) in img.pixels_mut().enumerate() {
                    *px = image::Rgb([0, 1, 2].map(|c| planes[c].data[i].round().clamp(0.0, 255.0) as u8));
                }
                write_rgb(&img, &run.path("warped.png"))?;
                let gray = luminance(&img);
                log::debug!("warped luminance mean {:.2}", gray.data.iter().sum::<f64>() / gray.data.len().max(1) as f64);
            }
            run.finish()
        }
    }
}

fn cmd_features(cfg: &mut RunConfig, data: &Path, n: Option<usize>, out: &Path) -> Result<()> {
    if let Some(n) = n {
        cfg.features.n_per_class = n;
    }
    cfg.validate()?;
    let mut run = Run::start(out, cfg)?;
    run.input("data", data);
    run.seed("sampling", cfg.seed);
    let ds = load_dataset(data)?;
    let t0 = Instant::now();
    let rois = prepare_all(&ds.rois, &cfg.features)?;
    let table = build_feature_table(&rois, &cfg.features, cfg.seed)?;
    log::info!(
        "{} rows ({} labeled pixels skipped) in {:.1}s",
        table.rows.len(),
        table.skipped,
        t0.elapsed().as_secs_f64()
    );
    table.write_csv(&run.path("features.csv"))?;
    ds.plan.write(&run.path("fold_plan.json"))?;
    run.finish()
}

fn cmd_train(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let kind = ModelKind::parse(&a.model)?;
    let mut run = Run::start(&a.out, cfg)?;
    run.input("features", &a.features);
    run.seed("train", cfg.seed);
    let table = FeatureTable::read_csv(&a.features)?;
    let rows: Vec<&FeatureRow> = table.rows.iter().collect();
    let norm = fit_normalizer(&rows)?;
    let m = apply_normalizer(&rows, &norm);
    let data = TrainData { xp: &m.xp, xr: &m.xr, labels: &m.labels, dp: PBP_COUNT, dr: RADIOMICS_COUNT };
    let t0 = Instant::now();
    let trained = train_model(kind, &data, &cfg.train, cfg.seed, &[])?;
    log::info!("trained {} on {} rows in {:.1}s", kind.name(), m.n(), t0.elapsed().as_secs_f64());
    let pred = trained.model.predict_labels(&m.xp, &m.xr, m.n())?;
    let metrics = compute_metrics(&m.labels, &pred)?;
    log::info!("training-set accuracy {:.4}", metrics.accuracy);
    checkpoint::save(&run.path("model.ckpt"), &trained.model, &cfg.train, cfg.seed)?;
    write_json(&run.path("norm.json"), &norm)?;
    write_json(&run.path("feature_config.json"), &cfg.features)?;
    write_json(&run.path("train_metrics.json"), &metrics)?;
    write_history_csv(&run.path("history.csv"), &trained.history)?;
    run.finish()
}

fn cmd_cv(cfg: &mut RunConfig, a: &DataArgs) -> Result<()> {
    let kinds = parse_models(&a.models, &cfg.models)?;
    cfg.models = kinds.clone();
    cfg.validate()?;
    let mut run = Run::start(&a.out, cfg)?;
    let (table, plan) = match (&a.features, &a.data) {
        (Some(f), data) => {
            run.input("features", f);
            let plan_path = match (&a.plan, data) {
                (Some(p), _) => p.clone(),
                (None, Some(d)) => d.join("fold_plan.json"),
                (None, None) => return Err(Error::Config("--features needs --plan or --data".into())),
            };
            run.input("plan", &plan_path);
            (FeatureTable::read_csv(f)?, FoldPlan::read(&plan_path)?)
        }
        (None, data) => {
            let ds = dataset_or_phantom(&mut run, data, cfg)?;
            let plan = match &a.plan {
                Some(p) => {
                    run.input("plan", p);
                    FoldPlan::read(p)?
                }
                None => ds.plan.clone(),
            };
            run.seed("sampling", cfg.seed);
            let rois = prepare_all(&ds.rois, &cfg.features)?;
            let table = build_feature_table(&rois, &cfg.features, cfg.seed)?;
            table.write_csv(&run.path("features.csv"))?;
            (table, plan)
        }
    };
    run.seed("cv", cfg.seed);
    let t0 = Instant::now();
    let cv = prffn_core::evaluation::run_cv(&table, &plan, &kinds, &cfg.train, cfg.seed)?;
    log::info!("cross-validation finished in {:.1}s", t0.elapsed().as_secs_f64());
    for r in &cv.results {
        log::info!("{:<15} mean accuracy {:.4}", r.kind.name(), r.mean.accuracy);
    }
    plan.write(&run.path("fold_plan.json"))?;
    write_fold_csv(&run.path("folds.csv"), &cv.results)?;
    write_json(&run.path("cv.json"), &cv.results)?;
    fs::write(run.path("summary.md"), summary_markdown(&cv.results))?;
    run.finish()
}

fn cmd_sweep(
    cfg: &mut RunConfig,
    data: &Option<PathBuf>,
    windows: &Option<Vec<usize>>,
    models: &Option<Vec<String>>,
    out: &Path,
) -> Result<()> {
    if let Some(w) = windows {
        cfg.sweep.windows = w.clone();
    }
    cfg.sweep.models = parse_models(models, &cfg.sweep.models)?;
    cfg.validate()?;
    let mut run = Run::start(out, cfg)?;
    let ds = dataset_or_phantom(&mut run, data, cfg)?;
    let (rois, plan) = match &cfg.sweep.patients {
        Some(keep) => {
            let keep: BTreeSet<String> = keep.iter().cloned().collect();
            let rois: Vec<Roi> = ds.rois.into_iter().filter(|r| keep.contains(&r.patient_id)).collect();
            if rois.is_empty() {
                return Err(Error::Config("sweep patient subset matches no ROI".into()));
            }
            (rois, ds.plan.restricted(&keep))
        }
        None => (ds.rois, ds.plan),
    };
    let prepared = prepare_all(&rois, &cfg.features)?;
    run.seed("sweep", cfg.seed);
    let settings = SweepSettings {
        windows: &cfg.sweep.windows,
        kinds: &cfg.sweep.models,
        features: &cfg.features,
        train: &cfg.train,
    };
    let t0 = Instant::now();
    let sweep = resolution_sweep(&prepared, &plan, &settings, cfg.seed)?;
    log::info!("sweep finished in {:.1}s", t0.elapsed().as_secs_f64());
    write_sweep_csv(&run.path("sweep.csv"), &sweep)?;
    write_json(&run.path("sweep.json"), &sweep)?;
    fs::write(run.path("sweep.md"), sweep_markdown(&sweep))?;
    run.finish()
}

fn cmd_map(cfg: &RunConfig, model_dir: &Path, roi_dir: &Path, out: &Path) -> Result<()> {
    let mut run = Run::start(out, cfg)?;
    run.input("model", model_dir);
    run.input("roi", roi_dir);
    let (model, _) = checkpoint::load(&model_dir.join("model.ckpt"))?;
    let norm: NormStats = serde_json::from_str(&fs::read_to_string(model_dir.join("norm.json"))?)?;
    let fc_path = model_dir.join("feature_config.json");
    let features: FeatureConfig =
        if fc_path.exists() { serde_json::from_str(&fs::read_to_string(fc_path)?)? } else { cfg.features };
    let roi = Roi::read(roi_dir)?;
    let prepared = prepare_roi(&roi, features.patch_source)?;
    let map = predict_map(&model, &prepared, &norm, &features)?;
    if let Some(acc) = map.accuracy {
        log::info!("{}: per-pixel accuracy {acc:.4} over labeled pixels", roi.roi_id);
    }
    write_rgb(&render_map(&map.predicted)?, &run.path("map.png"))?;
    write_rgb(&render_map(&prepared.mask)?, &run.path("truth.png"))?;
    map.predicted.write_png(&run.path("labels.png"))?;
    write_json(
        &run.path("map.json"),
        &MapReport { roi_id: roi.roi_id.clone(), classified: map.classified, accuracy: map.accuracy },
    )?;
    run.finish()
}

fn cmd_report(cfg: &RunConfig, a: &ReportArgs) -> Result<()> {
    if a.cv.is_none() && a.sweep.is_none() {
        return Err(Error::Config("report needs --cv and/or --sweep".into()));
    }
    let mut run = Run::start(&a.out, cfg)?;
    let mut md = String::new();
    if let Some(dir) = &a.cv {
        run.input("cv", dir);
        let results: Vec<CvResult> = read_results(&dir.join("cv.json"))?;
        md.push_str("## Cross-validation\n\n");
        md.push_str(&summary_markdown(&results));
    }
    if let Some(dir) = &a.sweep {
        run.input("sweep", dir);
        let sweep: SweepResult = read_results(&dir.join("sweep.json"))?;
        if !md.is_empty() {
            md.push('\n');
        }
        md.push_str("## Resolution sweep\n\n");
        md.push_str(&sweep_markdown(&sweep));
    }
    fs::write(run.path("report.md"), &md)?;
    print!("{md}");
    run.finish()
}

fn read_results<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.cmd {
        Cmd::Phantom { cmd: PhantomCmd::Gen { out, patients_per_class, rois_per_patient } } => {
            cmd_phantom(&mut cfg, out, *patients_per_class, *rois_per_patient)
        }
        Cmd::Mueller { cmd } => cmd_mueller(&cfg, cmd),
        Cmd::Pbp { cmd: PbpCmd::Decode { mueller, out } } => cmd_pbp(&cfg, mueller, out),
        Cmd::Register { cmd } => cmd_register(&cfg, cmd),
        Cmd::Features { cmd: FeaturesCmd::Build { data, n_per_class, out } } => {
            cmd_features(&mut cfg, data, *n_per_class, out)
        }
        Cmd::Train(a) => cmd_train(&cfg, a),
        Cmd::Cv { cmd: CvCmd::Run(a) } => cmd_cv(&mut cfg, a),
        Cmd::Sweep { cmd: SweepCmd::Run { data, windows, models, out } } => {
            cmd_sweep(&mut cfg, data, windows, models, out)
        }
        Cmd::Map { cmd: MapCmd::Render { model, roi, out } } => cmd_map(&cfg, model, roi, out),
        Cmd::Report(a) => cmd_report(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j as usize).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(1)
        }
    }
}
