//! Metrics, patient-grouped cross-validation, the average-filter resolution
//! sweep and per-pixel prediction maps.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    apply_normalizer, build_feature_table, fit_normalizer, lopo_splits, FeatureConfig, FeatureRow, FeatureTable,
    FoldPlan, NormStats, PreparedRoi,
};
use crate::error::{Error, Result};
use crate::nn::{train_model, Model, ModelKind, TrainConfig, TrainData, Trained};
use crate::pbp::{PbpImage, PBP_COUNT};
use crate::radiomics::{extract_radiomics, RADIOMICS_COUNT};
use crate::raster::{LabelMask, Plane, BACKGROUND};

pub const N_CLASSES: usize = 3;

/// Full-scale clinical results, kept for side-by-side reporting only:
/// `(model, accuracy, precision, recall, f1)`; `NaN` where unpublished.
pub const REFERENCE_RESULTS: [(ModelKind, f64, f64, f64, f64); 5] = [
    (ModelKind::PolarOnly, 0.812, f64::NAN, f64::NAN, f64::NAN),
    (ModelKind::RadiomicsOnly, 0.808, f64::NAN, f64::NAN, f64::NAN),
    (ModelKind::EarlyConcat, 0.829, f64::NAN, f64::NAN, f64::NAN),
    (ModelKind::LateResult, 0.835, f64::NAN, f64::NAN, f64::NAN),
    (ModelKind::Prffn, 0.877, 0.884, 0.877, 0.863),
];

/// Full-scale accuracy at the smallest and largest filter window.
pub const REFERENCE_SWEEP: [(ModelKind, f64, f64); 2] =
    [(ModelKind::RadiomicsOnly, 0.773, 0.669), (ModelKind::Prffn, 0.893, 0.873)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `confusion[true][pred]`.
    pub confusion: [[u64; N_CLASSES]; N_CLASSES],
}

/// Macro-averaged metrics. Recall averages over classes present in `y_true`;
/// precision and F1 average over classes present in either list, a class
/// that is predicted but never true scoring 0.
pub fn compute_metrics(y_true: &[u8], y_pred: &[u8]) -> Result<MetricsReport> {
    if y_true.is_empty() {
        return Err(Error::data("no labels to score"));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::data(format!("{} true labels but {} predictions", y_true.len(), y_pred.len())));
    }
    let mut confusion = [[0u64; N_CLASSES]; N_CLASSES];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t as usize >= N_CLASSES || p as usize >= N_CLASSES {
            return Err(Error::data(format!("label pair ({t}, {p}) outside 0..{N_CLASSES}")));
        }
        confusion[t as usize][p as usize] += 1;
    }
    Ok(MetricsReport::from_confusion(confusion))
}

impl MetricsReport {
    pub fn from_confusion(confusion: [[u64; N_CLASSES]; N_CLASSES]) -> Self {
        let total: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..N_CLASSES).map(|c| confusion[c][c]).sum();
        let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
        let (mut n_pf, mut n_r) = (0usize, 0usize);
        for c in 0..N_CLASSES {
            let tp = confusion[c][c] as f64;
            let actual: u64 = confusion[c].iter().sum();
            let predicted: u64 = (0..N_CLASSES).map(|t| confusion[t][c]).sum();
            if actual == 0 && predicted == 0 {
                continue;
            }
            let p = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let r = if actual > 0 { tp / actual as f64 } else { 0.0 };
            if actual > 0 {
                r_sum += r;
                n_r += 1;
            }
            p_sum += p;
            f_sum += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            n_pf += 1;
        }
        let div = |s: f64, n: usize| if n > 0 { s / n as f64 } else { 0.0 };
        MetricsReport {
            accuracy: if total > 0 { trace as f64 / total as f64 } else { 0.0 },
            precision: div(p_sum, n_pf),
            recall: div(r_sum, n_r),
            f1: div(f_sum, n_pf),
            confusion,
        }
    }

    /// Arithmetic mean of the four metrics; confusion counts are summed.
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let mut confusion = [[0u64; N_CLASSES]; N_CLASSES];
        for r in reports {
            for (row, src) in confusion.iter_mut().zip(&r.confusion) {
                for (a, b) in row.iter_mut().zip(src) {
                    *a += b;
                }
            }
        }
        Some(MetricsReport {
            accuracy: reports.iter().map(|r| r.accuracy).sum::<f64>() / n,
            precision: reports.iter().map(|r| r.precision).sum::<f64>() / n,
            recall: reports.iter().map(|r| r.recall).sum::<f64>() / n,
            f1: reports.iter().map(|r| r.f1).sum::<f64>() / n,
            confusion,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub group: String,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Option<MetricsReport>,
    /// Why the fold produced no metrics, e.g. a single-class training side.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub kind: ModelKind,
    pub folds: Vec<FoldReport>,
    /// Mean over the folds that produced metrics.
    pub mean: MetricsReport,
}

/// What a fold learned from its training side; kept for inspection.
#[derive(Debug, Clone)]
pub struct FoldArtifacts {
    pub group: String,
    pub seed: u64,
    pub norm: NormStats,
    pub models: Vec<Trained>,
}

#[derive(Debug, Clone)]
pub struct CvRun {
    pub results: Vec<CvResult>,
    pub folds: Vec<FoldArtifacts>,
}

pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    let mut z = seed.wrapping_add((fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Training order: single-modality networks first so the late average and
/// tower seeding can reuse them.
fn training_order(kinds: &[ModelKind]) -> Vec<ModelKind> {
    let mut order: Vec<ModelKind> = Vec::new();
    for k in [ModelKind::PolarOnly, ModelKind::RadiomicsOnly, ModelKind::EarlyConcat, ModelKind::LateResult, ModelKind::Prffn] {
        if kinds.contains(&k) {
            order.push(k);
        }
    }
    order
}

struct FoldOutcome {
    artifacts: Option<FoldArtifacts>,
    reports: Vec<(ModelKind, FoldReport)>,
}

fn run_fold(
    rows: &[FeatureRow],
    split: &crate::dataset::Split,
    kinds: &[ModelKind],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<FoldOutcome> {
    let train_rows: Vec<&FeatureRow> = split.train.iter().map(|&i| &rows[i]).collect();
    let test_rows: Vec<&FeatureRow> = split.test.iter().map(|&i| &rows[i]).collect();
    let report = |metrics, error| FoldReport {
        group: split.group.clone(),
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        metrics,
        error,
    };
    let norm = match fit_normalizer(&train_rows) {
        Ok(n) => n,
        Err(e) => {
            log::warn!("fold {}: {e}", split.group);
            return Ok(FoldOutcome { artifacts: None, reports: kinds.iter().map(|&k| (k, report(None, Some(e.to_string())))).collect() });
        }
    };
    let train = apply_normalizer(&train_rows, &norm);
    let test = apply_normalizer(&test_rows, &norm);
    let data = TrainData { xp: &train.xp, xr: &train.xr, labels: &train.labels, dp: PBP_COUNT, dr: RADIOMICS_COUNT };
    let mut models: Vec<Trained> = Vec::new();
    let mut reports = Vec::new();
    for kind in training_order(kinds) {
        let reuse: Vec<&Trained> = models.iter().collect();
        log::info!("fold {}: training {} on {} rows", split.group, kind.name(), train.n());
        match train_model(kind, &data, cfg, seed, &reuse) {
            Ok(t) => {
                let pred = t.model.predict_labels(&test.xp, &test.xr, test.n())?;
                reports.push((kind, report(Some(compute_metrics(&test.labels, &pred)?), None)));
                models.push(t);
            }
            Err(e @ Error::Training(_)) => {
                log::warn!("fold {} {}: {e}", split.group, kind.name());
                reports.push((kind, report(None, Some(e.to_string()))));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(FoldOutcome { artifacts: Some(FoldArtifacts { group: split.group.clone(), seed, norm, models }), reports })
}

/// One train/evaluate cycle per fold group for every requested model kind.
/// Folds run in parallel; results are ordered by group then model.
pub fn run_cv(table: &FeatureTable, plan: &FoldPlan, kinds: &[ModelKind], cfg: &TrainConfig, seed: u64) -> Result<CvRun> {
    cfg.validate()?;
    if kinds.is_empty() {
        return Err(Error::config("no model kinds requested"));
    }
    let splits = lopo_splits(table, plan)?;
    if splits.len() < 2 {
        return Err(Error::config(format!("cross-validation needs at least 2 folds, got {}", splits.len())));
    }
    let outcomes = splits
        .par_iter()
        .enumerate()
        .map(|(i, s)| run_fold(&table.rows, s, kinds, cfg, fold_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let mut results = Vec::new();
    for &kind in kinds {
        let folds: Vec<FoldReport> = outcomes
            .iter()
            .flat_map(|o| o.reports.iter().filter(|(k, _)| *k == kind).map(|(_, r)| r.clone()))
            .collect();
        let scored: Vec<MetricsReport> = folds.iter().filter_map(|f| f.metrics).collect();
        let mean = MetricsReport::mean(&scored)
            .ok_or_else(|| Error::Training(format!("{}: no fold produced metrics", kind.name())))?;
        results.push(CvResult { kind, folds, mean });
    }
    Ok(CvRun { results, folds: outcomes.into_iter().filter_map(|o| o.artifacts).collect() })
}

pub fn write_fold_csv(path: &Path, results: &[CvResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "group", "n_train", "n_test", "accuracy", "precision", "recall", "f1", "error"])?;
    for r in results {
        for f in &r.folds {
            let m = |g: fn(&MetricsReport) -> f64| f.metrics.as_ref().map(|x| format!("{:.6}", g(x))).unwrap_or_default();
            w.write_record([
                r.kind.name().to_string(),
                f.group.clone(),
                f.n_train.to_string(),
                f.n_test.to_string(),
                m(|x| x.accuracy),
                m(|x| x.precision),
                m(|x| x.recall),
                m(|x| x.f1),
                f.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn display_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::PolarOnly => "Polarization features only",
        ModelKind::RadiomicsOnly => "Image features only",
        ModelKind::EarlyConcat => "Early fusion (feature concatenation)",
        ModelKind::LateResult => "Late fusion (result averaging)",
        ModelKind::Prffn => "PRFFN",
    }
}

fn fmt_ref(v: f64) -> String {
    if v.is_nan() { "-".into() } else { format!("{v:.3}") }
}

/// Markdown table of mean fold metrics with the clinical reference beside it.
pub fn summary_markdown(results: &[CvResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "| Model | Accuracy | Precision | Recall | F1 | Ref. accuracy | Ref. precision | Ref. recall | Ref. F1 |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|");
    for kind in training_order(&results.iter().map(|r| r.kind).collect::<Vec<_>>()) {
        let r = results.iter().find(|r| r.kind == kind).expect("kind present");
        let (_, ra, rp, rr, rf) = REFERENCE_RESULTS.iter().find(|x| x.0 == kind).copied().expect("reference row");
        let m = &r.mean;
        let _ = writeln!(
            s,
            "| {} | {:.3} | {:.3} | {:.3} | {:.3} | {} | {} | {} | {} |",
            display_name(kind),
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            fmt_ref(ra),
            fmt_ref(rp),
            fmt_ref(rr),
            fmt_ref(rf)
        );
    }
    s
}

/// Mean over the `w`×`w` neighborhood with edge replication; `w` odd.
pub fn average_filter(img: &Plane, w: usize) -> Result<Plane> {
    if w == 0 || w % 2 == 0 {
        return Err(Error::config(format!("filter window must be odd and positive, got {w}")));
    }
    if w == 1 {
        return Ok(img.clone());
    }
    let (width, height) = (img.width, img.height);
    let r = (w / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let wf = w as f64;
    // Accumulating differences from the center keeps constant images exact.
    let mut rows = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let c = img.at(x, y);
            let mut acc = 0.0;
            for d in -r..=r {
                acc += img.at(clamp(x as isize + d, width), y) - c;
            }
            rows[y * width + x] = c + acc / wf;
        }
    }
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let c = rows[y * width + x];
            let mut acc = 0.0;
            for d in -r..=r {
                acc += rows[clamp(y as isize + d, height) * width + x] - c;
            }
            out[y * width + x] = c + acc / wf;
        }
    }
    Plane::new(width, height, out)
}

/// The ROI with its gray image and every parameter plane filtered.
pub fn filter_roi(roi: &PreparedRoi, w: usize) -> Result<PreparedRoi> {
    if w == 1 {
        return Ok(roi.clone());
    }
    let (pw, ph) = (roi.pbp.width, roi.pbp.height);
    let planes = (0..PBP_COUNT)
        .map(|k| Ok(average_filter(&Plane::new(pw, ph, roi.pbp.plane(k))?, w)?.data))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedRoi { pbp: PbpImage::from_planes(pw, ph, &planes)?, gray: average_filter(&roi.gray, w)?, ..roi.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub window: usize,
    pub results: Vec<CvResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub windows: Vec<usize>,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// Mean CV accuracy per window for one model.
    pub fn curve(&self, kind: ModelKind) -> Vec<f64> {
        self.points
            .iter()
            .filter_map(|p| p.results.iter().find(|r| r.kind == kind).map(|r| r.mean.accuracy))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings<'a> {
    pub windows: &'a [usize],
    pub kinds: &'a [ModelKind],
    pub features: &'a FeatureConfig,
    pub train: &'a TrainConfig,
}

/// For each window: filter the raw planes, rebuild the feature table with the
/// same sampling seed, and cross-validate.
pub fn resolution_sweep(rois: &[PreparedRoi], plan: &FoldPlan, s: &SweepSettings, seed: u64) -> Result<SweepResult> {
    if s.windows.first() != Some(&1) || s.windows.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::config("sweep windows must ascend strictly and start at 1"));
    }
    for &w in s.windows {
        if w % 2 == 0 {
            return Err(Error::config(format!("filter window must be odd, got {w}")));
        }
    }
    let mut points = Vec::new();
    for &w in s.windows {
        log::info!("sweep: window {w}");
        let filtered = rois.par_iter().map(|r| filter_roi(r, w)).collect::<Result<Vec<_>>>()?;
        let table = build_feature_table(&filtered, s.features, seed)?;
        let run = run_cv(&table, plan, s.kinds, s.train, seed)?;
        points.push(SweepPoint { window: w, results: run.results });
    }
    Ok(SweepResult { windows: s.windows.to_vec(), points })
}

pub fn write_sweep_csv(path: &Path, sweep: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["window", "model", "accuracy", "precision", "recall", "f1"])?;
    for p in &sweep.points {
        for r in &p.results {
            let m = &r.mean;
            w.write_record([
                p.window.to_string(),
                r.kind.name().to_string(),
                format!("{:.6}", m.accuracy),
                format!("{:.6}", m.precision),
                format!("{:.6}", m.recall),
                format!("{:.6}", m.f1),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn sweep_markdown(sweep: &SweepResult) -> String {
    let kinds: Vec<ModelKind> = sweep.points.first().map(|p| p.results.iter().map(|r| r.kind).collect()).unwrap_or_default();
    let mut s = String::from("| Window |");
    for k in &kinds {
        let _ = write!(s, " {} |", display_name(*k));
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(kinds.len()));
    s.push('\n');
    for p in &sweep.points {
        let _ = write!(s, "| {} |", p.window);
        for r in &p.results {
            let _ = write!(s, " {:.3} |", r.mean.accuracy);
        }
        s.push('\n');
    }
    let _ = writeln!(s, "\nClinical reference (smallest to largest window):");
    for (k, a, b) in REFERENCE_SWEEP {
        let _ = writeln!(s, "- {}: {a:.3} to {b:.3}", display_name(k));
    }
    s
}

/// Classification of every pixel whose patch fits and whose parameters are
/// valid; everything else is background.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMap {
    pub predicted: LabelMask,
    /// Accuracy over pixels that are both labeled and classified.
    pub accuracy: Option<f64>,
    pub classified: usize,
}

pub fn predict_map(model: &Model, roi: &PreparedRoi, norm: &NormStats, cfg: &FeatureConfig) -> Result<PixelMap> {
    let (w, h) = (roi.mask.width, roi.mask.height);
    let pixels: Vec<(usize, usize)> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).collect();
    let rows = pixels
        .par_iter()
        .map(|&(x, y)| {
            let v = roi.pbp.at(x, y);
            if !v.is_valid() {
                return Ok(None);
            }
            let Some(patch) = roi.patch(x, y, cfg.patch_size) else { return Ok(None) };
            let r = extract_radiomics(&patch, &cfg.radiomics)?;
            Ok(Some(FeatureRow {
                patient_id: roi.patient_id.clone(),
                roi_id: roi.roi_id.clone(),
                x,
                y,
                label: 0,
                pbp: v.0,
                radiomics: r.0,
            }))
        })
        .collect::<Result<Vec<Option<FeatureRow>>>>()?;
    let present: Vec<&FeatureRow> = rows.iter().flatten().collect();
    let mut labels = vec![BACKGROUND; w * h];
    let (mut hits, mut scored) = (0usize, 0usize);
    if !present.is_empty() {
        let m = apply_normalizer(&present, norm);
        let pred = model.predict_labels(&m.xp, &m.xr, m.n())?;
        for (r, p) in present.iter().zip(pred) {
            let label = p + 1;
            labels[r.y * w + r.x] = label;
            let truth = roi.mask.at(r.x, r.y);
            if truth != BACKGROUND {
                scored += 1;
                hits += (truth == label) as usize;
            }
        }
    }
    Ok(PixelMap {
        predicted: LabelMask::new(w, h, labels)?,
        accuracy: (scored > 0).then(|| hits as f64 / scored as f64),
        classified: present.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let m = compute_metrics(&[0, 0, 1, 1, 2, 2], &[0, 1, 1, 1, 2, 0]).unwrap();
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-12);
        assert!((m.precision - (0.5 + 2.0 / 3.0 + 1.0) / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.f1 - (0.5 + 0.8 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
        assert_eq!(m.confusion, [[1, 1, 0], [0, 2, 0], [1, 0, 1]]);
    }

    #[test]
    fn perfect_and_errors() {
        let m = compute_metrics(&[2, 1, 0, 2], &[2, 1, 0, 2]).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(matches!(compute_metrics(&[], &[]), Err(Error::Data(_))));
        assert!(matches!(compute_metrics(&[0], &[0, 1]), Err(Error::Data(_))));
        assert!(matches!(compute_metrics(&[3], &[0]), Err(Error::Data(_))));
    }

    #[test]
    fn class_missing_from_truth() {
        // Class 2 is predicted but never true: recall ignores it, precision counts 0.
        let m = compute_metrics(&[0, 1], &[0, 2]).unwrap();
        assert_eq!(m.recall, 0.5);
        assert!((m.precision - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn filter_examples() {
        let six = Plane::new(3, 3, vec![6.0; 9]).unwrap();
        assert_eq!(average_filter(&six, 3).unwrap(), six);
        let ramp = Plane::new(5, 4, (0..20).map(|v| v as f64 * 0.37).collect()).unwrap();
        assert_eq!(average_filter(&ramp, 1).unwrap(), ramp);
        assert!(matches!(average_filter(&ramp, 4), Err(Error::Config(_))));
        let f = average_filter(&ramp, 3).unwrap();
        for y in 0..4isize {
            for x in 0..5isize {
                let mut s = 0.0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        s += ramp.at((x + dx).clamp(0, 4) as usize, (y + dy).clamp(0, 3) as usize);
                    }
                }
                assert!((f.at(x as usize, y as usize) - s / 9.0).abs() < 1e-12);
            }
        }
    }
}
