//! Per-pixel training rows from registered ROIs, normalization, and
//! patient-grouped cross-validation splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use image::RgbImage;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mueller::MuellerImage;
use crate::pbp::{pbp_stack, PbpImage, PBP_COUNT, PBP_NAMES};
use crate::radiomics::{extract_radiomics, GrayPatch, RadiomicsConfig, RADIOMICS_COUNT, RADIOMICS_NAMES};
use crate::raster::{luminance, LabelMask, Plane, BACKGROUND, HCC, ICC, NON_CANCEROUS};
use crate::registration::{transfer_mask, warp_image, Affine2D};

pub const FEATURE_COUNT: usize = PBP_COUNT + RADIOMICS_COUNT;
pub const ID_COLUMNS: [&str; 5] = ["patient_id", "roi_id", "x", "y", "label"];
/// Constant-feature threshold of the normalizer.
pub const STD_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassTag {
    #[serde(rename = "HCC")]
    Hcc,
    #[serde(rename = "ICC")]
    Icc,
    NonCancerous,
}

impl ClassTag {
    pub const ALL: [ClassTag; 3] = [ClassTag::Hcc, ClassTag::Icc, ClassTag::NonCancerous];

    /// Mask label value of the class.
    pub fn mask_label(&self) -> u8 {
        match self {
            ClassTag::Hcc => HCC,
            ClassTag::Icc => ICC,
            ClassTag::NonCancerous => NON_CANCEROUS,
        }
    }

    pub fn short(&self) -> &'static str {
        match self {
            ClassTag::Hcc => "HCC",
            ClassTag::Icc => "ICC",
            ClassTag::NonCancerous => "NC",
        }
    }
}

/// One labeled region of interest. The H&E image and its mask live on the
/// moving grid; `transform` maps them onto the Mueller (fixed) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Roi {
    pub roi_id: String,
    pub patient_id: String,
    pub class_tag: ClassTag,
    pub mueller: MuellerImage,
    pub he_image: RgbImage,
    pub mask: LabelMask,
    pub transform: Affine2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoiMeta {
    roi_id: String,
    patient_id: String,
    class_tag: ClassTag,
    transform: Affine2D,
}

impl Roi {
    /// Directory layout: `mueller/` plane stack, `he.png`, `mask.png`, `roi.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.mueller.write(&dir.join("mueller"))?;
        self.he_image.save(dir.join("he.png"))?;
        self.mask.write_png(&dir.join("mask.png"))?;
        let meta = RoiMeta {
            roi_id: self.roi_id.clone(),
            patient_id: self.patient_id.clone(),
            class_tag: self.class_tag,
            transform: self.transform,
        };
        fs::write(dir.join("roi.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta: RoiMeta = serde_json::from_str(&fs::read_to_string(dir.join("roi.json"))?)?;
        let roi = Roi {
            roi_id: meta.roi_id,
            patient_id: meta.patient_id,
            class_tag: meta.class_tag,
            mueller: MuellerImage::read(&dir.join("mueller"))?,
            he_image: image::open(dir.join("he.png"))?.to_rgb8(),
            mask: LabelMask::read_png(&dir.join("mask.png"))?,
            transform: meta.transform,
        };
        roi.check()?;
        Ok(roi)
    }

    fn check(&self) -> Result<()> {
        if (self.he_image.width() as usize, self.he_image.height() as usize) != (self.mask.width, self.mask.height) {
            return Err(Error::data(format!("{}: H&E image and mask sizes differ", self.roi_id)));
        }
        let own = self.class_tag.mask_label();
        if let Some(l) = self.mask.labels.iter().find(|&&l| l != BACKGROUND && l != own) {
            return Err(Error::data(format!("{}: mask label {l} does not match class {:?}", self.roi_id, self.class_tag)));
        }
        Ok(())
    }
}

/// Where radiomics patches are cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchSource {
    /// The H&E luminance warped onto the fixed grid.
    #[default]
    Warped,
    /// The original H&E luminance around the inverse-mapped pixel center.
    Original,
}

/// An ROI decoded onto the fixed grid: parameter planes, gray image, mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRoi {
    pub roi_id: String,
    pub patient_id: String,
    pub pbp: PbpImage,
    pub gray: Plane,
    pub mask: LabelMask,
    pub transform: Affine2D,
    pub source: PatchSource,
}

pub fn prepare_roi(roi: &Roi, source: PatchSource) -> Result<PreparedRoi> {
    roi.check()?;
    let (w, h) = (roi.mueller.width, roi.mueller.height);
    let (normalized, flagged) = roi.mueller.normalize_by_m11();
    if flagged > 0 {
        log::warn!("{}: {flagged} pixels with vanishing m11 marked invalid", roi.roi_id);
    }
    let pbp = pbp_stack(&normalized)?;
    let he = luminance(&roi.he_image);
    let gray = match source {
        PatchSource::Warped => warp_image(&he, &roi.transform, w, h)?,
        PatchSource::Original => he,
    };
    Ok(PreparedRoi {
        roi_id: roi.roi_id.clone(),
        patient_id: roi.patient_id.clone(),
        pbp,
        gray,
        mask: transfer_mask(&roi.mask, &roi.transform, w, h)?,
        transform: roi.transform,
        source,
    })
}

impl PreparedRoi {
    /// Gray patch of side `size` centered on fixed-grid pixel `(x, y)`,
    /// spanning `x − size/2 .. x + size/2 − 1`; `None` when out of bounds.
    pub fn patch(&self, x: usize, y: usize, size: usize) -> Option<GrayPatch> {
        let (cx, cy) = match self.source {
            PatchSource::Warped => (x as f64, y as f64),
            PatchSource::Original => self.transform.inverse().ok()?.apply(x as f64, y as f64),
        };
        let half = (size / 2) as isize;
        let values = self.gray.block(cx.round() as isize - half, cy.round() as isize - half, size)?;
        GrayPatch::new(size, size, values).ok()
    }

    fn usable(&self, x: usize, y: usize, size: usize) -> bool {
        self.pbp.at(x, y).is_valid() && self.patch_in_bounds(x, y, size)
    }

    fn patch_in_bounds(&self, x: usize, y: usize, size: usize) -> bool {
        let (cx, cy) = match self.source {
            PatchSource::Warped => (x as f64, y as f64),
            PatchSource::Original => match self.transform.inverse() {
                Ok(inv) => inv.apply(x as f64, y as f64),
                Err(_) => return false,
            },
        };
        let half = (size / 2) as isize;
        let (x0, y0) = (cx.round() as isize - half, cy.round() as isize - half);
        x0 >= 0 && y0 >= 0 && x0 as usize + size <= self.gray.width && y0 as usize + size <= self.gray.height
    }
}

/// `n` distinct pixels of `label`, uniformly without replacement; all of
/// them (with a warning) when fewer exist.
pub fn sample_pixels(mask: &LabelMask, label: u8, n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let coords: Vec<(usize, usize)> = (0..mask.height)
        .flat_map(|y| (0..mask.width).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.at(x, y) == label)
        .collect();
    if coords.is_empty() {
        return Err(Error::data(format!("label {label} absent from mask")));
    }
    Ok(choose(&coords, n, seed))
}

fn choose<T: Copy>(items: &[T], n: usize, seed: u64) -> Vec<T> {
    if n >= items.len() {
        if n > items.len() {
            log::warn!("requested {n} samples but only {} available", items.len());
        }
        return items.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, items.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub patient_id: String,
    pub roi_id: String,
    pub x: usize,
    pub y: usize,
    /// 0 HCC, 1 ICC, 2 non-cancerous.
    pub label: u8,
    pub pbp: [f64; PBP_COUNT],
    pub radiomics: [f64; RADIOMICS_COUNT],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
    /// Labeled pixels excluded because their patch left the image or their
    /// parameters were invalid.
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub n_per_class: usize,
    pub patch_size: usize,
    pub radiomics: RadiomicsConfig,
    pub patch_source: PatchSource,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            n_per_class: 2000,
            patch_size: 100,
            radiomics: RadiomicsConfig::default(),
            patch_source: PatchSource::Warped,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 || self.patch_size < 2 {
            return Err(Error::config("n_per_class must be positive and patch_size at least 2"));
        }
        if self.radiomics.n_bins < 2 {
            return Err(Error::config("n_bins must be at least 2"));
        }
        Ok(())
    }
}

/// Samples `n_per_class` usable pixels per class, pooled over all ROIs, and
/// computes the parameter vector at the pixel plus radiomics of its patch.
pub fn build_feature_table(rois: &[PreparedRoi], cfg: &FeatureConfig, seed: u64) -> Result<FeatureTable> {
    cfg.validate()?;
    let mut picks: Vec<(usize, usize, usize, u8)> = Vec::new();
    let mut skipped = 0;
    for (ci, class) in ClassTag::ALL.iter().enumerate() {
        let label = class.mask_label();
        let mut candidates = Vec::new();
        for (r, roi) in rois.iter().enumerate() {
            for y in 0..roi.mask.height {
                for x in 0..roi.mask.width {
                    if roi.mask.at(x, y) != label {
                        continue;
                    }
                    if roi.usable(x, y, cfg.patch_size) {
                        candidates.push((r, x, y));
                    } else {
                        skipped += 1;
                    }
                }
            }
        }
        if candidates.is_empty() {
            continue;
        }
        let class_seed = seed.wrapping_add((ci as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        picks.extend(choose(&candidates, cfg.n_per_class, class_seed).into_iter().map(|(r, x, y)| (r, x, y, ci as u8)));
    }
    if picks.is_empty() {
        return Err(Error::data("no usable labeled pixels in any ROI"));
    }
    picks.sort_by_key(|&(r, x, y, _)| (r, y, x));
    let rows = picks
        .par_iter()
        .map(|&(r, x, y, label)| {
            let roi = &rois[r];
            let patch = roi.patch(x, y, cfg.patch_size).expect("usable pixel has an in-bounds patch");
            Ok(FeatureRow {
                patient_id: roi.patient_id.clone(),
                roi_id: roi.roi_id.clone(),
                x,
                y,
                label,
                pbp: roi.pbp.at(x, y).0,
                radiomics: extract_radiomics(&patch, &cfg.radiomics)?.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureTable { rows, skipped })
}

pub fn csv_header() -> Vec<String> {
    ID_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(PBP_NAMES.iter().map(|s| s.to_string()))
        .chain(RADIOMICS_NAMES.iter().cloned())
        .collect()
}

impl FeatureTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(csv_header())?;
        for r in &self.rows {
            let mut rec = vec![r.patient_id.clone(), r.roi_id.clone(), r.x.to_string(), r.y.to_string(), r.label.to_string()];
            rec.extend(r.pbp.iter().chain(r.radiomics.iter()).map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
        if header != csv_header() {
            return Err(Error::data(format!("{}: unexpected feature table header", path.display())));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| Error::data(format!("column {}: {e}", header[i])))
            };
            let int = |i: usize| -> Result<usize> {
                rec[i].parse::<usize>().map_err(|e| Error::data(format!("column {}: {e}", header[i])))
            };
            let label = int(4)?;
            if label > 2 {
                return Err(Error::data(format!("label {label} outside 0..=2")));
            }
            let mut pbp = [0.0; PBP_COUNT];
            for (k, v) in pbp.iter_mut().enumerate() {
                *v = num(5 + k)?;
            }
            let mut radiomics = [0.0; RADIOMICS_COUNT];
            for (k, v) in radiomics.iter_mut().enumerate() {
                *v = num(5 + PBP_COUNT + k)?;
            }
            rows.push(FeatureRow {
                patient_id: rec[0].to_string(),
                roi_id: rec[1].to_string(),
                x: int(2)?,
                y: int(3)?,
                label: label as u8,
                pbp,
                radiomics,
            });
        }
        Ok(FeatureTable { rows, skipped: 0 })
    }
}

/// Per-feature mean and population standard deviation over training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn features(r: &FeatureRow) -> impl Iterator<Item = f64> + '_ {
    r.pbp.iter().chain(r.radiomics.iter()).copied()
}

pub fn fit_normalizer(rows: &[&FeatureRow]) -> Result<NormStats> {
    if rows.len() < 2 {
        return Err(Error::data(format!("normalizer needs at least 2 rows, got {}", rows.len())));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; FEATURE_COUNT];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(features(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; FEATURE_COUNT];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(features(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd >= STD_EPSILON { sd } else { 1.0 }
        })
        .collect();
    Ok(NormStats { mean, std })
}

/// Normalized modality matrices and labels of a set of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrices {
    pub xp: Vec<f64>,
    pub xr: Vec<f64>,
    pub labels: Vec<u8>,
}

impl Matrices {
    pub fn n(&self) -> usize {
        self.labels.len()
    }
}

pub fn apply_normalizer(rows: &[&FeatureRow], stats: &NormStats) -> Matrices {
    let mut xp = Vec::with_capacity(rows.len() * PBP_COUNT);
    let mut xr = Vec::with_capacity(rows.len() * RADIOMICS_COUNT);
    for r in rows {
        for (k, v) in features(r).enumerate() {
            let z = (v - stats.mean[k]) / stats.std[k];
            if k < PBP_COUNT { xp.push(z) } else { xr.push(z) }
        }
    }
    Matrices { xp, xr, labels: rows.iter().map(|r| r.label).collect() }
}

/// Group id → patient ids. Each group is one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldPlan {
    pub groups: BTreeMap<String, Vec<String>>,
}

impl FoldPlan {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn group_of(&self) -> Result<HashMap<&str, &str>> {
        let mut map = HashMap::new();
        for (g, patients) in &self.groups {
            for p in patients {
                if let Some(prev) = map.insert(p.as_str(), g.as_str()) {
                    if prev != g {
                        return Err(Error::config(format!("patient {p} assigned to groups {prev} and {g}")));
                    }
                }
            }
        }
        Ok(map)
    }

    /// The plan restricted to the given patients; empty groups are dropped.
    pub fn restricted(&self, keep: &BTreeSet<String>) -> FoldPlan {
        let groups = self
            .groups
            .iter()
            .map(|(g, ps)| (g.clone(), ps.iter().filter(|p| keep.contains(*p)).cloned().collect::<Vec<_>>()))
            .filter(|(_, ps)| !ps.is_empty())
            .collect();
        FoldPlan { groups }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub group: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One split per group: that group's rows are the test side, all others train.
pub fn lopo_splits(table: &FeatureTable, plan: &FoldPlan) -> Result<Vec<Split>> {
    let group_of = plan.group_of()?;
    let mut by_group: BTreeMap<&str, Vec<usize>> = plan.groups.keys().map(|g| (g.as_str(), Vec::new())).collect();
    for (i, r) in table.rows.iter().enumerate() {
        let g = group_of
            .get(r.patient_id.as_str())
            .ok_or_else(|| Error::config(format!("patient {} has no fold group", r.patient_id)))?;
        by_group.get_mut(g).expect("group exists").push(i);
    }
    let mut splits = Vec::new();
    for (g, test) in &by_group {
        if test.is_empty() {
            log::warn!("fold group {g} has no rows and is skipped");
            continue;
        }
        let train = (0..table.rows.len()).filter(|i| group_of[table.rows[*i].patient_id.as_str()] != *g).collect();
        splits.push(Split { group: g.to_string(), train, test: test.clone() });
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(patient: &str, label: u8, v: f64) -> FeatureRow {
        FeatureRow {
            patient_id: patient.into(),
            roi_id: format!("{patient}-r"),
            x: 0,
            y: 0,
            label,
            pbp: [v; PBP_COUNT],
            radiomics: [2.0 * v; RADIOMICS_COUNT],
        }
    }

    #[test]
    fn sample_counts_and_shortfall() {
        let mut labels = vec![0u8; 100];
        for i in 0..10 {
            labels[i * 7] = 1;
        }
        let m = LabelMask::new(10, 10, labels).unwrap();
        let s = sample_pixels(&m, 1, 5, 3).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|&(x, y)| m.at(x, y) == 1));
        assert_eq!(s.iter().collect::<BTreeSet<_>>().len(), 5);
        assert_eq!(sample_pixels(&m, 1, 50, 3).unwrap().len(), 10);
        assert_eq!(s, sample_pixels(&m, 1, 5, 3).unwrap());
        assert!(matches!(sample_pixels(&m, 2, 5, 3), Err(Error::Data(_))));
    }

    #[test]
    fn normalizer_examples() {
        let a = row("p", 0, 1.0);
        let b = row("p", 1, 3.0);
        let mut c = row("p", 1, 3.0);
        c.radiomics = [5.0; RADIOMICS_COUNT];
        let mut d = row("p", 1, 1.0);
        d.radiomics = [5.0; RADIOMICS_COUNT];
        let s = fit_normalizer(&[&a, &b]).unwrap();
        assert_eq!((s.mean[0], s.std[0]), (2.0, 1.0));
        let m = apply_normalizer(&[&a, &b], &s);
        assert_eq!((m.xp[0], m.xp[PBP_COUNT]), (-1.0, 1.0));
        let s2 = fit_normalizer(&[&c, &d]).unwrap();
        assert_eq!(s2.std[PBP_COUNT], 1.0);
        assert!(apply_normalizer(&[&c, &d], &s2).xr.iter().all(|v| *v == 0.0));
        assert!(matches!(fit_normalizer(&[&a]), Err(Error::Data(_))));
    }

    #[test]
    fn splits_partition_patients() {
        let table = FeatureTable {
            rows: vec![row("H1", 0, 0.0), row("I1", 1, 0.0), row("H2", 0, 0.0), row("N1", 2, 0.0), row("I2", 1, 0.0)],
            skipped: 0,
        };
        let mut plan = FoldPlan::default();
        plan.groups.insert("g1".into(), vec!["H1".into(), "I1".into(), "N1".into()]);
        plan.groups.insert("g2".into(), vec!["H2".into(), "I2".into()]);
        let splits = lopo_splits(&table, &plan).unwrap();
        assert_eq!(splits.len(), 2);
        assert_eq!(splits[0].test, vec![0, 1, 3]);
        assert_eq!(splits[0].train, vec![2, 4]);
        assert_eq!(splits[1].test.len() + splits[1].train.len(), 5);
        plan.groups.get_mut("g2").unwrap().push("H1".into());
        assert!(matches!(lopo_splits(&table, &plan), Err(Error::Config(_))));
    }

    #[test]
    fn boundary_pixel_has_no_patch() {
        let roi = PreparedRoi {
            roi_id: "r".into(),
            patient_id: "p".into(),
            pbp: PbpImage { width: 200, height: 200, pixels: vec![crate::pbp::PbpVector([0.0; PBP_COUNT]); 40000] },
            gray: Plane::zeros(200, 200),
            mask: LabelMask::filled(200, 200, HCC),
            transform: Affine2D::identity(),
            source: PatchSource::Warped,
        };
        assert!(roi.patch(10, 10, 100).is_none());
        assert!(!roi.usable(10, 10, 100));
        assert!(roi.usable(50, 50, 100));
        assert!(!roi.usable(151, 100, 100));
        assert!(roi.usable(150, 150, 100));
    }
}
