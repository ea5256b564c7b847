//! Synthetic paired Mueller-matrix and H&E-like ROIs with per-pixel ground
//! truth. Polarization carries class information in per-pixel optical
//! properties; the stain image carries it in blob scale, which averaging
//! destroys.

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassTag, FoldPlan, Roi};
use crate::error::{Error, Result};
use crate::mueller::{AcquisitionMeta, MuellerImage, MuellerMatrix};
use crate::raster::{LabelMask, Plane, BACKGROUND};
use crate::registration::{transfer_mask, warp_image, Affine2D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolarSpec {
    /// Retardance (rad) at the class-neutral point and its per-unit class step.
    pub retardance: f64,
    pub retardance_step: f64,
    pub depolarization: f64,
    pub depolarization_step: f64,
    pub diattenuation: f64,
    pub diattenuation_step: f64,
    /// Smooth within-ROI variation, in class steps.
    pub spatial_std: f64,
    /// Correlation length (px) of the within-ROI variation.
    pub spatial_scale: f64,
    /// Per-patient shift of every parameter, in class steps.
    pub patient_jitter: f64,
    /// Largest fast-axis angle magnitude (rad) drawn per ROI.
    pub max_axis: f64,
    /// Gaussian noise added to every Mueller element.
    pub element_noise: f64,
}

impl Default for PolarSpec {
    fn default() -> Self {
        PolarSpec {
            retardance: 1.0,
            retardance_step: 0.25,
            depolarization: 0.35,
            depolarization_step: 0.08,
            diattenuation: 0.15,
            diattenuation_step: 0.05,
            spatial_std: 0.45,
            spatial_scale: 20.0,
            patient_jitter: 0.25,
            max_axis: 0.5,
            element_noise: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextureSpec {
    /// Blob correlation length (px) at the class-neutral point.
    pub blob_scale: f64,
    /// Per-unit class step of the log blob scale.
    pub log_scale_step: f64,
    /// Smooth within-ROI variation of the log scale, in class steps.
    pub spatial_std: f64,
    pub spatial_scale: f64,
    /// Per-patient log-scale shift, in class steps.
    pub patient_jitter: f64,
    /// Threshold on the unit-variance smoothed field that makes a blob.
    pub threshold: f64,
    /// Luminance swing between stroma and nuclei at the neutral scale. It is
    /// scaled by `blob_scale / local scale`, so heavily averaged images have
    /// the same variance in every class.
    pub contrast: f64,
    pub mean_luminance: f64,
    pub pixel_noise: f64,
    /// Per-ROI stain variation: luminance shift (std) and log contrast factor (std).
    pub stain_shift: f64,
    pub stain_contrast: f64,
    /// Blob scales are clamped to this range (px).
    pub min_scale: f64,
    pub max_scale: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec {
            blob_scale: 3.0,
            log_scale_step: 0.5,
            spatial_std: 0.45,
            spatial_scale: 40.0,
            patient_jitter: 0.25,
            threshold: 0.4,
            contrast: 50.0,
            mean_luminance: 150.0,
            pixel_noise: 5.0,
            stain_shift: 0.0,
            stain_contrast: 0.0,
            min_scale: 1.0,
            max_scale: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    pub roi_size: usize,
    /// Class separation dials in [0, 1].
    pub polar_gap: f64,
    pub texture_gap: f64,
    pub polar: PolarSpec,
    pub texture: TextureSpec,
    /// Fraction of each ROI that is unlabeled lumen.
    pub lumen_fraction: f64,
    pub lumen_scale: f64,
    /// Known moving-to-fixed transform; the H&E image and mask are generated
    /// on the fixed grid and resampled onto the moving grid through its inverse.
    pub affine: Option<Affine2D>,
    pub artifacts: ArtifactSpec,
}

/// Regions where one modality is degraded while the other stays intact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArtifactSpec {
    /// Tissue fraction with smeared stain texture.
    pub stain_fraction: f64,
    /// Tissue fraction with noisy polarimetric measurements.
    pub polar_fraction: f64,
    /// Correlation length of the artifact regions.
    pub scale: f64,
    pub stain_blur: f64,
    /// Mueller element noise inside polarimetric artifacts.
    pub polar_noise: f64,
}

impl Default for ArtifactSpec {
    fn default() -> Self {
        ArtifactSpec { stain_fraction: 0.4, polar_fraction: 0.4, scale: 40.0, stain_blur: 6.0, polar_noise: 0.2 }
    }
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            roi_size: 256,
            polar_gap: 0.6,
            texture_gap: 0.6,
            polar: PolarSpec::default(),
            texture: TextureSpec::default(),
            lumen_fraction: 0.08,
            lumen_scale: 8.0,
            affine: None,
            artifacts: ArtifactSpec::default(),
        }
    }
}

/// Class offsets in units of the class step: polarization (retardance,
/// depolarization, diattenuation) and texture log scale.
fn polar_offset(c: ClassTag) -> [f64; 3] {
    match c {
        ClassTag::Hcc => [1.0, -0.5, 0.5],
        ClassTag::Icc => [-1.0, -0.5, -0.5],
        ClassTag::NonCancerous => [0.0, 1.0, 0.0],
    }
}

fn texture_offset(c: ClassTag) -> f64 {
    match c {
        ClassTag::Hcc => 1.0,
        ClassTag::Icc => -1.0,
        ClassTag::NonCancerous => 0.0,
    }
}

const STAIN_BG: [f64; 3] = [235.0, 180.0, 210.0];
const STAIN_NUCLEUS: [f64; 3] = [120.0, 60.0, 160.0];
const LUMEN: [f64; 3] = [246.0, 240.0, 244.0];
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn spec_err(msg: impl Into<String>) -> Error {
    Error::Spec(msg.into())
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("polar_gap", self.polar_gap), ("texture_gap", self.texture_gap)] {
            if !(0.0..=1.0).contains(&g) {
                return Err(spec_err(format!("{name} {g} outside [0, 1]")));
            }
        }
        if self.roi_size < 8 {
            return Err(spec_err("roi_size must be at least 8"));
        }
        if !(0.0..0.9).contains(&self.lumen_fraction) {
            return Err(spec_err("lumen_fraction must lie in [0, 0.9)"));
        }
        let p = &self.polar;
        for c in ClassTag::ALL {
            let (d, dep, dia) = self.class_polar(c);
            if !(0.0..=std::f64::consts::PI).contains(&d) || !(0.0..=1.0).contains(&dep) || !(0.0..1.0).contains(&dia) {
                return Err(spec_err(format!(
                    "{}: retardance {d}, depolarization {dep}, diattenuation {dia} is not a physical medium",
                    c.short()
                )));
            }
        }
        let nonneg = [
            p.spatial_std,
            p.patient_jitter,
            p.element_noise,
            p.max_axis,
            self.texture.spatial_std,
            self.texture.patient_jitter,
            self.texture.pixel_noise,
            self.texture.contrast,
            self.texture.stain_shift,
            self.texture.stain_contrast,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(spec_err("noise, jitter and contrast levels must be finite and non-negative"));
        }
        let t = &self.texture;
        if !(t.min_scale > 0.0 && t.min_scale <= t.blob_scale && t.blob_scale <= t.max_scale) {
            return Err(spec_err("texture scales must satisfy 0 < min_scale <= blob_scale <= max_scale"));
        }
        let a = &self.artifacts;
        if !(0.0..0.9).contains(&a.stain_fraction) || !(0.0..0.9).contains(&a.polar_fraction) {
            return Err(spec_err("artifact fractions must lie in [0, 0.9)"));
        }
        if !(a.stain_blur >= 0.0 && a.polar_noise >= 0.0 && a.polar_noise.is_finite()) {
            return Err(spec_err("artifact blur and noise must be non-negative"));
        }
        if p.spatial_scale <= 0.0 || t.spatial_scale <= 0.0 || self.lumen_scale <= 0.0 || a.scale <= 0.0 {
            return Err(spec_err("correlation lengths must be positive"));
        }
        Ok(())
    }

    fn class_polar(&self, c: ClassTag) -> (f64, f64, f64) {
        let o = polar_offset(c);
        let p = &self.polar;
        let g = self.polar_gap;
        (
            p.retardance + g * o[0] * p.retardance_step,
            p.depolarization + g * o[1] * p.depolarization_step,
            p.diattenuation + g * o[2] * p.diattenuation_step,
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s: PhantomSpec = serde_json::from_str(&fs::read_to_string(path)?)?;
        s.validate()?;
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Patient-level deviations from the class means, in class steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatientDraw {
    pub polar: [f64; 3],
    pub texture: f64,
}

impl PatientDraw {
    pub fn sample(spec: &PhantomSpec, rng: &mut impl Rng) -> Self {
        let mut n = || rng.sample::<f64, _>(StandardNormal);
        PatientDraw {
            polar: [n() * spec.polar.patient_jitter, n() * spec.polar.patient_jitter, n() * spec.polar.patient_jitter],
            texture: n() * spec.texture.patient_jitter,
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Separable Gaussian blur with reflected borders.
fn blur(data: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let conv_line = |line: &mut Vec<f64>, get: &dyn Fn(usize) -> f64, n: usize, out: &mut dyn FnMut(usize, f64)| {
        line.clear();
        line.extend((-r..n as isize + r).map(|i| get(reflect(i, n))));
        for i in 0..n {
            out(i, k.iter().zip(&line[i..i + k.len()]).map(|(a, b)| a * b).sum());
        }
    };
    let mut line = Vec::new();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        conv_line(&mut line, &|x| data[y * w + x], w, &mut |x, v| tmp[y * w + x] = v);
    }
    let mut out = vec![0.0; w * h];
    for x in 0..w {
        conv_line(&mut line, &|y| tmp[y * w + x], h, &mut |y, v| out[y * w + x] = v);
    }
    out
}

fn white_noise(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Blurred white noise rescaled to unit variance (interior theory).
fn unit_field(noise: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let norm = k.iter().map(|v| v * v).sum::<f64>();
    blur(noise, w, h, sigma).into_iter().map(|v| v / norm).collect()
}

/// Stain image luminance offsets: thresholded smoothed noise whose
/// correlation length follows the per-pixel `log_scale` field.
fn blob_luminance(noise: &[f64], w: usize, h: usize, log_scale: &[f64], t: &TextureSpec) -> Vec<f64> {
    const RATIO: f64 = 1.15;
    let (lo, hi) = (t.min_scale.ln(), t.max_scale.ln());
    let levels = (((hi - lo) / RATIO.ln()).ceil() as usize).max(1) + 1;
    let sigma_at = |k: usize| (lo + (hi - lo) * k as f64 / (levels - 1) as f64).exp();
    let kernels: Vec<Vec<f64>> = (0..levels).map(|k| gaussian_kernel(sigma_at(k))).collect();
    // 2D correlation between two separable blurs of the same noise.
    let corr = |a: &[f64], b: &[f64]| -> f64 {
        let (ra, rb) = (a.len() / 2, b.len() / 2);
        let (short, long, rs, rl) = if ra <= rb { (a, b, ra, rb) } else { (b, a, rb, ra) };
        let dot: f64 = short.iter().enumerate().map(|(i, v)| v * long[i + rl - rs]).sum();
        let na: f64 = a.iter().map(|v| v * v).sum();
        let nb: f64 = b.iter().map(|v| v * v).sum();
        (dot * dot) / (na * nb)
    };
    let fields: Vec<Vec<f64>> = (0..levels).map(|k| unit_field(noise, w, h, sigma_at(k))).collect();
    let rhos: Vec<f64> = (0..levels - 1).map(|k| corr(&kernels[k], &kernels[k + 1])).collect();
    let mut out = vec![0.0; w * h];
    for (i, o) in out.iter_mut().enumerate() {
        let ls = log_scale[i].clamp(lo, hi);
        let pos = (ls - lo) / (hi - lo) * (levels - 1) as f64;
        let k = (pos.floor() as usize).min(levels - 2);
        let a = pos - k as f64;
        let rho = rhos[k];
        let var = (1.0 - a) * (1.0 - a) + a * a + 2.0 * a * (1.0 - a) * rho;
        let f = ((1.0 - a) * fields[k][i] + a * fields[k + 1][i]) / var.sqrt();
        let amplitude = t.contrast * t.blob_scale / ls.exp();
        *o = if f > t.threshold { amplitude } else { 0.0 };
    }
    out
}

fn empirical_quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    s[((s.len() - 1) as f64 * q).round() as usize]
}

/// Ground-truth factors of one generated pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelTruth {
    pub retardance: f64,
    pub axis: f64,
    pub depolarization: f64,
    pub diattenuation: f64,
}

/// `M_Δ·M_R·M_D` with an isotropic depolarizer.
pub fn compose_pixel(t: &PixelTruth) -> MuellerMatrix {
    let k = 1.0 - t.depolarization;
    let dep = MuellerMatrix::diagonal(1.0, k, k, k);
    dep.compose(&MuellerMatrix::linear_retarder(t.retardance, t.axis))
        .compose(&MuellerMatrix::linear_diattenuator(t.diattenuation, t.axis))
}

/// One ROI and its noiseless per-pixel factors.
#[derive(Debug, Clone)]
pub struct GeneratedRoi {
    pub roi: Roi,
    pub truth: Vec<PixelTruth>,
}

pub fn generate_roi(
    spec: &PhantomSpec,
    class_tag: ClassTag,
    patient_id: &str,
    roi_id: &str,
    patient: &PatientDraw,
    seed: u64,
) -> Result<GeneratedRoi> {
    spec.validate()?;
    let n = spec.roi_size;
    let npx = n * n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = &spec.polar;
    let (d0, dep0, dia0) = spec.class_polar(class_tag);
    let steps = [p.retardance_step, p.depolarization_step, p.diattenuation_step];
    let base = [d0, dep0, dia0];
    let polar_fields: Vec<Vec<f64>> = (0..3).map(|_| unit_field(&white_noise(npx, &mut rng), n, n, p.spatial_scale)).collect();
    let axis0 = rng.random_range(-p.max_axis..=p.max_axis);
    let axis_field = unit_field(&white_noise(npx, &mut rng), n, n, p.spatial_scale);
    let truth: Vec<PixelTruth> = (0..npx)
        .map(|i| {
            let v = |k: usize| base[k] + steps[k] * (patient.polar[k] + p.spatial_std * polar_fields[k][i]);
            PixelTruth {
                retardance: v(0).clamp(0.0, std::f64::consts::PI),
                axis: (axis0 + 0.05 * axis_field[i]).clamp(-std::f64::consts::FRAC_PI_4 + 0.05, std::f64::consts::FRAC_PI_4 - 0.05),
                depolarization: v(1).clamp(0.0, 1.0),
                diattenuation: v(2).clamp(0.0, 0.95),
            }
        })
        .collect();
    let mut arng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xA27F, 1));
    let art = &spec.artifacts;
    let mut region = |fraction: f64| -> Vec<bool> {
        let f = unit_field(&white_noise(npx, &mut arng), n, n, art.scale);
        if fraction <= 0.0 {
            return vec![false; npx];
        }
        let cut = empirical_quantile(&f, 1.0 - fraction);
        f.iter().map(|v| *v > cut).collect()
    };
    let polar_art = region(art.polar_fraction);
    let stain_art = region(art.stain_fraction);
    let art_noise = white_noise(npx * 16, &mut arng);
    let element_noise: Vec<f64> = white_noise(npx * 16, &mut rng);
    let pixels: Vec<MuellerMatrix> = truth
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let m = compose_pixel(t);
            let sd = if polar_art[i] { art.polar_noise } else { p.element_noise };
            let src = if polar_art[i] { &art_noise } else { &element_noise };
            let noise = Matrix4::from_iterator(src[i * 16..(i + 1) * 16].iter().map(|v| v * sd));
            MuellerMatrix(m.0 + noise)
        })
        .collect();
    let mueller = MuellerImage::new(n, n, pixels, AcquisitionMeta::default())?;

    let t = &spec.texture;
    let center = t.blob_scale.ln() + spec.texture_gap * texture_offset(class_tag) * t.log_scale_step;
    let scale_field = unit_field(&white_noise(npx, &mut rng), n, n, t.spatial_scale);
    let log_scale: Vec<f64> = scale_field
        .iter()
        .map(|f| center + t.log_scale_step * (patient.texture + t.spatial_std * f))
        .collect();
    let mut blobs = blob_luminance(&white_noise(npx, &mut rng), n, n, &log_scale, t);
    let lumen_field = unit_field(&white_noise(npx, &mut rng), n, n, spec.lumen_scale);
    let lumen_cut = if spec.lumen_fraction > 0.0 { empirical_quantile(&lumen_field, 1.0 - spec.lumen_fraction) } else { f64::INFINITY };
    let is_lumen: Vec<bool> = lumen_field.iter().map(|v| *v > lumen_cut).collect();
    let tissue: Vec<f64> = blobs.iter().zip(&is_lumen).filter(|(_, l)| !**l).map(|(b, _)| *b).collect();
    let mean_blob = if tissue.is_empty() { 0.0 } else { tissue.iter().sum::<f64>() / tissue.len() as f64 };
    if stain_art.iter().any(|a| *a) {
        let smeared = blur(&blobs, n, n, art.stain_blur);
        for i in 0..npx {
            if stain_art[i] {
                blobs[i] = smeared[i];
            }
        }
    }
    let bg_luma: f64 = STAIN_BG.iter().zip(LUMA).map(|(a, b)| a * b).sum();
    let dir: Vec<f64> = STAIN_NUCLEUS.iter().zip(STAIN_BG).map(|(a, b)| a - b).collect();
    let dir_luma: f64 = dir.iter().zip(LUMA).map(|(a, b)| a * b).sum::<f64>().abs();
    let pix_noise = white_noise(npx, &mut rng);
    let shift = t.stain_shift * rng.sample::<f64, _>(StandardNormal);
    let gain = (t.stain_contrast * rng.sample::<f64, _>(StandardNormal)).exp();
    let mut fixed_img = RgbImage::new(n as u32, n as u32);
    let mut labels = vec![class_tag.mask_label(); npx];
    for i in 0..npx {
        let rgb: [f64; 3] = if is_lumen[i] {
            labels[i] = BACKGROUND;
            let e = t.pixel_noise * 0.3 * pix_noise[i];
            [LUMEN[0] + e, LUMEN[1] + e, LUMEN[2] + e]
        } else {
            // Luminance offset from the target mean along the stain axis.
            let s = (gain * (blobs[i] - mean_blob) - shift + t.pixel_noise * pix_noise[i] + (bg_luma - t.mean_luminance)) / dir_luma;
            [STAIN_BG[0] + s * dir[0], STAIN_BG[1] + s * dir[1], STAIN_BG[2] + s * dir[2]]
        };
        let px = Rgb(rgb.map(|v| v.round().clamp(0.0, 255.0) as u8));
        fixed_img.put_pixel((i % n) as u32, (i / n) as u32, px);
    }
    let fixed_mask = LabelMask::new(n, n, labels)?;
    let (he_image, mask, transform) = match &spec.affine {
        None => (fixed_img, fixed_mask, Affine2D::identity()),
        Some(a) => {
            let inv = a.inverse()?;
            let mut planes = Vec::new();
            for c in 0..3 {
                let data = fixed_img.pixels().map(|p| p.0[c] as f64).collect();
                planes.push(warp_image(&Plane::new(n, n, data)?, &inv, n, n)?);
            }
            let mut img = RgbImage::new(n as u32, n as u32);
            for (i, px) in img.pixels_mut().enumerate() {
                *px = Rgb([0, 1, 2].map(|c| planes[c].data[i].round().clamp(0.0, 255.0) as u8));
            }
            (img, transfer_mask(&fixed_mask, &inv, n, n)?, *a)
        }
    };
    Ok(GeneratedRoi {
        roi: Roi {
            roi_id: roi_id.to_string(),
            patient_id: patient_id.to_string(),
            class_tag,
            mueller,
            he_image,
            mask,
            transform,
        },
        truth,
    })
}

pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn patient_id(class: ClassTag, index: usize) -> String {
    format!("{}-{:02}", class.short(), index + 1)
}

#[derive(Debug, Clone)]
pub struct PhantomDataset {
    pub rois: Vec<Roi>,
    pub plan: FoldPlan,
}

/// `n_patients_per_class` patients per class, each with its own parameter
/// draw; group `gNN` holds the NN-th patient of every class.
pub fn generate_dataset(spec: &PhantomSpec, n_patients_per_class: usize, rois_per_patient: usize, seed: u64) -> Result<PhantomDataset> {
    spec.validate()?;
    if n_patients_per_class == 0 || rois_per_patient == 0 {
        return Err(spec_err("patient and ROI counts must be at least 1"));
    }
    let mut jobs = Vec::new();
    let mut plan = FoldPlan::default();
    for (ci, class) in ClassTag::ALL.into_iter().enumerate() {
        for pi in 0..n_patients_per_class {
            let pid = patient_id(class, pi);
            plan.groups.entry(format!("g{:02}", pi + 1)).or_default().push(pid.clone());
            let mut prng = ChaCha8Rng::seed_from_u64(mix_seed(seed, ci as u64 + 1, pi as u64 + 1));
            let draw = PatientDraw::sample(spec, &mut prng);
            for ri in 0..rois_per_patient {
                let roi_seed = mix_seed(seed, (ci as u64 + 1) << 32 | (pi as u64 + 1), ri as u64 + 1);
                jobs.push((class, pid.clone(), format!("{pid}-r{}", ri + 1), draw, roi_seed));
            }
        }
    }
    let rois = jobs
        .par_iter()
        .map(|(class, pid, rid, draw, s)| generate_roi(spec, *class, pid, rid, draw, *s).map(|g| g.roi))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhantomDataset { rois, plan })
}

impl PhantomDataset {
    /// `rois/<roi_id>/`, `fold_plan.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("rois"))?;
        for r in &self.rois {
            r.write(&dir.join("rois").join(&r.roi_id))?;
        }
        self.plan.write(&dir.join("fold_plan.json"))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let mut names: Vec<_> = fs::read_dir(dir.join("rois"))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<Vec<_>>>()?;
        names.retain(|p| p.is_dir());
        names.sort();
        let rois = names.iter().map(|p| Roi::read(p)).collect::<Result<Vec<_>>>()?;
        Ok(PhantomDataset { rois, plan: FoldPlan::read(&dir.join("fold_plan.json"))? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mueller::validate_physical;
    use crate::pbp::mmpd;

    fn small() -> PhantomSpec {
        PhantomSpec { roi_size: 48, ..Default::default() }
    }

    #[test]
    fn composed_pixels_decompose_to_their_factors() {
        let t = PixelTruth { retardance: 1.1, axis: 0.3, depolarization: 0.3, diattenuation: 0.2 };
        let m = compose_pixel(&t);
        assert!(validate_physical(&m).pass);
        let d = mmpd(&m).unwrap();
        assert!((d.diattenuation - 0.2).abs() < 1e-6);
        assert!((d.linear_retardance - 1.1).abs() < 1e-6);
        assert!((d.depolarization - 0.3).abs() < 1e-6);
    }

    #[test]
    fn counts_groups_and_determinism() {
        let a = generate_dataset(&small(), 3, 1, 5).unwrap();
        assert_eq!(a.rois.len(), 9);
        assert_eq!(a.plan.groups.len(), 3);
        assert!(a.plan.groups.values().all(|g| g.len() == 3));
        let b = generate_dataset(&small(), 3, 1, 5).unwrap();
        assert_eq!(a.rois, b.rois);
        let c = generate_dataset(&small(), 3, 1, 6).unwrap();
        assert_ne!(a.rois[0].he_image, c.rois[0].he_image);
    }

    #[test]
    fn invalid_specs_rejected() {
        let s = PhantomSpec { polar_gap: 1.5, ..small() };
        assert!(matches!(s.validate(), Err(Error::Spec(_))));
        let mut s = small();
        s.polar.diattenuation = 0.99;
        assert!(matches!(s.validate(), Err(Error::Spec(_))));
    }

    #[test]
    fn masks_and_mean_luminance() {
        let ds = generate_dataset(&small(), 1, 1, 9).unwrap();
        for r in &ds.rois {
            let own = r.class_tag.mask_label();
            assert!(r.mask.labels.iter().all(|&l| l == own || l == BACKGROUND));
            let bg = r.mask.labels.iter().filter(|&&l| l == BACKGROUND).count() as f64 / r.mask.labels.len() as f64;
            assert!(bg > 0.02 && bg < 0.2, "lumen fraction {bg}");
            let lum = crate::raster::luminance(&r.he_image);
            let (s, c) = r.mask.labels.iter().zip(&lum.data).filter(|(l, _)| **l != BACKGROUND).fold((0.0, 0), |(s, c), (_, v)| (s + v, c + 1));
            assert!((s / c as f64 - 150.0).abs() < 3.0, "mean luminance {}", s / c as f64);
        }
    }

    #[test]
    fn artifacts_touch_only_their_regions() {
        let mut s = PhantomSpec { lumen_fraction: 0.0, ..small() };
        s.artifacts.stain_fraction = 0.0;
        s.artifacts.polar_fraction = 0.0;
        let clean = generate_dataset(&s, 1, 1, 3).unwrap();
        s.artifacts = ArtifactSpec { stain_fraction: 0.5, polar_fraction: 0.25, polar_noise: 0.3, scale: 6.0, ..Default::default() };
        let art = generate_dataset(&s, 1, 1, 3).unwrap();
        for (c, a) in clean.rois.iter().zip(&art.rois) {
            assert_eq!(c.mask, a.mask);
            let n = c.mask.labels.len() as f64;
            let polar = c.mueller.pixels.iter().zip(&a.mueller.pixels).filter(|(x, y)| x != y).count() as f64 / n;
            assert!((polar - 0.25).abs() < 0.01, "polar artifact fraction {polar}");
            let stain = c.he_image.pixels().zip(a.he_image.pixels()).filter(|(x, y)| x != y).count() as f64 / n;
            assert!(stain > 0.2 && stain < 0.6, "stain artifact fraction {stain}");
        }
        s.artifacts.polar_fraction = 0.95;
        assert!(matches!(s.validate(), Err(Error::Spec(_))));
    }

    #[test]
    fn spec_json_round_trip_rejects_unknown_keys() {
        let s = PhantomSpec::default();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<PhantomSpec>(&j).unwrap(), s);
        assert!(serde_json::from_str::<PhantomSpec>(r#"{"bogus": 1}"#).is_err());
    }
}
