//! Radiomics features of a grayscale patch: 18 first-order statistics and
//! 75 texture features from five gray-level matrices.
//!
//! Texture matrices are built on a fixed-bin-count quantization of the
//! patch (default 32 levels). Directional matrices (GLCM, GLRLM) are
//! evaluated per direction at distance 1 and the features averaged;
//! GLSZM zones use 8-connectivity; NGTDM and GLDM use the 8-neighborhood
//! with dependence threshold 0.

mod emphasis;
pub mod first_order;
pub mod glcm;
pub mod gldm;
pub mod glrlm;
pub mod glszm;
pub mod ngtdm;

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use first_order::{first_order, FIRST_ORDER_NAMES};
pub use glcm::{glcm_features, GLCM_NAMES};
pub use gldm::{gldm_features, GLDM_NAMES};
pub use glrlm::{glrlm_features, GLRLM_NAMES};
pub use glszm::{glszm_features, GLSZM_NAMES};
pub use ngtdm::{ngtdm_features, NGTDM_NAMES};

pub const RADIOMICS_COUNT: usize = 93;

/// Sentinel for an NGTDM coarseness with a zero denominator.
pub const COARSENESS_CAP: f64 = 1e6;

/// Canonical feature order: first-order, GLCM, GLRLM, GLSZM, NGTDM, GLDM.
pub static RADIOMICS_NAMES: LazyLock<Vec<String>> = LazyLock::new(|| {
    let families: [(&str, &[&str]); 6] = [
        ("fo", &FIRST_ORDER_NAMES),
        ("glcm", &GLCM_NAMES),
        ("glrlm", &GLRLM_NAMES),
        ("glszm", &GLSZM_NAMES),
        ("ngtdm", &NGTDM_NAMES),
        ("gldm", &GLDM_NAMES),
    ];
    families
        .iter()
        .flat_map(|(prefix, names)| names.iter().map(move |n| format!("{prefix}_{n}")))
        .collect()
});

/// Grayscale patch, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayPatch {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl GrayPatch {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::data(format!(
                "{} values for a {width}x{height} patch",
                values.len()
            )));
        }
        Ok(GrayPatch { width, height, values })
    }
}

/// Bin indices in `1..=levels`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedPatch {
    pub width: usize,
    pub height: usize,
    pub levels: usize,
    pub bins: Vec<u16>,
}

impl QuantizedPatch {
    pub fn new(width: usize, height: usize, levels: usize, bins: Vec<u16>) -> Result<Self> {
        if bins.len() != width * height || width == 0 || height == 0 {
            return Err(Error::data("quantized patch has inconsistent dimensions"));
        }
        if levels == 0 || bins.iter().any(|&b| b == 0 || b as usize > levels) {
            return Err(Error::data("bin index outside 1..=levels"));
        }
        Ok(QuantizedPatch { width, height, levels, bins })
    }

    #[inline]
    pub(crate) fn at(&self, x: usize, y: usize) -> u16 {
        self.bins[y * self.width + x]
    }
}

pub(crate) fn bin_of(v: f64, min: f64, width: f64, n_bins: usize) -> u16 {
    if width <= 0.0 {
        return 1;
    }
    let b = ((v - min) / width).floor() as usize + 1;
    b.min(n_bins) as u16
}

/// Fixed-bin-count quantization over the patch's own range.
pub fn quantize(p: &GrayPatch, n_bins: usize) -> Result<QuantizedPatch> {
    if n_bins < 2 {
        return Err(Error::config(format!("n_bins must be >= 2, got {n_bins}")));
    }
    if p.values.is_empty() {
        return Err(Error::data("empty patch"));
    }
    if p.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite value in patch"));
    }
    let (min, max) = p
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let width = (max - min) / n_bins as f64;
    let bins = p.values.iter().map(|&v| bin_of(v, min, width, n_bins)).collect();
    QuantizedPatch::new(p.width, p.height, n_bins, bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiomicsConfig {
    pub n_bins: usize,
}

impl Default for RadiomicsConfig {
    fn default() -> Self {
        RadiomicsConfig { n_bins: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiomicsVector(pub [f64; RADIOMICS_COUNT]);

impl RadiomicsVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        RADIOMICS_NAMES.iter().position(|n| n == name).map(|i| self.0[i])
    }
}

/// All 93 features in canonical order.
pub fn extract_radiomics(p: &GrayPatch, cfg: &RadiomicsConfig) -> Result<RadiomicsVector> {
    let q = quantize(p, cfg.n_bins)?;
    let mut out = [0.0; RADIOMICS_COUNT];
    let mut at = 0;
    let mut push = |vals: &[f64]| {
        out[at..at + vals.len()].copy_from_slice(vals);
        at += vals.len();
    };
    push(&first_order(p, cfg.n_bins)?);
    push(&glcm_features(&q)?);
    push(&glrlm_features(&q)?);
    push(&glszm_features(&q)?);
    push(&ngtdm_features(&q)?);
    push(&gldm_features(&q)?);
    debug_assert_eq!(at, RADIOMICS_COUNT);
    Ok(RadiomicsVector(out))
}
