//! Single-channel rasters: real-valued planes, label masks, and RGB helpers.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};

pub const BACKGROUND: u8 = 0;
pub const HCC: u8 = 1;
pub const ICC: u8 = 2;
pub const NON_CANCEROUS: u8 = 3;
pub const CLASS_NAMES: [&str; 3] = ["HCC", "ICC", "NonCancerous"];

/// A row-major real-valued image.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::data(format!("{} values for a {width}x{height} plane", data.len())));
        }
        Ok(Plane { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Plane { width, height, data: vec![0.0; width * height] }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// The `size`×`size` block whose top-left corner is `(x0, y0)`, or `None`
    /// when it leaves the image.
    pub fn block(&self, x0: isize, y0: isize, size: usize) -> Option<Vec<f64>> {
        if x0 < 0 || y0 < 0 || x0 as usize + size > self.width || y0 as usize + size > self.height {
            return None;
        }
        let (x0, y0) = (x0 as usize, y0 as usize);
        let mut out = Vec::with_capacity(size * size);
        for y in y0..y0 + size {
            out.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + size]);
        }
        Some(out)
    }
}

/// Gray value 0.299R + 0.587G + 0.114B of every pixel.
pub fn luminance(img: &RgbImage) -> Plane {
    let data = img
        .pixels()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect();
    Plane { width: img.width() as usize, height: img.height() as usize, data }
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

pub fn write_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path)?;
    Ok(())
}

/// Per-pixel tissue labels: 0 background, 1 HCC, 2 ICC, 3 non-cancerous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::data(format!("{} labels for a {width}x{height} mask", labels.len())));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > NON_CANCEROUS) {
            return Err(Error::data(format!("label {bad} out of range 0..=3")));
        }
        Ok(LabelMask { width, height, labels })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        LabelMask { width, height, labels: vec![label; width * height] }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        LabelMask::new(img.width() as usize, img.height() as usize, img.into_raw())
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let img = GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([self.at(x as usize, y as usize)])
        });
        img.save(path)?;
        Ok(())
    }
}

pub const PALETTE: [[u8; 3]; 4] = [[0, 0, 0], [139, 69, 19], [220, 20, 60], [255, 255, 255]];

/// Pseudo-color rendering: HCC brown, ICC red, non-cancerous white, background black.
pub fn render_map(mask: &LabelMask) -> Result<RgbImage> {
    if let Some(bad) = mask.labels.iter().find(|&&l| l as usize >= PALETTE.len()) {
        return Err(Error::data(format!("label {bad} has no palette entry")));
    }
    Ok(RgbImage::from_fn(mask.width as u32, mask.height as u32, |x, y| {
        Rgb(PALETTE[mask.at(x as usize, y as usize) as usize])
    }))
}
