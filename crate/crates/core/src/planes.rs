//! Header + raw plane container shared by Mueller, intensity and PBP images.
//!
//! A plane stack lives in a directory holding `header.json` and `planes.bin`.
//! The binary file is every plane in channel order, each `height * width`
//! little-endian `f32` values in row-major order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER_FILE: &str = "header.json";
pub const PLANES_FILE: &str = "planes.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneHeader {
    pub kind: String,
    pub width: usize,
    pub height: usize,
    pub channels: Vec<String>,
    pub dtype: String,
    pub endianness: String,
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnification: Option<String>,
}

impl PlaneHeader {
    pub fn new(kind: &str, width: usize, height: usize, channels: Vec<String>) -> Self {
        PlaneHeader {
            kind: kind.to_string(),
            width,
            height,
            channels,
            dtype: "f32".to_string(),
            endianness: "little".to_string(),
            layout: "plane-sequential,row-major".to_string(),
            wavelength_nm: None,
            magnification: None,
        }
    }

    fn check(&self) -> Result<()> {
        if self.dtype != "f32" || self.endianness != "little" {
            return Err(Error::data(format!(
                "unsupported plane encoding {} / {}",
                self.dtype, self.endianness
            )));
        }
        if self.width == 0 || self.height == 0 || self.channels.is_empty() {
            return Err(Error::data("plane stack has zero extent"));
        }
        Ok(())
    }
}

/// Writes a plane stack; `value(channel, pixel)` yields the sample for a
/// channel at row-major pixel index.
pub fn write_planes<F>(dir: &Path, header: &PlaneHeader, value: F) -> Result<()>
where
    F: Fn(usize, usize) -> f64,
{
    header.check()?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(HEADER_FILE), serde_json::to_string_pretty(header)? + "\n")?;
    let n = header.width * header.height;
    let mut out = BufWriter::new(fs::File::create(dir.join(PLANES_FILE))?);
    for c in 0..header.channels.len() {
        for p in 0..n {
            out.write_all(&(value(c, p) as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a plane stack, returning the header and one `Vec` per channel.
pub fn read_planes(dir: &Path) -> Result<(PlaneHeader, Vec<Vec<f64>>)> {
    let header: PlaneHeader = serde_json::from_str(&fs::read_to_string(dir.join(HEADER_FILE))?)?;
    header.check()?;
    let bytes = fs::read(dir.join(PLANES_FILE))?;
    let n = header.width * header.height;
    let expected = n * header.channels.len() * 4;
    if bytes.len() != expected {
        return Err(Error::data(format!(
            "{} holds {} bytes, header implies {}",
            PLANES_FILE,
            bytes.len(),
            expected
        )));
    }
    let planes = bytes
        .chunks_exact(n * 4)
        .map(|plane| {
            plane
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect()
        })
        .collect();
    Ok((header, planes))
}
