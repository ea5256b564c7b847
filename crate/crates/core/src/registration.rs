//! Control-point affine registration and inverse-mapping warps.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{LabelMask, Plane, BACKGROUND};

const SINGULAR_DET: f64 = 1e-12;
const COLLINEAR_RATIO: f64 = 1e-9;

/// `[a b tx; c d ty]`, mapping moving `(x, y)` to fixed coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Affine2D {
    pub matrix: [[f64; 3]; 2],
}

impl Affine2D {
    pub fn identity() -> Self {
        Affine2D { matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Affine2D { matrix: [[1.0, 0.0, tx], [0.0, 1.0, ty]] }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let [[a, b, tx], [c, d, ty]] = self.matrix;
        (a * x + b * y + tx, c * x + d * y + ty)
    }

    pub fn det(&self) -> f64 {
        let [[a, b, _], [c, d, _]] = self.matrix;
        a * d - b * c
    }

    pub fn inverse(&self) -> Result<Affine2D> {
        let det = self.det();
        if !det.is_finite() || det.abs() < SINGULAR_DET || self.matrix.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Registration(format!("affine transform is singular (det {det:e})")));
        }
        let [[a, b, tx], [c, d, ty]] = self.matrix;
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Ok(Affine2D { matrix: [[ia, ib, -(ia * tx + ib * ty)], [ic, id, -(ic * tx + id * ty)]] })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub moving_x: f64,
    pub moving_y: f64,
    pub fixed_x: f64,
    pub fixed_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPoints {
    pub pairs: Vec<ControlPoint>,
}

impl ControlPoints {
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let pairs = rdr.deserialize().collect::<std::result::Result<Vec<ControlPoint>, _>>()?;
        Ok(ControlPoints { pairs })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for p in &self.pairs {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub transform: Affine2D,
    pub rms_residual: f64,
}

/// Least-squares affine fit of moving onto fixed control points.
pub fn fit_affine(cp: &ControlPoints) -> Result<AffineFit> {
    let n = cp.pairs.len();
    if n < 3 {
        return Err(Error::Registration(format!("{n} control point pairs, need at least 3")));
    }
    let (mx, my) = cp.pairs.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.moving_x, sy + p.moving_y));
    let (mx, my) = (mx / n as f64, my / n as f64);
    let centered = DMatrix::from_fn(n, 2, |r, c| {
        if c == 0 { cp.pairs[r].moving_x - mx } else { cp.pairs[r].moving_y - my }
    });
    let sv = centered.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if !(hi > 0.0) || lo / hi < COLLINEAR_RATIO {
        return Err(Error::Registration("moving control points are collinear".into()));
    }
    // Centering keeps the design well conditioned; the offset is restored below.
    let design = DMatrix::from_fn(n, 3, |r, c| match c {
        0 => cp.pairs[r].moving_x - mx,
        1 => cp.pairs[r].moving_y - my,
        _ => 1.0,
    });
    let svd = design.svd(true, true);
    let solve = |target: DVector<f64>| -> Result<DVector<f64>> {
        svd.solve(&target, 1e-14).map_err(|e| Error::Registration(e.to_string()))
    };
    let rx = solve(DVector::from_iterator(n, cp.pairs.iter().map(|p| p.fixed_x)))?;
    let ry = solve(DVector::from_iterator(n, cp.pairs.iter().map(|p| p.fixed_y)))?;
    let transform = Affine2D {
        matrix: [
            [rx[0], rx[1], rx[2] - rx[0] * mx - rx[1] * my],
            [ry[0], ry[1], ry[2] - ry[0] * mx - ry[1] * my],
        ],
    };
    let sq: f64 = cp
        .pairs
        .iter()
        .map(|p| {
            let (x, y) = transform.apply(p.moving_x, p.moving_y);
            (x - p.fixed_x).powi(2) + (y - p.fixed_y).powi(2)
        })
        .sum();
    Ok(AffineFit { transform, rms_residual: (sq / n as f64).sqrt() })
}

fn bilinear(img: &Plane, sx: f64, sy: f64) -> f64 {
    const EDGE: f64 = 1e-9;
    let (w, h) = (img.width, img.height);
    if !(sx >= -EDGE && sy >= -EDGE && sx <= (w - 1) as f64 + EDGE && sy <= (h - 1) as f64 + EDGE) {
        return 0.0;
    }
    let sx = sx.clamp(0.0, (w - 1) as f64);
    let sy = sy.clamp(0.0, (h - 1) as f64);
    let x0 = (sx.floor() as usize).min(w.saturating_sub(2));
    let y0 = (sy.floor() as usize).min(h.saturating_sub(2));
    let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    // Zero weights skip the neighbor so exact grid hits stay exact.
    let lerp = |a: f64, b: f64, f: f64| if f == 0.0 { a } else { a * (1.0 - f) + b * f };
    let top = lerp(img.at(x0, y0), img.at(x1, y0), fx);
    if fy == 0.0 {
        return top;
    }
    lerp(top, lerp(img.at(x0, y1), img.at(x1, y1), fx), fy)
}

/// Inverse-mapping warp onto an `out_w`×`out_h` fixed grid, bilinear, zero fill.
pub fn warp_image(img: &Plane, t: &Affine2D, out_w: usize, out_h: usize) -> Result<Plane> {
    let inv = t.inverse()?;
    let mut data = vec![0.0; out_w * out_h];
    data.par_chunks_mut(out_w.max(1)).enumerate().for_each(|(y, row)| {
        for (x, v) in row.iter_mut().enumerate() {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            *v = bilinear(img, sx, sy);
        }
    });
    Plane::new(out_w, out_h, data)
}

/// Nearest-neighbor counterpart of [`warp_image`] for label masks.
pub fn transfer_mask(mask: &LabelMask, t: &Affine2D, out_w: usize, out_h: usize) -> Result<LabelMask> {
    let inv = t.inverse()?;
    let mut labels = vec![BACKGROUND; out_w * out_h];
    labels.par_chunks_mut(out_w.max(1)).enumerate().for_each(|(y, row)| {
        for (x, v) in row.iter_mut().enumerate() {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            let (rx, ry) = (sx.round(), sy.round());
            if rx >= 0.0 && ry >= 0.0 && (rx as usize) < mask.width && (ry as usize) < mask.height {
                *v = mask.at(rx as usize, ry as usize);
            }
        }
    });
    LabelMask::new(out_w, out_h, labels)
}
