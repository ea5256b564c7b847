//! Polarimetry basis parameters decoded from a normalized Mueller matrix.
//!
//! Four families are computed per pixel: the Lu-Chipman polar decomposition,
//! the Mueller matrix transformation (MMT) parameters, the rotation
//! invariants and the linear retarder / diattenuator identity residuals.
//!
//! | name        | definition (1-based elements of the normalized matrix)           |
//! |-------------|------------------------------------------------------------------|
//! | mmpd_D      | √(m12²+m13²+m14²)                                                |
//! | mmpd_delta  | arccos(√((R22+R33)²+(R32−R23)²) − 1) of the retarder factor M_R  |
//! | mmpd_psi    | ½·atan2(R32−R23, R22+R33), in (−π/2, π/2]                        |
//! | mmpd_Delta  | 1 − \|tr(m_Δ)\|/3 of the depolarizer block                       |
//! | mmt_A       | 2·b·t1/(b²+t1²), 0 when b = t1 = 0                               |
//! | mmt_b       | ½(m22+m33)                                                       |
//! | mmt_beta    | ½(m23−m32)                                                       |
//! | mmt_t1      | ½√((m22−m33)²+(m23+m32)²)                                        |
//! | ri_DL       | √(m12²+m13²)                                                     |
//! | ri_PL       | √(m21²+m31²)                                                     |
//! | ri_DC       | m14                                                              |
//! | ri_PC       | m41                                                              |
//! | ri_rL       | √(m24²+m34²)                                                     |
//! | ri_qL       | √(m42²+m43²)                                                     |
//! | ri_kC       | m44                                                              |
//! | id_P1..P4   | m22+m33−1−m44, m23−m32, m24+m42, m34+m43 (zero on linear retarders) |
//! | id_P5..P8   | m12−m21, m13−m31, m14, m41 (zero on linear diattenuators)       |
//!
//! "Polarizance b" follows the MMT convention ½(m22+m33) rather than the
//! magnitude of the polarizance vector.

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mueller::{embed, MuellerImage, MuellerMatrix};
use crate::planes::{read_planes, write_planes, PlaneHeader};

pub const PBP_COUNT: usize = 23;

pub const PBP_NAMES: [&str; PBP_COUNT] = [
    "mmpd_D", "mmpd_delta", "mmpd_psi", "mmpd_Delta", "mmt_A", "mmt_b", "mmt_beta", "mmt_t1",
    "ri_DL", "ri_PL", "ri_DC", "ri_PC", "ri_rL", "ri_qL", "ri_kC", "id_P1", "id_P2", "id_P3",
    "id_P4", "id_P5", "id_P6", "id_P7", "id_P8",
];

/// Diattenuation at or above `1 − DIATTENUATION_LIMIT` switches to a pseudo-inverse.
pub const DIATTENUATION_LIMIT: f64 = 1e-9;

fn check_finite(m: &MuellerMatrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::data("non-finite Mueller matrix"))
    }
}

/// Factors of `M = M_Δ · M_R · M_D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LuChipman {
    pub depolarizer: Matrix4<f64>,
    pub retarder: Matrix4<f64>,
    pub diattenuator: Matrix4<f64>,
    /// Set when the diattenuator was inverted through its pseudo-inverse.
    pub singular_diattenuator: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mmpd {
    pub diattenuation: f64,
    pub linear_retardance: f64,
    pub optical_rotation: f64,
    pub depolarization: f64,
    pub singular_diattenuator: bool,
}

/// Lu-Chipman polar decomposition of a normalized matrix.
pub fn lu_chipman(m: &MuellerMatrix) -> Result<LuChipman> {
    check_finite(m)?;
    let m = m.normalized().ok_or_else(|| Error::data("m11 must be positive"))?;
    let d = Vector3::new(m.m(1, 2), m.m(1, 3), m.m(1, 4));
    let dn = d.norm();
    let md = MuellerMatrix::diattenuator(if dn > 1.0 { d / dn } else { d }).0;
    let singular = dn >= 1.0 - DIATTENUATION_LIMIT;
    let md_inv = if singular {
        md.pseudo_inverse(1e-12).map_err(|e| Error::data(e.to_string()))?
    } else {
        md.try_inverse().ok_or_else(|| Error::data("diattenuator not invertible"))?
    };
    let mp = m.0 * md_inv;
    let p_delta = Vector3::new(mp[(1, 0)], mp[(2, 0)], mp[(3, 0)]);
    let block: Matrix3<f64> = mp.fixed_view::<3, 3>(1, 1).into_owned();

    // Polar decomposition of the 3×3 block via its SVD: block = mΔ·mR with
    // mΔ = ±UΣUᵀ symmetric and mR = ±UVᵀ a proper rotation.
    let svd = block.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut rot = u * v_t;
    let mut sym = u * Matrix3::from_diagonal(&svd.singular_values) * u.transpose();
    if rot.determinant() < 0.0 {
        rot = -rot;
        sym = -sym;
    }
    Ok(LuChipman {
        depolarizer: embed(1.0, Vector3::zeros().transpose(), p_delta, sym),
        retarder: embed(1.0, Vector3::zeros().transpose(), Vector3::zeros(), rot),
        diattenuator: md,
        singular_diattenuator: singular,
    })
}

/// Diattenuation, linear retardance, optical rotation and depolarization.
pub fn mmpd(m: &MuellerMatrix) -> Result<Mmpd> {
    let lc = lu_chipman(m)?;
    let m = m.normalized().ok_or_else(|| Error::data("m11 must be positive"))?;
    let diattenuation = (m.m(1, 2).powi(2) + m.m(1, 3).powi(2) + m.m(1, 4).powi(2)).sqrt();
    let r = &lc.retarder;
    let (sum, diff) = (r[(1, 1)] + r[(2, 2)], r[(2, 1)] - r[(1, 2)]);
    let cos_delta = ((sum * sum + diff * diff).sqrt() - 1.0).clamp(-1.0, 1.0);
    let linear_retardance = cos_delta.acos();
    let mut optical_rotation = 0.5 * diff.atan2(sum);
    if optical_rotation <= -std::f64::consts::FRAC_PI_2 {
        optical_rotation += std::f64::consts::PI;
    }
    let tr = lc.depolarizer[(1, 1)] + lc.depolarizer[(2, 2)] + lc.depolarizer[(3, 3)];
    Ok(Mmpd {
        diattenuation,
        linear_retardance,
        optical_rotation,
        depolarization: 1.0 - tr.abs() / 3.0,
        singular_diattenuator: lc.singular_diattenuator,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mmt {
    pub anisotropy: f64,
    pub b: f64,
    pub beta: f64,
    pub t1: f64,
}

pub fn mmt(m: &MuellerMatrix) -> Result<Mmt> {
    check_finite(m)?;
    let (m22, m23, m32, m33) = (m.m(2, 2), m.m(2, 3), m.m(3, 2), m.m(3, 3));
    let t1 = 0.5 * ((m22 - m33).powi(2) + (m23 + m32).powi(2)).sqrt();
    let b = 0.5 * (m22 + m33);
    let denom = b * b + t1 * t1;
    let anisotropy = if denom == 0.0 { 0.0 } else { 2.0 * b * t1 / denom };
    Ok(Mmt { anisotropy, b, beta: 0.5 * (m23 - m32), t1 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationInvariants {
    pub dl: f64,
    pub pl: f64,
    pub dc: f64,
    pub pc: f64,
    pub rl: f64,
    pub ql: f64,
    pub kc: f64,
}

pub fn rotation_invariants(m: &MuellerMatrix) -> Result<RotationInvariants> {
    check_finite(m)?;
    let h = |a: f64, b: f64| a.hypot(b);
    Ok(RotationInvariants {
        dl: h(m.m(1, 2), m.m(1, 3)),
        pl: h(m.m(2, 1), m.m(3, 1)),
        dc: m.m(1, 4),
        pc: m.m(4, 1),
        rl: h(m.m(2, 4), m.m(3, 4)),
        ql: h(m.m(4, 2), m.m(4, 3)),
        kc: m.m(4, 4),
    })
}

/// Identity residuals P1..P8.
pub fn identity_params(m: &MuellerMatrix) -> Result<[f64; 8]> {
    check_finite(m)?;
    Ok([
        m.m(2, 2) + m.m(3, 3) - 1.0 - m.m(4, 4),
        m.m(2, 3) - m.m(3, 2),
        m.m(2, 4) + m.m(4, 2),
        m.m(3, 4) + m.m(4, 3),
        m.m(1, 2) - m.m(2, 1),
        m.m(1, 3) - m.m(3, 1),
        m.m(1, 4),
        m.m(4, 1),
    ])
}

/// The 23 parameters in canonical order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PbpVector(pub [f64; PBP_COUNT]);

impl PbpVector {
    pub fn invalid() -> Self {
        PbpVector([f64::NAN; PBP_COUNT])
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        PBP_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }

    /// Decodes all parameters; the matrix is normalized by m11 first.
    pub fn decode(m: &MuellerMatrix) -> Result<Self> {
        check_finite(m)?;
        let m = m.normalized().ok_or_else(|| Error::data("m11 must be positive"))?;
        let pd = mmpd(&m)?;
        let t = mmt(&m)?;
        let ri = rotation_invariants(&m)?;
        let id = identity_params(&m)?;
        let mut out = [0.0; PBP_COUNT];
        out[..8].copy_from_slice(&[
            pd.diattenuation,
            pd.linear_retardance,
            pd.optical_rotation,
            pd.depolarization,
            t.anisotropy,
            t.b,
            t.beta,
            t.t1,
        ]);
        out[8..15].copy_from_slice(&[ri.dl, ri.pl, ri.dc, ri.pc, ri.rl, ri.ql, ri.kc]);
        out[15..].copy_from_slice(&id);
        Ok(PbpVector(out))
    }
}

/// 23 parameter planes over an image, pixel-major in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct PbpImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<PbpVector>,
}

impl PbpImage {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &PbpVector {
        &self.pixels[y * self.width + x]
    }

    pub fn plane(&self, k: usize) -> Vec<f64> {
        self.pixels.iter().map(|p| p.0[k]).collect()
    }

    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f64>]) -> Result<Self> {
        if planes.len() != PBP_COUNT || planes.iter().any(|p| p.len() != width * height) {
            return Err(Error::data("PBP planes have inconsistent dimensions"));
        }
        let pixels = (0..width * height)
            .map(|i| PbpVector(std::array::from_fn(|k| planes[k][i])))
            .collect();
        Ok(PbpImage { width, height, pixels })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let h = PlaneHeader::new(
            "pbp",
            self.width,
            self.height,
            PBP_NAMES.iter().map(|s| s.to_string()).collect(),
        );
        write_planes(dir, &h, |c, p| self.pixels[p].0[c])
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let (h, planes) = read_planes(dir)?;
        if h.channels != PBP_NAMES {
            return Err(Error::data("PBP image channels must follow the canonical order"));
        }
        PbpImage::from_planes(h.width, h.height, &planes)
    }
}

/// Decodes every pixel; invalid pixels stay invalid in all 23 planes.
pub fn pbp_stack(img: &MuellerImage) -> Result<PbpImage> {
    if img.pixels.len() != img.width * img.height {
        return Err(Error::data(format!(
            "{} pixels for a {}x{} Mueller image",
            img.pixels.len(),
            img.width,
            img.height
        )));
    }
    let pixels = img
        .pixels
        .par_iter()
        .map(|m| if m.is_finite() { PbpVector::decode(m).unwrap_or_else(|_| PbpVector::invalid()) } else { PbpVector::invalid() })
        .collect();
    Ok(PbpImage { width: img.width, height: img.height, pixels })
}
