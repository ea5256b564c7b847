//! Mueller matrices, the polarimeter forward model, reconstruction and
//! calibration of the analyzer instrument matrix.

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planes::{read_planes, write_planes, PlaneHeader};

/// Pixels whose m11 falls at or below this are flagged invalid on normalization.
pub const M11_EPSILON: f64 = 1e-12;
/// Allowed excess of |mij| over 1 for a normalized physical matrix.
pub const PHYSICAL_TOLERANCE: f64 = 0.02;
/// Condition number above which a system matrix is reported as ill-conditioned.
pub const CONDITION_WARN: f64 = 1e6;

pub const MUELLER_CHANNELS: [&str; 16] = [
    "m11", "m12", "m13", "m14", "m21", "m22", "m23", "m24", "m31", "m32", "m33", "m34", "m41",
    "m42", "m43", "m44",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub fn new(s0: f64, s1: f64, s2: f64, s3: f64) -> Self {
        StokesVector { s0, s1, s2, s3 }
    }

    pub fn degree_of_polarization(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt() / self.s0
    }

    pub fn is_physical(&self) -> bool {
        self.s0 >= 0.0
            && self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3
                <= self.s0 * self.s0 + 1e-9
    }
}

/// A 4×4 real Mueller matrix. Element accessors use 1-based optical indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuellerMatrix(pub Matrix4<f64>);

impl MuellerMatrix {
    pub fn from_rows(rows: [[f64; 4]; 4]) -> Self {
        MuellerMatrix(Matrix4::from_fn(|r, c| rows[r][c]))
    }

    pub fn from_row_slice(m: &[f64]) -> Self {
        MuellerMatrix(Matrix4::from_row_slice(m))
    }

    pub fn identity() -> Self {
        MuellerMatrix(Matrix4::identity())
    }

    /// Element m_ij with 1-based indices.
    #[inline]
    pub fn m(&self, i: usize, j: usize) -> f64 {
        self.0[(i - 1, j - 1)]
    }

    pub fn to_row_array(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.0[(r, c)];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, k: f64) -> Self {
        MuellerMatrix(self.0 * k)
    }

    pub fn normalized(&self) -> Option<Self> {
        let m11 = self.0[(0, 0)];
        if !(m11 > M11_EPSILON) || !m11.is_finite() {
            return None;
        }
        Some(MuellerMatrix(self.0 / m11))
    }

    pub fn invalid() -> Self {
        MuellerMatrix(Matrix4::repeat(f64::NAN))
    }

    pub fn compose(&self, other: &MuellerMatrix) -> MuellerMatrix {
        MuellerMatrix(self.0 * other.0)
    }

    /// Ideal horizontal linear polarizer, ½·[[1,1,0,0],[1,1,0,0],0,0].
    pub fn horizontal_polarizer() -> Self {
        let mut m = Matrix4::zeros();
        m[(0, 0)] = 0.5;
        m[(0, 1)] = 0.5;
        m[(1, 0)] = 0.5;
        m[(1, 1)] = 0.5;
        MuellerMatrix(m)
    }

    /// Linear retarder with retardance `delta` and fast axis at `theta` (radians).
    pub fn linear_retarder(delta: f64, theta: f64) -> Self {
        let (c, s) = ((2.0 * theta).cos(), (2.0 * theta).sin());
        let (cd, sd) = (delta.cos(), delta.sin());
        MuellerMatrix::from_rows([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c * c + s * s * cd, c * s * (1.0 - cd), -s * sd],
            [0.0, c * s * (1.0 - cd), s * s + c * c * cd, c * sd],
            [0.0, s * sd, -c * sd, cd],
        ])
    }

    /// Circular retarder rotating the polarization plane by `psi`.
    pub fn rotator(psi: f64) -> Self {
        let (c, s) = ((2.0 * psi).cos(), (2.0 * psi).sin());
        MuellerMatrix::from_rows([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c, -s, 0.0],
            [0.0, s, c, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
    }

    /// Frame rotation by `theta`, used as R(-θ)·M·R(θ) for a rotated sample.
    pub fn frame_rotation(theta: f64) -> Self {
        let (c, s) = ((2.0 * theta).cos(), (2.0 * theta).sin());
        MuellerMatrix::from_rows([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c, s, 0.0],
            [0.0, -s, c, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
    }

    /// Sample rotated in-plane by `theta`.
    pub fn rotated(&self, theta: f64) -> Self {
        MuellerMatrix(
            MuellerMatrix::frame_rotation(-theta).0 * self.0 * MuellerMatrix::frame_rotation(theta).0,
        )
    }

    /// Normalized diattenuator with diattenuation vector `d` (|d| < 1).
    pub fn diattenuator(d: Vector3<f64>) -> Self {
        let dn = d.norm();
        let root = (1.0 - dn * dn).max(0.0).sqrt();
        let block = if dn > 0.0 {
            let u = d / dn;
            Matrix3::identity() * root + u * u.transpose() * (1.0 - root)
        } else {
            Matrix3::identity()
        };
        MuellerMatrix(embed(1.0, d.transpose(), d, block))
    }

    /// Linear diattenuator with diattenuation `d` along axis `theta`.
    pub fn linear_diattenuator(d: f64, theta: f64) -> Self {
        MuellerMatrix::diattenuator(Vector3::new(d * (2.0 * theta).cos(), d * (2.0 * theta).sin(), 0.0))
    }

    /// Depolarizer with polarizance `p` and symmetric 3×3 block `block`.
    pub fn depolarizer(p: Vector3<f64>, block: Matrix3<f64>) -> Self {
        MuellerMatrix(embed(1.0, Vector3::zeros().transpose(), p, block))
    }

    pub fn diagonal(a: f64, b: f64, c: f64, d: f64) -> Self {
        MuellerMatrix(Matrix4::from_diagonal(&nalgebra::Vector4::new(a, b, c, d)))
    }
}

pub(crate) fn embed(
    m11: f64,
    row: nalgebra::RowVector3<f64>,
    col: Vector3<f64>,
    block: Matrix3<f64>,
) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m[(0, 0)] = m11;
    for k in 0..3 {
        m[(0, k + 1)] = row[k];
        m[(k + 1, 0)] = col[k];
        for l in 0..3 {
            m[(k + 1, l + 1)] = block[(k, l)];
        }
    }
    m
}

/// Analyzer instrument matrix mapping Stokes vectors to detector intensities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstrumentMatrix(pub Matrix4<f64>);

impl InstrumentMatrix {
    pub fn identity() -> Self {
        InstrumentMatrix(Matrix4::identity())
    }
}

/// The four generator states as the columns of `[S_in]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsgSequence {
    pub states: [StokesVector; 4],
}

/// Default quarter-wave plate angles (degrees) behind a horizontal polarizer.
pub const DEFAULT_PSG_ANGLES_DEG: [f64; 4] = [-45.0, 0.0, 30.0, 60.0];

impl PsgSequence {
    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        let col = |j: usize| StokesVector::new(m[(0, j)], m[(1, j)], m[(2, j)], m[(3, j)]);
        PsgSequence { states: [col(0), col(1), col(2), col(3)] }
    }

    pub fn identity() -> Self {
        PsgSequence::from_matrix(&Matrix4::identity())
    }

    /// Horizontal polarizer followed by a quarter-wave plate at each angle.
    pub fn polarizer_quarter_wave(angles_deg: [f64; 4]) -> Self {
        let states = angles_deg.map(|a| {
            let t = a.to_radians();
            let (c, s) = ((2.0 * t).cos(), (2.0 * t).sin());
            StokesVector::new(1.0, c * c, c * s, s)
        });
        PsgSequence { states }
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|r, c| {
            let s = &self.states[c];
            [s.s0, s.s1, s.s2, s.s3][r]
        })
    }
}

impl Default for PsgSequence {
    fn default() -> Self {
        PsgSequence::polarizer_quarter_wave(DEFAULT_PSG_ANGLES_DEG)
    }
}

/// Ratio of the extreme singular values; infinite for a singular matrix.
pub fn condition_number(m: &Matrix4<f64>) -> f64 {
    if !m.iter().all(|v| v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= max * 1e-14 || min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn checked_inverse(m: &Matrix4<f64>, what: &str) -> Result<Matrix4<f64>> {
    let cond = condition_number(m);
    if !cond.is_finite() {
        return Err(Error::Calibration(format!("{what} is singular")));
    }
    if cond > CONDITION_WARN {
        log::warn!("{what} is ill-conditioned (condition number {cond:.3e})");
    }
    m.try_inverse()
        .ok_or_else(|| Error::Calibration(format!("{what} is singular")))
}

/// Detector intensities for a sample: `I = A · M · [S_in]`, column j for PSG state j.
pub fn simulate_measurement(
    m: &MuellerMatrix,
    psg: &PsgSequence,
    a: &InstrumentMatrix,
) -> Result<Matrix4<f64>> {
    checked_inverse(&psg.matrix(), "PSG state matrix")?;
    checked_inverse(&a.0, "instrument matrix")?;
    Ok(a.0 * m.0 * psg.matrix())
}

/// Recovers `M = A⁻¹ · I · [S_in]⁻¹`.
pub fn reconstruct_mueller(
    intensities: &Matrix4<f64>,
    psg: &PsgSequence,
    a: &InstrumentMatrix,
) -> Result<MuellerMatrix> {
    let a_inv = checked_inverse(&a.0, "instrument matrix")?;
    let s_inv = checked_inverse(&psg.matrix(), "PSG state matrix")?;
    reconstruct_with_inverses(intensities, &a_inv, &s_inv)
}

fn reconstruct_with_inverses(
    intensities: &Matrix4<f64>,
    a_inv: &Matrix4<f64>,
    s_inv: &Matrix4<f64>,
) -> Result<MuellerMatrix> {
    if !intensities.iter().all(|v| v.is_finite()) {
        return Err(Error::data("non-finite detector intensity"));
    }
    Ok(MuellerMatrix(a_inv * intensities * s_inv))
}

/// Least-squares instrument matrix with its fit diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub matrix: InstrumentMatrix,
    /// Frobenius norm of the stacked residual.
    pub residual: f64,
    pub rank: usize,
}

/// Fits `Â` minimizing `Σ‖I_k − Â·M_k·[S_in]‖²_F` over the standard samples.
///
/// At least two distinct standards are required and the stacked system
/// `[M_1 S_in | M_2 S_in | …]` must have rank 4.
pub fn calibrate_psa(
    standards: &[(MuellerMatrix, Matrix4<f64>)],
    psg: &PsgSequence,
) -> Result<Calibration> {
    if standards.len() < 2 {
        return Err(Error::Calibration(format!(
            "need at least 2 standard samples, got {}",
            standards.len()
        )));
    }
    let distinct = standards
        .iter()
        .skip(1)
        .any(|(m, _)| (m.0 - standards[0].0 .0).abs().max() > 1e-12);
    if !distinct {
        return Err(Error::Calibration(
            "standard samples must include at least 2 distinct matrices".into(),
        ));
    }
    let s = psg.matrix();
    let mut gram = Matrix4::<f64>::zeros();
    let mut cross = Matrix4::<f64>::zeros();
    for (m, i) in standards {
        if !i.iter().all(|v| v.is_finite()) || !m.is_finite() {
            return Err(Error::data("non-finite calibration measurement"));
        }
        let b = m.0 * s;
        gram += b * b.transpose();
        cross += i * b.transpose();
    }
    let sv = gram.singular_values();
    let rank = sv.iter().filter(|&&v| v > sv.max() * 1e-12).count();
    if rank < 4 {
        return Err(Error::Calibration(format!(
            "stacked standard system has rank {rank}, need 4"
        )));
    }
    let gram_inv = checked_inverse(&gram, "calibration normal matrix")?;
    let a = cross * gram_inv;
    let residual = standards
        .iter()
        .map(|(m, i)| (i - a * m.0 * s).norm_squared())
        .sum::<f64>()
        .sqrt();
    Ok(Calibration { matrix: InstrumentMatrix(a), residual, rank })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalDiagnostics {
    pub max_excess: f64,
    pub finite: bool,
    pub pass: bool,
}

/// Quality gate on a normalized matrix: every |mij| ≤ 1 + 0.02.
pub fn validate_physical(m: &MuellerMatrix) -> PhysicalDiagnostics {
    let finite = m.is_finite();
    let max_excess = if finite {
        m.0.iter().map(|v| v.abs() - 1.0).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    PhysicalDiagnostics { max_excess, finite, pass: finite && max_excess <= PHYSICAL_TOLERANCE }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionMeta {
    pub magnification: String,
    pub wavelength_nm: f64,
}

impl Default for AcquisitionMeta {
    fn default() -> Self {
        AcquisitionMeta { magnification: "4x".into(), wavelength_nm: 633.0 }
    }
}

/// An H×W grid of Mueller matrices, row-major. Invalid pixels are all-NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct MuellerImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<MuellerMatrix>,
    pub meta: AcquisitionMeta,
}

impl MuellerImage {
    pub fn new(width: usize, height: usize, pixels: Vec<MuellerMatrix>, meta: AcquisitionMeta) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::data(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(MuellerImage { width, height, pixels, meta })
    }

    pub fn filled(width: usize, height: usize, m: MuellerMatrix) -> Self {
        MuellerImage { width, height, pixels: vec![m; width * height], meta: AcquisitionMeta::default() }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &MuellerMatrix {
        &self.pixels[y * self.width + x]
    }

    /// One element plane, e.g. `plane(1, 1)` is the m11 intensity image.
    pub fn plane(&self, i: usize, j: usize) -> Vec<f64> {
        self.pixels.iter().map(|m| m.m(i, j)).collect()
    }

    pub fn is_valid(&self, idx: usize) -> bool {
        self.pixels[idx].is_finite()
    }

    /// Divides every plane by m11. Pixels with m11 ≤ ε become invalid; the
    /// number of such pixels is returned alongside the image.
    pub fn normalize_by_m11(&self) -> (MuellerImage, usize) {
        let out: Vec<MuellerMatrix> = self
            .pixels
            .par_iter()
            .map(|m| m.normalized().unwrap_or_else(MuellerMatrix::invalid))
            .collect();
        let flagged = out.iter().filter(|m| !m.is_finite()).count();
        (
            MuellerImage { width: self.width, height: self.height, pixels: out, meta: self.meta.clone() },
            flagged,
        )
    }

    pub fn header(&self) -> PlaneHeader {
        let mut h = PlaneHeader::new(
            "mueller",
            self.width,
            self.height,
            MUELLER_CHANNELS.iter().map(|s| s.to_string()).collect(),
        );
        h.wavelength_nm = Some(self.meta.wavelength_nm);
        h.magnification = Some(self.meta.magnification.clone());
        h
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_planes(dir, &self.header(), |c, p| self.pixels[p].0[(c / 4, c % 4)])
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let (h, planes) = read_planes(dir)?;
        if h.channels != MUELLER_CHANNELS {
            return Err(Error::data("Mueller image channels must be m11..m44 in row order"));
        }
        let pixels = (0..h.width * h.height)
            .map(|p| MuellerMatrix(Matrix4::from_fn(|r, c| planes[r * 4 + c][p])))
            .collect();
        let meta = AcquisitionMeta {
            magnification: h.magnification.clone().unwrap_or_default(),
            wavelength_nm: h.wavelength_nm.unwrap_or(f64::NAN),
        };
        MuellerImage::new(h.width, h.height, pixels, meta)
    }
}

/// Per-pixel 4×4 detector intensities, column j for PSG state j.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Matrix4<f64>>,
}

impl IntensityImage {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let channels = (1..=4)
            .flat_map(|d| (1..=4).map(move |s| format!("i{d}{s}")))
            .collect();
        let h = PlaneHeader::new("intensity", self.width, self.height, channels);
        write_planes(dir, &h, |c, p| self.pixels[p][(c / 4, c % 4)])
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let (h, planes) = read_planes(dir)?;
        if h.channels.len() != 16 {
            return Err(Error::data("intensity image needs 16 channels"));
        }
        let pixels = (0..h.width * h.height)
            .map(|p| Matrix4::from_fn(|r, c| planes[r * 4 + c][p]))
            .collect();
        Ok(IntensityImage { width: h.width, height: h.height, pixels })
    }

    pub fn simulate(img: &MuellerImage, psg: &PsgSequence, a: &InstrumentMatrix) -> Result<Self> {
        let pixels = img
            .pixels
            .iter()
            .map(|m| simulate_measurement(m, psg, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(IntensityImage { width: img.width, height: img.height, pixels })
    }
}

/// One global instrument matrix or a per-pixel field of them.
#[derive(Debug, Clone, PartialEq)]
pub enum InstrumentField {
    Global(InstrumentMatrix),
    PerPixel { width: usize, height: usize, matrices: Vec<InstrumentMatrix> },
}

/// Pixel-wise calibration from images of the standard samples.
pub fn calibrate_psa_per_pixel(
    standards: &[(MuellerMatrix, IntensityImage)],
    psg: &PsgSequence,
) -> Result<(InstrumentField, f64)> {
    let first = standards
        .first()
        .ok_or_else(|| Error::Calibration("no standard samples".into()))?;
    let (w, h) = (first.1.width, first.1.height);
    if standards.iter().any(|(_, i)| i.width != w || i.height != h) {
        return Err(Error::data("standard images differ in size"));
    }
    let fits = (0..w * h)
        .into_par_iter()
        .map(|p| {
            let per: Vec<(MuellerMatrix, Matrix4<f64>)> =
                standards.iter().map(|(m, img)| (*m, img.pixels[p])).collect();
            calibrate_psa(&per, psg)
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = fits.iter().map(|c| c.residual).fold(0.0, f64::max);
    let matrices = fits.into_iter().map(|c| c.matrix).collect();
    Ok((InstrumentField::PerPixel { width: w, height: h, matrices }, worst))
}

/// Pixel-wise reconstruction of a full intensity image.
pub fn reconstruct_image(
    intensities: &IntensityImage,
    psg: &PsgSequence,
    instrument: &InstrumentField,
    meta: AcquisitionMeta,
) -> Result<MuellerImage> {
    let s_inv = checked_inverse(&psg.matrix(), "PSG state matrix")?;
    let pixels = match instrument {
        InstrumentField::Global(a) => {
            let a_inv = checked_inverse(&a.0, "instrument matrix")?;
            intensities
                .pixels
                .par_iter()
                .map(|i| reconstruct_with_inverses(i, &a_inv, &s_inv))
                .collect::<Result<Vec<_>>>()?
        }
        InstrumentField::PerPixel { width, height, matrices } => {
            if *width != intensities.width || *height != intensities.height {
                return Err(Error::data("instrument field size differs from intensity image"));
            }
            intensities
                .pixels
                .par_iter()
                .zip(matrices.par_iter())
                .map(|(i, a)| {
                    let a_inv = checked_inverse(&a.0, "instrument matrix")?;
                    reconstruct_with_inverses(i, &a_inv, &s_inv)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    MuellerImage::new(intensities.width, intensities.height, pixels, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qwp0() -> MuellerMatrix {
        MuellerMatrix::from_rows([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0, 0.0],
        ])
    }

    fn random_invertible(rng: &mut ChaCha8Rng) -> Matrix4<f64> {
        loop {
            let m = Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0)) + Matrix4::identity() * 1.5;
            if condition_number(&m) < 50.0 {
                return m;
            }
        }
    }

    #[test]
    fn identity_forward_model() {
        let i = simulate_measurement(&MuellerMatrix::identity(), &PsgSequence::identity(), &InstrumentMatrix::identity())
            .unwrap();
        assert_eq!(i, Matrix4::identity());
    }

    #[test]
    fn polarizer_forward_model() {
        let p = MuellerMatrix::horizontal_polarizer();
        let i = simulate_measurement(&p, &PsgSequence::identity(), &InstrumentMatrix::identity()).unwrap();
        assert_eq!(i, p.0);
    }

    #[test]
    fn quarter_wave_matches_closed_form() {
        let r = MuellerMatrix::linear_retarder(std::f64::consts::FRAC_PI_2, 0.0);
        assert!((r.0 - qwp0().0).abs().max() < 1e-15);
    }

    #[test]
    fn quarter_wave_round_trip_default_psg() {
        let psg = PsgSequence::default();
        let a = InstrumentMatrix::identity();
        let i = simulate_measurement(&qwp0(), &psg, &a).unwrap();
        let m = reconstruct_mueller(&i, &psg, &a).unwrap();
        assert!((m.0 - qwp0().0).abs().max() < 1e-10);
    }

    #[test]
    fn reconstruct_identity() {
        let m = reconstruct_mueller(&Matrix4::identity(), &PsgSequence::identity(), &InstrumentMatrix::identity())
            .unwrap();
        assert_eq!(m, MuellerMatrix::identity());
    }

    #[test]
    fn zero_row_instrument_is_singular() {
        let mut a = Matrix4::identity();
        a.row_mut(2).fill(0.0);
        let err = reconstruct_mueller(&Matrix4::identity(), &PsgSequence::identity(), &InstrumentMatrix(a));
        assert!(matches!(err, Err(Error::Calibration(_))));
        let err = simulate_measurement(&MuellerMatrix::identity(), &PsgSequence::identity(), &InstrumentMatrix(a));
        assert!(matches!(err, Err(Error::Calibration(_))));
    }

    #[test]
    fn non_finite_intensity_is_data_error() {
        let mut i = Matrix4::identity();
        i[(1, 2)] = f64::NAN;
        let err = reconstruct_mueller(&i, &PsgSequence::identity(), &InstrumentMatrix::identity());
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn default_psg_is_well_conditioned() {
        let psg = PsgSequence::default();
        assert!(condition_number(&psg.matrix()) < 10.0);
        assert!(psg.states.iter().all(|s| (s.degree_of_polarization() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn calibration_identity_instrument() {
        let psg = PsgSequence::default();
        let a = InstrumentMatrix::identity();
        let standards: Vec<_> = [MuellerMatrix::identity(), qwp0()]
            .iter()
            .map(|m| (*m, simulate_measurement(m, &psg, &a).unwrap()))
            .collect();
        let cal = calibrate_psa(&standards, &psg).unwrap();
        assert!((cal.matrix.0 - Matrix4::identity()).abs().max() < 1e-10);
        assert!(cal.residual < 1e-10);
        assert_eq!(cal.rank, 4);
    }

    #[test]
    fn calibration_recovers_random_instrument() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let psg = PsgSequence::default();
        for _ in 0..20 {
            let a = InstrumentMatrix(random_invertible(&mut rng));
            let standards: Vec<_> = [MuellerMatrix::identity(), qwp0()]
                .iter()
                .map(|m| (*m, simulate_measurement(m, &psg, &a).unwrap()))
                .collect();
            let cal = calibrate_psa(&standards, &psg).unwrap();
            assert!((cal.matrix.0 - a.0).abs().max() < 1e-8);
        }
    }

    #[test]
    fn calibration_air_only_rejected() {
        let psg = PsgSequence::default();
        let a = InstrumentMatrix::identity();
        let air = MuellerMatrix::identity();
        let one = vec![(air, simulate_measurement(&air, &psg, &a).unwrap())];
        assert!(matches!(calibrate_psa(&one, &psg), Err(Error::Calibration(_))));
        let twice = vec![one[0], one[0]];
        assert!(matches!(calibrate_psa(&twice, &psg), Err(Error::Calibration(_))));
    }

    #[test]
    fn calibration_rank_deficient_stack() {
        // Two polarizers share a rank-1 image: the stacked system has rank < 4.
        let psg = PsgSequence::default();
        let a = InstrumentMatrix::identity();
        let p = MuellerMatrix::horizontal_polarizer();
        let stds = vec![
            (p, simulate_measurement(&p, &psg, &a).unwrap()),
            (p.scaled(0.5), simulate_measurement(&p.scaled(0.5), &psg, &a).unwrap()),
        ];
        let err = calibrate_psa(&stds, &psg).unwrap_err();
        assert!(err.to_string().contains("rank"));
    }

    #[test]
    fn calibration_residual_grows_with_noise() {
        let psg = PsgSequence::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = InstrumentMatrix(random_invertible(&mut rng));
        let mats = [MuellerMatrix::identity(), qwp0(), MuellerMatrix::linear_retarder(1.0, 0.4)];
        let noise: Vec<Matrix4<f64>> =
            (0..mats.len()).map(|_| Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let mut last = -1.0;
        for sigma in [0.0, 1e-4, 1e-3, 1e-2, 1e-1] {
            let stds: Vec<_> = mats
                .iter()
                .zip(&noise)
                .map(|(m, n)| (*m, simulate_measurement(m, &psg, &a).unwrap() + n * sigma))
                .collect();
            let cal = calibrate_psa(&stds, &psg).unwrap();
            if sigma == 0.0 {
                assert!(cal.residual <= 1e-10);
            }
            assert!(cal.residual > last);
            last = cal.residual;
        }
    }

    #[test]
    fn normalization_scales_and_flags() {
        let mut img = MuellerImage::filled(3, 2, MuellerMatrix::identity().scaled(2.0));
        let (n, flagged) = img.normalize_by_m11();
        assert_eq!(flagged, 0);
        assert!(n.pixels.iter().all(|m| *m == MuellerMatrix::identity()));

        img.pixels[4] = MuellerMatrix::diagonal(0.0, 0.3, 0.3, 0.3);
        let (n, flagged) = img.normalize_by_m11();
        assert_eq!(flagged, 1);
        assert!(!n.is_valid(4));
        assert!(n.is_valid(3));
        let (again, flagged_again) = n.normalize_by_m11();
        assert_eq!(flagged_again, 1);
        for (a, b) in again.pixels.iter().zip(&n.pixels) {
            assert!(a == b || (!a.is_finite() && !b.is_finite()));
        }
    }

    #[test]
    fn normalized_m11_plane_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pixels = (0..64)
            .map(|_| MuellerMatrix(Matrix4::from_fn(|_, _| rng.random_range(0.1..2.0))))
            .collect();
        let img = MuellerImage::new(8, 8, pixels, AcquisitionMeta::default()).unwrap();
        let (n, _) = img.normalize_by_m11();
        assert!(n.plane(1, 1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn physical_validation() {
        let d = validate_physical(&MuellerMatrix::identity());
        assert!(d.pass && d.max_excess == 0.0);
        let mut m = MuellerMatrix::identity();
        m.0[(0, 1)] = 1.5;
        let d = validate_physical(&m);
        assert!(!d.pass);
        assert!((d.max_excess - 0.5).abs() < 1e-15);
        assert!(!validate_physical(&MuellerMatrix::invalid()).pass);
    }

    #[test]
    fn noisy_retarder_passes_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = rand_distr::Normal::new(0.0, 0.005).unwrap();
        for _ in 0..200 {
            let r = MuellerMatrix::linear_retarder(rng.random_range(0.0..3.1), rng.random_range(0.0..3.1));
            let noisy = MuellerMatrix(r.0.map(|v| v + rng.sample(normal)));
            assert!(validate_physical(&noisy.normalized().unwrap()).pass);
        }
    }

    #[test]
    fn per_pixel_calibration_and_reconstruction() {
        let psg = PsgSequence::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mats: Vec<InstrumentMatrix> = (0..6).map(|_| InstrumentMatrix(random_invertible(&mut rng))).collect();
        let standards: Vec<(MuellerMatrix, IntensityImage)> = [MuellerMatrix::identity(), qwp0()]
            .iter()
            .map(|m| {
                let pixels = mats.iter().map(|a| simulate_measurement(m, &psg, a).unwrap()).collect();
                (*m, IntensityImage { width: 3, height: 2, pixels })
            })
            .collect();
        let (field, worst) = calibrate_psa_per_pixel(&standards, &psg).unwrap();
        assert!(worst < 1e-9);
        let sample = MuellerMatrix::linear_retarder(0.7, 0.2);
        let pixels = mats.iter().map(|a| simulate_measurement(&sample, &psg, a).unwrap()).collect();
        let intens = IntensityImage { width: 3, height: 2, pixels };
        let img = reconstruct_image(&intens, &psg, &field, AcquisitionMeta::default()).unwrap();
        for m in &img.pixels {
            assert!((m.0 - sample.0).abs().max() < 1e-9);
        }
    }

    #[test]
    fn stokes_physicality() {
        assert!(StokesVector::new(1.0, 1.0, 0.0, 0.0).is_physical());
        assert!(!StokesVector::new(1.0, 1.0, 0.5, 0.0).is_physical());
        assert!(!StokesVector::new(-1.0, 0.0, 0.0, 0.0).is_physical());
    }
}
