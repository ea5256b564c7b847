use nalgebra::{DMatrix, SymmetricEigen};

use super::emphasis::average;
use super::QuantizedPatch;
use crate::error::{Error, Result};

pub const GLCM_NAMES: [&str; 24] = [
    "Autocorrelation",
    "JointAverage",
    "ClusterProminence",
    "ClusterShade",
    "ClusterTendency",
    "Contrast",
    "Correlation",
    "DifferenceAverage",
    "DifferenceEntropy",
    "DifferenceVariance",
    "JointEnergy",
    "JointEntropy",
    "Imc1",
    "Imc2",
    "Idm",
    "Idmn",
    "Id",
    "Idn",
    "InverseVariance",
    "MaximumProbability",
    "SumAverage",
    "SumEntropy",
    "SumSquares",
    "MCC",
];

/// (dx, dy) for 0°, 45°, 90° and 135° at distance 1; y grows downward.
pub const GLCM_OFFSETS: [(isize, isize); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];

/// Symmetric co-occurrence counts for one offset, `levels × levels` row-major
/// with gray level `g` at index `g − 1`.
pub fn glcm_counts(q: &QuantizedPatch, offset: (isize, isize), counts: &mut Vec<f64>) {
    let ng = q.levels;
    counts.clear();
    counts.resize(ng * ng, 0.0);
    let (dx, dy) = offset;
    for y in 0..q.height {
        let ny = y as isize + dy;
        if ny < 0 || ny >= q.height as isize {
            continue;
        }
        for x in 0..q.width {
            let nx = x as isize + dx;
            if nx < 0 || nx >= q.width as isize {
                continue;
            }
            let a = q.at(x, y) as usize - 1;
            let b = q.at(nx as usize, ny as usize) as usize - 1;
            counts[a * ng + b] += 1.0;
            counts[b * ng + a] += 1.0;
        }
    }
}

/// Relative size below which HXY2 - HXY counts as zero.
const IMC2_ZERO: f64 = 1e-13;

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Features of one normalized symmetric GLCM.
pub fn glcm_matrix_features(p: &[f64], ng: usize) -> [f64; 24] {
    let lv = |k: usize| (k + 1) as f64;
    let mut px = vec![0.0; ng];
    let mut py = vec![0.0; ng];
    let mut sum_p = vec![0.0; 2 * ng + 1];
    let mut diff_p = vec![0.0; ng];
    for i in 0..ng {
        for j in 0..ng {
            let v = p[i * ng + j];
            px[i] += v;
            py[j] += v;
            sum_p[i + j + 2] += v;
            diff_p[i.abs_diff(j)] += v;
        }
    }
    let mu_x: f64 = (0..ng).map(|i| lv(i) * px[i]).sum();
    let mu_y: f64 = (0..ng).map(|j| lv(j) * py[j]).sum();
    let var_x: f64 = (0..ng).map(|i| (lv(i) - mu_x).powi(2) * px[i]).sum();
    let var_y: f64 = (0..ng).map(|j| (lv(j) - mu_y).powi(2) * py[j]).sum();

    let mut f = [0.0; 24];
    let (mut hxy, mut hxy1, mut hxy2, mut max_p) = (0.0, 0.0, 0.0, 0.0f64);
    let ngf = ng as f64;
    for i in 0..ng {
        for j in 0..ng {
            let v = p[i * ng + j];
            let pxy = px[i] * py[j];
            if pxy > 0.0 {
                hxy2 -= pxy * pxy.log2();
            }
            if v == 0.0 {
                continue;
            }
            let (a, b) = (lv(i), lv(j));
            let t = a + b - mu_x - mu_y;
            let d = a - b;
            f[0] += v * a * b;
            f[2] += v * t.powi(4);
            f[3] += v * t.powi(3);
            f[4] += v * t * t;
            f[5] += v * d * d;
            f[10] += v * v;
            hxy -= v * v.log2();
            hxy1 -= v * pxy.log2();
            f[14] += v / (1.0 + d * d);
            f[15] += v / (1.0 + d * d / (ngf * ngf));
            f[16] += v / (1.0 + d.abs());
            f[17] += v / (1.0 + d.abs() / ngf);
            max_p = max_p.max(v);
        }
    }
    f[1] = mu_x;
    let sigma = (var_x * var_y).sqrt();
    f[6] = if sigma > 0.0 { (f[0] - mu_x * mu_y) / sigma } else { 1.0 };
    let diff_avg: f64 = (0..ng).map(|k| k as f64 * diff_p[k]).sum();
    f[7] = diff_avg;
    f[8] = -(0..ng).map(|k| plogp(diff_p[k])).sum::<f64>();
    f[9] = (0..ng).map(|k| (k as f64 - diff_avg).powi(2) * diff_p[k]).sum();
    f[11] = hxy;
    let hx = -px.iter().map(|&v| plogp(v)).sum::<f64>();
    let hy = -py.iter().map(|&v| plogp(v)).sum::<f64>();
    let hmax = hx.max(hy);
    f[12] = if hmax > 0.0 { (hxy - hxy1) / hmax } else { 0.0 };
    // HXY2 - HXY is a KL divergence; rounding residue near 0 would be blown up by the sqrt
    let kl = hxy2 - hxy;
    let kl = if kl <= IMC2_ZERO * hxy2 { 0.0 } else { kl };
    f[13] = (1.0 - (-2.0 * kl).exp()).sqrt();
    f[18] = (1..ng).map(|k| diff_p[k] / (k * k) as f64).sum();
    f[19] = max_p;
    f[20] = (2..=2 * ng).map(|k| k as f64 * sum_p[k]).sum();
    f[21] = -(2..=2 * ng).map(|k| plogp(sum_p[k])).sum::<f64>();
    f[22] = var_x;
    f[23] = mcc(p, &px, &py, ng);
    f
}

/// Square root of the second-largest eigenvalue of
/// `Q(i,j) = Σ_k p(i,k)·p(j,k) / (px(i)·py(k))`, evaluated through the
/// similar symmetric matrix over the occupied gray levels.
fn mcc(p: &[f64], px: &[f64], py: &[f64], ng: usize) -> f64 {
    let occupied: Vec<usize> = (0..ng).filter(|&i| px[i] > 0.0).collect();
    let n = occupied.len();
    if n < 2 {
        return 1.0;
    }
    let s = DMatrix::from_fn(n, n, |a, b| {
        let (i, j) = (occupied[a], occupied[b]);
        let mut acc = 0.0;
        for k in 0..ng {
            if py[k] > 0.0 {
                acc += p[i * ng + k] * p[j * ng + k] / py[k];
            }
        }
        acc / (px[i] * px[j]).sqrt()
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[1].clamp(0.0, 1.0).sqrt()
}

/// 24 GLCM features averaged over the four offsets.
pub fn glcm_features(q: &QuantizedPatch) -> Result<[f64; 24]> {
    let ng = q.levels;
    let mut counts = Vec::with_capacity(ng * ng);
    let mut rows = Vec::with_capacity(GLCM_OFFSETS.len());
    for &off in &GLCM_OFFSETS {
        glcm_counts(q, off, &mut counts);
        let total: f64 = counts.iter().sum();
        if total == 0.0 {
            continue;
        }
        counts.iter_mut().for_each(|c| *c /= total);
        rows.push(glcm_matrix_features(&counts, ng));
    }
    if rows.is_empty() {
        return Err(Error::data("patch has no co-occurring pixel pairs"));
    }
    Ok(average(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feat(v: &[f64; 24], name: &str) -> f64 {
        v[GLCM_NAMES.iter().position(|n| *n == name).unwrap()]
    }

    #[test]
    fn two_by_two_horizontal() {
        let q = QuantizedPatch::new(2, 2, 2, vec![1, 1, 2, 2]).unwrap();
        let mut c = Vec::new();
        glcm_counts(&q, (1, 0), &mut c);
        assert_eq!(c, vec![2.0, 0.0, 0.0, 2.0]);
        let total: f64 = c.iter().sum();
        let p: Vec<f64> = c.iter().map(|v| v / total).collect();
        let f = glcm_matrix_features(&p, 2);
        assert_eq!(feat(&f, "Contrast"), 0.0);
        assert_eq!(feat(&f, "MaximumProbability"), 0.5);
    }

    #[test]
    fn constant_patch() {
        let q = QuantizedPatch::new(4, 4, 8, vec![3; 16]).unwrap();
        let f = glcm_features(&q).unwrap();
        assert_eq!(feat(&f, "Contrast"), 0.0);
        assert_eq!(feat(&f, "JointEnergy"), 1.0);
        assert_eq!(feat(&f, "Correlation"), 1.0);
        assert_eq!(feat(&f, "Imc1"), 0.0);
        assert_eq!(feat(&f, "Imc2"), 0.0);
        assert_eq!(feat(&f, "MCC"), 1.0);
    }

    #[test]
    fn symmetric_counts() {
        let q = QuantizedPatch::new(3, 3, 3, vec![1, 2, 3, 3, 1, 2, 2, 2, 1]).unwrap();
        let mut c = Vec::new();
        for off in GLCM_OFFSETS {
            glcm_counts(&q, off, &mut c);
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(c[i * 3 + j], c[j * 3 + i]);
                }
            }
        }
    }

    #[test]
    fn single_pixel_has_no_pairs() {
        let q = QuantizedPatch::new(1, 1, 4, vec![2]).unwrap();
        assert!(matches!(glcm_features(&q), Err(Error::Data(_))));
    }
}
