use super::{QuantizedPatch, COARSENESS_CAP};
use crate::error::{Error, Result};

pub const NGTDM_NAMES: [&str; 5] = ["Coarseness", "Contrast", "Busyness", "Complexity", "Strength"];

/// Per-level pixel counts `n_i` and absolute difference sums `s_i` against
/// the mean of the in-bounds 8-neighbors. Pixels without neighbors are skipped.
pub fn ngtdm_table(q: &QuantizedPatch) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (q.width as isize, q.height as isize);
    let mut n = vec![0.0; q.levels + 1];
    let mut s = vec![0.0; q.levels + 1];
    for y in 0..h {
        for x in 0..w {
            let (mut sum, mut cnt) = (0.0, 0u32);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h {
                        sum += q.at(nx as usize, ny as usize) as f64;
                        cnt += 1;
                    }
                }
            }
            if cnt == 0 {
                continue;
            }
            let g = q.at(x as usize, y as usize) as usize;
            n[g] += 1.0;
            s[g] += (g as f64 - sum / cnt as f64).abs();
        }
    }
    (n, s)
}

pub fn ngtdm_features(q: &QuantizedPatch) -> Result<[f64; 5]> {
    let (n, s) = ngtdm_table(q);
    let nvp: f64 = n.iter().sum();
    if nvp == 0.0 {
        return Err(Error::data("NGTDM needs at least one pixel with a neighbor"));
    }
    let levels: Vec<(f64, f64, f64)> = (1..n.len())
        .filter(|&i| n[i] > 0.0)
        .map(|i| (i as f64, n[i] / nvp, s[i]))
        .collect();
    let ngp = levels.len() as f64;
    let ps: f64 = levels.iter().map(|&(_, p, s)| p * s).sum();
    let s_total: f64 = levels.iter().map(|l| l.2).sum();

    let coarseness = if ps == 0.0 { COARSENESS_CAP } else { 1.0 / ps };
    let (mut pair_contrast, mut busy_den, mut complexity, mut strength_num) = (0.0, 0.0, 0.0, 0.0);
    for &(i, pi, si) in &levels {
        for &(j, pj, sj) in &levels {
            pair_contrast += pi * pj * (i - j).powi(2);
            busy_den += (i * pi - j * pj).abs();
            complexity += (i - j).abs() * (pi * si + pj * sj) / (pi + pj);
            strength_num += (pi + pj) * (i - j).powi(2);
        }
    }
    let contrast = if ngp > 1.0 { pair_contrast / (ngp * (ngp - 1.0)) * s_total / nvp } else { 0.0 };
    let busyness = if busy_den > 0.0 { ps / busy_den } else { 0.0 };
    let strength = if s_total > 0.0 { strength_num / s_total } else { 0.0 };
    Ok([coarseness, contrast, busyness, complexity / nvp, strength])
}
