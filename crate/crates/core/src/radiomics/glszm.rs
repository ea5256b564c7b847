use super::emphasis::{size_features, tally};
use super::QuantizedPatch;
use crate::error::{Error, Result};

pub const GLSZM_NAMES: [&str; 16] = [
    "SmallAreaEmphasis",
    "LargeAreaEmphasis",
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "SizeZoneNonUniformity",
    "SizeZoneNonUniformityNormalized",
    "ZonePercentage",
    "GrayLevelVariance",
    "ZoneVariance",
    "ZoneEntropy",
    "LowGrayLevelZoneEmphasis",
    "HighGrayLevelZoneEmphasis",
    "SmallAreaLowGrayLevelEmphasis",
    "SmallAreaHighGrayLevelEmphasis",
    "LargeAreaLowGrayLevelEmphasis",
    "LargeAreaHighGrayLevelEmphasis",
];

/// 8-connected zones of equal gray level as `(gray, size)`.
pub fn zones(q: &QuantizedPatch, out: &mut Vec<(u16, u32)>) {
    let (w, h) = (q.width, q.height);
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] {
            continue;
        }
        let g = q.bins[start];
        seen[start] = true;
        stack.push(start);
        let mut size = 0u32;
        while let Some(idx) = stack.pop() {
            size += 1;
            let (x, y) = ((idx % w) as isize, (idx / w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    if !seen[n] && q.bins[n] == g {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        out.push((g, size));
    }
}

pub fn glszm_features(q: &QuantizedPatch) -> Result<[f64; 16]> {
    if q.bins.is_empty() {
        return Err(Error::data("empty patch"));
    }
    let mut obs = Vec::new();
    zones(q, &mut obs);
    let mut entries = Vec::new();
    tally(&mut obs, &mut entries);
    let f = size_features(&entries, q.levels, q.bins.len());
    Ok([
        f.small_emphasis,
        f.large_emphasis,
        f.gray_nonuniformity,
        f.gray_nonuniformity_norm,
        f.size_nonuniformity,
        f.size_nonuniformity_norm,
        f.percentage,
        f.gray_variance,
        f.size_variance,
        f.entropy,
        f.low_gray_emphasis,
        f.high_gray_emphasis,
        f.small_low_gray,
        f.small_high_gray,
        f.large_low_gray,
        f.large_high_gray,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_touching_pixels_join() {
        // 1 2
        // 2 1  -> two zones of size 2 under 8-connectivity
        let q = QuantizedPatch::new(2, 2, 2, vec![1, 2, 2, 1]).unwrap();
        let mut z = Vec::new();
        zones(&q, &mut z);
        z.sort();
        assert_eq!(z, vec![(1, 2), (2, 2)]);
    }

    #[test]
    fn constant_patch_is_one_zone() {
        let q = QuantizedPatch::new(5, 3, 4, vec![4; 15]).unwrap();
        let f = glszm_features(&q).unwrap();
        assert_eq!(f[1], 225.0);
        assert_eq!(f[6], 1.0 / 15.0);
    }
}
