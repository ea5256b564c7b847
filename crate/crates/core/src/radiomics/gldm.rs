use super::emphasis::{size_features, tally};
use super::QuantizedPatch;
use crate::error::{Error, Result};

pub const GLDM_NAMES: [&str; 14] = [
    "SmallDependenceEmphasis",
    "LargeDependenceEmphasis",
    "GrayLevelNonUniformity",
    "DependenceNonUniformity",
    "DependenceNonUniformityNormalized",
    "GrayLevelVariance",
    "DependenceVariance",
    "DependenceEntropy",
    "LowGrayLevelEmphasis",
    "HighGrayLevelEmphasis",
    "SmallDependenceLowGrayLevelEmphasis",
    "SmallDependenceHighGrayLevelEmphasis",
    "LargeDependenceLowGrayLevelEmphasis",
    "LargeDependenceHighGrayLevelEmphasis",
];

/// Per pixel `(gray, 1 + number of 8-neighbors within `alpha` levels)`.
pub fn dependencies(q: &QuantizedPatch, alpha: u16, out: &mut Vec<(u16, u32)>) {
    let (w, h) = (q.width as isize, q.height as isize);
    for y in 0..h {
        for x in 0..w {
            let g = q.at(x as usize, y as usize);
            let mut dep = 1u32;
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x + dx, y + dy);
                    if (dx, dy) != (0, 0)
                        && nx >= 0
                        && ny >= 0
                        && nx < w
                        && ny < h
                        && q.at(nx as usize, ny as usize).abs_diff(g) <= alpha
                    {
                        dep += 1;
                    }
                }
            }
            out.push((g, dep));
        }
    }
}

pub fn gldm_features(q: &QuantizedPatch) -> Result<[f64; 14]> {
    if q.bins.is_empty() {
        return Err(Error::data("empty patch"));
    }
    let mut obs = Vec::with_capacity(q.bins.len());
    dependencies(q, 0, &mut obs);
    let mut entries = Vec::new();
    tally(&mut obs, &mut entries);
    let f = size_features(&entries, q.levels, q.bins.len());
    Ok([
        f.small_emphasis,
        f.large_emphasis,
        f.gray_nonuniformity,
        f.size_nonuniformity,
        f.size_nonuniformity_norm,
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
    fn constant_3x3_dependences() {
        let q = QuantizedPatch::new(3, 3, 2, vec![1; 9]).unwrap();
        let mut d = Vec::new();
        dependencies(&q, 0, &mut d);
        let mut deps: Vec<u32> = d.iter().map(|x| x.1).collect();
        deps.sort();
        assert_eq!(deps, vec![4, 4, 4, 4, 6, 6, 6, 6, 9]);
    }
}
