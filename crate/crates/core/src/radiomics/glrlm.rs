use super::emphasis::{average, size_features, tally};
use super::QuantizedPatch;
use crate::error::{Error, Result};

pub const GLRLM_NAMES: [&str; 16] = [
    "ShortRunEmphasis",
    "LongRunEmphasis",
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "RunLengthNonUniformity",
    "RunLengthNonUniformityNormalized",
    "RunPercentage",
    "GrayLevelVariance",
    "RunVariance",
    "RunEntropy",
    "LowGrayLevelRunEmphasis",
    "HighGrayLevelRunEmphasis",
    "ShortRunLowGrayLevelEmphasis",
    "ShortRunHighGrayLevelEmphasis",
    "LongRunLowGrayLevelEmphasis",
    "LongRunHighGrayLevelEmphasis",
];

/// Run directions 0°, 45°, 90°, 135° as (dx, dy).
pub const RUN_DIRECTIONS: [(isize, isize); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];

/// Appends every maximal run along `dir` as `(gray, length)`.
pub fn runs(q: &QuantizedPatch, dir: (isize, isize), out: &mut Vec<(u16, u32)>) {
    let (w, h) = (q.width as isize, q.height as isize);
    let inside = |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h;
    for y in 0..h {
        for x in 0..w {
            let g = q.at(x as usize, y as usize);
            let (px, py) = (x - dir.0, y - dir.1);
            if inside(px, py) && q.at(px as usize, py as usize) == g {
                continue;
            }
            let mut len = 1u32;
            let (mut nx, mut ny) = (x + dir.0, y + dir.1);
            while inside(nx, ny) && q.at(nx as usize, ny as usize) == g {
                len += 1;
                nx += dir.0;
                ny += dir.1;
            }
            out.push((g, len));
        }
    }
}

pub fn glrlm_features(q: &QuantizedPatch) -> Result<[f64; 16]> {
    if q.bins.is_empty() {
        return Err(Error::data("empty patch"));
    }
    let mut obs = Vec::new();
    let mut entries = Vec::new();
    let rows: Vec<[f64; 16]> = RUN_DIRECTIONS
        .iter()
        .map(|&dir| {
            obs.clear();
            runs(q, dir, &mut obs);
            tally(&mut obs, &mut entries);
            let f = size_features(&entries, q.levels, q.bins.len());
            [
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
            ]
        })
        .collect();
    Ok(average(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rows_are_single_runs() {
        let q = QuantizedPatch::new(4, 4, 4, vec![2; 16]).unwrap();
        let mut r = Vec::new();
        runs(&q, (1, 0), &mut r);
        assert_eq!(r, vec![(2, 4); 4]);
        let mut entries = Vec::new();
        tally(&mut r, &mut entries);
        let f = size_features(&entries, 4, 16);
        assert_eq!(f.percentage, 4.0 / 16.0);
        assert_eq!(f.large_emphasis, 16.0);
    }

    #[test]
    fn diagonal_runs_cover_every_pixel() {
        let q = QuantizedPatch::new(3, 2, 2, vec![1, 2, 1, 2, 1, 2]).unwrap();
        for dir in RUN_DIRECTIONS {
            let mut r = Vec::new();
            runs(&q, dir, &mut r);
            assert_eq!(r.iter().map(|x| x.1).sum::<u32>(), 6);
        }
    }
}
