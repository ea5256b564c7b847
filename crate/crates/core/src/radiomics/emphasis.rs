//! Shared feature set for the (gray level, size) matrices: run lengths,
//! zone sizes and dependence counts.

/// Features of a sparse matrix given as `(gray, size, count)` entries.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct SizeFeatures {
    pub small_emphasis: f64,
    pub large_emphasis: f64,
    pub gray_nonuniformity: f64,
    pub gray_nonuniformity_norm: f64,
    pub size_nonuniformity: f64,
    pub size_nonuniformity_norm: f64,
    pub percentage: f64,
    pub gray_variance: f64,
    pub size_variance: f64,
    pub entropy: f64,
    pub low_gray_emphasis: f64,
    pub high_gray_emphasis: f64,
    pub small_low_gray: f64,
    pub small_high_gray: f64,
    pub large_low_gray: f64,
    pub large_high_gray: f64,
}

/// `entries` must not repeat a `(gray, size)` pair. `n_pixels` is the patch area.
pub(crate) fn size_features(entries: &[(u16, u32, u32)], levels: usize, n_pixels: usize) -> SizeFeatures {
    let nz: f64 = entries.iter().map(|e| e.2 as f64).sum();
    if nz == 0.0 {
        return SizeFeatures::default();
    }
    let max_size = entries.iter().map(|e| e.1).max().unwrap_or(0) as usize;
    let mut gray_sums = vec![0.0; levels + 1];
    let mut size_sums = vec![0.0; max_size + 1];
    let mut f = SizeFeatures::default();
    let (mut mu_i, mut mu_j) = (0.0, 0.0);
    for &(i, j, c) in entries {
        let (i, j, c) = (i as f64, j as f64, c as f64);
        let (i2, j2) = (i * i, j * j);
        gray_sums[i as usize] += c;
        size_sums[j as usize] += c;
        f.small_emphasis += c / j2;
        f.large_emphasis += c * j2;
        f.low_gray_emphasis += c / i2;
        f.high_gray_emphasis += c * i2;
        f.small_low_gray += c / (i2 * j2);
        f.small_high_gray += c * i2 / j2;
        f.large_low_gray += c * j2 / i2;
        f.large_high_gray += c * i2 * j2;
        let p = c / nz;
        mu_i += p * i;
        mu_j += p * j;
        f.entropy -= p * p.log2();
    }
    for &(i, j, c) in entries {
        let p = c as f64 / nz;
        f.gray_variance += p * (i as f64 - mu_i).powi(2);
        f.size_variance += p * (j as f64 - mu_j).powi(2);
    }
    for v in [
        &mut f.small_emphasis,
        &mut f.large_emphasis,
        &mut f.low_gray_emphasis,
        &mut f.high_gray_emphasis,
        &mut f.small_low_gray,
        &mut f.small_high_gray,
        &mut f.large_low_gray,
        &mut f.large_high_gray,
    ] {
        *v /= nz;
    }
    f.gray_nonuniformity = gray_sums.iter().map(|s| s * s).sum::<f64>() / nz;
    f.gray_nonuniformity_norm = f.gray_nonuniformity / nz;
    f.size_nonuniformity = size_sums.iter().map(|s| s * s).sum::<f64>() / nz;
    f.size_nonuniformity_norm = f.size_nonuniformity / nz;
    f.percentage = nz / n_pixels as f64;
    f
}

/// Collapses `(gray, size)` observations into counted entries, reusing `buf`.
pub(crate) fn tally(obs: &mut [(u16, u32)], out: &mut Vec<(u16, u32, u32)>) {
    obs.sort_unstable();
    out.clear();
    for &(g, s) in obs.iter() {
        match out.last_mut() {
            Some(last) if last.0 == g && last.1 == s => last.2 += 1,
            _ => out.push((g, s, 1)),
        }
    }
}

pub(crate) fn average<const N: usize>(rows: &[[f64; N]]) -> [f64; N] {
    let mut out = [0.0; N];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    let n = rows.len().max(1) as f64;
    out.map(|v| v / n)
}
