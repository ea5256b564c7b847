use super::bin_of;
use crate::error::{Error, Result};

pub const FIRST_ORDER_NAMES: [&str; 18] = [
    "Energy",
    "TotalEnergy",
    "Entropy",
    "Minimum",
    "10Percentile",
    "90Percentile",
    "Maximum",
    "Mean",
    "Median",
    "InterquartileRange",
    "Range",
    "MeanAbsoluteDeviation",
    "RobustMeanAbsoluteDeviation",
    "RootMeanSquared",
    "Skewness",
    "Kurtosis",
    "Variance",
    "Uniformity",
];

/// Linear-interpolation percentile of sorted data, `q` in [0, 100].
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// First-order statistics over the finite values of `values`.
///
/// Pixel area is 1, so total energy equals energy. Entropy and uniformity
/// use the `n_bins` histogram. Skewness and kurtosis (non-excess) are 0 on
/// a constant patch.
pub fn first_order(p: &super::GrayPatch, n_bins: usize) -> Result<[f64; 18]> {
    let mut x: Vec<f64> = p.values.iter().copied().filter(|v| v.is_finite()).collect();
    if x.is_empty() {
        return Err(Error::data("first-order statistics need at least one valid pixel"));
    }
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let min = x[0];
    let max = x[x.len() - 1];
    let mean = x.iter().sum::<f64>() / n;
    let energy = x.iter().map(|v| v * v).sum::<f64>();
    let (mut m2, mut m3, mut m4, mut mad) = (0.0, 0.0, 0.0, 0.0);
    for &v in &x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        mad += d.abs();
    }
    let (m2, m3, m4, mad) = (m2 / n, m3 / n, m4 / n, mad / n);
    let (skewness, kurtosis) = if m2 > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2)) } else { (0.0, 0.0) };

    let p10 = percentile(&x, 10.0);
    let p90 = percentile(&x, 90.0);
    let robust: Vec<f64> = x.iter().copied().filter(|&v| v >= p10 && v <= p90).collect();
    let rmad = if robust.is_empty() {
        0.0
    } else {
        let rmean = robust.iter().sum::<f64>() / robust.len() as f64;
        robust.iter().map(|v| (v - rmean).abs()).sum::<f64>() / robust.len() as f64
    };

    let width = (max - min) / n_bins.max(1) as f64;
    let mut hist = vec![0usize; n_bins.max(1) + 1];
    for &v in &x {
        hist[bin_of(v, min, width, n_bins.max(1)) as usize] += 1;
    }
    let (mut entropy, mut uniformity) = (0.0, 0.0);
    for &c in hist.iter().filter(|&&c| c > 0) {
        let pr = c as f64 / n;
        entropy -= pr * pr.log2();
        uniformity += pr * pr;
    }

    Ok([
        energy,
        energy,
        entropy,
        min,
        p10,
        p90,
        max,
        mean,
        percentile(&x, 50.0),
        percentile(&x, 75.0) - percentile(&x, 25.0),
        max - min,
        mad,
        rmad,
        (energy / n).sqrt(),
        skewness,
        kurtosis,
        m2,
        uniformity,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radiomics::GrayPatch;
    use proptest::prelude::*;

    fn feat(v: &[f64; 18], name: &str) -> f64 {
        v[FIRST_ORDER_NAMES.iter().position(|n| *n == name).unwrap()]
    }

    #[test]
    fn simple_values() {
        let f = first_order(&GrayPatch::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(), 32).unwrap();
        assert_eq!(feat(&f, "Mean"), 2.5);
        assert_eq!(feat(&f, "Minimum"), 1.0);
        assert_eq!(feat(&f, "Maximum"), 4.0);
        assert_eq!(feat(&f, "Range"), 3.0);
        assert_eq!(feat(&f, "Variance"), 1.25);
        assert_eq!(feat(&f, "Median"), 2.5);
        assert_eq!(feat(&f, "Energy"), 30.0);
    }

    #[test]
    fn constant_patch() {
        let f = first_order(&GrayPatch::new(3, 3, vec![4.2; 9]).unwrap(), 32).unwrap();
        assert_eq!(feat(&f, "Variance"), 0.0);
        assert_eq!(feat(&f, "Entropy"), 0.0);
        assert_eq!(feat(&f, "Skewness"), 0.0);
        assert_eq!(feat(&f, "Kurtosis"), 0.0);
        assert_eq!(feat(&f, "Uniformity"), 1.0);
    }

    #[test]
    fn all_invalid_is_error() {
        let p = GrayPatch::new(2, 1, vec![f64::NAN, f64::NAN]).unwrap();
        assert!(matches!(first_order(&p, 8), Err(Error::Data(_))));
    }

    proptest! {
        #[test]
        fn variance_shift_invariant(vals in proptest::collection::vec(-100.0..100.0f64, 2..60), c in -1e3..1e3f64) {
            let n = vals.len();
            let a = first_order(&GrayPatch::new(n, 1, vals.clone()).unwrap(), 16).unwrap();
            let b = first_order(&GrayPatch::new(n, 1, vals.iter().map(|v| v + c).collect()).unwrap(), 16).unwrap();
            let (va, vb) = (feat(&a, "Variance"), feat(&b, "Variance"));
            prop_assert!((va - vb).abs() <= 1e-9 * va.max(1.0));
            prop_assert!((feat(&b, "Mean") - feat(&a, "Mean") - c).abs() <= 1e-9 * c.abs().max(1.0));
        }
    }
}
