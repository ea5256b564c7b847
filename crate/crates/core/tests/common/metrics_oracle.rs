//! Macro metrics by direct counting over label pairs.

pub struct Oracle {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Recall averages over classes present in `y_true`; precision and F1
/// average over classes present in either list, a class never predicted
/// scoring precision 0.
pub fn macro_metrics(y_true: &[u8], y_pred: &[u8], classes: u8) -> Oracle {
    let n = y_true.len() as f64;
    let correct = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count() as f64;
    let (mut p_sum, mut p_n, mut r_sum, mut r_n, mut f_sum) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for c in 0..classes {
        let tp = y_true.iter().zip(y_pred).filter(|(a, b)| **a == c && **b == c).count() as f64;
        let actual = y_true.iter().filter(|a| **a == c).count() as f64;
        let predicted = y_pred.iter().filter(|b| **b == c).count() as f64;
        if actual == 0.0 && predicted == 0.0 {
            continue;
        }
        let prec = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let rec = if actual > 0.0 { tp / actual } else { 0.0 };
        let f = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
        p_sum += prec;
        p_n += 1.0;
        f_sum += f;
        if actual > 0.0 {
            r_sum += rec;
            r_n += 1.0;
        }
    }
    Oracle { accuracy: correct / n, precision: p_sum / p_n, recall: r_sum / r_n, f1: f_sum / p_n }
}
