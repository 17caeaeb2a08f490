use crate::error::{Error, Result};

/// Index of the first maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label.
pub fn top1_accuracy(scores: &[Vec<f64>], labels: &[usize]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let hits = scores.iter().zip(labels).filter(|(s, &l)| argmax(s) == l).count();
    hits as f64 / scores.len() as f64
}

/// Average precision of one ranking: mean precision at each positive hit.
/// Ties are broken by sample order. `None` when there are no positives.
pub fn average_precision(scores: &[f64], targets: &[f64]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if targets[i] > 0.5 {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| total / hits as f64)
}

/// Macro-averaged AP over classes that have at least one positive.
/// `scores[b][k]`, `targets[b][k]` binary.
pub fn mean_average_precision(scores: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    let k = scores.first().map_or(0, Vec::len);
    let aps: Vec<f64> = (0..k)
        .filter_map(|c| {
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let t: Vec<f64> = targets.iter().map(|r| r[c]).collect();
            average_precision(&s, &t)
        })
        .collect();
    if aps.is_empty() {
        return Err(Error::UndefinedMetric("mAP with no positive targets".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}
