use crate::error::{data_err, Result};

/// Step-wise area under the precision–recall curve: rows ranked by score
/// (descending, equal scores keep their original order), precision summed
/// at every positive and divided by the number of positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(data_err(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(data_err("average precision needs both classes among the labels"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(data_err("anomaly scores contain NaN"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut hits, mut total) = (0usize, 0.0);
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / positives as f64)
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean and population standard deviation.
pub fn mean_and_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt())
}
