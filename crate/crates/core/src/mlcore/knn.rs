use crate::error::{Error, Result};

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Majority label among the `k` Euclidean-nearest training rows.
///
/// Equal distances are ordered by training index, so the lower index wins a
/// place among the neighbours.
pub fn knn_classify(train: &[&[f64]], labels: &[u8], query: &[f64], k: usize) -> Result<u8> {
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if train.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            train.len(),
            labels.len()
        )));
    }
    if k == 0 || k.is_multiple_of(2) || k > train.len() {
        return Err(Error::invalid(format!(
            "k must be odd and at most {}, got {k}",
            train.len()
        )));
    }
    // bounded insertion list of (distance, index), sorted ascending
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (i, row) in train.iter().enumerate() {
        if row.len() != query.len() {
            return Err(Error::Shape(format!(
                "row {i} has {} features, query has {}",
                row.len(),
                query.len()
            )));
        }
        let d = squared_distance(row, query);
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, i));
        best.truncate(k);
    }
    let ones = best.iter().filter(|&&(_, i)| labels[i] == 1).count();
    Ok(u8::from(2 * ones > k))
}
