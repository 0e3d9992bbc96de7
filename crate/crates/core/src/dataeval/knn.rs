use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Accuracy of a `k`-nearest-neighbour vote under Euclidean distance.
///
/// Ties in the vote go to the class whose voters are closest in total, then
/// to the smaller label.
pub fn knn_accuracy(
    train_x: &Matrix,
    train_y: &[usize],
    test_x: &Matrix,
    test_y: &[usize],
    k: usize,
) -> Result<f64> {
    if train_x.rows() != train_y.len() || test_x.rows() != test_y.len() {
        return Err(Error::ShapeMismatch(
            "features and labels differ in length".into(),
        ));
    }
    if train_x.cols() != test_x.cols() {
        return Err(Error::ShapeMismatch(format!(
            "train dim {} vs test dim {}",
            train_x.cols(),
            test_x.cols()
        )));
    }
    if k == 0 || k > train_y.len() || test_y.is_empty() {
        return Err(Error::Config(format!(
            "k = {k} with {} training samples",
            train_y.len()
        )));
    }
    let classes = train_y.iter().max().map_or(0, |m| m + 1);
    let correct: usize = (0..test_x.rows())
        .into_par_iter()
        .map(|t| {
            let q = test_x.row(t);
            let mut d: Vec<(f64, usize)> = train_x
                .row_iter()
                .enumerate()
                .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
                .collect();
            d.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
            let mut votes = vec![(0usize, 0.0f64); classes];
            for &(dist, i) in &d[..k] {
                votes[train_y[i]].0 += 1;
                votes[train_y[i]].1 += dist.sqrt();
            }
            let best = (0..classes)
                .max_by(|&a, &b| {
                    votes[a]
                        .0
                        .cmp(&votes[b].0)
                        .then(votes[b].1.partial_cmp(&votes[a].1).unwrap())
                        .then(b.cmp(&a))
                })
                .unwrap();
            usize::from(best == test_y[t])
        })
        .sum();
    Ok(correct as f64 / test_y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_clusters() {
        let train = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.0, 0.1],
            vec![5.0, 5.0],
            vec![5.1, 5.0],
            vec![5.0, 5.1],
        ])
        .unwrap();
        let test = Matrix::from_rows(&[vec![0.05, 0.05], vec![4.9, 5.0]]).unwrap();
        let acc = knn_accuracy(&train, &[0, 0, 0, 1, 1, 1], &test, &[0, 1], 3).unwrap();
        assert_eq!(acc, 1.0);
        let acc = knn_accuracy(&train, &[0, 0, 0, 1, 1, 1], &test, &[1, 0], 1).unwrap();
        assert_eq!(acc, 0.0);
        assert!(knn_accuracy(&train, &[0; 6], &test, &[0, 0], 7).is_err());
    }
}
