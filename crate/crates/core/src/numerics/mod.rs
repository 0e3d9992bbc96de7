//! Dense matrices, stable reductions and seeded randomness.

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::{Rng, RngState};

use crate::error::{Error, Result};

/// Norms below this are treated as zero rows.
pub const ZERO_ROW_NORM: f64 = 1e-30;

/// Scales every row of `m` to unit Euclidean norm.
pub fn row_normalize(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = l2_norm(row);
        if !(norm >= ZERO_ROW_NORM) {
            return Err(Error::ZeroRow { row: i, norm });
        }
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    Ok(out)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    // scaled to avoid overflow on huge entries
    let scale = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let ss: f64 = v.iter().map(|x| (x / scale) * (x / scale)).sum();
    scale * ss.sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `log Σ exp(v_i)` with max subtraction.
pub fn logsumexp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let sum: f64 = v.iter().map(|x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Softmax of `v` written into `out`; returns the logsumexp.
pub(crate) fn softmax_into(v: &[f64], out: &mut [f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, x) in out.iter_mut().zip(v) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    max + sum.ln()
}

/// `out[i][j] = <a_i, b_j>`, summed left to right.
pub fn pairwise_dot(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::ShapeMismatch(format!(
            "pairwise_dot: {}x{} against {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut out = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let ai = a.row(i);
        let row = out.row_mut(i);
        for (j, o) in row.iter_mut().enumerate() {
            *o = dot(ai, b.row(j));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes_pythagorean_row() {
        let m = Matrix::from_rows(&[vec![3.0, 4.0], vec![1.0, 0.0]]).unwrap();
        let n = row_normalize(&m).unwrap();
        assert!((n.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((n.get(0, 1) - 0.8).abs() < 1e-15);
        assert_eq!(n.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn constant_row_normalizes_to_half() {
        for c in [1e-10, 0.3, 7.0, 1e200] {
            let m = Matrix::from_rows(&[vec![c; 4]]).unwrap();
            let n = row_normalize(&m).unwrap();
            for &v in n.row(0) {
                assert!((v - 0.5).abs() < 1e-15, "{c}: {v}");
            }
        }
    }

    #[test]
    fn zero_row_is_rejected() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            row_normalize(&m),
            Err(Error::ZeroRow { row: 1, .. })
        ));
    }

    #[test]
    fn logsumexp_cases() {
        assert!((logsumexp(&[0.0, 0.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(logsumexp(&[-3.25]).unwrap(), -3.25);
        let big = logsumexp(&[1000.0, 1000.0]).unwrap();
        assert!((big - (1000.0 + std::f64::consts::LN_2)).abs() < 1e-12);
        assert!(matches!(logsumexp(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn pairwise_dot_cases() {
        let e = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(pairwise_dot(&e, &e).unwrap().data(), &[1.0, 0.0, 0.0, 1.0]);
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(pairwise_dot(&a, &b).unwrap().data(), &[11.0]);
        let c = Matrix::zeros(1, 3);
        assert!(matches!(pairwise_dot(&a, &c), Err(Error::ShapeMismatch(_))));
    }

    fn matrix_strategy() -> impl Strategy<Value = Matrix> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            prop::collection::vec(-10.0f64..10.0, r * c).prop_filter_map("zero row", move |data| {
                let m = Matrix::new(r, c, data).ok()?;
                (0..r).all(|i| l2_norm(m.row(i)) > 1e-3).then_some(m)
            })
        })
    }

    proptest! {
        #[test]
        fn row_normalize_idempotent(m in matrix_strategy()) {
            let once = row_normalize(&m).unwrap();
            let twice = row_normalize(&once).unwrap();
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }

        #[test]
        fn logsumexp_shift(v in prop::collection::vec(-50.0f64..50.0, 1..20), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let lhs = logsumexp(&shifted).unwrap();
            let rhs = logsumexp(&v).unwrap() + c;
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn unit_dots_bounded(m in matrix_strategy()) {
            let u = row_normalize(&m).unwrap();
            let g = pairwise_dot(&u, &u).unwrap();
            for &v in g.data() {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
            }
        }
    }
}
