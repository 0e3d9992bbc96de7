use crate::error::{Error, Result};
use crate::numerics::{softmax_into, Matrix};

/// Linear-evaluation outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub top1_accuracy: f64,
    /// Accuracy per class; `None` for classes absent from the test set.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub n_train: usize,
    pub n_test: usize,
    pub probe_epochs: usize,
    /// Mean training cross-entropy before each epoch's update, then after
    /// the last one (`epochs + 1` entries).
    pub loss_history: Vec<f64>,
}

/// Multinomial logistic regression `softmax(x W + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxModel {
    /// `d × C`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl SoftmaxModel {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let logits = self.logits(x)?;
        Ok(logits
            .row_iter()
            .map(|r| {
                let mut best = 0;
                for (c, v) in r.iter().enumerate() {
                    if *v > r[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }

    fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul(&self.weight)?;
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(z)
    }

    /// Mean cross-entropy and its gradient.
    fn loss_grad(&self, x: &Matrix, y: &[usize]) -> Result<(f64, Matrix, Vec<f64>)> {
        let n = x.rows() as f64;
        let mut p = self.logits(x)?;
        let mut loss = 0.0;
        let mut probs = vec![0.0; p.cols()];
        for (i, &yi) in y.iter().enumerate() {
            let row = p.row_mut(i);
            let lse = softmax_into(row, &mut probs);
            loss += lse - row[yi];
            row.copy_from_slice(&probs);
            row[yi] -= 1.0;
        }
        let gw = x.transpose_matmul(&p)?.scale(1.0 / n);
        let mut gb = vec![0.0; p.cols()];
        for r in p.row_iter() {
            for (g, v) in gb.iter_mut().zip(r) {
                *g += v / n;
            }
        }
        Ok((loss / n, gw, gb))
    }
}

/// Full-batch gradient descent from zero parameters. Every class in
/// `0..classes` must appear in `y`.
pub fn train_softmax_regression(
    x: &Matrix,
    y: &[usize],
    classes: usize,
    epochs: usize,
    lr: f64,
) -> Result<(SoftmaxModel, Vec<f64>)> {
    if x.rows() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows, {} labels",
            x.rows(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(lr > 0.0) {
        return Err(Error::Config(format!("probe learning rate {lr}")));
    }
    let mut seen = vec![false; classes];
    for &l in y {
        if l >= classes {
            return Err(Error::Format(format!("label {l} outside 0..{classes}")));
        }
        seen[l] = true;
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::DegenerateLabels(c));
    }
    let mut model = SoftmaxModel {
        weight: Matrix::zeros(x.cols(), classes),
        bias: vec![0.0; classes],
    };
    let mut history = Vec::with_capacity(epochs + 1);
    for _ in 0..epochs {
        let (loss, gw, gb) = model.loss_grad(x, y)?;
        history.push(loss);
        model.weight = model.weight.add_scaled(&gw, -lr)?;
        for (b, g) in model.bias.iter_mut().zip(&gb) {
            *b -= lr * g;
        }
    }
    history.push(model.loss_grad(x, y)?.0);
    Ok((model, history))
}

/// Linear evaluation of frozen features: softmax regression trained on
/// `train_f`, scored on `test_f`. No regularization.
pub fn linear_probe(
    train_f: &Matrix,
    train_labels: &[usize],
    test_f: &Matrix,
    test_labels: &[usize],
    epochs: usize,
    lr: f64,
) -> Result<ProbeResult> {
    if train_f.cols() != test_f.cols() || test_f.rows() != test_labels.len() {
        return Err(Error::ShapeMismatch(
            "probe train/test shapes differ".into(),
        ));
    }
    let classes = train_labels
        .iter()
        .chain(test_labels)
        .max()
        .map_or(0, |m| m + 1);
    let (model, loss_history) =
        train_softmax_regression(train_f, train_labels, classes, epochs, lr)?;
    let pred = model.predict(test_f)?;
    let mut hits = vec![0usize; classes];
    let mut counts = vec![0usize; classes];
    for (&p, &t) in pred.iter().zip(test_labels) {
        counts[t] += 1;
        hits[t] += usize::from(p == t);
    }
    let total: usize = hits.iter().sum();
    Ok(ProbeResult {
        top1_accuracy: if test_labels.is_empty() {
            0.0
        } else {
            total as f64 / test_labels.len() as f64
        },
        per_class_accuracy: hits
            .iter()
            .zip(&counts)
            .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
            .collect(),
        n_train: train_labels.len(),
        n_test: test_labels.len(),
        probe_epochs: epochs,
        loss_history,
    })
}
