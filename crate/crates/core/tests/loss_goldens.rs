//! Loss values against frozen extended-precision goldens (see
//! `oracles/goldens.py`) and against a naive scalar evaluation.

use condcl::kernels::{weight_matrix, KernelConfig, MetaBatch, WeightMatrix};
use condcl::losses::{
    conditional_alignment, conditional_uniformity, global_uniformity, infonce_reference,
    supcon_reference, yaware_infonce, Batch, LossConfig,
};
use condcl::numerics::row_normalize;
use condcl::Matrix;

const RAW3_A: [[f64; 4]; 3] = [
    [0.3, -1.2, 0.7, 2.0],
    [1.1, 0.4, -0.5, 0.2],
    [-0.8, 0.9, 1.5, -0.3],
];
const RAW3_C: [[f64; 4]; 3] = [
    [0.5, -1.0, 0.2, 1.7],
    [0.9, 0.1, -0.9, 0.6],
    [-1.3, 0.4, 1.1, 0.2],
];
const META3: [f64; 3] = [1.0, 2.5, 4.0];

const RAW4_A: [[f64; 3]; 4] = [
    [0.2, 0.9, -0.4],
    [-1.0, 0.3, 0.8],
    [0.6, -0.7, 0.1],
    [0.05, 0.4, 1.2],
];
const RAW4_C: [[f64; 3]; 4] = [
    [0.1, 1.1, -0.2],
    [-0.8, 0.6, 0.9],
    [0.9, -0.5, 0.3],
    [-0.3, 0.2, 1.0],
];
const META4: [f64; 4] = [0.0, 0.7, 3.0, 3.4];

fn unit<const D: usize>(raw: &[[f64; D]]) -> Matrix {
    let rows: Vec<Vec<f64>> = raw.iter().map(|r| r.to_vec()).collect();
    row_normalize(&Matrix::from_rows(&rows).unwrap()).unwrap()
}

fn rbf_batch<const D: usize>(a: &[[f64; D]], c: &[[f64; D]], meta: &[f64], sigma: f64) -> Batch {
    let w = weight_matrix(
        &MetaBatch::from_scalars(meta).unwrap(),
        &KernelConfig::rbf(sigma).unwrap(),
    )
    .unwrap();
    Batch::new(unit(a), unit(c), w).unwrap()
}

fn cfg(tau: f64) -> LossConfig {
    LossConfig::new(tau, 1.0).unwrap()
}

/// Straight transcription of the per-anchor formula, one scalar at a time.
fn scalar_yaware(a: &Matrix, c: &Matrix, w: &Matrix, tau: f64) -> f64 {
    let n = a.rows();
    let nf = n as f64;
    let f = |i: usize, k: usize| -> f64 {
        let mut d = 0.0;
        for t in 0..a.cols() {
            d += a.get(i, t) * c.get(k, t);
        }
        d / tau
    };
    let mut total = 0.0;
    for i in 0..n {
        let z: f64 = (0..n).map(|j| w.get(i, j)).sum::<f64>() / nf;
        let denom: f64 = (0..n).map(|j| f(i, j).exp()).sum::<f64>() / nf;
        let mut li = 0.0;
        for k in 0..n {
            li -= w.get(i, k) / z * (f(i, k).exp() / denom).ln() / nf;
        }
        total += li;
    }
    total / nf
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn yaware_two_orthogonal_rows_all_ones() {
    let e = Matrix::identity(2);
    let w = WeightMatrix::from_matrix(
        Matrix::from_rows(&[vec![1.0; 2], vec![1.0; 2]]).unwrap(),
        1.0,
    )
    .unwrap();
    let b = Batch::new(e.clone(), e, w).unwrap();
    let v = yaware_infonce(&b, &cfg(1.0)).unwrap().value;
    assert!(close(v, 0.120_114_506_958_277_52, 1e-14), "{v}");
}

#[test]
fn fixture3_goldens() {
    let b = rbf_batch(&RAW3_A, &RAW3_C, &META3, 1.5);
    let c = cfg(0.5);
    let align = conditional_alignment(&b, &c).unwrap().value;
    assert!(close(align, -0.705_480_118_364_351_13, 1e-12), "{align}");
    let y = yaware_infonce(&b, &c).unwrap().value;
    assert!(close(y, 0.237_466_816_261_214_33, 1e-12), "{y}");
    let scalar = scalar_yaware(b.anchors(), b.candidates(), b.weights().w(), 0.5);
    assert!(close(y, scalar, 1e-12));
    let u = conditional_uniformity(&b, &c).unwrap().value;
    assert!(close(u, -0.212_023_626_754_262_41, 1e-12), "{u}");
}

#[test]
fn fixture4_goldens() {
    let b = rbf_batch(&RAW4_A, &RAW4_C, &META4, 1.0);
    let c = cfg(0.2);
    let nce = infonce_reference(&b, &c).unwrap().value;
    assert!(close(nce, -1.186_959_877_661_711_07, 1e-12), "{nce}");
    let y = yaware_infonce(&b, &c).unwrap().value;
    assert!(close(y, 1.106_853_191_704_654_16, 1e-12), "{y}");
    let u = conditional_uniformity(&b, &c).unwrap().value;
    assert!(close(u, 2.546_579_449_971_351_38, 1e-12), "{u}");
}

#[test]
fn global_uniformity_antipodal_pair() {
    let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
    let c = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
    let b = Batch::new(a, c, WeightMatrix::identity(2)).unwrap();
    let v = global_uniformity(&b, &cfg(1.0)).unwrap().value;
    assert!(close(v, 0.433_780_830_483_027_19, 1e-14), "{v}");
}

#[test]
fn supcon_identical_pair_is_zero() {
    let f = Matrix::from_rows(&[vec![0.6, 0.8], vec![0.6, 0.8]]).unwrap();
    let r = supcon_reference(&f, &f, &[3, 3], &cfg(1.0)).unwrap();
    assert!(r.value.abs() < 1e-15);
}
