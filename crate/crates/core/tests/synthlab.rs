use condcl::kernels::{KernelConfig, MetaRecord};
use condcl::losses::LossConfig;
use condcl::synthlab::{
    convergence_experiment, mc_limit_terms, sample_negative_label, sample_positive_label,
    sample_positive_pair, summarize, FrozenEncoder, LabelDist, LimitTerms, MeanMap, SyntheticModel,
};
use condcl::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const VALUES: [f64; 10] = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
const PROBS: [f64; 10] = [0.05, 0.15, 0.1, 0.08, 0.12, 0.07, 0.13, 0.1, 0.09, 0.11];

fn discrete_model() -> SyntheticModel {
    SyntheticModel {
        label_dist: LabelDist::Discrete {
            values: VALUES.to_vec(),
            probs: PROBS.to_vec(),
        },
        ..SyntheticModel::default()
    }
}

fn chi_square_p(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .filter(|(_, p)| **p > 0.0)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dof = probs.iter().filter(|p| **p > 0.0).count() - 1;
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat)
}

fn closed_form(y: f64, k: &KernelConfig, positive: bool) -> Vec<f64> {
    let anchor = MetaRecord::continuous(&[y]);
    let mass: Vec<f64> = VALUES
        .iter()
        .zip(PROBS)
        .map(|(&v, p)| {
            let w = k.eval(&anchor, &MetaRecord::continuous(&[v])).unwrap();
            p * if positive { w } else { k.sup_norm() - w }
        })
        .collect();
    let z: f64 = mass.iter().sum();
    mass.iter().map(|m| m / z).collect()
}

fn index_of(r: &MetaRecord) -> usize {
    VALUES.iter().position(|v| *v == r.continuous[0]).unwrap()
}

#[test]
fn rejection_samplers_match_closed_forms() {
    let m = discrete_model();
    let k = KernelConfig::rbf(2.0).unwrap();
    for (a, y) in [2.0, 6.0].into_iter().enumerate() {
        let anchor = MetaRecord::continuous(&[y]);
        for positive in [true, false] {
            let mut rng = Rng::new(40 + a as u64).split(positive as u64);
            let mut counts = [0usize; 10];
            for _ in 0..100_000 {
                let s = if positive {
                    sample_positive_label(&m, &anchor, &k, &mut rng)
                } else {
                    sample_negative_label(&m, &anchor, &k, &mut rng)
                }
                .unwrap();
                counts[index_of(&s)] += 1;
            }
            let p = chi_square_p(&counts, &closed_form(y, &k, positive));
            assert!(p > 0.01, "anchor {y} positive={positive}: p = {p}");
        }
    }
    // negatives exclude the anchor's own value
    let mut rng = Rng::new(9);
    let anchor = MetaRecord::continuous(&[4.0]);
    for _ in 0..1000 {
        assert_ne!(
            sample_negative_label(&m, &anchor, &k, &mut rng).unwrap(),
            anchor
        );
    }
}

#[test]
fn chi_square_detects_a_wrong_distribution() {
    let m = discrete_model();
    let k = KernelConfig::rbf(2.0).unwrap();
    let anchor = MetaRecord::continuous(&[2.0]);
    let mut rng = Rng::new(3);
    let mut counts = [0usize; 10];
    for _ in 0..100_000 {
        counts[index_of(&sample_positive_label(&m, &anchor, &k, &mut rng).unwrap())] += 1;
    }
    assert!(chi_square_p(&counts, &closed_form(2.0, &k, false)) < 1e-6);
    assert!(chi_square_p(&counts, &PROBS) < 1e-6);
}

/// Asymptotic two-sample Kolmogorov-Smirnov p-value.
fn ks_p(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    let q: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    q.clamp(0.0, 1.0)
}

#[test]
fn positive_pairs_preserve_the_x_marginal() {
    let m = SyntheticModel::default();
    let k = KernelConfig::rbf(1.0).unwrap();
    let mut rng = Rng::new(11);
    let mut direct = Rng::new(12);
    let n = 20_000;
    let dir: Vec<f64> = (0..m.dim).map(|i| 1.0 / (1.0 + i as f64)).collect();
    let proj = |x: &[f64], axis: Option<usize>| match axis {
        Some(a) => x[a],
        None => x.iter().zip(&dir).map(|(a, b)| a * b).sum(),
    };
    let pairs: Vec<Vec<f64>> = (0..n)
        .map(|_| sample_positive_pair(&m, &k, &mut rng).unwrap().x)
        .collect();
    let plain: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let y = m.sample_label(&mut direct);
            m.sample_x(&y, &mut direct)
        })
        .collect();
    for axis in [Some(0), Some(1), None] {
        let p = ks_p(
            pairs.iter().map(|x| proj(x, axis)).collect(),
            plain.iter().map(|x| proj(x, axis)).collect(),
        );
        assert!(p > 0.01, "projection {axis:?}: p = {p}");
    }
}

#[test]
fn collapsed_encoder_limits_are_one() {
    let m = SyntheticModel::default();
    let enc = FrozenEncoder::Constant(vec![0.0, 1.0, 0.0]);
    let lim = mc_limit_terms(
        &m,
        &enc,
        &KernelConfig::rbf(1.0).unwrap(),
        &LossConfig::new(1.0, 1.0).unwrap(),
        2000,
        &Rng::new(1),
    )
    .unwrap();
    assert!((lim.align.mean - 1.0).abs() < 1e-12);
    assert!((lim.unif.mean - 1.0).abs() < 1e-12);
}

#[test]
fn orthogonal_noiseless_classes_align_perfectly() {
    let m = SyntheticModel {
        label_dist: LabelDist::Categorical {
            probs: vec![0.3, 0.3, 0.4],
        },
        mean_map: MeanMap::Classes {
            count: 3,
            lo: 0.0,
            hi: 3.0,
        },
        dim: 3,
        kappa: None,
    };
    let lim = mc_limit_terms(
        &m,
        &FrozenEncoder::Identity,
        &KernelConfig::categorical(),
        &LossConfig::new(1.0, 1.0).unwrap(),
        3000,
        &Rng::new(2),
    )
    .unwrap();
    assert!((lim.align.mean - 1.0).abs() < 1e-12);
    assert!(lim.align.stderr < 1e-12);
}

/// `mc_limit_terms` on the default model, identity encoder, rbf σ = 1,
/// τ = 0.1, 10⁶ samples, seed 2024.
const GOLDEN: LimitTerms = LimitTerms {
    align: condcl::synthlab::Estimate {
        mean: 6.971850298189091,
        stderr: 0.0018712161728998695,
    },
    unif: condcl::synthlab::Estimate {
        mean: 6.766426936182671,
        stderr: 0.000909759412005928,
    },
};

fn golden_setup() -> (SyntheticModel, FrozenEncoder, KernelConfig, LossConfig) {
    (
        SyntheticModel::default(),
        FrozenEncoder::Identity,
        KernelConfig::rbf(1.0).unwrap(),
        LossConfig::new(0.1, 1.0).unwrap(),
    )
}

#[test]
fn large_sample_limit_golden_is_reproduced() {
    let (m, enc, k, l) = golden_setup();
    let lim = mc_limit_terms(&m, &enc, &k, &l, 1_000_000, &Rng::new(2024)).unwrap();
    assert_eq!(lim, GOLDEN);
}

#[test]
fn independent_limit_estimate_agrees_with_golden() {
    let (m, enc, k, l) = golden_setup();
    let lim = mc_limit_terms(&m, &enc, &k, &l, 100_000, &Rng::new(99)).unwrap();
    for (est, gold) in [(lim.align, GOLDEN.align), (lim.unif, GOLDEN.unif)] {
        let se = (est.stderr.powi(2) + gold.stderr.powi(2)).sqrt();
        // the nested term carries an O(1/n_inner) bias at the smaller size
        assert!(
            (est.mean - gold.mean).abs() < 5.0 * se + 0.01,
            "{est:?} vs {gold:?}"
        );
    }
}

#[test]
fn single_rep_has_no_stderr_and_runs_reproduce() {
    let (m, enc, k, l) = golden_setup();
    let rows = convergence_experiment(&m, &enc, &k, &l, &[32], 1, &GOLDEN, &Rng::new(5)).unwrap();
    assert_eq!(rows.len(), 1);
    let s = summarize(&rows);
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].stderr, None);

    let a = convergence_experiment(&m, &enc, &k, &l, &[16, 64], 4, &GOLDEN, &Rng::new(6)).unwrap();
    let b = convergence_experiment(&m, &enc, &k, &l, &[16, 64], 4, &GOLDEN, &Rng::new(6)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 8);
}

#[test]
fn frozen_encoders_are_deterministic_unit_maps() {
    let mut rng = Rng::new(8);
    let enc = FrozenEncoder::random_mlp(&[8, 16, 4], &mut rng).unwrap();
    let m = SyntheticModel::default();
    let xs: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            let y = m.sample_label(&mut rng);
            m.sample_x(&y, &mut rng)
        })
        .collect();
    let x = condcl::Matrix::from_rows(&xs).unwrap();
    let a = enc.encode(&x).unwrap();
    assert_eq!(a, enc.encode(&x).unwrap());
    for row in a.row_iter().chain(x.row_iter()) {
        assert!((condcl::numerics::l2_norm(row) - 1.0).abs() < 1e-12);
    }
}
