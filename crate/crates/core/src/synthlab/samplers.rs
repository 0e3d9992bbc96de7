//! Exact rejection samplers for the positive and negative label
//! distributions. Proposals come from `p(y)`; since `0 ≤ w ≤ M`, accepting
//! with probability `w/M` (or `(M − w)/M`) targets
//! `p⁺(y⁺|y) ∝ w(y, y⁺) p(y⁺)` (or `p⁻(y⁻|y) ∝ (M − w(y, y⁻)) p(y⁻)`) exactly.

use super::SyntheticModel;
use crate::error::{Error, Result};
use crate::kernels::{KernelConfig, MetaRecord};
use crate::numerics::Rng;

/// Consecutive rejections tolerated before giving up.
pub const REJECTION_BUDGET: u64 = 1_000_000;

/// Anchor and paired sample with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSample {
    pub x: Vec<f64>,
    pub y: MetaRecord,
    pub x_pair: Vec<f64>,
    pub y_pair: MetaRecord,
}

fn rejection(
    m: &SyntheticModel,
    y: &MetaRecord,
    cfg: &KernelConfig,
    rng: &mut Rng,
    accept: impl Fn(f64) -> f64,
) -> Result<MetaRecord> {
    for _ in 0..REJECTION_BUDGET {
        let proposal = m.sample_label(rng);
        let w = cfg.eval(y, &proposal)?;
        if rng.uniform() < accept(w) {
            return Ok(proposal);
        }
    }
    Err(Error::RejectionBudget(REJECTION_BUDGET))
}

/// `y⁺ ~ w(y, ·) p(·) / Z(y)`.
pub fn sample_positive_label(
    m: &SyntheticModel,
    y: &MetaRecord,
    cfg: &KernelConfig,
    rng: &mut Rng,
) -> Result<MetaRecord> {
    let sup = cfg.sup_norm();
    rejection(m, y, cfg, rng, |w| w / sup)
}

/// `y⁻ ~ (M − w(y, ·)) p(·) / (M − Z(y))`.
pub fn sample_negative_label(
    m: &SyntheticModel,
    y: &MetaRecord,
    cfg: &KernelConfig,
    rng: &mut Rng,
) -> Result<MetaRecord> {
    let sup = cfg.sup_norm();
    rejection(m, y, cfg, rng, |w| (sup - w) / sup)
}

/// Draw from `p_pos(x, x⁺)`.
pub fn sample_positive_pair(
    m: &SyntheticModel,
    cfg: &KernelConfig,
    rng: &mut Rng,
) -> Result<PairSample> {
    let y = m.sample_label(rng);
    let y_pair = sample_positive_label(m, &y, cfg, rng)?;
    let x = m.sample_x(&y, rng);
    let x_pair = m.sample_x(&y_pair, rng);
    Ok(PairSample {
        x,
        y,
        x_pair,
        y_pair,
    })
}

/// Draw from `p_neg(x, x⁻)`.
pub fn sample_negative_pair(
    m: &SyntheticModel,
    cfg: &KernelConfig,
    rng: &mut Rng,
) -> Result<PairSample> {
    let y = m.sample_label(rng);
    let y_pair = sample_negative_label(m, &y, cfg, rng)?;
    let x = m.sample_x(&y, rng);
    let x_pair = m.sample_x(&y_pair, rng);
    Ok(PairSample {
        x,
        y,
        x_pair,
        y_pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthlab::{LabelDist, MeanMap};

    fn categorical_model() -> SyntheticModel {
        SyntheticModel {
            label_dist: LabelDist::Categorical {
                probs: vec![0.2, 0.5, 0.3],
            },
            mean_map: MeanMap::Classes {
                count: 3,
                lo: 0.0,
                hi: 3.0,
            },
            dim: 3,
            kappa: Some(10.0),
        }
    }

    #[test]
    fn wide_kernel_accepts_everything() {
        let m = SyntheticModel::default();
        let cfg = KernelConfig::rbf(1e9).unwrap();
        let mut rng = Rng::new(1);
        let mut reference = Rng::new(1);
        for _ in 0..100 {
            let y = m.sample_label(&mut rng);
            let _ = m.sample_label(&mut reference);
            let yp = sample_positive_label(&m, &y, &cfg, &mut rng).unwrap();
            // one proposal and one acceptance draw per sample
            let expect = m.sample_label(&mut reference);
            reference.uniform();
            assert_eq!(yp, expect);
        }
    }

    #[test]
    fn delta_kernel_positive_shares_the_label() {
        let m = categorical_model();
        let cfg = KernelConfig::categorical();
        let mut rng = Rng::new(2);
        for _ in 0..500 {
            let p = sample_positive_pair(&m, &cfg, &mut rng).unwrap();
            assert_eq!(p.y, p.y_pair);
        }
    }

    #[test]
    fn negatives_never_repeat_the_label() {
        let m = categorical_model();
        let cfg = KernelConfig::categorical();
        let mut rng = Rng::new(3);
        for _ in 0..500 {
            let p = sample_negative_pair(&m, &cfg, &mut rng).unwrap();
            assert_ne!(p.y, p.y_pair);
        }
    }

    #[test]
    fn narrow_kernel_positives_concentrate() {
        let m = SyntheticModel::default();
        let cfg = KernelConfig::rbf(0.1).unwrap();
        let mut rng = Rng::new(4);
        let n = 2000;
        let close = (0..n)
            .filter(|_| {
                let p = sample_positive_pair(&m, &cfg, &mut rng).unwrap();
                (p.y.continuous[0] - p.y_pair.continuous[0]).abs() < 0.5
            })
            .count();
        assert!(close as f64 >= 0.99 * n as f64, "{close}/{n}");
    }

    #[test]
    fn negatives_are_less_similar_than_independent_draws() {
        let m = SyntheticModel::default();
        let cfg = KernelConfig::rbf(2.0).unwrap();
        let mut rng = Rng::new(5);
        let n = 100_000;
        let (mut neg, mut ind) = (0.0, 0.0);
        for _ in 0..n {
            let y = m.sample_label(&mut rng);
            let yn = sample_negative_label(&m, &y, &cfg, &mut rng).unwrap();
            let yi = m.sample_label(&mut rng);
            neg += cfg.eval(&y, &yn).unwrap();
            ind += cfg.eval(&y, &yi).unwrap();
        }
        assert!(neg / (n as f64) < ind / (n as f64));
    }

    #[test]
    fn point_mass_labels_exhaust_the_negative_budget() {
        let m = SyntheticModel {
            label_dist: LabelDist::Discrete {
                values: vec![4.0],
                probs: vec![1.0],
            },
            ..SyntheticModel::default()
        };
        let cfg = KernelConfig::rbf(1.0).unwrap();
        let y = MetaRecord::continuous(&[4.0]);
        assert!(matches!(
            sample_negative_label(&m, &y, &cfg, &mut Rng::new(6)),
            Err(Error::RejectionBudget(_))
        ));
    }
}
