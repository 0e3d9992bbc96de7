use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Strengths of the stochastic view transforms, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Standard deviation of additive Gaussian noise.
    pub noise: f64,
    /// Probability of zeroing each coordinate.
    pub mask: f64,
    /// Random crop-and-resize strength; the crop side shrinks by up to half
    /// of this fraction. Only applied to square image inputs.
    pub crop: f64,
    /// Probability of a horizontal flip. Only applied to square image inputs.
    pub flip: f64,
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("noise", self.noise),
            ("mask", self.mask),
            ("crop", self.crop),
            ("flip", self.flip),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "augmentation {name}={v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// One stochastic view of `x`. `image_side` marks `x` as a row-major
/// single-channel square image. Outputs are clamped to `[0, 1]`.
pub fn augment(
    x: &[f64],
    rng: &mut Rng,
    cfg: &AugmentConfig,
    image_side: Option<usize>,
) -> Vec<f64> {
    let mut out = x.to_vec();
    if let Some(side) = image_side.filter(|s| s * s == x.len()) {
        if cfg.crop > 0.0 {
            out = crop_resize(&out, side, cfg.crop, rng);
        }
        if cfg.flip > 0.0 && rng.uniform() < cfg.flip {
            for row in out.chunks_mut(side) {
                row.reverse();
            }
        }
    }
    if cfg.noise > 0.0 {
        for v in out.iter_mut() {
            *v = (*v + cfg.noise * rng.normal()).clamp(0.0, 1.0);
        }
    }
    if cfg.mask > 0.0 {
        for v in out.iter_mut() {
            if rng.uniform() < cfg.mask {
                *v = 0.0;
            }
        }
    }
    out
}

fn crop_resize(img: &[f64], side: usize, strength: f64, rng: &mut Rng) -> Vec<f64> {
    let shrink = 0.5 * strength * rng.uniform();
    let crop = ((side as f64 * (1.0 - shrink)).round() as usize).clamp(1, side);
    let max_off = side - crop;
    let (oy, ox) = (rng.below(max_off + 1), rng.below(max_off + 1));
    let scale = crop as f64 / side as f64;
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            // nearest neighbour from the crop window
            let sr = oy + (((r as f64 + 0.5) * scale) as usize).min(crop - 1);
            let sc = ox + (((c as f64 + 0.5) * scale) as usize).min(crop - 1);
            out[r * side + c] = img[sr * side + sc];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_strengths_are_identity() {
        let x: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
        let mut rng = Rng::new(1);
        assert_eq!(augment(&x, &mut rng, &AugmentConfig::default(), Some(4)), x);
    }

    #[test]
    fn full_mask_zeroes_everything() {
        let x = vec![0.7; 25];
        let cfg = AugmentConfig {
            mask: 1.0,
            ..Default::default()
        };
        assert!(augment(&x, &mut Rng::new(2), &cfg, None)
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn noise_variance() {
        let cfg = AugmentConfig {
            noise: 0.1,
            ..Default::default()
        };
        let mut rng = Rng::new(3);
        let x = vec![0.5; 10];
        let mut sq = 0.0;
        let draws = 10_000;
        for _ in 0..draws {
            let y = augment(&x, &mut rng, &cfg, None);
            sq += y.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>();
        }
        let msq = sq / (draws * 10) as f64;
        // 1e5 chi-square(1) terms: relative sd ≈ 0.0045
        assert!((msq - 0.01).abs() < 0.0005, "{msq}");
    }

    #[test]
    fn flip_mirrors_rows_and_crop_stays_in_range() {
        let x: Vec<f64> = (0..9).map(|i| i as f64 / 9.0).collect();
        let cfg = AugmentConfig {
            flip: 1.0,
            ..Default::default()
        };
        let y = augment(&x, &mut Rng::new(4), &cfg, Some(3));
        assert_eq!(&y[..3], &[x[2], x[1], x[0]]);
        let cfg = AugmentConfig {
            crop: 1.0,
            ..Default::default()
        };
        let mut rng = Rng::new(5);
        for _ in 0..100 {
            let y = augment(&x, &mut rng, &cfg, Some(3));
            assert!(y.iter().all(|v| x.contains(v)));
        }
    }

    #[test]
    fn validation() {
        let bad = AugmentConfig {
            noise: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
