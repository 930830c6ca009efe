//! Bowel-wall masking for reconstruction pretraining.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Mask, ScalarGrid};
use crate::numeric;

/// Gaussian fill for masked voxels. Defaults suit z-scored intensities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "default_stddev")]
    pub stddev: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_stddev() -> f64 {
    1.0
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            mean: 0.0,
            stddev: 1.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || !(self.stddev.is_finite() && self.stddev >= 0.0) {
            return Err(Error::invalid(format!(
                "noise needs finite mean and stddev >= 0, got mean {} stddev {}",
                self.mean, self.stddev
            )));
        }
        Ok(())
    }
}

/// Replaces voxels inside `wall` with independent Gaussian draws.
///
/// Draws are taken in z-major order over the masked voxels from one stream
/// seeded by `noise.seed`. Voxels outside the mask are copied unchanged.
pub fn mask_bowel_wall(image: &ScalarGrid, wall: &Mask, noise: &NoiseSpec) -> Result<ScalarGrid> {
    image.check_geometry(wall, "mask_bowel_wall")?;
    noise.validate()?;
    let dist = Normal::new(noise.mean, noise.stddev).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let data = image
        .data()
        .iter()
        .zip(wall.data())
        .map(|(&v, &inside)| if inside { dist.sample(&mut rng) } else { v })
        .collect();
    ScalarGrid::new(image.dims(), image.spacing(), data)
}

/// Mean absolute difference over all voxels.
pub fn l1_recon_loss(image: &ScalarGrid, recon: &ScalarGrid) -> Result<f64> {
    image.check_geometry(recon, "l1_recon_loss")?;
    let total = numeric::sum(image.data().iter().zip(recon.data()).map(|(a, b)| (a - b).abs()));
    Ok(total / image.len() as f64)
}

/// Mean absolute difference over the voxels of `region`; 0 for an empty region.
pub fn l1_recon_loss_masked(image: &ScalarGrid, recon: &ScalarGrid, region: &Mask) -> Result<f64> {
    image.check_geometry(recon, "l1_recon_loss")?;
    image.check_geometry(region, "l1_recon_loss")?;
    let count = region.count();
    if count == 0 {
        return Ok(0.0);
    }
    let total = numeric::sum(
        image
            .data()
            .iter()
            .zip(recon.data())
            .zip(region.data())
            .filter(|(_, &m)| m)
            .map(|((a, b), _)| (a - b).abs()),
    );
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Dims, Spacing};
    use rand::Rng;

    fn random_grid(dims: Dims, seed: u64) -> ScalarGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dims.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        ScalarGrid::new(dims, Spacing::isotropic(), data).unwrap()
    }

    fn random_mask(dims: Dims, seed: u64) -> Mask {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dims.len()).map(|_| rng.random_bool(0.3)).collect();
        Mask::new(dims, Spacing::isotropic(), data).unwrap()
    }

    #[test]
    fn empty_wall_is_identity() {
        let d = Dims::new(4, 5, 6).unwrap();
        let x = random_grid(d, 1);
        let b = Mask::filled(d, Spacing::isotropic(), false).unwrap();
        assert_eq!(mask_bowel_wall(&x, &b, &NoiseSpec::default()).unwrap(), x);
    }

    #[test]
    fn zero_stddev_fills_mean() {
        let d = Dims::new(4, 4, 4).unwrap();
        let x = random_grid(d, 2);
        let b = random_mask(d, 3);
        let noise = NoiseSpec {
            mean: 2.5,
            stddev: 0.0,
            seed: 9,
        };
        let out = mask_bowel_wall(&x, &b, &noise).unwrap();
        for ((o, i), m) in out.data().iter().zip(x.data()).zip(b.data()) {
            assert_eq!(*o, if *m { 2.5 } else { *i });
        }
    }

    #[test]
    fn full_wall_noise_statistics() {
        let d = Dims::new(32, 32, 32).unwrap();
        let x = ScalarGrid::filled(d, Spacing::isotropic(), 0.0).unwrap();
        let b = Mask::filled(d, Spacing::isotropic(), true).unwrap();
        let out = mask_bowel_wall(
            &x,
            &b,
            &NoiseSpec {
                seed: 5,
                ..NoiseSpec::default()
            },
        )
        .unwrap();
        let n = d.len() as f64;
        let mean = out.data().iter().sum::<f64>() / n;
        let var = out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 5.0 / n.sqrt(), "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() <= 0.02, "stddev {}", var.sqrt());
    }

    #[test]
    fn masking_is_deterministic_and_seed_dependent() {
        let d = Dims::new(5, 5, 5).unwrap();
        let x = random_grid(d, 4);
        let b = random_mask(d, 5);
        let a1 = mask_bowel_wall(
            &x,
            &b,
            &NoiseSpec {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let a2 = mask_bowel_wall(
            &x,
            &b,
            &NoiseSpec {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let a3 = mask_bowel_wall(
            &x,
            &b,
            &NoiseSpec {
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a1, a2);
        assert_ne!(a1, a3);
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = Dims::new(2, 2, 2).unwrap();
        let x = random_grid(d, 1);
        let b = Mask::filled(Dims::new(2, 2, 3).unwrap(), Spacing::isotropic(), true).unwrap();
        assert!(mask_bowel_wall(&x, &b, &NoiseSpec::default()).is_err());
        let ok = Mask::filled(d, Spacing::isotropic(), true).unwrap();
        assert!(mask_bowel_wall(
            &x,
            &ok,
            &NoiseSpec {
                stddev: -1.0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(l1_recon_loss(&x, &random_grid(Dims::new(2, 2, 3).unwrap(), 1)).is_err());
    }

    #[test]
    fn l1_values() {
        let d = Dims::new(4, 4, 4).unwrap();
        let x = random_grid(d, 6);
        assert_eq!(l1_recon_loss(&x, &x).unwrap(), 0.0);
        let zero = ScalarGrid::filled(d, Spacing::isotropic(), 0.0).unwrap();
        let c = ScalarGrid::filled(d, Spacing::isotropic(), -1.75).unwrap();
        assert_eq!(l1_recon_loss(&zero, &c).unwrap(), 1.75);
        let y = random_grid(d, 7);
        let mut brute = 0.0;
        for i in 0..64 {
            brute += (x.data()[i] - y.data()[i]).abs();
        }
        assert!((l1_recon_loss(&x, &y).unwrap() - brute / 64.0).abs() < 1e-14);
    }

    #[test]
    fn l1_restricted_to_region() {
        let d = Dims::new(1, 1, 4).unwrap();
        let s = Spacing::isotropic();
        let x = ScalarGrid::new(d, s, vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let y = ScalarGrid::new(d, s, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = Mask::new(d, s, vec![false, true, false, true]).unwrap();
        assert_eq!(l1_recon_loss_masked(&x, &y, &m).unwrap(), 3.0);
        assert_eq!(l1_recon_loss(&x, &y).unwrap(), 2.5);
        let none = Mask::filled(d, s, false).unwrap();
        assert_eq!(l1_recon_loss_masked(&x, &y, &none).unwrap(), 0.0);
    }
}
