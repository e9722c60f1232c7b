//! Product kernels for parameter perturbation and data-space weighting.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::models::SimRng;
use crate::particle::{weighted_mean_var, ParticleSystem};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Gaussian,
    /// Box kernel; bandwidths are half-widths.
    Uniform,
}

/// Diagonal product kernel with one bandwidth per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    bandwidths: Vec<f64>,
    kind: KernelKind,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, bandwidths: Vec<f64>) -> Result<Self> {
        if bandwidths.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if let Some(&bad) = bandwidths.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "kernel bandwidth must be positive and finite, got {bad}"
            )));
        }
        Ok(Self { bandwidths, kind })
    }

    pub fn gaussian(bandwidths: Vec<f64>) -> Result<Self> {
        Self::new(KernelKind::Gaussian, bandwidths)
    }

    pub fn uniform(half_widths: Vec<f64>) -> Result<Self> {
        Self::new(KernelKind::Uniform, half_widths)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn dim(&self) -> usize {
        self.bandwidths.len()
    }

    fn check_dims(&self, point: &[f64], center: &[f64]) -> Result<()> {
        for len in [point.len(), center.len()] {
            if len != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    found: len,
                });
            }
        }
        Ok(())
    }

    /// Density of the kernel centred at `center`, evaluated at `point`.
    pub fn density(&self, point: &[f64], center: &[f64]) -> Result<f64> {
        self.check_dims(point, center)?;
        let d = match self.kind {
            KernelKind::Gaussian => point
                .iter()
                .zip(center)
                .zip(&self.bandwidths)
                .map(|((x, c), h)| {
                    let z = (x - c) / h;
                    (-0.5 * z * z).exp() / (h * (2.0 * PI).sqrt())
                })
                .product(),
            KernelKind::Uniform => {
                if self.in_box(point, center) {
                    self.bandwidths.iter().map(|h| 0.5 / h).product()
                } else {
                    0.0
                }
            }
        };
        Ok(d)
    }

    fn in_box(&self, point: &[f64], center: &[f64]) -> bool {
        point
            .iter()
            .zip(center)
            .zip(&self.bandwidths)
            .all(|((x, c), h)| (x - c).abs() < *h)
    }

    /// Log density without dimension checks; `-inf` outside a box support.
    pub(crate) fn log_density_unchecked(&self, point: &[f64], center: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Gaussian => {
                let mut acc = 0.0;
                for ((x, c), h) in point.iter().zip(center).zip(&self.bandwidths) {
                    let z = (x - c) / h;
                    acc -= 0.5 * z * z + h.ln() + LN_SQRT_2PI;
                }
                acc
            }
            KernelKind::Uniform => {
                if self.in_box(point, center) {
                    -self.bandwidths.iter().map(|h| (2.0 * h).ln()).sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn log_density(&self, point: &[f64], center: &[f64]) -> Result<f64> {
        self.check_dims(point, center)?;
        Ok(self.log_density_unchecked(point, center))
    }

    /// Draws `center + h * z` with independent standard normal `z`.
    pub fn sample(&self, center: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        if self.kind != KernelKind::Gaussian {
            return Err(Error::UnsupportedKind);
        }
        if center.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: center.len(),
            });
        }
        Ok(center
            .iter()
            .zip(&self.bandwidths)
            .map(|(c, h)| {
                let z: f64 = StandardNormal.sample(rng);
                c + h * z
            })
            .collect())
    }
}

/// Which half of a particle a bandwidth computation applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Theta,
    X,
}

/// Rule-of-thumb bandwidth `h_k = sigma_k * N^(-1/(d+4))`, floored at
/// `floor * (1 + |mean_k|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthRule {
    pub total_dim: usize,
    pub floor: f64,
}

impl BandwidthRule {
    pub const DEFAULT_FLOOR: f64 = 1e-8;

    pub fn new(total_dim: usize) -> Self {
        Self {
            total_dim,
            floor: Self::DEFAULT_FLOOR,
        }
    }

    pub fn exponent(&self) -> f64 {
        -1.0 / (self.total_dim as f64 + 4.0)
    }

    /// Bandwidths from per-dimension weighted spreads and means.
    pub fn bandwidths(&self, sigmas: &[f64], means: &[f64], n: usize) -> Result<Vec<f64>> {
        if n < 2 {
            return Err(Error::InvalidPopulation(format!(
                "bandwidth rule needs at least 2 particles, got {n}"
            )));
        }
        if self.total_dim == 0 || !(self.floor > 0.0) {
            return Err(Error::InvalidConfig(
                "bandwidth rule needs total_dim >= 1 and a positive floor".into(),
            ));
        }
        if sigmas.iter().all(|&s| s == 0.0) {
            return Err(Error::DegeneratePopulation);
        }
        let shrink = (n as f64).powf(self.exponent());
        Ok(sigmas
            .iter()
            .zip(means)
            .map(|(s, m)| (s * shrink).max(self.floor * (1.0 + m.abs())))
            .collect())
    }
}

/// Square root of the weighted population variance.
pub fn weighted_std(values: &[f64], weights: &[f64]) -> f64 {
    weighted_mean_var(values, weights).1.max(0.0).sqrt()
}

/// Rule-of-thumb bandwidths for the parameter or data block of `system`.
pub fn rule_of_thumb_bandwidths(
    system: &ParticleSystem,
    rule: &BandwidthRule,
    which: Block,
) -> Result<Vec<f64>> {
    let dim = match which {
        Block::Theta => system.theta_dim(),
        Block::X => system.x_dim(),
    };
    let (means, sigmas): (Vec<f64>, Vec<f64>) = (0..dim)
        .map(|k| {
            let column = match which {
                Block::Theta => system.theta_column(k),
                Block::X => system.x_column(k),
            };
            let (m, v) = weighted_mean_var(&column, system.weights());
            (m, v.max(0.0).sqrt())
        })
        .unzip();
    rule.bandwidths(&sigmas, &means, system.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particle::Particle;
    use proptest::prelude::*;
    use rand::SeedableRng;

    const PHI0: f64 = 0.398_942_280_401_432_7;
    // exp(-0.5) / sqrt(2 pi)
    const PHI1: f64 = 0.241_970_724_519_143_37;

    #[test]
    fn gaussian_density_examples() {
        let k1 = KernelSpec::gaussian(vec![1.0]).unwrap();
        assert!((k1.density(&[0.0], &[0.0]).unwrap() - PHI0).abs() < 1e-15);
        assert!((k1.density(&[0.0], &[1.0]).unwrap() - PHI1).abs() < 1e-15);
        let k2 = KernelSpec::gaussian(vec![1.0, 1.0]).unwrap();
        let d = k2.density(&[0.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((d - PHI0 * PHI1).abs() < 1e-15);
        assert!((d - 0.096_532_4).abs() < 1e-7);
        assert!(matches!(
            k2.density(&[0.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn log_density_matches_density() {
        let k = KernelSpec::gaussian(vec![0.3, 2.0]).unwrap();
        let d = k.density(&[0.1, -1.0], &[0.5, 0.4]).unwrap();
        let ld = k.log_density(&[0.1, -1.0], &[0.5, 0.4]).unwrap();
        assert!((ld.exp() - d).abs() < 1e-14);
    }

    #[test]
    fn uniform_support() {
        let k = KernelSpec::uniform(vec![1.0, 0.5]).unwrap();
        assert_eq!(k.density(&[0.5, 0.2], &[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(k.density(&[-0.9, -0.4], &[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(k.density(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(k.density(&[0.0, 0.6], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(
            k.log_density(&[0.0, 0.6], &[0.0, 0.0]).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn invalid_bandwidths_rejected() {
        assert!(KernelSpec::gaussian(vec![0.0]).is_err());
        assert!(KernelSpec::gaussian(vec![f64::NAN]).is_err());
        assert!(KernelSpec::uniform(vec![-1.0]).is_err());
        assert!(KernelSpec::gaussian(vec![]).is_err());
    }

    #[test]
    fn sampling_examples() {
        let mut rng = SimRng::seed_from_u64(1);
        let tiny = KernelSpec::gaussian(vec![1e-12, 1e-12]).unwrap();
        let s = tiny.sample(&[3.0, -4.0], &mut rng).unwrap();
        assert!((s[0] - 3.0).abs() < 1e-9 && (s[1] + 4.0).abs() < 1e-9);

        let one = KernelSpec::gaussian(vec![1.0]).unwrap();
        let two = KernelSpec::gaussian(vec![2.0]).unwrap();
        let a = one.sample(&[0.0], &mut SimRng::seed_from_u64(9)).unwrap()[0];
        let b = two.sample(&[0.0], &mut SimRng::seed_from_u64(9)).unwrap()[0];
        assert_eq!(b, 2.0 * a);

        let uniform = KernelSpec::uniform(vec![1.0]).unwrap();
        assert!(matches!(
            uniform.sample(&[0.0], &mut rng),
            Err(Error::UnsupportedKind)
        ));
    }

    #[test]
    fn sample_sd_matches_bandwidth() {
        let k = KernelSpec::gaussian(vec![0.5]).unwrap();
        let mut rng = SimRng::seed_from_u64(2024);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| k.sample(&[1.0], &mut rng).unwrap()[0])
            .collect();
        let sd = crate::stats::std_dev(&draws);
        assert!((sd - 0.5).abs() < 0.005, "sd = {sd}");
    }

    #[test]
    fn weighted_std_examples() {
        assert_eq!(weighted_std(&[0.0, 2.0], &[0.5, 0.5]), 1.0);
        assert_eq!(weighted_std(&[5.0, -3.0], &[1.0, 0.0]), 0.0);
        let s = weighted_std(&[0.0, 1.0, 2.0], &[0.2, 0.3, 0.5]);
        assert!((s - 0.61f64.sqrt()).abs() < 1e-14);
        assert!((s - 0.781).abs() < 1e-3);
    }

    #[test]
    fn bandwidth_examples() {
        let rule = BandwidthRule::new(2);
        let h = rule.bandwidths(&[2.0], &[0.0], 5000).unwrap();
        assert!((h[0] - 0.483_654_2).abs() < 1e-6);
        assert!((h[0] - 2.0 / 5000f64.powf(1.0 / 6.0)).abs() < 1e-15);
        assert!(rule.bandwidths(&[1.0], &[0.0], 1).is_err());
        let h = rule.bandwidths(&[0.0, 1.0], &[3.0, 0.0], 100).unwrap();
        assert_eq!(h[0], 1e-8 * 4.0);
        assert!(matches!(
            rule.bandwidths(&[0.0, 0.0], &[0.0, 0.0], 100),
            Err(Error::DegeneratePopulation)
        ));
    }

    #[test]
    fn population_bandwidths_use_weights() {
        let particles = vec![
            Particle::new(vec![0.0], vec![10.0]),
            Particle::new(vec![2.0], vec![10.0]),
        ];
        let system = ParticleSystem::uniform(particles, 1).unwrap();
        let rule = BandwidthRule::new(2);
        let h = rule_of_thumb_bandwidths(&system, &rule, Block::Theta).unwrap();
        assert!((h[0] - 2f64.powf(-1.0 / 6.0)).abs() < 1e-15);
        assert!(matches!(
            rule_of_thumb_bandwidths(&system, &rule, Block::X),
            Err(Error::DegeneratePopulation)
        ));
    }

    proptest! {
        #[test]
        fn product_of_marginals(
            p in prop::array::uniform2(-5.0f64..5.0),
            c in prop::array::uniform2(-5.0f64..5.0),
            h in prop::array::uniform2(0.05f64..3.0),
        ) {
            let joint = KernelSpec::gaussian(h.to_vec()).unwrap().density(&p, &c).unwrap();
            let m0 = KernelSpec::gaussian(vec![h[0]]).unwrap().density(&p[..1], &c[..1]).unwrap();
            let m1 = KernelSpec::gaussian(vec![h[1]]).unwrap().density(&p[1..], &c[1..]).unwrap();
            prop_assert_eq!(joint, m0 * m1);
        }

        #[test]
        fn uniform_constant_on_support(
            p in prop::array::uniform2(-3.0f64..3.0),
            h in prop::array::uniform2(0.1f64..2.0),
        ) {
            let k = KernelSpec::uniform(h.to_vec()).unwrap();
            let inside = p.iter().zip(&h).all(|(x, hk)| x.abs() < *hk);
            let d = k.density(&p, &[0.0, 0.0]).unwrap();
            if inside {
                prop_assert_eq!(d, k.density(&[0.0, 0.0], &[0.0, 0.0]).unwrap());
                prop_assert!((d - 0.25 / (h[0] * h[1])).abs() <= 1e-12 * d);
            } else {
                prop_assert_eq!(d, 0.0);
            }
        }

        #[test]
        fn bandwidths_scale_equivariant(
            values in prop::collection::vec(-10.0f64..10.0, 3..40),
            scale in 0.1f64..50.0,
        ) {
            let n = values.len();
            let build = |s: f64| {
                let particles = values
                    .iter()
                    .map(|&v| Particle::new(vec![v * s], vec![0.0]))
                    .collect();
                ParticleSystem::uniform(particles, 1).unwrap()
            };
            let rule = BandwidthRule::new(2);
            let spread = crate::stats::std_dev(&values);
            prop_assume!(spread > 1e-3);
            let h1 = rule_of_thumb_bandwidths(&build(1.0), &rule, Block::Theta).unwrap()[0];
            let hc = rule_of_thumb_bandwidths(&build(scale), &rule, Block::Theta).unwrap()[0];
            prop_assert!((hc - scale * h1).abs() <= 1e-10 * hc, "n={} h1={} hc={}", n, h1, hc);
        }
    }
}
