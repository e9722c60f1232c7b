use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{squared_distance, BoxPrior, Model, SimRng};
use crate::error::Result;

/// Standard deviation of the narrow mixture component.
const NARROW_SD: f64 = 0.1;
const PRIOR_HALF_WIDTH: f64 = 10.0;

/// One draw from `0.5 N_p(theta, I) + 0.5 N_p(theta, 0.01 I)`.
///
/// A single coin picks the component for the whole vector.
pub fn mixture_draw(theta: &[f64], rng: &mut SimRng) -> Vec<f64> {
    let sd = if rng.random::<f64>() < 0.5 {
        1.0
    } else {
        NARROW_SD
    };
    theta
        .iter()
        .map(|t| {
            let z: f64 = StandardNormal.sample(rng);
            t + sd * z
        })
        .collect()
}

/// Scalar mixture `x | theta ~ 0.5 N(theta, 1) + 0.5 N(theta, 0.01)`,
/// prior `U(-10, 10)`, discrepancy `|x - x_obs|`.
#[derive(Debug, Clone)]
pub struct NormalMixture {
    observed: [f64; 1],
    prior: BoxPrior,
}

impl NormalMixture {
    pub fn new(x_obs: f64) -> Self {
        Self {
            observed: [x_obs],
            prior: BoxPrior::new(vec![-PRIOR_HALF_WIDTH], vec![PRIOR_HALF_WIDTH]),
        }
    }
}

impl Default for NormalMixture {
    fn default() -> Self {
        Self::new(0.0)
    }
}

impl Model for NormalMixture {
    fn name(&self) -> &str {
        "normal_mixture"
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn data_dim(&self) -> usize {
        1
    }

    fn observed(&self) -> &[f64] {
        &self.observed
    }

    fn prior_sample(&self, rng: &mut SimRng) -> Vec<f64> {
        self.prior.sample(rng)
    }

    fn prior_density(&self, theta: &[f64]) -> f64 {
        self.prior.density(theta)
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(mixture_draw(theta, rng))
    }

    fn discrepancy(&self, x: &[f64], x_obs: &[f64]) -> f64 {
        (x[0] - x_obs[0]).abs()
    }
}

/// `p`-variate mixture with prior `U[-10, 10]^p` and squared euclidean
/// discrepancy.
#[derive(Debug, Clone)]
pub struct MvMixture {
    observed: Vec<f64>,
    prior: BoxPrior,
}

impl MvMixture {
    pub fn new(x_obs: Vec<f64>) -> Self {
        assert!(!x_obs.is_empty(), "mv_mixture needs p >= 1");
        let p = x_obs.len();
        Self {
            observed: x_obs,
            prior: BoxPrior::new(vec![-PRIOR_HALF_WIDTH; p], vec![PRIOR_HALF_WIDTH; p]),
        }
    }

    /// Observation at the origin in `p` dimensions.
    pub fn centered(p: usize) -> Self {
        Self::new(vec![0.0; p])
    }
}

impl Model for MvMixture {
    fn name(&self) -> &str {
        "mv_mixture"
    }

    fn param_dim(&self) -> usize {
        self.observed.len()
    }

    fn data_dim(&self) -> usize {
        self.observed.len()
    }

    fn observed(&self) -> &[f64] {
        &self.observed
    }

    fn prior_sample(&self, rng: &mut SimRng) -> Vec<f64> {
        self.prior.sample(rng)
    }

    fn prior_density(&self, theta: &[f64]) -> f64 {
        self.prior.density(theta)
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(mixture_draw(theta, rng))
    }

    fn discrepancy(&self, x: &[f64], x_obs: &[f64]) -> f64 {
        squared_distance(x, x_obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, std_dev};
    use rand::SeedableRng;

    fn scalar_draws(theta: f64, n: usize, seed: u64) -> Vec<f64> {
        let model = NormalMixture::default();
        let mut rng = SimRng::seed_from_u64(seed);
        (0..n)
            .map(|_| model.simulate(&[theta], &mut rng).unwrap()[0])
            .collect()
    }

    #[test]
    fn scalar_moments() {
        let x = scalar_draws(3.0, 100_000, 11);
        assert!((mean(&x) - 3.0).abs() < 0.02);
        let var = std_dev(&x).powi(2);
        assert!((var / 0.505 - 1.0).abs() < 0.02, "var = {var}");
    }

    #[test]
    fn scalar_window_fraction() {
        // 0.5 * P(|Z| < 0.3) + 0.5 * P(|Z| < 3) = 0.5 * 0.2358 + 0.5 * 0.9973
        let x = scalar_draws(0.0, 100_000, 12);
        let frac = x.iter().filter(|v| v.abs() < 0.3).count() as f64 / x.len() as f64;
        assert!((frac - 0.6166).abs() < 0.006, "frac = {frac}");
    }

    #[test]
    fn bivariate_covariance() {
        let model = MvMixture::centered(2);
        let mut rng = SimRng::seed_from_u64(13);
        let draws: Vec<Vec<f64>> = (0..100_000)
            .map(|_| model.simulate(&[1.0, -1.0], &mut rng).unwrap())
            .collect();
        let n = draws.len() as f64;
        let m0 = draws.iter().map(|d| d[0]).sum::<f64>() / n;
        let m1 = draws.iter().map(|d| d[1]).sum::<f64>() / n;
        let c00 = draws.iter().map(|d| (d[0] - m0).powi(2)).sum::<f64>() / n;
        let c11 = draws.iter().map(|d| (d[1] - m1).powi(2)).sum::<f64>() / n;
        let c01 = draws.iter().map(|d| (d[0] - m0) * (d[1] - m1)).sum::<f64>() / n;
        assert!((c00 / 0.505 - 1.0).abs() < 0.03);
        assert!((c11 / 0.505 - 1.0).abs() < 0.03);
        assert!(c01.abs() < 0.01);
    }

    #[test]
    fn p1_matches_scalar_draws() {
        let scalar = NormalMixture::default();
        let mv = MvMixture::centered(1);
        let mut a = SimRng::seed_from_u64(5);
        let mut b = SimRng::seed_from_u64(5);
        for _ in 0..1000 {
            assert_eq!(scalar.prior_sample(&mut a), mv.prior_sample(&mut b));
            assert_eq!(
                scalar.simulate(&[0.7], &mut a).unwrap(),
                mv.simulate(&[0.7], &mut b).unwrap()
            );
        }
        assert_eq!(scalar.discrepancy(&[-2.0], &[0.0]), 2.0);
        assert_eq!(mv.discrepancy(&[-2.0], &[0.0]), 4.0);
    }

    #[test]
    fn discrepancy_to_self_is_zero() {
        let mv = MvMixture::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(mv.discrepancy(mv.observed(), mv.observed()), 0.0);
        let s = NormalMixture::new(0.3);
        assert_eq!(s.distance_to_observed(&[0.3]), 0.0);
    }

    #[test]
    fn prior_is_zero_outside_support() {
        let s = NormalMixture::default();
        assert_eq!(s.prior_density(&[10.0]), 0.0);
        assert_eq!(s.prior_density(&[-10.5]), 0.0);
        assert_eq!(s.prior_density(&[0.0]), 0.05);
    }
}
