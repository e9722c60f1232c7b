//! Two-gene toggle switch observed through a noisy snapshot of one gene
//! across a population of cells.
//!
//! State recursion for each cell, with independent standard normal `xi`:
//!
//! ```text
//! u' = u + h a_u / (1 + v^b_u) - h (1 + 0.03 u) + 0.5 h xi_u
//! v' = v + h a_v / (1 + u^b_v) - h (1 + 0.03 v) + 0.5 h xi_v
//! ```
//!
//! States are clamped at zero after every step. The measurement at the
//! horizon is `y = u + mu + mu sigma eta / max(u, 0.01)^gamma`.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use super::{squared_distance, BoxPrior, Model, SimRng};
use crate::error::{Error, Result};
use crate::stats::{mean, quantile_sorted, sorted_copy, std_dev};

pub const TOGGLE_SUMMARY_DIM: usize = 11;
const INITIAL_STATE: f64 = 10.0;
const DECAY: f64 = 0.03;
const STATE_NOISE: f64 = 0.5;
const MEASUREMENT_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToggleSwitchParams {
    pub alpha_u: f64,
    pub alpha_v: f64,
    pub beta_u: f64,
    pub beta_v: f64,
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl ToggleSwitchParams {
    /// Parameters used to generate the synthetic observation by default.
    pub const TRUTH: Self = Self {
        alpha_u: 22.0,
        alpha_v: 12.0,
        beta_u: 4.0,
        beta_v: 4.5,
        mu: 325.0,
        sigma: 0.25,
        gamma: 0.15,
    };

    /// Reads `(alpha_u, alpha_v, beta_u, beta_v, mu, sigma, gamma)`.
    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        match *theta {
            [alpha_u, alpha_v, beta_u, beta_v, mu, sigma, gamma] => Ok(Self {
                alpha_u,
                alpha_v,
                beta_u,
                beta_v,
                mu,
                sigma,
                gamma,
            }),
            _ => Err(Error::DimensionMismatch {
                expected: 7,
                found: theta.len(),
            }),
        }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![
            self.alpha_u,
            self.alpha_v,
            self.beta_u,
            self.beta_v,
            self.mu,
            self.sigma,
            self.gamma,
        ]
    }
}

/// One step of the state recursion for a single cell.
pub fn toggle_step(
    u: f64,
    v: f64,
    params: &ToggleSwitchParams,
    h: f64,
    xi_u: f64,
    xi_v: f64,
) -> (f64, f64) {
    let next_u = u + h * params.alpha_u / (1.0 + v.powf(params.beta_u)) - h * (1.0 + DECAY * u)
        + h * STATE_NOISE * xi_u;
    let next_v = v + h * params.alpha_v / (1.0 + u.powf(params.beta_v)) - h * (1.0 + DECAY * v)
        + h * STATE_NOISE * xi_v;
    (next_u.max(0.0), next_v.max(0.0))
}

/// Noisy measurement of the final `u` state of one cell.
pub fn toggle_measure(u: f64, params: &ToggleSwitchParams, eta: f64) -> f64 {
    u + params.mu + params.mu * params.sigma * eta / u.max(MEASUREMENT_FLOOR).powf(params.gamma)
}

/// Raw signature of a cell sample: the nine deciles followed by the mean
/// and the population standard deviation.
pub fn toggle_summary(y: &[f64]) -> Vec<f64> {
    assert!(
        y.len() >= TOGGLE_SUMMARY_DIM,
        "toggle summary needs at least {TOGGLE_SUMMARY_DIM} cells"
    );
    let sorted = sorted_copy(y);
    let mut out: Vec<f64> = (1..=9)
        .map(|k| quantile_sorted(&sorted, k as f64 / 10.0))
        .collect();
    out.push(mean(y));
    out.push(std_dev(y));
    out
}

/// Per-coordinate location/scale standardization of a summary vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryScaling {
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

impl SummaryScaling {
    pub fn identity(dim: usize) -> Self {
        Self {
            location: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn new(location: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if location.len() != scale.len() {
            return Err(Error::LengthMismatch {
                left: location.len(),
                right: scale.len(),
            });
        }
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidConfig(
                "summary scales must be positive".into(),
            ));
        }
        Ok(Self { location, scale })
    }

    /// Location and scale estimated from summaries simulated under the prior.
    pub fn from_pilot(config: &ToggleConfig, runs: usize, seed: u64) -> Result<Self> {
        let prior = config.prior();
        let mut rng = SimRng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(runs);
        for _ in 0..runs {
            let theta = prior.sample(&mut rng);
            let params = ToggleSwitchParams::from_slice(&theta)?;
            rows.push(toggle_summary(&simulate_cells(&params, config, &mut rng)?));
        }
        let (location, scale) = (0..TOGGLE_SUMMARY_DIM)
            .map(|k| {
                let column: Vec<f64> = rows.iter().map(|r| r[k]).collect();
                let sd = std_dev(&column);
                (mean(&column), if sd > 0.0 { sd } else { 1.0 })
            })
            .unzip();
        Self::new(location, scale)
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.location.iter().zip(&self.scale))
            .map(|(x, (l, s))| (x - l) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToggleConfig {
    pub cells: usize,
    pub horizon: f64,
    pub step: f64,
    pub prior_lower: [f64; 7],
    pub prior_upper: [f64; 7],
}

impl Default for ToggleConfig {
    fn default() -> Self {
        Self {
            cells: 2000,
            horizon: 300.0,
            step: 1.0,
            prior_lower: [0.0, 0.0, 0.0, 0.0, 250.0, 0.0, 0.0],
            prior_upper: [50.0, 50.0, 7.0, 7.0, 450.0, 0.5, 0.4],
        }
    }
}

impl ToggleConfig {
    pub fn steps(&self) -> Result<usize> {
        if !(self.step > 0.0 && self.horizon >= 0.0) {
            return Err(Error::InvalidConfig(
                "toggle step must be positive and horizon nonnegative".into(),
            ));
        }
        let n = (self.horizon / self.step).round();
        if ((n * self.step) - self.horizon).abs() > 1e-9 * self.horizon.max(1.0) {
            return Err(Error::InvalidConfig(
                "toggle horizon must be a multiple of the step".into(),
            ));
        }
        Ok(n as usize)
    }

    pub fn prior(&self) -> BoxPrior {
        BoxPrior::new(self.prior_lower.to_vec(), self.prior_upper.to_vec())
    }
}

/// Simulates every cell to the horizon and returns the measurements.
pub fn simulate_cells(
    params: &ToggleSwitchParams,
    config: &ToggleConfig,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let steps = config.steps()?;
    let h = config.step;
    let mut y = Vec::with_capacity(config.cells);
    for _ in 0..config.cells {
        let (mut u, mut v) = (INITIAL_STATE, INITIAL_STATE);
        for _ in 0..steps {
            let xi_u: f64 = StandardNormal.sample(rng);
            let xi_v: f64 = StandardNormal.sample(rng);
            (u, v) = toggle_step(u, v, params, h, xi_u, xi_v);
        }
        let eta: f64 = StandardNormal.sample(rng);
        let yc = toggle_measure(u, params, eta);
        if !(u.is_finite() && v.is_finite() && yc.is_finite()) {
            return Err(Error::NonFiniteState);
        }
        y.push(yc);
    }
    Ok(y)
}

/// Toggle switch model over the standardized 11-dimensional signature.
#[derive(Debug, Clone)]
pub struct ToggleSwitch {
    config: ToggleConfig,
    prior: BoxPrior,
    scaling: SummaryScaling,
    observed: Vec<f64>,
}

impl ToggleSwitch {
    /// `raw_observed` is the unstandardized signature of the data.
    pub fn new(
        config: ToggleConfig,
        raw_observed: &[f64],
        scaling: SummaryScaling,
    ) -> Result<Self> {
        config.steps()?;
        if config.cells < TOGGLE_SUMMARY_DIM {
            return Err(Error::InvalidConfig(format!(
                "toggle switch needs at least {TOGGLE_SUMMARY_DIM} cells"
            )));
        }
        for len in [raw_observed.len(), scaling.location.len()] {
            if len != TOGGLE_SUMMARY_DIM {
                return Err(Error::DimensionMismatch {
                    expected: TOGGLE_SUMMARY_DIM,
                    found: len,
                });
            }
        }
        Ok(Self {
            prior: config.prior(),
            observed: scaling.apply(raw_observed),
            config,
            scaling,
        })
    }

    /// Raw signature of data simulated at `truth` with `data_seed`.
    pub fn synthetic_signature(
        config: &ToggleConfig,
        truth: &ToggleSwitchParams,
        data_seed: u64,
    ) -> Result<Vec<f64>> {
        let mut rng = SimRng::seed_from_u64(data_seed);
        Ok(toggle_summary(&simulate_cells(truth, config, &mut rng)?))
    }

    pub fn config(&self) -> &ToggleConfig {
        &self.config
    }

    pub fn scaling(&self) -> &SummaryScaling {
        &self.scaling
    }
}

impl Model for ToggleSwitch {
    fn name(&self) -> &str {
        "toggle_switch"
    }

    fn param_dim(&self) -> usize {
        7
    }

    fn data_dim(&self) -> usize {
        TOGGLE_SUMMARY_DIM
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
        let params = ToggleSwitchParams::from_slice(theta)?;
        let y = simulate_cells(&params, &self.config, rng)?;
        Ok(self.scaling.apply(&toggle_summary(&y)))
    }

    fn discrepancy(&self, x: &[f64], x_obs: &[f64]) -> f64 {
        squared_distance(x, x_obs)
    }
}
