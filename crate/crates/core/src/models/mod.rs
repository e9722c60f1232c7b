//! The model contract and the built-in benchmark models.

mod mixture;
mod queue;
mod toggle;

use rand::RngCore;

pub use mixture::{mixture_draw, MvMixture, NormalMixture};
pub use queue::{mg1_departure_recursion, mg1_summaries, Mg1Queue, QueueParams, QUEUE_SUMMARY_DIM};
pub use toggle::{
    simulate_cells, toggle_measure, toggle_step, toggle_summary, SummaryScaling, ToggleConfig,
    ToggleSwitch, ToggleSwitchParams, TOGGLE_SUMMARY_DIM,
};

use crate::error::Result;

/// Random number generator handed to every model call.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// A likelihood-free model: prior, forward simulator and discrepancy.
///
/// Implementations must be pure given the RNG they are handed so that
/// particles can be simulated concurrently.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    /// Parameter dimension `p`.
    fn param_dim(&self) -> usize;

    /// Dimension `q` of the simulated (summary) data.
    fn data_dim(&self) -> usize;

    /// Observed (summary) data.
    fn observed(&self) -> &[f64];

    fn prior_sample(&self, rng: &mut SimRng) -> Vec<f64>;

    /// Prior density; exactly zero outside the support.
    fn prior_density(&self, theta: &[f64]) -> f64;

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Vec<f64>>;

    fn discrepancy(&self, x: &[f64], x_obs: &[f64]) -> f64;

    fn distance_to_observed(&self, x: &[f64]) -> f64 {
        self.discrepancy(x, self.observed())
    }
}

/// Independent uniform prior on an open box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxPrior {
    lower: Vec<f64>,
    upper: Vec<f64>,
    density: f64,
}

impl BoxPrior {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(lower.iter().zip(&upper).all(|(l, u)| l < u));
        let density = lower
            .iter()
            .zip(&upper)
            .map(|(l, u)| 1.0 / (u - l))
            .product();
        Self {
            lower,
            upper,
            density,
        }
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l + (u - l) * open_unit(rng))
            .collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.lower.len()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| *t > *l && *t < *u)
    }

    pub fn density(&self, theta: &[f64]) -> f64 {
        if self.contains(theta) {
            self.density
        } else {
            0.0
        }
    }
}

/// Uniform draw on the open interval (0, 1).
pub fn open_unit(rng: &mut SimRng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Sum of squared coordinate differences.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
