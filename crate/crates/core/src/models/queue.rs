//! Single-server first-come-first-served queue with uniform service times
//! and exponential inter-arrival times, observed through inter-departure
//! times.

use rand::SeedableRng;
use rand_distr::{Distribution, Exp};

use super::{open_unit, squared_distance, Model, SimRng};
use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

pub const QUEUE_SUMMARY_DIM: usize = 5;
const PRIOR_WIDTH: f64 = 10.0;

/// `(theta1, theta2, theta3)`: service-time minimum, service-time maximum
/// and arrival rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueParams {
    pub service_min: f64,
    pub service_max: f64,
    pub arrival_rate: f64,
}

impl QueueParams {
    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        match *theta {
            [service_min, service_max, arrival_rate] => Ok(Self {
                service_min,
                service_max,
                arrival_rate,
            }),
            _ => Err(Error::DimensionMismatch {
                expected: 3,
                found: theta.len(),
            }),
        }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.service_min, self.service_max, self.arrival_rate]
    }

    pub fn is_valid(&self) -> bool {
        0.0 <= self.service_min && self.service_min <= self.service_max && self.arrival_rate > 0.0
    }
}

/// Inter-departure times from inter-arrival gaps `W` and service times `U`:
///
/// `Y_r = U_r` if `sum_{i<=r} W_i <= sum_{i<r} Y_i`, otherwise
/// `Y_r = U_r + sum_{i<=r} W_i - sum_{i<r} Y_i`.
pub fn mg1_departure_recursion(arrival_gaps: &[f64], service: &[f64]) -> Result<Vec<f64>> {
    if arrival_gaps.len() != service.len() {
        return Err(Error::LengthMismatch {
            left: arrival_gaps.len(),
            right: service.len(),
        });
    }
    let mut arrived = 0.0;
    let mut departed = 0.0;
    let mut out = Vec::with_capacity(service.len());
    for (w, u) in arrival_gaps.iter().zip(service) {
        arrived += w;
        let y = if arrived <= departed {
            *u
        } else {
            u + arrived - departed
        };
        departed += y;
        out.push(y);
    }
    Ok(out)
}

/// `(min, q25, q50, q75, max)` of the inter-departure times.
pub fn mg1_summaries(departures: &[f64]) -> Vec<f64> {
    let sorted = crate::stats::sorted_copy(departures);
    [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&p| quantile_sorted(&sorted, p))
        .collect()
}

/// M/G/1 queue with prior `(theta1, theta2 - theta1, theta3) ~ U[0, 10]^3`
/// and summed squared summary differences as discrepancy.
#[derive(Debug, Clone)]
pub struct Mg1Queue {
    customers: usize,
    observed: Vec<f64>,
}

impl Mg1Queue {
    pub const DEFAULT_CUSTOMERS: usize = 50;
    pub const TRUTH: QueueParams = QueueParams {
        service_min: 1.0,
        service_max: 5.0,
        arrival_rate: 0.2,
    };

    pub fn new(customers: usize, observed: Vec<f64>) -> Result<Self> {
        if customers < QUEUE_SUMMARY_DIM {
            return Err(Error::InvalidConfig(format!(
                "queue needs at least {QUEUE_SUMMARY_DIM} customers, got {customers}"
            )));
        }
        if observed.len() != QUEUE_SUMMARY_DIM {
            return Err(Error::DimensionMismatch {
                expected: QUEUE_SUMMARY_DIM,
                found: observed.len(),
            });
        }
        Ok(Self {
            customers,
            observed,
        })
    }

    /// Model whose observation is simulated from `truth` with `data_seed`.
    pub fn synthetic(customers: usize, truth: QueueParams, data_seed: u64) -> Result<Self> {
        let mut rng = SimRng::seed_from_u64(data_seed);
        let x_obs = simulate_queue(truth, customers, &mut rng)?;
        Self::new(customers, x_obs)
    }

    pub fn customers(&self) -> usize {
        self.customers
    }
}

fn simulate_queue(params: QueueParams, customers: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
    if !params.is_valid() {
        return Err(Error::Model(format!("invalid queue parameters {params:?}")));
    }
    let gaps = Exp::new(params.arrival_rate).map_err(|e| Error::Model(e.to_string()))?;
    let width = params.service_max - params.service_min;
    let mut w = Vec::with_capacity(customers);
    let mut u = Vec::with_capacity(customers);
    for _ in 0..customers {
        w.push(gaps.sample(rng));
        u.push(params.service_min + width * open_unit(rng));
    }
    Ok(mg1_summaries(&mg1_departure_recursion(&w, &u)?))
}

impl Model for Mg1Queue {
    fn name(&self) -> &str {
        "mg1_queue"
    }

    fn param_dim(&self) -> usize {
        3
    }

    fn data_dim(&self) -> usize {
        QUEUE_SUMMARY_DIM
    }

    fn observed(&self) -> &[f64] {
        &self.observed
    }

    fn prior_sample(&self, rng: &mut SimRng) -> Vec<f64> {
        let service_min = PRIOR_WIDTH * open_unit(rng);
        let service_max = service_min + PRIOR_WIDTH * open_unit(rng);
        let arrival_rate = PRIOR_WIDTH * open_unit(rng);
        vec![service_min, service_max, arrival_rate]
    }

    fn prior_density(&self, theta: &[f64]) -> f64 {
        let inside = |v: f64| v > 0.0 && v < PRIOR_WIDTH;
        match *theta {
            [a, b, c] if inside(a) && inside(b - a) && inside(c) => PRIOR_WIDTH.powi(-3),
            _ => 0.0,
        }
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        simulate_queue(QueueParams::from_slice(theta)?, self.customers, rng)
    }

    fn discrepancy(&self, x: &[f64], x_obs: &[f64]) -> f64 {
        squared_distance(x, x_obs)
    }
}
