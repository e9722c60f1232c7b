//! Weighted particle populations and inverse-CDF resampling.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Absolute tolerance on the sum of a normalized weight vector.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A parameter draw together with the (summary) data simulated from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
}

impl Particle {
    pub fn new(theta: Vec<f64>, x: Vec<f64>) -> Self {
        Self { theta, x }
    }
}

/// A population of `N >= 2` particles with normalized importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    particles: Vec<Particle>,
    weights: Vec<f64>,
    step: usize,
}

impl ParticleSystem {
    /// Builds a population, normalizing `weights` and checking the
    /// population invariants (constant dimensions, finite entries, N >= 2).
    pub fn new(particles: Vec<Particle>, weights: Vec<f64>, step: usize) -> Result<Self> {
        if particles.len() < 2 {
            return Err(Error::InvalidPopulation(format!(
                "need at least 2 particles, got {}",
                particles.len()
            )));
        }
        if weights.len() != particles.len() {
            return Err(Error::LengthMismatch {
                left: particles.len(),
                right: weights.len(),
            });
        }
        if step == 0 {
            return Err(Error::InvalidPopulation("step index starts at 1".into()));
        }
        let p = particles[0].theta.len();
        let q = particles[0].x.len();
        for (i, particle) in particles.iter().enumerate() {
            if particle.theta.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: particle.theta.len(),
                });
            }
            if particle.x.len() != q {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    found: particle.x.len(),
                });
            }
            if particle
                .theta
                .iter()
                .chain(&particle.x)
                .any(|v| !v.is_finite())
            {
                return Err(Error::InvalidPopulation(format!(
                    "particle {i} has a non-finite entry"
                )));
            }
        }
        let weights = normalize(&weights)?;
        Ok(Self {
            particles,
            weights,
            step,
        })
    }

    /// Population with all weights equal to `1/N`.
    pub fn uniform(particles: Vec<Particle>, step: usize) -> Result<Self> {
        let n = particles.len();
        Self::new(particles, vec![1.0; n], step)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn theta_dim(&self) -> usize {
        self.particles[0].theta.len()
    }

    pub fn x_dim(&self) -> usize {
        self.particles[0].x.len()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Values of one parameter coordinate across the population.
    pub fn theta_column(&self, dim: usize) -> Vec<f64> {
        self.particles.iter().map(|p| p.theta[dim]).collect()
    }

    /// Values of one data coordinate across the population.
    pub fn x_column(&self, dim: usize) -> Vec<f64> {
        self.particles.iter().map(|p| p.x[dim]).collect()
    }

    /// Effective sample size `1 / sum w_i^2`.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Writes the population as CSV with columns
    /// `step, particle_id, weight, theta_1..theta_p, x_1..x_q`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["step".to_string(), "particle_id".into(), "weight".into()];
        header.extend((1..=self.theta_dim()).map(|k| format!("theta_{k}")));
        header.extend((1..=self.x_dim()).map(|k| format!("x_{k}")));
        out.write_record(&header)?;
        for (i, (particle, w)) in self.particles.iter().zip(&self.weights).enumerate() {
            let mut row = vec![self.step.to_string(), i.to_string(), w.to_string()];
            row.extend(particle.theta.iter().map(f64::to_string));
            row.extend(particle.x.iter().map(f64::to_string));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a population written by [`ParticleSystem::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let header = input.headers()?.clone();
        let p = header.iter().filter(|h| h.starts_with("theta_")).count();
        let q = header.iter().filter(|h| h.starts_with("x_")).count();
        if header.len() != 3 + p + q {
            return Err(Error::InvalidPopulation(
                "unexpected population header".into(),
            ));
        }
        let mut particles = Vec::new();
        let mut weights = Vec::new();
        let mut step = 0;
        for record in input.records() {
            let record = record?;
            let num = |k: usize| -> Result<f64> {
                record[k]
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidPopulation(format!("bad number {:?}", &record[k])))
            };
            step = record[0]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidPopulation("bad step".into()))?;
            weights.push(num(2)?);
            let theta = (3..3 + p).map(num).collect::<Result<Vec<_>>>()?;
            let x = (3 + p..3 + p + q).map(num).collect::<Result<Vec<_>>>()?;
            particles.push(Particle::new(theta, x));
        }
        Self::new(particles, weights, step)
    }
}

/// Data-based selection weights used by the adaptive-weight sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveWeights(Vec<f64>);

impl AdaptiveWeights {
    /// Normalizes `raw` into selection weights.
    pub fn from_unnormalized(raw: &[f64]) -> Result<Self> {
        normalize(raw).map(Self)
    }

    /// Wraps weights that already belong to a normalized population.
    pub(crate) fn from_normalized(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Scales a nonnegative vector to sum to one.
pub fn normalize(weights: &[f64]) -> Result<Vec<f64>> {
    let mut total = 0.0;
    for (index, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::NonFiniteWeight { index, value: w });
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::AllZeroWeights);
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Cumulative weights for repeated inverse-CDF draws.
#[derive(Debug, Clone)]
pub struct CumulativeWeights {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl CumulativeWeights {
    pub fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        Self {
            cumulative,
            last_positive,
        }
    }

    /// First index whose cumulative weight exceeds `u`.
    pub fn index(&self, u: f64) -> usize {
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.last_positive)
    }
}

/// Inverse-CDF lookup of `u in [0, 1)` against normalized `weights`.
pub fn resample_index(weights: &[f64], u: f64) -> usize {
    CumulativeWeights::new(weights).index(u)
}

/// Weighted mean and population variance of `values`.
pub fn weighted_mean_var(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| w * v).sum();
    let var = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - mean).powi(2))
        .sum();
    (mean, var)
}

/// Weighted mean and population variance of parameter coordinate `dim`.
pub fn weighted_moments(system: &ParticleSystem, dim: usize) -> (f64, f64) {
    weighted_mean_var(&system.theta_column(dim), system.weights())
}
