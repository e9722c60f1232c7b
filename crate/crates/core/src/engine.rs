//! ABC rejection, ABC SMC and ABC SMC with adaptive weights.
//!
//! Every simulation attempt draws from its own RNG sub-stream keyed by
//! `(seed, step, particle, attempt)`, so a run is reproducible whether
//! particles are processed sequentially or on a thread pool. The two SMC
//! variants consume their streams in the same order; they differ only in
//! the selection weights used for resampling.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::cov_of_weights;
use crate::error::{Error, Result};
use crate::kernels::{rule_of_thumb_bandwidths, BandwidthRule, Block, KernelKind, KernelSpec};
use crate::models::Model;
use crate::particle::{normalize, AdaptiveWeights, CumulativeWeights, Particle, ParticleSystem};
use crate::rng::attempt_stream;

/// Strictly decreasing positive tolerances `eps_1 > ... > eps_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSchedule(Vec<f64>);

impl ThresholdSchedule {
    pub fn new(epsilons: Vec<f64>) -> Result<Self> {
        if epsilons.is_empty() {
            return Err(Error::InvalidSchedule("schedule is empty".into()));
        }
        if let Some(bad) = epsilons.iter().find(|e| !(**e > 0.0)) {
            return Err(Error::InvalidSchedule(format!(
                "thresholds must be positive, got {bad}"
            )));
        }
        if let Some(w) = epsilons.windows(2).find(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidSchedule(format!(
                "thresholds must be strictly decreasing, got {} then {}",
                w[0], w[1]
            )));
        }
        if epsilons[1..].iter().any(|e| e.is_infinite()) {
            return Err(Error::InvalidSchedule(
                "only the first threshold may be infinite".into(),
            ));
        }
        Ok(Self(epsilons))
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Resample by the importance weights.
    Smc,
    /// Resample by data-based adaptive weights.
    SmcAw,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Smc, Variant::SmcAw];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Smc => "smc",
            Variant::SmcAw => "smc_aw",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smc" => Ok(Variant::Smc),
            "smc_aw" | "aw" => Ok(Variant::SmcAw),
            other => Err(Error::InvalidConfig(format!("unknown variant {other:?}"))),
        }
    }
}

/// How the data-space kernel of the adaptive-weight variant is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XKernelChoice {
    /// Gaussian with rule-of-thumb bandwidths.
    #[default]
    RuleOfThumb,
    /// Box kernel wide enough that every particle's data covers `x_obs`.
    /// The selection weights then equal the importance weights.
    UniformCovering,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_particles: usize,
    pub variant: Variant,
    pub seed: u64,
    pub max_attempts_per_particle: u64,
    pub x_kernel: XKernelChoice,
    pub snapshots: bool,
    pub parallel: bool,
}

impl RunConfig {
    pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000_000;

    pub fn new(n_particles: usize, variant: Variant, seed: u64) -> Self {
        Self {
            n_particles,
            variant,
            seed,
            max_attempts_per_particle: Self::DEFAULT_MAX_ATTEMPTS,
            x_kernel: XKernelChoice::RuleOfThumb,
            snapshots: false,
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 particles, got {}",
                self.n_particles
            )));
        }
        if self.max_attempts_per_particle < 1 {
            return Err(Error::InvalidConfig(
                "attempt cap must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-step accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epsilon: f64,
    pub n_accepted: usize,
    /// Calls to the model simulator, rejected ones included.
    pub n_simulations: u64,
    /// Proposals discarded for zero prior density before simulation.
    pub n_prior_rejects: u64,
    pub cov_weights: f64,
    pub ess: f64,
    pub theta_bandwidths: Vec<f64>,
    pub x_bandwidths: Vec<f64>,
    pub seconds: f64,
}

impl StepRecord {
    pub fn sims_per_accepted(&self) -> f64 {
        self.n_simulations as f64 / self.n_accepted as f64
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.n_accepted as f64 / self.n_simulations as f64
    }
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub variant: Variant,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    /// Populations of steps `1..T-1` when snapshots are enabled.
    pub snapshots: Vec<ParticleSystem>,
    pub final_population: ParticleSystem,
}

const TRACE_HEADER: [&str; 10] = [
    "step",
    "epsilon",
    "n_accepted",
    "n_simulations",
    "n_prior_rejects",
    "cov_weights",
    "seconds",
    "ess",
    "h_theta",
    "h_x",
];

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

fn split(field: &str) -> Result<Vec<f64>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(';')
        .map(|v| {
            v.parse()
                .map_err(|_| Error::InvalidConfig(format!("bad bandwidth {v:?}")))
        })
        .collect()
}

impl RunTrace {
    pub fn total_sims_per_accepted(&self) -> f64 {
        self.steps.iter().map(StepRecord::sims_per_accepted).sum()
    }

    pub fn total_simulations(&self) -> u64 {
        self.steps.iter().map(|s| s.n_simulations).sum()
    }

    /// Equality of everything except wall times and the data-space
    /// bandwidths (which only the adaptive variant uses).
    pub fn same_numerics(&self, other: &RunTrace) -> bool {
        self.steps.len() == other.steps.len()
            && self.steps.iter().zip(&other.steps).all(|(a, b)| {
                a.step == b.step
                    && a.epsilon.to_bits() == b.epsilon.to_bits()
                    && a.n_accepted == b.n_accepted
                    && a.n_simulations == b.n_simulations
                    && a.n_prior_rejects == b.n_prior_rejects
                    && a.cov_weights.to_bits() == b.cov_weights.to_bits()
                    && a.ess.to_bits() == b.ess.to_bits()
                    && a.theta_bandwidths == b.theta_bandwidths
            })
            && self.final_population == other.final_population
            && self.snapshots == other.snapshots
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_trace_csv(&self.steps, writer)
    }
}

/// Writes step records; the first seven columns are
/// `step, epsilon, n_accepted, n_simulations, n_prior_rejects, cov_weights, seconds`.
pub fn write_trace_csv<W: Write>(steps: &[StepRecord], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(TRACE_HEADER)?;
    for s in steps {
        out.write_record([
            s.step.to_string(),
            s.epsilon.to_string(),
            s.n_accepted.to_string(),
            s.n_simulations.to_string(),
            s.n_prior_rejects.to_string(),
            s.cov_weights.to_string(),
            s.seconds.to_string(),
            s.ess.to_string(),
            join(&s.theta_bandwidths),
            join(&s.x_bandwidths),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<StepRecord>> {
    let mut input = csv::Reader::from_reader(reader);
    let header = input.headers()?.clone();
    if header.len() < 7
        || header
            .iter()
            .take(7)
            .ne(TRACE_HEADER.iter().take(7).copied())
    {
        return Err(Error::InvalidConfig("unexpected run trace header".into()));
    }
    let mut steps = Vec::new();
    for record in input.records() {
        let record = record?;
        let field = |k: usize| record.get(k).unwrap_or("");
        let bad = |k: usize| Error::InvalidConfig(format!("bad trace field {:?}", field(k)));
        let num = |k: usize| field(k).parse::<f64>().map_err(|_| bad(k));
        let int = |k: usize| field(k).parse::<u64>().map_err(|_| bad(k));
        steps.push(StepRecord {
            step: int(0)? as usize,
            epsilon: num(1)?,
            n_accepted: int(2)? as usize,
            n_simulations: int(3)?,
            n_prior_rejects: int(4)?,
            cov_weights: num(5)?,
            seconds: num(6)?,
            ess: if record.len() > 7 { num(7)? } else { f64::NAN },
            theta_bandwidths: split(field(8))?,
            x_bandwidths: split(field(9))?,
        });
    }
    Ok(steps)
}

/// Result of building one population.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub population: ParticleSystem,
    pub simulations: u64,
    pub prior_rejects: u64,
}

struct Accepted {
    particle: Particle,
    simulations: u64,
    prior_rejects: u64,
}

fn per_particle<F>(n: usize, parallel: bool, f: F) -> Result<Vec<Accepted>>
where
    F: Fn(usize) -> Result<Accepted> + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

fn accepts(distance: f64, epsilon: f64) -> bool {
    distance < epsilon
}

fn check_model(model: &dyn Model) -> Result<()> {
    if model.observed().len() != model.data_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.data_dim(),
            found: model.observed().len(),
        });
    }
    Ok(())
}

fn check_output(model: &dyn Model, x: &[f64]) -> Result<()> {
    if x.len() != model.data_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.data_dim(),
            found: x.len(),
        });
    }
    Ok(())
}

/// Builds the first population by rejection from the prior.
pub fn abc_rejection_init(
    model: &dyn Model,
    epsilon: f64,
    config: &RunConfig,
) -> Result<StepOutcome> {
    config.validate()?;
    check_model(model)?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "threshold must be positive, got {epsilon}"
        )));
    }
    let accepted = per_particle(config.n_particles, config.parallel, |i| {
        for attempt in 0..config.max_attempts_per_particle {
            let mut rng = attempt_stream(config.seed, 1, i, attempt);
            let theta = model.prior_sample(&mut rng);
            let x = model.simulate(&theta, &mut rng)?;
            check_output(model, &x)?;
            if accepts(model.distance_to_observed(&x), epsilon) {
                return Ok(Accepted {
                    particle: Particle::new(theta, x),
                    simulations: attempt + 1,
                    prior_rejects: 0,
                });
            }
        }
        Err(Error::AttemptCapExceeded {
            particle: i,
            attempts: config.max_attempts_per_particle,
        })
    })?;
    collect_outcome(accepted, |particles| ParticleSystem::uniform(particles, 1))
}

fn collect_outcome(
    accepted: Vec<Accepted>,
    build: impl FnOnce(Vec<Particle>) -> Result<ParticleSystem>,
) -> Result<StepOutcome> {
    let simulations = accepted.iter().map(|a| a.simulations).sum();
    let prior_rejects = accepted.iter().map(|a| a.prior_rejects).sum();
    let particles = accepted.into_iter().map(|a| a.particle).collect();
    Ok(StepOutcome {
        population: build(particles)?,
        simulations,
        prior_rejects,
    })
}

/// Data-based selection weights `v_i ∝ w_i K_x(x_obs | x_i)`.
///
/// Kernel values are rescaled by their maximum before multiplying, so
/// a constant kernel factor returns the importance weights unchanged.
pub fn compute_adaptive_weights(
    system: &ParticleSystem,
    x_obs: &[f64],
    kernel: &KernelSpec,
) -> Result<AdaptiveWeights> {
    if kernel.dim() != system.x_dim() || x_obs.len() != system.x_dim() {
        return Err(Error::DimensionMismatch {
            expected: system.x_dim(),
            found: if kernel.dim() != system.x_dim() {
                kernel.dim()
            } else {
                x_obs.len()
            },
        });
    }
    let log_k: Vec<f64> = system
        .particles()
        .iter()
        .map(|p| kernel.log_density_unchecked(x_obs, &p.x))
        .collect();
    let max = log_k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllZeroWeights);
    }
    let factors: Vec<f64> = log_k.iter().map(|l| (l - max).exp()).collect();
    if factors.iter().all(|&f| f == factors[0]) {
        return Ok(AdaptiveWeights::from_normalized(system.weights().to_vec()));
    }
    let raw: Vec<f64> = system
        .weights()
        .iter()
        .zip(&factors)
        .map(|(w, f)| w * f)
        .collect();
    AdaptiveWeights::from_unnormalized(&raw)
}

/// Box kernel whose half-widths exceed every `|x_obs - x_i|`.
pub fn uniform_covering_kernel(system: &ParticleSystem, x_obs: &[f64]) -> Result<KernelSpec> {
    let half_widths = (0..system.x_dim())
        .map(|k| {
            let reach = system
                .particles()
                .iter()
                .map(|p| (p.x[k] - x_obs[k]).abs())
                .fold(0.0, f64::max);
            2.0 * reach + f64::MIN_POSITIVE
        })
        .collect();
    KernelSpec::new(KernelKind::Uniform, half_widths)
}

/// Importance weights `w_i ∝ p(theta_i) / sum_j s_j K_theta(theta_i | theta_j)`,
/// with the mixture denominator accumulated in log space.
pub fn smc_weight_update(
    new_thetas: &[Vec<f64>],
    prev: &[Particle],
    selection: &[f64],
    kernel: &KernelSpec,
    model: &dyn Model,
) -> Result<Vec<f64>> {
    if prev.len() != selection.len() {
        return Err(Error::LengthMismatch {
            left: prev.len(),
            right: selection.len(),
        });
    }
    if kernel.kind() != KernelKind::Gaussian {
        return Err(Error::UnsupportedKind);
    }
    let dim = kernel.dim();
    if let Some(bad) = new_thetas
        .iter()
        .map(Vec::len)
        .chain(prev.iter().map(|p| p.theta.len()))
        .find(|&len| len != dim)
    {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad,
        });
    }
    let inv_h: Vec<f64> = kernel.bandwidths().iter().map(|h| 1.0 / h).collect();
    let components: Vec<(f64, &[f64])> = prev
        .iter()
        .zip(selection)
        .filter(|(_, &s)| s > 0.0)
        .map(|(p, s)| (s.ln(), p.theta.as_slice()))
        .collect();

    let log_weights: Vec<f64> = new_thetas
        .iter()
        .map(|theta| {
            let prior = model.prior_density(theta);
            if !(prior > 0.0) {
                return f64::NEG_INFINITY;
            }
            // online log-sum-exp over the mixture components
            let (mut m, mut acc) = (f64::NEG_INFINITY, 0.0);
            for (log_s, center) in &components {
                let mut q = 0.0;
                for ((t, c), ih) in theta.iter().zip(*center).zip(&inv_h) {
                    let z = (t - c) * ih;
                    q += z * z;
                }
                let a = log_s - 0.5 * q;
                if a > m {
                    acc = acc * (m - a).exp() + 1.0;
                    m = a;
                } else {
                    acc += (a - m).exp();
                }
            }
            // the kernel normalizing constant is shared by all i
            prior.ln() - (m + acc.ln())
        })
        .collect();
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::AllZeroWeights);
    }
    normalize(
        &log_weights
            .iter()
            .map(|l| (l - max).exp())
            .collect::<Vec<_>>(),
    )
}

/// Builds the population for step `step` by resampling with `selection`,
/// perturbing with `kernel` and accepting when the discrepancy is below
/// `epsilon`.
pub fn smc_step(
    prev: &ParticleSystem,
    selection: &[f64],
    epsilon: f64,
    kernel: &KernelSpec,
    model: &dyn Model,
    config: &RunConfig,
    step: usize,
) -> Result<StepOutcome> {
    config.validate()?;
    check_model(model)?;
    if selection.len() != prev.len() {
        return Err(Error::LengthMismatch {
            left: prev.len(),
            right: selection.len(),
        });
    }
    if kernel.kind() != KernelKind::Gaussian {
        return Err(Error::UnsupportedKind);
    }
    let cumulative = CumulativeWeights::new(selection);
    let accepted = per_particle(config.n_particles, config.parallel, |i| {
        let mut simulations = 0;
        let mut prior_rejects = 0;
        for attempt in 0..config.max_attempts_per_particle {
            let mut rng = attempt_stream(config.seed, step, i, attempt);
            let j = cumulative.index(rng.random::<f64>());
            let theta = kernel.sample(&prev.particles()[j].theta, &mut rng)?;
            if !(model.prior_density(&theta) > 0.0) {
                prior_rejects += 1;
                continue;
            }
            let x = model.simulate(&theta, &mut rng)?;
            check_output(model, &x)?;
            simulations += 1;
            if accepts(model.distance_to_observed(&x), epsilon) {
                return Ok(Accepted {
                    particle: Particle::new(theta, x),
                    simulations,
                    prior_rejects,
                });
            }
        }
        Err(Error::AttemptCapExceeded {
            particle: i,
            attempts: config.max_attempts_per_particle,
        })
    })?;
    let thetas: Vec<Vec<f64>> = accepted.iter().map(|a| a.particle.theta.clone()).collect();
    let weights = smc_weight_update(&thetas, prev.particles(), selection, kernel, model)?;
    collect_outcome(accepted, |particles| {
        ParticleSystem::new(particles, weights, step)
    })
}

/// Runs the full sampler for `schedule`.
pub fn run(
    model: &dyn Model,
    schedule: &ThresholdSchedule,
    config: &RunConfig,
) -> Result<RunTrace> {
    config.validate()?;
    check_model(model)?;
    let rule = BandwidthRule::new(model.param_dim() + model.data_dim());
    let eps = schedule.epsilons();

    let started = Instant::now();
    let init = abc_rejection_init(model, eps[0], config).map_err(|e| e.at_step(1))?;
    let mut steps = vec![record(1, eps[0], &init, Vec::new(), Vec::new(), started)];
    let mut snapshots = Vec::new();
    let mut current = init.population;

    for (t, &epsilon) in eps.iter().enumerate().skip(1).map(|(k, e)| (k + 1, e)) {
        let started = Instant::now();
        let outcome = (|| {
            let h_theta = rule_of_thumb_bandwidths(&current, &rule, Block::Theta)?;
            let kernel = KernelSpec::gaussian(h_theta.clone())?;
            let (selection, h_x) = selection_weights(&current, model, &rule, config)?;
            let outcome = smc_step(&current, &selection, epsilon, &kernel, model, config, t)?;
            Ok::<_, Error>((outcome, h_theta, h_x))
        })()
        .map_err(|e| e.at_step(t))?;
        let (outcome, h_theta, h_x) = outcome;
        steps.push(record(t, epsilon, &outcome, h_theta, h_x, started));
        let previous = std::mem::replace(&mut current, outcome.population);
        if config.snapshots {
            snapshots.push(previous);
        }
    }

    Ok(RunTrace {
        variant: config.variant,
        seed: config.seed,
        steps,
        snapshots,
        final_population: current,
    })
}

fn selection_weights(
    current: &ParticleSystem,
    model: &dyn Model,
    rule: &BandwidthRule,
    config: &RunConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match config.variant {
        Variant::Smc => Ok((current.weights().to_vec(), Vec::new())),
        Variant::SmcAw => {
            let kernel = match config.x_kernel {
                XKernelChoice::UniformCovering => {
                    uniform_covering_kernel(current, model.observed())?
                }
                XKernelChoice::RuleOfThumb => {
                    match rule_of_thumb_bandwidths(current, rule, Block::X) {
                        Ok(h) => KernelSpec::gaussian(h)?,
                        // identical data everywhere: the kernel factor is constant
                        Err(Error::DegeneratePopulation) => {
                            return Ok((current.weights().to_vec(), Vec::new()))
                        }
                        Err(e) => return Err(e),
                    }
                }
            };
            let v = compute_adaptive_weights(current, model.observed(), &kernel)?;
            Ok((v.into_inner(), kernel.bandwidths().to_vec()))
        }
    }
}

fn record(
    step: usize,
    epsilon: f64,
    outcome: &StepOutcome,
    theta_bandwidths: Vec<f64>,
    x_bandwidths: Vec<f64>,
    started: Instant,
) -> StepRecord {
    StepRecord {
        step,
        epsilon,
        n_accepted: outcome.population.len(),
        n_simulations: outcome.simulations,
        n_prior_rejects: outcome.prior_rejects,
        cov_weights: cov_of_weights(outcome.population.weights()),
        ess: outcome.population.ess(),
        theta_bandwidths,
        x_bandwidths,
        seconds: started.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{BoxPrior, NormalMixture, SimRng};
    use crate::particle::resample_index;

    const PHI0: f64 = 0.398_942_280_401_432_7;
    const PHI1: f64 = 0.241_970_724_519_143_37;

    /// Uniform prior on (-10, 10) whose simulator echoes theta.
    struct Echo {
        prior: BoxPrior,
        obs: Vec<f64>,
    }

    impl Echo {
        fn new() -> Self {
            Self {
                prior: BoxPrior::new(vec![-10.0], vec![10.0]),
                obs: vec![0.0],
            }
        }
    }

    impl Model for Echo {
        fn name(&self) -> &str {
            "echo"
        }
        fn param_dim(&self) -> usize {
            1
        }
        fn data_dim(&self) -> usize {
            1
        }
        fn observed(&self) -> &[f64] {
            &self.obs
        }
        fn prior_sample(&self, rng: &mut SimRng) -> Vec<f64> {
            self.prior.sample(rng)
        }
        fn prior_density(&self, theta: &[f64]) -> f64 {
            self.prior.density(theta)
        }
        fn simulate(&self, theta: &[f64], _: &mut SimRng) -> Result<Vec<f64>> {
            Ok(theta.to_vec())
        }
        fn discrepancy(&self, x: &[f64], y: &[f64]) -> f64 {
            (x[0] - y[0]).abs()
        }
    }

    fn system(thetas: &[f64], xs: &[f64], weights: &[f64]) -> ParticleSystem {
        let particles = thetas
            .iter()
            .zip(xs)
            .map(|(&t, &x)| Particle::new(vec![t], vec![x]))
            .collect();
        ParticleSystem::new(particles, weights.to_vec(), 1).unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(ThresholdSchedule::new(vec![2.0, 0.5, 0.025]).is_ok());
        assert!(ThresholdSchedule::new(vec![f64::INFINITY, 1.0]).is_ok());
        assert!(ThresholdSchedule::new(vec![1.0, 2.0, 3.0]).is_err());
        assert!(ThresholdSchedule::new(vec![1.0, 1.0]).is_err());
        assert!(ThresholdSchedule::new(vec![1.0, -1.0]).is_err());
        assert!(ThresholdSchedule::new(vec![]).is_err());
        assert!(ThresholdSchedule::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("mcmc".parse::<Variant>().is_err());
    }

    #[test]
    fn rejection_with_infinite_threshold_accepts_everything() {
        let model = NormalMixture::default();
        let config = RunConfig::new(50, Variant::Smc, 1);
        let out = abc_rejection_init(&model, f64::INFINITY, &config).unwrap();
        assert_eq!(out.simulations, 50);
        assert!(out.population.weights().iter().all(|&w| w == 1.0 / 50.0));
    }

    #[test]
    fn rejection_respects_threshold() {
        let model = NormalMixture::default();
        let config = RunConfig::new(200, Variant::Smc, 2);
        let out = abc_rejection_init(&model, 1.0, &config).unwrap();
        assert!(out.simulations >= 200);
        for p in out.population.particles() {
            assert!(model.distance_to_observed(&p.x) < 1.0);
        }
    }

    #[test]
    fn unreachable_threshold_hits_the_cap() {
        struct Far;
        impl Model for Far {
            fn name(&self) -> &str {
                "far"
            }
            fn param_dim(&self) -> usize {
                1
            }
            fn data_dim(&self) -> usize {
                1
            }
            fn observed(&self) -> &[f64] {
                &[0.0]
            }
            fn prior_sample(&self, _: &mut SimRng) -> Vec<f64> {
                vec![0.0]
            }
            fn prior_density(&self, _: &[f64]) -> f64 {
                1.0
            }
            fn simulate(&self, _: &[f64], _: &mut SimRng) -> Result<Vec<f64>> {
                Ok(vec![5.0])
            }
            fn discrepancy(&self, x: &[f64], y: &[f64]) -> f64 {
                (x[0] - y[0]).abs()
            }
        }
        let mut config = RunConfig::new(4, Variant::Smc, 0);
        config.max_attempts_per_particle = 25;
        let err = abc_rejection_init(&Far, 1.0, &config).unwrap_err();
        assert!(matches!(
            err,
            Error::AttemptCapExceeded { attempts: 25, .. }
        ));
        let schedule = ThresholdSchedule::new(vec![1.0]).unwrap();
        let err = run(&Far, &schedule, &config).unwrap_err();
        assert!(matches!(err, Error::Step { step: 1, .. }), "{err}");
    }

    #[test]
    fn adaptive_weight_examples() {
        let s = system(&[0.3, -0.2], &[0.0, 1.0], &[0.5, 0.5]);
        let k = KernelSpec::gaussian(vec![1.0]).unwrap();
        let v = compute_adaptive_weights(&s, &[0.0], &k).unwrap();
        let total = 0.5 * PHI0 + 0.5 * PHI1;
        assert!((v.as_slice()[0] - 0.5 * PHI0 / total).abs() < 1e-14);
        assert!((v.as_slice()[0] - 0.6224).abs() < 1e-4);
        assert!((v.as_slice()[1] - 0.3776).abs() < 1e-4);

        let same = system(&[0.3, -0.2, 4.0], &[2.0, 2.0, 2.0], &[0.2, 0.5, 0.3]);
        let v = compute_adaptive_weights(&same, &[0.0], &k).unwrap();
        assert_eq!(v.as_slice(), same.weights());

        let spread = system(&[0.3, -0.2, 4.0], &[2.0, -1.0, 0.5], &[0.2, 0.5, 0.3]);
        let cover = uniform_covering_kernel(&spread, &[0.0]).unwrap();
        let v = compute_adaptive_weights(&spread, &[0.0], &cover).unwrap();
        assert_eq!(v.as_slice(), spread.weights());

        let narrow = KernelSpec::uniform(vec![0.1]).unwrap();
        assert!(matches!(
            compute_adaptive_weights(&spread, &[0.0], &narrow),
            Err(Error::AllZeroWeights)
        ));
        let wrong = KernelSpec::gaussian(vec![1.0, 1.0]).unwrap();
        assert!(compute_adaptive_weights(&spread, &[0.0], &wrong).is_err());
    }

    #[test]
    fn weight_update_examples() {
        let model = Echo::new();
        let k = KernelSpec::gaussian(vec![1.0]).unwrap();
        let prev = [Particle::new(vec![0.0], vec![0.0])];
        let w = smc_weight_update(&[vec![0.0], vec![1.0]], &prev, &[1.0], &k, &model).unwrap();
        let (a, b) = (1.0 / PHI0, 1.0 / PHI1);
        assert!((w[0] - a / (a + b)).abs() < 1e-14);
        assert!((w[0] - 0.3776).abs() < 1e-4 && (w[1] - 0.6224).abs() < 1e-4);

        let prev = [
            Particle::new(vec![-1.0], vec![0.0]),
            Particle::new(vec![2.0], vec![0.0]),
        ];
        let w = smc_weight_update(&vec![vec![0.4]; 5], &prev, &[0.3, 0.7], &k, &model).unwrap();
        assert!(w.iter().all(|&x| (x - 0.2).abs() < 1e-15));

        let w =
            smc_weight_update(&[vec![0.0], vec![11.0]], &prev, &[0.3, 0.7], &k, &model).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
        assert!(matches!(
            smc_weight_update(&[vec![11.0]], &prev, &[0.3, 0.7], &k, &model),
            Err(Error::AllZeroWeights)
        ));
    }

    #[test]
    fn weight_update_is_permutation_invariant() {
        let model = Echo::new();
        let k = KernelSpec::gaussian(vec![0.7]).unwrap();
        let thetas = [-1.5, 0.2, 0.9, 3.3, -0.4];
        let sel = [0.1, 0.3, 0.2, 0.25, 0.15];
        let prev: Vec<Particle> = thetas
            .iter()
            .map(|&t| Particle::new(vec![t], vec![t]))
            .collect();
        let new: Vec<Vec<f64>> = vec![vec![0.0], vec![1.1], vec![-2.0]];
        let base = smc_weight_update(&new, &prev, &sel, &k, &model).unwrap();
        let order = [3, 0, 4, 1, 2];
        let prev_p: Vec<Particle> = order.iter().map(|&i| prev[i].clone()).collect();
        let sel_p: Vec<f64> = order.iter().map(|&i| sel[i]).collect();
        let permuted = smc_weight_update(&new, &prev_p, &sel_p, &k, &model).unwrap();
        for (a, b) in base.iter().zip(&permuted) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn point_mass_selection_always_picks_that_particle() {
        let model = Echo::new();
        let prev = system(&[-3.0, 1.25, 4.0], &[-3.0, 1.25, 4.0], &[1.0, 1.0, 1.0]);
        let k = KernelSpec::gaussian(vec![1e-9]).unwrap();
        let config = RunConfig::new(30, Variant::Smc, 5);
        let out = smc_step(
            &prev,
            &[0.0, 1.0, 0.0],
            f64::INFINITY,
            &k,
            &model,
            &config,
            2,
        )
        .unwrap();
        assert_eq!(out.simulations, 30);
        for p in out.population.particles() {
            assert!((p.theta[0] - 1.25).abs() < 1e-6);
        }
    }

    #[test]
    fn tiny_kernel_reproduces_resampled_population() {
        let model = Echo::new();
        let prev = system(&[-3.0, 1.25, 4.0], &[-3.0, 1.25, 4.0], &[0.2, 0.5, 0.3]);
        let k = KernelSpec::gaussian(vec![1e-9]).unwrap();
        let config = RunConfig::new(40, Variant::Smc, 6);
        let out = smc_step(&prev, prev.weights(), f64::INFINITY, &k, &model, &config, 2).unwrap();
        for (i, p) in out.population.particles().iter().enumerate() {
            let mut rng = attempt_stream(6, 2, i, 0);
            let j = resample_index(prev.weights(), rng.random::<f64>());
            assert!((p.theta[0] - prev.particles()[j].theta[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn prior_zero_proposals_are_not_simulated() {
        let model = Echo::new();
        let prev = system(&[9.99, 9.98], &[9.99, 9.98], &[1.0, 1.0]);
        let k = KernelSpec::gaussian(vec![0.5]).unwrap();
        let config = RunConfig::new(100, Variant::Smc, 8);
        let out = smc_step(&prev, prev.weights(), f64::INFINITY, &k, &model, &config, 2).unwrap();
        assert_eq!(out.simulations, 100);
        assert!(out.prior_rejects > 20, "{}", out.prior_rejects);
        assert!(out
            .population
            .particles()
            .iter()
            .all(|p| model.prior_density(&p.theta) > 0.0));
    }

    #[test]
    fn single_step_schedule_equals_rejection() {
        let model = NormalMixture::default();
        let schedule = ThresholdSchedule::new(vec![1.5]).unwrap();
        for variant in Variant::ALL {
            let config = RunConfig::new(100, variant, 11);
            let trace = run(&model, &schedule, &config).unwrap();
            let init = abc_rejection_init(&model, 1.5, &config).unwrap();
            assert_eq!(trace.final_population, init.population);
            assert_eq!(trace.steps[0].n_simulations, init.simulations);
        }
    }

    #[test]
    fn run_records_every_step() {
        let model = NormalMixture::default();
        let schedule = ThresholdSchedule::new(vec![2.0, 0.5, 0.1]).unwrap();
        let mut config = RunConfig::new(200, Variant::SmcAw, 3);
        config.snapshots = true;
        let trace = run(&model, &schedule, &config).unwrap();
        assert_eq!(trace.steps.len(), 3);
        assert_eq!(trace.snapshots.len(), 2);
        for (k, s) in trace.steps.iter().enumerate() {
            assert_eq!(s.step, k + 1);
            assert!(s.n_simulations >= s.n_accepted as u64);
            assert!(s.cov_weights.is_finite());
        }
        assert_eq!(trace.steps[1].x_bandwidths.len(), 1);
        assert!(trace.steps[0].theta_bandwidths.is_empty());
        let w = trace.final_population.weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for p in trace.final_population.particles() {
            assert!(model.distance_to_observed(&p.x) < 0.1);
        }
    }

    #[test]
    fn parallel_and_sequential_runs_agree() {
        let model = NormalMixture::default();
        let schedule = ThresholdSchedule::new(vec![2.0, 0.5]).unwrap();
        let mut config = RunConfig::new(150, Variant::SmcAw, 21);
        let seq = run(&model, &schedule, &config).unwrap();
        config.parallel = true;
        let par = run(&model, &schedule, &config).unwrap();
        assert!(seq.same_numerics(&par));
    }

    #[test]
    fn trace_csv_round_trip() {
        let model = NormalMixture::default();
        let schedule = ThresholdSchedule::new(vec![2.0, 0.5]).unwrap();
        let trace = run(&model, &schedule, &RunConfig::new(50, Variant::SmcAw, 1)).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "step,epsilon,n_accepted,n_simulations,n_prior_rejects,cov_weights,seconds"
        ));
        let steps = read_trace_csv(buf.as_slice()).unwrap();
        assert_eq!(steps, trace.steps);
    }
}
