//! Pilot studies, efficiency accounting, weight diagnostics and density
//! exports.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Write;

use rayon::prelude::*;

use crate::engine::{StepRecord, ThresholdSchedule};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::particle::ParticleSystem;
use crate::rng::stream;
use crate::stats::quantile_sorted;

/// Stream key separating pilot draws from sampler draws.
const PILOT_KEY: u64 = 0x0050_494c_4f54;

/// Sorted prior-predictive discrepancies and the requested quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotResult {
    pub sorted: Vec<f64>,
    /// `(level, threshold)` pairs in the order requested.
    pub quantile_map: Vec<(f64, f64)>,
}

impl PilotResult {
    pub fn quantile(&self, level: f64) -> f64 {
        quantile_sorted(&self.sorted, level)
    }

    /// Schedule made of the requested quantiles, largest first.
    pub fn schedule(&self) -> Result<ThresholdSchedule> {
        let mut eps: Vec<f64> = self.quantile_map.iter().map(|&(_, e)| e).collect();
        eps.sort_by(|a, b| b.total_cmp(a));
        ThresholdSchedule::new(eps)
    }
}

/// Simulates `m` prior:model pairs and returns discrepancy quantiles.
///
/// The estimator is the interpolated order statistic; a level `p` is only
/// resolved when `m * p` is well above one.
pub fn pilot_threshold(
    model: &dyn Model,
    m: usize,
    levels: &[f64],
    seed: u64,
    parallel: bool,
) -> Result<PilotResult> {
    if m < 100 {
        return Err(Error::InvalidConfig(format!(
            "pilot needs at least 100 draws, got {m}"
        )));
    }
    if let Some(bad) = levels.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::InvalidConfig(format!(
            "quantile level {bad} outside (0, 1]"
        )));
    }
    let draw = |k: usize| -> Result<f64> {
        let mut rng = stream(seed, &[PILOT_KEY, k as u64]);
        let theta = model.prior_sample(&mut rng);
        let x = model.simulate(&theta, &mut rng)?;
        Ok(model.distance_to_observed(&x))
    };
    let mut sorted: Vec<f64> = if parallel {
        (0..m).into_par_iter().map(draw).collect::<Result<_>>()?
    } else {
        (0..m).map(draw).collect::<Result<_>>()?
    };
    sorted.sort_by(f64::total_cmp);
    let quantile_map = levels
        .iter()
        .map(|&p| (p, quantile_sorted(&sorted, p)))
        .collect();
    Ok(PilotResult {
        sorted,
        quantile_map,
    })
}

/// Standard deviation of normalized weights divided by their mean `1/N`.
pub fn cov_of_weights(weights: &[f64]) -> f64 {
    let n = weights.len() as f64;
    let mean = 1.0 / n;
    let var = weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Self {
        Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyRow {
    pub step: usize,
    pub epsilon: f64,
    /// Simulations per accepted particle, one entry per variant.
    pub per_variant: Vec<Spread>,
}

/// Simulations per accepted particle by step, summarized over repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyTable {
    pub labels: Vec<String>,
    pub rows: Vec<EfficiencyRow>,
    /// Sum of the per-step means, one per variant.
    pub totals: Vec<f64>,
}

/// Repeated runs of one sampler variant.
#[derive(Debug, Clone)]
pub struct VariantRuns {
    pub label: String,
    pub runs: Vec<Vec<StepRecord>>,
}

pub fn efficiency_table(groups: &[VariantRuns]) -> Result<EfficiencyTable> {
    let reference = groups
        .iter()
        .flat_map(|g| g.runs.first())
        .next()
        .ok_or_else(|| Error::SchemaMismatch("no traces".into()))?;
    for group in groups {
        if group.runs.is_empty() {
            return Err(Error::SchemaMismatch(format!(
                "no traces for {}",
                group.label
            )));
        }
        let n = group.runs[0].first().map(|s| s.n_accepted);
        for run in &group.runs {
            if run.len() != reference.len()
                || run
                    .iter()
                    .zip(reference)
                    .any(|(a, b)| a.step != b.step || a.epsilon != b.epsilon)
            {
                return Err(Error::SchemaMismatch(format!(
                    "{} has a different threshold schedule",
                    group.label
                )));
            }
            if run.iter().any(|s| Some(s.n_accepted) != n) {
                return Err(Error::SchemaMismatch(format!(
                    "{} mixes population sizes",
                    group.label
                )));
            }
        }
    }
    let rows: Vec<EfficiencyRow> = reference
        .iter()
        .enumerate()
        .map(|(k, s)| EfficiencyRow {
            step: s.step,
            epsilon: s.epsilon,
            per_variant: groups
                .iter()
                .map(|g| {
                    let values: Vec<f64> =
                        g.runs.iter().map(|r| r[k].sims_per_accepted()).collect();
                    Spread::of(&values)
                })
                .collect(),
        })
        .collect();
    let totals = (0..groups.len())
        .map(|v| rows.iter().map(|r| r.per_variant[v].mean).sum())
        .collect();
    Ok(EfficiencyTable {
        labels: groups.iter().map(|g| g.label.clone()).collect(),
        rows,
        totals,
    })
}

impl EfficiencyTable {
    /// CSV with `t, epsilon` then `min, mean, max` per variant and a final
    /// `total` row carrying only the means.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string(), "epsilon".into()];
        for label in &self.labels {
            for stat in ["min", "mean", "max"] {
                header.push(format!("{label}_{stat}"));
            }
        }
        out.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![row.step.to_string(), row.epsilon.to_string()];
            for s in &row.per_variant {
                record.extend([s.min, s.mean, s.max].iter().map(|v| format!("{v:.4}")));
            }
            out.write_record(&record)?;
        }
        let mut total = vec!["total".to_string(), String::new()];
        for t in &self.totals {
            total.extend([String::new(), format!("{t:.4}"), String::new()]);
        }
        out.write_record(&total)?;
        out.flush()?;
        Ok(())
    }
}

/// Weighted gaussian kernel density of parameter `dim`, evaluated on `grid`.
pub fn kde_grid(system: &ParticleSystem, dim: usize, grid: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "kde bandwidth must be positive");
    let norm = 1.0 / (h * (2.0 * PI).sqrt());
    let centers = system.theta_column(dim);
    grid.iter()
        .map(|g| {
            centers
                .iter()
                .zip(system.weights())
                .map(|(c, w)| {
                    let z = (g - c) / h;
                    w * (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect()
}

pub fn write_density_csv<W: Write>(grid: &[f64], density: &[f64], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["grid_value", "density"])?;
    for (g, d) in grid.iter().zip(density) {
        out.write_record([g.to_string(), d.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

const MAX_DEPTH: u32 = 48;
const MIN_DEPTH: u32 = 6;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Every interval is split at least `2^6` ways before the error estimate is
/// trusted, so narrow features between the first few nodes are not missed.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        (a, fa): (f64, f64),
        (m, fm): (f64, f64),
        (b, fb): (f64, f64),
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        let settled = depth <= MAX_DEPTH - MIN_DEPTH && delta.abs() <= 15.0 * tol;
        if depth == 0 || settled {
            return left + right + delta / 15.0;
        }
        recurse(f, (a, fa), (lm, flm), (m, fm), left, 0.5 * tol, depth - 1)
            + recurse(f, (m, fm), (rm, frm), (b, fb), right, 0.5 * tol, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, (a, fa), (m, fm), (b, fb), whole, tol, MAX_DEPTH)
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Posterior of the scalar normal-mixture model under the acceptance event
/// `|x - x_obs| < eps` with prior `U(-10, 10)`.
///
/// `eps = 0` gives the exact posterior `0.5 N(x_obs, 1) + 0.5 N(x_obs, 0.01)`
/// truncated to the prior support.
#[derive(Debug, Clone, Copy)]
pub struct MixtureWindowPosterior {
    eps: f64,
    x_obs: f64,
    normalizer: f64,
}

impl MixtureWindowPosterior {
    pub const LOWER: f64 = -10.0;
    pub const UPPER: f64 = 10.0;
    pub const TOLERANCE: f64 = 1e-8;

    pub fn new(eps: f64, x_obs: f64) -> Self {
        assert!(eps >= 0.0, "window half-width must be nonnegative");
        let mut post = Self {
            eps,
            x_obs,
            normalizer: 1.0,
        };
        post.normalizer = post.integrate(|t| post.unnormalized(t));
        post
    }

    /// `Pr(|x - x_obs| < eps | theta)`, or the likelihood when `eps = 0`.
    pub fn unnormalized(&self, theta: f64) -> f64 {
        let d = self.x_obs - theta;
        if self.eps == 0.0 {
            return 0.5 * std_normal_pdf(d) + 0.5 * std_normal_pdf(d / 0.1) / 0.1;
        }
        let window =
            |sd: f64| std_normal_cdf((d + self.eps) / sd) - std_normal_cdf((d - self.eps) / sd);
        0.5 * window(1.0) + 0.5 * window(0.1)
    }

    pub fn density(&self, theta: f64) -> f64 {
        if theta <= Self::LOWER || theta >= Self::UPPER {
            return 0.0;
        }
        self.unnormalized(theta) / self.normalizer
    }

    fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        // split at the peak so the narrow component is resolved
        let mid = self.x_obs.clamp(Self::LOWER, Self::UPPER);
        let mut total = 0.0;
        let pieces = [Self::LOWER, mid - 1.0, mid, mid + 1.0, Self::UPPER];
        for w in pieces.windows(2) {
            let (a, b) = (w[0].max(Self::LOWER), w[1].min(Self::UPPER));
            if b > a {
                total += adaptive_simpson(&f, a, b, Self::TOLERANCE / 4.0);
            }
        }
        total
    }

    /// Integral of the normalized density; one up to quadrature error.
    pub fn total_mass(&self) -> f64 {
        self.integrate(|t| self.density(t))
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|t| t * self.density(t))
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.integrate(|t| (t - m).powi(2) * self.density(t))
    }

    pub fn cdf(&self, c: f64) -> f64 {
        let c = c.clamp(Self::LOWER, Self::UPPER);
        if c == Self::LOWER {
            return 0.0;
        }
        adaptive_simpson(&|t| self.density(t), Self::LOWER, c.min(self.x_obs), 1e-10)
            + if c > self.x_obs {
                adaptive_simpson(&|t| self.density(t), self.x_obs, c, 1e-10)
            } else {
                0.0
            }
    }
}

/// Window posterior density at `x_obs = 0` evaluated on `grid`.
pub fn exact_mixture_posterior(eps: f64, grid: &[f64]) -> Vec<f64> {
    let post = MixtureWindowPosterior::new(eps, 0.0);
    grid.iter().map(|&t| post.density(t)).collect()
}
