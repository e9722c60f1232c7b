//! Experiment configuration documents.
//!
//! Configs are TOML. Top-level keys describe the sampler run, a `[model]`
//! table selects a built-in model by `name`, and a `[schedule]` table
//! gives either explicit `epsilons` or a `pilot` recipe whose quantiles
//! become the thresholds:
//!
//! ```toml
//! name = "normal_mixture"
//! n_particles = 5000
//! variants = ["smc", "smc_aw"]
//! repeats = 1
//! seed = 2013
//!
//! [model]
//! name = "normal_mixture"
//! observed = 0.0
//!
//! [schedule]
//! epsilons = [2.0, 0.5, 0.025]
//! ```

use std::path::{Path, PathBuf};

use abcaw::diagnostics::pilot_threshold;
use abcaw::models::{
    Mg1Queue, Model, MvMixture, NormalMixture, QueueParams, SummaryScaling, ToggleConfig,
    ToggleSwitch, ToggleSwitchParams,
};
use abcaw::rng::derive_seed;
use abcaw::{RunConfig, ThresholdSchedule, Variant, XKernelChoice};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

const DATA_KEY: u64 = 0xda7a;
const PILOT_KEY: u64 = 0x9170;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub n_particles: usize,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub snapshots: bool,
    #[serde(default = "default_cap")]
    pub max_attempts_per_particle: u64,
    #[serde(default)]
    pub x_kernel: XKernelChoice,
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
}

fn default_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

fn default_repeats() -> usize {
    1
}

fn default_cap() -> u64 {
    RunConfig::DEFAULT_MAX_ATTEMPTS
}

fn default_customers() -> usize {
    Mg1Queue::DEFAULT_CUSTOMERS
}

fn default_cells() -> usize {
    ToggleConfig::default().cells
}

fn default_horizon() -> f64 {
    ToggleConfig::default().horizon
}

fn default_step() -> f64 {
    ToggleConfig::default().step
}

fn default_scaling_runs() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scaling {
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Built-in model selection. Synthetic-data models generate their
/// observation from `truth` with `data_seed` unless `observed` is given.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    NormalMixture {
        #[serde(default)]
        observed: f64,
    },
    MvMixture {
        p: usize,
        #[serde(default)]
        observed: Option<Vec<f64>>,
    },
    ToggleSwitch {
        #[serde(default = "default_cells")]
        cells: usize,
        #[serde(default = "default_horizon")]
        horizon: f64,
        #[serde(default = "default_step")]
        step: f64,
        #[serde(default)]
        prior_lower: Option<[f64; 7]>,
        #[serde(default)]
        prior_upper: Option<[f64; 7]>,
        #[serde(default)]
        truth: Option<[f64; 7]>,
        #[serde(default)]
        data_seed: Option<u64>,
        /// Regenerate the synthetic data for every repeat.
        #[serde(default)]
        vary_data: bool,
        /// Raw (unstandardized) 11-dimensional signature of the data.
        #[serde(default)]
        observed: Option<Vec<f64>>,
        #[serde(default)]
        scaling: Option<Scaling>,
        #[serde(default = "default_scaling_runs")]
        scaling_runs: usize,
    },
    Mg1Queue {
        #[serde(default = "default_customers")]
        customers: usize,
        #[serde(default)]
        truth: Option<[f64; 3]>,
        #[serde(default)]
        data_seed: Option<u64>,
        #[serde(default)]
        vary_data: bool,
        #[serde(default)]
        observed: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotRecipe {
    /// Prior:model draws; defaults to 100000, or 10000 for the toggle switch.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Quantile levels in `(0, 1]`; each becomes one threshold.
    pub quantiles: Vec<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default)]
    pub pilot: Option<PilotRecipe>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment configs serialize to TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |msg: String| Err(CliError::Validation(msg));
        if self.n_particles < 2 {
            return invalid(format!(
                "n_particles must be >= 2, got {}",
                self.n_particles
            ));
        }
        if self.repeats < 1 {
            return invalid("repeats must be >= 1".into());
        }
        if self.variants.is_empty() {
            return invalid("variants must name at least one sampler".into());
        }
        if self.max_attempts_per_particle < 1 {
            return invalid("max_attempts_per_particle must be >= 1".into());
        }
        match (&self.schedule.epsilons, &self.schedule.pilot) {
            (Some(eps), None) => {
                ThresholdSchedule::new(eps.clone())
                    .map_err(|e| CliError::Validation(format!("schedule.epsilons: {e}")))?;
            }
            (None, Some(pilot)) => {
                if pilot.samples.is_some_and(|m| m < 100) {
                    return invalid("schedule.pilot.samples must be >= 100".into());
                }
                if pilot.quantiles.is_empty()
                    || pilot.quantiles.iter().any(|p| !(*p > 0.0 && *p <= 1.0))
                {
                    return invalid("schedule.pilot.quantiles must lie in (0, 1]".into());
                }
            }
            _ => return invalid("schedule needs exactly one of `epsilons` or `pilot`".into()),
        }
        match &self.model {
            ModelConfig::NormalMixture { .. } => {}
            ModelConfig::MvMixture { p, observed } => {
                if *p < 1 {
                    return invalid("model.p must be >= 1".into());
                }
                if observed.as_ref().is_some_and(|o| o.len() != *p) {
                    return invalid("model.observed must have length p".into());
                }
            }
            ModelConfig::ToggleSwitch {
                cells,
                observed,
                vary_data,
                scaling,
                ..
            } => {
                if *cells < 11 {
                    return invalid("model.cells must be >= 11".into());
                }
                if observed.as_ref().is_some_and(|o| o.len() != 11) {
                    return invalid("model.observed must be an 11-dimensional signature".into());
                }
                if observed.is_some() && *vary_data {
                    return invalid("model.vary_data requires synthetic data (no observed)".into());
                }
                if let Some(s) = scaling {
                    SummaryScaling::new(s.location.clone(), s.scale.clone())
                        .map_err(|e| CliError::Validation(format!("model.scaling: {e}")))?;
                    if s.location.len() != 11 {
                        return invalid("model.scaling must have 11 entries".into());
                    }
                }
            }
            ModelConfig::Mg1Queue {
                customers,
                truth,
                observed,
                vary_data,
                ..
            } => {
                if *customers < 5 {
                    return invalid("model.customers must be >= 5".into());
                }
                if let Some(t) = truth {
                    if !QueueParams::from_slice(t).is_ok_and(|q| q.is_valid()) {
                        return invalid(
                            "model.truth must satisfy 0 <= theta1 <= theta2, theta3 > 0".into(),
                        );
                    }
                }
                if observed.as_ref().is_some_and(|o| o.len() != 5) {
                    return invalid("model.observed must have 5 summaries".into());
                }
                if observed.is_some() && *vary_data {
                    return invalid("model.vary_data requires synthetic data (no observed)".into());
                }
            }
        }
        Ok(())
    }

    /// Thresholds, once the config has been resolved.
    pub fn schedule(&self) -> Result<ThresholdSchedule, CliError> {
        let eps = self.schedule.epsilons.clone().ok_or_else(|| {
            CliError::Validation("schedule has not been resolved to explicit epsilons".into())
        })?;
        ThresholdSchedule::new(eps).map_err(|e| CliError::Validation(format!("schedule: {e}")))
    }

    fn base_data_seed(&self) -> u64 {
        derive_seed(self.seed, &[DATA_KEY])
    }

    /// Data-generation seed for `repeat`; shared by all variants.
    pub fn data_seed(&self, repeat: usize) -> Option<u64> {
        let (seed, vary) = match &self.model {
            ModelConfig::ToggleSwitch {
                data_seed,
                vary_data,
                observed: None,
                ..
            }
            | ModelConfig::Mg1Queue {
                data_seed,
                vary_data,
                observed: None,
                ..
            } => (
                data_seed.unwrap_or_else(|| self.base_data_seed()),
                *vary_data,
            ),
            _ => return None,
        };
        Some(if vary && repeat > 0 {
            derive_seed(seed, &[repeat as u64])
        } else {
            seed
        })
    }

    /// Sampler seed for `(repeat, variant)`.
    pub fn sampler_seed(&self, repeat: usize, variant: Variant) -> u64 {
        let v = Variant::ALL.iter().position(|&x| x == variant).unwrap_or(0) as u64;
        derive_seed(self.seed, &[repeat as u64, v])
    }

    pub fn run_config(&self, repeat: usize, variant: Variant, parallel: bool) -> RunConfig {
        RunConfig {
            n_particles: self.n_particles,
            variant,
            seed: self.sampler_seed(repeat, variant),
            max_attempts_per_particle: self.max_attempts_per_particle,
            x_kernel: self.x_kernel,
            snapshots: self.snapshots,
            parallel,
        }
    }

    /// Instantiates the model for `repeat`.
    pub fn build_model(&self, repeat: usize) -> Result<Box<dyn Model>, CliError> {
        let model: Box<dyn Model> = match &self.model {
            ModelConfig::NormalMixture { observed } => Box::new(NormalMixture::new(*observed)),
            ModelConfig::MvMixture { p, observed } => Box::new(MvMixture::new(
                observed.clone().unwrap_or_else(|| vec![0.0; *p]),
            )),
            ModelConfig::ToggleSwitch {
                observed, scaling, ..
            } => {
                let toggle = self.toggle_config();
                let raw = match observed {
                    Some(o) => o.clone(),
                    None => ToggleSwitch::synthetic_signature(
                        &toggle,
                        &self.toggle_truth()?,
                        self.data_seed(repeat).unwrap_or_default(),
                    )?,
                };
                let scaling = match scaling {
                    Some(s) => SummaryScaling::new(s.location.clone(), s.scale.clone())?,
                    None => SummaryScaling::identity(11),
                };
                Box::new(ToggleSwitch::new(toggle, &raw, scaling)?)
            }
            ModelConfig::Mg1Queue {
                customers,
                truth,
                observed,
                ..
            } => match observed {
                Some(o) => Box::new(Mg1Queue::new(*customers, o.clone())?),
                None => {
                    let truth = match truth {
                        Some(t) => QueueParams::from_slice(t)?,
                        None => Mg1Queue::TRUTH,
                    };
                    Box::new(Mg1Queue::synthetic(
                        *customers,
                        truth,
                        self.data_seed(repeat).unwrap_or_default(),
                    )?)
                }
            },
        };
        Ok(model)
    }

    fn toggle_config(&self) -> ToggleConfig {
        let ModelConfig::ToggleSwitch {
            cells,
            horizon,
            step,
            prior_lower,
            prior_upper,
            ..
        } = &self.model
        else {
            unreachable!("toggle_config on a non-toggle model");
        };
        let defaults = ToggleConfig::default();
        ToggleConfig {
            cells: *cells,
            horizon: *horizon,
            step: *step,
            prior_lower: prior_lower.unwrap_or(defaults.prior_lower),
            prior_upper: prior_upper.unwrap_or(defaults.prior_upper),
        }
    }

    fn toggle_truth(&self) -> Result<ToggleSwitchParams, CliError> {
        match &self.model {
            ModelConfig::ToggleSwitch { truth: Some(t), .. } => {
                Ok(ToggleSwitchParams::from_slice(t)?)
            }
            _ => Ok(ToggleSwitchParams::TRUTH),
        }
    }

    fn default_pilot_samples(&self) -> usize {
        match self.model {
            ModelConfig::ToggleSwitch { .. } => 10_000,
            _ => 100_000,
        }
    }

    fn pilot_seed(&self) -> u64 {
        match &self.schedule.pilot {
            Some(PilotRecipe { seed: Some(s), .. }) => *s,
            _ => derive_seed(self.seed, &[PILOT_KEY]),
        }
    }
}

/// What resolution filled in, for the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Resolution {
    pub pilot_quantiles: Option<Vec<(f64, f64)>>,
    pub scaling_from_pilot: bool,
}

/// Parses and fully resolves a config: the data seed, toggle summary
/// scaling and pilot-derived thresholds all become explicit.
pub fn resolve_config(
    text: &str,
    parallel: bool,
) -> Result<(ExperimentConfig, Resolution), CliError> {
    let mut config = ExperimentConfig::parse(text)?;
    let mut resolution = Resolution::default();

    if let ModelConfig::ToggleSwitch { data_seed, .. } | ModelConfig::Mg1Queue { data_seed, .. } =
        &mut config.model
    {
        if data_seed.is_none() {
            *data_seed = Some(derive_seed(config.seed, &[DATA_KEY]));
        }
    }

    if let ModelConfig::ToggleSwitch {
        scaling: None,
        scaling_runs,
        ..
    } = &config.model
    {
        let toggle = config.toggle_config();
        let seed = derive_seed(config.seed, &[PILOT_KEY, 1]);
        let fitted = SummaryScaling::from_pilot(&toggle, *scaling_runs, seed)?;
        if let ModelConfig::ToggleSwitch { scaling, .. } = &mut config.model {
            *scaling = Some(Scaling {
                location: fitted.location,
                scale: fitted.scale,
            });
        }
        resolution.scaling_from_pilot = true;
    }

    if let Some(pilot) = config.schedule.pilot.clone() {
        let model = config.build_model(0)?;
        let result = pilot_threshold(
            model.as_ref(),
            pilot
                .samples
                .unwrap_or_else(|| config.default_pilot_samples()),
            &pilot.quantiles,
            config.pilot_seed(),
            parallel,
        )?;
        let schedule = result
            .schedule()
            .map_err(|e| CliError::Validation(format!("pilot-derived schedule: {e}")))?;
        config.schedule = ScheduleConfig {
            epsilons: Some(schedule.epsilons().to_vec()),
            pilot: None,
        };
        resolution.pilot_quantiles = Some(result.quantile_map);
    }

    config.validate()?;
    Ok((config, resolution))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIXTURE: &str = r#"
n_particles = 5000
seed = 1
[model]
name = "normal_mixture"
[schedule]
epsilons = [2.0, 0.5, 0.025]
"#;

    #[test]
    fn parses_normal_mixture_setup() {
        let config = ExperimentConfig::parse(MIXTURE).unwrap();
        assert_eq!(config.n_particles, 5000);
        assert_eq!(config.variants, vec![Variant::Smc, Variant::SmcAw]);
        assert_eq!(config.schedule().unwrap().epsilons(), &[2.0, 0.5, 0.025]);
        assert_eq!(config.model, ModelConfig::NormalMixture { observed: 0.0 });
    }

    #[test]
    fn rejects_increasing_schedule() {
        let text = MIXTURE.replace("[2.0, 0.5, 0.025]", "[1.0, 2.0, 3.0]");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(
            matches!(err, CliError::Validation(ref m) if m.contains("decreasing")),
            "{err}"
        );
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = ExperimentConfig::parse("n_particles = \"many\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, CliError::Parse(_)));
        assert!(
            msg.contains("line 1") || msg.contains("n_particles"),
            "{msg}"
        );
        let err = ExperimentConfig::parse(&MIXTURE.replace("seed", "sead")).unwrap_err();
        assert!(err.to_string().contains("sead"), "{err}");
    }

    #[test]
    fn seeds_pair_data_but_not_samplers() {
        let text = r#"
n_particles = 100
repeats = 3
seed = 9
[model]
name = "mg1_queue"
vary_data = true
[schedule]
epsilons = [200.0, 100.0, 10.0, 2.0, 1.0]
"#;
        let (config, _) = resolve_config(text, false).unwrap();
        assert_ne!(
            config.sampler_seed(0, Variant::Smc),
            config.sampler_seed(0, Variant::SmcAw)
        );
        assert_ne!(config.data_seed(0), config.data_seed(1));
        let a = config.build_model(1).unwrap();
        let b = config.build_model(1).unwrap();
        assert_eq!(a.observed(), b.observed());
        let c = config.build_model(2).unwrap();
        assert_ne!(a.observed(), c.observed());
    }

    #[test]
    fn pilot_schedule_resolves_to_epsilons() {
        let text = r#"
n_particles = 100
[model]
name = "mv_mixture"
p = 2
[schedule]
pilot = { quantiles = [0.2, 0.05, 0.01] }
"#;
        let (config, resolution) = resolve_config(text, false).unwrap();
        let eps = config.schedule().unwrap();
        assert_eq!(eps.len(), 3);
        assert_eq!(resolution.pilot_quantiles.unwrap().len(), 3);
        let again = ExperimentConfig::parse(&config.to_toml()).unwrap();
        assert_eq!(again, config);
    }
}
