//! Run configuration: `key = value` lines with dotted keys and `#`
//! comments, merged as defaults < config file < command-line flags.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crowdfilter_core::bench::{FilterKind, Objective, ProtocolConfig, SyntheticLikelihood};
use crowdfilter_core::filter::{HpfConfig, Selection};
use crowdfilter_core::motion::{MotionModel, NoiseSpec};
use crowdfilter_core::rvo::RvoParams;
use crowdfilter_core::scenario::ScenarioKind;
use thiserror::Error;

use crate::io::Format;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Every recognized key with its default. An empty default means unset.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("agent.max_speed", "2"),
    ("agent.radius", "0.3"),
    ("corrupt.occlusion_every", "0"),
    ("corrupt.occlusion_length", "2"),
    ("corrupt.sigma", "0"),
    ("dt", "0.4"),
    ("filter", "hpf"),
    ("format", "csv-fixy"),
    ("hpf.k", "2"),
    ("hpf.m", "200"),
    ("hpf.pi", "0.91,0.09"),
    ("hpf.selection", "resample"),
    ("input", ""),
    ("likelihood.sigma_obs", "0.1"),
    ("model", "rvo+"),
    ("noise.desired", "0.05"),
    ("noise.position", "0.05"),
    ("noise.velocity", "0.1"),
    ("predict.horizons", "5,15,30"),
    ("predict.learning_frames", "10"),
    ("protocol.stride", "16"),
    ("rvo.neighbor_radius", "10"),
    ("rvo.time_horizon", "2"),
    ("scenario.agents", "2"),
    ("scenario.kind", "crossing"),
    ("scenario.trials", "1"),
    ("seed", "0"),
    ("sweep.m", ""),
    ("sweep.neighbor_radius", ""),
    ("sweep.noise.desired", ""),
    ("sweep.noise.position", ""),
    ("sweep.noise.velocity", ""),
    ("sweep.objective", "mean_error"),
    ("sweep.pi", ""),
    ("sweep.horizon", "30"),
    ("sweep.samples", "0"),
    ("sweep.sigma_obs", ""),
    ("sweep.time_horizon", ""),
    ("track.horizons", "16,24"),
    ("track.threshold", "0.5"),
];

/// Merged key-value pairs, sorted by key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        RawConfig {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RawConfig {
    /// Applies a config file's lines over the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(&format!("line {}", i + 1), "expected `key = value`"))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(invalid(key, "unknown key")),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// One `key = value` line per key.
    pub fn echo(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let v = self.get(key);
        v.parse().map_err(|_| invalid(key, format!("cannot parse `{v}`")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError> {
        let v = self.get(key);
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|x| x.trim().parse().map_err(|_| invalid(key, format!("cannot parse `{}`", x.trim()))))
            .collect()
    }

    fn positive(&self, key: &str) -> Result<f64, ConfigError> {
        let v: f64 = self.parse(key)?;
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(key, "must be positive"));
        }
        Ok(v)
    }

    fn non_negative(&self, key: &str) -> Result<f64, ConfigError> {
        let v: f64 = self.parse(key)?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(invalid(key, "must be non-negative"));
        }
        Ok(v)
    }
}

fn check_pi(field: &str, pi: &[f64]) -> Result<(), ConfigError> {
    if pi.is_empty() || pi.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(invalid(field, "weights must be non-negative"));
    }
    let sum: f64 = pi.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(invalid(field, format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Parameter grid for `sweep`; an empty axis keeps the base value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub objective: Objective,
    pub samples: Option<usize>,
    pub time_horizon: Vec<f64>,
    pub neighbor_radius: Vec<f64>,
    pub sigma_position: Vec<f64>,
    pub sigma_velocity: Vec<f64>,
    pub sigma_desired: Vec<f64>,
    pub pi: Vec<Vec<f64>>,
    pub particles_m: Vec<usize>,
    pub sigma_obs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub models: Vec<MotionModel>,
    pub filters: Vec<FilterKind>,
    pub protocol: ProtocolConfig,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub format: Format,
    pub dt: f64,
    pub kind: ScenarioKind,
    pub agents: usize,
    pub trials: usize,
    pub corrupt_sigma: f64,
    pub occlusion_length: usize,
    pub occlusion_every: usize,
    pub sweep: SweepSpec,
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let models: Vec<MotionModel> = raw.list("model")?;
        if models.is_empty() {
            return Err(invalid("model", "at least one model required"));
        }
        if let Some(m) = models.iter().find(|m| !m.is_implemented()) {
            return Err(invalid("model", format!("{m} is not implemented")));
        }
        let filters: Vec<FilterKind> = raw.list("filter")?;
        if filters.is_empty() {
            return Err(invalid("filter", "at least one filter required"));
        }

        let order_k: usize = raw.parse("hpf.k")?;
        if order_k == 0 {
            return Err(invalid("hpf.k", "must be at least 1"));
        }
        let pi: Vec<f64> = raw.list("hpf.pi")?;
        if pi.len() != order_k {
            return Err(invalid("hpf.pi", format!("{} weights for hpf.k = {order_k}", pi.len())));
        }
        check_pi("hpf.pi", &pi)?;
        let particles_m: usize = raw.parse("hpf.m")?;
        if particles_m == 0 {
            return Err(invalid("hpf.m", "must be at least 1"));
        }
        let selection = match raw.get("hpf.selection") {
            "resample" => Selection::Resample,
            "top" => Selection::TopM,
            other => return Err(invalid("hpf.selection", format!("`{other}` is neither resample nor top"))),
        };

        let horizons: Vec<usize> = raw.list("predict.horizons")?;
        if horizons.is_empty() || horizons.contains(&0) {
            return Err(invalid("predict.horizons", "need positive horizons"));
        }
        let track_horizons: Vec<usize> = raw.list("track.horizons")?;
        if track_horizons.is_empty() || track_horizons.contains(&0) {
            return Err(invalid("track.horizons", "need positive horizons"));
        }
        let learning_frames: usize = raw.parse("predict.learning_frames")?;
        if learning_frames < 2 {
            return Err(invalid("predict.learning_frames", "must be at least 2"));
        }
        let start_stride: usize = raw.parse("protocol.stride")?;
        if start_stride == 0 {
            return Err(invalid("protocol.stride", "must be at least 1"));
        }

        let protocol = ProtocolConfig {
            hpf: HpfConfig {
                order_k,
                pi,
                particles_m,
                selection,
            },
            noise: NoiseSpec {
                sigma_position: raw.non_negative("noise.position")?,
                sigma_velocity: raw.non_negative("noise.velocity")?,
                sigma_desired: raw.non_negative("noise.desired")?,
            },
            rvo: RvoParams {
                time_horizon: raw.positive("rvo.time_horizon")?,
                dt: raw.positive("dt")?,
                neighbor_radius: raw.positive("rvo.neighbor_radius")?,
            },
            likelihood: SyntheticLikelihood {
                sigma_obs: raw.positive("likelihood.sigma_obs")?,
            },
            radius: raw.positive("agent.radius")?,
            max_speed: raw.positive("agent.max_speed")?,
            learning_frames,
            start_stride,
            horizons,
            track_horizons,
            success_threshold: raw.positive("track.threshold")?,
        };

        let agents: usize = raw.parse("scenario.agents")?;
        if agents == 0 {
            return Err(invalid("scenario.agents", "must be at least 1"));
        }
        let trials: usize = raw.parse("scenario.trials")?;
        if trials == 0 {
            return Err(invalid("scenario.trials", "must be at least 1"));
        }
        let input = match raw.get("input") {
            "" => None,
            p => Some(PathBuf::from(p)),
        };

        let objective = match raw.get("sweep.objective") {
            "mean_error" => Objective::MeanError {
                horizon: raw.parse("sweep.horizon")?,
            },
            "st" => Objective::SuccessfulTracks,
            other => return Err(invalid("sweep.objective", format!("`{other}` is neither mean_error nor st"))),
        };
        let pi_grid: Vec<Vec<f64>> = match raw.get("sweep.pi") {
            "" => Vec::new(),
            v => v
                .split(';')
                .map(|w| {
                    w.split(',')
                        .map(|x| x.trim().parse().map_err(|_| invalid("sweep.pi", format!("cannot parse `{}`", x.trim()))))
                        .collect::<Result<Vec<f64>, _>>()
                })
                .collect::<Result<_, _>>()?,
        };
        for p in &pi_grid {
            check_pi("sweep.pi", p)?;
        }
        let sweep = SweepSpec {
            objective,
            samples: match raw.parse::<usize>("sweep.samples")? {
                0 => None,
                n => Some(n),
            },
            time_horizon: raw.list("sweep.time_horizon")?,
            neighbor_radius: raw.list("sweep.neighbor_radius")?,
            sigma_position: raw.list("sweep.noise.position")?,
            sigma_velocity: raw.list("sweep.noise.velocity")?,
            sigma_desired: raw.list("sweep.noise.desired")?,
            pi: pi_grid,
            particles_m: raw.list("sweep.m")?,
            sigma_obs: raw.list("sweep.sigma_obs")?,
        };

        Ok(RunConfig {
            models,
            filters,
            protocol,
            seed: raw.parse("seed")?,
            input,
            format: raw.parse("format")?,
            dt: raw.positive("dt")?,
            kind: raw.parse("scenario.kind")?,
            agents,
            trials,
            corrupt_sigma: raw.non_negative("corrupt.sigma")?,
            occlusion_length: raw.parse("corrupt.occlusion_length")?,
            occlusion_every: raw.parse("corrupt.occlusion_every")?,
            sweep,
        })
    }
}
