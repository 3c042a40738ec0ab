//! Experiment configuration: a flat key-value config file, command-line
//! overrides, and the `BRAN_SIM_SEED` environment variable, resolved in
//! that precedence order (flags strongest, environment weakest).

use std::path::PathBuf;

use bran_core::model::{ConfCounting, GiveUp, SystemParams};
use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Syntax error, unknown key or type mismatch, with the parser's
    /// line/column diagnostics.
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("missing required key `{key}`")]
    MissingRequired { key: &'static str },
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Experiment mode, one CLI subcommand each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Analytic,
    SteadyState,
    Simulate,
    Attack,
    SweepRho,
    SweepConfirmations,
    SweepAttack,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Analytic => "analytic",
            Mode::SteadyState => "steady-state",
            Mode::Simulate => "simulate",
            Mode::Attack => "attack",
            Mode::SweepRho => "sweep-rho",
            Mode::SweepConfirmations => "sweep-confirmations",
            Mode::SweepAttack => "sweep-attack",
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(match text {
            "analytic" => Mode::Analytic,
            "steady-state" => Mode::SteadyState,
            "simulate" => Mode::Simulate,
            "attack" => Mode::Attack,
            "sweep-rho" => Mode::SweepRho,
            "sweep-confirmations" => Mode::SweepConfirmations,
            "sweep-attack" => Mode::SweepAttack,
            other => return Err(invalid("mode", format!("unknown mode `{other}`"))),
        })
    }

    fn is_sweep(&self) -> bool {
        matches!(self, Mode::SweepRho | Mode::SweepConfirmations | Mode::SweepAttack)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        match text {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(invalid("format", format!("expected `csv` or `json`, got `{other}`"))),
        }
    }
}

/// Which ratio the sweep axis `rho` controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhoDefinition {
    /// `rho = lambda_a / lambda_b`; setting it rescales `lambda_a`.
    #[default]
    Block,
    /// `rho = lambda_a / (s * lambda_c)`.
    Service,
}

impl RhoDefinition {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        match text {
            "block" => Ok(RhoDefinition::Block),
            "service" => Ok(RhoDefinition::Service),
            other => Err(invalid(
                "rho_definition",
                format!("expected `block` or `service`, got `{other}`"),
            )),
        }
    }

    /// The arrival rate that realizes traffic intensity `rho`.
    pub fn lambda_a(&self, rho: f64, params: &SystemParams) -> f64 {
        match self {
            RhoDefinition::Block => rho * params.lambda_b,
            RhoDefinition::Service => rho * f64::from(params.s) * params.lambda_c,
        }
    }

    /// The traffic intensity of a parameter set.
    pub fn rho(&self, params: &SystemParams) -> f64 {
        match self {
            RhoDefinition::Block => params.lambda_a / params.lambda_b,
            RhoDefinition::Service => params.lambda_a / (f64::from(params.s) * params.lambda_c),
        }
    }
}

fn parse_conf_counting(text: &str) -> Result<ConfCounting, ConfigError> {
    match text {
        "inclusive" => Ok(ConfCounting::Inclusive),
        "exclusive" => Ok(ConfCounting::Exclusive),
        other => Err(invalid(
            "conf_counting",
            format!("expected `inclusive` or `exclusive`, got `{other}`"),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepScale {
    #[default]
    Linear,
    Log,
}

impl SweepScale {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        match text {
            "linear" => Ok(SweepScale::Linear),
            "log" => Ok(SweepScale::Log),
            other => Err(invalid(
                "sweep.scale",
                format!("expected `linear` or `log`, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    Rho,
    Confirmations,
    Beta,
}

impl SweepVariable {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        match text {
            "rho" => Ok(SweepVariable::Rho),
            "n_conf" => Ok(SweepVariable::Confirmations),
            "beta" => Ok(SweepVariable::Beta),
            other => Err(invalid(
                "sweep.variable",
                format!("expected `rho`, `n_conf` or `beta`, got `{other}`"),
            )),
        }
    }
}

/// Resolved sweep axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub points: u32,
    pub scale: SweepScale,
}

impl SweepSpec {
    pub fn grid(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| {
                let t = f64::from(i) / f64::from(n - 1);
                match self.scale {
                    SweepScale::Linear => self.start + (self.stop - self.start) * t,
                    SweepScale::Log => {
                        (self.start.ln() + (self.stop.ln() - self.start.ln()) * t).exp()
                    }
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !self.start.is_finite() || !self.stop.is_finite() || self.start >= self.stop {
            return Err(invalid(
                "sweep.start",
                format!("bounds must be finite and ordered, got [{}, {}]", self.start, self.stop),
            ));
        }
        if self.points < 2 {
            return Err(invalid("sweep.points", "sweeps need at least 2 points"));
        }
        if self.scale == SweepScale::Log && self.start <= 0.0 {
            return Err(invalid("sweep.scale", "log scale needs a positive start"));
        }
        if self.variable == SweepVariable::Confirmations {
            for v in self.grid() {
                if (v - v.round()).abs() > 1e-9 || v < 1.0 {
                    return Err(invalid(
                        "sweep.points",
                        format!("confirmation sweep produced non-integer grid value {v}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// `n_g`: a positive integer or the string `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GiveUpValue(pub GiveUp);

impl<'de> Deserialize<'de> for GiveUpValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = GiveUpValue;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a positive integer or the string \"unbounded\"")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                u32::try_from(v)
                    .ok()
                    .filter(|g| *g >= 1)
                    .map(|g| GiveUpValue(GiveUp::Bounded(g)))
                    .ok_or_else(|| E::custom(format!("n_g must be >= 1, got {v}")))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                self.visit_i64(i64::try_from(v).map_err(|_| E::custom("n_g out of range"))?)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                if v == "unbounded" {
                    Ok(GiveUpValue(GiveUp::Unbounded))
                } else {
                    Err(E::custom(format!("expected \"unbounded\" or an integer, got `{v}`")))
                }
            }
        }
        deserializer.deserialize_any(V)
    }
}

impl GiveUpValue {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text == "unbounded" {
            return Ok(GiveUpValue(GiveUp::Unbounded));
        }
        match text.parse::<u32>() {
            Ok(g) if g >= 1 => Ok(GiveUpValue(GiveUp::Bounded(g))),
            _ => Err(invalid("n_g", format!("expected `unbounded` or an integer >= 1, got `{text}`"))),
        }
    }
}

/// The config file: every key optional, unknown keys rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<String>,
    pub lambda_a: Option<f64>,
    pub lambda_b: Option<f64>,
    pub lambda_c: Option<f64>,
    pub lambda_r: Option<f64>,
    pub k: Option<u32>,
    pub r: Option<u32>,
    pub s: Option<u32>,
    pub n_conf: Option<u32>,
    pub beta: Option<f64>,
    pub n_g: Option<GiveUpValue>,
    pub rho_definition: Option<String>,
    pub conf_counting: Option<String>,
    pub sweep: Option<FileSweep>,
    pub trials: Option<u64>,
    pub num_arrivals: Option<u64>,
    pub warmup_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub output: Option<String>,
    pub format: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSweep {
    pub variable: Option<String>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<u32>,
    pub scale: Option<String>,
}

/// Parses a config document (flat `key = value` lines; `sweep.*` keys for
/// the axis). Unknown keys and type mismatches are reported with the
/// offending key and position.
pub fn parse_config(text: &str) -> Result<FileConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Command-line overrides; `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub lambda_a: Option<f64>,
    pub lambda_b: Option<f64>,
    pub lambda_c: Option<f64>,
    pub lambda_r: Option<f64>,
    pub k: Option<u32>,
    pub r: Option<u32>,
    pub s: Option<u32>,
    pub n_conf: Option<u32>,
    pub beta: Option<f64>,
    pub n_g: Option<GiveUpValue>,
    pub rho_definition: Option<String>,
    pub conf_counting: Option<String>,
    pub sweep_variable: Option<String>,
    pub sweep_start: Option<f64>,
    pub sweep_stop: Option<f64>,
    pub sweep_points: Option<u32>,
    pub sweep_scale: Option<String>,
    pub trials: Option<u64>,
    pub num_arrivals: Option<u64>,
    pub warmup_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub output: Option<String>,
    pub format: Option<String>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub params: SystemParams,
    /// Attacker relative mining rate; NaN outside attack modes.
    pub beta: f64,
    pub give_up: GiveUp,
    pub conf_counting: ConfCounting,
    pub rho_definition: RhoDefinition,
    pub sweep: Option<SweepSpec>,
    pub trials: u64,
    pub num_arrivals: u64,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

/// Merges defaults, the config file, the environment seed and flags into a
/// validated [`ExperimentConfig`]. Flags beat file values; the environment
/// seed only applies when nothing else sets one.
pub fn resolve(
    mode: Mode,
    file: &FileConfig,
    flags: &Overrides,
    env_seed: Option<u64>,
) -> Result<ExperimentConfig, ConfigError> {
    // The subcommand is authoritative; a conflicting file mode is legal but
    // must at least name a real mode.
    if let Some(file_mode) = &file.mode {
        Mode::parse(file_mode)?;
    }

    let lambda_a_needed = matches!(
        mode,
        Mode::Analytic | Mode::SteadyState | Mode::Simulate | Mode::SweepConfirmations
    );
    let lambda_a = flags.lambda_a.or(file.lambda_a);
    let lambda_a = match lambda_a {
        Some(v) => v,
        None if lambda_a_needed => return Err(ConfigError::MissingRequired { key: "lambda_a" }),
        // The sweep axis (or nothing) sets it later.
        None => 0.0,
    };

    let params = SystemParams {
        lambda_a,
        lambda_b: flags.lambda_b.or(file.lambda_b).unwrap_or(1.0),
        lambda_c: flags.lambda_c.or(file.lambda_c).unwrap_or(1.0),
        lambda_r: flags.lambda_r.or(file.lambda_r).unwrap_or(0.0),
        k: flags.k.or(file.k).unwrap_or(1),
        r: flags.r.or(file.r).unwrap_or(1),
        s: flags.s.or(file.s).unwrap_or(2),
        n_conf: flags.n_conf.or(file.n_conf).unwrap_or(1),
    };

    let beta = flags.beta.or(file.beta);
    let beta = match beta {
        Some(v) => v,
        None if mode == Mode::Attack => return Err(ConfigError::MissingRequired { key: "beta" }),
        None => f64::NAN,
    };

    let give_up = flags.n_g.or(file.n_g).map(|g| g.0).unwrap_or(GiveUp::Unbounded);

    let conf_counting = match flags.conf_counting.as_deref().or(file.conf_counting.as_deref()) {
        Some(text) => parse_conf_counting(text)?,
        None => ConfCounting::Inclusive,
    };

    let rho_definition = match flags.rho_definition.as_deref().or(file.rho_definition.as_deref()) {
        Some(text) => RhoDefinition::parse(text)?,
        None => RhoDefinition::Block,
    };

    let sweep = resolve_sweep(mode, file, flags)?;

    let format = match flags.format.as_deref().or(file.format.as_deref()) {
        Some(text) => OutputFormat::parse(text)?,
        None => OutputFormat::Csv,
    };

    let warmup_fraction = flags.warmup_fraction.or(file.warmup_fraction).unwrap_or(0.1);
    if !(0.0..=0.9).contains(&warmup_fraction) {
        return Err(invalid("warmup_fraction", "must be in [0, 0.9]"));
    }

    Ok(ExperimentConfig {
        mode,
        params,
        beta,
        give_up,
        conf_counting,
        rho_definition,
        sweep,
        trials: flags.trials.or(file.trials).unwrap_or(1_000_000),
        num_arrivals: flags.num_arrivals.or(file.num_arrivals).unwrap_or(1_000_000),
        warmup_fraction,
        seed: flags.seed.or(file.seed).or(env_seed).unwrap_or(0),
        output: flags.output.clone().or(file.output.clone()).map(PathBuf::from),
        format,
    })
}

fn resolve_sweep(mode: Mode, file: &FileConfig, flags: &Overrides) -> Result<Option<SweepSpec>, ConfigError> {
    if !mode.is_sweep() {
        return Ok(None);
    }
    let (default_variable, default_start, default_stop, default_points) = match mode {
        Mode::SweepRho => (SweepVariable::Rho, 0.05, 0.95, 19),
        Mode::SweepConfirmations => (SweepVariable::Confirmations, 1.0, 6.0, 6),
        Mode::SweepAttack => (SweepVariable::Beta, 0.05, 1.0, 20),
        _ => unreachable!(),
    };
    let empty = FileSweep::default();
    let fs = file.sweep.as_ref().unwrap_or(&empty);
    let variable = match flags.sweep_variable.as_deref().or(fs.variable.as_deref()) {
        Some(text) => SweepVariable::parse(text)?,
        None => default_variable,
    };
    if variable != default_variable {
        return Err(invalid(
            "sweep.variable",
            format!("mode `{}` sweeps a fixed variable", mode.as_str()),
        ));
    }
    let scale = match flags.sweep_scale.as_deref().or(fs.scale.as_deref()) {
        Some(text) => SweepScale::parse(text)?,
        None => SweepScale::Linear,
    };
    let spec = SweepSpec {
        variable,
        start: flags.sweep_start.or(fs.start).unwrap_or(default_start),
        stop: flags.sweep_stop.or(fs.stop).unwrap_or(default_stop),
        points: flags.sweep_points.or(fs.points).unwrap_or(default_points),
        scale,
    };
    spec.validate()?;
    Ok(Some(spec))
}
