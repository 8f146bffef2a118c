use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assimilation::{Method, DECAY_FACTORS, MU_GRID};
use crate::dynamics::{OdeSpec, SamplingConfig};
use crate::nn::{identity_stencils, lorenz96_stencils, ActivationSpec};
use crate::training::TrainConfig;

/// A configuration problem, reported with the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

fn field_err<T>(field: &str, msg: impl std::fmt::Display) -> CResult<T> {
    Err(ConfigError(format!("{field}: {msg}")))
}

/// One experiment: every pipeline command reads the section it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub system: SystemConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub network: Vec<NetworkConfig>,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub assimilation: AssimilationConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Lorenz63,
    Lorenz96,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    /// Lorenz 96 only; default 40.
    pub dim: Option<usize>,
    /// Lorenz 96 only; default 10.
    pub forcing: Option<f64>,
    /// Lorenz 63 only; defaults 10, 28, 8/3.
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub beta: Option<f64>,
}

impl SystemConfig {
    pub fn label(&self) -> &'static str {
        match self.kind {
            SystemKind::Lorenz63 => "lorenz63",
            SystemKind::Lorenz96 => "lorenz96",
        }
    }

    pub fn spec(&self) -> CResult<OdeSpec> {
        let spec = match self.kind {
            SystemKind::Lorenz63 => {
                if self.dim.is_some() || self.forcing.is_some() {
                    return field_err("system", "`dim` and `forcing` apply to lorenz96 only");
                }
                let OdeSpec::Lorenz63 { sigma, rho, beta } = OdeSpec::lorenz63() else {
                    unreachable!()
                };
                OdeSpec::Lorenz63 {
                    sigma: self.sigma.unwrap_or(sigma),
                    rho: self.rho.unwrap_or(rho),
                    beta: self.beta.unwrap_or(beta),
                }
            }
            SystemKind::Lorenz96 => {
                if self.sigma.is_some() || self.rho.is_some() || self.beta.is_some() {
                    return field_err("system", "`sigma`, `rho` and `beta` apply to lorenz63 only");
                }
                let dim = self.dim.unwrap_or(40);
                let OdeSpec::Lorenz96 { forcing, .. } = OdeSpec::lorenz96(dim) else {
                    unreachable!()
                };
                OdeSpec::Lorenz96 {
                    forcing: self.forcing.unwrap_or(forcing),
                    dim,
                }
            }
        };
        spec.validate().or_else(|e| field_err("system", e))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_samples: usize,
    pub dt_step: f64,
    pub burn_in: f64,
    pub pairs_per_trajectory: usize,
    /// Number of reference runs.
    pub n_runs: usize,
    /// Also write each run's truth every 0.01 time units.
    pub write_truth: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SamplingConfig::default();
        Self {
            n_samples: s.n_samples,
            dt_step: s.dt_step,
            burn_in: s.burn_in,
            pairs_per_trajectory: s.pairs_per_trajectory,
            n_runs: 100,
            write_truth: false,
        }
    }
}

impl DataConfig {
    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            n_samples: self.n_samples,
            dt_step: self.dt_step,
            burn_in: self.burn_in,
            pairs_per_trajectory: self.pairs_per_trajectory,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StencilKind {
    /// Every net reads the full state.
    Full,
    /// Net `i` reads `x_{i-2}, x_{i-1}, x_i, x_{i+1}` (cyclic).
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub label: String,
    pub hidden_layers: usize,
    pub width: usize,
    /// Default `1/(L-2)`.
    pub tau: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Default `full` for Lorenz 63, `local` for Lorenz 96.
    pub stencil: Option<StencilKind>,
}

fn default_epsilon() -> f64 {
    crate::nn::activation::DEFAULT_EPSILON
}

impl NetworkConfig {
    /// Layer count `L`: `hidden_layers` hidden vectors plus the output.
    pub fn depth(&self) -> usize {
        self.hidden_layers + 1
    }

    pub fn stencils(&self, kind: SystemKind, dim: usize) -> Vec<Vec<usize>> {
        let default = match kind {
            SystemKind::Lorenz63 => StencilKind::Full,
            SystemKind::Lorenz96 => StencilKind::Local,
        };
        match self.stencil.unwrap_or(default) {
            StencilKind::Full => identity_stencils(dim),
            StencilKind::Local => lorenz96_stencils(dim),
        }
    }

    fn validate(&self, i: usize) -> CResult<()> {
        let f = |name: &str| format!("network[{i}].{name}");
        if self.label.is_empty()
            || !self
                .label
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return field_err(&f("label"), "must be non-empty and use only [A-Za-z0-9_-]");
        }
        if self.hidden_layers < 2 {
            return field_err(&f("hidden_layers"), "must be at least 2");
        }
        if self.width == 0 {
            return field_err(&f("width"), "must be positive");
        }
        if let Some(tau) = self.tau {
            if !(tau >= 0.0 && tau.is_finite()) {
                return field_err(&f("tau"), "must be finite and >= 0");
            }
        }
        ActivationSpec::new(self.epsilon).or_else(|e| field_err(&f("epsilon"), e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub split_fraction: f64,
    pub patience: usize,
    pub max_iters: usize,
    pub l1_delta: f64,
    pub box_scale: f64,
    pub tol: f64,
    pub warm_start_readout: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lambda: t.lambda,
            gamma: t.gamma,
            split_fraction: t.split_fraction,
            patience: t.patience,
            max_iters: t.max_iters,
            l1_delta: t.l1_delta,
            box_scale: t.box_scale,
            tol: t.tol,
            warm_start_readout: t.warm_start_readout,
        }
    }
}

impl TrainingConfig {
    pub fn to_train_config(self, seed: u64) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            gamma: self.gamma,
            split_fraction: self.split_fraction,
            patience: self.patience,
            max_iters: self.max_iters,
            l1_delta: self.l1_delta,
            seed,
            box_scale: self.box_scale,
            tol: self.tol,
            warm_start_readout: self.warm_start_readout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateOutput {
    /// One row per observation time.
    Checkpoints,
    /// One row per model step.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssimilationConfig {
    pub methods: Vec<Method>,
    /// Observed component indices (0-based).
    pub observed: Vec<usize>,
    pub mu: Vec<f64>,
    pub lambda_decay: Vec<f64>,
    pub substeps: usize,
    pub nudging_dt: f64,
    pub k0: usize,
    /// Default 100 for Lorenz 63, 200 for Lorenz 96.
    pub k_end: Option<usize>,
    pub noise_std: f64,
    /// Use only the first `n_runs` reference runs; default all.
    pub n_runs: Option<usize>,
    pub estimates: EstimateOutput,
}

impl Default for AssimilationConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            observed: vec![0],
            mu: MU_GRID.to_vec(),
            lambda_decay: DECAY_FACTORS.to_vec(),
            substeps: 10,
            nudging_dt: 1e-3,
            k0: 50,
            k_end: None,
            noise_std: 0.0,
            n_runs: None,
            estimates: EstimateOutput::Checkpoints,
        }
    }
}

impl AssimilationConfig {
    pub fn k_end(&self, kind: SystemKind) -> usize {
        self.k_end.unwrap_or(match kind {
            SystemKind::Lorenz63 => 100,
            SystemKind::Lorenz96 => 200,
        })
    }
}

impl Config {
    pub fn parse(text: &str) -> CResult<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CResult<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| ConfigError(format!("{} is not UTF-8", path.display())))?;
        Ok((Self::parse(text)?, bytes))
    }

    pub fn validate(&self) -> CResult<()> {
        let spec = self.system.spec()?;
        let dim = spec.dim();
        let d = &self.data;
        if d.n_samples == 0 {
            return field_err("data.n_samples", "must be positive");
        }
        if !(d.dt_step > 0.0 && d.dt_step.is_finite()) {
            return field_err("data.dt_step", "must be positive");
        }
        if !(d.burn_in >= 0.0 && d.burn_in.is_finite()) {
            return field_err("data.burn_in", "must be >= 0");
        }
        if d.pairs_per_trajectory == 0 {
            return field_err("data.pairs_per_trajectory", "must be positive");
        }
        if d.n_runs == 0 {
            return field_err("data.n_runs", "must be positive");
        }
        for (i, net) in self.network.iter().enumerate() {
            net.validate(i)?;
            if self.network[..i].iter().any(|n| n.label == net.label) {
                return field_err(&format!("network[{i}].label"), "duplicate label");
            }
        }
        self.training
            .to_train_config(self.seed)
            .validate()
            .or_else(|e| field_err("training", e))?;
        let a = &self.assimilation;
        if let Some(&bad) = a.observed.iter().find(|&&i| i >= dim) {
            return field_err(
                "assimilation.observed",
                format!("index {bad} out of range for dimension {dim}"),
            );
        }
        if a.mu.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return field_err("assimilation.mu", "values must be finite and >= 0");
        }
        if a.lambda_decay.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return field_err(
                "assimilation.lambda_decay",
                "values must be finite and >= 0",
            );
        }
        if a.methods.is_empty() {
            return field_err("assimilation.methods", "must list at least one method");
        }
        if a.substeps == 0 {
            return field_err("assimilation.substeps", "must be positive");
        }
        if !(a.nudging_dt > 0.0 && a.nudging_dt.is_finite()) {
            return field_err("assimilation.nudging_dt", "must be positive");
        }
        if a.k_end(self.system.kind) <= a.k0 {
            return field_err("assimilation.k_end", "must exceed k0");
        }
        if !(a.noise_std >= 0.0 && a.noise_std.is_finite()) {
            return field_err("assimilation.noise_std", "must be >= 0");
        }
        if a.n_runs == Some(0) {
            return field_err("assimilation.n_runs", "must be positive");
        }
        Ok(())
    }
}
