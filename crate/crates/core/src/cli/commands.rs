//! Pipeline commands. Layout under the output directory:
//!
//! ```text
//! data/dataset.csv                    training pairs
//! data/runs.json                      reference-run metadata
//! data/checkpoints_NNN.csv            truth at observation times
//! data/obs_NNN.csv                    observed components at observation times
//! data/truth_NNN.csv                  truth every 0.01 (optional)
//! model/<label>.ninn                  trained system
//! model/<label>_history_<i>.csv       per-net training history
//! model/<label>_report.json           per-net termination summary
//! assim/<label>/<cell>/cell.json      method, μ, Λ and window of one grid cell
//! assim/<label>/<cell>/run_NNN.csv    estimates and checkpoint errors
//! rmse_table.csv
//! manifest-<command>.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Config, EstimateOutput, NetworkConfig};
use super::io;
use super::manifest::{now_unix, RunManifest};
use super::CliError;
use crate::assimilation::{check_schedule, Method, Model, ObservationOperator};
use crate::dynamics::{
    make_reference_runs, make_training_set, OdeSpec, ReferenceConfig, ReferenceRun, Trajectory,
};
use crate::error::NinnError;
use crate::eval::{
    grid_cells, observation_stream, rmse_from_errors, run_cell, substeps_for,
    wrong_initial_conditions, Cell, RmseRow, RmseTable, ODE_LABEL,
};
use crate::nn::{load_model, save_model, ActivationSpec, ResNetShape, ResNetSystem};
use crate::rng::{seeded_rng, stream_seed};
use crate::training::{init_system, train_system};

type CResult<T> = std::result::Result<T, CliError>;

/// Metadata of the generated reference runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunsInfo {
    pub system: String,
    pub spec: OdeSpec,
    pub reference: ReferenceConfig,
    pub initial_conditions: Vec<Vec<f64>>,
}

/// Everything `report` needs to know about one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInfo {
    pub system: String,
    pub net_label: String,
    pub method: Method,
    pub obs_pattern: String,
    pub observed: Vec<usize>,
    pub mu: f64,
    pub lambda_decay: f64,
    pub substeps: usize,
    pub n_runs: usize,
    pub k0: usize,
    pub k_end: usize,
    pub diverged_runs: Vec<usize>,
}

fn run_file(i: usize) -> String {
    format!("run_{i:03}.csv")
}

fn rel(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

struct Session<'a> {
    out: &'a Path,
    manifest: RunManifest,
}

impl<'a> Session<'a> {
    fn new(command: &str, out: &'a Path, seed: u64, config_bytes: &[u8]) -> CResult<Self> {
        fs::create_dir_all(out).map_err(NinnError::from)?;
        Ok(Self {
            out,
            manifest: RunManifest::new(command, seed, config_bytes),
        })
    }

    fn input(&mut self, path: &Path) -> CResult<()> {
        let name = rel(self.out, path);
        RunManifest::record(&mut self.manifest.inputs, self.out, &[name])?;
        Ok(())
    }

    fn output(&mut self, path: &Path) -> CResult<()> {
        let name = rel(self.out, path);
        RunManifest::record(&mut self.manifest.outputs, self.out, &[name])?;
        Ok(())
    }

    fn finish(mut self) -> CResult<()> {
        self.manifest.finished_unix = now_unix();
        let path = self
            .out
            .join(format!("manifest-{}.json", self.manifest.command));
        io::write_json(&path, &self.manifest)?;
        Ok(())
    }
}

pub fn gen_data(cfg: &Config, config_bytes: &[u8], out: &Path) -> CResult<()> {
    let spec = cfg.system.spec()?;
    let mut session = Session::new("gen-data", out, cfg.seed, config_bytes)?;
    let dir = out.join("data");
    fs::create_dir_all(&dir).map_err(NinnError::from)?;

    let mut rng = seeded_rng(stream_seed(cfg.seed, "training-data"));
    let data = make_training_set(&spec, &cfg.data.sampling(), &mut rng)?;
    let path = dir.join("dataset.csv");
    io::write_dataset(&path, &data)?;
    session.output(&path)?;

    let reference = ReferenceConfig::for_spec(&spec, cfg.data.n_runs);
    let runs = make_reference_runs(&spec, &reference, stream_seed(cfg.seed, "reference"))?;
    let op = ObservationOperator::new(cfg.assimilation.observed.clone(), spec.dim())?;
    let obs_columns: Vec<String> = op
        .observed()
        .iter()
        .map(|j| format!("x_{}", j + 1))
        .collect();
    for run in &runs {
        let i = run.index;
        let path = dir.join(format!("checkpoints_{i:03}.csv"));
        io::write_trajectory(&path, &run.checkpoints)?;
        session.output(&path)?;
        let observed = Trajectory {
            times: run.checkpoints.times.clone(),
            states: run
                .checkpoints
                .states
                .iter()
                .map(|x| op.project(x))
                .collect(),
        };
        let path = dir.join(format!("obs_{i:03}.csv"));
        io::write_labeled(&path, &obs_columns, &observed)?;
        session.output(&path)?;
        if cfg.data.write_truth {
            let path = dir.join(format!("truth_{i:03}.csv"));
            io::write_trajectory(&path, &run.trajectory)?;
            session.output(&path)?;
        }
    }
    let info = RunsInfo {
        system: cfg.system.label().into(),
        spec,
        reference,
        initial_conditions: runs.iter().map(|r| r.initial_condition.clone()).collect(),
    };
    let path = dir.join("runs.json");
    io::write_json(&path, &info)?;
    session.output(&path)?;
    session.finish()
}

fn build_shape(net: &NetworkConfig, dim: usize) -> CResult<ResNetShape> {
    let mut shape = ResNetShape::new(dim, 1, net.width, net.depth())
        .with_activation(ActivationSpec::new(net.epsilon)?);
    if let Some(tau) = net.tau {
        shape = shape.with_tau(tau);
    }
    Ok(shape)
}

pub fn train(cfg: &Config, config_bytes: &[u8], out: &Path) -> CResult<()> {
    if cfg.network.is_empty() {
        return Err(CliError::Config(
            "network: at least one [[network]] section is required".into(),
        ));
    }
    let spec = cfg.system.spec()?;
    let mut session = Session::new("train", out, cfg.seed, config_bytes)?;
    let data_path = out.join("data").join("dataset.csv");
    let data = io::read_dataset(&data_path, cfg.data.dt_step)?;
    session.input(&data_path)?;
    if data.input_dim() != spec.dim() || data.target_dim() != spec.dim() {
        return Err(NinnError::DimensionMismatch(format!(
            "dataset has dimensions {}→{}, {} has dimension {}",
            data.input_dim(),
            data.target_dim(),
            cfg.system.label(),
            spec.dim()
        ))
        .into());
    }
    let dir = out.join("model");
    fs::create_dir_all(&dir).map_err(NinnError::from)?;
    let train_cfg = cfg.training.to_train_config(stream_seed(cfg.seed, "train"));
    for net in &cfg.network {
        let shape = build_shape(net, spec.dim())?;
        let stencils = net.stencils(cfg.system.kind, spec.dim());
        let init_seed = stream_seed(cfg.seed, &format!("init/{}", net.label));
        let system = init_system(&shape, stencils, &data, train_cfg.box_scale, init_seed)?;
        let (trained, reports) = train_system(&system, &data, &train_cfg)?;
        let path = dir.join(format!("{}.ninn", net.label));
        save_model(&trained, &path)?;
        session.output(&path)?;
        for r in &reports {
            let path = dir.join(format!("{}_history_{}.csv", net.label, r.component));
            io::write_history(&path, &r.history)?;
            session.output(&path)?;
        }
        let summary: Vec<serde_json::Value> = reports
            .iter()
            .map(|r| {
                serde_json::json!({
                    "component": r.component,
                    "best_iter": r.history.best_iter,
                    "best_val_loss": r.history.val_loss.get(r.history.best_iter),
                    "termination": r.termination.map(|t| format!("{t:?}")),
                    "diverged": r.diverged,
                    "warning": r.warning,
                })
            })
            .collect();
        let path = dir.join(format!("{}_report.json", net.label));
        io::write_json(&path, &summary)?;
        session.output(&path)?;
    }
    session.finish()
}

fn load_runs(
    dir: &Path,
    session: &mut Session<'_>,
    n_runs: usize,
) -> CResult<(RunsInfo, Vec<ReferenceRun>)> {
    let info_path = dir.join("runs.json");
    let info: RunsInfo = io::read_json(&info_path)?;
    session.input(&info_path)?;
    let available = info.initial_conditions.len();
    if n_runs > available {
        return Err(NinnError::DimensionMismatch(format!(
            "{n_runs} runs requested, {available} generated"
        ))
        .into());
    }
    let runs = (0..n_runs)
        .map(|i| {
            let path = dir.join(format!("checkpoints_{i:03}.csv"));
            let checkpoints = io::read_trajectory(&path)?;
            session.input(&path)?;
            if checkpoints.dim() != info.spec.dim() {
                return Err(NinnError::DimensionMismatch(format!(
                    "{} has dimension {}, system has {}",
                    path.display(),
                    checkpoints.dim(),
                    info.spec.dim()
                ))
                .into());
            }
            Ok(ReferenceRun {
                index: i,
                initial_condition: info.initial_conditions[i].clone(),
                trajectory: Trajectory::new(),
                checkpoints,
            })
        })
        .collect::<CResult<Vec<_>>>()?;
    Ok((info, runs))
}

fn check_schedules(cfg: &Config, delta_t_obs: f64, needs_surrogate: bool) -> CResult<()> {
    let a = &cfg.assimilation;
    if needs_surrogate {
        if cfg.network.is_empty() {
            return Err(CliError::Config(
                "network: surrogate methods need at least one [[network]] section".into(),
            ));
        }
        check_schedule(cfg.data.dt_step, a.substeps, delta_t_obs)?;
    }
    if a.methods.contains(&Method::Nudging) {
        let steps = (delta_t_obs / a.nudging_dt).round().max(1.0) as usize;
        check_schedule(a.nudging_dt, steps, delta_t_obs)?;
    }
    Ok(())
}

pub fn assimilate(cfg: &Config, config_bytes: &[u8], out: &Path) -> CResult<()> {
    let a = &cfg.assimilation;
    let spec = cfg.system.spec()?;
    let mut session = Session::new("assimilate", out, cfg.seed, config_bytes)?;
    let data_dir = out.join("data");
    let n_runs = a.n_runs.unwrap_or(cfg.data.n_runs);
    let needs_surrogate = a.methods.iter().any(|m| !m.needs_ode());
    // Schedules are validated against the configured interval before any
    // input is read, then again against the stored runs.
    check_schedules(
        cfg,
        ReferenceConfig::for_spec(&spec, n_runs.max(1)).obs_interval,
        needs_surrogate,
    )?;
    let (info, runs) = load_runs(&data_dir, &mut session, n_runs)?;
    if info.spec != spec {
        return Err(NinnError::DimensionMismatch(
            "reference runs were generated for a different system".into(),
        )
        .into());
    }
    let dim = spec.dim();
    let k_end = a.k_end(cfg.system.kind);
    if runs.iter().any(|r| r.checkpoints.len() <= k_end) {
        return Err(NinnError::DimensionMismatch(format!(
            "reference runs have {} checkpoints, window ends at k = {k_end}",
            runs[0].checkpoints.len()
        ))
        .into());
    }
    let op = ObservationOperator::new(a.observed.clone(), dim)?;
    let delta_t_obs = info.reference.obs_interval;
    check_schedules(cfg, delta_t_obs, needs_surrogate)?;

    let mut systems: Vec<(String, ResNetSystem)> = Vec::new();
    if needs_surrogate {
        for net in &cfg.network {
            let path = out.join("model").join(format!("{}.ninn", net.label));
            let system = load_model(&path)?;
            session.input(&path)?;
            if system.state_dim() != dim {
                return Err(NinnError::DimensionMismatch(format!(
                    "model {} has state dimension {}, system has {dim}",
                    net.label,
                    system.state_dim()
                ))
                .into());
            }
            systems.push((net.label.clone(), system));
        }
    }

    let streams = runs
        .iter()
        .map(|run| observation_stream(run, &op, a.noise_std, cfg.seed))
        .collect::<crate::Result<Vec<_>>>()?;
    let wrong_ics = wrong_initial_conditions(cfg.seed, runs.len(), dim);
    let truth: Vec<Vec<Vec<f64>>> = runs.iter().map(|r| r.checkpoints.states.clone()).collect();

    let mut jobs: Vec<(String, Cell, Model<'_>)> = Vec::new();
    for &method in &a.methods {
        for cell in grid_cells(method, &a.mu, &a.lambda_decay) {
            if method.needs_ode() {
                jobs.push((
                    ODE_LABEL.into(),
                    cell,
                    Model::Ode {
                        spec: &spec,
                        dt: a.nudging_dt,
                    },
                ));
            } else {
                for (label, system) in &systems {
                    jobs.push((
                        label.clone(),
                        cell,
                        Model::Surrogate {
                            system,
                            dt_step: cfg.data.dt_step,
                        },
                    ));
                }
            }
        }
    }

    for (label, cell, model) in &jobs {
        let substeps = substeps_for(model, delta_t_obs, a.substeps);
        let results = run_cell(cell, *model, &streams, &wrong_ics, &truth, substeps)?;
        let dir = out.join("assim").join(label).join(cell.dir_name());
        fs::create_dir_all(&dir).map_err(NinnError::from)?;
        for (i, res) in results.iter().enumerate() {
            let path = dir.join(run_file(i));
            io::write_result(&path, res, a.estimates == EstimateOutput::All)?;
            session.output(&path)?;
        }
        let info = CellInfo {
            system: cfg.system.label().into(),
            net_label: label.clone(),
            method: cell.method,
            obs_pattern: op.label(),
            observed: op.observed().to_vec(),
            mu: cell.mu,
            lambda_decay: cell.lambda_decay,
            substeps,
            n_runs: results.len(),
            k0: a.k0,
            k_end,
            diverged_runs: results
                .iter()
                .enumerate()
                .filter(|(_, r)| r.diverged)
                .map(|(i, _)| i)
                .collect(),
        };
        let path = dir.join("cell.json");
        io::write_json(&path, &info)?;
        session.output(&path)?;
    }
    session.finish()
}

/// Every directory below `root` that holds a `cell.json`, sorted.
fn find_cells(root: &Path) -> CResult<Vec<PathBuf>> {
    let mut found = Vec::new();
    if !root.exists() {
        return Ok(found);
    }
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join("cell.json").is_file() {
            found.push(dir.clone());
        }
        for entry in fs::read_dir(&dir).map_err(NinnError::from)? {
            let path = entry.map_err(NinnError::from)?.path();
            if path.is_dir() {
                stack.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Builds `rmse_table.csv` from result directories (default: every cell
/// under `<out>/assim`). Returns whether every cell was complete.
pub fn report(config: Option<(&Config, &[u8])>, out: &Path, dirs: &[PathBuf]) -> CResult<bool> {
    let seed = config.map_or(0, |(c, _)| c.seed);
    let bytes = config.map_or(&[][..], |(_, b)| b);
    let mut session = Session::new("report", out, seed, bytes)?;
    let mut cells = Vec::new();
    if dirs.is_empty() {
        cells = find_cells(&out.join("assim"))?;
    } else {
        for d in dirs {
            cells.extend(find_cells(d)?);
        }
        cells.sort();
        cells.dedup();
    }
    let mut table = RmseTable::default();
    for dir in &cells {
        let info_path = dir.join("cell.json");
        let info: CellInfo = io::read_json(&info_path)?;
        session.input(&info_path)?;
        let mut errors = Vec::with_capacity(info.n_runs);
        let mut complete = true;
        for i in 0..info.n_runs {
            let path = dir.join(run_file(i));
            if !path.is_file() {
                complete = false;
                continue;
            }
            errors.push(io::read_checkpoint_errors(&path)?);
            session.input(&path)?;
        }
        let rmse = if complete && !errors.is_empty() {
            match rmse_from_errors(&errors, info.k0, info.k_end) {
                Ok(v) => v,
                Err(_) => {
                    complete = false;
                    f64::NAN
                }
            }
        } else {
            complete = false;
            f64::NAN
        };
        table.rows.push(RmseRow {
            system: info.system,
            net_label: info.net_label,
            method: info.method,
            obs_pattern: info.obs_pattern,
            mu: info.mu,
            lambda_decay: info.lambda_decay,
            rmse,
            complete,
        });
    }
    table.sort();
    let path = out.join("rmse_table.csv");
    let file = fs::File::create(&path).map_err(NinnError::from)?;
    table.write_csv(std::io::BufWriter::new(file))?;
    session.output(&path)?;
    session.finish()?;
    Ok(!table.has_incomplete())
}
