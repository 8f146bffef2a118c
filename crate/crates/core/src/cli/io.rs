//! CSV artifacts. Floats are written in shortest round-trip form so files
//! reload bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::assimilation::AssimilationResult;
use crate::dynamics::Trajectory;
use crate::error::{NinnError, Result};
use crate::training::{Dataset, TrainHistory};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| NinnError::CorruptFile(format!("{}: bad number `{s}`", path.display())))
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(
        path,
    )?)))
}

fn numbered(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (1..=d).map(move |i| format!("{prefix}_{i}"))
}

/// Header `t, u_1..u_d, s_1..s_d`.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = writer(path)?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(numbered("u", data.input_dim()))
        .chain(numbered("s", data.target_dim()))
        .collect();
    w.write_record(&header)?;
    for ((t, u), s) in data.times().iter().zip(data.inputs()).zip(data.targets()) {
        let row: Vec<String> = std::iter::once(*t)
            .chain(u.iter().copied())
            .chain(s.iter().copied())
            .map(fmt_f64)
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path, dt_step: f64) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let d_in = header.iter().filter(|h| h.starts_with("u_")).count();
    let d_out = header.iter().filter(|h| h.starts_with("s_")).count();
    if header.get(0) != Some("t") || header.len() != 1 + d_in + d_out {
        return Err(NinnError::CorruptFile(format!(
            "{}: expected header t,u_1..u_d,s_1..s_d",
            path.display()
        )));
    }
    let (mut times, mut inputs, mut targets) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| parse_f64(s, path))
            .collect::<Result<Vec<_>>>()?;
        times.push(vals[0]);
        inputs.push(vals[1..=d_in].to_vec());
        targets.push(vals[1 + d_in..].to_vec());
    }
    Dataset::with_times(inputs, targets, times, dt_step)
}

/// Header `t, x_1..x_d`.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write_labeled(path, &numbered("x", traj.dim()).collect::<Vec<_>>(), traj)
}

/// Trajectory with explicit column names after `t`.
pub fn write_labeled(path: &Path, columns: &[String], traj: &Trajectory) -> Result<()> {
    let mut w = writer(path)?;
    let header: Vec<&str> = std::iter::once("t")
        .chain(columns.iter().map(String::as_str))
        .collect();
    w.write_record(&header)?;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let row: Vec<String> = std::iter::once(*t)
            .chain(x.iter().copied())
            .map(fmt_f64)
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.get(0) != Some("t") {
        return Err(NinnError::CorruptFile(format!(
            "{}: first column must be t",
            path.display()
        )));
    }
    let mut traj = Trajectory::new();
    for rec in r.records() {
        let vals = rec?
            .iter()
            .map(|s| parse_f64(s, path))
            .collect::<Result<Vec<_>>>()?;
        traj.push(vals[0], vals[1..].to_vec());
    }
    Ok(traj)
}

/// Header `iter, train_loss, val_loss, grad_norm`.
pub fn write_history(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["iter", "train_loss", "val_loss", "grad_norm"])?;
    for (i, ((tl, vl), g)) in history
        .train_loss
        .iter()
        .zip(&history.val_loss)
        .zip(&history.grad_norm)
        .enumerate()
    {
        w.write_record([i.to_string(), fmt_f64(*tl), fmt_f64(*vl), fmt_f64(*g)])?;
    }
    w.flush()?;
    Ok(())
}

/// Header `t, w_1..w_d, err_checkpoint`. With `all_steps` every model step
/// gets a row; otherwise only observation times. `err_checkpoint` is
/// filled on observation-time rows only.
pub fn write_result(path: &Path, result: &AssimilationResult, all_steps: bool) -> Result<()> {
    let dim = result.checkpoint_states.first().map_or(0, Vec::len);
    let mut w = writer(path)?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(numbered("w", dim))
        .chain(std::iter::once("err_checkpoint".to_string()))
        .collect();
    w.write_record(&header)?;
    let err_at = |k: usize| {
        result
            .checkpoint_errors
            .get(k)
            .map_or(String::new(), |e| fmt_f64(*e))
    };
    let row = |t: f64, x: &[f64], err: String| -> Vec<String> {
        std::iter::once(t)
            .chain(x.iter().copied())
            .map(fmt_f64)
            .chain(std::iter::once(err))
            .collect()
    };
    if all_steps {
        let mut k = 0;
        for (t, x) in result.estimates.times.iter().zip(&result.estimates.states) {
            let at_checkpoint = result
                .checkpoint_times
                .get(k)
                .is_some_and(|tc| (tc - t).abs() <= 1e-9 * tc.abs().max(1.0));
            let err = if at_checkpoint {
                k += 1;
                err_at(k - 1)
            } else {
                String::new()
            };
            w.write_record(row(*t, x, err))?;
        }
    } else {
        for (k, (t, x)) in result
            .checkpoint_times
            .iter()
            .zip(&result.checkpoint_states)
            .enumerate()
        {
            w.write_record(row(*t, x, err_at(k)))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Checkpoint errors of a result file, in time order.
pub fn read_checkpoint_errors(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let col = header
        .iter()
        .position(|h| h == "err_checkpoint")
        .ok_or_else(|| {
            NinnError::CorruptFile(format!("{}: no err_checkpoint column", path.display()))
        })?;
    let mut errs = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let cell = rec.get(col).unwrap_or("");
        if !cell.is_empty() {
            errs.push(parse_f64(cell, path)?);
        }
    }
    Ok(errs)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)
        .map_err(|e| NinnError::Io(std::io::Error::other(e)))?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| NinnError::CorruptFile(format!("{}: {e}", path.display())))
}
