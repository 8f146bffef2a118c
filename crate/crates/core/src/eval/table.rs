use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::assimilation::Method;
use crate::error::{NinnError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub system: String,
    pub net_label: String,
    pub method: Method,
    pub obs_pattern: String,
    pub mu: f64,
    pub lambda_decay: f64,
    /// `+∞` when any contributing run diverged.
    pub rmse: f64,
    /// False when some runs of the cell are missing.
    pub complete: bool,
}

/// One row per (system, net, method, observation pattern, μ, Λ) cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RmseTable {
    pub rows: Vec<RmseRow>,
}

const HEADER: [&str; 7] = [
    "system",
    "net_label",
    "method",
    "obs_pattern",
    "mu",
    "lambda_decay",
    "rmse",
];

/// `Inf` for infinities, `incomplete` for partial cells, shortest
/// round-trip decimal otherwise.
fn format_rmse(row: &RmseRow) -> String {
    if !row.complete {
        "incomplete".into()
    } else if row.rmse.is_infinite() {
        "Inf".into()
    } else {
        format!("{}", row.rmse)
    }
}

impl RmseTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows in a canonical order so tables built in any order compare equal.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (&a.system, &a.net_label, a.method, &a.obs_pattern)
                .cmp(&(&b.system, &b.net_label, b.method, &b.obs_pattern))
                .then(a.mu.total_cmp(&b.mu))
                .then(a.lambda_decay.total_cmp(&b.lambda_decay))
        });
    }

    /// Lowest-RMSE complete row of a method, optionally restricted to one net.
    pub fn best(&self, method: Method, net_label: Option<&str>) -> Option<&RmseRow> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.complete)
            .filter(|r| net_label.is_none_or(|l| r.net_label == l))
            .min_by(|a, b| a.rmse.total_cmp(&b.rmse))
    }

    pub fn has_incomplete(&self) -> bool {
        self.rows.iter().any(|r| !r.complete)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(HEADER)?;
        for row in &self.rows {
            w.write_record([
                row.system.clone(),
                row.net_label.clone(),
                row.method.to_string(),
                row.obs_pattern.clone(),
                format!("{}", row.mu),
                format!("{}", row.lambda_decay),
                format_rmse(row),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        if r.headers()?.iter().ne(HEADER) {
            return Err(NinnError::CorruptFile(
                "unexpected rmse table header".into(),
            ));
        }
        let num = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|_| NinnError::CorruptFile(format!("bad {what} value `{s}`")))
        };
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let (rmse, complete) = match &rec[6] {
                "Inf" => (f64::INFINITY, true),
                "incomplete" => (f64::NAN, false),
                s => (num(s, "rmse")?, true),
            };
            rows.push(RmseRow {
                system: rec[0].to_string(),
                net_label: rec[1].to_string(),
                method: rec[2].parse()?,
                obs_pattern: rec[3].to_string(),
                mu: num(&rec[4], "mu")?,
                lambda_decay: num(&rec[5], "lambda_decay")?,
                rmse,
                complete,
            });
        }
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, mu: f64, rmse: f64) -> RmseRow {
        RmseRow {
            system: "lorenz63".into(),
            net_label: "a".into(),
            method,
            obs_pattern: "x0".into(),
            mu,
            lambda_decay: 1.0,
            rmse,
            complete: true,
        }
    }

    #[test]
    fn csv_round_trip_with_inf() {
        let table = RmseTable {
            rows: vec![
                row(Method::Ninn1, 5.0, 1.25),
                row(Method::DirectObs, 0.0, f64::INFINITY),
            ],
        };
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(2).unwrap().ends_with(",Inf"));
        assert_eq!(RmseTable::read_csv(buf.as_slice()).unwrap(), table);
    }

    #[test]
    fn best_skips_infinite() {
        let table = RmseTable {
            rows: vec![
                row(Method::Ninn1, 1.0, f64::INFINITY),
                row(Method::Ninn1, 2.0, 3.0),
                row(Method::Ninn1, 5.0, 2.0),
                row(Method::FreeRun, 0.0, 0.5),
            ],
        };
        assert_eq!(table.best(Method::Ninn1, None).unwrap().mu, 5.0);
        assert!(table.best(Method::Ninn2Plain, None).is_none());
    }
}
