//! CSV and JSON artifacts.
//!
//! Floating-point fields are written with 17 significant digits so every
//! value reads back bit-identically.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::device::QUBIT_NAMES;
use crate::error::{Error, Result};
use crate::optimizer::{IterationRecord, OptimizeResult, Termination};
use crate::problem::ControlProblem;
use crate::propagation::Trajectory;
use crate::pulse::{gaussian_filter, zero_order_hold, CoarsePulse, FinePulse, ScheduleSpec};

pub const PULSE_HEADER: [&str; 4] = ["t_ns", "delta_P_GHz", "delta_S1_GHz", "delta_S2_GHz"];
pub const TRACE_HEADER: [&str; 5] = ["restart", "iteration", "fidelity", "step", "gradient_norm"];
pub const SWEEP_HEADER: [&str; 5] = [
    "t_g_ns",
    "best_fidelity",
    "restarts_used",
    "iterations_total",
    "warm_started",
];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

fn write_rows(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Header plus numeric rows of a CSV file.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| match f {
                "true" => Ok(1.0),
                "false" => Ok(0.0),
                _ => f.trim().parse::<f64>(),
            })
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| format_err(path, format!("row {}: {e}", k + 2)))?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Detuning samples of every qubit, one row per time point.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseTable {
    pub times: Vec<f64>,
    /// `values[q][k]` for qubit `q` at `times[k]`.
    pub values: Vec<Vec<f64>>,
}

impl PulseTable {
    /// Coarse intervals over the full gate, buffers included.
    pub fn from_coarse(pulse: &CoarsePulse, spec: &ScheduleSpec) -> Self {
        let values = pulse.full_samples(spec);
        let times = (0..spec.n_coarse())
            .map(|k| k as f64 * spec.coarse_dt_ns)
            .collect();
        Self { times, values }
    }

    pub fn from_fine(pulse: &FinePulse, spec: &ScheduleSpec) -> Self {
        let times = (0..pulse.len())
            .map(|m| m as f64 * spec.fine_dt_ns)
            .collect();
        Self {
            times,
            values: pulse.samples.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let header: Vec<String> = PULSE_HEADER.iter().map(|s| s.to_string()).collect();
        let rows = self.times.iter().enumerate().map(|(k, &t)| {
            std::iter::once(t)
                .chain(self.values.iter().map(|c| c[k]))
                .map(fmt_f64)
                .collect()
        });
        write_rows(path, &header, rows)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (header, rows) = read_numeric_csv(path)?;
        if header != PULSE_HEADER {
            return Err(format_err(
                path,
                format!("expected header {}", PULSE_HEADER.join(",")),
            ));
        }
        if rows.is_empty() {
            return Err(format_err(path, "no samples"));
        }
        let times = rows.iter().map(|r| r[0]).collect();
        let values = (1..PULSE_HEADER.len())
            .map(|c| rows.iter().map(|r| r[c]).collect())
            .collect();
        Ok(Self { times, values })
    }

    /// Filtered fine-grid detunings. A table with one row per coarse
    /// interval is held and filtered with the buffers pinned at `idle`; a
    /// table with one row per fine step is used as is.
    pub fn to_fine(&self, spec: &ScheduleSpec, idle: &[f64]) -> Result<FinePulse> {
        spec.validate()?;
        let n = self.times.len();
        if n == spec.n_fine() {
            return Ok(FinePulse {
                samples: self.values.clone(),
                idle: idle.to_vec(),
            });
        }
        if n == spec.n_coarse() {
            return gaussian_filter(&zero_order_hold(&self.to_coarse(spec, idle)?, spec)?, spec);
        }
        Err(Error::GridMismatch(format!(
            "pulse file has {n} rows; a {} ns gate needs {} coarse or {} fine rows",
            spec.gate_time_ns,
            spec.n_coarse(),
            spec.n_fine()
        )))
    }

    pub fn to_coarse(&self, spec: &ScheduleSpec, idle: &[f64]) -> Result<CoarsePulse> {
        if self.times.len() != spec.n_coarse() {
            return Err(Error::GridMismatch(format!(
                "expected {} coarse rows, found {}",
                spec.n_coarse(),
                self.times.len()
            )));
        }
        let nb = spec.n_buffer_coarse();
        let active = self
            .values
            .iter()
            .map(|c| c[nb..nb + spec.n_active()].to_vec())
            .collect();
        Ok(CoarsePulse {
            active,
            idle: idle.to_vec(),
        })
    }
}

pub fn write_trace(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    let header: Vec<String> = TRACE_HEADER.iter().map(|s| s.to_string()).collect();
    let rows = trace.iter().map(|r| {
        vec![
            r.restart.to_string(),
            r.iteration.to_string(),
            fmt_f64(r.fidelity),
            fmt_f64(r.step),
            fmt_f64(r.gradient_norm),
        ]
    });
    write_rows(path, &header, rows)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let header: Vec<String> = std::iter::once("t_ns".to_string())
        .chain(traj.columns.iter().cloned())
        .collect();
    let rows = traj.times.iter().zip(&traj.populations).map(|(&t, pops)| {
        std::iter::once(t)
            .chain(pops.iter().copied())
            .map(fmt_f64)
            .collect()
    });
    write_rows(path, &header, rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub t_g_ns: f64,
    pub best_fidelity: f64,
    pub restarts_used: usize,
    pub iterations_total: usize,
    pub warm_started: bool,
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let header: Vec<String> = SWEEP_HEADER.iter().map(|s| s.to_string()).collect();
    let rows = rows.iter().map(|r| {
        vec![
            fmt_f64(r.t_g_ns),
            fmt_f64(r.best_fidelity),
            r.restarts_used.to_string(),
            r.iterations_total.to_string(),
            r.warm_started.to_string(),
        ]
    });
    write_rows(path, &header, rows)
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<&str> = r.headers()?.iter().collect::<Vec<_>>().to_vec();
    if header != SWEEP_HEADER {
        return Err(format_err(
            path,
            format!("expected header {}", SWEEP_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Summary written next to the pulse files after an optimisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: u32,
    pub problem: String,
    pub controls: Vec<String>,
    pub fidelity: f64,
    pub infidelity: f64,
    pub target_fidelity: f64,
    pub reached_target: bool,
    pub gate_time_ns: f64,
    pub seed: u64,
    pub termination: Termination,
    pub iterations: usize,
    pub restart: usize,
    pub restarts_run: usize,
    pub total_iterations: usize,
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn new(problem: &ControlProblem, result: &OptimizeResult, target: f64, seed: u64) -> Self {
        Self {
            schema: 1,
            problem: problem.target.name.clone(),
            controls: problem
                .controlled
                .iter()
                .map(|&q| QUBIT_NAMES[q].to_string())
                .collect(),
            fidelity: result.best_fidelity,
            infidelity: 1.0 - result.best_fidelity,
            target_fidelity: target,
            reached_target: result.reached(target),
            gate_time_ns: problem.spec.gate_time_ns,
            seed,
            termination: result.termination,
            iterations: result.iterations,
            restart: result.restart,
            restarts_run: result.restarts_run,
            total_iterations: result.total_iterations,
            wall_time_s: result.wall_time_s,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }
}

/// One line per accepted iteration.
pub fn write_log(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    for r in trace {
        writeln!(
            f,
            "restart {} iter {} fidelity {:.12} infidelity {:.3e} step {:.3e} grad_norm {:.3e}",
            r.restart,
            r.iteration,
            r.fidelity,
            1.0 - r.fidelity,
            r.step,
            r.gradient_norm
        )?;
    }
    f.flush()?;
    Ok(())
}
