//! TOML run configuration.
//!
//! Every section and key is optional; an empty file reproduces the default
//! three-qubit experiment. See `docs/config.md` for the grammar.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::device::{target_ifredkin, DeviceParams};
use crate::error::{Error, Result};
use crate::experiments::iswap_baseline;
use crate::optimizer::OptimizerOptions;
use crate::problem::{Bounds, ControlProblem};
use crate::propagation::{default_watch, Watch};
use crate::pulse::ScheduleSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    #[serde(rename = "ifredkin+")]
    IfredkinPlus,
    #[serde(rename = "ifredkin-", alias = "ifredkin−")]
    IfredkinMinus,
    #[serde(rename = "iswap-baseline")]
    IswapBaseline,
}

impl ProblemKind {
    pub const NAMES: [&'static str; 3] = ["ifredkin+", "ifredkin-", "iswap-baseline"];
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::IfredkinPlus => Self::NAMES[0],
            Self::IfredkinMinus => Self::NAMES[1],
            Self::IswapBaseline => Self::NAMES[2],
        };
        f.write_str(s)
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ifredkin+" => Ok(Self::IfredkinPlus),
            "ifredkin-" | "ifredkin−" => Ok(Self::IfredkinMinus),
            "iswap-baseline" => Ok(Self::IswapBaseline),
            _ => Err(Error::Config(format!(
                "unknown problem '{s}', expected one of {}",
                Self::NAMES.join(", ")
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub problem: ProblemKind,
    pub out_dir: PathBuf,
    /// Warm-start each sweep point from the previous one.
    pub warm_start: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            problem: ProblemKind::IfredkinPlus,
            out_dir: PathBuf::from("out"),
            warm_start: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub t_min_ns: f64,
    pub t_max_ns: f64,
    pub t_step_ns: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            t_min_ns: 40.0,
            t_max_ns: 70.0,
            t_step_ns: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckgradSection {
    pub probes: usize,
    pub fd_step_ghz: f64,
    /// Largest accepted relative error.
    pub tolerance: f64,
    pub seed: u64,
    /// Test hook: deliberately break the filter adjoint.
    pub corrupt_adjoint: bool,
}

impl Default for CheckgradSection {
    fn default() -> Self {
        Self {
            probes: 100,
            fd_step_ghz: 1e-6,
            tolerance: 1e-5,
            seed: 0,
            corrupt_adjoint: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    pub initial: String,
    pub watch: Vec<String>,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            initial: "0|110".into(),
            watch: default_watch().iter().map(Watch::to_string).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub device: DeviceParams,
    pub schedule: ScheduleSpec,
    pub bounds: Bounds,
    pub optimizer: OptimizerOptions,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub checkgrad: CheckgradSection,
    pub trajectory: TrajectorySection,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

/// Line of a `[section]` header, if present.
fn section_line(text: &str, section: &str) -> Option<usize> {
    let header = format!("[{section}]");
    text.lines().position(|l| l.trim() == header).map(|i| i + 1)
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().trim().to_string();
            match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    Error::Config(format!("{origin}:{line}:{col}: {msg}"))
                }
                None => Error::Config(format!("{origin}: {msg}")),
            }
        })?;
        cfg.validate().map_err(|(section, e)| {
            let at = section_line(text, section).map_or(String::new(), |l| format!("{l}:"));
            Error::Config(format!("{origin}:{at} [{section}] {e}"))
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Checks each section and reports the first offending one.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, Error)> {
        self.device.validate().map_err(|e| ("device", e))?;
        self.schedule.validate().map_err(|e| ("schedule", e))?;
        let shortest = 2.0 * self.schedule.buffer_ns + 2.0;
        if self.schedule.gate_time_ns <= shortest {
            return Err((
                "schedule",
                Error::InvalidSchedule(format!(
                    "gate time {} ns leaves no room to optimise; use more than {shortest} ns",
                    self.schedule.gate_time_ns
                )),
            ));
        }
        self.optimizer.validate().map_err(|e| ("optimizer", e))?;
        if self.bounds.lower.partial_cmp(&self.bounds.upper) != Some(std::cmp::Ordering::Less) {
            return Err((
                "bounds",
                Error::InvalidParameter("lower must be below upper".into()),
            ));
        }
        let s = &self.sweep;
        if !(s.t_step_ns > 0.0 && s.t_min_ns <= s.t_max_ns) {
            return Err((
                "sweep",
                Error::InvalidSchedule("empty gate-time range".into()),
            ));
        }
        let c = &self.checkgrad;
        if c.probes == 0
            || c.fd_step_ghz.is_nan()
            || c.fd_step_ghz <= 0.0
            || c.tolerance.is_nan()
            || c.tolerance <= 0.0
        {
            return Err((
                "checkgrad",
                Error::InvalidParameter(
                    "probes, fd_step_ghz and tolerance must be positive".into(),
                ),
            ));
        }
        self.watch().map_err(|e| ("trajectory", e))?;
        self.trajectory
            .initial
            .parse::<crate::operators::BasisLabel>()
            .and_then(|l| crate::operators::basis_index(&l, &self.device.dims))
            .map_err(|e| ("trajectory", e))?;
        self.problem().map_err(|e| ("bounds", e))?;
        Ok(())
    }

    pub fn watch(&self) -> Result<Vec<Watch>> {
        self.trajectory
            .watch
            .iter()
            .map(|w| Watch::parse(w))
            .collect()
    }

    /// Control problem selected by `run.problem`.
    pub fn problem(&self) -> Result<ControlProblem> {
        let spec = self.schedule.clone();
        let mut p = match self.run.problem {
            ProblemKind::IfredkinPlus | ProblemKind::IfredkinMinus => {
                let sign = if self.run.problem == ProblemKind::IfredkinPlus {
                    1
                } else {
                    -1
                };
                let n = self.device.num_qubits();
                ControlProblem::new(
                    self.device.clone(),
                    spec,
                    target_ifredkin(sign),
                    (0..n).collect(),
                    self.bounds,
                )?
            }
            ProblemKind::IswapBaseline => {
                let base = iswap_baseline(&self.device, spec)?;
                ControlProblem::new(
                    base.params,
                    base.spec,
                    base.target,
                    base.controlled,
                    self.bounds,
                )?
            }
        };
        p.set_corrupt_adjoint(self.checkgrad.corrupt_adjoint);
        Ok(p)
    }
}
