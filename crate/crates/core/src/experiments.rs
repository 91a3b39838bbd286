//! Studies built on the optimiser: gate-time sweeps, the two-control
//! baseline, the two-excitation trajectory and the GHZ readout.

use log::info;

use crate::device::{target_iswap, DeviceParams};
use crate::error::{Error, Result};
use crate::io::SweepRow;
use crate::operators::{
    basis_index, basis_vector, BasisLabel, CMatrix, CVector, SubsystemDims, C64, I,
};
use crate::optimizer::{optimize_from, OptimizeResult, OptimizerOptions};
use crate::problem::{Bounds, ControlProblem};
use crate::propagation::{default_watch, trajectory, Trajectory};
use crate::pulse::ScheduleSpec;

/// Parking frequency of the uncontrolled qubit in the baseline, GHz.
pub const PARKING_FREQ_GHZ: f64 = 10.0;

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub gate_time_ns: f64,
    pub result: OptimizeResult,
    pub warm_started: bool,
}

impl SweepPoint {
    pub fn row(&self) -> SweepRow {
        SweepRow {
            t_g_ns: self.gate_time_ns,
            best_fidelity: self.result.best_fidelity,
            restarts_used: self.result.restarts_run,
            iterations_total: self.result.total_iterations,
            warm_started: self.warm_started,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub target_fidelity: f64,
}

impl SweepResult {
    /// Shortest gate time whose best fidelity meets the target.
    pub fn minimal_feasible(&self) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.result.best_fidelity >= self.target_fidelity)
            .map(|p| p.gate_time_ns)
    }

    pub fn rows(&self) -> Vec<SweepRow> {
        self.points.iter().map(SweepPoint::row).collect()
    }
}

/// Gate times `t_min, t_min + step, ..., ≤ t_max`.
pub fn gate_time_grid(t_min: f64, t_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(t_min.is_finite() && t_max.is_finite() && step.is_finite()) || step <= 0.0 || t_max < t_min
    {
        return Err(Error::InvalidSchedule(format!(
            "empty gate-time range {t_min}..{t_max} step {step}"
        )));
    }
    let n = ((t_max - t_min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| t_min + k as f64 * step).collect())
}

/// Stretches each control's active samples onto `n_new` samples by linear
/// interpolation between sample centres.
pub fn resample(x: &[f64], n_controls: usize, n_new: usize) -> Vec<f64> {
    let n_old = x.len() / n_controls.max(1);
    let mut out = Vec::with_capacity(n_controls * n_new);
    for row in x.chunks(n_old.max(1)).take(n_controls) {
        for k in 0..n_new {
            let pos = ((k as f64 + 0.5) * n_old as f64 / n_new as f64 - 0.5)
                .clamp(0.0, (n_old - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n_old - 1);
            let w = pos - lo as f64;
            out.push((1.0 - w) * row[lo] + w * row[hi]);
        }
    }
    out
}

/// Optimises `template` at each gate time in ascending order. With
/// `warm_start`, restart 0 of every point after the first begins from the
/// previous point's best pulse stretched to the new length.
pub fn speed_limit_sweep(
    template: &ControlProblem,
    gate_times: &[f64],
    opts: &OptimizerOptions,
    warm_start: bool,
) -> Result<SweepResult> {
    if gate_times.is_empty() {
        return Err(Error::InvalidSchedule("no gate times to sweep".into()));
    }
    if gate_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSchedule(
            "gate times must be strictly increasing".into(),
        ));
    }
    let problems = gate_times
        .iter()
        .map(|&t| template.with_gate_time(t))
        .collect::<Result<Vec<_>>>()?;
    let mut points: Vec<SweepPoint> = Vec::with_capacity(problems.len());
    for (problem, &t) in problems.iter().zip(gate_times) {
        let start = match points.last() {
            Some(prev) if warm_start => Some(resample(
                &prev.result.best_x,
                problem.controlled.len(),
                problem.n_active(),
            )),
            _ => None,
        };
        let result = optimize_from(problem, opts, start.as_deref())?;
        info!(
            "t_g {t} ns: best fidelity {:.8} ({} restarts, {} iterations)",
            result.best_fidelity, result.restarts_run, result.total_iterations
        );
        points.push(SweepPoint {
            gate_time_ns: t,
            result,
            warm_started: start.is_some(),
        });
    }
    Ok(SweepResult {
        points,
        target_fidelity: opts.target_fidelity,
    })
}

/// Two-control iSWAP problem on (S1, S2) with P parked far above the bus.
pub fn iswap_baseline(params: &DeviceParams, spec: ScheduleSpec) -> Result<ControlProblem> {
    let mut params = params.clone();
    params.qubits[0].freq_ghz = PARKING_FREQ_GHZ;
    ControlProblem::new(params, spec, target_iswap(), vec![1, 2], Bounds::default())
}

fn superposition(labels: &[(&str, C64)], dims: &SubsystemDims) -> Result<CVector> {
    let mut psi = CVector::zeros(dims.total());
    for (s, amp) in labels {
        let label: BasisLabel = s.parse()?;
        psi += basis_vector(basis_index(&label, dims)?, dims.total()) * *amp;
    }
    Ok(psi.unscale(psi.norm()))
}

/// `|⟨GHZ|U|ψ_in⟩|²` for `ψ_in = (|001⟩+|101⟩)/√2` and
/// `GHZ = (|001⟩+i|110⟩)/√2`, bus in the ground state.
pub fn entangler_check(u: &CMatrix, dims: &SubsystemDims) -> Result<f64> {
    if u.nrows() != dims.total() || u.ncols() != dims.total() {
        return Err(Error::InvalidDimension(format!(
            "propagator is {}x{}, expected {}",
            u.nrows(),
            u.ncols(),
            dims.total()
        )));
    }
    let one = C64::new(1.0, 0.0);
    let input = superposition(&[("0|001", one), ("0|101", one)], dims)?;
    let ghz = superposition(&[("0|001", one), ("0|110", I)], dims)?;
    Ok(ghz.dotc(&(u * input)).norm_sqr())
}

/// Readout of the two-excitation swap driven by a pulse.
#[derive(Clone, Debug)]
pub struct SwapDynamics {
    pub trajectory: Trajectory,
    pub final_target: f64,
    pub final_leakage: f64,
    pub max_interior_leakage: f64,
    pub max_interior_intermediate: f64,
}

/// Propagates `0|110` under the pulse `x` and summarises the populations of
/// `0|101`, `1|100` and the leakage group.
pub fn swap_dynamics(problem: &ControlProblem, x: &[f64]) -> Result<SwapDynamics> {
    let dims = &problem.params.dims;
    let initial = basis_vector(label_index("0|110", dims)?, dims.total());
    let traj = trajectory(
        problem.hamiltonian(),
        &problem.fine_pulse(x)?,
        &problem.spec,
        &initial,
        &default_watch(),
    )?;
    let col = |name: &str| {
        traj.column(name)
            .ok_or_else(|| Error::InvalidLabel(name.into()))
    };
    let target = col("p_0_101")?;
    let leak = col("p_leak")?;
    let mid = col("p_1_100")?;
    let interior = 1..traj.times.len() - 1;
    let peak = |v: &[f64]| v[interior.clone()].iter().copied().fold(0.0, f64::max);
    Ok(SwapDynamics {
        final_target: *target.last().unwrap_or(&0.0),
        final_leakage: *leak.last().unwrap_or(&0.0),
        max_interior_leakage: peak(&leak),
        max_interior_intermediate: peak(&mid),
        trajectory: traj,
    })
}

/// Index of a label, for callers that only hold strings.
pub fn label_index(label: &str, dims: &SubsystemDims) -> Result<usize> {
    basis_index(&label.parse()?, dims)
}
