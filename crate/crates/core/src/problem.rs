use serde::{Deserialize, Serialize};

use crate::device::{
    build_hamiltonian, target_ifredkin, ControlledHamiltonian, DeviceParams, TargetGate,
};
use crate::error::{Error, Result};
use crate::objective::{self, FidelityResult};
use crate::operators::Subspace;
use crate::propagation::{propagate, Propagation};
use crate::pulse::{CoarsePulse, FilterMap, FinePulse, ScheduleSpec};
use crate::sectors::SectorModel;

/// Box constraint on every coarse detuning sample, GHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            lower: -0.5,
            upper: 3.5,
        }
    }
}

impl Bounds {
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

/// Everything needed to evaluate the fidelity of a coarse pulse.
///
/// The decision vector concatenates the active samples of each controlled
/// qubit in order. Uncontrolled qubits stay at their idle detuning.
#[derive(Clone, Debug)]
pub struct ControlProblem {
    pub params: DeviceParams,
    pub spec: ScheduleSpec,
    pub target: TargetGate,
    /// Qubit numbers (P = 0) driven by the optimiser.
    pub controlled: Vec<usize>,
    pub bounds: Bounds,
    ham: ControlledHamiltonian,
    subspace: Subspace,
    filter: FilterMap,
    sectors: SectorModel,
    idle: Vec<f64>,
    corrupt_adjoint: bool,
}

impl ControlProblem {
    pub fn new(
        params: DeviceParams,
        spec: ScheduleSpec,
        target: TargetGate,
        controlled: Vec<usize>,
        bounds: Bounds,
    ) -> Result<Self> {
        spec.validate()?;
        let ham = build_hamiltonian(&params)?;
        let subspace = target.subspace(&params.dims)?;
        if controlled.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one control is required".into(),
            ));
        }
        if let Some(&q) = controlled.iter().find(|&&q| q >= params.num_qubits()) {
            return Err(Error::InvalidParameter(format!("no qubit {q} to control")));
        }
        if bounds.lower.partial_cmp(&bounds.upper) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidParameter(
                "lower bound must be below upper bound".into(),
            ));
        }
        let idle = params.idle_detunings();
        for &q in &controlled {
            if !(bounds.lower..=bounds.upper).contains(&idle[q]) {
                return Err(Error::InvalidParameter(format!(
                    "idle detuning {} GHz of qubit {q} lies outside the bounds",
                    idle[q]
                )));
            }
        }
        let filter = FilterMap::new(&spec)?;
        let sectors = SectorModel::new(&ham, &target, &subspace)?;
        Ok(Self {
            params,
            spec,
            target,
            controlled,
            bounds,
            ham,
            subspace,
            filter,
            sectors,
            idle,
            corrupt_adjoint: false,
        })
    }

    /// All three qubits controlled, ±iFREDKIN target.
    pub fn ifredkin(params: DeviceParams, spec: ScheduleSpec, sign: i8) -> Result<Self> {
        let n = params.num_qubits();
        Self::new(
            params,
            spec,
            target_ifredkin(sign),
            (0..n).collect(),
            Bounds::default(),
        )
    }

    pub fn with_gate_time(&self, gate_time_ns: f64) -> Result<Self> {
        let spec = ScheduleSpec {
            gate_time_ns,
            ..self.spec.clone()
        };
        Self::new(
            self.params.clone(),
            spec,
            self.target.clone(),
            self.controlled.clone(),
            self.bounds,
        )
    }

    /// Test hook: pull the fine gradient back through a time-reversed
    /// filter so the chained gradient is wrong.
    #[doc(hidden)]
    pub fn set_corrupt_adjoint(&mut self, on: bool) {
        self.corrupt_adjoint = on;
    }

    pub(crate) fn corrupt_adjoint(&self) -> bool {
        self.corrupt_adjoint
    }

    pub fn hamiltonian(&self) -> &ControlledHamiltonian {
        &self.ham
    }

    pub fn subspace(&self) -> &Subspace {
        &self.subspace
    }

    pub fn filter(&self) -> &FilterMap {
        &self.filter
    }

    pub fn sectors(&self) -> &SectorModel {
        &self.sectors
    }

    /// Idle detunings of every qubit.
    pub fn idle(&self) -> &[f64] {
        &self.idle
    }

    pub fn n_active(&self) -> usize {
        self.spec.n_active()
    }

    pub fn n_vars(&self) -> usize {
        self.controlled.len() * self.n_active()
    }

    /// Decision vector of a pulse sitting at idle everywhere.
    pub fn idle_vector(&self) -> Vec<f64> {
        self.controlled
            .iter()
            .flat_map(|&q| std::iter::repeat_n(self.idle[q], self.n_active()))
            .collect()
    }

    pub fn project(&self, x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = self.bounds.clamp(*v));
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_vars() {
            return Err(Error::GridMismatch(format!(
                "decision vector has {} entries, problem needs {}",
                x.len(),
                self.n_vars()
            )));
        }
        Ok(())
    }

    /// Coarse pulse over every qubit. Uncontrolled qubits are constant.
    pub fn coarse_pulse(&self, x: &[f64]) -> Result<CoarsePulse> {
        self.check_len(x)?;
        let n = self.n_active();
        let active = (0..self.params.num_qubits())
            .map(|q| match self.controlled.iter().position(|&c| c == q) {
                Some(k) => x[k * n..(k + 1) * n].to_vec(),
                None => vec![self.idle[q]; n],
            })
            .collect();
        Ok(CoarsePulse {
            active,
            idle: self.idle.clone(),
        })
    }

    /// Inverse of [`Self::coarse_pulse`] for the controlled rows.
    pub fn vector_from_coarse(&self, pulse: &CoarsePulse) -> Result<Vec<f64>> {
        pulse.check(&self.spec)?;
        if pulse.num_controls() != self.params.num_qubits() {
            return Err(Error::GridMismatch(format!(
                "pulse has {} controls, device has {} qubits",
                pulse.num_controls(),
                self.params.num_qubits()
            )));
        }
        Ok(self
            .controlled
            .iter()
            .flat_map(|&q| pulse.active[q].iter().copied())
            .collect())
    }

    /// Filtered detunings of every qubit on the fine grid.
    pub fn fine_pulse(&self, x: &[f64]) -> Result<FinePulse> {
        self.check_len(x)?;
        let n = self.n_active();
        let samples = (0..self.params.num_qubits())
            .map(|q| match self.controlled.iter().position(|&c| c == q) {
                Some(k) => self.filter.apply(&x[k * n..(k + 1) * n], self.idle[q]),
                None => vec![self.idle[q]; self.spec.n_fine()],
            })
            .collect();
        Ok(FinePulse {
            samples,
            idle: self.idle.clone(),
        })
    }

    pub fn fidelity(&self, x: &[f64]) -> Result<f64> {
        Ok(objective::evaluate(self, x, false)?.fidelity)
    }

    pub fn fidelity_and_gradient(&self, x: &[f64]) -> Result<FidelityResult> {
        objective::evaluate(self, x, true)
    }

    /// Full-space propagation of the pulse, used for readouts and checks.
    pub fn propagate_dense(&self, x: &[f64]) -> Result<Propagation> {
        propagate(&self.ham, &self.fine_pulse(x)?, &self.spec, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{canonical_params, target_iswap};

    #[test]
    fn vector_round_trip_and_idle() {
        let p = ControlProblem::ifredkin(canonical_params(), ScheduleSpec::with_gate_time(20.0), 1)
            .unwrap();
        assert_eq!(p.n_vars(), 36);
        let x: Vec<f64> = (0..36).map(|k| k as f64 * 0.05).collect();
        let c = p.coarse_pulse(&x).unwrap();
        assert_eq!(p.vector_from_coarse(&c).unwrap(), x);
        let fine = p.fine_pulse(&p.idle_vector()).unwrap();
        for (row, idle) in fine.samples.iter().zip(p.idle()) {
            assert!(row.iter().all(|v| (v - idle).abs() < 1e-12));
        }
        assert!(p.coarse_pulse(&x[..5]).is_err());
    }

    #[test]
    fn uncontrolled_qubit_stays_idle() {
        let p = ControlProblem::new(
            canonical_params(),
            ScheduleSpec::with_gate_time(20.0),
            target_iswap(),
            vec![1, 2],
            Bounds::default(),
        )
        .unwrap();
        let x = vec![0.0; p.n_vars()];
        let fine = p.fine_pulse(&x).unwrap();
        assert!(fine.samples[0].iter().all(|&v| v == 1.0));
        assert_eq!(p.sectors().subspace_dim, 4);
    }

    #[test]
    fn rejects_infeasible_schedule() {
        let r = ControlProblem::ifredkin(canonical_params(), ScheduleSpec::with_gate_time(8.0), 1);
        assert!(matches!(r, Err(Error::InvalidSchedule(_))));
    }
}
