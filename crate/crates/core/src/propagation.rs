//! Piecewise-constant Schrödinger propagation on the full Hilbert space.

use nalgebra::{DVector, SymmetricEigen};

use crate::device::ControlledHamiltonian;
use crate::error::{Error, Result};
use crate::operators::{
    basis_index, hermiticity_error, BasisLabel, CMatrix, CVector, SubsystemDims, C64,
};
use crate::pulse::{FinePulse, ScheduleSpec};

pub const HERMITICITY_TOL: f64 = 1e-10;

/// Spectral decomposition `H = V·diag(λ)·V†` of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub vectors: CMatrix,
    pub values: DVector<f64>,
}

impl HermitianEigen {
    pub fn new(h: CMatrix) -> Result<Self> {
        let err = hermiticity_error(&h);
        if err > HERMITICITY_TOL {
            return Err(Error::InvalidOperator(format!(
                "matrix is not Hermitian (max |H - H†| = {err:e})"
            )));
        }
        let eig = SymmetricEigen::new(h);
        Ok(Self {
            vectors: eig.eigenvectors,
            values: eig.eigenvalues,
        })
    }

    /// Diagonal of `exp(−iΛ·dt)`.
    pub fn phases(&self, dt: f64) -> Vec<C64> {
        self.values
            .iter()
            .map(|&l| C64::from_polar(1.0, -l * dt))
            .collect()
    }

    pub fn exp(&self, dt: f64) -> CMatrix {
        let mut vd = self.vectors.clone();
        for (mut col, p) in vd.column_iter_mut().zip(self.phases(dt)) {
            col *= p;
        }
        vd * self.vectors.adjoint()
    }
}

/// `exp(−i·H·dt)`.
pub fn step_propagator(h: &CMatrix, dt: f64) -> Result<CMatrix> {
    Ok(HermitianEigen::new(h.clone())?.exp(dt))
}

#[derive(Clone, Debug)]
pub struct Propagation {
    /// Per-step unitaries, kept only on request.
    pub steps: Option<Vec<CMatrix>>,
    /// `U_N ⋯ U_2 U_1`.
    pub total: CMatrix,
}

fn check_fine(ham: &ControlledHamiltonian, fine: &FinePulse, spec: &ScheduleSpec) -> Result<()> {
    fine.check(spec)?;
    if fine.num_controls() != ham.controls.len() {
        return Err(Error::GridMismatch(format!(
            "pulse has {} controls, Hamiltonian has {}",
            fine.num_controls(),
            ham.controls.len()
        )));
    }
    Ok(())
}

pub fn total_propagator(
    ham: &ControlledHamiltonian,
    fine: &FinePulse,
    spec: &ScheduleSpec,
) -> Result<Propagation> {
    propagate(ham, fine, spec, false)
}

pub fn propagate(
    ham: &ControlledHamiltonian,
    fine: &FinePulse,
    spec: &ScheduleSpec,
    keep_steps: bool,
) -> Result<Propagation> {
    check_fine(ham, fine, spec)?;
    let n = ham.dim();
    let mut total = CMatrix::identity(n, n);
    let mut steps = keep_steps.then(|| Vec::with_capacity(fine.len()));
    for m in 0..fine.len() {
        let u = step_propagator(&ham.at(&fine.at(m)), spec.fine_dt_ns)?;
        total = &u * total;
        if let Some(s) = steps.as_mut() {
            s.push(u);
        }
    }
    Ok(Propagation { steps, total })
}

/// A population readout tracked along a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub enum Watch {
    State(BasisLabel),
    /// Bus in vacuum with at least one qubit above level 1.
    Leakage,
    /// Everything not covered by the watched states and the leakage group.
    Other,
}

impl Watch {
    pub fn column_name(&self) -> String {
        match self {
            Watch::State(l) => l.column_name(),
            Watch::Leakage => "p_leak".into(),
            Watch::Other => "p_other".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "leak" | "leakage" => Ok(Watch::Leakage),
            "other" => Ok(Watch::Other),
            label => Ok(Watch::State(label.parse()?)),
        }
    }
}

impl std::fmt::Display for Watch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Watch::State(l) => write!(f, "{l}"),
            Watch::Leakage => f.write_str("leak"),
            Watch::Other => f.write_str("other"),
        }
    }
}

/// Default readouts: the swapped pair, the intermediate bus state and the
/// two aggregates.
pub fn default_watch() -> Vec<Watch> {
    ["0|110", "0|101", "1|100"]
        .iter()
        .map(|s| Watch::State(s.parse().expect("static label")))
        .chain([Watch::Leakage, Watch::Other])
        .collect()
}

pub fn leakage_indices(dims: &SubsystemDims) -> Vec<usize> {
    (0..dims.total())
        .filter(|&i| {
            let occ = dims.occupations(i);
            occ[0] == 0 && occ[1..].iter().any(|&n| n >= 2)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Time at the end of each step, starting with `t = 0`.
    pub times: Vec<f64>,
    pub columns: Vec<String>,
    /// `populations[k][c]`: watch `c` at `times[k]`.
    pub populations: Vec<Vec<f64>>,
    /// `‖ψ(t)‖` at each time.
    pub norms: Vec<f64>,
    pub final_state: CVector,
}

impl Trajectory {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|n| n == name)?;
        Some(self.populations.iter().map(|row| row[c]).collect())
    }
}

pub fn trajectory(
    ham: &ControlledHamiltonian,
    fine: &FinePulse,
    spec: &ScheduleSpec,
    initial: &CVector,
    watch: &[Watch],
) -> Result<Trajectory> {
    check_fine(ham, fine, spec)?;
    let dims = &ham.dims;
    if initial.len() != ham.dim() {
        return Err(Error::InvalidDimension(format!(
            "initial state has dimension {}, expected {}",
            initial.len(),
            ham.dim()
        )));
    }
    let leak = leakage_indices(dims);
    let mut states = Vec::new();
    for w in watch {
        if let Watch::State(l) = w {
            states.push(basis_index(l, dims)?);
        }
    }
    let readout = |psi: &CVector| -> Vec<f64> {
        let total: f64 = psi.norm_squared();
        let p_leak: f64 = leak.iter().map(|&i| psi[i].norm_sqr()).sum();
        let p_states: f64 = states
            .iter()
            .filter(|i| !leak.contains(i))
            .map(|&i| psi[i].norm_sqr())
            .sum();
        let mut k = 0;
        watch
            .iter()
            .map(|w| match w {
                Watch::State(_) => {
                    k += 1;
                    psi[states[k - 1]].norm_sqr()
                }
                Watch::Leakage => p_leak,
                Watch::Other => (total - p_leak - p_states).max(0.0),
            })
            .collect()
    };

    let dt = spec.fine_dt_ns;
    let mut psi = initial.clone();
    let mut times = vec![0.0];
    let mut populations = vec![readout(&psi)];
    let mut norms = vec![psi.norm()];
    for m in 0..fine.len() {
        let u = step_propagator(&ham.at(&fine.at(m)), dt)?;
        psi = u * psi;
        times.push((m + 1) as f64 * dt);
        populations.push(readout(&psi));
        norms.push(psi.norm());
    }
    Ok(Trajectory {
        times,
        columns: watch.iter().map(Watch::column_name).collect(),
        populations,
        norms,
        final_state: psi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{build_hamiltonian, canonical_params};
    use crate::operators::{basis_vector, max_abs, unitarity_error, I, ONE};
    use std::f64::consts::TAU;

    #[test]
    fn zero_generator_gives_identity() {
        let u = step_propagator(&CMatrix::zeros(5, 5), 0.1).unwrap();
        assert!(max_abs(&(u - CMatrix::identity(5, 5))) < 1e-15);
    }

    #[test]
    fn rabi_transfer_at_quarter_period() {
        let g = 0.05;
        let sx = CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), ONE, ONE, C64::new(0.0, 0.0)]);
        let h = sx * C64::new(TAU * g, 0.0);
        let u = step_propagator(&h, 1.0 / (4.0 * g)).unwrap();
        assert!((u[(1, 0)].norm_sqr() - 1.0).abs() < 1e-14);
        assert!(u[(0, 0)].norm() < 1e-7);
    }

    #[test]
    fn eigenvalues_map_through_exponential() {
        let h = build_hamiltonian(&canonical_params()).unwrap();
        let eig = HermitianEigen::new(h.drift.clone()).unwrap();
        let dt = 0.37;
        let u = eig.exp(dt);
        for (k, &l) in eig.values.iter().enumerate() {
            let v = eig.vectors.column(k).into_owned();
            let expected = &v * C64::from_polar(1.0, -l * dt);
            assert!((&u * v - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut h = CMatrix::zeros(2, 2);
        h[(0, 1)] = I;
        assert!(matches!(
            step_propagator(&h, 0.1),
            Err(Error::InvalidOperator(_))
        ));
    }

    #[test]
    fn watch_parsing() {
        assert_eq!(Watch::parse("leak").unwrap(), Watch::Leakage);
        assert_eq!(Watch::parse("other").unwrap(), Watch::Other);
        assert_eq!(Watch::parse("1|100").unwrap().column_name(), "p_1_100");
        assert!(Watch::parse("bogus").is_err());
    }

    #[test]
    fn leakage_group_matches_two_excitation_picture() {
        let dims = SubsystemDims::default();
        let leak = leakage_indices(&dims);
        for s in ["0|200", "0|020", "0|002", "0|212"] {
            assert!(leak.contains(&basis_index(&s.parse().unwrap(), &dims).unwrap()));
        }
        for s in ["2|000", "0|111", "1|200"] {
            assert!(!leak.contains(&basis_index(&s.parse().unwrap(), &dims).unwrap()));
        }
    }

    #[test]
    fn short_propagation_is_unitary() {
        let p = canonical_params();
        let h = build_hamiltonian(&p).unwrap();
        let spec = ScheduleSpec::with_gate_time(12.0);
        let fine = FinePulse {
            samples: p
                .idle_detunings()
                .iter()
                .map(|&d| vec![d * 0.2; spec.n_fine()])
                .collect(),
            idle: p.idle_detunings(),
        };
        let prop = propagate(&h, &fine, &spec, true).unwrap();
        assert!(unitarity_error(&prop.total) < 1e-9);
        for u in prop.steps.unwrap() {
            assert!(unitarity_error(&u) < 1e-10);
        }
        let psi0 = basis_vector(12, 81);
        let traj = trajectory(&h, &fine, &spec, &psi0, &default_watch()).unwrap();
        assert_eq!(traj.times.len(), 121);
        assert!((traj.final_state.clone() - prop.total * psi0).norm() < 1e-10);
    }
}
