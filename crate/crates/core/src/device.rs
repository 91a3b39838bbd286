//! Circuit parameters, the rotating-frame Hamiltonian and target gates.
//!
//! All user-facing frequencies are cyclic, in GHz. Times are in ns, so a
//! Hamiltonian term `2π·f` multiplied by a time in ns is a phase in radians.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{
    annihilation_op, embed, number_op, CMatrix, Subspace, SubsystemDims, C64, I, ONE, ZERO,
};

pub const QUBIT_NAMES: [&str; 3] = ["P", "S1", "S2"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitParams {
    /// Idle frequency ω_i/2π.
    pub freq_ghz: f64,
    /// Δ_i/2π; negative for a transmon.
    pub anharmonicity_ghz: f64,
    /// Bus coupling g_i/2π.
    pub coupling_ghz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceParams {
    pub bus_freq_ghz: f64,
    /// Frame frequency ω_R/2π. The bus drops out of the Hamiltonian when
    /// this equals `bus_freq_ghz`.
    pub rotating_freq_ghz: f64,
    pub qubits: Vec<QubitParams>,
    pub dims: SubsystemDims,
}

impl DeviceParams {
    /// Bus at 6.5 GHz, qubits P/S1/S2 at 7.5/8.0/8.5 GHz with
    /// anharmonicities −200/−300/−400 MHz and couplings 30/45/60 MHz.
    pub fn canonical() -> Self {
        let q = |f, a, g| QubitParams {
            freq_ghz: f,
            anharmonicity_ghz: a,
            coupling_ghz: g,
        };
        Self {
            bus_freq_ghz: 6.5,
            rotating_freq_ghz: 6.5,
            qubits: vec![
                q(7.5, -0.200, 0.030),
                q(8.0, -0.300, 0.045),
                q(8.5, -0.400, 0.060),
            ],
            dims: SubsystemDims::default(),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.qubits.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.num_qubits() != self.qubits.len() {
            return Err(Error::InvalidParameter(format!(
                "{} qubits configured but dims describe {}",
                self.qubits.len(),
                self.dims.num_qubits()
            )));
        }
        let finite = [self.bus_freq_ghz, self.rotating_freq_ghz]
            .into_iter()
            .chain(
                self.qubits
                    .iter()
                    .flat_map(|q| [q.freq_ghz, q.anharmonicity_ghz, q.coupling_ghz]),
            )
            .all(f64::is_finite);
        if !finite {
            return Err(Error::InvalidParameter(
                "device parameters must be finite".into(),
            ));
        }
        for (q, name) in self.qubits.iter().zip(QUBIT_NAMES) {
            if q.coupling_ghz <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "coupling of {name} must be positive"
                )));
            }
            if q.anharmonicity_ghz >= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "anharmonicity of {name} must be negative"
                )));
            }
        }
        Ok(())
    }

    /// Detunings δ_i = ω_i − ω_R of the idle qubits.
    pub fn idle_detunings(&self) -> Vec<f64> {
        self.qubits
            .iter()
            .map(|q| q.freq_ghz - self.rotating_freq_ghz)
            .collect()
    }
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self::canonical()
    }
}

pub fn canonical_params() -> DeviceParams {
    DeviceParams::canonical()
}

/// `H(t) = drift + Σ_i δ_i(t)·controls[i]` with δ_i in GHz.
#[derive(Clone, Debug)]
pub struct ControlledHamiltonian {
    pub drift: CMatrix,
    /// `2π·b_i†b_i` embedded, one per qubit.
    pub controls: Vec<CMatrix>,
    pub labels: Vec<String>,
    pub dims: SubsystemDims,
}

impl ControlledHamiltonian {
    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn at(&self, detunings_ghz: &[f64]) -> CMatrix {
        let mut h = self.drift.clone();
        for (op, &d) in self.controls.iter().zip(detunings_ghz) {
            h += op * C64::new(d, 0.0);
        }
        h
    }
}

/// Rotating-frame Hamiltonian: for each qubit `(δ_i − Δ_i/2) n_i + (Δ_i/2) n_i²`
/// plus the exchange coupling `g_i (a†b_i + a b_i†)`, with a bus term
/// `(ω_B − ω_R) a†a` that vanishes in the bus frame.
pub fn build_hamiltonian(params: &DeviceParams) -> Result<ControlledHamiltonian> {
    params.validate()?;
    let dims = &params.dims;
    let n = dims.total();
    let mut drift = CMatrix::zeros(n, n);

    let bus_levels = dims.levels()[0];
    let a = embed(&annihilation_op(bus_levels)?, 0, dims)?;
    let bus_offset = TAU * (params.bus_freq_ghz - params.rotating_freq_ghz);
    if bus_offset != 0.0 {
        drift += a.adjoint() * &a * C64::new(bus_offset, 0.0);
    }

    let mut controls = Vec::with_capacity(params.num_qubits());
    let mut labels = Vec::with_capacity(params.num_qubits());
    for (i, q) in params.qubits.iter().enumerate() {
        let levels = dims.levels()[i + 1];
        let b = embed(&annihilation_op(levels)?, i + 1, dims)?;
        let num = embed(&number_op(levels), i + 1, dims)?;
        let half_anh = TAU * q.anharmonicity_ghz / 2.0;
        drift += &num * C64::new(-half_anh, 0.0) + &num * &num * C64::new(half_anh, 0.0);
        let exchange = a.adjoint() * &b;
        drift += (&exchange + exchange.adjoint()) * C64::new(TAU * q.coupling_ghz, 0.0);
        controls.push(num * C64::new(TAU, 0.0));
        labels.push(
            QUBIT_NAMES
                .get(i)
                .map_or_else(|| format!("Q{i}"), |s| s.to_string()),
        );
    }
    Ok(ControlledHamiltonian {
        drift,
        controls,
        labels,
        dims: dims.clone(),
    })
}

/// A unitary on a computational subspace together with the qubits it acts on.
#[derive(Clone, Debug)]
pub struct TargetGate {
    pub name: String,
    pub matrix: CMatrix,
    /// Qubits spanned, most significant first (P = 0).
    pub qubits: Vec<usize>,
}

impl TargetGate {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn subspace(&self, dims: &SubsystemDims) -> Result<Subspace> {
        let s = Subspace::for_qubits(dims, &self.qubits)?;
        if s.dim() != self.dim() {
            return Err(Error::InvalidDimension(format!(
                "target is {0}x{0} but spans a {1}-dimensional subspace",
                self.dim(),
                s.dim()
            )));
        }
        Ok(s)
    }
}

/// `|0⟩⟨0| ⊗ 𝟙₄ + |1⟩⟨1| ⊗ (±iSWAP)` on (P, S1, S2).
pub fn target_ifredkin(sign: i8) -> TargetGate {
    let phase = if sign < 0 { -I } else { I };
    let mut m = CMatrix::identity(8, 8);
    m[(5, 5)] = ZERO;
    m[(6, 6)] = ZERO;
    m[(5, 6)] = phase;
    m[(6, 5)] = phase;
    let name = if sign < 0 { "ifredkin-" } else { "ifredkin+" };
    TargetGate {
        name: name.into(),
        matrix: m,
        qubits: vec![0, 1, 2],
    }
}

/// iSWAP on (S1, S2).
pub fn target_iswap() -> TargetGate {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = ONE;
    m[(3, 3)] = ONE;
    m[(1, 2)] = I;
    m[(2, 1)] = I;
    TargetGate {
        name: "iswap".into(),
        matrix: m,
        qubits: vec![1, 2],
    }
}
