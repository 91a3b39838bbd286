//! Truncated-oscillator operators on the bus ⊗ P ⊗ S1 ⊗ S2 space.
//!
//! Tensor ordering is fixed with the bus as the most significant factor, so
//! the basis index of `|b|p s1 s2⟩` is the mixed-radix number `b p s1 s2`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Index of the bus in [`SubsystemDims`].
pub const BUS: usize = 0;

/// Level truncation per subsystem, bus first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SubsystemDims(Vec<usize>);

impl SubsystemDims {
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::InvalidDimension(format!(
                "need a bus and at least one qubit, got {} subsystems",
                levels.len()
            )));
        }
        if let Some(&l) = levels.iter().find(|&&l| l < 2) {
            return Err(Error::InvalidDimension(format!(
                "every subsystem needs at least 2 levels, got {l}"
            )));
        }
        Ok(Self(levels))
    }

    pub fn levels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn num_qubits(&self) -> usize {
        self.0.len() - 1
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    /// Occupation of every subsystem for a flat basis index.
    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.0.len()];
        for (slot, &l) in occ.iter_mut().zip(&self.0).rev() {
            *slot = index % l;
            index /= l;
        }
        occ
    }

    /// Total excitation number `n_bus + Σ n_i` of a basis index.
    pub fn excitation(&self, index: usize) -> usize {
        self.occupations(index).iter().sum()
    }
}

impl Default for SubsystemDims {
    fn default() -> Self {
        Self(vec![3, 3, 3, 3])
    }
}

impl TryFrom<Vec<usize>> for SubsystemDims {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SubsystemDims> for Vec<usize> {
    fn from(d: SubsystemDims) -> Self {
        d.0
    }
}

/// Occupation-number label rendered as `b|q_P q_S1 q_S2`, e.g. `0|110`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BasisLabel(Vec<usize>);

impl BasisLabel {
    pub fn new(occupations: Vec<usize>) -> Self {
        Self(occupations)
    }

    pub fn occupations(&self) -> &[usize] {
        &self.0
    }

    /// Column-safe name, `0|110` becomes `p_0_110`.
    pub fn column_name(&self) -> String {
        format!("p_{}", self.to_string().replace('|', "_"))
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.split_first() {
            None => Ok(()),
            Some((bus, rest)) => {
                write!(f, "{bus}|")?;
                for q in rest {
                    write!(f, "{q}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for BasisLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidLabel(format!("'{s}' is not of the form b|qqq"));
        let (bus, qubits) = s.trim().split_once('|').ok_or_else(bad)?;
        let mut occ = vec![bus.parse::<usize>().map_err(|_| bad())?];
        if qubits.is_empty() {
            return Err(bad());
        }
        for c in qubits.chars() {
            occ.push(c.to_digit(10).ok_or_else(bad)? as usize);
        }
        Ok(Self(occ))
    }
}

/// Lowering operator truncated to `levels` levels.
pub fn annihilation_op(levels: usize) -> Result<CMatrix> {
    if levels < 2 {
        return Err(Error::InvalidDimension(format!(
            "annihilation operator needs at least 2 levels, got {levels}"
        )));
    }
    let mut a = CMatrix::zeros(levels, levels);
    for n in 0..levels - 1 {
        a[(n, n + 1)] = C64::new(((n + 1) as f64).sqrt(), 0.0);
    }
    Ok(a)
}

pub fn number_op(levels: usize) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_fn(levels, |n, _| C64::new(n as f64, 0.0)))
}

fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// `𝟙 ⊗ … ⊗ op ⊗ … ⊗ 𝟙` with `op` acting on `subsystem`.
pub fn embed(op: &CMatrix, subsystem: usize, dims: &SubsystemDims) -> Result<CMatrix> {
    let levels = dims.levels();
    let Some(&l) = levels.get(subsystem) else {
        return Err(Error::InvalidDimension(format!(
            "subsystem {subsystem} out of range for {} subsystems",
            levels.len()
        )));
    };
    if op.nrows() != l || op.ncols() != l {
        return Err(Error::InvalidDimension(format!(
            "operator is {}x{}, subsystem {subsystem} has {l} levels",
            op.nrows(),
            op.ncols()
        )));
    }
    let left: usize = levels[..subsystem].iter().product();
    let right: usize = levels[subsystem + 1..].iter().product();
    let out = kron(&CMatrix::identity(left, left), op);
    Ok(kron(&out, &CMatrix::identity(right, right)))
}

pub fn basis_index(label: &BasisLabel, dims: &SubsystemDims) -> Result<usize> {
    let occ = label.occupations();
    if occ.len() != dims.len() {
        return Err(Error::InvalidLabel(format!(
            "'{label}' has {} subsystems, expected {}",
            occ.len(),
            dims.len()
        )));
    }
    let mut index = 0;
    for (&n, &l) in occ.iter().zip(dims.levels()) {
        if n >= l {
            return Err(Error::InvalidLabel(format!(
                "'{label}': occupation {n} exceeds truncation {l}"
            )));
        }
        index = index * l + n;
    }
    Ok(index)
}

pub fn basis_label(index: usize, dims: &SubsystemDims) -> Result<BasisLabel> {
    if index >= dims.total() {
        return Err(Error::InvalidLabel(format!(
            "index {index} out of range for dimension {}",
            dims.total()
        )));
    }
    Ok(BasisLabel(dims.occupations(index)))
}

pub fn basis_vector(index: usize, dim: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[index] = ONE;
    v
}

/// An ordered set of basis states spanning a subspace of the full space.
///
/// The order fixes how a target gate's rows and columns map onto the full
/// basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    indices: Vec<usize>,
    full_dim: usize,
}

impl Subspace {
    pub fn new(indices: Vec<usize>, full_dim: usize) -> Result<Self> {
        if indices.iter().any(|&i| i >= full_dim) {
            return Err(Error::InvalidDimension(
                "subspace index out of range".into(),
            ));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != indices.len() {
            return Err(Error::InvalidDimension("subspace indices repeat".into()));
        }
        Ok(Self { indices, full_dim })
    }

    /// Bus in vacuum, every qubit in `qubits` ranging over {0,1} and all
    /// other qubits in their ground state. `qubits` are 0-based qubit
    /// numbers (P = 0) and the first one listed is the most significant bit.
    pub fn for_qubits(dims: &SubsystemDims, qubits: &[usize]) -> Result<Self> {
        if let Some(&q) = qubits.iter().find(|&&q| q >= dims.num_qubits()) {
            return Err(Error::InvalidDimension(format!("no qubit {q}")));
        }
        let k = qubits.len();
        let mut indices = Vec::with_capacity(1 << k);
        for bits in 0..(1usize << k) {
            let mut occ = vec![0; dims.len()];
            for (pos, &q) in qubits.iter().enumerate() {
                occ[q + 1] = (bits >> (k - 1 - pos)) & 1;
            }
            indices.push(basis_index(&BasisLabel(occ), dims)?);
        }
        Self::new(indices, dims.total())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn full_dim(&self) -> usize {
        self.full_dim
    }

    /// Isometry `S` (full × d) whose columns are the subspace basis vectors.
    pub fn isometry(&self) -> CMatrix {
        let mut s = CMatrix::zeros(self.full_dim, self.dim());
        for (col, &i) in self.indices.iter().enumerate() {
            s[(i, col)] = ONE;
        }
        s
    }

    pub fn projector(&self) -> CMatrix {
        let s = self.isometry();
        &s * s.adjoint()
    }

    /// `S† U S`.
    pub fn compress(&self, u: &CMatrix) -> CMatrix {
        let d = self.dim();
        CMatrix::from_fn(d, d, |r, c| u[(self.indices[r], self.indices[c])])
    }

    /// Embed a d×d operator, acting as identity on the complement.
    pub fn embed_with_identity(&self, op: &CMatrix) -> CMatrix {
        let mut u = CMatrix::identity(self.full_dim, self.full_dim);
        for (r, &i) in self.indices.iter().enumerate() {
            for (c, &j) in self.indices.iter().enumerate() {
                u[(i, j)] = op[(r, c)];
            }
        }
        u
    }
}

/// Projector onto bus vacuum with every qubit in {0,1}.
pub fn computational_projector(dims: &SubsystemDims) -> Result<CMatrix> {
    let qubits: Vec<usize> = (0..dims.num_qubits()).collect();
    Ok(Subspace::for_qubits(dims, &qubits)?.projector())
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_error(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn unitarity_error(u: &CMatrix) -> f64 {
    let n = u.ncols();
    max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)))
}
