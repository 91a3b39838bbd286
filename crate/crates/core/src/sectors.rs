//! Excitation-number sectors.
//!
//! The exchange coupling and the number-operator controls both conserve the
//! total excitation number, so every step propagator is block diagonal. The
//! fidelity only needs the blocks that contain computational states, which
//! for the default truncation are of size 1, 4, 10 and 16 instead of 81.

use nalgebra::DMatrix;

use crate::device::{ControlledHamiltonian, TargetGate};
use crate::error::{Error, Result};
use crate::operators::{max_abs, CMatrix, Subspace, C64};

/// One conserved block restricted to the subspace members it contains.
#[derive(Clone, Debug)]
pub struct Sector {
    /// Full-space basis indices, ascending.
    pub indices: Vec<usize>,
    /// The exchange coupling and level energies are real, so each block is
    /// real symmetric.
    pub drift: DMatrix<f64>,
    /// Diagonal of each control operator inside the block.
    pub control_diag: Vec<Vec<f64>>,
    /// `(local position, subspace column)` for each member.
    pub members: Vec<(usize, usize)>,
    /// `Y[p(a), k] = F[a, b_k]` for target rows `a` in this block and the
    /// block's member columns `b_k`.
    pub target: CMatrix,
}

impl Sector {
    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn num_members(&self) -> usize {
        self.members.len()
    }

    /// Columns of the identity at the member positions.
    pub fn initial_columns(&self) -> CMatrix {
        let mut x = CMatrix::zeros(self.dim(), self.num_members());
        for (k, &(local, _)) in self.members.iter().enumerate() {
            x[(local, k)] = C64::new(1.0, 0.0);
        }
        x
    }

    pub fn hamiltonian(&self, detunings: &[f64]) -> DMatrix<f64> {
        let mut h = self.drift.clone();
        for (diag, &d) in self.control_diag.iter().zip(detunings) {
            for (l, &c) in diag.iter().enumerate() {
                h[(l, l)] += c * d;
            }
        }
        h
    }
}

#[derive(Clone, Debug)]
pub struct SectorModel {
    pub sectors: Vec<Sector>,
    /// Dimension of the computational subspace.
    pub subspace_dim: usize,
}

pub const BLOCK_TOL: f64 = 1e-14;

impl SectorModel {
    pub fn new(
        ham: &ControlledHamiltonian,
        target: &TargetGate,
        subspace: &Subspace,
    ) -> Result<Self> {
        let dims = &ham.dims;
        let n = ham.dim();
        let max_exc = dims.levels().iter().map(|l| l - 1).sum::<usize>();
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); max_exc + 1];
        for i in 0..n {
            groups[dims.excitation(i)].push(i);
        }
        let sector_of: Vec<usize> = (0..n).map(|i| dims.excitation(i)).collect();

        for (j, col) in ham.drift.column_iter().enumerate() {
            for (i, z) in col.iter().enumerate() {
                if sector_of[i] != sector_of[j] && z.norm() > BLOCK_TOL {
                    return Err(Error::InvalidOperator(
                        "drift couples different excitation sectors".into(),
                    ));
                }
            }
        }
        for c in &ham.controls {
            let off = c - CMatrix::from_diagonal(&c.diagonal());
            if max_abs(&off) > 0.0 {
                return Err(Error::InvalidOperator(
                    "control operator is not diagonal".into(),
                ));
            }
        }

        let sub = subspace.indices();
        let mut sectors = Vec::new();
        for indices in groups.into_iter().filter(|g| !g.is_empty()) {
            let members: Vec<(usize, usize)> = sub
                .iter()
                .enumerate()
                .filter_map(|(col, idx)| indices.iter().position(|i| i == idx).map(|p| (p, col)))
                .collect();
            if members.is_empty() {
                continue;
            }
            let dim = indices.len();
            let block = CMatrix::from_fn(dim, dim, |r, c| ham.drift[(indices[r], indices[c])]);
            if block.iter().any(|z| z.im != 0.0) {
                return Err(Error::InvalidOperator("drift block is not real".into()));
            }
            let drift = block.map(|z| z.re);
            let control_diag = ham
                .controls
                .iter()
                .map(|op| indices.iter().map(|&i| op[(i, i)].re).collect())
                .collect();
            let mut y = CMatrix::zeros(dim, members.len());
            for (k, &(_, col_b)) in members.iter().enumerate() {
                for &(local_a, row_a) in &members {
                    y[(local_a, k)] = target.matrix[(row_a, col_b)];
                }
            }
            sectors.push(Sector {
                indices,
                drift,
                control_diag,
                members,
                target: y,
            });
        }
        Ok(Self {
            sectors,
            subspace_dim: subspace.dim(),
        })
    }
}
