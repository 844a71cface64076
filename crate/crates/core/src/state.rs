//! State representations: pure statevectors, exact finite mixtures of pure
//! states, and dense density matrices, all tied to a basis.

use std::sync::Arc;

use faer::Mat;

use crate::error::{Error, Result};
use crate::hilbert::{SectorBasis, SubsetLayout};
use crate::linalg::{self, c64, CMat};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone)]
pub struct StateVector {
    basis: Arc<SectorBasis>,
    amps: Vec<c64>,
}

impl StateVector {
    pub fn new(basis: Arc<SectorBasis>, amps: Vec<c64>) -> Result<Self> {
        if amps.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: amps.len(),
            });
        }
        Ok(Self { basis, amps })
    }

    /// Computational-basis product state `|mask>`.
    pub fn product(basis: Arc<SectorBasis>, mask: u64) -> Result<Self> {
        let idx = basis
            .index_of(mask)
            .ok_or_else(|| Error::InvalidArgument(format!("mask {mask:#b} not in {}", basis.id())))?;
        let mut amps = vec![ZERO; basis.dim()];
        amps[idx] = c64::new(1.0, 0.0);
        Ok(Self { basis, amps })
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn amps(&self) -> &[c64] {
        &self.amps
    }

    pub fn amps_mut(&mut self) -> &mut [c64] {
        &mut self.amps
    }

    pub fn into_amps(self) -> Vec<c64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.amps.iter_mut().for_each(|a| *a /= n);
        }
    }

    pub fn inner(&self, other: &StateVector) -> c64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn outer(&self) -> DensityMatrix {
        let d = self.amps.len();
        DensityMatrix {
            basis: self.basis.clone(),
            mat: Mat::from_fn(d, d, |i, j| self.amps[i] * self.amps[j].conj()),
        }
    }
}

/// Dense density matrix in a basis.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    basis: Arc<SectorBasis>,
    mat: CMat,
}

impl DensityMatrix {
    pub fn new(basis: Arc<SectorBasis>, mat: CMat) -> Result<Self> {
        if mat.nrows() != basis.dim() || mat.ncols() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: mat.nrows(),
            });
        }
        Ok(Self { basis, mat })
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn matrix_mut(&mut self) -> &mut CMat {
        &mut self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(self.mat.as_ref()).re
    }

    pub fn purity(&self) -> f64 {
        let d = self.mat.nrows();
        let mut acc = 0.0;
        for j in 0..d {
            for i in 0..d {
                acc += self.mat[(i, j)].norm_sqr();
            }
        }
        acc
    }
}

/// Exact finite mixture `sum_m w_m |psi_m><psi_m|` with normalized members.
#[derive(Debug, Clone)]
pub struct Ensemble {
    basis: Arc<SectorBasis>,
    members: Vec<(f64, Vec<c64>)>,
}

impl Ensemble {
    pub fn from_pure(state: StateVector) -> Self {
        Self {
            basis: state.basis,
            members: vec![(1.0, state.amps)],
        }
    }

    pub fn new(basis: Arc<SectorBasis>, members: Vec<(f64, Vec<c64>)>) -> Result<Self> {
        if let Some((_, v)) = members.iter().find(|(_, v)| v.len() != basis.dim()) {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: v.len(),
            });
        }
        Ok(Self { basis, members })
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn members(&self) -> &[(f64, Vec<c64>)] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut Vec<(f64, Vec<c64>)> {
        &mut self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.members.iter().map(|(w, _)| w).sum()
    }

    pub fn to_density(&self) -> DensityMatrix {
        let d = self.basis.dim();
        let mut mat = Mat::<c64>::zeros(d, d);
        for (w, v) in &self.members {
            for j in 0..d {
                let cj = v[j].conj() * *w;
                if cj == ZERO {
                    continue;
                }
                for i in 0..d {
                    mat[(i, j)] += v[i] * cj;
                }
            }
        }
        DensityMatrix {
            basis: self.basis.clone(),
            mat,
        }
    }
}

/// Any of the supported representations.
#[derive(Debug, Clone)]
pub enum QuantumState {
    Pure(StateVector),
    Mixture(Ensemble),
    Dense(DensityMatrix),
}

impl QuantumState {
    pub fn basis(&self) -> &Arc<SectorBasis> {
        match self {
            QuantumState::Pure(s) => s.basis(),
            QuantumState::Mixture(e) => e.basis(),
            QuantumState::Dense(r) => r.basis(),
        }
    }

    pub fn representation(&self) -> &'static str {
        match self {
            QuantumState::Pure(_) => "pure",
            QuantumState::Mixture(_) => "mixture",
            QuantumState::Dense(_) => "dense",
        }
    }

    /// Trace of the state (squared norm for a pure state).
    pub fn trace(&self) -> f64 {
        match self {
            QuantumState::Pure(s) => s.norm().powi(2),
            QuantumState::Mixture(e) => e
                .members
                .iter()
                .map(|(w, v)| w * v.iter().map(|a| a.norm_sqr()).sum::<f64>())
                .sum(),
            QuantumState::Dense(r) => r.trace(),
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        match self {
            QuantumState::Pure(s) => s.outer(),
            QuantumState::Mixture(e) => e.to_density(),
            QuantumState::Dense(r) => r.clone(),
        }
    }

    /// Reduced density matrix on the layout's subset, on the full local space.
    pub fn reduce(&self, layout: &SubsetLayout) -> CMat {
        match self {
            QuantumState::Pure(s) => reduce_pure(s.amps(), layout),
            QuantumState::Mixture(e) => {
                let n = layout.local_dim();
                let mut acc = Mat::<c64>::zeros(n, n);
                for (w, v) in &e.members {
                    let r = reduce_pure(v, layout);
                    for j in 0..n {
                        for i in 0..n {
                            acc[(i, j)] += r[(i, j)] * *w;
                        }
                    }
                }
                acc
            }
            QuantumState::Dense(r) => reduce_dense(r.matrix(), layout),
        }
    }
}

/// `Tr_complement |psi><psi|` over a precomputed layout.
pub fn reduce_pure(amps: &[c64], layout: &SubsetLayout) -> CMat {
    let n = layout.local_dim();
    let mut acc = vec![ZERO; n * n];
    let mut buf = vec![ZERO; n];
    for group in layout.groups() {
        let mut any = false;
        for (a, &idx) in group.iter().enumerate() {
            buf[a] = if idx == SubsetLayout::ABSENT { ZERO } else { amps[idx] };
            any |= buf[a] != ZERO;
        }
        if !any {
            continue;
        }
        for a in 0..n {
            if buf[a] == ZERO {
                continue;
            }
            for b in 0..n {
                acc[a * n + b] += buf[a] * buf[b].conj();
            }
        }
    }
    Mat::from_fn(n, n, |a, b| acc[a * n + b])
}

/// `Tr_complement rho` for a dense density matrix.
pub fn reduce_dense(rho: &CMat, layout: &SubsetLayout) -> CMat {
    let n = layout.local_dim();
    let mut out = Mat::<c64>::zeros(n, n);
    for group in layout.groups() {
        for (a, &ia) in group.iter().enumerate() {
            if ia == SubsetLayout::ABSENT {
                continue;
            }
            for (b, &ib) in group.iter().enumerate() {
                if ib != SubsetLayout::ABSENT {
                    out[(a, b)] += rho[(ia, ib)];
                }
            }
        }
    }
    out
}
