//! Basis machinery for open spin-1/2 chains.
//!
//! Configurations are `u64` bitmasks: bit `i` is site `i`, a set bit is an
//! up spin. Sites are 0-based, `0..L`. A [`SectorBasis`] is either a fixed
//! magnetization sector (exactly `p` set bits) or the full `2^L` space; in
//! both cases the states are stored in increasing integer order, so the
//! full-space index of a mask is the mask itself.
//!
//! Local operators on a [`SiteSubset`] use the subset's own order: the
//! local index of a configuration is `sum_k bit(sites[k]) << k`, i.e. the
//! first listed site is the least significant local bit.

use std::collections::HashMap;
use std::fmt;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{c64, CMat};

/// Largest state count allowed for dense operator construction.
pub const DENSE_DIMENSION_CAP: usize = 1 << 16;

/// Largest state count allowed for a basis enumeration (statevector work only).
pub const BASIS_DIMENSION_CAP: usize = 1 << 24;

/// Longest chain representable by the `u64` masks.
pub const MAX_LENGTH: usize = 63;

/// Chain length and up-spin count. Boundaries are always open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct LatticeSpec {
    pub length: usize,
    pub up_count: usize,
}

impl LatticeSpec {
    pub fn new(length: usize, up_count: usize) -> Result<Self> {
        let spec = Self { length, up_count };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.length > MAX_LENGTH {
            return Err(Error::InvalidLattice(format!(
                "length {} outside 1..={}",
                self.length, MAX_LENGTH
            )));
        }
        if self.up_count > self.length {
            return Err(Error::InvalidLattice(format!(
                "up_count {} exceeds length {}",
                self.up_count, self.length
            )));
        }
        Ok(())
    }

    /// Nearest-neighbour bonds `(i, i+1)`.
    pub fn nearest_bonds(&self) -> impl Iterator<Item = (usize, usize)> {
        (0..self.length.saturating_sub(1)).map(|i| (i, i + 1))
    }

    /// Next-nearest bonds `(i, i+2)`.
    pub fn next_nearest_bonds(&self) -> impl Iterator<Item = (usize, usize)> {
        (0..self.length.saturating_sub(2)).map(|i| (i, i + 2))
    }
}

/// Identity of a basis, cheap to compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisId {
    pub length: usize,
    /// `None` for the full `2^L` space.
    pub up_count: Option<usize>,
}

impl fmt::Display for BasisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.up_count {
            Some(p) => write!(f, "sector(L={}, p={})", self.length, p),
            None => write!(f, "full(L={})", self.length),
        }
    }
}

pub fn binomial(n: usize, k: usize) -> Option<usize> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

/// Ordered list of computational-basis configurations with an inverse map.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorBasis {
    length: usize,
    up_count: Option<usize>,
    states: Vec<u64>,
}

impl SectorBasis {
    /// All `binomial(L, p)` masks with `p` set bits, increasing.
    pub fn sector(spec: LatticeSpec) -> Result<Self> {
        Self::sector_with_cap(spec, BASIS_DIMENSION_CAP)
    }

    pub fn sector_with_cap(spec: LatticeSpec, cap: usize) -> Result<Self> {
        spec.validate()?;
        let dim = binomial(spec.length, spec.up_count).unwrap_or(usize::MAX);
        if dim > cap {
            return Err(Error::DimensionCap { dim, cap });
        }
        let mut states = Vec::with_capacity(dim);
        if spec.up_count == 0 {
            states.push(0);
        } else {
            // Gosper's hack walks fixed-popcount masks in increasing order.
            let limit = 1u64 << spec.length;
            let mut v: u64 = (1u64 << spec.up_count) - 1;
            while v < limit {
                states.push(v);
                let t = v | (v - 1);
                let next = (t + 1) | (((!t & (t + 1)) - 1) >> (v.trailing_zeros() + 1));
                if next <= v {
                    break;
                }
                v = next;
            }
        }
        debug_assert_eq!(states.len(), dim);
        Ok(Self {
            length: spec.length,
            up_count: Some(spec.up_count),
            states,
        })
    }

    /// The unrestricted `2^L` computational basis.
    pub fn full(length: usize) -> Result<Self> {
        Self::full_with_cap(length, BASIS_DIMENSION_CAP)
    }

    pub fn full_with_cap(length: usize, cap: usize) -> Result<Self> {
        if length == 0 || length > MAX_LENGTH {
            return Err(Error::InvalidLattice(format!("length {length}")));
        }
        let dim = 1usize.checked_shl(length as u32).unwrap_or(usize::MAX);
        if length >= usize::BITS as usize || dim > cap {
            return Err(Error::DimensionCap { dim, cap });
        }
        Ok(Self {
            length,
            up_count: None,
            states: (0..dim as u64).collect(),
        })
    }

    pub fn id(&self) -> BasisId {
        BasisId {
            length: self.length,
            up_count: self.up_count,
        }
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn up_count(&self) -> Option<usize> {
        self.up_count
    }

    pub fn is_sector(&self) -> bool {
        self.up_count.is_some()
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn state(&self, index: usize) -> u64 {
        self.states[index]
    }

    pub fn index_of(&self, mask: u64) -> Option<usize> {
        match self.up_count {
            None => ((mask as usize) < self.states.len()).then_some(mask as usize),
            Some(_) => self.states.binary_search(&mask).ok(),
        }
    }

    pub fn ensure_dense_cap(&self) -> Result<()> {
        if self.dim() > DENSE_DIMENSION_CAP {
            return Err(Error::DimensionCap {
                dim: self.dim(),
                cap: DENSE_DIMENSION_CAP,
            });
        }
        Ok(())
    }

    pub fn check_same(&self, other: BasisId) -> Result<()> {
        if self.id() != other {
            return Err(Error::BasisMismatch {
                expected: self.id().to_string(),
                found: other.to_string(),
            });
        }
        Ok(())
    }
}

/// What a site subset is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetRole {
    Noisy,
    Test,
    Initial,
    Other,
}

/// Ordered set of distinct sites.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SiteSubset {
    sites: Vec<usize>,
    role: SubsetRole,
}

impl SiteSubset {
    pub fn new(sites: Vec<usize>, role: SubsetRole, length: usize) -> Result<Self> {
        for (k, &s) in sites.iter().enumerate() {
            if s >= length {
                return Err(Error::InvalidSubset(format!("site {s} outside 0..{length}")));
            }
            if sites[..k].contains(&s) {
                return Err(Error::InvalidSubset(format!("duplicate site {s}")));
            }
        }
        Ok(Self { sites, role })
    }

    /// The last `count` sites in descending order, e.g. `{L-1, L-2, L-3}`.
    pub fn tail(count: usize, role: SubsetRole, length: usize) -> Result<Self> {
        if count > length {
            return Err(Error::InvalidSubset(format!("{count} sites on a chain of {length}")));
        }
        Self::new((length - count..length).rev().collect(), role, length)
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn role(&self) -> SubsetRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn local_dim(&self) -> usize {
        1 << self.sites.len()
    }

    pub fn mask(&self) -> u64 {
        self.sites.iter().fold(0, |m, &s| m | (1u64 << s))
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.contains(&site)
    }

    /// True when the subset covers less than half the chain.
    pub fn below_half(&self, length: usize) -> bool {
        2 * self.sites.len() < length
    }

    /// Union preserving first-seen order; duplicates dropped.
    pub fn union(&self, other: &SiteSubset, role: SubsetRole) -> SiteSubset {
        let mut sites = self.sites.clone();
        for &s in &other.sites {
            if !sites.contains(&s) {
                sites.push(s);
            }
        }
        SiteSubset { sites, role }
    }
}

/// Restriction of `mask` to `sites`, packed in subset order.
pub fn local_pattern(mask: u64, sites: &[usize]) -> u32 {
    sites
        .iter()
        .enumerate()
        .fold(0u32, |acc, (k, &s)| acc | ((((mask >> s) & 1) as u32) << k))
}

/// Scatter a local pattern back onto lattice sites.
pub fn spread_pattern(local: u32, sites: &[usize]) -> u64 {
    sites
        .iter()
        .enumerate()
        .fold(0u64, |acc, (k, &s)| acc | ((((local >> k) & 1) as u64) << s))
}

/// Basis states grouped by their configuration outside a subset.
///
/// Each group is a row of `2^m` slots indexed by local pattern; a slot holds
/// the basis index of `rest | spread(local)`, or [`SubsetLayout::ABSENT`]
/// when that configuration is not in the basis. Partial traces and local
/// operator applications are loops over these groups.
#[derive(Debug, Clone)]
pub struct SubsetLayout {
    local_dim: usize,
    slots: Vec<usize>,
}

impl SubsetLayout {
    pub const ABSENT: usize = usize::MAX;

    pub fn new(basis: &SectorBasis, sites: &[usize]) -> Self {
        let local_dim = 1usize << sites.len();
        let subset_mask = sites.iter().fold(0u64, |m, &s| m | (1u64 << s));
        let mut group_of: HashMap<u64, usize> = HashMap::new();
        let mut slots: Vec<usize> = Vec::new();
        for (idx, &mask) in basis.states().iter().enumerate() {
            let rest = mask & !subset_mask;
            let next = group_of.len();
            let g = *group_of.entry(rest).or_insert_with(|| {
                slots.extend(std::iter::repeat_n(Self::ABSENT, local_dim));
                next
            });
            slots[g * local_dim + local_pattern(mask, sites) as usize] = idx;
        }
        Self { local_dim, slots }
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn groups(&self) -> std::slice::ChunksExact<'_, usize> {
        self.slots.chunks_exact(self.local_dim)
    }

    pub fn n_groups(&self) -> usize {
        self.slots.len() / self.local_dim
    }
}

/// Reject operators whose elements connect different local up-counts.
pub fn check_local_conservation(op: MatRef<'_, c64>, tol: f64) -> Result<()> {
    for j in 0..op.ncols() {
        for i in 0..op.nrows() {
            let (from, to) = ((j as u32).count_ones(), (i as u32).count_ones());
            let magnitude = op[(i, j)].norm();
            if from != to && magnitude > tol {
                return Err(Error::SectorViolation { from, to, magnitude });
            }
        }
    }
    Ok(())
}

/// Dense representation of `op` acting on `subset` (identity elsewhere) in `basis`.
pub fn embed_local_operator(op: MatRef<'_, c64>, subset: &SiteSubset, basis: &SectorBasis) -> Result<CMat> {
    let local_dim = subset.local_dim();
    if op.nrows() != local_dim || op.ncols() != local_dim {
        return Err(Error::DimensionMismatch {
            expected: local_dim,
            found: op.nrows(),
        });
    }
    if subset.sites().iter().any(|&s| s >= basis.length()) {
        return Err(Error::InvalidSubset("subset exceeds lattice".into()));
    }
    basis.ensure_dense_cap()?;
    if basis.is_sector() {
        check_local_conservation(op, 1e-12)?;
    }
    let dim = basis.dim();
    let layout = SubsetLayout::new(basis, subset.sites());
    let mut out = Mat::<c64>::zeros(dim, dim);
    for group in layout.groups() {
        for (a, &row) in group.iter().enumerate() {
            if row == SubsetLayout::ABSENT {
                continue;
            }
            for (b, &col) in group.iter().enumerate() {
                if col != SubsetLayout::ABSENT {
                    out[(row, col)] = op[(a, b)];
                }
            }
        }
    }
    Ok(out)
}

/// Apply a local operator to a statevector in place, without forming the dense embedding.
///
/// In a sector basis `op` must conserve the local up-count; slots absent
/// from the basis are then never populated.
pub fn apply_local_operator(op: MatRef<'_, c64>, layout: &SubsetLayout, amps: &mut [c64]) {
    let d = layout.local_dim();
    debug_assert_eq!(op.nrows(), d);
    let mut local = vec![c64::new(0.0, 0.0); d];
    let mut out = vec![c64::new(0.0, 0.0); d];
    for group in layout.groups() {
        for (a, &idx) in group.iter().enumerate() {
            local[a] = if idx == SubsetLayout::ABSENT {
                c64::new(0.0, 0.0)
            } else {
                amps[idx]
            };
        }
        for (a, slot) in out.iter_mut().enumerate() {
            let mut acc = c64::new(0.0, 0.0);
            for (b, &x) in local.iter().enumerate() {
                if x.re != 0.0 || x.im != 0.0 {
                    acc += op[(a, b)] * x;
                }
            }
            *slot = acc;
        }
        for (a, &idx) in group.iter().enumerate() {
            if idx != SubsetLayout::ABSENT {
                amps[idx] = out[a];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cr, identity, kron, max_abs_diff, pauli_z};

    #[test]
    fn large_sector_sizes() {
        assert_eq!(SectorBasis::sector(LatticeSpec::new(24, 3).unwrap()).unwrap().dim(), 2024);
        assert_eq!(SectorBasis::sector(LatticeSpec::new(30, 3).unwrap()).unwrap().dim(), 4060);
    }

    #[test]
    fn empty_sector_is_single_vacuum() {
        let b = SectorBasis::sector(LatticeSpec::new(4, 0).unwrap()).unwrap();
        assert_eq!(b.states(), &[0]);
        let b = SectorBasis::sector(LatticeSpec::new(4, 4).unwrap()).unwrap();
        assert_eq!(b.states(), &[0b1111]);
    }

    #[test]
    fn cap_is_enforced() {
        let err = SectorBasis::sector_with_cap(LatticeSpec::new(24, 3).unwrap(), 2000).unwrap_err();
        assert!(matches!(err, Error::DimensionCap { dim: 2024, cap: 2000 }));
    }

    #[test]
    fn invalid_lattice_rejected() {
        assert!(LatticeSpec::new(4, 5).is_err());
        assert!(LatticeSpec::new(0, 0).is_err());
    }

    #[test]
    fn local_patterns() {
        assert_eq!(local_pattern(0b0111, &[0, 1, 2]), 0b111);
        assert_eq!(local_pattern(0b0111, &[3]), 0);
        // site 2 is the least significant local bit under subset order
        assert_eq!(local_pattern(0b0101, &[2, 0]), 0b11);
        assert_eq!(local_pattern(0b0100, &[2, 0]), 0b01);
        assert_eq!(local_pattern(0b0001, &[2, 0]), 0b10);
    }

    #[test]
    fn subset_validation() {
        assert!(SiteSubset::new(vec![0, 0], SubsetRole::Test, 4).is_err());
        assert!(SiteSubset::new(vec![4], SubsetRole::Test, 4).is_err());
        let t = SiteSubset::tail(3, SubsetRole::Test, 24).unwrap();
        assert_eq!(t.sites(), &[23, 22, 21]);
        assert!(t.below_half(24));
    }

    #[test]
    fn identity_embeds_to_identity() {
        let b = SectorBasis::sector(LatticeSpec::new(6, 2).unwrap()).unwrap();
        let s = SiteSubset::new(vec![1, 4, 5], SubsetRole::Noisy, 6).unwrap();
        let e = embed_local_operator(identity(8).as_ref(), &s, &b).unwrap();
        assert!(max_abs_diff(e.as_ref(), identity(b.dim()).as_ref()) < 1e-15);
    }

    #[test]
    fn zz_embedding_matches_hand_result() {
        let b = SectorBasis::sector(LatticeSpec::new(3, 1).unwrap()).unwrap();
        let s = SiteSubset::new(vec![0, 1], SubsetRole::Other, 3).unwrap();
        let zz = kron(pauli_z().as_ref(), pauli_z().as_ref());
        let e = embed_local_operator(zz.as_ref(), &s, &b).unwrap();
        let expect = [-1.0, -1.0, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { cr(expect[i]) } else { cr(0.0) };
                assert_eq!(e[(i, j)], want);
            }
        }
    }

    #[test]
    fn non_conserving_operator_is_rejected() {
        let b = SectorBasis::sector(LatticeSpec::new(3, 1).unwrap()).unwrap();
        let s = SiteSubset::new(vec![0, 1], SubsetRole::Other, 3).unwrap();
        // |up,down> (local 0b01) <-> |up,up> (local 0b11)
        let mut op = identity(4);
        op[(0b11, 0b01)] = cr(0.5);
        let err = embed_local_operator(op.as_ref(), &s, &b).unwrap_err();
        assert!(matches!(err, Error::SectorViolation { .. }));
        // the same operator embeds fine into the full basis
        let full = SectorBasis::full(3).unwrap();
        assert!(embed_local_operator(op.as_ref(), &s, &full).is_ok());
    }
}
