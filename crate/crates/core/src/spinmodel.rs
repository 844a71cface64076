//! Extended XZ chain: Hamiltonian assembly, spectrum, density of states,
//! the matched inverse temperature and thermal reference states.
//!
//! ```text
//! H = -J  sum_i X_i X_{i+1} + Jz  sum_i Z_i Z_{i+1}
//!     -J' sum_i X_i X_{i+2} + Jz' sum_i Z_i Z_{i+2}
//! ```
//!
//! with open boundaries. See [`XxTerm`] for how the `XX` bonds are read.

use std::io::Write;
use std::sync::Arc;

use faer::Mat;

use crate::error::{Error, Result};
use crate::hilbert::{local_pattern, SectorBasis, SiteSubset, SubsetLayout};
use crate::linalg::{self, c64, cr, CMat};

/// How the `XX` bonds act on the full computational basis.
///
/// Inside a fixed-magnetization sector both forms produce the same matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XxTerm {
    /// Flip-flop hopping `(XX + YY) / 2`; commutes with total `S^z`.
    #[default]
    Exchange,
    /// `XX` as written; conserves only the `Z` parity. This is what a
    /// product of `RXX` gates implements.
    Literal,
}

/// Couplings of the extended XZ model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingParams {
    /// Nearest-neighbour `XX`.
    pub j: f64,
    /// Nearest-neighbour `ZZ`.
    pub j_perp: f64,
    /// Next-nearest `XX`.
    pub j_prime: f64,
    /// Next-nearest `ZZ`.
    pub j_prime_perp: f64,
    #[serde(default)]
    pub xx_term: XxTerm,
}

impl Default for CouplingParams {
    fn default() -> Self {
        Self::non_integrable()
    }
}

impl CouplingParams {
    pub fn non_integrable() -> Self {
        Self {
            j: 1.0,
            j_perp: 1.0,
            j_prime: 0.5,
            j_prime_perp: 0.5,
            xx_term: XxTerm::Exchange,
        }
    }

    pub fn integrable(j: f64, j_perp: f64) -> Self {
        Self {
            j,
            j_perp,
            j_prime: 0.0,
            j_prime_perp: 0.0,
            xx_term: XxTerm::Exchange,
        }
    }

    pub fn with_xx_term(mut self, xx_term: XxTerm) -> Self {
        self.xx_term = xx_term;
        self
    }

    pub fn is_integrable(&self) -> bool {
        self.j_prime == 0.0 && self.j_prime_perp == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if [self.j, self.j_perp, self.j_prime, self.j_prime_perp]
            .iter()
            .all(|x| x.is_finite())
        {
            Ok(())
        } else {
            Err(Error::InvalidArgument("couplings must be finite".into()))
        }
    }

    /// Bond list `(i, j, xx coefficient, zz coefficient)` with the signs of `H` folded in.
    pub fn bonds(&self, length: usize) -> Vec<(usize, usize, f64, f64)> {
        let mut out = Vec::new();
        for i in 0..length.saturating_sub(1) {
            out.push((i, i + 1, -self.j, self.j_perp));
        }
        for i in 0..length.saturating_sub(2) {
            out.push((i, i + 2, -self.j_prime, self.j_prime_perp));
        }
        out
    }
}

/// Matrix elements of `H` in column `mask`: `(row mask, value)` pairs, diagonal first.
fn column_elements(params: &CouplingParams, length: usize, mask: u64, out: &mut Vec<(u64, f64)>) {
    out.clear();
    let mut diag = 0.0;
    for (i, j, xx, zz) in params.bonds(length) {
        let bi = (mask >> i) & 1 == 1;
        let bj = (mask >> j) & 1 == 1;
        diag += zz * linalg::z_eigen(bi) * linalg::z_eigen(bj);
        if xx != 0.0 && (bi != bj || params.xx_term == XxTerm::Literal) {
            out.push((mask ^ ((1u64 << i) | (1u64 << j)), xx));
        }
    }
    out.insert(0, (mask, diag));
}

/// Dense real-symmetric `H` in `basis`.
///
/// In a sector basis, matrix elements leading out of the sector are dropped,
/// i.e. the result is the sector block of `H`.
pub fn build_hamiltonian(params: &CouplingParams, basis: &SectorBasis) -> Result<Mat<f64>> {
    params.validate()?;
    basis.ensure_dense_cap()?;
    let dim = basis.dim();
    let mut h = Mat::<f64>::zeros(dim, dim);
    let mut elems = Vec::new();
    for (col, &mask) in basis.states().iter().enumerate() {
        column_elements(params, basis.length(), mask, &mut elems);
        for &(target, value) in &elems {
            if let Some(row) = basis.index_of(target) {
                h[(row, col)] += value;
            }
        }
    }
    Ok(h)
}

/// Local Hamiltonian keeping only bonds with both ends in `subset`, on the
/// full `2^m` local space in subset order.
pub fn local_hamiltonian(params: &CouplingParams, subset: &SiteSubset) -> CMat {
    let sites = subset.sites();
    let local_dim = subset.local_dim();
    let max_site = sites.iter().copied().max().map_or(0, |s| s + 1);
    let mut h = Mat::<c64>::zeros(local_dim, local_dim);
    for (i, j, xx, zz) in params.bonds(max_site) {
        let (Some(ki), Some(kj)) = (
            sites.iter().position(|&s| s == i),
            sites.iter().position(|&s| s == j),
        ) else {
            continue;
        };
        for a in 0..local_dim {
            let bi = (a >> ki) & 1 == 1;
            let bj = (a >> kj) & 1 == 1;
            h[(a, a)] += cr(zz * linalg::z_eigen(bi) * linalg::z_eigen(bj));
            if xx != 0.0 && (bi != bj || params.xx_term == XxTerm::Literal) {
                let b = a ^ ((1 << ki) | (1 << kj));
                h[(b, a)] += cr(xx);
            }
        }
    }
    h
}

/// Eigendecomposition of `H` in a given basis.
#[derive(Debug, Clone)]
pub struct Spectrum {
    basis: Arc<SectorBasis>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Mat<f64>,
}

impl Spectrum {
    pub fn from_hamiltonian(h: &Mat<f64>, basis: Arc<SectorBasis>) -> Result<Self> {
        if h.nrows() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: h.nrows(),
            });
        }
        let (eigenvalues, eigenvectors) = linalg::symmetric_eigen(h.as_ref())?;
        Ok(Self {
            basis,
            eigenvalues,
            eigenvectors,
        })
    }

    /// Assemble and diagonalize in one step.
    pub fn compute(params: &CouplingParams, basis: Arc<SectorBasis>) -> Result<Self> {
        let h = build_hamiltonian(params, &basis)?;
        Self::from_hamiltonian(&h, basis)
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("empty spectrum")
    }

    pub fn mean(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.dim() as f64
    }

    /// Expansion coefficients `V^T psi` of a computational-basis vector.
    pub fn to_eigenbasis(&self, amps: &[c64]) -> Vec<c64> {
        let v = &self.eigenvectors;
        let d = self.dim();
        (0..d)
            .map(|k| {
                let col = v.col(k);
                let mut acc = c64::new(0.0, 0.0);
                for i in 0..d {
                    acc += amps[i] * col[i];
                }
                acc
            })
            .collect()
    }

    /// `V c`, back to the computational basis.
    pub fn from_eigenbasis(&self, coeffs: &[c64]) -> Vec<c64> {
        let d = self.dim();
        let mut out = vec![c64::new(0.0, 0.0); d];
        for (k, &c) in coeffs.iter().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let col = self.eigenvectors.col(k);
            for i in 0..d {
                out[i] += c * col[i];
            }
        }
        out
    }

    /// `<psi|H|psi>` for a normalized computational-basis vector.
    pub fn energy_of(&self, amps: &[c64]) -> f64 {
        self.to_eigenbasis(amps)
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, e)| c.norm_sqr() * e)
            .sum()
    }

    /// Worst `||H v_k - E_k v_k||` over all eigenpairs, given `H`.
    pub fn max_residual(&self, h: &Mat<f64>) -> f64 {
        let hv = h * &self.eigenvectors;
        let mut worst = 0.0f64;
        for k in 0..self.dim() {
            let mut acc = 0.0;
            for i in 0..self.dim() {
                let r = hv[(i, k)] - self.eigenvalues[k] * self.eigenvectors[(i, k)];
                acc += r * r;
            }
            worst = worst.max(acc.sqrt());
        }
        worst
    }

    /// CSV with header `index,eigenvalue`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "index,eigenvalue")?;
        for (k, e) in self.eigenvalues.iter().enumerate() {
            writeln!(w, "{k},{e:.15e}")?;
        }
        Ok(())
    }
}

/// Gaussian-kernel density estimate over the eigenvalues, scaled by the level count.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOfStates {
    pub bandwidth: f64,
    pub energies: Vec<f64>,
    pub density: Vec<f64>,
}

impl DensityOfStates {
    /// Trapezoid integral of the curve over its grid.
    pub fn integral(&self) -> f64 {
        self.energies
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(e, d)| 0.5 * (e[1] - e[0]) * (d[0] + d[1]))
            .sum()
    }

    /// CSV with header `energy,scaled_density`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "energy,scaled_density")?;
        for (e, d) in self.energies.iter().zip(&self.density) {
            writeln!(w, "{e:.15e},{d:.15e}")?;
        }
        Ok(())
    }
}

/// Silverman's rule of thumb, `0.9 min(sd, IQR/1.34) n^{-1/5}`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Linear-interpolated quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Density of states on `n_points` energies covering the spectrum.
///
/// The grid spans `[E_min - 3h, E_max + 3h]` so that the kernel mass of the
/// edge levels is kept and the curve integrates to the level count.
pub fn density_of_states(eigenvalues: &[f64], bandwidth: Option<f64>, n_points: usize) -> Result<DensityOfStates> {
    if eigenvalues.len() < 2 {
        return Err(Error::InvalidArgument("density of states needs at least two levels".into()));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::InvalidArgument(format!("bandwidth {h} must be positive"))),
        None => {
            let h = silverman_bandwidth(eigenvalues);
            if !(h > 0.0) {
                return Err(Error::DegenerateSpectrum);
            }
            h
        }
    };
    let lo = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let n_points = n_points.max(2);
    let step = (hi - lo) / (n_points - 1) as f64;
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    let energies: Vec<f64> = (0..n_points).map(|i| lo + step * i as f64).collect();
    let density = energies
        .iter()
        .map(|&e| {
            eigenvalues
                .iter()
                .map(|&ek| norm * (-0.5 * ((e - ek) / h).powi(2)).exp())
                .sum()
        })
        .collect();
    Ok(DensityOfStates {
        bandwidth: h,
        energies,
        density,
    })
}

/// Canonical ensemble matched to a target energy.
#[derive(Debug, Clone)]
pub struct ThermalReference {
    pub beta_star: f64,
    pub log_partition: f64,
    pub target_energy: f64,
    /// `Tr[H rho_gibbs]` at `beta_star`.
    pub thermal_energy: f64,
    /// True when the target equals the mean level energy (`beta* = 0`).
    pub infinite_temperature: bool,
    /// Boltzmann probabilities aligned with the spectrum's eigenvalues.
    pub weights: Vec<f64>,
    spectrum: Arc<Spectrum>,
}

/// Boltzmann weights and `ln Z` at inverse temperature `beta`.
pub fn boltzmann(eigenvalues: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let shift = eigenvalues
        .iter()
        .map(|&e| -beta * e)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = eigenvalues.iter().map(|&e| (-beta * e - shift).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    (w, shift + z.ln())
}

/// Canonical mean energy `Tr[H e^{-beta H}] / Z`.
pub fn canonical_energy(eigenvalues: &[f64], beta: f64) -> f64 {
    let (w, _) = boltzmann(eigenvalues, beta);
    w.iter().zip(eigenvalues).map(|(p, e)| p * e).sum()
}

/// Canonical energy variance; `dE/dbeta = -Var(H)`.
pub fn canonical_variance(eigenvalues: &[f64], beta: f64) -> f64 {
    let (w, _) = boltzmann(eigenvalues, beta);
    let mean: f64 = w.iter().zip(eigenvalues).map(|(p, e)| p * e).sum();
    w.iter().zip(eigenvalues).map(|(p, e)| p * (e - mean).powi(2)).sum()
}

/// Solve `Tr[H e^{-beta H}] / Z = E0` by bracketed bisection.
///
/// The bracket `[-b, b]` starts at `b = 1` and doubles until it contains
/// the target. `E(beta)` is strictly decreasing, so the root is unique.
pub fn solve_beta_star(spectrum: Arc<Spectrum>, target_energy: f64) -> Result<ThermalReference> {
    let ev = &spectrum.eigenvalues;
    let (min, max) = (spectrum.min(), spectrum.max());
    if !(target_energy > min && target_energy < max) {
        return Err(Error::EnergyOutOfRange {
            energy: target_energy,
            min,
            max,
        });
    }
    let width = max - min;
    let tol = 1e-9 * width;
    let mean = spectrum.mean();
    let beta = if (target_energy - mean).abs() <= tol {
        0.0
    } else {
        let mut bound = 1.0f64;
        while !(canonical_energy(ev, bound) < target_energy && canonical_energy(ev, -bound) > target_energy) {
            bound *= 2.0;
            if bound > 1e12 {
                return Err(Error::EnergyOutOfRange {
                    energy: target_energy,
                    min,
                    max,
                });
            }
        }
        let (mut lo, mut hi) = (-bound, bound);
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..400 {
            mid = 0.5 * (lo + hi);
            let e = canonical_energy(ev, mid);
            if (e - target_energy).abs() <= 0.01 * tol || hi - lo <= f64::EPSILON * bound {
                break;
            }
            if e > target_energy {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        mid
    };
    let (weights, log_partition) = boltzmann(ev, beta);
    let thermal_energy = weights.iter().zip(ev).map(|(p, e)| p * e).sum();
    Ok(ThermalReference {
        beta_star: beta,
        log_partition,
        target_energy,
        thermal_energy,
        infinite_temperature: beta == 0.0,
        weights,
        spectrum,
    })
}

/// Which formula to use for the thermal state of a subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThermalMode {
    /// `Tr_{complement}[e^{-beta H}] / Z`.
    Exact,
    /// `e^{-beta H_A} / Tr[e^{-beta H_A}]` with `H_A` the bonds inside the subset.
    Local,
}

impl ThermalReference {
    pub fn spectrum(&self) -> &Arc<Spectrum> {
        &self.spectrum
    }

    /// Full Gibbs density matrix `V diag(w) V^T` (dense; use sparingly).
    pub fn gibbs_matrix(&self) -> CMat {
        let v = &self.spectrum.eigenvectors;
        let d = self.spectrum.dim();
        let scaled = Mat::<f64>::from_fn(d, d, |i, k| v[(i, k)] * self.weights[k]);
        let g = &scaled * v.transpose();
        linalg::to_complex(g.as_ref())
    }

    /// Thermal state reduced to `subset`, on the full `2^|subset|` local space.
    pub fn reduced(&self, subset: &SiteSubset, params: &CouplingParams, mode: ThermalMode) -> CMat {
        if !subset.below_half(self.spectrum.basis().length()) {
            log::warn!(
                "thermal reduction on {} of {} sites: convergence to this state is not expected",
                subset.len(),
                self.spectrum.basis().length()
            );
        }
        match mode {
            ThermalMode::Exact => self.reduced_exact(subset),
            ThermalMode::Local => {
                let h_a = local_hamiltonian(params, subset);
                let (values, vecs) = linalg::hermitian_eigen(h_a.as_ref()).expect("small Hermitian eigendecomposition");
                let (w, _) = boltzmann(&values, self.beta_star);
                linalg::reassemble(&w, vecs.as_ref())
            }
        }
    }

    fn reduced_exact(&self, subset: &SiteSubset) -> CMat {
        let basis = self.spectrum.basis();
        let layout = SubsetLayout::new(basis, subset.sites());
        let local_dim = layout.local_dim();
        let v = &self.spectrum.eigenvectors;
        let floor = self.weights.iter().copied().fold(0.0, f64::max) * 1e-18;
        let mut acc = vec![0.0f64; local_dim * local_dim];
        let mut buf = vec![0.0f64; local_dim];
        for (k, &w) in self.weights.iter().enumerate() {
            if w <= floor {
                continue;
            }
            let col = v.col(k);
            for group in layout.groups() {
                for (a, &idx) in group.iter().enumerate() {
                    buf[a] = if idx == SubsetLayout::ABSENT { 0.0 } else { col[idx] };
                }
                for a in 0..local_dim {
                    if buf[a] == 0.0 {
                        continue;
                    }
                    let wa = w * buf[a];
                    for b in 0..local_dim {
                        acc[a * local_dim + b] += wa * buf[b];
                    }
                }
            }
        }
        Mat::from_fn(local_dim, local_dim, |a, b| cr(acc[a * local_dim + b]))
    }
}

/// Energy of a computational-basis product state (diagonal element of `H`).
pub fn product_state_energy(params: &CouplingParams, length: usize, mask: u64) -> f64 {
    let mut elems = Vec::new();
    column_elements(params, length, mask, &mut elems);
    elems[0].1
}

/// Computational-basis pattern restricted to `subset`, as a local index.
pub fn local_index(mask: u64, subset: &SiteSubset) -> usize {
    local_pattern(mask, subset.sites()) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{LatticeSpec, SubsetRole};
    use crate::linalg::{identity, kron, max_abs_diff, pauli_x, pauli_z};

    fn sector(l: usize, p: usize) -> Arc<SectorBasis> {
        Arc::new(SectorBasis::sector(LatticeSpec::new(l, p).unwrap()).unwrap())
    }

    /// Site operator on the full space; site `i` is bit `i`, so it is the
    /// `i`-th least significant Kronecker factor.
    fn site_op(op: &CMat, site: usize, length: usize) -> CMat {
        let mut out = identity(1);
        for s in (0..length).rev() {
            let f = if s == site { op.clone() } else { identity(2) };
            out = kron(out.as_ref(), f.as_ref());
        }
        out
    }

    fn brute_force_literal(params: &CouplingParams, length: usize) -> CMat {
        let d = 1 << length;
        let mut h = Mat::<c64>::zeros(d, d);
        let x = pauli_x();
        let z = pauli_z();
        for (i, j, xx, zz) in params.bonds(length) {
            let xi = site_op(&x, i, length);
            let xj = site_op(&x, j, length);
            let zi = site_op(&z, i, length);
            let zj = site_op(&z, j, length);
            h = h + linalg::scale((&xi * &xj).as_ref(), cr(xx)) + linalg::scale((&zi * &zj).as_ref(), cr(zz));
        }
        h
    }

    #[test]
    fn two_site_sector_matrix() {
        let p = CouplingParams {
            j: 0.7,
            j_perp: 1.3,
            j_prime: 0.0,
            j_prime_perp: 0.0,
            xx_term: XxTerm::Exchange,
        };
        let h = build_hamiltonian(&p, &sector(2, 1)).unwrap();
        assert_eq!(h[(0, 0)], -1.3);
        assert_eq!(h[(1, 1)], -1.3);
        assert_eq!(h[(0, 1)], -0.7);
        assert_eq!(h[(1, 0)], -0.7);
        let spec = Spectrum::from_hamiltonian(&h, sector(2, 1)).unwrap();
        assert!((spec.eigenvalues[0] - (-1.3 - 0.7)).abs() < 1e-14);
        assert!((spec.eigenvalues[1] - (-1.3 + 0.7)).abs() < 1e-14);
    }

    #[test]
    fn zero_couplings_give_zero_matrix() {
        let p = CouplingParams {
            j: 0.0,
            j_perp: 0.0,
            j_prime: 0.0,
            j_prime_perp: 0.0,
            xx_term: XxTerm::Literal,
        };
        let h = build_hamiltonian(&p, &SectorBasis::full(4).unwrap()).unwrap();
        assert!(h.as_ref().norm_max() == 0.0);
    }

    #[test]
    fn sector_block_matches_kronecker_projection() {
        let p = CouplingParams {
            j: 0.9,
            j_perp: 1.1,
            j_prime: 0.4,
            j_prime_perp: 0.6,
            xx_term: XxTerm::Literal,
        };
        let full = brute_force_literal(&p, 4);
        let basis = sector(4, 2);
        for form in [XxTerm::Literal, XxTerm::Exchange] {
            let h = build_hamiltonian(&p.with_xx_term(form), &basis).unwrap();
            for (r, &mr) in basis.states().iter().enumerate() {
                for (c, &mc) in basis.states().iter().enumerate() {
                    assert!((full[(mr as usize, mc as usize)].re - h[(r, c)]).abs() < 1e-14);
                }
            }
        }
        let h_full = build_hamiltonian(&p, &SectorBasis::full(4).unwrap()).unwrap();
        assert!(max_abs_diff(linalg::to_complex(h_full.as_ref()).as_ref(), full.as_ref()) < 1e-14);
    }

    #[test]
    fn exchange_form_conserves_magnetization() {
        for l in 2..=8 {
            let basis = SectorBasis::full(l).unwrap();
            let h = build_hamiltonian(&CouplingParams::non_integrable(), &basis).unwrap();
            // [H, M] with M diagonal: (m_r - m_c) H_rc must vanish
            for c in 0..basis.dim() {
                for r in 0..basis.dim() {
                    let dm = (r as u64).count_ones() as i64 - (c as u64).count_ones() as i64;
                    assert!(dm == 0 || h[(r, c)] == 0.0);
                }
            }
        }
    }

    #[test]
    fn literal_form_conserves_parity_only() {
        let basis = SectorBasis::full(5).unwrap();
        let p = CouplingParams::non_integrable().with_xx_term(XxTerm::Literal);
        let h = build_hamiltonian(&p, &basis).unwrap();
        let mut breaks_magnetization = false;
        for c in 0..basis.dim() {
            for r in 0..basis.dim() {
                let dm = (r as u64).count_ones() as i64 - (c as u64).count_ones() as i64;
                assert!(dm % 2 == 0 || h[(r, c)] == 0.0);
                breaks_magnetization |= dm != 0 && h[(r, c)] != 0.0;
            }
        }
        assert!(breaks_magnetization);
    }

    #[test]
    fn spectrum_is_orthonormal_with_small_residual() {
        let basis = sector(10, 3);
        let h = build_hamiltonian(&CouplingParams::default(), &basis).unwrap();
        let spec = Spectrum::from_hamiltonian(&h, basis).unwrap();
        let v = &spec.eigenvectors;
        let g = v.transpose() * v;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-10);
            }
        }
        assert!(spec.max_residual(&h) <= 1e-8 * h.as_ref().norm_l2());
        assert!(spec.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn dos_two_levels_symmetric() {
        let dos = density_of_states(&[-1.0, 1.0], Some(0.1), 601).unwrap();
        let n = dos.density.len();
        for i in 0..n {
            assert!((dos.density[i] - dos.density[n - 1 - i]).abs() < 1e-9);
        }
        let left = dos.density[..n / 2].iter().copied().fold(0.0, f64::max);
        let right = dos.density[n / 2..].iter().copied().fold(0.0, f64::max);
        assert!((left - right).abs() < 1e-9);
    }

    #[test]
    fn dos_degenerate_needs_bandwidth() {
        assert!(matches!(
            density_of_states(&[0.5, 0.5, 0.5], None, 10),
            Err(Error::DegenerateSpectrum)
        ));
        assert!(density_of_states(&[0.5, 0.5, 0.5], Some(0.2), 10).is_ok());
    }

    #[test]
    fn dos_integrates_to_level_count() {
        let spec = Spectrum::compute(&CouplingParams::default(), sector(10, 2)).unwrap();
        let dos = density_of_states(&spec.eigenvalues, None, 2001).unwrap();
        // independent quadrature: Simpson's rule on the same grid
        let (e, f) = (&dos.energies, &dos.density);
        let h = e[1] - e[0];
        let n = f.len() - 1;
        let mut simpson = f[0] + f[n];
        for i in 1..n {
            simpson += if i % 2 == 1 { 4.0 } else { 2.0 } * f[i];
        }
        simpson *= h / 3.0;
        assert!((simpson - 45.0).abs() / 45.0 < 0.02, "{simpson}");
        assert!((dos.integral() - 45.0).abs() / 45.0 < 0.02);
    }

    fn toy_spectrum(values: &[f64]) -> Arc<Spectrum> {
        let d = values.len();
        let basis = Arc::new(SectorBasis::sector(LatticeSpec::new(d, 1).unwrap()).unwrap());
        Arc::new(Spectrum {
            basis,
            eigenvalues: values.to_vec(),
            eigenvectors: Mat::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 }),
        })
    }

    #[test]
    fn beta_star_mean_energy_is_zero() {
        let r = solve_beta_star(toy_spectrum(&[-1.0, 0.0, 1.0]), 0.0).unwrap();
        assert_eq!(r.beta_star, 0.0);
        assert!(r.infinite_temperature);
    }

    #[test]
    fn beta_star_two_level_closed_form() {
        let r = solve_beta_star(toy_spectrum(&[-1.0, 1.0]), -(1.0f64).tanh()).unwrap();
        assert!((r.beta_star - 1.0).abs() < 1e-8, "{}", r.beta_star);
        assert!((r.thermal_energy + (1.0f64).tanh()).abs() <= 1e-9 * 2.0);
    }

    #[test]
    fn beta_star_out_of_range() {
        let s = toy_spectrum(&[-1.0, 1.0]);
        assert!(matches!(solve_beta_star(s.clone(), 1.0), Err(Error::EnergyOutOfRange { .. })));
        assert!(matches!(solve_beta_star(s, -2.0), Err(Error::EnergyOutOfRange { .. })));
    }

    #[test]
    fn canonical_energy_decreases() {
        let spec = Spectrum::compute(&CouplingParams::default(), sector(8, 2)).unwrap();
        let ev = &spec.eigenvalues;
        let mut prev = f64::INFINITY;
        for i in -20..=20 {
            let beta = i as f64 * 0.25;
            let e = canonical_energy(ev, beta);
            assert!(e < prev);
            prev = e;
            // dE/dbeta = -Var(H), checked by central differences
            let fd = (canonical_energy(ev, beta + 1e-5) - canonical_energy(ev, beta - 1e-5)) / 2e-5;
            let var = canonical_variance(ev, beta);
            assert!(var > 0.0);
            assert!((fd + var).abs() < 1e-5 * (1.0 + var));
        }
    }

    #[test]
    fn edge_cluster_state_has_negative_beta() {
        let basis = sector(12, 3);
        let params = CouplingParams::default();
        let spec = Arc::new(Spectrum::compute(&params, basis).unwrap());
        let e0 = product_state_energy(&params, 12, 0b111);
        let r = solve_beta_star(spec, e0).unwrap();
        assert!(r.beta_star < 0.0);
        assert!((r.thermal_energy - e0).abs() <= 1e-9 * 40.0);
        let g = r.gibbs_matrix();
        assert!((linalg::trace(g.as_ref()).re - 1.0).abs() < 1e-12);
        let min_eig = linalg::hermitian_eigenvalues(g.as_ref()).unwrap()[0];
        assert!(min_eig >= -1e-12);
    }

    #[test]
    fn infinite_temperature_reductions_are_maximally_mixed() {
        let params = CouplingParams::default();
        let spec = Arc::new(Spectrum::compute(&params, Arc::new(SectorBasis::full(6).unwrap())).unwrap());
        let r = solve_beta_star(spec.clone(), spec.mean()).unwrap();
        let sub = SiteSubset::new(vec![1, 2], SubsetRole::Test, 6).unwrap();
        for mode in [ThermalMode::Exact, ThermalMode::Local] {
            let rho = r.reduced(&sub, &params, mode);
            assert!(max_abs_diff(rho.as_ref(), linalg::scale(identity(4).as_ref(), cr(0.25)).as_ref()) < 1e-12);
        }
    }

    #[test]
    fn exact_reduction_matches_full_partial_trace() {
        let params = CouplingParams::default();
        let basis = Arc::new(SectorBasis::full(4).unwrap());
        let spec = Arc::new(Spectrum::compute(&params, basis).unwrap());
        let r = solve_beta_star(spec, -1.0).unwrap();
        let g = r.gibbs_matrix();
        for site in 0..4 {
            let sub = SiteSubset::new(vec![site], SubsetRole::Test, 4).unwrap();
            let mut oracle = Mat::<c64>::zeros(2, 2);
            for a in 0..2usize {
                for b in 0..2usize {
                    for rest in 0..16usize {
                        if (rest >> site) & 1 == 1 {
                            continue;
                        }
                        oracle[(a, b)] += g[(rest | (a << site), rest | (b << site))];
                    }
                }
            }
            let rho = r.reduced(&sub, &params, ThermalMode::Exact);
            assert!(max_abs_diff(rho.as_ref(), oracle.as_ref()) < 1e-12);
        }
    }
}
