//! Distances, entropies and correlations between states and thermal references.
//!
//! Logarithms are natural (nats). Eigenvalues below
//! [`CLIP_FLOOR`](crate::linalg::CLIP_FLOOR) are clipped before logarithms
//! and square roots.

use std::fmt;

use faer::Mat;

use crate::error::{Error, Result};
use crate::hilbert::{SiteSubset, SubsetLayout, SubsetRole};
use crate::linalg::{self, c64, CMat, CLIP_FLOOR};
use crate::spinmodel::ThermalReference;
use crate::state::QuantumState;

/// Clipped mass above which a warning is logged.
const CLIP_REPORT: f64 = 1e-8;

/// Reduced density matrix on a subset.
#[derive(Debug, Clone)]
pub struct ReducedState {
    pub subset: SiteSubset,
    pub matrix: CMat,
}

impl ReducedState {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `Tr_{complement}` of any state representation.
pub fn partial_trace(state: &QuantumState, keep: &SiteSubset) -> Result<ReducedState> {
    let basis = state.basis();
    if keep.sites().iter().any(|&s| s >= basis.length()) {
        return Err(Error::InvalidSubset("subset exceeds lattice".into()));
    }
    let layout = SubsetLayout::new(basis, keep.sites());
    Ok(ReducedState {
        subset: keep.clone(),
        matrix: state.reduce(&layout),
    })
}

fn clipped_eigenvalues(m: &CMat) -> Result<Vec<f64>> {
    let values = linalg::hermitian_eigenvalues(m.as_ref())?;
    let negative: f64 = values.iter().filter(|&&x| x < 0.0).map(|x| -x).sum();
    if negative > CLIP_REPORT {
        log::warn!("clipped {negative:.3e} of negative eigenvalue mass");
    }
    Ok(values)
}

/// `-Tr[rho ln rho]`.
pub fn von_neumann_entropy(rho: &CMat) -> Result<f64> {
    Ok(-clipped_eigenvalues(rho)?.into_iter().map(linalg::xlogx).sum::<f64>())
}

/// `Tr[rho (ln rho - ln sigma)]`.
pub fn relative_entropy(rho: &CMat, sigma: &CMat) -> Result<f64> {
    check_dims(rho, sigma)?;
    let neg_entropy: f64 = clipped_eigenvalues(rho)?.into_iter().map(linalg::xlogx).sum();
    let (mu, w) = linalg::hermitian_eigen(sigma.as_ref())?;
    // Tr[rho ln sigma] = sum_j <w_j|rho|w_j> ln mu_j
    let rw = rho * &w;
    let mut cross = 0.0;
    let mut outside = 0.0;
    for (j, &m) in mu.iter().enumerate() {
        let mut pop = c64::new(0.0, 0.0);
        for i in 0..rho.nrows() {
            pop += w[(i, j)].conj() * rw[(i, j)];
        }
        if m > CLIP_FLOOR {
            cross += pop.re * m.ln();
        } else {
            outside += pop.re.max(0.0);
        }
    }
    if outside > CLIP_REPORT {
        return Err(Error::SupportViolation { weight: outside });
    }
    Ok(neg_entropy - cross)
}

/// `(1/2) Tr|rho - sigma|`.
pub fn trace_distance(rho: &CMat, sigma: &CMat) -> Result<f64> {
    check_dims(rho, sigma)?;
    let diff = rho - sigma;
    let values = linalg::hermitian_eigenvalues(diff.as_ref())?;
    Ok((0.5 * values.iter().map(|x| x.abs()).sum::<f64>()).clamp(0.0, 1.0))
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`, clamped to `[0, 1]`.
pub fn fidelity(rho: &CMat, sigma: &CMat) -> Result<f64> {
    check_dims(rho, sigma)?;
    // restrict to the support of rho so null-space round-off is not square-rooted
    let (lambda, v) = linalg::hermitian_eigen(rho.as_ref())?;
    let keep: Vec<usize> = (0..lambda.len()).filter(|&k| lambda[k] > CLIP_FLOOR).collect();
    let vk = Mat::from_fn(rho.nrows(), keep.len(), |i, c| v[(i, keep[c])]);
    let proj = vk.adjoint() * sigma * &vk;
    let inner = Mat::from_fn(keep.len(), keep.len(), |a, b| {
        proj[(a, b)] * (lambda[keep[a]] * lambda[keep[b]]).sqrt()
    });
    let inner = linalg::hermitize(inner.as_ref());
    let root: f64 = linalg::hermitian_eigenvalues(inner.as_ref())?
        .into_iter()
        .map(|x| if x > 0.0 { x.sqrt() } else { 0.0 })
        .sum();
    Ok((root * root).clamp(0.0, 1.0))
}

/// Mutual information `S_N + S_T - S_{N u T}` of a global state.
///
/// Overlapping subsets are allowed; the union drops duplicate sites.
pub fn mutual_information(state: &QuantumState, n: &SiteSubset, t: &SiteSubset) -> Result<f64> {
    let union = n.union(t, SubsetRole::Other);
    let s_n = von_neumann_entropy(&partial_trace(state, n)?.matrix)?;
    let s_t = von_neumann_entropy(&partial_trace(state, t)?.matrix)?;
    let s_nt = von_neumann_entropy(&partial_trace(state, &union)?.matrix)?;
    Ok(s_n + s_t - s_nt)
}

/// Mutual information from already-reduced matrices.
pub fn mutual_information_from(rho_n: &CMat, rho_t: &CMat, rho_nt: &CMat) -> Result<f64> {
    Ok(von_neumann_entropy(rho_n)? + von_neumann_entropy(rho_t)? - von_neumann_entropy(rho_nt)?)
}

/// Purity-based distance to the maximally mixed state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurityReport {
    /// `Tr[rho^2] - 1/d`.
    pub hs_distance: f64,
    pub purity: f64,
    /// `-ln Tr[rho^2]`.
    pub renyi2: f64,
}

pub fn hs_distance_to_infinite_temperature(rho: &CMat) -> PurityReport {
    let d = rho.nrows();
    let mut purity = 0.0;
    for j in 0..d {
        for i in 0..d {
            purity += rho[(i, j)].norm_sqr();
        }
    }
    PurityReport {
        hs_distance: purity - 1.0 / d as f64,
        purity,
        renyi2: -purity.ln(),
    }
}

/// `(E_max - <H>) / (E_max - E_th)`: 1 at the thermal energy, 0 at the top of the spectrum.
pub fn energy_ratio(energy: f64, reference: &ThermalReference) -> Result<f64> {
    let e_max = reference.spectrum().max();
    let gap = e_max - reference.thermal_energy;
    if gap.abs() <= 1e-14 * (1.0 + e_max.abs()) {
        return Err(Error::Undefined("thermal energy equals the top eigenvalue".into()));
    }
    Ok((e_max - energy) / gap)
}

fn check_dims(a: &CMat, b: &CMat) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    Ok(())
}

/// Maximally mixed state on `d` levels.
pub fn maximally_mixed(d: usize) -> CMat {
    Mat::from_fn(d, d, |i, j| if i == j { linalg::cr(1.0 / d as f64) } else { linalg::cr(0.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    RelEntropy,
    TraceDist,
    OneMinusFidelity,
    MutualInfo,
    HsDist,
    EnergyRatio,
    Renyi2,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::RelEntropy => "rel_entropy",
            MetricKind::TraceDist => "trace_dist",
            MetricKind::OneMinusFidelity => "one_minus_fidelity",
            MetricKind::MutualInfo => "mutual_info",
            MetricKind::HsDist => "hs_dist",
            MetricKind::EnergyRatio => "energy_ratio",
            MetricKind::Renyi2 => "renyi2",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "rel_entropy" => MetricKind::RelEntropy,
            "trace_dist" => MetricKind::TraceDist,
            "one_minus_fidelity" => MetricKind::OneMinusFidelity,
            "mutual_info" => MetricKind::MutualInfo,
            "hs_dist" => MetricKind::HsDist,
            "energy_ratio" => MetricKind::EnergyRatio,
            "renyi2" => MetricKind::Renyi2,
            _ => return None,
        })
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value of one metric at one time.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MetricSample {
    pub time: f64,
    pub subset: String,
    pub metric: MetricKind,
    pub value: f64,
    pub protocol: String,
    pub seed: u64,
}

/// Header of the shared metrics CSV.
pub const METRIC_CSV_HEADER: &str = "time,subset,metric,value,protocol,seed";

impl MetricSample {
    pub fn csv_row(&self) -> String {
        format!(
            "{:.10e},{},{},{:.15e},{},{}",
            self.time, self.subset, self.metric, self.value, self.protocol, self.seed
        )
    }
}

/// The three distances between a reduced state and its thermal target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distances {
    pub rel_entropy: f64,
    pub trace_dist: f64,
    pub one_minus_fidelity: f64,
}

pub fn distances(rho: &CMat, thermal: &CMat) -> Result<Distances> {
    Ok(Distances {
        rel_entropy: relative_entropy(rho, thermal)?,
        trace_dist: trace_distance(rho, thermal)?,
        one_minus_fidelity: 1.0 - fidelity(rho, thermal)?,
    })
}

/// Value of a single-subset metric of `rho` against `thermal`.
pub fn subset_metric(metric: MetricKind, rho: &CMat, thermal: &CMat) -> Result<f64> {
    match metric {
        MetricKind::TraceDist => trace_distance(rho, thermal),
        MetricKind::RelEntropy => relative_entropy(rho, thermal),
        MetricKind::OneMinusFidelity => Ok(1.0 - fidelity(rho, thermal)?),
        MetricKind::HsDist => Ok(hs_distance_to_infinite_temperature(rho).hs_distance),
        MetricKind::Renyi2 => Ok(hs_distance_to_infinite_temperature(rho).renyi2),
        other => Err(Error::InvalidArgument(format!("{other} is not a single-subset distance"))),
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::hilbert::{LatticeSpec, SectorBasis};
    use crate::linalg::{cr, max_abs_diff};
    use crate::state::{Ensemble, StateVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn projector(d: usize, k: usize) -> CMat {
        Mat::from_fn(d, d, |i, j| if i == k && j == k { cr(1.0) } else { cr(0.0) })
    }

    fn random_density(d: usize, rank: usize, rng: &mut ChaCha8Rng) -> CMat {
        let g = Mat::from_fn(d, rank, |_, _| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let m = &g * g.adjoint();
        let t = linalg::trace(m.as_ref()).re;
        linalg::scale(m.as_ref(), cr(1.0 / t))
    }

    fn random_pure(d: usize, rng: &mut ChaCha8Rng) -> Vec<c64> {
        let mut v: Vec<c64> = (0..d).map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= n);
        v
    }

    #[test]
    fn bell_state_reductions() {
        let basis = Arc::new(SectorBasis::full(2).unwrap());
        let s = 0.5f64.sqrt();
        let bell = StateVector::new(basis, vec![cr(0.0), cr(s), cr(s), cr(0.0)]).unwrap();
        let state = QuantumState::Pure(bell);
        let a = SiteSubset::new(vec![0], SubsetRole::Noisy, 2).unwrap();
        let b = SiteSubset::new(vec![1], SubsetRole::Test, 2).unwrap();
        let r = partial_trace(&state, &a).unwrap();
        assert!(max_abs_diff(r.matrix.as_ref(), maximally_mixed(2).as_ref()) < 1e-15);
        let mi = mutual_information(&state, &a, &b).unwrap();
        assert!((mi - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn product_state_reduces_to_projector() {
        let basis = Arc::new(SectorBasis::sector(LatticeSpec::new(8, 2).unwrap()).unwrap());
        let psi = StateVector::product(basis, 0b0100_0001).unwrap();
        let state = QuantumState::Pure(psi);
        let keep = SiteSubset::new(vec![6, 0, 3], SubsetRole::Test, 8).unwrap();
        let r = partial_trace(&state, &keep).unwrap();
        // site 6 -> bit 0, site 0 -> bit 1, site 3 -> bit 2
        assert!(max_abs_diff(r.matrix.as_ref(), projector(8, 0b011).as_ref()) < 1e-15);
        let n = SiteSubset::new(vec![1, 2], SubsetRole::Noisy, 8).unwrap();
        assert!(mutual_information(&state, &n, &keep).unwrap().abs() < 1e-12);
    }

    #[test]
    fn partial_trace_matches_reshape_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let psi = random_pure(16, &mut rng);
        let basis = Arc::new(SectorBasis::full(4).unwrap());
        let state = QuantumState::Pure(StateVector::new(basis, psi.clone()).unwrap());
        let keep = SiteSubset::new(vec![1, 3], SubsetRole::Test, 4).unwrap();
        let r = partial_trace(&state, &keep).unwrap();
        // tensor oracle: psi[s3 s2 s1 s0], keep (s1, s3) with s1 as the low local bit
        let mut oracle = Mat::<c64>::zeros(4, 4);
        for a1 in 0..2 {
            for a3 in 0..2 {
                for b1 in 0..2 {
                    for b3 in 0..2 {
                        let mut acc = cr(0.0);
                        for s0 in 0..2 {
                            for s2 in 0..2 {
                                let ia = s0 | (a1 << 1) | (s2 << 2) | (a3 << 3);
                                let ib = s0 | (b1 << 1) | (s2 << 2) | (b3 << 3);
                                acc += psi[ia] * psi[ib].conj();
                            }
                        }
                        oracle[(a1 | (a3 << 1), b1 | (b3 << 1))] = acc;
                    }
                }
            }
        }
        assert!(max_abs_diff(r.matrix.as_ref(), oracle.as_ref()) < 1e-14);
    }

    #[test]
    fn partial_trace_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let basis = Arc::new(SectorBasis::full(4).unwrap());
        let v1 = random_pure(16, &mut rng);
        let v2 = random_pure(16, &mut rng);
        let alpha = 0.3;
        let keep = SiteSubset::new(vec![2, 0], SubsetRole::Test, 4).unwrap();
        let mix = QuantumState::Mixture(Ensemble::new(basis.clone(), vec![(alpha, v1.clone()), (1.0 - alpha, v2.clone())]).unwrap());
        let r1 = partial_trace(&QuantumState::Pure(StateVector::new(basis.clone(), v1).unwrap()), &keep).unwrap();
        let r2 = partial_trace(&QuantumState::Pure(StateVector::new(basis, v2).unwrap()), &keep).unwrap();
        let rm = partial_trace(&mix, &keep).unwrap();
        let lin = linalg::scale(r1.matrix.as_ref(), cr(alpha)) + linalg::scale(r2.matrix.as_ref(), cr(1.0 - alpha));
        assert!(max_abs_diff(rm.matrix.as_ref(), lin.as_ref()) < 1e-12);
        let dense = QuantumState::Dense(mix.to_density());
        let rd = partial_trace(&dense, &keep).unwrap();
        assert!(max_abs_diff(rd.matrix.as_ref(), lin.as_ref()) < 1e-12);
    }

    #[test]
    fn relative_entropy_cases() {
        let rho = projector(2, 0);
        let sigma = maximally_mixed(2);
        assert!((relative_entropy(&rho, &sigma).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(relative_entropy(&sigma, &sigma).unwrap().abs() < 1e-12);
        assert!(matches!(
            relative_entropy(&sigma, &rho),
            Err(Error::SupportViolation { .. })
        ));
    }

    #[test]
    fn relative_entropy_matches_eigenbasis_oracle() {
        // Oracle: diagonal commuting pair, where S(rho||sigma) = sum p ln(p/q)
        let p = [0.5, 0.3, 0.15, 0.05, 0.0, 0.0, 0.0, 0.0];
        let q = [0.2, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
        let rho = Mat::from_fn(8, 8, |i, j| if i == j { cr(p[i]) } else { cr(0.0) });
        let sigma = Mat::from_fn(8, 8, |i, j| if i == j { cr(q[i]) } else { cr(0.0) });
        let oracle: f64 = p.iter().zip(&q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum();
        // rotate both by the same random unitary; the value must not change
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Mat::from_fn(8, 8, |_, _| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let u = g.qr().compute_Q();
        let rot = |m: &CMat| &u * m * u.adjoint();
        let value = relative_entropy(&rot(&rho), &rot(&sigma)).unwrap();
        assert!((value - oracle).abs() < 1e-8, "{value} vs {oracle}");
    }

    #[test]
    fn trace_distance_cases() {
        assert_eq!(trace_distance(&projector(2, 0), &projector(2, 0)).unwrap(), 0.0);
        assert!((trace_distance(&projector(2, 0), &projector(2, 1)).unwrap() - 1.0).abs() < 1e-14);
        assert!((trace_distance(&projector(2, 0), &maximally_mixed(2)).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn fidelity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = random_density(4, 4, &mut rng);
        assert!((fidelity(&sigma, &sigma).unwrap() - 1.0).abs() < 1e-10);
        assert!(fidelity(&projector(3, 0), &projector(3, 2)).unwrap() < 1e-14);
        // pure-state shortcut F = <psi|sigma|psi>
        let psi = random_pure(4, &mut rng);
        let rho = Mat::from_fn(4, 4, |i, j| psi[i] * psi[j].conj());
        let mut shortcut = cr(0.0);
        for i in 0..4 {
            for j in 0..4 {
                shortcut += psi[i].conj() * sigma[(i, j)] * psi[j];
            }
        }
        assert!((fidelity(&rho, &sigma).unwrap() - shortcut.re).abs() < 1e-10);
    }

    #[test]
    fn fuchs_van_de_graaf_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..50 {
            let d = 2 + trial % 7;
            let rho = random_density(d, 1 + trial % d, &mut rng);
            let sigma = random_density(d, d, &mut rng);
            let t = trace_distance(&rho, &sigma).unwrap();
            let f = fidelity(&rho, &sigma).unwrap();
            assert!(1.0 - f.sqrt() <= t + 1e-10);
            assert!(t <= (1.0 - f).sqrt() + 1e-10);
        }
    }

    #[test]
    fn purity_report() {
        let r = hs_distance_to_infinite_temperature(&maximally_mixed(8));
        assert!(r.hs_distance.abs() < 1e-15);
        assert!((r.renyi2 - 8f64.ln()).abs() < 1e-12);
        let r = hs_distance_to_infinite_temperature(&projector(8, 3));
        assert!((r.hs_distance - 0.875).abs() < 1e-15);
        assert_eq!(r.renyi2, 0.0);
    }

    #[test]
    fn mutual_information_bounds_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let basis = Arc::new(SectorBasis::full(5).unwrap());
        for _ in 0..10 {
            let v = random_pure(32, &mut rng);
            let state = QuantumState::Pure(StateVector::new(basis.clone(), v).unwrap());
            let n = SiteSubset::new(vec![0, 1], SubsetRole::Noisy, 5).unwrap();
            let t = SiteSubset::new(vec![1, 3], SubsetRole::Test, 5).unwrap();
            let i = mutual_information(&state, &n, &t).unwrap();
            let sn = von_neumann_entropy(&partial_trace(&state, &n).unwrap().matrix).unwrap();
            let st = von_neumann_entropy(&partial_trace(&state, &t).unwrap().matrix).unwrap();
            assert!(i >= -1e-9);
            assert!(i <= 2.0 * sn.min(st) + 1e-9);
        }
    }
}
