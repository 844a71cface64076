//! Trotterized circuit simulator on the full `2^L` basis.
//!
//! Gates act in place on statevectors indexed by mask (bit `i` is qubit `i`).
//! Conventions: `RXX(theta) = exp(-i theta/2 XX)`, `RZZ(theta) = exp(-i theta/2 ZZ)`
//! with `Z = diag(-1, +1)` on local state (down, up). A first-order step applies
//! `RXX(-2 J dt)`, `RZZ(2 J_perp dt)` on each nearest bond `(i, i+1)` in order of
//! `i`, then `RXX(-2 J' dt)`, `RZZ(2 J'_perp dt)` on each next-nearest bond.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use faer::Mat;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{SectorBasis, SiteSubset, SubsetLayout};
use crate::linalg::{c64, CMat};
use crate::metrology::{self, MetricKind, MetricSample};
use crate::noise::{rng_from, stream_seed};
use crate::dynamics::evolve_pure;
use crate::spinmodel::{CouplingParams, Spectrum, XxTerm};
use crate::state::{reduce_pure, StateVector};

/// Largest rotation angle allowed by [`default_n_steps`].
pub const MAX_DEFAULT_ANGLE: f64 = 0.5;
/// Largest register for exact channel evolution.
pub const MAX_EXACT_QUBITS: usize = 10;
/// Trajectories per deterministic accumulation chunk.
const CHUNK: usize = 8;

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    #[serde(rename = "RXX")]
    Rxx,
    #[serde(rename = "RZZ")]
    Rzz,
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateKind::Rxx => "RXX",
            GateKind::Rzz => "RZZ",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateOp {
    pub kind: GateKind,
    pub qubits: (usize, usize),
    pub angle: f64,
}

impl GateOp {
    pub fn rxx(i: usize, j: usize, angle: f64) -> Self {
        Self { kind: GateKind::Rxx, qubits: (i, j), angle }
    }

    pub fn rzz(i: usize, j: usize, angle: f64) -> Self {
        Self { kind: GateKind::Rzz, qubits: (i, j), angle }
    }

    pub fn inverse(&self) -> Self {
        Self { angle: -self.angle, ..*self }
    }

    /// Dense 4x4 matrix on local index `b_i + 2 b_j`.
    pub fn matrix(&self) -> CMat {
        let (c, s) = ((self.angle / 2.0).cos(), (self.angle / 2.0).sin());
        match self.kind {
            GateKind::Rxx => Mat::from_fn(4, 4, |a, b| {
                if a == b {
                    c64::new(c, 0.0)
                } else if a ^ b == 3 {
                    c64::new(0.0, -s)
                } else {
                    ZERO
                }
            }),
            GateKind::Rzz => Mat::from_fn(4, 4, |a, b| {
                if a != b {
                    return ZERO;
                }
                let zz = if (a & 1) == (a >> 1) { 1.0 } else { -1.0 };
                c64::new(c, -zz * s)
            }),
        }
    }

    fn check(&self, length: usize) -> Result<()> {
        let (i, j) = self.qubits;
        if i == j || i >= length || j >= length {
            return Err(Error::InvalidArgument(format!(
                "gate {} on ({i}, {j}) outside a {length}-qubit register",
                self.kind
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrotterOrder {
    #[default]
    First,
    /// Symmetric splitting: the first-order sweep at half angles, then reversed.
    Second,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrotterCircuit {
    pub length: usize,
    /// Gates of one Trotter step.
    pub gates: Vec<GateOp>,
    pub n_steps: usize,
    pub t_max: f64,
    pub noise_p: f64,
    pub initial_pattern: u64,
    pub order: TrotterOrder,
}

impl TrotterCircuit {
    pub fn dt(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| k as f64 * self.dt()).collect()
    }

    pub fn with_noise(mut self, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Probability(p));
        }
        self.noise_p = p;
        Ok(self)
    }

    pub fn with_initial_pattern(mut self, mask: u64) -> Result<Self> {
        if self.length < 64 && mask >> self.length != 0 {
            return Err(Error::InvalidArgument(format!("pattern {mask:#b} wider than {} qubits", self.length)));
        }
        self.initial_pattern = mask;
        Ok(self)
    }

    pub fn max_angle(&self) -> f64 {
        self.gates.iter().map(|g| g.angle.abs()).fold(0.0, f64::max)
    }

    pub fn initial_state(&self) -> Vec<c64> {
        let mut amps = vec![ZERO; 1 << self.length];
        amps[self.initial_pattern as usize] = c64::new(1.0, 0.0);
        amps
    }

    /// Text listing, one gate per line: `step kind i j angle`.
    pub fn write_dump(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# qubits={} n_steps={} t_max={} dt={} noise_p={} order={:?} initial={:#b}",
            self.length, self.n_steps, self.t_max, self.dt(), self.noise_p, self.order, self.initial_pattern)?;
        writeln!(w, "step kind i j angle")?;
        for step in 0..self.n_steps {
            for g in &self.gates {
                writeln!(w, "{step} {} {} {} {:.12}", g.kind, g.qubits.0, g.qubits.1, g.angle)?;
            }
        }
        Ok(())
    }
}

fn first_order_sweep(params: &CouplingParams, length: usize, dt: f64) -> Vec<GateOp> {
    let mut gates = Vec::with_capacity(4 * length);
    let mut push_bond = |i: usize, j: usize, jxx: f64, jzz: f64| {
        if jxx != 0.0 {
            gates.push(GateOp::rxx(i, j, -2.0 * jxx * dt));
        }
        if jzz != 0.0 {
            gates.push(GateOp::rzz(i, j, 2.0 * jzz * dt));
        }
    };
    for i in 0..length.saturating_sub(1) {
        push_bond(i, i + 1, params.j, params.j_perp);
    }
    for i in 0..length.saturating_sub(2) {
        push_bond(i, i + 2, params.j_prime, params.j_prime_perp);
    }
    gates
}

/// First-order Trotter circuit for `exp(-i H t_max)` on `length` qubits.
pub fn trotterize(params: &CouplingParams, length: usize, t_max: f64, n_steps: usize) -> Result<TrotterCircuit> {
    trotterize_with_order(params, length, t_max, n_steps, TrotterOrder::First)
}

pub fn trotterize_with_order(
    params: &CouplingParams,
    length: usize,
    t_max: f64,
    n_steps: usize,
    order: TrotterOrder,
) -> Result<TrotterCircuit> {
    params.validate()?;
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    if !(2..=30).contains(&length) {
        return Err(Error::InvalidArgument(format!("register of {length} qubits not supported")));
    }
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::InvalidArgument(format!("t_max must be positive, got {t_max}")));
    }
    let dt = t_max / n_steps as f64;
    let gates = match order {
        TrotterOrder::First => first_order_sweep(params, length, dt),
        TrotterOrder::Second => {
            let half = first_order_sweep(params, length, dt / 2.0);
            half.iter().chain(half.iter().rev()).copied().collect()
        }
    };
    Ok(TrotterCircuit {
        length,
        gates,
        n_steps,
        t_max,
        noise_p: 0.0,
        initial_pattern: 0,
        order,
    })
}

/// Smallest step count keeping every first-order angle at or below [`MAX_DEFAULT_ANGLE`].
pub fn default_n_steps(params: &CouplingParams, t_max: f64) -> usize {
    let c = [params.j, params.j_perp, params.j_prime, params.j_prime_perp]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    ((2.0 * c * t_max / MAX_DEFAULT_ANGLE).ceil() as usize).max(1)
}

/// Smallest `n0 * 2^k` (`n0` from [`default_n_steps`]) whose noiseless final state is
/// within infidelity `tol` of exact evolution from `mask`. Exact reference on the full
/// basis, so registers up to [`MAX_EXACT_QUBITS`].
pub fn calibrated_n_steps(
    params: &CouplingParams,
    length: usize,
    mask: u64,
    t_max: f64,
    order: TrotterOrder,
    tol: f64,
) -> Result<usize> {
    if length > MAX_EXACT_QUBITS {
        return Err(Error::DimensionCap { dim: 1 << length, cap: 1 << MAX_EXACT_QUBITS });
    }
    let literal = params.with_xx_term(XxTerm::Literal);
    let basis = Arc::new(SectorBasis::full(length)?);
    let spectrum = Spectrum::compute(&literal, basis.clone())?;
    let exact = evolve_pure(&StateVector::product(basis, mask)?, &spectrum, t_max)?.into_amps();
    let mut n = default_n_steps(params, t_max);
    for _ in 0..24 {
        let c = trotterize_with_order(params, length, t_max, n, order)?.with_initial_pattern(mask)?;
        if pure_state_distance(&final_state(&c), &exact).powi(2) <= tol {
            return Ok(n);
        }
        n *= 2;
    }
    Err(Error::Undefined(format!("no step count below {n} reaches infidelity {tol}")))
}

/// Applies `gate` in place to a full-register statevector.
pub fn apply_gate(amps: &mut [c64], length: usize, gate: &GateOp) -> Result<()> {
    gate.check(length)?;
    if amps.len() != 1 << length {
        return Err(Error::DimensionMismatch { expected: 1 << length, found: amps.len() });
    }
    apply_gate_unchecked(amps, gate);
    Ok(())
}

fn apply_gate_unchecked(amps: &mut [c64], gate: &GateOp) {
    let (i, j) = gate.qubits;
    let (bi, bj) = (1usize << i, 1usize << j);
    let (c, s) = ((gate.angle / 2.0).cos(), (gate.angle / 2.0).sin());
    match gate.kind {
        GateKind::Rxx => {
            let flip = bi | bj;
            let lo = bi.min(bj);
            let ms = -c64::new(0.0, s);
            // visit each orbit {x, x ^ flip} once: the one with the lower bit clear
            for x in 0..amps.len() {
                if x & lo != 0 {
                    continue;
                }
                let y = x ^ flip;
                let (a, b) = (amps[x], amps[y]);
                amps[x] = a * c + b * ms;
                amps[y] = b * c + a * ms;
            }
        }
        GateKind::Rzz => {
            let same = c64::new(c, -s);
            let diff = c64::new(c, s);
            for (x, a) in amps.iter_mut().enumerate() {
                *a *= if ((x & bi) == 0) == ((x & bj) == 0) { same } else { diff };
            }
        }
    }
}

fn apply_zz(amps: &mut [c64], (i, j): (usize, usize)) {
    let (bi, bj) = (1usize << i, 1usize << j);
    for (x, a) in amps.iter_mut().enumerate() {
        if ((x & bi) == 0) != ((x & bj) == 0) {
            *a = -*a;
        }
    }
}

/// Noiseless Trotter evolution; returns the state after every step (index 0 = initial).
pub fn run_noiseless(circuit: &TrotterCircuit) -> Vec<Vec<c64>> {
    let mut psi = circuit.initial_state();
    let mut out = Vec::with_capacity(circuit.n_steps + 1);
    out.push(psi.clone());
    for _ in 0..circuit.n_steps {
        for g in &circuit.gates {
            apply_gate_unchecked(&mut psi, g);
        }
        out.push(psi.clone());
    }
    out
}

/// Final state of the noiseless circuit.
pub fn final_state(circuit: &TrotterCircuit) -> Vec<c64> {
    let mut psi = circuit.initial_state();
    for _ in 0..circuit.n_steps {
        for g in &circuit.gates {
            apply_gate_unchecked(&mut psi, g);
        }
    }
    psi
}

/// Averaged subset reductions after every Trotter step.
#[derive(Debug, Clone)]
pub struct CircuitRun {
    pub times: Vec<f64>,
    pub subsets: Vec<SiteSubset>,
    /// `reduced[s][k]`: subset `s` after step `k`.
    pub reduced: Vec<Vec<CMat>>,
    pub n_traj: usize,
    pub seed: u64,
    pub noise_p: f64,
    /// Largest per-trajectory norm deviation seen.
    pub max_norm_error: f64,
    /// Mean number of noise flips per trajectory.
    pub mean_flips: f64,
}

impl CircuitRun {
    pub fn protocol(&self) -> &'static str {
        if self.noise_p > 0.0 {
            "circuit_noisy"
        } else {
            "circuit_plain"
        }
    }

    pub fn distance_series(&self, s: usize, thermal: &CMat, metric: MetricKind) -> Result<Vec<f64>> {
        self.reduced[s].iter().map(|rho| metrology::subset_metric(metric, rho, thermal)).collect()
    }

    pub fn samples(&self, subset_tag: &str, metric: MetricKind, values: &[f64]) -> Vec<MetricSample> {
        self.times
            .iter()
            .zip(values)
            .map(|(&time, &value)| MetricSample {
                time,
                subset: subset_tag.to_string(),
                metric,
                value,
                protocol: self.protocol().to_string(),
                seed: self.seed,
            })
            .collect()
    }
}

struct Accumulator {
    reduced: Vec<Vec<CMat>>,
    max_norm_error: f64,
    flips: u64,
}

impl Accumulator {
    fn new(n_subsets: usize, n_samples: usize, dims: &[usize]) -> Self {
        Self {
            reduced: (0..n_subsets).map(|s| vec![Mat::zeros(dims[s], dims[s]); n_samples]).collect(),
            max_norm_error: 0.0,
            flips: 0,
        }
    }

    fn merge(&mut self, other: Accumulator) {
        for (mine, theirs) in self.reduced.iter_mut().zip(other.reduced) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
        self.max_norm_error = self.max_norm_error.max(other.max_norm_error);
        self.flips += other.flips;
    }
}

fn run_trajectory(circuit: &TrotterCircuit, layouts: &[SubsetLayout], seed: u64, traj: u64, acc: &mut Accumulator) {
    let mut rng = rng_from(stream_seed(seed, traj, 0));
    let mut psi = circuit.initial_state();
    let record = |psi: &[c64], k: usize, acc: &mut Accumulator| {
        for (s, layout) in layouts.iter().enumerate() {
            acc.reduced[s][k] += reduce_pure(psi, layout);
        }
    };
    record(&psi, 0, acc);
    for k in 1..=circuit.n_steps {
        for g in &circuit.gates {
            apply_gate_unchecked(&mut psi, g);
            if circuit.noise_p > 0.0 && rng.random::<f64>() < circuit.noise_p {
                apply_zz(&mut psi, g.qubits);
                acc.flips += 1;
            }
        }
        let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        acc.max_norm_error = acc.max_norm_error.max((norm - 1.0).abs());
        record(&psi, k, acc);
    }
}

/// Trajectory-averaged reductions. After each gate, with probability `noise_p`,
/// `Z (x) Z` hits the gate's pair. Trajectory `r` draws from `stream_seed(seed, r, 0)`;
/// trajectories are summed in fixed chunks in index order, so the result does not
/// depend on the thread count.
pub fn run_noisy_trajectories(circuit: &TrotterCircuit, subsets: &[SiteSubset], n_traj: usize, seed: u64) -> Result<CircuitRun> {
    if n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
    }
    let basis = SectorBasis::full(circuit.length)?;
    for s in subsets {
        if s.sites().iter().any(|&q| q >= circuit.length) {
            return Err(Error::InvalidSubset(format!("{:?} outside {} qubits", s.sites(), circuit.length)));
        }
    }
    let layouts: Vec<SubsetLayout> = subsets.iter().map(|s| SubsetLayout::new(&basis, s.sites())).collect();
    let dims: Vec<usize> = layouts.iter().map(|l| l.local_dim()).collect();
    let n_samples = circuit.n_steps + 1;
    // noiseless trajectories are identical
    let effective = if circuit.noise_p == 0.0 { 1 } else { n_traj };
    let chunks: Vec<Accumulator> = (0..effective.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::new(subsets.len(), n_samples, &dims);
            for r in c * CHUNK..((c + 1) * CHUNK).min(effective) {
                run_trajectory(circuit, &layouts, seed, r as u64, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = Accumulator::new(subsets.len(), n_samples, &dims);
    for c in chunks {
        total.merge(c);
    }
    let scale = c64::new(1.0 / effective as f64, 0.0);
    for series in &mut total.reduced {
        for m in series.iter_mut() {
            *m = &*m * faer::Scale(scale);
        }
    }
    Ok(CircuitRun {
        times: circuit.times(),
        subsets: subsets.to_vec(),
        reduced: total.reduced,
        n_traj,
        seed,
        noise_p: circuit.noise_p,
        max_norm_error: total.max_norm_error,
        mean_flips: total.flips as f64 / effective as f64,
    })
}

/// Exact density-matrix evolution of the per-gate channel
/// `rho -> (1-p) U rho U^dag + p (ZZ) U rho U^dag (ZZ)`; registers up to [`MAX_EXACT_QUBITS`].
pub fn run_exact_channel(circuit: &TrotterCircuit, subsets: &[SiteSubset]) -> Result<CircuitRun> {
    if circuit.length > MAX_EXACT_QUBITS {
        return Err(Error::DimensionCap { dim: 1 << circuit.length, cap: 1 << MAX_EXACT_QUBITS });
    }
    let basis = SectorBasis::full(circuit.length)?;
    let layouts: Vec<SubsetLayout> = subsets.iter().map(|s| SubsetLayout::new(&basis, s.sites())).collect();
    let d = 1usize << circuit.length;
    // column-major, column j contiguous
    let mut rho = vec![ZERO; d * d];
    let p0 = circuit.initial_pattern as usize;
    rho[p0 * d + p0] = c64::new(1.0, 0.0);
    let mut reduced: Vec<Vec<CMat>> = vec![Vec::with_capacity(circuit.n_steps + 1); subsets.len()];
    let record = |rho: &[c64], reduced: &mut Vec<Vec<CMat>>| {
        let m = Mat::from_fn(d, d, |i, j| rho[j * d + i]);
        for (s, layout) in layouts.iter().enumerate() {
            reduced[s].push(crate::state::reduce_dense(&m, layout));
        }
    };
    record(&rho, &mut reduced);
    let damp = 1.0 - 2.0 * circuit.noise_p;
    for _ in 0..circuit.n_steps {
        for g in &circuit.gates {
            // U rho, then (U (U rho)^dag)^dag = U rho U^dag
            rho.par_chunks_mut(d).for_each(|col| apply_gate_unchecked(col, g));
            conjugate_transpose(&mut rho, d);
            rho.par_chunks_mut(d).for_each(|col| apply_gate_unchecked(col, g));
            conjugate_transpose(&mut rho, d);
            if circuit.noise_p > 0.0 {
                let (bi, bj) = (1usize << g.qubits.0, 1usize << g.qubits.1);
                let sign = |x: usize| ((x & bi) == 0) == ((x & bj) == 0);
                for j in 0..d {
                    let sj = sign(j);
                    for i in 0..d {
                        if sign(i) != sj {
                            rho[j * d + i] *= damp;
                        }
                    }
                }
            }
        }
        record(&rho, &mut reduced);
    }
    Ok(CircuitRun {
        times: circuit.times(),
        subsets: subsets.to_vec(),
        reduced,
        n_traj: 0,
        seed: 0,
        noise_p: circuit.noise_p,
        max_norm_error: 0.0,
        mean_flips: circuit.noise_p * (circuit.gates.len() * circuit.n_steps) as f64,
    })
}

fn conjugate_transpose(m: &mut [c64], d: usize) {
    for j in 0..d {
        m[j * d + j] = m[j * d + j].conj();
        for i in (j + 1)..d {
            let a = m[j * d + i];
            m[j * d + i] = m[i * d + j].conj();
            m[i * d + j] = a.conj();
        }
    }
}

/// `sqrt(1 - |<a|b>|^2)`: trace distance between two pure states.
pub fn pure_state_distance(a: &[c64], b: &[c64]) -> f64 {
    let ov: c64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    (1.0 - ov.norm_sqr()).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::SubsetRole;
    use crate::linalg::{self, max_abs_diff};

    fn expm_i(h: &CMat, theta: f64) -> CMat {
        // exp(-i theta/2 h) for Hermitian h via eigendecomposition
        let (w, v) = linalg::hermitian_eigen(h.as_ref()).unwrap();
        let n = w.len();
        let d = Mat::from_fn(n, n, |i, j| if i == j { c64::new(0.0, -theta / 2.0 * w[i]).exp() } else { ZERO });
        &v * &d * v.adjoint()
    }

    fn xx() -> CMat {
        linalg::kron(linalg::pauli_x().as_ref(), linalg::pauli_x().as_ref())
    }

    fn zz() -> CMat {
        linalg::kron(linalg::pauli_z().as_ref(), linalg::pauli_z().as_ref())
    }

    fn random_state(n: usize, seed: u64) -> Vec<c64> {
        let mut rng = rng_from(seed);
        let mut v: Vec<c64> = (0..1 << n).map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        v
    }

    fn literal(params: CouplingParams) -> CouplingParams {
        params.with_xx_term(XxTerm::Literal)
    }

    #[test]
    fn gate_matrices_match_exponentials() {
        for theta in [0.3, -1.1, std::f64::consts::PI] {
            let rx = GateOp::rxx(0, 1, theta).matrix();
            let rz = GateOp::rzz(0, 1, theta).matrix();
            assert!(max_abs_diff(rx.as_ref(), expm_i(&xx(), theta).as_ref()) < 1e-12);
            assert!(max_abs_diff(rz.as_ref(), expm_i(&zz(), theta).as_ref()) < 1e-12);
        }
    }

    #[test]
    fn in_place_sweeps_match_dense_matrices() {
        let n = 4;
        for (i, j) in [(0, 1), (1, 3), (3, 0), (2, 1)] {
            for g in [GateOp::rxx(i, j, 0.7), GateOp::rzz(i, j, -0.4)] {
                let psi = random_state(n, 11 + i as u64 * 7 + j as u64);
                let mut out = psi.clone();
                apply_gate(&mut out, n, &g).unwrap();
                let m = g.matrix();
                let mut expected = vec![ZERO; psi.len()];
                for x in 0..psi.len() {
                    let a = ((x >> i) & 1) | (((x >> j) & 1) << 1);
                    for b in 0..4 {
                        let y = (x & !(1 << i) & !(1 << j)) | ((b & 1) << i) | (((b >> 1) & 1) << j);
                        expected[x] += m[(a, b)] * psi[y];
                    }
                }
                let err = out.iter().zip(&expected).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                assert!(err < 1e-13, "{g:?}: {err}");
            }
        }
    }

    #[test]
    fn rxx_pi_on_vacuum() {
        let mut psi = vec![c64::new(1.0, 0.0), ZERO, ZERO, ZERO];
        apply_gate(&mut psi, 2, &GateOp::rxx(0, 1, std::f64::consts::PI)).unwrap();
        assert!((psi[3] - c64::new(0.0, -1.0)).norm() < 1e-15);
        assert!(psi[0].norm() < 1e-15);
    }

    #[test]
    fn rzz_is_a_pure_phase_on_basis_states() {
        for x in 0..8 {
            let mut psi = vec![ZERO; 8];
            psi[x] = c64::new(1.0, 0.0);
            apply_gate(&mut psi, 3, &GateOp::rzz(0, 2, 0.9)).unwrap();
            assert!((psi[x].norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gate_then_inverse_is_identity() {
        let psi = random_state(5, 3);
        let mut out = psi.clone();
        for g in [GateOp::rxx(1, 4, 0.37), GateOp::rzz(0, 3, 2.1)] {
            apply_gate(&mut out, 5, &g).unwrap();
            apply_gate(&mut out, 5, &g.inverse()).unwrap();
        }
        let err = out.iter().zip(&psi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        let norm: f64 = out.iter().map(|a| a.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_qubits_are_rejected() {
        let mut psi = random_state(3, 1);
        assert!(apply_gate(&mut psi, 3, &GateOp::rxx(0, 3, 0.1)).is_err());
        assert!(apply_gate(&mut psi, 3, &GateOp::rzz(1, 1, 0.1)).is_err());
    }

    #[test]
    fn gate_counts() {
        let c = trotterize(&CouplingParams::default(), 12, 20.0, 10).unwrap();
        assert_eq!(c.gates.len(), 42);
        let c = trotterize(&CouplingParams::integrable(1.0, 1.0), 12, 20.0, 10).unwrap();
        assert_eq!(c.gates.len(), 22);
        let c = trotterize_with_order(&CouplingParams::default(), 6, 1.0, 3, TrotterOrder::Second).unwrap();
        assert_eq!(c.gates.len(), 2 * (4 * 6 - 6));
        assert!(trotterize(&CouplingParams::default(), 6, 1.0, 0).is_err());
    }

    #[test]
    fn angles_follow_couplings() {
        let p = CouplingParams::default();
        let c = trotterize(&p, 4, 2.0, 4).unwrap();
        let dt = 0.5;
        assert_eq!(c.gates[0], GateOp::rxx(0, 1, -2.0 * p.j * dt));
        assert_eq!(c.gates[1], GateOp::rzz(0, 1, 2.0 * p.j_perp * dt));
        assert_eq!(c.gates[6], GateOp::rxx(0, 2, -2.0 * p.j_prime * dt));
        assert!(trotterize(&p, 4, 2.0, default_n_steps(&p, 2.0)).unwrap().max_angle() <= MAX_DEFAULT_ANGLE + 1e-15);
    }

    fn exact_final(params: &CouplingParams, n: usize, mask: u64, t: f64) -> Vec<c64> {
        let basis = Arc::new(SectorBasis::full(n).unwrap());
        let sp = Spectrum::compute(&literal(*params), basis.clone()).unwrap();
        let psi = StateVector::product(basis, mask).unwrap();
        evolve_pure(&psi, &sp, t).unwrap().into_amps()
    }

    #[test]
    fn first_order_error_scales_inverse_linearly() {
        let params = CouplingParams::default();
        let (n, t) = (6, 1.0);
        let exact = exact_final(&params, n, 0b111, t);
        let steps = [16usize, 32, 64, 128, 256];
        let errs: Vec<f64> = steps
            .iter()
            .map(|&s| {
                let c = trotterize(&params, n, t, s).unwrap().with_initial_pattern(0b111).unwrap();
                pure_state_distance(&final_state(&c), &exact)
            })
            .collect();
        let x: Vec<f64> = steps.iter().map(|&s| (s as f64).ln()).collect();
        let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let (slope, _) = crate::analysis::linear_fit(&x, &y);
        assert!((slope + 1.0).abs() < 0.15, "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn second_order_converges_faster() {
        let params = CouplingParams::default();
        let exact = exact_final(&params, 5, 0b11, 1.0);
        let err = |order, s| {
            let c = trotterize_with_order(&params, 5, 1.0, s, order).unwrap().with_initial_pattern(0b11).unwrap();
            pure_state_distance(&final_state(&c), &exact)
        };
        let (e1, e2) = (err(TrotterOrder::Second, 20), err(TrotterOrder::Second, 40));
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
        assert!(e2 < err(TrotterOrder::First, 40));
    }

    #[test]
    fn calibrated_steps_reach_target_infidelity() {
        let params = CouplingParams::default();
        for (n, t) in [(6, 2.0), (10, 1.0)] {
            let steps = calibrated_n_steps(&params, n, 0b111, t, TrotterOrder::Second, 1e-4).unwrap();
            let c = trotterize_with_order(&params, n, t, steps, TrotterOrder::Second)
                .unwrap()
                .with_initial_pattern(0b111)
                .unwrap();
            let d = pure_state_distance(&final_state(&c), &exact_final(&params, n, 0b111, t));
            assert!(d * d <= 1e-4);
            assert!(c.max_angle() <= MAX_DEFAULT_ANGLE);
        }
    }

    #[test]
    fn noiseless_trajectories_are_identical_to_plain_trotter() {
        let c = trotterize(&CouplingParams::default(), 6, 2.0, 8).unwrap().with_initial_pattern(0b111).unwrap();
        let t = SiteSubset::tail(3, SubsetRole::Test, 6).unwrap();
        let run = run_noisy_trajectories(&c, std::slice::from_ref(&t), 17, 5).unwrap();
        let basis = SectorBasis::full(6).unwrap();
        let layout = SubsetLayout::new(&basis, t.sites());
        for (k, psi) in run_noiseless(&c).iter().enumerate() {
            assert!(max_abs_diff(run.reduced[0][k].as_ref(), reduce_pure(psi, &layout).as_ref()) < 1e-14);
        }
        assert_eq!(run.mean_flips, 0.0);
    }

    #[test]
    fn trajectory_average_matches_exact_channel() {
        let c = trotterize(&CouplingParams::default(), 6, 3.0, 12)
            .unwrap()
            .with_initial_pattern(0b111)
            .unwrap()
            .with_noise(0.05)
            .unwrap();
        let t = SiteSubset::tail(3, SubsetRole::Test, 6).unwrap();
        let n_traj = 400;
        let avg = run_noisy_trajectories(&c, std::slice::from_ref(&t), n_traj, 21).unwrap();
        let exact = run_exact_channel(&c, std::slice::from_ref(&t)).unwrap();
        let bound = 3.0 / (n_traj as f64).sqrt();
        for k in 0..avg.times.len() {
            let tv = metrology::trace_distance(&avg.reduced[0][k], &exact.reduced[0][k]).unwrap();
            assert!(tv <= bound, "step {k}: {tv} > {bound}");
            assert!((linalg::trace(avg.reduced[0][k].as_ref()).re - 1.0).abs() < 1e-12);
        }
        assert!(avg.max_norm_error < 1e-10);
        assert!(avg.mean_flips > 0.0);
    }

    #[test]
    fn exact_channel_without_noise_is_unitary_evolution() {
        let c = trotterize(&CouplingParams::default(), 5, 1.0, 4).unwrap().with_initial_pattern(0b101).unwrap();
        let t = SiteSubset::new(vec![1, 3], SubsetRole::Test, 5).unwrap();
        let exact = run_exact_channel(&c, std::slice::from_ref(&t)).unwrap();
        let plain = run_noisy_trajectories(&c, std::slice::from_ref(&t), 1, 0).unwrap();
        for k in 0..exact.times.len() {
            assert!(max_abs_diff(exact.reduced[0][k].as_ref(), plain.reduced[0][k].as_ref()) < 1e-12);
        }
    }

    #[test]
    fn trajectories_are_deterministic_and_thread_independent() {
        let c = trotterize(&CouplingParams::default(), 5, 2.0, 6)
            .unwrap()
            .with_initial_pattern(0b111)
            .unwrap()
            .with_noise(0.1)
            .unwrap();
        let t = SiteSubset::tail(2, SubsetRole::Test, 5).unwrap();
        let a = run_noisy_trajectories(&c, std::slice::from_ref(&t), 30, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_noisy_trajectories(&c, std::slice::from_ref(&t), 30, 9).unwrap());
        for k in 0..a.times.len() {
            assert_eq!(max_abs_diff(a.reduced[0][k].as_ref(), b.reduced[0][k].as_ref()), 0.0);
        }
    }

    #[test]
    fn dump_lists_every_gate() {
        let c = trotterize(&CouplingParams::default(), 4, 1.0, 2).unwrap();
        let mut buf = Vec::new();
        c.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2 + 2 * c.gates.len());
        assert!(text.contains("1 RZZ 1 3 "));
    }
}
