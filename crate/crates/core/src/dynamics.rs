//! Exact time evolution in the eigenbasis and the interleaved shock protocol.
//!
//! A trajectory is sampled at `t_k = k t_max / n_steps`, `k = 0..=n_steps`.
//! A shock scheduled at step `s` fires at `t_s`, before that sample is
//! recorded, so sample `s` already shows the post-shock state.

use std::sync::Arc;

use faer::Mat;

use crate::error::{Error, Result};
use crate::hilbert::{SiteSubset, SubsetLayout};
use crate::linalg::{self, c64, CMat};
use crate::metrology::{self, MetricKind, MetricSample};
use crate::noise::{Channel, NoiseEvent};
use crate::spinmodel::Spectrum;
use crate::state::{DensityMatrix, Ensemble, QuantumState, StateVector};

pub const DEFAULT_STEPS: usize = 50;
pub const DEFAULT_SHOCK_STEP: usize = 2;
/// Exact mixtures larger than this are folded into a dense matrix.
pub const DEFAULT_ENSEMBLE_CAP: usize = 64;

fn phases(eigenvalues: &[f64], dt: f64) -> Vec<c64> {
    eigenvalues.iter().map(|&e| c64::cis(-e * dt)).collect()
}

fn check_basis(spectrum: &Spectrum, basis: &crate::hilbert::SectorBasis) -> Result<()> {
    spectrum.basis().check_same(basis.id())
}

/// `V e^{-i Lambda dt} V^T psi`.
pub fn evolve_pure(state: &StateVector, spectrum: &Spectrum, dt: f64) -> Result<StateVector> {
    check_basis(spectrum, state.basis())?;
    let mut c = spectrum.to_eigenbasis(state.amps());
    for (ck, ph) in c.iter_mut().zip(phases(&spectrum.eigenvalues, dt)) {
        *ck *= ph;
    }
    StateVector::new(state.basis().clone(), spectrum.from_eigenbasis(&c))
}

/// `U rho U^dag` with `U = e^{-iH dt}`.
pub fn evolve_density(rho: &DensityMatrix, spectrum: &Spectrum, dt: f64) -> Result<DensityMatrix> {
    check_basis(spectrum, rho.basis())?;
    let tilde = dense_to_eigen(spectrum, rho.matrix());
    let evolved = dense_from_eigen(spectrum, &tilde, dt);
    DensityMatrix::new(rho.basis().clone(), evolved)
}

fn dense_to_eigen(spectrum: &Spectrum, rho: &CMat) -> CMat {
    let v = spectrum.eigenvectors.as_ref();
    let left = linalg::real_cmul(v.transpose(), rho.as_ref());
    linalg::cmul_real(left.as_ref(), v)
}

fn dense_from_eigen(spectrum: &Spectrum, tilde: &CMat, dt: f64) -> CMat {
    let ph = phases(&spectrum.eigenvalues, dt);
    let d = ph.len();
    let rotated = Mat::from_fn(d, d, |k, l| tilde[(k, l)] * ph[k] * ph[l].conj());
    let v = spectrum.eigenvectors.as_ref();
    let left = linalg::real_cmul(v, rotated.as_ref());
    linalg::hermitize(linalg::cmul_real(left.as_ref(), v.transpose()).as_ref())
}

/// `V C` or `V^T C` for a batch of column vectors.
fn batch_transform(spectrum: &Spectrum, columns: &[&[c64]], transpose: bool) -> Vec<Vec<c64>> {
    let d = spectrum.dim();
    let m = Mat::from_fn(d, columns.len(), |i, j| columns[j][i]);
    let v = spectrum.eigenvectors.as_ref();
    let out = if transpose {
        linalg::real_cmul(v.transpose(), m.as_ref())
    } else {
        linalg::real_cmul(v, m.as_ref())
    };
    (0..columns.len()).map(|j| (0..d).map(|i| out[(i, j)]).collect()).collect()
}

/// Scheduled shock: `event` fires at sample step `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledShock {
    pub step: usize,
    pub event: NoiseEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Plain,
    Shock,
    Cascade,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Plain => "plain",
            Protocol::Shock => "shock",
            Protocol::Cascade => "cascade",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionSchedule {
    pub t_max: f64,
    pub n_steps: usize,
    /// Sorted by step.
    pub shocks: Vec<ScheduledShock>,
}

impl EvolutionSchedule {
    pub fn plain(t_max: f64, n_steps: usize) -> Result<Self> {
        Self::new(t_max, n_steps, Vec::new())
    }

    pub fn single(t_max: f64, n_steps: usize, step: usize, event: NoiseEvent) -> Result<Self> {
        Self::new(t_max, n_steps, vec![ScheduledShock { step, event }])
    }

    pub fn new(t_max: f64, n_steps: usize, mut shocks: Vec<ScheduledShock>) -> Result<Self> {
        shocks.sort_by_key(|s| s.step);
        let s = Self { t_max, n_steps, shocks };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_max must be positive, got {}", self.t_max)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
        }
        if let Some(s) = self.shocks.iter().find(|s| s.step >= self.n_steps) {
            return Err(Error::InvalidArgument(format!(
                "shock step {} outside [0, {})",
                s.step, self.n_steps
            )));
        }
        if self.shocks.windows(2).any(|w| w[0].step > w[1].step) {
            return Err(Error::InvalidArgument("shock steps must be sorted".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| k as f64 * self.dt()).collect()
    }

    pub fn protocol(&self) -> Protocol {
        match self.shocks.len() {
            0 => Protocol::Plain,
            1 => Protocol::Shock,
            _ => Protocol::Cascade,
        }
    }

    pub fn last_shock_step(&self) -> Option<usize> {
        self.shocks.last().map(|s| s.step)
    }

    /// `count` shocks evenly spread over `[first, n_steps)`; `make(e)` builds event `e`.
    pub fn cascade(
        t_max: f64,
        n_steps: usize,
        first: usize,
        count: usize,
        mut make: impl FnMut(usize) -> NoiseEvent,
    ) -> Result<Self> {
        if count == 0 {
            return Self::plain(t_max, n_steps);
        }
        if first >= n_steps || count > n_steps - first {
            return Err(Error::InvalidArgument(format!(
                "cannot place {count} shocks in steps [{first}, {n_steps})"
            )));
        }
        let span = n_steps - first;
        let shocks = (0..count)
            .map(|e| ScheduledShock {
                step: first + e * span / count,
                event: make(e),
            })
            .collect();
        Self::new(t_max, n_steps, shocks)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ShockRecord {
    pub step: usize,
    pub time: f64,
    pub kind: String,
    pub sites: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RepresentationSwitch {
    pub step: usize,
    pub from: String,
    pub to: String,
    pub reason: String,
}

/// What to record along a trajectory.
#[derive(Debug, Clone)]
pub struct ProtocolOptions {
    /// Reduced density matrices are stored for each of these subsets.
    pub subsets: Vec<SiteSubset>,
    pub keep_states: bool,
    pub ensemble_cap: usize,
}

impl ProtocolOptions {
    pub fn new(subsets: Vec<SiteSubset>) -> Self {
        Self {
            subsets,
            keep_states: false,
            ensemble_cap: DEFAULT_ENSEMBLE_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub protocol: Protocol,
    pub seed: u64,
    pub trajectory: u64,
    pub times: Vec<f64>,
    pub subsets: Vec<SiteSubset>,
    /// `reduced[s][k]`: subset `s` at time `k`.
    pub reduced: Vec<Vec<CMat>>,
    pub energies: Vec<f64>,
    pub states: Option<Vec<QuantumState>>,
    pub shocks: Vec<ShockRecord>,
    pub switches: Vec<RepresentationSwitch>,
}

impl TrajectoryRecord {
    pub fn subset_index(&self, subset: &SiteSubset) -> Option<usize> {
        self.subsets.iter().position(|s| s.sites() == subset.sites())
    }

    /// Distance of subset `s` to `thermal` at every sample.
    pub fn distance_series(&self, s: usize, thermal: &CMat, metric: MetricKind) -> Result<Vec<f64>> {
        self.reduced[s]
            .iter()
            .map(|rho| metrology::subset_metric(metric, rho, thermal))
            .collect()
    }

    /// `I(N:T)` over time from three registered subsets.
    pub fn mutual_information_series(&self, n: usize, t: usize, union: usize) -> Result<Vec<f64>> {
        (0..self.times.len())
            .map(|k| {
                metrology::mutual_information_from(&self.reduced[n][k], &self.reduced[t][k], &self.reduced[union][k])
            })
            .collect()
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
                protocol: self.protocol.name().to_string(),
                seed: self.seed,
            })
            .collect()
    }
}

/// Evolving state, held in the eigenbasis at reference time `origin`.
enum Evolving {
    Pure(Vec<c64>),
    Mixture(Vec<(f64, Vec<c64>)>),
    Dense(CMat),
}

impl Evolving {
    fn name(&self) -> &'static str {
        match self {
            Evolving::Pure(_) => "pure",
            Evolving::Mixture(_) => "mixture",
            Evolving::Dense(_) => "dense",
        }
    }
}

fn rotate(coeffs: &[c64], ph: &[c64]) -> Vec<c64> {
    coeffs.iter().zip(ph).map(|(c, p)| c * p).collect()
}

/// Run one trajectory of `schedule` from `psi0`.
pub fn run_protocol(
    psi0: &StateVector,
    spectrum: &Arc<Spectrum>,
    schedule: &EvolutionSchedule,
    options: &ProtocolOptions,
    seed: u64,
    trajectory: u64,
) -> Result<TrajectoryRecord> {
    schedule.validate()?;
    let basis = spectrum.basis().clone();
    check_basis(spectrum, psi0.basis())?;
    let norm = psi0.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!("initial state norm {norm}")));
    }
    let layouts: Vec<SubsetLayout> = options
        .subsets
        .iter()
        .map(|s| SubsetLayout::new(&basis, s.sites()))
        .collect();
    let times = schedule.times();
    let energies_of = &spectrum.eigenvalues;

    let mut state = Evolving::Pure(spectrum.to_eigenbasis(psi0.amps()));
    let mut origin = 0.0;
    let mut record = TrajectoryRecord {
        protocol: schedule.protocol(),
        seed,
        trajectory,
        times: times.clone(),
        subsets: options.subsets.clone(),
        reduced: vec![Vec::with_capacity(times.len()); options.subsets.len()],
        energies: Vec::with_capacity(times.len()),
        states: options.keep_states.then(Vec::new),
        shocks: Vec::new(),
        switches: Vec::new(),
    };
    let mut next_shock = 0;

    for (k, &t) in times.iter().enumerate() {
        let ph = phases(energies_of, t - origin);
        // computational-basis snapshot at t
        let mut snapshot = match &state {
            Evolving::Pure(c) => QuantumState::Pure(StateVector::new(
                basis.clone(),
                batch_transform(spectrum, &[&rotate(c, &ph)], false).pop().expect("one column"),
            )?),
            Evolving::Mixture(members) => {
                let rotated: Vec<Vec<c64>> = members.iter().map(|(_, c)| rotate(c, &ph)).collect();
                let refs: Vec<&[c64]> = rotated.iter().map(|v| v.as_slice()).collect();
                let amps = batch_transform(spectrum, &refs, false);
                QuantumState::Mixture(Ensemble::new(
                    basis.clone(),
                    members.iter().map(|(w, _)| *w).zip(amps).collect(),
                )?)
            }
            Evolving::Dense(tilde) => QuantumState::Dense(DensityMatrix::new(
                basis.clone(),
                dense_from_eigen(spectrum, tilde, t - origin),
            )?),
        };

        let mut shocked = false;
        while next_shock < schedule.shocks.len() && schedule.shocks[next_shock].step == k {
            let shock = &schedule.shocks[next_shock];
            next_shock += 1;
            let channel = shock.event.realize(seed, trajectory)?;
            let before = snapshot.representation();
            snapshot = apply_channel(snapshot, &channel, options.ensemble_cap)?;
            if snapshot.representation() != before {
                let reason = match &snapshot {
                    QuantumState::Dense(_) => format!("mixture exceeded {} members", options.ensemble_cap),
                    _ => format!("{} channel", shock.event.kind.name()),
                };
                log::info!(
                    "trajectory {trajectory}: {before} -> {} at step {k} ({reason})",
                    snapshot.representation()
                );
                record.switches.push(RepresentationSwitch {
                    step: k,
                    from: before.to_string(),
                    to: snapshot.representation().to_string(),
                    reason,
                });
            }
            record.shocks.push(ShockRecord {
                step: k,
                time: t,
                kind: shock.event.kind.name().to_string(),
                sites: shock.event.sites.sites().to_vec(),
                seed: shock.event.seed(seed, trajectory),
            });
            shocked = true;
        }
        if shocked {
            state = match &snapshot {
                QuantumState::Pure(s) => Evolving::Pure(spectrum.to_eigenbasis(s.amps())),
                QuantumState::Mixture(e) => {
                    let refs: Vec<&[c64]> = e.members().iter().map(|(_, v)| v.as_slice()).collect();
                    let coeffs = batch_transform(spectrum, &refs, true);
                    Evolving::Mixture(e.members().iter().map(|(w, _)| *w).zip(coeffs).collect())
                }
                QuantumState::Dense(r) => Evolving::Dense(dense_to_eigen(spectrum, r.matrix())),
            };
            origin = t;
        }

        for (s, layout) in layouts.iter().enumerate() {
            record.reduced[s].push(snapshot.reduce(layout));
        }
        record.energies.push(energy(&state, energies_of));
        if let Some(states) = record.states.as_mut() {
            states.push(snapshot);
        }
    }
    log::debug!(
        "trajectory {trajectory} ({}) finished in {} representation",
        record.protocol,
        state.name()
    );
    Ok(record)
}

fn energy(state: &Evolving, eigenvalues: &[f64]) -> f64 {
    let pure = |c: &[c64]| c.iter().zip(eigenvalues).map(|(c, e)| c.norm_sqr() * e).sum::<f64>();
    match state {
        Evolving::Pure(c) => pure(c),
        Evolving::Mixture(m) => m.iter().map(|(w, c)| w * pure(c)).sum(),
        Evolving::Dense(t) => (0..t.nrows()).map(|k| t[(k, k)].re * eigenvalues[k]).sum(),
    }
}

/// Apply a realized channel, keeping the cheapest exact representation.
///
/// Unitaries keep pure states pure. Kraus channels branch each pure member
/// into one member per operator; past `cap` members the state becomes dense.
pub fn apply_channel(state: QuantumState, channel: &Channel, cap: usize) -> Result<QuantumState> {
    let basis = state.basis().clone();
    let layout = SubsetLayout::new(&basis, channel.support());
    if basis.is_sector() {
        for op in channel.operators() {
            crate::hilbert::check_local_conservation(op.as_ref(), 1e-12)?;
        }
    }
    match (state, channel) {
        (QuantumState::Pure(mut s), Channel::Unitary { local, .. }) => {
            crate::hilbert::apply_local_operator(local.as_ref(), &layout, s.amps_mut());
            Ok(QuantumState::Pure(s))
        }
        (QuantumState::Mixture(mut e), Channel::Unitary { local, .. }) => {
            for (_, v) in e.members_mut().iter_mut() {
                crate::hilbert::apply_local_operator(local.as_ref(), &layout, v);
            }
            Ok(QuantumState::Mixture(e))
        }
        (QuantumState::Dense(r), ch) => dense_channel(r, ch, &layout),
        (pure_or_mix, Channel::Kraus(k)) => {
            let members: Vec<(f64, Vec<c64>)> = match pure_or_mix {
                QuantumState::Pure(s) => vec![(1.0, s.into_amps())],
                QuantumState::Mixture(e) => e.members().to_vec(),
                QuantumState::Dense(_) => unreachable!(),
            };
            let mut out = Vec::with_capacity(members.len() * k.kraus.len());
            for (w, v) in &members {
                for op in &k.kraus {
                    let mut branch = v.clone();
                    crate::hilbert::apply_local_operator(op.as_ref(), &layout, &mut branch);
                    let n2: f64 = branch.iter().map(|a| a.norm_sqr()).sum();
                    if w * n2 <= 1e-15 {
                        continue;
                    }
                    let n = n2.sqrt();
                    branch.iter_mut().for_each(|a| *a /= n);
                    out.push((w * n2, branch));
                }
            }
            let ensemble = Ensemble::new(basis, out)?;
            if ensemble.len() > cap {
                Ok(QuantumState::Dense(ensemble.to_density()))
            } else {
                Ok(QuantumState::Mixture(ensemble))
            }
        }
    }
}

fn dense_channel(rho: DensityMatrix, channel: &Channel, layout: &SubsetLayout) -> Result<QuantumState> {
    let basis = rho.basis().clone();
    let d = basis.dim();
    let mut out = Mat::<c64>::zeros(d, d);
    for op in channel.operators() {
        out += crate::noise::conjugate_dense(op, layout, rho.matrix());
    }
    Ok(QuantumState::Dense(DensityMatrix::new(basis, out)?))
}

/// Pure-state trajectory convenience: reductions of `psi(t)` without shocks.
pub fn plain_reductions(psi0: &StateVector, spectrum: &Arc<Spectrum>, t_max: f64, n_steps: usize, subset: &SiteSubset) -> Result<Vec<CMat>> {
    let schedule = EvolutionSchedule::plain(t_max, n_steps)?;
    let mut rec = run_protocol(psi0, spectrum, &schedule, &ProtocolOptions::new(vec![subset.clone()]), 0, 0)?;
    Ok(rec.reduced.pop().expect("one subset"))
}

/// Reduced state of a [`QuantumState`] on `subset` (re-exported for callers holding layouts).
pub fn reduce(state: &QuantumState, subset: &SiteSubset) -> CMat {
    state.reduce(&SubsetLayout::new(state.basis(), subset.sites()))
}
