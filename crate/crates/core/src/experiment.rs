//! End-to-end pipelines: thermal setup, plain vs noisy comparisons, mutual
//! information runs, Trotter-circuit runs and the scaling sweeps.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, default_window, fit_decay, kappa_ratio, recurrence_score, DecayFit, KappaRatio, RecurrenceScore, SweepAxis,
    SweepResult, SweepSample,
};
use crate::circuit::{self, CircuitRun, TrotterCircuit, TrotterOrder};
use crate::dynamics::{run_protocol, EvolutionSchedule, ProtocolOptions, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::hilbert::{LatticeSpec, SectorBasis, SiteSubset, SubsetRole};
use crate::linalg::CMat;
use crate::metrology::MetricKind;
use crate::noise::{rng_from, stream_seed, NoiseEvent, PauliChannelSpec, PauliString};
use crate::spinmodel::{solve_beta_star, CouplingParams, Spectrum, ThermalMode, ThermalReference, XxTerm};
use crate::state::StateVector;

/// Stream used to draw random noisy sites for a seed.
pub const SITE_STREAM: u64 = 999;

/// `|1...1 0...0>` with the first `count` sites up.
pub fn leading_ones(count: usize) -> u64 {
    if count >= 64 {
        u64::MAX
    } else {
        (1u64 << count) - 1
    }
}

/// Lattice, spectrum, initial product state and its thermal reference.
pub struct SectorSetup {
    pub params: CouplingParams,
    pub spectrum: Arc<Spectrum>,
    pub psi0: StateVector,
    pub pattern: u64,
    pub reference: ThermalReference,
    pub test: SiteSubset,
    pub thermal_test: CMat,
    pub mode: ThermalMode,
}

impl SectorSetup {
    pub fn new(
        params: &CouplingParams,
        length: usize,
        up_count: usize,
        pattern: u64,
        test: SiteSubset,
        mode: ThermalMode,
    ) -> Result<Self> {
        let basis = Arc::new(SectorBasis::sector(LatticeSpec::new(length, up_count)?)?);
        let spectrum = Arc::new(Spectrum::compute(params, basis.clone())?);
        Self::from_spectrum(params, spectrum, pattern, test, mode)
    }

    pub fn from_spectrum(
        params: &CouplingParams,
        spectrum: Arc<Spectrum>,
        pattern: u64,
        test: SiteSubset,
        mode: ThermalMode,
    ) -> Result<Self> {
        let psi0 = StateVector::product(spectrum.basis().clone(), pattern)?;
        let e0 = spectrum.energy_of(psi0.amps());
        let reference = solve_beta_star(spectrum.clone(), e0)?;
        let thermal_test = reference.reduced(&test, params, mode);
        Ok(Self {
            params: *params,
            spectrum,
            psi0,
            pattern,
            reference,
            test,
            thermal_test,
            mode,
        })
    }

    pub fn length(&self) -> usize {
        self.spectrum.basis().length()
    }

    pub fn thermal(&self, subset: &SiteSubset) -> CMat {
        self.reference.reduced(subset, &self.params, self.mode)
    }

    /// Plain evolution recording `test` first, then `extra`.
    pub fn plain(&self, t_max: f64, n_steps: usize, extra: &[SiteSubset]) -> Result<TrajectoryRecord> {
        let schedule = EvolutionSchedule::plain(t_max, n_steps)?;
        run_protocol(&self.psi0, &self.spectrum, &schedule, &self.subsets(extra), 0, 0)
    }

    fn subsets(&self, extra: &[SiteSubset]) -> ProtocolOptions {
        let mut all = vec![self.test.clone()];
        all.extend(extra.iter().cloned());
        ProtocolOptions::new(all)
    }
}

/// Channel applied at every shock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShockNoise {
    Haar,
    PhaseFlip { p: f64 },
    /// One string per entry, letters aligned with the noisy sites.
    Pauli { strings: Vec<String>, probs: Vec<f64> },
}

impl ShockNoise {
    pub fn event(&self, sites: SiteSubset, stream: u64) -> Result<NoiseEvent> {
        Ok(match self {
            ShockNoise::Haar => NoiseEvent::haar(sites, stream),
            ShockNoise::PhaseFlip { p } => NoiseEvent::phase_flip(sites, *p, stream),
            ShockNoise::Pauli { strings, probs } => {
                if strings.len() != probs.len() {
                    return Err(Error::Config(format!(
                        "{} Pauli strings but {} probabilities",
                        strings.len(),
                        probs.len()
                    )));
                }
                let strings = strings
                    .iter()
                    .map(|s| PauliString::parse(s, sites.sites().to_vec()))
                    .collect::<Result<Vec<_>>>()?;
                let spec = PauliChannelSpec { strings, probs: probs.clone() };
                spec.validate()?;
                NoiseEvent::pauli(spec, sites, stream)
            }
        })
    }

    pub fn label(&self) -> String {
        match self {
            ShockNoise::Haar => "haar".into(),
            ShockNoise::PhaseFlip { p } => format!("phase_flip_p{p}"),
            ShockNoise::Pauli { .. } => "pauli".into(),
        }
    }
}

/// Where the noise acts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoisySites {
    Fixed { sites: Vec<usize> },
    /// `count` distinct sites drawn per seed from `stream_seed(seed, 0, SITE_STREAM)`.
    Random { count: usize },
}

impl NoisySites {
    pub fn resolve(&self, length: usize, seed: u64) -> Result<SiteSubset> {
        let sites = match self {
            NoisySites::Fixed { sites } => sites.clone(),
            NoisySites::Random { count } => {
                if *count == 0 || *count > length {
                    return Err(Error::InvalidSubset(format!("cannot draw {count} of {length} sites")));
                }
                let mut rng = rng_from(stream_seed(seed, 0, SITE_STREAM));
                let mut s = sample(&mut rng, length, *count).into_vec();
                s.sort_unstable();
                s
            }
        };
        SiteSubset::new(sites, SubsetRole::Noisy, length)
    }
}

/// `count` shocks from `first_step` on, evenly spread; `count = 1` is a single shock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShockPlan {
    pub first_step: usize,
    pub count: usize,
}

impl Default for ShockPlan {
    fn default() -> Self {
        Self {
            first_step: crate::dynamics::DEFAULT_SHOCK_STEP,
            count: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProtocol {
    pub noise: ShockNoise,
    pub sites: NoisySites,
    pub plan: ShockPlan,
}

impl NoiseProtocol {
    pub fn new(noise: ShockNoise, sites: NoisySites, plan: ShockPlan) -> Self {
        Self { noise, sites, plan }
    }

    /// Schedule and noisy subset for one seed. Event `e` draws from stream `e + 1`.
    pub fn schedule(&self, length: usize, t_max: f64, n_steps: usize, seed: u64) -> Result<(EvolutionSchedule, SiteSubset)> {
        let sites = self.sites.resolve(length, seed)?;
        let events = (0..self.plan.count)
            .map(|e| self.noise.event(sites.clone(), e as u64 + 1))
            .collect::<Result<Vec<_>>>()?;
        let mut events = events.into_iter();
        let schedule = EvolutionSchedule::cascade(t_max, n_steps, self.plan.first_step, self.plan.count, |_| {
            events.next().expect("one event per shock")
        })?;
        Ok((schedule, sites))
    }
}

/// Plain vs noisy evolution of the test subset for one seed.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub seed: u64,
    pub noisy_sites: Vec<usize>,
    pub metric: MetricKind,
    pub times: Vec<f64>,
    pub plain: Vec<f64>,
    pub noisy: Vec<f64>,
    pub plain_energy: Vec<f64>,
    pub noisy_energy: Vec<f64>,
    pub plain_fit: DecayFit,
    pub noisy_fit: DecayFit,
    pub ratio: KappaRatio,
    pub plain_recurrence: RecurrenceScore,
    pub noisy_recurrence: RecurrenceScore,
    pub shock_steps: Vec<usize>,
    #[serde(skip)]
    pub noisy_record: TrajectoryRecord,
}

/// Index of the first sample at or after `t_max / 5`.
pub fn late_start(times: &[f64]) -> usize {
    let t_max = times.last().copied().unwrap_or(0.0);
    times.iter().position(|&t| t >= t_max / 5.0 - 1e-12).unwrap_or(0)
}

/// Runs the noisy protocol for `seed` and compares it with `plain`, fitting
/// both over the noisy run's default window.
pub fn compare(
    setup: &SectorSetup,
    plain: &TrajectoryRecord,
    protocol: &NoiseProtocol,
    metric: MetricKind,
    seed: u64,
) -> Result<Comparison> {
    let n_steps = plain.times.len() - 1;
    let t_max = *plain.times.last().expect("nonempty plain record");
    let (schedule, sites) = protocol.schedule(setup.length(), t_max, n_steps, seed)?;
    let noisy_record = run_protocol(&setup.psi0, &setup.spectrum, &schedule, &setup.subsets(&[]), seed, 0)?;
    let plain_series = plain.distance_series(0, &setup.thermal_test, metric)?;
    let noisy_series = noisy_record.distance_series(0, &setup.thermal_test, metric)?;
    let times = plain.times.clone();
    let plain_start = times[(protocol.plan.first_step + 1).min(n_steps)];
    let (lo, hi) = default_window(&times, schedule.last_shock_step(), schedule.shocks.len(), plain_start);
    let noisy_fit = fit_decay(&times, &noisy_series, lo, hi, "noisy")?;
    let plain_fit = fit_decay(&times, &plain_series, lo, hi, "plain")?;
    let ratio = kappa_ratio(&noisy_fit, &plain_fit, analysis::DEFAULT_FLAT_KAPPA);
    let late = late_start(&times);
    Ok(Comparison {
        seed,
        noisy_sites: sites.sites().to_vec(),
        metric,
        plain_recurrence: recurrence_score(&plain_series[late..], analysis::DEFAULT_PROMINENCE),
        noisy_recurrence: recurrence_score(&noisy_series[late..], analysis::DEFAULT_PROMINENCE),
        times,
        plain: plain_series,
        noisy: noisy_series,
        plain_energy: plain.energies.clone(),
        noisy_energy: noisy_record.energies.clone(),
        plain_fit,
        noisy_fit,
        ratio,
        shock_steps: schedule.shocks.iter().map(|s| s.step).collect(),
        noisy_record,
    })
}

/// `I(N:T)` over time, plain or with `protocol` acting on `n`.
pub fn mutual_information_run(
    setup: &SectorSetup,
    n: &SiteSubset,
    t: &SiteSubset,
    t_max: f64,
    n_steps: usize,
    protocol: Option<(&ShockNoise, ShockPlan)>,
    seed: u64,
) -> Result<Vec<f64>> {
    let union = n.union(t, SubsetRole::Other);
    let options = ProtocolOptions::new(vec![n.clone(), t.clone(), union]);
    let schedule = match protocol {
        None => EvolutionSchedule::plain(t_max, n_steps)?,
        Some((noise, plan)) => {
            let p = NoiseProtocol::new(noise.clone(), NoisySites::Fixed { sites: n.sites().to_vec() }, plan);
            p.schedule(setup.length(), t_max, n_steps, seed)?.0
        }
    };
    let record = run_protocol(&setup.psi0, &setup.spectrum, &schedule, &options, seed, 0)?;
    record.mutual_information_series(0, 1, 2)
}

/// Full-register model with Literal `XX` terms and its thermal reference.
pub struct CircuitSetup {
    pub params: CouplingParams,
    pub length: usize,
    pub pattern: u64,
    pub reference: ThermalReference,
    pub test: SiteSubset,
    pub thermal_test: CMat,
}

impl CircuitSetup {
    pub fn new(params: &CouplingParams, length: usize, pattern: u64, test: SiteSubset) -> Result<Self> {
        let params = params.with_xx_term(XxTerm::Literal);
        let basis = Arc::new(SectorBasis::full(length)?);
        let spectrum = Arc::new(Spectrum::compute(&params, basis.clone())?);
        let psi0 = StateVector::product(basis, pattern)?;
        let reference = solve_beta_star(spectrum.clone(), spectrum.energy_of(psi0.amps()))?;
        let thermal_test = reference.reduced(&test, &params, ThermalMode::Exact);
        Ok(Self {
            params,
            length,
            pattern,
            reference,
            test,
            thermal_test,
        })
    }

    pub fn circuit(&self, t_max: f64, n_steps: Option<usize>, order: TrotterOrder) -> Result<TrotterCircuit> {
        let n = n_steps.unwrap_or_else(|| circuit::default_n_steps(&self.params, t_max));
        circuit::trotterize_with_order(&self.params, self.length, t_max, n, order)?.with_initial_pattern(self.pattern)
    }
}

/// Noiseless vs noisy circuit series for the test subset.
#[derive(Debug, Clone, Serialize)]
pub struct CircuitComparison {
    pub metric: MetricKind,
    pub times: Vec<f64>,
    pub noiseless: Vec<f64>,
    pub noisy: Vec<f64>,
    pub noiseless_recurrence: RecurrenceScore,
    pub noisy_recurrence: RecurrenceScore,
    pub noise_p: f64,
    pub n_traj: usize,
    pub n_steps: usize,
    pub gates_per_step: usize,
    pub mean_flips: f64,
    pub max_norm_error: f64,
    #[serde(skip)]
    pub noiseless_run: Option<CircuitRun>,
    #[serde(skip)]
    pub noisy_run: Option<CircuitRun>,
}

pub fn circuit_comparison(
    setup: &CircuitSetup,
    circuit: &TrotterCircuit,
    noise_p: f64,
    n_traj: usize,
    seed: u64,
    metric: MetricKind,
) -> Result<CircuitComparison> {
    let subsets = std::slice::from_ref(&setup.test);
    let clean = circuit::run_noisy_trajectories(&circuit.clone().with_noise(0.0)?, subsets, 1, seed)?;
    let noisy = circuit::run_noisy_trajectories(&circuit.clone().with_noise(noise_p)?, subsets, n_traj, seed)?;
    let a = clean.distance_series(0, &setup.thermal_test, metric)?;
    let b = noisy.distance_series(0, &setup.thermal_test, metric)?;
    let late = late_start(&clean.times);
    Ok(CircuitComparison {
        metric,
        times: clean.times.clone(),
        noiseless_recurrence: recurrence_score(&a[late..], analysis::DEFAULT_PROMINENCE),
        noisy_recurrence: recurrence_score(&b[late..], analysis::DEFAULT_PROMINENCE),
        noiseless: a,
        noisy: b,
        noise_p,
        n_traj,
        n_steps: circuit.n_steps,
        gates_per_step: circuit.gates.len(),
        mean_flips: noisy.mean_flips,
        max_norm_error: noisy.max_norm_error.max(clean.max_norm_error),
        noiseless_run: Some(clean),
        noisy_run: Some(noisy),
    })
}

type SetupKey = (usize, u64, u64, u64, u64);
type Shared = Arc<(SectorSetup, TrajectoryRecord)>;

/// Base experiment swept along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub params: CouplingParams,
    pub length: usize,
    pub up_count: usize,
    pub t_max: f64,
    pub n_steps: usize,
    pub test_tail: usize,
    pub metric: MetricKind,
    pub protocol: NoiseProtocol,
}

impl SweepSpec {
    fn at(&self, axis: SweepAxis, value: f64) -> Result<SweepSpec> {
        let mut s = self.clone();
        let as_count = || -> Result<usize> {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::InvalidArgument(format!("{} needs whole values, got {value}", axis.name())));
            }
            Ok(value as usize)
        };
        match axis {
            SweepAxis::Frequency => s.protocol.plan.count = as_count()?,
            SweepAxis::NNoisySites => s.protocol.sites = NoisySites::Random { count: as_count()? },
            SweepAxis::L => s.length = as_count()?,
            SweepAxis::JPerp => s.params.j_perp = value,
        }
        Ok(s)
    }

    fn setup_key(&self) -> SetupKey {
        let p = &self.params;
        (self.length, p.j.to_bits(), p.j_perp.to_bits(), p.j_prime.to_bits(), p.j_prime_perp.to_bits())
    }

    pub fn setup(&self) -> Result<SectorSetup> {
        let test = SiteSubset::tail(self.test_tail, SubsetRole::Test, self.length)?;
        SectorSetup::new(&self.params, self.length, self.up_count, leading_ones(self.up_count), test, ThermalMode::Exact)
    }
}

/// Runs `spec` over `grid` along `axis`. Spectra and plain runs are shared by
/// all points with the same lattice and couplings.
pub fn run_axis_sweep(spec: &SweepSpec, axis: SweepAxis, grid: &[f64], seeds: &[u64]) -> Result<SweepResult> {
    let specs = grid.iter().map(|&v| spec.at(axis, v)).collect::<Result<Vec<_>>>()?;
    let mut shared: HashMap<SetupKey, Shared> = HashMap::new();
    for s in &specs {
        if let std::collections::hash_map::Entry::Vacant(e) = shared.entry(s.setup_key()) {
            log::info!("sweep setup: L = {}, couplings {:?}", s.length, s.params);
            let setup = s.setup()?;
            let plain = setup.plain(s.t_max, s.n_steps, &[])?;
            e.insert(Arc::new((setup, plain)));
        }
    }
    let by_value: Vec<(f64, SweepSpec, Shared)> = grid
        .iter()
        .zip(specs)
        .map(|(&v, s)| {
            let sh = shared[&s.setup_key()].clone();
            (v, s, sh)
        })
        .collect();
    analysis::run_sweep(axis, grid, seeds, |value, seed| {
        let (_, s, sh) = by_value
            .iter()
            .find(|(v, _, _)| *v == value)
            .expect("grid value");
        let (setup, plain) = &**sh;
        let c = compare(setup, plain, &s.protocol, s.metric, seed)?;
        Ok(SweepSample {
            value,
            seed,
            kappa_noisy: c.noisy_fit.kappa,
            kappa_plain: c.plain_fit.kappa,
            ratio: c.ratio,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_setup() -> SectorSetup {
        let test = SiteSubset::tail(2, SubsetRole::Test, 8).unwrap();
        SectorSetup::new(&CouplingParams::default(), 8, 2, 0b11, test, ThermalMode::Exact).unwrap()
    }

    #[test]
    fn random_sites_are_seeded_and_distinct() {
        let s = NoisySites::Random { count: 3 };
        let a = s.resolve(12, 4).unwrap();
        assert_eq!(a, s.resolve(12, 4).unwrap());
        assert_eq!(a.len(), 3);
        assert!(NoisySites::Random { count: 13 }.resolve(12, 0).is_err());
    }

    #[test]
    fn identity_noise_reproduces_plain() {
        let setup = small_setup();
        let plain = setup.plain(4.0, 20, &[]).unwrap();
        let p = NoiseProtocol::new(
            ShockNoise::PhaseFlip { p: 0.0 },
            NoisySites::Fixed { sites: vec![1, 2] },
            ShockPlan::default(),
        );
        let c = compare(&setup, &plain, &p, MetricKind::TraceDist, 3).unwrap();
        for (a, b) in c.plain.iter().zip(&c.noisy) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(c.shock_steps, vec![2]);
    }

    #[test]
    fn curves_coincide_until_the_shock() {
        let setup = small_setup();
        let plain = setup.plain(4.0, 20, &[]).unwrap();
        let p = NoiseProtocol::new(ShockNoise::Haar, NoisySites::Fixed { sites: vec![0, 1, 2] }, ShockPlan::default());
        let c = compare(&setup, &plain, &p, MetricKind::TraceDist, 1).unwrap();
        assert!((c.plain[1] - c.noisy[1]).abs() < 1e-12);
        assert!(c.plain[2..].iter().zip(&c.noisy[2..]).any(|(a, b)| (a - b).abs() > 1e-6));
    }

    #[test]
    fn pauli_noise_matches_phase_flip() {
        let setup = small_setup();
        let plain = setup.plain(4.0, 20, &[]).unwrap();
        let sites = NoisySites::Fixed { sites: vec![1, 2] };
        let a = NoiseProtocol::new(ShockNoise::PhaseFlip { p: 0.3 }, sites.clone(), ShockPlan::default());
        let b = NoiseProtocol::new(
            ShockNoise::Pauli { strings: vec!["ZZ".into(), "II".into()], probs: vec![0.3, 0.7] },
            sites,
            ShockPlan::default(),
        );
        let ca = compare(&setup, &plain, &a, MetricKind::TraceDist, 0).unwrap();
        let cb = compare(&setup, &plain, &b, MetricKind::TraceDist, 0).unwrap();
        for (x, y) in ca.noisy.iter().zip(&cb.noisy) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn product_state_has_no_mutual_information_at_start() {
        let setup = small_setup();
        let n = SiteSubset::new(vec![0, 1], SubsetRole::Noisy, 8).unwrap();
        let t = SiteSubset::new(vec![5, 6], SubsetRole::Test, 8).unwrap();
        let i = mutual_information_run(&setup, &n, &t, 3.0, 12, Some((&ShockNoise::Haar, ShockPlan::default())), 2).unwrap();
        assert!(i[0].abs() < 1e-12);
        assert!(i.iter().all(|&v| v >= -1e-9));
    }

    #[test]
    fn single_point_sweep_equals_direct_run() {
        let spec = SweepSpec {
            params: CouplingParams::default(),
            length: 8,
            up_count: 2,
            t_max: 6.0,
            n_steps: 24,
            test_tail: 2,
            metric: MetricKind::TraceDist,
            protocol: NoiseProtocol::new(ShockNoise::Haar, NoisySites::Random { count: 2 }, ShockPlan::default()),
        };
        let sweep = run_axis_sweep(&spec, SweepAxis::Frequency, &[1.0], &[5]).unwrap();
        let setup = spec.setup().unwrap();
        let plain = setup.plain(6.0, 24, &[]).unwrap();
        let direct = compare(&setup, &plain, &spec.protocol, MetricKind::TraceDist, 5).unwrap();
        assert_eq!(sweep.points.len(), 1);
        assert_eq!(sweep.samples[0].kappa_noisy, direct.noisy_fit.kappa);
        assert_eq!(sweep.samples[0].ratio, direct.ratio);
    }

    #[test]
    fn circuit_setup_runs_small_register() {
        let test = SiteSubset::tail(2, SubsetRole::Test, 5).unwrap();
        let setup = CircuitSetup::new(&CouplingParams::default(), 5, 0b111, test).unwrap();
        let c = setup.circuit(2.0, None, TrotterOrder::First).unwrap();
        let r = circuit_comparison(&setup, &c, 0.0, 3, 0, MetricKind::OneMinusFidelity).unwrap();
        assert_eq!(r.noiseless, r.noisy);
        assert!(r.max_norm_error < 1e-10);
    }
}
