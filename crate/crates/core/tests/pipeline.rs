use gibbsforge::analysis::{median, SweepAxis};
use gibbsforge::circuit::TrotterOrder;
use gibbsforge::experiment::{
    circuit_comparison, compare, leading_ones, run_axis_sweep, CircuitSetup, NoiseProtocol, NoisySites, SectorSetup,
    ShockNoise, ShockPlan, SweepSpec,
};
use gibbsforge::hilbert::{SiteSubset, SubsetRole};
use gibbsforge::metrology::MetricKind;
use gibbsforge::spinmodel::{CouplingParams, ThermalMode};

const L: usize = 12;

fn setup() -> SectorSetup {
    let test = SiteSubset::tail(3, SubsetRole::Test, L).unwrap();
    SectorSetup::new(&CouplingParams::default(), L, 3, leading_ones(3), test, ThermalMode::Exact).unwrap()
}

fn edge_haar(plan: ShockPlan) -> NoiseProtocol {
    NoiseProtocol::new(ShockNoise::Haar, NoisySites::Fixed { sites: vec![1, 2, 3] }, plan)
}

#[test]
fn shock_splits_the_curves_and_energy_is_piecewise_constant() {
    let s = setup();
    let plain = s.plain(10.0, 25, &[]).unwrap();
    let c = compare(&s, &plain, &edge_haar(ShockPlan::default()), MetricKind::TraceDist, 4).unwrap();
    assert_eq!(c.shock_steps, vec![2]);
    for k in 0..2 {
        assert!((c.plain[k] - c.noisy[k]).abs() < 1e-12);
    }
    assert!(c.plain[3..].iter().zip(&c.noisy[3..]).any(|(a, b)| (a - b).abs() > 1e-4));
    let e0 = c.plain_energy[0];
    assert!(c.plain_energy.iter().all(|e| ((e - e0) / e0).abs() < 1e-10));
    let after = c.noisy_energy[2];
    assert!(c.noisy_energy[2..].iter().all(|e| ((e - after) / after).abs() < 1e-10));
    assert!((c.noisy_energy[1] - e0).abs() < 1e-10 * e0.abs());
}

#[test]
fn shocks_lower_the_energy_over_seeds() {
    let s = setup();
    let plain = s.plain(10.0, 25, &[]).unwrap();
    let e0 = plain.energies[0];
    let after: Vec<f64> = (1..=10)
        .map(|seed| {
            let c = compare(&s, &plain, &edge_haar(ShockPlan::default()), MetricKind::TraceDist, seed).unwrap();
            *c.noisy_energy.last().unwrap()
        })
        .collect();
    assert!(median(&after) < e0, "{after:?} vs {e0}");
}

#[test]
fn identity_cascade_reproduces_plain() {
    let s = setup();
    let plain = s.plain(10.0, 25, &[]).unwrap();
    let p = NoiseProtocol::new(
        ShockNoise::PhaseFlip { p: 0.0 },
        NoisySites::Random { count: 3 },
        ShockPlan { first_step: 2, count: 6 },
    );
    let c = compare(&s, &plain, &p, MetricKind::RelEntropy, 9).unwrap();
    assert_eq!(c.shock_steps.len(), 6);
    for (a, b) in c.plain.iter().zip(&c.noisy) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn phase_flip_cascade_stays_a_valid_state() {
    let s = setup();
    let plain = s.plain(10.0, 25, &[]).unwrap();
    let p = NoiseProtocol::new(
        ShockNoise::PhaseFlip { p: 0.5 },
        NoisySites::Fixed { sites: vec![2, 3, 4] },
        ShockPlan { first_step: 2, count: 8 },
    );
    let c = compare(&s, &plain, &p, MetricKind::TraceDist, 1).unwrap();
    for rho in &c.noisy_record.reduced[0] {
        let tr: f64 = (0..rho.nrows()).map(|i| rho[(i, i)].re).sum();
        assert!((tr - 1.0).abs() < 1e-10);
    }
    assert!(!c.noisy_record.switches.is_empty(), "ensemble should switch to a dense matrix past the member cap");
}

#[test]
fn sweeps_are_reproducible_and_cover_the_grid() {
    let spec = SweepSpec {
        params: CouplingParams { j_perp: 0.25, ..CouplingParams::default() },
        length: 10,
        up_count: 3,
        t_max: 10.0,
        n_steps: 25,
        test_tail: 3,
        metric: MetricKind::TraceDist,
        protocol: edge_haar(ShockPlan::default()),
    };
    let a = run_axis_sweep(&spec, SweepAxis::Frequency, &[1.0, 3.0, 6.0], &[1, 2, 3]).unwrap();
    let b = run_axis_sweep(&spec, SweepAxis::Frequency, &[1.0, 3.0, 6.0], &[1, 2, 3]).unwrap();
    assert_eq!(a.values(), vec![1.0, 3.0, 6.0]);
    assert_eq!(a.samples.len(), 9);
    assert_eq!(a.points, b.points);
    let l = run_axis_sweep(&spec, SweepAxis::L, &[8.0, 10.0], &[1]).unwrap();
    assert_eq!(l.points.len(), 2);
    assert!(run_axis_sweep(&spec, SweepAxis::Frequency, &[1.5], &[1]).is_err());
}

#[test]
fn noiseless_circuit_matches_its_zero_noise_average() {
    let q = 6;
    let test = SiteSubset::tail(3, SubsetRole::Test, q).unwrap();
    let cs = CircuitSetup::new(&CouplingParams::default(), q, 0b111, test).unwrap();
    let c = cs.circuit(4.0, None, TrotterOrder::First).unwrap();
    let cmp = circuit_comparison(&cs, &c, 0.0, 8, 1, MetricKind::TraceDist).unwrap();
    for (a, b) in cmp.noiseless.iter().zip(&cmp.noisy) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(cmp.mean_flips, 0.0);
    assert!(cmp.max_norm_error < 1e-10);
}
