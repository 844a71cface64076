//! Noiseless vs noisy circuit distance to the thermal state, with recurrence counts.
//!
//! `cargo run --release --example circuit_recurrence -- 10 200`
use gibbsforge::circuit::TrotterOrder;
use gibbsforge::experiment::{circuit_comparison, leading_ones, CircuitSetup};
use gibbsforge::hilbert::{SiteSubset, SubsetRole};
use gibbsforge::metrology::MetricKind;
use gibbsforge::spinmodel::CouplingParams;

fn main() -> gibbsforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let q: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(8);
    let n_traj: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(100);
    let test = SiteSubset::tail(3, SubsetRole::Test, q)?;
    let setup = CircuitSetup::new(&CouplingParams::default(), q, leading_ones(3), test)?;
    let circuit = setup.circuit(20.0, None, TrotterOrder::First)?;
    let cmp = circuit_comparison(&setup, &circuit, 0.01, n_traj, 7, MetricKind::OneMinusFidelity)?;
    println!(
        "beta* {:.3}; recurrences noiseless {} noisy {}; final 1-F {:.4} vs {:.4}",
        setup.reference.beta_star,
        cmp.noiseless_recurrence.count,
        cmp.noisy_recurrence.count,
        cmp.noiseless.last().unwrap(),
        cmp.noisy.last().unwrap()
    );
    Ok(())
}
