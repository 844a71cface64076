//! Spectrum, density of states and the inverse temperature matching the
//! initial energy.
//!
//! `cargo run --release --example spectrum_beta -- 16`
use std::sync::Arc;

use gibbsforge::experiment::leading_ones;
use gibbsforge::hilbert::{LatticeSpec, SectorBasis};
use gibbsforge::spinmodel::{density_of_states, solve_beta_star, CouplingParams, Spectrum};
use gibbsforge::state::StateVector;

fn main() -> gibbsforge::Result<()> {
    let l: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(14);
    let basis = Arc::new(SectorBasis::sector(LatticeSpec::new(l, 3)?)?);
    for params in [CouplingParams::non_integrable(), CouplingParams::integrable(1.0, 1.0)] {
        let spectrum = Arc::new(Spectrum::compute(&params, basis.clone())?);
        let psi0 = StateVector::product(basis.clone(), leading_ones(3))?;
        let e0 = spectrum.energy_of(psi0.amps());
        let dos = density_of_states(&spectrum.eigenvalues, None, 200)?;
        let reference = solve_beta_star(spectrum.clone(), e0)?;
        println!(
            "{:?}: E in [{:.3}, {:.3}], E0 = {e0:.3}, beta* = {:.4}, DOS bandwidth {:.3}, integral {:.1}",
            params,
            spectrum.min(),
            spectrum.max(),
            reference.beta_star,
            dos.bandwidth,
            dos.integral()
        );
    }
    Ok(())
}
