//! Haar blocks, phase flips and Pauli channels on a small sector.
use std::sync::Arc;

use gibbsforge::hilbert::{LatticeSpec, SectorBasis, SiteSubset, SubsetRole};
use gibbsforge::noise::{apply_pauli_channel, apply_phase_flip, sample_haar_block, PauliChannelSpec};
use gibbsforge::state::StateVector;

fn main() -> gibbsforge::Result<()> {
    let n = SiteSubset::new(vec![0, 1, 2], SubsetRole::Noisy, 6)?;
    let u = sample_haar_block(&n, 42)?;
    println!("Haar block seeds {:?}", u.block_seeds);
    println!("|000> amplitude kept: {:.3}", u.local[(0, 0)].norm());

    let basis = Arc::new(SectorBasis::sector(LatticeSpec::new(6, 3)?)?);
    let mut psi = StateVector::product(basis.clone(), 0b000111)?;
    let layout = gibbsforge::hilbert::SubsetLayout::new(&basis, &[2, 3, 4]);
    sample_haar_block(&SiteSubset::new(vec![2, 3, 4], SubsetRole::Noisy, 6)?, 7)?.apply(&layout, psi.amps_mut());
    let rho = psi.outer();
    for p in [0.0, 0.25, 0.5] {
        let out = apply_phase_flip(&rho, &SiteSubset::new(vec![1, 2, 3], SubsetRole::Noisy, 6)?, p)?;
        println!("phase flip p = {p}: trace {:.12}, purity {:.4}", out.trace(), out.purity());
    }
    let spec = PauliChannelSpec::two_site(2, 3, 0.2, 0.3, 0.5);
    let out = apply_pauli_channel(&rho, &spec)?;
    println!("two-site Pauli channel: trace {:.12}, purity {:.4}", out.trace(), out.purity());
    Ok(())
}
