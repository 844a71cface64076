//! Growth of I(N:T) with and without a Haar shock on N.
use gibbsforge::experiment::{leading_ones, mutual_information_run, SectorSetup, ShockNoise, ShockPlan};
use gibbsforge::hilbert::{SiteSubset, SubsetRole};
use gibbsforge::spinmodel::{CouplingParams, ThermalMode};

fn main() -> gibbsforge::Result<()> {
    let l = 14;
    let params = CouplingParams { j_perp: 0.25, ..CouplingParams::default() };
    let t = SiteSubset::new(vec![6, 7, 8], SubsetRole::Test, l)?;
    let setup = SectorSetup::new(&params, l, 3, leading_ones(3), t.clone(), ThermalMode::Exact)?;
    let n = SiteSubset::new(vec![2, 3, 4], SubsetRole::Noisy, l)?;
    let plain = mutual_information_run(&setup, &n, &t, 10.0, 20, None, 0)?;
    let noisy = mutual_information_run(&setup, &n, &t, 10.0, 20, Some((&ShockNoise::Haar, ShockPlan::default())), 3)?;
    for (k, (a, b)) in plain.iter().zip(&noisy).enumerate() {
        println!("t = {:4.1}  plain {a:.4e}  shock {b:.4e}", k as f64 * 0.5);
    }
    Ok(())
}
