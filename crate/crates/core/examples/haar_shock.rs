//! Plain vs single Haar shock: trace distance of the last three sites to
//! their thermal state, with decay fits.
//!
//! `cargo run --release --example haar_shock -- 16 0.25`
use gibbsforge::experiment::{compare, leading_ones, NoiseProtocol, NoisySites, SectorSetup, ShockNoise, ShockPlan};
use gibbsforge::hilbert::{SiteSubset, SubsetRole};
use gibbsforge::metrology::MetricKind;
use gibbsforge::spinmodel::{CouplingParams, ThermalMode};

fn main() -> gibbsforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let l: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(14);
    let j_perp: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.25);
    let params = CouplingParams { j_perp, ..CouplingParams::non_integrable() };
    let test = SiteSubset::tail(3, SubsetRole::Test, l)?;
    let setup = SectorSetup::new(&params, l, 3, leading_ones(3), test, ThermalMode::Exact)?;
    let plain = setup.plain(20.0, 50, &[])?;
    // noise on the initially occupied sites
    let protocol = NoiseProtocol::new(ShockNoise::Haar, NoisySites::Fixed { sites: vec![0, 1, 2] }, ShockPlan::default());
    println!("beta* = {:.4}", setup.reference.beta_star);
    for seed in 1..=5 {
        let c = compare(&setup, &plain, &protocol, MetricKind::TraceDist, seed)?;
        println!(
            "seed {seed}: kappa noisy {:.4}, plain {:.4}, ratio {:?}, final {:.3} vs {:.3}",
            c.noisy_fit.kappa,
            c.plain_fit.kappa,
            c.ratio.value(),
            c.noisy.last().unwrap(),
            c.plain.last().unwrap()
        );
    }
    Ok(())
}
