//! Distances between reduced states and a thermal reference.
use gibbsforge::experiment::{leading_ones, SectorSetup};
use gibbsforge::hilbert::{SiteSubset, SubsetRole};
use gibbsforge::metrology::{self, MetricKind};
use gibbsforge::spinmodel::{CouplingParams, ThermalMode};

fn main() -> gibbsforge::Result<()> {
    let l = 12;
    let test = SiteSubset::tail(3, SubsetRole::Test, l)?;
    let params = CouplingParams { j_perp: 0.25, ..CouplingParams::default() };
    let setup = SectorSetup::new(&params, l, 3, leading_ones(3), test, ThermalMode::Exact)?;
    let run = setup.plain(10.0, 10, &[])?;
    println!("time  trace_dist  rel_entropy  1-F  hs_dist  energy_ratio");
    for (k, rho) in run.reduced[0].iter().enumerate() {
        let d = metrology::distances(rho, &setup.thermal_test)?;
        let hs = metrology::subset_metric(MetricKind::HsDist, rho, &setup.thermal_test)?;
        let er = metrology::energy_ratio(run.energies[k], &setup.reference)?;
        println!(
            "{:5.1} {:.4} {:.4} {:.4} {:.4} {:.4}",
            run.times[k], d.trace_dist, d.rel_entropy, d.one_minus_fidelity, hs, er
        );
    }
    Ok(())
}
