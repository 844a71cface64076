//! Median kappa ratio against shock frequency on a short chain.
use gibbsforge::analysis::SweepAxis;
use gibbsforge::experiment::{run_axis_sweep, NoiseProtocol, NoisySites, ShockNoise, ShockPlan, SweepSpec};
use gibbsforge::metrology::MetricKind;
use gibbsforge::spinmodel::CouplingParams;

fn main() -> gibbsforge::Result<()> {
    let spec = SweepSpec {
        params: CouplingParams { j_perp: 0.25, ..CouplingParams::default() },
        length: 12,
        up_count: 3,
        t_max: 20.0,
        n_steps: 50,
        test_tail: 3,
        metric: MetricKind::TraceDist,
        protocol: NoiseProtocol::new(ShockNoise::Haar, NoisySites::Fixed { sites: vec![0, 1, 2] }, ShockPlan::default()),
    };
    let result = run_axis_sweep(&spec, SweepAxis::Frequency, &[1.0, 2.0, 4.0, 8.0], &[1, 2, 3])?;
    for p in &result.points {
        println!("{} shocks: median ratio {:.3} (IQR {:.3}) {:?}", p.value, p.ratio_median, p.ratio_iqr, p.flags);
    }
    Ok(())
}
