//! Trotter circuit with per-gate ZZ noise: trajectories vs the exact channel.
use gibbsforge::circuit::{default_n_steps, run_exact_channel, run_noisy_trajectories, trotterize};
use gibbsforge::hilbert::{SiteSubset, SubsetRole};
use gibbsforge::metrology;
use gibbsforge::spinmodel::CouplingParams;

fn main() -> gibbsforge::Result<()> {
    let (q, t_max) = (8, 6.0);
    let params = CouplingParams::default();
    let steps = default_n_steps(&params, t_max);
    let c = trotterize(&params, q, t_max, steps)?.with_initial_pattern(0b111)?.with_noise(0.01)?;
    println!("{q} qubits, {steps} steps, {} gates per step, max angle {:.3}", c.gates.len(), c.max_angle());
    let t = SiteSubset::tail(3, SubsetRole::Test, q)?;
    let traj = run_noisy_trajectories(&c, std::slice::from_ref(&t), 200, 5)?;
    let exact = run_exact_channel(&c, std::slice::from_ref(&t))?;
    for k in (0..traj.times.len()).step_by(steps / 6) {
        let d = metrology::trace_distance(&traj.reduced[0][k], &exact.reduced[0][k])?;
        println!("t = {:5.2}: trajectories vs exact channel {d:.4}", traj.times[k]);
    }
    println!("mean flips per trajectory {:.2}", traj.mean_flips);
    Ok(())
}
