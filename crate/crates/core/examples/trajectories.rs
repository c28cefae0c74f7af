//! Quantum-jump trajectories of the driven qubit and the integral
//! fluctuation theorem <e^{-sigma}> = 1.

use qfluct::protocol::QubitDrive;
use qfluct::trajectory::{sample_ensemble, sample_trajectory, sigma_of, work_of, EnsembleOptions, Schedule};

fn main() -> qfluct::Result<()> {
    let drive = QubitDrive::standard(20.0);
    let sched = Schedule::new(&drive, 0.01)?;
    println!("{} steps, rate product {:.3}", sched.n_steps(), sched.rate_product);

    // one trajectory, with its jump record
    let rec = sample_trajectory(&sched, 7, 0)?;
    println!("trajectory 0: {} -> {}, {} jumps", rec.mu, rec.nu, rec.events.len());
    for ev in rec.events.iter().take(5) {
        println!("  t = {:7.3}  {}  dphi {:+.4}", ev.t, sched.labels[ev.label], ev.delta_phi);
    }
    let (w, wt) = work_of(&rec, &sched);
    println!("  sigma {:.4}  w {:.4}  w~ {:.4}", sigma_of(&rec, &sched), w, wt);

    let n_traj = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let ens = sample_ensemble(&drive, EnsembleOptions { dt: 0.01, n_traj, seed: 7 })?;
    let ft = ens.exp_minus_sigma();
    println!("<e^-sigma> = {:.5} +- {:.5}  ({} trajectories)", ft.value, ft.se, ens.len());

    let c = ens.cumulants();
    println!("<sigma> {:.5}  var sigma {:.5}", c.mean_sigma.value, c.var_sigma.value);
    println!("<w>-W {:.5}  var w {:.5}", c.mean_w_tilde.value, c.var_w.value);
    Ok(())
}
