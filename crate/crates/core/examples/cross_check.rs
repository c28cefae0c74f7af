//! The three routes side by side on one protocol: trajectories, exact
//! tilted propagation and slow driving.

use qfluct::protocol::QubitDrive;
use qfluct::report::CumulantReport;
use qfluct::slow::{SlowOptions, SlowPath};
use qfluct::tilted::{cumulants_from_mgf, StencilOptions};
use qfluct::trajectory::{sample_ensemble, EnsembleOptions};

fn row(name: &str, f: impl Fn(&CumulantReport) -> (f64, f64), r: [&CumulantReport; 3]) {
    let [mc, ex, sl] = r.map(f);
    println!("{name:>10}  {:10.6} +- {:8.6}  {:10.6}  {:10.6}", mc.0, mc.1, ex.0, sl.0);
}

fn main() -> qfluct::Result<()> {
    let drive = QubitDrive::standard(25.0);
    let mc = sample_ensemble(&drive, EnsembleOptions { dt: 0.01, n_traj: 40_000, seed: 11 })?.cumulants();
    let exact = cumulants_from_mgf(&drive, StencilOptions::default())?;
    let slow = SlowPath::new(&drive, SlowOptions::default())?.cumulants()?;

    println!("{:>10}  {:>22}  {:>10}  {:>10}", "", "trajectories", "exact", "slow");
    let r = [&mc, &exact, &slow];
    row("<sigma>", |c| (c.mean_sigma.value, c.mean_sigma.tol), r);
    row("var sigma", |c| (c.var_sigma.value, c.var_sigma.tol), r);
    row("<w>-W", |c| (c.mean_w_tilde.value, c.mean_w_tilde.tol), r);
    row("var w", |c| (c.var_w.value, c.var_w.tol), r);
    Ok(())
}
