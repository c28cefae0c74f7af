//! Steady state, privileged jumps and the Drazin inverse of a driven qubit
//! at one instant of its protocol.

use qfluct::lindblad::{build_generator, check_structure, drazin_apply, steady_state};
use qfluct::operator::{max_abs, pauli, trace};
use qfluct::protocol::{Protocol, QubitDrive};

fn main() -> qfluct::Result<()> {
    let drive = QubitDrive::standard(50.0);
    let cp = drive.control(12.5)?;
    let g = build_generator(&cp.model)?;

    // generic null-space solve vs the Gibbs form the protocol uses
    let ss = steady_state(&g)?;
    let gibbs = drive.steady(&cp)?;
    println!("populations {:?}", ss.populations());
    println!("|pi - gibbs| = {:.1e}", max_abs(&(&ss.pi - &gibbs.pi)));

    let rep = check_structure(&cp.model, &ss, cp.beta)?;
    for (k, label) in rep.labels.iter().enumerate() {
        println!("jump {label}: dphi = {:+.6}, residual {:.1e}", rep.delta_phi[k], rep.residuals[k]);
    }
    println!(
        "privileged {}  time-covariant {}  detailed balance {}",
        rep.privileged(),
        rep.time_covariant(),
        rep.detailed_balance()
    );

    // L L+ X = X - tr[X] pi, and L+ X is traceless
    let x = pauli::sx();
    let y = drazin_apply(&g, &ss.pi, &x)?;
    let back = g.apply(&y);
    let want = &x - &ss.pi * trace(&x);
    println!("Drazin residual {:.1e}, tr = {:.1e}", max_abs(&(back - want)), trace(&y).norm());
    Ok(())
}
