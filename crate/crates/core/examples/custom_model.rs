//! A model given as plain-text matrices, the same format the command line
//! reads with `--model custom`.

use qfluct::config::{format_jumps, parse_jumps, parse_matrix};
use qfluct::lindblad::{check_structure, gibbs_state, ModelSpec};
use qfluct::protocol::StaticProtocol;
use qfluct::tilted::{exact_mgf, MgfOptions};

// three levels, energies 0, 1, 2.5 at beta = 1
const HAMILTONIAN: &str = "
0,0 0,0 0,0
0,0 1,0 0,0
0,0 0,0 2.5,0
";

// downward rates 0.5 and 0.3, upward ones carry the Boltzmann factor
const JUMPS: &str = "
> down10
0,0 0.7071067811865476,0 0,0
0,0 0,0 0,0
0,0 0,0 0,0
> up01
0,0 0,0 0,0
0.42888194248035333,0 0,0 0,0
0,0 0,0 0,0
> down21
0,0 0,0 0,0
0,0 0,0 0.5477225575051661,0
0,0 0,0 0,0
> up12
0,0 0,0 0,0
0,0 0,0 0,0
0,0 0.2587258163472075,0 0,0
";

fn main() -> qfluct::Result<()> {
    let h = parse_matrix(HAMILTONIAN)?;
    let jumps = parse_jumps(JUMPS)?;
    let beta = 1.0;
    let model = ModelSpec::new(h.clone(), jumps)?;
    let (ss, ln_z) = gibbs_state(&h, beta)?;
    println!("ln Z = {ln_z:.6}, populations {:?}", ss.populations());

    let rep = check_structure(&model, &ss, Some(beta))?;
    for (k, l) in rep.labels.iter().enumerate() {
        println!("{l}: dphi {:+.6} de {:+.6}", rep.delta_phi[k], rep.delta_e.as_ref().unwrap()[k]);
    }
    println!("detailed balance {}", rep.detailed_balance());

    // at equilibrium nothing is produced: G(u, v) = 1
    let p = StaticProtocol { model: model.clone(), beta, tau: 5.0 };
    let g = exact_mgf(&p, 0.4, 0.2, MgfOptions::default())?;
    println!("G(0.4, 0.2) = {:.12}", g.g);

    print!("\nround trip:\n{}", format_jumps(&model.jumps));
    Ok(())
}
