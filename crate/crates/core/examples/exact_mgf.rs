//! Exact generating function of (sigma, w~) from the tilted propagator,
//! and cumulants read off a finite-difference stencil.

use qfluct::protocol::QubitDrive;
use qfluct::tilted::{cumulants_from_mgf, exact_mgf, exact_mgf_entropy, MgfOptions, StencilOptions};

fn main() -> qfluct::Result<()> {
    let drive = QubitDrive::standard(25.0);
    let opts = MgfOptions::default();

    // normalisation and the fluctuation theorem
    for (u, v) in [(0.0, 0.0), (1.0, 0.0)] {
        let g = exact_mgf(&drive, u, v, opts)?;
        println!("G({u}, {v}) = {:.12}  (err {:.1e}, h {})", g.g, g.error, g.h);
    }

    println!("   u      v        ln G");
    for u in [0.0, 0.3, 0.7, 1.0] {
        for v in [-0.2, 0.0, 0.2] {
            let g = exact_mgf(&drive, u, v, opts)?;
            println!("{u:5.2} {v:6.2}  {:+.8e}", g.ln_g);
        }
    }
    let s = exact_mgf_entropy(&drive, 0.5, opts)?;
    println!("entropy-only ln G(1/2) = {:+.8e}", s.ln_g);

    let c = cumulants_from_mgf(&drive, StencilOptions::default())?;
    println!("<sigma> {:.6}  var sigma {:.6}", c.mean_sigma.value, c.var_sigma.value);
    println!("<w>-W {:.6}  var w {:.6}", c.mean_w_tilde.value, c.var_w.value);
    Ok(())
}
