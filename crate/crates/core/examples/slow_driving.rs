//! Slow-driving cumulant generating function, the refined FDR and the TUR
//! for the driven qubit, and how the exact result approaches it.

use qfluct::protocol::QubitDrive;
use qfluct::slow::{SlowOptions, SlowPath};
use qfluct::tilted::{cumulants_from_mgf, StencilOptions};

fn main() -> qfluct::Result<()> {
    let drive = QubitDrive::standard(50.0);
    let path = SlowPath::new(&drive, SlowOptions::default())?;

    // K(u) = K(1-u) for the entropy CGF in this regime
    for u in [0.1, 0.25, 0.5] {
        let a = path.cgf_entropy(u);
        let b = path.cgf_entropy(1.0 - u);
        println!("K({u}) = {:+.8e}  K({}) = {:+.8e}", a.value, 1.0 - u, b.value);
    }
    let j = path.cgf_joint(0.5, 0.1)?;
    println!("joint K(0.5, 0.1) = {:+.8e} +- {:.1e}", j.value, j.error);

    let c = path.cumulants()?;
    let di = c.delta_i_sigma.map_or(f64::NAN, |x| x.value);
    println!("<sigma> {:.6}  var sigma {:.6}  dI_sigma {:.3e}", c.mean_sigma.value, c.var_sigma.value, di);
    println!("FDR gap {:.3e} = 2 dI_sigma, residual {:.1e}", c.fdr_gap.value, c.fdr_residual.map_or(f64::NAN, |x| x.value));
    if let Some(t) = c.tur_ratio {
        println!("TUR ratio {:.4} (>= 2)", t.value);
    }

    // exact cumulants scale like 1/tau onto the slow ones
    for tau in [25.0, 50.0, 100.0] {
        let d = QubitDrive::standard(tau);
        let exact = cumulants_from_mgf(&d, StencilOptions { with_covariance: false, ..Default::default() })?;
        let slow = SlowPath::new(&d, SlowOptions::default())?.cumulants()?;
        let rel = (exact.var_sigma.value - slow.var_sigma.value).abs() / slow.var_sigma.value;
        println!("tau {tau:5}: var sigma exact {:.6} slow {:.6} rel {:.2e}", exact.var_sigma.value, slow.var_sigma.value, rel);
    }
    Ok(())
}
