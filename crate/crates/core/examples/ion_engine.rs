//! Trapped-ion heat engine: closed-form cumulants, the matrix twin used
//! by the generic routes, and a small fig1-style sweep.

use qfluct::ion::{closed_form_report, fig1_sweep, Fig1Grid, IonParams, IonTwin};
use qfluct::slow::{SlowOptions, SlowPath};

fn main() -> qfluct::Result<()> {
    let p = IonParams::fig1(1.0, 1.0);
    p.validate()?;
    let closed = closed_form_report(&p)?;
    let twin = IonTwin::new(p.clone())?;
    println!("twin dimension {}", twin.dim());
    let slow = SlowPath::new(&twin, SlowOptions::default())?.cumulants()?;

    let rows = [
        ("<sigma>", closed.mean_sigma.value, slow.mean_sigma.value),
        ("var sigma", closed.var_sigma.value, slow.var_sigma.value),
        ("<w>-W", closed.mean_w_tilde.value, slow.mean_w_tilde.value),
        ("var w", closed.var_w.value, slow.var_w.value),
        ("W", closed.adiabatic_work.map_or(f64::NAN, |x| x.value), slow.adiabatic_work.map_or(f64::NAN, |x| x.value)),
    ];
    println!("{:>10} {:>14} {:>14}", "", "closed form", "twin");
    for (name, a, b) in rows {
        println!("{name:>10} {a:14.8} {b:14.8}");
    }

    let grid = Fig1Grid { t_eq: (0.1, 10.0, 5), t_cold: (0.1, 1.9, 4), ..Fig1Grid::default() };
    println!("\n{}", qfluct::ion::Fig1Row::HEADER);
    for r in fig1_sweep(&grid)? {
        println!("{}", r.csv());
    }
    Ok(())
}
