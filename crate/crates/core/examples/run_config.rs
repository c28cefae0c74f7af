//! Driving the library from a JSON run configuration, as the `qfluct`
//! binary does.

use qfluct::cli::execute;
use qfluct::config::RunConfig;

const CONFIG: &str = r#"{
  "model": { "kind": "qubit", "tau": 25.0 },
  "route": "cross-check",
  "numerics": { "dt": 0.01, "n_traj": 50000 },
  "seed": 2
}"#;

fn main() -> qfluct::Result<()> {
    let cfg = RunConfig::from_json(CONFIG)?;
    println!("config sha256 {}", cfg.hash());

    for command in ["exact-mgf", "slow-cgf", "check-ft", "fdr"] {
        cfg.validate(command)?;
        let out = execute(command, &cfg)?;
        println!("-- {command}: {}", if out.passed { "pass" } else { "fail" });
        for line in &out.lines {
            println!("   {line}");
        }
    }
    Ok(())
}
