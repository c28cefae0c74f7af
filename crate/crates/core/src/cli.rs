//! Command dispatch for the `qfluct` binary.
//!
//! Every command loads a [`RunConfig`] (file, then flags), validates it,
//! runs, and writes `<out>/<command>.json` plus any CSV tables. Exit codes:
//! 0 pass, 1 a check failed, 2 configuration error, 3 numerical failure.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CustomConfig, ModelConfig, QubitConfig, RouteChoice, RunConfig};
use crate::error::{Error, Result};
use crate::ion::{cgf_closed_form, closed_form_report, fig1_sweep, Fig1Row, IonParams};
use crate::protocol::Protocol;
use crate::report::{CumulantReport, Route, Tagged};
use crate::slow::SlowPath;
use crate::tilted::{cumulants_from_mgf, exact_mgf, exact_mgf_entropy};
use crate::trajectory::{sample_ensemble_with, Ensemble, Schedule};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "qfluct", version, about = "Work and entropy-production statistics of slowly driven open quantum systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cumulants of (σ, w) by the configured route.
    Simulate(Overrides),
    /// ln G(u, v) on the tilt grid plus finite-difference cumulants.
    ExactMgf(Overrides),
    /// Slow-driving CGF on the tilt grid plus its cumulants.
    SlowCgf(Overrides),
    /// Integral fluctuation theorem by trajectories and by the exact MGF.
    CheckFt(Overrides),
    /// Detailed fluctuation theorem on mirror-paired histogram bins.
    CheckDft(Overrides),
    /// Fluctuation-dissipation relation with its quantum correction.
    Fdr(Overrides),
    /// Thermodynamic uncertainty ratio.
    Tur(Overrides),
    /// TUR/FDR surface of the ion engine.
    Fig1(Overrides),
    /// All routes side by side with pass/fail per agreement gate.
    CrossCheck(Overrides),
}

impl Command {
    fn parts(&self) -> (&'static str, &Overrides) {
        match self {
            Command::Simulate(o) => ("simulate", o),
            Command::ExactMgf(o) => ("exact-mgf", o),
            Command::SlowCgf(o) => ("slow-cgf", o),
            Command::CheckFt(o) => ("check-ft", o),
            Command::CheckDft(o) => ("check-dft", o),
            Command::Fdr(o) => ("fdr", o),
            Command::Tur(o) => ("tur", o),
            Command::Fig1(o) => ("fig1", o),
            Command::CrossCheck(o) => ("cross-check", o),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Qubit,
    Ion,
    Custom,
}

/// Flags mirror config keys and win over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// trajectories | exact-mgf | slow-driving | ion-closed-form | cross-check
    #[arg(long)]
    pub route: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Qubit: make the frequency sweep time-asymmetric.
    #[arg(long)]
    pub skewed: bool,
    #[arg(long)]
    pub omega0: Option<f64>,
    #[arg(long)]
    pub t_hot: Option<f64>,
    #[arg(long)]
    pub t_cold: Option<f64>,
    /// Ion relaxation time; sets gamma = 1/t_eq.
    #[arg(long)]
    pub t_eq: Option<f64>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub tail_limit: Option<f64>,
    /// Custom model: Hamiltonian matrix file.
    #[arg(long)]
    pub hamiltonian: Option<PathBuf>,
    /// Custom model: jump operator file.
    #[arg(long)]
    pub jumps: Option<PathBuf>,
    /// Custom model: inverse temperature.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub mgf_tol: Option<f64>,
    #[arg(long)]
    pub stencil_tol: Option<f64>,
    #[arg(long)]
    pub no_covariance: bool,
    /// Tilt values, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub u: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub v: Option<Vec<f64>>,
    /// Marginal σ bins instead of joint (σ, w̃) bins.
    #[arg(long)]
    pub marginal: bool,
    /// check-dft: fail on violations.
    #[arg(long)]
    pub strict: bool,
    /// fig1: points per axis.
    #[arg(long)]
    pub points: Option<usize>,
    /// Output directory (default: $QFLUCT_OUT, then ./qfluct-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Overrides {
    /// Load the file (or defaults) and apply the flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        match self.model {
            Some(ModelKind::Qubit) if !matches!(c.model, ModelConfig::Qubit(_)) => {
                c.model = ModelConfig::Qubit(QubitConfig::default())
            }
            Some(ModelKind::Ion) if !matches!(c.model, ModelConfig::Ion(_)) => {
                c.model = ModelConfig::Ion(IonParams::fig1(1.0, 1.0))
            }
            Some(ModelKind::Custom) if !matches!(c.model, ModelConfig::CustomMatrixFile(_)) => {
                let (Some(h), Some(j)) = (&self.hamiltonian, &self.jumps) else {
                    return Err(Error::Config("--model custom needs --hamiltonian and --jumps".into()));
                };
                c.model = ModelConfig::CustomMatrixFile(CustomConfig {
                    hamiltonian: h.clone(),
                    jumps: j.clone(),
                    beta: self.beta.unwrap_or(1.0),
                    tau: 10.0,
                })
            }
            _ => {}
        }
        let misplaced = |flag: &str, kind: &str| Err(Error::Config(format!("--{flag} applies only to the {kind} model")));
        match &mut c.model {
            ModelConfig::Qubit(q) => {
                set(&mut q.tau, self.tau);
                set(&mut q.gamma, self.gamma);
                q.skewed |= self.skewed;
                if self.n_max.is_some() || self.t_eq.is_some() || self.t_cold.is_some() || self.t_hot.is_some() {
                    return misplaced("n-max/t-eq/t-cold/t-hot", "ion");
                }
            }
            ModelConfig::Ion(p) => {
                set(&mut p.tau, self.tau);
                set(&mut p.gamma, self.gamma);
                set(&mut p.gamma, self.t_eq.map(|t| 1.0 / t));
                set(&mut p.omega0, self.omega0);
                set(&mut p.t_hot, self.t_hot);
                set(&mut p.t_cold, self.t_cold);
                set(&mut p.n_max, self.n_max);
                set(&mut p.tail_limit, self.tail_limit);
            }
            ModelConfig::CustomMatrixFile(m) => {
                set(&mut m.tau, self.tau);
                set(&mut m.beta, self.beta);
                set(&mut m.hamiltonian, self.hamiltonian.clone());
                set(&mut m.jumps, self.jumps.clone());
            }
        }
        if !matches!(c.model, ModelConfig::CustomMatrixFile(_)) && (self.hamiltonian.is_some() || self.jumps.is_some()) {
            return misplaced("hamiltonian/jumps", "custom");
        }
        if let Some(r) = &self.route {
            c.route = r.parse()?;
        }
        let n = &mut c.numerics;
        set(&mut n.dt, self.dt);
        set(&mut n.n_traj, self.n_traj);
        set(&mut n.h, self.h);
        set(&mut n.mgf_tol, self.mgf_tol);
        set(&mut n.stencil_tol, self.stencil_tol);
        set(&mut n.u, self.u.clone());
        set(&mut n.v, self.v.clone());
        n.with_covariance &= !self.no_covariance;
        n.joint_bins &= !self.marginal;
        c.gates.strict_dft |= self.strict;
        set(&mut c.seed, self.seed);
        if let Some(k) = self.points {
            c.fig1.t_eq.2 = k;
            c.fig1.t_cold.2 = k;
        }
        if let Some(o) = &self.out {
            c.output_dir = Some(o.clone());
        }
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// What a command produced.
#[derive(Debug)]
pub struct Outcome {
    pub passed: bool,
    /// One human-readable line per check or headline number.
    pub lines: Vec<String>,
    pub json: Value,
    pub tables: Vec<(String, String)>,
}

impl Outcome {
    fn new(json: Value) -> Self {
        Self { passed: true, lines: Vec::new(), json, tables: Vec::new() }
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        self.passed &= ok;
        self.lines.push(format!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" }));
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::StepTooLarge { .. }
        | Error::TruncationInadequate { .. }
        | Error::Protocol(_)
        | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

/// Parse `args`, run, write artifacts, and return the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let (name, ov) = cli.command.parts();
    let config = match ov.resolve().and_then(|c| c.validate(name).map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qfluct {name}: [{}] {e}", e.code());
            return EXIT_CONFIG;
        }
    };
    match execute(name, &config).and_then(|o| write_outputs(name, &config, &o).map(|_| o)) {
        Ok(o) => {
            for l in &o.lines {
                println!("{l}");
            }
            if o.passed {
                EXIT_PASS
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("qfluct {name}: [{}] {e}", e.code());
            exit_code(&e)
        }
    }
}

/// Run a validated configuration.
pub fn execute(command: &str, c: &RunConfig) -> Result<Outcome> {
    match command {
        "simulate" => simulate(c),
        "exact-mgf" => mgf_grid(c),
        "slow-cgf" => slow_grid(c),
        "check-ft" => check_ft(c),
        "check-dft" => check_dft(c),
        "fdr" => fdr(c),
        "tur" => tur(c),
        "fig1" => fig1(c),
        "cross-check" => cross_check(c),
        other => Err(Error::Config(format!("unknown command '{other}'"))),
    }
}

/// Reproducibility block attached to every JSON report.
pub fn provenance(c: &RunConfig) -> Value {
    json!({
        "config_sha256": c.hash(),
        "seed": c.seed,
        "qfluct_version": env!("CARGO_PKG_VERSION"),
        "report_format": 1,
        "config": c.canonical(),
    })
}

fn write_outputs(command: &str, c: &RunConfig, o: &Outcome) -> Result<()> {
    let dir = c.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let doc = json!({
        "command": command,
        "passed": o.passed,
        "results": o.json,
        "reproducibility": provenance(c),
    });
    let path = dir.join(format!("{command}.json"));
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    for (name, body) in &o.tables {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serialisable")
}

fn ensemble(p: &dyn Protocol, c: &RunConfig) -> Result<Ensemble> {
    let sched = Schedule::new(p, c.numerics.dt)?;
    sample_ensemble_with(&sched, c.numerics.n_traj, c.seed)
}

fn route_report(c: &RunConfig, p: &dyn Protocol, route: RouteChoice) -> Result<CumulantReport> {
    match route {
        RouteChoice::Trajectories => Ok(ensemble(p, c)?.cumulants()),
        RouteChoice::ExactMgf => cumulants_from_mgf(p, c.numerics.stencil()),
        RouteChoice::SlowDriving => SlowPath::new(p, c.numerics.slow())?.cumulants(),
        RouteChoice::IonClosedForm => {
            closed_form_report(c.ion().ok_or_else(|| Error::Config("ion-closed-form needs the ion model".into()))?)
        }
        RouteChoice::CrossCheck => unreachable!("handled by cross_check"),
    }
}

fn headline(rep: &CumulantReport) -> Vec<String> {
    let f = |name: &str, t: &Tagged| format!("{name} = {:.6e} ± {:.1e}", t.value, t.tol);
    vec![
        f("<sigma>", &rep.mean_sigma),
        f("var sigma", &rep.var_sigma),
        f("<w> - W", &rep.mean_w_tilde),
        f("var w", &rep.var_w),
    ]
}

fn simulate(c: &RunConfig) -> Result<Outcome> {
    if c.route == RouteChoice::CrossCheck {
        return cross_check(c);
    }
    let p = c.protocol()?;
    let mut tables = Vec::new();
    let rep = if c.route == RouteChoice::Trajectories {
        let e = ensemble(p.as_ref(), c)?;
        let mut csv = String::from("sigma,w,w_tilde\n");
        for s in &e.samples {
            let _ = writeln!(csv, "{:e},{:e},{:e}", s.sigma, s.w, s.w_tilde);
        }
        tables.push(("samples.csv".to_string(), csv));
        e.cumulants()
    } else {
        route_report(c, p.as_ref(), c.route)?
    };
    let mut o = Outcome::new(json!({ "model": p.label(), "report": rep }));
    o.lines = headline(&rep);
    o.tables = tables;
    Ok(o)
}

fn tilt_grid(c: &RunConfig) -> Vec<(f64, f64)> {
    c.numerics.u.iter().flat_map(|&u| c.numerics.v.iter().map(move |&v| (u, v))).collect()
}

fn mgf_grid(c: &RunConfig) -> Result<Outcome> {
    let p = c.protocol()?;
    let thermal = p.thermal();
    let mut rows = Vec::new();
    let mut csv = String::from("u,v,ln_g,error,h\n");
    let grid: Vec<(f64, f64)> = if thermal {
        tilt_grid(c)
    } else {
        c.numerics.u.iter().map(|&u| (u, 0.0)).collect()
    };
    for (u, v) in grid {
        let g = if thermal { exact_mgf(p.as_ref(), u, v, c.numerics.mgf())? } else { exact_mgf_entropy(p.as_ref(), u, c.numerics.mgf())? };
        let _ = writeln!(csv, "{u:e},{v:e},{:e},{:e},{:e}", g.ln_g, g.error, g.h);
        rows.push(json!({ "u": u, "v": v, "ln_g": Tagged::new(g.ln_g, Route::ExactMgf, g.error) }));
    }
    let rep = cumulants_from_mgf(p.as_ref(), c.numerics.stencil())?;
    let mut o = Outcome::new(json!({ "model": p.label(), "cgf": rows, "report": rep }));
    o.lines = headline(&rep);
    o.tables.push(("mgf.csv".into(), csv));
    Ok(o)
}

fn slow_grid(c: &RunConfig) -> Result<Outcome> {
    let p = c.protocol()?;
    let path = SlowPath::new(p.as_ref(), c.numerics.slow())?;
    let thermal = p.thermal();
    let mut rows = Vec::new();
    let mut csv = String::from(if c.ion().is_some() { "u,v,k,error,closed_form\n" } else { "u,v,k,error\n" });
    let grid: Vec<(f64, f64)> = if thermal { tilt_grid(c) } else { c.numerics.u.iter().map(|&u| (u, 0.0)).collect() };
    for (u, v) in grid {
        let k = if thermal { path.cgf_joint(u, v)? } else { path.cgf_entropy(u) };
        let mut row = json!({ "u": u, "v": v, "k": Tagged::new(k.value, Route::SlowDriving, k.error) });
        let _ = write!(csv, "{u:e},{v:e},{:e},{:e}", k.value, k.error);
        if let Some(ip) = c.ion() {
            let cf = cgf_closed_form(ip, u, v)?;
            row["closed_form"] = to_value(&Tagged::new(cf, Route::IonClosedForm, 1e-12 * cf.abs().max(1.0)));
            let _ = write!(csv, ",{cf:e}");
        }
        csv.push('\n');
        rows.push(row);
    }
    let rep = path.cumulants()?;
    let mut o = Outcome::new(json!({ "model": p.label(), "cgf": rows, "report": rep }));
    o.lines = headline(&rep);
    o.tables.push(("slow_cgf.csv".into(), csv));
    Ok(o)
}

fn check_ft(c: &RunConfig) -> Result<Outcome> {
    let p = c.protocol()?;
    let e = ensemble(p.as_ref(), c)?;
    let m = e.exp_minus_sigma();
    let g = if p.thermal() {
        exact_mgf(p.as_ref(), 1.0, 0.0, c.numerics.mgf())?
    } else {
        exact_mgf_entropy(p.as_ref(), 1.0, c.numerics.mgf())?
    };
    let z = c.gates.z;
    let mc_ok = (m.value - 1.0).abs() <= z * m.se;
    let g_ok = (g.g - 1.0).abs() <= c.gates.mgf_normalisation;
    let mut o = Outcome::new(json!({
        "model": p.label(),
        "n_traj": e.len(),
        "exp_minus_sigma": Tagged::new(m.value, Route::Trajectories, m.se),
        "trajectories_pass": mc_ok,
        "g_at_unit_tilt": Tagged::new(g.g, Route::ExactMgf, g.error),
        "exact_mgf_pass": g_ok,
    }));
    o.check("trajectories <e^-sigma> = 1", mc_ok, format!("{:.6} ± {:.1e} ({z} SE)", m.value, m.se));
    o.check("exact G(1,0) = 1", g_ok, format!("|G - 1| = {:.1e}", (g.g - 1.0).abs()));
    Ok(o)
}

fn check_dft(c: &RunConfig) -> Result<Outcome> {
    let p = c.protocol()?;
    let e = ensemble(p.as_ref(), c)?;
    let mut binning = c.numerics.binning(c.gates.z);
    binning.joint &= p.thermal();
    let d = e.dft_check(&binning);
    let mut csv = String::from("sigma_bin,w_bin,sigma_center,w_center,count,mirror_count,discrepancy,se,consistent\n");
    let mut rows = Vec::new();
    for r in &d.rows {
        let _ = writeln!(
            csv,
            "{},{},{:e},{},{},{},{:e},{:e},{}",
            r.sigma_bin,
            r.w_bin.map_or(String::new(), |b| b.to_string()),
            r.sigma_center,
            r.w_center.map_or(String::new(), |w| format!("{w:e}")),
            r.count,
            r.mirror_count,
            r.discrepancy,
            r.se,
            r.consistent
        );
        rows.push(json!({
            "sigma_bin": r.sigma_bin,
            "w_bin": r.w_bin,
            "count": r.count,
            "mirror_count": r.mirror_count,
            "discrepancy": Tagged::new(r.discrepancy, Route::Trajectories, r.se),
            "consistent": r.consistent,
        }));
    }
    let mut o = Outcome::new(json!({
        "model": p.label(),
        "joint": binning.joint,
        "rows": rows,
        "violations": d.violations,
        "insufficient_support": d.insufficient_support,
    }));
    let detail = format!("{} bin pairs tested, {} outside {} SE", d.rows.len(), d.violations, binning.z);
    if c.gates.strict_dft {
        o.check("detailed fluctuation theorem", d.passed(), detail);
    } else {
        o.lines.push(format!("{} detailed fluctuation theorem: {detail}", if d.passed() { "OK" } else { "VIOLATIONS" }));
    }
    o.tables.push(("dft.csv".into(), csv));
    Ok(o)
}

/// Slow-driving report, or the closed forms for the ion.
fn analytic_report(c: &RunConfig) -> Result<(String, CumulantReport)> {
    match c.ion() {
        Some(ip) if c.route != RouteChoice::SlowDriving => Ok((format!("ion closed form (tau={})", ip.tau), closed_form_report(ip)?)),
        _ => {
            let p = c.protocol()?;
            Ok((p.label(), SlowPath::new(p.as_ref(), c.numerics.slow())?.cumulants()?))
        }
    }
}

fn fdr(c: &RunConfig) -> Result<Outcome> {
    let (label, rep) = analytic_report(c)?;
    let di = rep.delta_i_sigma.ok_or_else(|| Error::Protocol("FDR needs the quantum correction".into()))?;
    let res = rep.fdr_residual.expect("present with ΔI_σ");
    let scale = rep.var_sigma.value.abs().max(1e-300);
    let res_ok = res.value.abs() <= 1e-8 * scale + res.tol;
    let mut o = Outcome::new(json!({ "model": label, "report": rep }));
    o.check("fdr_gap >= 0", rep.fdr_gap.value >= -rep.fdr_gap.tol, format!("{:.6e}", rep.fdr_gap.value));
    o.check("delta_I_sigma >= 0", di.value >= -di.tol, format!("{:.6e}", di.value));
    o.check("var sigma = 2(<sigma> + delta_I_sigma)", res_ok, format!("residual {:.1e}", res.value));
    Ok(o)
}

fn tur(c: &RunConfig) -> Result<Outcome> {
    let (label, rep) = analytic_report(c)?;
    let r = rep.tur_ratio.ok_or(Error::ZeroDissipation { value: rep.mean_w_tilde.value.powi(2) })?;
    let mut o = Outcome::new(json!({ "model": label, "tur_ratio": r, "report": rep }));
    o.check("tur_ratio >= 2", r.value >= 2.0 - r.tol, format!("{:.6}", r.value));
    Ok(o)
}

fn fig1(c: &RunConfig) -> Result<Outcome> {
    let rows = fig1_sweep(&c.fig1)?;
    let mut csv = String::from(Fig1Row::HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv());
        csv.push('\n');
    }
    let tur_min = rows.iter().map(|r| r.tur_ratio).fold(f64::INFINITY, f64::min);
    let gap_min = rows.iter().map(|r| r.fdr_gap).fold(f64::INFINITY, f64::min);
    let eq_dev = rows
        .iter()
        .map(|r| (r.fdr_gap - 2.0 * r.delta_i_sigma).abs() / r.fdr_gap.abs().max(1e-300))
        .fold(0.0, f64::max);
    let tagged = |x: f64| Tagged::new(x, Route::IonClosedForm, 1e-10 * x.abs().max(1.0));
    let mut o = Outcome::new(json!({
        "grid": c.fig1,
        "points": rows.len(),
        "min_tur_ratio": tagged(tur_min),
        "min_fdr_gap": tagged(gap_min),
        "max_relative_fdr_equality_deviation": tagged(eq_dev),
    }));
    o.check("tur_ratio >= 2 everywhere", tur_min >= 2.0, format!("min {tur_min:.6}"));
    o.check("fdr_gap >= 0 everywhere", gap_min >= 0.0, format!("min {gap_min:.3e}"));
    o.check("fdr_gap = 2 delta_I_sigma", eq_dev <= 1e-8, format!("max relative deviation {eq_dev:.1e}"));
    o.tables.push(("fig1.csv".into(), csv));
    Ok(o)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn cross_check(c: &RunConfig) -> Result<Outcome> {
    let p = c.protocol()?;
    let mc = ensemble(p.as_ref(), c)?.cumulants();
    let exact = cumulants_from_mgf(p.as_ref(), c.numerics.stencil())?;
    let slow = SlowPath::new(p.as_ref(), c.numerics.slow())?.cumulants()?;
    let closed = c.ion().map(closed_form_report).transpose()?;
    let pick = |r: &CumulantReport| [r.mean_sigma, r.var_sigma, r.mean_w_tilde, r.var_w];
    let names = ["mean_sigma", "var_sigma", "mean_w_tilde", "var_w"];
    let z = c.gates.z;
    let mut o = Outcome::new(Value::Null);
    let mut csv = String::from("quantity,trajectories,trajectories_se,exact_mgf,exact_mgf_tol,slow_driving,slow_driving_tol");
    csv.push_str(if closed.is_some() { ",ion_closed_form,max_rel_dev\n" } else { ",max_rel_dev\n" });
    let mut table = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let (m, x, s) = (pick(&mc)[k], pick(&exact)[k], pick(&slow)[k]);
        if !x.value.is_finite() {
            continue;
        }
        let cf = closed.as_ref().map(|r| pick(r)[k]);
        let mut dev = rel(m.value, x.value).max(rel(s.value, x.value));
        if let Some(cf) = cf {
            dev = dev.max(rel(cf.value, x.value));
        }
        let _ = write!(csv, "{name},{:e},{:e},{:e},{:e},{:e},{:e}", m.value, m.tol, x.value, x.tol, s.value, s.tol);
        if let Some(cf) = cf {
            let _ = write!(csv, ",{:e}", cf.value);
        }
        let _ = writeln!(csv, ",{dev:e}");

        let mc_ok = (m.value - x.value).abs() <= z * m.tol + x.tol;
        o.check(&format!("{name} trajectories vs exact"), mc_ok, format!("{:.5e} ± {:.1e} vs {:.5e}", m.value, m.tol, x.value));
        let slow_ok = rel(s.value, x.value) <= c.gates.slow_relative;
        o.check(&format!("{name} slow vs exact"), slow_ok, format!("relative {:.2e} (gate {:.0e})", rel(s.value, x.value), c.gates.slow_relative));
        let mut row = json!({
            "quantity": name,
            "trajectories": m,
            "exact_mgf": x,
            "slow_driving": s,
            "max_relative_deviation": Tagged::new(dev, Route::ExactMgf, x.tol / x.value.abs().max(1e-300)),
            "gates": { "trajectories_vs_exact": mc_ok, "slow_vs_exact": slow_ok },
        });
        if let Some(cf) = cf {
            let cf_ok = rel(cf.value, s.value) <= c.gates.closed_form_relative;
            o.check(&format!("{name} closed form vs slow"), cf_ok, format!("relative {:.2e} (gate {:.0e})", rel(cf.value, s.value), c.gates.closed_form_relative));
            row["ion_closed_form"] = to_value(&cf);
            row["gates"]["closed_form_vs_slow"] = Value::Bool(cf_ok);
        }
        table.push(row);
    }
    o.json = json!({ "model": p.label(), "table": table });
    o.tables.push(("cross_check.csv".into(), csv));
    Ok(o)
}
