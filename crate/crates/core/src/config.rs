//! Run configuration: one JSON file, overridable from the command line,
//! validated in full before anything is computed.
//!
//! ```json
//! {
//!   "model": { "kind": "qubit", "tau": 50.0 },
//!   "route": "trajectories",
//!   "numerics": { "dt": 0.01, "n_traj": 200000 },
//!   "seed": 1
//! }
//! ```
//!
//! Custom models are read from two plain-text files. A matrix is written
//! row by row, one row per line, entries `re,im` separated by whitespace;
//! `#` starts a comment. The jump file holds several matrices, each opened
//! by a `> label` line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ion::{max_tail, Fig1Grid, IonParams, IonTwin};
use crate::lindblad::{build_generator, check_structure, gibbs_state, steady_state, Jump, ModelSpec};
use crate::operator::{C64, Op};
use crate::protocol::{Protocol, QubitDrive, StaticProtocol};
use crate::slow::SlowOptions;
use crate::tilted::{MgfOptions, StencilOptions};
use crate::trajectory::{Binning, Schedule};

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "QFLUCT_OUT";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub route: RouteChoice,
    pub numerics: Numerics,
    pub gates: Gates,
    pub fig1: Fig1Grid,
    pub seed: u64,
    /// Falls back to `$QFLUCT_OUT`, then `qfluct-out`.
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::Qubit(QubitConfig::default()),
            route: RouteChoice::Trajectories,
            numerics: Numerics::default(),
            gates: Gates::default(),
            fig1: Fig1Grid::default(),
            seed: 1,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    Qubit(QubitConfig),
    Ion(IonParams),
    CustomMatrixFile(CustomConfig),
}

/// The driven thermal qubit; pairs are `(start, swing)` of each bump.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QubitConfig {
    pub tau: f64,
    pub omega: (f64, f64),
    pub beta: (f64, f64),
    pub theta: (f64, f64),
    pub gamma: f64,
    pub skewed: bool,
}

impl Default for QubitConfig {
    fn default() -> Self {
        let d = QubitDrive::standard(50.0);
        Self { tau: d.tau, omega: d.omega, beta: d.beta, theta: d.theta, gamma: d.gamma, skewed: false }
    }
}

impl QubitConfig {
    pub fn drive(&self) -> QubitDrive {
        QubitDrive {
            omega: self.omega,
            beta: self.beta,
            theta: self.theta,
            gamma: self.gamma,
            tau: self.tau,
            skewed: self.skewed,
        }
    }
}

/// A static model read from matrix files and held at `beta` for `tau`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomConfig {
    pub hamiltonian: PathBuf,
    pub jumps: PathBuf,
    pub beta: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouteChoice {
    Trajectories,
    ExactMgf,
    SlowDriving,
    IonClosedForm,
    CrossCheck,
}

impl std::str::FromStr for RouteChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::Config(format!("unknown route '{s}'")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub dt: f64,
    pub n_traj: usize,
    /// Initial step of the tilted propagation.
    pub h: f64,
    pub h_min: f64,
    pub mgf_tol: f64,
    /// Fixed step of the finite-difference cumulants.
    pub stencil_h: f64,
    pub stencil_du: f64,
    pub stencil_tol: f64,
    pub with_covariance: bool,
    pub dense_limit: usize,
    pub slow_nodes: usize,
    pub allow_non_db: bool,
    /// Tilt grid: every `(u, v)` pair is evaluated.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub joint_bins: bool,
    pub min_count: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            dt: 0.01,
            n_traj: 200_000,
            h: 0.1,
            h_min: 1e-3,
            mgf_tol: 1e-10,
            stencil_h: 0.05,
            stencil_du: 0.02,
            stencil_tol: 1e-3,
            with_covariance: true,
            dense_limit: 6,
            slow_nodes: 64,
            allow_non_db: false,
            u: vec![0.0, 0.3, 0.7, 1.0],
            v: vec![-0.2, 0.0, 0.2],
            joint_bins: true,
            min_count: 100,
        }
    }
}

impl Numerics {
    pub fn mgf(&self) -> MgfOptions {
        MgfOptions { h: self.h, tol: self.mgf_tol, h_min: self.h_min, dense_limit: self.dense_limit }
    }

    pub fn stencil(&self) -> StencilOptions {
        StencilOptions {
            h: self.stencil_h,
            du: self.stencil_du,
            dv: None,
            tol: self.stencil_tol,
            with_covariance: self.with_covariance,
            dense_limit: self.dense_limit,
        }
    }

    pub fn slow(&self) -> SlowOptions {
        SlowOptions { nodes: self.slow_nodes, allow_non_db: self.allow_non_db }
    }

    pub fn binning(&self, z: f64) -> Binning {
        Binning { joint: self.joint_bins, min_count: self.min_count, z, ..Binning::default() }
    }
}

/// Pass/fail thresholds of the check commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gates {
    /// Allowed deviation in standard errors for Monte Carlo checks.
    pub z: f64,
    /// `|G(1,0) − 1|`.
    pub mgf_normalisation: f64,
    /// Slow-driving cumulants against the exact route, relative.
    pub slow_relative: f64,
    /// Closed forms against the numeric slow route, relative.
    pub closed_form_relative: f64,
    /// Fail `check-dft` on violations rather than only report them.
    pub strict_dft: bool,
}

impl Default for Gates {
    fn default() -> Self {
        Self { z: 3.0, mgf_normalisation: 1e-8, slow_relative: 0.05, closed_form_relative: 1e-3, strict_dft: false }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("qfluct-out"))
    }

    /// The config as recorded in reports; where results go is not part
    /// of a run's identity.
    pub fn canonical(&self) -> Self {
        Self { output_dir: None, ..self.clone() }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.canonical()).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn ion(&self) -> Option<&IonParams> {
        match &self.model {
            ModelConfig::Ion(p) => Some(p),
            _ => None,
        }
    }

    pub fn tau(&self) -> f64 {
        match &self.model {
            ModelConfig::Qubit(q) => q.tau,
            ModelConfig::Ion(p) => p.tau,
            ModelConfig::CustomMatrixFile(c) => c.tau,
        }
    }

    /// Build the protocol the configuration describes.
    pub fn protocol(&self) -> Result<Box<dyn Protocol>> {
        Ok(match &self.model {
            ModelConfig::Qubit(q) => Box::new(q.drive()),
            ModelConfig::Ion(p) => Box::new(IonTwin::new(*p)?),
            ModelConfig::CustomMatrixFile(c) => {
                let h = read_matrix(&c.hamiltonian)?;
                let jumps = read_jumps(&c.jumps)?;
                let model = ModelSpec::new(h, jumps).map_err(|e| Error::Config(format!("custom model: {e}")))?;
                Box::new(StaticProtocol { model, beta: c.beta, tau: c.tau })
            }
        })
    }

    /// Check every knob against the preconditions of the modules that
    /// `command` will run, naming the first violation.
    pub fn validate(&self, command: &str) -> Result<()> {
        let bad = |what: String| Err(Error::Config(what));
        let n = &self.numerics;
        let positive = [
            ("numerics.dt", n.dt),
            ("numerics.h", n.h),
            ("numerics.h_min", n.h_min),
            ("numerics.mgf_tol", n.mgf_tol),
            ("numerics.stencil_h", n.stencil_h),
            ("numerics.stencil_du", n.stencil_du),
            ("numerics.stencil_tol", n.stencil_tol),
            ("gates.z", self.gates.z),
            ("gates.mgf_normalisation", self.gates.mgf_normalisation),
            ("gates.slow_relative", self.gates.slow_relative),
            ("gates.closed_form_relative", self.gates.closed_form_relative),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {x}"));
            }
        }
        if n.h_min > n.h {
            return bad(format!("numerics.h_min ({}) exceeds numerics.h ({})", n.h_min, n.h));
        }
        if n.n_traj < 2 {
            return bad(format!("numerics.n_traj must be at least 2, got {}", n.n_traj));
        }
        if n.slow_nodes < 4 {
            return bad(format!("numerics.slow_nodes must be at least 4, got {}", n.slow_nodes));
        }
        if n.u.is_empty() || n.v.is_empty() || n.u.iter().chain(&n.v).any(|x| !x.is_finite()) {
            return bad("numerics.u and numerics.v must be non-empty lists of finite numbers".into());
        }
        let tau = self.tau();
        if !(tau > 0.0 && tau.is_finite()) {
            return bad(format!("model.tau must be positive, got {tau}"));
        }
        match &self.model {
            ModelConfig::Qubit(q) => {
                if !(q.gamma > 0.0) {
                    return bad(format!("model.gamma must be positive, got {}", q.gamma));
                }
            }
            ModelConfig::Ion(p) => {
                p.validate().map_err(|e| Error::Config(e.to_string()))?;
                let tail = max_tail(p);
                if !(tail < p.tail_limit) {
                    return bad(format!(
                        "model.n_max = {} leaves {tail:e} in the top level, above model.tail_limit = {:e}",
                        p.n_max, p.tail_limit
                    ));
                }
            }
            ModelConfig::CustomMatrixFile(c) => {
                if !(c.beta > 0.0 && c.beta.is_finite()) {
                    return bad(format!("model.beta must be positive, got {}", c.beta));
                }
            }
        }
        if self.route == RouteChoice::IonClosedForm && self.ion().is_none() {
            return bad("route ion-closed-form needs model.kind = ion".into());
        }
        if command == "fig1" {
            let g = &self.fig1;
            if !(g.t_eq.0 > 0.0 && g.t_eq.1 >= g.t_eq.0 && g.t_eq.2 >= 1) {
                return bad("fig1.t_eq must be (lo > 0, hi >= lo, points >= 1)".into());
            }
            if !(g.t_cold.0 > 0.0 && g.t_cold.1 >= g.t_cold.0 && g.t_cold.1 < g.t_hot && g.t_cold.2 >= 1) {
                return bad("fig1.t_cold must be (lo > 0, lo <= hi < t_hot, points >= 1)".into());
            }
            return Ok(());
        }

        let p = self.protocol()?;
        let grid = 200;
        for k in 0..=grid {
            let t = tau * k as f64 / grid as f64;
            p.control(t).map_err(|e| Error::Config(format!("protocol at t = {t}: {e}")))?;
        }
        for t in [0.0, tau] {
            let cp = p.control(t)?;
            let ss = p.steady(&cp)?;
            check_structure(&cp.model, &ss, cp.beta)
                .map_err(|e| Error::Config(format!("structure check at t = {t}: {e}")))?;
        }
        if let ModelConfig::CustomMatrixFile(c) = &self.model {
            // held at a Gibbs state only if the generator relaxes to it
            let cp = p.control(0.0)?;
            let generic = steady_state(&build_generator(&cp.model)?)?;
            let (gibbs, _) = gibbs_state(&cp.model.h, c.beta)?;
            let diff = crate::operator::max_abs(&(&generic.pi - &gibbs.pi));
            if diff > 1e-8 {
                return bad(format!("custom model does not relax to the Gibbs state at beta = {} (|Δπ| = {diff:e})", c.beta));
            }
        }
        let uses_trajectories = matches!(command, "check-ft" | "check-dft" | "cross-check")
            || (command == "simulate" && matches!(self.route, RouteChoice::Trajectories | RouteChoice::CrossCheck));
        if uses_trajectories {
            Schedule::new(p.as_ref(), n.dt).map_err(|e| Error::Config(format!("numerics.dt: {e}")))?;
        }
        Ok(())
    }
}

/// Parse one complex matrix.
pub fn parse_matrix(text: &str) -> Result<Op> {
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| parse_entry(tok).ok_or_else(|| Error::Config(format!("line {}: bad entry '{tok}'", ln + 1))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let d = rows.len();
    if d == 0 {
        return Err(Error::Config("empty matrix".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::Config(format!("matrix is not square: {d} rows but a row of {}", r.len())));
    }
    Ok(Op::from_fn(d, d, |i, j| rows[i][j]))
}

fn parse_entry(tok: &str) -> Option<C64> {
    let (re, im) = tok.split_once(',')?;
    Some(C64::new(re.trim().parse().ok()?, im.trim().parse().ok()?))
}

/// Parse a list of labelled jump operators.
pub fn parse_jumps(text: &str) -> Result<Vec<Jump>> {
    let mut out = Vec::new();
    let mut label: Option<String> = None;
    let mut body = String::new();
    let mut flush = |label: &mut Option<String>, body: &mut String| -> Result<()> {
        if let Some(l) = label.take() {
            let op = parse_matrix(body).map_err(|e| Error::Config(format!("jump '{l}': {e}")))?;
            out.push(Jump::new(l, op));
        } else if !body.trim().is_empty() && body.lines().any(|l| !l.split('#').next().unwrap_or("").trim().is_empty()) {
            return Err(Error::Config("matrix data before the first '> label' line".into()));
        }
        body.clear();
        Ok(())
    };
    for line in text.lines() {
        if let Some(rest) = line.trim_start().strip_prefix('>') {
            flush(&mut label, &mut body)?;
            label = Some(rest.trim().to_string());
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    flush(&mut label, &mut body)?;
    if out.is_empty() {
        return Err(Error::Config("no jump operators found".into()));
    }
    Ok(out)
}

/// Write a matrix in the format [`parse_matrix`] reads, at full precision.
pub fn format_matrix(a: &Op) -> String {
    let mut s = String::new();
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{:e},{:e}", a[(i, j)].re, a[(i, j)].im)).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn format_jumps(jumps: &[Jump]) -> String {
    jumps.iter().map(|j| format!("> {}\n{}", j.label, format_matrix(&j.op))).collect()
}

fn read_matrix(path: &Path) -> Result<Op> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_matrix(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn read_jumps(path: &Path) -> Result<Vec<Jump>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_jumps(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::random_detailed_balance_model;

    #[test]
    fn matrix_files_round_trip() {
        let m = random_detailed_balance_model(3, 0.7, 4).unwrap();
        let h = parse_matrix(&format_matrix(&m.h)).unwrap();
        assert_eq!(h, m.h);
        let jumps = parse_jumps(&format!("# generated\n{}", format_jumps(&m.jumps))).unwrap();
        assert_eq!(jumps.len(), m.jumps.len());
        for (a, b) in jumps.iter().zip(&m.jumps) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.op, b.op);
        }
    }

    #[test]
    fn malformed_matrices_are_rejected() {
        assert!(parse_matrix("1,0 0,0\n0,0").is_err());
        assert!(parse_matrix("1;0").is_err());
        assert!(parse_matrix("# nothing").is_err());
        assert!(parse_jumps("1,0\n> a\n1,0").is_err());
    }

    #[test]
    fn defaults_validate_and_hash_is_stable() {
        let c = RunConfig::default();
        c.validate("check-ft").unwrap();
        let again = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c.hash(), again.hash());
        let mut d = c.clone();
        d.seed = 2;
        assert_ne!(c.hash(), d.hash());
    }

    #[test]
    fn bad_knobs_name_the_violation() {
        let mut c = RunConfig::default();
        c.numerics.dt = 0.1;
        let e = c.validate("check-ft").unwrap_err().to_string();
        assert!(e.contains("numerics.dt"), "{e}");
        let mut c = RunConfig::default();
        c.numerics.h_min = 1.0;
        assert!(c.validate("exact-mgf").unwrap_err().to_string().contains("h_min"));
        let c = RunConfig::from_json(r#"{"model": {"kind": "ion", "n_max": 10}}"#).unwrap();
        assert!(c.validate("slow-cgf").unwrap_err().to_string().contains("n_max"));
        assert!(RunConfig::from_json(r#"{"model": {"kind": "qubit", "omgea": [1, 0]}}"#).is_err());
        let c = RunConfig { route: RouteChoice::IonClosedForm, ..RunConfig::default() };
        assert!(c.validate("simulate").is_err());
    }
}
