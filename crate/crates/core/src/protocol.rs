//! Driving protocols: a control path `λ(t) = {β(t), Λ(t)}` over `[0, τ]`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lindblad::{gibbs_state, structure_report, Jump, ModelSpec, SteadyState, STRUCTURE_TOL};
use crate::operator::*;
use crate::quad;

/// Everything the pipelines need at one instant of a protocol.
#[derive(Debug, Clone)]
pub struct ControlPoint {
    pub t: f64,
    pub model: ModelSpec,
    /// Physical `dH/dt` expressed in the working basis.
    pub h_dot: Op,
    /// Inverse temperature; `None` for non-thermal steady states.
    pub beta: Option<f64>,
    pub beta_dot: f64,
    /// Hermitian generator of a moving working basis. It enters the
    /// dynamics (`H + F`) but never the energy bookkeeping.
    pub frame: Option<Op>,
}

impl ControlPoint {
    /// Hamiltonian that drives the state in the working basis.
    pub fn dynamical_h(&self) -> Op {
        match &self.frame {
            Some(f) => &self.model.h + f,
            None => self.model.h.clone(),
        }
    }

    pub fn dynamical_model(&self) -> ModelSpec {
        match &self.frame {
            Some(_) => ModelSpec::new(self.dynamical_h(), self.model.jumps.clone()).expect("validated model"),
            None => self.model.clone(),
        }
    }
}

pub trait Protocol: Send + Sync {
    fn duration(&self) -> f64;

    fn control(&self, t: f64) -> Result<ControlPoint>;

    /// Whether steady states are Gibbs states of `H` at `β(t)`.
    fn thermal(&self) -> bool;

    fn label(&self) -> String;

    /// Steady state at a control point. Thermal protocols use the Gibbs
    /// form, which keeps exact log-populations even where they underflow.
    fn steady(&self, cp: &ControlPoint) -> Result<SteadyState> {
        match cp.beta {
            Some(b) if self.thermal() => Ok(gibbs_state(&cp.model.h, b)?.0),
            _ => {
                let g = crate::lindblad::build_generator(&cp.model)?;
                crate::lindblad::steady_state(&g)
            }
        }
    }

    /// `Δφ_x` for every jump at a control point.
    fn jump_potentials(&self, cp: &ControlPoint) -> Result<Vec<f64>> {
        let ss = self.steady(cp)?;
        let rep = structure_report(&cp.model, &ss, cp.beta, STRUCTURE_TOL);
        for (k, label) in rep.labels.iter().enumerate() {
            if !(rep.residuals[k] <= rep.tol) {
                return Err(Error::NotPrivileged { label: label.clone(), residual: rep.residuals[k] });
            }
        }
        Ok(rep.delta_phi)
    }

    /// `ln Z(t)` for thermal protocols.
    fn ln_partition(&self, cp: &ControlPoint) -> Result<f64> {
        let b = cp.beta.ok_or_else(|| Error::Protocol("partition function needs a temperature".into()))?;
        Ok(gibbs_state(&cp.model.h, b)?.1)
    }
}

pub type SharedProtocol = Arc<dyn Protocol>;

/// `sin²(πt/τ)` and its time derivative: the smooth bump used by every
/// builtin protocol (stationary endpoints, periodic).
pub fn bump(t: f64, tau: f64) -> (f64, f64) {
    let x = PI * t / tau;
    (x.sin().powi(2), (PI / tau) * (2.0 * x).sin())
}

/// Check that `Ḣ` and `β̇` vanish at both endpoints.
pub fn check_endpoints(p: &dyn Protocol) -> Result<()> {
    for t in [0.0, p.duration()] {
        let cp = p.control(t)?;
        let hd = max_abs(&cp.h_dot);
        if hd > 1e-10 || cp.beta_dot.abs() > 1e-10 {
            return Err(Error::Protocol(format!(
                "derivatives do not vanish at t = {t} (|Ḣ| = {hd:e}, |β̇| = {:e})",
                cp.beta_dot.abs()
            )));
        }
    }
    Ok(())
}

/// Adiabatic work `𝒲 = ∫ tr[Ḣ π] dt`.
pub fn adiabatic_work(p: &dyn Protocol, tol: f64) -> Result<f64> {
    let failure = std::sync::Mutex::new(None);
    let f = |t: f64| -> f64 {
        let r = p.control(t).and_then(|cp| {
            let ss = p.steady(&cp)?;
            Ok(trace_product(&cp.h_dot, &ss.pi).re)
        });
        match r {
            Ok(v) => v,
            Err(e) => {
                *failure.lock().unwrap() = Some(e);
                f64::NAN
            }
        }
    };
    let est = quad::adaptive(&f, 0.0, p.duration(), tol);
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(est?.value)
}

/// `ΔF = T(0) ln Z(0) − T(τ) ln Z(τ)`.
pub fn free_energy_change(p: &dyn Protocol) -> Result<f64> {
    let c0 = p.control(0.0)?;
    let c1 = p.control(p.duration())?;
    let (b0, b1) = match (c0.beta, c1.beta) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Protocol("free energy needs a thermal protocol".into())),
    };
    Ok(p.ln_partition(&c0)? / b0 - p.ln_partition(&c1)? / b1)
}

/// Thermal qubit jumps `√(Γ(N+1)) σ₋`, `√(ΓN) σ₊` along the axis `n̂`.
fn qubit_model(omega: f64, theta: f64, beta: f64, gamma: f64) -> Result<ModelSpec> {
    let r = rotation_y(theta);
    let h = (pauli::sz() * c(theta.cos()) + pauli::sx() * c(theta.sin())) * c(omega / 2.0);
    let n = 1.0 / (beta * omega).exp_m1();
    let sm = &r * pauli::sminus() * r.adjoint();
    let sp = sm.adjoint();
    ModelSpec::new(
        h,
        vec![Jump::new("minus", sm * c((gamma * (n + 1.0)).sqrt())), Jump::new("plus", sp * c((gamma * n).sqrt()))],
    )
}

/// `exp(−iθσy/2)`, real.
fn rotation_y(theta: f64) -> Op {
    let (s, co) = (0.5 * theta).sin_cos();
    from_real(2, &[co, -s, s, co])
}

/// Qubit `H = (ω/2)(cos θ σz + sin θ σx)` in contact with a bath at `β`,
/// each of `ω, β, θ` moved by a `sin²(πt/τ)` bump. A non-zero `θ` swing
/// makes `[Ḣ, H] ≠ 0`.
#[derive(Debug, Clone)]
pub struct QubitDrive {
    pub omega: (f64, f64),
    pub beta: (f64, f64),
    pub theta: (f64, f64),
    pub gamma: f64,
    pub tau: f64,
    /// Replace the `ω` bump by the engine cycle `½ sin(2πt/τ) − ¼ sin(4πt/τ)`,
    /// which breaks the `t ↦ τ − t` symmetry of the drive.
    pub skewed: bool,
}

impl QubitDrive {
    /// The slow coherent drive used by the qubit checks.
    pub fn standard(tau: f64) -> Self {
        Self { omega: (1.0, 0.5), beta: (1.0, -0.3), theta: (0.0, 0.6), gamma: 1.0, tau, skewed: false }
    }

    /// The standard drive with a time-asymmetric frequency sweep.
    pub fn skewed(tau: f64) -> Self {
        Self { skewed: true, ..Self::standard(tau) }
    }

    /// Frequency sweep only: `[Ḣ, H] = 0`.
    pub fn commuting(tau: f64) -> Self {
        Self { omega: (1.0, 0.5), beta: (1.0, -0.3), theta: (0.0, 0.0), gamma: 1.0, tau, skewed: false }
    }

    fn curves(&self, t: f64) -> [(f64, f64); 3] {
        let (s, ds) = bump(t, self.tau);
        let (ws, wds) = if self.skewed {
            let x = 2.0 * PI * t / self.tau;
            let k = 2.0 * PI / self.tau;
            (0.5 * x.sin() - 0.25 * (2.0 * x).sin(), k * 0.5 * (x.cos() - (2.0 * x).cos()))
        } else {
            (s, ds)
        };
        [
            (self.omega.0 + self.omega.1 * ws, self.omega.1 * wds),
            (self.beta.0 + self.beta.1 * s, self.beta.1 * ds),
            (self.theta.0 + self.theta.1 * s, self.theta.1 * ds),
        ]
    }

    pub fn mean_beta(&self) -> f64 {
        self.beta.0 + 0.5 * self.beta.1
    }
}

impl Protocol for QubitDrive {
    fn duration(&self) -> f64 {
        self.tau
    }

    fn control(&self, t: f64) -> Result<ControlPoint> {
        let [(w, wd), (b, bd), (th, thd)] = self.curves(t);
        if !(b > 0.0 && w > 0.0) {
            return Err(Error::Protocol(format!("ω = {w}, β = {b} at t = {t}")));
        }
        let model = qubit_model(w, th, b, self.gamma)?;
        let axis = pauli::sz() * c(th.cos()) + pauli::sx() * c(th.sin());
        let daxis = pauli::sx() * c(th.cos()) - pauli::sz() * c(th.sin());
        let h_dot = axis * c(wd / 2.0) + daxis * c(w * thd / 2.0);
        Ok(ControlPoint { t, model, h_dot, beta: Some(b), beta_dot: bd, frame: None })
    }

    fn thermal(&self) -> bool {
        true
    }

    fn label(&self) -> String {
        format!("qubit-drive(tau={})", self.tau)
    }

    fn jump_potentials(&self, cp: &ControlPoint) -> Result<Vec<f64>> {
        let [(w, _), (b, _), _] = self.curves(cp.t);
        Ok(vec![-b * w, b * w])
    }
}

/// A fixed thermal model held for a time `τ`.
#[derive(Debug, Clone)]
pub struct StaticProtocol {
    pub model: ModelSpec,
    pub beta: f64,
    pub tau: f64,
}

impl StaticProtocol {
    pub fn qubit(omega: f64, beta: f64, gamma: f64, tau: f64) -> Result<Self> {
        Ok(Self { model: qubit_model(omega, 0.0, beta, gamma)?, beta, tau })
    }
}

impl Protocol for StaticProtocol {
    fn duration(&self) -> f64 {
        self.tau
    }
    fn control(&self, t: f64) -> Result<ControlPoint> {
        let d = self.model.dim();
        Ok(ControlPoint {
            t,
            model: self.model.clone(),
            h_dot: Op::zeros(d, d),
            beta: Some(self.beta),
            beta_dot: 0.0,
            frame: None,
        })
    }
    fn thermal(&self) -> bool {
        true
    }
    fn label(&self) -> String {
        "static".into()
    }
}

/// Three-level model with a non-Gibbs steady state known in closed form:
/// `π(t) = U(t) diag(p(t)) U(t)†` with `U = exp(−iθ(t) G)`. Jumps are
/// matrix units between the eigenvectors of `π`, with rates balanced
/// against `p` plus a cyclic flux that breaks detailed balance while
/// keeping a privileged representation.
#[derive(Debug, Clone)]
pub struct CyclicThreeLevel {
    pub tau: f64,
    pub theta_swing: f64,
    pub flux: f64,
}

impl CyclicThreeLevel {
    pub fn new(tau: f64) -> Self {
        Self { tau, theta_swing: 0.8, flux: 0.15 }
    }

    fn rotation_generator() -> Op {
        Op::from_fn(3, 3, |i, j| match (i, j) {
            (0, 1) => C64::new(0.3, 0.4),
            (1, 0) => C64::new(0.3, -0.4),
            (1, 2) => c(0.7),
            (2, 1) => c(0.7),
            (0, 2) => C64::new(0.0, -0.2),
            (2, 0) => C64::new(0.0, 0.2),
            _ => ZERO,
        })
    }

    /// `(−ln p, d(−ln p)/dt)`.
    fn potentials(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        let (s, ds) = bump(t, self.tau);
        let eps = [0.0 + 0.3 * s, 0.8 - 0.4 * s, 1.5 + 0.5 * s];
        let deps = [0.3 * ds, -0.4 * ds, 0.5 * ds];
        let ln_z = eps.iter().map(|e| (-e).exp()).sum::<f64>().ln();
        let p: Vec<f64> = eps.iter().map(|e| (-e - ln_z).exp()).collect();
        let mean_d: f64 = p.iter().zip(&deps).map(|(p, d)| p * d).sum();
        let phi = [eps[0] + ln_z, eps[1] + ln_z, eps[2] + ln_z];
        let dphi = [deps[0] - mean_d, deps[1] - mean_d, deps[2] - mean_d];
        (phi, dphi)
    }

    fn unitary(&self, t: f64) -> (Op, f64) {
        let (s, ds) = bump(t, self.tau);
        let th = self.theta_swing * s;
        let g = SpectralDecomp::new(&Self::rotation_generator()).expect("Hermitian");
        let u = g.eigenvectors.clone();
        let phases = Op::from_diagonal(&nalgebra::DVector::from_iterator(
            3,
            g.eigenvalues.iter().map(|e| C64::from_polar(1.0, -th * e)),
        ));
        (&u * phases * u.adjoint(), self.theta_swing * ds)
    }

    /// Analytic `dΦ/dt`.
    pub fn phi_dot_exact(&self, t: f64) -> Op {
        let (u, thd) = self.unitary(t);
        let (phi, dphi) = self.potentials(t);
        let phi_op = &u * diag(&phi) * u.adjoint();
        let g = Self::rotation_generator();
        let rot = (&g * &phi_op - &phi_op * &g) * C64::new(0.0, -thd);
        rot + &u * diag(&dphi) * u.adjoint()
    }
}

impl Protocol for CyclicThreeLevel {
    fn duration(&self) -> f64 {
        self.tau
    }

    fn control(&self, t: f64) -> Result<ControlPoint> {
        let (u, thd) = self.unitary(t);
        let (phi, _) = self.potentials(t);
        let p: Vec<f64> = phi.iter().map(|f| (-f).exp()).collect();
        let mut jumps = Vec::new();
        let unit = |k: usize, l: usize, rate: f64| -> Op {
            let mut e = Op::zeros(3, 3);
            e[(k, l)] = c(rate.sqrt());
            &u * e * u.adjoint()
        };
        let a = [[0.0, 0.6, 0.4], [0.6, 0.0, 0.9], [0.4, 0.9, 0.0]];
        for k in 0..3 {
            for l in 0..3 {
                if k == l {
                    continue;
                }
                // l -> k; balanced part a_kl √(p_k/p_l), cyclic part J/p_l
                // along 0 -> 1 -> 2 -> 0
                let mut rate = a[k][l] * (p[k] / p[l]).sqrt();
                if k == (l + 1) % 3 {
                    rate += self.flux / p[l];
                }
                jumps.push(Jump::new(format!("{l}->{k}"), unit(k, l, rate)));
            }
        }
        let hvals = [0.0, 0.7, 1.9];
        let h = &u * diag(&hvals) * u.adjoint();
        let g = Self::rotation_generator();
        let h_dot = (&g * &h - &h * &g) * C64::new(0.0, -thd);
        let model = ModelSpec::new((&h + h.adjoint()) * c(0.5), jumps)?;
        Ok(ControlPoint { t, model, h_dot, beta: None, beta_dot: 0.0, frame: None })
    }

    fn thermal(&self) -> bool {
        false
    }

    fn label(&self) -> String {
        format!("cyclic-three-level(tau={})", self.tau)
    }

    fn steady(&self, cp: &ControlPoint) -> Result<SteadyState> {
        let (u, _) = self.unitary(cp.t);
        let (phi, _) = self.potentials(cp.t);
        let log_p: Vec<f64> = phi.iter().map(|f| -f).collect();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&i, &j| log_p[i].total_cmp(&log_p[j]));
        let vecs = Op::from_fn(3, 3, |r, col| u[(r, order[col])]);
        let lp: Vec<f64> = order.iter().map(|&i| log_p[i]).collect();
        let spectral = SpectralDecomp::from_parts(lp.iter().map(|l| l.exp()).collect(), vecs);
        let pi = spectral.reconstruct();
        Ok(SteadyState { pi, spectral, log_p: lp, gap: None })
    }

    fn jump_potentials(&self, cp: &ControlPoint) -> Result<Vec<f64>> {
        let (phi, _) = self.potentials(cp.t);
        let mut out = Vec::new();
        for k in 0..3 {
            for l in 0..3 {
                if k != l {
                    out.push(phi[k] - phi[l]);
                }
            }
        }
        Ok(out)
    }
}
