//! Exact generating functions from the tilted generator `𝓛 + δΥ★`, where
//! `Υ★X = ΥX + XΥ†`.
//!
//! The time-ordered exponential is a midpoint product of constant-generator
//! steps. Small models exponentiate the dense superoperator; larger ones
//! (the oscillator) integrate each step in operator form.

use crate::error::{Error, Result};
use crate::lindblad::SteadyState;
use crate::operator::*;
use crate::protocol::{adiabatic_work, ControlPoint, Protocol};
use crate::report::{CumulantReport, Route};
use crate::slow::current_operator_phi;

/// `∫₀^c e^{−xΔ} dx`.
fn exp_integral(c: f64, delta: f64, degenerate: bool) -> f64 {
    if degenerate {
        c
    } else {
        -(-c * delta).exp_m1() / delta
    }
}

/// Joint tilt `δΥ^{(u,v)} = −∫₀^{(uβ+v)/2} e^{−sH} δḢ e^{sH} ds − (u/2) β̇ δH`.
pub fn current_operator_joint(cp: &ControlPoint, ss: &SteadyState, u: f64, v: f64) -> Result<Op> {
    let beta = cp.beta.ok_or_else(|| Error::Protocol("joint tilt needs a thermal steady state".into()))?;
    let h = &cp.model.h;
    let d = h.nrows();
    let cut = 0.5 * (u * beta + v);
    let dh = shifted(h, &ss.pi);
    let dhd = shifted(&cp.h_dot, &ss.pi);
    let scale = max_abs(h).max(1e-300);
    let tilt = |e: &[f64], x: &Op| -> Op {
        Op::from_fn(d, d, |i, j| {
            let delta = e[i] - e[j];
            -x[(i, j)] * exp_integral(cut, delta, delta.abs() <= 1e-10 * scale)
        })
    };
    let integral = if is_diagonal(h) {
        let e: Vec<f64> = (0..d).map(|i| h[(i, i)].re).collect();
        tilt(&e, &dhd)
    } else {
        let sd = SpectralDecomp::new(h)?;
        sd.from_eigenbasis(&tilt(&sd.eigenvalues, &sd.to_eigenbasis(&dhd)))
    };
    Ok(integral - dh * c(0.5 * u * cp.beta_dot))
}

/// Entropy-only tilt `Υ^{(u)} = −∫₀^{u/2} π^s δΦ̇ π^{−s} ds`.
pub fn current_operator_entropy(phi_dot: &Op, ss: &SteadyState, u: f64) -> Op {
    let d = ss.dim();
    let x = ss.spectral.to_eigenbasis(&shifted(phi_dot, &ss.pi));
    let lp = &ss.log_p;
    let t = Op::from_fn(d, d, |i, j| {
        // (π^s X π^{−s})_ij = e^{s (ln p_i − ln p_j)} X_ij
        let r = lp[i] - lp[j];
        -x[(i, j)] * exp_integral(0.5 * u, -r, r.abs() <= 1e-12)
    });
    ss.spectral.from_eigenbasis(&t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tilt {
    Joint { u: f64, v: f64 },
    Entropy { u: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct MgfOptions {
    /// Initial midpoint step.
    pub h: f64,
    /// Target error on `ln G`.
    pub tol: f64,
    /// Smallest step tried before giving up.
    pub h_min: f64,
    /// Largest dimension propagated with dense superoperator exponentials.
    pub dense_limit: usize,
}

impl Default for MgfOptions {
    fn default() -> Self {
        Self { h: 0.1, tol: 1e-10, h_min: 1e-3, dense_limit: 6 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MgfValue {
    pub g: f64,
    pub ln_g: f64,
    pub error: f64,
    /// Finest step used.
    pub h: f64,
}

fn step_tilt(p: &dyn Protocol, cp: &ControlPoint, ss: &SteadyState, tilt: Tilt) -> Result<Op> {
    match tilt {
        Tilt::Joint { u, v } => current_operator_joint(cp, ss, u, v),
        Tilt::Entropy { u } => {
            let phi_dot = current_operator_phi(p, cp.t)?;
            Ok(current_operator_entropy(&phi_dot, ss, u))
        }
    }
}

/// `ln tr P(τ, 0)(π₀)` with `n` midpoint steps.
pub fn ln_mgf_fixed(p: &dyn Protocol, tilt: Tilt, n: usize, dense_limit: usize) -> Result<f64> {
    let tau = p.duration();
    let h = tau / n as f64;
    let c0 = p.control(0.0)?;
    let mut x = p.steady(&c0)?.pi;
    let dense = x.nrows() <= dense_limit;
    let mut ln_g = 0.0;
    for k in 0..n {
        let t = (k as f64 + 0.5) * h;
        let cp = p.control(t)?;
        let ss = p.steady(&cp)?;
        let upsilon = step_tilt(p, &cp, &ss, tilt)?;
        let map = cp.dynamical_model().sandwich(Some(&upsilon));
        x = if dense {
            let v = propagate_step(&map.to_superop(), h, &vec_op(&x))?;
            let y = devec(&v)?;
            (&y + y.adjoint()) * c(0.5)
        } else {
            map.propagate_hermitian(h, &x)
        };
        let tr = x.trace().re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::NonFiniteEntries { context: "tilted propagation" });
        }
        x /= c(tr);
        ln_g += tr.ln();
    }
    Ok(ln_g)
}

/// Adaptive evaluation: halve the step, extrapolate each pair of levels
/// assuming second-order error, and stop when two extrapolations agree.
pub fn mgf(p: &dyn Protocol, tilt: Tilt, opts: MgfOptions) -> Result<MgfValue> {
    if !(opts.h > 0.0 && opts.tol > 0.0) {
        return Err(Error::InvalidArgument("step and tolerance must be positive".into()));
    }
    let tau = p.duration();
    let mut n = (tau / opts.h).ceil().max(1.0) as usize;
    let mut prev = ln_mgf_fixed(p, tilt, n, opts.dense_limit)?;
    let mut prev_rich: Option<f64> = None;
    let mut achieved = f64::INFINITY;
    while tau / (2 * n) as f64 >= opts.h_min {
        n *= 2;
        let next = ln_mgf_fixed(p, tilt, n, opts.dense_limit)?;
        let rich = next + (next - prev) / 3.0;
        if let Some(r) = prev_rich {
            achieved = (rich - r).abs();
            if achieved <= opts.tol {
                return Ok(MgfValue { g: rich.exp(), ln_g: rich, error: achieved, h: tau / n as f64 });
            }
        }
        prev = next;
        prev_rich = Some(rich);
    }
    Err(Error::NoConvergence { tol: opts.tol, achieved })
}

pub fn exact_mgf(p: &dyn Protocol, u: f64, v: f64, opts: MgfOptions) -> Result<MgfValue> {
    if !p.thermal() {
        return Err(Error::Protocol("the joint generating function needs a thermal protocol".into()));
    }
    mgf(p, Tilt::Joint { u, v }, opts)
}

pub fn exact_mgf_entropy(p: &dyn Protocol, u: f64, opts: MgfOptions) -> Result<MgfValue> {
    mgf(p, Tilt::Entropy { u }, opts)
}

#[derive(Debug, Clone, Copy)]
pub struct StencilOptions {
    /// Fixed midpoint step for every stencil point.
    pub h: f64,
    pub du: f64,
    /// Step in `v`; `None` means `du / β̄` with `β̄` the mean of `β(t)`.
    pub dv: Option<f64>,
    /// Allowed Richardson disagreement, relative to each cumulant.
    pub tol: f64,
    pub with_covariance: bool,
    pub dense_limit: usize,
}

impl Default for StencilOptions {
    fn default() -> Self {
        Self { h: 0.05, du: 0.02, dv: None, tol: 1e-3, with_covariance: true, dense_limit: 6 }
    }
}

/// First derivative and second derivative from a five-point line of `K`,
/// each Richardson-extrapolated over steps `δ` and `2δ`.
fn line_derivatives(k: [f64; 5], delta: f64) -> [(f64, f64); 2] {
    let [m2, m1, z, p1, p2] = k;
    let d1a = (p1 - m1) / (2.0 * delta);
    let d1b = (p2 - m2) / (4.0 * delta);
    let d2a = (p1 - 2.0 * z + m1) / (delta * delta);
    let d2b = (p2 - 2.0 * z + m2) / (4.0 * delta * delta);
    let r1 = (4.0 * d1a - d1b) / 3.0;
    let r2 = (4.0 * d2a - d2b) / 3.0;
    [(r1, (r1 - d1a).abs()), (r2, (r2 - d2a).abs())]
}

fn mean_beta(p: &dyn Protocol) -> Result<f64> {
    let n = 32;
    let mut acc = 0.0;
    for k in 0..n {
        let t = (k as f64 + 0.5) * p.duration() / n as f64;
        acc += p.control(t)?.beta.ok_or_else(|| Error::Protocol("no temperature".into()))?;
    }
    Ok(acc / n as f64)
}

/// Cumulants from central differences of `𝒦 = ln G` at the origin.
pub fn cumulants_from_mgf(p: &dyn Protocol, opts: StencilOptions) -> Result<CumulantReport> {
    let n = (p.duration() / opts.h).ceil().max(1.0) as usize;
    let kj = |u: f64, v: f64| ln_mgf_fixed(p, Tilt::Joint { u, v }, n, opts.dense_limit);
    let ks = |u: f64| ln_mgf_fixed(p, Tilt::Entropy { u }, n, opts.dense_limit);
    let du = opts.du;
    let thermal = p.thermal();
    let k0 = if thermal { kj(0.0, 0.0)? } else { ks(0.0)? };
    let mut line_u = [0.0; 5];
    for (slot, m) in [(0, -2.0), (1, -1.0), (3, 1.0), (4, 2.0)] {
        line_u[slot] = if thermal { kj(m * du, 0.0)? } else { ks(m * du)? };
    }
    line_u[2] = k0;
    let [(d1u, e1u), (d2u, e2u)] = line_derivatives(line_u, du);

    let check = |name: &str, value: f64, err: f64| -> Result<()> {
        if err > opts.tol * value.abs().max(1e-12) {
            return Err(Error::StencilUnstable { disagreement: err, tol: opts.tol * value.abs() });
        }
        let _ = name;
        Ok(())
    };
    check("mean_sigma", d1u, e1u)?;
    check("var_sigma", d2u, e2u)?;

    if !thermal {
        let mut rep = CumulantReport::assemble(
            Route::ExactMgf,
            (-d1u, e1u),
            (d2u, e2u),
            (f64::NAN, f64::NAN),
            (f64::NAN, f64::NAN),
            None,
            None,
            None,
        );
        rep.tur_ratio = None;
        return Ok(rep);
    }

    let dv = match opts.dv {
        Some(dv) => dv,
        None => du / mean_beta(p)?,
    };
    let mut line_v = [0.0; 5];
    for (slot, m) in [(0, -2.0), (1, -1.0), (3, 1.0), (4, 2.0)] {
        line_v[slot] = kj(0.0, m * dv)?;
    }
    line_v[2] = k0;
    let [(d1v, e1v), (d2v, e2v)] = line_derivatives(line_v, dv);
    check("mean_w", d1v, e1v)?;
    check("var_w", d2v, e2v)?;

    let work = adiabatic_work(p, 1e-12)?;
    let mut rep = CumulantReport::assemble(
        Route::ExactMgf,
        (-d1u, e1u),
        (d2u, e2u),
        (-d1v, e1v),
        (d2v, e2v),
        Some((work, 1e-12)),
        None,
        None,
    );
    if opts.with_covariance {
        let mixed = |s: f64| -> Result<f64> {
            Ok((kj(s * du, s * dv)? - kj(s * du, -s * dv)? - kj(-s * du, s * dv)? + kj(-s * du, -s * dv)?)
                / (4.0 * s * s * du * dv))
        };
        let (a, b) = (mixed(1.0)?, mixed(2.0)?);
        let r = (4.0 * a - b) / 3.0;
        rep.cov_sigma_w = Some(crate::report::Tagged::new(r, Route::ExactMgf, (r - a).abs()));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{CyclicThreeLevel, QubitDrive, StaticProtocol};
    use crate::quad::gauss_legendre;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tilt_against_s_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut herm = || {
            let a = Op::from_fn(3, 3, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            (&a + a.adjoint()) * c(0.5)
        };
        let (h, hd) = (herm(), herm());
        let jumps = vec![crate::lindblad::Jump::new("x", identity(3))];
        let cp = ControlPoint {
            t: 0.0,
            model: crate::lindblad::ModelSpec::new(h.clone(), jumps).unwrap(),
            h_dot: hd.clone(),
            beta: Some(0.8),
            beta_dot: 0.3,
            frame: None,
        };
        let (ss, _) = crate::lindblad::gibbs_state(&h, 0.8).unwrap();
        let (u, v) = (0.4, -0.25);
        let got = current_operator_joint(&cp, &ss, u, v).unwrap();
        // oracle: 100-point Gauss–Legendre in s of e^{−sH} δḢ e^{sH}
        let cut = 0.5 * (u * 0.8 + v);
        let sd = SpectralDecomp::new(&h).unwrap();
        let dhd = shifted(&hd, &ss.pi);
        let (x, w) = gauss_legendre(100);
        let mut acc = Op::zeros(3, 3);
        for (xi, wi) in x.iter().zip(&w) {
            let s = 0.5 * cut * (xi + 1.0);
            let e = sd.map(|e| (-s * e).exp());
            let ei = sd.map(|e| (s * e).exp());
            acc += (e * &dhd * ei) * c(0.5 * cut * wi);
        }
        let oracle = -acc - shifted(&h, &ss.pi) * c(0.5 * u * 0.3);
        assert!((got - oracle).norm() < 1e-8);
        let zero = current_operator_joint(&cp, &ss, 0.0, 0.0).unwrap();
        assert!(zero.norm() <= 1e-12);
    }

    #[test]
    fn commuting_tilt_is_linear() {
        let p = QubitDrive::commuting(10.0);
        let cp = p.control(3.0).unwrap();
        let ss = p.steady(&cp).unwrap();
        let (u, v) = (0.3, 0.2);
        let b = cp.beta.unwrap();
        let got = current_operator_joint(&cp, &ss, u, v).unwrap();
        let want = shifted(&cp.h_dot, &ss.pi) * c(-0.5 * (u * b + v))
            - shifted(&cp.model.h, &ss.pi) * c(0.5 * u * cp.beta_dot);
        assert!((got - want).norm() < 1e-14);
    }

    #[test]
    fn normalisation_and_integral_theorem() {
        let p = QubitDrive::standard(20.0);
        let opts = MgfOptions::default();
        let g0 = exact_mgf(&p, 0.0, 0.0, opts).unwrap();
        assert!((g0.g - 1.0).abs() < 1e-10);
        let g1 = exact_mgf(&p, 1.0, 0.0, opts).unwrap();
        assert!((g1.g - 1.0).abs() < 1e-8, "G(1,0) = {}", g1.g);
        let gs = exact_mgf_entropy(&p, 1.0, opts).unwrap();
        assert!((gs.g - 1.0).abs() < 1e-8);
    }

    #[test]
    fn entropy_tilt_matches_joint_marginal() {
        let p = QubitDrive::standard(20.0);
        let n = 200;
        let a = ln_mgf_fixed(&p, Tilt::Joint { u: 0.5, v: 0.0 }, n, 6).unwrap();
        let b = ln_mgf_fixed(&p, Tilt::Entropy { u: 0.5 }, n, 6).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn constant_temperature_collapses_fields() {
        let mut p = QubitDrive::standard(20.0);
        p.beta = (0.9, 0.0);
        let n = 200;
        let a = ln_mgf_fixed(&p, Tilt::Joint { u: 0.3, v: 0.1 }, n, 6).unwrap();
        let b = ln_mgf_fixed(&p, Tilt::Joint { u: 0.0, v: 0.1 + 0.3 * 0.9 }, n, 6).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn step_halving_converges_at_second_order() {
        let p = QubitDrive::standard(10.0);
        let tilt = Tilt::Joint { u: 0.4, v: 0.3 };
        let l: Vec<f64> = [25, 50, 100, 200].iter().map(|&n| ln_mgf_fixed(&p, tilt, n, 6).unwrap()).collect();
        for w in l.windows(3) {
            let ratio = (w[1] - w[0]).abs() / (w[2] - w[1]).abs();
            assert!(ratio > 3.0, "ratio {ratio}");
        }
    }

    #[test]
    fn operator_form_matches_dense_route() {
        let p = QubitDrive::standard(5.0);
        let tilt = Tilt::Joint { u: 0.3, v: 0.2 };
        let dense = ln_mgf_fixed(&p, tilt, 100, 6).unwrap();
        let rk = ln_mgf_fixed(&p, tilt, 100, 0).unwrap();
        assert!((dense - rk).abs() < 1e-8, "{dense} vs {rk}");
    }

    #[test]
    fn static_protocol_cumulants_vanish() {
        let p = StaticProtocol::qubit(1.0, 0.7, 1.0, 5.0).unwrap();
        let opts = StencilOptions { tol: f64::INFINITY, ..Default::default() };
        let rep = cumulants_from_mgf(&p, opts).unwrap();
        for x in [rep.mean_sigma, rep.var_sigma, rep.mean_w_tilde, rep.var_w] {
            assert!(x.value.abs() < 1e-8);
        }
    }

    #[test]
    fn non_thermal_entropy_theorem() {
        let p = CyclicThreeLevel::new(10.0);
        let g = exact_mgf_entropy(&p, 1.0, MgfOptions { tol: 1e-9, ..Default::default() }).unwrap();
        assert!((g.g - 1.0).abs() < 1e-6, "{}", g.g);
        assert!(exact_mgf(&p, 1.0, 0.0, MgfOptions::default()).is_err());
    }
}
