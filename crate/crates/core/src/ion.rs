//! Single-ion heat engine: a damped oscillator whose frequency and bath
//! temperature are cycled.
//!
//! Two views of the same engine live here. The closed forms evaluate the
//! analytic slow-driving integrands directly. [`IonTwin`] is a truncated
//! Fock-space [`Protocol`] that feeds the generic pipelines, so the two can
//! be compared.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lindblad::{Jump, ModelSpec};
use crate::operator::*;
use crate::protocol::{ControlPoint, Protocol};
use crate::quad;
use crate::report::{CumulantReport, IntegrandSample, Route};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IonParams {
    pub omega0: f64,
    pub t_hot: f64,
    pub t_cold: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Highest Fock level kept by the numeric twin.
    pub n_max: usize,
    /// Largest thermal population allowed in level `n_max` along the path.
    pub tail_limit: f64,
}

impl Default for IonParams {
    fn default() -> Self {
        Self { omega0: 1.0, t_hot: 2.0, t_cold: 1.0, gamma: 1.0, tau: 100.0, n_max: 40, tail_limit: 1e-8 }
    }
}

impl IonParams {
    /// The engine of the reference sweep (`ω₀ = 1`, `T_h = 2`, `τ = 100`)
    /// at one grid point. At `n_max = 40` the hot, low-frequency part of the
    /// cycle leaves about `3e-5` in the top level, so the tail limit is
    /// relaxed to `1e-4`.
    pub fn fig1(t_eq: f64, t_cold: f64) -> Self {
        Self { gamma: 1.0 / t_eq, t_cold, tail_limit: 1e-4, ..Self::default() }
    }

    pub fn beta_hot(&self) -> f64 {
        1.0 / self.t_hot
    }

    pub fn beta_cold(&self) -> f64 {
        1.0 / self.t_cold
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |cond: bool, what: &str| {
            if cond {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("ion parameters: {what}")))
            }
        };
        ok(self.omega0 > 0.0 && self.omega0.is_finite(), "omega0 must be positive")?;
        ok(self.t_cold > 0.0 && self.t_hot > self.t_cold, "need T_h > T_c > 0")?;
        ok(self.t_hot.is_finite(), "T_h must be finite")?;
        ok(self.gamma > 0.0 && self.gamma.is_finite(), "Gamma must be positive")?;
        ok(self.tau > 0.0 && self.tau.is_finite(), "tau must be positive")?;
        ok(self.n_max >= 1, "n_max must be at least 1")?;
        ok(self.tail_limit > 0.0, "tail limit must be positive")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curves {
    pub omega: f64,
    pub beta: f64,
    pub omega_dot: f64,
    pub beta_dot: f64,
}

/// `ω(t) = ω₀(1 + ½ sin(2πt/τ) + ¼ sin(4πt/τ + π))`,
/// `β(t) = β_c + (β_h − β_c) sin²(πt/τ)`.
pub fn protocol_curves(p: &IonParams, t: f64) -> Curves {
    let x = 2.0 * PI * t / p.tau;
    let k = PI / p.tau;
    let (bc, bh) = (p.beta_cold(), p.beta_hot());
    Curves {
        omega: p.omega0 * (1.0 + 0.5 * x.sin() + 0.25 * (2.0 * x + PI).sin()),
        beta: bc + (bh - bc) * (0.5 * x).sin().powi(2),
        omega_dot: p.omega0 * k * (x.cos() + (2.0 * x + PI).cos()),
        beta_dot: (bh - bc) * k * x.sin(),
    }
}

/// `e^b / (e^b − 1)²`, written so it neither overflows nor cancels.
fn bose_v(b: f64) -> f64 {
    0.25 / (0.5 * b).sinh().powi(2)
}

/// `b cosh b − sinh b`, with a series where the difference cancels.
fn b_cosh_minus_sinh(b: f64) -> f64 {
    if b.abs() < 0.1 {
        let b2 = b * b;
        b * b2 * (1.0 / 3.0 + b2 * (1.0 / 30.0 + b2 * (1.0 / 840.0 + b2 / 45360.0)))
    } else {
        b * b.cosh() - b.sinh()
    }
}

/// The closed-form integrands at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IonIntegrands {
    pub adiabatic_work: f64,
    pub mean_w_tilde: f64,
    pub var_w: f64,
    pub mean_sigma: f64,
    pub var_sigma: f64,
    pub two_delta_i_sigma: f64,
    /// Integrand of `ΔI_w` before the `1/τ` prefactor.
    pub delta_i_w: f64,
}

pub fn integrands(p: &IonParams, t: f64) -> IonIntegrands {
    let Curves { omega: w, beta, omega_dot: wd, beta_dot: bd } = protocol_curves(p, t);
    let g = p.gamma;
    let b = beta * w;
    let v = bose_v(b);
    let lor = g * g + 4.0 * w * w;
    let drive = bd * w + beta * wd;
    // (e^{2b} − 1)(b coth b − 1)/(e^b − 1)² = 2V (b cosh b − sinh b)
    let skew = 2.0 * v * b_cosh_minus_sinh(b);
    IonIntegrands {
        adiabatic_work: wd / b.exp_m1(),
        mean_w_tilde: v * (wd * wd * g * b.sinh() / (w * lor) + wd * drive / g),
        var_w: 2.0 * wd * wd * v * (g * g * b.cosh() + lor) / (g * lor),
        mean_sigma: v * (beta * g * wd * wd * b.sinh() / (w * lor) + drive * drive / g),
        var_sigma: 2.0 * v * (beta * beta * g * wd * wd * b.cosh() / lor + drive * drive / g),
        two_delta_i_sigma: beta * wd * wd * g * skew / (w * lor),
        delta_i_w: wd * wd * g * skew / (2.0 * beta * w * lor),
    }
}

const CLOSED_FORM_TOL: f64 = 1e-12;

fn integrate(p: &IonParams, f: impl Fn(&IonIntegrands) -> f64) -> Result<quad::Estimate> {
    let g = |t: f64| f(&integrands(p, t));
    quad::adaptive(&g, 0.0, p.tau, CLOSED_FORM_TOL)
}

/// Cumulants of `(σ, w̃)` from the closed-form integrands.
pub fn closed_form_report(p: &IonParams) -> Result<CumulantReport> {
    p.validate()?;
    let pair = |e: quad::Estimate| (e.value, e.error.max(CLOSED_FORM_TOL));
    let work = integrate(p, |x| x.adiabatic_work)?;
    let mean_w = integrate(p, |x| x.mean_w_tilde)?;
    let var_w = integrate(p, |x| x.var_w)?;
    let mean_s = integrate(p, |x| x.mean_sigma)?;
    let var_s = integrate(p, |x| x.var_sigma)?;
    let dis = integrate(p, |x| 0.5 * x.two_delta_i_sigma)?;
    let diw = integrate(p, |x| x.delta_i_w / p.tau)?;
    let mut rep = CumulantReport::assemble(
        Route::IonClosedForm,
        pair(mean_s),
        pair(var_s),
        pair(mean_w),
        pair(var_w),
        Some(pair(work)),
        Some(pair(dis)),
        Some(pair(diw)),
    );
    rep.integrands = (0..=200)
        .map(|k| {
            let t = p.tau * k as f64 / 200.0;
            let x = integrands(p, t);
            IntegrandSample {
                t,
                mean_sigma: x.mean_sigma,
                var_sigma: x.var_sigma,
                mean_w_tilde: x.mean_w_tilde,
                var_w: x.var_w,
                skew_sigma: 0.5 * x.two_delta_i_sigma,
            }
        })
        .collect();
    Ok(rep)
}

/// Closed-form slow-driving CGF `𝒦(u, v)`.
pub fn cgf_closed_form(p: &IonParams, u: f64, v: f64) -> Result<f64> {
    p.validate()?;
    let g = p.gamma;
    let f = |t: f64| {
        let Curves { omega: w, beta, omega_dot: wd, beta_dot: bd } = protocol_curves(p, t);
        let temp = 1.0 / beta;
        let y = u + temp * v;
        let b = beta * w;
        let lor = g * g + 4.0 * w * w;
        let coherent = -g * ((y - 1.0) * b).sinh() * (y * b).sinh() / (b * b * lor) + y * (1.0 - y) / g;
        let f_t = temp * v - 2.0 * u * (u + temp * v - 1.0);
        -bose_v(b)
            * (beta * beta * wd * wd * coherent
                + (u - u * u) * bd * bd * w * w / g
                + f_t * bd * beta * w * wd / g)
    };
    Ok(quad::adaptive(&f, 0.0, p.tau, CLOSED_FORM_TOL)?.value)
}

/// Truncated-oscillator model of the engine in the instantaneous Fock
/// basis of `ω(t)`.
///
/// Working in a basis that follows `ω(t)` adds the Hermitian generator
/// `F = −i (ω̇/4ω)(a² − a†²)` to the dynamics. `H` stays diagonal and the
/// jumps keep their fixed matrix form.
#[derive(Debug, Clone)]
pub struct IonTwin {
    pub params: IonParams,
    a: Op,
    a2: Op,
    number: Vec<f64>,
}

impl IonTwin {
    pub fn new(params: IonParams) -> Result<Self> {
        params.validate()?;
        let tail = max_tail(&params);
        if !(tail < params.tail_limit) {
            return Err(Error::TruncationInadequate { tail, limit: params.tail_limit });
        }
        let d = params.n_max + 1;
        let a = annihilation(d);
        let a2 = &a * &a;
        Ok(Self { params, a, a2, number: (0..d).map(|n| n as f64).collect() })
    }

    pub fn dim(&self) -> usize {
        self.number.len()
    }

    pub fn curves(&self, t: f64) -> Curves {
        protocol_curves(&self.params, t)
    }
}

/// Largest untruncated thermal population of level `n_max` along the cycle.
pub fn max_tail(p: &IonParams) -> f64 {
    (0..=2000)
        .map(|k| {
            let c = protocol_curves(p, p.tau * k as f64 / 2000.0);
            let b = c.beta * c.omega;
            // (1 − e^{−b}) e^{−b n}
            -(-b).exp_m1() * (-b * p.n_max as f64).exp()
        })
        .fold(0.0, f64::max)
}

impl Protocol for IonTwin {
    fn duration(&self) -> f64 {
        self.params.tau
    }

    fn control(&self, t: f64) -> Result<ControlPoint> {
        let Curves { omega: w, beta, omega_dot: wd, beta_dot: bd } = self.curves(t);
        let g = self.params.gamma;
        let nb = 1.0 / (beta * w).exp_m1();
        let energies: Vec<f64> = self.number.iter().map(|n| w * (n + 0.5)).collect();
        let h = diag(&energies);
        let ad = self.a.adjoint();
        let model = ModelSpec::new(
            h,
            vec![
                Jump::new("a", &self.a * c((g * (nb + 1.0)).sqrt())),
                Jump::new("a+", ad.clone() * c((g * nb).sqrt())),
            ],
        )?;
        let a2d = self.a2.adjoint();
        let twice_n = diag(&self.number.iter().map(|n| 2.0 * n + 1.0).collect::<Vec<_>>());
        let h_dot = (&self.a2 + &a2d + twice_n) * c(0.5 * wd);
        let frame = (&self.a2 - &a2d) * C64::new(0.0, -wd / (4.0 * w));
        Ok(ControlPoint { t, model, h_dot, beta: Some(beta), beta_dot: bd, frame: Some(frame) })
    }

    fn thermal(&self) -> bool {
        true
    }

    fn label(&self) -> String {
        format!("ion(n_max={}, tau={}, Gamma={}, T_c={})", self.params.n_max, self.params.tau, self.params.gamma, self.params.t_cold)
    }

    fn jump_potentials(&self, cp: &ControlPoint) -> Result<Vec<f64>> {
        let c = self.curves(cp.t);
        Ok(vec![-c.beta * c.omega, c.beta * c.omega])
    }
}

/// Grid of the TUR/FDR surface: `t_eq = 1/Γ` log-spaced, `T_c` linear.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig1Grid {
    pub t_eq: (f64, f64, usize),
    pub t_cold: (f64, f64, usize),
    pub omega0: f64,
    pub t_hot: f64,
    pub tau: f64,
}

impl Default for Fig1Grid {
    fn default() -> Self {
        Self { t_eq: (0.1, 10.0, 25), t_cold: (0.1, 1.9, 25), omega0: 1.0, t_hot: 2.0, tau: 100.0 }
    }
}

impl Fig1Grid {
    pub fn t_eq_values(&self) -> Vec<f64> {
        let (lo, hi, n) = self.t_eq;
        if n == 1 {
            return vec![lo];
        }
        (0..n).map(|k| (lo.ln() + (hi / lo).ln() * k as f64 / (n - 1) as f64).exp()).collect()
    }

    pub fn t_cold_values(&self) -> Vec<f64> {
        let (lo, hi, n) = self.t_cold;
        if n == 1 {
            return vec![lo];
        }
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Fig1Row {
    pub t_eq: f64,
    pub t_c: f64,
    pub tur_ratio: f64,
    pub fdr_gap: f64,
    pub mean_w: f64,
    pub var_w: f64,
    pub mean_sigma: f64,
    pub var_sigma: f64,
    pub adiabatic_work: f64,
    pub delta_i_sigma: f64,
}

impl Fig1Row {
    pub const HEADER: &'static str =
        "t_eq,T_c,tur_ratio,fdr_gap,mean_w,var_w,mean_sigma,var_sigma,adiabatic_work";

    pub fn csv(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.t_eq,
            self.t_c,
            self.tur_ratio,
            self.fdr_gap,
            self.mean_w,
            self.var_w,
            self.mean_sigma,
            self.var_sigma,
            self.adiabatic_work
        )
    }
}

/// Closed-form TUR ratio and FDR gap over the grid, `t_eq`-major.
pub fn fig1_sweep(grid: &Fig1Grid) -> Result<Vec<Fig1Row>> {
    let points: Vec<(f64, f64)> = grid
        .t_eq_values()
        .into_iter()
        .flat_map(|te| grid.t_cold_values().into_iter().map(move |tc| (te, tc)))
        .collect();
    points
        .par_iter()
        .map(|&(t_eq, t_c)| {
            let p = IonParams {
                omega0: grid.omega0,
                t_hot: grid.t_hot,
                t_cold: t_c,
                gamma: 1.0 / t_eq,
                tau: grid.tau,
                ..IonParams::default()
            };
            let rep = closed_form_report(&p)?;
            Ok(Fig1Row {
                t_eq,
                t_c,
                tur_ratio: rep.tur_ratio.map_or(f64::NAN, |r| r.value),
                fdr_gap: rep.fdr_gap.value,
                mean_w: rep.mean_w().unwrap_or(f64::NAN),
                var_w: rep.var_w.value,
                mean_sigma: rep.mean_sigma.value,
                var_sigma: rep.var_sigma.value,
                adiabatic_work: rep.adiabatic_work.map_or(f64::NAN, |a| a.value),
                delta_i_sigma: rep.delta_i_sigma.map_or(f64::NAN, |a| a.value),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::check_structure;

    #[test]
    fn curves_endpoints_and_midpoint() {
        let p = IonParams::default();
        let c0 = protocol_curves(&p, 0.0);
        assert!((c0.omega - 1.0).abs() < 1e-15);
        assert_eq!(c0.beta, p.beta_cold());
        assert_eq!(c0.beta_dot, 0.0);
        assert!(c0.omega_dot.abs() < 1e-15);
        let mid = protocol_curves(&p, 50.0);
        assert!((mid.beta - p.beta_hot()).abs() < 1e-15);
        let end = protocol_curves(&p, p.tau);
        assert!((end.omega - c0.omega).abs() < 1e-12 && (end.beta - c0.beta).abs() < 1e-12);
        for t in [13.0, 41.0, 77.0] {
            let h = 1e-5;
            let (a, b) = (protocol_curves(&p, t + h), protocol_curves(&p, t - h));
            let c = protocol_curves(&p, t);
            assert!(((a.omega - b.omega) / (2.0 * h) - c.omega_dot).abs() < 1e-8);
            assert!(((a.beta - b.beta) / (2.0 * h) - c.beta_dot).abs() < 1e-8);
        }
    }

    #[test]
    fn stable_forms_match_naive_ones() {
        for b in [0.05f64, 0.3, 1.0, 4.0] {
            let naive = b.exp() / (b.exp() - 1.0).powi(2);
            assert!((bose_v(b) - naive).abs() < 1e-12 * naive);
            let s = (2.0 * b).exp_m1() * (b / b.tanh() - 1.0) / b.exp_m1().powi(2);
            assert!((2.0 * bose_v(b) * b_cosh_minus_sinh(b) - s).abs() < 1e-9 * s);
        }
        let b: f64 = 0.0999;
        assert!((b_cosh_minus_sinh(b) - (b * b.cosh() - b.sinh())).abs() < 1e-15);
    }

    #[test]
    fn fdr_identity_and_bounds() {
        let rep = closed_form_report(&IonParams::default()).unwrap();
        let gap = rep.fdr_gap.value;
        let di = rep.delta_i_sigma.unwrap().value;
        assert!((gap - 2.0 * di).abs() <= 1e-10 * gap.abs().max(1e-12));
        assert!(di > 0.0 && rep.delta_i_w.unwrap().value > 0.0);
        assert!(rep.tur_ratio.unwrap().value >= 2.0);
    }

    #[test]
    fn closed_form_cgf_properties() {
        let p = IonParams::default();
        assert!(cgf_closed_form(&p, 0.0, 0.0).unwrap().abs() < 1e-14);
        assert!(cgf_closed_form(&p, 1.0, 0.0).unwrap().abs() < 1e-14);
        let bbar = 0.5 * (p.beta_cold() + p.beta_hot());
        let (u, v) = (0.3, 0.2 * bbar);
        let k = cgf_closed_form(&p, u, v).unwrap();
        let kr = cgf_closed_form(&p, 1.0 - u, -v).unwrap();
        assert!((k - kr).abs() < 1e-10 * k.abs().max(1e-10));

        let rep = closed_form_report(&p).unwrap();
        let d = 1e-3;
        let k = |u, v| cgf_closed_form(&p, u, v).unwrap();
        let k0 = k(0.0, 0.0);
        let mean_s = -(k(d, 0.0) - k(-d, 0.0)) / (2.0 * d);
        let var_s = (k(d, 0.0) - 2.0 * k0 + k(-d, 0.0)) / (d * d);
        let mean_w = -(k(0.0, d) - k(0.0, -d)) / (2.0 * d);
        let var_w = (k(0.0, d) - 2.0 * k0 + k(0.0, -d)) / (d * d);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-5 * b.abs();
        assert!(close(mean_s, rep.mean_sigma.value), "{mean_s} {}", rep.mean_sigma.value);
        assert!(close(var_s, rep.var_sigma.value), "{var_s} {}", rep.var_sigma.value);
        assert!(close(mean_w, rep.mean_w_tilde.value), "{mean_w} {}", rep.mean_w_tilde.value);
        assert!(close(var_w, rep.var_w.value), "{var_w} {}", rep.var_w.value);
    }

    #[test]
    fn constant_protocol_has_no_fluctuations() {
        let p = IonParams { t_hot: 1.0 + 1e-12, t_cold: 1.0, omega0: 1.0, ..IonParams::default() };
        let x = integrands(&p, 0.0);
        for v in [x.mean_sigma, x.var_sigma, x.var_w, x.mean_w_tilde, x.two_delta_i_sigma] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn twin_structure() {
        let twin = IonTwin::new(IonParams { n_max: 20, t_hot: 0.8, t_cold: 0.5, tail_limit: 1e-3, ..IonParams::default() }).unwrap();
        let cp = twin.control(37.0).unwrap();
        let ss = twin.steady(&cp).unwrap();
        let rep = check_structure(&cp.model, &ss, cp.beta).unwrap();
        let b = cp.beta.unwrap() * twin.curves(37.0).omega;
        assert!((rep.delta_phi[0] + b).abs() < 1e-8 && (rep.delta_phi[1] - b).abs() < 1e-8);
        assert!(rep.detailed_balance());
        assert!(is_hermitian(cp.frame.as_ref().unwrap(), 1e-15));
    }

    #[test]
    fn truncation_gate() {
        let bad = IonParams { n_max: 5, ..IonParams::default() };
        assert!(matches!(IonTwin::new(bad), Err(Error::TruncationInadequate { .. })));
    }

    #[test]
    fn sweep_shape() {
        let grid = Fig1Grid { t_eq: (0.1, 10.0, 3), t_cold: (0.5, 1.5, 2), ..Fig1Grid::default() };
        let rows = fig1_sweep(&grid).unwrap();
        assert_eq!(rows.len(), 6);
        assert!((rows[2].t_eq - 1.0).abs() < 1e-12);
        assert!(rows.iter().all(|r| r.tur_ratio >= 2.0 && r.fdr_gap >= 0.0));
    }
}
