//! Slow-driving statistics from quantum covariances and the Drazin inverse.
//!
//! Every correlation function reduces, in the eigenbasis `{p_i}` of the
//! steady state, to a pairing matrix `M_ij = Ĝ(A)_ij B_ji` contracted with
//! an `s`-dependent weight:
//!
//! * `C^{(s)}`:            `p_i^{1−s} p_j^s`
//! * `∫₀¹ C^{(s)} ds`:     logarithmic mean of `p_i, p_j`
//! * `C̄^{(y)}`:            `p_i y(1−y) φ(yr) φ((1−y)r)`, `r = ln(p_j/p_i)`
//! * skew covariance:      `½(p_i + p_j)` minus the logarithmic mean
//!
//! with `φ(x) = (eˣ − 1)/x`. The `s` integrals are therefore exact.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lindblad::{adjoint_green, build_generator, structure_report, Generator, ModelSpec, SteadyState, STRUCTURE_TOL};
use crate::operator::*;
use crate::protocol::{adiabatic_work, ControlPoint, Protocol};
use crate::quad::TimeGrid;
use crate::report::{CumulantReport, IntegrandSample, Route};

/// `(eˣ − 1)/x` with a four-term series near zero.
pub fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0
    } else {
        x.exp_m1() / x
    }
}

/// Weights of the pair `(i, j)` given log-populations, ordered so the
/// exponent stays non-positive.
fn base_and_ratio(li: f64, lj: f64) -> (f64, f64) {
    if li >= lj {
        (li, lj - li)
    } else {
        (lj, li - lj)
    }
}

/// `∫₀¹ p_i^{1−s} p_j^s ds`.
pub fn log_mean(li: f64, lj: f64) -> f64 {
    let (b, r) = base_and_ratio(li, lj);
    b.exp() * phi1(r)
}

/// `∫₀^y dx ∫_x^{1−x} ds p_i^{1−s} p_j^s`.
pub fn bar_weight(li: f64, lj: f64, y: f64) -> f64 {
    let (b, r) = base_and_ratio(li, lj);
    b.exp() * y * (1.0 - y) * phi1(y * r) * phi1((1.0 - y) * r)
}

/// `−½∫₀¹ tr{[·,π^s][·,π^{1−s}]} ds` weight of the pair `(i, j)`.
pub fn skew_weight(li: f64, lj: f64) -> f64 {
    let (b, r) = base_and_ratio(li, lj);
    // ½(1 + e^r) − φ(r), relative to the larger population
    let w = 0.5 * (1.0 + r.exp()) - phi1(r);
    b.exp() * w.max(0.0)
}

/// Matrix `M_ij = A_ij B_ji` in the steady-state eigenbasis.
#[derive(Debug, Clone)]
pub struct Pairing {
    m: Op,
    log_p: Vec<f64>,
}

impl Pairing {
    pub fn new(ss: &SteadyState, a: &Op, b: &Op) -> Self {
        let at = ss.spectral.to_eigenbasis(a);
        let bt = ss.spectral.to_eigenbasis(b);
        let d = ss.dim();
        Self { m: Op::from_fn(d, d, |i, j| at[(i, j)] * bt[(j, i)]), log_p: ss.log_p.clone() }
    }

    fn contract(&self, w: impl Fn(f64, f64) -> f64) -> C64 {
        let d = self.log_p.len();
        let mut acc = ZERO;
        for j in 0..d {
            for i in 0..d {
                let m = self.m[(i, j)];
                if m != ZERO {
                    acc += m * w(self.log_p[i], self.log_p[j]);
                }
            }
        }
        acc
    }

    /// `Σ M_ij p_i^{1−s} p_j^s`.
    pub fn at(&self, s: f64) -> C64 {
        self.contract(|li, lj| ((1.0 - s) * li + s * lj).exp())
    }

    pub fn integrated(&self) -> C64 {
        self.contract(log_mean)
    }

    pub fn bar(&self, y: f64) -> C64 {
        self.contract(|li, lj| bar_weight(li, lj, y))
    }

    pub fn skew(&self) -> C64 {
        self.contract(skew_weight)
    }

    /// `C^{(1)} + C^{(0)}`.
    pub fn endpoint_sum(&self) -> C64 {
        self.contract(|li, lj| li.exp() + lj.exp())
    }
}

/// `cov^{(s)}(A, B) = tr[A π^s B π^{1−s}] − tr[Aπ] tr[Bπ]`.
pub fn qcov(ss: &SteadyState, s: f64, a: &Op, b: &Op) -> C64 {
    let da = shifted(a, &ss.pi);
    Pairing::new(ss, &da, b).at(s)
}

/// Skew covariance `𝓘(A, B) = −½∫₀¹ tr{[A,π^s][B,π^{1−s}]} ds`.
pub fn skew_covariance(ss: &SteadyState, a: &Op, b: &Op) -> f64 {
    Pairing::new(ss, a, b).skew().re
}

/// Steady state, generator and Green operators at one control point.
pub struct Kernel {
    pub ss: SteadyState,
    pub gen: Generator,
}

impl Kernel {
    pub fn new(model: &ModelSpec, ss: SteadyState) -> Result<Self> {
        let gen = build_generator(model)?;
        let residual = max_abs(&gen.apply(&ss.pi));
        if residual > 1e-9 * max_abs(&model.k).max(1.0) {
            return Err(Error::NoConvergence { tol: 1e-9, achieved: residual });
        }
        Ok(Self { ss, gen })
    }

    pub fn green(&self, a: &Op) -> Result<Op> {
        adjoint_green(&self.gen, &self.ss.pi, a)
    }

    /// Pairing of `Ĝ(δA)` with `δB`.
    pub fn pairing(&self, a: &Op, b: &Op) -> Result<Pairing> {
        let y = self.green(a)?;
        Ok(Pairing::new(&self.ss, &y, &shifted(b, &self.ss.pi)))
    }

    /// `C^{(s)}(A, B) = tr[Ĝ(δA) π^s δB π^{1−s}]`.
    pub fn corr(&self, s: f64, a: &Op, b: &Op) -> Result<C64> {
        Ok(self.pairing(a, b)?.at(s))
    }

    /// `C̄^{(y)}(A, B) = ∫₀^y dx ∫_x^{1−x} ds C^{(s)}(A, B)`.
    pub fn corr_bar(&self, y: f64, a: &Op, b: &Op) -> Result<C64> {
        Ok(self.pairing(a, b)?.bar(y))
    }
}

/// `δΦ̇` at time `t`. Thermal paths use `β̇ δH + β δḢ`; otherwise `−ln π`
/// is differenced centrally with the step halved until stable.
pub fn current_operator_phi(p: &dyn Protocol, t: f64) -> Result<Op> {
    let cp = p.control(t)?;
    let ss = p.steady(&cp)?;
    current_operator_at(p, &cp, &ss)
}

fn current_operator_at(p: &dyn Protocol, cp: &ControlPoint, ss: &SteadyState) -> Result<Op> {
    if let (true, Some(b)) = (p.thermal(), cp.beta) {
        let raw = &cp.model.h * c(cp.beta_dot) + &cp.h_dot * c(b);
        return Ok(shifted(&raw, &ss.pi));
    }
    let tau = p.duration();
    let t = cp.t;
    let phi_at = |s: f64| -> Result<Op> { Ok(p.steady(&p.control(s)?)?.phi()) };
    let diff = |h: f64| -> Result<Op> { Ok((phi_at(t + h)? - phi_at(t - h)?) / c(2.0 * h)) };
    let mut h = (1e-3 * tau).min(0.5 * t.min(tau - t)).max(1e-7 * tau);
    let mut prev = diff(h)?;
    for _ in 0..12 {
        h *= 0.5;
        let next = diff(h)?;
        let change = (&next - &prev).norm() / next.norm().max(1e-300);
        prev = next;
        if change < 1e-6 {
            break;
        }
    }
    Ok(shifted(&((&prev + prev.adjoint()) * c(0.5)), &ss.pi))
}

#[derive(Debug, Clone, Copy)]
pub struct SlowOptions {
    /// Gauss–Legendre points of the coarse rule; the fine rule uses two
    /// panels of the same order.
    pub nodes: usize,
    /// Proceed with the joint CGF when detailed balance fails.
    pub allow_non_db: bool,
}

impl Default for SlowOptions {
    fn default() -> Self {
        Self { nodes: 64, allow_non_db: false }
    }
}

struct WorkPart {
    beta: f64,
    beta_dot: f64,
    hdot_hdot: Pairing,
    hdot_phi: Pairing,
    c0_hh: f64,
    c0_hdot_h: f64,
    c0_h_hdot: f64,
}

struct Node {
    t: f64,
    weight: f64,
    phi_phi: Pairing,
    work: Option<WorkPart>,
    db_residual: f64,
}

impl Node {
    fn build(p: &dyn Protocol, t: f64, weight: f64) -> Result<Self> {
        let cp = p.control(t)?;
        let ss = p.steady(&cp)?;
        let rep = structure_report(&cp.model, &ss, cp.beta, STRUCTURE_TOL);
        for (k, label) in rep.labels.iter().enumerate() {
            let r = rep.residuals[k].max(rep.power_residuals[k]);
            if !(r <= rep.tol) {
                return Err(Error::NotPrivileged { label: label.clone(), residual: r });
            }
        }
        let phi_dot = current_operator_at(p, &cp, &ss)?;
        let kernel = Kernel::new(&cp.model, ss)?;
        let phi_phi = kernel.pairing(&phi_dot, &phi_dot)?;
        let work = match (p.thermal(), cp.beta) {
            (true, Some(beta)) => {
                let h = &cp.model.h;
                let g_hdot = kernel.green(&cp.h_dot)?;
                let g_h = kernel.green(h)?;
                let pi = &kernel.ss.pi;
                let dh = shifted(h, pi);
                let dhd = shifted(&cp.h_dot, pi);
                Some(WorkPart {
                    beta,
                    beta_dot: cp.beta_dot,
                    hdot_hdot: Pairing::new(&kernel.ss, &g_hdot, &dhd),
                    hdot_phi: Pairing::new(&kernel.ss, &g_hdot, &phi_dot),
                    c0_hh: Pairing::new(&kernel.ss, &g_h, &dh).at(0.0).re,
                    c0_hdot_h: Pairing::new(&kernel.ss, &g_hdot, &dh).at(0.0).re,
                    c0_h_hdot: Pairing::new(&kernel.ss, &g_h, &dhd).at(0.0).re,
                })
            }
            _ => None,
        };
        Ok(Self { t, weight, phi_phi, work, db_residual: rep.detailed_balance_residual })
    }
}

/// Slow-driving kernels precomputed on the coarse and fine time rules.
pub struct SlowPath {
    coarse: Vec<Node>,
    fine: Vec<Node>,
    tau: f64,
    thermal: bool,
    opts: SlowOptions,
    adiabatic_work: Option<f64>,
}

/// Value with an error estimate from the rule doubling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl SlowPath {
    pub fn new(p: &dyn Protocol, opts: SlowOptions) -> Result<Self> {
        let tau = p.duration();
        let build = |grid: TimeGrid| -> Result<Vec<Node>> {
            grid.nodes.par_iter().zip(&grid.weights).map(|(t, w)| Node::build(p, *t, *w)).collect()
        };
        let coarse = build(TimeGrid::new(0.0, tau, opts.nodes, 1))?;
        let fine = build(TimeGrid::new(0.0, tau, opts.nodes, 2))?;
        let thermal = p.thermal() && fine.iter().all(|n| n.work.is_some());
        let adiabatic_work = if thermal { Some(adiabatic_work(p, 1e-12)?) } else { None };
        Ok(Self { coarse, fine, tau, thermal, opts, adiabatic_work })
    }

    /// Largest detailed-balance residual seen along the path.
    pub fn detailed_balance_residual(&self) -> f64 {
        self.fine.iter().map(|n| n.db_residual).fold(0.0, f64::max)
    }

    fn integrate(&self, f: impl Fn(&Node) -> f64) -> Estimate {
        let sum = |nodes: &[Node]| nodes.iter().map(|n| n.weight * f(n)).sum::<f64>();
        let (c, fv) = (sum(&self.coarse), sum(&self.fine));
        Estimate { value: fv, error: (c - fv).abs() }
    }

    fn require_work(&self) -> Result<()> {
        if !self.thermal {
            return Err(Error::Protocol("work statistics need a thermal protocol".into()));
        }
        let db = self.detailed_balance_residual();
        if !self.opts.allow_non_db && !(db <= STRUCTURE_TOL) {
            return Err(Error::DetailedBalanceViolated { residual: db });
        }
        Ok(())
    }

    /// Joint CGF `𝒦(u, v)` in the slow-driving approximation.
    pub fn cgf_joint(&self, u: f64, v: f64) -> Result<Estimate> {
        self.require_work()?;
        Ok(self.integrate(|n| {
            let w = n.work.as_ref().expect("thermal node");
            let temp = 1.0 / w.beta;
            let y = u + temp * v;
            let f_t = temp * v - 2.0 * u * (u + temp * v - 1.0);
            // the detailed-balance symmetric form of the cross term
            let cross = 0.5 * (w.c0_hdot_h + w.c0_h_hdot);
            -(w.beta * w.beta * w.hdot_hdot.bar(y).re
                + (u - u * u) * w.beta_dot * w.beta_dot * w.c0_hh
                + f_t * w.beta_dot * w.beta * cross)
        }))
    }

    /// Entropy-only CGF `𝒦_σ(u) = −∫ C̄^{(u)}(Φ̇, Φ̇) dt`.
    pub fn cgf_entropy(&self, u: f64) -> Estimate {
        self.integrate(|n| -n.phi_phi.bar(u).re)
    }

    pub fn cumulants(&self) -> Result<CumulantReport> {
        let mean_sigma = self.integrate(|n| n.phi_phi.integrated().re);
        let var_sigma = self.integrate(|n| n.phi_phi.endpoint_sum().re);
        let dis = self.integrate(|n| n.phi_phi.skew().re);
        let pair = |e: Estimate| (e.value, e.error);
        let (mean_w, var_w, work, di_w) = if self.thermal {
            self.require_work()?;
            let mw = self.integrate(|n| n.work.as_ref().unwrap().hdot_phi.integrated().re);
            let vw = self.integrate(|n| n.work.as_ref().unwrap().hdot_hdot.endpoint_sum().re);
            let iw = self.integrate(|n| n.work.as_ref().unwrap().hdot_hdot.skew().re);
            let iw = Estimate { value: iw.value / self.tau, error: iw.error / self.tau };
            (pair(mw), pair(vw), self.adiabatic_work.map(|a| (a, 1e-12)), Some(pair(iw)))
        } else {
            ((f64::NAN, f64::NAN), (f64::NAN, f64::NAN), None, None)
        };
        let mut rep = CumulantReport::assemble(
            Route::SlowDriving,
            pair(mean_sigma),
            pair(var_sigma),
            mean_w,
            var_w,
            work,
            Some(pair(dis)),
            di_w,
        );
        rep.integrands = self
            .fine
            .iter()
            .map(|n| IntegrandSample {
                t: n.t,
                mean_sigma: n.phi_phi.integrated().re,
                var_sigma: n.phi_phi.endpoint_sum().re,
                mean_w_tilde: n.work.as_ref().map_or(f64::NAN, |w| w.hdot_phi.integrated().re),
                var_w: n.work.as_ref().map_or(f64::NAN, |w| w.hdot_hdot.endpoint_sum().re),
                skew_sigma: n.phi_phi.skew().re,
            })
            .collect();
        Ok(rep)
    }
}

pub fn cgf_joint_slow(p: &dyn Protocol, u: f64, v: f64, opts: SlowOptions) -> Result<Estimate> {
    SlowPath::new(p, opts)?.cgf_joint(u, v)
}

pub fn cgf_entropy_slow(p: &dyn Protocol, u: f64, opts: SlowOptions) -> Result<Estimate> {
    Ok(SlowPath::new(p, opts)?.cgf_entropy(u))
}

/// Slow-driving cumulants. Fails with `ZeroDissipation` when the TUR ratio
/// is undefined; use [`SlowPath::cumulants`] to get the report regardless.
pub fn cumulants_slow(p: &dyn Protocol, opts: SlowOptions) -> Result<CumulantReport> {
    let rep = SlowPath::new(p, opts)?.cumulants()?;
    if rep.tur_ratio.is_none() && p.thermal() {
        return Err(Error::ZeroDissipation { value: rep.mean_w_tilde.value.powi(2) });
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::gibbs_state;
    use crate::protocol::{CyclicThreeLevel, QubitDrive, StaticProtocol};
    use crate::quad::gauss_legendre;

    fn state(p: &[f64]) -> SteadyState {
        SteadyState::from_density(&diag(p)).unwrap()
    }

    #[test]
    fn qcov_examples() {
        let ss = state(&[0.75, 0.25]);
        let z = qcov(&ss, 0.3, &pauli::sz(), &pauli::sz());
        assert!((z.re - 0.75).abs() < 1e-14 && z.im.abs() < 1e-15);
        let x = qcov(&ss, 0.5, &pauli::sx(), &pauli::sx());
        assert!((x.re - 2.0 * (0.75f64 * 0.25).sqrt()).abs() < 1e-14);
        assert!(qcov(&ss, 0.5, &identity(2), &pauli::sx()).norm() < 1e-15);
    }

    /// `s`-quadrature of the commutator form.
    fn skew_oracle(pi: &[f64], a: &Op, b: &Op) -> f64 {
        let (x, w) = gauss_legendre(40);
        let sd = SpectralDecomp::new(&diag(pi)).unwrap();
        let mut acc = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let s = 0.5 * (xi + 1.0);
            let ps = fractional_power(&sd, s).unwrap();
            let pt = fractional_power(&sd, 1.0 - s).unwrap();
            acc += 0.5 * wi * (-0.5 * trace(&(commutator(a, &ps) * commutator(b, &pt))).re);
        }
        acc
    }

    #[test]
    fn skew_covariance_against_quadrature() {
        let pi = [0.75, 0.25];
        let got = skew_covariance(&state(&pi), &pauli::sx(), &pauli::sx());
        let oracle = skew_oracle(&pi, &pauli::sx(), &pauli::sx());
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 2.0 * (0.5 - 0.5 / 3f64.ln())).abs() < 1e-12);
        assert!(skew_covariance(&state(&pi), &pauli::sz(), &pauli::sz()).abs() < 1e-16);
    }

    #[test]
    fn bar_weight_matches_double_quadrature() {
        let (li, lj) = (0.2f64.ln(), 0.7f64.ln());
        let (x, w) = gauss_legendre(30);
        for y in [0.3, 0.8, 1.4] {
            let mut acc = 0.0;
            for (xa, wa) in x.iter().zip(&w) {
                let xo = 0.5 * y * (xa + 1.0);
                let (lo, hi) = (xo, 1.0 - xo);
                for (xb, wb) in x.iter().zip(&w) {
                    let s = lo + 0.5 * (hi - lo) * (xb + 1.0);
                    acc += 0.25 * y * (hi - lo) * wa * wb * ((1.0 - s) * li + s * lj).exp();
                }
            }
            assert!((bar_weight(li, lj, y) - acc).abs() < 1e-12, "y={y}");
        }
        // series branch agrees with the closed form where both are accurate
        for x in [-9e-7, -2e-7, 3e-7, 9.9e-7] {
            assert!((phi1(x) - x.exp_m1() / x).abs() < 1e-15);
        }
    }

    #[test]
    fn thermal_qubit_green_correlation_against_theta_quadrature() {
        let p = StaticProtocol::qubit(1.0, 0.7, 0.5, 1.0).unwrap();
        let cp = p.control(0.0).unwrap();
        let (ss, _) = gibbs_state(&cp.model.h, 0.7).unwrap();
        let k = Kernel::new(&cp.model, ss.clone()).unwrap();
        let h = &cp.model.h;
        let got = k.corr(0.0, h, h).unwrap().re;
        // oracle: ∫ tr[e^{θ𝓛*}(δH) δH π] dθ with the dense semigroup
        let ls = k.gen.adjoint_superop();
        let dh = shifted(h, &ss.pi);
        let grid = TimeGrid::new(0.0, 100.0, 20, 40);
        let mut acc = 0.0;
        for (t, w) in grid.nodes.iter().zip(&grid.weights) {
            let ev = devec(&propagate_step(&ls, *t, &vec_op(&dh)).unwrap()).unwrap();
            acc += w * trace(&(ev * &dh * &ss.pi)).re;
        }
        assert!((got - acc).abs() < 1e-6);
        assert!(k.corr(0.3, h, &identity(2)).unwrap().norm() < 1e-14);
    }

    #[test]
    fn commuting_bar_is_parabolic() {
        let p = StaticProtocol::qubit(1.0, 0.7, 0.5, 1.0).unwrap();
        let cp = p.control(0.0).unwrap();
        let (ss, _) = gibbs_state(&cp.model.h, 0.7).unwrap();
        let k = Kernel::new(&cp.model, ss).unwrap();
        let h = &cp.model.h;
        let c0 = k.corr(0.0, h, h).unwrap().re;
        for y in [0.0, 0.25, 0.6] {
            assert!((k.corr_bar(y, h, h).unwrap().re - y * (1.0 - y) * c0).abs() < 1e-13);
        }
    }

    #[test]
    fn slow_cgf_normalisation_symmetry_and_marginal() {
        let p = QubitDrive::standard(40.0);
        let path = SlowPath::new(&p, SlowOptions::default()).unwrap();
        assert_eq!(path.cgf_joint(0.0, 0.0).unwrap().value, 0.0);
        assert!(path.cgf_joint(1.0, 0.0).unwrap().value.abs() < 1e-12);
        let b = p.mean_beta();
        let k1 = path.cgf_joint(0.3, 0.2 * b).unwrap().value;
        let k2 = path.cgf_joint(0.7, -0.2 * b).unwrap().value;
        assert!((k1 - k2).abs() < 1e-10);
        for u in [0.25, 0.5, 0.9] {
            let joint = path.cgf_joint(u, 0.0).unwrap().value;
            assert!((joint - path.cgf_entropy(u).value).abs() < 1e-8);
        }
        assert!((path.cgf_entropy(0.25).value - path.cgf_entropy(0.75).value).abs() < 1e-12);
    }

    #[test]
    fn cgf_derivatives_reproduce_cumulants() {
        let p = QubitDrive::standard(40.0);
        let path = SlowPath::new(&p, SlowOptions::default()).unwrap();
        let rep = path.cumulants().unwrap();
        let h = 1e-3;
        let k = |u, v| path.cgf_joint(u, v).unwrap().value;
        let mean_s = -(k(h, 0.0) - k(-h, 0.0)) / (2.0 * h);
        let var_s = (k(h, 0.0) - 2.0 * k(0.0, 0.0) + k(-h, 0.0)) / (h * h);
        let mean_w = -(k(0.0, h) - k(0.0, -h)) / (2.0 * h);
        let var_w = (k(0.0, h) - 2.0 * k(0.0, 0.0) + k(0.0, -h)) / (h * h);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        assert!(rel(mean_s, rep.mean_sigma.value) < 1e-6);
        assert!(rel(var_s, rep.var_sigma.value) < 1e-5);
        assert!(rel(mean_w, rep.mean_w_tilde.value) < 1e-6);
        assert!(rel(var_w, rep.var_w.value) < 1e-5);
    }

    #[test]
    fn fdr_refined_and_classical_limit() {
        let p = QubitDrive::standard(40.0);
        let rep = cumulants_slow(&p, SlowOptions::default()).unwrap();
        let di = rep.delta_i_sigma.unwrap().value;
        assert!(di > 0.0);
        assert!(rep.fdr_residual.unwrap().value.abs() <= 1e-8 * rep.var_sigma.value);
        assert!(rep.tur_ratio.unwrap().value >= 2.0);

        let p = QubitDrive::commuting(40.0);
        let rep = cumulants_slow(&p, SlowOptions::default()).unwrap();
        assert!(rep.delta_i_sigma.unwrap().value.abs() <= 1e-10);
        assert!(rep.fdr_gap.value.abs() <= 1e-10);
    }

    #[test]
    fn static_protocol_has_no_dissipation() {
        let p = StaticProtocol::qubit(1.0, 0.7, 0.5, 3.0).unwrap();
        let rep = SlowPath::new(&p, SlowOptions::default()).unwrap().cumulants().unwrap();
        assert_eq!(rep.mean_sigma.value, 0.0);
        assert!(rep.tur_ratio.is_none());
        assert!(matches!(cumulants_slow(&p, SlowOptions::default()), Err(Error::ZeroDissipation { .. })));
    }

    #[test]
    fn non_thermal_current_matches_closed_form_and_gate() {
        let p = CyclicThreeLevel::new(10.0);
        for t in [1.3, 4.4, 7.9] {
            let cp = p.control(t).unwrap();
            let ss = p.steady(&cp).unwrap();
            let exact = shifted(&p.phi_dot_exact(t), &ss.pi);
            let fd = current_operator_phi(&p, t).unwrap();
            assert!((fd - &exact).norm() <= 1e-6 * exact.norm());
        }
        let path = SlowPath::new(&p, SlowOptions::default()).unwrap();
        assert!(path.cgf_entropy(0.0).value == 0.0);
        assert!(path.cgf_entropy(1.0).value.abs() < 1e-12);
        assert!(matches!(path.cgf_joint(0.3, 0.0), Err(Error::Protocol(_))));
        let rep = path.cumulants().unwrap();
        assert!(rep.mean_sigma.value > 0.0);
        assert!(rep.fdr_residual.unwrap().value.abs() <= 1e-8 * rep.var_sigma.value);
    }
}
