//! Oracles and reporting shared by the integration tests.
#![allow(dead_code)]

use std::io::Write;
use std::sync::{Mutex, MutexGuard};

use qfluct::operator::*;
use qfluct::protocol::Protocol;
use qfluct::trajectory::{sigma_of, Event, Schedule, TrajectoryRecord};

static SERIAL: Mutex<()> = Mutex::new(());

/// Run timing-sensitive tests one at a time.
pub fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// One line per criterion, written past the test harness's capture so it
/// shows up in every run.
pub fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[criterion {id:2}] {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Totals from enumerating every trajectory of a short protocol.
#[derive(Debug, Clone, Copy)]
pub struct Enumeration {
    pub paths: usize,
    /// `Σ p(γ)`.
    pub forward: f64,
    /// `Σ p̃(γ)` over dual-reverse trajectories.
    pub dual: f64,
    /// `Σ p(γ) e^{−σ(γ)}` with σ from the sampler's bookkeeping.
    pub exp_minus_sigma: f64,
    /// Largest `|ln(p/p̃) − σ|` over paths with weight above `1e-12`.
    pub log_ratio_mismatch: f64,
}

/// Brute force over all `(μ, x₀ … x_N, ν)`. The Kraus maps are rebuilt here
/// from the protocol at the sampler's step times:
/// `K₀ = 𝟙 − (iH + ½ΣL†L)dt`, `K_x = L_x √dt`. Forward weights are
/// `p_μ tr[Π_ν E_{x_N}…E_{x_0}(Π_μ)]`; dual-reverse weights run the
/// adjoint maps backwards, `p_ν tr[Π_μ D_{x_0}…D_{x_N}(Π_ν)]` with
/// `D_x(Y) = e^{Δφ_x} K_x† Y K_x`.
pub fn enumerate(p: &dyn Protocol, dt: f64) -> Enumeration {
    let sched = Schedule::new(p, dt).expect("schedule");
    let n = sched.n_steps();
    let dt = sched.dt;
    let mut kraus: Vec<Vec<Op>> = Vec::new();
    let mut dphi: Vec<Vec<f64>> = Vec::new();
    for k in 0..n {
        let cp = p.control(sched.time(k)).unwrap();
        let d = cp.model.dim();
        let mut kk = cp.model.jumps.iter().fold(Op::zeros(d, d), |acc, j| acc + j.op.adjoint() * &j.op);
        kk *= c(0.5);
        let k0 = identity(d) - (cp.dynamical_h() * I + kk) * c(dt);
        let mut ops = vec![k0];
        ops.extend(cp.model.jumps.iter().map(|j| &j.op * c(dt.sqrt())));
        kraus.push(ops);
        let mut phis = vec![0.0];
        phis.extend(p.jump_potentials(&cp).unwrap());
        dphi.push(phis);
    }
    let start = p.steady(&p.control(0.0).unwrap()).unwrap();
    let end = p.steady(&p.control(p.duration()).unwrap()).unwrap();
    let d = start.dim();
    let proj = |v: &Op, i: usize| {
        let col = v.column(i).into_owned();
        &col * col.adjoint()
    };
    let m = kraus[0].len();
    let total = m.pow(n as u32);
    let mut out = Enumeration { paths: 0, forward: 0.0, dual: 0.0, exp_minus_sigma: 0.0, log_ratio_mismatch: 0.0 };
    for code in 0..total {
        let mut xs = Vec::with_capacity(n);
        let mut rest = code;
        for _ in 0..n {
            xs.push(rest % m);
            rest /= m;
        }
        for mu in 0..d {
            let pi_mu = proj(&start.spectral.eigenvectors, mu);
            let mut rho = pi_mu.clone();
            for (k, &x) in xs.iter().enumerate() {
                let kx = &kraus[k][x];
                rho = kx * rho * kx.adjoint();
            }
            for nu in 0..d {
                let pi_nu = proj(&end.spectral.eigenvectors, nu);
                let pf = start.log_p[mu].exp() * trace(&(&pi_nu * &rho)).re;
                let mut y = pi_nu.clone();
                for (k, &x) in xs.iter().enumerate().rev() {
                    let kx = &kraus[k][x];
                    y = kx.adjoint() * y * kx * c(dphi[k][x].exp());
                }
                let pd = end.log_p[nu].exp() * trace(&(&pi_mu * &y)).re;
                let events: Vec<Event> = xs
                    .iter()
                    .enumerate()
                    .filter(|(_, &x)| x > 0)
                    .map(|(k, &x)| Event { t: sched.time(k), label: x - 1, delta_phi: dphi[k][x], delta_e: f64::NAN })
                    .collect();
                let rec = TrajectoryRecord { mu, nu, events, seed: 0, index: 0 };
                let sigma = sigma_of(&rec, &sched);
                out.paths += 1;
                out.forward += pf;
                out.dual += pd;
                out.exp_minus_sigma += pf * (-sigma).exp();
                // below this the amplitude is an O(1) cancellation and only
                // roundoff is left
                if pf > 1e-12 && pd > 1e-12 {
                    out.log_ratio_mismatch = out.log_ratio_mismatch.max(((pf / pd).ln() - sigma).abs());
                }
            }
        }
    }
    out
}
