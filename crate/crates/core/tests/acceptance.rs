//! The ten acceptance checks, one test each, run serially so the runtime
//! budgets are measured on an otherwise idle machine.

mod common;

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{enumerate, rel, serial, verdict};
use qfluct::config::RunConfig;
use qfluct::ion::*;
use qfluct::lindblad::*;
use qfluct::operator::*;
use qfluct::protocol::{Protocol, QubitDrive, StaticProtocol};
use qfluct::report::CumulantReport;
use qfluct::slow::{cumulants_slow, SlowOptions, SlowPath};
use qfluct::tilted::*;
use qfluct::trajectory::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The slow qubit ensemble shared by the first two checks.
fn slow_qubit_ensemble() -> &'static (Ensemble, Duration) {
    static E: OnceLock<(Ensemble, Duration)> = OnceLock::new();
    E.get_or_init(|| {
        let t0 = Instant::now();
        let e = sample_ensemble(&QubitDrive::standard(50.0), EnsembleOptions { dt: 0.01, n_traj: 200_000, seed: 1 })
            .unwrap();
        (e, t0.elapsed())
    })
}

fn four(r: &CumulantReport) -> [f64; 4] {
    [r.mean_sigma.value, r.var_sigma.value, r.mean_w_tilde.value, r.var_w.value]
}

const NAMES: [&str; 4] = ["<sigma>", "var sigma", "<w>-W", "var w"];

#[test]
fn c01_integral_fluctuation_theorem() {
    let _g = serial();
    let (e, mc_time) = slow_qubit_ensemble();
    let m = e.exp_minus_sigma();
    let mc_ok = (m.value - 1.0).abs() <= 3.0 * m.se;

    let t0 = Instant::now();
    let g = exact_mgf(&QubitDrive::standard(50.0), 1.0, 0.0, MgfOptions::default()).unwrap();
    let mgf_time = t0.elapsed();
    let g_ok = (g.g - 1.0).abs() <= 1e-8;
    let time_ok = mc_time.as_secs_f64() < 120.0 && mgf_time.as_secs_f64() < 1.0;
    let ok = mc_ok && g_ok && time_ok;
    verdict(
        1,
        "integral fluctuation theorem",
        ok,
        &format!(
            "<e^-sigma> = {:.6} ± {:.1e} ({:.1} SE, {:.0?}); G(1,0) - 1 = {:.1e} ({:.0?})",
            m.value,
            m.se,
            (m.value - 1.0).abs() / m.se,
            mc_time,
            g.g - 1.0,
            mgf_time
        ),
    );
    assert!(ok);
}

#[test]
fn c02_detailed_fluctuation_theorem() {
    let _g = serial();
    let (e, _) = slow_qubit_ensemble();
    let joint = e.dft_check(&Binning::default());
    let slow_ok = joint.violations == 0 && !joint.rows.is_empty();

    // a fast drive breaks the theorem; the check must report, not fail
    let mut c = RunConfig::default();
    if let qfluct::config::ModelConfig::Qubit(q) = &mut c.model {
        q.tau = 1.0;
    }
    c.numerics.dt = 0.001;
    c.numerics.n_traj = 200_000;
    c.validate("check-dft").unwrap();
    let out = qfluct::cli::execute("check-dft", &c).unwrap();
    let fast_violations = out.json["violations"].as_u64().unwrap();
    let fast_rows = out.json["rows"].as_array().unwrap().len();
    let ok = slow_ok && out.passed;
    verdict(
        2,
        "detailed fluctuation theorem",
        ok,
        &format!(
            "slow drive: {} joint bin pairs, {} violations; fast drive: {fast_rows} pairs, {fast_violations} violations reported, exit status pass = {}",
            joint.rows.len(),
            joint.violations,
            out.passed
        ),
    );
    assert!(ok);
}

#[test]
fn c03_cgf_symmetry() {
    let _g = serial();
    let slow = SlowPath::new(&QubitDrive::standard(50.0), SlowOptions::default()).unwrap();
    let mut slow_dev: f64 = 0.0;
    for (u, v) in [(0.3, 0.2), (0.1, -0.5), (0.5, 0.0), (-0.4, 0.8), (1.3, 0.1)] {
        let a = slow.cgf_joint(u, v).unwrap().value;
        let b = slow.cgf_joint(1.0 - u, -v).unwrap().value;
        slow_dev = slow_dev.max((a - b).abs());
    }
    let dev = |tau: f64| {
        let p = QubitDrive::skewed(tau);
        let v = 0.2 * p.mean_beta();
        let a = exact_mgf(&p, 0.3, v, MgfOptions::default()).unwrap().ln_g;
        let b = exact_mgf(&p, 0.7, -v, MgfOptions::default()).unwrap().ln_g;
        (a - b).abs()
    };
    let (d50, d100) = (dev(50.0), dev(100.0));
    let ok = slow_dev <= 1e-10 && d50 / d100 >= 1.8;
    verdict(
        3,
        "CGF symmetry",
        ok,
        &format!(
            "slow max |K(u,v) - K(1-u,-v)| = {slow_dev:.1e}; exact {d50:.2e} (tau 50) -> {d100:.2e} (tau 100), shrink {:.2}x",
            d50 / d100
        ),
    );
    assert!(ok);
}

#[test]
fn c04_three_route_agreement_on_the_ion() {
    let _g = serial();
    let exact_at = |tau: f64| {
        let twin = IonTwin::new(IonParams { tau, ..IonParams::fig1(1.0, 1.0) }).unwrap();
        let stencil = StencilOptions { h: 0.1, with_covariance: false, ..StencilOptions::default() };
        let exact = cumulants_from_mgf(&twin, stencil).unwrap();
        let slow = cumulants_slow(&twin, SlowOptions::default()).unwrap();
        (twin, exact, slow)
    };
    let (twin, exact, slow) = exact_at(100.0);
    let sched = Schedule::new(&twin, 2.5e-4).unwrap();
    let mc = sample_ensemble_with(&sched, 400, 4).unwrap().cumulants();
    let (_, exact2, slow2) = exact_at(200.0);

    let x = four(&exact);
    let tols = [exact.mean_sigma.tol, exact.var_sigma.tol, exact.mean_w_tilde.tol, exact.var_w.tol];
    let m = four(&mc);
    let se = [mc.mean_sigma.tol, mc.var_sigma.tol, mc.mean_w_tilde.tol, mc.var_w.tol];
    let s = four(&slow);
    let (x2, s2) = (four(&exact2), four(&slow2));

    let mut ok = true;
    let mut parts = Vec::new();
    for k in 0..4 {
        let mc_ok = (m[k] - x[k]).abs() <= 3.0 * se[k] + tols[k];
        let stencil_ok = tols[k] <= 1e-3 * x[k].abs();
        let d100 = rel(s[k], x[k]);
        let d200 = rel(s2[k], x2[k]);
        let slow_ok = d100 <= 0.05 && d200 < d100;
        ok &= mc_ok && stencil_ok && slow_ok;
        parts.push(format!(
            "{}: exact {:.5} (±{:.0e}), mc {:.5} ± {:.1e}{}, slow {:.5} rel {:.1}% -> {:.1}% at tau 200{}",
            NAMES[k],
            x[k],
            tols[k],
            m[k],
            se[k],
            if mc_ok { "" } else { " [mc off]" },
            s[k],
            100.0 * d100,
            100.0 * d200,
            if slow_ok { "" } else { " [slow gate]" }
        ));
    }
    verdict(4, "three-route cumulant agreement (ion, tau 100)", ok, &parts.join("; "));
    assert!(ok);
}

#[test]
fn c05_closed_forms_match_the_numeric_pipeline() {
    let _g = serial();
    let seven = |r: &CumulantReport| {
        [
            r.adiabatic_work.unwrap().value,
            r.mean_w().unwrap(),
            r.var_w.value,
            r.mean_sigma.value,
            r.var_sigma.value,
            r.delta_i_sigma.unwrap().value,
            r.delta_i_w.unwrap().value,
        ]
    };
    let worst = |p: IonParams| {
        let closed = seven(&closed_form_report(&p).unwrap());
        let numeric = seven(&cumulants_slow(&IonTwin::new(p).unwrap(), SlowOptions::default()).unwrap());
        closed.iter().zip(&numeric).map(|(a, b)| rel(*b, *a)).fold(0.0, f64::max)
    };
    // βω ≥ 0.5 along the cycle keeps the n_max = 40 truncation harmless
    let t0 = Instant::now();
    let gated = worst(IonParams { t_hot: 0.8, t_cold: 0.5, tail_limit: 1e-4, ..IonParams::default() });
    let runtime = t0.elapsed();
    // at the fig1 parameters the truncation dominates and recedes with n_max
    let fig40 = worst(IonParams::fig1(1.0, 1.0));
    let fig60 = worst(IonParams { n_max: 60, ..IonParams::fig1(1.0, 1.0) });
    let ok = gated <= 1e-3 && fig60 < fig40 && runtime.as_secs_f64() < 30.0;
    verdict(
        5,
        "closed forms vs generic slow-driving pipeline",
        ok,
        &format!(
            "max relative deviation over seven quantities {gated:.1e} at n_max 40 ({runtime:.1?}); fig1 point T_c = 1: {fig40:.1e} (n_max 40) -> {fig60:.1e} (n_max 60)"
        ),
    );
    assert!(ok);
}

#[test]
fn c06_fig1_sweep() {
    let _g = serial();
    let t0 = Instant::now();
    let rows = fig1_sweep(&Fig1Grid::default()).unwrap();
    let runtime = t0.elapsed();
    let tur_min = rows.iter().map(|r| r.tur_ratio).fold(f64::INFINITY, f64::min);
    let gap_min = rows.iter().map(|r| r.fdr_gap).fold(f64::INFINITY, f64::min);
    let eq = rows.iter().map(|r| rel(r.fdr_gap, 2.0 * r.delta_i_sigma)).fold(0.0, f64::max);
    let ok = rows.len() == 625 && tur_min >= 2.0 && gap_min >= 0.0 && eq <= 1e-8 && runtime.as_secs_f64() < 10.0;
    verdict(
        6,
        "TUR/FDR surface (25 x 25)",
        ok,
        &format!("min tur_ratio {tur_min:.6}, min fdr_gap {gap_min:.3e}, max |fdr_gap - 2 dI_sigma| rel {eq:.1e}, {runtime:.1?}"),
    );
    assert!(ok);
}

fn drazin_residuals(g: &Generator, pi: &Op, rng: &mut ChaCha8Rng) -> f64 {
    let d = pi.nrows();
    let x = Op::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let scale = x.norm();
    let target = &x - pi * trace(&x);
    let y = drazin_apply(g, pi, &x).unwrap();
    let i = trace(&y).norm() / scale;
    let ii_a = (g.apply(&y) - &target).norm() / scale;
    let ii_b = (drazin_apply(g, pi, &g.apply(&x)).unwrap() - &target).norm() / scale;
    let iii = drazin_apply(g, pi, pi).unwrap().norm();
    [i, ii_a, ii_b, iii].into_iter().fold(0.0, f64::max)
}

#[test]
fn c07_drazin_axioms() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let d = 2 + k % 3;
        let model = random_detailed_balance_model(d, 0.4 + 0.15 * k as f64, 100 + k as u64).unwrap();
        let g = build_generator(&model).unwrap();
        let ss = steady_state(&g).unwrap();
        check_structure(&model, &ss, None).unwrap();
        for _ in 0..3 {
            worst = worst.max(drazin_residuals(&g, &ss.pi, &mut rng));
        }
    }
    let twin = IonTwin::new(IonParams::fig1(1.0, 1.0)).unwrap();
    let mut ion_worst: f64 = 0.0;
    for t in [0.0, 37.0, 71.0] {
        let cp = twin.control(t).unwrap();
        let g = build_generator(&cp.model).unwrap();
        let ss = twin.steady(&cp).unwrap();
        ion_worst = ion_worst.max(drazin_residuals(&g, &ss.pi, &mut rng));
    }
    let ok = worst <= 1e-8 && ion_worst <= 1e-8;
    verdict(
        7,
        "Drazin axioms",
        ok,
        &format!("worst residual {worst:.1e} over 10 random detailed-balance models (d = 2..4), {ion_worst:.1e} on the ion twin"),
    );
    assert!(ok);
}

#[test]
fn c08_brute_force_enumeration() {
    let _g = serial();
    let mut worst = [0.0f64; 4];
    let mut paths = 0;
    let model = random_detailed_balance_model(2, 0.9, 3).unwrap();
    let beta = 0.9;
    let static_p = StaticProtocol { model, beta, tau: 1.0 };
    for n in 1..=6 {
        let dt = 1e-4;
        let drive = QubitDrive::standard(n as f64 * dt);
        let fixed = StaticProtocol { tau: n as f64 * dt, ..static_p.clone() };
        for p in [&drive as &dyn Protocol, &fixed] {
            let e = enumerate(p, dt);
            paths += e.paths;
            worst[0] = worst[0].max((e.forward - 1.0).abs());
            worst[1] = worst[1].max((e.dual - 1.0).abs());
            worst[2] = worst[2].max((e.exp_minus_sigma - 1.0).abs());
            worst[3] = worst[3].max(e.log_ratio_mismatch);
        }
    }
    let ok = worst[0] <= 1e-6 && worst[1] <= 1e-6 && worst[2] <= 1e-6 && worst[3] <= 1e-8;
    verdict(
        8,
        "small-instance enumeration",
        ok,
        &format!(
            "{paths} paths: |sum p - 1| {:.1e}, |sum p_dual - 1| {:.1e}, |<e^-sigma> - 1| {:.1e}, max |ln(p/p_dual) - sigma| {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    );
    assert!(ok);
}

#[test]
fn c09_fdr_structure() {
    let _g = serial();
    let coherent = cumulants_slow(&QubitDrive::standard(50.0), SlowOptions::default()).unwrap();
    let di = coherent.delta_i_sigma.unwrap().value;
    let resid = (coherent.var_sigma.value - 2.0 * (coherent.mean_sigma.value + di)).abs() / coherent.var_sigma.value;
    let commuting = cumulants_slow(&QubitDrive::commuting(50.0), SlowOptions::default()).unwrap();
    let di0 = commuting.delta_i_sigma.unwrap().value;
    let ok = di > 0.0 && resid <= 1e-8 && di0.abs() <= 1e-10;
    verdict(
        9,
        "FDR structure",
        ok,
        &format!("coherent drive dI_sigma = {di:.4e}, FDR residual {resid:.1e}; commuting drive dI_sigma = {di0:.1e}"),
    );
    assert!(ok);
}

#[test]
fn c10_structure_checkers() {
    let _g = serial();
    let twin = IonTwin::new(IonParams::fig1(1.0, 1.0)).unwrap();
    let mut worst: f64 = 0.0;
    let mut flags = true;
    for t in [0.0, 20.0, 50.0, 83.0] {
        let cp = twin.control(t).unwrap();
        let ss = twin.steady(&cp).unwrap();
        let rep = check_structure(&cp.model, &ss, cp.beta).unwrap();
        let c = twin.curves(t);
        let bw = c.beta * c.omega;
        flags &= rep.privileged() && rep.detailed_balance();
        let ia = rep.labels.iter().position(|l| l == "a").unwrap();
        let ib = rep.labels.iter().position(|l| l == "a+").unwrap();
        worst = worst.max((rep.delta_phi[ia] + bw).abs() / bw).max((rep.delta_phi[ib] - bw).abs() / bw);
    }
    let h = pauli::sz();
    let bad = ModelSpec::new(h.clone(), vec![Jump::new("x", pauli::sx())]).unwrap();
    let (gibbs, _) = gibbs_state(&h, 1.0).unwrap();
    let rejected = matches!(check_structure(&bad, &gibbs, Some(1.0)), Err(qfluct::Error::NotPrivileged { .. }));
    let ok = flags && worst <= 1e-8 && rejected;
    verdict(
        10,
        "structure checkers",
        ok,
        &format!("ion: privileged and detailed balance = {flags}, max relative Δφ error {worst:.1e}; σx jump rejected = {rejected}"),
    );
    assert!(ok);
}
