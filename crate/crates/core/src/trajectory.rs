//! Quantum-jump unravelling of the driven dynamics and the empirical joint
//! distribution of entropy production and work.
//!
//! Each step applies the first-order Kraus set `K₀ = 𝟙 − (iH + ½ΣL†L)dt`,
//! `K_x = L_x √dt`, with all operators evaluated at the step midpoint. The
//! per-step kernels are built once and shared by every trajectory; each
//! trajectory owns a ChaCha stream selected by `(seed, index)`, so results do
//! not depend on how the ensemble is split across threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lindblad::SteadyState;
use crate::operator::*;
use crate::protocol::{adiabatic_work, free_energy_change, Protocol};
use crate::report::{CumulantReport, Route, Tagged};

/// Largest allowed `dt · max_t tr[π K]`.
pub const RATE_LIMIT: f64 = 0.05;

/// Steps whose kernels are held in memory at once.
const WINDOW: usize = 1024;

/// Walkers that take a step together.
const CHUNK: usize = 64;

struct Step {
    k0: SparseOp,
    /// `Σ L†L dt`, for the total jump probability.
    rate: SparseOp,
    /// `L_x √dt`.
    jumps: Vec<SparseOp>,
    delta_phi: Vec<f64>,
    delta_e: Vec<f64>,
}

/// Eigenbasis of a boundary steady state with degenerate eigenvalues grouped.
#[derive(Debug, Clone)]
struct Boundary {
    vectors: Op,
    /// `(first index, last index + 1, ln p)` per eigenvalue group.
    groups: Vec<(usize, usize, f64)>,
}

impl Boundary {
    fn new(ss: &SteadyState) -> Self {
        let lp = &ss.log_p;
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..=lp.len() {
            if i == lp.len() || (lp[i] - lp[start]).abs() > 1e-10 * lp[start].abs().max(1.0) {
                groups.push((start, i, lp[start]));
                start = i;
            }
        }
        Self { vectors: ss.spectral.eigenvectors.clone(), groups }
    }

    fn ln_p(&self, index: usize) -> f64 {
        self.groups.iter().find(|g| g.0 <= index && index < g.1).map(|g| g.2).expect("index in range")
    }
}

/// Boundary data and step grid for one `(protocol, dt)`. Step kernels are
/// built a window at a time while trajectories advance.
pub struct Schedule<'a> {
    protocol: &'a dyn Protocol,
    pub dt: f64,
    pub tau: f64,
    pub labels: Vec<String>,
    n_steps: usize,
    start: Boundary,
    start_cdf: Vec<f64>,
    end: Boundary,
    /// `(ΔF, T(0), T(τ))` for thermal protocols.
    thermal: Option<(f64, f64, f64)>,
    pub adiabatic_work: Option<f64>,
    /// `dt · max_t tr[π K]`.
    pub rate_product: f64,
}

impl<'a> Schedule<'a> {
    pub fn new(p: &'a dyn Protocol, dt: f64) -> Result<Self> {
        let tau = p.duration();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let n_steps = (tau / dt).round().max(1.0) as usize;
        let dt = tau / n_steps as f64;
        // the load varies on the protocol's time scale; a few thousand
        // midpoints are plenty
        let stride = n_steps.div_ceil(4096);
        let load = (0..n_steps)
            .step_by(stride)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|k| -> Result<f64> {
                let cp = p.control((k as f64 + 0.5) * dt)?;
                let ss = p.steady(&cp)?;
                Ok(trace_product(&ss.pi, &cp.model.k).re)
            })
            .collect::<Result<Vec<f64>>>()?;
        let rate_product = dt * load.into_iter().fold(0.0, f64::max);
        if rate_product > RATE_LIMIT {
            return Err(Error::StepTooLarge { product: rate_product, limit: RATE_LIMIT });
        }
        let c0 = p.control(0.0)?;
        let c1 = p.control(tau)?;
        let s0 = p.steady(&c0)?;
        let s1 = p.steady(&c1)?;
        let mut acc = 0.0;
        let start_cdf = s0
            .populations()
            .iter()
            .map(|q| {
                acc += q;
                acc
            })
            .collect();
        let thermal = match (p.thermal(), c0.beta, c1.beta) {
            (true, Some(b0), Some(b1)) => Some((free_energy_change(p)?, 1.0 / b0, 1.0 / b1)),
            _ => None,
        };
        let adiabatic_work = if thermal.is_some() { Some(adiabatic_work(p, 1e-12)?) } else { None };
        Ok(Self {
            protocol: p,
            dt,
            tau,
            labels: c0.model.jumps.iter().map(|j| j.label.clone()).collect(),
            n_steps,
            start: Boundary::new(&s0),
            start_cdf,
            end: Boundary::new(&s1),
            thermal,
            adiabatic_work,
            rate_product,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Time at which step `n` acts.
    pub fn time(&self, n: usize) -> f64 {
        (n as f64 + 0.5) * self.dt
    }

    pub fn dim(&self) -> usize {
        self.start.vectors.nrows()
    }

    fn kernels(&self, range: std::ops::Range<usize>) -> Result<Vec<Step>> {
        let p = self.protocol;
        let dt = self.dt;
        range
            .into_par_iter()
            .map(|k| {
                let cp = p.control(self.time(k))?;
                let dphi = p.jump_potentials(&cp)?;
                let k_op = &cp.model.k;
                let k0 = identity(cp.model.dim()) - (cp.dynamical_h() * I + k_op * c(0.5)) * c(dt);
                let delta_e = match cp.beta {
                    Some(b) => dphi.iter().map(|f| f / b).collect(),
                    None => vec![f64::NAN; dphi.len()],
                };
                Ok(Step {
                    k0: SparseOp::from_dense(&k0),
                    rate: SparseOp::from_dense(&(k_op * c(dt))),
                    jumps: cp.model.jumps.iter().map(|j| SparseOp::from_dense(&(&j.op * c(dt.sqrt())))).collect(),
                    delta_phi: dphi,
                    delta_e,
                })
            })
            .collect()
    }

    /// Advance every walker through all steps, one window of kernels at a
    /// time. Within a window a chunk of walkers takes each step together so
    /// the kernel stays in cache.
    fn drive(&self, walkers: &mut [Walker]) -> Result<()> {
        let mut first = 0;
        while first < self.n_steps {
            let last = (first + WINDOW).min(self.n_steps);
            let steps = self.kernels(first..last)?;
            walkers.par_chunks_mut(CHUNK).try_for_each(|chunk| {
                for (k, step) in steps.iter().enumerate() {
                    for w in chunk.iter_mut() {
                        w.step(self, step, first + k)?;
                    }
                }
                Ok::<(), Error>(())
            })?;
            first = last;
        }
        walkers.par_iter_mut().with_min_len(16).for_each(|w| w.measure(self));
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    /// Index into the model's jump list.
    pub label: usize,
    pub delta_phi: f64,
    pub delta_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub mu: usize,
    pub nu: usize,
    pub events: Vec<Event>,
    pub seed: u64,
    pub index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointSample {
    pub sigma: f64,
    pub w: f64,
    pub w_tilde: f64,
}

fn normalise(v: &mut [C64]) -> f64 {
    let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let s = 1.0 / n2.sqrt();
    for z in v.iter_mut() {
        *z *= s;
    }
    n2
}

/// One trajectory in flight.
struct Walker {
    rng: ChaCha8Rng,
    psi: Vec<C64>,
    tmp: Vec<C64>,
    mu: usize,
    nu: usize,
    sum_phi: f64,
    sum_e: f64,
    events: Option<Vec<Event>>,
}

impl Walker {
    fn new(sched: &Schedule, seed: u64, index: u64, keep_events: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let d = sched.dim();
        let x: f64 = rng.gen();
        let mu = sched.start_cdf.iter().position(|&c| x < c).unwrap_or(d - 1);
        Self {
            rng,
            psi: sched.start.vectors.column(mu).iter().cloned().collect(),
            tmp: vec![ZERO; d],
            mu,
            nu: 0,
            sum_phi: 0.0,
            sum_e: 0.0,
            events: keep_events.then(Vec::new),
        }
    }

    fn step(&mut self, sched: &Schedule, step: &Step, n: usize) -> Result<()> {
        let r = step.rate.expectation(&self.psi);
        let x: f64 = self.rng.gen();
        if x < r {
            let mut acc = 0.0;
            let mut chosen = None;
            for (j, jump) in step.jumps.iter().enumerate() {
                jump.mul_vec_into(&self.psi, &mut self.tmp);
                let w: f64 = self.tmp.iter().map(|z| z.norm_sqr()).sum();
                if w > 0.0 {
                    chosen = Some(j);
                }
                acc += w;
                if x < acc {
                    break;
                }
            }
            // rounding can leave x just above the last cumulative weight
            let j = chosen.expect("positive total jump weight");
            if !(x < acc) {
                step.jumps[j].mul_vec_into(&self.psi, &mut self.tmp);
            }
            normalise(&mut self.tmp);
            std::mem::swap(&mut self.psi, &mut self.tmp);
            self.sum_phi += step.delta_phi[j];
            self.sum_e += step.delta_e[j];
            if let Some(ev) = self.events.as_mut() {
                ev.push(Event { t: sched.time(n), label: j, delta_phi: step.delta_phi[j], delta_e: step.delta_e[j] });
            }
        } else {
            step.k0.mul_vec_into(&self.psi, &mut self.tmp);
            let n2 = normalise(&mut self.tmp);
            let weight = n2 + r;
            if !((weight - 1.0).abs() <= 10.0 * sched.dt) {
                return Err(Error::NormCollapse { step: n, weight });
            }
            std::mem::swap(&mut self.psi, &mut self.tmp);
        }
        Ok(())
    }

    /// Projective measurement in the final eigenbasis, by eigenvalue group.
    fn measure(&mut self, sched: &Schedule) {
        let v = &sched.end.vectors;
        let d = sched.dim();
        let x: f64 = self.rng.gen();
        let mut acc = 0.0;
        self.nu = sched.end.groups.last().expect("non-empty").0;
        for &(lo, hi, _) in &sched.end.groups {
            for i in lo..hi {
                let amp: C64 = (0..d).map(|r| v[(r, i)].conj() * self.psi[r]).sum();
                acc += amp.norm_sqr();
            }
            if x < acc {
                self.nu = lo;
                break;
            }
        }
    }
}

fn joint_sample(sched: &Schedule, mu: usize, nu: usize, sum_phi: f64, sum_e: f64) -> JointSample {
    let (lp0, lp1) = (sched.start.ln_p(mu), sched.end.ln_p(nu));
    let sigma = lp0 - lp1 - sum_phi;
    let (w, w_tilde) = match (sched.thermal, sched.adiabatic_work) {
        (Some((df, t0, t1)), Some(aw)) => {
            let w = df + t0 * lp0 - t1 * lp1 - sum_e;
            (w, w - aw)
        }
        _ => (f64::NAN, f64::NAN),
    };
    JointSample { sigma, w, w_tilde }
}

/// One trajectory with its full event list.
pub fn sample_trajectory(sched: &Schedule, seed: u64, index: u64) -> Result<TrajectoryRecord> {
    let mut w = [Walker::new(sched, seed, index, true)];
    sched.drive(&mut w)?;
    let [w] = w;
    Ok(TrajectoryRecord { mu: w.mu, nu: w.nu, events: w.events.unwrap_or_default(), seed, index })
}

/// `σ = ln p_μ(0) − ln p_ν(τ) − Σ Δφ`.
pub fn sigma_of(rec: &TrajectoryRecord, sched: &Schedule) -> f64 {
    let phi = rec.events.iter().map(|e| e.delta_phi).sum();
    joint_sample(sched, rec.mu, rec.nu, phi, 0.0).sigma
}

/// `(w, w̃)` with `w = ΔF + T(0) ln p_μ − T(τ) ln p_ν − Σ Δe`.
pub fn work_of(rec: &TrajectoryRecord, sched: &Schedule) -> (f64, f64) {
    let e = rec.events.iter().map(|e| e.delta_e).sum();
    let s = joint_sample(sched, rec.mu, rec.nu, 0.0, e);
    (s.w, s.w_tilde)
}

#[derive(Debug, Clone, Copy)]
pub struct EnsembleOptions {
    pub dt: f64,
    pub n_traj: usize,
    pub seed: u64,
}

/// Samples of `(σ, w, w̃)` in trajectory-index order.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub samples: Vec<JointSample>,
    pub adiabatic_work: Option<f64>,
    pub dt: f64,
    pub seed: u64,
}

pub fn sample_ensemble(p: &dyn Protocol, opts: EnsembleOptions) -> Result<Ensemble> {
    let sched = Schedule::new(p, opts.dt)?;
    sample_ensemble_with(&sched, opts.n_traj, opts.seed)
}

pub fn sample_ensemble_with(sched: &Schedule, n_traj: usize, seed: u64) -> Result<Ensemble> {
    if n_traj == 0 {
        return Err(Error::InvalidArgument("need at least one trajectory".into()));
    }
    let mut walkers: Vec<Walker> = (0..n_traj as u64).map(|i| Walker::new(sched, seed, i, false)).collect();
    sched.drive(&mut walkers)?;
    let samples = walkers.iter().map(|w| joint_sample(sched, w.mu, w.nu, w.sum_phi, w.sum_e)).collect();
    Ok(Ensemble { samples, adiabatic_work: sched.adiabatic_work, dt: sched.dt, seed })
}

pub const JACKKNIFE_BLOCKS: usize = 20;

/// Per-block sums, enough for every estimator used here.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    n: f64,
    s: f64,
    ss: f64,
    w: f64,
    ww: f64,
    sw: f64,
    e: f64,
}

impl Sums {
    fn add(&mut self, x: &JointSample) {
        self.n += 1.0;
        self.s += x.sigma;
        self.ss += x.sigma * x.sigma;
        self.w += x.w_tilde;
        self.ww += x.w_tilde * x.w_tilde;
        self.sw += x.sigma * x.w_tilde;
        self.e += (-x.sigma).exp();
    }

    fn minus(&self, o: &Sums) -> Sums {
        Sums {
            n: self.n - o.n,
            s: self.s - o.s,
            ss: self.ss - o.ss,
            w: self.w - o.w,
            ww: self.ww - o.ww,
            sw: self.sw - o.sw,
            e: self.e - o.e,
        }
    }
}

/// An estimate with its jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Ensemble {
    fn blocks(&self) -> (Sums, Vec<Sums>) {
        let b = JACKKNIFE_BLOCKS.min(self.samples.len()).max(1);
        let mut blocks = vec![Sums::default(); b];
        let mut total = Sums::default();
        let n = self.samples.len();
        for (i, x) in self.samples.iter().enumerate() {
            blocks[i * b / n].add(x);
            total.add(x);
        }
        (total, blocks)
    }

    fn jackknife(&self, f: impl Fn(&Sums) -> f64) -> Estimate {
        let (total, blocks) = self.blocks();
        let value = f(&total);
        let b = blocks.len() as f64;
        if blocks.len() < 2 {
            return Estimate { value, se: f64::INFINITY };
        }
        let loo: Vec<f64> = blocks.iter().map(|blk| f(&total.minus(blk))).collect();
        let mean = loo.iter().sum::<f64>() / b;
        let var = loo.iter().map(|x| (x - mean).powi(2)).sum::<f64>() * (b - 1.0) / b;
        Estimate { value, se: var.sqrt() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `⟨e^{−σ}⟩`.
    pub fn exp_minus_sigma(&self) -> Estimate {
        self.jackknife(|s| s.e / s.n)
    }

    pub fn mean_sigma(&self) -> Estimate {
        self.jackknife(|s| s.s / s.n)
    }

    pub fn var_sigma(&self) -> Estimate {
        self.jackknife(|s| var(s.n, s.s, s.ss))
    }

    pub fn mean_w_tilde(&self) -> Estimate {
        self.jackknife(|s| s.w / s.n)
    }

    pub fn var_w(&self) -> Estimate {
        self.jackknife(|s| var(s.n, s.w, s.ww))
    }

    pub fn cov_sigma_w(&self) -> Estimate {
        self.jackknife(|s| (s.sw - s.s * s.w / s.n) / (s.n - 1.0))
    }

    /// Cumulants with jackknife standard errors as tolerances.
    pub fn cumulants(&self) -> CumulantReport {
        let pair = |e: Estimate| (e.value, e.se);
        let thermal = self.adiabatic_work.is_some();
        let nan = (f64::NAN, f64::NAN);
        let mut rep = CumulantReport::assemble(
            Route::Trajectories,
            pair(self.mean_sigma()),
            pair(self.var_sigma()),
            if thermal { pair(self.mean_w_tilde()) } else { nan },
            if thermal { pair(self.var_w()) } else { nan },
            self.adiabatic_work.map(|a| (a, 1e-12)),
            None,
            None,
        );
        if thermal {
            let c = self.cov_sigma_w();
            rep.cov_sigma_w = Some(Tagged::new(c.value, Route::Trajectories, c.se));
        } else {
            rep.tur_ratio = None;
        }
        rep
    }

    /// Symmetric bins of width given or chosen by Freedman–Diaconis on `|x|`.
    pub fn histogram(&self, binning: &Binning) -> Histogram {
        // joint bins share the samples two ways, so they are widened
        let rate = if binning.joint { 0.25 } else { 1.0 / 3.0 };
        let width_s = binning.sigma_width.unwrap_or_else(|| fd_width(self.samples.iter().map(|x| x.sigma), rate));
        let width_w = if binning.joint {
            Some(binning.w_width.unwrap_or_else(|| fd_width(self.samples.iter().map(|x| x.w_tilde), rate)))
        } else {
            None
        };
        let mut bins: BTreeMap<(i64, i64), BinStats> = BTreeMap::new();
        for x in &self.samples {
            let ks = (x.sigma / width_s).round() as i64;
            let kw = width_w.map_or(0, |h| (x.w_tilde / h).round() as i64);
            let b = bins.entry((ks, kw)).or_default();
            b.count += 1;
            b.sum_exp_minus_sigma += (-x.sigma).exp();
        }
        Histogram { sigma_width: width_s, w_width: width_w, bins }
    }

    /// Detailed fluctuation theorem check on mirror-paired bins.
    pub fn dft_check(&self, binning: &Binning) -> DftReport {
        self.histogram(binning).dft(binning)
    }
}

fn var(n: f64, s: f64, ss: f64) -> f64 {
    (ss - s * s / n) / (n - 1.0)
}

/// `2 IQR(|x|) / n^rate`; `rate = 1/3` is the Freedman–Diaconis rule.
fn fd_width(xs: impl Iterator<Item = f64>, rate: f64) -> f64 {
    let mut a: Vec<f64> = xs.map(f64::abs).filter(|x| x.is_finite()).collect();
    if a.is_empty() {
        return 1.0;
    }
    a.sort_by(|x, y| x.total_cmp(y));
    let q = |f: f64| a[((a.len() - 1) as f64 * f).round() as usize];
    let iqr = q(0.75) - q(0.25);
    let n = (a.len() as f64).powf(rate);
    let h = 2.0 * iqr / n;
    if h > 0.0 {
        h
    } else {
        let m = a.iter().sum::<f64>() / a.len() as f64;
        (m / n).max(1e-12)
    }
}

#[derive(Debug, Clone)]
pub struct Binning {
    /// Bin in `(σ, w̃)` rather than `σ` alone.
    pub joint: bool,
    pub sigma_width: Option<f64>,
    pub w_width: Option<f64>,
    /// Pairs are tested when the larger bin holds at least this many samples.
    pub min_count: usize,
    /// Allowed discrepancy in standard errors.
    pub z: f64,
}

impl Default for Binning {
    fn default() -> Self {
        Self { joint: true, sigma_width: None, w_width: None, min_count: 100, z: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct BinStats {
    pub count: usize,
    pub sum_exp_minus_sigma: f64,
}

/// Bin `(i, j)` is centred on `(i h_σ, j h_w)`, so `(−i, −j)` is its mirror.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub sigma_width: f64,
    pub w_width: Option<f64>,
    pub bins: BTreeMap<(i64, i64), BinStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DftRow {
    pub sigma_bin: i64,
    pub w_bin: Option<i64>,
    pub sigma_center: f64,
    pub w_center: Option<f64>,
    pub count: usize,
    pub mirror_count: usize,
    /// `ln(n_b / n_{−b}) + ln⟨e^{−σ}⟩_b`; zero when `P(σ)/P(−σ) = e^σ`.
    pub discrepancy: f64,
    pub se: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DftReport {
    pub rows: Vec<DftRow>,
    /// Populated bins whose mirror is empty.
    pub insufficient_support: Vec<(i64, Option<i64>)>,
    pub violations: usize,
}

impl DftReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.insufficient_support.is_empty()
    }
}

impl Histogram {
    /// With `n_{−b} = ∫_b e^{−σ} P`, the ratio `n_b / n_{−b}` is exactly
    /// `1/⟨e^{−σ}⟩_b` under the theorem, whatever the bin width.
    pub fn dft(&self, binning: &Binning) -> DftReport {
        let mut rows = Vec::new();
        let mut insufficient = Vec::new();
        for (&(i, j), b) in &self.bins {
            // each pair once, from its positive-σ member
            if i < 0 || (i == 0 && j <= 0) {
                continue;
            }
            let mirror = self.bins.get(&(-i, -j)).map_or(0, |m| m.count);
            if b.count.max(mirror) < binning.min_count {
                continue;
            }
            let wb = self.w_width.map(|_| j);
            if mirror == 0 || b.count == 0 {
                insufficient.push((i, wb));
                continue;
            }
            let disc = (b.count as f64 / mirror as f64).ln() + (b.sum_exp_minus_sigma / b.count as f64).ln();
            let se = (1.0 / b.count as f64 + 1.0 / mirror as f64).sqrt();
            rows.push(DftRow {
                sigma_bin: i,
                w_bin: wb,
                sigma_center: i as f64 * self.sigma_width,
                w_center: self.w_width.map(|h| j as f64 * h),
                count: b.count,
                mirror_count: mirror,
                discrepancy: disc,
                se,
                consistent: disc.abs() <= binning.z * se,
            });
        }
        let violations = rows.iter().filter(|r| !r.consistent).count();
        DftReport { rows, insufficient_support: insufficient, violations }
    }
}
