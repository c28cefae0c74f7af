//! Generators, steady states, Drazin inverse and structure checks.
//!
//! Superoperators are assembled sparsely and split into the connected
//! components of their coupling graph. A truncated oscillator with a
//! diagonal Hamiltonian falls apart into blocks of fixed `m - n`, so every
//! linear solve stays at the size of a single Fock ladder.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::operator::*;

/// Conditioning above which a restricted solve is rejected.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Smallest admissible steady-state population for numerically solved states.
pub const FAITHFUL_FLOOR: f64 = POSITIVE_FLOOR;
/// Default relative tolerance of the structure checks.
pub const STRUCTURE_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Jump {
    pub label: String,
    pub op: Op,
}

impl Jump {
    pub fn new(label: impl Into<String>, op: Op) -> Self {
        Self { label: label.into(), op }
    }
}

/// Hamiltonian plus jump operators at one control point.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub h: Op,
    pub jumps: Vec<Jump>,
    /// `Σ L†L`, cached.
    pub(crate) k: Op,
}

impl ModelSpec {
    pub fn new(h: Op, jumps: Vec<Jump>) -> Result<Self> {
        let d = h.nrows();
        if !h.is_square() {
            return Err(Error::DimensionMismatch { expected: d, got: h.ncols() });
        }
        let residual = hermiticity_residual(&h);
        if residual > 1e-12 * max_abs(&h).max(1.0) {
            return Err(Error::NotHermitian { residual });
        }
        if jumps.is_empty() {
            return Err(Error::NoJumpOperators);
        }
        let mut k = Op::zeros(d, d);
        for j in &jumps {
            if j.op.nrows() != d || j.op.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, got: j.op.nrows() });
            }
            if j.op.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFiniteEntries { context: "jump operator" });
            }
            k += gram(&j.op);
        }
        Ok(Self { h, jumps, k })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// `𝓛(X) = −i[H,X] + Σ (L X L† − ½{L†L, X})`, operator form.
    pub fn apply(&self, x: &Op) -> Op {
        let mut out = (&self.h * x - x * &self.h) * (-I);
        for j in &self.jumps {
            out += &j.op * x * j.op.adjoint();
        }
        out -= (&self.k * x + x * &self.k) * c(0.5);
        out
    }

    /// `𝓛*(X) = i[H,X] + Σ (L† X L − ½{L†L, X})`, operator form.
    pub fn apply_adjoint(&self, x: &Op) -> Op {
        let mut out = (&self.h * x - x * &self.h) * I;
        for j in &self.jumps {
            out += j.op.adjoint() * x * &j.op;
        }
        out -= (&self.k * x + x * &self.k) * c(0.5);
        out
    }

    /// Drift `−iH − ½ΣL†L` and jumps of the sandwich form of the generator.
    pub fn sandwich(&self, extra_drift: Option<&Op>) -> SandwichMap {
        let mut drift = &self.h * (-I) - &self.k * c(0.5);
        if let Some(e) = extra_drift {
            drift += e;
        }
        SandwichMap {
            dim: self.dim(),
            drift: SparseOp::from_dense(&drift),
            jumps: self.jumps.iter().map(|j| SparseOp::from_dense(&j.op)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct Block {
    idx: Vec<usize>,
    mat: DMatrix<C64>,
}

/// Block-sparse generator on column-stacked operators.
#[derive(Debug, Clone)]
pub struct Generator {
    pub dim: usize,
    blocks: Vec<Block>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl Generator {
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        let n = dim * dim;
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, C64)> = Vec::with_capacity(triplets.len());
        for (r, col, z) in triplets {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == col => last.2 += z,
                _ => merged.push((r, col, z)),
            }
        }
        merged.retain(|t| t.2 != ZERO);

        let mut parent: Vec<usize> = (0..n).collect();
        for &(r, col, _) in &merged {
            let (a, b) = (find(&mut parent, r), find(&mut parent, col));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut root_block = vec![usize::MAX; n];
        let mut local = vec![0usize; n];
        let mut members: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            if root_block[r] == usize::MAX {
                root_block[r] = members.len();
                members.push(Vec::new());
            }
            let b = root_block[r];
            local[i] = members[b].len();
            members[b].push(i);
        }
        let mut blocks: Vec<Block> = members
            .into_iter()
            .map(|idx| {
                let m = idx.len();
                Block { idx, mat: DMatrix::zeros(m, m) }
            })
            .collect();
        for (r, col, z) in merged {
            let b = root_block[find(&mut parent, r)];
            blocks[b].mat[(local[r], local[col])] = z;
        }
        Self { dim, blocks }
    }

    pub fn from_superop(g: &SuperOperator) -> Self {
        let n = g.mat.nrows();
        let mut t = Vec::new();
        for col in 0..n {
            for r in 0..n {
                let z = g.mat[(r, col)];
                if z != ZERO {
                    t.push((r, col, z));
                }
            }
        }
        Self::from_triplets(g.dim, t)
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.idx.len()).collect()
    }

    pub fn apply(&self, x: &Op) -> Op {
        let v = x.as_slice();
        let mut out = vec![ZERO; v.len()];
        for b in &self.blocks {
            let xb = DVector::from_iterator(b.idx.len(), b.idx.iter().map(|&i| v[i]));
            let yb = &b.mat * xb;
            for (k, &i) in b.idx.iter().enumerate() {
                out[i] = yb[k];
            }
        }
        Op::from_column_slice(self.dim, self.dim, &out)
    }

    /// Heisenberg-picture action. The matrix of `𝓛*` is the conjugate
    /// transpose of that of `𝓛` because generators preserve Hermiticity.
    pub fn apply_adjoint(&self, x: &Op) -> Op {
        let v = x.as_slice();
        let mut out = vec![ZERO; v.len()];
        for b in &self.blocks {
            let xb = DVector::from_iterator(b.idx.len(), b.idx.iter().map(|&i| v[i]));
            let yb = b.mat.ad_mul(&xb);
            for (k, &i) in b.idx.iter().enumerate() {
                out[i] = yb[k];
            }
        }
        Op::from_column_slice(self.dim, self.dim, &out)
    }

    pub fn superop(&self) -> SuperOperator {
        let mut s = SuperOperator::zeros(self.dim);
        for b in &self.blocks {
            for (cl, &cg) in b.idx.iter().enumerate() {
                for (rl, &rg) in b.idx.iter().enumerate() {
                    s.mat[(rg, cg)] = b.mat[(rl, cl)];
                }
            }
        }
        s
    }

    pub fn adjoint_superop(&self) -> SuperOperator {
        SuperOperator { dim: self.dim, mat: self.superop().mat.adjoint() }
    }

    /// Full spectrum, collected block by block.
    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        let mut out = Vec::with_capacity(self.dim * self.dim);
        for b in &self.blocks {
            if b.idx.len() == 1 {
                out.push(b.mat[(0, 0)]);
                continue;
            }
            let ev = b
                .mat
                .clone()
                .eigenvalues()
                .ok_or(Error::NonFiniteEntries { context: "generator eigenvalues" })?;
            out.extend(ev.iter().cloned());
        }
        Ok(out)
    }

    fn is_core(&self, b: &Block, support: &[usize]) -> bool {
        let d = self.dim;
        b.idx.iter().any(|&i| i % (d + 1) == 0 || support.binary_search(&i).is_ok())
    }

    fn scale(&self) -> f64 {
        self.blocks.iter().flat_map(|b| b.mat.iter()).fold(0.0f64, |m, z| m.max(z.norm())).max(1e-300)
    }
}

/// Triplets of `X ↦ A X B`, skipping exact zeros.
fn sandwich_triplets(a: &SparseOp, b: &SparseOp, out: &mut Vec<(usize, usize, C64)>) {
    let d = a.dim;
    let b_entries: Vec<_> = b.entries().collect();
    for (i, k, aik) in a.entries() {
        for &(l, j, blj) in &b_entries {
            out.push((i + d * j, k + d * l, aik * blj));
        }
    }
}

pub fn build_generator(spec: &ModelSpec) -> Result<Generator> {
    let d = spec.dim();
    let id = SparseOp::from_dense(&identity(d));
    let mut t = Vec::new();
    sandwich_triplets(&SparseOp::from_dense(&(&spec.h * (-I))), &id, &mut t);
    sandwich_triplets(&id, &SparseOp::from_dense(&(&spec.h * I)), &mut t);
    let half_k = SparseOp::from_dense(&(&spec.k * c(-0.5)));
    sandwich_triplets(&half_k, &id, &mut t);
    sandwich_triplets(&id, &half_k, &mut t);
    for j in &spec.jumps {
        sandwich_triplets(&SparseOp::from_dense(&j.op), &SparseOp::from_dense(&j.op.adjoint()), &mut t);
    }
    Ok(Generator::from_triplets(d, t))
}

/// Steady state with its spectral data.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub pi: Op,
    /// Spectral decomposition of `pi` (eigenvalues `p_i` ascending).
    pub spectral: SpectralDecomp,
    /// `ln p_i`, aligned with `spectral`; exact for Gibbs states even when
    /// `p_i` underflows.
    pub log_p: Vec<f64>,
    /// Spectral gap of the generator, when it was computed.
    pub gap: Option<f64>,
}

impl SteadyState {
    pub fn from_density(pi: &Op) -> Result<Self> {
        let spectral = SpectralDecomp::new(pi)?;
        let min = spectral.min_eigenvalue();
        if !(min >= FAITHFUL_FLOOR) {
            return Err(Error::NonFaithful { min_population: min, floor: FAITHFUL_FLOOR });
        }
        let log_p = spectral.eigenvalues.iter().map(|p| p.ln()).collect();
        Ok(Self { pi: pi.clone(), spectral, log_p, gap: None })
    }

    pub fn dim(&self) -> usize {
        self.pi.nrows()
    }

    pub fn populations(&self) -> &[f64] {
        &self.spectral.eigenvalues
    }

    /// Non-equilibrium potential `Φ = −ln π`.
    pub fn phi(&self) -> Op {
        let u = &self.spectral.eigenvectors;
        let d = self.dim();
        let mut scaled = u.clone();
        for j in 0..d {
            for i in 0..d {
                scaled[(i, j)] *= c(-self.log_p[j]);
            }
        }
        scaled * u.adjoint()
    }

    pub fn power(&self, s: f64) -> Op {
        let u = &self.spectral.eigenvectors;
        let d = self.dim();
        let mut scaled = u.clone();
        for j in 0..d {
            let f = c((s * self.log_p[j]).exp());
            for i in 0..d {
                scaled[(i, j)] *= f;
            }
        }
        scaled * u.adjoint()
    }
}

/// Gibbs state `e^{−βH}/Z` together with `ln Z`.
pub fn gibbs_state(h: &Op, beta: f64) -> Result<(SteadyState, f64)> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("inverse temperature must be positive, got {beta}")));
    }
    let sd = SpectralDecomp::new(h)?;
    // eigenvalues of H ascending -> populations descending; reverse to keep
    // populations ascending.
    let d = sd.dim();
    let energies: Vec<f64> = sd.eigenvalues.iter().rev().cloned().collect();
    let vecs = Op::from_fn(d, d, |i, j| sd.eigenvectors[(i, d - 1 - j)]);
    let e0 = sd.eigenvalues[0];
    let ln_z = -beta * e0 + energies.iter().map(|e| (-beta * (e - e0)).exp()).sum::<f64>().ln();
    let log_p: Vec<f64> = energies.iter().map(|e| -beta * e - ln_z).collect();
    let p: Vec<f64> = log_p.iter().map(|l| l.exp()).collect();
    let spectral = SpectralDecomp::from_parts(p, vecs);
    let pi = spectral.reconstruct();
    Ok((SteadyState { pi, spectral, log_p, gap: None }, ln_z))
}

fn lu_solve(m: DMatrix<C64>, rhs: DVector<C64>) -> Result<DVector<C64>> {
    let lu = m.lu();
    let u = lu.u();
    let (mut hi, mut lo) = (0.0f64, f64::INFINITY);
    for i in 0..u.nrows() {
        let p = u[(i, i)].norm();
        hi = hi.max(p);
        lo = lo.min(p);
    }
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::SingularRestriction { condition });
    }
    lu.solve(&rhs).ok_or(Error::SingularRestriction { condition })
}

/// Unique faithful steady state, uniqueness and gap from the block spectra.
pub fn steady_state(g: &Generator) -> Result<SteadyState> {
    let d = g.dim;
    let core: Vec<&Block> = g.blocks.iter().filter(|b| g.is_core(b, &[])).collect();
    let idx: Vec<usize> = core.iter().flat_map(|b| b.idx.iter().cloned()).collect();
    let n = idx.len();
    let mut m = DMatrix::<C64>::zeros(n, n);
    let mut off = 0;
    for b in &core {
        let k = b.idx.len();
        m.view_mut((off, off), (k, k)).copy_from(&b.mat);
        off += k;
    }
    let row = idx.iter().position(|&i| i % (d + 1) == 0).expect("core holds the diagonal");
    for (k, &i) in idx.iter().enumerate() {
        m[(row, k)] = if i % (d + 1) == 0 { ONE } else { ZERO };
    }
    let mut rhs = DVector::zeros(n);
    rhs[row] = ONE;
    let sol = lu_solve(m, rhs).map_err(|e| match e {
        Error::SingularRestriction { .. } => Error::DegenerateSteadyState { count: 2, tol: 1e-10 },
        other => other,
    })?;
    let mut v = vec![ZERO; d * d];
    for (k, &i) in idx.iter().enumerate() {
        v[i] = sol[k];
    }
    let raw = Op::from_column_slice(d, d, &v);
    let mut pi = (&raw + raw.adjoint()) * c(0.5);
    let tr = pi.trace();
    pi /= tr;

    let scale = g.scale().max(1.0);
    let tol = 1e-10 * scale;
    let eig = g.eigenvalues()?;
    let zeros = eig.iter().filter(|z| z.re.abs() <= tol).count();
    if zeros != 1 {
        return Err(Error::DegenerateSteadyState { count: zeros, tol });
    }
    let gap = eig.iter().filter(|z| z.re.abs() > tol).map(|z| -z.re).fold(f64::INFINITY, f64::min);

    let residual = max_abs(&g.apply(&pi));
    if residual > 1e-9 * scale {
        return Err(Error::NoConvergence { tol: 1e-9, achieved: residual });
    }
    let mut ss = SteadyState::from_density(&pi)?;
    ss.gap = Some(gap);
    Ok(ss)
}

/// Support of an operator as sorted column-stacked indices.
fn support(x: &Op) -> Vec<usize> {
    x.as_slice().iter().enumerate().filter(|(_, z)| **z != ZERO).map(|(i, _)| i).collect()
}

/// `𝓛⁺(X)`: the traceless solution of `𝓛(Y) = X − tr[X] π`.
pub fn drazin_apply(g: &Generator, pi: &Op, x: &Op) -> Result<Op> {
    bordered_solve(g, pi, x, false)
}

/// `Ĝ(A) = ∫₀^∞ e^{θ𝓛*}(δA) dθ`: the solution of `𝓛*(Y) = −δA` with
/// `tr[Y π] = 0`, where `δA = A − tr[Aπ]`.
pub fn adjoint_green(g: &Generator, pi: &Op, a: &Op) -> Result<Op> {
    let da = shifted(a, pi);
    bordered_solve(g, pi, &(-da), true)
}

fn bordered_solve(g: &Generator, pi: &Op, x: &Op, adjoint: bool) -> Result<Op> {
    let d = g.dim;
    if x.nrows() != d || pi.nrows() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.nrows() });
    }
    let pi_support = support(pi);
    let xv = x.as_slice();
    let piv = pi.as_slice();
    let mut out = vec![ZERO; d * d];

    let mut core_idx = Vec::new();
    let mut core_blocks = Vec::new();
    for b in &g.blocks {
        if g.is_core(b, &pi_support) {
            core_idx.extend(b.idx.iter().cloned());
            core_blocks.push(b);
            continue;
        }
        if b.idx.iter().all(|&i| xv[i] == ZERO) {
            continue;
        }
        let m = if adjoint { b.mat.adjoint() } else { b.mat.clone() };
        let rhs = DVector::from_iterator(b.idx.len(), b.idx.iter().map(|&i| xv[i]));
        let y = lu_solve(m, rhs)?;
        for (k, &i) in b.idx.iter().enumerate() {
            out[i] = y[k];
        }
    }

    let n = core_idx.len();
    let mut m = DMatrix::<C64>::zeros(n + 1, n + 1);
    let mut off = 0;
    for b in &core_blocks {
        let k = b.idx.len();
        if adjoint {
            m.view_mut((off, off), (k, k)).copy_from(&b.mat.adjoint());
        } else {
            m.view_mut((off, off), (k, k)).copy_from(&b.mat);
        }
        off += k;
    }
    for (k, &i) in core_idx.iter().enumerate() {
        let (r, col) = (i % d, i / d);
        let diag = if r == col { ONE } else { ZERO };
        if adjoint {
            // [𝓛* vec(𝟙); πrow 0], πrow · vec(Y) = tr[π Y]
            m[(k, n)] = diag;
            m[(n, k)] = pi[(col, r)];
        } else {
            // [𝓛 vec(π); trace-row 0]
            m[(k, n)] = piv[i];
            m[(n, k)] = diag;
        }
    }
    let mut rhs = DVector::zeros(n + 1);
    for (k, &i) in core_idx.iter().enumerate() {
        rhs[k] = xv[i];
    }
    let y = lu_solve(m, rhs)?;
    for (k, &i) in core_idx.iter().enumerate() {
        out[i] = y[k];
    }
    Ok(Op::from_column_slice(d, d, &out))
}

/// Outcome of the structural checks at one control point.
#[derive(Debug, Clone)]
pub struct StructureReport {
    pub labels: Vec<String>,
    /// `Δφ_x` from the scalar fit `π L π⁻¹ ≈ e^{−Δφ} L`.
    pub delta_phi: Vec<f64>,
    /// Energy change `Δe_x = Δφ_x / β` when a temperature is supplied.
    pub delta_e: Option<Vec<f64>>,
    /// Relative fit residual per jump.
    pub residuals: Vec<f64>,
    /// Worst residual of `π^u L π^{−u} = e^{−uΔφ} L` over `u ∈ {0.3, 0.7, −1}`.
    pub power_residuals: Vec<f64>,
    /// Relative size of `[𝓛*, i[H,·]]`.
    pub covariance_residual: f64,
    /// Relative size of `𝓛̃ − 𝓛* + 2i[H,·]` for the `s = ½` dual.
    pub detailed_balance_residual: f64,
    pub tol: f64,
}

impl StructureReport {
    pub fn privileged(&self) -> bool {
        self.residuals.iter().chain(&self.power_residuals).all(|r| *r <= self.tol)
    }
    pub fn time_covariant(&self) -> bool {
        self.covariance_residual <= self.tol
    }
    pub fn detailed_balance(&self) -> bool {
        self.detailed_balance_residual <= self.tol
    }
}

fn rel_norm(x: &Op, reference: &Op) -> f64 {
    x.norm() / reference.norm().max(1e-300)
}

fn test_operators(d: usize) -> Vec<Op> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..3)
        .map(|_| {
            let a = Op::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            (&a + a.adjoint()) * c(0.5)
        })
        .collect()
}

/// Run every structural check and report residuals without failing.
pub fn structure_report(spec: &ModelSpec, ss: &SteadyState, beta: Option<f64>, tol: f64) -> StructureReport {
    let d = spec.dim();
    let sd = &ss.spectral;
    let lp = &ss.log_p;
    let mut labels = Vec::new();
    let mut delta_phi = Vec::new();
    let mut residuals = Vec::new();
    let mut power_residuals = Vec::new();
    for j in &spec.jumps {
        labels.push(j.label.clone());
        let lt = sd.to_eigenbasis(&j.op);
        let conj = |u: f64| Op::from_fn(d, d, |i, k| lt[(i, k)] * (u * (lp[i] - lp[k])).exp());
        let m = conj(1.0);
        let norm2 = lt.norm_squared();
        let fit = if norm2 > 0.0 {
            lt.iter().zip(m.iter()).map(|(l, mm)| l.conj() * mm).sum::<C64>() / norm2
        } else {
            ONE
        };
        let ok_scalar = fit.re > 0.0 && fit.im.abs() <= 1e-10 * fit.re;
        let dphi = if ok_scalar { -fit.re.ln() } else { f64::NAN };
        let res = if ok_scalar { rel_norm(&(&m - &lt * c(fit.re)), &lt) } else { f64::INFINITY };
        let mut worst: f64 = 0.0;
        for u in [0.3, 0.7, -1.0] {
            let r = if ok_scalar {
                rel_norm(&(conj(u) - &lt * c((-u * dphi).exp())), &lt)
            } else {
                f64::INFINITY
            };
            worst = worst.max(r);
        }
        delta_phi.push(dphi);
        residuals.push(res);
        power_residuals.push(worst);
    }

    // time-translation covariance and detailed balance, evaluated in the
    // eigenbasis of π so that extreme populations never get inverted
    let ht = sd.to_eigenbasis(&spec.h);
    let jt: Vec<Jump> = spec.jumps.iter().map(|j| Jump::new(j.label.clone(), sd.to_eigenbasis(&j.op))).collect();
    let spec_t = ModelSpec::new((&ht + ht.adjoint()) * c(0.5), jt).expect("validated model");
    let comm_h = |x: &Op| (&spec_t.h * x - x * &spec_t.h) * I;
    let scale_by = |x: &Op, s: f64| Op::from_fn(d, d, |i, k| x[(i, k)] * (s * (lp[i] + lp[k])).exp());
    let (mut cov, mut db) = (0.0f64, 0.0f64);
    for x in test_operators(d) {
        let lx = spec_t.apply_adjoint(&x);
        let r = spec_t.apply_adjoint(&comm_h(&x)) - comm_h(&lx);
        cov = cov.max(rel_norm(&r, &lx));
        let dual = scale_by(&spec_t.apply(&scale_by(&x, 0.5)), -0.5);
        let r = dual - &lx + comm_h(&x) * c(2.0);
        db = db.max(rel_norm(&r, &lx));
    }
    let delta_e = beta.map(|b| delta_phi.iter().map(|p| p / b).collect());
    StructureReport {
        labels,
        delta_phi,
        delta_e,
        residuals,
        power_residuals,
        covariance_residual: cov,
        detailed_balance_residual: db,
        tol,
    }
}

/// Structural checks; fails with `NotPrivileged` on the first jump that has
/// no consistent potential shift.
pub fn check_structure(spec: &ModelSpec, ss: &SteadyState, beta: Option<f64>) -> Result<StructureReport> {
    let rep = structure_report(spec, ss, beta, STRUCTURE_TOL);
    for (k, label) in rep.labels.iter().enumerate() {
        let r = rep.residuals[k].max(rep.power_residuals[k]);
        if !(r <= rep.tol) {
            return Err(Error::NotPrivileged { label: label.clone(), residual: r });
        }
    }
    Ok(rep)
}

/// Random model obeying quantum detailed balance: a random Hamiltonian with
/// Davies-type jumps `√γ_ij |i⟩⟨j|` between its eigenstates, rates obeying
/// `γ_ij e^{−βE_j} = γ_ji e^{−βE_i}`.
pub fn random_detailed_balance_model(d: usize, beta: f64, seed: u64) -> Result<ModelSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // nondegenerate spectrum with distinct gaps, random eigenbasis
    let energies: Vec<f64> = (0..d).map(|i| i as f64 + rng.gen_range(0.05..0.6) * (i as f64 + 1.0).sqrt()).collect();
    let a = Op::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let q = a.qr().q();
    let h0 = diag(&energies);
    let h = &q * h0 * q.adjoint();
    let h = (&h + h.adjoint()) * c(0.5);
    let mut jumps = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if i >= j {
                continue;
            }
            // j -> i lowers energy when E_i < E_j
            let down = rng.gen_range(0.3..1.5);
            let up = down * (-beta * (energies[j] - energies[i])).exp();
            let mut e = Op::zeros(d, d);
            e[(i, j)] = c(down.sqrt());
            jumps.push(Jump::new(format!("down_{j}{i}"), &q * &e * q.adjoint()));
            let mut e = Op::zeros(d, d);
            e[(j, i)] = c(up.sqrt());
            jumps.push(Jump::new(format!("up_{i}{j}"), &q * &e * q.adjoint()));
        }
    }
    ModelSpec::new(h, jumps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thermal_qubit(omega: f64, beta: f64, gamma: f64) -> ModelSpec {
        let n = 1.0 / ((beta * omega).exp() - 1.0);
        ModelSpec::new(
            pauli::sz() * c(omega / 2.0),
            vec![
                Jump::new("minus", pauli::sminus() * c((gamma * (n + 1.0)).sqrt())),
                Jump::new("plus", pauli::splus() * c((gamma * n).sqrt())),
            ],
        )
        .unwrap()
    }

    #[test]
    fn superop_matches_operator_form_and_duality() {
        let spec = random_detailed_balance_model(3, 0.8, 7).unwrap();
        let g = build_generator(&spec).unwrap();
        let s = g.superop();
        let sa = g.adjoint_superop();
        for x in test_operators(3) {
            assert!((s.apply(&x) - spec.apply(&x)).norm() < 1e-12);
            assert!((sa.apply(&x) - spec.apply_adjoint(&x)).norm() < 1e-12);
        }
        let ops = test_operators(3);
        for a in &ops {
            for b in &ops {
                let lhs = trace_product(&spec.apply_adjoint(a), b);
                let rhs = trace_product(a, &spec.apply(b));
                assert!((lhs - rhs).norm() < 1e-10);
            }
        }
        assert!(spec.apply_adjoint(&identity(3)).norm() < 1e-12);
        assert!(s.trace_row_norm() < 1e-12);
    }

    #[test]
    fn qubit_steady_state_and_gap_against_dense_eigensolve() {
        let (omega, beta, gamma) = (1.0, 0.7, 0.5);
        let spec = thermal_qubit(omega, beta, gamma);
        let g = build_generator(&spec).unwrap();
        let ss = steady_state(&g).unwrap();
        let n = 1.0 / ((beta * omega).exp() - 1.0);
        assert!((ss.pi[(0, 0)].re - n / (2.0 * n + 1.0)).abs() < 1e-12);
        assert!((ss.pi[(1, 1)].re - (n + 1.0) / (2.0 * n + 1.0)).abs() < 1e-12);
        let dense = g.superop().mat.eigenvalues().unwrap();
        let mut re: Vec<f64> = dense.iter().map(|z| -z.re).filter(|x| *x > 1e-10).collect();
        re.sort_by(f64::total_cmp);
        assert!((ss.gap.unwrap() - re[0]).abs() < 1e-10);
    }

    #[test]
    fn pure_decay_is_not_faithful() {
        let spec = ModelSpec::new(Op::zeros(2, 2), vec![Jump::new("minus", pauli::sminus())]).unwrap();
        let g = build_generator(&spec).unwrap();
        assert!(matches!(steady_state(&g), Err(Error::NonFaithful { .. })));
    }

    #[test]
    fn no_jumps_is_rejected() {
        assert!(matches!(ModelSpec::new(pauli::sz(), vec![]), Err(Error::NoJumpOperators)));
    }

    #[test]
    fn drazin_axioms_and_eigenmode() {
        let spec = thermal_qubit(1.0, 0.7, 0.5);
        let g = build_generator(&spec).unwrap();
        let ss = steady_state(&g).unwrap();
        for x in test_operators(2) {
            let y = drazin_apply(&g, &ss.pi, &x).unwrap();
            assert!(y.trace().norm() < 1e-12);
            let target = &x - &ss.pi * x.trace();
            assert!((g.apply(&y) - &target).norm() < 1e-10);
            assert!((drazin_apply(&g, &ss.pi, &g.apply(&x)).unwrap() - &target).norm() < 1e-10);
        }
        assert!(drazin_apply(&g, &ss.pi, &ss.pi).unwrap().norm() < 1e-12);
        // |e><g| is an eigenoperator of the qubit generator
        let x = pauli::splus();
        let lx = g.apply(&x);
        let ell = lx[(0, 1)] / x[(0, 1)];
        let y = drazin_apply(&g, &ss.pi, &x).unwrap();
        assert!((y - &x / ell).norm() < 1e-12);
    }

    #[test]
    fn adjoint_green_matches_theta_quadrature() {
        let spec = thermal_qubit(1.0, 0.7, 0.5);
        let g = build_generator(&spec).unwrap();
        let ss = steady_state(&g).unwrap();
        let y = adjoint_green(&g, &ss.pi, &pauli::sz()).unwrap();
        assert!(adjoint_green(&g, &ss.pi, &identity(2)).unwrap().norm() < 1e-14);
        // oracle: ∫₀^Θ e^{θ𝓛*}(δσz) dθ by Gauss–Legendre panels on the dense semigroup
        let gap = ss.gap.unwrap();
        let big_theta = 50.0 / gap;
        let ls = g.adjoint_superop();
        let dz = vec_op(&shifted(&pauli::sz(), &ss.pi));
        let grid = crate::quad::TimeGrid::new(0.0, big_theta, 20, 40);
        let mut acc = DVector::<C64>::zeros(4);
        for (t, w) in grid.nodes.iter().zip(&grid.weights) {
            acc += propagate_step(&ls, *t, &dz).unwrap() * c(*w);
        }
        assert!((devec(&acc).unwrap() - y).norm() < 1e-6);
    }

    #[test]
    fn structure_of_thermal_qubit() {
        let (omega, beta) = (1.3, 0.6);
        let spec = thermal_qubit(omega, beta, 0.4);
        let (ss, _) = gibbs_state(&spec.h, beta).unwrap();
        let rep = check_structure(&spec, &ss, Some(beta)).unwrap();
        assert!((rep.delta_phi[0] + beta * omega).abs() < 1e-12);
        assert!((rep.delta_phi[1] - beta * omega).abs() < 1e-12);
        assert!((rep.delta_e.as_ref().unwrap()[0] + omega).abs() < 1e-12);
        assert!(rep.detailed_balance() && rep.time_covariant());
    }

    #[test]
    fn sigma_x_jump_is_not_privileged() {
        let spec = ModelSpec::new(pauli::sz(), vec![Jump::new("x", pauli::sx())]).unwrap();
        let (ss, _) = gibbs_state(&spec.h, 1.0).unwrap();
        assert!(matches!(check_structure(&spec, &ss, Some(1.0)), Err(Error::NotPrivileged { .. })));
    }

    #[test]
    fn random_models_pass_detailed_balance() {
        for seed in 0..4 {
            let spec = random_detailed_balance_model(3, 0.9, seed).unwrap();
            let g = build_generator(&spec).unwrap();
            let ss = steady_state(&g).unwrap();
            let (gibbs, _) = gibbs_state(&spec.h, 0.9).unwrap();
            assert!((&ss.pi - &gibbs.pi).norm() < 1e-10);
            let rep = check_structure(&spec, &gibbs, Some(0.9)).unwrap();
            assert!(rep.detailed_balance(), "{}", rep.detailed_balance_residual);
        }
    }

    #[test]
    fn oscillator_splits_into_ladder_blocks() {
        let d = 12;
        let a = annihilation(d);
        let n: f64 = 0.4;
        let spec = ModelSpec::new(
            diag(&(0..d).map(|k| k as f64 + 0.5).collect::<Vec<_>>()),
            vec![
                Jump::new("a", &a * c((0.5 * (n + 1.0)).sqrt())),
                Jump::new("a+", a.adjoint() * c((0.5 * n).sqrt())),
            ],
        )
        .unwrap();
        let g = build_generator(&spec).unwrap();
        assert_eq!(g.block_sizes().iter().max(), Some(&d));
        let ss = steady_state(&g).unwrap();
        let beta = (1.0 + 1.0 / n).ln();
        let (gibbs, _) = gibbs_state(&spec.h, beta).unwrap();
        assert!((&ss.pi - &gibbs.pi).norm() < 1e-10);
        let dense = g.superop().mat.eigenvalues().unwrap();
        let mut re: Vec<f64> = dense.iter().map(|z| -z.re).filter(|x| *x > 1e-9).collect();
        re.sort_by(f64::total_cmp);
        assert!((ss.gap.unwrap() - re[0]).abs() < 1e-8);
    }
}
