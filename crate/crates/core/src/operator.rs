//! Dense complex-matrix and superoperator primitives.
//!
//! Vectorization is column-stacking: the entry `X[(i, j)]` of a `d x d`
//! operator sits at index `i + d * j` of `vec(X)`, so that
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)`. nalgebra stores matrices column-major,
//! which makes `vec`/`devec` plain copies of the backing slice.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// A `d x d` complex operator. Units are natural (ħ = k_B = 1).
pub type Op = DMatrix<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Eigenvalues below this are treated as non-positive by [`fractional_power`].
pub const POSITIVE_FLOOR: f64 = 1e-14;

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(d: usize) -> Op {
    Op::identity(d, d)
}

pub fn from_real(d: usize, entries: &[f64]) -> Op {
    Op::from_row_slice(d, d, &entries.iter().map(|&x| c(x)).collect::<Vec<_>>())
}

pub fn diag(values: &[f64]) -> Op {
    Op::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|&x| c(x))))
}

pub fn commutator(a: &Op, b: &Op) -> Op {
    a * b - b * a
}

pub fn trace(a: &Op) -> C64 {
    a.trace()
}

/// `tr[A B]` without forming the product.
pub fn trace_product(a: &Op, b: &Op) -> C64 {
    let d = a.nrows();
    let mut acc = ZERO;
    for i in 0..d {
        for k in 0..d {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Largest elementwise deviation from Hermiticity.
pub fn hermiticity_residual(a: &Op) -> f64 {
    let d = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(a: &Op, tol: f64) -> bool {
    a.is_square() && hermiticity_residual(a) <= tol
}

/// True when every off-diagonal entry vanishes.
pub fn is_diagonal(a: &Op) -> bool {
    let d = a.nrows();
    (0..d).all(|j| (0..d).all(|i| i == j || a[(i, j)] == ZERO))
}

/// `A†A`, built from the nonzeros of each row so sparse jumps stay cheap.
pub fn gram(a: &Op) -> Op {
    let (m, d) = a.shape();
    let mut out = Op::zeros(d, d);
    let mut nz: Vec<(usize, C64)> = Vec::with_capacity(d);
    for i in 0..m {
        nz.clear();
        nz.extend((0..d).map(|j| (j, a[(i, j)])).filter(|(_, z)| *z != ZERO));
        for &(j, x) in &nz {
            let xc = x.conj();
            for &(k, y) in &nz {
                out[(j, k)] += xc * y;
            }
        }
    }
    out
}

pub fn max_abs(a: &Op) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Shift to zero mean in the state `pi`: `A - tr[A pi] 1`.
pub fn shifted(a: &Op, pi: &Op) -> Op {
    let mean = trace_product(a, pi);
    let mut out = a.clone();
    for i in 0..a.nrows() {
        out[(i, i)] -= mean;
    }
    out
}

pub fn vec_op(x: &Op) -> DVector<C64> {
    DVector::from_column_slice(x.as_slice())
}

pub fn devec(v: &DVector<C64>) -> Result<Op> {
    let n = v.len();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n {
        return Err(Error::DimensionMismatch { expected: d * d, got: n });
    }
    Ok(Op::from_column_slice(d, d, v.as_slice()))
}

/// Pauli matrices and ladder operators used throughout the builtin models.
pub mod pauli {
    use super::*;

    pub fn sx() -> Op {
        from_real(2, &[0.0, 1.0, 1.0, 0.0])
    }
    pub fn sy() -> Op {
        Op::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
    }
    pub fn sz() -> Op {
        from_real(2, &[1.0, 0.0, 0.0, -1.0])
    }
    /// Lowering operator |g><e| with |e> = index 0.
    pub fn sminus() -> Op {
        from_real(2, &[0.0, 0.0, 1.0, 0.0])
    }
    pub fn splus() -> Op {
        from_real(2, &[0.0, 1.0, 0.0, 0.0])
    }
}

/// Truncated annihilation operator on `dim` Fock levels.
pub fn annihilation(dim: usize) -> Op {
    let mut a = Op::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = c((n as f64).sqrt());
    }
    a
}

/// Eigen-decomposition of a Hermitian operator, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralDecomp {
    pub eigenvalues: Vec<f64>,
    /// Unitary whose columns are the eigenvectors.
    pub eigenvectors: Op,
}

impl SpectralDecomp {
    pub fn new(a: &Op) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
        }
        let scale = max_abs(a).max(1.0);
        let residual = hermiticity_residual(a);
        if residual > 1e-10 * scale {
            return Err(Error::NotHermitian { residual });
        }
        let d = a.nrows();
        if is_diagonal(a) {
            // Keep the natural basis so that sparse structure survives.
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
            let mut vecs = Op::zeros(d, d);
            for (col, &i) in order.iter().enumerate() {
                vecs[(i, col)] = ONE;
            }
            return Ok(Self {
                eigenvalues: order.iter().map(|&i| a[(i, i)].re).collect(),
                eigenvectors: vecs,
            });
        }
        let herm = (a + a.adjoint()) * c(0.5);
        let se = nalgebra::SymmetricEigen::new(herm);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
        let mut vecs = Op::zeros(d, d);
        for (col, &i) in order.iter().enumerate() {
            vecs.set_column(col, &se.eigenvectors.column(i));
        }
        Ok(Self { eigenvalues: order.iter().map(|&i| se.eigenvalues[i]).collect(), eigenvectors: vecs })
    }

    /// Build directly from eigen-data (caller guarantees unitarity).
    pub fn from_parts(eigenvalues: Vec<f64>, eigenvectors: Op) -> Self {
        Self { eigenvalues, eigenvectors }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U f(Λ) U†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Op {
        let u = &self.eigenvectors;
        let d = self.dim();
        let mut scaled = u.clone();
        for j in 0..d {
            let fj = c(f(self.eigenvalues[j]));
            for i in 0..d {
                scaled[(i, j)] *= fj;
            }
        }
        scaled * u.adjoint()
    }

    pub fn reconstruct(&self) -> Op {
        self.map(|x| x)
    }

    /// `U† A U`: matrix elements in the eigenbasis.
    pub fn to_eigenbasis(&self, a: &Op) -> Op {
        self.eigenvectors.adjoint() * a * &self.eigenvectors
    }

    pub fn from_eigenbasis(&self, a: &Op) -> Op {
        &self.eigenvectors * a * self.eigenvectors.adjoint()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }
}

/// `A^s` for a positive definite `A` given by its spectral decomposition.
pub fn fractional_power(a: &SpectralDecomp, s: f64) -> Result<Op> {
    let min = a.min_eigenvalue();
    if !(min > POSITIVE_FLOOR) {
        return Err(Error::NonPositiveMatrix { min_eigenvalue: min, floor: POSITIVE_FLOOR });
    }
    Ok(a.map(|p| p.powf(s)))
}

/// Dense superoperator acting on column-stacked operators.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperOperator {
    pub dim: usize,
    pub mat: DMatrix<C64>,
}

impl SuperOperator {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, mat: DMatrix::zeros(dim * dim, dim * dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, mat: DMatrix::identity(dim * dim, dim * dim) }
    }

    pub fn from_matrix(dim: usize, mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != dim * dim || mat.ncols() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: mat.nrows() });
        }
        Ok(Self { dim, mat })
    }

    pub fn apply_vec(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.mat * v
    }

    pub fn apply(&self, x: &Op) -> Op {
        let v = &self.mat * vec_op(x);
        Op::from_column_slice(self.dim, self.dim, v.as_slice())
    }

    pub fn add_assign(&mut self, other: &SuperOperator) {
        self.mat += &other.mat;
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { dim: self.dim, mat: &self.mat * s }
    }

    pub fn compose(&self, other: &SuperOperator) -> Self {
        Self { dim: self.dim, mat: &self.mat * &other.mat }
    }

    /// Norm of the row functional `tr ∘ G` (zero for trace-preserving maps).
    pub fn trace_row_norm(&self) -> f64 {
        let d = self.dim;
        let n = d * d;
        let mut acc = 0.0;
        for col in 0..n {
            let mut s = ZERO;
            for i in 0..d {
                s += self.mat[(i + d * i, col)];
            }
            acc += s.norm_sqr();
        }
        acc.sqrt()
    }
}

/// Superoperator of the map `X ↦ A X B`.
pub fn build_sandwich_superop(a: &Op, b: &Op) -> Result<SuperOperator> {
    let d = a.nrows();
    if !a.is_square() || b.nrows() != d || b.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: b.nrows() });
    }
    let mut mat = DMatrix::zeros(d * d, d * d);
    // (Bᵀ ⊗ A)[(i + d j), (k + d l)] = A[i, k] B[l, j]
    for l in 0..d {
        for j in 0..d {
            let blj = b[(l, j)];
            if blj == ZERO {
                continue;
            }
            for k in 0..d {
                for i in 0..d {
                    let aik = a[(i, k)];
                    if aik != ZERO {
                        mat[(i + d * j, k + d * l)] = aik * blj;
                    }
                }
            }
        }
    }
    Ok(SuperOperator { dim: d, mat })
}

fn one_norm(a: &DMatrix<C64>) -> f64 {
    (0..a.ncols()).map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant (orders 3–13, Higham 2005 thresholds).
pub fn expm(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    let id = DMatrix::<C64>::identity(n, n);
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::NonFiniteEntries { context: "expm input" });
    }

    let pade = |a: &DMatrix<C64>, b: &[f64]| -> (DMatrix<C64>, DMatrix<C64>) {
        let a2 = a * a;
        let mut u = &id * c(b[1]);
        let mut v = &id * c(b[0]);
        let mut power = id.clone();
        let m = b.len() - 1;
        for k in 1..=(m / 2) {
            power = &power * &a2;
            v += &power * c(b[2 * k]);
            u += &power * c(b[2 * k + 1]);
        }
        (a * u, v)
    };

    let (u, v, squarings) = match THETA.iter().find(|(_, th)| norm <= *th) {
        Some(&(m, _)) => {
            let b: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade(a, b);
            (u, v, 0)
        }
        None => {
            let s = if norm > THETA13 { (norm / THETA13).log2().ceil().max(0.0) as i32 } else { 0 };
            let scaled = a * c(0.5f64.powi(s));
            let b = &PADE13;
            let a2 = &scaled * &scaled;
            let a4 = &a2 * &a2;
            let a6 = &a4 * &a2;
            let inner_u = &a6 * c(b[13]) + &a4 * c(b[11]) + &a2 * c(b[9]);
            let u = &scaled
                * (&a6 * inner_u + &a6 * c(b[7]) + &a4 * c(b[5]) + &a2 * c(b[3]) + &id * c(b[1]));
            let inner_v = &a6 * c(b[12]) + &a4 * c(b[10]) + &a2 * c(b[8]);
            let v = &a6 * inner_v + &a6 * c(b[6]) + &a4 * c(b[4]) + &a2 * c(b[2]) + &id * c(b[0]);
            (u, v, s)
        }
    };
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).ok_or(Error::NonFiniteEntries { context: "expm Padé denominator" })?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFiniteEntries { context: "expm" });
    }
    Ok(r)
}

/// `exp(h G) v` for a constant generator over a step of length `h`.
pub fn propagate_step(g: &SuperOperator, h: f64, v: &DVector<C64>) -> Result<DVector<C64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    if v.len() != g.mat.nrows() {
        return Err(Error::DimensionMismatch { expected: g.mat.nrows(), got: v.len() });
    }
    let e = expm(&(&g.mat * c(h)))?;
    Ok(e * v)
}

/// Compressed-row sparse operator used for the hot loops (trajectory steps,
/// operator-form generator application). Only exact zeros are dropped.
#[derive(Debug, Clone)]
pub struct SparseOp {
    pub dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseOp {
    pub fn from_dense(a: &Op) -> Self {
        let d = a.nrows();
        let mut row_ptr = Vec::with_capacity(d + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..d {
            for j in 0..d {
                let z = a[(i, j)];
                if z != ZERO {
                    cols.push(j);
                    vals.push(z);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { dim: d, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn to_dense(&self) -> Op {
        let mut out = Op::zeros(self.dim, self.dim);
        for (i, j, z) in self.entries() {
            out[(i, j)] = z;
        }
        out
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k], self.vals[k]))
        })
    }

    /// `y = A x` for a state vector.
    #[inline]
    pub fn mul_vec_into(&self, x: &[C64], y: &mut [C64]) {
        for i in 0..self.dim {
            let mut acc = ZERO;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    /// `<x|A|x>` for a state vector.
    #[inline]
    pub fn expectation(&self, x: &[C64]) -> f64 {
        let mut acc = ZERO;
        for i in 0..self.dim {
            let mut row = ZERO;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.vals[k] * x[self.cols[k]];
            }
            acc += x[i].conj() * row;
        }
        acc.re
    }

    /// `out += alpha * A X` (dense `X`).
    pub fn left_mul_acc(&self, x: &Op, alpha: C64, out: &mut Op) {
        let d = self.dim;
        for col in 0..d {
            let xc = x.column(col);
            for i in 0..d {
                let mut acc = ZERO;
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.vals[k] * xc[self.cols[k]];
                }
                out[(i, col)] += alpha * acc;
            }
        }
    }

    /// `A X` (dense `X`).
    pub fn left_mul(&self, x: &Op) -> Op {
        let mut out = Op::zeros(self.dim, self.dim);
        self.left_mul_acc(x, ONE, &mut out);
        out
    }

    /// `X A†` (dense `X`).
    pub fn right_mul_adjoint(&self, x: &Op) -> Op {
        // (X A†)[r, i] = Σ_k X[r, k] conj(A[i, k])
        let d = self.dim;
        let mut out = Op::zeros(d, d);
        for i in 0..d {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.vals[k].conj();
                let col = self.cols[k];
                for r in 0..d {
                    out[(r, i)] += x[(r, col)] * a;
                }
            }
        }
        out
    }

    /// Largest absolute row sum (an upper bound on the operator 2-norm when
    /// combined with the column bound).
    pub fn norm_bound(&self) -> f64 {
        let mut rows = vec![0.0; self.dim];
        let mut cols = vec![0.0; self.dim];
        for (i, j, z) in self.entries() {
            rows[i] += z.norm();
            cols[j] += z.norm();
        }
        let r = rows.iter().cloned().fold(0.0, f64::max);
        let c = cols.iter().cloned().fold(0.0, f64::max);
        (r * c).sqrt()
    }
}

/// Linear map on operators of the form `X ↦ A X + X A† + Σ_k B_k X B_k†`.
///
/// Every generator in this crate (plain, tilted, or with a frame term) has
/// this shape, and it preserves Hermiticity, so the `X A†` half is
/// obtained as the adjoint of `A X` when the input is Hermitian.
#[derive(Debug, Clone)]
pub struct SandwichMap {
    pub dim: usize,
    pub drift: SparseOp,
    pub jumps: Vec<SparseOp>,
}

impl SandwichMap {
    pub fn apply(&self, x: &Op) -> Op {
        let mut out = self.drift.left_mul(x);
        out += self.drift.right_mul_adjoint(&x.adjoint()).adjoint();
        self.add_jumps(x, &mut out);
        out
    }

    /// Same as [`apply`](Self::apply) for Hermitian input, using `X A† = (A X)†`.
    pub fn apply_hermitian(&self, x: &Op) -> Op {
        let ax = self.drift.left_mul(x);
        let mut out = ax.adjoint();
        out += ax;
        self.add_jumps(x, &mut out);
        out
    }

    fn add_jumps(&self, x: &Op, out: &mut Op) {
        for b in &self.jumps {
            let bx = b.left_mul(x);
            *out += b.right_mul_adjoint(&bx);
        }
    }

    /// Upper bound on the spectral radius of the map.
    pub fn radius_bound(&self) -> f64 {
        2.0 * self.drift.norm_bound() + self.jumps.iter().map(|b| b.norm_bound().powi(2)).sum::<f64>()
    }

    pub fn to_superop(&self) -> SuperOperator {
        let d = self.dim;
        let a = self.drift.to_dense();
        let id = identity(d);
        let mut s = build_sandwich_superop(&a, &id).expect("square");
        s.add_assign(&build_sandwich_superop(&id, &a.adjoint()).expect("square"));
        for b in &self.jumps {
            let bd = b.to_dense();
            s.add_assign(&build_sandwich_superop(&bd, &bd.adjoint()).expect("square"));
        }
        s
    }

    /// `exp(h M) X` for Hermitian `X` by classical RK4 with sub-steps kept
    /// inside the stability region. Used where forming `exp(h M)` densely is
    /// too expensive.
    pub fn propagate_hermitian(&self, h: f64, x: &Op) -> Op {
        // stability needs dt·R ≲ 2.8; the 0.01 cap keeps slow modes accurate
        let n_sub = (h * self.radius_bound() / 2.5).max(h / 0.01).ceil().max(1.0) as usize;
        let dt = h / n_sub as f64;
        let mut y = x.clone();
        for _ in 0..n_sub {
            let k1 = self.apply_hermitian(&y);
            let k2 = self.apply_hermitian(&(&y + &k1 * c(0.5 * dt)));
            let k3 = self.apply_hermitian(&(&y + &k2 * c(0.5 * dt)));
            let k4 = self.apply_hermitian(&(&y + &k3 * c(dt)));
            y += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(dt / 6.0);
            // keep the iterate exactly Hermitian so the fast path stays valid
            y = (&y + y.adjoint()) * c(0.5);
        }
        y
    }
}
