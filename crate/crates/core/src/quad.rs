//! Time quadratures: composite Gauss–Legendre for smooth protocol integrands
//! and adaptive Gauss–Kronrod for the tight adiabatic-work integral.

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Fixed Gauss–Legendre rule mapped to `[a, b]`, split into `panels` equal
/// sub-intervals.
#[derive(Debug, Clone)]
pub struct TimeGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TimeGrid {
    pub fn new(a: f64, b: f64, points: usize, panels: usize) -> Self {
        let (x, w) = gauss_legendre(points);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(points * panels);
        let mut weights = Vec::with_capacity(points * panels);
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(lo + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Result of a doubling-checked fixed-rule integration.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Integrate a vector-valued function with `points` nodes, then with twice
/// as many (two panels), reporting the difference as the error estimate.
pub fn integrate_doubling<F>(a: f64, b: f64, points: usize, f: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let coarse = TimeGrid::new(a, b, points, 1);
    let fine = TimeGrid::new(a, b, points, 2);
    let sum = |grid: &TimeGrid| -> Result<Vec<f64>> {
        let mut acc: Vec<f64> = Vec::new();
        for (t, w) in grid.nodes.iter().zip(&grid.weights) {
            let v = f(*t)?;
            if acc.is_empty() {
                acc = vec![0.0; v.len()];
            }
            for (a, x) in acc.iter_mut().zip(v) {
                *a += w * x;
            }
        }
        Ok(acc)
    };
    let c = sum(&coarse)?;
    let fv = sum(&fine)?;
    let err = c.iter().zip(&fv).map(|(x, y)| (x - y).abs()).collect();
    Ok((fv, err))
}

const XK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XK[j];
        let s = f(c - dx) + f(c + dx);
        k += WK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration to absolute-or-relative `tol`.
pub fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<Estimate> {
    let mut stack = vec![(a, b, 0usize)];
    let mut value = 0.0;
    let mut error = 0.0;
    let total = kronrod15(f, a, b).0.abs().max(1e-300);
    let mut evaluations = 0usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, e) = kronrod15(f, lo, hi);
        evaluations += 1;
        if !v.is_finite() {
            return Err(Error::QuadratureFailure(format!("non-finite integrand on [{lo}, {hi}]")));
        }
        let share = (hi - lo) / (b - a);
        if e <= tol.max(tol * total) * share || depth >= 40 {
            value += v;
            error += e;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
        if evaluations > 200_000 {
            return Err(Error::QuadratureFailure("subdivision budget exhausted".into()));
        }
    }
    if error > 10.0 * tol.max(tol * value.abs()) {
        return Err(Error::QuadratureFailure(format!("error estimate {error:e} above {tol:e}")));
    }
    Ok(Estimate { value, error })
}
