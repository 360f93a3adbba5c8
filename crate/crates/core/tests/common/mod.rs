//! Oracles shared by the integration tests. They avoid the library's own
//! numerics so agreement is a real check.
#![allow(dead_code)]

use gph::numkernel::{Matrix, Vector};
use gph::GphDistribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `exp(A t)` for a sub-generator by uniformization.
pub fn expm_uniformized(a: &Matrix, t: f64) -> Matrix {
    let n = a.nrows();
    let lambda = (0..n).map(|i| -a[(i, i)]).fold(0.0, f64::max).max(1e-300);
    let p = Matrix::identity(n, n) + a / lambda;
    let lt = lambda * t;
    // split into steps so that each Poisson weight series stays well scaled
    let steps = (lt / 20.0).ceil().max(1.0) as usize;
    let h = lt / steps as f64;
    let mut term = Matrix::identity(n, n);
    let mut sum = Matrix::identity(n, n);
    let mut k = 1.0;
    loop {
        term = &term * &p * (h / k);
        sum += &term;
        if term.amax() < 1e-18 * sum.amax() && k > h {
            break;
        }
        k += 1.0;
    }
    let one_step = sum * (-h).exp();
    let mut out = Matrix::identity(n, n);
    for _ in 0..steps {
        out = &out * &one_step;
    }
    out
}

/// Composite Simpson with `panels` (rounded up to even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Weights `w_k`, `k = 0..len`, with `sum w_k f(k h) / h^order` approximating
/// the `order`-th derivative at 0 from one side.
pub fn forward_stencil(order: usize, len: usize) -> Vec<f64> {
    let mut v = Matrix::zeros(len, len);
    for p in 0..len {
        let mut fact = 1.0;
        for q in 1..=p {
            fact *= q as f64;
        }
        for k in 0..len {
            v[(p, k)] = (k as f64).powi(p as i32) / fact;
        }
    }
    let mut rhs = Vector::zeros(len);
    rhs[order] = 1.0;
    v.lu().solve(&rhs).expect("Vandermonde system is nonsingular").iter().copied().collect()
}

pub fn erlang_pdf(t: f64, m: usize, beta: f64) -> f64 {
    let mut fact = 1.0;
    for k in 1..m {
        fact *= k as f64;
    }
    beta.powi(m as i32) * t.powi(m as i32 - 1) * (-beta * t).exp() / fact
}

/// A random model with certain absorption: every state has a positive exit
/// rate and off-diagonal rates are sparse.
pub fn random_model(rng: &mut ChaCha8Rng, m: usize) -> GphDistribution {
    let mut t = Matrix::zeros(m, m);
    for i in 0..m {
        let mut row = 0.0;
        for j in 0..m {
            if i != j && rng.random::<f64>() < 0.6 {
                let r = rng.random_range(0.05..1.5);
                t[(i, j)] = r;
                row += r;
            }
        }
        let exit = rng.random_range(0.05..1.0);
        t[(i, i)] = -(row + exit);
    }
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let pi = raw.iter().map(|x| x / total).collect();
    let psi = (0..m).map(|_| rng.random_range(0.1..3.0)).collect();
    let s0 = (0..m).map(|_| rng.random::<f64>()).collect();
    GphDistribution::new(pi, &t, psi, s0).expect("random model is valid")
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `pi^T exp(A t) v` with the oracle exponential.
pub fn row_form(pi: &Vector, a: &Matrix, t: f64, v: &Vector) -> f64 {
    (pi.transpose() * expm_uniformized(a, t) * v)[(0, 0)]
}
