//! Generalized phase-type laws: absorption time of a two-regime mixture
//! with a single absorbing state.

use crate::error::{Error, Result};
use crate::markov;
use crate::mixture::{BranchVectors, InformationState, MixtureModel, SpeedMatrix};
use crate::numkernel::{self, ensure_time, Matrix, Vector};

/// Absorption-time law `GPH(pi, T, Psi, S)` of a mixture with one
/// absorbing state.
#[derive(Debug, Clone, PartialEq)]
pub struct GphDistribution {
    model: MixtureModel,
    delta: Vector,
    psi_delta: Vector,
}

impl AsRef<MixtureModel> for GphDistribution {
    fn as_ref(&self) -> &MixtureModel {
        &self.model
    }
}

impl GphDistribution {
    pub fn from_model(model: MixtureModel) -> Result<Self> {
        if model.p() != 1 {
            return Err(Error::NotSingleAbsorbing(model.p()));
        }
        let delta = model.generator().exit_vector();
        let psi_delta = model.speed().diagonal().component_mul(&delta);
        Ok(Self {
            model,
            delta,
            psi_delta,
        })
    }

    /// Builds the law from `(pi, T, psi, s0)` with exit vector `-T 1`.
    pub fn new(pi: Vec<f64>, t: &Matrix, psi: Vec<f64>, s0: Vec<f64>) -> Result<Self> {
        let delta = -markov::row_sums(t);
        let d = Matrix::from_column_slice(t.nrows(), 1, delta.as_slice());
        Self::from_model(MixtureModel::from_parts(t, &d, psi, pi, s0)?)
    }

    /// Exponential law with rate `beta`.
    pub fn exponential(beta: f64) -> Result<Self> {
        Self::new(vec![1.0], &Matrix::from_element(1, 1, -beta), vec![1.0], vec![0.0])
    }

    pub fn model(&self) -> &MixtureModel {
        &self.model
    }

    pub fn m(&self) -> usize {
        self.model.m()
    }

    /// Exit vector `delta = -T 1`.
    pub fn delta(&self) -> &Vector {
        &self.delta
    }

    fn ones(&self) -> Vector {
        Vector::from_element(self.m(), 1.0)
    }

    fn elapsed(&self, info: &InformationState, s: f64) -> Result<f64> {
        info.check(&self.model)?;
        ensure_time(s)?;
        if s < info.age {
            return Err(Error::HorizonBeforeAge { age: info.age, horizon: s });
        }
        Ok(s - info.age)
    }

    /// `F_i(t, s) = e_i^T (S(t) e^{Psi T nu} + (I - S(t)) e^{T nu}) 1`, `nu = s - t`.
    pub fn conditional_survival(&self, info: &InformationState, s: f64) -> Result<f64> {
        let nu = self.elapsed(info, s)?;
        if info.is_absorbed(&self.model) {
            return Ok(0.0);
        }
        let ones = self.ones();
        let w = info.selector(self.m());
        Ok(self
            .model
            .branches(nu)?
            .combine(&w, &info.smt, BranchVectors::same(&ones))
            .get())
    }

    /// `f_i(t, s) = e_i^T (S(t) e^{Psi T nu} Psi + (I - S(t)) e^{T nu}) delta`.
    pub fn conditional_density(&self, info: &InformationState, s: f64) -> Result<f64> {
        let nu = self.elapsed(info, s)?;
        if info.is_absorbed(&self.model) {
            return Ok(0.0);
        }
        let w = info.selector(self.m());
        Ok(self
            .model
            .branches(nu)?
            .combine(&w, &info.smt, BranchVectors::new(&self.psi_delta, &self.delta))
            .get())
    }

    /// `pi^T (S e^{Psi T t} + (I - S) e^{T t}) 1`.
    pub fn survival(&self, t: f64) -> Result<f64> {
        let ones = self.ones();
        Ok(self
            .model
            .branches(t)?
            .combine(self.model.pi(), self.model.s0(), BranchVectors::same(&ones))
            .get())
    }

    pub fn density(&self, t: f64) -> Result<f64> {
        Ok(self
            .model
            .branches(t)?
            .combine(
                self.model.pi(),
                self.model.s0(),
                BranchVectors::new(&self.psi_delta, &self.delta),
            )
            .get())
    }

    pub fn cdf(&self, t: f64) -> Result<f64> {
        Ok(1.0 - self.survival(t)?)
    }

    /// `pi^T (S (theta I - Psi T)^{-1} Psi + (I - S)(theta I - T)^{-1}) delta`.
    pub fn laplace_transform(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() || theta < 0.0 {
            return Err(Error::Parameter(format!("theta must be nonnegative, got {theta}")));
        }
        self.model.speed().require_nonsingular("the Laplace transform")?;
        let m = self.m();
        let shift = Matrix::identity(m, m) * theta;
        let xg = numkernel::solve_vec(&(&shift - self.model.psi_t()), &self.psi_delta)?;
        let xq = numkernel::solve_vec(&(&shift - self.model.t()), &self.delta)?;
        Ok(self.weighted_sum(&xg, &xq))
    }

    fn weighted_sum(&self, xg: &Vector, xq: &Vector) -> f64 {
        let pi = self.model.pi();
        let s = self.model.s0();
        (0..self.m())
            .map(|k| pi[k] * (s[k] * xg[k] + (1.0 - s[k]) * xq[k]))
            .sum()
    }

    /// `E[tau^n] = (-1)^n n! pi^T (S (Psi T)^{-n} + (I - S) T^{-n}) 1`.
    /// For `n = 0` this is the mass of `pi`.
    pub fn moment(&self, n: u32) -> Result<f64> {
        self.model.speed().require_nonsingular("moments")?;
        let mut xg = self.ones();
        let mut xq = self.ones();
        let mut factor = 1.0;
        for k in 1..=n {
            xg = numkernel::solve_vec(self.model.psi_t(), &xg)?;
            xq = numkernel::solve_vec(self.model.t(), &xq)?;
            factor *= -(k as f64);
        }
        Ok(factor * self.weighted_sum(&xg, &xq))
    }

    /// Equivalent classical representation of dimension `2m`:
    /// `pi~ = (S pi; (I - S) pi)`, `T~ = diag(Psi T, T)`.
    pub fn to_classical(&self) -> ClassicalPH {
        let (gw, qw) = crate::mixture::split_weights(self.model.pi(), self.model.s0());
        self.classical_from(&gw, &qw)
    }

    /// Classical representation of the conditional law given `info`.
    pub fn to_classical_conditional(&self, info: &InformationState) -> Result<ClassicalPH> {
        info.check(&self.model)?;
        self.model.check_transient(info.state)?;
        let w = info.selector(self.m());
        let (gw, qw) = crate::mixture::split_weights(&w, &info.smt);
        Ok(self.classical_from(&gw, &qw))
    }

    fn classical_from(&self, gw: &Vector, qw: &Vector) -> ClassicalPH {
        let m = self.m();
        let mut pi = Vector::zeros(2 * m);
        pi.rows_mut(0, m).copy_from(gw);
        pi.rows_mut(m, m).copy_from(qw);
        let mut t = Matrix::zeros(2 * m, 2 * m);
        t.view_mut((0, 0), (m, m)).copy_from(self.model.psi_t());
        t.view_mut((m, m), (m, m)).copy_from(self.model.t());
        let mut exit = Vector::zeros(2 * m);
        exit.rows_mut(0, m).copy_from(&self.psi_delta);
        exit.rows_mut(m, m).copy_from(&self.delta);
        ClassicalPH { pi, t, exit }
    }

    /// Law of `p Z`: `GPH(pi, T / p, Psi, S)`.
    pub fn scale(&self, p: f64) -> Result<Self> {
        if !p.is_finite() || p <= 0.0 {
            return Err(Error::Parameter(format!("scale factor must be positive, got {p}")));
        }
        let g = markov::validate_generator(&(self.model.t() / p), &(self.model.d() / p))?;
        Self::from_model(MixtureModel::new(
            g,
            self.model.speed().clone(),
            self.model.pi().clone(),
            self.model.s0().clone(),
        )?)
    }

    /// `alpha Erlang(m, beta1) + (1 - alpha) Erlang(m, beta2)` as a GPH:
    /// an Erlang chain at rate `beta2`, `Psi = (beta1/beta2) I`, `S = alpha I`.
    pub fn erlang_mixture(alpha: f64, m: usize, beta1: f64, beta2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Parameter(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if m == 0 {
            return Err(Error::Parameter("Erlang order must be at least 1".into()));
        }
        if !(beta1 > 0.0 && beta2 > 0.0 && beta1.is_finite() && beta2.is_finite()) {
            return Err(Error::Parameter(format!(
                "Erlang rates must be positive, got {beta1} and {beta2}"
            )));
        }
        let t = erlang_chain(m, beta2);
        let mut pi = vec![0.0; m];
        pi[0] = 1.0;
        let d = {
            let mut d = Matrix::zeros(m, 1);
            d[(m - 1, 0)] = beta2;
            d
        };
        let g = markov::validate_generator(&t, &d)?;
        Self::from_model(MixtureModel::new(
            g,
            SpeedMatrix::uniform(m, beta1 / beta2)?,
            Vector::from_vec(pi),
            Vector::from_element(m, alpha),
        )?)
    }
}

/// Sub-intensity of `m` sequential phases at rate `beta`.
pub fn erlang_chain(m: usize, beta: f64) -> Matrix {
    let mut t = Matrix::zeros(m, m);
    for k in 0..m {
        t[(k, k)] = -beta;
        if k + 1 < m {
            t[(k, k + 1)] = beta;
        }
    }
    t
}

/// Erlang density `beta^m t^{m-1} e^{-beta t} / (m-1)!`.
pub fn erlang_pdf(t: f64, m: usize, beta: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let mut log = (m as f64) * beta.ln() - beta * t;
    if m > 1 {
        log += (m as f64 - 1.0) * t.ln();
    }
    for k in 1..m {
        log -= (k as f64).ln();
    }
    log.exp()
}

/// Classical phase-type law `PH(pi, T)` with exit vector `-T 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalPH {
    pi: Vector,
    t: Matrix,
    exit: Vector,
}

impl ClassicalPH {
    pub fn new(pi: Vector, t: Matrix) -> Result<Self> {
        let n = t.nrows();
        let exit = -markov::row_sums(&t);
        let mut d = Matrix::zeros(n, 1);
        for k in 0..n {
            // round-off in the row sums of assembled blocks
            d[(k, 0)] = if exit[k].abs() <= 1e-12 * t[(k, k)].abs().max(1.0) { 0.0 } else { exit[k] };
        }
        markov::check_structure(&t, &d)?;
        markov::validate_initial_law(&pi, n)?;
        let exit = d.column(0).into_owned();
        Ok(Self { pi, t, exit })
    }

    pub fn pi(&self) -> &Vector {
        &self.pi
    }

    pub fn t(&self) -> &Matrix {
        &self.t
    }

    pub fn exit(&self) -> &Vector {
        &self.exit
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn survival(&self, t: f64) -> Result<f64> {
        let e = numkernel::expm(&self.t, t)?;
        Ok((self.pi.transpose() * e).sum())
    }

    pub fn density(&self, t: f64) -> Result<f64> {
        let e = numkernel::expm(&self.t, t)?;
        Ok((self.pi.transpose() * e * &self.exit)[(0, 0)])
    }

    /// `(-1)^n n! pi^T T^{-n} 1`.
    pub fn moment(&self, n: u32) -> Result<f64> {
        let mut x = Vector::from_element(self.dim(), 1.0);
        let mut factor = 1.0;
        for k in 1..=n {
            x = numkernel::solve_vec(&self.t, &x)?;
            factor *= -(k as f64);
        }
        Ok(factor * self.pi.dot(&x))
    }

    /// `pi^T (theta I - T)^{-1} exit`.
    pub fn laplace_transform(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() || theta < 0.0 {
            return Err(Error::Parameter(format!("theta must be nonnegative, got {theta}")));
        }
        let n = self.dim();
        let x = numkernel::solve_vec(&(Matrix::identity(n, n) * theta - &self.t), &self.exit)?;
        Ok(self.pi.dot(&x))
    }

    /// Law of `X + Y` for independent `X ~ self`, `Y ~ other`.
    pub fn convolve(&self, other: &ClassicalPH) -> Result<ClassicalPH> {
        let (na, nb) = (self.dim(), other.dim());
        let mut t = Matrix::zeros(na + nb, na + nb);
        t.view_mut((0, 0), (na, na)).copy_from(&self.t);
        t.view_mut((0, na), (na, nb)).copy_from(&(&self.exit * other.pi.transpose()));
        t.view_mut((na, na), (nb, nb)).copy_from(&other.t);
        let mut pi = Vector::zeros(na + nb);
        pi.rows_mut(0, na).copy_from(&self.pi);
        let atom = (1.0 - self.pi.sum()).max(0.0);
        pi.rows_mut(na, nb).copy_from(&(&other.pi * atom));
        ClassicalPH::new(pi, t)
    }

    /// Finite mixture `sum_k w_k PH_k`.
    pub fn mix(weights: &[f64], parts: &[ClassicalPH]) -> Result<ClassicalPH> {
        if parts.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        if weights.len() != parts.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} components",
                weights.len(),
                parts.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Parameter("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("mixture weights sum to {total}, not 1")));
        }
        let n: usize = parts.iter().map(ClassicalPH::dim).sum();
        let mut t = Matrix::zeros(n, n);
        let mut pi = Vector::zeros(n);
        let mut at = 0;
        for (w, part) in weights.iter().zip(parts) {
            let k = part.dim();
            t.view_mut((at, at), (k, k)).copy_from(&part.t);
            pi.rows_mut(at, k).copy_from(&(&part.pi * *w));
            at += k;
        }
        ClassicalPH::new(pi, t)
    }
}

/// Convolution of two GPH laws in classical form.
pub fn convolve(a: &GphDistribution, b: &GphDistribution) -> Result<ClassicalPH> {
    a.to_classical().convolve(&b.to_classical())
}

/// Convex mixture of GPH laws in classical form.
pub fn mix(weights: &[f64], dists: &[GphDistribution]) -> Result<ClassicalPH> {
    let parts: Vec<ClassicalPH> = dists.iter().map(GphDistribution::to_classical).collect();
    ClassicalPH::mix(weights, &parts)
}

/// Number of equally spaced probes used to compare a dense approximation
/// with its target.
pub const PROBE_POINTS: usize = 128;

/// Mixture of Erlang laws `Erlang(j, n)` with weights
/// `F(j/n) - F((j-1)/n)`, `j = 1..n^2`, plus the atom `F(0)` at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseApproximation {
    pub n: usize,
    /// `F(0)`.
    pub atom: f64,
    /// `F(min(k, n^2) / n) - F(0)` for `k = 0..=n^2`.
    increments: Vec<f64>,
}

/// Erlang-mixture approximation of a distribution function on `[0, inf)`.
pub fn dense_approximation<F: Fn(f64) -> f64>(target: F, n: usize) -> Result<DenseApproximation> {
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    let terms = n
        .checked_mul(n)
        .filter(|&t| t <= 1 << 26)
        .ok_or_else(|| Error::Parameter(format!("n = {n} is too large")))?;
    let mut samples = Vec::with_capacity(terms + 1);
    for k in 0..=terms {
        let v = target(k as f64 / n as f64);
        if !v.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&v) {
            return Err(Error::Parameter(format!(
                "target value {v} at {} is not a probability",
                k as f64 / n as f64
            )));
        }
        if let Some(&prev) = samples.last() {
            if v < prev - 1e-12 {
                return Err(Error::Parameter(format!(
                    "target decreases at {}: {prev} -> {v}",
                    k as f64 / n as f64
                )));
            }
        }
        samples.push(v);
    }
    let atom = samples[0];
    let increments = samples.iter().map(|v| v - atom).collect();
    Ok(DenseApproximation {
        n,
        atom,
        increments,
    })
}

impl DenseApproximation {
    /// Weights `p_j`, `j = 1..n^2`.
    pub fn weights(&self) -> Vec<f64> {
        self.increments.windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn poisson_sum(&self, lambda: f64, values: impl Fn(usize) -> f64) -> f64 {
        let terms = self.increments.len() - 1;
        let ln_lambda = lambda.ln();
        let mut log_p = -lambda;
        let mut acc = 0.0;
        for k in 0..terms {
            if k > 0 {
                log_p += ln_lambda - (k as f64).ln();
            }
            let p = log_p.exp();
            acc += p * values(k);
            if k as f64 > lambda && p < 1e-300 {
                break;
            }
        }
        acc
    }

    /// `F(0) + sum_k Pois(k; n t) (F(min(k, n^2)/n) - F(0))`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.atom;
        }
        let last = *self.increments.last().unwrap_or(&0.0);
        let lambda = self.n as f64 * t;
        let inc = &self.increments;
        self.atom + last + self.poisson_sum(lambda, |k| inc[k] - last)
    }

    /// `sum_j p_j n Pois(j - 1; n t)`.
    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let weights = self.weights();
        if t == 0.0 {
            return self.n as f64 * weights.first().copied().unwrap_or(0.0);
        }
        let lambda = self.n as f64 * t;
        self.n as f64 * self.poisson_sum(lambda, |k| weights[k])
    }

    /// Largest `|F~(x) - F(x)|` over the probe grid of `target`.
    pub fn probe_error<F: Fn(f64) -> f64>(&self, target: F) -> Result<f64> {
        let grid = probe_grid(&target)?;
        Ok(grid
            .iter()
            .map(|&x| (self.cdf(x) - target(x)).abs())
            .fold(0.0, f64::max))
    }
}

/// `PROBE_POINTS` equally spaced points on `[0, q]`, `q` the 0.999 quantile.
pub fn probe_grid<F: Fn(f64) -> f64>(target: F) -> Result<Vec<f64>> {
    let level = 0.999;
    let mut hi = 1.0;
    let mut found = false;
    for _ in 0..64 {
        if target(hi) >= level {
            found = true;
            break;
        }
        hi *= 2.0;
    }
    if !found {
        return Err(Error::Parameter("target never reaches its 0.999 quantile".into()));
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if target(mid) >= level {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    let step = hi / (PROBE_POINTS - 1) as f64;
    Ok((0..PROBE_POINTS).map(|k| k as f64 * step).collect())
}
