//! The two-regime Markov mixture: a slow/fast pair of chains sharing a
//! state space, their path likelihoods, posterior regime weights under
//! several information sets, conditional transition kernels and long-run
//! posterior limits.
//!
//! Regime `Q` moves with generator `[[T, D], [0, 0]]`; regime `G` with
//! `[[Psi T, Psi D], [0, 0]]` for a diagonal speed matrix `Psi`. A path
//! starting in state `i` follows `G` with probability `s0[i]`.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::markov::{self, Generator};
use crate::numkernel::{self, ensure_time, Complex64, EigenSystem, Matrix, Vector};

/// Tolerance for treating two dominant eigenvalues as tied.
pub const TIE_TOL: f64 = 1e-9;
/// Smallest scaled denominator accepted by ratio quantities.
pub const SUPPORT_FLOOR: f64 = 1e-13;

/// Latent regime of a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Q,
    G,
}

/// Diagonal speed matrix `Psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedMatrix {
    psi: Vector,
}

impl SpeedMatrix {
    pub fn new(psi: Vec<f64>) -> Result<Self> {
        for (i, v) in psi.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::Parameter(format!(
                    "psi[{i}] = {v} must be finite and nonnegative"
                )));
            }
        }
        Ok(Self {
            psi: Vector::from_vec(psi),
        })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            psi: Vector::from_element(m, 1.0),
        }
    }

    pub fn uniform(m: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; m])
    }

    pub fn diagonal(&self) -> &Vector {
        &self.psi
    }

    pub fn m(&self) -> usize {
        self.psi.len()
    }

    pub fn matrix(&self) -> Matrix {
        Matrix::from_diagonal(&self.psi)
    }

    pub fn is_nonsingular(&self) -> bool {
        self.psi.iter().all(|&v| v > 0.0)
    }

    pub fn is_identity(&self) -> bool {
        self.psi.iter().all(|&v| v == 1.0)
    }

    /// Errors with the first zero entry when `operation` needs `(Psi T)^{-1}`.
    pub fn require_nonsingular(&self, operation: &'static str) -> Result<()> {
        match self.psi.iter().position(|&v| v == 0.0) {
            Some(state) => Err(Error::SingularSpeed { state, operation }),
            None => Ok(()),
        }
    }
}

/// Parameters `(pi, T, D, Psi, s0)` of a Markov mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    generator: Generator,
    speed: SpeedMatrix,
    pi: Vector,
    s0: Vector,
    psi_t: Matrix,
    psi_d: Matrix,
    dom_t: f64,
    dom_g: f64,
}

impl AsRef<MixtureModel> for MixtureModel {
    fn as_ref(&self) -> &MixtureModel {
        self
    }
}

impl MixtureModel {
    pub fn new(generator: Generator, speed: SpeedMatrix, pi: Vector, s0: Vector) -> Result<Self> {
        let m = generator.m();
        if speed.m() != m {
            return Err(Error::Dimension(format!(
                "speed matrix has {} entries for {m} transient states",
                speed.m()
            )));
        }
        markov::validate_initial_law(&pi, m)?;
        if s0.len() != m {
            return Err(Error::Dimension(format!(
                "s0 has {} entries for {m} transient states",
                s0.len()
            )));
        }
        for (state, &value) in s0.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Mixing { state, value });
            }
        }
        let psi = speed.matrix();
        let psi_t = &psi * generator.t();
        let psi_d = &psi * generator.d();
        markov::check_structure(&psi_t, &psi_d)?;
        let dom_t = dominant_real(generator.t());
        let dom_g = dominant_real(&psi_t);
        Ok(Self {
            generator,
            speed,
            pi,
            s0,
            psi_t,
            psi_d,
            dom_t,
            dom_g,
        })
    }

    /// Convenience constructor from raw matrices.
    pub fn from_parts(
        t: &Matrix,
        d: &Matrix,
        psi: Vec<f64>,
        pi: Vec<f64>,
        s0: Vec<f64>,
    ) -> Result<Self> {
        let g = markov::validate_generator(t, d)?;
        Self::new(
            g,
            SpeedMatrix::new(psi)?,
            Vector::from_vec(pi),
            Vector::from_vec(s0),
        )
    }

    pub fn with_pi(&self, pi: Vector) -> Result<Self> {
        Self::new(self.generator.clone(), self.speed.clone(), pi, self.s0.clone())
    }

    pub fn with_s0(&self, s0: Vector) -> Result<Self> {
        Self::new(self.generator.clone(), self.speed.clone(), self.pi.clone(), s0)
    }

    pub fn with_speed(&self, speed: SpeedMatrix) -> Result<Self> {
        Self::new(self.generator.clone(), speed, self.pi.clone(), self.s0.clone())
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn speed(&self) -> &SpeedMatrix {
        &self.speed
    }

    pub fn pi(&self) -> &Vector {
        &self.pi
    }

    pub fn s0(&self) -> &Vector {
        &self.s0
    }

    pub fn m(&self) -> usize {
        self.generator.m()
    }

    pub fn p(&self) -> usize {
        self.generator.p()
    }

    pub fn t(&self) -> &Matrix {
        self.generator.t()
    }

    pub fn d(&self) -> &Matrix {
        self.generator.d()
    }

    /// `Psi T`.
    pub fn psi_t(&self) -> &Matrix {
        &self.psi_t
    }

    /// `Psi D`.
    pub fn psi_d(&self) -> &Matrix {
        &self.psi_d
    }

    /// Assembled generator of regime `Q`.
    pub fn q_generator(&self) -> Matrix {
        self.generator.q()
    }

    /// Assembled generator of regime `G`.
    pub fn g_generator(&self) -> Matrix {
        markov::assemble(&self.psi_t, &self.psi_d)
    }

    /// Largest real part in the spectrum of `T` (0 if the eigen solver failed).
    pub fn dominant_t(&self) -> f64 {
        self.dom_t
    }

    /// Largest real part in the spectrum of `Psi T`.
    pub fn dominant_psi_t(&self) -> f64 {
        self.dom_g
    }

    /// Rate of jumping from `from` to `to` (any state index) in a regime.
    pub fn rate(&self, regime: Regime, from: usize, to: usize) -> f64 {
        let m = self.m();
        let base = if to < m {
            self.t()[(from, to)]
        } else {
            self.d()[(from, to - m)]
        };
        match regime {
            Regime::Q => base,
            Regime::G => self.speed.psi[from] * base,
        }
    }

    /// Total exit rate from transient state `from`.
    pub fn total_rate(&self, regime: Regime, from: usize) -> f64 {
        -self.rate(regime, from, from)
    }

    pub(crate) fn check_state(&self, state: usize) -> Result<()> {
        let size = self.m() + self.p();
        if state >= size {
            return Err(Error::StateOutOfRange { state, size });
        }
        Ok(())
    }

    pub(crate) fn check_transient(&self, state: usize) -> Result<()> {
        self.check_state(state)?;
        if state >= self.m() {
            return Err(Error::AbsorbingState(state));
        }
        Ok(())
    }

    /// `exp(Psi T nu)` and `exp(T nu)` with their dominant decay factored out.
    pub(crate) fn branches(&self, nu: f64) -> Result<Branches> {
        Ok(Branches {
            g: ScaledExp::new(&self.psi_t, self.dom_g, nu)?,
            q: ScaledExp::new(self.t(), self.dom_t, nu)?,
        })
    }

    /// Closed-form `t -> infinity` limit of a two-branch ratio
    /// `[(w.s)^T e^{Psi T nu} ng + (w.(1-s))^T e^{T nu} nq] / [same with dg, dq]`.
    pub(crate) fn longrun_ratio(&self, w: &Vector, s: &Vector, num: BranchVectors, den: BranchVectors) -> Result<f64> {
        let (gw, qw) = split_weights(w, s);
        let g = if gw.iter().any(|&v| v != 0.0) {
            Some(leading_mode(&self.psi_t, &gw, num.g, den.g)?)
        } else {
            None
        };
        let q = if qw.iter().any(|&v| v != 0.0) {
            Some(leading_mode(self.t(), &qw, num.q, den.q)?)
        } else {
            None
        };
        let (cn, cd) = match (g, q) {
            (None, None) => return Err(Error::OutOfSupport),
            (Some(g), None) => (g.num, g.den),
            (None, Some(q)) => (q.num, q.den),
            (Some(g), Some(q)) => {
                if (g.rate - q.rate).abs() <= TIE_TOL {
                    (g.num + q.num, g.den + q.den)
                } else if g.rate > q.rate {
                    (g.num, g.den)
                } else {
                    (q.num, q.den)
                }
            }
        };
        if cd == 0.0 {
            return Err(Error::OutOfSupport);
        }
        Ok(cn / cd)
    }
}

fn dominant_real(a: &Matrix) -> f64 {
    match numkernel::eigen(a) {
        Ok(e) => e.eigenvalues[0].re,
        Err(_) => 0.0,
    }
}

pub(crate) fn split_weights(w: &Vector, s: &Vector) -> (Vector, Vector) {
    (w.component_mul(s), w.component_mul(&s.map(|v| 1.0 - v)))
}

/// Column vectors multiplying the `G` and `Q` branches.
#[derive(Clone, Copy)]
pub(crate) struct BranchVectors<'a> {
    pub g: &'a Vector,
    pub q: &'a Vector,
}

impl<'a> BranchVectors<'a> {
    pub fn new(g: &'a Vector, q: &'a Vector) -> Self {
        Self { g, q }
    }

    pub fn same(v: &'a Vector) -> Self {
        Self { g: v, q: v }
    }
}

struct LeadingMode {
    rate: f64,
    num: f64,
    den: f64,
}

/// Dominant surviving mode of `r^T exp(A nu) den`, together with the
/// matching coefficient of `r^T exp(A nu) num`.
fn leading_mode(a: &Matrix, r: &Vector, num: &Vector, den: &Vector) -> Result<LeadingMode> {
    let eig = numkernel::eigen(a)?;
    if !eig.distinct {
        return Err(Error::UnsupportedSpectrum(
            "long-run limits need distinct eigenvalues",
        ));
    }
    let n = eig.len();
    let mut cn = Vec::with_capacity(n);
    let mut cd = Vec::with_capacity(n);
    let rc = r.map(|v| Complex64::new(v, 0.0));
    let numc = num.map(|v| Complex64::new(v, 0.0));
    let denc = den.map(|v| Complex64::new(v, 0.0));
    for p in 0..n {
        let l = numkernel::lagrange_coefficient_complex(a, &eig, p)?;
        let left = rc.transpose() * &l;
        cn.push((&left * &numc)[(0, 0)]);
        cd.push((&left * &denc)[(0, 0)]);
    }
    let scale: f64 = cd.iter().map(|z| z.norm()).sum();
    if scale == 0.0 {
        return Err(Error::OutOfSupport);
    }
    let groups = group_by_real_part(&eig);
    for group in groups {
        let weight: f64 = group.iter().map(|&p| cd[p].norm()).sum();
        if weight <= 1e-9 * scale {
            continue;
        }
        if group.len() > 1 || eig.eigenvalues[group[0]].im.abs() > 0.0 {
            return Err(Error::UnsupportedSpectrum(
                "dominant surviving mode is oscillatory; the limit does not exist",
            ));
        }
        let p = group[0];
        let residue = cn[p].im.abs().max(cd[p].im.abs());
        if residue > numkernel::IMAG_RESIDUE_TOL * cn[p].re.abs().max(cd[p].re.abs()).max(1.0) {
            return Err(Error::ComplexResidue(residue));
        }
        return Ok(LeadingMode {
            rate: eig.eigenvalues[p].re,
            num: cn[p].re,
            den: cd[p].re,
        });
    }
    Err(Error::OutOfSupport)
}

fn group_by_real_part(eig: &EigenSystem) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (p, z) in eig.eigenvalues.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if {
                let r = eig.eigenvalues[g[0]].re;
                (r - z.re).abs() <= TIE_TOL * r.abs().max(1.0)
            } =>
            {
                g.push(p)
            }
            _ => groups.push(vec![p]),
        }
    }
    groups
}

/// `exp(A nu) = exp(log_scale) * mat`.
#[derive(Debug, Clone)]
pub(crate) struct ScaledExp {
    pub log_scale: f64,
    pub mat: Matrix,
}

impl ScaledExp {
    fn new(a: &Matrix, dominant: f64, nu: f64) -> Result<Self> {
        ensure_time(nu)?;
        let n = a.nrows();
        let shifted = a - Matrix::identity(n, n) * dominant;
        Ok(Self {
            log_scale: dominant * nu,
            mat: numkernel::expm(&shifted, nu)?,
        })
    }
}

/// A value stored as `exp(log_scale) * value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Scaled {
    pub log_scale: f64,
    pub value: f64,
}

impl Scaled {
    pub fn get(self) -> f64 {
        if self.value == 0.0 {
            0.0
        } else {
            self.value * self.log_scale.exp()
        }
    }

    /// `self / den`, guarded against a vanishing denominator.
    pub fn ratio(self, den: Scaled) -> Result<f64> {
        debug_assert_eq!(self.log_scale, den.log_scale);
        if !(den.value > SUPPORT_FLOOR) {
            return Err(Error::OutOfSupport);
        }
        Ok(self.value / den.value)
    }
}

pub(crate) struct Branches {
    pub g: ScaledExp,
    pub q: ScaledExp,
}

impl Branches {
    /// `(w.s)^T e^{Psi T nu} x.g + (w.(1-s))^T e^{T nu} x.q`. The common
    /// scale depends only on which branches carry weight, so values built
    /// from the same `(w, s)` share it and can be divided directly.
    pub fn combine(&self, w: &Vector, s: &Vector, x: BranchVectors) -> Scaled {
        let (gw, qw) = split_weights(w, s);
        let g_on = gw.iter().any(|&v| v != 0.0);
        let q_on = qw.iter().any(|&v| v != 0.0);
        let log_scale = match (g_on, q_on) {
            (true, true) => self.g.log_scale.max(self.q.log_scale),
            (true, false) => self.g.log_scale,
            (false, true) => self.q.log_scale,
            (false, false) => return Scaled { log_scale: 0.0, value: 0.0 },
        };
        let mut value = 0.0;
        if g_on {
            value += (self.g.log_scale - log_scale).exp() * numkernel::bilinear(&gw, &self.g.mat, x.g);
        }
        if q_on {
            value += (self.q.log_scale - log_scale).exp() * numkernel::bilinear(&qw, &self.q.mat, x.q);
        }
        Scaled { log_scale, value }
    }

    /// Row vector `(w.s)^T e^{Psi T nu}` and `(w.(1-s))^T e^{T nu}` on a
    /// common scale.
    pub fn rows(&self, w: &Vector, s: &Vector) -> (f64, Vector, Vector) {
        let (gw, qw) = split_weights(w, s);
        let g_on = gw.iter().any(|&v| v != 0.0);
        let q_on = qw.iter().any(|&v| v != 0.0);
        let log_scale = match (g_on, q_on) {
            (true, false) => self.g.log_scale,
            (false, true) => self.q.log_scale,
            _ => self.g.log_scale.max(self.q.log_scale),
        };
        let rg = (self.g.mat.transpose() * gw) * (self.g.log_scale - log_scale).exp();
        let rq = (self.q.mat.transpose() * qw) * (self.q.log_scale - log_scale).exp();
        (log_scale, rg, rq)
    }
}

/// What the posterior weights were conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InformationRegime {
    /// The whole path up to the current age.
    Full,
    /// Initial and current state.
    Endpoints,
    /// Current state only, with the initial state drawn from `pi`.
    CurrentOnly,
    /// No observation beyond the starting state at age 0.
    Initial,
}

/// The past information `I_{i,t}`: current state, age and posterior
/// regime weights `s_k(t)` for every transient state.
///
/// States are 0-based; indices `m..m+p` are the absorbing states. Only
/// the entry for the current state carries information under full-path
/// conditioning; the remaining entries hold the prior `s0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationState {
    pub state: usize,
    pub age: f64,
    pub smt: Vector,
    pub regime: InformationRegime,
}

impl InformationState {
    pub fn new(state: usize, age: f64, smt: Vector, regime: InformationRegime) -> Result<Self> {
        ensure_time(age)?;
        for (state, &value) in smt.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Mixing { state, value });
            }
        }
        Ok(Self {
            state,
            age,
            smt,
            regime,
        })
    }

    /// Starting information: age 0 and prior weights.
    pub fn initial(model: &MixtureModel, state: usize) -> Result<Self> {
        model.check_state(state)?;
        Self::new(state, 0.0, model.s0.clone(), InformationRegime::Initial)
    }

    /// Same weight `s` for every state.
    pub fn uniform(state: usize, age: f64, m: usize, s: f64) -> Result<Self> {
        Self::new(state, age, Vector::from_element(m, s), InformationRegime::Initial)
    }

    /// Posterior weight of the current state; zero once absorbed.
    pub fn weight(&self) -> f64 {
        self.smt.get(self.state).copied().unwrap_or(0.0)
    }

    pub fn is_absorbed(&self, model: &MixtureModel) -> bool {
        self.state >= model.m()
    }

    pub(crate) fn check(&self, model: &MixtureModel) -> Result<()> {
        model.check_state(self.state)?;
        if self.smt.len() != model.m() {
            return Err(Error::Dimension(format!(
                "information has {} weights for {} transient states",
                self.smt.len(),
                model.m()
            )));
        }
        Ok(())
    }

    /// Row selector `e_i` over transient states.
    pub(crate) fn selector(&self, m: usize) -> Vector {
        let mut e = Vector::zeros(m);
        e[self.state] = 1.0;
        e
    }
}

/// An observed trajectory: sojourns in transient states followed by an
/// optional terminal state. Without a terminal state the last sojourn is
/// right-censored at the current age.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub sojourns: Vec<(usize, f64)>,
    pub terminal: Option<usize>,
    pub regime: Option<Regime>,
}

impl PathRecord {
    pub fn new(sojourns: Vec<(usize, f64)>, terminal: Option<usize>) -> Result<Self> {
        let p = Self {
            sojourns,
            terminal,
            regime: None,
        };
        p.check()?;
        Ok(p)
    }

    /// A path observed in `state` for zero time.
    pub fn at(state: usize) -> Self {
        Self {
            sojourns: vec![(state, 0.0)],
            terminal: None,
            regime: None,
        }
    }

    pub fn with_regime(mut self, regime: Regime) -> Self {
        self.regime = Some(regime);
        self
    }

    fn check(&self) -> Result<()> {
        if self.sojourns.is_empty() {
            return Err(Error::Path("no sojourns".into()));
        }
        let last = self.sojourns.len() - 1;
        for (k, &(state, d)) in self.sojourns.iter().enumerate() {
            if !d.is_finite() || d < 0.0 || (d == 0.0 && k < last) {
                return Err(Error::Path(format!(
                    "sojourn {} in state {} has invalid duration {d}",
                    k + 1,
                    state + 1
                )));
            }
            if k > 0 && self.sojourns[k - 1].0 == state {
                return Err(Error::Path(format!(
                    "consecutive sojourns in state {}",
                    state + 1
                )));
            }
        }
        if let Some(term) = self.terminal {
            if term == self.sojourns[last].0 {
                return Err(Error::Path(format!(
                    "terminal state {} repeats the last sojourn state",
                    term + 1
                )));
            }
        }
        Ok(())
    }

    pub fn start(&self) -> usize {
        self.sojourns[0].0
    }

    pub fn current_state(&self) -> usize {
        self.terminal.unwrap_or(self.sojourns[self.sojourns.len() - 1].0)
    }

    /// Total observed time.
    pub fn elapsed(&self) -> f64 {
        self.sojourns.iter().map(|s| s.1).sum()
    }

    pub fn is_absorbed(&self) -> bool {
        self.terminal.is_some()
    }

    /// State occupied at age `t`, or `None` past the censoring time.
    pub fn state_at(&self, t: f64) -> Option<usize> {
        let mut clock = 0.0;
        for &(state, d) in &self.sojourns {
            clock += d;
            if t < clock {
                return Some(state);
            }
        }
        match self.terminal {
            Some(term) => Some(term),
            None if t <= clock => self.sojourns.last().map(|s| s.0),
            None => None,
        }
    }

    /// Largest state index mentioned.
    pub fn max_state(&self) -> usize {
        let s = self.sojourns.iter().map(|s| s.0).max().unwrap_or(0);
        self.terminal.map_or(s, |t| t.max(s))
    }

    /// Transitions `(from, to)` in order.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let next = self
            .sojourns
            .iter()
            .skip(1)
            .map(|s| s.0)
            .chain(self.terminal);
        self.sojourns.iter().map(|s| s.0).zip(next)
    }

    fn check_against(&self, model: &MixtureModel) -> Result<()> {
        let m = model.m();
        for &(state, _) in &self.sojourns {
            if state >= m {
                return Err(Error::Path(format!(
                    "sojourn in state {} which is not transient",
                    state + 1
                )));
            }
        }
        if let Some(term) = self.terminal {
            model.check_state(term)?;
        }
        Ok(())
    }
}

impl fmt::Display for PathRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.regime {
            Some(Regime::Q) => write!(f, "Q;")?,
            Some(Regime::G) => write!(f, "G;")?,
            None => {}
        }
        for (k, (state, d)) in self.sojourns.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}:{}", state + 1, d)?;
        }
        if let Some(term) = self.terminal {
            write!(f, ",{}", term + 1)?;
        }
        Ok(())
    }
}

impl FromStr for PathRecord {
    type Err = Error;

    /// Parses `[Q;|G;]state:duration,...[,terminal]` with 1-based states.
    fn from_str(line: &str) -> Result<Self> {
        let line = line.trim();
        let (regime, body) = if let Some(rest) = line.strip_prefix("Q;") {
            (Some(Regime::Q), rest)
        } else if let Some(rest) = line.strip_prefix("G;") {
            (Some(Regime::G), rest)
        } else {
            (None, line)
        };
        let tokens: Vec<&str> = body.split(',').map(str::trim).collect();
        let parse_state = |s: &str| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| Error::Path(format!("bad state label {s:?}")))?;
            if v == 0 {
                return Err(Error::Path("states are numbered from 1".into()));
            }
            Ok(v - 1)
        };
        let mut sojourns = Vec::new();
        let mut terminal = None;
        for (k, tok) in tokens.iter().enumerate() {
            match tok.split_once(':') {
                Some((s, d)) => {
                    let d: f64 = d
                        .trim()
                        .parse()
                        .map_err(|_| Error::Path(format!("bad duration in {tok:?}")))?;
                    sojourns.push((parse_state(s.trim())?, d));
                }
                None if k + 1 == tokens.len() && k > 0 => terminal = Some(parse_state(tok)?),
                None => return Err(Error::Path(format!("token {tok:?} lacks a duration"))),
            }
        }
        let mut p = PathRecord::new(sojourns, terminal)?;
        p.regime = regime;
        Ok(p)
    }
}

/// Log-likelihoods `(ln LQ, ln LG)` of an observed path; `-inf` when a
/// used transition has zero rate.
pub fn path_log_likelihood(path: &PathRecord, model: &MixtureModel) -> Result<(f64, f64)> {
    path.check_against(model)?;
    let one = |regime: Regime| -> f64 {
        let mut ll = 0.0;
        for &(state, d) in &path.sojourns {
            let q = model.total_rate(regime, state);
            if d > 0.0 {
                ll -= q * d;
            }
        }
        for (from, to) in path.transitions() {
            let r = model.rate(regime, from, to);
            if r <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += r.ln();
        }
        ll
    };
    Ok((one(Regime::Q), one(Regime::G)))
}

/// Likelihoods `(LQ, LG)`.
pub fn path_likelihood(path: &PathRecord, model: &MixtureModel) -> Result<(f64, f64)> {
    let (lq, lg) = path_log_likelihood(path, model)?;
    Ok((lq.exp(), lg.exp()))
}

/// `s0 LG / (s0 LG + (1 - s0) LQ)` for an observed path, evaluated in the
/// log domain. Unlike [`posterior_full`] this is not zeroed when the path
/// ends in an absorbing state.
pub fn full_weight(model: &MixtureModel, path: &PathRecord) -> Result<f64> {
    let (lq, lg) = path_log_likelihood(path, model)?;
    let s = model.s0[path.start()];
    let a = s.ln() + lg;
    let b = (1.0 - s).ln() + lq;
    let top = a.max(b);
    if top == f64::NEG_INFINITY {
        return Err(Error::DegenerateInformation);
    }
    Ok((a - top).exp() / ((a - top).exp() + (b - top).exp()))
}

/// Posterior weights given the full observed path from `i0`.
pub fn posterior_full(model: &MixtureModel, i0: usize, path: &PathRecord) -> Result<InformationState> {
    model.check_transient(i0)?;
    if path.start() != i0 {
        return Err(Error::Path(format!(
            "path starts in state {}, expected {}",
            path.start() + 1,
            i0 + 1
        )));
    }
    let post = full_weight(model, path)?;
    let current = path.current_state();
    let mut smt = model.s0.clone();
    if current < model.m() {
        smt[current] = post;
    }
    InformationState::new(current, path.elapsed(), smt, InformationRegime::Full)
}

/// Transient states reachable from the support of `w` within a regime.
fn reachable(model: &MixtureModel, w: &Vector, regime: Regime) -> Vec<bool> {
    let m = model.m();
    let mut seen = vec![false; m];
    let mut queue: VecDeque<usize> = (0..m).filter(|&k| w[k] > 0.0).collect();
    for &k in &queue {
        seen[k] = true;
    }
    while let Some(k) = queue.pop_front() {
        for l in 0..m {
            if l != k && !seen[l] && model.rate(regime, k, l) > 0.0 {
                seen[l] = true;
                queue.push_back(l);
            }
        }
    }
    seen
}

/// Posterior weights `s_k(t)` for all transient `k`, with the initial
/// state distributed as `w`.
fn posterior_from_law(
    model: &MixtureModel,
    w: &Vector,
    s_prior: &Vector,
    i: usize,
    t: f64,
    regime: InformationRegime,
) -> Result<InformationState> {
    ensure_time(t)?;
    model.check_state(i)?;
    let m = model.m();
    let (gw, qw) = split_weights(w, s_prior);
    let (reach_g, reach_q) = if t == 0.0 {
        (
            gw.iter().map(|&v| v > 0.0).collect::<Vec<_>>(),
            qw.iter().map(|&v| v > 0.0).collect::<Vec<_>>(),
        )
    } else {
        (reachable(model, &gw, Regime::G), reachable(model, &qw, Regime::Q))
    };
    let (_, rg, rq) = model.branches(t)?.rows(w, s_prior);
    let mut smt = model.s0.clone();
    for k in 0..m {
        let num = if reach_g[k] { rg[k].max(0.0) } else { 0.0 };
        let other = if reach_q[k] { rq[k].max(0.0) } else { 0.0 };
        let den = num + other;
        if (reach_g[k] || reach_q[k]) && den > 0.0 {
            smt[k] = (num / den).clamp(0.0, 1.0);
        } else if k == i {
            return Err(Error::Unreachable { state: i });
        }
    }
    if i >= m {
        // absorbing current state: it must be reachable at all
        let col = i - m;
        let any = (0..m).any(|k| {
            (reach_g[k] && model.psi_d[(k, col)] > 0.0) || (reach_q[k] && model.d()[(k, col)] > 0.0)
        });
        if !any || t == 0.0 {
            return Err(Error::Unreachable { state: i });
        }
    }
    InformationState::new(i, t, smt, regime)
}

/// Posterior weights given the initial state `i0` and the current state `i`.
pub fn posterior_endpoints(model: &MixtureModel, i0: usize, i: usize, t: f64) -> Result<InformationState> {
    model.check_transient(i0)?;
    let mut w = Vector::zeros(model.m());
    w[i0] = 1.0;
    posterior_from_law(model, &w, &model.s0, i, t, InformationRegime::Endpoints)
}

/// Posterior weights given only the current state, with the initial state
/// drawn from `pi`.
pub fn posterior_current(model: &MixtureModel, i: usize, t: f64) -> Result<InformationState> {
    posterior_from_law(model, &model.pi, &model.s0, i, t, InformationRegime::CurrentOnly)
}

/// Probability of regime `G` among paths that sit in absorbing state
/// `m + j` at age `t` (initial state drawn from `pi`). Information states
/// fix this weight to zero; this is the raw ratio.
pub fn arrival_posterior(model: &MixtureModel, j: usize, t: f64) -> Result<f64> {
    let m = model.m();
    if j >= model.p() {
        return Err(Error::CauseOutOfRange {
            cause: j + 1,
            count: model.p(),
        });
    }
    let eg = numkernel::expm(&model.g_generator(), t)?;
    let eq = numkernel::expm(&model.q_generator(), t)?;
    let (gw, qw) = split_weights(&model.pi, &model.s0);
    let col = m + j;
    let num: f64 = (0..m).map(|k| gw[k] * eg[(k, col)]).sum();
    let den = num + (0..m).map(|k| qw[k] * eq[(k, col)]).sum::<f64>();
    if den <= 0.0 {
        return Err(Error::Unreachable { state: col });
    }
    Ok(num / den)
}

fn extended_weights(smt: &Vector, p: usize) -> Matrix {
    let m = smt.len();
    let mut diag = Vector::zeros(m + p);
    diag.rows_mut(0, m).copy_from(smt);
    Matrix::from_diagonal(&diag)
}

/// `P(t) = S e^{G t} + (I - S) e^{Q t}` with `S = diag(s0)`.
pub fn mixture_transition(model: &MixtureModel, t: f64) -> Result<Matrix> {
    weighted_transition(model, &model.s0, t)
}

fn weighted_transition(model: &MixtureModel, s: &Vector, h: f64) -> Result<Matrix> {
    let n = model.m() + model.p();
    let sw = extended_weights(s, model.p());
    let eg = numkernel::expm(&model.g_generator(), h)?;
    let eq = numkernel::expm(&model.q_generator(), h)?;
    Ok(&sw * eg + (Matrix::identity(n, n) - &sw) * eq)
}

/// `P(t, t+h) = S(t) e^{G h} + (I - S(t)) e^{Q h}`.
pub fn conditional_transition(info: &InformationState, model: &MixtureModel, h: f64) -> Result<Matrix> {
    info.check(model)?;
    weighted_transition(model, &info.smt, h)
}

/// Top blocks of the conditional transition matrix: transient-to-transient
/// `F11` and transient-to-absorbing `F12`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBlocks {
    pub f11: Matrix,
    pub f12: Matrix,
}

pub fn conditional_blocks(info: &InformationState, model: &MixtureModel, h: f64) -> Result<TransitionBlocks> {
    let full = conditional_transition(info, model, h)?;
    let m = model.m();
    Ok(TransitionBlocks {
        f11: full.view((0, 0), (m, m)).into_owned(),
        f12: full.view((0, m), (m, model.p())).into_owned(),
    })
}

/// `lim_{t -> infinity} s_i(t)` under current-state information.
///
/// For transient `i` the regime whose surviving mode decays slowest
/// wins; tied modes give the ratio of Lagrange coefficients. For an
/// absorbing state `m + j` the limit is `pi^T S T^{-1} D e_j / pi^T T^{-1} D e_j`.
pub fn posterior_limit(model: &MixtureModel, i: usize) -> Result<f64> {
    model.check_state(i)?;
    let m = model.m();
    let teig = numkernel::eigen(model.t())?;
    let geig = numkernel::eigen(model.psi_t())?;
    if !teig.distinct || !geig.distinct {
        return Err(Error::UnsupportedSpectrum(
            "posterior limits need distinct eigenvalues of T and Psi T",
        ));
    }
    if i < m {
        let mut e = Vector::zeros(m);
        e[i] = 1.0;
        let zero = Vector::zeros(m);
        model.longrun_ratio(
            &model.pi,
            &model.s0,
            BranchVectors::new(&e, &zero),
            BranchVectors::same(&e),
        )
    } else {
        model.speed.require_nonsingular("the absorbing-state posterior limit")?;
        let j = i - m;
        let x = numkernel::solve(model.t(), &model.d().columns(j, 1).into_owned())?;
        let num: f64 = (0..m).map(|k| model.pi[k] * model.s0[k] * x[(k, 0)]).sum();
        let den: f64 = (0..m).map(|k| model.pi[k] * x[(k, 0)]).sum();
        if den == 0.0 {
            return Err(Error::Unreachable { state: i });
        }
        Ok(num / den)
    }
}

/// Per-regime sufficient statistics: time in each state, transition
/// counts and number of paths starting in each state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tally {
    pub occupancy: Vec<f64>,
    pub counts: Vec<Vec<f64>>,
    pub starts: Vec<f64>,
}

impl Tally {
    fn sized(n: usize) -> Self {
        Self {
            occupancy: vec![0.0; n],
            counts: vec![vec![0.0; n]; n],
            starts: vec![0.0; n],
        }
    }

    fn grow(&mut self, n: usize) {
        if self.occupancy.len() >= n {
            return;
        }
        self.occupancy.resize(n, 0.0);
        self.starts.resize(n, 0.0);
        for row in &mut self.counts {
            row.resize(n, 0.0);
        }
        self.counts.resize(n, vec![0.0; n]);
    }

    fn add(&mut self, path: &PathRecord) {
        self.grow(path.max_state() + 1);
        self.starts[path.start()] += 1.0;
        for &(state, d) in &path.sojourns {
            self.occupancy[state] += d;
        }
        for (from, to) in path.transitions() {
            self.counts[from][to] += 1.0;
        }
    }

    /// Associative merge.
    pub fn merge(mut self, other: Tally) -> Tally {
        let n = self.occupancy.len().max(other.occupancy.len());
        self.grow(n);
        for k in 0..other.occupancy.len() {
            self.occupancy[k] += other.occupancy[k];
            self.starts[k] += other.starts[k];
            for l in 0..other.occupancy.len() {
                self.counts[k][l] += other.counts[k][l];
            }
        }
        self
    }

    fn exits(&self, k: usize) -> f64 {
        self.counts[k].iter().sum()
    }
}

/// Complete-data rate estimates. Entries are `None` where the state was
/// never occupied, so the rate is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorEstimate {
    /// Number of states seen (transient and absorbing), 0-based.
    pub states: usize,
    /// `q_ij` from regime-`Q` paths (unlabeled paths count as `Q`).
    pub rates: Vec<Vec<Option<f64>>>,
    /// Standard errors `sqrt(N_ij) / T_i`.
    pub rate_se: Vec<Vec<Option<f64>>>,
    /// Total exit rates `q_i`.
    pub exit_rate: Vec<Option<f64>>,
    /// `g_ij` from regime-`G` paths.
    pub g_rates: Vec<Vec<Option<f64>>>,
    /// `psi_i = g_i / q_i`.
    pub psi: Vec<Option<f64>>,
    pub psi_se: Vec<Option<f64>>,
    /// Fraction of `G` paths among those starting in each state.
    pub s0: Vec<Option<f64>>,
    pub q_tally: Tally,
    pub g_tally: Tally,
}

/// Maximum-likelihood rates from regime-labeled paths: `q_i` is exits over
/// time at risk and `q_ij = N_ij / sum_j N_ij * q_i`.
pub fn estimate_generator(paths: &[PathRecord]) -> Result<GeneratorEstimate> {
    if paths.is_empty() {
        return Err(Error::Empty("path collection"));
    }
    let (q_tally, g_tally) = paths
        .par_iter()
        .fold(
            || (Tally::default(), Tally::default()),
            |(mut q, mut g), path| {
                match path.regime {
                    Some(Regime::G) => g.add(path),
                    _ => q.add(path),
                }
                (q, g)
            },
        )
        .reduce(
            || (Tally::default(), Tally::default()),
            |(q1, g1), (q2, g2)| (q1.merge(q2), g1.merge(g2)),
        );
    let n = paths.iter().map(|p| p.max_state() + 1).max().unwrap_or(0);
    let mut q_tally = q_tally;
    let mut g_tally = g_tally;
    if q_tally.occupancy.len() < n {
        let mut t = Tally::sized(n);
        t = t.merge(q_tally);
        q_tally = t;
    }
    if g_tally.occupancy.len() < n {
        let mut t = Tally::sized(n);
        t = t.merge(g_tally);
        g_tally = t;
    }

    let split = |tally: &Tally| -> (Vec<Vec<Option<f64>>>, Vec<Vec<Option<f64>>>, Vec<Option<f64>>) {
        let mut rates = vec![vec![None; n]; n];
        let mut se = vec![vec![None; n]; n];
        let mut exit = vec![None; n];
        for k in 0..n {
            let time = tally.occupancy[k];
            if time <= 0.0 {
                continue;
            }
            let exits = tally.exits(k);
            let qk = exits / time;
            exit[k] = Some(qk);
            for l in 0..n {
                if l == k {
                    continue;
                }
                let nkl = tally.counts[k][l];
                let share = if exits > 0.0 { nkl / exits } else { 0.0 };
                rates[k][l] = Some(share * qk);
                se[k][l] = Some(nkl.sqrt() / time);
            }
        }
        (rates, se, exit)
    };
    let (rates, rate_se, exit_rate) = split(&q_tally);
    let (g_rates, _, g_exit) = split(&g_tally);

    let mut psi = vec![None; n];
    let mut psi_se = vec![None; n];
    let mut s0 = vec![None; n];
    for k in 0..n {
        if let (Some(qk), Some(gk)) = (exit_rate[k], g_exit[k]) {
            if qk > 0.0 {
                let value = gk / qk;
                psi[k] = Some(value);
                let nq = q_tally.exits(k);
                let ng = g_tally.exits(k);
                if nq > 0.0 && ng > 0.0 {
                    psi_se[k] = Some(value * (1.0 / nq + 1.0 / ng).sqrt());
                }
            }
        }
        let started = q_tally.starts[k] + g_tally.starts[k];
        if started > 0.0 {
            s0[k] = Some(g_tally.starts[k] / started);
        }
    }
    Ok(GeneratorEstimate {
        states: n,
        rates,
        rate_se,
        exit_rate,
        g_rates,
        psi,
        psi_se,
        s0,
        q_tally,
        g_tally,
    })
}

/// Complex Lagrange projectors of a matrix with distinct spectrum.
pub fn spectral_projectors(a: &Matrix) -> Result<(EigenSystem, Vec<DMatrix<Complex64>>)> {
    let eig = numkernel::eigen(a)?;
    let mut out = Vec::with_capacity(eig.len());
    for p in 0..eig.len() {
        out.push(numkernel::lagrange_coefficient_complex(a, &eig, p)?);
    }
    Ok((eig, out))
}
