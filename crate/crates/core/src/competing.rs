//! Competing risks: several absorbing states, each a cause of exit.
//! Causes are numbered `1..=p` at this boundary.

use crate::error::{Error, Result};
use crate::mixture::{self, BranchVectors, InformationState, MixtureModel};
use crate::numkernel::{self, Matrix, Vector};

/// Absorbing cause, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CauseLabel(usize);

impl CauseLabel {
    pub fn new(j: usize, p: usize) -> Result<Self> {
        if j == 0 || j > p {
            return Err(Error::CauseOutOfRange { cause: j, count: p });
        }
        Ok(Self(j))
    }

    /// 1-based label.
    pub fn get(self) -> usize {
        self.0
    }

    /// 0-based column of `D`.
    pub fn index(self) -> usize {
        self.0 - 1
    }
}

/// `(F_ij, f_ij, Fbar_ij)` at a horizon `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubDistribution {
    /// `P(tau <= s, J = j | I)`.
    pub cdf: f64,
    pub density: f64,
    /// `P(s < tau, J = j | I) = p_ij - F_ij`.
    pub survivor: f64,
}

/// Unconditional cause-specific quantities at age `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnconditionalFamily {
    pub cdf: f64,
    pub density: f64,
    pub survivor: f64,
    /// `f_j(t) / F(t)`.
    pub intensity: f64,
    /// `F_j(t) / p_j`.
    pub conditional_cdf: f64,
    /// `Fbar_j(t) / F(t)`.
    pub conditional_prob: f64,
}

/// Mixture model with `p >= 1` absorbing causes.
#[derive(Debug, Clone, PartialEq)]
pub struct CompetingModel {
    model: MixtureModel,
    /// `-T^{-1} D`.
    absorption: Matrix,
}

impl AsRef<MixtureModel> for CompetingModel {
    fn as_ref(&self) -> &MixtureModel {
        &self.model
    }
}

impl CompetingModel {
    pub fn new(model: MixtureModel) -> Result<Self> {
        let absorption = -numkernel::solve(model.t(), model.d())?;
        Ok(Self { model, absorption })
    }

    pub fn model(&self) -> &MixtureModel {
        &self.model
    }

    pub fn m(&self) -> usize {
        self.model.m()
    }

    pub fn p(&self) -> usize {
        self.model.p()
    }

    pub fn cause(&self, j: usize) -> Result<CauseLabel> {
        CauseLabel::new(j, self.p())
    }

    fn check_cause(&self, j: CauseLabel) -> Result<usize> {
        if j.get() > self.p() {
            return Err(Error::CauseOutOfRange {
                cause: j.get(),
                count: self.p(),
            });
        }
        Ok(j.index())
    }

    fn elapsed(&self, info: &InformationState, s: f64) -> Result<f64> {
        info.check(&self.model)?;
        numkernel::ensure_time(s)?;
        if s < info.age {
            return Err(Error::HorizonBeforeAge { age: info.age, horizon: s });
        }
        Ok(s - info.age)
    }

    /// Absorbed index `k` (0-based cause) if the information says so.
    fn absorbed_cause(&self, info: &InformationState) -> Option<usize> {
        info.state.checked_sub(self.m())
    }

    fn d_col(&self, j: usize) -> Vector {
        self.model.d().column(j).into_owned()
    }

    fn psi_d_col(&self, j: usize) -> Vector {
        self.model.psi_d().column(j).into_owned()
    }

    /// Two-branch value `e_i^T (S x_G(nu) + (I - S) x_Q(nu))` built from
    /// fully evaluated matrices.
    fn row_weighted(&self, w: &Vector, s: &Vector, g: &Vector, q: &Vector) -> f64 {
        let (gw, qw) = mixture::split_weights(w, s);
        gw.dot(g) + qw.dot(q)
    }

    /// `F_ij(t, s) = e_i^T (S (Psi T)^{-1}(e^{Psi T nu} - I) Psi D
    /// + (I - S) T^{-1}(e^{T nu} - I) D) e_j`, its derivative in `s`, and
    /// the survivor `-e_i^T (S e^{Psi T nu} + (I - S) e^{T nu}) T^{-1} D e_j`.
    pub fn sub_distribution(&self, info: &InformationState, j: CauseLabel, s: f64) -> Result<SubDistribution> {
        let nu = self.elapsed(info, s)?;
        let jj = self.check_cause(j)?;
        if let Some(k) = self.absorbed_cause(info) {
            let hit = if k == jj { 1.0 } else { 0.0 };
            return Ok(SubDistribution {
                cdf: hit,
                density: 0.0,
                survivor: 0.0,
            });
        }
        let w = info.selector(self.m());
        self.sub_distribution_from(&w, &info.smt, jj, nu)
    }

    fn sub_distribution_from(&self, w: &Vector, s: &Vector, jj: usize, nu: f64) -> Result<SubDistribution> {
        self.model.speed().require_nonsingular("cause-specific sub-distributions")?;
        let m = self.m();
        let eye = Matrix::identity(m, m);
        let eg = numkernel::expm(self.model.psi_t(), nu)?;
        let eq = numkernel::expm(self.model.t(), nu)?;
        let dg = self.psi_d_col(jj);
        let dq = self.d_col(jj);
        let cg = numkernel::solve_vec(self.model.psi_t(), &((&eg - &eye) * &dg))?;
        let cq = numkernel::solve_vec(self.model.t(), &((&eq - &eye) * &dq))?;
        let absorb = self.absorption.column(jj).into_owned();
        Ok(SubDistribution {
            cdf: self.row_weighted(w, s, &cg, &cq),
            density: self.row_weighted(w, s, &(&eg * &dg), &(&eq * &dq)),
            survivor: self.row_weighted(w, s, &(&eg * &absorb), &(&eq * &absorb)),
        })
    }

    /// `(F_i(t, s), f_i(t, s))` for exit by any cause.
    pub fn overall_survival(&self, info: &InformationState, s: f64) -> Result<(f64, f64)> {
        let nu = self.elapsed(info, s)?;
        if self.absorbed_cause(info).is_some() {
            return Ok((0.0, 0.0));
        }
        let w = info.selector(self.m());
        let ones = Vector::from_element(self.m(), 1.0);
        let dg = self.model.psi_d() * Vector::from_element(self.p(), 1.0);
        let dq = self.model.d() * Vector::from_element(self.p(), 1.0);
        let b = self.model.branches(nu)?;
        Ok((
            b.combine(&w, &info.smt, BranchVectors::same(&ones)).get(),
            b.combine(&w, &info.smt, BranchVectors::new(&dg, &dq)).get(),
        ))
    }

    /// `lambda_ij(t, s) = f_ij(t, s) / F_i(t, s)`.
    pub fn cause_forward_intensity(&self, info: &InformationState, j: CauseLabel, s: f64) -> Result<f64> {
        let nu = self.elapsed(info, s)?;
        let jj = self.check_cause(j)?;
        if self.absorbed_cause(info).is_some() {
            return Err(Error::OutOfSupport);
        }
        let w = info.selector(self.m());
        self.intensity_from(&w, &info.smt, jj, nu)
    }

    fn intensity_from(&self, w: &Vector, s: &Vector, jj: usize, nu: f64) -> Result<f64> {
        let ones = Vector::from_element(self.m(), 1.0);
        let dg = self.psi_d_col(jj);
        let dq = self.d_col(jj);
        let b = self.model.branches(nu)?;
        let num = b.combine(w, s, BranchVectors::new(&dg, &dq));
        let den = b.combine(w, s, BranchVectors::same(&ones));
        Ok(num.ratio(den)?.max(0.0))
    }

    /// `lambda_ij(t) = e_i^T (I + S(t)(Psi - I)) D e_j`.
    pub fn cause_instantaneous_intensity(&self, info: &InformationState, j: CauseLabel) -> Result<f64> {
        info.check(&self.model)?;
        self.model.check_transient(info.state)?;
        let jj = self.check_cause(j)?;
        let i = info.state;
        let psi = self.model.speed().diagonal()[i];
        Ok(self.model.d()[(i, jj)] * (1.0 + info.smt[i] * (psi - 1.0)))
    }

    /// Instantaneous cause intensity with `s_i` at its long-run limit.
    pub fn longrun_cause_instantaneous(&self, i: usize, j: CauseLabel) -> Result<f64> {
        self.model.check_transient(i)?;
        let jj = self.check_cause(j)?;
        let s = mixture::posterior_limit(&self.model, i)?;
        let psi = self.model.speed().diagonal()[i];
        Ok(self.model.d()[(i, jj)] * (1.0 + s * (psi - 1.0)))
    }

    /// `lim_{s -> infinity} lambda_ij(t, s)`.
    pub fn longrun_cause_intensity(&self, info: &InformationState, j: CauseLabel) -> Result<f64> {
        info.check(&self.model)?;
        self.model.check_transient(info.state)?;
        let jj = self.check_cause(j)?;
        if !numkernel::eigen(self.model.t())?.distinct || !numkernel::eigen(self.model.psi_t())?.distinct {
            return Err(Error::UnsupportedSpectrum(
                "long-run limits need distinct eigenvalues of T and Psi T",
            ));
        }
        let w = info.selector(self.m());
        let ones = Vector::from_element(self.m(), 1.0);
        let dg = self.psi_d_col(jj);
        let dq = self.d_col(jj);
        self.model.longrun_ratio(
            &w,
            &info.smt,
            BranchVectors::new(&dg, &dq),
            BranchVectors::same(&ones),
        )
    }

    /// `p_ij = -e_i^T T^{-1} D e_j`, identical in both regimes.
    pub fn ultimate_absorption(&self, info: &InformationState, j: CauseLabel) -> Result<f64> {
        info.check(&self.model)?;
        let jj = self.check_cause(j)?;
        if let Some(k) = self.absorbed_cause(info) {
            return Ok(if k == jj { 1.0 } else { 0.0 });
        }
        self.model.speed().require_nonsingular("ultimate absorption probabilities")?;
        Ok(self.absorption[(info.state, jj)])
    }

    /// `p_j = -pi^T T^{-1} D e_j`.
    pub fn ultimate_absorption_from_pi(&self, j: CauseLabel) -> Result<f64> {
        let jj = self.check_cause(j)?;
        self.model.speed().require_nonsingular("ultimate absorption probabilities")?;
        Ok(self.model.pi().dot(&self.absorption.column(jj)))
    }

    /// `(F_ij / p_ij, Fbar_ij / F_i)`.
    pub fn conditional_on_cause(&self, info: &InformationState, j: CauseLabel, s: f64) -> Result<(f64, f64)> {
        let nu = self.elapsed(info, s)?;
        let jj = self.check_cause(j)?;
        let p = self.ultimate_absorption(info, j)?;
        if p <= 0.0 {
            return Err(Error::ZeroCauseProbability(j.get()));
        }
        if self.absorbed_cause(info).is_some() {
            return Err(Error::OutOfSupport);
        }
        let sub = self.sub_distribution(info, j, s)?;
        let w = info.selector(self.m());
        let prob = self.survivor_share(&w, &info.smt, jj, nu)?;
        Ok((sub.cdf / p, prob))
    }

    /// `Fbar_ij / F_i` on a common scale, so it stays finite far in the tail.
    fn survivor_share(&self, w: &Vector, s: &Vector, jj: usize, nu: f64) -> Result<f64> {
        let ones = Vector::from_element(self.m(), 1.0);
        let absorb = self.absorption.column(jj).into_owned();
        let b = self.model.branches(nu)?;
        let num = b.combine(w, s, BranchVectors::same(&absorb));
        let den = b.combine(w, s, BranchVectors::same(&ones));
        num.ratio(den)
    }

    /// Cause-specific quantities with `pi` in place of `e_i` and `s0` in
    /// place of `S(t)`.
    pub fn unconditional_family(&self, j: CauseLabel, t: f64) -> Result<UnconditionalFamily> {
        let jj = self.check_cause(j)?;
        numkernel::ensure_time(t)?;
        let pi = self.model.pi();
        let s0 = self.model.s0();
        let sub = self.sub_distribution_from(pi, s0, jj, t)?;
        let pj = self.ultimate_absorption_from_pi(j)?;
        if pj <= 0.0 {
            return Err(Error::ZeroCauseProbability(j.get()));
        }
        Ok(UnconditionalFamily {
            cdf: sub.cdf,
            density: sub.density,
            survivor: sub.survivor,
            intensity: self.intensity_from(pi, s0, jj, t)?,
            conditional_cdf: sub.cdf / pj,
            conditional_prob: self.survivor_share(pi, s0, jj, t)?,
        })
    }

    /// `R_ij(t) = e_i^T (S(t)(Psi T)^{-1} + (I - S(t)) T^{-1}) T^{-1} D e_j`.
    pub fn cause_residual_lifetime(&self, info: &InformationState, j: CauseLabel) -> Result<f64> {
        info.check(&self.model)?;
        let jj = self.check_cause(j)?;
        if self.absorbed_cause(info).is_some() {
            return Ok(0.0);
        }
        self.model.speed().require_nonsingular("cause-specific residual lifetimes")?;
        let x = -self.absorption.column(jj).into_owned();
        let xg = numkernel::solve_vec(self.model.psi_t(), &x)?;
        let xq = numkernel::solve_vec(self.model.t(), &x)?;
        let i = info.state;
        let s = info.smt[i];
        Ok(s * xg[i] + (1.0 - s) * xq[i])
    }

    /// `exp(-int_t^s lambda_ij(t, u) du)`. Not a probability; exposed to
    /// tests only.
    #[cfg(test)]
    fn cumulative_cause_factor(&self, info: &InformationState, j: CauseLabel, s: f64) -> Result<f64> {
        let integral = numkernel::integrate(
            |u| self.cause_forward_intensity(info, j, u).unwrap_or(f64::NAN),
            info.age,
            s,
            1e-11,
        )?;
        Ok((-integral).exp())
    }
}
