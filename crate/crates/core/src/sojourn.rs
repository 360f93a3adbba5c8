//! Expected residual lifetime and expected time spent in a state,
//! conditional on past information.

use crate::error::{Error, Result};
use crate::mixture::{InformationState, MixtureModel};
use crate::numkernel::{self, Matrix, Vector};

/// Expected time spent in `target` over `[info.age, to]`. `to` may be
/// infinite for transient targets.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationQuery {
    pub info: InformationState,
    pub target: usize,
    pub to: f64,
}

impl OccupationQuery {
    pub fn new(info: InformationState, target: usize, to: f64) -> Result<Self> {
        if to.is_nan() || to < info.age {
            return Err(Error::HorizonBeforeAge { age: info.age, horizon: to });
        }
        Ok(Self { info, target, to })
    }

    pub fn from(&self) -> f64 {
        self.info.age
    }
}

/// `R_i(t) = -e_i^T (S(t)(Psi T)^{-1} + (I - S(t)) T^{-1}) 1`; zero once absorbed.
pub fn residual_lifetime<M: AsRef<MixtureModel>>(model: &M, info: &InformationState) -> Result<f64> {
    let model = model.as_ref();
    info.check(model)?;
    if info.is_absorbed(model) {
        return Ok(0.0);
    }
    model.speed().require_nonsingular("the residual lifetime")?;
    let m = model.m();
    let ones = Vector::from_element(m, 1.0);
    let xg = numkernel::solve_vec(model.psi_t(), &ones)?;
    let xq = numkernel::solve_vec(model.t(), &ones)?;
    let i = info.state;
    let s = info.smt[i];
    Ok(-(s * xg[i] + (1.0 - s) * xq[i]))
}

/// `int_t^s P(t, u)[i, j] du` in closed form.
///
/// Transient to transient uses `A^{-1}(e^{A nu} - I)` per regime; transient
/// to absorbing uses `A^{-1}[A^{-1}(e^{A nu} - I) - nu I] B e_j` with
/// `(A, B)` equal to `(Psi T, Psi D)` or `(T, D)`. An absorbing start gives
/// `s - t` for itself and 0 elsewhere.
pub fn expected_occupation<M: AsRef<MixtureModel>>(model: &M, q: &OccupationQuery) -> Result<f64> {
    let model = model.as_ref();
    let info = &q.info;
    info.check(model)?;
    model.check_state(q.target)?;
    let m = model.m();
    let i = info.state;
    let j = q.target;
    let nu = q.to - info.age;
    if i >= m {
        return Ok(if i == j { nu } else { 0.0 });
    }
    model.speed().require_nonsingular("expected occupation times")?;
    let s = info.smt[i];
    let branch = |a: &Matrix, b: &Matrix| -> Result<f64> {
        let inv = numkernel::inverse(a)?;
        if nu.is_infinite() {
            if j >= m {
                return Err(Error::Parameter(
                    "infinite-horizon occupation of an absorbing state diverges".into(),
                ));
            }
            return Ok(-inv[(i, j)]);
        }
        let e = numkernel::expm(a, nu)?;
        let first = &inv * (e - Matrix::identity(m, m));
        if j < m {
            Ok(first[(i, j)])
        } else {
            let inner = &inv * (first - Matrix::identity(m, m) * nu);
            Ok((inner.row(i) * b.column(j - m))[(0, 0)])
        }
    };
    let g = if s > 0.0 { branch(model.psi_t(), model.psi_d())? } else { 0.0 };
    let qv = if s < 1.0 { branch(model.t(), model.d())? } else { 0.0 };
    Ok(s * g + (1.0 - s) * qv)
}
