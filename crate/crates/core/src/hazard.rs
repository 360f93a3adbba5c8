//! Forward, instantaneous and baseline intensities of absorption, their
//! long-run limits, and survival rebuilt from an intensity.

use std::cell::RefCell;

use crate::curve::CurveGrid;
use crate::error::{Error, Result};
use crate::gph::GphDistribution;
use crate::mixture::{self, BranchVectors, InformationState};
use crate::numkernel::{self, Vector};

/// Absolute tolerance of the intensity integral in [`survival_from_intensity`].
pub const INTENSITY_QUAD_TOL: f64 = 1e-10;

/// `lambda_i(t, s) = f_i(t, s) / F_i(t, s)`: hazard at `s` given the
/// information held at age `t`.
pub fn forward_intensity(dist: &GphDistribution, info: &InformationState, s: f64) -> Result<f64> {
    info.check(dist.model())?;
    if s < info.age {
        return Err(Error::HorizonBeforeAge {
            age: info.age,
            horizon: s,
        });
    }
    if info.is_absorbed(dist.model()) {
        return Err(Error::OutOfSupport);
    }
    let w = info.selector(dist.m());
    ratio(dist, &w, &info.smt, s - info.age)
}

/// Forward intensity parameterized by duration `d = s - t`.
pub fn forward_intensity_at_duration(dist: &GphDistribution, info: &InformationState, d: f64) -> Result<f64> {
    forward_intensity(dist, info, info.age + d)
}

fn ratio(dist: &GphDistribution, w: &Vector, s: &Vector, nu: f64) -> Result<f64> {
    let model = dist.model();
    let psi_delta = model.speed().diagonal().component_mul(dist.delta());
    let ones = Vector::from_element(dist.m(), 1.0);
    let b = model.branches(nu)?;
    let num = b.combine(w, s, BranchVectors::new(&psi_delta, dist.delta()));
    let den = b.combine(w, s, BranchVectors::same(&ones));
    Ok(num.ratio(den)?.max(0.0))
}

/// `lambda_i(t) = e_i^T (I + S(t)(Psi - I)) delta`.
pub fn instantaneous_intensity(dist: &GphDistribution, info: &InformationState) -> Result<f64> {
    info.check(dist.model())?;
    dist.model().check_transient(info.state)?;
    let i = info.state;
    let psi = dist.model().speed().diagonal()[i];
    Ok(dist.delta()[i] * (1.0 + info.smt[i] * (psi - 1.0)))
}

/// `alpha(t) = f(t) / F(t)`, the unconditional hazard.
pub fn baseline_intensity(dist: &GphDistribution, t: f64) -> Result<f64> {
    let model = dist.model();
    ratio(dist, model.pi(), model.s0(), t)
}

/// `(exp(-int_t^s lambda_i(t, u) du), lambda_i(t, s) exp(...))` with the
/// integral evaluated by adaptive quadrature.
pub fn survival_from_intensity(dist: &GphDistribution, info: &InformationState, s: f64) -> Result<(f64, f64)> {
    let rate = forward_intensity(dist, info, s)?;
    let failure = RefCell::new(None);
    let integral = numkernel::integrate(
        |u| match forward_intensity(dist, info, u) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        info.age,
        s,
        INTENSITY_QUAD_TOL,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let survival = (-integral).exp();
    Ok((survival, rate * survival))
}

/// `lim_{s -> infinity} lambda_i(t, s)` from the dominant Lagrange
/// coefficients of `T` and `Psi T`.
pub fn longrun_forward_intensity(dist: &GphDistribution, info: &InformationState) -> Result<f64> {
    info.check(dist.model())?;
    dist.model().check_transient(info.state)?;
    let w = info.selector(dist.m());
    longrun(dist, &w, &info.smt)
}

fn longrun(dist: &GphDistribution, w: &Vector, s: &Vector) -> Result<f64> {
    let model = dist.model();
    require_distinct(dist)?;
    let psi_delta = model.speed().diagonal().component_mul(dist.delta());
    let ones = Vector::from_element(dist.m(), 1.0);
    model.longrun_ratio(
        w,
        s,
        BranchVectors::new(&psi_delta, dist.delta()),
        BranchVectors::same(&ones),
    )
}

fn require_distinct(dist: &GphDistribution) -> Result<()> {
    let model = dist.model();
    if !numkernel::eigen(model.t())?.distinct || !numkernel::eigen(model.psi_t())?.distinct {
        return Err(Error::UnsupportedSpectrum(
            "long-run limits need distinct eigenvalues of T and Psi T",
        ));
    }
    Ok(())
}

/// `e_i^T (I + S(inf)(Psi - I)) delta` with `s_i(inf)` from
/// [`mixture::posterior_limit`].
pub fn longrun_instantaneous(dist: &GphDistribution, i: usize) -> Result<f64> {
    dist.model().check_transient(i)?;
    let s = mixture::posterior_limit(dist.model(), i)?;
    let psi = dist.model().speed().diagonal()[i];
    Ok(dist.delta()[i] * (1.0 + s * (psi - 1.0)))
}

/// `lim_{t -> infinity} alpha(t)`.
pub fn longrun_baseline(dist: &GphDistribution) -> Result<f64> {
    let model = dist.model();
    longrun(dist, model.pi(), model.s0())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntensityKind {
    Forward,
    Instantaneous,
    Baseline,
}

/// Sampled intensity with the information it was conditioned on.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityCurve {
    pub kind: IntensityKind,
    pub anchor: Option<InformationState>,
    pub samples: CurveGrid,
}

impl IntensityCurve {
    /// Forward intensity against duration `s - t` from a fixed anchor.
    pub fn forward(dist: &GphDistribution, info: &InformationState, durations: &[f64]) -> Result<Self> {
        let mut samples = CurveGrid::new(["duration", "intensity"])?;
        for &d in durations {
            samples.push(vec![d, forward_intensity_at_duration(dist, info, d)?])?;
        }
        Ok(Self {
            kind: IntensityKind::Forward,
            anchor: Some(info.clone()),
            samples,
        })
    }

    /// Instantaneous intensity against age, with the posterior of state
    /// `i` recomputed at every age from current-state information.
    pub fn instantaneous(dist: &GphDistribution, i: usize, ages: &[f64]) -> Result<Self> {
        let mut samples = CurveGrid::new(["t", "intensity"])?;
        for &t in ages {
            let info = mixture::posterior_current(dist.model(), i, t)?;
            samples.push(vec![t, instantaneous_intensity(dist, &info)?])?;
        }
        Ok(Self {
            kind: IntensityKind::Instantaneous,
            anchor: None,
            samples,
        })
    }

    pub fn baseline(dist: &GphDistribution, ages: &[f64]) -> Result<Self> {
        let mut samples = CurveGrid::new(["t", "intensity"])?;
        for &t in ages {
            samples.push(vec![t, baseline_intensity(dist, t)?])?;
        }
        Ok(Self {
            kind: IntensityKind::Baseline,
            anchor: None,
            samples,
        })
    }
}
