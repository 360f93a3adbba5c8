//! The marriage/divorce model: states never married (N), married (M),
//! separated (S) and widowed (W), absorbed by divorce (D).
//!
//! In the competing variant widowhood is no longer left, so W becomes a
//! second cause of exit next to D.

use crate::competing::CompetingModel;
use crate::error::Result;
use crate::gph::GphDistribution;
use crate::mixture::MixtureModel;
use crate::numkernel::Matrix;

pub const LABELS: [&str; 4] = ["N", "M", "S", "W"];
pub const COMPETING_LABELS: [&str; 3] = ["N", "M", "S"];
/// Causes of the competing variant, in order.
pub const CAUSES: [&str; 2] = ["W", "D"];

/// 0-based index of the married state in both variants.
pub const MARRIED: usize = 1;
/// 1-based cause label of divorce in the competing variant.
pub const DIVORCE_CAUSE: usize = 2;

pub const HETEROGENEOUS_PSI: f64 = 0.25;
pub const HOMOGENEOUS_PSI: f64 = 1.0;
pub const MIXING: f64 = 0.5;
/// Anchor ages for the curve bundles.
pub const ANCHORS: [f64; 3] = [0.01, 4.0, 10.0];

pub const PI: [f64; 4] = [0.5, 0.3, 0.1, 0.1];

const Q12: f64 = 0.95;
const Q23: f64 = 0.25;
const Q24: f64 = 0.05;
const Q25: f64 = 0.07;
const Q34: f64 = 0.1;
const Q35: f64 = 0.5;
const Q42: f64 = 0.85;

pub fn sub_intensity() -> Matrix {
    Matrix::from_row_slice(
        4,
        4,
        &[
            -Q12, Q12, 0.0, 0.0, //
            0.0, -(Q23 + Q24 + Q25), Q23, Q24, //
            0.0, 0.0, -(Q34 + Q35), Q34, //
            0.0, Q42, 0.0, -Q42,
        ],
    )
}

/// Single-cause model with speed `psi` in every state.
pub fn marriage(psi: f64) -> Result<GphDistribution> {
    marriage_with_pi(psi, PI.to_vec())
}

pub fn marriage_with_pi(psi: f64, pi: Vec<f64>) -> Result<GphDistribution> {
    GphDistribution::new(pi, &sub_intensity(), vec![psi; 4], vec![MIXING; 4])
}

/// Initial law of the competing variant: the single-cause law without W,
/// renormalized.
pub fn competing_pi() -> Vec<f64> {
    let mass: f64 = PI[..3].iter().sum();
    PI[..3].iter().map(|p| p / mass).collect()
}

/// Competing variant with causes `(W, D)`.
pub fn competing(psi: f64) -> Result<CompetingModel> {
    competing_with_pi(psi, competing_pi())
}

pub fn competing_with_pi(psi: f64, pi: Vec<f64>) -> Result<CompetingModel> {
    let full = sub_intensity();
    let t = full.view((0, 0), (3, 3)).into_owned();
    let d = Matrix::from_row_slice(3, 2, &[0.0, 0.0, Q24, Q25, Q34, Q35]);
    CompetingModel::new(MixtureModel::from_parts(&t, &d, vec![psi; 3], pi, vec![MIXING; 3])?)
}
