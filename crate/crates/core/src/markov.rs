//! Absorbing continuous-time Markov chains: validated generators,
//! transition matrices and the classical phase-type law.

use crate::error::{Error, Result};
use crate::numkernel::{self, ensure_finite, ensure_square, ensure_time, Matrix, Vector};

/// Row-sum residual accepted by [`validate_generator`].
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Transient-to-transient block `T` of a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SubIntensity {
    t: Matrix,
}

impl SubIntensity {
    pub fn matrix(&self) -> &Matrix {
        &self.t
    }

    pub fn m(&self) -> usize {
        self.t.nrows()
    }
}

/// Transient-to-absorbing block `D` (`m x p`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExitMatrix {
    d: Matrix,
}

impl ExitMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.d
    }

    pub fn p(&self) -> usize {
        self.d.ncols()
    }

    /// `D 1`, the total exit rate from each transient state.
    pub fn total(&self) -> Vector {
        row_sums(&self.d)
    }
}

/// A validated generator `Q = [[T, D], [0, 0]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    sub: SubIntensity,
    exit: ExitMatrix,
}

impl Generator {
    pub fn sub(&self) -> &SubIntensity {
        &self.sub
    }

    pub fn exit(&self) -> &ExitMatrix {
        &self.exit
    }

    pub fn t(&self) -> &Matrix {
        &self.sub.t
    }

    pub fn d(&self) -> &Matrix {
        &self.exit.d
    }

    /// Number of transient states.
    pub fn m(&self) -> usize {
        self.sub.m()
    }

    /// Number of absorbing states.
    pub fn p(&self) -> usize {
        self.exit.p()
    }

    /// The assembled `(m+p) x (m+p)` generator.
    pub fn q(&self) -> Matrix {
        assemble(self.t(), self.d())
    }

    /// Exit vector `delta = D 1`; equals `-T 1`.
    pub fn exit_vector(&self) -> Vector {
        self.exit.total()
    }
}

pub(crate) fn row_sums(a: &Matrix) -> Vector {
    Vector::from_iterator(a.nrows(), a.row_iter().map(|r| r.sum()))
}

/// Block matrix `[[T, D], [0, 0]]`.
pub(crate) fn assemble(t: &Matrix, d: &Matrix) -> Matrix {
    let m = t.nrows();
    let p = d.ncols();
    let mut q = Matrix::zeros(m + p, m + p);
    q.view_mut((0, 0), (m, m)).copy_from(t);
    q.view_mut((0, m), (m, p)).copy_from(d);
    q
}

/// Validates sign pattern, row sums and nonsingularity of `T`.
pub fn validate_generator(t: &Matrix, d: &Matrix) -> Result<Generator> {
    validate_generator_with(t, d, false)
}

/// Like [`validate_generator`]; with `repair` the diagonal of `T` is
/// reset to minus the sum of the other rates in its row before checking.
pub fn validate_generator_with(t: &Matrix, d: &Matrix, repair: bool) -> Result<Generator> {
    let mut t = t.clone();
    if repair {
        let m = t.nrows().min(t.ncols());
        for i in 0..m {
            let off: f64 = (0..t.ncols()).filter(|&j| j != i).map(|j| t[(i, j)]).sum();
            let exit: f64 = if d.nrows() > i { d.row(i).sum() } else { 0.0 };
            t[(i, i)] = -(off + exit);
        }
    }
    check_structure(&t, d)?;
    let eig = numkernel::eigen(&t)?;
    if !eig.is_stable() {
        return Err(Error::SingularSubIntensity);
    }
    match numkernel::inverse(&t) {
        Ok(_) => {}
        Err(Error::Singular { .. }) => return Err(Error::SingularSubIntensity),
        Err(e) => return Err(e),
    }
    Ok(Generator {
        sub: SubIntensity { t },
        exit: ExitMatrix { d: d.clone() },
    })
}

/// Sign pattern and row-sum checks without the nonsingularity test.
pub(crate) fn check_structure(t: &Matrix, d: &Matrix) -> Result<()> {
    let m = ensure_square(t)?;
    if m == 0 {
        return Err(Error::Empty("sub-intensity matrix"));
    }
    if d.nrows() != m {
        return Err(Error::Dimension(format!(
            "D has {} rows, T has {m}",
            d.nrows()
        )));
    }
    if d.ncols() == 0 {
        return Err(Error::Dimension("D needs at least one absorbing column".into()));
    }
    ensure_finite(t, "T")?;
    ensure_finite(d, "D")?;
    for i in 0..m {
        for j in 0..m {
            let v = t[(i, j)];
            if (i == j && v > 0.0) || (i != j && v < 0.0) {
                return Err(Error::Sign {
                    matrix: "T",
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
        for j in 0..d.ncols() {
            if d[(i, j)] < 0.0 {
                return Err(Error::Sign {
                    matrix: "D",
                    row: i,
                    col: j,
                    value: d[(i, j)],
                });
            }
        }
        let residual = t.row(i).sum() + d.row(i).sum();
        let scale = t[(i, i)].abs().max(1.0);
        if residual.abs() > ROW_SUM_TOL * scale {
            return Err(Error::RowSum { row: i, residual });
        }
    }
    Ok(())
}

/// `P(t) = exp(Q t)`.
pub fn transition_matrix(g: &Generator, t: f64) -> Result<Matrix> {
    numkernel::expm(&g.q(), t)
}

/// `(exp(T t), T^{-1}(exp(T t) - I) D)`, the top blocks of `P(t)`.
pub fn block_exponential(g: &Generator, t: f64) -> Result<(Matrix, Matrix)> {
    ensure_time(t)?;
    let m = g.m();
    let et = numkernel::expm(g.t(), t)?;
    let diff = &et - Matrix::identity(m, m);
    let f12 = numkernel::solve(g.t(), &(diff * g.d()))?;
    Ok((et, f12))
}

fn check_initial_law(pi: &Vector, m: usize) -> Result<()> {
    if pi.len() != m {
        return Err(Error::InitialLaw(format!(
            "length {} does not match {m} transient states",
            pi.len()
        )));
    }
    if pi.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InitialLaw("entries must be finite and nonnegative".into()));
    }
    if pi.sum() > 1.0 + 1e-12 {
        return Err(Error::InitialLaw(format!("mass {} exceeds 1", pi.sum())));
    }
    Ok(())
}

pub(crate) fn validate_initial_law(pi: &Vector, m: usize) -> Result<()> {
    check_initial_law(pi, m)
}

/// `pi^T exp(T t) 1`.
pub fn classical_ph_survival(pi: &Vector, g: &Generator, t: f64) -> Result<f64> {
    check_initial_law(pi, g.m())?;
    let et = numkernel::expm(g.t(), t)?;
    Ok((pi.transpose() * et).sum())
}

/// `pi^T exp(T t) delta`; single absorbing state only.
pub fn classical_ph_density(pi: &Vector, g: &Generator, t: f64) -> Result<f64> {
    if g.p() != 1 {
        return Err(Error::NotSingleAbsorbing(g.p()));
    }
    check_initial_law(pi, g.m())?;
    let et = numkernel::expm(g.t(), t)?;
    Ok((pi.transpose() * et * g.exit_vector())[(0, 0)])
}
