//! Dense small-matrix numerics shared by every model layer.
//!
//! Matrices are `nalgebra` dynamic matrices. The kernel owns the matrix
//! exponential (scaling and squaring with diagonal Padé approximants), a
//! conditioned linear solve, the complex spectrum of a real matrix, the
//! Lagrange interpolation coefficients `L_p(A)` built from that spectrum,
//! and adaptive Simpson quadrature.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type Complex64 = Complex<f64>;

/// Relative separation below which two eigenvalues count as repeated.
pub const DISTINCT_TOL: f64 = 1e-8;
/// Largest imaginary residue tolerated when a real quantity is assembled
/// from complex spectral data.
pub const IMAG_RESIDUE_TOL: f64 = 1e-8;
/// Condition-number ceiling for [`solve`].
pub const MAX_CONDITION: f64 = 1e14;
/// Default absolute tolerance for [`integrate`].
pub const DEFAULT_QUAD_TOL: f64 = 1e-9;

const MAX_QUAD_DEPTH: u32 = 50;
const MIN_QUAD_DEPTH: u32 = 4;

pub(crate) fn ensure_square(a: &Matrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

pub(crate) fn ensure_finite(a: &Matrix, what: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::NegativeTime(t))
    }
}

fn one_norm(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(A t)` by scaling and squaring with Padé approximants of degree
/// 3, 5, 7, 9 or 13 (Higham 2005 thresholds). Exact identity at `t = 0`.
pub fn expm(a: &Matrix, t: f64) -> Result<Matrix> {
    let n = ensure_square(a)?;
    ensure_finite(a, "expm input")?;
    ensure_time(t)?;
    if t == 0.0 || n == 0 {
        return Ok(Matrix::identity(n, n));
    }
    let at = a * t;
    let norm = one_norm(&at);
    if norm == 0.0 {
        return Ok(Matrix::identity(n, n));
    }

    const THETA: [(f64, usize); 4] = [
        (1.495585217958292e-2, 3),
        (2.539398330063230e-1, 5),
        (9.504178996162932e-1, 7),
        (2.097847961257068, 9),
    ];
    for (theta, degree) in THETA {
        if norm < theta {
            return pade_quotient(&at, degree, 0);
        }
    }
    const THETA_13: f64 = 5.371920351148152;
    let squarings = ((norm / THETA_13).log2().ceil()).max(0.0) as i32;
    let scaled = &at * 2f64.powi(-squarings);
    pade_quotient(&scaled, 13, squarings as u32)
}

fn pade_coefficients(degree: usize) -> &'static [f64] {
    match degree {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[
            17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
        ],
        9 => &[
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
        ],
        _ => &[
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
        ],
    }
}

fn pade_quotient(a: &Matrix, degree: usize, squarings: u32) -> Result<Matrix> {
    let n = a.nrows();
    let b = pade_coefficients(degree);
    let ident = Matrix::identity(n, n);
    let a2 = a * a;
    let (u, v) = if degree == 13 {
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
            + &a6 * b[7]
            + &a4 * b[5]
            + &a2 * b[3]
            + &ident * b[1];
        let u = a * u_inner;
        let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
            + &a6 * b[6]
            + &a4 * b[4]
            + &a2 * b[2]
            + &ident * b[0];
        (u, v)
    } else {
        let mut power = ident.clone();
        let mut u_inner = Matrix::zeros(n, n);
        let mut v = Matrix::zeros(n, n);
        for k in 0..=degree / 2 {
            v += &power * b[2 * k];
            u_inner += &power * b[2 * k + 1];
            power = &power * &a2;
        }
        (a * u_inner, v)
    };
    let numer = &v + &u;
    let denom = v - u;
    let mut result = denom
        .lu()
        .solve(&numer)
        .ok_or(Error::Singular { condition: f64::INFINITY })?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Truncated Taylor series of `exp(A t)`, summed until terms drop below
/// `1e-17` relative to the running sum. Slow; a reference for tests.
pub fn expm_series(a: &Matrix, t: f64) -> Result<Matrix> {
    let n = ensure_square(a)?;
    ensure_time(t)?;
    // split the horizon so every series stays well conditioned
    let at = a * t;
    let steps = one_norm(&at).ceil().max(1.0) as u32;
    let h = &at / steps as f64;
    let mut sum = Matrix::identity(n, n);
    let mut term = Matrix::identity(n, n);
    for k in 1..200 {
        term = &term * &h / k as f64;
        sum += &term;
        if one_norm(&term) <= 1e-17 * one_norm(&sum) {
            break;
        }
    }
    let mut result = Matrix::identity(n, n);
    for _ in 0..steps {
        result = &result * &sum;
    }
    Ok(result)
}

/// Solves `A X = B`. Rejects matrices whose 1-norm condition number
/// exceeds [`MAX_CONDITION`].
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = ensure_square(a)?;
    if b.nrows() != n {
        return Err(Error::Dimension(format!(
            "solve: A is {n}x{n}, B has {} rows",
            b.nrows()
        )));
    }
    let inv = inverse(a)?;
    Ok(inv * b)
}

/// Solves `A x = b` for a single right-hand side.
pub fn solve_vec(a: &Matrix, b: &Vector) -> Result<Vector> {
    let x = solve(a, &Matrix::from_column_slice(b.len(), 1, b.as_slice()))?;
    Ok(x.column(0).into_owned())
}

/// Inverse with the same conditioning check as [`solve`].
pub fn inverse(a: &Matrix) -> Result<Matrix> {
    let n = ensure_square(a)?;
    ensure_finite(a, "linear system")?;
    let lu = a.clone().lu();
    let inv = lu
        .try_inverse()
        .ok_or(Error::Singular { condition: f64::INFINITY })?;
    let condition = one_norm(a) * one_norm(&inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Singular { condition });
    }
    debug_assert_eq!(inv.nrows(), n);
    Ok(inv)
}

/// Spectrum of a real square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    /// Sorted by descending real part, then descending imaginary part.
    pub eigenvalues: Vec<Complex64>,
    /// Pairwise separation exceeds `DISTINCT_TOL * max(1, |a|, |b|)`.
    pub distinct: bool,
}

impl EigenSystem {
    /// Index and value of the eigenvalue with the largest real part.
    pub fn dominant(&self) -> (usize, Complex64) {
        (0, self.eigenvalues[0])
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// True when every eigenvalue has strictly negative real part.
    pub fn is_stable(&self) -> bool {
        self.eigenvalues.iter().all(|z| z.re < 0.0)
    }
}

/// Eigenvalues via a real Schur decomposition.
pub fn eigen(a: &Matrix) -> Result<EigenSystem> {
    ensure_square(a)?;
    ensure_finite(a, "eigen input")?;
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::EigenFailure)?;
    let mut eigenvalues: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|x, y| {
        y.re.partial_cmp(&x.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y.im.partial_cmp(&x.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    let distinct = all_distinct(&eigenvalues);
    Ok(EigenSystem {
        eigenvalues,
        distinct,
    })
}

fn all_distinct(values: &[Complex64]) -> bool {
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            let scale = 1f64.max(a.norm()).max(b.norm());
            if (a - b).norm() <= DISTINCT_TOL * scale {
                return false;
            }
        }
    }
    true
}

/// `L_p(A) = prod_{j != p} (A - phi_j I) / (phi_p - phi_j)` in complex
/// arithmetic.
pub fn lagrange_coefficient_complex(
    a: &Matrix,
    eig: &EigenSystem,
    p: usize,
) -> Result<DMatrix<Complex64>> {
    let n = ensure_square(a)?;
    if eig.len() != n {
        return Err(Error::Dimension(format!(
            "eigensystem has {} values for a {n}x{n} matrix",
            eig.len()
        )));
    }
    if p >= n {
        return Err(Error::Parameter(format!(
            "eigenvalue index {p} out of range for {n} eigenvalues"
        )));
    }
    if !eig.distinct {
        return Err(Error::UnsupportedSpectrum(
            "Lagrange coefficients need distinct eigenvalues",
        ));
    }
    let ac: DMatrix<Complex64> = a.map(|v| Complex64::new(v, 0.0));
    let ident = DMatrix::<Complex64>::identity(n, n);
    let phi_p = eig.eigenvalues[p];
    let mut acc = ident.clone();
    for (j, phi_j) in eig.eigenvalues.iter().enumerate() {
        if j == p {
            continue;
        }
        let factor = (&ac - &ident * *phi_j) / (phi_p - phi_j);
        acc *= factor;
    }
    Ok(acc)
}

/// Real Lagrange coefficient. Fails when the projector is genuinely
/// complex (a non-real eigenvalue) beyond [`IMAG_RESIDUE_TOL`].
pub fn lagrange_coefficient(a: &Matrix, eig: &EigenSystem, p: usize) -> Result<Matrix> {
    let c = lagrange_coefficient_complex(a, eig, p)?;
    real_part_checked(&c)
}

pub(crate) fn real_part_checked(c: &DMatrix<Complex64>) -> Result<Matrix> {
    let scale = c.iter().map(|z| z.re.abs()).fold(1.0, f64::max);
    let residue = c.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if residue > IMAG_RESIDUE_TOL * scale {
        return Err(Error::ComplexResidue(residue));
    }
    Ok(c.map(|z| z.re))
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::Parameter(format!("bad interval [{a}, {b}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut state = Quad {
        error: 0.0,
        failed: false,
        non_finite: false,
    };
    let fa = state.eval(&mut f, a);
    let fb = state.eval(&mut f, b);
    let m = 0.5 * (a + b);
    let fm = state.eval(&mut f, m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let value = state.recurse(&mut f, a, b, fa, fm, fb, whole, tol, 0);
    if state.non_finite {
        return Err(Error::NonFinite("integrand"));
    }
    if state.failed {
        return Err(Error::Accuracy {
            estimate: value,
            error: state.error,
            tol,
        });
    }
    Ok(value)
}

struct Quad {
    error: f64,
    failed: bool,
    non_finite: bool,
}

impl Quad {
    fn eval<F: FnMut(f64) -> f64>(&mut self, f: &mut F, x: f64) -> f64 {
        let v = f(x);
        if !v.is_finite() {
            self.non_finite = true;
            return 0.0;
        }
        v
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: FnMut(f64) -> f64>(
        &mut self,
        f: &mut F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.eval(f, lm);
        let frm = self.eval(f, rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if self.non_finite {
            return left + right;
        }
        if depth >= MIN_QUAD_DEPTH && delta.abs() <= 15.0 * tol {
            self.error += delta.abs() / 15.0;
            return left + right + delta / 15.0;
        }
        if depth >= MAX_QUAD_DEPTH || m <= a || m >= b {
            self.failed = true;
            self.error += delta.abs() / 15.0;
            return left + right + delta / 15.0;
        }
        self.recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth + 1)
            + self.recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth + 1)
    }
}

/// Quadrature over `[a, ∞)` for integrands that decay to zero: panels of
/// doubling width are summed until two consecutive panels contribute less
/// than `tol / 100`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, tol: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut start = a;
    let mut width = 1.0;
    let mut quiet = 0;
    for _ in 0..80 {
        let end = start + width;
        let part = integrate(&mut f, start, end, tol / 8.0)?;
        total += part;
        if part.abs() < tol / 100.0 && f(end).abs() * width < tol {
            quiet += 1;
            if quiet >= 2 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
        start = end;
        width *= 2.0;
    }
    Err(Error::Accuracy {
        estimate: total,
        error: f64::NAN,
        tol,
    })
}

/// `x^T M y` without intermediate allocation.
pub(crate) fn bilinear(x: &Vector, m: &Matrix, y: &Vector) -> f64 {
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        if x[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..m.ncols() {
            row += m[(i, j)] * y[j];
        }
        acc += x[i] * row;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tri() -> Matrix {
        Matrix::from_row_slice(2, 2, &[-2.0, 1.0, 0.0, -1.0])
    }

    fn max_diff(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let e = expm(&Matrix::zeros(2, 2), 5.0).unwrap();
        assert_eq!(e, Matrix::identity(2, 2));
    }

    #[test]
    fn expm_identity_at_time_zero() {
        assert_eq!(expm(&tri(), 0.0).unwrap(), Matrix::identity(2, 2));
    }

    #[test]
    fn expm_diagonal() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0]));
        let e = expm(&a, 1.0).unwrap();
        assert_abs_diff_eq!(e[(0, 0)], (-1f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(e[(1, 1)], (-2f64).exp(), epsilon = 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn expm_triangular_closed_form_and_series() {
        let e1 = (-1f64).exp();
        let e2 = (-2f64).exp();
        let want = Matrix::from_row_slice(2, 2, &[e2, e1 - e2, 0.0, e1]);
        let got = expm(&tri(), 1.0).unwrap();
        assert!(max_diff(&got, &want) < 1e-14);
        let series = expm_series(&tri(), 1.0).unwrap();
        assert!(max_diff(&series, &want) < 1e-14);
    }

    #[test]
    fn expm_rejects_bad_input() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(expm(&rect, 1.0), Err(Error::NotSquare { .. })));
        let mut nan = tri();
        nan[(0, 0)] = f64::NAN;
        assert!(matches!(expm(&nan, 1.0), Err(Error::NonFinite(_))));
        assert!(matches!(expm(&tri(), -1.0), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn expm_large_norm_matches_series() {
        let a = Matrix::from_row_slice(
            3,
            3,
            &[-30.0, 20.0, 5.0, 1.0, -4.0, 2.0, 0.5, 0.5, -2.0],
        );
        for t in [0.01, 0.3, 2.0, 7.5] {
            let fast = expm(&a, t).unwrap();
            let slow = expm_series(&a, t).unwrap();
            assert!(max_diff(&fast, &slow) < 1e-12, "t={t}");
        }
    }

    #[test]
    fn solve_examples() {
        let b = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(solve(&Matrix::identity(2, 2), &b).unwrap(), b);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 4.0]));
        let x = solve(&d, &Matrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(x[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(x[(1, 1)], 0.25, epsilon = 1e-15);
        let x = solve_vec(&tri(), &Vector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(x[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            solve(&a, &Matrix::identity(2, 2)),
            Err(Error::Singular { .. })
        ));
        let near = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-16]);
        assert!(solve(&near, &Matrix::identity(2, 2)).is_err());
    }

    #[test]
    fn eigen_examples() {
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![-3.0, -1.0]));
        let e = eigen(&d).unwrap();
        assert_abs_diff_eq!(e.eigenvalues[0].re, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.eigenvalues[1].re, -3.0, epsilon = 1e-14);
        assert!(e.distinct);

        let e = eigen(&tri()).unwrap();
        assert_abs_diff_eq!(e.eigenvalues[0].re, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.eigenvalues[1].re, -2.0, epsilon = 1e-14);

        let jordan = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        let e = eigen(&jordan).unwrap();
        assert!(!e.distinct);
        assert!(matches!(
            lagrange_coefficient(&jordan, &e, 0),
            Err(Error::UnsupportedSpectrum(_))
        ));
    }

    #[test]
    fn lagrange_diagonal_projector() {
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, -3.0]));
        let e = eigen(&d).unwrap();
        let l0 = lagrange_coefficient(&d, &e, 0).unwrap();
        assert!(max_diff(&l0, &Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0]))) < 1e-14);
        let l1 = lagrange_coefficient(&d, &e, 1).unwrap();
        assert!(max_diff(&(l0 + l1), &Matrix::identity(2, 2)) < 1e-14);
    }

    #[test]
    fn spectral_identity_triangular() {
        let a = tri();
        let e = eigen(&a).unwrap();
        let mut sum = Matrix::zeros(2, 2);
        for p in 0..2 {
            sum += lagrange_coefficient(&a, &e, p).unwrap() * e.eigenvalues[p].re.exp();
        }
        assert!(max_diff(&sum, &expm(&a, 1.0).unwrap()) < 1e-8);
    }

    #[test]
    fn quadrature_examples() {
        assert_abs_diff_eq!(integrate(|_| 1.0, 0.0, 3.0, 1e-12).unwrap(), 3.0, epsilon = 1e-12);
        let v = integrate(|x: f64| (-x).exp(), 0.0, 1.0, 1e-12).unwrap();
        assert_abs_diff_eq!(v, 1.0 - (-1f64).exp(), epsilon = 1e-11);
        // Gamma(2) truncated at 50: 1 - 51 e^{-50}
        let v = integrate(|x: f64| x * (-x).exp(), 0.0, 50.0, 1e-10).unwrap();
        assert_abs_diff_eq!(v, 1.0 - 51.0 * (-50f64).exp(), epsilon = 1e-9);
        let v = integrate_to_infinity(|x: f64| x * (-x).exp(), 0.0, 1e-10).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn quadrature_reports_failure() {
        let r = integrate(|x: f64| if x < 0.5 { 0.0 } else { 1.0 / (x - 0.5).sqrt() }, 0.0, 1.0, 1e-14);
        assert!(r.is_err());
        assert!(integrate(|_| 1.0, 1.0, 0.0, 1e-9).is_err());
    }
}
