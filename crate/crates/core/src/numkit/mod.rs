//! Dense linear-algebra kernel: matrix exponential, eigenstructure with
//! multiplicities, and subspace geometry under explicit tolerances.

mod eigen;
mod sampling;
mod subspace;

pub use eigen::{eig, generalized_eigenspace, Defectiveness, EigenPair, Spectrum};
pub use sampling::{seeded_rng, unit_sphere_samples, UnitSphere};
pub use subspace::{rspan, subspace_distance, Subspace};

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type Complex64 = Complex<f64>;
pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Numerical tolerances shared by every analysis stage.
///
/// `eig` is relative: eigenvalues closer than `eig * max(1, ρ)` are one
/// cluster. `rank` is relative to the largest singular value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub eig: f64,
    pub rank: f64,
    pub orth: f64,
    pub member: f64,
    pub conv: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eig: 1e-7,
            rank: 1e-9,
            orth: 1e-10,
            member: 1e-6,
            conv: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("eig", self.eig),
            ("rank", self.rank),
            ("orth", self.orth),
            ("member", self.member),
            ("conv", self.conv),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return invalid(format!("tolerance `{name}` must be a positive finite number"));
            }
        }
        if self.rank < f64::EPSILON {
            return invalid("tolerance `rank` must not be below machine epsilon");
        }
        Ok(())
    }

    /// Absolute eigenvalue clustering radius for a matrix of spectral radius `rho`.
    pub fn eig_abs(&self, rho: f64) -> f64 {
        self.eig * rho.max(1.0)
    }
}

pub(crate) fn check_square(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return invalid(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols()));
    }
    if m.nrows() == 0 {
        return invalid(format!("{what} must be non-empty"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return invalid(format!("{what} has non-finite entries"));
    }
    Ok(())
}

/// Matrix exponential `e^M` (scaling and squaring with Padé approximants).
pub fn expm(m: &Matrix) -> Result<Matrix> {
    check_square(m, "expm input")?;
    let e = m.exp();
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure {
            message: "matrix exponential overflowed".into(),
            residuals: vec![m.norm()],
        });
    }
    Ok(e)
}

/// Singular values in descending order.
pub(crate) fn singular_values(m: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub(crate) fn complex_singular_values(m: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank: singular values above `tol_rank * σ_1`.
pub(crate) fn numerical_rank(sv: &[f64], tol_rank: f64) -> usize {
    match sv.first() {
        Some(&top) if top > 0.0 => sv.iter().filter(|&&s| s > tol_rank * top).count(),
        _ => 0,
    }
}

/// Orthonormal basis (as columns) of the numerical kernel of a real matrix.
pub(crate) fn real_kernel(m: &Matrix, tol_rank: f64) -> Matrix {
    let n = m.ncols();
    let square = pad_rows(m);
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..n).collect();
    let sv = &svd.singular_values;
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let top = order.first().map(|&i| sv[i]).unwrap_or(0.0);
    let kernel: Vec<usize> = order
        .into_iter()
        .filter(|&i| !(top > 0.0 && sv[i] > tol_rank * top))
        .collect();
    let mut basis = Matrix::zeros(n, kernel.len());
    for (col, &i) in kernel.iter().enumerate() {
        basis.set_column(col, &v_t.row(i).transpose());
    }
    basis
}

fn pad_rows(m: &Matrix) -> Matrix {
    if m.nrows() >= m.ncols() {
        return m.clone();
    }
    let n = m.ncols();
    let mut p = Matrix::zeros(n, n);
    p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    p
}

pub(crate) fn to_complex(m: &Matrix) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Spectral norm (largest singular value).
pub fn norm2(m: &Matrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub(crate) fn matrix_power(m: &Matrix, k: usize) -> Matrix {
    let mut acc = Matrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        acc = m * &acc;
    }
    acc
}

pub(crate) fn complex_matrix_power(m: &CMatrix, k: usize) -> CMatrix {
    let mut acc = CMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        acc = m * &acc;
    }
    acc
}

/// Normalize `x`, failing on a (numerically) zero vector.
pub fn normalized(x: &Vector) -> Result<Vector> {
    let n = x.norm();
    if !(n.is_finite() && n > 0.0) {
        return invalid("zero or non-finite vector has no direction");
    }
    Ok(x / n)
}
