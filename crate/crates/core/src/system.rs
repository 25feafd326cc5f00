//! Plant, gain and inter-event transition matrices.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numkit::{self, check_square, eig, expm, Complex64, Matrix, Tolerances, Vector};
use crate::regions::Partition;

/// Continuous-time plant `ẋ = Ax + Bu` under held feedback `u = Kx(t_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    a: Matrix,
    b: Matrix,
    k: Matrix,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix, k: Matrix) -> Result<Self> {
        check_square(&a, "A")?;
        let n = a.nrows();
        if b.nrows() != n || b.ncols() == 0 {
            return invalid(format!("B must be {n}×m with m ≥ 1, got {}×{}", b.nrows(), b.ncols()));
        }
        let m = b.ncols();
        if k.nrows() != m || k.ncols() != n {
            return invalid(format!("K must be {m}×{n}, got {}×{}", k.nrows(), k.ncols()));
        }
        if b.iter().chain(k.iter()).any(|v| !v.is_finite()) {
            return invalid("B and K must be finite");
        }
        Ok(LinearSystem { a, b, k })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn bk(&self) -> Matrix {
        &self.b * &self.k
    }

    /// `A_c = A + BK`.
    pub fn closed_loop(&self) -> Matrix {
        &self.a + self.bk()
    }

    /// Advisory Hurwitz test of the closed loop; never an error for the
    /// analysis itself.
    pub fn hurwitz_check(&self, tol: &Tolerances) -> Result<HurwitzCheck> {
        let spec = eig(&self.closed_loop(), tol)?;
        let max_real_part = spec.pairs.iter().map(|p| p.value.re).fold(f64::NEG_INFINITY, f64::max);
        Ok(HurwitzCheck { is_hurwitz: max_real_part < 0.0, max_real_part })
    }

    /// `[[A, BK], [0, 0]]`, whose exponential carries `G(τ)` in its top blocks.
    pub fn augmented_generator(&self) -> Matrix {
        let n = self.n();
        let mut m = Matrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.a);
        m.view_mut((0, n), (n, n)).copy_from(&self.bk());
        m
    }

    /// `G(τ) = e^{Aτ} + ∫₀^τ e^{A(τ−s)} BK ds`.
    pub fn transition_matrix(&self, tau: f64) -> Result<TransitionMatrix> {
        if !(tau.is_finite() && tau >= 0.0) {
            return invalid(format!("inter-event time must be finite and nonnegative, got {tau}"));
        }
        let n = self.n();
        let e = expm(&(self.augmented_generator() * tau))?;
        let g = e.view((0, 0), (n, n)) + e.view((0, n), (n, n));
        TransitionMatrix::new(tau, g)
    }

    pub fn transition_matrices(&self, taus: &[f64]) -> Result<Vec<TransitionMatrix>> {
        taus.iter().map(|&t| self.transition_matrix(t)).collect()
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HurwitzCheck {
    pub is_hurwitz: bool,
    pub max_real_part: f64,
}

/// `G(τ)` together with its inter-event time.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    pub tau: f64,
    pub g: Matrix,
}

impl TransitionMatrix {
    pub fn new(tau: f64, g: Matrix) -> Result<Self> {
        check_square(&g, "G")?;
        if !(tau.is_finite() && tau >= 0.0) {
            return invalid(format!("inter-event time must be finite and nonnegative, got {tau}"));
        }
        Ok(TransitionMatrix { tau, g })
    }
}

/// Gain for a single-input companion-form pair (`B = e_n`) placing the
/// closed-loop poles at `desired`, by matching characteristic-polynomial
/// coefficients.
pub fn pole_place_companion(a: &Matrix, b: &Matrix, desired: &[Complex64]) -> Result<Matrix> {
    check_square(a, "A")?;
    let n = a.nrows();
    let unsupported = |why: &str| {
        Err(Error::UnsupportedForm(format!(
            "pole placement needs controllable companion form ({why}); supply K directly"
        )))
    };
    if b.nrows() != n || b.ncols() != 1 {
        return unsupported("B must be a single column");
    }
    for i in 0..n {
        let want = if i == n - 1 { 1.0 } else { 0.0 };
        if b[(i, 0)] != want {
            return unsupported("B must be the last unit vector");
        }
    }
    for i in 0..n - 1 {
        for j in 0..n {
            let want = if j == i + 1 { 1.0 } else { 0.0 };
            if a[(i, j)] != want {
                return unsupported("A must have ones on the superdiagonal and zeros elsewhere above the last row");
            }
        }
    }
    if desired.len() != n {
        return invalid(format!("need {n} desired poles, got {}", desired.len()));
    }
    // Monic polynomial from roots, coefficients highest power first.
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &r in desired {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    let scale = coeffs.iter().map(|c| c.norm()).fold(1.0, f64::max);
    if coeffs.iter().any(|c| c.im.abs() > 1e-9 * scale) {
        return invalid("desired poles must be closed under complex conjugation");
    }
    // Last row of A + BK is -[d_0, ..., d_{n-1}] with d_j the coefficient of s^j.
    let mut k = Matrix::zeros(1, n);
    for j in 0..n {
        let d_j = coeffs[n - j].re;
        k[(0, j)] = -d_j - a[(n - 1, j)];
    }
    Ok(k)
}

#[derive(Clone, Debug, Serialize)]
pub struct A1Violation {
    pub region: usize,
    pub power: usize,
    pub witness: Vec<f64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct A1Report {
    pub passed: bool,
    pub duplicate_taus: Vec<(usize, usize)>,
    pub violations: Vec<A1Violation>,
}

/// Standing-assumption audit: pairwise distinct inter-event times, and no
/// direction of a region in the kernel of `G^l(τ_i)` for `l = 1..n`.
pub fn check_assumption_a1(
    partition: &Partition,
    gs: &[TransitionMatrix],
    tol: &Tolerances,
    samples: usize,
    seed: u64,
) -> Result<A1Report> {
    if gs.len() != partition.len() {
        return invalid(format!("{} transition matrices for {} regions", gs.len(), partition.len()));
    }
    let mut report = A1Report::default();
    let taus = partition.taus();
    for i in 0..taus.len() {
        for j in (i + 1)..taus.len() {
            if (taus[i] - taus[j]).abs() <= 1e-12 * taus[i].abs().max(taus[j].abs()) {
                report.duplicate_taus.push((i, j));
            }
        }
    }
    let mut rng = numkit::seeded_rng(seed);
    for (region, tm) in gs.iter().enumerate() {
        let n = tm.g.nrows();
        let mut power = Matrix::identity(n, n);
        for l in 1..=n {
            power = &tm.g * &power;
            let kernel = numkit::Subspace::from_orthonormal(numkit::real_kernel(&power, tol.rank));
            if kernel.is_zero() {
                continue;
            }
            let mut probes: Vec<Vector> = Vec::new();
            for b in kernel.basis_vectors() {
                probes.push(-&b);
                probes.push(b);
            }
            for _ in 0..samples {
                probes.extend(kernel.random_unit(&mut rng));
            }
            if let Some(w) = probes.into_iter().find(|x| partition.membership(x).ok() == Some(region)) {
                report.violations.push(A1Violation { region, power: l, witness: w.iter().copied().collect() });
                break;
            }
        }
    }
    report.passed = report.duplicate_taus.is_empty() && report.violations.is_empty();
    Ok(report)
}

impl A1Report {
    /// The first failure as an error, or `Ok` when the audit passed.
    pub fn into_result(self) -> Result<()> {
        if let Some(&(i, j)) = self.duplicate_taus.first() {
            return Err(Error::AssumptionViolation {
                region: j,
                message: format!("regions {i} and {j} share the same inter-event time"),
            });
        }
        if let Some(v) = self.violations.first() {
            return Err(Error::AssumptionViolation {
                region: v.region,
                message: format!("direction {:?} of the region lies in ker G^{}", v.witness, v.power),
            });
        }
        Ok(())
    }
}
