use rand::Rng;
use rand_distr::Distribution;

use super::{CVector, Matrix, Tolerances, UnitSphere, Vector};
use crate::error::{invalid, Result};

/// A linear subspace of ℝⁿ held as an orthonormal basis (matrix columns).
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    basis: Matrix,
}

impl Subspace {
    pub fn zero(ambient: usize) -> Self {
        Subspace { basis: Matrix::zeros(ambient, 0) }
    }

    pub fn full(ambient: usize) -> Self {
        Subspace { basis: Matrix::identity(ambient, ambient) }
    }

    /// Span of arbitrary vectors, orthonormalized through an SVD with
    /// relative rank threshold `tol_rank`.
    pub fn from_vectors(ambient: usize, vectors: &[Vector], tol_rank: f64) -> Self {
        if vectors.is_empty() {
            return Subspace::zero(ambient);
        }
        let m = Matrix::from_columns(vectors);
        Self::from_column_span(&m, tol_rank)
    }

    pub(crate) fn from_column_span(m: &Matrix, tol_rank: f64) -> Self {
        let ambient = m.nrows();
        if m.ncols() == 0 {
            return Subspace::zero(ambient);
        }
        let svd = m.clone().svd(true, false);
        let u = svd.u.expect("requested U");
        let sv = &svd.singular_values;
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
        let top = order.first().map(|&i| sv[i]).unwrap_or(0.0);
        if top <= 0.0 {
            return Subspace::zero(ambient);
        }
        let keep: Vec<Vector> = order
            .into_iter()
            .filter(|&i| sv[i] > tol_rank * top)
            .map(|i| u.column(i).into_owned())
            .collect();
        let mut basis = Matrix::from_columns(&keep);
        canonicalize_signs(&mut basis);
        Subspace { basis }
    }

    /// Wrap a matrix whose columns are already orthonormal.
    pub(crate) fn from_orthonormal(basis: Matrix) -> Self {
        Subspace { basis }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn basis_vectors(&self) -> Vec<Vector> {
        self.basis.column_iter().map(|c| c.into_owned()).collect()
    }

    pub fn project(&self, x: &Vector) -> Vector {
        &self.basis * (self.basis.transpose() * x)
    }

    pub fn projector(&self) -> Matrix {
        &self.basis * self.basis.transpose()
    }

    /// Point of the subspace with coordinates `coords` in the basis.
    pub fn point(&self, coords: &Vector) -> Vector {
        &self.basis * coords
    }

    pub fn coordinates(&self, x: &Vector) -> Vector {
        self.basis.transpose() * x
    }

    /// Seeded uniform unit vector of the subspace.
    pub fn random_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vector> {
        if self.is_zero() {
            return None;
        }
        let c = UnitSphere(self.dim()).sample(rng);
        Some(self.point(&c))
    }

    /// `x` lies in the subspace up to relative residual `tol`.
    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        let n = x.norm();
        n == 0.0 || (x - self.project(x)).norm() <= tol * n
    }

    pub fn is_subset_of(&self, other: &Subspace, tol: f64) -> bool {
        self.basis.column_iter().all(|c| other.contains(&c.into_owned(), tol))
    }

    pub fn span(&self, other: &Subspace, tol_rank: f64) -> Subspace {
        let cols: Vec<Vector> = self.basis_vectors().into_iter().chain(other.basis_vectors()).collect();
        Subspace::from_vectors(self.ambient_dim(), &cols, tol_rank)
    }

    /// Intersection via principal angles: directions whose angle to `other`
    /// has sine at most `tol`.
    pub fn intersection(&self, other: &Subspace, tol: f64) -> Subspace {
        if self.is_zero() || other.is_zero() {
            return Subspace::zero(self.ambient_dim());
        }
        let cross = self.basis.transpose() * &other.basis;
        let svd = cross.svd(true, false);
        let u = svd.u.expect("requested U");
        let cos_min = (1.0 - tol * tol).max(0.0).sqrt();
        let dirs: Vec<Vector> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s >= cos_min)
            .map(|(i, _)| &self.basis * u.column(i))
            .collect();
        Subspace::from_vectors(self.ambient_dim(), &dirs, 1e-8)
    }

    /// Spectral norm of the difference of orthogonal projectors.
    pub fn projector_distance(&self, other: &Subspace) -> f64 {
        super::norm2(&(self.projector() - other.projector()))
    }

    /// Distance from a unit vector to the nearest unit vector of the
    /// subspace, without tolerance snapping. `√2` for the zero subspace
    /// convention is never reached here: callers reject empty subspaces.
    pub fn raw_unit_distance(&self, x: &Vector) -> f64 {
        let p = self.project(x);
        let np = p.norm();
        if np <= 1e-300 {
            return std::f64::consts::SQRT_2;
        }
        (x - p / np).norm()
    }
}

/// Make the largest-magnitude entry of every column positive so bases are
/// reproducible across runs.
pub(crate) fn canonicalize_signs(m: &mut Matrix) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0f64;
        for &v in col.iter() {
            if v.abs() > best.abs() + 1e-12 {
                best = v;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

/// Real span of `{v + v*, i(v − v*)}`: a line for real-up-to-phase `v`,
/// otherwise a plane.
pub fn rspan(v: &CVector, tol: &Tolerances) -> Result<Subspace> {
    if v.iter().all(|c| c.norm() == 0.0) || v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return invalid("rspan of a zero or non-finite vector");
    }
    let re = v.map(|c| c.re);
    let im = v.map(|c| c.im);
    Ok(Subspace::from_vectors(v.len(), &[re, im], tol.rank.max(1e-10)))
}

/// Euclidean distance from unit vector `x` to the unit sphere of `s`.
/// Returns exactly 0 when `‖P_S x‖ ≥ 1 − tol.member`.
pub fn subspace_distance(x: &Vector, s: &Subspace, tol: &Tolerances) -> Result<f64> {
    if x.len() != s.ambient_dim() {
        return invalid(format!("vector of length {} vs subspace of ℝ^{}", x.len(), s.ambient_dim()));
    }
    if s.is_zero() {
        return invalid("distance to the zero subspace is undefined on the unit sphere");
    }
    let xn = x.norm();
    if (xn - 1.0).abs() > 1e-8 {
        return invalid(format!("expected a unit vector, norm is {xn}"));
    }
    if s.project(x).norm() >= 1.0 - tol.member {
        return Ok(0.0);
    }
    Ok(s.raw_unit_distance(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{seeded_rng, Complex64};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn e(n: usize, i: usize) -> Vector {
        let mut v = Vector::zeros(n);
        v[i] = 1.0;
        v
    }

    #[test]
    fn rspan_of_real_vector_is_a_line() {
        let v = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let s = rspan(&v, &Tolerances::default()).unwrap();
        assert_eq!(s.dim(), 1);
        assert!(s.contains(&e(3, 0), 1e-12));
    }

    #[test]
    fn rspan_of_complex_vector_is_a_plane() {
        let v = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)]);
        let s = rspan(&v, &Tolerances::default()).unwrap();
        assert_eq!(s.dim(), 2);
        assert!(s.projector_distance(&Subspace::from_vectors(3, &[e(3, 0), e(3, 1)], 1e-12)) < 1e-12);
    }

    #[test]
    fn rspan_removes_phase() {
        let v = CVector::from_vec(vec![c(1.0, 1.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let s = rspan(&v, &Tolerances::default()).unwrap();
        assert_eq!(s.dim(), 1);
        let line = Subspace::from_vectors(3, &[e(3, 0)], 1e-12);
        assert!(s.projector_distance(&line) < 1e-12);
    }

    #[test]
    fn rspan_rejects_zero() {
        assert!(rspan(&CVector::zeros(3), &Tolerances::default()).is_err());
    }

    #[test]
    fn distance_trivial_cases() {
        let tol = Tolerances::default();
        let s = Subspace::from_vectors(3, &[e(3, 0)], 1e-12);
        assert_eq!(subspace_distance(&e(3, 0), &s, &tol).unwrap(), 0.0);
        assert_abs_diff_eq!(subspace_distance(&e(3, 1), &s, &tol).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert!(subspace_distance(&(e(3, 1) * 2.0), &s, &tol).is_err());
        assert!(subspace_distance(&e(3, 1), &Subspace::zero(3), &tol).is_err());
    }

    #[test]
    fn distance_matches_grid_search_over_subspace_sphere() {
        // Oracle: brute-force minimum over a dense grid of unit vectors of a plane.
        let tol = Tolerances::default();
        let mut rng = seeded_rng(5);
        for _ in 0..10 {
            let a: Vector = UnitSphere(4).sample(&mut rng);
            let b: Vector = UnitSphere(4).sample(&mut rng);
            let s = Subspace::from_vectors(4, &[a, b], 1e-12);
            let x: Vector = UnitSphere(4).sample(&mut rng);
            let q0 = s.basis().column(0).into_owned();
            let q1 = s.basis().column(1).into_owned();
            let steps = 200_000;
            let mut best = f64::INFINITY;
            for k in 0..steps {
                let t = 2.0 * std::f64::consts::PI * k as f64 / steps as f64;
                let u = &q0 * t.cos() + &q1 * t.sin();
                best = best.min((&x - u).norm());
            }
            let d = subspace_distance(&x, &s, &tol).unwrap();
            assert!((d - best).abs() < 1e-6, "{d} vs {best}");
        }
    }

    #[test]
    fn intersection_of_coordinate_planes() {
        let p1 = Subspace::from_vectors(3, &[e(3, 0), e(3, 1)], 1e-12);
        let p2 = Subspace::from_vectors(3, &[e(3, 1), e(3, 2)], 1e-12);
        let i = p1.intersection(&p2, 1e-9);
        assert_eq!(i.dim(), 1);
        assert!(i.contains(&e(3, 1), 1e-12));
        assert_eq!(p1.span(&p2, 1e-12).dim(), 3);
    }

    proptest! {
        #[test]
        fn rspan_is_invariant_under_complex_scaling(
            re in proptest::collection::vec(-1.0f64..1.0, 4),
            im in proptest::collection::vec(-1.0f64..1.0, 4),
            s_re in -2.0f64..2.0, s_im in -2.0f64..2.0,
        ) {
            let v = CVector::from_iterator(4, re.iter().zip(&im).map(|(&a, &b)| c(a, b)));
            let scale = c(s_re, s_im);
            prop_assume!(v.norm() > 1e-3 && scale.norm() > 1e-3);
            let tol = Tolerances::default();
            let s1 = rspan(&v, &tol).unwrap();
            let s2 = rspan(&(v.clone() * scale), &tol).unwrap();
            prop_assert_eq!(s1.dim(), s2.dim());
            prop_assert!(s1.projector_distance(&s2) < 1e-9);
        }

        #[test]
        fn zero_distance_iff_projection_is_nearly_unit(
            xs in proptest::collection::vec(-1.0f64..1.0, 3),
            bs in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let x = Vector::from_vec(xs);
            let b = Vector::from_vec(bs);
            prop_assume!(x.norm() > 1e-3 && b.norm() > 1e-3);
            let x = x.normalize();
            let tol = Tolerances::default();
            let s = Subspace::from_vectors(3, &[b], 1e-12);
            let d = subspace_distance(&x, &s, &tol).unwrap();
            prop_assert_eq!(d == 0.0, s.project(&x).norm() >= 1.0 - tol.member);
        }
    }
}
