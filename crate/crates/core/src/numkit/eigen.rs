use nalgebra::Schur;
use serde::Serialize;

use super::{
    check_square, complex_matrix_power, complex_singular_values, matrix_power, singular_values, to_complex,
    CMatrix, CVector, Complex64, Matrix, Subspace, Tolerances, Vector,
};
use crate::error::{invalid, Error, Result};

/// Relative window inside which neighbouring clusters are candidates for a
/// rank-confirmed merge (split Jordan blocks).
const MERGE_WINDOW: f64 = 1e-4;

/// Tri-state defectiveness decision; `Ambiguous` when a singular value of
/// `M − λI` sits inside the rank-tolerance band.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Defectiveness {
    NonDefective,
    Defective,
    Ambiguous,
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: Complex64,
    /// Orthonormal basis of the (complex) eigenspace; real-valued for real eigenvalues.
    pub vectors: Vec<CVector>,
    pub algebraic: usize,
    pub geometric: usize,
    pub defective: Defectiveness,
}

impl EigenPair {
    pub fn is_real(&self) -> bool {
        self.value.im == 0.0
    }

    pub fn magnitude(&self) -> f64 {
        self.value.norm()
    }

    pub fn eigenvector(&self) -> &CVector {
        &self.vectors[0]
    }

    /// Real eigenvectors; `None` for non-real eigenvalues.
    pub fn real_vectors(&self) -> Option<Vec<Vector>> {
        self.is_real().then(|| self.vectors.iter().map(|v| v.map(|c| c.re)).collect())
    }
}

/// Eigenvalues with eigenvectors and multiplicities, sorted by decreasing
/// magnitude. Non-real eigenvalues appear as conjugate pairs, the one with
/// positive imaginary part first.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub pairs: Vec<EigenPair>,
    pub spectral_radius: f64,
    /// Absolute clustering radius used to build this spectrum.
    pub cluster_tol: f64,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.pairs.iter().map(|p| p.algebraic).sum()
    }

    /// Index of the eigenvalue closest to `lambda`, if within the clustering radius.
    pub fn find(&self, lambda: Complex64) -> Option<usize> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p.value - lambda).norm()))
            .filter(|&(_, d)| d <= self.cluster_tol)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Distinct eigenvalue magnitudes (clustered), in decreasing order.
    pub fn magnitudes(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for p in &self.pairs {
            let m = p.magnitude();
            if !out.iter().any(|&q| (q - m).abs() <= self.cluster_tol) {
                out.push(m);
            }
        }
        out
    }

    pub fn with_magnitude(&self, mu: f64) -> impl Iterator<Item = (usize, &EigenPair)> {
        let tol = self.cluster_tol;
        self.pairs.iter().enumerate().filter(move |(_, p)| (p.magnitude() - mu).abs() <= tol)
    }

    /// Real form of the generalized eigenspace of `pairs[idx]` (joint with
    /// the conjugate for non-real eigenvalues).
    pub fn generalized_eigenspace(&self, m: &Matrix, idx: usize, tol: &Tolerances) -> Subspace {
        let pair = &self.pairs[idx];
        let n = m.nrows();
        let a = pair.algebraic;
        if pair.is_real() {
            let shifted = m - Matrix::identity(n, n) * pair.value.re;
            let k = smallest_right_vectors(&matrix_power(&shifted, a), a);
            Subspace::from_vectors(n, &k, tol.rank)
        } else {
            let shifted = to_complex(m) - CMatrix::identity(n, n) * pair.value;
            let k = smallest_right_cvectors(&complex_matrix_power(&shifted, a), a);
            let mut real_parts = Vec::with_capacity(2 * a);
            for v in &k {
                real_parts.push(v.map(|c| c.re));
                real_parts.push(v.map(|c| c.im));
            }
            Subspace::from_vectors(n, &real_parts, tol.rank.max(1e-10))
        }
    }
}

/// Full eigen-analysis of a real square matrix.
pub fn eig(m: &Matrix, tol: &Tolerances) -> Result<Spectrum> {
    check_square(m, "eig input")?;
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100 * n.max(10)).ok_or_else(|| Error::NumericalFailure {
        message: "Schur iteration did not converge".into(),
        residuals: Vec::new(),
    })?;
    let raw: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    let rho = raw.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cluster_tol = tol.eig_abs(rho);

    let clusters = cluster_eigenvalues(m, &raw, cluster_tol, tol.rank);

    let mut pairs = Vec::new();
    for members in &clusters {
        let mean = members.iter().sum::<Complex64>() / members.len() as f64;
        if mean.im.abs() <= cluster_tol {
            pairs.push(real_pair(m, mean.re, members.len(), tol));
        } else if mean.im > 0.0 {
            let upper = complex_pair(m, mean, members.len(), tol);
            let lower = EigenPair {
                value: upper.value.conj(),
                vectors: upper.vectors.iter().map(|v| v.map(|c| c.conj())).collect(),
                ..upper.clone()
            };
            pairs.push(upper);
            pairs.push(lower);
        }
    }
    if pairs.iter().map(|p| p.algebraic).sum::<usize>() != n {
        return Err(Error::NumericalFailure {
            message: "eigenvalue clusters are not closed under conjugation".into(),
            residuals: raw.iter().map(|z| z.im).collect(),
        });
    }
    pairs.sort_by(|a, b| {
        b.magnitude()
            .total_cmp(&a.magnitude())
            .then(b.value.re.total_cmp(&a.value.re))
            .then(b.value.im.total_cmp(&a.value.im))
    });

    let scale = m.norm().max(1.0);
    let residuals: Vec<f64> = pairs
        .iter()
        .flat_map(|p| {
            let cm = to_complex(m);
            p.vectors.iter().map(move |v| (&cm * v - v * p.value).norm()).collect::<Vec<_>>()
        })
        .collect();
    if residuals.iter().any(|&r| !(r <= 1e-6 * scale)) {
        return Err(Error::NumericalFailure {
            message: "eigenpair residuals too large".into(),
            residuals,
        });
    }

    let spectral_radius = pairs.iter().map(|p| p.magnitude()).fold(0.0, f64::max);
    Ok(Spectrum { pairs, spectral_radius, cluster_tol })
}

/// Real form of the generalized eigenspace of `m` for eigenvalue `lambda`.
pub fn generalized_eigenspace(m: &Matrix, lambda: Complex64, tol: &Tolerances) -> Result<Subspace> {
    let spec = eig(m, tol)?;
    match spec.find(lambda) {
        Some(idx) => Ok(spec.generalized_eigenspace(m, idx, tol)),
        None => invalid(format!("{lambda} is not an eigenvalue within tolerance")),
    }
}

fn cluster_eigenvalues(m: &Matrix, raw: &[Complex64], tol_abs: f64, tol_rank: f64) -> Vec<Vec<Complex64>> {
    let groups = single_linkage(raw, tol_abs);
    let mut clusters: Vec<Vec<Complex64>> =
        groups.into_iter().map(|g| g.into_iter().map(|i| raw[i]).collect()).collect();

    // Rank-confirmed merge of clusters that are close but beyond tol_abs.
    let rho = raw.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let means: Vec<Complex64> =
        clusters.iter().map(|c| c.iter().sum::<Complex64>() / c.len() as f64).collect();
    let components = single_linkage(&means, MERGE_WINDOW * rho.max(1.0));
    let mut merged = Vec::new();
    for comp in components {
        if comp.len() < 2 {
            merged.push(std::mem::take(&mut clusters[comp[0]]));
            continue;
        }
        let members: Vec<Complex64> = comp.iter().flat_map(|&i| clusters[i].iter().copied()).collect();
        let k = members.len();
        let mean = members.iter().sum::<Complex64>() / k as f64;
        let n = m.nrows();
        let shifted = to_complex(m) - CMatrix::identity(n, n) * mean;
        let sv = complex_singular_values(&complex_matrix_power(&shifted, k));
        let nullity = n - super::numerical_rank(&sv, tol_rank);
        // Distinct close eigenvalues also pass the power test; only a split
        // Jordan block leaves the mean itself numerically an eigenvalue.
        let singular_at_mean = super::numerical_rank(&complex_singular_values(&shifted), tol_rank) < n;
        if nullity >= k && singular_at_mean {
            merged.push(members);
        } else {
            for i in comp {
                merged.push(std::mem::take(&mut clusters[i]));
            }
        }
    }
    merged
}

/// Connected components under `|a − b| ≤ radius`, each sorted, ordered by first index.
fn single_linkage(points: &[Complex64], radius: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm() <= radius {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                if ri != rj {
                    parent[rj.max(ri)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

fn defectiveness(sv: &[f64], algebraic: usize, tol_rank: f64) -> (usize, Defectiveness) {
    let n = sv.len();
    let g = (n - super::numerical_rank(sv, tol_rank)).clamp(1, algebraic);
    let tight = (n - super::numerical_rank(sv, tol_rank * 1e-2)).clamp(1, algebraic);
    let loose = (n - super::numerical_rank(sv, tol_rank * 1e2)).clamp(1, algebraic);
    let flag = match (tight < algebraic, loose < algebraic) {
        (true, true) => Defectiveness::Defective,
        (false, false) => Defectiveness::NonDefective,
        _ => Defectiveness::Ambiguous,
    };
    (g, flag)
}

fn real_pair(m: &Matrix, lambda: f64, algebraic: usize, tol: &Tolerances) -> EigenPair {
    let n = m.nrows();
    let shifted = m - Matrix::identity(n, n) * lambda;
    let sv = singular_values(&shifted);
    let (geometric, defective) = defectiveness(&sv, algebraic, tol.rank);
    let vecs = smallest_right_vectors(&shifted, geometric);
    let mut basis = Matrix::from_columns(&vecs);
    super::subspace::canonicalize_signs(&mut basis);
    EigenPair {
        value: Complex64::new(lambda, 0.0),
        vectors: basis.column_iter().map(|c| c.map(|v| Complex64::new(v, 0.0))).collect(),
        algebraic,
        geometric,
        defective,
    }
}

fn complex_pair(m: &Matrix, lambda: Complex64, algebraic: usize, tol: &Tolerances) -> EigenPair {
    let n = m.nrows();
    let shifted = to_complex(m) - CMatrix::identity(n, n) * lambda;
    let sv = complex_singular_values(&shifted);
    let (geometric, defective) = defectiveness(&sv, algebraic, tol.rank);
    let vectors = smallest_right_cvectors(&shifted, geometric)
        .into_iter()
        .map(normalize_phase)
        .collect();
    EigenPair { value: lambda, vectors, algebraic, geometric, defective }
}

/// Rotate so the largest-magnitude component is real and positive.
fn normalize_phase(v: CVector) -> CVector {
    let mut best = Complex64::new(0.0, 0.0);
    for c in v.iter() {
        if c.norm() > best.norm() + 1e-12 {
            best = *c;
        }
    }
    if best.norm() == 0.0 {
        return v;
    }
    let phase = best.conj() / best.norm();
    let w = v * phase;
    let n = w.norm();
    w / Complex64::new(n, 0.0)
}

/// The `count` right singular vectors with the smallest singular values.
fn smallest_right_vectors(m: &Matrix, count: usize) -> Vec<Vector> {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]));
    order.into_iter().take(count).map(|i| v_t.row(i).transpose()).collect()
}

fn smallest_right_cvectors(m: &CMatrix, count: usize) -> Vec<CVector> {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]));
    order.into_iter().take(count).map(|i| v_t.row(i).adjoint()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{norm2, seeded_rng};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn real_values(s: &Spectrum) -> Vec<f64> {
        let mut v: Vec<f64> = s.pairs.iter().map(|p| p.value.re).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Oracle: roots of a real polynomial by sign-change scanning and bisection.
    fn bracketed_real_roots(coeffs_high_first: &[f64], lo: f64, hi: f64) -> Vec<f64> {
        let p = |x: f64| coeffs_high_first.iter().fold(0.0, |acc, &c| acc * x + c);
        let steps = 200_000;
        let mut roots = Vec::new();
        let h = (hi - lo) / steps as f64;
        for k in 0..steps {
            let (mut a, mut b) = (lo + k as f64 * h, lo + (k + 1) as f64 * h);
            let (fa, fb) = (p(a), p(b));
            if fa == 0.0 {
                roots.push(a);
                continue;
            }
            if fa * fb < 0.0 {
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if p(a) * p(mid) <= 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                roots.push(0.5 * (a + b));
            }
        }
        roots
    }

    #[test]
    fn example_one_plant_eigenvalues() {
        let a = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -6.0, 7.0, 0.0]);
        let s = eig(&a, &tol()).unwrap();
        let v = real_values(&s);
        for (got, want) in v.iter().zip([-3.0, 1.0, 2.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
        assert!(s.pairs.iter().all(|p| p.is_real() && p.algebraic == 1 && p.geometric == 1));
        assert_abs_diff_eq!(s.spectral_radius, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn identity_has_full_multiplicity() {
        let s = eig(&Matrix::identity(4, 4), &tol()).unwrap();
        assert_eq!(s.pairs.len(), 1);
        let p = &s.pairs[0];
        assert_eq!((p.algebraic, p.geometric), (4, 4));
        assert_eq!(p.defective, Defectiveness::NonDefective);
        assert_eq!(p.value, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn companion_eigenvalues_match_root_bracketing() {
        let mut rng = seeded_rng(21);
        for _ in 0..5 {
            // Companion matrix of a polynomial with well-separated real roots.
            let mut roots: Vec<f64> = (0..4).map(|k| k as f64 * 1.5 - 2.0 + rng.random_range(-0.3..0.3)).collect();
            roots.sort_by(f64::total_cmp);
            let mut coeffs = vec![1.0];
            for r in &roots {
                let mut next = vec![0.0; coeffs.len() + 1];
                for (i, c) in coeffs.iter().enumerate() {
                    next[i] += c;
                    next[i + 1] -= c * r;
                }
                coeffs = next;
            }
            let n = 4;
            let mut m = Matrix::zeros(n, n);
            for i in 0..n - 1 {
                m[(i, i + 1)] = 1.0;
            }
            for j in 0..n {
                m[(n - 1, j)] = -coeffs[n - j];
            }
            let oracle = bracketed_real_roots(&coeffs, -10.0, 10.0);
            let got = real_values(&eig(&m, &tol()).unwrap());
            assert_eq!(oracle.len(), 4);
            for (g, o) in got.iter().zip(&oracle) {
                assert!((g - o).abs() < 1e-8, "{g} vs {o}");
            }
        }
    }

    #[test]
    fn complex_pairs_are_conjugate() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let s = eig(&m, &tol()).unwrap();
        assert_eq!(s.pairs.len(), 2);
        assert_eq!(s.pairs[0].value, s.pairs[1].value.conj());
        assert!(s.pairs[0].value.im > 0.0);
        let v0 = s.pairs[0].eigenvector();
        let v1 = s.pairs[1].eigenvector();
        assert_eq!(*v1, v0.map(|c| c.conj()));
    }

    #[test]
    fn jordan_block_is_defective() {
        let m = Matrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 2.0]);
        let s = eig(&m, &tol()).unwrap();
        assert_eq!(s.pairs.len(), 1);
        assert_eq!((s.pairs[0].algebraic, s.pairs[0].geometric), (3, 1));
        assert_eq!(s.pairs[0].defective, Defectiveness::Defective);
        let g = s.generalized_eigenspace(&m, 0, &tol());
        assert_eq!(g.dim(), 3);
    }

    #[test]
    fn generalized_eigenspace_of_diagonal() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0, 1.0]));
        let g = generalized_eigenspace(&m, Complex64::new(2.0, 0.0), &tol()).unwrap();
        assert_eq!(g.dim(), 1);
        assert_abs_diff_eq!(g.basis()[(0, 0)].abs(), 1.0, epsilon = 1e-12);
        assert!(generalized_eigenspace(&m, Complex64::new(3.0, 0.0), &tol()).is_err());
    }

    /// Random well-conditioned basis.
    fn random_basis(n: usize, rng: &mut impl Rng) -> Matrix {
        loop {
            let v = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let s = singular_values(&v);
            if s[n - 1] > 0.2 * s[0] {
                return v;
            }
        }
    }

    #[test]
    fn close_distinct_eigenvalues_stay_apart() {
        let mut rng = seeded_rng(9);
        for gap in [3e-7, 1e-6, 1e-5] {
            let d = Matrix::from_diagonal(&Vector::from_vec(vec![1.2, 1.2 * (1.0 + gap), 0.4, -0.3]));
            let v = random_basis(4, &mut rng);
            let m = &v * d * v.clone().try_inverse().unwrap();
            let s = eig(&m, &tol()).unwrap();
            assert_eq!(s.pairs.len(), 4, "gap {gap}");
            assert!(s.find(Complex64::new(1.2, 0.0)).is_some());
        }
    }

    #[test]
    fn planted_jordan_structure_recovered() {
        let mut rng = seeded_rng(8);
        for size in [2usize, 3] {
            for _ in 0..5 {
                let n = 5;
                let mut j = Matrix::zeros(n, n);
                for i in 0..size {
                    j[(i, i)] = 1.5;
                    if i + 1 < size {
                        j[(i, i + 1)] = 1.0;
                    }
                }
                j[(size, size)] = -0.7;
                for i in size + 1..n {
                    j[(i, i)] = 0.3 + 0.2 * i as f64;
                }
                let v = random_basis(n, &mut rng);
                let m = &v * &j * v.clone().try_inverse().unwrap();
                let s = eig(&m, &tol()).unwrap();
                let idx = s.find(Complex64::new(1.5, 0.0)).expect("planted eigenvalue");
                assert_eq!(s.pairs[idx].algebraic, size);
                assert_eq!(s.pairs[idx].geometric, 1);
                assert_eq!(s.pairs[idx].defective, Defectiveness::Defective);
                let g = s.generalized_eigenspace(&m, idx, &tol());
                assert_eq!(g.dim(), size);
                let planted = Subspace::from_vectors(
                    n,
                    &(0..size).map(|i| v.column(i).into_owned()).collect::<Vec<_>>(),
                    1e-12,
                );
                assert!(g.projector_distance(&planted) < 1e-6);
            }
        }
    }

    #[test]
    fn planted_complex_generalized_eigenspace() {
        let mut rng = seeded_rng(12);
        let n = 4;
        // Real Jordan form of a defective complex pair 0.5 ± 0.8i.
        let mut j = Matrix::zeros(n, n);
        let (a, b) = (0.5, 0.8);
        for blk in 0..2 {
            let o = 2 * blk;
            j[(o, o)] = a;
            j[(o, o + 1)] = -b;
            j[(o + 1, o)] = b;
            j[(o + 1, o + 1)] = a;
        }
        j[(0, 2)] = 1.0;
        j[(1, 3)] = 1.0;
        let v = random_basis(n, &mut rng);
        let m = &v * &j * v.clone().try_inverse().unwrap();
        let g = generalized_eigenspace(&m, Complex64::new(a, b), &tol()).unwrap();
        assert_eq!(g.dim(), 4);
        let s = eig(&m, &tol()).unwrap();
        assert_eq!(s.pairs.len(), 2);
        assert_eq!((s.pairs[0].algebraic, s.pairs[0].geometric), (2, 1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn eigenpair_residuals_are_small(entries in proptest::collection::vec(-3.0f64..3.0, 16)) {
            let m = Matrix::from_row_slice(4, 4, &entries);
            let s = eig(&m, &tol()).unwrap();
            prop_assert_eq!(s.dim(), 4);
            let cm = to_complex(&m);
            let scale = norm2(&m);
            for p in &s.pairs {
                prop_assert!(p.geometric >= 1 && p.geometric <= p.algebraic);
                for v in &p.vectors {
                    let r = (&cm * v - v * p.value).norm();
                    prop_assert!(r <= 1e-8 * scale.max(1e-300), "residual {} vs {}", r, scale);
                }
            }
            let rho = s.pairs.iter().map(|p| p.magnitude()).fold(0.0, f64::max);
            prop_assert_eq!(rho, s.spectral_radius);
        }

        #[test]
        fn generalized_eigenspaces_are_invariant(entries in proptest::collection::vec(-2.0f64..2.0, 9)) {
            let m = Matrix::from_row_slice(3, 3, &entries);
            let t = tol();
            let s = eig(&m, &t).unwrap();
            for idx in 0..s.pairs.len() {
                let g = s.generalized_eigenspace(&m, idx, &t);
                for b in g.basis_vectors() {
                    let mb = &m * &b;
                    if mb.norm() > 1e-10 {
                        let d = g.raw_unit_distance(&mb.normalize());
                        prop_assert!(d <= t.member, "distance {}", d);
                    }
                }
            }
        }
    }
}
