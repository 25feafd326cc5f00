//! Positively invariant subregions: R-eigenspaces, `S_μ` screening, rays,
//! invariant subspaces and finite ray unions.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{invalid, Result};
use crate::numkit::{eig, rspan, seeded_rng, Complex64, Matrix, Spectrum, Subspace, Tolerances, UnitSphere, Vector};
use crate::regions::{Cone, Partition, RegionCone};
use crate::system::TransitionMatrix;

pub const DEFAULT_SAMPLES: usize = 256;
pub const DEFAULT_STARTS: usize = 64;
pub const DEFAULT_MAX_DENOMINATOR: usize = 12;
const ANGLE_GRID: usize = 720;
const MAX_SPAN_MEMBERS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Ray,
    Line,
    Plane,
    UnionOfRays,
    Subspace,
}

/// Geometry of a candidate: finitely many rays, or a linear subspace.
#[derive(Clone, Debug)]
pub enum CandidateSet {
    Rays(Vec<Vector>),
    Span(Subspace),
}

impl CandidateSet {
    /// Distance from the unit vector `x` to the candidate's unit points.
    pub fn distance(&self, x: &Vector) -> f64 {
        match self {
            CandidateSet::Rays(rays) => rays.iter().map(|r| (x - r).norm()).fold(f64::INFINITY, f64::min),
            CandidateSet::Span(s) => s.raw_unit_distance(x),
        }
    }

    /// `⟨x, r⟩ ≥ 1 − tol` for some ray, or `‖Px‖ ≥ 1 − tol` for a span.
    pub fn holds(&self, x: &Vector, tol: f64) -> bool {
        match self {
            CandidateSet::Rays(rays) => rays.iter().any(|r| r.dot(x) >= 1.0 - tol),
            CandidateSet::Span(s) => s.project(x).norm() >= 1.0 - tol,
        }
    }

    pub fn span(&self, tol_rank: f64) -> Subspace {
        match self {
            CandidateSet::Rays(rays) => Subspace::from_vectors(rays[0].len(), rays, tol_rank),
            CandidateSet::Span(s) => s.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CandidateSet::Rays(rays) => rays[0].len(),
            CandidateSet::Span(s) => s.ambient_dim(),
        }
    }

    /// A random unit point of the candidate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match self {
            CandidateSet::Rays(rays) => rays[rng.random_range(0..rays.len())].clone(),
            CandidateSet::Span(s) => s.random_unit(rng).expect("candidate spans are nonzero"),
        }
    }

    /// Every ray, or `±` basis vectors plus `count` seeded unit points.
    pub fn probe_points(&self, count: usize, seed: u64) -> Vec<Vector> {
        match self {
            CandidateSet::Rays(rays) => rays.clone(),
            CandidateSet::Span(s) => {
                let mut pts = Vec::new();
                for b in s.basis_vectors() {
                    pts.push(-&b);
                    pts.push(b);
                }
                if s.dim() > 1 {
                    let mut rng = seeded_rng(seed);
                    pts.extend((0..count).filter_map(|_| s.random_unit(&mut rng)));
                }
                pts
            }
        }
    }

    /// Whether the subspace `s` lies inside the candidate.
    pub fn contains_subspace(&self, s: &Subspace, tol: f64) -> bool {
        match self {
            CandidateSet::Rays(_) => s.is_zero(),
            CandidateSet::Span(m) => s.is_subset_of(m, tol),
        }
    }
}

/// A candidate positively invariant subregion of one region (or pattern
/// region).
#[derive(Clone, Debug)]
pub struct PISCandidate {
    pub region: usize,
    pub kind: CandidateKind,
    pub set: CandidateSet,
    /// Eigenvalues generating the candidate.
    pub eigenvalues: Vec<Complex64>,
    /// Fully inside the region, rather than only meeting it.
    pub contained: bool,
    /// Contained and mapped into itself by the jump map.
    pub verified: bool,
}

pub(crate) fn complex_pairs(values: &[Complex64]) -> Vec<[f64; 2]> {
    values.iter().map(|z| [z.re, z.im]).collect()
}

pub(crate) fn vectors(vs: &[Vector]) -> Vec<Vec<f64>> {
    vs.iter().map(|v| v.iter().copied().collect()).collect()
}

impl Serialize for PISCandidate {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = ser.serialize_struct("PISCandidate", 7)?;
        st.serialize_field("region", &self.region)?;
        st.serialize_field("kind", &self.kind)?;
        let gens = match &self.set {
            CandidateSet::Rays(r) => vectors(r),
            CandidateSet::Span(s) => vectors(&s.basis_vectors()),
        };
        st.serialize_field("generators", &gens)?;
        st.serialize_field("dimension", &match &self.set {
            CandidateSet::Rays(_) => 1,
            CandidateSet::Span(s) => s.dim(),
        })?;
        st.serialize_field("eigenvalues", &complex_pairs(&self.eigenvalues))?;
        st.serialize_field("contained", &self.contained)?;
        st.serialize_field("verified", &self.verified)?;
        st.end()
    }
}

/// Containment and one-step invariance of `set` under `x ↦ Gx/‖Gx‖`.
pub fn verify_set(set: &CandidateSet, cone: &dyn Cone, g: &Matrix, samples: usize, seed: u64, tol: &Tolerances) -> (bool, bool) {
    let pts = set.probe_points(samples, seed);
    let contained = pts.iter().all(|x| cone.contains(x));
    if !contained {
        return (false, false);
    }
    let invariant = pts.iter().all(|x| {
        let y = g * x;
        let n = y.norm();
        n >= tol.rank && set.holds(&(y / n), tol.member)
    });
    (true, invariant)
}

fn candidate(
    cone: &dyn Cone,
    g: &Matrix,
    label: usize,
    kind: CandidateKind,
    set: CandidateSet,
    eigenvalues: Vec<Complex64>,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> PISCandidate {
    let (contained, verified) = verify_set(&set, cone, g, samples, seed, tol);
    PISCandidate { region: label, kind, set, eigenvalues, contained, verified }
}

/// One R-eigenspace per independent eigenvector of `λ`.
pub fn reig(m: &Matrix, lambda: Complex64, tol: &Tolerances) -> Result<Vec<Subspace>> {
    let spec = eig(m, tol)?;
    let Some(idx) = spec.find(lambda) else {
        return invalid(format!("{lambda} is not an eigenvalue"));
    };
    spec.pairs[idx].vectors.iter().map(|v| rspan(v, tol)).collect()
}

/// Span of all R-eigenspaces of eigenvalues of magnitude `μ` from an
/// existing decomposition.
pub fn s_mu_of(spec: &Spectrum, mu: f64, tol: &Tolerances) -> Option<(Subspace, Vec<Complex64>)> {
    let n = spec.dim();
    let mut vs = Vec::new();
    let mut values = Vec::new();
    for (_, p) in spec.with_magnitude(mu) {
        values.push(p.value);
        for v in &p.vectors {
            vs.extend(rspan(v, tol).ok()?.basis_vectors());
        }
    }
    if values.is_empty() {
        return None;
    }
    Some((Subspace::from_vectors(n, &vs, tol.rank.max(1e-9)), values))
}

pub fn s_mu(m: &Matrix, mu: f64, tol: &Tolerances) -> Result<Subspace> {
    let spec = eig(m, tol)?;
    match s_mu_of(&spec, mu, tol) {
        Some((s, _)) => Ok(s),
        None => invalid(format!("no eigenvalue has magnitude {mu}")),
    }
}

/// Rays along real eigenvectors with positive eigenvalue lying in the cone.
pub fn pirs_in(cone: &dyn Cone, g: &Matrix, label: usize, tol: &Tolerances) -> Result<Vec<PISCandidate>> {
    let spec = eig(g, tol)?;
    let zero = tol.eig_abs(spec.spectral_radius);
    let mut out = Vec::new();
    for p in &spec.pairs {
        if !p.is_real() || p.value.re <= zero {
            continue;
        }
        for v in p.real_vectors().unwrap_or_default() {
            for dir in [v.clone(), -v] {
                if cone.contains(&dir) {
                    let set = CandidateSet::Rays(vec![dir]);
                    out.push(candidate(cone, g, label, CandidateKind::Ray, set, vec![p.value], 0, 0, tol));
                }
            }
        }
    }
    Ok(out)
}

pub fn find_pirs(partition: &Partition, gs: &[TransitionMatrix], tol: &Tolerances) -> Result<Vec<PISCandidate>> {
    crate::gamma::check_alignment(partition, gs)?;
    let mut out = Vec::new();
    for (i, tm) in gs.iter().enumerate() {
        out.extend(pirs_in(&RegionCone::new(partition, i), &tm.g, i, tol)?);
    }
    Ok(out)
}

fn meets(cone: &dyn Cone, s: &Subspace, samples: usize, seed: u64) -> (bool, bool) {
    let pts = CandidateSet::Span(s.clone()).probe_points(samples, seed);
    let hits = pts.iter().filter(|x| cone.contains(x)).count();
    (hits == pts.len(), hits > 0)
}

/// R-eigenspaces meeting the cone, spans of the fully contained ones, and
/// real generalized eigenspaces of defective eigenvalues.
pub fn invariant_subspaces_in(
    cone: &dyn Cone,
    g: &Matrix,
    label: usize,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<PISCandidate>> {
    let spec = eig(g, tol)?;
    let n = g.nrows();
    let mut out = Vec::new();
    let mut inside: Vec<(Subspace, Complex64)> = Vec::new();
    for (idx, p) in spec.pairs.iter().enumerate() {
        if p.value.im < 0.0 {
            continue;
        }
        for v in &p.vectors {
            let s = rspan(v, tol)?;
            let (all, any) = meets(cone, &s, samples, seed);
            if !any {
                continue;
            }
            let kind = if s.dim() == 1 { CandidateKind::Line } else { CandidateKind::Plane };
            if all {
                inside.push((s.clone(), p.value));
            }
            out.push(candidate(cone, g, label, kind, CandidateSet::Span(s), vec![p.value], samples, seed, tol));
        }
        if p.algebraic > p.geometric {
            let ge = spec.generalized_eigenspace(g, idx, tol);
            if meets(cone, &ge, samples, seed).1 {
                out.push(candidate(cone, g, label, CandidateKind::Subspace, CandidateSet::Span(ge), vec![p.value], samples, seed, tol));
            }
        }
    }
    let k = inside.len();
    if k >= 2 {
        let subsets: Vec<Vec<usize>> = if k <= MAX_SPAN_MEMBERS {
            (1u32..(1 << k)).filter(|m| m.count_ones() >= 2).map(|m| (0..k).filter(|i| m & (1 << i) != 0).collect()).collect()
        } else {
            let mut s: Vec<Vec<usize>> = (0..k).flat_map(|i| ((i + 1)..k).map(move |j| vec![i, j])).collect();
            s.push((0..k).collect());
            s
        };
        for members in subsets {
            let vs: Vec<Vector> = members.iter().flat_map(|&i| inside[i].0.basis_vectors()).collect();
            let span = Subspace::from_vectors(n, &vs, tol.rank.max(1e-9));
            if members.iter().any(|&i| inside[i].0.dim() == span.dim()) {
                continue;
            }
            let c = candidate(
                cone,
                g,
                label,
                CandidateKind::Subspace,
                CandidateSet::Span(span),
                members.iter().map(|&i| inside[i].1).collect(),
                samples,
                seed,
                tol,
            );
            if c.contained {
                out.push(c);
            }
        }
    }
    Ok(out)
}

pub fn find_invariant_subspaces(
    partition: &Partition,
    gs: &[TransitionMatrix],
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<PISCandidate>> {
    crate::gamma::check_alignment(partition, gs)?;
    let mut out = Vec::new();
    for (i, tm) in gs.iter().enumerate() {
        out.extend(invariant_subspaces_in(&RegionCone::new(partition, i), &tm.g, i, samples, seed, tol)?);
    }
    Ok(out)
}

/// Best rational approximation `p/q` of `x ∈ (0, 1)` with `q ≤ max_den`
/// within `tol`, from the continued-fraction convergents.
pub fn rational_approximation(x: f64, max_den: usize, tol: f64) -> Option<(usize, usize)> {
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        let (h2, k2) = (a as i64 * h1 + h0, a as i64 * k1 + k0);
        if k2 as usize > max_den {
            return None;
        }
        if (x - h2 as f64 / k2 as f64).abs() <= tol {
            return Some((h2 as usize, k2 as usize));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac < 1e-15 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Contiguous runs of `true` over a grid, as `(first, last)` index pairs.
fn runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, flags.len() - 1));
    }
    out
}

/// Grid angle with the largest margin; near-ties go to the larger `prefer`.
fn best_angle(thetas: &[f64], margin: impl Fn(f64) -> f64, prefer: impl Fn(f64) -> f64) -> f64 {
    let scored: Vec<(f64, f64)> = thetas.iter().map(|&t| (t, margin(t))).collect();
    let top = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    scored
        .iter()
        .filter(|s| s.1 >= top - 1e-12 || (top.is_infinite() && s.1 == top))
        .max_by(|a, b| prefer(a.0).total_cmp(&prefer(b.0)))
        .map(|s| s.0)
        .unwrap_or(thetas[0])
}

/// Finite ray sets closed under the jump map: pairs `{λ, −λ}` of real
/// eigenvalues, and complex eigenvalues whose argument is a rational
/// multiple of `π`.
pub fn union_of_rays_in(
    cone: &dyn Cone,
    g: &Matrix,
    label: usize,
    max_denominator: usize,
    tol: &Tolerances,
) -> Result<Vec<PISCandidate>> {
    if max_denominator < 2 {
        return invalid("max_denominator must be at least 2");
    }
    let spec = eig(g, tol)?;
    let band = tol.eig_abs(spec.spectral_radius);
    let mut out = Vec::new();
    let push = |rays: Vec<Vector>, values: Vec<Complex64>, out: &mut Vec<PISCandidate>| {
        let set = CandidateSet::Rays(rays);
        let c = candidate(cone, g, label, CandidateKind::UnionOfRays, set, values, 0, 0, tol);
        if c.verified {
            out.push(c);
        }
    };
    for p in spec.pairs.iter().filter(|p| p.is_real() && p.value.re > band) {
        for q in spec.pairs.iter().filter(|q| q.is_real() && (q.value.re + p.value.re).abs() <= band) {
            let (Some(v1s), Some(v2s)) = (p.real_vectors(), q.real_vectors()) else { continue };
            let (v1, v2) = (&v1s[0], &v2s[0]);
            let ray = |t: f64| (v1 * t.cos() + v2 * t.sin()).normalize();
            let thetas: Vec<f64> = (1..ANGLE_GRID).map(|j| std::f64::consts::PI * j as f64 / ANGLE_GRID as f64).collect();
            let ok: Vec<bool> = thetas.iter().map(|&t| cone.contains(&ray(t)) && cone.contains(&ray(-t))).collect();
            for (a, b) in runs(&ok) {
                let t = best_angle(&thetas[a..=b], |t| cone.margin(&ray(t)).min(cone.margin(&ray(-t))), |t| (2.0 * t).sin().abs());
                push(vec![ray(t), ray(-t)], vec![p.value, q.value], &mut out);
            }
        }
    }
    for p in spec.pairs.iter().filter(|p| p.value.im > 0.0) {
        let frac = p.value.arg() / std::f64::consts::PI;
        let Some((num, den)) = rational_approximation(frac, max_denominator, tol.eig) else {
            log::debug!("argument {frac}π of {} is not a small rational multiple of π; treated as irrational", p.value);
            continue;
        };
        let order = 2 * den / gcd(num, 2 * den);
        let Some(s) = rspan(&p.vectors[0], tol).ok().filter(|s| s.dim() == 2) else { continue };
        let b = s.basis_vectors();
        let orbit = |t: f64| -> Vec<Vector> {
            let mut x = (&b[0] * t.cos() + &b[1] * t.sin()).normalize();
            let mut pts = Vec::with_capacity(order);
            for _ in 0..order {
                pts.push(x.clone());
                let y = g * &x;
                x = y.normalize();
            }
            pts
        };
        let span = 2.0 * std::f64::consts::PI / order as f64;
        let grid = ANGLE_GRID / 2;
        let thetas: Vec<f64> = (0..grid).map(|j| span * (j as f64 + 0.5) / grid as f64).collect();
        let ok: Vec<bool> = thetas.iter().map(|&t| orbit(t).iter().all(|x| cone.contains(x))).collect();
        for (a, bidx) in runs(&ok) {
            let t = best_angle(
                &thetas[a..=bidx],
                |t| orbit(t).iter().map(|x| cone.margin(x)).fold(f64::INFINITY, f64::min),
                |t| -(t - 0.5 * span).abs(),
            );
            push(orbit(t), vec![p.value, p.value.conj()], &mut out);
        }
    }
    Ok(out)
}

pub fn find_union_of_rays(
    partition: &Partition,
    gs: &[TransitionMatrix],
    max_denominator: usize,
    tol: &Tolerances,
) -> Result<Vec<PISCandidate>> {
    crate::gamma::check_alignment(partition, gs)?;
    let mut out = Vec::new();
    for (i, tm) in gs.iter().enumerate() {
        out.extend(union_of_rays_in(&RegionCone::new(partition, i), &tm.g, i, max_denominator, tol)?);
    }
    Ok(out)
}

/// Outcome of intersecting a subspace with the closure of a cone.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Intersection {
    /// Witnesses are unit vectors in the subspace and the closure.
    Intersects { witnesses: Vec<Vec<f64>> },
    /// Search found nothing; not a certificate.
    NotFound,
    /// Certified empty.
    Disjoint,
}

impl Intersection {
    pub fn intersects(&self) -> bool {
        matches!(self, Intersection::Intersects { .. })
    }
}

fn found(x: Vector) -> Intersection {
    Intersection::Intersects { witnesses: vec![x.normalize().iter().copied().collect()] }
}

/// Decides `S ∩ cl(cone) ≠ {0}`: exactly by linear programming for
/// polyhedral cones and lines, by multi-start margin ascent otherwise.
pub fn intersect_closure(cone: &dyn Cone, s: &Subspace, starts: usize, seed: u64, tol: &Tolerances) -> Intersection {
    if s.is_zero() {
        return Intersection::Disjoint;
    }
    let basis = s.basis_vectors();
    if let Some(normals) = cone.halfspaces() {
        return polyhedral_intersection(normals, s, &basis);
    }
    let slack = tol.member;
    if s.dim() == 1 {
        for x in [basis[0].clone(), -&basis[0]] {
            if cone.margin(&x) >= -slack {
                return found(x);
            }
        }
        return Intersection::Disjoint;
    }
    let mut rng = seeded_rng(seed);
    let d = s.dim();
    let starts_c: Vec<Vector> = (0..starts).map(|_| UnitSphere(d).sample(&mut rng)).collect();
    for c in &starts_c {
        let x = s.point(c);
        if cone.margin(&x) >= -slack {
            return found(x);
        }
    }
    for c0 in starts_c {
        let mut c = c0;
        let mut best = cone.margin(&s.point(&c));
        let mut step = 0.5;
        let mut fails = 0;
        while step > 1e-4 {
            let trial = (&c + Vector::from_fn(d, |_, _| { let z: f64 = StandardNormal.sample(&mut rng); step * z })).normalize();
            let m = cone.margin(&s.point(&trial));
            if m > best {
                best = m;
                c = trial;
                fails = 0;
                if best >= -slack {
                    return found(s.point(&c));
                }
            } else {
                fails += 1;
                if fails >= 8 {
                    step *= 0.5;
                    fails = 0;
                }
            }
        }
    }
    Intersection::NotFound
}

fn polyhedral_intersection(normals: &[Vector], s: &Subspace, basis: &[Vector]) -> Intersection {
    if normals.is_empty() {
        return found(basis[0].clone());
    }
    let d = basis.len();
    let coeffs: Vec<Vec<f64>> = normals.iter().map(|nv| basis.iter().map(|b| nv.dot(b)).collect()).collect();
    for k in 0..d {
        for sign in [1.0, -1.0] {
            let mut lp = Problem::new(OptimizationDirection::Maximize);
            let cs: Vec<_> = (0..d).map(|j| if j == k { lp.add_var(0.0, (sign, sign)) } else { lp.add_var(0.0, (-1.0, 1.0)) }).collect();
            let t = lp.add_var(1.0, (f64::NEG_INFINITY, 1.0));
            for row in &coeffs {
                let mut expr: Vec<_> = cs.iter().zip(row).map(|(v, a)| (*v, *a)).collect();
                expr.push((t, -1.0));
                lp.add_constraint(expr.as_slice(), ComparisonOp::Ge, 0.0);
            }
            let Ok(outcome) = lp.solve() else { continue };
            let Some(sol) = outcome.solution() else { continue };
            if sol.var_value(t) >= -1e-12 {
                let c = Vector::from_iterator(d, cs.iter().map(|v| sol.var_value(*v)));
                return found(s.point(&c));
            }
        }
    }
    Intersection::Disjoint
}

#[derive(Clone, Debug, Serialize)]
pub struct SMuEntry {
    pub mu: f64,
    pub dimension: usize,
    pub basis: Vec<Vec<f64>>,
    pub eigenvalues: Vec<[f64; 2]>,
    pub intersection: Intersection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PisScreen {
    /// Some `S_μ` meets the closure.
    Possible,
    /// Every `S_μ` is certified disjoint: no PIS, IETs cannot lock here.
    RuledOut,
    /// No intersection found, without a certificate.
    NoneFound,
}

#[derive(Clone, Debug, Serialize)]
pub struct SMuReport {
    pub region: usize,
    pub entries: Vec<SMuEntry>,
    pub mu_max: Option<f64>,
    pub screen: PisScreen,
}

/// Necessary-condition screening of one region through its `S_μ` subspaces.
pub fn screen_cone(cone: &dyn Cone, g: &Matrix, label: usize, starts: usize, seed: u64, tol: &Tolerances) -> Result<SMuReport> {
    let spec = eig(g, tol)?;
    let mut entries = Vec::new();
    for mu in spec.magnitudes() {
        let Some((s, values)) = s_mu_of(&spec, mu, tol) else { continue };
        let intersection = intersect_closure(cone, &s, starts, seed, tol);
        entries.push(SMuEntry {
            mu,
            dimension: s.dim(),
            basis: vectors(&s.basis_vectors()),
            eigenvalues: complex_pairs(&values),
            intersection,
        });
    }
    let mu_max = entries.iter().find(|e| e.intersection.intersects()).map(|e| e.mu);
    let screen = if mu_max.is_some() {
        PisScreen::Possible
    } else if entries.iter().all(|e| e.intersection == Intersection::Disjoint) {
        PisScreen::RuledOut
    } else {
        PisScreen::NoneFound
    };
    Ok(SMuReport { region: label, entries, mu_max, screen })
}

pub fn screen_region(partition: &Partition, index: usize, g: &Matrix, starts: usize, seed: u64, tol: &Tolerances) -> Result<SMuReport> {
    screen_cone(&RegionCone::new(partition, index), g, index, starts, seed, tol)
}

#[derive(Clone, Debug, Serialize)]
pub struct PirFreeScreen {
    pub region: usize,
    /// A real negative eigenvalue whose eigenline lies in the closure.
    pub negative_eigenline: bool,
    /// Two distinct eigenvalues of equal magnitude whose `S_μ` meets the
    /// closure.
    pub equal_magnitude_pair: bool,
    /// A real positive eigenvector in the closure.
    pub has_pir: bool,
    /// Neither condition holds and no PIR exists.
    pub no_pis_possible: bool,
    /// Every sub-decision above was exact rather than a failed search.
    pub certified: bool,
}

/// Necessary conditions for a PIS that contains no PIR.
pub fn screen_pis_without_pir(cone: &dyn Cone, g: &Matrix, label: usize, starts: usize, seed: u64, tol: &Tolerances) -> Result<PirFreeScreen> {
    let spec = eig(g, tol)?;
    let band = tol.eig_abs(spec.spectral_radius);
    let in_closure = |x: &Vector| cone.margin(x) >= -tol.member;
    let mut negative_eigenline = false;
    let mut has_pir = false;
    for p in spec.pairs.iter().filter(|p| p.is_real()) {
        for v in p.real_vectors().unwrap_or_default() {
            if p.value.re < -band && in_closure(&v) && in_closure(&-&v) {
                negative_eigenline = true;
            }
            if p.value.re > band && (in_closure(&v) || in_closure(&-&v)) {
                has_pir = true;
            }
        }
    }
    let mut equal_magnitude_pair = false;
    let mut certified = true;
    for mu in spec.magnitudes() {
        if spec.with_magnitude(mu).count() < 2 {
            continue;
        }
        let Some((s, _)) = s_mu_of(&spec, mu, tol) else { continue };
        match intersect_closure(cone, &s, starts, seed, tol) {
            Intersection::Intersects { .. } => equal_magnitude_pair = true,
            Intersection::NotFound => certified = false,
            Intersection::Disjoint => {}
        }
    }
    let no_pis_possible = !negative_eigenline && !equal_magnitude_pair && !has_pir;
    Ok(PirFreeScreen { region: label, negative_eigenline, equal_magnitude_pair, has_pir, no_pis_possible, certified })
}

/// `S_{μ_max}(G) ∩ span(candidate)` for the largest magnitude whose `S_μ`
/// meets the candidate's span: where generic iterates inside the
/// candidate accumulate.
pub fn dominant_limit_set(candidate: &PISCandidate, g: &Matrix, tol: &Tolerances) -> Result<Subspace> {
    let spec = eig(g, tol)?;
    let span = candidate.set.span(tol.rank.max(1e-9));
    let angle_tol = tol.member.sqrt();
    for mu in spec.magnitudes() {
        let Some((s, _)) = s_mu_of(&spec, mu, tol) else { continue };
        let meet = s.intersection(&span, angle_tol);
        if !meet.is_zero() {
            return Ok(meet);
        }
    }
    Ok(Subspace::zero(g.nrows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{subspace_distance, unit_sphere_samples};
    use crate::regions::{build_cone_partition, build_polyhedral_partition};
    use proptest::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn diag(d: &[f64]) -> Matrix {
        Matrix::from_diagonal(&v(d))
    }

    fn rot(theta: f64, scale: f64) -> Matrix {
        Matrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]) * scale
    }

    fn whole(n: usize) -> Partition {
        Partition::whole_space(n, 0.1).unwrap()
    }

    fn random_basis(n: usize, seed: u64) -> Matrix {
        for k in 0.. {
            let cols = unit_sphere_samples(n, n, seed.wrapping_mul(31).wrapping_add(k));
            let m = Matrix::from_columns(&cols) + Matrix::identity(n, n) * 1.5;
            let sv = m.singular_values();
            if sv.max() / sv.min() < 5.0 {
                return m;
            }
        }
        unreachable!()
    }

    #[test]
    fn reig_diagonal_and_rotation() {
        let l = reig(&diag(&[3.0, 1.0]), Complex64::new(3.0, 0.0), &tol()).unwrap();
        assert_eq!(l.len(), 1);
        assert!(l[0].projector_distance(&Subspace::from_vectors(2, &[v(&[1.0, 0.0])], 1e-9)) < 1e-12);
        let p = reig(&rot(std::f64::consts::FRAC_PI_2, 1.0), Complex64::new(0.0, 1.0), &tol()).unwrap();
        assert_eq!(p[0].dim(), 2);
        assert!(reig(&diag(&[3.0, 1.0]), Complex64::new(2.0, 0.0), &tol()).is_err());
    }

    #[test]
    fn reig_matches_planted_eigenvectors() {
        let vb = random_basis(4, 3);
        // Real Jordan form: a rotation-scaling pair and two real eigenvalues.
        let mut j = Matrix::zeros(4, 4);
        j.view_mut((0, 0), (2, 2)).copy_from(&rot(0.7, 1.5));
        j[(2, 2)] = 0.8;
        j[(3, 3)] = -0.4;
        let m = &vb * j * vb.clone().try_inverse().unwrap();
        let plane = Subspace::from_vectors(4, &[vb.column(0).into(), vb.column(1).into()], 1e-12);
        let lam = Complex64::from_polar(1.5, 0.7);
        let got = reig(&m, lam, &tol()).unwrap();
        assert!(got[0].projector_distance(&plane) < 1e-8);
        let line = Subspace::from_vectors(4, &[vb.column(3).into()], 1e-12);
        let got = reig(&m, Complex64::new(-0.4, 0.0), &tol()).unwrap();
        assert!(got[0].projector_distance(&line) < 1e-8);
    }

    #[test]
    fn s_mu_cases() {
        let s = s_mu(&diag(&[2.0, -2.0, 1.0]), 2.0, &tol()).unwrap();
        assert_eq!(s.dim(), 2);
        assert!(s.contains(&v(&[1.0, 0.0, 0.0]), 1e-12) && s.contains(&v(&[0.0, 1.0, 0.0]), 1e-12));
        let s = s_mu(&diag(&[3.0, 1.0, 0.5]), 3.0, &tol()).unwrap();
        assert_eq!(s.dim(), 1);
        assert!(s_mu(&diag(&[3.0, 1.0]), 2.0, &tol()).is_err());
        // Conjugate pair of modulus 2 together with the real eigenvalue −2.
        let vb = random_basis(4, 8);
        let mut j = Matrix::zeros(4, 4);
        j.view_mut((0, 0), (2, 2)).copy_from(&rot(1.1, 2.0));
        j[(2, 2)] = -2.0;
        j[(3, 3)] = 0.5;
        let m = &vb * j * vb.clone().try_inverse().unwrap();
        let s = s_mu(&m, 2.0, &tol()).unwrap();
        assert_eq!(s.dim(), 3);
        let want = Subspace::from_vectors(4, &[vb.column(0).into(), vb.column(1).into(), vb.column(2).into()], 1e-12);
        assert!(s.projector_distance(&want) < 1e-8);
    }

    #[test]
    fn whole_space_pirs_are_all_positive_eigendirections() {
        let p = whole(3);
        let gs = vec![TransitionMatrix::new(0.1, diag(&[2.0, -1.0, 0.5])).unwrap()];
        let pirs = find_pirs(&p, &gs, &tol()).unwrap();
        assert_eq!(pirs.len(), 4);
        assert!(pirs.iter().all(|c| c.verified && c.kind == CandidateKind::Ray));
    }

    #[test]
    fn planted_pir_in_planar_cone() {
        let c = [v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[-1.0, 0.0]), v(&[0.0, -1.0])];
        let p = build_cone_partition(&c, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        // Eigenvectors (1, 0.2) and (0.3, 1): only the first ray lies in cone 0.
        let vb = Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.2, 1.0]);
        let g0 = &vb * diag(&[1.2, 0.7]) * vb.clone().try_inverse().unwrap();
        let gs = vec![
            TransitionMatrix::new(0.1, g0).unwrap(),
            TransitionMatrix::new(0.2, rot(0.3, 1.0)).unwrap(),
            TransitionMatrix::new(0.3, rot(0.3, 1.0)).unwrap(),
            TransitionMatrix::new(0.4, rot(0.3, 1.0)).unwrap(),
        ];
        let pirs = find_pirs(&p, &gs, &tol()).unwrap();
        assert_eq!(pirs.len(), 1);
        let CandidateSet::Rays(r) = &pirs[0].set else { panic!() };
        assert!((&r[0] - v(&[1.0, 0.2]).normalize()).norm() < 1e-12);
        assert_eq!(pirs[0].region, 0);
    }

    #[test]
    fn rotation_plane_is_invariant_subspace() {
        let p = whole(2);
        let gs = vec![TransitionMatrix::new(0.1, rot(0.9, 1.3)).unwrap()];
        let subs = find_invariant_subspaces(&p, &gs, 64, 1, &tol()).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].kind, CandidateKind::Plane);
        assert!(subs[0].verified);
    }

    #[test]
    fn negative_eigenline_inside_a_cone() {
        // Cone around e₁ and −e₁ together (shared τ) holds the eigenline of −0.9.
        let c = [v(&[1.0, 0.0, 0.0]), v(&[-1.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0]), v(&[0.0, -1.0, 0.0]), v(&[0.0, 0.0, 1.0]), v(&[0.0, 0.0, -1.0])];
        let p = build_cone_partition(&c, &[0.1, 0.1, 0.2, 0.2, 0.3, 0.3]).unwrap();
        let g = diag(&[-0.9, 1.2, 0.5]);
        let gs = vec![
            TransitionMatrix::new(0.1, g.clone()).unwrap(),
            TransitionMatrix::new(0.2, g.clone()).unwrap(),
            TransitionMatrix::new(0.3, g.clone()).unwrap(),
        ];
        let subs = find_invariant_subspaces(&p, &gs, 64, 1, &tol()).unwrap();
        let line = subs.iter().find(|c| c.region == 0 && c.kind == CandidateKind::Line && c.verified).unwrap();
        assert!((line.eigenvalues[0].re + 0.9).abs() < 1e-12);
        let scr = screen_pis_without_pir(&RegionCone::new(&p, 0), &g, 0, 64, 1, &tol()).unwrap();
        assert!(scr.negative_eigenline && !scr.has_pir);
    }

    #[test]
    fn planted_plane_in_wide_cone() {
        let vb = random_basis(3, 12);
        let mut j = Matrix::zeros(3, 3);
        j.view_mut((0, 0), (2, 2)).copy_from(&rot(0.5, 1.0));
        j[(2, 2)] = 0.3;
        let g = &vb * j * vb.clone().try_inverse().unwrap();
        let normal = vb.clone().try_inverse().unwrap().row(2).transpose();
        // Two cones split by the plane's normal direction; both contain the plane
        // only if it is whole-space, so use the plane's own halfspace pair.
        let p = build_polyhedral_partition(3, vec![(vec![], 0.1)]).unwrap();
        let gs = vec![TransitionMatrix::new(0.1, g.clone()).unwrap()];
        let subs = find_invariant_subspaces(&p, &gs, 64, 2, &tol()).unwrap();
        let plane = subs.iter().find(|c| c.kind == CandidateKind::Plane).unwrap();
        assert!(plane.verified);
        let CandidateSet::Span(s) = &plane.set else { panic!() };
        assert!(s.basis_vectors().iter().all(|b| b.dot(&normal).abs() < 1e-8));
        let mut rng = seeded_rng(4);
        for _ in 0..50 {
            let mut x = s.random_unit(&mut rng).unwrap();
            for _ in 0..20 {
                x = (&g * &x).normalize();
                assert!(subspace_distance(&x, s, &tol()).unwrap() <= tol().member);
            }
        }
    }

    #[test]
    fn plus_minus_pair_gives_two_ray_union() {
        let p = whole(2);
        let gs = vec![TransitionMatrix::new(0.1, diag(&[2.0, -2.0])).unwrap()];
        let u = find_union_of_rays(&p, &gs, 12, &tol()).unwrap();
        assert_eq!(u.len(), 1);
        let CandidateSet::Rays(r) = &u[0].set else { panic!() };
        assert_eq!(r.len(), 2);
        assert!(u[0].verified);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let has = |w: &Vector| r.iter().any(|x| (x - w).norm() < 1e-9 || (x + w).norm() < 1e-9);
        assert!(has(&v(&[s, s])) && has(&v(&[s, -s])));
    }

    #[test]
    fn quarter_turn_gives_four_ray_orbit() {
        let p = whole(2);
        let gs = vec![TransitionMatrix::new(0.1, rot(std::f64::consts::FRAC_PI_2, 2.0)).unwrap()];
        let u = find_union_of_rays(&p, &gs, 12, &tol()).unwrap();
        assert_eq!(u.len(), 1);
        let CandidateSet::Rays(r) = &u[0].set else { panic!() };
        assert_eq!(r.len(), 4);
        assert!(u[0].verified);
        assert!(find_union_of_rays(&p, &gs, 1, &tol()).is_err());
    }

    #[test]
    fn planted_two_ray_union_with_dominant_opposite_pair() {
        let vb = random_basis(4, 21);
        let g = &vb * diag(&[1.5, -1.5, 0.6, -0.2]) * vb.clone().try_inverse().unwrap();
        let v1 = vb.column(0).normalize();
        let v2 = vb.column(1).normalize();
        let u = (&v1 + &v2).normalize();
        let w = (&v1 - &v2).normalize();
        // Narrow cells around ±u and ±w carry the shared τ.
        let mut centers = vec![u.clone(), w.clone()];
        let mut taus = vec![0.1, 0.1];
        for (k, c) in unit_sphere_samples(4, 30, 6).into_iter().enumerate() {
            if c.dot(&u).abs() < 0.8 && c.dot(&w).abs() < 0.8 {
                centers.push(c);
                taus.push(0.2 + 0.001 * k as f64);
            }
        }
        let p = build_cone_partition(&centers, &taus).unwrap();
        let gs: Vec<TransitionMatrix> = p.taus().iter().map(|&t| TransitionMatrix::new(t, g.clone()).unwrap()).collect();
        let found = union_of_rays_in(&RegionCone::new(&p, 0), &g, 0, 12, &tol()).unwrap();
        assert!(!found.is_empty());
        assert!(found.iter().all(|c| c.verified));
        let CandidateSet::Rays(r) = &found[0].set else { panic!() };
        let s = Subspace::from_vectors(4, &[v1, v2], 1e-12);
        assert!(r.iter().all(|x| s.contains(x, 1e-9)));
        assert_eq!(gs.len(), p.len());
    }

    #[test]
    fn rational_angles() {
        assert_eq!(rational_approximation(0.5, 12, 1e-9), Some((1, 2)));
        assert_eq!(rational_approximation(2.0 / 7.0, 12, 1e-9), Some((2, 7)));
        assert_eq!(rational_approximation(1.0 / 13.0, 12, 1e-9), None);
        assert_eq!(rational_approximation(std::f64::consts::FRAC_1_SQRT_2, 12, 1e-9), None);
    }

    #[test]
    fn dominant_eigenvector_inside_region_sets_mu_max() {
        let c = [v(&[1.0, 0.1, 0.0]), v(&[-1.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0]), v(&[0.0, 0.0, 1.0])];
        let p = build_cone_partition(&c, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let rep = screen_region(&p, 0, &diag(&[3.0, 1.0, 0.5]), 64, 1, &tol()).unwrap();
        assert_eq!(rep.mu_max, Some(3.0));
        assert_eq!(rep.screen, PisScreen::Possible);
        match &rep.entries[0].intersection {
            Intersection::Intersects { witnesses } => assert!(p.margin(0, &Vector::from_vec(witnesses[0].clone())) >= -1e-6),
            other => panic!("{other:?}"),
        }
    }

    fn thin_cone() -> Partition {
        // A narrow polyhedral cone around (1, 1, 1) plus a catch-all region.
        let axis = v(&[1.0, 1.0, 1.0]).normalize();
        let normals: Vec<Vector> = [v(&[1.0, -1.0, 0.0]), v(&[0.0, 1.0, -1.0]), v(&[-1.0, 0.0, 1.0])]
            .iter()
            .flat_map(|d| {
                let d = d.normalize();
                [&axis * 0.2 + &d, &axis * 0.2 - &d]
            })
            .collect();
        build_polyhedral_partition(3, vec![(normals, 0.1), (vec![], 0.2)]).unwrap()
    }

    #[test]
    fn thin_cone_is_pis_free() {
        let p = thin_cone();
        let g = diag(&[3.0, 2.0, 0.5]);
        let rep = screen_region(&p, 0, &g, 64, 1, &tol()).unwrap();
        assert_eq!(rep.screen, PisScreen::RuledOut);
        assert_eq!(rep.mu_max, None);
        // Dense sampling finds no axis direction in the cone.
        for x in unit_sphere_samples(3, 20_000, 3) {
            if p.margin(0, &x) >= 0.0 {
                assert!(x.iter().all(|c| c.abs() < 0.99));
            }
        }
        let scr = screen_pis_without_pir(&RegionCone::new(&p, 0), &g, 0, 64, 1, &tol()).unwrap();
        assert!(scr.no_pis_possible && scr.certified);
    }

    #[test]
    fn lp_and_search_agree_on_thin_cone() {
        struct Opaque<'a>(RegionCone<'a>);
        impl Cone for Opaque<'_> {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn contains(&self, x: &Vector) -> bool {
                self.0.contains(x)
            }
            fn margin(&self, x: &Vector) -> f64 {
                self.0.margin(x)
            }
        }
        let p = thin_cone();
        let cone = RegionCone::new(&p, 0);
        for (k, plane) in [[0usize, 1], [0, 2], [1, 2]].iter().enumerate() {
            let mut a = Vector::zeros(3);
            let mut b = Vector::zeros(3);
            a[plane[0]] = 1.0;
            b[plane[1]] = 1.0;
            let s = Subspace::from_vectors(3, &[a, b], 1e-12);
            let exact = intersect_closure(&cone, &s, 64, k as u64, &tol());
            let search = intersect_closure(&Opaque(cone), &s, 64, k as u64, &tol());
            assert_eq!(exact, Intersection::Disjoint);
            assert_eq!(search, Intersection::NotFound);
        }
        let diag_plane = Subspace::from_vectors(3, &[v(&[1.0, 1.0, 0.0]), v(&[0.0, 0.0, 1.0])], 1e-12);
        assert!(intersect_closure(&cone, &diag_plane, 64, 0, &tol()).intersects());
        assert!(intersect_closure(&Opaque(cone), &diag_plane, 64, 0, &tol()).intersects());
    }

    #[test]
    fn pir_free_conditions() {
        let c = [v(&[1.0, 1.0]), v(&[-1.0, 1.0]), v(&[-1.0, -1.0]), v(&[1.0, -1.0])];
        let p = build_cone_partition(&c, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        // Eigenvectors (1, −0.3) and (−0.3, 1) avoid the closed first quadrant.
        let vb = Matrix::from_row_slice(2, 2, &[1.0, -0.3, -0.3, 1.0]);
        let g = &vb * diag(&[2.0, 1.0]) * vb.clone().try_inverse().unwrap();
        let scr = screen_pis_without_pir(&RegionCone::new(&p, 0), &g, 0, 64, 1, &tol()).unwrap();
        assert!(scr.no_pis_possible && scr.certified);
        let scr = screen_pis_without_pir(&RegionCone::new(&p, 0), &diag(&[2.0, 1.0]), 0, 64, 1, &tol()).unwrap();
        assert!(scr.has_pir && !scr.no_pis_possible);
        let merged = build_cone_partition(&c, &[0.1, 0.2, 0.1, 0.4]).unwrap();
        let m = diag(&[1.0, -3.0]);
        let g = Matrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]) * 0.5;
        let g = g.clone() * &m * g.try_inverse().unwrap();
        let scr = screen_pis_without_pir(&RegionCone::new(&merged, 0), &g, 0, 64, 1, &tol()).unwrap();
        assert!(scr.negative_eigenline && !scr.no_pis_possible);
    }

    #[test]
    fn dominant_limit_set_cases() {
        let g = diag(&[2.0, 1.0, 0.5]);
        let ray = PISCandidate {
            region: 0,
            kind: CandidateKind::Ray,
            set: CandidateSet::Rays(vec![v(&[0.0, 1.0, 0.0])]),
            eigenvalues: vec![Complex64::new(1.0, 0.0)],
            contained: true,
            verified: true,
        };
        let l = dominant_limit_set(&ray, &g, &tol()).unwrap();
        assert!(l.contains(&v(&[0.0, 1.0, 0.0]), 1e-12) && l.dim() == 1);
        let sub = PISCandidate {
            kind: CandidateKind::Subspace,
            set: CandidateSet::Span(Subspace::from_vectors(3, &[v(&[1.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0])], 1e-12)),
            ..ray
        };
        let l = dominant_limit_set(&sub, &g, &tol()).unwrap();
        assert!(l.dim() == 1 && l.contains(&v(&[1.0, 0.0, 0.0]), 1e-12));
    }

    #[test]
    fn iterates_in_planted_plane_reach_limit_set() {
        let vb = random_basis(4, 31);
        let g = &vb * diag(&[1.4, 0.9, 0.5, -0.3]) * vb.clone().try_inverse().unwrap();
        let plane = Subspace::from_vectors(4, &[vb.column(0).into(), vb.column(2).into()], 1e-12);
        let cand = PISCandidate {
            region: 0,
            kind: CandidateKind::Subspace,
            set: CandidateSet::Span(plane.clone()),
            eigenvalues: vec![],
            contained: true,
            verified: true,
        };
        let limit = dominant_limit_set(&cand, &g, &tol()).unwrap();
        let mut rng = seeded_rng(9);
        for _ in 0..20 {
            let mut x = plane.random_unit(&mut rng).unwrap();
            for _ in 0..200 {
                x = (&g * &x).normalize();
            }
            assert!(limit.raw_unit_distance(&x) <= 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn verified_candidates_are_positively_invariant(seed in 0u64..400) {
            let p = crate::regions::random_cone_partition(3, 6, (0.03, 0.23), seed).unwrap();
            let gs: Vec<TransitionMatrix> = p.taus().iter().enumerate().map(|(i, &t)| {
                let vb = random_basis(3, seed * 7 + i as u64);
                let d = unit_sphere_samples(3, 1, seed + 100 + i as u64).remove(0);
                TransitionMatrix::new(t, &vb * Matrix::from_diagonal(&(d * 2.0)) * vb.clone().try_inverse().unwrap()).unwrap()
            }).collect();
            let mut all = find_pirs(&p, &gs, &tol()).unwrap();
            all.extend(find_invariant_subspaces(&p, &gs, 64, seed, &tol()).unwrap());
            all.extend(find_union_of_rays(&p, &gs, 12, &tol()).unwrap());
            let mut rng = seeded_rng(seed);
            for c in all.iter().filter(|c| c.verified) {
                for _ in 0..100 {
                    let x = c.set.sample(&mut rng);
                    let s = crate::gamma::gamma_step(&p, &gs, &x, &tol()).unwrap();
                    prop_assert_eq!(s.region, c.region);
                    prop_assert!(c.set.holds(&s.next, tol().member));
                }
            }
        }

        #[test]
        fn s_mu_is_invariant(seed in 0u64..400) {
            let vb = random_basis(4, seed);
            let mut j = Matrix::zeros(4, 4);
            j.view_mut((0, 0), (2, 2)).copy_from(&rot(0.4 + seed as f64 * 1e-3, 1.0));
            j[(2, 2)] = -1.0;
            j[(3, 3)] = 0.5;
            let g = &vb * j * vb.clone().try_inverse().unwrap();
            for mu in [1.0, 0.5] {
                let s = s_mu(&g, mu, &tol()).unwrap();
                for b in s.basis_vectors() {
                    let y = (&g * b).normalize();
                    prop_assert!(subspace_distance(&y, &s, &tol()).unwrap() <= tol().member);
                }
            }
        }

        #[test]
        fn invariant_subspace_iff_contained_eigenspace(seed in 0u64..400) {
            let p = crate::regions::random_cone_partition(3, 4, (0.03, 0.23), seed).unwrap();
            let vb = random_basis(3, seed + 5);
            let g = &vb * diag(&[1.3, -0.8, 0.4]) * vb.clone().try_inverse().unwrap();
            for i in 0..p.len() {
                let cone = RegionCone::new(&p, i);
                let subs = invariant_subspaces_in(&cone, &g, i, 128, seed, &tol()).unwrap();
                let found = subs.iter().any(|c| c.verified);
                let direct = (0..3).any(|k| {
                    let e = vb.column(k).normalize();
                    cone.contains(&e) && cone.contains(&-e)
                });
                prop_assert_eq!(found, direct);
            }
        }
    }
}
