//! Conic partitions of the state space and the relative triggering rule.

use std::sync::Arc;

use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numkit::{expm, seeded_rng, unit_sphere_samples, Matrix, Tolerances, UnitSphere, Vector};
use crate::system::LinearSystem;

const GRID_STEPS: usize = 2000;
const TIE_TOL: f64 = 1e-12;
const MIN_ACCEPTANCE: f64 = 1e-5;
const ACCEPTANCE_PROBE: usize = 100_000;
const MAX_ATTEMPTS: usize = 20_000_000;
const BATCH: usize = 1024;

/// Relative thresholding rule: `τ_e(x)` is the first `τ > 0` with
/// `‖x(τ) − x‖ = σ‖x(τ)‖` along the held-input flow.
#[derive(Clone, Debug)]
pub struct RelativeTrigger {
    system: LinearSystem,
    sigma: f64,
    horizon: f64,
    tol_conv: f64,
    bk: Matrix,
    generator: Matrix,
    generator_norm: f64,
    step: Vec<f64>,
}

impl RelativeTrigger {
    pub fn new(system: LinearSystem, sigma: f64, horizon: f64, tol: &Tolerances) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return invalid(format!("σ must be positive, got {sigma}"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return invalid(format!("horizon must be positive, got {horizon}"));
        }
        tol.validate()?;
        let n = system.n();
        // z = [x; BKx₀] obeys ż = [[A, I], [0, 0]] z.
        let mut generator = Matrix::zeros(2 * n, 2 * n);
        generator.view_mut((0, 0), (n, n)).copy_from(system.a());
        generator.view_mut((0, n), (n, n)).fill_with_identity();
        let h = horizon / GRID_STEPS as f64;
        let e = expm(&(&generator * h))?;
        let step = row_major(&e);
        let generator_norm = generator.norm();
        let bk = system.bk();
        Ok(RelativeTrigger { system, sigma, horizon, tol_conv: tol.conv, bk, generator, generator_norm, step })
    }

    pub fn system(&self) -> &LinearSystem {
        &self.system
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.system.n()
    }

    /// Earliest crossing time, or the horizon when the threshold is never met.
    pub fn tau_e(&self, x: &Vector) -> Result<f64> {
        let n = self.dim();
        if x.len() != n {
            return invalid(format!("state has length {}, expected {n}", x.len()));
        }
        let norm = x.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return invalid("τ_e is undefined at the origin");
        }
        let x0 = x / norm;
        let w = &self.bk * &x0;
        let mut z: Vec<f64> = x0.iter().chain(w.iter()).copied().collect();
        let mut next = vec![0.0; 2 * n];
        let h = self.horizon / GRID_STEPS as f64;
        for j in 1..=GRID_STEPS {
            mat_vec(&self.step, &z, &mut next);
            if self.crossing(&next[..n], x0.as_slice()) >= 0.0 {
                return Ok(self.refine(&z, (j - 1) as f64 * h, h, x0.as_slice()));
            }
            std::mem::swap(&mut z, &mut next);
        }
        Ok(self.horizon)
    }

    fn crossing(&self, x: &[f64], x0: &[f64]) -> f64 {
        let mut diff = 0.0;
        let mut own = 0.0;
        for (a, b) in x.iter().zip(x0) {
            diff += (a - b) * (a - b);
            own += a * a;
        }
        diff.sqrt() - self.sigma * own.sqrt()
    }

    fn refine(&self, z_lo: &[f64], t_lo: f64, h: f64, x0: &[f64]) -> f64 {
        let n = self.dim();
        let zv = Vector::from_column_slice(z_lo);
        let local = LocalFlow::new(&self.generator, self.generator_norm, &zv, h);
        let (mut lo, mut hi) = (0.0, h);
        while hi - lo > self.tol_conv && hi > lo {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let z = local.at(mid);
            if self.crossing(&z.as_slice()[..n], x0) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        t_lo + 0.5 * (lo + hi)
    }
}

/// `s ↦ exp(Ā s) z` on one grid cell: a Taylor polynomial when the cell is
/// short, otherwise a fresh exponential per evaluation.
enum LocalFlow<'a> {
    Series(Vec<Vector>),
    Exact(&'a Matrix, Vector),
}

impl<'a> LocalFlow<'a> {
    fn new(generator: &'a Matrix, generator_norm: f64, z: &Vector, h: f64) -> Self {
        let q = generator_norm * h;
        if q >= 0.5 {
            return LocalFlow::Exact(generator, z.clone());
        }
        let mut terms = vec![z.clone()];
        let mut bound = 1.0;
        let mut k = 1;
        while bound > 1e-18 && k < 60 {
            let t = generator * terms.last().unwrap() / k as f64;
            terms.push(t);
            bound *= q / k as f64;
            k += 1;
        }
        LocalFlow::Series(terms)
    }

    fn at(&self, s: f64) -> Vector {
        match self {
            LocalFlow::Series(terms) => {
                let mut acc = terms.last().unwrap().clone();
                for t in terms.iter().rev().skip(1) {
                    acc = acc * s + t;
                }
                acc
            }
            LocalFlow::Exact(g, z) => match expm(&(*g * s)) {
                Ok(e) => e * z,
                Err(_) => Vector::from_element(z.len(), f64::NAN),
            },
        }
    }
}

fn row_major(m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn mat_vec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * n..(i + 1) * n];
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// Convenience wrapper building a one-off trigger.
pub fn tau_e_relative(sys: &LinearSystem, x: &Vector, sigma: f64, horizon: f64, tol: &Tolerances) -> Result<f64> {
    RelativeTrigger::new(sys.clone(), sigma, horizon, tol)?.tau_e(x)
}

/// `τ_e` at `count` seeded sphere samples, in sample order.
pub fn tau_e_field(trigger: &RelativeTrigger, count: usize, seed: u64) -> Result<Vec<(Vector, f64)>> {
    unit_sphere_samples(trigger.dim(), count, seed)
        .into_par_iter()
        .map(|x| trigger.tau_e(&x).map(|t| (x, t)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TauBounds {
    pub tau_min: f64,
    pub tau_max: f64,
    pub samples: usize,
}

/// Sampled range of `τ_e` over the unit sphere. Sampling can only miss
/// extremes, so the true range contains the estimate.
pub fn estimate_tau_bounds(trigger: &RelativeTrigger, sample_count: usize, seed: u64) -> Result<TauBounds> {
    if sample_count < 100 {
        return invalid(format!("need at least 100 samples, got {sample_count}"));
    }
    let field = tau_e_field(trigger, sample_count, seed)?;
    let (mut tau_min, mut tau_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, t) in &field {
        tau_min = tau_min.min(*t);
        tau_max = tau_max.max(*t);
    }
    Ok(TauBounds { tau_min, tau_max, samples: sample_count })
}

#[derive(Clone, Debug, Serialize)]
pub struct SigmaCalibration {
    pub sigma: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub target_tau_min: f64,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Chooses `σ` so that the sampled `τ_min` matches `target_tau_min`.
/// `τ_e` is nondecreasing in `σ` pointwise, so bisection on `log σ` applies.
/// Fails when the best `σ` in `[sigma_lo, sigma_hi]` misses by more than 20%.
pub fn calibrate_sigma(
    system: &LinearSystem,
    horizon: f64,
    target_tau_min: f64,
    sigma_range: (f64, f64),
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<SigmaCalibration> {
    let (mut lo, mut hi) = sigma_range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return invalid(format!("bad σ bracket [{lo}, {hi}]"));
    }
    if !(target_tau_min > 0.0 && target_tau_min < horizon) {
        return invalid("target τ_min must lie in (0, horizon)");
    }
    let bounds_at = |sigma: f64| -> Result<TauBounds> {
        estimate_tau_bounds(&RelativeTrigger::new(system.clone(), sigma, horizon, tol)?, samples, seed)
    };
    let b_lo = bounds_at(lo)?;
    let b_hi = bounds_at(hi)?;
    let (sigma, bounds) = if target_tau_min <= b_lo.tau_min {
        (lo, b_lo)
    } else if target_tau_min >= b_hi.tau_min {
        (hi, b_hi)
    } else {
        let mut best = (lo, b_lo);
        for _ in 0..60 {
            let mid = (lo * hi).sqrt();
            let b = bounds_at(mid)?;
            if (b.tau_min - target_tau_min).abs() < (best.1.tau_min - target_tau_min).abs() {
                best = (mid, b);
            }
            if b.tau_min < target_tau_min {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-9 {
                break;
            }
        }
        best
    };
    let relative_residual = (bounds.tau_min - target_tau_min).abs() / target_tau_min;
    let report = SigmaCalibration {
        sigma,
        tau_min: bounds.tau_min,
        tau_max: bounds.tau_max,
        target_tau_min,
        relative_residual,
        converged: relative_residual <= 0.2,
    };
    if !report.converged {
        return Err(Error::NumericalFailure {
            message: format!(
                "no σ in the bracket reproduces τ_min = {target_tau_min} within 20% (best σ = {sigma}, τ_min = {})",
                bounds.tau_min
            ),
            residuals: vec![relative_residual],
        });
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionKind {
    /// `τ_e(x) ∈ [lo, hi)`.
    TriggerSlice { lo: f64, hi: f64 },
    /// `⟨n, x⟩ ≥ 0` for every inward normal; no normals means the whole space.
    PolyhedralCone { normals: Vec<Vec<f64>> },
    /// Union of spherical Voronoi cells of the listed centers.
    VoronoiCone { centers: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Serialize)]
pub struct ConicRegion {
    pub index: usize,
    pub tau: f64,
    #[serde(flatten)]
    pub kind: RegionKind,
}

#[derive(Clone, Debug)]
enum Geometry {
    Trigger(Arc<RelativeTrigger>),
    Voronoi(Vec<(Vector, usize)>),
    Polyhedral(Vec<Vec<Vector>>),
}

/// Finite conic cover of `ℝⁿ \ {0}`, regions sorted by strictly increasing `τ`.
#[derive(Clone, Debug)]
pub struct Partition {
    dim: usize,
    regions: Vec<ConicRegion>,
    geometry: Geometry,
}

impl Partition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn regions(&self) -> &[ConicRegion] {
        &self.regions
    }

    pub fn region(&self, i: usize) -> &ConicRegion {
        &self.regions[i]
    }

    pub fn taus(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.tau).collect()
    }

    pub fn trigger(&self) -> Option<&RelativeTrigger> {
        match &self.geometry {
            Geometry::Trigger(t) => Some(t),
            _ => None,
        }
    }

    /// Single region covering the whole space.
    pub fn whole_space(dim: usize, tau: f64) -> Result<Self> {
        build_polyhedral_partition(dim, vec![(Vec::new(), tau)])
    }

    fn check_state(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.dim {
            return invalid(format!("state has length {}, expected {}", x.len(), self.dim));
        }
        let n = x.norm();
        if !(n.is_finite() && n > 0.0) {
            return invalid("the origin belongs to no region");
        }
        Ok(x / n)
    }

    fn slice_of(&self, t: f64) -> usize {
        self.regions
            .iter()
            .position(|r| match r.kind {
                RegionKind::TriggerSlice { lo, hi } => lo <= t && t < hi,
                _ => false,
            })
            .unwrap_or(self.regions.len() - 1)
    }

    /// Index of the region containing `x`.
    pub fn membership(&self, x: &Vector) -> Result<usize> {
        let u = self.check_state(x)?;
        match &self.geometry {
            Geometry::Trigger(trigger) => Ok(self.slice_of(trigger.tau_e(&u)?)),
            Geometry::Voronoi(centers) => {
                let scores: Vec<f64> = centers.iter().map(|(c, _)| c.dot(&u)).collect();
                let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Ok(centers
                    .iter()
                    .zip(&scores)
                    .filter(|(_, &s)| s >= best - TIE_TOL)
                    .map(|((_, r), _)| *r)
                    .min()
                    .unwrap())
            }
            Geometry::Polyhedral(normals) => normals
                .iter()
                .position(|ns| ns.iter().all(|nv| nv.dot(&u) >= 0.0))
                .ok_or_else(|| Error::InvalidArgument(format!("no polyhedral region claims {:?}", u.as_slice()))),
        }
    }

    pub fn contains(&self, region: usize, x: &Vector) -> bool {
        self.membership(x).map(|i| i == region).unwrap_or(false)
    }

    /// Signed depth of `x` inside region `i`: positive in the interior,
    /// negative outside. Polyhedral margins ignore first-claim precedence.
    pub fn margin(&self, region: usize, x: &Vector) -> f64 {
        let Ok(u) = self.check_state(x) else { return f64::NEG_INFINITY };
        match &self.geometry {
            Geometry::Trigger(trigger) => {
                let Ok(t) = trigger.tau_e(&u) else { return f64::NEG_INFINITY };
                match self.regions[region].kind {
                    RegionKind::TriggerSlice { lo, hi } => {
                        let above = if region == 0 { f64::INFINITY } else { t - lo };
                        let below = if hi.is_finite() { hi - t } else { f64::INFINITY };
                        above.min(below).min(1.0)
                    }
                    _ => unreachable!(),
                }
            }
            Geometry::Voronoi(centers) => {
                let mut own = f64::NEG_INFINITY;
                let mut peer = f64::NEG_INFINITY;
                for (c, r) in centers {
                    let s = c.dot(&u);
                    if *r == region {
                        own = own.max(s);
                    } else {
                        peer = peer.max(s);
                    }
                }
                if peer == f64::NEG_INFINITY {
                    1.0
                } else {
                    own - peer
                }
            }
            Geometry::Polyhedral(normals) => {
                normals[region].iter().map(|nv| nv.dot(&u)).fold(1.0, f64::min)
            }
        }
    }

    /// Unit inward normals of a polyhedral region.
    pub fn halfspaces(&self, region: usize) -> Option<&[Vector]> {
        match &self.geometry {
            Geometry::Polyhedral(normals) => Some(&normals[region]),
            _ => None,
        }
    }
}

/// `r` equal-width slices of `[τ_min, τ_max]`, each region carrying the left
/// endpoint of its slice. The first slice extends down to zero and the last
/// one up to infinity, so every direction is covered.
pub fn build_trigger_partition(trigger: Arc<RelativeTrigger>, r: usize, tau_min: f64, tau_max: f64) -> Result<Partition> {
    if r < 1 {
        return invalid("need at least one region");
    }
    if !(tau_min > 0.0 && tau_min < tau_max && tau_max.is_finite()) {
        return invalid(format!("need 0 < τ_min < τ_max, got [{tau_min}, {tau_max}]"));
    }
    let width = (tau_max - tau_min) / r as f64;
    let taus: Vec<f64> = (0..r).map(|i| tau_min + i as f64 * width).collect();
    let regions = (0..r)
        .map(|i| ConicRegion {
            index: i,
            tau: taus[i],
            kind: RegionKind::TriggerSlice {
                lo: if i == 0 { 0.0 } else { taus[i] },
                hi: if i + 1 < r { taus[i + 1] } else { f64::INFINITY },
            },
        })
        .collect();
    Ok(Partition { dim: trigger.dim(), regions, geometry: Geometry::Trigger(trigger) })
}

/// Spherical Voronoi cones; cones sharing a `τ` are merged into one region.
pub fn build_cone_partition(centers: &[Vector], taus: &[f64]) -> Result<Partition> {
    if centers.is_empty() || centers.len() != taus.len() {
        return invalid(format!("{} centers but {} inter-event times", centers.len(), taus.len()));
    }
    let dim = centers[0].len();
    let mut units = Vec::with_capacity(centers.len());
    for c in centers {
        if c.len() != dim {
            return invalid("centers have mixed dimensions");
        }
        let n = c.norm();
        if !(n.is_finite() && n > 0.0) {
            return invalid("cone centers must be nonzero");
        }
        units.push(c / n);
    }
    for i in 0..units.len() {
        for j in (i + 1)..units.len() {
            if (&units[i] - &units[j]).norm() < 1e-12 {
                return invalid(format!("centers {i} and {j} coincide"));
            }
        }
    }
    if taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return invalid("inter-event times must be positive");
    }
    let mut distinct: Vec<f64> = taus.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let index_of = |t: f64| distinct.iter().position(|d| *d == t).unwrap();
    let labelled: Vec<(Vector, usize)> = units.into_iter().zip(taus).map(|(c, t)| (c, index_of(*t))).collect();
    let regions = distinct
        .iter()
        .enumerate()
        .map(|(i, &tau)| ConicRegion {
            index: i,
            tau,
            kind: RegionKind::VoronoiCone {
                centers: labelled.iter().filter(|(_, r)| *r == i).map(|(c, _)| c.iter().copied().collect()).collect(),
            },
        })
        .collect();
    Ok(Partition { dim, regions, geometry: Geometry::Voronoi(labelled) })
}

/// Cone partition with `count` seeded random centers and `τ` drawn uniformly
/// from `tau_range`.
pub fn random_cone_partition(dim: usize, count: usize, tau_range: (f64, f64), seed: u64) -> Result<Partition> {
    if !(tau_range.0 > 0.0 && tau_range.0 < tau_range.1) {
        return invalid("bad τ range");
    }
    let mut rng = seeded_rng(seed);
    let centers: Vec<Vector> = (0..count).map(|_| UnitSphere(dim).sample(&mut rng)).collect();
    let dist = Uniform::new(tau_range.0, tau_range.1).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let taus: Vec<f64> = (0..count).map(|_| dist.sample(&mut rng)).collect();
    build_cone_partition(&centers, &taus)
}

/// Polyhedral cones `{x : ⟨n_j, x⟩ ≥ 0}`; overlaps go to the region with the
/// smaller `τ`. Directions claimed by no cone are rejected at query time.
pub fn build_polyhedral_partition(dim: usize, cones: Vec<(Vec<Vector>, f64)>) -> Result<Partition> {
    if cones.is_empty() {
        return invalid("need at least one region");
    }
    let mut cones = cones;
    cones.sort_by(|a, b| a.1.total_cmp(&b.1));
    for w in cones.windows(2) {
        if w[0].1 == w[1].1 {
            return invalid(format!("two polyhedral regions share τ = {}", w[0].1));
        }
    }
    let mut regions = Vec::new();
    let mut normals = Vec::new();
    for (i, (ns, tau)) in cones.into_iter().enumerate() {
        if !(tau.is_finite() && tau > 0.0) {
            return invalid("inter-event times must be positive");
        }
        let mut unit = Vec::with_capacity(ns.len());
        for nv in ns {
            let n = nv.norm();
            if nv.len() != dim || !(n.is_finite() && n > 0.0) {
                return invalid("normals must be nonzero vectors of the state dimension");
            }
            unit.push(nv / n);
        }
        regions.push(ConicRegion {
            index: i,
            tau,
            kind: RegionKind::PolyhedralCone { normals: unit.iter().map(|v| v.iter().copied().collect()).collect() },
        });
        normals.push(unit);
    }
    Ok(Partition { dim, regions, geometry: Geometry::Polyhedral(normals) })
}

/// A closed cone queried through membership and a signed interior margin.
pub trait Cone: Sync {
    fn dim(&self) -> usize;
    fn contains(&self, x: &Vector) -> bool;
    fn margin(&self, x: &Vector) -> f64;
    /// Inward normals when the cone is polyhedral.
    fn halfspaces(&self) -> Option<&[Vector]> {
        None
    }
}

/// One region of a partition viewed as a cone.
#[derive(Clone, Copy, Debug)]
pub struct RegionCone<'a> {
    pub partition: &'a Partition,
    pub index: usize,
}

impl<'a> RegionCone<'a> {
    pub fn new(partition: &'a Partition, index: usize) -> Self {
        RegionCone { partition, index }
    }
}

impl Cone for RegionCone<'_> {
    fn dim(&self) -> usize {
        self.partition.dim()
    }

    fn contains(&self, x: &Vector) -> bool {
        self.partition.contains(self.index, x)
    }

    fn margin(&self, x: &Vector) -> f64 {
        self.partition.margin(self.index, x)
    }

    fn halfspaces(&self) -> Option<&[Vector]> {
        self.partition.halfspaces(self.index)
    }
}

/// Seeded rejection sampling of unit vectors inside `cone`. `label` names the
/// cone in the empty-region error.
pub fn sample_cone(cone: &dyn Cone, label: usize, count: usize, seed: u64) -> Result<Vec<Vector>> {
    let mut rng = seeded_rng(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        let batch: Vec<Vector> = (0..BATCH).map(|_| UnitSphere(cone.dim()).sample(&mut rng)).collect();
        let accepted: Vec<bool> = batch.par_iter().map(|x| cone.contains(x)).collect();
        for (x, ok) in batch.into_iter().zip(accepted) {
            attempts += 1;
            if ok {
                out.push(x);
                if out.len() == count {
                    break;
                }
            }
        }
        let rate = out.len() as f64 / attempts as f64;
        if (attempts >= ACCEPTANCE_PROBE && rate < MIN_ACCEPTANCE) || (attempts >= MAX_ATTEMPTS && out.len() < count) {
            return Err(Error::EmptyRegion { region: label, attempts });
        }
    }
    Ok(out)
}

pub fn sample_region(partition: &Partition, index: usize, count: usize, seed: u64) -> Result<Vec<Vector>> {
    if index >= partition.len() {
        return invalid(format!("no region {index}"));
    }
    sample_cone(&RegionCone::new(partition, index), index, count, seed)
}
