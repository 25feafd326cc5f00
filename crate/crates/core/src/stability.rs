//! Stability of positively invariant subregions on the unit sphere: exact
//! spectral classification and an empirical perturbation probe.

use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{invalid, Result};
use crate::invariants::{complex_pairs, CandidateKind, CandidateSet, PISCandidate};
use crate::numkit::{eig, seeded_rng, Complex64, Defectiveness, Matrix, Spectrum, Tolerances, UnitSphere, Vector};
use crate::regions::{Cone, Partition, RegionCone};
use crate::system::TransitionMatrix;

const INTERIOR_RADIUS: f64 = 1e-3;
const INTERIOR_POINTS: usize = 32;
const INTERIOR_DIRECTIONS: usize = 8;
const START_ATTEMPTS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    AsymptoticallyStable,
    Unstable,
    Ambiguous,
}

/// Eigenvalues of `J = G/|λ|` split by magnitude relative to the
/// generating pair `{λ, λ*}/|λ|`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpectralPartition {
    pub q1: Vec<Complex64>,
    pub q2: Vec<Complex64>,
    pub q3: Vec<Complex64>,
    pub q4: Vec<Complex64>,
}

impl Serialize for SpectralPartition {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = ser.serialize_struct("SpectralPartition", 4)?;
        st.serialize_field("q1", &complex_pairs(&self.q1))?;
        st.serialize_field("q2", &complex_pairs(&self.q2))?;
        st.serialize_field("q3", &complex_pairs(&self.q3))?;
        st.serialize_field("q4", &complex_pairs(&self.q4))?;
        st.end()
    }
}

/// Per-`ε` outcome of the perturbation probe.
#[derive(Clone, Debug, Serialize)]
pub struct ProbeLevel {
    pub epsilon: f64,
    pub trials: usize,
    /// Largest distance to the candidate seen along any trajectory.
    pub max_distance: f64,
    /// Largest distance at the final step among non-escaped trajectories.
    pub final_distance: f64,
    /// Largest value of `2‖J^k(z−ẑ)‖/‖J^kẑ‖` over trajectories and steps.
    pub max_bound: f64,
    pub escapes: usize,
    pub region_exits: usize,
    /// Trials for which no start inside the region was found.
    pub unplaced: usize,
    pub stable: bool,
    pub asymptotic: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityVerdict {
    /// `None` when the classification hypotheses fail.
    pub verdict: Option<Verdict>,
    /// Clause evaluations, in order.
    pub reasons: Vec<String>,
    pub defective: Option<Defectiveness>,
    pub partition: Option<SpectralPartition>,
    pub hypothesis_violation: Option<String>,
    pub probe: Option<Vec<ProbeLevel>>,
}

impl StabilityVerdict {
    fn rejected(message: String) -> Self {
        StabilityVerdict {
            verdict: None,
            reasons: vec![],
            defective: None,
            partition: None,
            hypothesis_violation: Some(message),
            probe: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Mag {
    Greater,
    Equal,
    Less,
    Band,
}

fn compare(q: f64, lambda: f64, tol: &Tolerances) -> Mag {
    let d = q / lambda - 1.0;
    if d.abs() <= tol.eig {
        Mag::Equal
    } else if d.abs() <= 2.0 * tol.eig {
        Mag::Band
    } else if d > 0.0 {
        Mag::Greater
    } else {
        Mag::Less
    }
}

struct Split {
    part: SpectralPartition,
    /// Indices into the spectrum of the `q₃` eigenvalues.
    q3_idx: Vec<usize>,
    /// Indices of the generating pair.
    q2_idx: Vec<usize>,
    band: bool,
}

fn split(spec: &Spectrum, lambdas: &[Complex64], tol: &Tolerances) -> Option<Split> {
    let mut q2_idx = Vec::new();
    for &l in lambdas {
        for z in [l, l.conj()] {
            let i = spec.find(z)?;
            if !q2_idx.contains(&i) {
                q2_idx.push(i);
            }
        }
    }
    let scale = lambdas[0].norm();
    let mut part = SpectralPartition::default();
    let mut q3_idx = Vec::new();
    let mut band = false;
    for (i, p) in spec.pairs.iter().enumerate() {
        let q = p.value / scale;
        if q2_idx.contains(&i) {
            part.q2.push(q);
            continue;
        }
        match compare(p.magnitude(), scale, tol) {
            Mag::Greater => part.q1.push(q),
            Mag::Equal => {
                part.q3.push(q);
                q3_idx.push(i);
            }
            Mag::Less => part.q4.push(q),
            Mag::Band => {
                band = true;
                part.q3.push(q);
                q3_idx.push(i);
            }
        }
    }
    Some(Split { part, q3_idx, q2_idx, band })
}

/// Perturbed candidate points stay in the cone: `R̄ \ {0}` is interior.
fn interior(set: &CandidateSet, cone: &dyn Cone, seed: u64) -> bool {
    let mut rng = seeded_rng(seed);
    let n = set.dim();
    set.probe_points(INTERIOR_POINTS, seed).iter().all(|x| {
        (0..INTERIOR_DIRECTIONS).all(|_| {
            let w: Vector = UnitSphere(n).sample(&mut rng);
            cone.contains(&(x + w * INTERIOR_RADIUS))
        })
    })
}

fn worst(a: Defectiveness, b: Defectiveness) -> Defectiveness {
    use Defectiveness::*;
    match (a, b) {
        (Ambiguous, _) | (_, Ambiguous) => Ambiguous,
        (Defective, _) | (_, Defectiveness::Defective) => Defective,
        _ => NonDefective,
    }
}

/// Spectral classification of a candidate `M ⊆ GE(λ)` inside a solid
/// cone.
pub fn classify(candidate: &PISCandidate, cone: &dyn Cone, g: &Matrix, tol: &Tolerances) -> Result<StabilityVerdict> {
    if candidate.eigenvalues.is_empty() {
        return invalid("candidate carries no generating eigenvalue");
    }
    if !candidate.verified {
        return Ok(StabilityVerdict::rejected("candidate is not a verified PIS of its region".into()));
    }
    if candidate.kind == CandidateKind::UnionOfRays {
        return Ok(StabilityVerdict::rejected("ray unions are not generalized-eigenspace intersections; see classify_general".into()));
    }
    let spec = eig(g, tol)?;
    let lambda = candidate.eigenvalues[0];
    let Some(idx) = spec.find(lambda) else {
        return invalid(format!("{lambda} is not an eigenvalue of the region's map"));
    };
    let ge = spec.generalized_eigenspace(g, idx, tol);
    let span = candidate.set.span(tol.rank.max(1e-9));
    let mixed = candidate.eigenvalues.iter().any(|&l| spec.find(l).is_some_and(|j| j != idx && spec.pairs[j].value != spec.pairs[idx].value.conj()));
    if mixed || !span.is_subset_of(&ge, tol.member.sqrt()) {
        return Ok(StabilityVerdict::rejected(
            "candidate spans several generalized eigenspaces; the classification applies to its intersection with each".into(),
        ));
    }
    if !interior(&candidate.set, cone, 0x5eed ^ candidate.region as u64) {
        return Ok(StabilityVerdict::rejected(format!(
            "candidate is not interior to region {}: a {INTERIOR_RADIUS:e} perturbation leaves it",
            candidate.region
        )));
    }
    let Some(sp) = split(&spec, &[lambda], tol) else {
        return invalid("conjugate of the generating eigenvalue missing from the spectrum");
    };
    let pair = &spec.pairs[idx];
    let defective = pair.defective;
    let mut reasons = Vec::new();
    let mut ambiguous = sp.band;
    if sp.band {
        reasons.push("an eigenvalue magnitude lies inside the tolerance band around |λ|".into());
    }
    let dominant = sp.part.q1.is_empty();
    reasons.push(if dominant { "|λ| = ρ(G)".into() } else { format!("|λ| < ρ(G): {} eigenvalue(s) of J outside the unit circle", sp.part.q1.len()) });
    let q3_empty = sp.part.q3.is_empty();
    let q3_defect = sp.q3_idx.iter().map(|&i| spec.pairs[i].defective).fold(Defectiveness::NonDefective, worst);
    let stable = match defective {
        Defectiveness::Ambiguous => {
            ambiguous = true;
            reasons.push("defectiveness of λ is ambiguous".into());
            false
        }
        Defectiveness::NonDefective => {
            reasons.push("λ non-defective".into());
            if q3_defect == Defectiveness::Ambiguous {
                ambiguous = true;
                reasons.push("defectiveness of an equal-magnitude eigenvalue is ambiguous".into());
            }
            let q3_ok = q3_defect == Defectiveness::NonDefective;
            reasons.push(if q3_ok { "equal-magnitude eigenvalues non-defective".into() } else { "a defective eigenvalue shares |λ|".into() });
            dominant && q3_ok
        }
        Defectiveness::Defective => {
            reasons.push("λ defective".into());
            let ge_in = candidate.set.contains_subspace(&ge, tol.member.sqrt());
            reasons.push(if ge_in { "generalized eigenspace of λ lies in M".into() } else { "generalized eigenspace of λ not contained in M".into() });
            reasons.push(if q3_empty { "all other eigenvalues strictly smaller".into() } else { "another eigenvalue shares |λ|".into() });
            dominant && ge_in && q3_empty
        }
    };
    let verdict = if ambiguous {
        Verdict::Ambiguous
    } else if !stable {
        Verdict::Unstable
    } else if !q3_empty {
        reasons.push("q3 nonempty: stable, not asymptotically".into());
        Verdict::Stable
    } else {
        let clause_a = pair.vectors.iter().all(|v| {
            crate::numkit::rspan(v, tol).map(|r| candidate.set.contains_subspace(&r, tol.member.sqrt())).unwrap_or(false)
        });
        let clause_b = pair.is_real() && pair.value.re > 0.0 && pair.algebraic == 1;
        if clause_a {
            reasons.push("(a) every eigenvector rspan of λ lies in M".into());
        }
        if clause_b {
            reasons.push("(b) λ real positive, algebraic multiplicity one".into());
        }
        if clause_a || clause_b {
            Verdict::AsymptoticallyStable
        } else {
            reasons.push("neither (a) nor (b) holds".into());
            Verdict::Stable
        }
    };
    Ok(StabilityVerdict {
        verdict: Some(verdict),
        reasons,
        defective: Some(defective),
        partition: Some(sp.part),
        hypothesis_violation: None,
        probe: None,
    })
}

/// Classification of a two-ray union generated by `λ₁ = −λ₂`.
pub fn classify_general(candidate: &PISCandidate, g: &Matrix, tol: &Tolerances) -> Result<StabilityVerdict> {
    let two_rays = matches!(&candidate.set, CandidateSet::Rays(r) if r.len() == 2);
    let l = &candidate.eigenvalues;
    let opposite = l.len() == 2 && l.iter().all(|z| z.im == 0.0) && (l[0] + l[1]).norm() <= tol.eig_abs(l[0].norm());
    if candidate.kind != CandidateKind::UnionOfRays || !two_rays || !opposite {
        return Ok(StabilityVerdict::rejected("unsupported candidate: only two-ray unions from λ₁ = −λ₂ are classified".into()));
    }
    let spec = eig(g, tol)?;
    let Some(sp) = split(&spec, l, tol) else {
        return invalid("generating eigenvalues missing from the spectrum");
    };
    let gen_defect = sp.q2_idx.iter().map(|&i| spec.pairs[i].defective).fold(Defectiveness::NonDefective, worst);
    let q3_defect = sp.q3_idx.iter().map(|&i| spec.pairs[i].defective).fold(Defectiveness::NonDefective, worst);
    let mut reasons = Vec::new();
    let dominant = sp.part.q1.is_empty();
    reasons.push(if dominant { "|λ₁| = |λ₂| = ρ(G)".into() } else { "|λ₁| < ρ(G)".into() });
    let verdict = if sp.band || gen_defect == Defectiveness::Ambiguous || q3_defect == Defectiveness::Ambiguous {
        reasons.push("a magnitude or multiplicity decision lies inside a tolerance band".into());
        Verdict::Ambiguous
    } else if !dominant {
        Verdict::Unstable
    } else if gen_defect == Defectiveness::Defective || q3_defect == Defectiveness::Defective {
        reasons.push("a defective eigenvalue has magnitude ρ(G)".into());
        Verdict::Unstable
    } else {
        reasons.push("equal-magnitude eigenvalues non-defective; trajectories alternate between the rays, so no asymptotic claim".into());
        Verdict::Stable
    };
    Ok(StabilityVerdict {
        verdict: Some(verdict),
        reasons,
        defective: Some(gen_defect),
        partition: Some(sp.part),
        hypothesis_violation: None,
        probe: None,
    })
}

/// Dispatch to the single-eigenvalue form or the two-ray form.
pub fn classify_any(candidate: &PISCandidate, cone: &dyn Cone, g: &Matrix, tol: &Tolerances) -> Result<StabilityVerdict> {
    match candidate.kind {
        CandidateKind::UnionOfRays => classify_general(candidate, g, tol),
        _ => classify(candidate, cone, g, tol),
    }
}

pub fn classify_in(partition: &Partition, gs: &[TransitionMatrix], candidate: &PISCandidate, tol: &Tolerances) -> Result<StabilityVerdict> {
    let Some(tm) = gs.get(candidate.region) else {
        return invalid(format!("candidate region {} out of range", candidate.region));
    };
    classify_any(candidate, &RegionCone::new(partition, candidate.region), &tm.g, tol)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeConfig {
    /// Decreasing perturbation radii.
    pub epsilons: Vec<f64>,
    pub trials: usize,
    pub horizon: usize,
    /// Stable when distances stay below `growth · ε`.
    pub growth: f64,
    pub escape: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { epsilons: vec![1e-2, 1e-3, 1e-4], trials: 50, horizon: 300, growth: 10.0, escape: 0.5 }
    }
}

impl ProbeConfig {
    fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(*e > 0.0)) || self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return invalid("probe radii must be positive and strictly decreasing");
        }
        if self.trials == 0 || self.horizon == 0 || !(self.growth > 0.0) || !(self.escape > 0.0) {
            return invalid("probe trials, horizon, growth and escape must be positive");
        }
        Ok(())
    }
}

struct Trial {
    max_distance: f64,
    final_distance: f64,
    max_bound: f64,
    escaped: bool,
    exited: bool,
}

fn start<R: Rng + ?Sized>(set: &CandidateSet, cone: &dyn Cone, eps: f64, rng: &mut R) -> Option<(Vector, Vector)> {
    let n = set.dim();
    for _ in 0..START_ATTEMPTS {
        let base = set.sample(rng);
        let w: Vector = UnitSphere(n).sample(rng);
        let r = eps * rng.random_range(0.5..=1.0);
        let z = (&base + w * r).normalize();
        if cone.contains(&z) {
            return Some((z, base));
        }
    }
    None
}

fn run_trial(set: &CandidateSet, cone: &dyn Cone, g: &Matrix, z: Vector, base: Vector, cfg: &ProbeConfig) -> Trial {
    let mut x = z.clone();
    let mut y = Vector::zeros(x.len());
    // J^k ẑ and J^k (z − ẑ) with a common rescaling.
    let mut b = base.clone();
    let mut d = &z - &base;
    let mut tmp = Vector::zeros(x.len());
    let mut t = Trial { max_distance: set.distance(&x), final_distance: 0.0, max_bound: 0.0, escaped: false, exited: false };
    for _ in 0..cfg.horizon {
        y.gemv(1.0, g, &x, 0.0);
        let ny = y.norm();
        if !(ny > 0.0) {
            t.escaped = true;
            break;
        }
        x.copy_from(&y);
        x.unscale_mut(ny);
        tmp.gemv(1.0, g, &b, 0.0);
        let nb = tmp.norm();
        std::mem::swap(&mut b, &mut tmp);
        tmp.gemv(1.0, g, &d, 0.0);
        std::mem::swap(&mut d, &mut tmp);
        if nb > 0.0 {
            b.unscale_mut(nb);
            d.unscale_mut(nb);
            t.max_bound = t.max_bound.max(2.0 * d.norm() / b.norm());
        }
        let dist = set.distance(&x);
        t.max_distance = t.max_distance.max(dist);
        if !cone.contains(&x) {
            t.exited = true;
            t.escaped = true;
            break;
        }
        if dist > cfg.escape {
            t.escaped = true;
            break;
        }
    }
    t.final_distance = set.distance(&x);
    t
}

/// Perturbation experiment on the region-local normalized map.
pub fn empirical_probe(candidate: &PISCandidate, cone: &dyn Cone, g: &Matrix, cfg: &ProbeConfig, seed: u64) -> Result<StabilityVerdict> {
    cfg.validate()?;
    if !candidate.verified {
        return Ok(StabilityVerdict::rejected("candidate is not a verified PIS of its region".into()));
    }
    let set = &candidate.set;
    let mut levels = Vec::with_capacity(cfg.epsilons.len());
    for (li, &eps) in cfg.epsilons.iter().enumerate() {
        let trials: Vec<Option<Trial>> = (0..cfg.trials)
            .into_par_iter()
            .map(|k| {
                let mut rng = seeded_rng(seed.wrapping_add((li as u64) << 32).wrapping_add(k as u64));
                start(set, cone, eps, &mut rng).map(|(z, b)| run_trial(set, cone, g, z, b, cfg))
            })
            .collect();
        let placed: Vec<&Trial> = trials.iter().flatten().collect();
        let escapes = placed.iter().filter(|t| t.escaped).count();
        let max_distance = placed.iter().map(|t| t.max_distance).fold(0.0, f64::max);
        let final_distance = placed.iter().filter(|t| !t.escaped).map(|t| t.final_distance).fold(0.0, f64::max);
        let stable = !placed.is_empty() && escapes == 0 && max_distance <= cfg.growth * eps;
        levels.push(ProbeLevel {
            epsilon: eps,
            trials: cfg.trials,
            max_distance,
            final_distance,
            max_bound: placed.iter().map(|t| t.max_bound).fold(0.0, f64::max),
            escapes,
            region_exits: placed.iter().filter(|t| t.exited).count(),
            unplaced: cfg.trials - placed.len(),
            stable,
            asymptotic: stable && final_distance <= eps / 10.0,
        });
    }
    let mut reasons = Vec::new();
    let verdict = if levels.iter().all(|l| l.stable) {
        if levels.iter().all(|l| l.asymptotic) {
            reasons.push("distances stay within growth·ε and decay below ε/10 at every radius".into());
            Verdict::AsymptoticallyStable
        } else {
            reasons.push("distances stay within growth·ε at every radius without decaying".into());
            Verdict::Stable
        }
    } else if levels.iter().all(|l| l.escapes > 0) {
        reasons.push(format!("trajectories escape beyond {} at every radius", cfg.escape));
        Verdict::Unstable
    } else {
        reasons.push("mixed evidence across radii".into());
        Verdict::Ambiguous
    };
    if levels.iter().any(|l| l.region_exits > 0) {
        reasons.push("some trajectories left the region".into());
    }
    Ok(StabilityVerdict { verdict: Some(verdict), reasons, defective: None, partition: None, hypothesis_violation: None, probe: Some(levels) })
}

pub fn empirical_probe_in(
    partition: &Partition,
    gs: &[TransitionMatrix],
    candidate: &PISCandidate,
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<StabilityVerdict> {
    let Some(tm) = gs.get(candidate.region) else {
        return invalid(format!("candidate region {} out of range", candidate.region));
    };
    empirical_probe(candidate, &RegionCone::new(partition, candidate.region), &tm.g, cfg, seed)
}
