//! Periodic IET patterns: composite jump maps and pattern regions.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{analyze_cone, AnalysisOptions, ConeAnalysis};
use crate::error::{invalid, Result};
use crate::gamma::{check_alignment, detect_steady_state, simulate, SteadyKind, DEFAULT_WINDOW};
use crate::numkit::{unit_sphere_samples, Matrix, Tolerances, Vector};
use crate::regions::{Cone, Partition};
use crate::stability::Verdict;
use crate::system::TransitionMatrix;

/// `G(τ_{j_p})···G(τ_{j_1})`: the first pattern entry acts first.
pub fn pattern_matrix(gs: &[TransitionMatrix], pattern: &[usize]) -> Result<Matrix> {
    let Some(&first) = pattern.first() else {
        return invalid("empty pattern");
    };
    if let Some(&bad) = pattern.iter().find(|&&j| j >= gs.len()) {
        return invalid(format!("region {bad} out of range for {} regions", gs.len()));
    }
    Ok(pattern[1..].iter().fold(gs[first].g.clone(), |acc, &j| &gs[j].g * acc))
}

/// The pattern region: states whose next `p` events visit the pattern's
/// regions in order.
pub struct PatternCone<'a> {
    partition: &'a Partition,
    pattern: Vec<usize>,
    /// `prefixes[k]` maps the start state to the state at event `k`.
    prefixes: Vec<Matrix>,
    normals: Option<Vec<Vector>>,
}

impl<'a> PatternCone<'a> {
    pub fn new(partition: &'a Partition, gs: &[TransitionMatrix], pattern: &[usize]) -> Result<Self> {
        check_alignment(partition, gs)?;
        pattern_matrix(gs, pattern)?;
        let n = partition.dim();
        let mut prefixes = vec![Matrix::identity(n, n)];
        for &j in &pattern[..pattern.len() - 1] {
            let next = &gs[j].g * prefixes.last().unwrap();
            prefixes.push(next);
        }
        let normals = pattern
            .iter()
            .zip(&prefixes)
            .map(|(&j, pk)| partition.halfspaces(j).map(|ns| ns.iter().map(|nv| pk.transpose() * nv).collect::<Vec<_>>()))
            .collect::<Option<Vec<_>>>()
            .map(|v| v.concat());
        Ok(PatternCone { partition, pattern: pattern.to_vec(), prefixes, normals })
    }

    pub fn pattern(&self) -> &[usize] {
        &self.pattern
    }

    fn states(&self, x: &Vector) -> impl Iterator<Item = (usize, Vector)> + '_ {
        let x = x.clone();
        self.pattern.iter().zip(&self.prefixes).enumerate().map(move |(k, (&j, pk))| (j, if k == 0 { x.clone() } else { pk * &x }))
    }
}

impl Cone for PatternCone<'_> {
    fn dim(&self) -> usize {
        self.partition.dim()
    }

    fn contains(&self, x: &Vector) -> bool {
        self.states(x).all(|(j, s)| s.norm() > 0.0 && self.partition.contains(j, &s))
    }

    fn margin(&self, x: &Vector) -> f64 {
        self.states(x)
            .map(|(j, s)| {
                let n = s.norm();
                if n > 0.0 { self.partition.margin(j, &(s / n)) } else { f64::NEG_INFINITY }
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn halfspaces(&self) -> Option<&[Vector]> {
        self.normals.as_deref()
    }
}

pub fn pattern_membership(partition: &Partition, gs: &[TransitionMatrix], x: &Vector, pattern: &[usize]) -> Result<bool> {
    Ok(PatternCone::new(partition, gs, pattern)?.contains(x))
}

/// Lexicographically smallest cyclic rotation.
pub fn canonical_rotation(pattern: &[usize]) -> Vec<usize> {
    (0..pattern.len().max(1))
        .map(|s| pattern[s..].iter().chain(&pattern[..s]).copied().collect::<Vec<_>>())
        .min()
        .unwrap_or_default()
}

fn primitive(pattern: &[usize]) -> bool {
    let p = pattern.len();
    (1..p).filter(|d| p % d == 0).all(|d| (d..p).any(|k| pattern[k] != pattern[k - d]))
}

/// Canonical primitive patterns of every length up to `max_len` over `r`
/// regions.
pub fn enumerate_patterns(r: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = BTreeSet::new();
    for len in 1..=max_len {
        let Some(total) = r.checked_pow(len as u32) else { break };
        for mut code in 0..total {
            let p: Vec<usize> = (0..len)
                .map(|_| {
                    let d = code % r;
                    code /= r;
                    d
                })
                .collect();
            if primitive(&p) {
                out.insert(canonical_rotation(&p));
            }
        }
    }
    out.into_iter().collect()
}

/// Steady patterns reached from seeded random initial states.
pub fn harvest_patterns(
    partition: &Partition,
    gs: &[TransitionMatrix],
    runs: usize,
    events: usize,
    max_period: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<Vec<usize>>> {
    let starts = unit_sphere_samples(partition.dim(), runs, seed);
    let found: Vec<Option<Vec<usize>>> = starts
        .par_iter()
        .map(|x0| {
            let trace = simulate(partition, gs, x0, events, tol)?;
            let st = detect_steady_state(&trace, &partition.taus(), DEFAULT_WINDOW.min(events), max_period);
            Ok(match st.kind {
                SteadyKind::Constant { region, .. } => Some(vec![region]),
                SteadyKind::Periodic { regions, .. } => Some(canonical_rotation(&regions)),
                SteadyKind::None => None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(found.into_iter().flatten().collect::<BTreeSet<_>>().into_iter().collect())
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternSource {
    SingleRegion,
    Harvested,
    Exhaustive,
}

#[derive(Clone, Debug, Serialize)]
pub struct PatternReport {
    pub pattern: Vec<usize>,
    pub canonical: Vec<usize>,
    pub tau_sequence: Vec<f64>,
    pub period: usize,
    /// Row-major.
    pub g_pattern: Vec<Vec<f64>>,
    pub source: PatternSource,
    /// A verified PIS of the composite map lies in the pattern region.
    pub certified: bool,
    pub asymptotically_stable: bool,
    pub analysis: ConeAnalysis,
}

pub(crate) fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Invariance and stability pipeline on `(R_{τ_P}, G_{τ_P})`.
pub fn analyze_pattern(
    partition: &Partition,
    gs: &[TransitionMatrix],
    pattern: &[usize],
    opts: &AnalysisOptions,
    tol: &Tolerances,
) -> Result<PatternReport> {
    let cone = PatternCone::new(partition, gs, pattern)?;
    let g = pattern_matrix(gs, pattern)?;
    let analysis = analyze_cone(&cone, &g, pattern[0], opts, tol)?;
    let certified = analysis.verified().next().is_some();
    let asymptotically_stable =
        analysis.verified().any(|c| c.stability.as_ref().and_then(|s| s.verdict) == Some(Verdict::AsymptoticallyStable));
    Ok(PatternReport {
        pattern: pattern.to_vec(),
        canonical: canonical_rotation(pattern),
        tau_sequence: pattern.iter().map(|&j| gs[j].tau).collect(),
        period: pattern.len(),
        g_pattern: rows(&g),
        source: if pattern.len() == 1 { PatternSource::SingleRegion } else { PatternSource::Harvested },
        certified,
        asymptotically_stable,
        analysis,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PeriodicOptions {
    pub max_period: usize,
    pub harvest_runs: usize,
    pub harvest_events: usize,
    /// Analyze every primitive pattern up to this length.
    pub exhaustive_length: Option<usize>,
}

impl Default for PeriodicOptions {
    fn default() -> Self {
        PeriodicOptions { max_period: 6, harvest_runs: 32, harvest_events: 400, exhaustive_length: None }
    }
}

/// Length-one patterns, harvested steady patterns and optionally every
/// short pattern, each analyzed once.
pub fn analyze_periodic(
    partition: &Partition,
    gs: &[TransitionMatrix],
    popts: &PeriodicOptions,
    opts: &AnalysisOptions,
    tol: &Tolerances,
) -> Result<Vec<PatternReport>> {
    let mut todo: Vec<(Vec<usize>, PatternSource)> = (0..partition.len()).map(|i| (vec![i], PatternSource::SingleRegion)).collect();
    for p in harvest_patterns(partition, gs, popts.harvest_runs, popts.harvest_events, popts.max_period, opts.seed, tol)? {
        if !todo.iter().any(|(q, _)| *q == p) {
            todo.push((p, PatternSource::Harvested));
        }
    }
    if let Some(len) = popts.exhaustive_length {
        for p in enumerate_patterns(partition.len(), len) {
            if !todo.iter().any(|(q, _)| *q == p) {
                todo.push((p, PatternSource::Exhaustive));
            }
        }
    }
    todo.par_iter()
        .map(|(p, source)| {
            let mut rep = analyze_pattern(partition, gs, p, opts, tol)?;
            rep.source = source.clone();
            Ok(rep)
        })
        .collect()
}
