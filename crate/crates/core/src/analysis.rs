//! Per-region pipeline: spectrum, `S_μ` screening, PIS candidates and
//! stability verdicts.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::invariants::{
    self, dominant_limit_set, screen_cone, screen_pis_without_pir, vectors, PISCandidate, PirFreeScreen, SMuReport,
};
use crate::numkit::{eig, Defectiveness, Matrix, Tolerances};
use crate::regions::{Cone, Partition, RegionCone};
use crate::stability::{classify_any, empirical_probe, ProbeConfig, StabilityVerdict};
use crate::system::TransitionMatrix;

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisOptions {
    pub pirs: bool,
    pub subspaces: bool,
    pub unions: bool,
    pub screening: bool,
    pub stability: bool,
    /// Run the perturbation probe on every verified candidate.
    pub probe: Option<ProbeConfig>,
    pub samples: usize,
    pub starts: usize,
    pub max_denominator: usize,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            pirs: true,
            subspaces: true,
            unions: true,
            screening: true,
            stability: true,
            probe: None,
            samples: invariants::DEFAULT_SAMPLES,
            starts: invariants::DEFAULT_STARTS,
            max_denominator: invariants::DEFAULT_MAX_DENOMINATOR,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenSummary {
    pub value: [f64; 2],
    pub magnitude: f64,
    pub algebraic: usize,
    pub geometric: usize,
    pub defective: Defectiveness,
}

pub fn spectrum_summary(g: &Matrix, tol: &Tolerances) -> Result<(Vec<EigenSummary>, f64)> {
    let spec = eig(g, tol)?;
    let out = spec
        .pairs
        .iter()
        .map(|p| EigenSummary {
            value: [p.value.re, p.value.im],
            magnitude: p.magnitude(),
            algebraic: p.algebraic,
            geometric: p.geometric,
            defective: p.defective,
        })
        .collect();
    Ok((out, spec.spectral_radius))
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalyzedCandidate {
    pub candidate: PISCandidate,
    pub stability: Option<StabilityVerdict>,
    pub probe: Option<StabilityVerdict>,
    /// Basis of the dominant limit set inside the candidate's span.
    pub limit_set: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeAnalysis {
    pub label: usize,
    pub spectrum: Vec<EigenSummary>,
    pub spectral_radius: f64,
    pub s_mu: Option<SMuReport>,
    pub pir_free: Option<PirFreeScreen>,
    pub candidates: Vec<AnalyzedCandidate>,
}

impl ConeAnalysis {
    pub fn verified(&self) -> impl Iterator<Item = &AnalyzedCandidate> {
        self.candidates.iter().filter(|c| c.candidate.verified)
    }
}

/// Full pipeline on one cone with its jump matrix.
pub fn analyze_cone(cone: &dyn Cone, g: &Matrix, label: usize, opts: &AnalysisOptions, tol: &Tolerances) -> Result<ConeAnalysis> {
    let (spectrum, spectral_radius) = spectrum_summary(g, tol)?;
    let (s_mu, pir_free) = if opts.screening {
        (
            Some(screen_cone(cone, g, label, opts.starts, opts.seed, tol)?),
            Some(screen_pis_without_pir(cone, g, label, opts.starts, opts.seed, tol)?),
        )
    } else {
        (None, None)
    };
    let mut found: Vec<PISCandidate> = Vec::new();
    if opts.pirs {
        found.extend(invariants::pirs_in(cone, g, label, tol)?);
    }
    if opts.subspaces {
        found.extend(invariants::invariant_subspaces_in(cone, g, label, opts.samples, opts.seed, tol)?);
    }
    if opts.unions {
        found.extend(invariants::union_of_rays_in(cone, g, label, opts.max_denominator, tol)?);
    }
    let mut candidates = Vec::with_capacity(found.len());
    for (k, candidate) in found.into_iter().enumerate() {
        let (stability, probe, limit_set) = if candidate.verified {
            let stability = if opts.stability { Some(classify_any(&candidate, cone, g, tol)?) } else { None };
            let probe = match &opts.probe {
                Some(cfg) => Some(empirical_probe(&candidate, cone, g, cfg, opts.seed.wrapping_add(k as u64))?),
                None => None,
            };
            let limit = dominant_limit_set(&candidate, g, tol)?;
            (stability, probe, Some(vectors(&limit.basis_vectors())))
        } else {
            (None, None, None)
        };
        candidates.push(AnalyzedCandidate { candidate, stability, probe, limit_set });
    }
    Ok(ConeAnalysis { label, spectrum, spectral_radius, s_mu, pir_free, candidates })
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionReport {
    pub index: usize,
    pub tau: f64,
    pub analysis: ConeAnalysis,
}

/// Every region of the partition, in parallel.
pub fn analyze_partition(partition: &Partition, gs: &[TransitionMatrix], opts: &AnalysisOptions, tol: &Tolerances) -> Result<Vec<RegionReport>> {
    crate::gamma::check_alignment(partition, gs)?;
    (0..partition.len())
        .into_par_iter()
        .map(|i| {
            let analysis = analyze_cone(&RegionCone::new(partition, i), &gs[i].g, i, opts, tol)?;
            Ok(RegionReport { index: i, tau: gs[i].tau, analysis })
        })
        .collect()
}
