//! Normalized inter-event state jump map and event-sequence simulation.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numkit::{Tolerances, Vector};
use crate::regions::Partition;
use crate::system::TransitionMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct GammaStep {
    pub next: Vector,
    pub region: usize,
    pub tau: f64,
    /// `‖G(τ_i) x̂‖` for the unit input `x̂`.
    pub gain: f64,
}

pub(crate) fn check_alignment(partition: &Partition, gs: &[TransitionMatrix]) -> Result<()> {
    if gs.len() != partition.len() {
        return invalid(format!("{} transition matrices for {} regions", gs.len(), partition.len()));
    }
    if let Some(g) = gs.iter().find(|g| g.g.nrows() != partition.dim()) {
        return invalid(format!("transition matrix of size {} in dimension {}", g.g.nrows(), partition.dim()));
    }
    Ok(())
}

/// `γ(x) = G(τ_i)x / ‖G(τ_i)x‖` with `i` the region of `x`.
pub fn gamma_step(partition: &Partition, gs: &[TransitionMatrix], x: &Vector, tol: &Tolerances) -> Result<GammaStep> {
    check_alignment(partition, gs)?;
    let region = partition.membership(x)?;
    let u = x / x.norm();
    let y = &gs[region].g * &u;
    let gain = y.norm();
    if !(gain >= tol.rank) || !gain.is_finite() {
        return Err(Error::AssumptionViolation {
            region,
            message: format!("G(τ_{region}) maps the state {:?} to (numerically) zero", u.as_slice()),
        });
    }
    Ok(GammaStep { next: y / gain, region, tau: partition.region(region).tau, gain })
}

/// Event-sampled closed-loop trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IETTrace {
    /// `N + 1` unit states, starting with `x₀/‖x₀‖`.
    pub normalized_states: Vec<Vec<f64>>,
    /// Region of each of the first `N` states.
    pub region_indices: Vec<usize>,
    pub iets: Vec<f64>,
    /// `N + 1` event times starting at zero.
    pub event_times: Vec<f64>,
    /// `ln ‖x(t_k)‖` for each of the `N + 1` states.
    pub log_norms: Vec<f64>,
}

impl IETTrace {
    pub fn len(&self) -> usize {
        self.iets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iets.is_empty()
    }

    pub fn state(&self, k: usize) -> Vector {
        Vector::from_column_slice(&self.normalized_states[k])
    }
}

/// Iterates the jump map `n_events` times from `x0`.
pub fn simulate(
    partition: &Partition,
    gs: &[TransitionMatrix],
    x0: &Vector,
    n_events: usize,
    tol: &Tolerances,
) -> Result<IETTrace> {
    if n_events < 1 {
        return invalid("need at least one event");
    }
    check_alignment(partition, gs)?;
    let norm = x0.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return invalid("initial state must be nonzero and finite");
    }
    let mut x = x0 / norm;
    let mut trace = IETTrace {
        normalized_states: vec![x.iter().copied().collect()],
        region_indices: Vec::with_capacity(n_events),
        iets: Vec::with_capacity(n_events),
        event_times: vec![0.0],
        log_norms: vec![norm.ln()],
    };
    for _ in 0..n_events {
        let step = gamma_step(partition, gs, &x, tol)?;
        trace.region_indices.push(step.region);
        trace.iets.push(step.tau);
        trace.event_times.push(trace.event_times.last().unwrap() + step.tau);
        trace.log_norms.push(trace.log_norms.last().unwrap() + step.gain.ln());
        trace.normalized_states.push(step.next.iter().copied().collect());
        x = step.next;
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SteadyKind {
    Constant { region: usize, tau: f64 },
    Periodic { regions: Vec<usize>, pattern: Vec<f64> },
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteadyState {
    #[serde(flatten)]
    pub kind: SteadyKind,
    /// First event index from which the pattern repeats; absent for `None`.
    pub onset_index: Option<usize>,
}

pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_MAX_PERIOD: usize = 20;

/// Shortest exact repetition of region indices over the last `window`
/// events, together with the event where it locks in.
pub fn detect_steady_state(trace: &IETTrace, taus: &[f64], window: usize, max_period: usize) -> SteadyState {
    let idx = &trace.region_indices;
    let window = window.min(idx.len());
    let none = SteadyState { kind: SteadyKind::None, onset_index: None };
    if window == 0 || max_period == 0 {
        return none;
    }
    let start = idx.len() - window;
    let tail = &idx[start..];
    let Some(p) = (1..=max_period).filter(|&p| 2 * p <= window).find(|&p| (p..window).all(|j| tail[j] == tail[j - p]))
    else {
        return none;
    };
    let mut onset = start;
    while onset > 0 && idx[onset - 1] == idx[onset - 1 + p] {
        onset -= 1;
    }
    let regions: Vec<usize> = idx[onset..onset + p].to_vec();
    let kind = if p == 1 {
        SteadyKind::Constant { region: regions[0], tau: taus[regions[0]] }
    } else {
        SteadyKind::Periodic { pattern: regions.iter().map(|&r| taus[r]).collect(), regions }
    };
    SteadyState { kind, onset_index: Some(onset) }
}
