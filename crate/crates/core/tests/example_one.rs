use std::sync::Arc;

use rbstc::analysis::{analyze_partition, AnalysisOptions};
use rbstc::gamma::{detect_steady_state, simulate, SteadyKind};
use rbstc::invariants::{CandidateKind, CandidateSet};
use rbstc::numkit::{Matrix, Tolerances, Vector};
use rbstc::regions::{build_trigger_partition, calibrate_sigma, estimate_tau_bounds, RelativeTrigger};
use rbstc::stability::Verdict;
use rbstc::system::LinearSystem;

fn example_one() -> LinearSystem {
    let a = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -6.0, 7.0, 0.0]);
    let b = Matrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
    let k = Matrix::from_row_slice(1, 3, &[0.0, -18.0, -6.0]);
    LinearSystem::new(a, b, k).unwrap()
}

#[test]
fn calibrated_pipeline_finds_two_pir_lines() {
    let tol = Tolerances::default();
    let sys = example_one();
    let cal = calibrate_sigma(&sys, 1.0, 0.0088, (1e-3, 0.9), 4000, 1, &tol).unwrap();
    assert!(cal.relative_residual < 0.05, "{cal:?}");
    let trigger = Arc::new(RelativeTrigger::new(sys.clone(), cal.sigma, 1.0, &tol).unwrap());
    let bounds = estimate_tau_bounds(&trigger, 20_000, 2).unwrap();
    assert!((bounds.tau_max / 0.2655 - 1.0).abs() < 0.05, "{bounds:?}");
    let p = build_trigger_partition(trigger, 5, bounds.tau_min, bounds.tau_max).unwrap();
    let gs = sys.transition_matrices(&p.taus()).unwrap();
    let reports = analyze_partition(&p, &gs, &AnalysisOptions { samples: 64, ..AnalysisOptions::default() }, &tol).unwrap();

    let rays: Vec<_> = reports
        .iter()
        .flat_map(|r| r.analysis.verified())
        .filter(|c| c.candidate.kind == CandidateKind::Ray)
        .collect();
    assert_eq!(rays.len(), 4);
    let verdict = |c: &&rbstc::analysis::AnalyzedCandidate| c.stability.as_ref().unwrap().verdict.unwrap();
    assert_eq!(rays.iter().filter(|c| verdict(c) == Verdict::AsymptoticallyStable).count(), 2);
    assert_eq!(rays.iter().filter(|c| verdict(c) == Verdict::Unstable).count(), 2);

    // The rays pair up into two lines through the origin.
    let dirs: Vec<Vector> = rays
        .iter()
        .map(|c| match &c.candidate.set {
            CandidateSet::Rays(r) => r[0].clone(),
            _ => unreachable!(),
        })
        .collect();
    for d in &dirs {
        assert!(dirs.iter().any(|e| (d + e).norm() < 1e-9));
    }

    // IETs from a perturbed stable PIR lock to its region's τ.
    let stable = rays.iter().find(|c| verdict(c) == Verdict::AsymptoticallyStable).unwrap();
    let CandidateSet::Rays(r) = &stable.candidate.set else { unreachable!() };
    let x0 = (&r[0] + Vector::from_column_slice(&[1e-2, -5e-3, 4e-3])).normalize();
    let trace = simulate(&p, &gs, &x0, 120, &tol).unwrap();
    let st = detect_steady_state(&trace, &p.taus(), 70, 6);
    match st.kind {
        SteadyKind::Constant { region, .. } => {
            assert_eq!(region, stable.candidate.region);
            assert!(st.onset_index.unwrap() <= 50);
        }
        other => panic!("{other:?}"),
    }
}
