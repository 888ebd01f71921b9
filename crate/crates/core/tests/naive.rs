mod common;

use common::*;
use pclm::naive::{build_full_kronecker, DEFAULT_ELEMENT_BUDGET};
use pclm::{
    benchmark, build_composition, fit_naive, track, DenseMatrix, Engine, GroupingSpec, NdArray, PclmError, PclmProblem,
    PenaltySpec, SolverConfig,
};

fn three_dimensional_problem() -> PclmProblem {
    let m = [105, 20, 52];
    let widths = [5, 1, 1];
    let c = [21, 4, 10];
    let comps: Vec<_> = m
        .iter()
        .zip(&widths)
        .map(|(&mk, &w)| build_composition(&GroupingSpec::uniform(mk, w).unwrap(), mk).unwrap())
        .collect();
    let n: Vec<usize> = comps.iter().map(|c| c.n_groups()).collect();
    let y = NdArray::filled(n, 10.0).unwrap();
    let bases = m.iter().zip(&c).map(|(&mk, &ck)| basis(mk, ck)).collect();
    PclmProblem::new(y, None, comps, bases, PenaltySpec::new(vec![30.0, 0.1, 100.0], 2).unwrap()).unwrap()
}

#[test]
fn full_size_three_dimensional_problem_is_refused_up_front() {
    let problem = three_dimensional_problem();
    track::reset_peak();
    let err = fit_naive(&problem, &SolverConfig::default(), DEFAULT_ELEMENT_BUDGET).unwrap_err();
    match err {
        PclmError::Resource { requested, budget } => {
            assert!(requested > budget);
            assert!(requested >= 109_200 * 840);
        }
        other => panic!("expected a resource error, got {other}"),
    }
    assert!(track::peak_elements() < 1_000_000);
}

#[test]
fn benchmark_marks_the_naive_engine_infeasible() {
    let problem = three_dimensional_problem();
    let report = benchmark(&problem, &SolverConfig::default(), &[Engine::Naive], DEFAULT_ELEMENT_BUDGET);
    let naive = report.entry(Engine::Naive).unwrap();
    assert!(naive.status.starts_with("infeasible"), "{}", naive.status);
    assert_eq!(naive.fit_seconds, None);
    assert_eq!(report.coef_dims, vec![21, 4, 10]);
}

#[test]
fn benchmark_compares_engines_on_a_small_problem() {
    let problem = random_problem(&mut rng(77), 2, 8, true);
    let report = benchmark(&problem, &tight_config(), &[Engine::Glam, Engine::Naive], DEFAULT_ELEMENT_BUDGET);
    let glam = report.entry(Engine::Glam).unwrap();
    let naive = report.entry(Engine::Naive).unwrap();
    assert_eq!(glam.status, "ok");
    assert_eq!(naive.status, "ok");
    assert!(glam.alpha_discrepancy.unwrap() < 1e-8);
    let m: usize = problem.fine_dims().iter().product();
    let full_basis = m * problem.n_coef();
    assert!(glam.peak_elements.unwrap() < full_basis);
    assert!(naive.peak_elements.unwrap() >= full_basis);
}

#[test]
fn glam_peak_allocation_stays_below_the_full_basis() {
    for seed in 0..10 {
        let problem = random_problem(&mut rng(seed + 300), 3, 6, seed % 2 == 0);
        let report =
            benchmark(&problem, &SolverConfig::default(), &[Engine::Glam, Engine::Naive], DEFAULT_ELEMENT_BUDGET);
        let glam = report.entry(Engine::Glam).unwrap().peak_elements.unwrap();
        let naive = report.entry(Engine::Naive).unwrap().peak_elements.unwrap();
        assert!(glam < naive, "seed {seed}: {glam} vs {naive}");
    }
}

#[test]
fn explicit_kronecker_matches_definition() {
    let mut r = rng(4);
    let mats = [random_matrix(&mut r, 3, 2), random_matrix(&mut r, 2, 4), random_matrix(&mut r, 2, 2)];
    let refs: Vec<&DenseMatrix> = mats.iter().collect();
    let got = build_full_kronecker(&refs, DEFAULT_ELEMENT_BUDGET).unwrap();
    assert!(max_abs(&got, &kron_all(&mats)) < 1e-15);
}

#[test]
fn engine_names_parse() {
    assert_eq!("GLAM".parse::<Engine>().unwrap(), Engine::Glam);
    assert_eq!(" naive ".parse::<Engine>().unwrap(), Engine::Naive);
    assert!("lapack".parse::<Engine>().is_err());
    assert_eq!(Engine::Naive.to_string(), "naive");
}
