//! End-to-end paths that cross module boundaries.

use std::f64::consts::PI;

use einsel_core::dynamics::propagate_exact;
use einsel_core::einselection::{
    fock_reference_state, optimize_pointer_state, purity_evolution_curve, purity_slope_numeric, SieveProblem,
};
use einsel_core::exec::Execution;
use einsel_core::hilbert::{cat_state, coherent_state, ModelParams, TruncatedBasis, C64};
use einsel_core::io::{read_json, write_json, StateRecord};
use einsel_core::phase_space::{wigner, GridSpec};
use einsel_core::trajectories::average_trajectories;

#[test]
fn optimum_survives_disk_and_decays_slowest() {
    let params = ModelParams::new(0.0, 1.0, 1.0).unwrap();
    let problem = SieveProblem::new(3.0, params).unwrap();
    let result = optimize_pointer_state(&problem).unwrap();
    assert!(result.converged);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("optimum.json");
    write_json(&path, &StateRecord::from_state(&result.state)).unwrap();
    let psi = read_json::<StateRecord>(&path).unwrap().to_state().unwrap();

    let slope = purity_slope_numeric(&psi, &params, 1e-3).unwrap();
    assert!((slope.abs() - result.objective()).abs() < 1e-6 * result.objective(), "{slope} vs {}", result.objective());

    let basis = problem.basis;
    let fock = fock_reference_state(3.0, basis).unwrap();
    let coherent = coherent_state(C64::new(3f64.sqrt(), 0.0), basis).unwrap();
    let times = [0.0, 0.01, 0.02];
    let best = purity_evolution_curve(&psi, &params, &times).unwrap();
    for other in [fock, coherent] {
        let curve = purity_evolution_curve(&other, &params, &times).unwrap();
        assert!(best[2] > curve[2], "{best:?} vs {curve:?}");
    }
}

#[test]
fn trajectory_average_reproduces_exact_wigner() {
    let params = ModelParams::new(0.0, 0.5, 1.0).unwrap();
    let psi = cat_state(C64::new(1.5, 0.0), PI, TruncatedBasis::new(20).unwrap()).unwrap();
    let t = 0.4;
    let exact = propagate_exact(&psi.to_density(), &params, t).unwrap();
    let est = average_trajectories(&psi, &params, t, 20_000, 5, Execution::Parallel).unwrap();
    let spec = GridSpec::square(4.0, 41).unwrap();
    let w_exact = wigner(&exact, &spec).unwrap();
    let w_est = wigner(&est.rho_mean, &spec).unwrap();
    let gap = w_exact.values.iter().zip(&w_est.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    // |W_A| ≤ ‖A‖₁/π for Hermitian A; the sampling error is spread thin, so
    // std_error (a Frobenius scale) is a comfortable bound in practice.
    assert!(gap < 5.0 * est.std_error, "gap {gap}, std_error {}", est.std_error);
}

#[test]
fn execution_modes_agree_bitwise() {
    let params = ModelParams::new(0.2, 1.0, 2.0).unwrap();
    let psi = coherent_state(C64::new(1.0, 1.0), TruncatedBasis::new(24).unwrap()).unwrap();
    let a = average_trajectories(&psi, &params, 0.7, 700, 3, Execution::Sequential).unwrap();
    let b = average_trajectories(&psi, &params, 0.7, 700, 3, Execution::Parallel).unwrap();
    assert_eq!(a.rho_mean, b.rho_mean);

    let rho = propagate_exact(&psi.to_density(), &params, 0.7).unwrap();
    let spec = GridSpec::square(4.0, 33).unwrap();
    let s = einsel_core::phase_space::wigner_with(&rho, &spec, Execution::Sequential).unwrap();
    let p = einsel_core::phase_space::wigner_with(&rho, &spec, Execution::Parallel).unwrap();
    assert_eq!(s.values, p.values);
}
