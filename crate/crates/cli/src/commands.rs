use std::path::Path;

use einsel_core::dynamics::{evolve_fock_populations, propagate_exact};
use einsel_core::einselection::{
    critical_ratio, fock_reference_state, optimize_pointer_state, purity_evolution_curve, sweep_coupling_ratio,
    SieveProblem, SweepOptions,
};
use einsel_core::hilbert::{coherent_state, moments, purity, quadrature_variance, DensityMatrix, QuadratureSpec, StateVector, C64};
use einsel_core::io::{
    harmonics_csv_rows, num, sweep_csv_rows, wigner_csv_rows, write_csv, write_json, write_raster,
    write_trajectories_jsonl, DensityRecord, OptimumRecord, ENSEMBLE_CSV, HISTOGRAM_CSV, MOMENTS_CSV, PURITY_CSV,
    SWEEP_CSV,
};
use einsel_core::phase_space::{evolve_wigner_dephasing, wigner_harmonics, wigner_with, GridSpec, CONVENTION};
use einsel_core::trajectories::{ensemble_with, fock_level, TrajectoryRecord};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

/// Lines for the terminal; files are the real output.
pub type Report = Vec<String>;

fn propagate_all(cfg: &RunConfig, rho0: &DensityMatrix, times: &[f64]) -> Result<Vec<DensityMatrix>, CliError> {
    let params = cfg.params()?;
    let states: Result<Vec<_>, _> = cfg.execution.map_slice(times, |&t| propagate_exact(rho0, &params, t)).into_iter().collect();
    Ok(states?)
}

pub fn evolve(cfg: &RunConfig) -> Result<Report, CliError> {
    cfg.params()?;
    let psi = cfg.initial_state()?;
    let times = cfg.time_grid()?;
    let out = &cfg.output_dir;
    let states = propagate_all(cfg, &psi.to_density(), &times)?;
    let x = QuadratureSpec::new(0.0);
    let rows: Vec<Vec<String>> = times
        .iter()
        .zip(&states)
        .map(|(t, rho)| {
            let m = moments(rho);
            vec![
                num(*t),
                num(m.mean_n),
                num(m.mean_a.re),
                num(m.mean_a.im),
                num(m.mean_a2.re),
                num(m.mean_a2.im),
                num(purity(rho)),
                num(quadrature_variance(rho, x)),
                num(quadrature_variance(rho, x.orthogonal())),
            ]
        })
        .collect();
    write_csv(&out.join("moments.csv"), &MOMENTS_CSV, &rows)?;
    let mut report = vec![format!("evolve: {} time points, dim {}, wrote moments.csv", times.len(), psi.dim())];
    if cfg.evolve.snapshots {
        for (k, (t, rho)) in times.iter().zip(&states).enumerate() {
            write_json(&out.join(format!("rho_{k:03}.json")), &DensityRecord::from_density(rho, *t))?;
        }
        report.push(format!("evolve: wrote {} density snapshots", states.len()));
    }
    Ok(report)
}

pub fn trajectories(cfg: &RunConfig) -> Result<Report, CliError> {
    let params = cfg.params()?;
    let psi = cfg.initial_state()?;
    let times = cfg.time_grid()?;
    cfg.check_trajectories()?;
    let n = cfg.trajectories.n_samples;
    let out = &cfg.output_dir;
    let rho0 = psi.to_density();
    let fock = fock_level(&psi);
    let mut rows = Vec::with_capacity(times.len());
    let mut report = Vec::new();
    let last = times.len() - 1;
    for (k, &t) in times.iter().enumerate() {
        let mut counts = vec![0usize; psi.dim()];
        let mut records: Vec<TrajectoryRecord> = Vec::new();
        let keep = k == last && cfg.trajectories.record_jumps;
        // One master seed for every time point: the ensembles share their
        // trajectories and differ only in where they are cut.
        let est = ensemble_with(&psi, &params, t, n, cfg.seed, cfg.execution, |rec| {
            if let Some(level) = fock_level(&rec.final_state) {
                counts[level] += 1;
            }
            if keep {
                records.push(rec.clone());
            }
        })?;
        let exact = propagate_exact(&rho0, &params, t)?;
        let dist = est.rho_mean.frobenius_distance(&exact)?;
        rows.push(vec![
            num(t),
            n.to_string(),
            num(dist),
            num(est.std_error),
            num(moments(&exact).mean_n),
            num(moments(&est.rho_mean).mean_n),
        ]);
        report.push(format!("trajectories: t = {t}: distance {dist:.4e}, std_error {:.4e}", est.std_error));
        if k == last {
            if let Some(m) = fock {
                let expected = evolve_fock_populations(m, params.kappa_a, t)?;
                let mut chi2 = 0.0;
                let hist: Vec<Vec<String>> = (0..=m)
                    .map(|level| {
                        let e = n as f64 * expected[level];
                        if e > 0.0 {
                            chi2 += (counts[level] as f64 - e).powi(2) / e;
                        }
                        vec![level.to_string(), counts[level].to_string(), num(e)]
                    })
                    .collect();
                write_csv(&out.join("histogram.csv"), &HISTOGRAM_CSV, &hist)?;
                report.push(format!("trajectories: Fock histogram at t = {t}, chi2 = {chi2:.3} over {} levels", m + 1));
            }
            if keep {
                write_trajectories_jsonl(&out.join("jumps.jsonl"), &records)?;
            }
        }
    }
    write_csv(&out.join("ensemble.csv"), &ENSEMBLE_CSV, &rows)?;
    report.push(format!("trajectories: {n} samples per time, seed {}, wrote ensemble.csv", cfg.seed));
    Ok(report)
}

#[derive(Serialize)]
struct WignerSnapshot {
    index: usize,
    t: f64,
    integral: f64,
    min_value: f64,
    /// `Σ_{l≠0} ‖W_l‖_∞ / ‖W_0‖_∞` on the radial grid.
    anisotropy: f64,
    /// The same ratio from the initial harmonics damped by
    /// `e^{−κ_n l² t/2}`; present only without loss.
    predicted_anisotropy: Option<f64>,
}

#[derive(Serialize)]
struct WignerSummary {
    convention: &'static str,
    grid: GridSpec,
    l_max: usize,
    snapshots: Vec<WignerSnapshot>,
}

pub fn wigner(cfg: &RunConfig) -> Result<Report, CliError> {
    let params = cfg.params()?;
    let psi = cfg.initial_state()?;
    let times = cfg.time_grid()?;
    cfg.check_wigner()?;
    let w = &cfg.wigner;
    let out = &cfg.output_dir;
    let extent = w.extent.unwrap_or_else(|| GridSpec::auto(psi.mean_photons()).x.max);
    let spec = GridSpec::square(extent, w.points)?;
    let radial: Vec<f64> = (0..w.radial_points).map(|i| extent * i as f64 / (w.radial_points - 1) as f64).collect();
    let l_max = w.l_max.min(psi.dim() - 1);
    let rho0 = psi.to_density();
    let h0 = wigner_harmonics(&rho0, &radial, l_max)?;
    let states = propagate_all(cfg, &rho0, &times)?;
    let mut snapshots = Vec::with_capacity(times.len());
    for (k, (t, rho)) in times.iter().zip(&states).enumerate() {
        let grid = wigner_with(rho, &spec, cfg.execution)?;
        write_csv(&out.join(format!("wigner_{k:03}.csv")), &einsel_core::io::WIGNER_CSV, &wigner_csv_rows(&grid))?;
        if w.raster {
            write_raster(&out.join(format!("wigner_{k:03}.bin")), &grid)?;
        }
        let h = wigner_harmonics(rho, &radial, l_max)?;
        write_csv(&out.join(format!("harmonics_{k:03}.csv")), &einsel_core::io::HARMONICS_CSV, &harmonics_csv_rows(&h))?;
        let predicted = if params.kappa_a == 0.0 {
            Some(evolve_wigner_dephasing(&h0, params.kappa_n, *t)?.anisotropy())
        } else {
            None
        };
        snapshots.push(WignerSnapshot {
            index: k,
            t: *t,
            integral: grid.integral(),
            min_value: grid.min_value(),
            anisotropy: h.anisotropy(),
            predicted_anisotropy: predicted,
        });
    }
    let report = snapshots
        .iter()
        .map(|s| {
            format!(
                "wigner: t = {}: integral {:.6}, min {:.4e}, anisotropy {:.4e}{}",
                s.t,
                s.integral,
                s.min_value,
                s.anisotropy,
                s.predicted_anisotropy.map(|p| format!(" (predicted {p:.4e})")).unwrap_or_default()
            )
        })
        .collect();
    write_json(&out.join("wigner_summary.json"), &WignerSummary { convention: CONVENTION, grid: spec, l_max, snapshots })?;
    Ok(report)
}

fn write_purity(path: &Path, psi: &StateVector, cfg: &RunConfig, times: &[f64]) -> Result<(), CliError> {
    let curve = purity_evolution_curve(psi, &cfg.params()?, times)?;
    let rows: Vec<Vec<String>> = times.iter().zip(&curve).map(|(t, g)| vec![num(*t), num(*g)]).collect();
    Ok(write_csv(path, &PURITY_CSV, &rows)?)
}

pub fn optimize(cfg: &RunConfig) -> Result<Report, CliError> {
    let params = cfg.params()?;
    let o = cfg.optimize_options()?;
    let basis = cfg.solver_basis(o.energy_target)?;
    let mut problem =
        SieveProblem::with_basis(o.energy_target, params, basis).map_err(|e| CliError::Config(format!("optimize: {e}")))?;
    problem.multistart = o.multistart;
    problem.tol = o.tol;
    problem.max_iter = o.max_iter;
    problem.seed = cfg.seed;
    problem.validate().map_err(|e| CliError::Config(format!("optimize: {e}")))?;
    let result = optimize_pointer_state(&problem)?;
    let out = &cfg.output_dir;
    write_json(&out.join("optimum.json"), &OptimumRecord::new(&result, o.energy_target, params.kappa_a, params.kappa_n))?;
    let mut report = vec![format!(
        "optimize: |dγ/dt| = {:.10}, overlap with Fock reference {:.8}, with coherent {:.8}, converged {}",
        result.objective(),
        result.overlap_fock,
        result.overlap_coherent,
        result.converged
    )];
    if let Some(note) = &result.note {
        report.push(format!("optimize: note: {note}"));
    }
    if let Some(grid) = &o.purity_times {
        let times = grid.values();
        let fock = fock_reference_state(o.energy_target, basis)?;
        let coherent = coherent_state(C64::new(o.energy_target.sqrt(), 0.0), basis)?;
        write_purity(&out.join("purity_optimal.csv"), &result.state, cfg, &times)?;
        write_purity(&out.join("purity_fock.csv"), &fock, cfg, &times)?;
        write_purity(&out.join("purity_coherent.csv"), &coherent, cfg, &times)?;
        report.push(format!("optimize: wrote purity curves on {} times", times.len()));
    }
    Ok(report)
}

#[derive(Serialize)]
struct SweepSummary {
    energy_target: f64,
    points: usize,
    failed_points: usize,
    plateau_end: Option<f64>,
    /// `1/(1 + r_c)` for integer targets, where `r_c` is the critical
    /// `κ_n/κ_a`.
    predicted_plateau_end: Option<f64>,
    overlap_strictly_decreasing: bool,
}

pub fn sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    let s = cfg.sweep_options()?;
    let basis = cfg.solver_basis(s.energy_target)?;
    SieveProblem::with_basis(s.energy_target, einsel_core::hilbert::ModelParams::new(0.0, 1.0, 0.0)?, basis)
        .and_then(|p| p.validate())
        .map_err(|e| CliError::Config(format!("sweep: {e}")))?;
    let options = SweepOptions {
        dim: Some(basis.dim()),
        multistart: s.multistart,
        tol: s.tol,
        max_iter: s.max_iter,
        seed: cfg.seed,
        mode: s.mode,
    };
    let ratios = s.ratios.values();
    let table = sweep_coupling_ratio(s.energy_target, &ratios, &options)?;
    let out = &cfg.output_dir;
    write_csv(&out.join("sweep.csv"), &SWEEP_CSV, &sweep_csv_rows(&table))?;
    let integer = table.is_integer_target() && s.energy_target >= 1.0;
    let predicted = if integer { Some(1.0 / (1.0 + critical_ratio(s.energy_target as u32)?)) } else { None };
    let failed: Vec<String> = table
        .points
        .iter()
        .filter_map(|p| p.result.as_ref().err().map(|e| format!("ratio {}: {e}", p.ratio)))
        .collect();
    let summary = SweepSummary {
        energy_target: s.energy_target,
        points: table.points.len(),
        failed_points: failed.len(),
        plateau_end: table.plateau_end(),
        predicted_plateau_end: predicted,
        overlap_strictly_decreasing: table.overlap_strictly_decreasing(),
    };
    write_json(&out.join("sweep_summary.json"), &summary)?;
    let mut report = vec![format!(
        "sweep: {} points, plateau end {:?} (predicted {:?}), overlap strictly decreasing {}",
        summary.points, summary.plateau_end, summary.predicted_plateau_end, summary.overlap_strictly_decreasing
    )];
    if !failed.is_empty() {
        return Err(CliError::Numeric(format!("sweep wrote sweep.csv but {} points failed: {}", failed.len(), failed.join("; "))));
    }
    report.push("sweep: wrote sweep.csv and sweep_summary.json".into());
    Ok(report)
}
