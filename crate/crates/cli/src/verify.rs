//! Oracle suite for `einsel verify`: each check compares two independent
//! computations and reports the gap against its tolerance.

use std::f64::consts::PI;

use einsel_core::dynamics::{
    apply_superoperator, channel_commutation_defect, evolve_cat_closed_form, propagate_exact, Liouvillian,
};
use einsel_core::hilbert::{cat_state, fock_state, ModelParams, StateVector, TruncatedBasis, C64};
use einsel_core::phase_space::{kernel_validation_error, wigner, GridSpec};
use einsel_core::trajectories::TrajectorySeed;
use rand::Rng;

use crate::error::CliError;

pub const PARAM_SETS: [(f64, f64, f64); 3] = [(1.0, 1.0, 1.0), (1.0, 5.0, 1.0), (1.0, 1.0, 5.0)];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value < self.tolerance
    }

    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        format!("{status} {:<36} {:.3e} (tolerance {:.1e})", self.name, self.value, self.tolerance)
    }
}

fn params(set: (f64, f64, f64)) -> ModelParams {
    ModelParams::new(set.0, set.1, set.2).expect("fixed parameters are valid")
}

fn random_state(seed: u64, d: usize) -> einsel_core::Result<StateVector> {
    let mut rng = TrajectorySeed::from(seed).rng();
    StateVector::normalized((0..d).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
}

/// Runs every check. `kernel_perturbation` is added to the closed-form
/// Wigner kernels; any nonzero value beyond the tolerance must fail.
pub fn run(kernel_perturbation: f64) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();

    let b = TruncatedBasis::new(12)?;
    let mut worst: f64 = 0.0;
    for set in PARAM_SETS {
        let p = params(set);
        let l = Liouvillian::new(&p, b)?;
        for t in [0.1, 0.7, 2.0] {
            let prop = l.propagator(t)?;
            for seed in 0..10 {
                let rho = random_state(seed, 12)?.to_density();
                worst = worst.max(propagate_exact(&rho, &p, t)?.max_abs_diff(&apply_superoperator(&prop, &rho))?);
            }
        }
    }
    checks.push(Check { name: "closed form vs Liouvillian (dim 12)", value: worst, tolerance: 1e-8 });

    let mut worst: f64 = 0.0;
    let mut trace: f64 = 0.0;
    for set in PARAM_SETS {
        worst = worst.max(channel_commutation_defect(&params(set), b, 1.0)?);
        trace = trace.max(Liouvillian::new(&params(set), b)?.trace_defect());
    }
    checks.push(Check { name: "channel commutation (dim 12, t = 1)", value: worst, tolerance: 1e-10 });
    checks.push(Check { name: "Liouvillian trace preservation", value: trace, tolerance: 1e-10 });

    let b = TruncatedBasis::new(30)?;
    let alpha = C64::new(2.0, 0.5);
    let rho0 = cat_state(alpha, PI / 3.0, b)?.to_density();
    let mut worst: f64 = 0.0;
    for set in PARAM_SETS {
        let p = params(set);
        for t in [0.05, 0.5] {
            let closed = evolve_cat_closed_form(alpha, PI / 3.0, &p, t, b)?;
            worst = worst.max(propagate_exact(&rho0, &p, t)?.max_abs_diff(&closed)?);
        }
    }
    checks.push(Check { name: "cat closed form vs propagator", value: worst, tolerance: 1e-10 });

    checks.push(Check {
        name: "Wigner kernels vs quadrature",
        value: kernel_validation_error(5, kernel_perturbation),
        tolerance: 1e-6,
    });

    let vacuum = fock_state(0, TruncatedBasis::new(1)?)?.to_density();
    let integral = wigner(&vacuum, &GridSpec::square(6.0, 121)?)?.integral();
    checks.push(Check { name: "vacuum Wigner integral", value: (integral - 1.0).abs(), tolerance: 2e-3 });

    Ok(checks)
}
