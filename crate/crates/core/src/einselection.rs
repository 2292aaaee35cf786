//! Predictability sieve: short-time purity loss of pure states, its
//! constrained minimization at fixed mean photon number, and the stability
//! analysis of Fock states.
//!
//! For a pure state the two printed sums reduce to
//! `γ̇_n = −2κ_n (⟨N²⟩ − ⟨N⟩²)` and `γ̇_a = −2κ_a (⟨N⟩ − |⟨a⟩|²)`, which is what
//! the optimizer works with; [`purity_rates_density`] evaluates the sums
//! themselves.
//!
//! The feasible set `{‖ψ‖ = 1, ⟨ψ|N|ψ⟩ = n̄}` is treated as a Riemannian
//! manifold in `ℝ^{2d}`. Tangent vectors are projected against `ψ` and `Nψ`;
//! the retraction normalizes `ψ + v` and then tilts it, `c_n ↦ c_n e^{τn/2}`,
//! with `τ` chosen so the mean photon number is restored exactly. Search is
//! L-BFGS on that manifold with Armijo backtracking along the retraction.
//!
//! Both rates are invariant under `e^{iφN}`, so results are reported in a
//! rotation gauge (`⟨a⟩` real and non-negative) followed by the global-phase
//! gauge, and overlaps are maximized over `φ`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::propagate_exact;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hilbert::{
    coherent_amplitudes, fix_global_phase, purity, DensityMatrix, ModelParams, StateVector, TruncatedBasis, C64,
};
use crate::trajectories::TrajectorySeed;

/// Overlap with the Fock state above `1 − PLATEAU_TOL` counts as on the plateau.
pub const PLATEAU_TOL: f64 = 1e-6;
pub const DEFAULT_MULTISTART: usize = 16;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;

const LBFGS_MEMORY: usize = 12;
const PERTURBED_START: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurityRates {
    pub gamma_dot_n: f64,
    pub gamma_dot_a: f64,
}

impl PurityRates {
    pub fn total(&self) -> f64 {
        self.gamma_dot_n + self.gamma_dot_a
    }
}

/// `γ̇_n = −κ_n Σ|ρ_mn|²(m−n)²` and
/// `γ̇_a = −κ_a Σ[|ρ_mn|²(m+n) − 2 Re(ρ*_mn ρ_{m+1,n+1}) √((m+1)(n+1))]`.
pub fn purity_rates_density(rho: &DensityMatrix, params: &ModelParams) -> PurityRates {
    let e = rho.elements();
    let d = rho.dim();
    let mut sn = 0.0;
    let mut sa = 0.0;
    for n in 0..d {
        for m in 0..d {
            let w = e[(m, n)].norm_sqr();
            let diff = m as f64 - n as f64;
            sn += w * diff * diff;
            sa += w * (m + n) as f64;
            if m + 1 < d && n + 1 < d {
                sa -= 2.0 * (e[(m, n)].conj() * e[(m + 1, n + 1)]).re * (((m + 1) * (n + 1)) as f64).sqrt();
            }
        }
    }
    PurityRates { gamma_dot_n: -params.kappa_n * sn, gamma_dot_a: -params.kappa_a * sa }
}

pub fn purity_rate(psi: &StateVector, params: &ModelParams) -> PurityRates {
    purity_rates_density(&psi.to_density(), params)
}

/// `dS_α/dt` at a pure state, `S_α = ln tr ρ^α / (1 − α)`:
/// `α/(1−α) · tr(ρ̇ρ) = α/(1−α) · γ̇/2`.
pub fn renyi_rate(psi: &StateVector, params: &ModelParams, alpha_order: f64) -> Result<f64> {
    if alpha_order == 0.0 || alpha_order == 1.0 || !alpha_order.is_finite() {
        return Err(Error::Domain(format!("Rényi order must differ from 0 and 1, got {alpha_order}")));
    }
    let rate = purity_rate(psi, params).total();
    Ok(alpha_order / (1.0 - alpha_order) * 0.5 * rate)
}

/// `dγ/dt` at `t = 0` of the exact evolution by the one-sided fourth-order
/// difference `(−25γ₀ + 48γ₁ − 36γ₂ + 16γ₃ − 3γ₄) / 12h`, `γ_k = γ(kh)`.
pub fn purity_slope_numeric(psi: &StateVector, params: &ModelParams, h: f64) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {h}")));
    }
    let rho = psi.to_density();
    let mut g = [purity(&rho), 0.0, 0.0, 0.0, 0.0];
    for (k, gk) in g.iter_mut().enumerate().skip(1) {
        *gk = purity(&propagate_exact(&rho, params, k as f64 * h)?);
    }
    Ok((-25.0 * g[0] + 48.0 * g[1] - 36.0 * g[2] + 16.0 * g[3] - 3.0 * g[4]) / (12.0 * h))
}

/// `γ(t) = tr ρ(t)²` on a time grid.
pub fn purity_evolution_curve(psi0: &StateVector, params: &ModelParams, times: &[f64]) -> Result<Vec<f64>> {
    let rho0 = psi0.to_density();
    Execution::default()
        .map_slice(times, |&t| propagate_exact(&rho0, params, t).map(|r| purity(&r)))
        .into_iter()
        .collect()
}

/// `|γ̇|` of a pure state and its gradient `g` with `d|γ̇| = Re⟨g|dψ⟩`.
#[derive(Debug, Clone, Copy)]
struct Objective {
    kappa_a: f64,
    kappa_n: f64,
}

impl Objective {
    fn new(params: &ModelParams) -> Self {
        Self { kappa_a: params.kappa_a, kappa_n: params.kappa_n }
    }

    #[cfg(test)]
    fn value(&self, c: &DVector<C64>) -> f64 {
        self.value_and_gradient(c).0
    }

    fn value_and_gradient(&self, c: &DVector<C64>) -> (f64, DVector<C64>) {
        let d = c.len();
        let (mean, var, a) = pure_moments(c);
        let value = 2.0 * self.kappa_n * var + 2.0 * self.kappa_a * (mean - a.norm_sqr());
        let grad = DVector::from_fn(d, |n, _| {
            let nf = n as f64;
            let lowered = if n + 1 < d { c[n + 1] * (nf + 1.0).sqrt() } else { C64::new(0.0, 0.0) };
            let raised = if n > 0 { c[n - 1] * nf.sqrt() } else { C64::new(0.0, 0.0) };
            c[n] * (4.0 * self.kappa_n * (nf * nf - 2.0 * mean * nf) + 4.0 * self.kappa_a * nf)
                - (a.conj() * lowered + a * raised) * (4.0 * self.kappa_a)
        });
        (value, grad)
    }

    fn scale(&self) -> f64 {
        (self.kappa_a + self.kappa_n).max(f64::MIN_POSITIVE)
    }

    /// Inverse of a rough Hessian diagonal. The number-variance term makes
    /// levels far from the target stiff (`∝ κ_n n²`); without this the
    /// L-BFGS steps collapse before the tail amplitudes settle.
    fn preconditioner(&self, target: f64, d: usize) -> Vec<f64> {
        let s = self.scale();
        (0..d)
            .map(|n| {
                let dn = n as f64 - target;
                s / (4.0 * self.kappa_n * dn * dn + 4.0 * self.kappa_a * (n as f64 + 1.0) + s)
            })
            .collect()
    }
}

fn precondition(p: &[f64], v: &DVector<C64>) -> DVector<C64> {
    DVector::from_fn(v.len(), |n, _| v[n] * p[n])
}

/// `(⟨N⟩, Var N, ⟨a⟩)` of a normalized vector. The variance is taken in a
/// second pass; `⟨N²⟩ − ⟨N⟩²` loses too many digits at large `⟨N⟩`.
fn pure_moments(c: &DVector<C64>) -> (f64, f64, C64) {
    let mut mean = 0.0;
    let mut a = C64::new(0.0, 0.0);
    for n in 0..c.len() {
        let nf = n as f64;
        mean += nf * c[n].norm_sqr();
        if n + 1 < c.len() {
            a += c[n].conj() * c[n + 1] * (nf + 1.0).sqrt();
        }
    }
    let var = c.iter().enumerate().map(|(n, z)| (n as f64 - mean).powi(2) * z.norm_sqr()).sum();
    (mean, var, a)
}

fn real_dot(u: &DVector<C64>, v: &DVector<C64>) -> f64 {
    u.iter().zip(v.iter()).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
}

fn number_times(c: &DVector<C64>) -> DVector<C64> {
    DVector::from_fn(c.len(), |n, _| c[n] * n as f64)
}

/// Orthonormal (real inner product) basis of the normal space at `c`.
fn normal_frame(c: &DVector<C64>) -> Vec<DVector<C64>> {
    let e1 = c.unscale(c.norm());
    let nc = number_times(c);
    let scale = nc.norm();
    let u = &nc - &e1 * C64::new(real_dot(&e1, &nc), 0.0);
    let un = u.norm();
    if scale > 0.0 && un > 1e-10 * scale {
        vec![e1, u / C64::new(un, 0.0)]
    } else {
        vec![e1]
    }
}

fn project_tangent(frame: &[DVector<C64>], v: &DVector<C64>) -> DVector<C64> {
    let mut out = v.clone();
    for e in frame {
        let k = real_dot(e, &out);
        out -= e * C64::new(k, 0.0);
    }
    out
}

/// Normalizes `v` and tilts it to mean photon number `target`.
fn retract(v: &DVector<C64>, target: f64) -> Option<DVector<C64>> {
    let d = v.len();
    let weights: Vec<f64> = v.iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let support: Vec<usize> = (0..d).filter(|&n| weights[n] > 0.0).collect();
    let (lo, hi) = (*support.first()? as f64, *support.last()? as f64);
    if target < lo - 1e-12 || target > hi + 1e-12 {
        return None;
    }
    let ln_w: Vec<f64> = weights.iter().map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect();
    // Mean and variance of n under p_n ∝ w_n e^{τn}, via log-sum-exp.
    let moments_at = |tau: f64| {
        let peak = support.iter().map(|&n| ln_w[n] + tau * n as f64).fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &n in &support {
            let p = (ln_w[n] + tau * n as f64 - peak).exp();
            let nf = n as f64;
            z += p;
            s1 += p * nf;
            s2 += p * nf * nf;
        }
        let mean = s1 / z;
        (mean, (s2 / z - mean * mean).max(0.0))
    };
    let mut tau = 0.0;
    if hi > lo {
        let target = target.clamp(lo + 1e-14 * (hi - lo), hi - 1e-14 * (hi - lo));
        let (mut a, mut b) = (f64::NEG_INFINITY, f64::INFINITY);
        for _ in 0..200 {
            let (mean, var) = moments_at(tau);
            let err = mean - target;
            if err.abs() <= 1e-15 * target.max(1.0) {
                break;
            }
            if err > 0.0 {
                b = b.min(tau);
            } else {
                a = a.max(tau);
            }
            let mut next = if var > 0.0 { tau - err / var } else { f64::NAN };
            let inside = |x: f64| x.is_finite() && x > a && x < b;
            if !inside(next) {
                next = match (a.is_finite(), b.is_finite()) {
                    (true, true) => 0.5 * (a + b),
                    (true, false) => a + 1.0 + (a - tau).abs(),
                    (false, true) => b - 1.0 - (b - tau).abs(),
                    _ => tau - err.signum(),
                };
            }
            if (next - tau).abs() <= 1e-16 * tau.abs().max(1.0) {
                tau = next;
                break;
            }
            tau = next;
        }
    }
    let mut out = DVector::from_fn(d, |n, _| v[n] * (0.5 * tau * n as f64).exp());
    let norm = out.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    out /= C64::new(norm, 0.0);
    Some(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveProblem {
    /// Mean photon number `n̄₀`.
    pub energy_target: f64,
    pub params: ModelParams,
    pub basis: TruncatedBasis,
    pub multistart: usize,
    /// Projected-gradient tolerance, in units of `κ_a + κ_n`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl SieveProblem {
    /// Default dimension `⌈4n̄₀⌉ + 20`.
    pub fn new(energy_target: f64, params: ModelParams) -> Result<Self> {
        let dim = recommended_dim(energy_target)?;
        Self::with_basis(energy_target, params, TruncatedBasis::new(dim)?)
    }

    pub fn with_basis(energy_target: f64, params: ModelParams, basis: TruncatedBasis) -> Result<Self> {
        let problem = Self {
            energy_target,
            params,
            basis,
            multistart: DEFAULT_MULTISTART,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let e = self.energy_target;
        if !(e >= 0.0) || !e.is_finite() {
            return Err(Error::Infeasible(format!("energy target must be finite and non-negative, got {e}")));
        }
        let d = self.basis.dim();
        if e > 0.5 * (d - 1) as f64 {
            return Err(Error::Infeasible(format!(
                "energy target {e} leaves no margin in dimension {d}; use at least {}",
                recommended_dim(e)?
            )));
        }
        if self.multistart < 2 {
            return Err(Error::Domain("multistart needs at least the Fock and coherent starts".into()));
        }
        Ok(())
    }

    fn is_integer_target(&self) -> bool {
        (self.energy_target - self.energy_target.round()).abs() < 1e-12
    }
}

pub fn recommended_dim(energy_target: f64) -> Result<usize> {
    if !(energy_target >= 0.0) || !energy_target.is_finite() {
        return Err(Error::Infeasible(format!("energy target must be finite and non-negative, got {energy_target}")));
    }
    Ok((4.0 * energy_target).ceil() as usize + 20)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResiduals {
    pub norm: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FockReference {
    /// `|n₀⟩` for an integer target.
    Fock,
    /// `√(1−f)|⌊n̄₀⌋⟩ + √f|⌈n̄₀⌉⟩`, `f = n̄₀ − ⌊n̄₀⌋`.
    TwoFock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub state: StateVector,
    pub rates: PurityRates,
    /// `|⟨n₀|ψ⟩|` or `max_φ |⟨ψ_sf|e^{iφN}ψ⟩|`.
    pub overlap_fock: f64,
    pub fock_reference: FockReference,
    /// `max_φ |⟨α|e^{iφN}ψ⟩|` with `|α|² = n̄₀`.
    pub overlap_coherent: f64,
    pub constraint_residuals: ConstraintResiduals,
    pub converged: bool,
    pub restarts_used: usize,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub note: Option<String>,
}

impl OptimizationResult {
    /// `|γ̇|` at the optimum.
    pub fn objective(&self) -> f64 {
        -self.rates.total()
    }
}

#[derive(Debug, Clone)]
struct LocalRun {
    state: DVector<C64>,
    value: f64,
    gradient_norm: f64,
    iterations: usize,
    converged: bool,
}

fn lbfgs(objective: &Objective, start: &DVector<C64>, target: f64, tol: f64, max_iter: usize) -> Option<LocalRun> {
    let mut x = retract(start, target)?;
    let (mut f, g) = objective.value_and_gradient(&x);
    let mut frame = normal_frame(&x);
    let mut gp = project_tangent(&frame, &g);
    let mut history: VecDeque<(DVector<C64>, DVector<C64>, f64)> = VecDeque::new();
    let stop = tol * objective.scale();
    let pre = objective.preconditioner(target, x.len());
    let mut iterations = 0;
    while iterations < max_iter {
        let gnorm = gp.norm();
        if gnorm < stop {
            return Some(LocalRun { state: x, value: f, gradient_norm: gnorm, iterations, converged: true });
        }
        iterations += 1;
        // Two-loop recursion.
        let mut q = gp.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * real_dot(s, &q);
            q -= y * C64::new(a, 0.0);
            alphas.push(a);
        }
        q = precondition(&pre, &q);
        if let Some((s, y, _)) = history.back() {
            q *= C64::new(real_dot(s, y) / real_dot(y, &precondition(&pre, y)), 0.0);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * real_dot(y, &q);
            q += s * C64::new(a - b, 0.0);
        }
        let mut dir = project_tangent(&frame, &(-q));
        let mut slope = real_dot(&gp, &dir);
        if !(slope < -1e-12 * gnorm * dir.norm()) {
            history.clear();
            dir = project_tangent(&frame, &-precondition(&pre, &gp));
            slope = real_dot(&gp, &dir);
        }
        let mut step = if history.is_empty() { (1.0 / dir.norm()).min(1.0) } else { 1.0 };
        // Rounding in `f` grows with the moments it is assembled from.
        let slack = 16.0 * f64::EPSILON * (f.abs() + objective.scale() * (1.0 + target));
        let mut accepted = None;
        for _ in 0..60 {
            if let Some(candidate) = retract(&(&x + &dir * C64::new(step, 0.0)), target) {
                let (fc, gc) = objective.value_and_gradient(&candidate);
                let armijo = fc <= f + 1e-4 * step * slope;
                // Near the optimum the decrease drops below rounding in `f`;
                // the directional derivative still tells overshoot apart.
                let flat = || {
                    let frame_c = normal_frame(&candidate);
                    let gpc = project_tangent(&frame_c, &gc);
                    let slope_c = real_dot(&gpc, &project_tangent(&frame_c, &dir));
                    fc <= f + slack && slope_c <= -0.8 * slope && slope_c >= 0.9 * slope
                };
                if armijo || flat() {
                    accepted = Some((candidate, fc, gc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if history.is_empty() {
                return Some(LocalRun { state: x, value: f, gradient_norm: gnorm, iterations, converged: false });
            }
            history.clear();
            continue;
        };
        let frame_new = normal_frame(&x_new);
        let gp_new = project_tangent(&frame_new, &g_new);
        let s = project_tangent(&frame_new, &(&dir * C64::new(step, 0.0)));
        let y = &gp_new - project_tangent(&frame_new, &gp);
        let sy = real_dot(&s, &y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if history.len() == LBFGS_MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        f = f_new;
        frame = frame_new;
        gp = gp_new;
    }
    let gnorm = gp.norm();
    Some(LocalRun { state: x, value: f, gradient_norm: gnorm, iterations, converged: gnorm < stop })
}

/// Fock state for an integer target, energy-matched two-Fock state otherwise.
pub fn fock_reference_state(energy_target: f64, basis: TruncatedBasis) -> Result<StateVector> {
    let lo = energy_target.floor();
    let frac = energy_target - lo;
    let lo = lo as usize;
    if lo + 1 >= basis.dim() {
        return Err(Error::OutOfBasis { level: lo + 1, dim: basis.dim() });
    }
    let mut amps = vec![C64::new(0.0, 0.0); basis.dim()];
    amps[lo] = C64::new((1.0 - frac).sqrt(), 0.0);
    amps[lo + 1] = C64::new(frac.sqrt(), 0.0);
    StateVector::from_amplitudes(amps)
}

fn coherent_reference(energy_target: f64, basis: TruncatedBasis) -> Result<StateVector> {
    StateVector::from_amplitudes(coherent_amplitudes(C64::new(energy_target.sqrt(), 0.0), basis.dim()))
}

/// `max_φ |⟨χ|e^{iφN}ψ⟩|`.
pub fn rotation_max_overlap(chi: &StateVector, psi: &StateVector) -> Result<f64> {
    chi.basis().ensure_same(&psi.basis())?;
    let w: Vec<(f64, C64)> = chi
        .amplitudes()
        .iter()
        .zip(psi.amplitudes().iter())
        .enumerate()
        .filter(|(_, (a, b))| a.norm() * b.norm() > 0.0)
        .map(|(n, (a, b))| (n as f64, a.conj() * b))
        .collect();
    if w.is_empty() {
        return Ok(0.0);
    }
    let eval = |phi: f64| w.iter().map(|&(n, z)| z * C64::from_polar(1.0, n * phi)).sum::<C64>().norm();
    let span = w.last().unwrap().0 - w[0].0;
    if span == 0.0 {
        return Ok(eval(0.0));
    }
    let samples = (16.0 * span).ceil() as usize + 16;
    let h = std::f64::consts::TAU / samples as f64;
    let (best_i, _) = (0..samples)
        .map(|i| (i, eval(h * i as f64)))
        .fold((0, f64::MIN), |acc, v| if v.1 > acc.1 { v } else { acc });
    // Golden-section refinement on the bracketing cell pair.
    let (mut a, mut b) = (h * (best_i as f64 - 1.0), h * (best_i as f64 + 1.0));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..80 {
        if eval(c) > eval(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    Ok(eval(0.5 * (a + b)).max(eval(h * best_i as f64)))
}

/// Rotates so that `⟨a⟩` is real and non-negative, then fixes the global phase.
fn apply_gauge(c: &mut DVector<C64>) {
    let (_, _, a) = pure_moments(c);
    if a.norm() > 1e-10 {
        let phi = a.arg();
        for (n, z) in c.iter_mut().enumerate() {
            *z *= C64::from_polar(1.0, -(n as f64) * phi);
        }
    }
    fix_global_phase(c.as_mut_slice());
}

fn random_start(rng: &mut impl Rng, d: usize, target: f64) -> DVector<C64> {
    let width = rng.gen_range(0.5..2.0) * (target + 1.0).sqrt();
    DVector::from_fn(d, |n, _| {
        let z = (n as f64 - target) / width;
        let envelope = (-0.25 * z * z).exp();
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * envelope
    })
}

/// Starting points in order: the Fock (or two-Fock) state, the coherent
/// state, an optional warm start, a Fock state nudged into the
/// `(n₀−1, n₀+1)` plane, then random feasible states.
fn starting_points(problem: &SieveProblem, warm: Option<&StateVector>) -> Result<Vec<DVector<C64>>> {
    let d = problem.basis.dim();
    let target = problem.energy_target;
    let fock = fock_reference_state(target, problem.basis)?;
    let mut starts = vec![fock.amplitudes().clone(), coherent_reference(target, problem.basis)?.amplitudes().clone()];
    if let Some(w) = warm {
        problem.basis.ensure_same(&w.basis())?;
        starts.push(w.amplitudes().clone());
    }
    let lo = target.floor() as usize;
    let mut nudged = fock.amplitudes().clone();
    if lo >= 1 {
        nudged[lo - 1] += C64::new(PERTURBED_START, 0.0);
    }
    let hi = if problem.is_integer_target() { lo + 1 } else { lo + 2 };
    if hi < d {
        nudged[hi] += C64::new(PERTURBED_START, 0.0);
    }
    starts.push(nudged);
    let mut rng = TrajectorySeed { master: problem.seed, stream: 0 }.rng();
    while starts.len() < problem.multistart.max(starts.len()) {
        starts.push(random_start(&mut rng, d, target));
    }
    Ok(starts)
}

pub fn optimize_pointer_state(problem: &SieveProblem) -> Result<OptimizationResult> {
    optimize_pointer_state_from(problem, None)
}

/// Like [`optimize_pointer_state`], with `warm` added to the starting points.
pub fn optimize_pointer_state_from(problem: &SieveProblem, warm: Option<&StateVector>) -> Result<OptimizationResult> {
    problem.validate()?;
    let target = problem.energy_target;
    let basis = problem.basis;
    if target == 0.0 {
        let vacuum = crate::hilbert::fock_state(0, basis)?;
        return finish(
            problem,
            LocalRun { state: vacuum.amplitudes().clone(), value: 0.0, gradient_norm: 0.0, iterations: 0, converged: true },
            0,
            Some("zero energy target: the vacuum is the trivial optimum".into()),
        );
    }
    let objective = Objective::new(&problem.params);
    let starts = starting_points(problem, warm)?;
    let mut best: Option<LocalRun> = None;
    let mut used = 0;
    for start in &starts {
        let Some(run) = lbfgs(&objective, start, target, problem.tol, problem.max_iter) else {
            continue;
        };
        used += 1;
        let better = match &best {
            None => true,
            // Lower objective wins; convergence only breaks near-ties.
            Some(b) => {
                let tie = 1e-10 * objective.scale() * (1.0 + b.value.abs());
                if (run.value - b.value).abs() <= tie {
                    run.converged && !b.converged
                } else {
                    run.value < b.value
                }
            }
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.ok_or_else(|| Error::Infeasible("no starting point could be made feasible".into()))?;
    let note = (!best.converged).then(|| "best local run did not reach the gradient tolerance".to_string());
    finish(problem, best, used, note)
}

fn finish(problem: &SieveProblem, run: LocalRun, restarts_used: usize, note: Option<String>) -> Result<OptimizationResult> {
    let mut c = run.state;
    apply_gauge(&mut c);
    let norm = c.norm();
    let (mean, _, _) = pure_moments(&c);
    let state = StateVector::from_normalized_unchecked(c);
    let rates = purity_rate(&state, &problem.params);
    let fock_reference = if problem.is_integer_target() { FockReference::Fock } else { FockReference::TwoFock };
    let overlap_fock = rotation_max_overlap(&fock_reference_state(problem.energy_target, problem.basis)?, &state)?;
    let overlap_coherent = rotation_max_overlap(&coherent_reference(problem.energy_target, problem.basis)?, &state)?;
    Ok(OptimizationResult {
        state,
        rates,
        overlap_fock,
        fock_reference,
        overlap_coherent,
        constraint_residuals: ConstraintResiduals { norm: (norm - 1.0).abs(), energy: (mean - problem.energy_target).abs() },
        converged: run.converged,
        restarts_used,
        iterations: run.iterations,
        gradient_norm: run.gradient_norm,
        note,
    })
}

/// Norm of the gradient of `γ̇` projected onto the feasible set's tangent
/// space at `psi`.
pub fn projected_gradient_norm(psi: &StateVector, params: &ModelParams) -> f64 {
    let c = psi.amplitudes();
    let (_, g) = Objective::new(params).value_and_gradient(c);
    project_tangent(&normal_frame(c), &g).norm()
}

/// `κ_n/κ_a = n₀ + 1/2 + √(n₀(n₀+1))`.
pub fn critical_ratio(n0: u32) -> Result<f64> {
    if n0 == 0 {
        return Err(Error::Domain("the vacuum has no critical coupling".into()));
    }
    let n = n0 as f64;
    Ok(n + 0.5 + (n * (n + 1.0)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianSignature {
    /// Strict constrained maximum of `γ̇`.
    Maximum,
    Saddle,
    /// Boundary case: the form is negative semidefinite on the constraint
    /// cone with a null direction.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TippingPlane {
    /// Second-order form of `γ̇/2` on `(ε_{n₀−1}, ε_{n₀+1})` with real
    /// amplitudes (relative phase zero).
    pub block: [[f64; 2]; 2],
    /// Energy-constraint form `diag(−1, 1)` is added with this multiplier.
    pub multiplier: f64,
    /// Eigenvalues of `block + multiplier·diag(−1, 1)`, ascending.
    pub eigenvalues: [f64; 2],
    /// Form values on the two cone lines `(1, ±1)/√2`.
    pub cone_values: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockStationarity {
    pub n0: u32,
    pub is_stationary: bool,
    pub projected_gradient_norm: f64,
    pub hessian_signature: HessianSignature,
    /// `min_μ λ_max(Q + μC)`: negative iff `Q < 0` on the cone `C = 0`.
    pub finsler_value: f64,
    pub finsler_multiplier: f64,
    pub tipping_plane: TippingPlane,
}

/// Second-order form `Q` of `γ̇/2` around `|n₀⟩` and the energy form `C`, in
/// the real variables `ε_n`, `n ≠ n₀`, `n < window`.
fn fock_quadratic_forms(n0: usize, params: &ModelParams, window: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let levels: Vec<usize> = (0..window).filter(|&n| n != n0).collect();
    let k = levels.len();
    let mut q = DMatrix::zeros(k, k);
    let mut c = DMatrix::zeros(k, k);
    let mut v = DVector::zeros(k);
    for (i, &n) in levels.iter().enumerate() {
        let d = n as f64 - n0 as f64;
        q[(i, i)] = -params.kappa_n * d * d;
        c[(i, i)] = d;
        if n + 1 == n0 {
            v[i] = (n0 as f64).sqrt();
        }
        if n == n0 + 1 {
            v[i] = (n0 as f64 + 1.0).sqrt();
        }
    }
    q += &v * v.transpose() * params.kappa_a;
    (q, c)
}

fn lambda_max(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `min_μ λ_max(Q + μC)` by golden-section search (the function is convex).
fn finsler_min(q: &DMatrix<f64>, c: &DMatrix<f64>) -> (f64, f64) {
    let bound = 10.0 * (q.norm() + 1.0) / c.norm().max(1e-300) * c.nrows() as f64;
    let f = |mu: f64| lambda_max(&(q + c * mu));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (-bound, bound);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..300 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
        if b - a <= 1e-15 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
    }
    let mu = 0.5 * (a + b);
    (f(mu), mu)
}

pub fn fock_stationarity_analysis(n0: u32, params: &ModelParams) -> Result<FockStationarity> {
    params.validate()?;
    if n0 == 0 {
        return Err(Error::Domain("the vacuum is an exact pointer state; no tipping analysis".into()));
    }
    let n = n0 as usize;
    let window = 2 * n + 4;
    let basis = TruncatedBasis::new(window)?;
    let fock = crate::hilbert::fock_state(n, basis)?;
    let grad = projected_gradient_norm(&fock, params);
    let (q, c) = fock_quadratic_forms(n, params, window);
    let (value, mu) = finsler_min(&q, &c);
    let scale = (params.kappa_a + params.kappa_n).max(f64::MIN_POSITIVE);
    let signature = if value < -1e-12 * scale {
        HessianSignature::Maximum
    } else if value > 1e-12 * scale {
        HessianSignature::Saddle
    } else {
        HessianSignature::Degenerate
    };

    let nf = n as f64;
    let cross = params.kappa_a * (nf * (nf + 1.0)).sqrt();
    let block = [[-params.kappa_n + params.kappa_a * nf, cross], [cross, -params.kappa_n + params.kappa_a * (nf + 1.0)]];
    let q2 = DMatrix::from_row_slice(2, 2, &[block[0][0], block[0][1], block[1][0], block[1][1]]);
    let c2 = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
    let (_, mu2) = finsler_min(&q2, &c2);
    let mut ev: Vec<f64> = SymmetricEigen::new(&q2 + &c2 * mu2).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let cone = |s: f64| 0.5 * (block[0][0] + block[1][1]) + s * block[0][1];
    Ok(FockStationarity {
        n0,
        is_stationary: grad < 1e-10 * scale,
        projected_gradient_norm: grad,
        hessian_signature: signature,
        finsler_value: value,
        finsler_multiplier: mu,
        tipping_plane: TippingPlane { block, multiplier: mu2, eigenvalues: [ev[0], ev[1]], cone_values: [cone(1.0), cone(-1.0)] },
    })
}

/// Locates the ratio `κ_n/κ_a` at which the Finsler value changes sign, by
/// bisection on the full quadratic form.
pub fn critical_ratio_numeric(n0: u32) -> Result<f64> {
    if n0 == 0 {
        return Err(Error::Domain("the vacuum has no critical coupling".into()));
    }
    let value = |ratio: f64| -> Result<f64> {
        Ok(fock_stationarity_analysis(n0, &ModelParams::new(0.0, 1.0, ratio)?)?.finsler_value)
    };
    let (mut lo, mut hi) = (0.0, 4.0 * n0 as f64 + 4.0);
    if value(lo)? <= 0.0 || value(hi)? >= 0.0 {
        return Err(Error::Domain("no sign change in the bracket".into()));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if value(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Points in grid order, each seeded with its predecessor's optimum.
    #[default]
    WarmStart,
    /// Independent points run data-parallel.
    ColdParallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub dim: Option<usize>,
    pub multistart: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub mode: SweepMode,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { dim: None, multistart: DEFAULT_MULTISTART, tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, seed: 0, mode: SweepMode::default() }
    }
}

#[derive(Debug)]
pub struct SweepPoint {
    /// `κ_a/(κ_a + κ_n)`, with `κ_a = ratio`, `κ_n = 1 − ratio`.
    pub ratio: f64,
    pub result: Result<OptimizationResult>,
}

#[derive(Debug)]
pub struct SweepTable {
    pub energy_target: f64,
    pub points: Vec<SweepPoint>,
}

impl SweepTable {
    pub fn is_integer_target(&self) -> bool {
        (self.energy_target - self.energy_target.round()).abs() < 1e-12
    }

    /// Largest grid ratio up to which every point has
    /// `overlap_fock ≥ 1 − PLATEAU_TOL`; `None` for non-integer targets or
    /// when the first point is already off the plateau.
    pub fn plateau_end(&self) -> Option<f64> {
        if !self.is_integer_target() {
            return None;
        }
        let mut end = None;
        for p in &self.points {
            match &p.result {
                Ok(r) if r.overlap_fock >= 1.0 - PLATEAU_TOL => end = Some(p.ratio),
                _ => break,
            }
        }
        end
    }

    /// Whether the Fock-reference overlap decreases strictly along the grid.
    pub fn overlap_strictly_decreasing(&self) -> bool {
        let overlaps: Vec<f64> = self.points.iter().filter_map(|p| p.result.as_ref().ok().map(|r| r.overlap_fock)).collect();
        overlaps.len() == self.points.len() && overlaps.windows(2).all(|w| w[1] < w[0])
    }
}

pub fn sweep_params(ratio: f64) -> Result<ModelParams> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Domain(format!("coupling ratio must lie in [0, 1], got {ratio}")));
    }
    ModelParams::new(0.0, ratio, 1.0 - ratio)
}

pub fn sweep_coupling_ratio(energy_target: f64, ratios: &[f64], options: &SweepOptions) -> Result<SweepTable> {
    let dim = match options.dim {
        Some(d) => d,
        None => recommended_dim(energy_target)?,
    };
    let basis = TruncatedBasis::new(dim)?;
    for &r in ratios {
        sweep_params(r)?;
    }
    let problem_at = |ratio: f64| -> Result<SieveProblem> {
        let mut p = SieveProblem::with_basis(energy_target, sweep_params(ratio)?, basis)?;
        p.multistart = options.multistart;
        p.tol = options.tol;
        p.max_iter = options.max_iter;
        p.seed = options.seed;
        Ok(p)
    };
    let points = match options.mode {
        SweepMode::WarmStart => {
            let mut out: Vec<SweepPoint> = Vec::with_capacity(ratios.len());
            let mut warm: Option<StateVector> = None;
            for &ratio in ratios {
                let result = problem_at(ratio).and_then(|p| optimize_pointer_state_from(&p, warm.as_ref()));
                if let Ok(r) = &result {
                    warm = Some(r.state.clone());
                }
                out.push(SweepPoint { ratio, result });
            }
            out
        }
        SweepMode::ColdParallel => Execution::Parallel.map_slice(ratios, |&ratio| SweepPoint {
            ratio,
            result: problem_at(ratio).and_then(|p| optimize_pointer_state(&p)),
        }),
    };
    Ok(SweepTable { energy_target, points })
}
