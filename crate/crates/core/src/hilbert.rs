//! Truncated Fock-space representation of a single bosonic mode.
//!
//! Quadratures follow `x̂ = (a + a†)/√2`, `p̂ = (a − a†)/(i√2)`, so the vacuum
//! variance along any axis is exactly 1/2.
//!
//! Every constructor fixes the global phase so that the first significant
//! amplitude is real and positive.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ln_factorial, min_dim_for_poisson, poisson_tail};

pub type C64 = Complex64;

/// Default bound on the probability mass a coherent branch may leave outside
/// the basis.
pub const DEFAULT_LEAKAGE_TOL: f64 = 1e-10;

/// Amplitudes below this fraction of the largest one are ignored when fixing
/// the global phase.
pub const GAUGE_THRESHOLD: f64 = 1e-12;

const NORM_TOL: f64 = 1e-12;
/// Amplitudes below `e^{-350}` are flushed to zero so that outer products
/// stay out of the subnormal range.
const FLUSH_LN: f64 = -350.0;
const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TruncatedBasis {
    dim: usize,
}

impl TruncatedBasis {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("basis dimension must be at least 1".into()));
        }
        Ok(Self { dim })
    }

    /// Smallest basis holding a Poisson distribution of the given mean with
    /// tail mass below `tol`.
    pub fn for_mean_photons(mean: f64, tol: f64) -> Self {
        Self { dim: min_dim_for_poisson(mean.max(0.0), tol).max(1) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ensure_same(&self, other: &TruncatedBasis) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch { left: self.dim, right: other.dim });
        }
        Ok(())
    }
}

/// Model parameters `(ω_c, κ_a, κ_n)`. Rates and times share whatever unit
/// the caller picks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub omega_c: f64,
    pub kappa_a: f64,
    pub kappa_n: f64,
}

impl ModelParams {
    pub fn new(omega_c: f64, kappa_a: f64, kappa_n: f64) -> Result<Self> {
        let p = Self { omega_c, kappa_a, kappa_n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_a >= 0.0 && self.kappa_n >= 0.0) || !self.omega_c.is_finite() {
            return Err(Error::Domain(format!(
                "rates must be non-negative and finite (kappa_a={}, kappa_n={}, omega_c={})",
                self.kappa_a, self.kappa_n, self.omega_c
            )));
        }
        if !self.kappa_a.is_finite() || !self.kappa_n.is_finite() {
            return Err(Error::Domain("rates must be finite".into()));
        }
        Ok(())
    }
}

/// Axis of the rotated quadrature `x_θ = (a e^{−iθ} + a† e^{iθ})/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    theta: f64,
}

impl QuadratureSpec {
    pub fn new(theta: f64) -> Self {
        Self { theta: theta.rem_euclid(TAU) }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// The conjugate axis, rotated by π/2.
    pub fn orthogonal(&self) -> Self {
        Self::new(self.theta + 0.5 * PI)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<C64>,
    basis: TruncatedBasis,
}

impl StateVector {
    /// Normalizes the given amplitudes and fixes the global phase.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let mut s = Self::normalized(amplitudes)?;
        fix_global_phase(s.amplitudes.as_mut_slice());
        Ok(s)
    }

    /// Normalizes without touching the global phase.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        let basis = TruncatedBasis::new(amplitudes.len())?;
        let mut v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidState(format!("cannot normalize vector of norm {norm}")));
        }
        v.unscale_mut(norm);
        Ok(Self { amplitudes: v, basis })
    }

    pub(crate) fn from_normalized_unchecked(amplitudes: DVector<C64>) -> Self {
        debug_assert!((amplitudes.norm() - 1.0).abs() < 1e-9);
        let basis = TruncatedBasis { dim: amplitudes.len() };
        Self { amplitudes, basis }
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn basis(&self) -> TruncatedBasis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() < NORM_TOL
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.basis.ensure_same(&other.basis)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn mean_photons(&self) -> f64 {
        self.amplitudes.iter().enumerate().map(|(n, c)| n as f64 * c.norm_sqr()).sum()
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            elements: &self.amplitudes * self.amplitudes.adjoint(),
            basis: self.basis,
        }
    }
}

/// Rotates the amplitudes so the first significant one is real positive.
pub fn fix_global_phase(amps: &mut [C64]) {
    let max = amps.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    if let Some(first) = amps.iter().find(|c| c.norm() > GAUGE_THRESHOLD * max) {
        let phase = first.conj() / first.norm();
        for c in amps.iter_mut() {
            *c *= phase;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    elements: DMatrix<C64>,
    basis: TruncatedBasis,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn from_matrix(elements: DMatrix<C64>) -> Result<Self> {
        if elements.nrows() != elements.ncols() {
            return Err(Error::InvalidState("density matrix must be square".into()));
        }
        let rho = Self { basis: TruncatedBasis::new(elements.nrows())?, elements };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(elements: DMatrix<C64>) -> Self {
        let basis = TruncatedBasis { dim: elements.nrows() };
        Self { elements, basis }
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        psi.to_density()
    }

    /// Diagonal state with the given populations (renormalized).
    pub fn from_populations(populations: &[f64]) -> Result<Self> {
        let total: f64 = populations.iter().sum();
        if populations.iter().any(|p| *p < 0.0) || !(total > 0.0) {
            return Err(Error::InvalidState("populations must be non-negative with positive sum".into()));
        }
        let d = DVector::from_iterator(populations.len(), populations.iter().map(|p| C64::new(p / total, 0.0)));
        Self::from_matrix(DMatrix::from_diagonal(&d))
    }

    pub fn elements(&self) -> &DMatrix<C64> {
        &self.elements
    }

    pub fn into_elements(self) -> DMatrix<C64> {
        self.elements
    }

    pub fn basis(&self) -> TruncatedBasis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn trace(&self) -> C64 {
        self.elements.trace()
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.elements[(n, n)].re).collect()
    }

    /// Largest `|ρ_mn − conj(ρ_nm)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for m in 0..d {
            for n in m..d {
                worst = worst.max((self.elements[(m, n)] - self.elements[(n, m)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = ((&self.elements + self.elements.adjoint()) * C64::new(0.5, 0.0))
            .map(|z| if z.norm() < 1e-250 { C64::new(0.0, 0.0) } else { z });
        let mut ev: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_defect();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (defect {herm:.3e})")));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = self.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// Largest elementwise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> Result<f64> {
        self.basis.ensure_same(&other.basis)?;
        Ok(self
            .elements
            .iter()
            .zip(other.elements.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn frobenius_distance(&self, other: &DensityMatrix) -> Result<f64> {
        self.basis.ensure_same(&other.basis)?;
        Ok((&self.elements - &other.elements).norm())
    }
}

/// `|n⟩`.
pub fn fock_state(n: usize, basis: TruncatedBasis) -> Result<StateVector> {
    if n >= basis.dim {
        return Err(Error::OutOfBasis { level: n, dim: basis.dim });
    }
    let mut v = DVector::zeros(basis.dim);
    v[n] = C64::new(1.0, 0.0);
    Ok(StateVector { amplitudes: v, basis })
}

/// Unnormalized-in-truncation coherent amplitudes `e^{−|α|²/2} α^n/√n!`,
/// built in log space.
pub(crate) fn coherent_amplitudes(alpha: C64, dim: usize) -> Vec<C64> {
    let r = alpha.norm();
    let phi = alpha.arg();
    (0..dim)
        .map(|n| {
            if r == 0.0 {
                return if n == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            }
            let ln_mag = -0.5 * r * r + n as f64 * r.ln() - 0.5 * ln_factorial(n as u64);
            if ln_mag < FLUSH_LN {
                return C64::new(0.0, 0.0);
            }
            C64::from_polar(ln_mag.exp(), n as f64 * phi)
        })
        .collect()
}

fn check_leakage(alpha: C64, basis: TruncatedBasis, tol: f64) -> Result<()> {
    let mean = alpha.norm_sqr();
    let leakage = poisson_tail(mean, basis.dim);
    if leakage > tol {
        return Err(Error::Truncation {
            leakage,
            tolerance: tol,
            required_dim: min_dim_for_poisson(mean, tol),
        });
    }
    Ok(())
}

/// Poisson tail mass of `|α⟩` outside the basis.
pub fn coherent_leakage(alpha: C64, basis: TruncatedBasis) -> f64 {
    poisson_tail(alpha.norm_sqr(), basis.dim)
}

pub fn coherent_state(alpha: C64, basis: TruncatedBasis) -> Result<StateVector> {
    coherent_state_with_tol(alpha, basis, DEFAULT_LEAKAGE_TOL)
}

pub fn coherent_state_with_tol(alpha: C64, basis: TruncatedBasis, tol: f64) -> Result<StateVector> {
    check_leakage(alpha, basis, tol)?;
    StateVector::from_amplitudes(coherent_amplitudes(alpha, basis.dim))
}

/// `⟨β|γ⟩` for untruncated coherent states.
pub fn coherent_overlap(beta: C64, gamma: C64) -> C64 {
    (-0.5 * beta.norm_sqr() - 0.5 * gamma.norm_sqr() + beta.conj() * gamma).exp()
}

/// `(|β⟩ + |γ⟩)/√N` with `N = 2(1 + Re⟨β|γ⟩)`.
pub fn coherent_superposition(beta: C64, gamma: C64, basis: TruncatedBasis) -> Result<StateVector> {
    check_leakage(beta, basis, DEFAULT_LEAKAGE_TOL)?;
    check_leakage(gamma, basis, DEFAULT_LEAKAGE_TOL)?;
    let norm_sq = 2.0 * (1.0 + coherent_overlap(beta, gamma).re);
    if norm_sq <= 0.0 {
        return Err(Error::InvalidState("branches cancel exactly".into()));
    }
    let inv = 1.0 / norm_sq.sqrt();
    let amps: Vec<C64> = coherent_amplitudes(beta, basis.dim)
        .into_iter()
        .zip(coherent_amplitudes(gamma, basis.dim))
        .map(|(a, b)| (a + b) * inv)
        .collect();
    StateVector::from_amplitudes(amps)
}

/// Cat state `(|α e^{iθ/2}⟩ + |α e^{−iθ/2}⟩)/√N`.
pub fn cat_state(alpha: C64, theta: f64, basis: TruncatedBasis) -> Result<StateVector> {
    let (plus, minus) = cat_branches(alpha, theta);
    coherent_superposition(plus, minus, basis)
}

pub fn cat_branches(alpha: C64, theta: f64) -> (C64, C64) {
    (alpha * C64::from_polar(1.0, 0.5 * theta), alpha * C64::from_polar(1.0, -0.5 * theta))
}

pub struct Operators {
    pub a: DMatrix<C64>,
    pub a_dagger: DMatrix<C64>,
    pub n: DMatrix<C64>,
    pub n2: DMatrix<C64>,
}

/// Ladder and number operators. The truncated `[a, a†]` equals the identity
/// except for `−(dim−1)` in the last diagonal entry.
pub fn operators(basis: TruncatedBasis) -> Operators {
    let d = basis.dim;
    let a = DMatrix::from_fn(d, d, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let a_dagger = a.adjoint();
    let n = DMatrix::from_fn(d, d, |i, j| if i == j { C64::new(i as f64, 0.0) } else { C64::new(0.0, 0.0) });
    let n2 = &n * &n;
    Operators { a, a_dagger, n, n2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_n: f64,
    pub mean_a: C64,
    pub mean_a2: C64,
}

/// `tr(ρN)`, `tr(ρa)`, `tr(ρa²)`.
pub fn moments(rho: &DensityMatrix) -> Moments {
    let e = &rho.elements;
    let d = rho.dim();
    let mut mean_n = 0.0;
    let mut mean_a = C64::new(0.0, 0.0);
    let mut mean_a2 = C64::new(0.0, 0.0);
    for i in 0..d {
        mean_n += i as f64 * e[(i, i)].re;
        if i >= 1 {
            mean_a += e[(i, i - 1)] * (i as f64).sqrt();
        }
        if i >= 2 {
            mean_a2 += e[(i, i - 2)] * ((i * (i - 1)) as f64).sqrt();
        }
    }
    Moments { mean_n, mean_a, mean_a2 }
}

/// `Δx_θ² = 1/2 + (⟨N⟩ − |⟨a⟩|²) + Re[(⟨a²⟩ − ⟨a⟩²) e^{−2iθ}]`, returned
/// without clamping.
pub fn quadrature_variance(rho: &DensityMatrix, quad: QuadratureSpec) -> f64 {
    variance_from_moments(&moments(rho), quad)
}

pub fn variance_from_moments(m: &Moments, quad: QuadratureSpec) -> f64 {
    let rot = C64::from_polar(1.0, -2.0 * quad.theta());
    0.5 + (m.mean_n - m.mean_a.norm_sqr()) + ((m.mean_a2 - m.mean_a * m.mean_a) * rot).re
}

/// `γ = tr ρ² = Σ |ρ_mn|²`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.elements.iter().map(|c| c.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn basis(d: usize) -> TruncatedBasis {
        TruncatedBasis::new(d).unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn fock_states_and_bounds() {
        let v = fock_state(0, basis(4)).unwrap();
        assert_eq!(v.amplitudes().as_slice(), &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)]);
        let v = fock_state(3, basis(4)).unwrap();
        assert_eq!(v.amplitudes()[3], c(1., 0.));
        assert!(matches!(fock_state(4, basis(4)), Err(Error::OutOfBasis { level: 4, dim: 4 })));
        assert!(TruncatedBasis::new(0).is_err());
    }

    #[test]
    fn coherent_vacuum_and_mean() {
        let v = coherent_state(c(0., 0.), basis(8)).unwrap();
        assert_eq!(v.amplitudes()[0], c(1., 0.));
        assert!(v.amplitudes().iter().skip(1).all(|a| a.norm() == 0.0));

        // Direct summation oracle: Σ n |α|^{2n} e^{-|α|²}/n!.
        let psi = coherent_state(c(1., 0.), basis(32)).unwrap();
        let mut oracle = 0.0;
        let mut term = (-1.0f64).exp();
        for n in 0..32 {
            if n > 0 {
                term /= n as f64;
            }
            oracle += n as f64 * term;
        }
        assert!((psi.mean_photons() - 1.0).abs() < 1e-9);
        assert!((psi.mean_photons() - oracle).abs() < 1e-12);
    }

    #[test]
    fn coherent_leakage_is_reported() {
        let alpha = c(40f64.sqrt(), 0.0);
        match coherent_state(alpha, basis(64)) {
            Err(Error::Truncation { required_dim, leakage, .. }) => {
                assert!(leakage > 1e-10);
                assert!(required_dim > 64);
                assert!(coherent_state(alpha, basis(required_dim)).is_ok());
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn cat_state_special_cases() {
        let b = basis(40);
        let merged = cat_state(c(1., 0.), 0.0, b).unwrap();
        let coh = coherent_state(c(1., 0.), b).unwrap();
        for (x, y) in merged.amplitudes().iter().zip(coh.amplitudes().iter()) {
            assert!((x - y).norm() < 1e-14);
        }

        // |2i⟩ + |−2i⟩ summed directly: odd components cancel.
        let cat = cat_state(c(2., 0.), PI, b).unwrap();
        let plus = coherent_amplitudes(c(0., 2.), 40);
        let minus = coherent_amplitudes(c(0., -2.), 40);
        let oracle = StateVector::from_amplitudes(plus.iter().zip(&minus).map(|(a, b)| a + b).collect()).unwrap();
        for n in 0..40 {
            assert!((cat.amplitudes()[n] - oracle.amplitudes()[n]).norm() < 1e-13);
            if n % 2 == 1 {
                assert!(cat.amplitudes()[n].norm() < 1e-15);
            }
        }

        let big = cat_state(c(40f64.sqrt(), 0.), 0.5 * PI, basis(120)).unwrap();
        assert!((big.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cat_normalization_uses_overlap() {
        // Before renormalization the exact factor already gives unit norm
        // up to leakage.
        let (p, m) = cat_branches(c(1.5, 0.3), 1.1);
        let n = 2.0 * (1.0 + coherent_overlap(p, m).re);
        let raw: Vec<C64> = coherent_amplitudes(p, 60)
            .iter()
            .zip(coherent_amplitudes(m, 60))
            .map(|(a, b)| (a + b) / n.sqrt())
            .collect();
        let norm: f64 = raw.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn operator_matrices() {
        let ops = operators(basis(2));
        assert_eq!(ops.a[(0, 1)], c(1., 0.));
        assert_eq!(ops.a[(1, 0)], c(0., 0.));
        let ops = operators(basis(3));
        for i in 0..3 {
            assert_eq!(ops.n[(i, i)], c(i as f64, 0.));
        }
        let comm = &ops.a * &ops.a_dagger - &ops.a_dagger * &ops.a;
        let expected = [1.0, 1.0, -2.0];
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { expected[i] } else { 0.0 };
                assert!((comm[(i, j)] - c(e, 0.)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn moments_of_reference_states() {
        let vac = fock_state(0, basis(5)).unwrap().to_density();
        let m = moments(&vac);
        assert_eq!((m.mean_n, m.mean_a, m.mean_a2), (0.0, c(0., 0.), c(0., 0.)));

        let alpha = C64::from_polar(20f64.sqrt(), 0.7);
        let b = TruncatedBasis::for_mean_photons(20.0, 1e-14);
        let rho = coherent_state(alpha, b).unwrap().to_density();
        let m = moments(&rho);
        assert!((m.mean_n - 20.0).abs() < 1e-9);
        // The gauge makes c_0 real so ⟨a⟩ keeps the phase of α.
        assert!((m.mean_a - alpha).norm() < 1e-9);
        assert!((m.mean_a2 - alpha * alpha).norm() < 1e-9);

        let f5 = fock_state(5, basis(8)).unwrap().to_density();
        let m = moments(&f5);
        assert_eq!(m.mean_n, 5.0);
        assert_eq!(m.mean_a, c(0., 0.));
    }

    #[test]
    fn moments_match_operator_traces() {
        let psi = cat_state(c(1.2, -0.4), 1.3, basis(30)).unwrap();
        let rho = psi.to_density();
        let ops = operators(rho.basis());
        let m = moments(&rho);
        assert!(((rho.elements() * &ops.n).trace().re - m.mean_n).abs() < 1e-12);
        assert!(((rho.elements() * &ops.a).trace() - m.mean_a).norm() < 1e-12);
        assert!(((rho.elements() * &ops.a * &ops.a).trace() - m.mean_a2).norm() < 1e-12);
    }

    #[test]
    fn quadrature_variances() {
        let vac = fock_state(0, basis(4)).unwrap().to_density();
        for k in 0..8 {
            assert_eq!(quadrature_variance(&vac, QuadratureSpec::new(k as f64 * 0.4)), 0.5);
        }
        let coh = coherent_state(C64::from_polar(3.0, 0.3), basis(60)).unwrap().to_density();
        for k in 0..8 {
            let v = quadrature_variance(&coh, QuadratureSpec::new(k as f64 * 0.4));
            assert!((v - 0.5).abs() < 1e-9);
        }
        let f3 = fock_state(3, basis(6)).unwrap().to_density();
        let ops = operators(f3.basis());
        for k in 0..8 {
            let theta = k as f64 * 0.4;
            let v = quadrature_variance(&f3, QuadratureSpec::new(theta));
            assert!((v - 3.5).abs() < 1e-12);
            // Direct matrix route on a basis large enough that truncation is
            // invisible for |3⟩.
            let x = (&ops.a * C64::from_polar(1.0, -theta) + &ops.a_dagger * C64::from_polar(1.0, theta))
                / C64::new(2f64.sqrt(), 0.0);
            let x2 = (f3.elements() * &x * &x).trace().re;
            let x1 = (f3.elements() * &x).trace().re;
            assert!((x2 - x1 * x1 - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_angle_is_reduced() {
        assert!((QuadratureSpec::new(-0.5).theta() - (TAU - 0.5)).abs() < 1e-15);
        assert!((QuadratureSpec::new(7.0).theta() - (7.0 - TAU)).abs() < 1e-15);
    }

    #[test]
    fn purity_examples() {
        let pure = cat_state(c(1.0, 0.5), 2.0, basis(30)).unwrap().to_density();
        assert!((purity(&pure) - 1.0).abs() < 1e-12);
        let mixed = DensityMatrix::from_populations(&[0.5, 0.5]).unwrap();
        assert_eq!(purity(&mixed), 0.5);
    }

    #[test]
    fn invalid_density_rejected() {
        let mut m = DMatrix::from_element(2, 2, c(0., 0.));
        m[(0, 0)] = c(1.5, 0.);
        m[(1, 1)] = c(-0.5, 0.);
        assert!(DensityMatrix::from_matrix(m).is_err());
        let mut m = DMatrix::from_element(2, 2, c(0., 0.));
        m[(0, 0)] = c(0.5, 0.);
        m[(1, 1)] = c(0.5, 0.);
        m[(0, 1)] = c(0.1, 0.);
        assert!(DensityMatrix::from_matrix(m).is_err());
    }

    #[test]
    fn gauge_fixes_first_amplitude() {
        let psi = StateVector::from_amplitudes(vec![c(0., 0.), c(0., -2.), c(1., 1.)]).unwrap();
        let a = psi.amplitudes();
        assert_eq!(a[0], c(0., 0.));
        assert!(a[1].im.abs() < 1e-15 && a[1].re > 0.0);
    }

    fn arb_state(dim: usize) -> impl Strategy<Value = StateVector> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim)
            .prop_filter("nonzero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
            .prop_map(|v| StateVector::from_amplitudes(v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap())
    }

    fn arb_mixed(dim: usize) -> impl Strategy<Value = DensityMatrix> {
        (prop::collection::vec(arb_state(dim), 1..4), prop::collection::vec(0.05f64..1.0, 4)).prop_map(
            |(states, weights)| {
                let total: f64 = weights.iter().take(states.len()).sum();
                let mut m = DMatrix::zeros(states[0].dim(), states[0].dim());
                for (s, w) in states.iter().zip(&weights) {
                    m += s.to_density().elements() * C64::new(w / total, 0.0);
                }
                DensityMatrix::from_matrix_unchecked(m)
            },
        )
    }

    proptest! {
        #[test]
        fn constructors_produce_valid_states(re in -2.0f64..2.0, im in -2.0f64..2.0, theta in 0.0f64..TAU) {
            let b = basis(60);
            let coh = coherent_state(C64::new(re, im), b).unwrap();
            prop_assert!(coh.is_normalized());
            coh.to_density().validate().unwrap();
            let cat = cat_state(C64::new(re, im), theta, b);
            if let Ok(cat) = cat {
                prop_assert!(cat.is_normalized());
                cat.to_density().validate().unwrap();
            }
        }

        #[test]
        fn coherent_moment_identities(re in -3.0f64..3.0, im in -3.0f64..3.0) {
            let rho = coherent_state(C64::new(re, im), basis(80)).unwrap().to_density();
            let m = moments(&rho);
            prop_assert!((m.mean_a2 - m.mean_a * m.mean_a).norm() < 1e-9);
            prop_assert!((m.mean_n - m.mean_a.norm_sqr()).abs() < 1e-9);
        }

        #[test]
        fn heisenberg_sum(rho in arb_mixed(10), theta in 0.0f64..TAU) {
            rho.validate().unwrap();
            let q = QuadratureSpec::new(theta);
            let sum = quadrature_variance(&rho, q) + quadrature_variance(&rho, q.orthogonal());
            prop_assert!(sum >= 1.0 - 1e-9);
        }

        #[test]
        fn purity_two_routes(rho in arb_mixed(8)) {
            let via_product = (rho.elements() * rho.elements()).trace().re;
            prop_assert!((via_product - purity(&rho)).abs() < 1e-12);
            prop_assert!(purity(&rho) <= 1.0 + 1e-10 && purity(&rho) > 0.0);
        }
    }
}
