//! Closed-form evolution under `dρ/dt = −iω_c[N, ρ] + D[√κ_a a]ρ + D[√κ_n N]ρ`,
//! plus a dense Liouvillian used as an independent oracle.
//!
//! Times are plain non-negative reals measured in the inverse unit of the
//! rates in [`ModelParams`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    cat_branches, coherent_amplitudes, coherent_leakage, coherent_overlap, DensityMatrix, Moments,
    ModelParams, TruncatedBasis, C64, DEFAULT_LEAKAGE_TOL,
};
use crate::special::{ln_binomial, min_dim_for_poisson};

/// Default guard on the Fock dimension for dense superoperators.
pub const DEFAULT_MAX_LIOUVILLIAN_DIM: usize = 64;

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be finite and non-negative, got {t}")));
    }
    Ok(())
}

/// `ln C(i, k)` for `i < dim`.
struct LnBinomials {
    dim: usize,
    table: Vec<f64>,
}

impl LnBinomials {
    fn new(dim: usize) -> Self {
        let mut table = vec![f64::NEG_INFINITY; dim * dim];
        for i in 0..dim {
            for k in 0..=i {
                table[i * dim + k] = ln_binomial(i as u64, k as u64);
            }
        }
        Self { dim, table }
    }

    fn get(&self, i: usize, k: usize) -> f64 {
        self.table[i * self.dim + k]
    }
}

/// Exact propagator:
///
/// `ρ_mn(t) = e^{−iω(m−n)t} e^{−κ_a(m+n)t/2} e^{−κ_n(m−n)²t/2}
///   Σ_N √(C(m+N,N) C(n+N,N)) (1 − e^{−κ_a t})^N ρ_{m+N,n+N}(0)`,
///
/// with the sum running to the edge of the basis.
pub fn propagate_exact(rho0: &DensityMatrix, params: &ModelParams, t: f64) -> Result<DensityMatrix> {
    check_time(t)?;
    params.validate()?;
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let d = rho0.dim();
    let src = rho0.elements();
    let lb = LnBinomials::new(d);
    let p = -(-params.kappa_a * t).exp_m1();
    let ln_p = p.ln();
    let mut out = DMatrix::from_element(d, d, C64::new(0.0, 0.0));
    for n in 0..d {
        for m in 0..d {
            let l = m as f64 - n as f64;
            let phase = C64::from_polar(1.0, -params.omega_c * l * t);
            let dephasing = -0.5 * params.kappa_n * l * l * t;
            let damping = -0.5 * params.kappa_a * (m + n) as f64 * t;
            let mut acc = C64::new(0.0, 0.0);
            let n_max = d - 1 - m.max(n);
            for k in 0..=n_max {
                if k > 0 && p == 0.0 {
                    break;
                }
                let src_el = src[(m + k, n + k)];
                if src_el.re == 0.0 && src_el.im == 0.0 {
                    continue;
                }
                let ln_w = if k == 0 {
                    damping
                } else {
                    0.5 * (lb.get(m + k, k) + lb.get(n + k, k)) + k as f64 * ln_p + damping
                };
                acc += src_el * ln_w.exp();
            }
            out[(m, n)] = acc * phase * dephasing.exp();
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

/// Populations of `|m⟩` after time `t`, indexed by Fock level. Independent of
/// `κ_n`; level `m − k` has weight `C(m,k) p^k (1−p)^{m−k}` with
/// `p = 1 − e^{−κ_a t}`.
pub fn evolve_fock_populations(m: usize, kappa_a: f64, t: f64) -> Result<Vec<f64>> {
    check_time(t)?;
    if !(kappa_a >= 0.0) {
        return Err(Error::Domain("kappa_a must be non-negative".into()));
    }
    let lost = -(-kappa_a * t).exp_m1();
    let kept_ln = -kappa_a * t;
    let mut pops = vec![0.0; m + 1];
    for k in 0..=m {
        let level = m - k;
        let w = if k == 0 {
            (kept_ln * m as f64).exp()
        } else if lost == 0.0 {
            0.0
        } else {
            (ln_binomial(m as u64, k as u64) + k as f64 * lost.ln() + kept_ln * level as f64).exp()
        };
        pops[level] = w;
    }
    Ok(pops)
}

/// Loss-channel decoherence factor `d_a(t) = exp(−|α|²(1 − e^{−κ_a t})(1 − e^{iθ}))`.
pub fn cat_decoherence_factor(alpha_sq: f64, theta: f64, kappa_a: f64, t: f64) -> C64 {
    let p = -(-kappa_a * t).exp_m1();
    (-(alpha_sq * p) * (C64::new(1.0, 0.0) - C64::from_polar(1.0, theta))).exp()
}

/// Four-term closed form for an evolving cat state `(|α₊⟩ + |α₋⟩)/√N`.
pub fn evolve_cat_closed_form(
    alpha: C64,
    theta_cat: f64,
    params: &ModelParams,
    t: f64,
    basis: TruncatedBasis,
) -> Result<DensityMatrix> {
    check_time(t)?;
    params.validate()?;
    let (plus, minus) = cat_branches(alpha, theta_cat);
    for branch in [plus, minus] {
        let leakage = coherent_leakage(branch, basis);
        if leakage > DEFAULT_LEAKAGE_TOL {
            return Err(Error::Truncation {
                leakage,
                tolerance: DEFAULT_LEAKAGE_TOL,
                required_dim: min_dim_for_poisson(branch.norm_sqr(), DEFAULT_LEAKAGE_TOL),
            });
        }
    }
    let norm_sq = 2.0 * (1.0 + coherent_overlap(plus, minus).re);
    let drift = C64::from_polar((-0.5 * params.kappa_a * t).exp(), -params.omega_c * t);
    let plus_t = coherent_amplitudes(plus * drift, basis.dim());
    let minus_t = coherent_amplitudes(minus * drift, basis.dim());
    let d_a = cat_decoherence_factor(alpha.norm_sqr(), theta_cat, params.kappa_a, t);
    let d = basis.dim();
    let out = DMatrix::from_fn(d, d, |m, n| {
        let l = m as f64 - n as f64;
        let dephasing = (-0.5 * params.kappa_n * l * l * t).exp();
        let direct = plus_t[m] * plus_t[n].conj() + minus_t[m] * minus_t[n].conj();
        let cross = d_a * plus_t[m] * minus_t[n].conj() + d_a.conj() * minus_t[m] * plus_t[n].conj();
        (direct + cross) * (dephasing / norm_sq)
    });
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

/// `⟨N⟩` decays at `κ_a`, `⟨a⟩` at `(κ_a+κ_n)/2`, `⟨a²⟩` at `κ_a+2κ_n`, with
/// phases `e^{−iω_c t}` and `e^{−2iω_c t}`.
pub fn moments_closed_form(initial: &Moments, params: &ModelParams, t: f64) -> Result<Moments> {
    check_time(t)?;
    let w = params.omega_c;
    Ok(Moments {
        mean_n: initial.mean_n * (-params.kappa_a * t).exp(),
        mean_a: initial.mean_a * C64::from_polar((-0.5 * (params.kappa_a + params.kappa_n) * t).exp(), -w * t),
        mean_a2: initial.mean_a2
            * C64::from_polar((-(params.kappa_a + 2.0 * params.kappa_n) * t).exp(), -2.0 * w * t),
    })
}

/// `Δx_θ²(t)` for an initial coherent state `√n0 e^{iφ}`.
pub fn quadrature_variance_coherent(n0: f64, phi: f64, quad_theta: f64, params: &ModelParams, t: f64) -> Result<f64> {
    check_time(t)?;
    if !(n0 >= 0.0) {
        return Err(Error::Domain("n0 must be non-negative".into()));
    }
    let loss = (-params.kappa_a * t).exp();
    let deph = (-params.kappa_n * t).exp();
    let angle = 2.0 * (phi - quad_theta - params.omega_c * t);
    Ok(0.5 + n0 * loss * (1.0 - deph) * (1.0 - deph * angle.cos()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timescales {
    /// Cat decoherence under loss.
    pub tau_a: f64,
    /// Relaxation to the vacuum.
    pub tau_r: f64,
    /// Angular spreading.
    pub tau_s: f64,
    /// Crown formation.
    pub tau_c: f64,
}

fn inv_or_inf(rate: f64) -> f64 {
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

pub fn timescales(params: &ModelParams, mean_n: f64, theta_cat: f64) -> Result<Timescales> {
    if !(mean_n > 0.0) {
        return Err(Error::Domain("mean photon number must be positive".into()));
    }
    let s = (0.5 * theta_cat).sin();
    Ok(Timescales {
        tau_a: inv_or_inf(2.0 * mean_n * params.kappa_a * s * s),
        tau_r: inv_or_inf(params.kappa_a),
        tau_s: inv_or_inf(0.5 * params.kappa_n * mean_n),
        tau_c: inv_or_inf(params.kappa_n),
    })
}

/// Dense Lindblad generator acting on column-stacked density matrices,
/// `vec(ρ)[m + n·dim] = ρ_mn`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    matrix: DMatrix<C64>,
    params: ModelParams,
    basis: TruncatedBasis,
}

/// Which terms of the generator to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Full,
    /// `−iω_c[N,·] + D_a`.
    HamiltonianAndLoss,
    /// `D_a` alone.
    Loss,
    /// `D_n` alone.
    Dephasing,
}

fn ensure_dim(basis: TruncatedBasis, max_dim: usize) -> Result<()> {
    if basis.dim() > max_dim {
        return Err(Error::Oversize { dim: basis.dim(), max: max_dim });
    }
    Ok(())
}

fn dissipator(op: &DMatrix<C64>) -> DMatrix<C64> {
    let d = op.nrows();
    let id = DMatrix::<C64>::identity(d, d);
    let op_dag_op = op.adjoint() * op;
    let half = C64::new(0.5, 0.0);
    // vec(AρB) = (Bᵀ ⊗ A) vec(ρ)
    op.conjugate().kronecker(op) - (id.kronecker(&op_dag_op) + op_dag_op.transpose().kronecker(&id)) * half
}

impl Liouvillian {
    pub fn new(params: &ModelParams, basis: TruncatedBasis) -> Result<Self> {
        Self::build(params, basis, Generator::Full, DEFAULT_MAX_LIOUVILLIAN_DIM)
    }

    pub fn build(params: &ModelParams, basis: TruncatedBasis, which: Generator, max_dim: usize) -> Result<Self> {
        params.validate()?;
        ensure_dim(basis, max_dim)?;
        let d = basis.dim();
        let ops = crate::hilbert::operators(basis);
        let id = DMatrix::<C64>::identity(d, d);
        let mut l = DMatrix::<C64>::zeros(d * d, d * d);
        let with_h = matches!(which, Generator::Full | Generator::HamiltonianAndLoss);
        let with_a = matches!(which, Generator::Full | Generator::HamiltonianAndLoss | Generator::Loss);
        let with_n = matches!(which, Generator::Full | Generator::Dephasing);
        if with_h {
            let h = &ops.n * C64::new(params.omega_c, 0.0);
            l += (id.kronecker(&h) - h.transpose().kronecker(&id)) * C64::new(0.0, -1.0);
        }
        if with_a {
            l += dissipator(&ops.a) * C64::new(params.kappa_a, 0.0);
        }
        if with_n {
            l += dissipator(&ops.n) * C64::new(params.kappa_n, 0.0);
        }
        Ok(Self { matrix: l, params: *params, basis })
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn basis(&self) -> TruncatedBasis {
        self.basis
    }

    /// Largest modulus of `vec(I)ᵀ L`; zero for a trace-preserving generator.
    pub fn trace_defect(&self) -> f64 {
        let d = self.basis.dim();
        let mut worst: f64 = 0.0;
        for col in 0..d * d {
            let mut s = C64::new(0.0, 0.0);
            for m in 0..d {
                s += self.matrix[(m + m * d, col)];
            }
            worst = worst.max(s.norm());
        }
        worst
    }

    /// `exp(L t)` as a dense matrix.
    pub fn propagator(&self, t: f64) -> Result<DMatrix<C64>> {
        check_time(t)?;
        if t == 0.0 {
            let n = self.matrix.nrows();
            return Ok(DMatrix::identity(n, n));
        }
        Ok((&self.matrix * C64::new(t, 0.0)).exp())
    }
}

/// Applies a superoperator matrix to a density matrix.
pub fn apply_superoperator(super_op: &DMatrix<C64>, rho: &DensityMatrix) -> DensityMatrix {
    let d = rho.dim();
    let v = nalgebra::DVector::from_column_slice(rho.elements().as_slice());
    let out = super_op * v;
    DensityMatrix::from_matrix_unchecked(DMatrix::from_column_slice(d, d, out.as_slice()))
}

/// Matrix-exponential oracle for [`propagate_exact`].
pub fn propagate_liouvillian(rho0: &DensityMatrix, liouvillian: &Liouvillian, t: f64) -> Result<DensityMatrix> {
    rho0.basis().ensure_same(&liouvillian.basis)?;
    let prop = liouvillian.propagator(t)?;
    Ok(apply_superoperator(&prop, rho0))
}

fn spectral_norm(m: DMatrix<C64>) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// `‖E_{H,L_a}(t) E_{L_n}(t) − E_{L_n}(t) E_{H,L_a}(t)‖₂`.
pub fn channel_commutation_defect(params: &ModelParams, basis: TruncatedBasis, t: f64) -> Result<f64> {
    check_time(t)?;
    let ha = Liouvillian::build(params, basis, Generator::HamiltonianAndLoss, DEFAULT_MAX_LIOUVILLIAN_DIM)?;
    let n = Liouvillian::build(params, basis, Generator::Dephasing, DEFAULT_MAX_LIOUVILLIAN_DIM)?;
    let e1 = ha.propagator(t)?;
    let e2 = n.propagator(t)?;
    Ok(spectral_norm(&e1 * &e2 - &e2 * &e1))
}

/// `‖[D_a, D_n]‖₂` for the two dissipator superoperators. Both preserve
/// `m − n` and `D_n` is diagonal in it, so this vanishes.
pub fn dissipator_commutator_norm(params: &ModelParams, basis: TruncatedBasis) -> Result<f64> {
    let a = Liouvillian::build(params, basis, Generator::Loss, DEFAULT_MAX_LIOUVILLIAN_DIM)?;
    let n = Liouvillian::build(params, basis, Generator::Dephasing, DEFAULT_MAX_LIOUVILLIAN_DIM)?;
    Ok(spectral_norm(a.matrix() * n.matrix() - n.matrix() * a.matrix()))
}

/// `‖[L_a, L_n]‖₂ = √(κ_a κ_n) ‖[a, N]‖₂`: the jump operators themselves do
/// not commute.
pub fn jump_operator_commutator_norm(params: &ModelParams, basis: TruncatedBasis) -> f64 {
    let ops = crate::hilbert::operators(basis);
    let comm = &ops.a * &ops.n - &ops.n * &ops.a;
    (params.kappa_a * params.kappa_n).sqrt() * spectral_norm(comm)
}
