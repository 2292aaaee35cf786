//! Wigner and normal-ordered characteristic functions of a truncated mode.
//!
//! Convention: `x̂ = (a + a†)/√2`, `p̂ = (a − a†)/(i√2)`, `∫W dx dp = 1`, so
//! the vacuum is `e^{−x²−p²}/π` and a coherent state `|α⟩` is centred at
//! `(√2 Re α, √2 Im α)`. In polar coordinates `x + ip = r e^{iθ}` the Wigner
//! function splits into angular harmonics
//!
//! `W(r, θ) = Σ_l W_l(r) e^{ilθ}`,  `W_l(r) = Σ_k ρ_{k,k+l} f_{k,l}(r)` (l ≥ 0),
//!
//! with `W_{−l} = conj(W_l)` and the real radial kernels
//!
//! `f_{k,l}(r) = (−1)^k/π · √(k!/(k+l)!) · (√2 r)^l · L_k^{(l)}(2r²) · e^{−r²}`.
//!
//! The kernels are checked once per process against direct quadrature of
//! `W(x,p) = (1/2π) ∫ ⟨x+u/2|ρ|x−u/2⟩ e^{−iup} du`.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hilbert::{DensityMatrix, ModelParams, C64};
use crate::special::{hermite_functions, ln_factorial};

/// Tag stored on every grid.
pub const CONVENTION: &str = "x=(a+a^dag)/sqrt2,p=(a-a^dag)/(i*sqrt2),int W dx dp=1";

/// Free evolution under `ω_c N` maps `W(r, θ, 0)` to
/// `W(r, θ, t) = W(r, θ − ROTATION_SIGN·ω_c t, 0)`: phase space turns
/// clockwise.
pub const ROTATION_SIGN: f64 = -1.0;

pub const DEFAULT_GRID_POINTS: usize = 257;

/// Crossover between the image sum and the Fourier series of the angular
/// kernel.
pub const KERNEL_CROSSOVER: f64 = 1.0;

const KERNEL_CHECK_DIM: usize = 5;
const KERNEL_CHECK_TOL: f64 = 1e-6;
const RESCALE_ABOVE: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min < max) || points < 2 || !min.is_finite() || !max.is_finite() {
            return Err(Error::Domain(format!("bad axis [{min}, {max}] with {points} points")));
        }
        Ok(Self { min, max, points })
    }

    pub fn symmetric(extent: f64, points: usize) -> Result<Self> {
        Self::new(-extent, extent, points)
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + self.step() * i as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.value(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: Axis,
    pub p: Axis,
}

impl GridSpec {
    pub fn square(extent: f64, points: usize) -> Result<Self> {
        let axis = Axis::symmetric(extent, points)?;
        Ok(Self { x: axis, p: axis })
    }

    /// Extent `1.2·(√(2⟨N⟩) + 4)` on both axes.
    pub fn auto(mean_n: f64) -> Self {
        let extent = 1.2 * ((2.0 * mean_n.max(0.0)).sqrt() + 4.0);
        Self::square(extent, DEFAULT_GRID_POINTS).expect("positive extent")
    }

    pub fn for_state(rho: &DensityMatrix) -> Self {
        Self::auto(crate::hilbert::moments(rho).mean_n)
    }
}

/// Row-major raster: row `i` is `x_i`, column `j` is `p_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub x_axis: Axis,
    pub p_axis: Axis,
    pub values: Vec<f64>,
    pub convention: String,
}

impl WignerGrid {
    pub fn new(x_axis: Axis, p_axis: Axis, values: Vec<f64>) -> Result<Self> {
        if values.len() != x_axis.points * p_axis.points {
            return Err(Error::DimMismatch { left: values.len(), right: x_axis.points * p_axis.points });
        }
        Ok(Self { x_axis, p_axis, values, convention: CONVENTION.to_string() })
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p_axis.points + j]
    }

    /// Trapezoidal `∫W dx dp`.
    pub fn integral(&self) -> f64 {
        let wx = trapezoid_weights(&self.x_axis);
        let wp = trapezoid_weights(&self.p_axis);
        let mut total = 0.0;
        for (i, a) in wx.iter().enumerate() {
            for (j, b) in wp.iter().enumerate() {
                total += a * b * self.value(i, j);
            }
        }
        total
    }

    /// `∫W(x_i, p) dp` for every row.
    pub fn marginal_x(&self) -> Vec<f64> {
        let wp = trapezoid_weights(&self.p_axis);
        (0..self.x_axis.points)
            .map(|i| wp.iter().enumerate().map(|(j, b)| b * self.value(i, j)).sum())
            .collect()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn trapezoid_weights(axis: &Axis) -> Vec<f64> {
    let h = axis.step();
    let mut w = vec![h; axis.points];
    w[0] *= 0.5;
    w[axis.points - 1] *= 0.5;
    w
}

/// Calls `visit(k, s_k)` for `k = 0..count`, where
/// `s_k = σ^k e^{ln_seed} √(l! k!/(k+l)!) L_k^{(l)}(x)` and `σ = −1` when
/// `alternate`. The running value
/// is kept in mantissa/log-scale form so neither the seed nor the Laguerre
/// growth over- or underflows in isolation.
fn normalized_laguerre(l: usize, x: f64, ln_seed: f64, alternate: bool, count: usize, mut visit: impl FnMut(usize, f64)) {
    if count == 0 {
        return;
    }
    let lf = l as f64;
    let sign = if alternate { -1.0 } else { 1.0 };
    let mut scale = ln_seed;
    let mut prev = 0.0;
    let mut cur = 1.0;
    visit(0, scale.exp());
    for k in 0..count - 1 {
        let kf = k as f64;
        let mut next =
            sign * ((2.0 * kf + 1.0 + lf - x) * cur - sign * (kf * (kf + lf)).sqrt() * prev) / ((kf + 1.0) * (kf + 1.0 + lf)).sqrt();
        if next.abs() > RESCALE_ABOVE {
            let f = next.abs();
            next /= f;
            cur /= f;
            scale += f.ln();
        }
        prev = cur;
        cur = next;
        visit(k + 1, cur * scale.exp());
    }
}

/// `f_{k,l}(r)` for `k = 0..count`.
fn for_each_wigner_kernel(l: usize, r: f64, count: usize, visit: impl FnMut(usize, f64)) {
    if l > 0 && r == 0.0 {
        let mut visit = visit;
        (0..count).for_each(|k| visit(k, 0.0));
        return;
    }
    let ln_power = if l > 0 { l as f64 * (SQRT_2 * r).ln() } else { 0.0 };
    let ln_seed = ln_power - 0.5 * ln_factorial(l as u64) - r * r - PI.ln();
    normalized_laguerre(l, 2.0 * r * r, ln_seed, true, count, visit);
}

/// `r^l √(k!/(k+l)!) L_k^{(l)}(r²)` for `k = 0..count`: the radial factor of
/// the displacement-type matrix elements in the characteristic function.
fn for_each_characteristic_kernel(l: usize, r: f64, count: usize, visit: impl FnMut(usize, f64)) {
    if l > 0 && r == 0.0 {
        let mut visit = visit;
        (0..count).for_each(|k| visit(k, 0.0));
        return;
    }
    let ln_seed = if l > 0 { l as f64 * r.ln() } else { 0.0 } - 0.5 * ln_factorial(l as u64);
    normalized_laguerre(l, r * r, ln_seed, false, count, visit);
}

/// Wigner kernel of the operator `|m⟩⟨n|` at `(x, p)`.
pub fn wigner_kernel(m: usize, n: usize, x: f64, p: f64) -> C64 {
    let r = x.hypot(p);
    let theta = p.atan2(x);
    let (k, l) = if m >= n { (n, m - n) } else { (m, n - m) };
    let mut f = 0.0;
    for_each_wigner_kernel(l, r, k + 1, |i, v| {
        if i == k {
            f = v;
        }
    });
    // |k+l⟩⟨k| carries e^{−ilθ}; its adjoint carries e^{+ilθ}.
    let angle = if m >= n { -(l as f64) * theta } else { l as f64 * theta };
    C64::from_polar(f, angle)
}

/// `(1/2π) ∫ ψ_m(x+u/2) ψ_n(x−u/2) e^{−iup} du` by the trapezoid rule on
/// `|u| ≤ half_width`.
pub fn wigner_kernel_by_quadrature(m: usize, n: usize, x: f64, p: f64, half_width: f64, step: f64) -> C64 {
    let count = m.max(n) + 1;
    let steps = (2.0 * half_width / step).ceil() as usize;
    let h = 2.0 * half_width / steps as f64;
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..=steps {
        let u = -half_width + h * i as f64;
        let plus = hermite_functions(count, x + 0.5 * u);
        let minus = hermite_functions(count, x - 0.5 * u);
        let w = if i == 0 || i == steps { 0.5 * h } else { h };
        acc += C64::from_polar(w * plus[m] * minus[n], -u * p);
    }
    acc / TAU
}

/// Largest deviation between the closed-form kernels and quadrature for all
/// `m, n < dim` on a coarse grid. `perturbation` is added to every closed-form
/// value; it exists so that the check itself can be shown to fail.
pub fn kernel_validation_error(dim: usize, perturbation: f64) -> f64 {
    let points = [(0.0, 0.0), (0.4, -0.3), (-1.1, 0.7), (1.5, 1.2), (-0.2, -2.0), (2.5, -0.5)];
    let mut worst: f64 = 0.0;
    for m in 0..dim {
        for n in 0..dim {
            for &(x, p) in &points {
                let closed = wigner_kernel(m, n, x, p) + perturbation;
                let direct = wigner_kernel_by_quadrature(m, n, x, p, 24.0, 0.01);
                worst = worst.max((closed - direct).norm());
            }
        }
    }
    worst
}

fn ensure_kernels_validated() {
    static CHECK: OnceLock<f64> = OnceLock::new();
    let err = *CHECK.get_or_init(|| kernel_validation_error(KERNEL_CHECK_DIM, 0.0));
    assert!(err < KERNEL_CHECK_TOL, "Wigner kernels disagree with quadrature by {err:e}");
}

/// Radial harmonic sums `S_l(r) = Σ_k ρ_{k,k+l} f_{k,l}(r)` and their
/// mirror `Σ_k ρ_{k+l,k} f_{k,l}(r)` for `l = 0..=l_max`.
fn wigner_harmonics_at(rho: &DensityMatrix, r: f64, l_max: usize, upper: &mut [C64], lower: &mut [C64]) {
    let d = rho.dim();
    let el = rho.elements();
    for l in 0..=l_max {
        let mut up = C64::new(0.0, 0.0);
        let mut lo = C64::new(0.0, 0.0);
        for_each_wigner_kernel(l, r, d - l, |k, f| {
            up += el[(k, k + l)] * f;
            lo += el[(k + l, k)] * f;
        });
        upper[l] = up;
        lower[l] = lo;
    }
}

fn wigner_point(rho: &DensityMatrix, x: f64, p: f64, upper: &mut [C64], lower: &mut [C64]) -> f64 {
    let l_max = rho.dim() - 1;
    let r = x.hypot(p);
    wigner_harmonics_at(rho, r, l_max, upper, lower);
    let step = if r > 0.0 { C64::new(x / r, p / r) } else { C64::new(1.0, 0.0) };
    let mut phase = C64::new(1.0, 0.0);
    let mut w = upper[0];
    for l in 1..=l_max {
        phase *= step;
        w += upper[l] * phase + lower[l] * phase.conj();
    }
    debug_assert!(w.im.abs() < 1e-10, "Wigner value has imaginary residue {}", w.im);
    w.re
}

/// Wigner function at a single phase-space point.
pub fn wigner_at(rho: &DensityMatrix, x: f64, p: f64) -> f64 {
    let d = rho.dim();
    let mut upper = vec![C64::new(0.0, 0.0); d];
    let mut lower = vec![C64::new(0.0, 0.0); d];
    wigner_point(rho, x, p, &mut upper, &mut lower)
}

/// Wigner raster on `spec`, rows evaluated according to `exec`.
pub fn wigner_with(rho: &DensityMatrix, spec: &GridSpec, exec: Execution) -> Result<WignerGrid> {
    ensure_kernels_validated();
    let d = rho.dim();
    let rows = exec.map_indexed(spec.x.points, |i| {
        let x = spec.x.value(i);
        let mut upper = vec![C64::new(0.0, 0.0); d];
        let mut lower = vec![C64::new(0.0, 0.0); d];
        (0..spec.p.points)
            .map(|j| wigner_point(rho, x, spec.p.value(j), &mut upper, &mut lower))
            .collect::<Vec<_>>()
    });
    WignerGrid::new(spec.x, spec.p, rows.concat())
}

pub fn wigner(rho: &DensityMatrix, spec: &GridSpec) -> Result<WignerGrid> {
    wigner_with(rho, spec, Execution::default())
}

/// `⟨x|ρ|x⟩`.
pub fn position_density(rho: &DensityMatrix, x: f64) -> f64 {
    let psi = hermite_functions(rho.dim(), x);
    let el = rho.elements();
    let mut acc = C64::new(0.0, 0.0);
    for m in 0..rho.dim() {
        for n in 0..rho.dim() {
            acc += el[(m, n)] * psi[m] * psi[n];
        }
    }
    acc.re
}

/// `W_l(r)` for `l ∈ [−l_max, l_max]` on a radial grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicDecomposition {
    pub radial_grid: Vec<f64>,
    pub l_max: usize,
    /// `components[l + l_max][i] = W_l(r_i)`.
    pub components: Vec<Vec<C64>>,
}

impl HarmonicDecomposition {
    pub fn component(&self, l: i64) -> &[C64] {
        assert!(l.unsigned_abs() as usize <= self.l_max, "harmonic {l} beyond l_max {}", self.l_max);
        &self.components[(l + self.l_max as i64) as usize]
    }

    /// `Σ_l W_l(r_i) e^{ilθ}`.
    pub fn evaluate(&self, i: usize, theta: f64) -> f64 {
        let lm = self.l_max as i64;
        (-lm..=lm)
            .map(|l| self.component(l)[i] * C64::from_polar(1.0, l as f64 * theta))
            .sum::<C64>()
            .re
    }

    /// Largest `|W_{−l} − conj(W_l)|`.
    pub fn conjugation_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for l in 1..=self.l_max as i64 {
            for (a, b) in self.component(l).iter().zip(self.component(-l)) {
                worst = worst.max((a.conj() - b).norm());
            }
        }
        worst
    }

    /// `max_r |W_l(r)|`.
    pub fn sup_norm(&self, l: i64) -> f64 {
        self.component(l).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `Σ_{l≠0} ‖W_l‖_∞ / ‖W_0‖_∞`.
    pub fn anisotropy(&self) -> f64 {
        let lm = self.l_max as i64;
        let off: f64 = (-lm..=lm).filter(|&l| l != 0).map(|l| self.sup_norm(l)).sum();
        off / self.sup_norm(0)
    }
}

pub fn wigner_harmonics(rho: &DensityMatrix, radial_grid: &[f64], l_max: usize) -> Result<HarmonicDecomposition> {
    let d = rho.dim();
    if l_max >= d {
        return Err(Error::Domain(format!("l_max {l_max} must be below the dimension {d}")));
    }
    if radial_grid.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(Error::Domain("radial grid must be finite and non-negative".into()));
    }
    let zero = C64::new(0.0, 0.0);
    let mut components = vec![vec![zero; radial_grid.len()]; 2 * l_max + 1];
    let mut upper = vec![zero; l_max + 1];
    let mut lower = vec![zero; l_max + 1];
    for (i, &r) in radial_grid.iter().enumerate() {
        wigner_harmonics_at(rho, r, l_max, &mut upper, &mut lower);
        for l in 0..=l_max {
            components[l_max + l][i] = upper[l];
            if l > 0 {
                components[l_max - l][i] = lower[l];
            }
        }
    }
    Ok(HarmonicDecomposition { radial_grid: radial_grid.to_vec(), l_max, components })
}

/// `l = 0` radial kernel `W_{nn}(r) = (−1)^n e^{−r²} L_n(2r²)/π`.
pub fn radial_wigner_fock(n: usize, radial_grid: &[f64]) -> Vec<f64> {
    radial_grid
        .iter()
        .map(|&r| {
            let mut out = 0.0;
            for_each_wigner_kernel(0, r, n + 1, |k, v| {
                if k == n {
                    out = v;
                }
            });
            out
        })
        .collect()
}

fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// Wrapped-Gaussian kernel of angular variance `sigma2`, normalized over one
/// period:
///
/// `K(Δθ) = (1/2π) Σ_n e^{−σ² n²/2} e^{inΔθ} = Σ_k N(Δθ + 2πk; 0, σ²)`.
///
/// The Fourier series is summed for `σ² ≥ 1` and the image sum below, each
/// until the next term drops under `1e-16` of the running total. `σ² = 0`
/// returns `+∞` at `Δθ ≡ 0` and zero elsewhere.
pub fn angular_diffusion_kernel(delta_theta: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::Domain(format!("angular variance must be non-negative, got {sigma2}")));
    }
    let d = wrap_angle(delta_theta);
    if sigma2 == 0.0 {
        return Ok(if d == 0.0 { f64::INFINITY } else { 0.0 });
    }
    Ok(if sigma2 >= KERNEL_CROSSOVER {
        kernel_fourier_series(d, sigma2)
    } else {
        kernel_image_sum(d, sigma2)
    })
}

fn kernel_fourier_series(d: f64, sigma2: f64) -> f64 {
    let mut sum: f64 = 1.0;
    let mut n = 1.0_f64;
    loop {
        let weight = 2.0 * (-0.5 * sigma2 * n * n).exp();
        if weight <= 1e-16 * sum.abs() {
            break;
        }
        sum += weight * (n * d).cos();
        n += 1.0;
    }
    sum / TAU
}

fn kernel_image_sum(d: f64, sigma2: f64) -> f64 {
    let norm = 1.0 / (TAU * sigma2).sqrt();
    let gauss = |z: f64| norm * (-0.5 * z * z / sigma2).exp();
    let mut sum = gauss(d);
    let mut k = 1.0_f64;
    loop {
        let term = gauss(d + TAU * k) + gauss(d - TAU * k);
        sum += term;
        if term <= 1e-16 * sum {
            break;
        }
        k += 1.0;
    }
    sum
}

/// Amplitude of the `cos(lΔθ)` modulation of the kernel relative to its
/// mean, `2e^{−σ² l²/2}`.
pub fn angular_modulation(l: u32, sigma2: f64) -> f64 {
    let lf = l as f64;
    2.0 * (-0.5 * sigma2 * lf * lf).exp()
}

/// Pure-dephasing evolution of the harmonics: `W_l ↦ W_l e^{−κ_n l² t/2}`.
pub fn evolve_wigner_dephasing(h: &HarmonicDecomposition, kappa_n: f64, t: f64) -> Result<HarmonicDecomposition> {
    if !(t >= 0.0) || !(kappa_n >= 0.0) {
        return Err(Error::Domain(format!("need t ≥ 0 and κ_n ≥ 0, got t={t}, κ_n={kappa_n}")));
    }
    let mut out = h.clone();
    let lm = h.l_max as i64;
    for l in -lm..=lm {
        let factor = (-0.5 * kappa_n * (l * l) as f64 * t).exp();
        for c in out.components[(l + lm) as usize].iter_mut() {
            *c *= factor;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub radii: Vec<f64>,
    pub n_theta: usize,
}

impl PolarGrid {
    pub fn new(radii: Vec<f64>, n_theta: usize) -> Result<Self> {
        if radii.is_empty() || n_theta == 0 {
            return Err(Error::Domain("polar grid needs radii and angles".into()));
        }
        if radii.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("radii must be non-negative and strictly increasing".into()));
        }
        Ok(Self { radii, n_theta })
    }

    pub fn uniform(r_max: f64, n_r: usize, n_theta: usize) -> Result<Self> {
        if n_r < 2 {
            return Err(Error::Domain("need at least two radii".into()));
        }
        let h = r_max / (n_r - 1) as f64;
        Self::new((0..n_r).map(|i| h * i as f64).collect(), n_theta)
    }

    pub fn angle(&self, j: usize) -> f64 {
        TAU * j as f64 / self.n_theta as f64
    }
}

/// `C_ρ(λ) = tr(ρ e^{λa†} e^{−λ*a})` at `λ = r e^{iθ}`, stored both as samples
/// and as its angular harmonics `C_ρ(r, n)`, `C_ρ(r, θ) = Σ_n C_ρ(r, n) e^{inθ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicFunction {
    pub grid: PolarGrid,
    pub l_max: usize,
    /// `harmonics[i][n + l_max] = C_ρ(r_i, n)`.
    pub harmonics: Vec<Vec<C64>>,
    /// `samples[i][j] = C_ρ(r_i, θ_j)`.
    pub samples: Vec<Vec<C64>>,
}

impl CharacteristicFunction {
    fn from_harmonics(grid: PolarGrid, l_max: usize, harmonics: Vec<Vec<C64>>) -> Self {
        let samples = harmonics
            .iter()
            .map(|row| {
                (0..grid.n_theta)
                    .map(|j| {
                        let th = grid.angle(j);
                        row.iter()
                            .enumerate()
                            .map(|(idx, c)| c * C64::from_polar(1.0, (idx as f64 - l_max as f64) * th))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Self { grid, l_max, harmonics, samples }
    }

    pub fn harmonic(&self, i: usize, n: i64) -> C64 {
        if n.unsigned_abs() as usize > self.l_max {
            return C64::new(0.0, 0.0);
        }
        self.harmonics[i][(n + self.l_max as i64) as usize]
    }

    pub fn sample(&self, i: usize, j: usize) -> C64 {
        self.samples[i][j]
    }

    /// `C_ρ(r_i e^{iθ})` for any angle.
    pub fn at(&self, i: usize, theta: f64) -> C64 {
        self.harmonics[i]
            .iter()
            .enumerate()
            .map(|(idx, c)| c * C64::from_polar(1.0, (idx as f64 - self.l_max as f64) * theta))
            .sum()
    }

    pub fn max_abs_diff(&self, other: &CharacteristicFunction) -> f64 {
        self.samples
            .iter()
            .flatten()
            .zip(other.samples.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Evaluated from the exact matrix elements
/// `⟨k+l| e^{λa†} e^{−λ*a} |k⟩ = λ^l √(k!/(k+l)!) L_k^{(l)}(|λ|²)` and
/// `⟨k| e^{λa†} e^{−λ*a} |k+l⟩ = (−λ*)^l √(k!/(k+l)!) L_k^{(l)}(|λ|²)`.
pub fn characteristic_function(rho: &DensityMatrix, grid: &PolarGrid) -> CharacteristicFunction {
    let d = rho.dim();
    let l_max = d - 1;
    let el = rho.elements();
    let zero = C64::new(0.0, 0.0);
    let harmonics = grid
        .radii
        .iter()
        .map(|&r| {
            let mut row = vec![zero; 2 * l_max + 1];
            for l in 0..d {
                let mut up = zero;
                let mut lo = zero;
                for_each_characteristic_kernel(l, r, d - l, |k, g| {
                    up += el[(k, k + l)] * g;
                    lo += el[(k + l, k)] * g;
                });
                row[l_max + l] = up;
                if l > 0 {
                    row[l_max - l] = if l % 2 == 0 { lo } else { -lo };
                }
            }
            row
        })
        .collect();
    CharacteristicFunction::from_harmonics(grid.clone(), l_max, harmonics)
}

/// Four-point Lagrange interpolation of `ys` at `x`, extrapolating with the
/// end stencils outside the grid.
fn cubic_interpolate(xs: &[f64], ys: &[C64], x: f64) -> C64 {
    let n = xs.len();
    if n == 1 {
        return ys[0];
    }
    let idx = xs.partition_point(|&v| v <= x).saturating_sub(1);
    let width = n.min(4);
    let start = idx.saturating_sub(1).min(n - width);
    let mut acc = C64::new(0.0, 0.0);
    for a in start..start + width {
        let mut w = 1.0;
        for b in start..start + width {
            if a != b {
                w *= (x - xs[b]) / (xs[a] - xs[b]);
            }
        }
        acc += ys[a] * w;
    }
    acc
}

/// `C_ρ(r, n, t) = C_0(r e^{−κ_a t/2}, n) e^{(iω_c n − κ_n n²/2)t}`, with the
/// contracted radius resampled by cubic (four-point Lagrange) interpolation
/// along the radial grid.
pub fn characteristic_evolution(c0: &CharacteristicFunction, params: &ModelParams, t: f64) -> Result<CharacteristicFunction> {
    params.validate()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(c0.clone());
    }
    let shrink = (-0.5 * params.kappa_a * t).exp();
    let lm = c0.l_max as i64;
    let radii = &c0.grid.radii;
    let mut harmonics = vec![vec![C64::new(0.0, 0.0); c0.harmonics[0].len()]; radii.len()];
    for n in -lm..=lm {
        let column: Vec<C64> = c0.harmonics.iter().map(|row| row[(n + lm) as usize]).collect();
        let nf = n as f64;
        let factor = C64::from_polar((-0.5 * params.kappa_n * nf * nf * t).exp(), params.omega_c * nf * t);
        for (i, &r) in radii.iter().enumerate() {
            let value = if shrink == 1.0 { column[i] } else { cubic_interpolate(radii, &column, r * shrink) };
            harmonics[i][(n + lm) as usize] = value * factor;
        }
    }
    Ok(CharacteristicFunction::from_harmonics(c0.grid.clone(), c0.l_max, harmonics))
}
