//! Monte-Carlo wave-function unraveling with a loss channel `√κ_a a` and a
//! dephasing channel `√κ_n N`.
//!
//! Between jumps the state evolves under `−iω_c N − (κ_a N + κ_n N²)/2`,
//! which is diagonal in the Fock basis, so the primary sampler draws exact
//! waiting times by inverting the squared-norm decay. A first-order
//! fixed-step scheme is kept alongside for cross-validation.
//!
//! Random numbers come from ChaCha20 (`rand_chacha`), seeded with the master
//! seed and switched to stream `index` for trajectory `index`. Ensembles are
//! therefore reproducible regardless of how trajectories are scheduled.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hilbert::{DensityMatrix, ModelParams, StateVector, C64};

/// Bound on `dt · (κ_a⟨N⟩ + κ_n⟨N²⟩)` for the fixed-step scheme.
pub const DT_GUARD: f64 = 0.1;

/// Trajectories summed sequentially per chunk before chunks are combined in
/// index order.
const ENSEMBLE_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JumpChannel {
    /// Photon loss, `√κ_a a`.
    A,
    /// Number dephasing, `√κ_n N`.
    N,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: JumpChannel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrajectorySeed {
    pub master: u64,
    pub stream: u64,
}

impl From<u64> for TrajectorySeed {
    fn from(master: u64) -> Self {
        Self { master, stream: 0 }
    }
}

impl TrajectorySeed {
    pub fn rng(self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub events: Vec<JumpEvent>,
    pub final_state: StateVector,
    pub seed: TrajectorySeed,
    pub t_final: f64,
}

impl TrajectoryRecord {
    pub fn count(&self, channel: JumpChannel) -> usize {
        self.events.iter().filter(|e| e.channel == channel).count()
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleEstimate {
    pub rho_mean: DensityMatrix,
    pub n_samples: usize,
    /// `sqrt(Σ_mn Var(ρ_mn) / n)`: the expected Frobenius distance of the
    /// mean from its limit.
    pub std_error: f64,
}

fn check_inputs(t_final: f64, params: &ModelParams) -> Result<()> {
    params.validate()?;
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::Domain(format!("t_final must be finite and non-negative, got {t_final}")));
    }
    Ok(())
}

fn normalize(c: &mut [C64]) {
    let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in c.iter_mut() {
        *z /= norm;
    }
}

/// `Σ w_n e^{−Γ_n τ}` and its derivative.
fn survival(weights: &[f64], rates: &[f64], tau: f64) -> (f64, f64) {
    let mut f = 0.0;
    let mut df = 0.0;
    for (w, g) in weights.iter().zip(rates) {
        if *w == 0.0 {
            continue;
        }
        let e = w * (-g * tau).exp();
        f += e;
        df -= g * e;
    }
    (f, df)
}

/// Solves `survival(τ) = u` on `[0, upper]`, given `survival(upper) < u`.
fn waiting_time(weights: &[f64], rates: &[f64], u: f64, upper: f64) -> f64 {
    // The survival function is decreasing and convex, so Newton from the left
    // increases monotonically towards the root.
    let mut tau = 0.0;
    for _ in 0..200 {
        let (f, df) = survival(weights, rates, tau);
        let gap = f - u;
        if gap <= u * 1e-15 || df == 0.0 {
            return tau.min(upper);
        }
        let next = tau - gap / df;
        if !(next > tau) || next >= upper {
            break;
        }
        if next - tau <= 1e-15 * next {
            return next;
        }
        tau = next;
    }
    // Bisection fallback.
    let (mut lo, mut hi) = (tau, upper);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if survival(weights, rates, mid).0 > u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn evolve_no_jump(c: &mut [C64], params: &ModelParams, tau: f64) {
    for (n, z) in c.iter_mut().enumerate() {
        let nf = n as f64;
        let decay = -0.5 * (params.kappa_a * nf + params.kappa_n * nf * nf) * tau;
        *z *= C64::from_polar(decay.exp(), -params.omega_c * nf * tau);
    }
}

fn number_moments(c: &[C64]) -> (f64, f64) {
    let mut n1 = 0.0;
    let mut n2 = 0.0;
    for (n, z) in c.iter().enumerate() {
        let w = z.norm_sqr();
        n1 += n as f64 * w;
        n2 += (n * n) as f64 * w;
    }
    (n1, n2)
}

fn apply_loss(c: &mut [C64]) {
    let d = c.len();
    for n in 0..d - 1 {
        c[n] = c[n + 1] * ((n + 1) as f64).sqrt();
    }
    c[d - 1] = C64::new(0.0, 0.0);
}

fn apply_number(c: &mut [C64]) {
    for (n, z) in c.iter_mut().enumerate() {
        *z *= n as f64;
    }
}

fn pick_channel(rng: &mut ChaCha20Rng, rate_a: f64, rate_n: f64) -> JumpChannel {
    let r = rng.gen::<f64>() * (rate_a + rate_n);
    if r < rate_a {
        JumpChannel::A
    } else {
        JumpChannel::N
    }
}

/// Exact waiting-time trajectory up to `t_final`.
pub fn sample_trajectory(
    psi0: &StateVector,
    params: &ModelParams,
    t_final: f64,
    seed: impl Into<TrajectorySeed>,
) -> Result<TrajectoryRecord> {
    check_inputs(t_final, params)?;
    let seed = seed.into();
    let mut rng = seed.rng();
    let mut c: Vec<C64> = psi0.amplitudes().iter().copied().collect();
    normalize(&mut c);
    let rates: Vec<f64> = (0..c.len())
        .map(|n| {
            let nf = n as f64;
            params.kappa_a * nf + params.kappa_n * nf * nf
        })
        .collect();
    let mut weights = vec![0.0; c.len()];
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        let remaining = t_final - t;
        for (w, z) in weights.iter_mut().zip(&c) {
            *w = z.norm_sqr();
        }
        let u = 1.0 - rng.gen::<f64>();
        if remaining <= 0.0 || survival(&weights, &rates, remaining).0 >= u {
            evolve_no_jump(&mut c, params, remaining.max(0.0));
            normalize(&mut c);
            break;
        }
        let tau = waiting_time(&weights, &rates, u, remaining);
        evolve_no_jump(&mut c, params, tau);
        normalize(&mut c);
        t += tau;
        let (n1, n2) = number_moments(&c);
        let channel = pick_channel(&mut rng, params.kappa_a * n1, params.kappa_n * n2);
        match channel {
            JumpChannel::A => apply_loss(&mut c),
            JumpChannel::N => apply_number(&mut c),
        }
        normalize(&mut c);
        // Waiting times below the float resolution of t would break strict
        // ordering; nudge to the next representable value.
        let time = match events.last() {
            Some(JumpEvent { time, .. }) if t <= *time => next_up(*time),
            _ => t,
        };
        events.push(JumpEvent { time, channel });
    }
    Ok(TrajectoryRecord {
        events,
        final_state: StateVector::from_normalized_unchecked(DVector::from_vec(c)),
        seed,
        t_final,
    })
}

fn next_up(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

/// First-order fixed-step unraveling, with the `−i√(dt κ)` jump prefactors
/// kept. `t_final` is split into `ceil(t_final/dt)` equal steps no longer
/// than `dt`; jumps are stamped at the end of their step.
pub fn dt_scheme_trajectory(
    psi0: &StateVector,
    params: &ModelParams,
    t_final: f64,
    dt: f64,
    seed: impl Into<TrajectorySeed>,
) -> Result<TrajectoryRecord> {
    check_inputs(t_final, params)?;
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let seed = seed.into();
    let mut rng = seed.rng();
    let steps = ((t_final / dt) - 1e-9).ceil().max(0.0) as usize;
    let h = if steps > 0 { t_final / steps as f64 } else { 0.0 };
    let mut c: Vec<C64> = psi0.amplitudes().iter().copied().collect();
    normalize(&mut c);
    let mut events = Vec::new();
    let minus_i = C64::new(0.0, -1.0);
    for step in 0..steps {
        let (n1, n2) = number_moments(&c);
        let p_a = h * params.kappa_a * n1;
        let p_n = h * params.kappa_n * n2;
        if p_a + p_n > DT_GUARD {
            return Err(Error::StepSize { value: p_a + p_n, limit: DT_GUARD });
        }
        let r = rng.gen::<f64>();
        let time = (step + 1) as f64 * h;
        if r < p_a {
            apply_loss(&mut c);
            let f = minus_i * (h * params.kappa_a).sqrt();
            c.iter_mut().for_each(|z| *z *= f);
            events.push(JumpEvent { time, channel: JumpChannel::A });
        } else if r < p_a + p_n {
            apply_number(&mut c);
            let f = minus_i * (h * params.kappa_n).sqrt();
            c.iter_mut().for_each(|z| *z *= f);
            events.push(JumpEvent { time, channel: JumpChannel::N });
        } else {
            for (n, z) in c.iter_mut().enumerate() {
                let nf = n as f64;
                let gen = C64::new(0.5 * (params.kappa_a * nf + params.kappa_n * nf * nf), params.omega_c * nf);
                *z -= *z * gen * h;
            }
        }
        normalize(&mut c);
    }
    Ok(TrajectoryRecord {
        events,
        final_state: StateVector::from_normalized_unchecked(DVector::from_vec(c)),
        seed,
        t_final,
    })
}

struct Accumulator {
    sum: DMatrix<C64>,
    sum_sq: DMatrix<f64>,
    count: usize,
}

impl Accumulator {
    fn new(d: usize) -> Self {
        Self { sum: DMatrix::zeros(d, d), sum_sq: DMatrix::zeros(d, d), count: 0 }
    }

    fn add_state(&mut self, psi: &DVector<C64>) {
        let d = psi.len();
        for n in 0..d {
            let cn = psi[n].conj();
            for m in 0..d {
                let v = psi[m] * cn;
                self.sum[(m, n)] += v;
                self.sum_sq[(m, n)] += v.norm_sqr();
            }
        }
        self.count += 1;
    }

    fn merge(&mut self, other: &Accumulator) {
        self.sum += &other.sum;
        self.sum_sq += &other.sum_sq;
        self.count += other.count;
    }
}

/// Sample mean of `|ψ⟩⟨ψ|` over `n_samples` waiting-time trajectories.
pub fn average_trajectories(
    psi0: &StateVector,
    params: &ModelParams,
    t: f64,
    n_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<EnsembleEstimate> {
    ensemble_with(psi0, params, t, n_samples, seed, exec, |_| {})
}

/// As [`average_trajectories`], handing every record to `observer` in index
/// order.
pub fn ensemble_with<F>(
    psi0: &StateVector,
    params: &ModelParams,
    t: f64,
    n_samples: usize,
    seed: u64,
    exec: Execution,
    mut observer: F,
) -> Result<EnsembleEstimate>
where
    F: FnMut(&TrajectoryRecord),
{
    check_inputs(t, params)?;
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be at least 1".into()));
    }
    let d = psi0.dim();
    let n_chunks = n_samples.div_ceil(ENSEMBLE_CHUNK);
    let chunks = exec.map_indexed(n_chunks, |chunk| -> Result<(Accumulator, Vec<TrajectoryRecord>)> {
        let mut acc = Accumulator::new(d);
        let mut records = Vec::new();
        let start = chunk * ENSEMBLE_CHUNK;
        let end = (start + ENSEMBLE_CHUNK).min(n_samples);
        for index in start..end {
            let rec = sample_trajectory(psi0, params, t, TrajectorySeed { master: seed, stream: index as u64 })?;
            acc.add_state(rec.final_state.amplitudes());
            records.push(rec);
        }
        Ok((acc, records))
    });
    let mut total = Accumulator::new(d);
    for chunk in chunks {
        let (acc, records) = chunk?;
        total.merge(&acc);
        for rec in &records {
            observer(rec);
        }
    }
    let n = total.count as f64;
    let mean = total.sum.map(|z| z / n);
    let std_error = if total.count > 1 {
        let mut var_sum = 0.0;
        for (s2, m) in total.sum_sq.iter().zip(mean.iter()) {
            var_sum += ((s2 / n - m.norm_sqr()) * n / (n - 1.0)).max(0.0);
        }
        (var_sum / n).sqrt()
    } else {
        0.0
    };
    Ok(EnsembleEstimate { rho_mean: DensityMatrix::from_matrix_unchecked(mean), n_samples: total.count, std_error })
}

/// Fock level of a state concentrated on a single level, if it is one.
pub fn fock_level(psi: &StateVector) -> Option<usize> {
    let amps = psi.amplitudes();
    let (level, max) = amps.iter().enumerate().map(|(n, z)| (n, z.norm_sqr())).fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    if (max - 1.0).abs() < 1e-12 {
        Some(level)
    } else {
        None
    }
}
