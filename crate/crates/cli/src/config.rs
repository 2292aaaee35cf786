//! Run configuration: one JSON file per run, every key checked up front.

use std::path::{Path, PathBuf};

use einsel_core::einselection::{recommended_dim, SweepMode, DEFAULT_MAX_ITER, DEFAULT_MULTISTART, DEFAULT_TOL};
use einsel_core::exec::Execution;
use einsel_core::hilbert::{
    cat_branches, cat_state, coherent_state, coherent_superposition, fock_state, ModelParams, StateVector, TruncatedBasis, C64,
    DEFAULT_LEAKAGE_TOL,
};
use einsel_core::io::{read_json, StateRecord};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub initial_state: Option<InitialState>,
    #[serde(default)]
    pub dim: DimSpec,
    #[serde(default)]
    pub times: Option<Grid>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub evolve: EvolveOptions,
    #[serde(default)]
    pub trajectories: TrajectoryOptions,
    #[serde(default)]
    pub wigner: WignerOptions,
    #[serde(default)]
    pub optimize: Option<OptimizeOptions>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    /// Directory that relative `amplitudes` paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub omega_c: f64,
    pub kappa_a: f64,
    pub kappa_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Fock { n: usize },
    Coherent { re: f64, im: f64 },
    Cat { re: f64, im: f64, theta: f64 },
    /// `|α₊⟩ + |α₋⟩`, normalized.
    Superposition { plus_re: f64, plus_im: f64, minus_re: f64, minus_im: f64 },
    Amplitudes { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Auto {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimSpec {
    Fixed(usize),
    Keyword(Auto),
}

impl Default for DimSpec {
    fn default() -> Self {
        DimSpec::Keyword(Auto::Auto)
    }
}

/// Either `{start, stop, points}` (inclusive, evenly spaced) or explicit
/// `{values}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Range(RangeGrid),
    List(ListGrid),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ListGrid {
    pub values: Vec<f64>,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(l) => l.values.clone(),
            Grid::Range(r) if r.points == 1 => vec![r.start],
            Grid::Range(r) => {
                let step = (r.stop - r.start) / (r.points - 1) as f64;
                (0..r.points).map(|k| if k + 1 == r.points { r.stop } else { r.start + step * k as f64 }).collect()
            }
        }
    }

    fn validate(&self, what: &str, lo: f64, hi: f64) -> Result<(), CliError> {
        if let Grid::Range(r) = self {
            if r.points == 0 {
                return Err(CliError::Config(format!("{what}: points must be at least 1")));
            }
        }
        let v = self.values();
        if v.is_empty() {
            return Err(CliError::Config(format!("{what}: grid is empty")));
        }
        if v.iter().any(|x| !x.is_finite() || *x < lo || *x > hi) {
            return Err(CliError::Config(format!("{what}: values must lie in [{lo}, {hi}]")));
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config(format!("{what}: values must be strictly increasing")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveOptions {
    /// Write `rho_<k>.json` for every time point.
    #[serde(default)]
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryOptions {
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    /// Also write the jump record of every trajectory at the last time.
    #[serde(default)]
    pub record_jumps: bool,
}

fn default_samples() -> usize {
    1000
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self { n_samples: default_samples(), record_jumps: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerOptions {
    /// Half-width of the square grid; chosen from `⟨N⟩` when absent.
    #[serde(default)]
    pub extent: Option<f64>,
    #[serde(default = "default_grid_points")]
    pub points: usize,
    #[serde(default = "default_l_max")]
    pub l_max: usize,
    #[serde(default = "default_radial_points")]
    pub radial_points: usize,
    #[serde(default)]
    pub raster: bool,
}

fn default_grid_points() -> usize {
    einsel_core::phase_space::DEFAULT_GRID_POINTS
}

fn default_l_max() -> usize {
    8
}

fn default_radial_points() -> usize {
    200
}

impl Default for WignerOptions {
    fn default() -> Self {
        Self {
            extent: None,
            points: default_grid_points(),
            l_max: default_l_max(),
            radial_points: default_radial_points(),
            raster: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeOptions {
    pub energy_target: f64,
    #[serde(default = "default_multistart")]
    pub multistart: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Purity curves of the optimum, Fock and coherent states on this grid.
    #[serde(default)]
    pub purity_times: Option<Grid>,
}

fn default_multistart() -> usize {
    DEFAULT_MULTISTART
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub energy_target: f64,
    /// `κ_a/(κ_a + κ_n)` grid in `[0, 1]`.
    pub ratios: Grid,
    #[serde(default = "default_multistart")]
    pub multistart: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub mode: SweepMode,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dim: Option<usize>,
    pub n_samples: Option<usize>,
    pub execution: Option<Execution>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.apply(overrides);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(d) = o.dim {
            self.dim = DimSpec::Fixed(d);
        }
        if let Some(n) = o.n_samples {
            self.trajectories.n_samples = n;
        }
        if let Some(e) = o.execution {
            self.execution = e;
        }
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        let m = self.model.ok_or_else(|| CliError::Config("missing `model`".into()))?;
        ModelParams::new(m.omega_c, m.kappa_a, m.kappa_n).map_err(|e| CliError::Config(format!("model: {e}")))
    }

    pub fn time_grid(&self) -> Result<Vec<f64>, CliError> {
        let grid = self.times.as_ref().ok_or_else(|| CliError::Config("missing `times`".into()))?;
        grid.validate("times", 0.0, f64::INFINITY)?;
        Ok(grid.values())
    }

    pub fn optimize_options(&self) -> Result<&OptimizeOptions, CliError> {
        let o = self.optimize.as_ref().ok_or_else(|| CliError::Config("missing `optimize` section".into()))?;
        check_solver("optimize", o.energy_target, o.multistart, o.tol, o.max_iter)?;
        if let Some(g) = &o.purity_times {
            g.validate("optimize.purity_times", 0.0, f64::INFINITY)?;
        }
        Ok(o)
    }

    pub fn sweep_options(&self) -> Result<&SweepConfig, CliError> {
        let s = self.sweep.as_ref().ok_or_else(|| CliError::Config("missing `sweep` section".into()))?;
        check_solver("sweep", s.energy_target, s.multistart, s.tol, s.max_iter)?;
        s.ratios.validate("sweep.ratios", 0.0, 1.0)?;
        Ok(s)
    }

    pub fn check_trajectories(&self) -> Result<(), CliError> {
        if self.trajectories.n_samples == 0 {
            return Err(CliError::Config("trajectories.n_samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn check_wigner(&self) -> Result<(), CliError> {
        let w = &self.wigner;
        if w.points < 2 || w.radial_points < 2 {
            return Err(CliError::Config("wigner: points and radial_points must be at least 2".into()));
        }
        if let Some(e) = w.extent {
            if !(e > 0.0 && e.is_finite()) {
                return Err(CliError::Config("wigner.extent must be positive".into()));
            }
        }
        Ok(())
    }

    /// The initial state in the configured (or automatic) basis.
    pub fn initial_state(&self) -> Result<StateVector, CliError> {
        let spec = self.initial_state.as_ref().ok_or_else(|| CliError::Config("missing `initial_state`".into()))?;
        let bad = |e: einsel_core::Error| CliError::Config(format!("initial_state: {e}"));
        if let InitialState::Amplitudes { file } = spec {
            let path = if file.is_absolute() { file.clone() } else { self.base_dir.join(file) };
            let record: StateRecord = read_json(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let psi = record.to_state().map_err(bad)?;
            return match self.dim {
                DimSpec::Fixed(d) if d != psi.dim() => {
                    Err(CliError::Config(format!("dim {d} disagrees with the amplitude file ({})", psi.dim())))
                }
                _ => Ok(psi),
            };
        }
        let basis = match self.dim {
            DimSpec::Fixed(d) => TruncatedBasis::new(d).map_err(bad)?,
            DimSpec::Keyword(Auto::Auto) => auto_basis(spec),
        };
        match *spec {
            InitialState::Fock { n } => fock_state(n, basis),
            InitialState::Coherent { re, im } => coherent_state(C64::new(re, im), basis),
            InitialState::Cat { re, im, theta } => cat_state(C64::new(re, im), theta, basis),
            InitialState::Superposition { plus_re, plus_im, minus_re, minus_im } => {
                coherent_superposition(C64::new(plus_re, plus_im), C64::new(minus_re, minus_im), basis)
            }
            InitialState::Amplitudes { .. } => unreachable!(),
        }
        .map_err(bad)
    }

    /// Basis for the optimizer: the configured dimension or the recommended
    /// one for the target.
    pub fn solver_basis(&self, energy_target: f64) -> Result<TruncatedBasis, CliError> {
        let d = match self.dim {
            DimSpec::Fixed(d) => d,
            DimSpec::Keyword(Auto::Auto) => recommended_dim(energy_target).map_err(|e| CliError::Config(e.to_string()))?,
        };
        TruncatedBasis::new(d).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn check_solver(what: &str, target: f64, multistart: usize, tol: f64, max_iter: usize) -> Result<(), CliError> {
    if !(target >= 0.0 && target.is_finite()) {
        return Err(CliError::Config(format!("{what}.energy_target must be finite and non-negative")));
    }
    if multistart == 0 || max_iter == 0 || !(tol > 0.0) {
        return Err(CliError::Config(format!("{what}: multistart, max_iter and tol must be positive")));
    }
    Ok(())
}

/// Smallest basis holding the state with leakage below the default tolerance.
fn auto_basis(spec: &InitialState) -> TruncatedBasis {
    match *spec {
        InitialState::Fock { n } => TruncatedBasis::new(n + 1).expect("n + 1 ≥ 1"),
        InitialState::Coherent { re, im } => TruncatedBasis::for_mean_photons(C64::new(re, im).norm_sqr(), DEFAULT_LEAKAGE_TOL),
        InitialState::Cat { re, im, theta } => {
            let (p, _) = cat_branches(C64::new(re, im), theta);
            TruncatedBasis::for_mean_photons(p.norm_sqr(), DEFAULT_LEAKAGE_TOL)
        }
        InitialState::Superposition { plus_re, plus_im, minus_re, minus_im } => {
            let n = C64::new(plus_re, plus_im).norm_sqr().max(C64::new(minus_re, minus_im).norm_sqr());
            TruncatedBasis::for_mean_photons(n, DEFAULT_LEAKAGE_TOL)
        }
        InitialState::Amplitudes { .. } => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig, serde_json::Error> {
        serde_json::from_str(s)
    }

    #[test]
    fn minimal_config_and_defaults() {
        let cfg = parse(r#"{"model":{"omega_c":1,"kappa_a":1,"kappa_n":0.5},"initial_state":{"type":"fock","n":3},"times":{"start":0,"stop":1,"points":3}}"#).unwrap();
        assert_eq!(cfg.dim, DimSpec::Keyword(Auto::Auto));
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        assert_eq!(cfg.time_grid().unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(cfg.initial_state().unwrap().dim(), 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse(r#"{"modle":{}}"#).is_err());
        assert!(parse(r#"{"model":{"omega_c":1,"kappa_a":1,"kappa_n":1,"gamma":2}}"#).is_err());
        assert!(parse(r#"{"initial_state":{"type":"fock","n":1,"phase":0}}"#).is_err());
        assert!(parse(r#"{"initial_state":{"type":"squeezed","r":1}}"#).is_err());
        assert!(parse(r#"{"dim":"big"}"#).is_err());
    }

    #[test]
    fn grids_and_dims() {
        let cfg = parse(r#"{"dim":12,"times":{"values":[0,0.1,2]}}"#).unwrap();
        assert_eq!(cfg.dim, DimSpec::Fixed(12));
        assert_eq!(cfg.time_grid().unwrap(), vec![0.0, 0.1, 2.0]);
        let cfg = parse(r#"{"dim":"auto","times":{"values":[0,2,1]}}"#).unwrap();
        assert!(matches!(cfg.time_grid(), Err(CliError::Config(_))));
        let cfg = parse(r#"{"times":{"start":0,"stop":1,"points":0}}"#).unwrap();
        assert!(cfg.time_grid().is_err());
        let cfg = parse(r#"{"times":{"start":-1,"stop":1,"points":3}}"#).unwrap();
        assert!(cfg.time_grid().is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut cfg = parse(r#"{"seed":3,"dim":10,"output_dir":"a"}"#).unwrap();
        cfg.apply(&Overrides { seed: Some(9), out: Some("b".into()), dim: Some(20), n_samples: Some(5), execution: Some(Execution::Sequential) });
        assert_eq!((cfg.seed, cfg.output_dir.clone(), cfg.dim), (9, PathBuf::from("b"), DimSpec::Fixed(20)));
        assert_eq!(cfg.trajectories.n_samples, 5);
        assert_eq!(cfg.execution, Execution::Sequential);
    }

    #[test]
    fn auto_dim_covers_coherent_tail() {
        let cfg = parse(r#"{"initial_state":{"type":"coherent","re":3,"im":4}}"#).unwrap();
        let psi = cfg.initial_state().unwrap();
        assert!(psi.dim() > 25);
        assert!((psi.mean_photons() - 25.0).abs() < 1e-8);
    }

    #[test]
    fn invalid_model_is_a_config_error() {
        let cfg = parse(r#"{"model":{"omega_c":1,"kappa_a":-1,"kappa_n":1}}"#).unwrap();
        assert!(matches!(cfg.params(), Err(CliError::Config(_))));
        assert!(matches!(parse("{}").unwrap().params(), Err(CliError::Config(_))));
    }
}
