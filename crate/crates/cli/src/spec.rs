//! Experiment specification: one TOML (or JSON) file per experiment.
//!
//! ```toml
//! schema = 1
//! kind = "stepsize_scan"   # stepsize_scan | dim_scan | bound_check | verify_integrator | drift_check | sample
//! name = "kl-order"
//! seed = 7
//!
//! [model]
//! family = "quadratic"
//! hessian_diag = [1.0, 0.5]
//!
//! [grid]
//! delta = [0.1, 0.05, 0.025, 0.0125]
//! fix_t = 0.1              # K = T / (delta sqrt L); use `k = [...]` instead for a fixed K
//! eta = [0.0]              # any of eta, gamma (eta = 1 - gamma T), langevin_gamma (eta = exp(-delta gamma))
//! langevin_gamma = [1.0]
//! ```
//!
//! Precedence: built-in defaults, then the config file, then command-line
//! flags.

use std::path::{Path, PathBuf};

use ghmc_core::bounds::Regime;
use ghmc_core::potentials::{ModelConfig, ModelSpec, PotentialModel};
use ghmc_core::sampler::{derive_params, eta_for_langevin, GhmcParams, InitLaw};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

/// Version of every artifact format written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "GHMC_OUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    StepsizeScan,
    DimScan,
    BoundCheck,
    VerifyIntegrator,
    DriftCheck,
    Sample,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::StepsizeScan => "stepsize_scan",
            ExperimentKind::DimScan => "dim_scan",
            ExperimentKind::BoundCheck => "bound_check",
            ExperimentKind::VerifyIntegrator => "verify_integrator",
            ExperimentKind::DriftCheck => "drift_check",
            ExperimentKind::Sample => "sample",
        }
    }
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "schema_version")]
    pub schema: u32,
    pub kind: ExperimentKind,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub chain: ChainSettings,
    #[serde(default)]
    pub scan: ScanSettings,
    #[serde(default)]
    pub bounds: BoundSettings,
    #[serde(default)]
    pub verify: VerifySettings,
    #[serde(default)]
    pub drift: DriftSettings,
    #[serde(default)]
    pub output: OutputSettings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub k: Vec<usize>,
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fix_t: Option<f64>,
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub langevin_gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSettings {
    pub n_iters: usize,
    pub chains: usize,
    pub record_every: usize,
    pub burn_in: usize,
    /// Defaults to `x = 0`, `v ~ N(0, I)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitLaw>,
}

impl Default for ChainSettings {
    fn default() -> Self {
        ChainSettings {
            n_iters: 10_000,
            chains: 1,
            record_every: 1,
            burn_in: 0,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSettings {
    #[serde(default)]
    pub dims: Vec<usize>,
    /// Step sizes shrink like `(d / d_ref)^-p`, `p = 1` (general) or `1/4`.
    pub regime: Regime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_dim: Option<usize>,
}

impl Default for ScanSettings {
    fn default() -> Self {
        ScanSettings {
            dims: Vec::new(),
            regime: Regime::WeaklyInteracting,
            reference_dim: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSettings {
    /// Log-Sobolev constant; computed as the largest eigenvalue of the
    /// inverse Hessian for quadratic targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_ls: Option<f64>,
    /// Chosen to maximize `kappa~` over a log grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_tilde: Option<f64>,
    pub eps_free: f64,
    pub steps: u64,
    /// Initial law `N((shift, .., shift, 0, .., 0), I)` unless `chain.init` is Gaussian.
    pub init_shift: f64,
    pub regime: Regime,
    /// Target accuracy for the complexity plan.
    pub target_eps: f64,
    /// Draws used for initial-law expectations without a closed form.
    pub mc_draws: usize,
}

impl Default for BoundSettings {
    fn default() -> Self {
        BoundSettings {
            c_ls: None,
            a_tilde: None,
            eps_free: 0.5,
            steps: 500,
            init_shift: 2.0,
            regime: Regime::General,
            target_eps: 0.01,
            mc_draws: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub points: usize,
    /// Phase points are drawn uniformly from `[-radius, radius]^(2d)`.
    pub radius: f64,
    pub reversibility_tol: f64,
    pub det_tol: f64,
    pub psi_slack: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            points: 1000,
            radius: 2.0,
            reversibility_tol: 1e-12,
            det_tol: 1e-6,
            psi_slack: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSettings {
    pub mc_samples: usize,
    /// Turn an uncertified fit into a failed assertion.
    pub require_certified: bool,
}

impl Default for DriftSettings {
    fn default() -> Self {
        DriftSettings {
            mc_samples: 20_000,
            require_certified: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    /// Output directory; defaults to `<root>/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Defaults to `$GHMC_OUT_ROOT`, then `ghmc-out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
}

/// Command-line overrides, applied after the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub grid_delta: Option<Vec<f64>>,
    pub fix_t: Option<f64>,
    pub fix_gamma: Option<f64>,
    pub regime: Option<Regime>,
    pub dims: Option<Vec<usize>>,
    pub n_iters: Option<usize>,
}

/// How the refreshment parameter of a grid cell was specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Friction {
    Eta(f64),
    /// `eta = 1 - gamma T`.
    Gamma(f64),
    /// `eta = exp(-delta gamma)`.
    LangevinGamma(f64),
}

impl Friction {
    pub fn mode(&self) -> &'static str {
        match self {
            Friction::Eta(_) => "eta",
            Friction::Gamma(_) => "gamma",
            Friction::LangevinGamma(_) => "langevin_gamma",
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Friction::Eta(v) | Friction::Gamma(v) | Friction::LangevinGamma(v) => v,
        }
    }
}

/// One point of the parameter grid, before resolution against a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub delta: f64,
    /// `None` when `K` follows from `fix_t`.
    pub k: Option<usize>,
    pub friction: Friction,
}

impl GridPoint {
    pub fn resolve(&self, lipschitz: f64, fix_t: Option<f64>) -> Result<GhmcParams> {
        let k = match (self.k, fix_t) {
            (Some(k), _) => k,
            (None, Some(t)) => steps_for_time(t, self.delta, lipschitz)?,
            (None, None) => return Err(CliError::Spec("grid needs k or fix_t".into())),
        };
        let p = match self.friction {
            Friction::Eta(eta) => derive_params(k, self.delta, eta, lipschitz)?,
            Friction::Gamma(g) => GhmcParams::from_gamma(k, self.delta, g, lipschitz)?,
            Friction::LangevinGamma(g) => {
                derive_params(k, self.delta, eta_for_langevin(self.delta, g), lipschitz)?
            }
        };
        Ok(p)
    }
}

/// `K = T / (delta sqrt L)`, which must be a positive integer to 1e-9.
pub fn steps_for_time(t: f64, delta: f64, lipschitz: f64) -> Result<usize> {
    let exact = t / (delta * lipschitz.sqrt());
    let k = exact.round();
    if !(k >= 1.0) || (exact - k).abs() > 1e-9 * exact.max(1.0) {
        return Err(CliError::Spec(format!(
            "fix_t = {t} is not a positive integer multiple of delta sqrt(L) = {}",
            delta * lipschitz.sqrt()
        )));
    }
    Ok(k as usize)
}

impl ExperimentSpec {
    /// A runnable default for `kind` on an isotropic Gaussian in two dimensions.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let delta = match kind {
            ExperimentKind::StepsizeScan => vec![0.1, 0.05, 0.025, 0.0125],
            ExperimentKind::DriftCheck => vec![0.02],
            _ => vec![0.05],
        };
        let dims = if kind == ExperimentKind::DimScan {
            vec![2, 8, 32]
        } else {
            Vec::new()
        };
        ExperimentSpec {
            schema: SCHEMA_VERSION,
            kind,
            name: kind.as_str().into(),
            seed: 0,
            model: ModelConfig {
                spec: ModelSpec::IsotropicGaussian { dim: 2, omega2: 1.0 },
                rescale: false,
                third_bound: None,
                fourth_bound: None,
            },
            grid: GridSpec {
                k: if kind == ExperimentKind::DimScan { vec![2] } else { Vec::new() },
                delta,
                fix_t: (kind != ExperimentKind::DimScan).then_some(0.1),
                eta: vec![0.9],
                gamma: Vec::new(),
                langevin_gamma: Vec::new(),
            },
            chain: ChainSettings::default(),
            scan: ScanSettings {
                dims,
                ..ScanSettings::default()
            },
            bounds: BoundSettings::default(),
            verify: VerifySettings::default(),
            drift: DriftSettings::default(),
            output: OutputSettings::default(),
        }
    }

    /// Parses TOML, or JSON when `path` ends in `.json`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(dir) = &o.out {
            self.output.dir = Some(dir.clone());
        }
        if let Some(d) = &o.grid_delta {
            self.grid.delta = d.clone();
        }
        if let Some(t) = o.fix_t {
            self.grid.fix_t = Some(t);
            self.grid.k.clear();
        }
        if let Some(g) = o.fix_gamma {
            self.grid.gamma = vec![g];
            self.grid.eta.clear();
            self.grid.langevin_gamma.clear();
        }
        if let Some(r) = o.regime {
            self.scan.regime = r;
            self.bounds.regime = r;
        }
        if let Some(d) = &o.dims {
            self.scan.dims = d.clone();
        }
        if let Some(n) = o.n_iters {
            self.chain.n_iters = n;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Spec(m.into()));
        if self.schema != SCHEMA_VERSION {
            return Err(CliError::Spec(format!(
                "unsupported schema {}, expected {SCHEMA_VERSION}",
                self.schema
            )));
        }
        let g = &self.grid;
        if g.delta.is_empty() {
            return bad("grid.delta is empty");
        }
        if g.delta.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad("grid.delta must be positive");
        }
        match (g.k.is_empty(), g.fix_t) {
            (true, None) => return bad("grid needs k or fix_t"),
            (false, Some(_)) => return bad("grid.k and grid.fix_t are exclusive"),
            _ => {}
        }
        if g.k.contains(&0) {
            return bad("grid.k entries must be positive");
        }
        if g.eta.is_empty() && g.gamma.is_empty() && g.langevin_gamma.is_empty() {
            return bad("grid needs eta, gamma or langevin_gamma values");
        }
        if self.kind == ExperimentKind::DimScan && self.scan.dims.is_empty() {
            return bad("dim_scan needs scan.dims");
        }
        if self.scan.dims.contains(&0) {
            return bad("scan.dims entries must be positive");
        }
        if self.kind == ExperimentKind::Sample {
            let c = &self.chain;
            if c.chains == 0 || c.record_every == 0 {
                return bad("chain.chains and chain.record_every must be positive");
            }
        }
        if self.kind == ExperimentKind::VerifyIntegrator && self.verify.points == 0 {
            return bad("verify.points must be positive");
        }
        Ok(())
    }

    /// Grid points in a fixed order: delta outermost, then K, then friction.
    pub fn grid_points(&self) -> Vec<GridPoint> {
        let ks: Vec<Option<usize>> = if self.grid.k.is_empty() {
            vec![None]
        } else {
            self.grid.k.iter().map(|&k| Some(k)).collect()
        };
        let frictions: Vec<Friction> = self
            .grid
            .eta
            .iter()
            .map(|&e| Friction::Eta(e))
            .chain(self.grid.gamma.iter().map(|&g| Friction::Gamma(g)))
            .chain(self.grid.langevin_gamma.iter().map(|&g| Friction::LangevinGamma(g)))
            .collect();
        let mut out = Vec::new();
        for &delta in &self.grid.delta {
            for &k in &ks {
                for &friction in &frictions {
                    out.push(GridPoint { delta, k, friction });
                }
            }
        }
        out
    }

    pub fn build_model(&self) -> Result<PotentialModel> {
        Ok(self.model.build()?)
    }

    /// The model config with its dimension replaced by `d`.
    pub fn model_with_dim(&self, d: usize) -> Result<ModelConfig> {
        let mut cfg = self.model.clone();
        cfg.spec = match cfg.spec {
            ModelSpec::IsotropicGaussian { omega2, .. } => ModelSpec::IsotropicGaussian { dim: d, omega2 },
            ModelSpec::FreeFlight { .. } => ModelSpec::FreeFlight { dim: d },
            ModelSpec::DoubleWell { cap, .. } => ModelSpec::DoubleWell { dim: d, cap },
            ModelSpec::Quadratic {
                hessian_diag: Some(diag),
                hessian: None,
                lipschitz,
            } if !diag.is_empty() => ModelSpec::Quadratic {
                hessian_diag: Some((0..d).map(|i| diag[i % diag.len()]).collect()),
                hessian: None,
                lipschitz,
            },
            ModelSpec::MeanFieldCosine {
                q,
                epsilon,
                cos_amplitude,
                interaction_cos_amplitude,
                ..
            } if d % q == 0 => ModelSpec::MeanFieldCosine {
                d0: d / q,
                q,
                epsilon,
                cos_amplitude,
                interaction_cos_amplitude,
            },
            other => {
                return Err(CliError::Spec(format!(
                    "cannot resize model {other:?} to dimension {d}"
                )))
            }
        };
        Ok(cfg)
    }

    pub fn output_dir(&self) -> PathBuf {
        if let Some(d) = &self.output.dir {
            return d.clone();
        }
        let root = self
            .output
            .root
            .clone()
            .or_else(|| std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("ghmc-out"));
        root.join(&self.name)
    }
}
