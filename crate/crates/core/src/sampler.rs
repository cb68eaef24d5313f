//! The gHMC kernel `P = D_eta V_delta^K`: partial velocity refreshment
//! `v <- eta v + sqrt(1 - eta^2) g` followed by `K` leapfrog steps, with no
//! accept/reject. Chains are reproducible from `(seed, chain_id)`; see
//! [`crate::rng`] for the stream layout.
//!
//! Each iteration consumes exactly `d` standard normals, whether or not it
//! is recorded, so recording cadence never changes the draws.

use std::io::{self, Write};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::MomentAccumulator;
use crate::integrator::{self, IntegratorError};
use crate::linalg::{Matrix, Vector};
use crate::potentials::{lyapunov_w, PhasePoint, PotentialModel};
use crate::rng::{GaussianSource, RngMetadata};

/// Chains abort once `|x|` or `|v|` exceeds this.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid chain config: {0}")]
    InvalidConfig(String),
    #[error("iteration {iter}: {source}")]
    Integrator {
        iter: usize,
        source: IntegratorError,
        last_valid: Box<PhasePoint>,
    },
    #[error("diverged at iteration {iter} (|x| or |v| above {DIVERGENCE_THRESHOLD:e})")]
    Diverged {
        iter: usize,
        last_valid: Box<PhasePoint>,
    },
    #[error("record sink failed: {0}")]
    Sink(String),
}

pub type Result<T, E = SamplerError> = std::result::Result<T, E>;

/// `omega = (K, delta, eta)` with `T = delta K sqrt(L)` and `gamma = (1 - eta) / T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhmcParams {
    pub k: usize,
    pub delta: f64,
    pub eta: f64,
    pub lipschitz: f64,
    pub t_phys: f64,
    pub gamma: f64,
}

impl GhmcParams {
    /// Recomputes `T` and `gamma` from `(K, delta, eta, L)`.
    pub fn is_consistent(&self) -> bool {
        derive_params(self.k, self.delta, self.eta, self.lipschitz)
            .map(|p| p == *self)
            .unwrap_or(false)
    }

    /// Parameters with `gamma` fixed: `eta = 1 - gamma T`, rejected outside `[0, 1)`.
    pub fn from_gamma(k: usize, delta: f64, gamma: f64, lipschitz: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(SamplerError::InvalidParams(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        let t = delta * k as f64 * lipschitz.sqrt();
        let eta = 1.0 - gamma * t;
        if !(0.0..1.0).contains(&eta) {
            return Err(SamplerError::InvalidParams(format!(
                "gamma = {gamma} with T = {t} gives eta = {eta}, outside [0, 1)"
            )));
        }
        derive_params(k, delta, eta, lipschitz)
    }
}

pub fn derive_params(k: usize, delta: f64, eta: f64, lipschitz: f64) -> Result<GhmcParams> {
    if k == 0 {
        return Err(SamplerError::InvalidParams("K must be at least 1".into()));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(SamplerError::InvalidParams(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(SamplerError::InvalidParams(format!(
            "eta must lie in [0, 1), got {eta}"
        )));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(SamplerError::InvalidParams(format!(
            "L must be positive, got {lipschitz}"
        )));
    }
    let t_phys = delta * k as f64 * lipschitz.sqrt();
    Ok(GhmcParams {
        k,
        delta,
        eta,
        lipschitz,
        t_phys,
        gamma: (1.0 - eta) / t_phys,
    })
}

/// `exp(-delta gamma)`, the refreshment with the kinetic Langevin limit.
pub fn eta_for_langevin(delta: f64, gamma: f64) -> f64 {
    (-delta * gamma).exp()
}

/// `eta v + sqrt(1 - eta^2) g` for a given `g`.
pub fn refresh_with(v: &Vector, eta: f64, g: &Vector) -> Vector {
    v * eta + g * (1.0 - eta * eta).sqrt()
}

/// `eta v + sqrt(1 - eta^2) g` with `g` drawn from `rng`.
pub fn refresh(v: &Vector, eta: f64, rng: &mut GaussianSource) -> Vector {
    let g = rng.normal_vector(v.len());
    refresh_with(v, eta, &g)
}

/// One kernel step with an explicit refreshment noise `g`.
pub fn ghmc_step_with_noise(
    model: &PotentialModel,
    z: &PhasePoint,
    params: &GhmcParams,
    g: &Vector,
) -> Result<PhasePoint> {
    let mut x = z.x.clone();
    let mut v = refresh_with(&z.v, params.eta, g);
    integrator::leapfrog_in_place(model, &mut x, &mut v, params.delta, params.k, 0).map_err(
        |source| SamplerError::Integrator {
            iter: 0,
            source,
            last_valid: Box::new(z.clone()),
        },
    )?;
    Ok(PhasePoint { x, v })
}

/// One kernel step drawing `d` normals from `rng`.
pub fn ghmc_step(
    model: &PotentialModel,
    z: &PhasePoint,
    params: &GhmcParams,
    rng: &mut GaussianSource,
) -> Result<PhasePoint> {
    let g = rng.normal_vector(z.dim());
    ghmc_step_with_noise(model, z, params, &g)
}

/// Initial law of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitLaw {
    PointMass { x: Vec<f64>, v: Vec<f64> },
    /// `x` fixed, `v ~ N(0, I)`.
    StandardVelocity { x: Vec<f64> },
    /// Gaussian on phase space; `cov` is given by rows, `2d x 2d`.
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
}

impl InitLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitLaw::PointMass { x, .. } | InitLaw::StandardVelocity { x } => x.len(),
            InitLaw::Gaussian { mean, .. } => mean.len() / 2,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: String| Err(SamplerError::InvalidConfig(m));
        match self {
            InitLaw::PointMass { x, v } if x.len() != d || v.len() != d => {
                bad(format!("point mass must have x, v of length {d}"))
            }
            InitLaw::StandardVelocity { x } if x.len() != d => {
                bad(format!("initial x must have length {d}"))
            }
            InitLaw::Gaussian { mean, cov }
                if mean.len() != 2 * d || cov.len() != 2 * d || cov.iter().any(|r| r.len() != 2 * d) =>
            {
                bad(format!("gaussian initial law must have mean of length {} and a square covariance", 2 * d))
            }
            _ => Ok(()),
        }
    }

    /// Draws the initial state; point masses consume no randomness, the
    /// standard-velocity law consumes `d` normals and the Gaussian `2d`.
    pub fn sample(&self, rng: &mut GaussianSource) -> Result<PhasePoint> {
        match self {
            InitLaw::PointMass { x, v } => Ok(PhasePoint::from_slices(x, v)),
            InitLaw::StandardVelocity { x } => Ok(PhasePoint {
                x: Vector::from_column_slice(x),
                v: rng.normal_vector(x.len()),
            }),
            InitLaw::Gaussian { mean, cov } => {
                let n = mean.len();
                let c = Matrix::from_fn(n, n, |i, j| cov[i][j]);
                let chol = c.cholesky().ok_or_else(|| {
                    SamplerError::InvalidConfig("initial covariance is not positive definite".into())
                })?;
                let g = rng.normal_vector(n);
                let z = Vector::from_column_slice(mean) + chol.l() * g;
                Ok(PhasePoint::from_vector(&z))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub params: GhmcParams,
    pub n_iters: usize,
    pub seed: u64,
    #[serde(default)]
    pub chain_id: u64,
    pub init: InitLaw,
    #[serde(default = "one")]
    pub record_every: usize,
    /// Iterations before this index are neither recorded nor accumulated.
    #[serde(default)]
    pub burn_in: usize,
}

fn one() -> usize {
    1
}

/// One recorded iterate. `wallclock` (seconds since chain start) is the
/// only nondeterministic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub chain_id: u64,
    pub iter: usize,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "W")]
    pub w: f64,
    pub wallclock: f64,
}

impl ChainRecord {
    pub fn point(&self) -> PhasePoint {
        PhasePoint::from_slices(&self.x, &self.v)
    }
}

pub trait ChainSink {
    fn record(&mut self, rec: &ChainRecord) -> io::Result<()>;
}

/// Discards records.
#[derive(Debug, Default)]
pub struct NullSink;

impl ChainSink for NullSink {
    fn record(&mut self, _rec: &ChainRecord) -> io::Result<()> {
        Ok(())
    }
}

/// Keeps records in memory.
#[derive(Debug, Default)]
pub struct VecSink(pub Vec<ChainRecord>);

impl ChainSink for VecSink {
    fn record(&mut self, rec: &ChainRecord) -> io::Result<()> {
        self.0.push(rec.clone());
        Ok(())
    }
}

/// Writes one JSON object per record.
#[derive(Debug)]
pub struct JsonlSink<W: Write>(pub W);

impl<W: Write> ChainSink for JsonlSink<W> {
    fn record(&mut self, rec: &ChainRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.0, rec)?;
        self.0.write_all(b"\n")
    }
}

/// Hashes every deterministic field (all but `wallclock`) bit for bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigestSink {
    state: u64,
    pub count: u64,
}

impl DigestSink {
    // FNV-1a, 64 bit
    fn feed(&mut self, word: u64) {
        for b in word.to_le_bytes() {
            self.state ^= b as u64;
            self.state = self.state.wrapping_mul(0x100_0000_01b3);
        }
    }

    pub fn new() -> Self {
        DigestSink {
            state: 0xcbf2_9ce4_8422_2325,
            count: 0,
        }
    }

    pub fn digest(&self) -> u64 {
        self.state
    }
}

impl Default for DigestSink {
    fn default() -> Self {
        Self::new()
    }
}

impl ChainSink for DigestSink {
    fn record(&mut self, rec: &ChainRecord) -> io::Result<()> {
        self.feed(rec.chain_id);
        self.feed(rec.iter as u64);
        for c in rec.x.iter().chain(&rec.v) {
            self.feed(c.to_bits());
        }
        self.feed(rec.h.to_bits());
        self.feed(rec.w.to_bits());
        self.count += 1;
        Ok(())
    }
}

/// A JSONL writer shared by concurrently running chains; each record is
/// written atomically and carries its chain id.
#[derive(Debug)]
pub struct SharedJsonlSink<W: Write + Send>(Mutex<W>);

impl<W: Write + Send> SharedJsonlSink<W> {
    pub fn new(w: W) -> Self {
        SharedJsonlSink(Mutex::new(w))
    }

    pub fn into_inner(self) -> W {
        self.0.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

impl<W: Write + Send> ChainSink for &SharedJsonlSink<W> {
    fn record(&mut self, rec: &ChainRecord) -> io::Result<()> {
        let mut line = serde_json::to_vec(rec)?;
        line.push(b'\n');
        let mut w = self.0.lock().unwrap_or_else(|e| e.into_inner());
        w.write_all(&line)
    }
}

/// Result of a completed chain. Moments are over the recorded iterates,
/// stacked as `(x, v)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain_id: u64,
    pub iterations: usize,
    pub records: usize,
    pub final_state: PhasePoint,
    pub moments: MomentAccumulator,
    pub rng: RngMetadata,
}

fn diverged(z: &PhasePoint) -> bool {
    !(z.x.norm() <= DIVERGENCE_THRESHOLD && z.v.norm() <= DIVERGENCE_THRESHOLD)
}

/// Runs one chain, sending records to `sink` every `record_every`
/// iterations from `burn_in` on (iteration 0 is the initial state).
pub fn run_chain<S: ChainSink>(
    model: &PotentialModel,
    config: &ChainConfig,
    sink: &mut S,
) -> Result<ChainSummary> {
    let d = model.dim();
    config.init.validate(d)?;
    if config.record_every == 0 {
        return Err(SamplerError::InvalidConfig("record_every must be positive".into()));
    }
    let params = &config.params;
    if !params.is_consistent() {
        return Err(SamplerError::InvalidParams(
            "derived fields do not match (K, delta, eta, L)".into(),
        ));
    }
    let start = Instant::now();
    let mut rng = GaussianSource::new(config.seed, config.chain_id);
    let mut z = config.init.sample(&mut rng)?;
    let mut moments = MomentAccumulator::new(2 * d);
    let mut records = 0;
    let mut g = Vector::zeros(d);
    let (d0, q, _) = model.block_structure();

    let mut emit = |iter: usize, z: &PhasePoint, moments: &mut MomentAccumulator| -> Result<()> {
        if iter < config.burn_in || iter % config.record_every != 0 {
            return Ok(());
        }
        let rec = ChainRecord {
            chain_id: config.chain_id,
            iter,
            x: z.x.as_slice().to_vec(),
            v: z.v.as_slice().to_vec(),
            h: integrator::hamiltonian(model, z),
            w: lyapunov_w(z, d0, q).expect("dimension checked"),
            wallclock: start.elapsed().as_secs_f64(),
        };
        sink.record(&rec).map_err(|e| SamplerError::Sink(e.to_string()))?;
        moments.push_parts(z.x.as_slice(), z.v.as_slice());
        records += 1;
        Ok(())
    };

    emit(0, &z, &mut moments)?;
    let mut x = z.x.clone();
    let mut v = z.v.clone();
    let rho = (1.0 - params.eta * params.eta).sqrt();
    for iter in 1..=config.n_iters {
        rng.fill_normal(g.as_mut_slice());
        v *= params.eta;
        v.axpy(rho, &g, 1.0);
        if let Err(source) =
            integrator::leapfrog_in_place(model, &mut x, &mut v, params.delta, params.k, 0)
        {
            return Err(SamplerError::Integrator {
                iter,
                source,
                last_valid: Box::new(z),
            });
        }
        let next = PhasePoint {
            x: x.clone(),
            v: v.clone(),
        };
        if diverged(&next) {
            return Err(SamplerError::Diverged {
                iter,
                last_valid: Box::new(z),
            });
        }
        z = next;
        emit(iter, &z, &mut moments)?;
    }
    Ok(ChainSummary {
        chain_id: config.chain_id,
        iterations: config.n_iters,
        records,
        final_state: z,
        moments,
        rng: rng.metadata(),
    })
}

/// Runs independent chains in parallel, keeping records in memory. Results
/// come back in the order of `configs`.
pub fn run_chains(
    model: &PotentialModel,
    configs: &[ChainConfig],
) -> Vec<Result<(ChainSummary, Vec<ChainRecord>)>> {
    configs
        .par_iter()
        .map(|cfg| {
            let mut sink = VecSink::default();
            run_chain(model, cfg, &mut sink).map(|s| (s, sink.0))
        })
        .collect()
}
