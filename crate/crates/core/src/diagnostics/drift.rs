//! Monte Carlo check of the one-step drift `P W <= exp(-rho T) W + C T`.
//!
//! At every probe point `z`, `P W(z)` is estimated from `mc_samples`
//! independent kernel steps, with standard error `sd / sqrt(n)` and upper
//! confidence limit `mean + 1.96 SE`. The fit regresses the means on `W(z)`
//! by least squares, `mean ~ beta W + c`, and sets
//!
//! * `rho = -ln(beta) / T` (only when `0 < beta < 1`);
//! * `C = max(0, max_z (upper(z) - beta W(z))) / T`, the smallest offset
//!   putting every upper limit inside the envelope.
//!
//! The fit is certified when `0 < beta < 1` and every probe whose `W` lies
//! above the median has its upper limit strictly below `W(z)`: the
//! confinement must be visible at the outer probes, not only absorbed by the
//! offset. Certification is a statement about the probe grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DiagnosticsError, Result};
use crate::potentials::{lyapunov_w, PhasePoint, PotentialModel};
use crate::rng::GaussianSource;
use crate::sampler::{ghmc_step, GhmcParams};

/// Two-sided 95% normal quantile.
pub const CI_Z: f64 = 1.96;

/// Radii of the probe grid in units of `r0 = sqrt(1 + M/m)`.
pub const PROBE_RADII: [f64; 5] = [0.5, 1.0, 2.0, 3.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEstimate {
    pub point: PhasePoint,
    pub w: f64,
    pub mean: f64,
    pub se: f64,
    pub upper: f64,
    /// `exp(-rho T) W + C T` at the fitted constants (`NaN` if not certified).
    pub envelope: f64,
    /// `mean - (beta W + c)` of the least-squares fit.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftFit {
    pub certified: bool,
    pub reason: Option<String>,
    pub rho_hat: Option<f64>,
    pub c_hat: f64,
    pub beta: f64,
    pub intercept: f64,
    pub t_phys: f64,
    pub mc_samples: usize,
    /// Largest `1.96 SE` over probes.
    pub ci_half_width: f64,
    pub probes: Vec<ProbeEstimate>,
}

impl DriftFit {
    pub fn probe_points(&self) -> Vec<PhasePoint> {
        self.probes.iter().map(|p| p.point.clone()).collect()
    }
}

/// The deterministic probe grid: the origin, then for each radius
/// `r in PROBE_RADII * r0` and direction `(a, b)` in
/// `{(1, 0), (0, 1), (1, 1)/sqrt 2, (1, -1)/sqrt 2}` the point with every block
/// `x_i = r a u`, `v_i = r b u`, `u = (1, ..., 1)/sqrt(q)`. `r0 = sqrt(1 + M/m)`
/// from the model's drift constants (`r0 = 1` without them).
pub fn drift_probes(model: &PotentialModel) -> Vec<PhasePoint> {
    let (d0, q, _) = model.block_structure();
    let r0 = model
        .drift_constants()
        .filter(|c| c.m > 0.0)
        .map_or(1.0, |c| (1.0 + c.big_m / c.m).sqrt());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let dirs = [(1.0, 0.0), (0.0, 1.0), (s, s), (s, -s)];
    let u = 1.0 / (q as f64).sqrt();
    let d = d0 * q;
    let mut out = vec![PhasePoint::zeros(d)];
    for r in PROBE_RADII {
        for (a, b) in dirs {
            let x = vec![r * r0 * a * u; d];
            let v = vec![r * r0 * b * u; d];
            out.push(PhasePoint::from_slices(&x, &v));
        }
    }
    out
}

struct RawEstimate {
    w: f64,
    mean: f64,
    se: f64,
}

fn estimate(
    model: &PotentialModel,
    params: &GhmcParams,
    z: &PhasePoint,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<RawEstimate> {
    let (d0, q, _) = model.block_structure();
    let wz = lyapunov_w(z, d0, q).map_err(|e| DiagnosticsError::Invalid(e.to_string()))?;
    let mut rng = GaussianSource::new(seed, stream);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    // shifted sums around W(z) to limit cancellation
    for _ in 0..n {
        let next = ghmc_step(model, z, params, &mut rng)
            .map_err(|e| DiagnosticsError::Invalid(e.to_string()))?;
        let w = lyapunov_w(&next, d0, q).expect("dimension checked") - wz;
        sum += w;
        sum_sq += w * w;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(RawEstimate {
        w: wz,
        mean: wz + mean,
        se: (var / nf).sqrt(),
    })
}

/// Estimates `P W` at every probe (probe `i` uses stream `i` of `seed`) and
/// fits the drift envelope. An infeasible envelope is reported through
/// `certified = false`, not as an error.
pub fn drift_fit(
    model: &PotentialModel,
    params: &GhmcParams,
    probes: &[PhasePoint],
    mc_samples: usize,
    seed: u64,
) -> Result<DriftFit> {
    if probes.is_empty() {
        return Err(DiagnosticsError::TooFewPoints { need: 1, got: 0 });
    }
    if mc_samples < 1000 {
        return Err(DiagnosticsError::Invalid(format!(
            "mc_samples must be at least 1000, got {mc_samples}"
        )));
    }
    let raw: Vec<RawEstimate> = probes
        .par_iter()
        .enumerate()
        .map(|(i, z)| estimate(model, params, z, mc_samples, seed, i as u64))
        .collect::<Result<_>>()?;

    let n = raw.len() as f64;
    let mw = raw.iter().map(|r| r.w).sum::<f64>() / n;
    let mm = raw.iter().map(|r| r.mean).sum::<f64>() / n;
    let sww: f64 = raw.iter().map(|r| (r.w - mw).powi(2)).sum();
    let swm: f64 = raw.iter().map(|r| (r.w - mw) * (r.mean - mm)).sum();
    let (beta, intercept) = if sww > 0.0 {
        let b = swm / sww;
        (b, mm - b * mw)
    } else {
        (f64::NAN, mm)
    };
    let t = params.t_phys;

    let mut ws: Vec<f64> = raw.iter().map(|r| r.w).collect();
    ws.sort_by(f64::total_cmp);
    let median = ws[ws.len() / 2];

    let mut reason = None;
    if !(beta > 0.0 && beta < 1.0) {
        reason = Some(format!("fitted slope beta = {beta} is not in (0, 1)"));
    } else if let Some(r) = raw
        .iter()
        .find(|r| r.w > median && r.mean + CI_Z * r.se >= r.w)
    {
        reason = Some(format!(
            "no confinement at outer probe with W = {:.6e}: P W upper limit {:.6e}",
            r.w,
            r.mean + CI_Z * r.se
        ));
    }
    let certified = reason.is_none();
    let slope = if beta.is_finite() { beta } else { 1.0 };
    let excess = raw
        .iter()
        .map(|r| r.mean + CI_Z * r.se - slope * r.w)
        .fold(0.0, f64::max);
    let c_hat = excess / t;
    let rho_hat = certified.then(|| -beta.ln() / t);

    let probes_out = probes
        .iter()
        .zip(&raw)
        .map(|(p, r)| ProbeEstimate {
            point: p.clone(),
            w: r.w,
            mean: r.mean,
            se: r.se,
            upper: r.mean + CI_Z * r.se,
            envelope: if certified {
                beta * r.w + c_hat * t
            } else {
                f64::NAN
            },
            residual: r.mean - (slope * r.w + intercept),
        })
        .collect();
    Ok(DriftFit {
        certified,
        reason,
        rho_hat,
        c_hat,
        beta,
        intercept,
        t_phys: t,
        mc_samples,
        ci_half_width: raw.iter().map(|r| CI_Z * r.se).fold(0.0, f64::max),
        probes: probes_out,
    })
}
