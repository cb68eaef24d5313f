//! Column tables and artifact writers. The column tables double as the
//! generated data dictionary, so a column cannot be emitted undocumented.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ghmc_core::rng::{GaussianSource, RngMetadata};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::spec::{ExperimentKind, ExperimentSpec, SCHEMA_VERSION};
use crate::Result;

pub const SPEC_FILE: &str = "spec.resolved.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPORT_FILE: &str = "report.json";
pub const DICTIONARY_FILE: &str = "data_dictionary.json";

/// Cell seeds are `seed + cell * CELL_SEED_STRIDE` (wrapping).
pub const CELL_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn cell_seed(seed: u64, cell: usize) -> u64 {
    seed.wrapping_add((cell as u64).wrapping_mul(CELL_SEED_STRIDE))
}

pub type Column = (&'static str, &'static str);

const COMMON: &[Column] = &[
    ("cell", "grid cell index, in grid order"),
    ("status", "ok or error"),
    ("error", "error message of a failed cell (empty when ok)"),
    ("dim", "position dimension d"),
    ("k", "Verlet steps per iteration K"),
    ("delta", "step size"),
    ("eta", "velocity refreshment parameter"),
    ("t_phys", "physical trajectory time T = delta K sqrt(L)"),
    ("gamma", "effective friction (1 - eta) / T"),
    ("friction_mode", "how eta was given: eta, gamma (eta = 1 - gamma T) or langevin_gamma (eta = exp(-delta gamma))"),
    ("friction_value", "the value given for friction_mode"),
    ("seed", "cell RNG seed"),
];

const WALLCLOCK: Column = ("wallclock_s", "cell runtime in seconds (the only nondeterministic column)");

const STEPSIZE: &[Column] = &[
    ("kl", "relative entropy of the stationary law to the target on phase space"),
    ("kl_x", "relative entropy of the stationary x-marginal to the target x-marginal"),
    ("cov_error", "spectral norm of stationary covariance minus target covariance"),
    ("spectral_radius", "spectral radius of the one-iteration linear map"),
    ("stationary_var_x0", "stationary variance of the first position coordinate"),
];

const DIM_SCAN: &[Column] = &[
    ("base_delta", "grid step size before dimension scaling"),
    ("kl", "relative entropy of the stationary law to the target on phase space"),
    ("kl_x", "relative entropy of the stationary x-marginal to the target x-marginal"),
    ("cov_error", "spectral norm of stationary covariance minus target covariance"),
    ("kl_ratio", "kl divided by kl of the reference dimension at the same grid point"),
];

const BOUND_CHECK: &[Column] = &[
    ("c_ls", "log-Sobolev constant used"),
    ("a", "constant a of the simple entropy bound"),
    ("kappa", "contraction rate kappa of the simple bound"),
    ("m_big", "constant M of the simple bound"),
    ("a_tilde", "modified-entropy weight used for the refined constants"),
    ("lambda", "smallest eigenvalue of the m-coefficient matrix"),
    ("kappa_tilde", "refined contraction rate (empty when not certified)"),
    ("rho", "drift rate used in the bound (taken equal to kappa)"),
    ("c1", "transient moment constant: smallest C1 with E_n M <= C1 theta^(nT) W0 + C2"),
    ("c2", "stationary expectation of the error weight M"),
    ("w0", "initial expectation of the Lyapunov function W (Monte Carlo)"),
    ("h0", "initial relative entropy"),
    ("i0", "initial Fisher information"),
    ("steps", "number of exact propagation steps"),
    ("violations", "steps where the exact relative entropy exceeds the bound"),
    ("max_kl_over_bound", "largest ratio of exact relative entropy to bound"),
    ("kl_final", "exact relative entropy after the last step"),
    ("bound_final", "bound after the last step"),
    ("kl_stationary", "relative entropy of the stationary law"),
    ("bias_floor", "delta^4 M C2 (1/kappa + T), the bound's limit"),
];

const VERIFY: &[Column] = &[
    ("points", "number of random phase points"),
    ("max_reversibility", "largest |R Phi R Phi(z) - z|"),
    ("max_det_dev", "largest |det D Phi^K(z) - 1| (finite differences)"),
    ("max_energy_drift", "largest |H(Phi^K z) - H(z)|"),
    ("psi_checked", "whether the Jacobian bound applies (L <= 1, T <= 1/10)"),
    ("psi_bound", "1 + T + T^2/2 + T^3/3"),
    ("max_psi_norm", "largest operator norm of Psi"),
    ("psi_violations", "points with |Psi| above bound plus slack"),
    ("defect_checked", "whether the energy and flow defect bounds apply (L <= 1, bounds declared)"),
    ("max_energy_defect_ratio", "largest |grad box H|^2 over its bound"),
    ("energy_defect_violations", "points where |grad box H|^2 exceeds its bound"),
    ("max_flow_defect_ratio", "largest squared flow defect at s = delta over its bound"),
    ("flow_defect_violations", "points where the squared flow defect exceeds its bound"),
];

const DRIFT: &[Column] = &[
    ("mc_samples", "kernel draws per probe"),
    ("probes", "number of probe points"),
    ("certified", "whether the drift envelope was certified"),
    ("rho_hat", "fitted drift rate -ln(beta)/T (empty when not certified)"),
    ("c_hat", "fitted drift offset"),
    ("beta", "least-squares slope of P W on W"),
    ("ci_half_width", "largest 1.96 SE over probes"),
];

const SAMPLE: &[Column] = &[
    ("chains", "number of chains"),
    ("n_iters", "iterations per chain"),
    ("failed_chains", "chains stopped by an integrator error or divergence"),
    ("records", "recorded iterates over all chains"),
    ("mean_h", "mean Hamiltonian over recorded iterates"),
    ("mean_w", "mean Lyapunov function W over recorded iterates"),
    ("mean_x0", "mean of the first position coordinate"),
    ("var_x0", "variance of the first position coordinate"),
    ("second_moment_x", "mean of |x|^2 / d"),
    ("second_moment_v", "mean of |v|^2 / d"),
    ("exact_second_moment_x", "stationary |x|^2 / d of the exact law (quadratic targets only)"),
];

pub fn summary_columns(kind: ExperimentKind) -> Vec<Column> {
    let specific = match kind {
        ExperimentKind::StepsizeScan => STEPSIZE,
        ExperimentKind::DimScan => DIM_SCAN,
        ExperimentKind::BoundCheck => BOUND_CHECK,
        ExperimentKind::VerifyIntegrator => VERIFY,
        ExperimentKind::DriftCheck => DRIFT,
        ExperimentKind::Sample => SAMPLE,
    };
    COMMON.iter().chain(specific).chain([&WALLCLOCK]).copied().collect()
}

pub fn record_fields(kind: ExperimentKind) -> Vec<Column> {
    let mut v: Vec<Column> = vec![("cell", "grid cell index")];
    v.extend_from_slice(match kind {
        ExperimentKind::StepsizeScan | ExperimentKind::DimScan => &[
            ("stationary_mean", "mean of the stationary law, (x, v) stacked"),
            ("stationary_cov", "covariance of the stationary law, by rows"),
        ],
        ExperimentKind::BoundCheck => &[
            ("n", "iteration"),
            ("kl", "exact relative entropy of the n-th law to the target"),
            ("bound", "entropy bound after n iterations"),
            ("modified_entropy", "modified entropy with weight a"),
            ("expected_m", "exact expectation of the error weight M"),
        ],
        ExperimentKind::VerifyIntegrator => &[
            ("point", "phase point index"),
            ("reversibility", "|R Phi R Phi(z) - z|"),
            ("det_dev", "|det D Phi^K(z) - 1|"),
            ("energy_drift", "|H(Phi^K z) - H(z)|"),
            ("psi_norm", "operator norm of Psi (null when not checked)"),
            ("energy_defect_ratio", "|grad box H|^2 over its bound (null when not checked)"),
            ("flow_defect_ratio", "squared flow defect over its bound (null when not checked)"),
        ],
        ExperimentKind::DriftCheck => &[
            ("probe", "probe index"),
            ("x", "probe position"),
            ("v", "probe velocity"),
            ("w", "W at the probe"),
            ("mean", "Monte Carlo mean of W after one iteration"),
            ("se", "its standard error"),
            ("upper", "mean + 1.96 se"),
            ("envelope", "exp(-rho T) W + C T at the fitted constants"),
        ],
        ExperimentKind::Sample => &[
            ("chain_id", "chain index within the cell (also the RNG stream)"),
            ("iter", "iteration (0 is the initial state)"),
            ("x", "position"),
            ("v", "velocity"),
            ("H", "Hamiltonian U(x) + |v|^2/2"),
            ("W", "Lyapunov function"),
            ("wallclock", "seconds since chain start (nondeterministic)"),
        ],
    });
    v
}

fn columns_object(cols: &[Column]) -> Value {
    Value::Object(
        cols.iter()
            .map(|(k, d)| (k.to_string(), Value::String(d.to_string())))
            .collect(),
    )
}

pub fn data_dictionary(kind: ExperimentKind) -> Value {
    json!({
        "schema": SCHEMA_VERSION,
        "kind": kind.as_str(),
        "summary.csv": columns_object(&summary_columns(kind)),
        "records.jsonl": columns_object(&record_fields(kind)),
        "report.json": {
            "cells": "per-cell parameters, summary values, details and assertions",
            "aggregate": "cross-cell fits (slopes, ratios)",
            "assertions": "hard checks; the run fails iff one fails or a cell errors",
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub schema: u32,
    pub kind: ExperimentKind,
    pub code_version: String,
    pub rng: RngMetadata,
    pub cell_seed_rule: String,
    pub spec: ExperimentSpec,
}

impl Header {
    pub fn new(spec: &ExperimentSpec) -> Self {
        Header {
            schema: SCHEMA_VERSION,
            kind: spec.kind,
            code_version: format!("ghmc {}", ghmc_core::VERSION),
            rng: GaussianSource::new(spec.seed, 0).metadata(),
            cell_seed_rule: format!("seed + cell * {CELL_SEED_STRIDE:#x} (wrapping), stream = chain or probe index"),
            spec: spec.clone(),
        }
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_records(path: &Path, header: &Header, rows: &[Value]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &json!({ "header": header }))?;
    w.write_all(b"\n")?;
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn csv_field(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

pub fn write_summary(path: &Path, header: &Header, columns: &[Column], rows: &[Map<String, Value>]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(b"# ")?;
    serde_json::to_writer(&mut file, header)?;
    file.write_all(b"\n")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(columns.iter().map(|c| c.0))?;
    for row in rows {
        w.write_record(columns.iter().map(|c| csv_field(row.get(c.0))))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn columns_are_unique() {
        for kind in [
            ExperimentKind::StepsizeScan,
            ExperimentKind::DimScan,
            ExperimentKind::BoundCheck,
            ExperimentKind::VerifyIntegrator,
            ExperimentKind::DriftCheck,
            ExperimentKind::Sample,
        ] {
            let cols = summary_columns(kind);
            let names: HashSet<_> = cols.iter().map(|c| c.0).collect();
            assert_eq!(names.len(), cols.len(), "{kind:?}");
            assert_eq!(cols.last().unwrap().0, "wallclock_s");
        }
    }

    #[test]
    fn cell_seeds_differ() {
        assert_eq!(cell_seed(5, 0), 5);
        assert_ne!(cell_seed(5, 1), cell_seed(5, 2));
        assert_eq!(cell_seed(u64::MAX, 1), u64::MAX.wrapping_add(CELL_SEED_STRIDE));
    }

    #[test]
    fn csv_fields() {
        assert_eq!(csv_field(None), "");
        assert_eq!(csv_field(Some(&Value::Null)), "");
        assert_eq!(csv_field(Some(&json!("ok"))), "ok");
        assert_eq!(csv_field(Some(&json!(0.1))), "0.1");
        assert_eq!(csv_field(Some(&json!(true))), "true");
    }
}
