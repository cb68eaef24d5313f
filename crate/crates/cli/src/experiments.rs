//! Experiment orchestration: grid expansion, parallel cell evaluation with
//! per-cell error capture, cross-cell aggregation and artifact output.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use ghmc_core::bounds::{
    best_a_tilde, bounds_report, complexity_plan, constants_simple, entropy_bound_curve, theta_rate,
    BoundInputs, Prefactors,
};
use ghmc_core::diagnostics::{drift_fit, drift_probes, scaling_slope, MomentAccumulator};
use ghmc_core::gaussian_exact::{
    cov_error, fisher_gaussian, kl_gaussian, modified_entropy, propagate, stationary_law,
    step_transition, target_law, GaussianLaw,
};
use ghmc_core::integrator::{
    flow_defect, flow_defect_bound_sq, flow_jacobian_det, grad_box_h, grad_box_h_bound, hamiltonian,
    psi_bound, psi_matrix, reversibility_error, verlet_flow,
};
use ghmc_core::linalg::{operator_norm, Matrix, Vector};
use ghmc_core::potentials::{lyapunov_w, PhasePoint, PotentialModel};
use ghmc_core::rng::GaussianSource;
use ghmc_core::sampler::{run_chains, ChainConfig, GhmcParams, InitLaw};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::artifacts::{self, cell_seed, Header};
use crate::spec::{ExperimentKind, ExperimentSpec, GridPoint};
use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Assertion {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub cells: usize,
    pub failed_cells: usize,
    pub failed_assertions: Vec<String>,
    pub report: Value,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.failed_cells == 0 && self.failed_assertions.is_empty()
    }
}

struct CellInput {
    index: usize,
    group: usize,
    point: GridPoint,
    dim: Option<usize>,
}

#[derive(Default)]
struct CellOutput {
    values: Map<String, Value>,
    records: Vec<Value>,
    details: Value,
    assertions: Vec<Assertion>,
}

struct CellResult {
    index: usize,
    group: usize,
    values: Map<String, Value>,
    output: std::result::Result<CellOutput, String>,
    wallclock: f64,
}

impl CellResult {
    fn ok(&self) -> Option<&CellOutput> {
        self.output.as_ref().ok()
    }

    fn num(&self, key: &str) -> Option<f64> {
        self.ok()?.values.get(key).or_else(|| self.values.get(key))?.as_f64()
    }
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn put(map: &mut Map<String, Value>, key: &str, value: impl Serialize) {
    map.insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
}

fn cell_inputs(spec: &ExperimentSpec) -> Vec<CellInput> {
    let points = spec.grid_points();
    let mut out = Vec::new();
    if spec.kind == ExperimentKind::DimScan {
        for (group, p) in points.iter().enumerate() {
            for &d in &spec.scan.dims {
                out.push(CellInput {
                    index: out.len(),
                    group,
                    point: p.clone(),
                    dim: Some(d),
                });
            }
        }
    } else {
        for (group, p) in points.into_iter().enumerate() {
            out.push(CellInput {
                index: out.len(),
                group,
                point: p,
                dim: None,
            });
        }
    }
    out
}

/// Runs the experiment and writes its artifacts. Cell failures and failed
/// assertions are reported in the outcome, not as errors; errors are
/// reserved for an invalid spec or unwritable output.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutcome> {
    spec.validate()?;
    let model = spec.build_model()?;
    let inputs = cell_inputs(spec);
    let mut results: Vec<CellResult> = inputs.par_iter().map(|c| run_cell(spec, &model, c)).collect();
    let (aggregate, mut assertions) = aggregate(spec, &mut results);

    let header = Header::new(spec);
    let dir = spec.output_dir();
    std::fs::create_dir_all(&dir)?;

    let mut cells_json = Vec::new();
    let mut summary = Vec::new();
    let mut records = Vec::new();
    let mut failed_cells = 0;
    for r in &results {
        let mut row = r.values.clone();
        let mut cell = json!({ "index": r.index, "group": r.group });
        match &r.output {
            Ok(out) => {
                row.insert("status".into(), "ok".into());
                row.extend(out.values.clone());
                cell["status"] = "ok".into();
                cell["values"] = Value::Object(row.clone());
                cell["details"] = out.details.clone();
                cell["assertions"] = serde_json::to_value(&out.assertions)?;
                records.extend(out.records.iter().cloned());
                for a in &out.assertions {
                    assertions.push(Assertion::new(format!("cell {}: {}", r.index, a.name), a.passed, a.detail.clone()));
                }
            }
            Err(e) => {
                failed_cells += 1;
                row.insert("status".into(), "error".into());
                row.insert("error".into(), e.clone().into());
                cell["status"] = "error".into();
                cell["error"] = e.clone().into();
                cell["values"] = Value::Object(row.clone());
            }
        }
        row.insert("wallclock_s".into(), r.wallclock.into());
        summary.push(row);
        cells_json.push(cell);
    }

    let failed_assertions: Vec<String> = assertions
        .iter()
        .filter(|a| !a.passed)
        .map(|a| format!("{}: {}", a.name, a.detail))
        .collect();
    let report = json!({
        "header": header,
        "passed": failed_cells == 0 && failed_assertions.is_empty(),
        "failed_cells": failed_cells,
        "cells": cells_json,
        "aggregate": aggregate,
        "assertions": assertions,
    });

    artifacts::write_json(&dir.join(artifacts::SPEC_FILE), &json!({
        "schema": header.schema,
        "code_version": header.code_version,
        "rng": header.rng,
        "cell_seed_rule": header.cell_seed_rule,
        "spec": spec,
    }))?;
    artifacts::write_records(&dir.join(artifacts::RECORDS_FILE), &header, &records)?;
    artifacts::write_summary(
        &dir.join(artifacts::SUMMARY_FILE),
        &header,
        &artifacts::summary_columns(spec.kind),
        &summary,
    )?;
    artifacts::write_json(&dir.join(artifacts::REPORT_FILE), &report)?;
    artifacts::write_json(&dir.join(artifacts::DICTIONARY_FILE), &artifacts::data_dictionary(spec.kind))?;

    Ok(RunOutcome {
        dir,
        cells: results.len(),
        failed_cells,
        failed_assertions,
        report,
    })
}

fn run_cell(spec: &ExperimentSpec, base: &PotentialModel, input: &CellInput) -> CellResult {
    let start = Instant::now();
    let seed = cell_seed(spec.seed, input.index);
    let mut values = Map::new();
    put(&mut values, "cell", input.index);
    put(&mut values, "seed", seed);
    put(&mut values, "friction_mode", input.point.friction.mode());
    put(&mut values, "friction_value", input.point.friction.value());
    let output = evaluate_cell(spec, base, input, seed, &mut values).map_err(|e| e.to_string());
    CellResult {
        index: input.index,
        group: input.group,
        values,
        output,
        wallclock: start.elapsed().as_secs_f64(),
    }
}

fn evaluate_cell(
    spec: &ExperimentSpec,
    base: &PotentialModel,
    input: &CellInput,
    seed: u64,
    values: &mut Map<String, Value>,
) -> Result<CellOutput> {
    let resized;
    let model = match input.dim {
        Some(d) => {
            resized = spec.model_with_dim(d)?.build()?;
            &resized
        }
        None => base,
    };
    let mut point = input.point.clone();
    if let Some(d) = input.dim {
        let d_ref = spec.scan.reference_dim.unwrap_or(spec.scan.dims[0]);
        point.delta *= (d as f64 / d_ref as f64).powf(-spec.scan.regime.exponent());
    }
    put(values, "dim", model.dim());
    put(values, "delta", point.delta);
    let params = point.resolve(model.lipschitz(), spec.grid.fix_t)?;
    put(values, "k", params.k);
    put(values, "eta", params.eta);
    put(values, "t_phys", params.t_phys);
    put(values, "gamma", params.gamma);

    let mut out = match spec.kind {
        ExperimentKind::StepsizeScan => exact_cell(model, &params, input.index)?,
        ExperimentKind::DimScan => {
            let mut out = exact_cell(model, &params, input.index)?;
            put(&mut out.values, "base_delta", input.point.delta);
            out
        }
        ExperimentKind::BoundCheck => bound_cell(spec, model, &params, input.index, seed)?,
        ExperimentKind::VerifyIntegrator => verify_cell(spec, model, &params, input.index, seed)?,
        ExperimentKind::DriftCheck => drift_cell(spec, model, &params, input.index, seed)?,
        ExperimentKind::Sample => sample_cell(spec, model, &params, input.index, seed)?,
    };
    if out.details.is_null() {
        out.details = json!({});
    }
    Ok(out)
}

fn exact_cell(model: &PotentialModel, params: &GhmcParams, cell: usize) -> Result<CellOutput> {
    let kernel = step_transition(model, params)?;
    let st = stationary_law(&kernel)?;
    let target = target_law(model)?;
    let mut out = CellOutput::default();
    put(&mut out.values, "kl", kl_gaussian(&st, &target)?);
    put(&mut out.values, "kl_x", kl_gaussian(&st.x_marginal(), &target.x_marginal())?);
    put(&mut out.values, "cov_error", cov_error(&st, &target));
    put(&mut out.values, "spectral_radius", kernel.spectral_radius());
    put(&mut out.values, "stationary_var_x0", st.cov[(0, 0)]);
    out.records.push(json!({
        "cell": cell,
        "stationary_mean": st.mean.as_slice(),
        "stationary_cov": rows(&st.cov),
    }));
    Ok(out)
}

/// `E |v|^2 + E |Q x|^2`, the error weight of a quadratic target at `L = 1`
/// (its third and fourth derivatives vanish).
fn expected_error_weight(law: &GaussianLaw, q: &Matrix) -> f64 {
    let d = q.nrows();
    let mx = law.mean.rows(0, d);
    let mv = law.mean.rows(d, d);
    let sxx = law.cov.view((0, 0), (d, d));
    let svv = law.cov.view((d, d), (d, d));
    svv.trace() + mv.norm_squared() + (q * sxx * q).trace() + (q * mx).norm_squared()
}

fn sample_law(law: &GaussianLaw, rng: &mut GaussianSource) -> Result<PhasePoint> {
    let chol = law
        .cov
        .clone()
        .cholesky()
        .ok_or_else(|| CliError::Spec("initial covariance is not positive definite".into()))?;
    let g = rng.normal_vector(law.mean.len());
    Ok(PhasePoint::from_vector(&(&law.mean + chol.l() * g)))
}

fn initial_law(spec: &ExperimentSpec, d: usize) -> Result<GaussianLaw> {
    match &spec.chain.init {
        Some(InitLaw::Gaussian { mean, cov }) => {
            if mean.len() != 2 * d {
                return Err(CliError::Spec(format!("initial mean must have length {}", 2 * d)));
            }
            let c = Matrix::from_fn(2 * d, 2 * d, |i, j| cov[i][j]);
            Ok(GaussianLaw::new(Vector::from_column_slice(mean), c)?)
        }
        Some(_) => Err(CliError::Spec(
            "bound_check needs a Gaussian chain.init (or none, for the displaced default)".into(),
        )),
        None => {
            let mean = Vector::from_fn(2 * d, |i, _| if i < d { spec.bounds.init_shift } else { 0.0 });
            Ok(GaussianLaw::new(mean, Matrix::identity(2 * d, 2 * d))?)
        }
    }
}

fn bound_cell(
    spec: &ExperimentSpec,
    model: &PotentialModel,
    params: &GhmcParams,
    cell: usize,
    seed: u64,
) -> Result<CellOutput> {
    let settings = &spec.bounds;
    if (model.lipschitz() - 1.0).abs() > 1e-9 {
        return Err(CliError::Spec(format!(
            "bound_check needs L = 1 (got {}); set model.rescale = true",
            model.lipschitz()
        )));
    }
    let q = model
        .quadratic_hessian()
        .ok_or_else(|| CliError::Spec("bound_check needs a quadratic target".into()))?
        .clone();
    let d = model.dim();
    let c_ls = match settings.c_ls {
        Some(c) => c,
        None => {
            let lmin = q.clone().symmetric_eigenvalues().min();
            if !(lmin > 0.0) {
                return Err(CliError::Spec("target Hessian is not positive definite".into()));
            }
            1.0 / lmin
        }
    };
    let simple = constants_simple(params.gamma, c_ls)?;
    let kernel = step_transition(model, params)?;
    let target = target_law(model)?;
    let nu0 = initial_law(spec, d)?;

    let mut laws = Vec::with_capacity(settings.steps as usize + 1);
    laws.push(nu0.clone());
    for _ in 0..settings.steps {
        let next = propagate(laws.last().expect("nonempty"), &kernel);
        laws.push(next);
    }
    let stationary = stationary_law(&kernel)?;
    let c2 = expected_error_weight(&stationary, &q);
    let expected_m: Vec<f64> = laws.iter().map(|l| expected_error_weight(l, &q)).collect();

    let mut rng = GaussianSource::new(seed, 0);
    let (d0, qb, _) = model.block_structure();
    let mut w0 = 0.0;
    for _ in 0..settings.mc_draws {
        w0 += lyapunov_w(&sample_law(&nu0, &mut rng)?, d0, qb)?;
    }
    w0 /= settings.mc_draws.max(1) as f64;

    let t = params.t_phys;
    let rho = simple.kappa;
    let theta = theta_rate(simple.kappa, t, rho);
    let c1 = if w0 > 0.0 {
        expected_m
            .iter()
            .enumerate()
            .map(|(n, m)| (m - c2).max(0.0) / (theta.powf(n as f64 * t) * w0))
            .fold(0.0, f64::max)
    } else {
        0.0
    };

    let mut inputs = BoundInputs {
        gamma: params.gamma,
        c_ls,
        t_phys: t,
        k: params.k,
        eta: params.eta,
        a_tilde: simple.a,
        eps_free: settings.eps_free,
        rho: Some(rho),
        c1: Some(c1),
        c2: Some(c2),
        h0: kl_gaussian(&nu0, &target)?,
        i0: fisher_gaussian(&nu0, &target)?,
        w0,
    };
    inputs.a_tilde = match settings.a_tilde {
        Some(a) => a,
        None => {
            let grid: Vec<f64> = (0..=60).map(|i| 10f64.powf(-4.0 + i as f64 / 12.0)).collect();
            best_a_tilde(&inputs, &grid).map_or(simple.a, |b| b.0)
        }
    };
    let report = bounds_report(&inputs)?;

    let mut out = CellOutput::default();
    let mut violations = 0u64;
    let mut max_ratio = 0.0f64;
    let mut last = (0.0, 0.0);
    for (n, law) in laws.iter().enumerate() {
        let kl = kl_gaussian(law, &target)?;
        let bound = entropy_bound_curve(&inputs, n as u64)?;
        if kl > bound * (1.0 + 1e-12) {
            violations += 1;
        }
        max_ratio = max_ratio.max(kl / bound);
        last = (kl, bound);
        out.records.push(json!({
            "cell": cell,
            "n": n,
            "kl": kl,
            "bound": bound,
            "modified_entropy": modified_entropy(law, &target, simple.a)?,
            "expected_m": expected_m[n],
        }));
    }

    let v = &mut out.values;
    put(v, "c_ls", c_ls);
    put(v, "a", simple.a);
    put(v, "kappa", simple.kappa);
    put(v, "m_big", simple.m_big);
    put(v, "a_tilde", inputs.a_tilde);
    put(v, "lambda", report.lambda);
    put(v, "kappa_tilde", report.kappa_tilde);
    put(v, "rho", rho);
    put(v, "c1", c1);
    put(v, "c2", c2);
    put(v, "w0", w0);
    put(v, "h0", inputs.h0);
    put(v, "i0", inputs.i0);
    put(v, "steps", settings.steps);
    put(v, "violations", violations);
    put(v, "max_kl_over_bound", max_ratio);
    put(v, "kl_final", last.0);
    put(v, "bound_final", last.1);
    put(v, "kl_stationary", kl_gaussian(&stationary, &target)?);
    put(v, "bias_floor", report.bias_floor);

    let plan = complexity_plan(
        settings.target_eps,
        d,
        settings.regime,
        Prefactors {
            c_ls,
            ..Prefactors::default()
        },
    )?;
    out.details = json!({
        "bounds_report": report,
        "bound_inputs": inputs,
        "complexity_plan": plan,
    });
    out.assertions.push(Assertion::new(
        "entropy bound dominates exact relative entropy",
        violations == 0,
        format!("{violations} violations over {} steps, max ratio {max_ratio:.6e}", settings.steps + 1),
    ));
    Ok(out)
}

fn random_point(rng: &mut GaussianSource, d: usize, r: f64) -> PhasePoint {
    let x = Vector::from_fn(d, |_, _| rng.uniform_in(-r, r));
    let v = Vector::from_fn(d, |_, _| rng.uniform_in(-r, r));
    PhasePoint::new(x, v)
}

fn verify_cell(
    spec: &ExperimentSpec,
    model: &PotentialModel,
    params: &GhmcParams,
    cell: usize,
    seed: u64,
) -> Result<CellOutput> {
    let s = &spec.verify;
    let (delta, k) = (params.delta, params.k);
    let psi_checked = model.lipschitz() <= 1.0 + 1e-12 && params.t_phys <= 0.1 + 1e-12;
    let defect_checked = psi_checked && model.derivative_bounds().is_some();
    let bound = psi_bound(delta, k);
    let mut rng = GaussianSource::new(seed, 0);

    let mut out = CellOutput::default();
    let mut max_rev = 0.0f64;
    let mut max_det = 0.0f64;
    let mut max_drift = 0.0f64;
    let mut max_psi = 0.0f64;
    let mut psi_viol = 0u64;
    let mut max_e_ratio = 0.0f64;
    let mut e_viol = 0u64;
    let mut max_f_ratio = 0.0f64;
    let mut f_viol = 0u64;
    for i in 0..s.points {
        let z = random_point(&mut rng, model.dim(), s.radius);
        let rev = reversibility_error(model, &z, delta)?;
        let det_dev = (flow_jacobian_det(model, &z, delta, k)? - 1.0).abs();
        let drift = (hamiltonian(model, &verlet_flow(model, &z, delta, k)?) - hamiltonian(model, &z)).abs();
        max_rev = max_rev.max(rev);
        max_det = max_det.max(det_dev);
        max_drift = max_drift.max(drift);
        let mut psi_norm = None;
        let mut e_ratio = None;
        let mut f_ratio = None;
        if psi_checked {
            let n = operator_norm(&psi_matrix(model, &z, delta, k)?);
            if n > bound + s.psi_slack {
                psi_viol += 1;
            }
            max_psi = max_psi.max(n);
            psi_norm = Some(n);
        }
        if defect_checked {
            let lhs = grad_box_h(model, &z, delta, k)?.norm_squared();
            let rhs = grad_box_h_bound(model, &z, delta, k)?;
            if lhs > rhs {
                e_viol += 1;
            }
            let r = if rhs > 0.0 { lhs / rhs } else { 0.0 };
            max_e_ratio = max_e_ratio.max(r);
            e_ratio = Some(r);
            let lhs = flow_defect(model, &z, delta)?.powi(2);
            let rhs = flow_defect_bound_sq(model, &z, delta)?;
            if lhs > rhs {
                f_viol += 1;
            }
            let r = if rhs > 0.0 { lhs / rhs } else { 0.0 };
            max_f_ratio = max_f_ratio.max(r);
            f_ratio = Some(r);
        }
        out.records.push(json!({
            "cell": cell,
            "point": i,
            "reversibility": rev,
            "det_dev": det_dev,
            "energy_drift": drift,
            "psi_norm": psi_norm,
            "energy_defect_ratio": e_ratio,
            "flow_defect_ratio": f_ratio,
        }));
    }

    let v = &mut out.values;
    put(v, "points", s.points);
    put(v, "max_reversibility", max_rev);
    put(v, "max_det_dev", max_det);
    put(v, "max_energy_drift", max_drift);
    put(v, "psi_checked", psi_checked);
    put(v, "psi_bound", bound);
    if psi_checked {
        put(v, "max_psi_norm", max_psi);
        put(v, "psi_violations", psi_viol);
    }
    put(v, "defect_checked", defect_checked);
    if defect_checked {
        put(v, "max_energy_defect_ratio", max_e_ratio);
        put(v, "energy_defect_violations", e_viol);
        put(v, "max_flow_defect_ratio", max_f_ratio);
        put(v, "flow_defect_violations", f_viol);
    }

    let a = &mut out.assertions;
    a.push(Assertion::new(
        "reversibility",
        max_rev <= s.reversibility_tol,
        format!("max |R Phi R Phi z - z| = {max_rev:.3e}, tolerance {:.1e}", s.reversibility_tol),
    ));
    a.push(Assertion::new(
        "volume preservation",
        max_det <= s.det_tol,
        format!("max |det - 1| = {max_det:.3e}, tolerance {:.1e}", s.det_tol),
    ));
    if psi_checked {
        a.push(Assertion::new(
            "jacobian bound",
            psi_viol == 0,
            format!("{psi_viol} violations, max |Psi| = {max_psi:.6} against {bound:.6}"),
        ));
    }
    if defect_checked {
        a.push(Assertion::new(
            "energy defect bound",
            e_viol == 0,
            format!("{e_viol} violations, max ratio {max_e_ratio:.3e}"),
        ));
        a.push(Assertion::new(
            "flow defect bound",
            f_viol == 0,
            format!("{f_viol} violations, max ratio {max_f_ratio:.3e}"),
        ));
    }
    out.details = json!({
        "psi_checked": psi_checked,
        "defect_checked": defect_checked,
        "radius": s.radius,
    });
    Ok(out)
}

fn drift_cell(
    spec: &ExperimentSpec,
    model: &PotentialModel,
    params: &GhmcParams,
    cell: usize,
    seed: u64,
) -> Result<CellOutput> {
    let probes = drift_probes(model);
    let fit = drift_fit(model, params, &probes, spec.drift.mc_samples, seed)?;
    let mut out = CellOutput::default();
    for (i, p) in fit.probes.iter().enumerate() {
        out.records.push(json!({
            "cell": cell,
            "probe": i,
            "x": p.point.x.as_slice(),
            "v": p.point.v.as_slice(),
            "w": p.w,
            "mean": p.mean,
            "se": p.se,
            "upper": p.upper,
            "envelope": p.envelope,
        }));
    }
    let v = &mut out.values;
    put(v, "mc_samples", fit.mc_samples);
    put(v, "probes", fit.probes.len());
    put(v, "certified", fit.certified);
    put(v, "rho_hat", fit.rho_hat);
    put(v, "c_hat", fit.c_hat);
    put(v, "beta", fit.beta);
    put(v, "ci_half_width", fit.ci_half_width);
    if spec.drift.require_certified {
        out.assertions.push(Assertion::new(
            "drift certified",
            fit.certified,
            fit.reason.clone().unwrap_or_else(|| "certified".into()),
        ));
    }
    out.details = json!({
        "certified": fit.certified,
        "reason": fit.reason,
        "rho_hat": fit.rho_hat,
        "c_hat": fit.c_hat,
        "beta": fit.beta,
        "intercept": fit.intercept,
        "t_phys": fit.t_phys,
    });
    Ok(out)
}

fn sample_cell(
    spec: &ExperimentSpec,
    model: &PotentialModel,
    params: &GhmcParams,
    cell: usize,
    seed: u64,
) -> Result<CellOutput> {
    let c = &spec.chain;
    let d = model.dim();
    let init = c.init.clone().unwrap_or(InitLaw::StandardVelocity { x: vec![0.0; d] });
    let configs: Vec<ChainConfig> = (0..c.chains as u64)
        .map(|chain_id| ChainConfig {
            params: params.clone(),
            n_iters: c.n_iters,
            seed,
            chain_id,
            init: init.clone(),
            record_every: c.record_every,
            burn_in: c.burn_in,
        })
        .collect();
    let results = run_chains(model, &configs);

    let mut out = CellOutput::default();
    let mut moments = MomentAccumulator::new(2 * d);
    let mut chain_errors = Vec::new();
    let (mut sum_h, mut sum_w, mut n_rec) = (0.0, 0.0, 0usize);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((summary, recs)) => {
                moments.merge(&summary.moments);
                for rec in recs {
                    sum_h += rec.h;
                    sum_w += rec.w;
                    n_rec += 1;
                    let mut row = serde_json::to_value(&rec)?;
                    row["cell"] = cell.into();
                    out.records.push(row);
                }
            }
            Err(e) => chain_errors.push(json!({ "chain_id": i, "error": e.to_string() })),
        }
    }
    let v = &mut out.values;
    put(v, "chains", c.chains);
    put(v, "n_iters", c.n_iters);
    put(v, "failed_chains", chain_errors.len());
    put(v, "records", n_rec);
    if n_rec > 0 {
        let nf = n_rec as f64;
        put(v, "mean_h", sum_h / nf);
        put(v, "mean_w", sum_w / nf);
        put(v, "mean_x0", moments.mean()[0]);
        put(v, "var_x0", moments.central_moment(0, 2));
        put(v, "second_moment_x", (0..d).map(|i| moments.raw_moment(i, 2)).sum::<f64>() / d as f64);
        put(v, "second_moment_v", (d..2 * d).map(|i| moments.raw_moment(i, 2)).sum::<f64>() / d as f64);
    }
    if model.quadratic_hessian().is_some() {
        if let Ok(st) = step_transition(model, params).map_err(CliError::from).and_then(|k| Ok(stationary_law(&k)?)) {
            let xx = st.cov.view((0, 0), (d, d)).trace() + st.mean.rows(0, d).norm_squared();
            put(v, "exact_second_moment_x", xx / d as f64);
        }
    }
    out.assertions.push(Assertion::new(
        "chains completed",
        chain_errors.is_empty(),
        format!("{} of {} chains failed", chain_errors.len(), c.chains),
    ));
    out.details = json!({
        "mean": moments.mean(),
        "covariance": if n_rec > 0 { rows(&moments.covariance()) } else { Vec::new() },
        "chain_errors": chain_errors,
    });
    Ok(out)
}

fn aggregate(spec: &ExperimentSpec, results: &mut [CellResult]) -> (Value, Vec<Assertion>) {
    match spec.kind {
        ExperimentKind::StepsizeScan => (stepsize_aggregate(spec, results), Vec::new()),
        ExperimentKind::DimScan => (dim_aggregate(spec, results), Vec::new()),
        _ => (json!({}), Vec::new()),
    }
}

fn slope_json(points: &[(f64, f64)]) -> Value {
    match scaling_slope(points) {
        Ok(fit) => serde_json::to_value(fit).unwrap_or(Value::Null),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

/// Log-log slopes against `delta` for every group of cells sharing all
/// other grid coordinates.
fn stepsize_aggregate(spec: &ExperimentSpec, results: &[CellResult]) -> Value {
    let mut groups: BTreeMap<String, Vec<&CellResult>> = BTreeMap::new();
    for r in results {
        let mut key = format!(
            "{}={}",
            r.values["friction_mode"].as_str().unwrap_or(""),
            r.values["friction_value"]
        );
        if spec.grid.fix_t.is_none() {
            key.push_str(&format!(" k={}", r.num("k").unwrap_or(f64::NAN)));
        }
        groups.entry(key).or_default().push(r);
    }
    let mut out = Vec::new();
    for (key, cells) in groups {
        let series = |col: &str| -> Vec<(f64, f64)> {
            cells
                .iter()
                .filter_map(|c| Some((c.num("delta")?, c.num(col)?)))
                .collect()
        };
        out.push(json!({
            "group": key,
            "cells": cells.iter().map(|c| c.index).collect::<Vec<_>>(),
            "kl_slope": slope_json(&series("kl")),
            "kl_x_slope": slope_json(&series("kl_x")),
            "cov_error_slope": slope_json(&series("cov_error")),
        }));
    }
    json!({ "slopes_vs_delta": out })
}

fn dim_aggregate(spec: &ExperimentSpec, results: &mut [CellResult]) -> Value {
    let d_ref = spec.scan.reference_dim.unwrap_or(spec.scan.dims[0]) as f64;
    let mut refs: BTreeMap<usize, f64> = BTreeMap::new();
    for r in results.iter() {
        if let (Some(kl), Some(d)) = (r.num("kl"), r.num("dim")) {
            if d == d_ref {
                refs.insert(r.group, kl);
            }
        }
    }
    let mut groups: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for r in results.iter_mut() {
        let (Some(&kl_ref), Some(kl)) = (refs.get(&r.group), r.num("kl")) else {
            continue;
        };
        let ratio = kl / kl_ref;
        if let Ok(out) = r.output.as_mut() {
            put(&mut out.values, "kl_ratio", ratio);
        }
        let e = groups.entry(r.group).or_insert((f64::INFINITY, 0.0));
        e.0 = e.0.min(ratio);
        e.1 = e.1.max(ratio);
    }
    json!({
        "reference_dim": d_ref,
        "regime": spec.scan.regime,
        "groups": groups
            .iter()
            .map(|(g, (lo, hi))| json!({ "group": g, "min_kl_ratio": lo, "max_kl_ratio": hi }))
            .collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expected_error_weight_matches_monte_carlo() {
        let q = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let mean = Vector::from_vec(vec![1.0, -0.5, 0.3, 0.0]);
        let mut cov = Matrix::identity(4, 4) * 0.5;
        cov[(0, 2)] = 0.1;
        cov[(2, 0)] = 0.1;
        let law = GaussianLaw::new(mean, cov).unwrap();
        let mut rng = GaussianSource::new(4, 0);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z = sample_law(&law, &mut rng).unwrap();
            acc += z.v.norm_squared() + (&q * &z.x).norm_squared();
        }
        let mc = acc / n as f64;
        let exact = expected_error_weight(&law, &q);
        assert!((mc - exact).abs() < 0.02 * exact, "{mc} vs {exact}");
    }
}
