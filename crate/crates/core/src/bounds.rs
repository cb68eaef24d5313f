//! Explicit constants of the entropy convergence theorems and the
//! order-level complexity plans. Everything is evaluated at `L = 1`;
//! rescale the model first.
//!
//! * simple constants: `a = gamma / (7 + 3 (gamma + 3)^2)`,
//!   `kappa = a / (3 max(C_LS, 1) + 6 a)`, `M = 9 + 1/a`;
//! * refined constants: `m1 = 2 - 3T`, `m2 = gamma/eta + 2 + 4T`,
//!   `m3 = gamma (1 + eta)/eta^2 (1/(2 a~) + 1) - 2 - 4T`,
//!   `lambda` = smallest eigenvalue of `[[m1, m2], [m2, m3]]`,
//!   `kappa~ = a~ lambda (1 - eps)(1 - 3T) / (max(C_LS, 1) + 2 a~)`,
//!   `M~ = (4/(15 a~) + 24 a~)/(eps lambda) + a~ ((33 lambda + 4) T + lambda eps / 240)`;
//! * `theta = max(exp(-rho), (1 + kappa T)^(-1/T))`;
//! * entropy bound after `n` steps:
//!   `(1 + kappa T)^-n [H0 + 2 a I0] + delta^4 M [n T theta^(n T) C1 W0 + C2 (1/kappa + T)]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("eta = 0: use lambda_eta_zero_limit")]
    EtaZero,
    #[error("complex eigenvalues impossible for symmetric input (discriminant {0})")]
    NegativeDiscriminant(f64),
    #[error("entropy contraction not certified for this a_tilde (lambda = {0})")]
    NotCertified(f64),
    #[error("missing drift constants: {0}")]
    MissingDrift(&'static str),
}

pub type Result<T, E = BoundsError> = std::result::Result<T, E>;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::Invalid(format!("{name} must be positive, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpleConstants {
    pub a: f64,
    pub kappa: f64,
    pub m_big: f64,
}

pub fn constants_simple(gamma: f64, c_ls: f64) -> Result<SimpleConstants> {
    positive("gamma", gamma)?;
    positive("c_ls", c_ls)?;
    let a = gamma / (7.0 + 3.0 * (gamma + 3.0).powi(2));
    Ok(SimpleConstants {
        a,
        kappa: a / (3.0 * c_ls.max(1.0) + 6.0 * a),
        m_big: 9.0 + 1.0 / a,
    })
}

pub fn m_coeffs(a_tilde: f64, gamma: f64, eta: f64, t_phys: f64) -> Result<(f64, f64, f64)> {
    positive("a_tilde", a_tilde)?;
    if eta == 0.0 {
        return Err(BoundsError::EtaZero);
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(BoundsError::Invalid(format!("eta must lie in (0, 1), got {eta}")));
    }
    let t = t_phys;
    let m1 = 2.0 - 3.0 * t;
    let m2 = gamma / eta + 2.0 + 4.0 * t;
    let m3 = gamma * (1.0 + eta) / (eta * eta) * (1.0 / (2.0 * a_tilde) + 1.0) - 2.0 - 4.0 * t;
    Ok((m1, m2, m3))
}

/// `(m1 + m3)/2 - sqrt(((m1 + m3)/2)^2 - m1 m3 + m2^2)`, evaluated in the
/// cancellation-free form `(m1 m3 - m2^2) / (s + sqrt(disc))` when `s > 0`.
pub fn lambda_rate(m1: f64, m2: f64, m3: f64) -> Result<f64> {
    let s = 0.5 * (m1 + m3);
    let disc = (0.5 * (m1 - m3)).powi(2) + m2 * m2;
    if !(disc >= 0.0) || !disc.is_finite() {
        return Err(BoundsError::NegativeDiscriminant(disc));
    }
    let r = disc.sqrt();
    if s > 0.0 {
        Ok((m1 * m3 - m2 * m2) / (s + r))
    } else {
        Ok(s - r)
    }
}

/// Smallest eigenvalue of `[[m1, m2], [m2, m3]]` by a general symmetric eigensolver.
pub fn lambda_by_eigensolve(m1: f64, m2: f64, m3: f64) -> f64 {
    Matrix::from_row_slice(2, 2, &[m1, m2, m2, m3])
        .symmetric_eigenvalues()
        .min()
}

/// `lim_{eta -> 0} lambda = 2 - 3T - 2 a~ / (T (1 + 2 a~))` along `gamma = (1 - eta)/T`.
pub fn lambda_eta_zero_limit(a_tilde: f64, t_phys: f64) -> f64 {
    2.0 - 3.0 * t_phys - 2.0 * a_tilde / (t_phys * (1.0 + 2.0 * a_tilde))
}

pub fn theta_rate(kappa: f64, t_phys: f64, rho: f64) -> f64 {
    (-rho).exp().max((1.0 + kappa * t_phys).powf(-1.0 / t_phys))
}

/// Inputs of the bound formulas (all at `L = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub gamma: f64,
    pub c_ls: f64,
    /// `T = K delta`, at most `1/10`.
    pub t_phys: f64,
    pub k: usize,
    pub eta: f64,
    pub a_tilde: f64,
    pub eps_free: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default)]
    pub h0: f64,
    #[serde(default)]
    pub i0: f64,
    #[serde(default)]
    pub w0: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        positive("gamma", self.gamma)?;
        positive("c_ls", self.c_ls)?;
        positive("t_phys", self.t_phys)?;
        positive("a_tilde", self.a_tilde)?;
        if self.t_phys > 0.1 + 1e-12 {
            return Err(BoundsError::Invalid(format!(
                "t_phys must be at most 1/10, got {}",
                self.t_phys
            )));
        }
        if self.k == 0 {
            return Err(BoundsError::Invalid("K must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(BoundsError::Invalid(format!("eta must lie in [0, 1), got {}", self.eta)));
        }
        if !(self.eps_free > 0.0 && self.eps_free < 1.0) {
            return Err(BoundsError::Invalid(format!(
                "eps_free must lie in (0, 1), got {}",
                self.eps_free
            )));
        }
        for (name, v) in [("h0", self.h0), ("i0", self.i0), ("w0", self.w0)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(BoundsError::Invalid(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if let Some(r) = self.rho {
            positive("rho", r)?;
        }
        for (name, v) in [("c1", self.c1), ("c2", self.c2)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(BoundsError::Invalid(format!("{name} must be nonnegative, got {v}")));
                }
            }
        }
        Ok(())
    }

    /// `delta = T / K`.
    pub fn delta(&self) -> f64 {
        self.t_phys / self.k as f64
    }

    /// `lambda` from the `m` coefficients, or its `eta -> 0` limit when `eta = 0`.
    pub fn lambda(&self) -> Result<f64> {
        if self.eta == 0.0 {
            Ok(lambda_eta_zero_limit(self.a_tilde, self.t_phys))
        } else {
            let (m1, m2, m3) = m_coeffs(self.a_tilde, self.gamma, self.eta, self.t_phys)?;
            lambda_rate(m1, m2, m3)
        }
    }
}

/// `(kappa~, M~)`, requiring `lambda > 0`.
pub fn refined_constants(inputs: &BoundInputs) -> Result<(f64, f64)> {
    inputs.validate()?;
    refined_from_lambda(inputs, inputs.lambda()?)
}

fn refined_from_lambda(inputs: &BoundInputs, lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) {
        return Err(BoundsError::NotCertified(lambda));
    }
    let (a, e, t) = (inputs.a_tilde, inputs.eps_free, inputs.t_phys);
    let kappa_tilde = a * lambda * (1.0 - e) * (1.0 - 3.0 * t) / (inputs.c_ls.max(1.0) + 2.0 * a);
    let m_tilde = (4.0 / (15.0 * a) + 24.0 * a) / (e * lambda)
        + a * ((33.0 * lambda + 4.0) * t + lambda * e / 240.0);
    Ok((kappa_tilde, m_tilde))
}

/// Right-hand side of the entropy bound after `n` steps.
pub fn entropy_bound_curve(inputs: &BoundInputs, n: u64) -> Result<f64> {
    inputs.validate()?;
    let c = constants_simple(inputs.gamma, inputs.c_ls)?;
    let rho = inputs.rho.ok_or(BoundsError::MissingDrift("rho"))?;
    let c1 = inputs.c1.ok_or(BoundsError::MissingDrift("c1"))?;
    let c2 = inputs.c2.ok_or(BoundsError::MissingDrift("c2"))?;
    let t = inputs.t_phys;
    let theta = theta_rate(c.kappa, t, rho);
    let nf = n as f64;
    let head = (1.0 + c.kappa * t).powf(-nf) * (inputs.h0 + 2.0 * c.a * inputs.i0);
    let transient = if n == 0 {
        0.0
    } else {
        nf * t * theta.powf(nf * t) * c1 * inputs.w0
    };
    let tail = c2 * (1.0 / c.kappa + t);
    Ok(head + inputs.delta().powi(4) * c.m_big * (transient + tail))
}

/// `n* = -1 / (T ln theta)`, where `n T theta^(n T)` peaks.
pub fn transient_peak(theta: f64, t_phys: f64) -> f64 {
    -1.0 / (t_phys * theta.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub a: f64,
    pub kappa: f64,
    pub m_big: f64,
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub m3: Option<f64>,
    pub lambda: f64,
    /// `"eigenvalue"` or `"eta_zero_limit"`.
    pub lambda_source: String,
    pub kappa_tilde: Option<f64>,
    pub m_tilde: Option<f64>,
    pub theta: Option<f64>,
    /// `delta^4 M C2 (1/kappa + T)` when `C2` is known.
    pub bias_floor: Option<f64>,
    pub notes: Vec<String>,
}

pub fn bounds_report(inputs: &BoundInputs) -> Result<BoundsReport> {
    inputs.validate()?;
    let c = constants_simple(inputs.gamma, inputs.c_ls)?;
    let (ms, lambda_source) = if inputs.eta == 0.0 {
        (None, "eta_zero_limit")
    } else {
        (
            Some(m_coeffs(inputs.a_tilde, inputs.gamma, inputs.eta, inputs.t_phys)?),
            "eigenvalue",
        )
    };
    let lambda = inputs.lambda()?;
    let mut notes = Vec::new();
    let refined = match refined_from_lambda(inputs, lambda) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(e.to_string());
            None
        }
    };
    let theta = inputs.rho.map(|r| theta_rate(c.kappa, inputs.t_phys, r));
    if theta.is_none() {
        notes.push("theta and the bound curve need the drift constants rho, c1, c2".into());
    }
    Ok(BoundsReport {
        a: c.a,
        kappa: c.kappa,
        m_big: c.m_big,
        m1: ms.map(|m| m.0),
        m2: ms.map(|m| m.1),
        m3: ms.map(|m| m.2),
        lambda,
        lambda_source: lambda_source.into(),
        kappa_tilde: refined.map(|r| r.0),
        m_tilde: refined.map(|r| r.1),
        theta,
        bias_floor: inputs
            .c2
            .map(|c2| inputs.delta().powi(4) * c.m_big * c2 * (1.0 / c.kappa + inputs.t_phys)),
        notes,
    })
}

/// The `a~` on `grid` maximizing `kappa~` (ties keep the first).
pub fn best_a_tilde(inputs: &BoundInputs, grid: &[f64]) -> Option<(f64, f64)> {
    grid.iter()
        .filter_map(|&a| {
            let mut trial = inputs.clone();
            trial.a_tilde = a;
            refined_constants(&trial).ok().map(|(k, _)| (a, k))
        })
        .fold(None, |best: Option<(f64, f64)>, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    General,
    #[serde(alias = "meanfield", alias = "mean_field")]
    WeaklyInteracting,
}

impl Regime {
    /// Exponent `p` of `d` in `delta` and `r` in `nK` (both equal).
    pub fn exponent(self) -> f64 {
        match self {
            Regime::General => 1.0,
            Regime::WeaklyInteracting => 0.25,
        }
    }
}

/// Prefactors for the order-level plan; only orders are known, so
/// these default to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prefactors {
    pub c_delta: f64,
    pub c_n: f64,
    pub c_ls: f64,
}

impl Default for Prefactors {
    fn default() -> Self {
        Prefactors {
            c_delta: 1.0,
            c_n: 1.0,
            c_ls: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityPlan {
    pub label: String,
    pub regime: Regime,
    pub delta: f64,
    /// Total number of leapfrog steps `n K`.
    pub nk: f64,
}

/// `delta = c_delta eps^(1/4) d^-p`, `nK = c_n C_LS d^p eps^(-1/4) ln(d / eps)`.
pub fn complexity_plan(eps: f64, d: usize, regime: Regime, pre: Prefactors) -> Result<ComplexityPlan> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(BoundsError::Invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    if d == 0 {
        return Err(BoundsError::Invalid("d must be positive".into()));
    }
    let p = regime.exponent();
    let df = d as f64;
    Ok(ComplexityPlan {
        label: "order-level plan".into(),
        regime,
        delta: pre.c_delta * eps.powf(0.25) * df.powf(-p),
        nk: pre.c_n * pre.c_ls * df.powf(p) * eps.powf(-0.25) * (df / eps).ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn inputs() -> BoundInputs {
        BoundInputs {
            gamma: 1.0,
            c_ls: 1.0,
            t_phys: 0.1,
            k: 10,
            eta: 0.9,
            a_tilde: 0.01,
            eps_free: 0.5,
            rho: Some(0.05),
            c1: Some(1.0),
            c2: Some(1.0),
            h0: 1.0,
            i0: 1.0,
            w0: 10.0,
        }
    }

    #[test]
    fn simple_constants_spot_values() {
        let c = constants_simple(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(c.a, 1.0 / 55.0, epsilon = 1e-16);
        assert_abs_diff_eq!(c.kappa, 1.0 / 171.0, epsilon = 1e-16);
        assert_abs_diff_eq!(c.m_big, 64.0, epsilon = 1e-12);
        assert!(constants_simple(0.0, 1.0).is_err());
    }

    #[test]
    fn a_is_below_one_tenth() {
        for i in -60..=60 {
            let g = 10f64.powf(i as f64 / 10.0);
            assert!(constants_simple(g, 1.0).unwrap().a <= 0.1);
        }
        let small = constants_simple(1e-8, 1.0).unwrap();
        let smaller = constants_simple(1e-9, 1.0).unwrap();
        assert!(smaller.a < small.a && smaller.kappa < small.kappa && smaller.m_big > small.m_big);
    }

    #[test]
    fn m_coeff_examples() {
        let (m1, m2, m3) = m_coeffs(0.01, 1.0, 0.5, 0.1).unwrap();
        assert_abs_diff_eq!(m1, 1.7, epsilon = 1e-15);
        assert_abs_diff_eq!(m2, 4.4, epsilon = 1e-14);
        assert_abs_diff_eq!(m3, 303.6, epsilon = 1e-12);
        assert_eq!(m_coeffs(0.01, 1.0, 0.0, 0.1), Err(BoundsError::EtaZero));
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_rate(2.0, 0.0, 2.0).unwrap(), 2.0);
        let l = lambda_rate(1.7, 4.4, 303.6).unwrap();
        assert_abs_diff_eq!(l, 1.63588, epsilon = 1e-5);
        assert_abs_diff_eq!(l, lambda_by_eigensolve(1.7, 4.4, 303.6), epsilon = 1e-12);
        assert!(l <= 1.7);
        assert!(lambda_rate(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn eta_zero_limit() {
        assert_abs_diff_eq!(lambda_eta_zero_limit(0.01, 0.1), 1.503922, epsilon = 1e-6);
        assert_abs_diff_eq!(lambda_eta_zero_limit(1e-12, 0.1), 1.7, epsilon = 1e-9);
        let t = 0.1;
        let a = 0.01;
        let target = lambda_eta_zero_limit(a, t);
        let mut prev = f64::INFINITY;
        for eta in [1e-2, 1e-3, 1e-4] {
            let gamma = (1.0 - eta) / t;
            let (m1, m2, m3) = m_coeffs(a, gamma, eta, t).unwrap();
            let gap = (lambda_rate(m1, m2, m3).unwrap() - target).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn refined_example() {
        // kappa~ at lambda = 1.5
        let (k, m) = refined_from_lambda(&inputs(), 1.5).unwrap();
        assert_abs_diff_eq!(k, 0.01 * 1.5 * 0.5 * 0.7 / 1.02, epsilon = 1e-15);
        assert_abs_diff_eq!(k, 0.0051471, epsilon = 1e-7);
        assert!(m > 0.0);
        let mut near_one = inputs();
        near_one.eps_free = 1.0 - 1e-12;
        assert!(refined_constants(&near_one).unwrap().0 < 1e-12);
        assert!(matches!(
            refined_from_lambda(&inputs(), -0.1),
            Err(BoundsError::NotCertified(_))
        ));
    }

    #[test]
    fn theta_examples() {
        assert_eq!(theta_rate(0.0, 0.1, 0.3), 1.0);
        assert_abs_diff_eq!(theta_rate(1.0, 0.1, 0.05), (-0.05f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(theta_rate(1.0, 0.1, f64::INFINITY), 1.1f64.powf(-10.0), epsilon = 1e-15);
    }

    #[test]
    fn bound_curve_endpoints() {
        let inp = inputs();
        let c = constants_simple(1.0, 1.0).unwrap();
        let delta4 = (0.01f64).powi(4);
        let floor = delta4 * c.m_big * (1.0 / c.kappa + 0.1);
        let b0 = entropy_bound_curve(&inp, 0).unwrap();
        assert_abs_diff_eq!(b0, 1.0 + 2.0 * c.a + floor, epsilon = 1e-15);
        let far = entropy_bound_curve(&inp, 10_000_000).unwrap();
        assert_abs_diff_eq!(far, floor, epsilon = 1e-12 * floor);
        let theta = theta_rate(c.kappa, 0.1, 0.05);
        let peak = transient_peak(theta, 0.1).ceil() as u64;
        let mut prev = entropy_bound_curve(&inp, peak).unwrap();
        for n in (peak + 1..peak + 5000).step_by(7) {
            let cur = entropy_bound_curve(&inp, n).unwrap();
            assert!(cur <= prev);
            prev = cur;
        }
        let mut missing = inp.clone();
        missing.c2 = None;
        assert_eq!(entropy_bound_curve(&missing, 3), Err(BoundsError::MissingDrift("c2")));
    }

    #[test]
    fn t_above_one_tenth_is_rejected() {
        let mut inp = inputs();
        inp.t_phys = 0.2;
        assert!(inp.validate().is_err());
    }

    #[test]
    fn complexity_examples() {
        let p = complexity_plan(1e-4, 100, Regime::General, Prefactors::default()).unwrap();
        assert_abs_diff_eq!(p.delta, 1e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(p.nk, 13815.51, epsilon = 0.01);
        let w = complexity_plan(1e-4, 100, Regime::WeaklyInteracting, Prefactors::default()).unwrap();
        assert_abs_diff_eq!(w.delta, 0.031623, epsilon = 1e-6);
        assert_abs_diff_eq!(w.nk, 436.89, epsilon = 0.01);
        for d in [10usize, 1000] {
            let g = complexity_plan(1e-3, d, Regime::General, Prefactors::default()).unwrap();
            let w = complexity_plan(1e-3, d, Regime::WeaklyInteracting, Prefactors::default()).unwrap();
            assert_abs_diff_eq!(g.nk / w.nk, (d as f64).powf(0.75), epsilon = 1e-9);
        }
        assert_eq!(p.label, "order-level plan");
    }

    #[test]
    fn report_handles_eta_zero() {
        let mut inp = inputs();
        inp.eta = 0.0;
        let r = bounds_report(&inp).unwrap();
        assert_eq!(r.lambda_source, "eta_zero_limit");
        assert!(r.m1.is_none());
        let r = bounds_report(&inputs()).unwrap();
        assert_eq!(r.lambda_source, "eigenvalue");
        assert!(r.theta.unwrap() > 0.0 && r.theta.unwrap() < 1.0);
    }

    #[test]
    fn grid_search_picks_largest_kappa() {
        let grid = [0.001, 0.01, 0.05, 0.1];
        let (a, k) = best_a_tilde(&inputs(), &grid).unwrap();
        for g in grid {
            let mut t = inputs();
            t.a_tilde = g;
            if let Ok((kk, _)) = refined_constants(&t) {
                assert!(kk <= k);
            }
        }
        assert!(grid.contains(&a));
    }

    #[test]
    fn lambda_floor_under_sufficient_condition() {
        // lambda >= 17/20 whenever m3 >= m1/2 + 2 m2^2/m1, with a~ = a of the simple constants
        let mut checked = 0;
        for gi in 0..=20 {
            let gamma = 0.1 * 100f64.powf(gi as f64 / 20.0);
            let a = constants_simple(gamma, 1.0).unwrap().a;
            for ei in 1..20 {
                let eta = ei as f64 / 20.0;
                for ti in 1..=10 {
                    let t = ti as f64 / 100.0;
                    let (m1, m2, m3) = m_coeffs(a, gamma, eta, t).unwrap();
                    if m3 >= m1 / 2.0 + 2.0 * m2 * m2 / m1 {
                        checked += 1;
                        assert!(lambda_rate(m1, m2, m3).unwrap() >= 0.85 - 1e-12);
                    }
                }
            }
        }
        assert!(checked > 100);
    }

    proptest! {
        #[test]
        fn lambda_matches_eigensolve(m1 in -50.0..50.0f64, m2 in -50.0..50.0f64, m3 in -50.0..50.0f64) {
            let l = lambda_rate(m1, m2, m3).unwrap();
            let e = lambda_by_eigensolve(m1, m2, m3);
            prop_assert!((l - e).abs() <= 1e-12 * (1.0 + m1.abs().max(m2.abs()).max(m3.abs())));
            prop_assert!(l <= m1.min(m3) + 1e-12);
        }

        #[test]
        fn theta_in_unit_interval(k in 1e-4..10.0f64, t in 1e-3..0.1f64, rho in 1e-4..10.0f64) {
            let th = theta_rate(k, t, rho);
            prop_assert!(th > 0.0 && th < 1.0);
        }
    }
}
