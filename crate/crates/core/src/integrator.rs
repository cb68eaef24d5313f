//! The leapfrog (Verlet) map `Phi_delta` = half kick, drift, half kick, its
//! explicit inverse, K-step trajectories and the quantities used to check
//! the entropy analysis numerically: the energy defect `box_h`, its
//! gradient, the Jacobian field `Psi` and the flow defect.
//!
//! Jacobian convention: `grad F` for a map
//! `F: R^n -> R^n` is the *transpose* of the Jacobian, `(grad F)_{ij} =
//! d_i F_j`. [`psi_matrix`] returns matrices in that convention. Norms and
//! determinants do not depend on it.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix, Vector, JACOBIAN_FD_REL_STEP};
use crate::potentials::{self, PhasePoint, PotentialError, PotentialModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("gradient overflow at step {step}")]
    GradientOverflow { step: usize },
    #[error("step size must be positive and finite, got {0}")]
    InvalidDelta(f64),
    #[error("number of steps must be at least 1")]
    ZeroSteps,
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

pub type Result<T, E = IntegratorError> = std::result::Result<T, E>;

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(IntegratorError::InvalidDelta(delta))
    }
}

fn check_point(model: &PotentialModel, z: &PhasePoint) -> Result<()> {
    if z.x.len() != model.dim() || z.v.len() != model.dim() {
        return Err(PotentialError::DimensionMismatch {
            expected: model.dim(),
            actual: z.x.len(),
        }
        .into());
    }
    Ok(())
}

fn finite_grad(model: &PotentialModel, x: &Vector, step: usize) -> Result<Vector> {
    let g = model.grad(x);
    if g.iter().all(|c| c.is_finite()) {
        Ok(g)
    } else {
        Err(IntegratorError::GradientOverflow { step })
    }
}

/// Runs `steps` leapfrog steps in place, evaluating `K + 1` gradients.
/// `first_step` offsets the step index reported on overflow.
pub(crate) fn leapfrog_in_place(
    model: &PotentialModel,
    x: &mut Vector,
    v: &mut Vector,
    delta: f64,
    steps: usize,
    first_step: usize,
) -> Result<()> {
    let half = 0.5 * delta;
    let mut g = finite_grad(model, x, first_step)?;
    for k in 0..steps {
        v.axpy(-half, &g, 1.0);
        x.axpy(delta, v, 1.0);
        g = finite_grad(model, x, first_step + k)?;
        v.axpy(-half, &g, 1.0);
    }
    Ok(())
}

/// One leapfrog step: `v -= delta/2 grad U(x); x += delta v; v -= delta/2 grad U(x)`.
pub fn verlet_step(model: &PotentialModel, z: &PhasePoint, delta: f64) -> Result<PhasePoint> {
    check_delta(delta)?;
    check_point(model, z)?;
    let (mut x, mut v) = (z.x.clone(), z.v.clone());
    leapfrog_in_place(model, &mut x, &mut v, delta, 1, 0)?;
    Ok(PhasePoint { x, v })
}

/// Explicit inverse
/// `(x - delta v - delta^2/2 grad U(x), v + delta/2 [grad U(x) + grad U(x')])`.
pub fn verlet_inverse_step(
    model: &PotentialModel,
    z: &PhasePoint,
    delta: f64,
) -> Result<PhasePoint> {
    check_delta(delta)?;
    check_point(model, z)?;
    inverse_step_unchecked(model, z, delta, 0)
}

fn inverse_step_unchecked(
    model: &PotentialModel,
    z: &PhasePoint,
    delta: f64,
    step: usize,
) -> Result<PhasePoint> {
    let g0 = finite_grad(model, &z.x, step)?;
    let x1 = &z.x - &z.v * delta - &g0 * (0.5 * delta * delta);
    let g1 = finite_grad(model, &x1, step)?;
    let v1 = &z.v + (g0 + g1) * (0.5 * delta);
    Ok(PhasePoint { x: x1, v: v1 })
}

/// `Phi_delta^{-K}(z)`.
pub fn verlet_inverse_k(
    model: &PotentialModel,
    z: &PhasePoint,
    delta: f64,
    k: usize,
) -> Result<PhasePoint> {
    check_delta(delta)?;
    check_point(model, z)?;
    let mut cur = z.clone();
    for step in 0..k {
        cur = inverse_step_unchecked(model, &cur, delta, step)?;
    }
    Ok(cur)
}

/// `Phi_delta^K(z)` without recording intermediate points.
pub fn verlet_flow(model: &PotentialModel, z: &PhasePoint, delta: f64, k: usize) -> Result<PhasePoint> {
    check_delta(delta)?;
    check_point(model, z)?;
    let (mut x, mut v) = (z.x.clone(), z.v.clone());
    leapfrog_in_place(model, &mut x, &mut v, delta, k, 0)?;
    Ok(PhasePoint { x, v })
}

/// `H(x, v) = U(x) + |v|^2 / 2`.
pub fn hamiltonian(model: &PotentialModel, z: &PhasePoint) -> f64 {
    model.value(&z.x) + 0.5 * z.v.norm_squared()
}

/// `K + 1` points `z, Phi(z), ..., Phi^K(z)` with their energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerletTrajectory {
    pub points: Vec<PhasePoint>,
    pub delta: f64,
    pub hamiltonians: Vec<f64>,
}

#[derive(Serialize)]
struct TrajectoryRecord<'a> {
    k: usize,
    x: &'a [f64],
    v: &'a [f64],
    #[serde(rename = "H")]
    h: f64,
}

impl VerletTrajectory {
    pub fn steps(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn last(&self) -> &PhasePoint {
        self.points.last().expect("trajectory holds at least the initial point")
    }

    /// Largest `|H(z_k) - H(z_0)|` along the trajectory.
    pub fn max_energy_drift(&self) -> f64 {
        let h0 = self.hamiltonians[0];
        self.hamiltonians
            .iter()
            .map(|h| (h - h0).abs())
            .fold(0.0, f64::max)
    }

    /// One JSON object per line with fields in the order `k, x, v, H`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (k, (p, &h)) in self.points.iter().zip(&self.hamiltonians).enumerate() {
            let rec = TrajectoryRecord {
                k,
                x: p.x.as_slice(),
                v: p.v.as_slice(),
                h,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// `K` leapfrog steps from `z`, recording every point and its energy.
pub fn verlet_k(
    model: &PotentialModel,
    z: &PhasePoint,
    delta: f64,
    k: usize,
) -> Result<VerletTrajectory> {
    check_delta(delta)?;
    check_point(model, z)?;
    if k == 0 {
        return Err(IntegratorError::ZeroSteps);
    }
    let mut points = Vec::with_capacity(k + 1);
    let mut hamiltonians = Vec::with_capacity(k + 1);
    points.push(z.clone());
    hamiltonians.push(hamiltonian(model, z));
    let (mut x, mut v) = (z.x.clone(), z.v.clone());
    for step in 0..k {
        leapfrog_in_place(model, &mut x, &mut v, delta, 1, step)?;
        let p = PhasePoint {
            x: x.clone(),
            v: v.clone(),
        };
        hamiltonians.push(hamiltonian(model, &p));
        points.push(p);
    }
    Ok(VerletTrajectory {
        points,
        delta,
        hamiltonians,
    })
}

/// `|R Phi R Phi(z) - z|`, zero in exact arithmetic.
pub fn reversibility_error(model: &PotentialModel, z: &PhasePoint, delta: f64) -> Result<f64> {
    let once = verlet_step(model, z, delta)?;
    let back = verlet_step(model, &once.reflect(), delta)?.reflect();
    Ok(back.distance(z))
}

/// Energy defect `H(z) - H(Phi^{-K}(z))`.
pub fn box_h(model: &PotentialModel, z: &PhasePoint, delta: f64, k: usize) -> Result<f64> {
    let back = verlet_inverse_k(model, z, delta, k)?;
    Ok(hamiltonian(model, z) - hamiltonian(model, &back))
}

/// Gradient of [`box_h`] by central differences with step `1e-6 (1 + |z|)`,
/// stacked as `(d/dx, d/dv)`.
pub fn grad_box_h(model: &PotentialModel, z: &PhasePoint, delta: f64, k: usize) -> Result<Vector> {
    check_delta(delta)?;
    check_point(model, z)?;
    linalg::fd_gradient(
        |w| box_h(model, &PhasePoint::from_vector(w), delta, k),
        &z.to_vector(),
        JACOBIAN_FD_REL_STEP,
    )
}

/// `N4^6(v) + N4^6(g) + N3^4(v) + N3^4(g) + |v|^2 + |g|^2` with `g = grad U(x)`:
/// the summand of the energy-defect bound. Equals the error weight `M` when `L = 1`.
pub fn defect_weight(model: &PotentialModel, z: &PhasePoint) -> Result<f64> {
    let g = model.grad(&z.x);
    Ok(potentials::norm_n4(model, &z.v)?.powi(6)
        + potentials::norm_n4(model, &g)?.powi(6)
        + potentials::norm_n3(model, &z.v)?.powi(4)
        + potentials::norm_n3(model, &g)?.powi(4)
        + z.v.norm_squared()
        + g.norm_squared())
}

/// Right-hand side of `|grad box_h(z)|^2 <= 2 delta^6 K sum_{k<K} defect_weight(Phi^{-k}(z))`
/// (stated for `L = 1`).
pub fn grad_box_h_bound(model: &PotentialModel, z: &PhasePoint, delta: f64, k: usize) -> Result<f64> {
    check_delta(delta)?;
    check_point(model, z)?;
    let mut cur = z.clone();
    let mut total = 0.0;
    for step in 0..k {
        total += defect_weight(model, &cur)?;
        if step + 1 < k {
            cur = inverse_step_unchecked(model, &cur, delta, step)?;
        }
    }
    Ok(2.0 * delta.powi(6) * k as f64 * total)
}

/// `Psi(z)`: the Jacobian of `Phi^{-K}` at `Phi^K(z)` in the transpose
/// convention, by central differences (step `1e-6 (1 + |z|)`).
pub fn psi_matrix(model: &PotentialModel, z: &PhasePoint, delta: f64, k: usize) -> Result<Matrix> {
    let fwd = verlet_flow(model, z, delta, k)?;
    let jac = linalg::fd_jacobian(
        |w| verlet_inverse_k(model, &PhasePoint::from_vector(w), delta, k).map(|p| p.to_vector()),
        &fwd.to_vector(),
        JACOBIAN_FD_REL_STEP,
    )?;
    Ok(jac.transpose())
}

/// `Psi(z)` as the product of the exact per-step matrices
/// `[[I - delta^2/2 Q_k, delta/2 (Q_k + (I - delta^2/2 Q_k) Q_{k+1})], [-delta I, I - delta^2/2 Q_{k+1}]]`
/// with `Q_k` the Hessian at `x_k`, `z_0 = Phi^K(z)`, `z_{k+1} = Phi^{-1}(z_k)`.
/// Exact for quadratic potentials; uses the model Hessian otherwise.
pub fn psi_matrix_analytic(
    model: &PotentialModel,
    z: &PhasePoint,
    delta: f64,
    k: usize,
) -> Result<Matrix> {
    let d = model.dim();
    let mut cur = verlet_flow(model, z, delta, k)?;
    let id = Matrix::identity(d, d);
    let mut psi = Matrix::identity(2 * d, 2 * d);
    let mut q_cur = model.hessian(&cur.x);
    for step in 0..k {
        let next = inverse_step_unchecked(model, &cur, delta, step)?;
        let q_next = model.hessian(&next.x);
        let a = &id - &q_cur * (0.5 * delta * delta);
        let b = (&q_cur + &a * &q_next) * (0.5 * delta);
        let c = &id * (-delta);
        let e = &id - &q_next * (0.5 * delta * delta);
        psi *= linalg::block2(&a, &b, &c, &e);
        cur = next;
        q_cur = q_next;
    }
    Ok(psi)
}

/// `1 + T + T^2/2 + T^3/3` with `T = K delta` (valid for `L = 1`, `T <= 1/10`).
pub fn psi_bound(delta: f64, k: usize) -> f64 {
    let t = k as f64 * delta;
    1.0 + t + 0.5 * t * t + t.powi(3) / 3.0
}

/// `det` of the finite-difference Jacobian of `Phi^K` at `z`.
pub fn flow_jacobian_det(model: &PotentialModel, z: &PhasePoint, delta: f64, k: usize) -> Result<f64> {
    check_point(model, z)?;
    let jac = linalg::fd_jacobian(
        |w| verlet_flow(model, &PhasePoint::from_vector(w), delta, k).map(|p| p.to_vector()),
        &z.to_vector(),
        JACOBIAN_FD_REL_STEP,
    )?;
    Ok(jac.determinant())
}

/// `d/ds Phi_s(z)` in closed form:
/// `(v - s grad U(x), -(grad U(x) + grad U(x_s))/2 - s/2 hess U(x_s) (v - s grad U(x)))`.
pub fn flow_derivative(model: &PotentialModel, z: &PhasePoint, s: f64) -> Result<PhasePoint> {
    check_point(model, z)?;
    let g = model.grad(&z.x);
    let dx = &z.v - &g * s;
    let xs = &z.x + &z.v * s - &g * (0.5 * s * s);
    let gs = model.grad(&xs);
    let hs = model.hessian(&xs);
    let dv = (&g + &gs) * (-0.5) - (hs * &dx) * (0.5 * s);
    Ok(PhasePoint { x: dx, v: dv })
}

/// `|d/ds Phi_s(z) - F_H(Phi_s(z))|` with `F_H(x, v) = (v, -grad U(x))`.
pub fn flow_defect(model: &PotentialModel, z: &PhasePoint, s: f64) -> Result<f64> {
    let deriv = flow_derivative(model, z, s)?;
    let zs = verlet_step(model, z, s)?;
    let gs = model.grad(&zs.x);
    let ex = &deriv.x - &zs.v;
    let ev = &deriv.v + gs;
    Ok((ex.norm_squared() + ev.norm_squared()).sqrt())
}

/// `s^4 (|v|^2/3 + |g|^2/7 + N3^4(v)/7 + N3^4(g)/140)`, a bound on the
/// squared flow defect for `L = 1`, `s <= 1/10`.
pub fn flow_defect_bound_sq(model: &PotentialModel, z: &PhasePoint, s: f64) -> Result<f64> {
    check_point(model, z)?;
    let g = model.grad(&z.x);
    Ok(s.powi(4)
        * (z.v.norm_squared() / 3.0
            + g.norm_squared() / 7.0
            + potentials::norm_n3(model, &z.v)?.powi(4) / 7.0
            + potentials::norm_n3(model, &g)?.powi(4) / 140.0))
}
