//! Target potentials `U`, the mean-field family
//! `U(x) = sum_i U_q(x_i) + (eps / d0) sum_{i,j} W_q(x_i - x_j)`,
//! the block norms `N3`, `N4`, the error weight `M` and the Lyapunov function `W`.
//!
//! Every model carries a declared Lipschitz constant `L` for its gradient
//! (an upper bound on the Hessian spectral norm). Models built from the zoo
//! compute `L` analytically; user models declare it.

mod config;
mod zoo;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix, Vector, HESSIAN_FD_REL_STEP};

pub use config::{ModelConfig, ModelSpec};
pub use zoo::{
    CappedDoubleWell, Harmonic, QuadCosine, ScalarProfile, Separable, MEAN_FIELD_COSINE_EPS_THRESHOLD,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("not a mean-field model")]
    NotMeanField,
    #[error("missing derivative bounds: {0}")]
    MissingBounds(&'static str),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid lipschitz constant {0}: must be positive and finite")]
    InvalidLipschitz(f64),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = PotentialError> = std::result::Result<T, E>;

/// A position-velocity pair `(x, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PhasePointRepr", into = "PhasePointRepr")]
pub struct PhasePoint {
    pub x: Vector,
    pub v: Vector,
}

#[derive(Serialize, Deserialize)]
struct PhasePointRepr {
    x: Vec<f64>,
    v: Vec<f64>,
}

impl From<PhasePointRepr> for PhasePoint {
    fn from(r: PhasePointRepr) -> Self {
        PhasePoint {
            x: Vector::from_vec(r.x),
            v: Vector::from_vec(r.v),
        }
    }
}

impl From<PhasePoint> for PhasePointRepr {
    fn from(p: PhasePoint) -> Self {
        PhasePointRepr {
            x: p.x.as_slice().to_vec(),
            v: p.v.as_slice().to_vec(),
        }
    }
}

impl PhasePoint {
    /// # Panics
    ///
    /// Panics when `x` and `v` have different lengths.
    pub fn new(x: Vector, v: Vector) -> Self {
        assert_eq!(x.len(), v.len(), "position and velocity lengths differ");
        PhasePoint { x, v }
    }

    pub fn from_slices(x: &[f64], v: &[f64]) -> Self {
        Self::new(Vector::from_column_slice(x), Vector::from_column_slice(v))
    }

    pub fn zeros(d: usize) -> Self {
        PhasePoint {
            x: Vector::zeros(d),
            v: Vector::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// The momentum flip `R(x, v) = (x, -v)`.
    pub fn reflect(&self) -> Self {
        PhasePoint {
            x: self.x.clone(),
            v: -&self.v,
        }
    }

    /// Stacked `(x, v)` in `R^{2d}`.
    pub fn to_vector(&self) -> Vector {
        let d = self.dim();
        Vector::from_fn(2 * d, |i, _| if i < d { self.x[i] } else { self.v[i - d] })
    }

    /// # Panics
    ///
    /// Panics when `z` has odd length.
    pub fn from_vector(z: &Vector) -> Self {
        assert!(z.len() % 2 == 0, "phase vector must have even length");
        let d = z.len() / 2;
        PhasePoint {
            x: z.rows(0, d).into_owned(),
            v: z.rows(d, d).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        ((&self.x - &other.x).norm_squared() + (&self.v - &other.v).norm_squared()).sqrt()
    }
}

/// A potential on one block `R^q` of a mean-field model.
pub trait BlockPotential: fmt::Debug + Send + Sync {
    fn value(&self, s: &[f64]) -> f64;
    /// Writes the gradient at `s` into `out`.
    fn grad_into(&self, s: &[f64], out: &mut [f64]);
    fn hessian(&self, s: &[f64]) -> Matrix;
}

/// A general smooth potential on `R^d`, for models outside the built-in zoo.
pub trait SmoothPotential: fmt::Debug + Send + Sync {
    fn value(&self, x: &Vector) -> f64;
    fn grad(&self, x: &Vector) -> Vector;
    /// Defaults to central differences of the gradient.
    fn hessian(&self, x: &Vector) -> Matrix {
        fd_hessian(|y| self.grad(y), x)
    }
}

/// Declared uniform bounds on the third and fourth derivatives of the block
/// potentials `U_q` and `W_q`. For a model without mean-field structure the
/// `W_q` entries are zero and the whole of `U` counts as a single block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBounds {
    pub third_u: f64,
    pub third_w: f64,
    pub fourth_u: f64,
    pub fourth_w: f64,
}

impl DerivativeBounds {
    pub fn single(third: f64, fourth: f64) -> Self {
        DerivativeBounds {
            third_u: third,
            third_w: 0.0,
            fourth_u: fourth,
            fourth_w: 0.0,
        }
    }

    pub fn zero() -> Self {
        Self::single(0.0, 0.0)
    }

    fn scaled(self, s: f64) -> Self {
        DerivativeBounds {
            third_u: self.third_u * s.powi(3),
            third_w: self.third_w * s.powi(3),
            fourth_u: self.fourth_u * s.powi(4),
            fourth_w: self.fourth_w * s.powi(4),
        }
    }
}

/// Constants `(m, M)` of the block drift condition
/// `<x1, grad U_q(x1)> >= m |x1|^2 - M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConstants {
    pub m: f64,
    pub big_m: f64,
}

/// Mean-field structure: `d = d0 * q` with per-particle potential `u_q` and
/// even interaction potential `w_q` satisfying `grad w_q(0) = 0`.
#[derive(Clone)]
pub struct MeanField {
    pub d0: usize,
    pub q: usize,
    pub epsilon: f64,
    pub u_q: Arc<dyn BlockPotential>,
    pub w_q: Arc<dyn BlockPotential>,
    // block arguments are multiplied by `scale` (rescaled models)
    scale: f64,
}

impl fmt::Debug for MeanField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeanField")
            .field("d0", &self.d0)
            .field("q", &self.q)
            .field("epsilon", &self.epsilon)
            .field("u_q", &self.u_q)
            .field("w_q", &self.w_q)
            .field("scale", &self.scale)
            .finish()
    }
}

impl MeanField {
    pub fn new(
        d0: usize,
        q: usize,
        epsilon: f64,
        u_q: Arc<dyn BlockPotential>,
        w_q: Arc<dyn BlockPotential>,
    ) -> Result<Self> {
        if d0 == 0 || q == 0 {
            return Err(PotentialError::Invalid("d0 and q must be positive".into()));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(PotentialError::Invalid(format!(
                "epsilon must be nonnegative, got {epsilon}"
            )));
        }
        let mut g0 = vec![0.0; q];
        w_q.grad_into(&vec![0.0; q], &mut g0);
        if g0.iter().any(|g| g.abs() > 1e-12) {
            return Err(PotentialError::Invalid(
                "interaction potential must satisfy grad W_q(0) = 0".into(),
            ));
        }
        Ok(MeanField {
            d0,
            q,
            epsilon,
            u_q,
            w_q,
            scale: 1.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.d0 * self.q
    }

    /// Multiplier applied to block arguments (1 unless the model was rescaled).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn value(&self, x: &Vector) -> f64 {
        let (d0, q, s) = (self.d0, self.q, self.scale);
        let xs = x.as_slice();
        let mut buf = vec![0.0; q];
        let mut total = 0.0;
        for i in 0..d0 {
            for (b, xi) in buf.iter_mut().zip(&xs[i * q..(i + 1) * q]) {
                *b = s * xi;
            }
            total += self.u_q.value(&buf);
        }
        if self.epsilon != 0.0 {
            let mut inter = 0.0;
            for i in 0..d0 {
                for j in 0..d0 {
                    for k in 0..q {
                        buf[k] = s * (xs[i * q + k] - xs[j * q + k]);
                    }
                    inter += self.w_q.value(&buf);
                }
            }
            total += self.epsilon / d0 as f64 * inter;
        }
        total
    }

    fn grad(&self, x: &Vector) -> Vector {
        let (d0, q, s) = (self.d0, self.q, self.scale);
        let xs = x.as_slice();
        let mut out = Vector::zeros(d0 * q);
        let mut buf = vec![0.0; q];
        let mut g = vec![0.0; q];
        let coupling = 2.0 * self.epsilon / d0 as f64;
        for i in 0..d0 {
            for k in 0..q {
                buf[k] = s * xs[i * q + k];
            }
            self.u_q.grad_into(&buf, &mut g);
            for k in 0..q {
                out[i * q + k] = s * g[k];
            }
            if coupling != 0.0 {
                for j in 0..d0 {
                    if j == i {
                        continue;
                    }
                    for k in 0..q {
                        buf[k] = s * (xs[i * q + k] - xs[j * q + k]);
                    }
                    self.w_q.grad_into(&buf, &mut g);
                    for k in 0..q {
                        out[i * q + k] += s * coupling * g[k];
                    }
                }
            }
        }
        out
    }

    fn hessian(&self, x: &Vector) -> Matrix {
        let (d0, q, s) = (self.d0, self.q, self.scale);
        let xs = x.as_slice();
        let mut h = Matrix::zeros(d0 * q, d0 * q);
        let mut buf = vec![0.0; q];
        let coupling = 2.0 * self.epsilon / d0 as f64;
        let s2 = s * s;
        for i in 0..d0 {
            for k in 0..q {
                buf[k] = s * xs[i * q + k];
            }
            let hu = self.u_q.hessian(&buf);
            let mut block = h.view_mut((i * q, i * q), (q, q));
            block += hu * s2;
            if coupling != 0.0 {
                for j in 0..d0 {
                    if j == i {
                        continue;
                    }
                    for k in 0..q {
                        buf[k] = s * (xs[i * q + k] - xs[j * q + k]);
                    }
                    let hw = self.w_q.hessian(&buf) * (s2 * coupling);
                    let mut diag = h.view_mut((i * q, i * q), (q, q));
                    diag += &hw;
                    let mut off = h.view_mut((i * q, j * q), (q, q));
                    off -= &hw;
                }
            }
        }
        h
    }
}

#[derive(Clone, Debug)]
enum Body {
    Quadratic(Matrix),
    MeanField {
        mf: MeanField,
        // Hessian when the mean-field model is exactly quadratic.
        quadratic: Option<Matrix>,
    },
    Custom(Arc<dyn SmoothPotential>),
}

/// A target potential with its gradient, declared Lipschitz constant and
/// optional derivative bounds and mean-field structure. Immutable once built.
#[derive(Clone, Debug)]
pub struct PotentialModel {
    name: String,
    dim: usize,
    lipschitz: f64,
    bounds: Option<DerivativeBounds>,
    drift: Option<DriftConstants>,
    body: Body,
}

impl PotentialModel {
    /// Quadratic potential `U(x) = x^T Q x / 2` with `L = |Q|`.
    pub fn quadratic(hessian: Matrix) -> Result<Self> {
        let l = linalg::symmetric_norm(&hessian);
        Self::quadratic_with_lipschitz(hessian, l)
    }

    /// Quadratic potential with a declared `L >= |Q|`.
    pub fn quadratic_with_lipschitz(hessian: Matrix, lipschitz: f64) -> Result<Self> {
        if !hessian.is_square() || hessian.nrows() == 0 {
            return Err(PotentialError::Invalid("hessian must be square and nonempty".into()));
        }
        let asym = (&hessian - hessian.transpose()).amax();
        if asym > 1e-12 * (1.0 + hessian.amax()) {
            return Err(PotentialError::Invalid("hessian must be symmetric".into()));
        }
        check_lipschitz(lipschitz)?;
        let norm = linalg::symmetric_norm(&hessian);
        if norm > lipschitz * (1.0 + 1e-12) {
            return Err(PotentialError::Invalid(format!(
                "declared lipschitz {lipschitz} is below the hessian norm {norm}"
            )));
        }
        let eigs = hessian.clone().symmetric_eigenvalues();
        let lmin = eigs.min();
        let drift = (lmin > 0.0).then_some(DriftConstants { m: lmin, big_m: 0.0 });
        Ok(PotentialModel {
            name: "quadratic".into(),
            dim: hessian.nrows(),
            lipschitz,
            bounds: Some(DerivativeBounds::zero()),
            drift,
            body: Body::Quadratic(hessian),
        })
    }

    /// `U = 0` with a declared `L = 1`.
    pub fn free_flight(d: usize) -> Result<Self> {
        let mut m = Self::quadratic_with_lipschitz(Matrix::zeros(d, d), 1.0)?;
        m.name = "free_flight".into();
        Ok(m)
    }

    /// Build a model from a mean-field structure and declared constants.
    pub fn mean_field(
        mf: MeanField,
        lipschitz: f64,
        bounds: Option<DerivativeBounds>,
        drift: Option<DriftConstants>,
    ) -> Result<Self> {
        check_lipschitz(lipschitz)?;
        Ok(PotentialModel {
            name: "mean_field".into(),
            dim: mf.dim(),
            lipschitz,
            bounds,
            drift,
            body: Body::MeanField { mf, quadratic: None },
        })
    }

    /// A user-supplied potential with a declared `L`.
    pub fn custom(
        potential: Arc<dyn SmoothPotential>,
        dim: usize,
        lipschitz: f64,
        bounds: Option<DerivativeBounds>,
    ) -> Result<Self> {
        check_lipschitz(lipschitz)?;
        if dim == 0 {
            return Err(PotentialError::Invalid("dimension must be positive".into()));
        }
        Ok(PotentialModel {
            name: "custom".into(),
            dim,
            lipschitz,
            bounds,
            drift: None,
            body: Body::Custom(potential),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_bounds(mut self, bounds: DerivativeBounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn derivative_bounds(&self) -> Option<DerivativeBounds> {
        self.bounds
    }

    pub fn drift_constants(&self) -> Option<DriftConstants> {
        self.drift
    }

    pub fn mean_field_structure(&self) -> Option<&MeanField> {
        match &self.body {
            Body::MeanField { mf, .. } => Some(mf),
            _ => None,
        }
    }

    /// Hessian `Q` when `U(x) = x^T Q x / 2` exactly.
    pub fn quadratic_hessian(&self) -> Option<&Matrix> {
        match &self.body {
            Body::Quadratic(q) => Some(q),
            Body::MeanField { quadratic, .. } => quadratic.as_ref(),
            Body::Custom(_) => None,
        }
    }

    /// `(d0, q, epsilon)`; `(1, d, 0)` for models without mean-field structure.
    pub fn block_structure(&self) -> (usize, usize, f64) {
        match self.mean_field_structure() {
            Some(mf) => (mf.d0, mf.q, mf.epsilon),
            None => (1, self.dim, 0.0),
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match &self.body {
            Body::Quadratic(q) => 0.5 * x.dot(&(q * x)),
            Body::MeanField { mf, .. } => mf.value(x),
            Body::Custom(p) => p.value(x),
        }
    }

    pub fn grad(&self, x: &Vector) -> Vector {
        match &self.body {
            Body::Quadratic(q) => q * x,
            Body::MeanField { mf, .. } => mf.grad(x),
            Body::Custom(p) => p.grad(x),
        }
    }

    pub fn hessian(&self, x: &Vector) -> Matrix {
        match &self.body {
            Body::Quadratic(q) => q.clone(),
            Body::MeanField { mf, .. } => mf.hessian(x),
            Body::Custom(p) => p.hessian(x),
        }
    }

    /// `W(z)` with this model's block structure.
    pub fn lyapunov(&self, z: &PhasePoint) -> f64 {
        let (d0, q, _) = self.block_structure();
        lyapunov_w(z, d0, q).expect("phase point dimension matches the model")
    }

    fn l3(&self) -> Result<f64> {
        let b = self.bounds.ok_or(PotentialError::MissingBounds("third derivative"))?;
        let (_, _, eps) = self.block_structure();
        let l3_4 = (1.0 + eps) * b.third_u.powi(2) + 16.0 * eps * (1.0 + eps) * b.third_w.powi(2);
        Ok(l3_4.powf(0.25))
    }

    fn l4(&self) -> Result<f64> {
        let b = self.bounds.ok_or(PotentialError::MissingBounds("fourth derivative"))?;
        let (_, q, eps) = self.block_structure();
        let l4_6 = ((1.0 + eps) / 144.0 * b.fourth_u.powi(2)
            + 4.0 * eps * (1.0 + eps) / 9.0 * b.fourth_w.powi(2))
            * q as f64;
        Ok(l4_6.powf(1.0 / 6.0))
    }
}

fn check_lipschitz(l: f64) -> Result<()> {
    if l > 0.0 && l.is_finite() {
        Ok(())
    } else {
        Err(PotentialError::InvalidLipschitz(l))
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(PotentialError::DimensionMismatch { expected, actual })
    }
}

/// Central finite-difference Hessian of a gradient map, symmetrized.
pub fn fd_hessian<G: Fn(&Vector) -> Vector>(grad: G, x: &Vector) -> Matrix {
    let h = linalg::fd_jacobian(|y| Ok::<_, ()>(grad(y)), x, HESSIAN_FD_REL_STEP)
        .expect("infallible");
    (&h + h.transpose()) * 0.5
}

/// Spectral norm of the finite-difference Hessian at `x` (step `1e-5 (1 + |x|)`).
pub fn probe_hessian_norm(model: &PotentialModel, x: &Vector) -> f64 {
    linalg::symmetric_norm(&fd_hessian(|y| model.grad(y), x))
}

/// Blockwise `grad U_q(x_i) + (2 eps / d0) sum_j grad W_q(x_i - x_j)`.
pub fn mean_field_grad(model: &PotentialModel, x: &Vector) -> Result<Vector> {
    let mf = model
        .mean_field_structure()
        .ok_or(PotentialError::NotMeanField)?;
    check_dim(mf.dim(), x.len())?;
    Ok(mf.grad(x))
}

fn block_norm_sum(y: &Vector, d0: usize, q: usize, power: i32) -> f64 {
    (0..d0)
        .map(|i| y.rows(i * q, q).norm().powi(power))
        .sum()
}

/// `N3(y) = L3 (sum_i |y_i|^4)^{1/4}` with
/// `L3^4 = (1 + eps) |D3 U_q|^2 + 16 eps (1 + eps) |D3 W_q|^2`.
pub fn norm_n3(model: &PotentialModel, y: &Vector) -> Result<f64> {
    check_dim(model.dim(), y.len())?;
    let l3 = model.l3()?;
    let (d0, q, _) = model.block_structure();
    Ok(l3 * block_norm_sum(y, d0, q, 4).powf(0.25))
}

/// `N4(y) = L4 (sum_i |y_i|^6)^{1/6}` with
/// `L4^6 = ((1 + eps)/144 |D4 U_q|^2 + 4 eps (1 + eps)/9 |D4 W_q|^2) q`.
pub fn norm_n4(model: &PotentialModel, y: &Vector) -> Result<f64> {
    check_dim(model.dim(), y.len())?;
    let l4 = model.l4()?;
    let (d0, q, _) = model.block_structure();
    Ok(l4 * block_norm_sum(y, d0, q, 6).powf(1.0 / 6.0))
}

/// The six-term error weight
/// `L^2|v|^2 + L^2|grad U|^2 + N3^4(v) + N3^4(grad U) + N4^6(v) + N4^6(grad U)`.
pub fn error_weight_m(model: &PotentialModel, z: &PhasePoint) -> Result<f64> {
    check_dim(model.dim(), z.dim())?;
    let g = model.grad(&z.x);
    let l2 = model.lipschitz().powi(2);
    Ok(l2 * z.v.norm_squared()
        + l2 * g.norm_squared()
        + norm_n3(model, &z.v)?.powi(4)
        + norm_n3(model, &g)?.powi(4)
        + norm_n4(model, &z.v)?.powi(6)
        + norm_n4(model, &g)?.powi(6))
}

/// `W(x, v) = sum_{l in {2,4,6}} sum_i (|x_i|^l + |v_i|^l)` over blocks of size `q`.
pub fn lyapunov_w(z: &PhasePoint, d0: usize, q: usize) -> Result<f64> {
    check_dim(d0 * q, z.x.len())?;
    check_dim(d0 * q, z.v.len())?;
    let mut total = 0.0;
    for i in 0..d0 {
        let a = z.x.rows(i * q, q).norm_squared();
        let b = z.v.rows(i * q, q).norm_squared();
        total += a + a * a + a * a * a + b + b * b + b * b * b;
    }
    Ok(total)
}

#[derive(Debug)]
struct ScaledPotential {
    inner: Arc<dyn SmoothPotential>,
    scale: f64,
}

impl SmoothPotential for ScaledPotential {
    fn value(&self, x: &Vector) -> f64 {
        self.inner.value(&(x * self.scale))
    }
    fn grad(&self, x: &Vector) -> Vector {
        self.inner.grad(&(x * self.scale)) * self.scale
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        self.inner.hessian(&(x * self.scale)) * (self.scale * self.scale)
    }
}

/// `U~(x) = U(x / sqrt(L))`, returned with `scale = sqrt(L)`. The rescaled
/// model has `L = 1`; chain positions map as `x~ = sqrt(L) x`.
pub fn rescale_to_unit_lipschitz(model: &PotentialModel) -> Result<(PotentialModel, f64)> {
    check_lipschitz(model.lipschitz)?;
    let scale = model.lipschitz.sqrt();
    let s = 1.0 / scale;
    let body = match &model.body {
        Body::Quadratic(q) => Body::Quadratic(q * (s * s)),
        Body::MeanField { mf, quadratic } => {
            let mut mf = mf.clone();
            mf.scale *= s;
            Body::MeanField {
                mf,
                quadratic: quadratic.as_ref().map(|q| q * (s * s)),
            }
        }
        Body::Custom(p) => Body::Custom(Arc::new(ScaledPotential {
            inner: p.clone(),
            scale: s,
        })),
    };
    let rescaled = PotentialModel {
        name: model.name.clone(),
        dim: model.dim,
        lipschitz: 1.0,
        bounds: model.bounds.map(|b| b.scaled(s)),
        drift: model.drift.map(|c| DriftConstants {
            m: c.m * s * s,
            big_m: c.big_m,
        }),
        body,
    };
    Ok((rescaled, scale))
}
