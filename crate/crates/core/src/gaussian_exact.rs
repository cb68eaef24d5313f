//! Exact law propagation for quadratic targets.
//!
//! With `grad U(x) = Q x` one kernel step is affine-Gaussian,
//! `z' = A z + xi`, `xi ~ N(0, S)`, so Gaussian laws stay Gaussian and
//! KL divergence, Fisher information and the modified entropy have closed
//! forms. Phase-space vectors are stacked `(x, v)`.
//!
//! Modified entropy convention: with
//! `A = 1/sqrt(2) [[I, I], [I, I]]` one has `|A (a, b)|^2 = |a + b|^2`, so
//! `I_A(nu|mu) = int |A grad h|^2 / h dmu = int |grad_x h + grad_v h|^2 / h dmu`
//! and [`modified_entropy`] returns `KL + a_tilde * I_A`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix, Vector};
use crate::potentials::PotentialModel;
use crate::sampler::GhmcParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("model is not exactly quadratic")]
    NotQuadratic,
    #[error("covariance is not symmetric positive definite: {0}")]
    NotSpd(String),
    #[error("non-contractive kernel (spectral radius {0})")]
    NonContractive(f64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("stationary covariance did not converge")]
    NotConverged,
}

pub type Result<T, E = GaussianError> = std::result::Result<T, E>;

/// Tolerance on the Frobenius increment of the stationary-covariance iteration.
pub const STATIONARY_TOL: f64 = 1e-13;

/// A Gaussian law on phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "LawRepr", into = "LawRepr")]
pub struct GaussianLaw {
    pub mean: Vector,
    pub cov: Matrix,
}

#[derive(Serialize, Deserialize)]
struct LawRepr {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl From<LawRepr> for GaussianLaw {
    fn from(r: LawRepr) -> Self {
        let n = r.mean.len();
        GaussianLaw {
            mean: Vector::from_vec(r.mean),
            cov: Matrix::from_fn(n, n, |i, j| r.cov[i][j]),
        }
    }
}

impl From<GaussianLaw> for LawRepr {
    fn from(l: GaussianLaw) -> Self {
        LawRepr {
            mean: l.mean.as_slice().to_vec(),
            cov: l.cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

impl GaussianLaw {
    /// Validates symmetry (to `1e-12`, relative) and positive definiteness.
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        let n = mean.len();
        if cov.shape() != (n, n) {
            return Err(GaussianError::DimensionMismatch {
                expected: n,
                actual: cov.nrows(),
            });
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > 1e-12 * (1.0 + cov.amax()) {
            return Err(GaussianError::NotSpd(format!("asymmetry {asym:e}")));
        }
        let law = GaussianLaw { mean, cov };
        law.cholesky()?;
        Ok(law)
    }

    /// `N(0, I_n)`.
    pub fn standard(n: usize) -> Self {
        GaussianLaw {
            mean: Vector::zeros(n),
            cov: Matrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        self.cov
            .clone()
            .cholesky()
            .ok_or_else(|| GaussianError::NotSpd("cholesky factorization failed".into()))
    }

    pub fn log_det(&self) -> Result<f64> {
        let l = self.cholesky()?;
        Ok(2.0 * l.l_dirty().diagonal().iter().map(|c| c.ln()).sum::<f64>())
    }

    fn precision(&self) -> Result<Matrix> {
        Ok(self.cholesky()?.inverse())
    }

    /// Law of the coordinates `start..start + len`.
    pub fn marginal(&self, start: usize, len: usize) -> GaussianLaw {
        GaussianLaw {
            mean: self.mean.rows(start, len).into_owned(),
            cov: self.cov.view((start, start), (len, len)).into_owned(),
        }
    }

    /// The position marginal (first half).
    pub fn x_marginal(&self) -> GaussianLaw {
        self.marginal(0, self.dim() / 2)
    }

    /// The velocity marginal (second half).
    pub fn v_marginal(&self) -> GaussianLaw {
        let d = self.dim() / 2;
        self.marginal(d, d)
    }

    /// `E |y_i|^l` for a scalar coordinate, `l` even.
    pub fn coordinate_even_moment(&self, i: usize, l: u32) -> f64 {
        assert!(l % 2 == 0, "even moments only");
        let (m, s2) = (self.mean[i], self.cov[(i, i)]);
        // E (m + s g)^l = sum_j C(l, j) m^(l-j) s^j E g^j
        let mut total = 0.0;
        let mut binom = 1.0;
        for j in 0..=l {
            if j % 2 == 0 {
                total += binom * m.powi((l - j) as i32) * s2.powi(j as i32 / 2) * double_factorial(j);
            }
            binom = binom * (l - j) as f64 / (j + 1) as f64;
        }
        total
    }
}

fn double_factorial(j: u32) -> f64 {
    // (j - 1)!! for even j; E g^j
    (1..j).step_by(2).map(|k| k as f64).product()
}

/// `mu = N(0, Q^{-1}) x N(0, I)` for `U(x) = x^T Q x / 2` with `Q` positive definite.
pub fn target_law(model: &PotentialModel) -> Result<GaussianLaw> {
    let q = model.quadratic_hessian().ok_or(GaussianError::NotQuadratic)?;
    let d = q.nrows();
    let qinv = q
        .clone()
        .cholesky()
        .ok_or_else(|| GaussianError::NotSpd("target Hessian is not positive definite".into()))?
        .inverse();
    let cov = linalg::block_diag(&qinv, &Matrix::identity(d, d));
    Ok(GaussianLaw {
        mean: Vector::zeros(2 * d),
        cov: symmetrize(&cov),
    })
}

/// The map `law(Z) -> law(A Z + xi)`, `xi ~ N(0, S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineKernel {
    pub lin: Matrix,
    pub noise_cov: Matrix,
}

impl AffineKernel {
    pub fn identity(n: usize) -> Self {
        AffineKernel {
            lin: Matrix::identity(n, n),
            noise_cov: Matrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.lin.nrows()
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &AffineKernel) -> AffineKernel {
        AffineKernel {
            lin: &next.lin * &self.lin,
            noise_cov: symmetrize(&(&next.lin * &self.noise_cov * next.lin.transpose() + &next.noise_cov)),
        }
    }

    /// `n`-fold composition `(A^n, sum_k A^k S (A^k)^T)`.
    pub fn power(&self, n: usize) -> AffineKernel {
        let mut out = AffineKernel::identity(self.dim());
        for _ in 0..n {
            out = out.then(self);
        }
        out
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.lin)
    }
}

/// `first` followed by `second`.
pub fn compose(first: &AffineKernel, second: &AffineKernel) -> AffineKernel {
    first.then(second)
}

fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// One leapfrog step with `grad U(x) = Q x`: half kick, drift, half kick.
pub fn verlet_matrix(q: &Matrix, delta: f64) -> Matrix {
    let d = q.nrows();
    let id = Matrix::identity(d, d);
    let zero = Matrix::zeros(d, d);
    let kick = linalg::block2(&id, &zero, &(q * (-0.5 * delta)), &id);
    let drift = linalg::block2(&id, &(&id * delta), &zero, &id);
    &kick * drift * &kick
}

/// The kernel of one gHMC step for a quadratic model:
/// `lin = M^K diag(I, eta I)`, `noise = M^K diag(0, (1 - eta^2) I) (M^K)^T`.
pub fn step_transition(model: &PotentialModel, params: &GhmcParams) -> Result<AffineKernel> {
    let q = model.quadratic_hessian().ok_or(GaussianError::NotQuadratic)?;
    Ok(kernel_for_hessian(q, params.k, params.delta, params.eta))
}

/// [`step_transition`] for an explicit Hessian.
pub fn kernel_for_hessian(q: &Matrix, k: usize, delta: f64, eta: f64) -> AffineKernel {
    let d = q.nrows();
    let m = verlet_matrix(q, delta).pow(k as u32);
    let id = Matrix::identity(d, d);
    let zero = Matrix::zeros(d, d);
    let refresh = linalg::block2(&id, &zero, &zero, &(&id * eta));
    let inject = linalg::block2(&zero, &zero, &zero, &(&id * (1.0 - eta * eta)));
    AffineKernel {
        lin: &m * refresh,
        noise_cov: symmetrize(&(&m * inject * m.transpose())),
    }
}

/// `(A m, A C A^T + S)`.
pub fn propagate(law: &GaussianLaw, kernel: &AffineKernel) -> GaussianLaw {
    GaussianLaw {
        mean: &kernel.lin * &law.mean,
        cov: symmetrize(&(&kernel.lin * &law.cov * kernel.lin.transpose() + &kernel.noise_cov)),
    }
}

/// Fixed point of [`propagate`]. The covariance series `sum_k A^k S (A^k)^T`
/// is summed by doubling (`C <- C + B C B^T`, `B <- B^2`), stopping once the
/// Frobenius increment drops below `1e-13 max(1, |C|)`.
pub fn stationary_law(kernel: &AffineKernel) -> Result<GaussianLaw> {
    let radius = kernel.spectral_radius();
    if radius >= 1.0 - 1e-9 {
        return Err(GaussianError::NonContractive(radius));
    }
    let mut c = kernel.noise_cov.clone();
    let mut b = kernel.lin.clone();
    for _ in 0..200 {
        let inc = &b * &c * b.transpose();
        c += &inc;
        if inc.norm() < STATIONARY_TOL * c.norm().max(1.0) {
            return Ok(GaussianLaw {
                mean: Vector::zeros(kernel.dim()),
                cov: symmetrize(&c),
            });
        }
        b = &b * &b;
    }
    Err(GaussianError::NotConverged)
}

fn check_same_dim(a: &GaussianLaw, b: &GaussianLaw) -> Result<()> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(GaussianError::DimensionMismatch {
            expected: b.dim(),
            actual: a.dim(),
        })
    }
}

/// `KL(nu | mu)`.
pub fn kl_gaussian(nu: &GaussianLaw, mu: &GaussianLaw) -> Result<f64> {
    check_same_dim(nu, mu)?;
    let chol_mu = mu.cholesky()?;
    let n = nu.dim() as f64;
    let trace = chol_mu.solve(&nu.cov).trace();
    let dm = &mu.mean - &nu.mean;
    let quad = dm.dot(&chol_mu.solve(&dm));
    let kl = 0.5 * (trace - n + quad + mu.log_det()? - nu.log_det()?);
    Ok(kl.max(0.0))
}

/// Mean and covariance under `nu` of the score
/// `G(z) = Sigma_mu^{-1}(z - m_mu) - Sigma_nu^{-1}(z - m_nu)`.
fn score_moments(nu: &GaussianLaw, mu: &GaussianLaw) -> Result<(Vector, Matrix)> {
    check_same_dim(nu, mu)?;
    let p_mu = mu.precision()?;
    let p_nu = nu.precision()?;
    let mean = &p_mu * (&nu.mean - &mu.mean);
    let diff = p_mu - p_nu;
    let cov = &diff * &nu.cov * diff.transpose();
    Ok((mean, cov))
}

/// `I(nu | mu) = E_nu |G|^2 = tr Cov G + |E G|^2`.
pub fn fisher_gaussian(nu: &GaussianLaw, mu: &GaussianLaw) -> Result<f64> {
    let (m, c) = score_moments(nu, mu)?;
    Ok((c.trace() + m.norm_squared()).max(0.0))
}

/// `E_nu |A G|^2 = tr(A^T A Cov G) + |A E G|^2`.
pub fn modified_fisher_a(nu: &GaussianLaw, mu: &GaussianLaw, a_mat: &Matrix) -> Result<f64> {
    let (m, c) = score_moments(nu, mu)?;
    if a_mat.ncols() != m.len() {
        return Err(GaussianError::DimensionMismatch {
            expected: m.len(),
            actual: a_mat.ncols(),
        });
    }
    let ata = a_mat.transpose() * a_mat;
    Ok(((ata * c).trace() + (a_mat * m).norm_squared()).max(0.0))
}

/// `1/sqrt(2) [[I, I], [I, I]]` on `R^{2d}`.
pub fn mixing_matrix(d: usize) -> Matrix {
    let s = Matrix::identity(d, d) * std::f64::consts::FRAC_1_SQRT_2;
    linalg::block2(&s, &s, &s, &s)
}

/// `KL(nu | mu) + a_tilde * I_A(nu | mu)` with `A` = [`mixing_matrix`].
pub fn modified_entropy(nu: &GaussianLaw, mu: &GaussianLaw, a_tilde: f64) -> Result<f64> {
    let a = mixing_matrix(nu.dim() / 2);
    Ok(kl_gaussian(nu, mu)? + a_tilde * modified_fisher_a(nu, mu, &a)?)
}

/// `|cov(nu) - cov(mu)|` in operator norm.
pub fn cov_error(nu: &GaussianLaw, mu: &GaussianLaw) -> f64 {
    linalg::operator_norm(&(&nu.cov - &mu.cov))
}
