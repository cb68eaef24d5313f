//! Built-in models: isotropic Gaussian, capped double well and the
//! mean-field cosine model.

use std::fmt;
use std::sync::Arc;

use super::{
    BlockPotential, Body, DerivativeBounds, DriftConstants, MeanField, PotentialError,
    PotentialModel, Result,
};
use crate::linalg::Matrix;

/// A one-dimensional profile applied coordinatewise inside a block.
pub trait ScalarProfile: fmt::Debug + Send + Sync {
    fn value(&self, s: f64) -> f64;
    fn d1(&self, s: f64) -> f64;
    fn d2(&self, s: f64) -> f64;
}

/// Block potential `sum_k p(s_k)`.
#[derive(Debug, Clone)]
pub struct Separable<P>(pub P);

impl<P: ScalarProfile> BlockPotential for Separable<P> {
    fn value(&self, s: &[f64]) -> f64 {
        s.iter().map(|&c| self.0.value(c)).sum()
    }

    fn grad_into(&self, s: &[f64], out: &mut [f64]) {
        for (o, &c) in out.iter_mut().zip(s) {
            *o = self.0.d1(c);
        }
    }

    fn hessian(&self, s: &[f64]) -> Matrix {
        Matrix::from_diagonal(&nalgebra::DVector::from_iterator(
            s.len(),
            s.iter().map(|&c| self.0.d2(c)),
        ))
    }
}

/// `curvature * s^2 / 2`.
#[derive(Debug, Clone, Copy)]
pub struct Harmonic {
    pub curvature: f64,
}

impl ScalarProfile for Harmonic {
    fn value(&self, s: f64) -> f64 {
        0.5 * self.curvature * s * s
    }
    fn d1(&self, s: f64) -> f64 {
        self.curvature * s
    }
    fn d2(&self, _s: f64) -> f64 {
        self.curvature
    }
}

/// `curvature * s^2 / 2 + amplitude * (cos s - 1)`.
#[derive(Debug, Clone, Copy)]
pub struct QuadCosine {
    pub curvature: f64,
    pub amplitude: f64,
}

impl ScalarProfile for QuadCosine {
    fn value(&self, s: f64) -> f64 {
        0.5 * self.curvature * s * s + self.amplitude * (s.cos() - 1.0)
    }
    fn d1(&self, s: f64) -> f64 {
        self.curvature * s - self.amplitude * s.sin()
    }
    fn d2(&self, s: f64) -> f64 {
        self.curvature - self.amplitude * s.cos()
    }
}

/// Double well `s^4/4 - s^2/2` on `[-cap, cap]`, continued outside the box by
/// its second-order Taylor polynomial at `+-cap` (a C^2 convex cap), so the
/// second derivative is bounded by `max(3 cap^2 - 1, 1)` everywhere.
#[derive(Debug, Clone, Copy)]
pub struct CappedDoubleWell {
    pub cap: f64,
}

impl CappedDoubleWell {
    fn inner(s: f64) -> (f64, f64, f64) {
        (0.25 * s.powi(4) - 0.5 * s * s, s.powi(3) - s, 3.0 * s * s - 1.0)
    }
}

impl ScalarProfile for CappedDoubleWell {
    fn value(&self, s: f64) -> f64 {
        if s.abs() <= self.cap {
            Self::inner(s).0
        } else {
            let r = self.cap * s.signum();
            let (u, u1, u2) = Self::inner(r);
            let h = s - r;
            u + u1 * h + 0.5 * u2 * h * h
        }
    }
    fn d1(&self, s: f64) -> f64 {
        if s.abs() <= self.cap {
            Self::inner(s).1
        } else {
            let r = self.cap * s.signum();
            let (_, u1, u2) = Self::inner(r);
            u1 + u2 * (s - r)
        }
    }
    fn d2(&self, s: f64) -> f64 {
        Self::inner(s.clamp(-self.cap, self.cap)).2
    }
}

impl PotentialModel {
    /// `U(x) = omega2 |x|^2 / 2`, stored both as an exact quadratic and as a
    /// one-coordinate-per-block mean-field model with `eps = 0`.
    pub fn isotropic_gaussian(d: usize, omega2: f64) -> Result<Self> {
        if !(omega2 > 0.0 && omega2.is_finite()) {
            return Err(PotentialError::Invalid(format!(
                "omega2 must be positive, got {omega2}"
            )));
        }
        let block: Arc<dyn BlockPotential> = Arc::new(Separable(Harmonic { curvature: omega2 }));
        let zero: Arc<dyn BlockPotential> = Arc::new(Separable(Harmonic { curvature: 0.0 }));
        let mf = MeanField::new(d, 1, 0.0, block, zero)?;
        let mut model = PotentialModel::mean_field(
            mf,
            omega2,
            Some(DerivativeBounds::zero()),
            Some(DriftConstants {
                m: omega2,
                big_m: 0.0,
            }),
        )?;
        if let Body::MeanField { quadratic, .. } = &mut model.body {
            *quadratic = Some(Matrix::identity(d, d) * omega2);
        }
        Ok(model.with_name("isotropic_gaussian"))
    }

    /// Product of capped double wells, one coordinate per block.
    ///
    /// `L = max(3 cap^2 - 1, 1)`. The declared derivative bounds
    /// `|D3| <= 6 cap`, `|D4| <= 6` hold inside the box `[-cap, cap]^d`;
    /// the C^2 cap has no fourth derivative across `|s| = cap`.
    /// Drift constants `m = 1`, `M = 1` hold for `cap >= 1`.
    pub fn double_well(d: usize, cap: f64) -> Result<Self> {
        if !(cap >= 1.0 && cap.is_finite()) {
            return Err(PotentialError::Invalid(format!("cap must be >= 1, got {cap}")));
        }
        let block: Arc<dyn BlockPotential> = Arc::new(Separable(CappedDoubleWell { cap }));
        let zero: Arc<dyn BlockPotential> = Arc::new(Separable(Harmonic { curvature: 0.0 }));
        let mf = MeanField::new(d, 1, 0.0, block, zero)?;
        let lipschitz = (3.0 * cap * cap - 1.0).max(1.0);
        Ok(PotentialModel::mean_field(
            mf,
            lipschitz,
            Some(DerivativeBounds::single(6.0 * cap, 6.0)),
            Some(DriftConstants { m: 1.0, big_m: 1.0 }),
        )?
        .with_name("double_well"))
    }

    /// Mean-field cosine model:
    /// `U_q(s) = sum_k s_k^2/2 + c (cos s_k - 1)`,
    /// `W_q(s) = sum_k s_k^2/2 + c_w (cos s_k - 1)`.
    ///
    /// `L = 1 + |c| + 4 eps (1 + |c_w|) (d0 - 1)/d0` (Gershgorin), derivative
    /// bounds `|D3 U_q| = |D4 U_q| = |c|`, `|D3 W_q| = |D4 W_q| = |c_w|`, and
    /// drift constants `m = 1/2`, `M = q c^2 / 2`. The documented interaction
    /// threshold for moment bounds is `eps <= m / 4 = 1/8`.
    pub fn mean_field_cosine(
        d0: usize,
        q: usize,
        epsilon: f64,
        cos_amplitude: f64,
        interaction_cos_amplitude: f64,
    ) -> Result<Self> {
        let u: Arc<dyn BlockPotential> = Arc::new(Separable(QuadCosine {
            curvature: 1.0,
            amplitude: cos_amplitude,
        }));
        let w: Arc<dyn BlockPotential> = Arc::new(Separable(QuadCosine {
            curvature: 1.0,
            amplitude: interaction_cos_amplitude,
        }));
        let mf = MeanField::new(d0, q, epsilon, u, w)?;
        let (c, cw) = (cos_amplitude.abs(), interaction_cos_amplitude.abs());
        let lipschitz = 1.0 + c + 4.0 * epsilon * (1.0 + cw) * (d0 as f64 - 1.0) / d0 as f64;
        Ok(PotentialModel::mean_field(
            mf,
            lipschitz,
            Some(DerivativeBounds {
                third_u: c,
                third_w: cw,
                fourth_u: c,
                fourth_w: cw,
            }),
            Some(DriftConstants {
                m: 0.5,
                big_m: q as f64 * c * c / 2.0,
            }),
        )?
        .with_name("mean_field_cosine"))
    }
}

/// Interaction strength below which the mean-field cosine model is
/// documented to satisfy the moment (drift) bounds: `eps <= m / 4`.
pub const MEAN_FIELD_COSINE_EPS_THRESHOLD: f64 = 0.125;
