//! Small dense linear-algebra helpers shared by the numerical checks.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative step used for finite-difference Hessian probing: `h = 1e-5 (1 + |x|)`.
pub const HESSIAN_FD_REL_STEP: f64 = 1e-5;

/// Relative step used for finite-difference Jacobians of phase-space maps:
/// `h = 1e-6 (1 + |z|)`.
pub const JACOBIAN_FD_REL_STEP: f64 = 1e-6;

/// Largest singular value.
pub fn operator_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn symmetric_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().amax()
}

/// Central finite-difference Jacobian `J[i][j] = d f_i / d z_j` with step
/// `rel_step * (1 + |z|)`.
pub fn fd_jacobian<F, E>(f: F, z: &Vector, rel_step: f64) -> Result<Matrix, E>
where
    F: Fn(&Vector) -> Result<Vector, E>,
{
    let n = z.len();
    let h = rel_step * (1.0 + z.norm());
    let mut cols = Vec::with_capacity(n);
    let mut zp = z.clone();
    for j in 0..n {
        zp[j] = z[j] + h;
        let fp = f(&zp)?;
        zp[j] = z[j] - h;
        let fm = f(&zp)?;
        zp[j] = z[j];
        cols.push((fp - fm) / (2.0 * h));
    }
    let m = cols.first().map_or(0, |c| c.len());
    Ok(Matrix::from_fn(m, n, |i, j| cols[j][i]))
}

/// Central finite-difference gradient of a scalar map with step
/// `rel_step * (1 + |z|)`.
pub fn fd_gradient<F, E>(f: F, z: &Vector, rel_step: f64) -> Result<Vector, E>
where
    F: Fn(&Vector) -> Result<f64, E>,
{
    let h = rel_step * (1.0 + z.norm());
    let mut g = Vector::zeros(z.len());
    let mut zp = z.clone();
    for j in 0..z.len() {
        zp[j] = z[j] + h;
        let fp = f(&zp)?;
        zp[j] = z[j] - h;
        let fm = f(&zp)?;
        zp[j] = z[j];
        g[j] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Spectral radius via the real Schur form.
pub fn spectral_radius(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    match m.clone().try_schur(f64::EPSILON, 100 * m.nrows().max(10)) {
        Some(schur) => schur
            .complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max),
        None => gelfand_radius(m),
    }
}

// lim |A^n|^(1/n) by normalized repeated squaring, for spectra on which
// the Schur iteration stalls
fn gelfand_radius(m: &Matrix) -> f64 {
    let n0 = m.norm();
    if n0 == 0.0 {
        return 0.0;
    }
    let mut b = m / n0;
    let mut log_rho = n0.ln();
    let mut weight = 0.5;
    for _ in 0..64 {
        b = &b * &b;
        let c = b.norm();
        if c == 0.0 {
            return 0.0;
        }
        b /= c;
        log_rho += weight * c.ln();
        weight *= 0.5;
    }
    log_rho.exp()
}

/// Block-diagonal `diag(a, b)`.
pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = Matrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

/// Assemble a `2x2` block matrix from `d x d` blocks.
pub fn block2(a11: &Matrix, a12: &Matrix, a21: &Matrix, a22: &Matrix) -> Matrix {
    let d = a11.nrows();
    let mut out = Matrix::zeros(2 * d, 2 * d);
    out.view_mut((0, 0), (d, d)).copy_from(a11);
    out.view_mut((0, d), (d, d)).copy_from(a12);
    out.view_mut((d, 0), (d, d)).copy_from(a21);
    out.view_mut((d, d), (d, d)).copy_from(a22);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operator_norm_of_rotation_is_one() {
        let t: f64 = 0.3;
        let r = Matrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        assert!((operator_norm(&r) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fd_jacobian_of_linear_map() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let z = Vector::from_vec(vec![0.3, -1.2]);
        let j = fd_jacobian(|w: &Vector| Ok::<_, ()>(&a * w), &z, JACOBIAN_FD_REL_STEP).unwrap();
        assert!((j - a).amax() < 1e-8);
    }

    #[test]
    fn gelfand_matches_schur() {
        let m = Matrix::from_row_slice(3, 3, &[0.5, 1.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, -0.3]);
        assert!((gelfand_radius(&m) - 0.5).abs() < 1e-9);
        let r = Matrix::from_row_slice(2, 2, &[0.0, -0.9, 0.9, 0.0]);
        assert!((gelfand_radius(&r) - 0.9).abs() < 1e-12);
        assert_eq!(gelfand_radius(&Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])), 0.0);
    }

    #[test]
    fn degenerate_spectrum_terminates() {
        let q = Matrix::identity(32, 32);
        let a = block2(&(&q * 0.9), &(&q * 0.1), &(&q * -0.1), &(&q * 0.9));
        assert!((spectral_radius(&a) - (0.82f64).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn spectral_radius_of_nilpotent_plus_diag() {
        let m = Matrix::from_row_slice(2, 2, &[0.5, 10.0, 0.0, -0.25]);
        assert!((spectral_radius(&m) - 0.5).abs() < 1e-12);
    }
}
