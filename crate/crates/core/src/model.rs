//! Material data for the dynamic Biot system and the stage-problem parameters.
//!
//! Symmetric 2x2 tensors use a scaled Voigt representation `(xx, yy, sqrt(2)*xy)`
//! so that the Voigt dot product equals the tensor Frobenius product. Fourth-order
//! elasticity then becomes a symmetric positive definite 3x3 matrix and all
//! contractions below are plain matrix algebra.

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{Error, Result};

/// Number of independent components of a symmetric 2x2 tensor in Voigt form.
pub const VOIGT_DIM: usize = 3;

/// Voigt vector `(a_xx, a_yy, sqrt(2) a_xy)` of a symmetric 2x2 tensor.
pub fn voigt(a: &Matrix2<f64>) -> Vector3<f64> {
    Vector3::new(a[(0, 0)], a[(1, 1)], std::f64::consts::SQRT_2 * a[(0, 1)])
}

/// Fourth-order elasticity tensor as a symmetric 3x3 Voigt matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElasticityTensor(pub Matrix3<f64>);

impl ElasticityTensor {
    /// Isotropic tensor `C eps = 2 mu eps + lambda tr(eps) I`.
    ///
    /// # Errors
    /// Rejects `mu <= 0` and `lambda < 0` (and non-finite input).
    pub fn isotropic(mu: f64, lambda: f64) -> Result<Self> {
        if !(mu.is_finite() && lambda.is_finite() && mu > 0.0 && lambda >= 0.0) {
            return Err(Error::InvalidMaterial(format!(
                "isotropic elasticity requires mu > 0 and lambda >= 0, got mu = {mu}, lambda = {lambda}"
            )));
        }
        let m = Matrix3::new(
            2.0 * mu + lambda,
            lambda,
            0.0,
            lambda,
            2.0 * mu + lambda,
            0.0,
            0.0,
            0.0,
            2.0 * mu,
        );
        Ok(Self(m))
    }

    /// Apply the tensor to a strain in Voigt form.
    pub fn apply(&self, eps: &Vector3<f64>) -> Vector3<f64> {
        self.0 * eps
    }
}

/// Symmetric Biot coupling tensor `alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiotTensor(pub Matrix2<f64>);

impl BiotTensor {
    /// Isotropic coupling `alpha = a I`. Any finite `a` (including 0) is allowed.
    pub fn isotropic(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::InvalidMaterial(format!(
                "biot coefficient must be finite, got {a}"
            )));
        }
        Ok(Self(Matrix2::new(a, 0.0, 0.0, a)))
    }

    /// Voigt vector of the tensor.
    pub fn voigt(&self) -> Vector3<f64> {
        voigt(&self.0)
    }
}

/// Symmetric positive definite permeability tensor `kappa`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PermeabilityTensor(pub Matrix2<f64>);

impl PermeabilityTensor {
    /// Isotropic permeability `kappa = k I`, `k > 0`.
    pub fn isotropic(k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidMaterial(format!(
                "isotropic permeability must be positive, got {k}"
            )));
        }
        Ok(Self(Matrix2::new(k, 0.0, 0.0, k)))
    }

    /// Inverse tensor, needed by the flux mass operator.
    pub fn inverse(&self) -> Result<Matrix2<f64>> {
        self.0
            .try_inverse()
            .ok_or_else(|| Error::InvalidMaterial("permeability tensor is singular".into()))
    }
}

/// Coupling modulus `alpha : C^{-1} : alpha` of one element.
///
/// This is the quantity whose supremum drives the contraction rate of the
/// undrained split; for isotropic materials it reduces to `a^2 / (lambda + mu)`,
/// i.e. `a^2 / K_dr` with the 2-d drained bulk modulus `K_dr = lambda + 2 mu / d`.
///
/// # Errors
/// Fails when the elasticity tensor is not positive definite.
pub fn alpha_c_inv_alpha(c: &ElasticityTensor, alpha: &BiotTensor) -> Result<f64> {
    let a = alpha.voigt();
    if a == Vector3::zeros() {
        return Ok(0.0);
    }
    let chol = c.0.cholesky().ok_or_else(|| {
        Error::InvalidMaterial("elasticity tensor is not symmetric positive definite".into())
    })?;
    let x = chol.solve(&a);
    Ok(a.dot(&x))
}

/// Parameters of the implicit stage problem: weights of the implicit elastic and
/// flux terms and the step size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaParams {
    pub theta1: f64,
    pub theta2: f64,
    pub dt: f64,
}

impl ThetaParams {
    /// # Errors
    /// Requires `theta1, theta2 in (0, 1]` and `dt > 0`, all finite.
    pub fn new(theta1: f64, theta2: f64, dt: f64) -> Result<Self> {
        let ok = theta1.is_finite()
            && theta2.is_finite()
            && dt.is_finite()
            && theta1 > 0.0
            && theta1 <= 1.0
            && theta2 > 0.0
            && theta2 <= 1.0
            && dt > 0.0;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "stage parameters need theta1, theta2 in (0, 1] and dt > 0, got ({theta1}, {theta2}, {dt})"
            )));
        }
        Ok(Self { theta1, theta2, dt })
    }

    /// Backward Euler instance (`theta1 = theta2 = 1`).
    pub fn backward_euler(dt: f64) -> Result<Self> {
        Self::new(1.0, 1.0, dt)
    }
}

/// Per-element material data for one mesh.
///
/// All coefficients are piecewise constant; vectors are indexed by triangle.
#[derive(Clone, Debug)]
pub struct MaterialField {
    pub rho: Vec<f64>,
    pub c0: Vec<f64>,
    pub elasticity: Vec<ElasticityTensor>,
    pub biot: Vec<BiotTensor>,
    pub permeability: Vec<PermeabilityTensor>,
}

impl MaterialField {
    /// Homogeneous field over `n` elements.
    pub fn homogeneous(
        n: usize,
        rho: f64,
        c0: f64,
        elasticity: ElasticityTensor,
        biot: BiotTensor,
        permeability: PermeabilityTensor,
    ) -> Self {
        Self {
            rho: vec![rho; n],
            c0: vec![c0; n],
            elasticity: vec![elasticity; n],
            biot: vec![biot; n],
            permeability: vec![permeability; n],
        }
    }

    pub fn n_elements(&self) -> usize {
        self.rho.len()
    }

    fn consistent_lengths(&self) -> bool {
        let n = self.rho.len();
        self.c0.len() == n
            && self.elasticity.len() == n
            && self.biot.len() == n
            && self.permeability.len() == n
    }
}

/// One defect found by [`validate_material`].
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialIssue {
    /// Offending element, or `None` for field-level defects.
    pub element: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for MaterialIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.element {
            Some(e) => write!(f, "element {e}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

fn symmetric2(m: &Matrix2<f64>) -> bool {
    let scale = m.amax().max(1e-300);
    (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-12 * scale
}

fn symmetric3(m: &Matrix3<f64>) -> bool {
    let scale = m.amax().max(1e-300);
    let d = (m - m.transpose()).amax();
    d <= 1e-12 * scale
}

fn spd2(m: &Matrix2<f64>) -> bool {
    symmetric2(m) && m[(0, 0)] > 0.0 && m.determinant() > 0.0
}

/// Check every element of a material field and return the list of defects.
///
/// An empty list means the field is admissible: positive density and
/// compressibility, symmetric positive definite elasticity and permeability,
/// symmetric finite coupling, and consistent array lengths.
pub fn validate_material(mat: &MaterialField) -> Vec<MaterialIssue> {
    let mut issues = Vec::new();
    if mat.n_elements() == 0 {
        issues.push(MaterialIssue {
            element: None,
            message: "material field has no elements".into(),
        });
        return issues;
    }
    if !mat.consistent_lengths() {
        issues.push(MaterialIssue {
            element: None,
            message: "per-element arrays have inconsistent lengths".into(),
        });
        return issues;
    }
    for e in 0..mat.n_elements() {
        if !(mat.rho[e].is_finite() && mat.rho[e] > 0.0) {
            issues.push(MaterialIssue {
                element: Some(e),
                message: format!("density must be positive, got {}", mat.rho[e]),
            });
        }
        if !(mat.c0[e].is_finite() && mat.c0[e] > 0.0) {
            issues.push(MaterialIssue {
                element: Some(e),
                message: format!(
                    "positive compressibility c0 required (pressure elimination), got {}",
                    mat.c0[e]
                ),
            });
        }
        let c = &mat.elasticity[e].0;
        if !c.iter().all(|v| v.is_finite()) || !symmetric3(c) || c.cholesky().is_none() {
            issues.push(MaterialIssue {
                element: Some(e),
                message: "elasticity tensor not symmetric positive definite".into(),
            });
        }
        let a = &mat.biot[e].0;
        if !a.iter().all(|v| v.is_finite()) || !symmetric2(a) {
            issues.push(MaterialIssue {
                element: Some(e),
                message: "biot tensor not symmetric".into(),
            });
        }
        let k = &mat.permeability[e].0;
        if !k.iter().all(|v| v.is_finite()) || !spd2(k) {
            issues.push(MaterialIssue {
                element: Some(e),
                message: "permeability not SPD".into(),
            });
        }
    }
    issues
}

/// A-priori contraction rate of the undrained split / alternating minimization,
/// `x / (c0 + x)` with `x = sup_e alpha : C^{-1} : alpha` and the per-element
/// minimum of `c0`.
///
/// # Errors
/// Fails on an invalid material field.
pub fn theoretical_rate(mat: &MaterialField) -> Result<f64> {
    let issues = validate_material(mat);
    if !issues.is_empty() {
        return Err(Error::InvalidMaterial(issues[0].to_string()));
    }
    let mut x: f64 = 0.0;
    for e in 0..mat.n_elements() {
        x = x.max(alpha_c_inv_alpha(&mat.elasticity[e], &mat.biot[e])?);
    }
    let c0_min = mat.c0.iter().cloned().fold(f64::INFINITY, f64::min);
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok(x / (c0_min + x))
}
