//! Rotation and pose types, orbitope membership, quaternion/Gram maps and
//! the Frobenius projection onto SO(n).
//!
//! Planar rotations use the chart `[[x, y], [-y, x]]` with `x = cos θ`,
//! `y = sin θ`; the convex hull of SO(2) is the unit disk in `(x, y)`.
//! Spatial hull membership is decided by the 4×4 linear matrix inequality
//! returned by [`so3_lmi`].

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Matrix4, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Default tolerance on the hull membership margin.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-7;

/// Tolerance used when validating [`RigidPose`] orthogonality and determinant.
pub const RIGID_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("quaternion norm {norm} is not 1")]
    NonUnitQuaternion { norm: f64 },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("unsupported dimension {0}; only 2 and 3 are supported")]
    UnsupportedDimension(usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("rotation is not orthonormal with det +1 (orthogonality error {orth_err:.3e}, det {det})")]
    NotARotation { orth_err: f64, det: f64 },
    #[error("translation has length {got}, expected {expected}")]
    TranslationLength { expected: usize, got: usize },
}

/// Spatial dimension of a pose problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceDim {
    Planar,
    Spatial,
}

impl SpaceDim {
    pub fn n(self) -> usize {
        match self {
            SpaceDim::Planar => 2,
            SpaceDim::Spatial => 3,
        }
    }

    pub fn from_n(n: usize) -> Result<Self, GeometryError> {
        match n {
            2 => Ok(SpaceDim::Planar),
            3 => Ok(SpaceDim::Spatial),
            other => Err(GeometryError::UnsupportedDimension(other)),
        }
    }
}

/// A point `(x, y)` of the disk parameterizing conv(SO(2)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation2Hull {
    pub x: f64,
    pub y: f64,
}

impl Rotation2Hull {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// The rotation `[[cos θ, sin θ], [-sin θ, cos θ]]`.
    pub fn from_angle(theta: f64) -> Self {
        Self {
            x: theta.cos(),
            y: theta.sin(),
        }
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.x, self.y, -self.y, self.x)
    }

    /// Margin `1 - x² - y²`; zero on SO(2), positive strictly inside.
    pub fn margin(&self) -> f64 {
        1.0 - self.x * self.x - self.y * self.y
    }
}

/// A 3×3 matrix tested against conv(SO(3)). Any matrix can be wrapped; use
/// [`hull_membership_so3`] to decide membership.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3Hull(pub Matrix3<f64>);

impl Rotation3Hull {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// A quaternion `(u0, u1, u2, u3)` with unit Euclidean norm.
///
/// `u` and `-u` describe the same rotation; both are accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion([f64; 4]);

impl UnitQuaternion {
    /// Accepts `u` if its norm is within 1e-9 of one, then renormalizes.
    pub fn new(u: [f64; 4]) -> Result<Self, GeometryError> {
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
            return Err(GeometryError::NonUnitQuaternion { norm });
        }
        Ok(Self(u.map(|v| v / norm)))
    }

    /// Normalizes an arbitrary non-zero 4-vector.
    pub fn normalize(u: [f64; 4]) -> Result<Self, GeometryError> {
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(GeometryError::NonUnitQuaternion { norm });
        }
        Ok(Self(u.map(|v| v / norm)))
    }

    pub fn coords(&self) -> [f64; 4] {
        self.0
    }

    /// The Gram matrix `u uᵀ`.
    pub fn gram(&self) -> GramPoint {
        let u = self.0;
        GramPoint(Matrix4::from_fn(|i, j| u[i] * u[j]))
    }
}

/// A symmetric 4×4 matrix; the image of the PSD trace-one matrices under
/// [`gram_to_rotation`] is conv(SO(3)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramPoint(Matrix4<f64>);

impl GramPoint {
    pub fn new(v: Matrix4<f64>) -> Result<Self, GeometryError> {
        if v.iter().any(|e| !e.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let scale = v.amax().max(1.0);
        if (v - v.transpose()).amax() > 1e-12 * scale {
            return Err(GeometryError::NotSymmetric);
        }
        Ok(Self(v))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }
}

/// Rotation block of a hull pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationHull {
    Planar(Rotation2Hull),
    Spatial(Rotation3Hull),
}

impl RotationHull {
    pub fn dim(&self) -> SpaceDim {
        match self {
            RotationHull::Planar(_) => SpaceDim::Planar,
            RotationHull::Spatial(_) => SpaceDim::Spatial,
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            RotationHull::Planar(r) => {
                let m = r.matrix();
                DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
            }
            RotationHull::Spatial(r) => DMatrix::from_fn(3, 3, |i, j| r.0[(i, j)]),
        }
    }

    /// Membership margin: `1 - x² - y²` in the plane, `λ_min` of the LMI in space.
    pub fn margin(&self) -> f64 {
        match self {
            RotationHull::Planar(r) => r.margin(),
            RotationHull::Spatial(r) => hull_membership_so3(r, 0.0).margin,
        }
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.matrix().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }
}

/// A point of conv(SE(n)): hull rotation block plus free translation.
#[derive(Debug, Clone, PartialEq)]
pub struct HullPose {
    pub rotation: RotationHull,
    pub translation: DVector<f64>,
}

impl HullPose {
    /// Homogeneous `(n+1)×(n+1)` form with last row `(0 … 0 1)`.
    pub fn homogeneous(&self) -> DMatrix<f64> {
        homogeneous(&self.rotation.matrix(), &self.translation)
    }
}

/// An element of SE(n), n ∈ {2, 3}.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidPose {
    rotation: DMatrix<f64>,
    translation: DVector<f64>,
}

impl RigidPose {
    pub fn new(rotation: DMatrix<f64>, translation: DVector<f64>) -> Result<Self, GeometryError> {
        let n = rotation.nrows();
        SpaceDim::from_n(n)?;
        if rotation.ncols() != n {
            return Err(GeometryError::UnsupportedDimension(rotation.ncols()));
        }
        if translation.len() != n {
            return Err(GeometryError::TranslationLength {
                expected: n,
                got: translation.len(),
            });
        }
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let orth_err = (rotation.transpose() * &rotation - DMatrix::identity(n, n)).amax();
        let det = rotation.determinant();
        if orth_err > RIGID_TOL || (det - 1.0).abs() > RIGID_TOL {
            return Err(GeometryError::NotARotation { orth_err, det });
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity(dim: SpaceDim) -> Self {
        let n = dim.n();
        Self {
            rotation: DMatrix::identity(n, n),
            translation: DVector::zeros(n),
        }
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &DVector<f64> {
        &self.translation
    }

    pub fn dim(&self) -> SpaceDim {
        match self.rotation.nrows() {
            2 => SpaceDim::Planar,
            _ => SpaceDim::Spatial,
        }
    }

    pub fn homogeneous(&self) -> DMatrix<f64> {
        homogeneous(&self.rotation, &self.translation)
    }

    /// Applies the pose to every column of `points` (n×N).
    pub fn transform_points(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.rotation * points;
        for mut col in out.column_iter_mut() {
            col += &self.translation;
        }
        out
    }

    /// Composition `self ∘ other`.
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: &self.rotation * &other.rotation,
            translation: &self.rotation * &other.translation + &self.translation,
        }
    }
}

fn homogeneous(rotation: &DMatrix<f64>, translation: &DVector<f64>) -> DMatrix<f64> {
    let n = rotation.nrows();
    let mut h = DMatrix::identity(n + 1, n + 1);
    h.view_mut((0, 0), (n, n)).copy_from(rotation);
    h.view_mut((0, n), (n, 1)).copy_from(translation);
    h
}

/// Outcome of a hull membership test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub inside: bool,
    pub margin: f64,
}

/// The 4×4 symmetric matrix whose positive semidefiniteness characterizes
/// conv(SO(3)).
pub fn so3_lmi(r: &Rotation3Hull) -> Matrix4<f64> {
    let x = |i: usize, j: usize| r.0[(i - 1, j - 1)];
    let a00 = 1.0 + x(1, 1) + x(2, 2) + x(3, 3);
    let a01 = x(3, 2) - x(2, 3);
    let a02 = x(1, 3) - x(3, 1);
    let a03 = x(2, 1) - x(1, 2);
    let a11 = 1.0 + x(1, 1) - x(2, 2) - x(3, 3);
    let a12 = x(2, 1) + x(1, 2);
    let a13 = x(1, 3) + x(3, 1);
    let a22 = 1.0 - x(1, 1) + x(2, 2) - x(3, 3);
    let a23 = x(3, 2) + x(2, 3);
    let a33 = 1.0 - x(1, 1) - x(2, 2) + x(3, 3);
    Matrix4::new(
        a00, a01, a02, a03, //
        a01, a11, a12, a13, //
        a02, a12, a22, a23, //
        a03, a13, a23, a33,
    )
}

/// Minimum eigenvalue of a symmetric 4×4 matrix.
pub(crate) fn min_eigenvalue4(m: Matrix4<f64>) -> f64 {
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn hull_membership_so3(r: &Rotation3Hull, tol: f64) -> Membership {
    let margin = min_eigenvalue4(so3_lmi(r));
    Membership {
        inside: margin >= -tol,
        margin,
    }
}

pub fn hull_membership_so2(r: &Rotation2Hull, tol: f64) -> Membership {
    let margin = r.margin();
    Membership {
        inside: margin >= -tol,
        margin,
    }
}

/// Rotation matrix of a unit quaternion.
pub fn quat_to_rotation(u: &UnitQuaternion) -> Matrix3<f64> {
    let [u0, u1, u2, u3] = u.0;
    Matrix3::new(
        2.0 * (u0 * u0 + u1 * u1) - 1.0,
        2.0 * (u1 * u2 - u0 * u3),
        2.0 * (u1 * u3 + u0 * u2),
        2.0 * (u1 * u2 + u0 * u3),
        2.0 * (u0 * u0 + u2 * u2) - 1.0,
        2.0 * (u2 * u3 - u0 * u1),
        2.0 * (u1 * u3 - u0 * u2),
        2.0 * (u2 * u3 + u0 * u1),
        2.0 * (u0 * u0 + u3 * u3) - 1.0,
    )
}

/// The affine map sending `u uᵀ` to the rotation of `u`, applied to any
/// symmetric 4×4 matrix (quadratic monomials `u_a u_b` replaced by `V_ab`).
pub fn gram_to_rotation(v: &GramPoint) -> Rotation3Hull {
    let v = |a: usize, b: usize| v.0[(a, b)];
    Rotation3Hull(Matrix3::new(
        2.0 * (v(0, 0) + v(1, 1)) - 1.0,
        2.0 * (v(1, 2) - v(0, 3)),
        2.0 * (v(1, 3) + v(0, 2)),
        2.0 * (v(1, 2) + v(0, 3)),
        2.0 * (v(0, 0) + v(2, 2)) - 1.0,
        2.0 * (v(2, 3) - v(0, 1)),
        2.0 * (v(1, 3) - v(0, 2)),
        2.0 * (v(2, 3) + v(0, 1)),
        2.0 * (v(0, 0) + v(3, 3)) - 1.0,
    ))
}

/// Result of [`project_to_rotation`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub rotation: DMatrix<f64>,
    /// The nearest rotation is not unique; `rotation` is one minimizer.
    pub degenerate: bool,
}

/// Nearest element of SO(n) in Frobenius norm, `U diag(1, …, 1, d) Vᵀ` with
/// `d = det(U Vᵀ)`.
pub fn project_to_rotation(s: &DMatrix<f64>) -> Result<Projection, GeometryError> {
    let n = s.nrows();
    SpaceDim::from_n(n)?;
    if s.ncols() != n {
        return Err(GeometryError::UnsupportedDimension(s.ncols()));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let svd = s.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let sigma = svd.singular_values;

    // Order singular values descending without assuming the decomposition does.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let smallest = order[n - 1];
    let second = order[n - 2];

    let d = (&u * &v_t).determinant().signum();
    let mut diag = DVector::from_element(n, 1.0);
    if d < 0.0 {
        diag[smallest] = -1.0;
    }
    let rotation = &u * DMatrix::from_diagonal(&diag) * &v_t;

    let scale = sigma[order[0]].max(f64::MIN_POSITIVE);
    let tie = 1e-9 * scale;
    let degenerate = if d < 0.0 {
        sigma[second] - sigma[smallest] <= tie
    } else {
        sigma[second] + sigma[smallest] <= tie
    };
    Ok(Projection {
        rotation: reorthonormalize(rotation),
        degenerate,
    })
}

/// One Newton step of the polar iteration; removes rounding drift from a
/// matrix that is already a rotation to within ~1e-12.
pub(crate) fn reorthonormalize(r: DMatrix<f64>) -> DMatrix<f64> {
    match r.clone().try_inverse() {
        Some(inv) => (r + inv.transpose()) * 0.5,
        None => r,
    }
}

/// Uniformly distributed rotation block of size n×n.
///
/// Spatial rotations normalize four independent standard normals into a unit
/// quaternion; planar rotations draw θ uniformly from [0, 2π).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, dim: SpaceDim) -> DMatrix<f64> {
    match dim {
        SpaceDim::Planar => {
            let theta = rng.random::<f64>() * TAU;
            let m = Rotation2Hull::from_angle(theta).matrix();
            DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
        }
        SpaceDim::Spatial => loop {
            let u: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            if let Ok(q) = UnitQuaternion::normalize(u) {
                let m = quat_to_rotation(&q);
                break DMatrix::from_fn(3, 3, |i, j| m[(i, j)]);
            }
        },
    }
}

/// Convenience wrapper building a [`RigidPose`] from [`random_rotation`] and a
/// translation drawn uniformly from `[-extent, extent]ⁿ`.
pub fn random_pose<R: Rng + ?Sized>(rng: &mut R, dim: SpaceDim, extent: f64) -> RigidPose {
    let rotation = random_rotation(rng, dim);
    let translation = DVector::from_fn(dim.n(), |_, _| (rng.random::<f64>() * 2.0 - 1.0) * extent);
    RigidPose { rotation, translation }
}
