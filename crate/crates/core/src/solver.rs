//! Dense path-following barrier solver for convex quadratics over
//! conv(SO(n)) × ℝⁿ, plus the soft-thresholding operator used by the robust
//! estimator.
//!
//! The decision vector is `[hull coordinates | translation]`. Spatial hulls
//! use the nine entries of the rotation block (row-major) and the barrier
//! `-log det A(x)` with `A` the 4×4 matrix of [`so3_lmi`]; planar hulls use
//! the two disk coordinates `(x, y)` and the barrier `-log(1 - x² - y²)`.
//! Every problem has at most 12 variables, so each Newton system is solved
//! with a dense Cholesky factorization.

use std::cmp::Ordering;

use std::sync::LazyLock;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, SymmetricEigen};
use thiserror::Error;

use crate::geometry::{min_eigenvalue4, so3_lmi, Rotation2Hull, Rotation3Hull, RotationHull, SpaceDim};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("quadratic coefficient is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("problem data has inconsistent sizes: {0}")]
    Shape(String),
    #[error("problem data contains non-finite values")]
    NonFinite,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
}

/// How the decision vector maps onto the hull pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    pub dim: SpaceDim,
    /// Whether the translation is part of the decision vector.
    pub translation: bool,
}

impl VariableLayout {
    pub fn new(dim: SpaceDim, translation: bool) -> Self {
        Self { dim, translation }
    }

    pub fn rotation_vars(&self) -> usize {
        match self.dim {
            SpaceDim::Planar => 2,
            SpaceDim::Spatial => 9,
        }
    }

    pub fn translation_vars(&self) -> usize {
        if self.translation {
            self.dim.n()
        } else {
            0
        }
    }

    pub fn num_vars(&self) -> usize {
        self.rotation_vars() + self.translation_vars()
    }

    /// Linear map from hull coordinates to the n² rotation entries (row-major).
    pub fn rotation_lift(&self) -> DMatrix<f64> {
        match self.dim {
            SpaceDim::Planar => DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, -1.0, 1.0, 0.0]),
            SpaceDim::Spatial => DMatrix::identity(9, 9),
        }
    }

    pub fn hull_rotation(&self, x: &DVector<f64>) -> RotationHull {
        match self.dim {
            SpaceDim::Planar => RotationHull::Planar(Rotation2Hull::new(x[0], x[1])),
            SpaceDim::Spatial => RotationHull::Spatial(Rotation3Hull(Matrix3::from_row_slice(&x.as_slice()[..9]))),
        }
    }

    pub fn translation_of(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.translation
            .then(|| x.rows(self.rotation_vars(), self.dim.n()).into_owned())
    }

    /// Barrier parameter of the hull constraint (bound on the duality gap per unit μ).
    pub fn barrier_parameter(&self) -> f64 {
        match self.dim {
            SpaceDim::Planar => 1.0,
            SpaceDim::Spatial => 4.0,
        }
    }
}

/// Minimize `xᵀQx + cᵀx + k` with the rotation block constrained to conv(SO(n)).
#[derive(Debug, Clone, PartialEq)]
pub struct LmiQuadraticProgram {
    q: DMatrix<f64>,
    c: DVector<f64>,
    k: f64,
    layout: VariableLayout,
}

impl LmiQuadraticProgram {
    pub fn new(q: DMatrix<f64>, c: DVector<f64>, k: f64, layout: VariableLayout) -> Result<Self, SolverError> {
        let d = layout.num_vars();
        if q.nrows() != d || q.ncols() != d || c.len() != d {
            return Err(SolverError::Shape(format!(
                "expected {d} variables, got Q {}x{} and c of length {}",
                q.nrows(),
                q.ncols(),
                c.len()
            )));
        }
        if q.iter().chain(c.iter()).any(|v| !v.is_finite()) || !k.is_finite() {
            return Err(SolverError::NonFinite);
        }
        let scale = q.amax().max(1.0);
        if (&q - q.transpose()).amax() > 1e-9 * scale {
            return Err(SolverError::Shape("Q is not symmetric".into()));
        }
        let q = (&q + q.transpose()) * 0.5;
        let min_eigenvalue = SymmetricEigen::new(q.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eigenvalue < -1e-10 * scale {
            return Err(SolverError::NotPsd { min_eigenvalue });
        }
        Ok(Self { q, c, k, layout })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn layout(&self) -> VariableLayout {
        self.layout
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q * x)[0] + self.c.dot(x) + self.k
    }

    /// Same program with the objective multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            q: &self.q * s,
            c: &self.c * s,
            k: self.k * s,
            layout: self.layout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub barrier_mu0: f64,
    pub mu_decrease: f64,
    pub newton_tol: f64,
    pub gap_tol: f64,
    pub max_outer: usize,
    pub max_newton: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            barrier_mu0: 1.0,
            mu_decrease: 0.2,
            newton_tol: 1e-10,
            gap_tol: 1e-8,
            max_outer: 60,
            max_newton: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.barrier_mu0.partial_cmp(&0.0) != Some(Ordering::Greater) {
            return Err(SolverError::InvalidConfig("barrier_mu0 must be positive"));
        }
        if !(self.mu_decrease > 0.0 && self.mu_decrease < 1.0) {
            return Err(SolverError::InvalidConfig("mu_decrease must lie in (0, 1)"));
        }
        if self.newton_tol.partial_cmp(&0.0) != Some(Ordering::Greater)
            || self.gap_tol.partial_cmp(&0.0) != Some(Ordering::Greater)
        {
            return Err(SolverError::InvalidConfig("tolerances must be positive"));
        }
        if self.max_outer == 0 || self.max_newton == 0 {
            return Err(SolverError::InvalidConfig("iteration limits must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    /// A centering step did not reach `newton_tol` within `max_newton` steps.
    NewtonLimit,
    /// `max_outer` barrier updates were not enough to reach `gap_tol`.
    OuterLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Suboptimality bound `m·μ` at the last centered point.
    pub barrier_gap: f64,
    pub outer_iters: usize,
    pub newton_iters: usize,
    /// Hull membership margin of the rotation block at `x`.
    pub boundary_margin: f64,
    pub status: SolverStatus,
    /// True objective after each outer iteration.
    pub objective_trace: Vec<f64>,
}

impl SolverResult {
    pub fn converged(&self) -> bool {
        self.status == SolverStatus::Converged
    }
}

/// Value, gradient and Hessian of a hull barrier at a strictly feasible point.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// `A(x) = I + Σ_k x_k E_k`; `E_k` for the row-major rotation entry k.
static LMI_BASIS: LazyLock<[Matrix4<f64>; 9]> = LazyLock::new(|| {
    std::array::from_fn(|k| {
        let mut e = Matrix3::zeros();
        e[(k / 3, k % 3)] = 1.0;
        so3_lmi(&Rotation3Hull(e)) - Matrix4::identity()
    })
});

fn lmi_matrix(rot: &[f64]) -> Matrix4<f64> {
    so3_lmi(&Rotation3Hull(Matrix3::from_row_slice(&rot[..9])))
}

/// Barrier value only; `None` outside the open hull.
pub fn barrier_value(dim: SpaceDim, rot: &[f64]) -> Option<f64> {
    match dim {
        SpaceDim::Planar => {
            let s = 1.0 - rot[0] * rot[0] - rot[1] * rot[1];
            (s > 0.0).then(|| -s.ln())
        }
        SpaceDim::Spatial => {
            let chol = lmi_matrix(rot).cholesky()?;
            let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            log_det.is_finite().then_some(-log_det)
        }
    }
}

/// Barrier with derivatives; `None` outside the open hull.
pub fn barrier(dim: SpaceDim, rot: &[f64]) -> Option<BarrierEval> {
    match dim {
        SpaceDim::Planar => {
            let (x, y) = (rot[0], rot[1]);
            let s = 1.0 - x * x - y * y;
            if s <= 0.0 {
                return None;
            }
            let v = DVector::from_vec(vec![x, y]);
            let gradient = &v * (2.0 / s);
            let hessian = DMatrix::identity(2, 2) * (2.0 / s) + &v * v.transpose() * (4.0 / (s * s));
            Some(BarrierEval {
                value: -s.ln(),
                gradient,
                hessian,
            })
        }
        SpaceDim::Spatial => {
            let chol = lmi_matrix(rot).cholesky()?;
            let value = -chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum::<f64>();
            if !value.is_finite() {
                return None;
            }
            let inv = chol.inverse();
            let b: [Matrix4<f64>; 9] = std::array::from_fn(|k| inv * LMI_BASIS[k]);
            let gradient = DVector::from_fn(9, |k, _| -b[k].trace());
            let mut hessian = DMatrix::zeros(9, 9);
            for k in 0..9 {
                for l in k..9 {
                    // tr(B_k B_l)
                    let h = b[k].component_mul(&b[l].transpose()).sum();
                    hessian[(k, l)] = h;
                    hessian[(l, k)] = h;
                }
            }
            Some(BarrierEval {
                value,
                gradient,
                hessian,
            })
        }
    }
}

/// Hull membership margin of the rotation coordinates.
pub fn constraint_margin(dim: SpaceDim, rot: &[f64]) -> f64 {
    match dim {
        SpaceDim::Planar => 1.0 - rot[0] * rot[0] - rot[1] * rot[1],
        SpaceDim::Spatial => min_eigenvalue4(lmi_matrix(rot)),
    }
}

const ARMIJO: f64 = 0.01;
const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-14;

/// Path-following barrier method starting from the hull center.
pub fn solve_hull_qp(prob: &LmiQuadraticProgram, cfg: &SolverConfig) -> Result<SolverResult, SolverError> {
    cfg.validate()?;
    let layout = prob.layout;
    let dim = layout.dim;
    let r = layout.rotation_vars();
    let d = layout.num_vars();
    let m = layout.barrier_parameter();

    let mut x = DVector::zeros(d);
    let mut mu = cfg.barrier_mu0;
    let mut outer_iters = 0;
    let mut newton_iters = 0;
    let mut trace = Vec::new();
    let mut status = SolverStatus::OuterLimit;

    let q2 = &prob.q * 2.0;
    let penalized = |x: &DVector<f64>, mu: f64| -> Option<f64> {
        barrier_value(dim, &x.as_slice()[..r]).map(|phi| prob.objective(x) + mu * phi)
    };

    'outer: while outer_iters < cfg.max_outer {
        outer_iters += 1;
        let mut centered = false;
        for _ in 0..cfg.max_newton {
            let bar = barrier(dim, &x.as_slice()[..r]).expect("iterates stay strictly feasible");
            let mut grad = &q2 * &x + &prob.c;
            let mut hess = q2.clone();
            grad.rows_mut(0, r).axpy(mu, &bar.gradient, 1.0);
            hess.view_mut((0, 0), (r, r))
                .zip_apply(&bar.hessian, |h, b| *h += mu * b);

            let step = newton_direction(hess, &grad);
            let decrement = -grad.dot(&step);
            if decrement * 0.5 <= cfg.newton_tol {
                centered = true;
                break;
            }

            let f0 = prob.objective(&x) + mu * bar.value;
            let mut t = 1.0;
            let accepted = loop {
                let candidate = &x + &step * t;
                if let Some(f) = penalized(&candidate, mu) {
                    if f <= f0 - ARMIJO * t * decrement {
                        break Some(candidate);
                    }
                }
                t *= BACKTRACK;
                if t < MIN_STEP {
                    break None;
                }
            };
            match accepted {
                Some(next) => {
                    x = next;
                    newton_iters += 1;
                }
                None => {
                    // No representable descent left at this μ.
                    centered = true;
                    break;
                }
            }
        }
        trace.push(prob.objective(&x));
        if !centered {
            status = SolverStatus::NewtonLimit;
            break 'outer;
        }
        if m * mu <= cfg.gap_tol {
            status = SolverStatus::Converged;
            break 'outer;
        }
        mu *= cfg.mu_decrease;
    }

    let objective = prob.objective(&x);
    let boundary_margin = constraint_margin(dim, &x.as_slice()[..r]);
    Ok(SolverResult {
        x,
        objective,
        barrier_gap: m * mu,
        outer_iters,
        newton_iters,
        boundary_margin,
        status,
        objective_trace: trace,
    })
}

/// Solves `H Δ = -g`; flat directions (e.g. unobservable translation) get a
/// small ridge so the step stays finite.
fn newton_direction(hess: DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let scale = hess.diagonal().amax().max(1e-300);
    let mut ridge = 0.0;
    loop {
        let mut h = hess.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += ridge;
        }
        if let Some(chol) = h.cholesky() {
            let step = chol.solve(&(-grad));
            if step.iter().all(|v| v.is_finite()) {
                return step;
            }
        }
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
    }
}

/// Elementwise shrinkage `sign(r)·max(|r| - κ, 0)`, the minimizer of
/// `(r - z)² + 2κ|z|`.
pub fn soft_threshold(r: &[f64], kappa: f64) -> Vec<f64> {
    r.iter().map(|&v| shrink(v, kappa)).collect()
}

pub(crate) fn shrink(v: f64, kappa: f64) -> f64 {
    assert!(kappa >= 0.0, "threshold must be non-negative");
    if v > kappa {
        v - kappa
    } else if v < -kappa {
        v + kappa
    } else {
        0.0
    }
}
