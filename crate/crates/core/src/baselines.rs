//! Reference estimators: closed-form SVD alignment, principal-axis alignment
//! and Levenberg–Marquardt on a rotation chart.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::estimation::{objective_at, CorrespondenceSet, EstimationError, ProjectionSpec};
use crate::geometry::{project_to_rotation, reorthonormalize, GeometryError, RigidPose};

/// Relative eigenvalue gap under which principal axes count as ambiguous.
pub const PCA_GAP_TOL: f64 = 1e-3;

/// A pose from a closed-form baseline plus its degeneracy flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub pose: RigidPose,
    /// Horn: the cross-covariance does not determine a unique rotation.
    /// PCA: principal values are (nearly) repeated.
    pub flagged: bool,
}

fn centered_sets(corr: &CorrespondenceSet) -> Result<(DVector<f64>, DVector<f64>), EstimationError> {
    corr.require_min_points()?;
    let n = corr.dim().n();
    if corr.observations().nrows() != n {
        return Err(EstimationError::Dimension(format!(
            "baseline needs {n}-D observations, got {}",
            corr.observations().nrows()
        )));
    }
    Ok(corr.weighted_centroids())
}

/// Closed-form least-squares alignment (Horn/Kabsch) with reflection guard.
pub fn horn_svd(corr: &CorrespondenceSet) -> Result<Alignment, EstimationError> {
    let (mbar, obar) = centered_sets(corr)?;
    let n = corr.dim().n();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..corr.len() {
        let o = corr.observations().column(i) - &obar;
        let m = corr.model().column(i) - &mbar;
        h.ger(corr.weight(i), &o, &m, 1.0);
    }
    let projection = project_to_rotation(&h)?;
    let translation = &obar - &projection.rotation * &mbar;
    Ok(Alignment {
        pose: RigidPose::new(projection.rotation, translation)?,
        flagged: projection.degenerate,
    })
}

fn principal_axes(
    points: &DMatrix<f64>,
    center: &DVector<f64>,
    weight: impl Fn(usize) -> f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = points.nrows();
    let mut cov = DMatrix::zeros(n, n);
    let mut total = 0.0;
    for i in 0..points.ncols() {
        let d = points.column(i) - center;
        let c = weight(i);
        cov.ger(c, &d, &d, 1.0);
        total += c;
    }
    cov /= total;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    (axes, values)
}

fn ambiguous(values: &DVector<f64>) -> bool {
    let scale = values[0].abs().max(f64::MIN_POSITIVE);
    values
        .as_slice()
        .windows(2)
        .any(|w| (w[0] - w[1]).abs() <= PCA_GAP_TOL * scale)
}

/// Aligns the principal axes of the observations to those of the model.
///
/// Every sign pattern of the axis correspondence that yields det = +1 is
/// evaluated and the one with the smallest residual is kept.
pub fn pca_align(corr: &CorrespondenceSet) -> Result<Alignment, EstimationError> {
    let (mbar, obar) = centered_sets(corr)?;
    let n = corr.dim().n();
    let weight = |i| corr.weight(i);
    let (em, vm) = principal_axes(corr.model(), &mbar, weight);
    let (eo, vo) = principal_axes(corr.observations(), &obar, weight);
    let flagged = ambiguous(&vm) || ambiguous(&vo);

    let proj = ProjectionSpec::identity(corr.dim());
    let mut best: Option<(f64, RigidPose)> = None;
    for mask in 0..(1u32 << n) {
        let signs = DVector::from_fn(n, |i, _| if mask & (1 << i) != 0 { -1.0 } else { 1.0 });
        let rotation = &eo * DMatrix::from_diagonal(&signs) * em.transpose();
        if rotation.determinant() < 0.0 {
            continue;
        }
        let rotation = reorthonormalize(rotation);
        let translation = &obar - &rotation * &mbar;
        let cost = objective_at(corr, &proj, &rotation, &translation)?;
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, RigidPose::new(rotation, translation)?));
        }
    }
    let (_, pose) = best.expect("half of the sign patterns preserve orientation");
    Ok(Alignment { pose, flagged })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iters: usize,
    pub damping_init: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub grad_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            damping_init: 1e-3,
            damping_up: 10.0,
            damping_down: 0.5,
            grad_tol: 1e-10,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.max_iters == 0
            || self.damping_init.partial_cmp(&0.0) != Some(Ordering::Greater)
            || self.grad_tol.partial_cmp(&0.0) != Some(Ordering::Greater)
        {
            return Err("iteration limit, damping and gradient tolerance must be positive");
        }
        if !(self.damping_up > 1.0 && self.damping_down > 0.0 && self.damping_down < 1.0) {
            return Err("need damping_up > 1 > damping_down > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmResult {
    pub pose: RigidPose,
    /// Gradient norm dropped below `grad_tol`.
    pub converged: bool,
    pub iterations: usize,
    /// Cost at the initial pose and after every accepted step.
    pub cost_trace: Vec<f64>,
}

/// Rotation `exp([ω]×)` via Rodrigues' formula.
fn exp_so3(w: &[f64]) -> DMatrix<f64> {
    let theta = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    let k = DMatrix::from_row_slice(3, 3, &[0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0]);
    let (a, b) = if theta < 1e-8 {
        (1.0 - theta * theta / 6.0, 0.5 - theta * theta / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    DMatrix::identity(3, 3) + &k * a + &k * &k * b
}

fn exp_so2(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

struct LmProblem<'a> {
    corr: &'a CorrespondenceSet,
    proj: &'a ProjectionSpec,
    obs_h: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl LmProblem<'_> {
    fn cost(&self, rotation: &DMatrix<f64>, t: &DVector<f64>) -> f64 {
        objective_at(self.corr, self.proj, rotation, t).unwrap_or(f64::INFINITY)
    }

    /// Normal equations `(JᵀJ, Jᵀr)` for the increment `(rotation chart, translation)`.
    fn normal_equations(&self, rotation: &DMatrix<f64>, t: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let n = rotation.nrows();
        let rdof = if n == 3 { 3 } else { 1 };
        let k = rdof + n;
        let p = self.a.nrows();
        let mut jtj = DMatrix::zeros(k, k);
        let mut jtr = DVector::zeros(k);
        let mut jac = DMatrix::zeros(p, k);
        for i in 0..self.corr.len() {
            let c = self.corr.weight(i);
            let rm = rotation * self.corr.model().column(i);
            let r = self.obs_h.column(i) - &self.a * (&rm + t) - &self.b;
            // d(exp(δ)Rm)/dδ at δ = 0
            let drm = if n == 3 {
                DMatrix::from_row_slice(3, 3, &[0.0, rm[2], -rm[1], -rm[2], 0.0, rm[0], rm[1], -rm[0], 0.0])
            } else {
                DMatrix::from_row_slice(2, 1, &[-rm[1], rm[0]])
            };
            jac.columns_mut(0, rdof).copy_from(&(-(&self.a * drm)));
            jac.columns_mut(rdof, n).copy_from(&(-&self.a));
            jtj.gemm_tr(c, &jac, &jac, 1.0);
            jtr.gemv_tr(c, &jac, &r, 1.0);
        }
        (jtj, jtr)
    }
}

/// Local least-squares refinement from `init`.
///
/// Rotation increments are applied on the left as `exp(δ)·R` and the result
/// is re-orthonormalized after each accepted step.
pub fn levenberg_marquardt(
    corr: &CorrespondenceSet,
    proj: &ProjectionSpec,
    init: &RigidPose,
    cfg: &LmConfig,
) -> Result<LmResult, EstimationError> {
    cfg.validate()
        .map_err(|e| EstimationError::Dimension(format!("invalid LM configuration: {e}")))?;
    if init.dim() != corr.dim() {
        return Err(EstimationError::Geometry(GeometryError::UnsupportedDimension(
            init.dim().n(),
        )));
    }
    corr.require_min_points()?;
    let n = corr.dim().n();
    let obs_h = {
        let rows = proj.matrix().nrows();
        let obs = corr.observations();
        if obs.nrows() == rows {
            obs.clone()
        } else if obs.nrows() + 1 == rows {
            obs.clone().insert_row(rows - 1, 1.0)
        } else {
            return Err(EstimationError::Dimension(format!(
                "observations have {} rows, projection has {rows}",
                obs.nrows()
            )));
        }
    };
    let problem = LmProblem {
        corr,
        proj,
        a: proj.matrix().columns(0, n).into_owned(),
        b: proj.matrix().column(n).into_owned(),
        obs_h,
    };

    let mut rotation = init.rotation().clone();
    let mut t = init.translation().clone();
    let mut cost = problem.cost(&rotation, &t);
    let mut trace = vec![cost];
    let mut damping = cfg.damping_init;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let (jtj, jtr) = problem.normal_equations(&rotation, &t);
        if jtr.amax() <= cfg.grad_tol {
            converged = true;
            break;
        }
        let floor = 1e-12 * jtj.diagonal().amax().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while damping < 1e20 {
            let mut lhs = jtj.clone();
            for i in 0..lhs.nrows() {
                lhs[(i, i)] += damping * (jtj[(i, i)] + floor);
            }
            let Some(step) = lhs.cholesky().map(|ch| ch.solve(&(-&jtr))) else {
                damping *= cfg.damping_up;
                continue;
            };
            let rdof = if n == 3 { 3 } else { 1 };
            let delta_r = if n == 3 {
                exp_so3(&step.as_slice()[..3])
            } else {
                exp_so2(step[0])
            };
            let cand_r = reorthonormalize(delta_r * &rotation);
            let cand_t = &t + step.rows(rdof, n);
            let cand_cost = problem.cost(&cand_r, &cand_t);
            if cand_cost < cost {
                rotation = cand_r;
                t = cand_t;
                cost = cand_cost;
                trace.push(cost);
                damping *= cfg.damping_down;
                accepted = true;
                break;
            }
            damping *= cfg.damping_up;
        }
        if !accepted {
            // No descent left at any damping: stationary to working precision.
            converged = jtr.amax() <= cfg.grad_tol.sqrt();
            break;
        }
    }

    let pose = match RigidPose::new(rotation.clone(), t.clone()) {
        Ok(pose) => pose,
        Err(_) => RigidPose::new(project_to_rotation(&rotation)?.rotation, t)?,
    };
    Ok(LmResult {
        pose,
        converged,
        iterations,
        cost_trace: trace,
    })
}
