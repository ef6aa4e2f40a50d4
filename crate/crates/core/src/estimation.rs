//! Relaxed least-squares pose estimation over conv(SE(n)).
//!
//! The objective `Σ cᵢ‖oᵢ − P S m̃ᵢ‖²` (with `m̃ = (m, 1)`) is reduced to a
//! small quadratic in the hull coordinates by accumulating weighted second
//! moments of the correspondences in one pass; the N-fold Kronecker form is
//! never built.
//!
//! For orthogonal `P` (including the identity) the quadratic term
//! `‖P ρ m̃‖²` is constant on SO(n), so by default the estimator minimizes the
//! resulting linear objective over the hull. Its minimum is attained at an
//! extreme point, i.e. on SO(n), and coincides with the global optimum of the
//! rigid problem. The literal quadratic relaxation is available through
//! [`RelaxationObjective::Quadratic`] and is always used for general `P` and
//! for the ℓ1-robust variant.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{project_to_rotation, GeometryError, HullPose, RigidPose, RotationHull, SpaceDim};
use crate::solver::{
    shrink, solve_hull_qp, LmiQuadraticProgram, SolverConfig, SolverError, SolverResult, VariableLayout,
};

/// Hull margin below which a solution counts as a boundary point.
pub const EXACT_MARGIN_TOL: f64 = 1e-5;
/// Allowed deviation of the hull rotation's singular values from one.
pub const EXACT_SINGULAR_TOL: f64 = 1e-4;
/// Tolerance for recognizing an orthogonal projection matrix.
pub const ORTHOGONAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("model has {model} points but observations have {observations}")]
    LengthMismatch { model: usize, observations: usize },
    #[error("need at least {required} correspondences, got {got}")]
    TooFewPoints { required: usize, got: usize },
    #[error("weights must be finite and strictly positive (index {0})")]
    BadWeight(usize),
    #[error("weights have length {got}, expected {expected}")]
    WeightLength { expected: usize, got: usize },
    #[error("correspondences contain non-finite coordinates")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("lambda must be positive and finite, got {0}")]
    BadLambda(f64),
    #[error("the linearized objective requires an orthogonal projection")]
    NotOrthogonal,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Paired model points `mᵢ` (columns of an n×N matrix) and observations `oᵢ`
/// (columns of a p×N matrix), with optional positive weights `cᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    model: DMatrix<f64>,
    observations: DMatrix<f64>,
    weights: Option<DVector<f64>>,
}

impl CorrespondenceSet {
    pub fn new(
        model: DMatrix<f64>,
        observations: DMatrix<f64>,
        weights: Option<DVector<f64>>,
    ) -> Result<Self, EstimationError> {
        SpaceDim::from_n(model.nrows())?;
        if model.ncols() != observations.ncols() {
            return Err(EstimationError::LengthMismatch {
                model: model.ncols(),
                observations: observations.ncols(),
            });
        }
        if model.ncols() == 0 {
            return Err(EstimationError::TooFewPoints { required: 1, got: 0 });
        }
        if observations.nrows() == 0 {
            return Err(EstimationError::Dimension("observations have zero rows".into()));
        }
        if model.iter().chain(observations.iter()).any(|v| !v.is_finite()) {
            return Err(EstimationError::NonFinite);
        }
        if let Some(w) = &weights {
            if w.len() != model.ncols() {
                return Err(EstimationError::WeightLength {
                    expected: model.ncols(),
                    got: w.len(),
                });
            }
            if let Some(i) = w.iter().position(|&c| !(c.is_finite() && c > 0.0)) {
                return Err(EstimationError::BadWeight(i));
            }
        }
        Ok(Self {
            model,
            observations,
            weights,
        })
    }

    pub fn dim(&self) -> SpaceDim {
        match self.model.nrows() {
            2 => SpaceDim::Planar,
            _ => SpaceDim::Spatial,
        }
    }

    pub fn len(&self) -> usize {
        self.model.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.model.ncols() == 0
    }

    pub fn model(&self) -> &DMatrix<f64> {
        &self.model
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.observations
    }

    pub fn weights(&self) -> Option<&DVector<f64>> {
        self.weights.as_ref()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// Same model and weights, new observations.
    pub fn with_observations(&self, observations: DMatrix<f64>) -> Result<Self, EstimationError> {
        Self::new(self.model.clone(), observations, self.weights.clone())
    }

    /// Minimum count for a well-posed spatial (3) or planar (2) estimate.
    pub(crate) fn require_min_points(&self) -> Result<(), EstimationError> {
        let required = match self.dim() {
            SpaceDim::Planar => 2,
            SpaceDim::Spatial => 3,
        };
        if self.len() < required {
            return Err(EstimationError::TooFewPoints {
                required,
                got: self.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn weighted_centroids(&self) -> (DVector<f64>, DVector<f64>) {
        let mut total = 0.0;
        let mut m = DVector::zeros(self.model.nrows());
        let mut o = DVector::zeros(self.observations.nrows());
        for i in 0..self.len() {
            let c = self.weight(i);
            total += c;
            m.axpy(c, &self.model.column(i), 1.0);
            o.axpy(c, &self.observations.column(i), 1.0);
        }
        (m / total, o / total)
    }
}

/// Projection `P` acting on homogeneous model coordinates: a `p×(n+1)` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSpec {
    matrix: DMatrix<f64>,
    is_identity: bool,
    is_orthogonal: bool,
}

impl ProjectionSpec {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, EstimationError> {
        let cols = matrix.ncols();
        SpaceDim::from_n(cols.saturating_sub(1))?;
        if matrix.nrows() == 0 || matrix.nrows() > cols {
            return Err(EstimationError::Dimension(format!(
                "projection must have between 1 and {cols} rows, got {}",
                matrix.nrows()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(EstimationError::NonFinite);
        }
        let square = matrix.nrows() == cols;
        let is_identity = square && matrix == DMatrix::identity(cols, cols);
        let is_orthogonal =
            square && (matrix.transpose() * &matrix - DMatrix::identity(cols, cols)).amax() <= ORTHOGONAL_TOL;
        Ok(Self {
            matrix,
            is_identity,
            is_orthogonal,
        })
    }

    pub fn identity(dim: SpaceDim) -> Self {
        let k = dim.n() + 1;
        Self {
            matrix: DMatrix::identity(k, k),
            is_identity: true,
            is_orthogonal: true,
        }
    }

    /// Drops the last spatial coordinate (e.g. `z` for n = 3).
    pub fn orthographic(dim: SpaceDim) -> Self {
        let n = dim.n();
        let mut matrix = DMatrix::zeros(n - 1, n + 1);
        for i in 0..n - 1 {
            matrix[(i, i)] = 1.0;
        }
        Self {
            matrix,
            is_identity: false,
            is_orthogonal: false,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn is_identity(&self) -> bool {
        self.is_identity
    }

    pub fn is_orthogonal(&self) -> bool {
        self.is_orthogonal
    }

    pub fn dim(&self) -> SpaceDim {
        match self.matrix.ncols() {
            3 => SpaceDim::Planar,
            _ => SpaceDim::Spatial,
        }
    }

    /// Observations either have one entry per row of `P`, or one fewer with an
    /// implied trailing homogeneous coordinate of 1.
    fn homogenize(&self, observations: &DMatrix<f64>) -> Result<DMatrix<f64>, EstimationError> {
        let rows = self.matrix.nrows();
        if observations.nrows() == rows {
            Ok(observations.clone())
        } else if observations.nrows() + 1 == rows {
            Ok(observations.clone().insert_row(rows - 1, 1.0))
        } else {
            Err(EstimationError::Dimension(format!(
                "observations have {} rows, projection has {rows}",
                observations.nrows()
            )))
        }
    }

    fn check(&self, corr: &CorrespondenceSet) -> Result<DMatrix<f64>, EstimationError> {
        if self.dim() != corr.dim() {
            return Err(EstimationError::Dimension(format!(
                "projection acts on {}-D points, model is {}-D",
                self.dim().n(),
                corr.dim().n()
            )));
        }
        self.homogenize(corr.observations())
    }
}

/// Which objective is minimized over the hull.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelaxationObjective {
    /// Linearized for orthogonal projections, quadratic otherwise.
    #[default]
    Auto,
    /// The quadratic least-squares objective over the hull.
    Quadratic,
    /// `‖P ρ m̃‖²` replaced by its constant value on SO(n); orthogonal `P` only.
    Linearized,
}

/// The objective actually solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveForm {
    Quadratic,
    Linearized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub solver: SolverConfig,
    pub objective: RelaxationObjective,
    pub robust_max_rounds: usize,
    pub robust_tol: f64,
    pub outlier_threshold: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            objective: RelaxationObjective::Auto,
            robust_max_rounds: 100,
            robust_tol: 1e-9,
            outlier_threshold: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustDiagnostics {
    pub lambda: f64,
    pub rounds: usize,
    pub converged: bool,
    /// Robust objective after each round.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub hull_pose: HullPose,
    pub rigid_pose: RigidPose,
    /// The hull solution lies on SO(n) (boundary margin and singular values
    /// within tolerance and the solver converged).
    pub exact: bool,
    /// Weighted sum of squared residuals at `rigid_pose`.
    pub residual: f64,
    pub outliers: Vec<usize>,
    /// Outlier correction, one column per correspondence (robust mode only).
    pub z1: Option<DMatrix<f64>>,
    pub diagnostics: SolverResult,
    pub form: ObjectiveForm,
    /// The nearest rotation to the hull rotation was not unique.
    pub projection_degenerate: bool,
    pub robust: Option<RobustDiagnostics>,
}

/// Weighted moments of a correspondence set: everything the objective needs.
#[derive(Debug, Clone)]
struct Moments {
    n: usize,
    /// `A = P[:, :n]`, `b = P[:, n]`
    a: DMatrix<f64>,
    b: DVector<f64>,
    sw: f64,
    smm: DMatrix<f64>,
    sm: DVector<f64>,
    /// `Σ c v mᵀ` with `v = ô − b`
    svm: DMatrix<f64>,
    sv: DVector<f64>,
    svv: f64,
}

impl Moments {
    fn accumulate(
        model: &DMatrix<f64>,
        obs_h: &DMatrix<f64>,
        proj: &DMatrix<f64>,
        weight: impl Fn(usize) -> f64,
    ) -> Self {
        let n = model.nrows();
        let p = obs_h.nrows();
        let a = proj.columns(0, n).into_owned();
        let b = proj.column(n).into_owned();
        let mut m = Moments {
            n,
            a,
            b,
            sw: 0.0,
            smm: DMatrix::zeros(n, n),
            sm: DVector::zeros(n),
            svm: DMatrix::zeros(p, n),
            sv: DVector::zeros(p),
            svv: 0.0,
        };
        let mut v = DVector::zeros(p);
        for i in 0..model.ncols() {
            let c = weight(i);
            let mi = model.column(i);
            v.copy_from(&obs_h.column(i));
            v -= &m.b;
            m.sw += c;
            m.smm.ger(c, &mi, &mi, 1.0);
            m.sm.axpy(c, &mi, 1.0);
            m.svm.ger(c, &v, &mi, 1.0);
            m.sv.axpy(c, &v, 1.0);
            m.svv += c * v.norm_squared();
        }
        m
    }

    /// Quadratic program in `(hull coordinates[, translation])`.
    fn program(&self, layout: VariableLayout, form: ObjectiveForm) -> Result<LmiQuadraticProgram, SolverError> {
        let n = self.n;
        let ne = n * n;
        let with_t = layout.translation;
        let full = ne + if with_t { n } else { 0 };
        let w = self.a.transpose() * &self.a;
        let atv = self.a.transpose() * &self.svm; // n×n
        let atsv = self.a.transpose() * &self.sv;

        let mut qf = DMatrix::zeros(full, full);
        let mut cf = DVector::zeros(full);
        let mut k = self.svv;
        match form {
            ObjectiveForm::Quadratic => {
                for a in 0..n {
                    for b in 0..n {
                        for a2 in 0..n {
                            for b2 in 0..n {
                                qf[(a * n + b, a2 * n + b2)] = w[(a, a2)] * self.smm[(b, b2)];
                            }
                        }
                    }
                }
            }
            ObjectiveForm::Linearized => {
                debug_assert!(!with_t, "linearized objective is rotation-only");
                // ‖A R m‖² = ‖m‖² on SO(n) when A has orthonormal columns.
                k += self.smm.trace();
            }
        }
        for a in 0..n {
            for b in 0..n {
                cf[a * n + b] = -2.0 * atv[(a, b)];
            }
        }
        if with_t {
            for a in 0..n {
                for b in 0..n {
                    for a2 in 0..n {
                        let cross = w[(a, a2)] * self.sm[b];
                        qf[(a * n + b, ne + a2)] = cross;
                        qf[(ne + a2, a * n + b)] = cross;
                    }
                }
            }
            qf.view_mut((ne, ne), (n, n)).copy_from(&(&w * self.sw));
            cf.rows_mut(ne, n).copy_from(&(&atsv * -2.0));
        }

        let lift = layout.rotation_lift();
        let r = layout.rotation_vars();
        let d = layout.num_vars();
        let mut l = DMatrix::zeros(full, d);
        l.view_mut((0, 0), (ne, r)).copy_from(&lift);
        if with_t {
            l.view_mut((ne, r), (n, n)).fill_with_identity();
        }
        let q = l.transpose() * qf * &l;
        let c = l.transpose() * cf;
        LmiQuadraticProgram::new(q, c, k, layout)
    }
}

/// Joint quadratic program over `(hull coordinates, translation)` whose value
/// equals `Σ cᵢ‖oᵢ − P S m̃ᵢ‖²`.
pub fn assemble(corr: &CorrespondenceSet, proj: &ProjectionSpec) -> Result<LmiQuadraticProgram, EstimationError> {
    let obs_h = proj.check(corr)?;
    let moments = Moments::accumulate(corr.model(), &obs_h, proj.matrix(), |i| corr.weight(i));
    Ok(moments.program(VariableLayout::new(corr.dim(), true), ObjectiveForm::Quadratic)?)
}

/// Aligns weighted centroids: returns `t0 = ō − m̄` and the correspondences with
/// both sides centered at the origin. Observations must be n-dimensional.
pub fn center_translation(corr: &CorrespondenceSet) -> Result<(DVector<f64>, CorrespondenceSet), EstimationError> {
    let n = corr.dim().n();
    if corr.observations().nrows() != n {
        return Err(EstimationError::Dimension(format!(
            "centering needs {n}-D observations, got {}",
            corr.observations().nrows()
        )));
    }
    let (mbar, obar) = corr.weighted_centroids();
    let mut model = corr.model().clone();
    let mut obs = corr.observations().clone();
    for mut col in model.column_iter_mut() {
        col -= &mbar;
    }
    for mut col in obs.column_iter_mut() {
        col -= &obar;
    }
    let centered = CorrespondenceSet {
        model,
        observations: obs,
        weights: corr.weights.clone(),
    };
    Ok((obar - mbar, centered))
}

/// Weighted sum of squared residuals `Σ cᵢ‖oᵢ − P S m̃ᵢ‖²` for any `(R, t)`.
pub fn objective_at(
    corr: &CorrespondenceSet,
    proj: &ProjectionSpec,
    rotation: &DMatrix<f64>,
    translation: &DVector<f64>,
) -> Result<f64, EstimationError> {
    let obs_h = proj.check(corr)?;
    let n = corr.dim().n();
    let a = proj.matrix().columns(0, n);
    let b = proj.matrix().column(n);
    let mut total = 0.0;
    for i in 0..corr.len() {
        let x = rotation * corr.model().column(i) + translation;
        let pred = a * x + b;
        total += corr.weight(i) * (obs_h.column(i) - pred).norm_squared();
    }
    Ok(total)
}

pub fn residual(corr: &CorrespondenceSet, proj: &ProjectionSpec, pose: &RigidPose) -> Result<f64, EstimationError> {
    objective_at(corr, proj, pose.rotation(), pose.translation())
}

/// Boundary test applied to a hull rotation.
pub fn is_exact(rotation: &RotationHull, margin: f64, rigid: &DMatrix<f64>) -> bool {
    margin <= EXACT_MARGIN_TOL
        && rotation
            .singular_values()
            .iter()
            .all(|s| (s - 1.0).abs() <= EXACT_SINGULAR_TOL)
        && (rotation.matrix() - rigid).norm() <= EXACT_SINGULAR_TOL
}

fn resolve_form(objective: RelaxationObjective, proj: &ProjectionSpec) -> Result<ObjectiveForm, EstimationError> {
    match objective {
        RelaxationObjective::Auto if proj.is_orthogonal() => Ok(ObjectiveForm::Linearized),
        RelaxationObjective::Auto | RelaxationObjective::Quadratic => Ok(ObjectiveForm::Quadratic),
        RelaxationObjective::Linearized if proj.is_orthogonal() => Ok(ObjectiveForm::Linearized),
        RelaxationObjective::Linearized => Err(EstimationError::NotOrthogonal),
    }
}

/// Relaxed pose estimate.
///
/// With an orthogonal `P` the observations are mapped back through `Pᵀ`, the
/// translation is eliminated by centroid alignment and only the rotation is
/// solved for; otherwise rotation and translation are solved jointly.
pub fn estimate(
    corr: &CorrespondenceSet,
    proj: &ProjectionSpec,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport, EstimationError> {
    corr.require_min_points()?;
    let obs_h = proj.check(corr)?;
    let form = resolve_form(cfg.objective, proj)?;
    let dim = corr.dim();
    let n = dim.n();

    let (hull_pose, rigid_rotation, rigid_translation, diagnostics, degenerate) = if proj.is_orthogonal() {
        let back = proj.matrix().transpose() * &obs_h;
        let reduced = CorrespondenceSet {
            model: corr.model().clone(),
            observations: back.rows(0, n).into_owned(),
            weights: corr.weights.clone(),
        };
        let (mbar, obar) = reduced.weighted_centroids();
        let (_, centered) = center_translation(&reduced)?;
        let identity = ProjectionSpec::identity(dim);
        let obs_c = identity.homogenize(centered.observations())?;
        let moments = Moments::accumulate(centered.model(), &obs_c, identity.matrix(), |i| centered.weight(i));
        let layout = VariableLayout::new(dim, false);
        let prog = moments.program(layout, form)?;
        let sol = solve_hull_qp(&prog, &cfg.solver)?;
        let rotation = layout.hull_rotation(&sol.x);
        let hull_t = &obar - rotation.matrix() * &mbar;
        let proj_r = project_to_rotation(&rotation.matrix())?;
        let rigid_t = &obar - &proj_r.rotation * &mbar;
        (
            HullPose {
                rotation,
                translation: hull_t,
            },
            proj_r.rotation,
            rigid_t,
            sol,
            proj_r.degenerate,
        )
    } else {
        let moments = Moments::accumulate(corr.model(), &obs_h, proj.matrix(), |i| corr.weight(i));
        let layout = VariableLayout::new(dim, true);
        let prog = moments.program(layout, form)?;
        let sol = solve_hull_qp(&prog, &cfg.solver)?;
        let rotation = layout.hull_rotation(&sol.x);
        let hull_t = layout.translation_of(&sol.x).expect("joint layout has translation");
        let proj_r = project_to_rotation(&rotation.matrix())?;
        let rigid_t = refit_translation(&moments, &proj_r.rotation, &hull_t);
        (
            HullPose {
                rotation,
                translation: hull_t,
            },
            proj_r.rotation,
            rigid_t,
            sol,
            proj_r.degenerate,
        )
    };

    let rigid_pose = RigidPose::new(rigid_rotation, rigid_translation)?;
    let residual = residual(corr, proj, &rigid_pose)?;
    let exact =
        diagnostics.converged() && is_exact(&hull_pose.rotation, diagnostics.boundary_margin, rigid_pose.rotation());
    Ok(EstimateReport {
        hull_pose,
        rigid_pose,
        exact,
        residual,
        outliers: Vec::new(),
        z1: None,
        diagnostics,
        form,
        projection_degenerate: degenerate,
        robust: None,
    })
}

/// Least-squares translation for a fixed rotation; components the data cannot
/// observe keep their value from `fallback`.
fn refit_translation(m: &Moments, rotation: &DMatrix<f64>, fallback: &DVector<f64>) -> DVector<f64> {
    let w = m.a.transpose() * &m.a * m.sw;
    let rhs = m.a.transpose() * &m.sv - m.a.transpose() * &m.a * rotation * &m.sm;
    let correction = rhs - &w * fallback;
    let eps = 1e-12 * w.amax().max(1.0);
    let pinv = w.pseudo_inverse(eps).expect("epsilon is non-negative");
    fallback + pinv * correction
}

/// ℓ1-robust estimate: minimizes `Σ cᵢ‖rᵢ(S) − zᵢ‖² + λ‖Z‖₁` over the hull by
/// exact block coordinate descent on `S` (hull QP with observations shifted by
/// `Z`) and `Z` (soft thresholding of the residuals).
pub fn estimate_robust(
    corr: &CorrespondenceSet,
    proj: &ProjectionSpec,
    lambda: f64,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport, EstimationError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(EstimationError::BadLambda(lambda));
    }
    corr.require_min_points()?;
    let obs_h = proj.check(corr)?;
    let dim = corr.dim();
    let n = dim.n();
    let count = corr.len();
    let layout = VariableLayout::new(dim, true);
    let a = proj.matrix().columns(0, n).into_owned();
    let b = proj.matrix().column(n).into_owned();

    let mut z = DMatrix::zeros(obs_h.nrows(), count);
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut rounds = 0;
    let mut last: Option<SolverResult> = None;

    while rounds < cfg.robust_max_rounds {
        rounds += 1;
        let shifted = &obs_h - &z;
        let moments = Moments::accumulate(corr.model(), &shifted, proj.matrix(), |i| corr.weight(i));
        let prog = moments.program(layout, ObjectiveForm::Quadratic)?;
        let sol = solve_hull_qp(&prog, &cfg.solver)?;
        let rotation = layout.hull_rotation(&sol.x).matrix();
        let t = layout.translation_of(&sol.x).expect("joint layout has translation");

        let mut objective = 0.0;
        for i in 0..count {
            let c = corr.weight(i);
            let kappa = lambda / (2.0 * c);
            let pred = &a * (&rotation * corr.model().column(i) + &t) + &b;
            let r = obs_h.column(i) - pred;
            for (j, &rj) in r.iter().enumerate() {
                let zj = shrink(rj, kappa);
                z[(j, i)] = zj;
                objective += c * (rj - zj).powi(2) + lambda * zj.abs();
            }
        }
        let decrease = trace.last().map(|prev| prev - objective);
        trace.push(objective);
        last = Some(sol);
        if decrease.is_some_and(|d| d < cfg.robust_tol) {
            converged = true;
            break;
        }
    }

    let diagnostics = last.expect("at least one round runs");
    let rotation = layout.hull_rotation(&diagnostics.x);
    let hull_t = layout
        .translation_of(&diagnostics.x)
        .expect("joint layout has translation");
    let proj_r = project_to_rotation(&rotation.matrix())?;
    // Translation refit against the final outlier-corrected observations.
    let corrected = Moments::accumulate(corr.model(), &(&obs_h - &z), proj.matrix(), |i| corr.weight(i));
    let rigid_t = refit_translation(&corrected, &proj_r.rotation, &hull_t);
    let rigid_pose = RigidPose::new(proj_r.rotation, rigid_t)?;
    let residual = residual(corr, proj, &rigid_pose)?;
    let outliers = (0..count)
        .filter(|&i| z.column(i).norm() > cfg.outlier_threshold)
        .collect();
    let exact = diagnostics.converged() && is_exact(&rotation, diagnostics.boundary_margin, rigid_pose.rotation());
    Ok(EstimateReport {
        hull_pose: HullPose {
            rotation,
            translation: hull_t,
        },
        rigid_pose,
        exact,
        residual,
        outliers,
        z1: Some(z),
        diagnostics,
        form: ObjectiveForm::Quadratic,
        projection_degenerate: proj_r.degenerate,
        robust: Some(RobustDiagnostics {
            lambda,
            rounds,
            converged,
            objective_trace: trace,
        }),
    })
}
