//! Experiment harness: synthetic trials, error metric, timing and CSV output.

use std::cmp::Ordering;
use std::fmt;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{horn_svd, levenberg_marquardt, pca_align, LmConfig};
use crate::estimation::{
    estimate, estimate_robust, residual, CorrespondenceSet, EstimationError, EstimatorConfig, ProjectionSpec,
};
use crate::geometry::{random_pose, RigidPose, SpaceDim};
use crate::pointcloud::{
    corrupt_posed, normalize_model, parse_csv, parse_ply, synthetic_bunny, CloudError, CorruptionSpec, OutlierRule,
    ParseError, PointCloud,
};

pub const CSV_HEADER: &str = "method,delta,n,trial,error,wall_time_s,exact";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error("{method} failed: {source}")]
    Method { method: Method, source: EstimationError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Orbitope,
    Horn,
    Pca,
    Lm,
    Robust,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Orbitope, Method::Horn, Method::Pca, Method::Lm, Method::Robust];

    pub fn name(self) -> &'static str {
        match self {
            Method::Orbitope => "orbitope",
            Method::Horn => "horn",
            Method::Pca => "pca",
            Method::Lm => "lm",
            Method::Robust => "robust",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| BenchError::Spec(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    NoiseSweep,
    SampleSweep,
    RobustDemo,
    Single,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    /// The built-in 944-point cloud.
    Synthetic,
    Cloud(PointCloud),
}

/// Outliers injected in every trial: points matching `rule` in the model
/// frame are shifted by `translation` after noise.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierSetup {
    pub rule: OutlierRule,
    pub translation: DVector<f64>,
}

impl OutlierSetup {
    /// Ears above `y = 0.6` moved by `(2, 2, 2)`.
    pub fn ears() -> Self {
        Self {
            rule: OutlierRule { axis: 1, bound: 0.6 },
            translation: DVector::from_element(3, 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub deltas: Vec<f64>,
    /// Subsample sizes; a size equal to the cloud size uses every point.
    pub sample_counts: Vec<usize>,
    pub trials: usize,
    pub lambda: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub input: Input,
    pub outliers: Option<OutlierSetup>,
    pub lm: LmConfig,
    pub estimator: EstimatorConfig,
    pub parallel: bool,
}

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_TRIALS: usize = 20;
pub const DEFAULT_DELTAS: [f64; 3] = [0.01, 0.06, 0.1];
pub const DEFAULT_SAMPLE_COUNTS: [usize; 5] = [23, 50, 100, 200, 944];

impl ExperimentSpec {
    fn base(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            deltas: DEFAULT_DELTAS.to_vec(),
            sample_counts: vec![crate::pointcloud::BUNNY_POINTS],
            trials: DEFAULT_TRIALS,
            lambda: DEFAULT_LAMBDA,
            seed,
            methods: vec![Method::Orbitope, Method::Horn, Method::Pca, Method::Lm],
            input: Input::Synthetic,
            outliers: None,
            lm: LmConfig::default(),
            estimator: EstimatorConfig::default(),
            parallel: false,
        }
    }

    pub fn noise_sweep(seed: u64) -> Self {
        Self::base(Mode::NoiseSweep, seed)
    }

    pub fn sample_sweep(seed: u64) -> Self {
        Self {
            deltas: vec![0.1],
            sample_counts: DEFAULT_SAMPLE_COUNTS.to_vec(),
            ..Self::base(Mode::SampleSweep, seed)
        }
    }

    pub fn robust_demo(seed: u64) -> Self {
        Self {
            deltas: vec![0.01],
            trials: 1,
            methods: vec![Method::Pca, Method::Orbitope, Method::Robust],
            outliers: Some(OutlierSetup::ears()),
            ..Self::base(Mode::RobustDemo, seed)
        }
    }

    pub fn single(seed: u64) -> Self {
        Self {
            deltas: vec![0.0],
            trials: 1,
            ..Self::base(Mode::Single, seed)
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Spec(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return bad("deltas must be finite and non-negative");
        }
        if self.sample_counts.is_empty() || self.sample_counts.iter().any(|&n| n < 3) {
            return bad("sample counts must be at least 3");
        }
        if self.methods.is_empty() {
            return bad("no methods selected");
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        self.lm.validate().map_err(|e| BenchError::Spec(e.to_string()))?;
        self.estimator
            .solver
            .validate()
            .map_err(|e| BenchError::Spec(e.to_string()))?;
        Ok(())
    }
}

/// Reads a PLY or CSV cloud, chosen by file extension.
pub fn load_cloud(path: &Path) -> Result<PointCloud, BenchError> {
    let shown = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| BenchError::Io {
        path: shown.clone(),
        source,
    })?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let parsed = if is_csv { parse_csv(&bytes) } else { parse_ply(&bytes) };
    parsed.map_err(|source| BenchError::Parse { path: shown, source })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub delta: f64,
    pub n: usize,
    pub trial: usize,
    /// `Σ‖S_true m − S_est m‖²` over the clean model points of the trial.
    pub error: f64,
    pub wall_time_s: f64,
    /// Set only by the relaxation methods, when the hull point is a rigid pose.
    pub exact: bool,
    /// Residual against the corrupted observations; not written to CSV.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub method: Method,
    pub delta: f64,
    pub n: usize,
    pub trials: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Outlier flags of the robust estimator in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub delta: f64,
    pub n: usize,
    pub trial: usize,
    pub injected: Vec<usize>,
    pub flagged: Vec<usize>,
}

impl DetectionRecord {
    pub fn missed(&self) -> usize {
        self.injected.iter().filter(|i| !self.flagged.contains(i)).count()
    }

    pub fn false_positives(&self) -> usize {
        self.flagged.iter().filter(|i| !self.injected.contains(i)).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<CellSummary>,
    pub detections: Vec<DetectionRecord>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of one trial, a hash of `(seed, delta, n, trial)`.
pub fn trial_seed(seed: u64, delta: f64, n: usize, trial: usize) -> u64 {
    [delta.to_bits(), n as u64, trial as u64]
        .into_iter()
        .fold(splitmix64(seed), |h, v| splitmix64(h ^ v))
}

/// Wall time of `f` on the monotonic clock.
pub fn time_method<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// Sum of squared distances between the model moved by the two poses.
pub fn pose_error(model: &DMatrix<f64>, truth: &RigidPose, estimate: &RigidPose) -> f64 {
    (truth.transform_points(model) - estimate.transform_points(model)).norm_squared()
}

/// One synthetic problem: clean model, true pose and corrupted correspondences.
#[derive(Debug, Clone)]
pub struct TrialInstance {
    pub truth: RigidPose,
    pub corr: CorrespondenceSet,
    pub injected: Vec<usize>,
}

impl TrialInstance {
    pub fn generate(
        model: &PointCloud,
        delta: f64,
        n: usize,
        outliers: Option<&OutlierSetup>,
        seed: u64,
    ) -> Result<Self, BenchError> {
        let dim = SpaceDim::from_n(model.dim()).map_err(|_| CloudError::Dimension(model.dim()))?;
        if n > model.len() {
            return Err(BenchError::Spec(format!(
                "{n} samples requested from {} points",
                model.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_pose(&mut rng, dim, 1.0);
        let spec = CorruptionSpec {
            delta,
            outlier_predicate: outliers.map(|o| o.rule),
            outlier_translation: outliers.map_or_else(|| DVector::zeros(model.dim()), |o| o.translation.clone()),
            subsample_n: (n < model.len()).then_some(n),
            seed: rng.random(),
        };
        let c = corrupt_posed(model, &truth, &spec)?;
        let corr = CorrespondenceSet::new(c.model.points().clone(), c.observations.points().clone(), None)
            .map_err(|e| BenchError::Spec(e.to_string()))?;
        Ok(Self {
            truth,
            corr,
            injected: c.outliers,
        })
    }
}

/// Outcome of one method on one instance.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub pose: RigidPose,
    pub exact: bool,
    pub wall_time_s: f64,
    pub outliers: Option<Vec<usize>>,
}

pub fn run_method(method: Method, inst: &TrialInstance, spec: &ExperimentSpec) -> Result<MethodOutcome, BenchError> {
    let proj = ProjectionSpec::identity(inst.corr.dim());
    let corr = &inst.corr;
    let fail = |source| BenchError::Method { method, source };
    let (result, wall_time_s) = time_method(|| -> Result<_, EstimationError> {
        Ok(match method {
            Method::Orbitope => {
                let r = estimate(corr, &proj, &spec.estimator)?;
                (r.rigid_pose, r.exact, None)
            }
            Method::Robust => {
                let r = estimate_robust(corr, &proj, spec.lambda, &spec.estimator)?;
                (r.rigid_pose, r.exact, Some(r.outliers))
            }
            Method::Horn => (horn_svd(corr)?.pose, false, None),
            Method::Pca => (pca_align(corr)?.pose, false, None),
            Method::Lm => {
                let init = RigidPose::identity(corr.dim());
                (levenberg_marquardt(corr, &proj, &init, &spec.lm)?.pose, false, None)
            }
        })
    });
    let (pose, exact, outliers) = result.map_err(fail)?;
    Ok(MethodOutcome {
        pose,
        exact,
        wall_time_s,
        outliers,
    })
}

fn model_cloud(input: &Input) -> Result<PointCloud, BenchError> {
    Ok(match input {
        Input::Synthetic => synthetic_bunny(0),
        Input::Cloud(c) => normalize_model(c)?,
    })
}

fn row_order(a: &ResultRow, b: &ResultRow) -> Ordering {
    a.method
        .cmp(&b.method)
        .then(a.delta.total_cmp(&b.delta))
        .then(a.n.cmp(&b.n))
        .then(a.trial.cmp(&b.trial))
}

type TrialOutput = (Vec<ResultRow>, Option<DetectionRecord>);

fn run_trial(
    model: &PointCloud,
    spec: &ExperimentSpec,
    delta: f64,
    n: usize,
    trial: usize,
) -> Result<TrialOutput, BenchError> {
    let seed = trial_seed(spec.seed, delta, n, trial);
    let inst = TrialInstance::generate(model, delta, n, spec.outliers.as_ref(), seed)?;
    let proj = ProjectionSpec::identity(inst.corr.dim());
    let mut rows = Vec::with_capacity(spec.methods.len());
    let mut detection = None;
    for &method in &spec.methods {
        let out = run_method(method, &inst, spec)?;
        let res = residual(&inst.corr, &proj, &out.pose).map_err(|source| BenchError::Method { method, source })?;
        if let Some(flagged) = out.outliers {
            detection = Some(DetectionRecord {
                delta,
                n,
                trial,
                injected: inst.injected.clone(),
                flagged,
            });
        }
        rows.push(ResultRow {
            method,
            delta,
            n,
            trial,
            error: pose_error(inst.corr.model(), &inst.truth, &out.pose),
            wall_time_s: out.wall_time_s,
            exact: out.exact,
            residual: res,
        });
    }
    Ok((rows, detection))
}

/// Runs every `(delta, n, trial)` cell. Serial and parallel runs give the
/// same rows apart from the timing column.
pub fn run(spec: &ExperimentSpec) -> Result<RunOutput, BenchError> {
    spec.validate()?;
    let model = model_cloud(&spec.input)?;
    let mut jobs = Vec::new();
    for &delta in &spec.deltas {
        for &n in &spec.sample_counts {
            for trial in 0..spec.trials {
                jobs.push((delta, n, trial));
            }
        }
    }
    let results: Vec<Result<TrialOutput, BenchError>> = if spec.parallel {
        jobs.par_iter()
            .map(|&(d, n, t)| run_trial(&model, spec, d, n, t))
            .collect()
    } else {
        jobs.iter().map(|&(d, n, t)| run_trial(&model, spec, d, n, t)).collect()
    };
    let mut rows = Vec::new();
    let mut detections = Vec::new();
    for r in results {
        let (trial_rows, detection) = r?;
        rows.extend(trial_rows);
        detections.extend(detection);
    }
    rows.sort_by(row_order);
    let summary = summarize(&rows);
    Ok(RunOutput {
        rows,
        summary,
        detections,
    })
}

/// Mean, min and max error per `(method, delta, n)`; rows must be sorted.
pub fn summarize(rows: &[ResultRow]) -> Vec<CellSummary> {
    rows.chunk_by(|a, b| a.method == b.method && a.delta == b.delta && a.n == b.n)
        .map(|cell| {
            let errors = cell.iter().map(|r| r.error);
            CellSummary {
                method: cell[0].method,
                delta: cell[0].delta,
                n: cell[0].n,
                trials: cell.len(),
                mean: errors.clone().sum::<f64>() / cell.len() as f64,
                min: errors.clone().fold(f64::INFINITY, f64::min),
                max: errors.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

/// Writes the header and the rows in `(method, delta, n, trial)` order.
pub fn write_rows<W: Write>(rows: &[ResultRow], mut out: W) -> io::Result<()> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| row_order(a, b));
    writeln!(out, "{CSV_HEADER}")?;
    for r in sorted {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method, r.delta, r.n, r.trial, r.error, r.wall_time_s, r.exact
        )?;
    }
    out.flush()
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<(), BenchError> {
    let io_err = |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_rows(rows, io::BufWriter::new(file)).map_err(io_err)
}
