//! Point-cloud files, model normalization and synthetic corruption.

mod csv;
mod ply;

pub use self::csv::{parse_csv, write_csv};
pub use self::ply::{parse_ply, write_ply_ascii, write_ply_binary};

use nalgebra::{DMatrix, DVector, Vector3};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::RigidPose;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("parse error at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported {0}")]
    Unsupported(String),
    #[error("unexpected end of input")]
    Truncated,
    #[error("invalid number")]
    BadNumber,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("expected 2 or 3 fields, found {0}")]
    FieldCount(usize),
    #[error("row has {found} fields, earlier rows have {expected}")]
    MixedDimension { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CloudError {
    #[error("points must be 2-D or 3-D, got {0} rows")]
    Dimension(usize),
    #[error("non-finite coordinate in point {0}")]
    NonFinite(usize),
    #[error("{labels} labels for {points} points")]
    LabelCount { labels: usize, points: usize },
    #[error("cloud is empty")]
    Empty,
    #[error("all points coincide")]
    ZeroExtent,
    #[error("invalid corruption spec: {0}")]
    Spec(String),
}

/// Points stored as the columns of an `n × N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: DMatrix<f64>,
    labels: Option<Vec<String>>,
}

impl PointCloud {
    pub fn new(points: DMatrix<f64>) -> Result<Self, CloudError> {
        if !(2..=3).contains(&points.nrows()) {
            return Err(CloudError::Dimension(points.nrows()));
        }
        if let Some(i) = points.column_iter().position(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(CloudError::NonFinite(i));
        }
        Ok(Self { points, labels: None })
    }

    /// Parsers already reject non-finite values and bad dimensions.
    pub(crate) fn from_trusted(points: DMatrix<f64>) -> Self {
        debug_assert!(Self::new(points.clone()).is_ok());
        Self { points, labels: None }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, CloudError> {
        if labels.len() != self.len() {
            return Err(CloudError::LabelCount {
                labels: labels.len(),
                points: self.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: self.points.select_columns(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i].clone()).collect()),
        }
    }
}

/// Moves the centroid to the origin and scales so that `max |y| = 1`.
pub fn normalize_model(cloud: &PointCloud) -> Result<PointCloud, CloudError> {
    if cloud.is_empty() {
        return Err(CloudError::Empty);
    }
    let centroid = cloud.points.column_mean();
    let mut points = cloud.points.clone();
    for mut col in points.column_iter_mut() {
        col -= &centroid;
    }
    let extent = points.row(1).amax();
    if extent == 0.0 {
        return Err(CloudError::ZeroExtent);
    }
    points /= extent;
    Ok(PointCloud {
        points,
        labels: cloud.labels.clone(),
    })
}

/// Points whose model-frame coordinate `axis` is at least `bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierRule {
    pub axis: usize,
    pub bound: f64,
}

impl OutlierRule {
    pub fn matches(&self, point: &[f64]) -> bool {
        point[self.axis] >= self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSpec {
    /// Standard deviation of the per-coordinate Gaussian noise.
    pub delta: f64,
    pub outlier_predicate: Option<OutlierRule>,
    pub outlier_translation: DVector<f64>,
    pub subsample_n: Option<usize>,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn noise(delta: f64, seed: u64) -> Self {
        Self {
            delta,
            outlier_predicate: None,
            outlier_translation: DVector::zeros(3),
            subsample_n: None,
            seed,
        }
    }

    fn validate(&self, cloud: &PointCloud) -> Result<(), CloudError> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(CloudError::Spec(format!(
                "delta must be finite and >= 0, got {}",
                self.delta
            )));
        }
        if let Some(k) = self.subsample_n {
            if k > cloud.len() {
                return Err(CloudError::Spec(format!(
                    "subsample of {k} from {} points",
                    cloud.len()
                )));
            }
        }
        if let Some(rule) = self.outlier_predicate {
            if rule.axis >= cloud.dim() {
                return Err(CloudError::Spec(format!("outlier axis {} out of range", rule.axis)));
            }
            if self.outlier_translation.len() != cloud.dim() {
                return Err(CloudError::Spec("outlier translation dimension mismatch".into()));
            }
        }
        Ok(())
    }
}

/// A corrupted copy of a model with the index pairing kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrupted {
    /// The clean model points that were kept, in output order.
    pub model: PointCloud,
    pub observations: PointCloud,
    /// Output positions of translated outliers.
    pub outliers: Vec<usize>,
    /// Source index of every output point.
    pub indices: Vec<usize>,
}

/// Subsample, add noise, then translate outliers. Equivalent to
/// [`corrupt_posed`] with the identity pose.
pub fn corrupt(cloud: &PointCloud, spec: &CorruptionSpec) -> Result<Corrupted, CloudError> {
    let n = cloud.dim();
    let pose = RigidPose::new(DMatrix::identity(n, n), DVector::zeros(n)).map_err(|_| CloudError::Dimension(n))?;
    corrupt_posed(cloud, &pose, spec)
}

/// Subsample, move by `pose`, add noise, then translate outliers.
///
/// The outlier rule is evaluated on the clean model coordinates.
pub fn corrupt_posed(cloud: &PointCloud, pose: &RigidPose, spec: &CorruptionSpec) -> Result<Corrupted, CloudError> {
    spec.validate(cloud)?;
    if pose.dim().n() != cloud.dim() {
        return Err(CloudError::Dimension(pose.dim().n()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let indices: Vec<usize> = match spec.subsample_n {
        Some(k) => {
            let mut idx = index::sample(&mut rng, cloud.len(), k).into_vec();
            idx.sort_unstable();
            idx
        }
        None => (0..cloud.len()).collect(),
    };
    let model = cloud.select(&indices);
    let mut obs = pose.transform_points(&model.points);
    if spec.delta > 0.0 {
        for v in obs.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += spec.delta * z;
        }
    }
    let mut outliers = Vec::new();
    if let Some(rule) = spec.outlier_predicate {
        for (j, col) in model.points.column_iter().enumerate() {
            if rule.matches(col.as_slice()) {
                let mut o = obs.column_mut(j);
                o += &spec.outlier_translation;
                outliers.push(j);
            }
        }
    }
    Ok(Corrupted {
        observations: PointCloud {
            points: obs,
            labels: model.labels.clone(),
        },
        model,
        outliers,
        indices,
    })
}

/// Number of points in [`synthetic_bunny`].
pub const BUNNY_POINTS: usize = 944;
/// Label carried by the ear points of [`synthetic_bunny`].
pub const EAR_LABEL: &str = "ear";

const EAR_POINTS: usize = 38;
const HEAD_POINTS: usize = 200;

fn ellipsoid_surface(
    rng: &mut ChaCha8Rng,
    center: Vector3<f64>,
    radii: Vector3<f64>,
    count: usize,
    out: &mut Vec<f64>,
) {
    for _ in 0..count {
        let d = loop {
            let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = v.norm();
            if norm > 1e-6 {
                break v / norm;
            }
        };
        out.extend((center + radii.component_mul(&d)).iter());
    }
}

/// Seeded stand-in for a scanned rabbit: an ellipsoidal body, a round head
/// and two long ears, already normalized.
///
/// After normalization the points with `y >= 0.6` are exactly the ears.
pub fn synthetic_bunny(seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let body = BUNNY_POINTS - HEAD_POINTS - 2 * EAR_POINTS;
    let mut coords = Vec::with_capacity(3 * BUNNY_POINTS);
    ellipsoid_surface(
        &mut rng,
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(0.9, 0.5, 0.6),
        body,
        &mut coords,
    );
    ellipsoid_surface(
        &mut rng,
        Vector3::new(0.65, 0.25, 0.05),
        Vector3::new(0.3, 0.25, 0.22),
        HEAD_POINTS,
        &mut coords,
    );
    for z in [-0.12, 0.1] {
        ellipsoid_surface(
            &mut rng,
            Vector3::new(0.6, 1.55, z),
            Vector3::new(0.07, 0.25, 0.05),
            EAR_POINTS,
            &mut coords,
        );
    }
    let mut labels = vec!["body".to_string(); body];
    labels.extend(std::iter::repeat_n("head".to_string(), HEAD_POINTS));
    labels.extend(std::iter::repeat_n(EAR_LABEL.to_string(), 2 * EAR_POINTS));
    let cloud = PointCloud::from_trusted(DMatrix::from_column_slice(3, BUNNY_POINTS, &coords))
        .with_labels(labels)
        .expect("label count matches");
    normalize_model(&cloud).expect("the generated cloud has extent")
}
