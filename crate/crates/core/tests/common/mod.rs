#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use orbitope::geometry::{random_pose, random_rotation, RigidPose, SpaceDim};
use orbitope::CorrespondenceSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_points<R: Rng>(rng: &mut R, n: usize, count: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, count, |_, _| rng.sample(StandardNormal))
}

pub fn add_noise<R: Rng>(rng: &mut R, m: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    m.map(|v| v + delta * rng.sample::<f64, _>(StandardNormal))
}

/// Random model, random pose and noisy observations.
pub fn instance<R: Rng>(rng: &mut R, dim: SpaceDim, count: usize, delta: f64) -> (RigidPose, CorrespondenceSet) {
    let model = gaussian_points(rng, dim.n(), count);
    let truth = random_pose(rng, dim, 1.0);
    let obs = add_noise(rng, &truth.transform_points(&model), delta);
    (truth, CorrespondenceSet::new(model, obs, None).unwrap())
}

/// Convex combination of a few random rotations.
pub fn hull_point<R: Rng>(rng: &mut R, dim: SpaceDim) -> DMatrix<f64> {
    let k = 4;
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = w.iter().sum();
    let n = dim.n();
    w.iter().fold(DMatrix::zeros(n, n), |acc, wi| {
        acc + random_rotation(rng, dim) * (wi / total)
    })
}

/// Plain-loop residual, independent of the library's accumulation.
pub fn direct_objective(
    model: &DMatrix<f64>,
    obs_h: &DMatrix<f64>,
    p: &DMatrix<f64>,
    weights: &[f64],
    s: &DMatrix<f64>,
    t: &DVector<f64>,
) -> f64 {
    let n = model.nrows();
    let mut total = 0.0;
    for i in 0..model.ncols() {
        let mut x = vec![0.0; n + 1];
        for r in 0..n {
            x[r] = t[r];
            for c in 0..n {
                x[r] += s[(r, c)] * model[(c, i)];
            }
        }
        x[n] = 1.0;
        let mut sq = 0.0;
        for r in 0..p.nrows() {
            let pred: f64 = (0..=n).map(|c| p[(r, c)] * x[c]).sum();
            sq += (obs_h[(r, i)] - pred).powi(2);
        }
        total += weights[i] * sq;
    }
    total
}

pub fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}
