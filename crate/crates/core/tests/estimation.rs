mod common;

use approx::assert_abs_diff_eq;
use common::*;
use nalgebra::{DMatrix, DVector};
use orbitope::estimation::{residual, RelaxationObjective};
use orbitope::geometry::{random_rotation, RigidPose, SpaceDim};
use orbitope::solver::VariableLayout;
use orbitope::{
    assemble, center_translation, estimate, estimate_robust, horn_svd, CorrespondenceSet, EstimationError,
    EstimatorConfig, ProjectionSpec,
};
use rand::Rng;

fn hull_coords(dim: SpaceDim, s: &DMatrix<f64>, t: &DVector<f64>) -> DVector<f64> {
    let mut x: Vec<f64> = match dim {
        SpaceDim::Planar => vec![s[(0, 0)], s[(0, 1)]],
        SpaceDim::Spatial => s.transpose().iter().copied().collect(),
    };
    x.extend(t.iter());
    DVector::from_vec(x)
}

fn check_assembly(dim: SpaceDim, proj: &ProjectionSpec, seed: u64) {
    let mut rng = rng(seed);
    let n = dim.n();
    let count = 7;
    let model = gaussian_points(&mut rng, n, count);
    let obs_h = gaussian_points(&mut rng, proj.matrix().nrows(), count);
    let weights: Vec<f64> = (0..count).map(|_| rng.random::<f64>() + 0.1).collect();
    let corr = CorrespondenceSet::new(model.clone(), obs_h.clone(), Some(DVector::from_vec(weights.clone()))).unwrap();
    let prog = assemble(&corr, proj).unwrap();
    assert_eq!(prog.layout(), VariableLayout::new(dim, true));
    for _ in 0..50 {
        let s = hull_point(&mut rng, dim);
        let t = gaussian_points(&mut rng, n, 1).column(0).into_owned();
        let want = direct_objective(&model, &obs_h, proj.matrix(), &weights, &s, &t);
        let got = prog.objective(&hull_coords(dim, &s, &t));
        assert_abs_diff_eq!(got, want, epsilon = 1e-10 * want.max(1.0));
    }
}

#[test]
fn assembled_program_matches_direct_sum() {
    check_assembly(SpaceDim::Spatial, &ProjectionSpec::identity(SpaceDim::Spatial), 1);
    check_assembly(SpaceDim::Planar, &ProjectionSpec::identity(SpaceDim::Planar), 2);
    check_assembly(SpaceDim::Spatial, &ProjectionSpec::orthographic(SpaceDim::Spatial), 3);
    let camera = DMatrix::from_row_slice(
        3,
        4,
        &[500.0, 0.0, 320.0, 1.0, 0.0, 500.0, 240.0, -2.0, 0.0, 0.0, 1.0, 4.0],
    );
    check_assembly(SpaceDim::Spatial, &ProjectionSpec::new(camera).unwrap(), 4);
}

#[test]
fn single_point_identity_example() {
    let corr = CorrespondenceSet::new(
        DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
        DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
        None,
    )
    .unwrap();
    let prog = assemble(&corr, &ProjectionSpec::identity(SpaceDim::Spatial)).unwrap();
    let x = hull_coords(SpaceDim::Spatial, &DMatrix::identity(3, 3), &DVector::zeros(3));
    assert_abs_diff_eq!(prog.objective(&x), 0.0, epsilon = 1e-14);
}

#[test]
fn doubling_weights_doubles_the_program() {
    let mut r = rng(5);
    let (_, corr) = instance(&mut r, SpaceDim::Spatial, 12, 0.1);
    let doubled = CorrespondenceSet::new(
        corr.model().clone(),
        corr.observations().clone(),
        Some(DVector::from_element(12, 2.0)),
    )
    .unwrap();
    let proj = ProjectionSpec::identity(SpaceDim::Spatial);
    let a = assemble(&corr, &proj).unwrap();
    let b = assemble(&doubled, &proj).unwrap();
    assert_abs_diff_eq!(b.q(), &(a.q() * 2.0), epsilon = 1e-10);
    assert_abs_diff_eq!(b.c(), &(a.c() * 2.0), epsilon = 1e-10);
    assert_abs_diff_eq!(b.k(), 2.0 * a.k(), epsilon = 1e-10);

    let cfg = EstimatorConfig::default();
    let ra = estimate(&corr, &proj, &cfg).unwrap();
    let rb = estimate(&doubled, &proj, &cfg).unwrap();
    assert!(frob(ra.rigid_pose.rotation(), rb.rigid_pose.rotation()) < 1e-8);
}

#[test]
fn centering_examples() {
    let model = DMatrix::from_column_slice(3, 3, &[0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
    let shift = DVector::from_column_slice(&[1.0, -1.0, 3.0]);
    let mut obs = model.clone();
    for mut c in obs.column_iter_mut() {
        c += &shift;
    }
    let corr = CorrespondenceSet::new(model, obs, None).unwrap();
    let (t0, centered) = center_translation(&corr).unwrap();
    assert_abs_diff_eq!(t0, shift, epsilon = 1e-15);
    assert_abs_diff_eq!(centered.model().column_mean(), DVector::zeros(3), epsilon = 1e-15);
    assert_abs_diff_eq!(
        centered.observations().column_mean(),
        DVector::zeros(3),
        epsilon = 1e-15
    );
    assert_abs_diff_eq!(centered.model(), centered.observations(), epsilon = 1e-15);
}

#[test]
fn noiseless_spatial_recovery() {
    let mut r = rng(11);
    for _ in 0..10 {
        let (truth, corr) = instance(&mut r, SpaceDim::Spatial, 30, 0.0);
        let rep = estimate(
            &corr,
            &ProjectionSpec::identity(SpaceDim::Spatial),
            &EstimatorConfig::default(),
        )
        .unwrap();
        assert!(frob(rep.rigid_pose.rotation(), truth.rotation()) < 1e-5);
        assert!((rep.rigid_pose.translation() - truth.translation()).norm() < 1e-5);
        assert!(rep.diagnostics.boundary_margin <= 1e-5);
        assert!(rep.exact);
    }
}

#[test]
fn planar_square_rotated_by_sixty_degrees() {
    let theta = std::f64::consts::FRAC_PI_3;
    let model = DMatrix::from_column_slice(2, 4, &[1.0, 1.0, -1.0, 1.0, -1.0, -1.0, 1.0, -1.0]);
    let (s, c) = theta.sin_cos();
    let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let corr = CorrespondenceSet::new(model.clone(), &rot * &model, None).unwrap();
    let rep = estimate(
        &corr,
        &ProjectionSpec::identity(SpaceDim::Planar),
        &EstimatorConfig::default(),
    )
    .unwrap();
    let r = rep.rigid_pose.rotation();
    assert_abs_diff_eq!(r[(1, 0)].atan2(r[(0, 0)]), theta, epsilon = 1e-6);
    assert!(rep.exact);
}

#[test]
fn orthographic_recovers_observable_pose() {
    let mut r = rng(21);
    let proj = ProjectionSpec::orthographic(SpaceDim::Spatial);
    for _ in 0..5 {
        let (truth, corr) = instance(&mut r, SpaceDim::Spatial, 40, 0.0);
        let flat = corr
            .with_observations(corr.observations().rows(0, 2).into_owned())
            .unwrap();
        let rep = estimate(&flat, &proj, &EstimatorConfig::default()).unwrap();
        assert!(frob(rep.rigid_pose.rotation(), truth.rotation()) < 1e-4);
        assert!((rep.rigid_pose.translation().rows(0, 2) - truth.translation().rows(0, 2)).norm() < 1e-4);
        assert!(rep.residual < 1e-8);
    }
}

#[test]
fn linearized_form_requires_orthogonal_projection() {
    let mut r = rng(2);
    let (_, corr) = instance(&mut r, SpaceDim::Spatial, 10, 0.0);
    let flat = corr
        .with_observations(corr.observations().rows(0, 2).into_owned())
        .unwrap();
    let cfg = EstimatorConfig {
        objective: RelaxationObjective::Linearized,
        ..EstimatorConfig::default()
    };
    let e = estimate(&flat, &ProjectionSpec::orthographic(SpaceDim::Spatial), &cfg);
    assert!(matches!(e, Err(EstimationError::NotOrthogonal)));
}

#[test]
fn quadratic_form_on_noiseless_data_is_exact() {
    let mut r = rng(8);
    let cfg = EstimatorConfig {
        objective: RelaxationObjective::Quadratic,
        ..EstimatorConfig::default()
    };
    for _ in 0..5 {
        let (truth, corr) = instance(&mut r, SpaceDim::Spatial, 25, 0.0);
        let rep = estimate(&corr, &ProjectionSpec::identity(SpaceDim::Spatial), &cfg).unwrap();
        assert!(frob(rep.rigid_pose.rotation(), truth.rotation()) < 1e-4);
    }
}

#[test]
fn too_few_points_rejected() {
    let corr = CorrespondenceSet::new(DMatrix::zeros(3, 2), DMatrix::zeros(3, 2), None).unwrap();
    let e = estimate(
        &corr,
        &ProjectionSpec::identity(SpaceDim::Spatial),
        &EstimatorConfig::default(),
    );
    assert!(matches!(e, Err(EstimationError::TooFewPoints { required: 3, got: 2 })));
}

#[test]
fn equivariance_under_pre_rotation() {
    let mut r = rng(31);
    let proj = ProjectionSpec::identity(SpaceDim::Spatial);
    let cfg = EstimatorConfig::default();
    for _ in 0..10 {
        let (_, corr) = instance(&mut r, SpaceDim::Spatial, 40, 0.05);
        let q = random_rotation(&mut r, SpaceDim::Spatial);
        let moved = corr.with_observations(&q * corr.observations()).unwrap();
        let a = estimate(&corr, &proj, &cfg).unwrap();
        let b = estimate(&moved, &proj, &cfg).unwrap();
        assert!(frob(&(&q * a.rigid_pose.rotation()), b.rigid_pose.rotation()) < 1e-6);
    }
}

#[test]
fn exactness_holds_for_generic_data() {
    let cfg = EstimatorConfig::default();
    for dim in [SpaceDim::Planar, SpaceDim::Spatial] {
        let proj = ProjectionSpec::identity(dim);
        let mut r = rng(41 + dim.n() as u64);
        for k in 0..100 {
            let delta = [0.0, 0.01, 0.1, 0.5][k % 4];
            let (_, corr) = instance(&mut r, dim, 20, delta);
            let rep = estimate(&corr, &proj, &cfg).unwrap();
            let sv = rep.hull_pose.rotation.singular_values();
            assert!(sv.iter().all(|s| (s - 1.0).abs() <= 1e-4), "{dim:?} #{k}: {sv:?}");
            assert!(rep.exact);
            let horn = horn_svd(&corr).unwrap();
            assert!(frob(rep.rigid_pose.rotation(), horn.pose.rotation()) < 1e-4);
        }
    }
}

#[test]
fn hull_optimum_is_a_lower_bound() {
    let mut r = rng(51);
    let proj = ProjectionSpec::identity(SpaceDim::Spatial);
    for _ in 0..20 {
        let (truth, corr) = instance(&mut r, SpaceDim::Spatial, 15, 0.3);
        let rep = estimate(&corr, &proj, &EstimatorConfig::default()).unwrap();
        for pose in [
            truth,
            horn_svd(&corr).unwrap().pose,
            RigidPose::identity(SpaceDim::Spatial),
        ] {
            assert!(rep.residual <= residual(&corr, &proj, &pose).unwrap() + 1e-6);
        }
    }
}

#[test]
fn robust_with_huge_lambda_matches_least_squares() {
    let mut r = rng(61);
    let (_, corr) = instance(&mut r, SpaceDim::Spatial, 30, 0.05);
    let proj = ProjectionSpec::identity(SpaceDim::Spatial);
    let cfg = EstimatorConfig::default();
    let rep = estimate_robust(&corr, &proj, 1e6, &cfg).unwrap();
    assert!(rep.outliers.is_empty());
    assert_eq!(rep.z1.as_ref().unwrap().amax(), 0.0);
    // With Z = 0 the robust problem is the quadratic relaxation itself.
    let quad = EstimatorConfig {
        objective: RelaxationObjective::Quadratic,
        ..EstimatorConfig::default()
    };
    let plain = estimate(&corr, &proj, &quad).unwrap();
    assert!(frob(rep.rigid_pose.rotation(), plain.rigid_pose.rotation()) < 1e-6);
    assert!((rep.rigid_pose.translation() - plain.rigid_pose.translation()).norm() < 1e-6);
}

#[test]
fn robust_with_tiny_lambda_absorbs_everything() {
    let mut r = rng(62);
    let (_, corr) = instance(&mut r, SpaceDim::Spatial, 30, 0.05);
    let rep = estimate_robust(
        &corr,
        &ProjectionSpec::identity(SpaceDim::Spatial),
        1e-9,
        &EstimatorConfig::default(),
    )
    .unwrap();
    assert_eq!(rep.outliers.len(), 30);
}

#[test]
fn robust_objective_never_increases() {
    let mut r = rng(71);
    let (_, corr) = instance(&mut r, SpaceDim::Spatial, 50, 0.02);
    let mut obs = corr.observations().clone();
    for i in 0..8 {
        obs.column_mut(i).add_scalar_mut(2.0);
    }
    let corr = corr.with_observations(obs).unwrap();
    let rep = estimate_robust(
        &corr,
        &ProjectionSpec::identity(SpaceDim::Spatial),
        0.1,
        &EstimatorConfig::default(),
    )
    .unwrap();
    let trace = &rep.robust.as_ref().unwrap().objective_trace;
    assert!(trace.len() >= 2);
    for w in trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "{trace:?}");
    }
    assert!((0..8).all(|i| rep.outliers.contains(&i)));
    assert!(rep.outliers.len() <= 8 + 3, "{:?}", rep.outliers);
}

#[test]
fn robust_rejects_bad_lambda() {
    let mut r = rng(1);
    let (_, corr) = instance(&mut r, SpaceDim::Spatial, 10, 0.0);
    for lambda in [0.0, -1.0, f64::NAN] {
        let e = estimate_robust(
            &corr,
            &ProjectionSpec::identity(SpaceDim::Spatial),
            lambda,
            &EstimatorConfig::default(),
        );
        assert!(matches!(e, Err(EstimationError::BadLambda(_))));
    }
}

#[test]
fn collinear_data_is_not_reported_exact() {
    let model = DMatrix::from_fn(3, 6, |r, c| if r == 0 { c as f64 } else { 0.0 });
    let corr = CorrespondenceSet::new(model.clone(), model, None).unwrap();
    let rep = estimate(
        &corr,
        &ProjectionSpec::identity(SpaceDim::Spatial),
        &EstimatorConfig::default(),
    )
    .unwrap();
    assert!(!rep.exact);
    assert!(rep.residual < 1e-6);
}
