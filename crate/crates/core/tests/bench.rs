use orbitope::bench::{
    pose_error, run, run_method, summarize, time_method, trial_seed, write_rows, ExperimentSpec, Method, ResultRow,
    TrialInstance, CSV_HEADER,
};
use orbitope::pointcloud::synthetic_bunny;

fn small_spec(seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        deltas: vec![0.0, 0.05],
        sample_counts: vec![23, 100],
        trials: 3,
        methods: Method::ALL.to_vec(),
        ..ExperimentSpec::noise_sweep(seed)
    }
}

fn csv_bytes(rows: &[ResultRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_rows(rows, &mut buf).unwrap();
    buf
}

fn without_timing(rows: &[ResultRow]) -> Vec<ResultRow> {
    rows.iter()
        .map(|r| ResultRow {
            wall_time_s: 0.0,
            ..r.clone()
        })
        .collect()
}

#[test]
fn noiseless_trials_recover_every_pose() {
    let spec = ExperimentSpec {
        methods: vec![Method::Orbitope, Method::Horn, Method::Pca, Method::Lm],
        trials: 3,
        ..ExperimentSpec::single(4)
    };
    let out = run(&spec).unwrap();
    assert_eq!(out.rows.len(), 12);
    for row in &out.rows {
        assert!(row.error <= 1e-8, "{row:?}");
        assert!(row.wall_time_s >= 0.0);
        if row.method == Method::Orbitope {
            assert!(row.exact);
        }
    }
}

#[test]
fn csv_reads_back_and_summary_matches() {
    let out = run(&small_spec(9)).unwrap();
    let bytes = csv_bytes(&out.rows);
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>().join(","),
        CSV_HEADER
    );
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), out.rows.len());
    for (rec, row) in records.iter().zip(&out.rows) {
        assert_eq!(&rec[0], row.method.name());
        assert_eq!(rec[1].parse::<f64>().unwrap(), row.delta);
        assert_eq!(rec[2].parse::<usize>().unwrap(), row.n);
        assert_eq!(rec[3].parse::<usize>().unwrap(), row.trial);
        assert_eq!(rec[4].parse::<f64>().unwrap(), row.error);
        assert_eq!(rec[6].parse::<bool>().unwrap(), row.exact);
    }
    for cell in &out.summary {
        let errors: Vec<f64> = records
            .iter()
            .filter(|r| {
                &r[0] == cell.method.name()
                    && r[1].parse::<f64>().unwrap() == cell.delta
                    && r[2].parse::<usize>().unwrap() == cell.n
            })
            .map(|r| r[4].parse().unwrap())
            .collect();
        assert_eq!(errors.len(), cell.trials);
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        assert!((mean - cell.mean).abs() <= 1e-12 * mean.max(1.0));
        assert_eq!(errors.iter().copied().fold(f64::INFINITY, f64::min), cell.min);
        assert_eq!(errors.iter().copied().fold(f64::NEG_INFINITY, f64::max), cell.max);
    }
}

#[test]
fn rows_are_sorted_and_unique() {
    let out = run(&small_spec(2)).unwrap();
    let keys: Vec<_> = out
        .rows
        .iter()
        .map(|r| (r.method, r.delta.to_bits(), r.n, r.trial))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(keys, sorted);
    assert_eq!(summarize(&out.rows), out.summary);
}

#[test]
fn parallel_and_serial_runs_agree() {
    let serial = run(&small_spec(3)).unwrap();
    let parallel = run(&ExperimentSpec {
        parallel: true,
        ..small_spec(3)
    })
    .unwrap();
    assert_eq!(
        csv_bytes(&without_timing(&serial.rows)),
        csv_bytes(&without_timing(&parallel.rows))
    );
    assert_eq!(serial.detections, parallel.detections);
    let again = run(&small_spec(3)).unwrap();
    assert_eq!(without_timing(&serial.rows), without_timing(&again.rows));
}

#[test]
fn error_metric_matches_a_direct_sum() {
    let model = synthetic_bunny(0);
    let inst = TrialInstance::generate(&model, 0.05, 50, None, trial_seed(1, 0.05, 50, 0)).unwrap();
    let spec = ExperimentSpec::noise_sweep(1);
    for method in [Method::Orbitope, Method::Pca] {
        let out = run_method(method, &inst, &spec).unwrap();
        let m = inst.corr.model();
        let mut want = 0.0;
        for i in 0..m.ncols() {
            for r in 0..3 {
                let mut a = inst.truth.translation()[r];
                let mut b = out.pose.translation()[r];
                for c in 0..3 {
                    a += inst.truth.rotation()[(r, c)] * m[(c, i)];
                    b += out.pose.rotation()[(r, c)] * m[(c, i)];
                }
                want += (a - b).powi(2);
            }
        }
        let got = pose_error(m, &inst.truth, &out.pose);
        assert!((got - want).abs() <= 1e-12 * want.max(1.0));
    }
}

#[test]
fn relaxation_residual_never_exceeds_baselines() {
    let out = run(&small_spec(5)).unwrap();
    for orb in out.rows.iter().filter(|r| r.method == Method::Orbitope) {
        for other in out.rows.iter().filter(|r| {
            r.method != Method::Orbitope
                && r.method != Method::Robust
                && (r.delta, r.n, r.trial) == (orb.delta, orb.n, orb.trial)
        }) {
            assert!(orb.residual <= other.residual + 1e-6, "{orb:?} vs {other:?}");
        }
    }
}

#[test]
fn robust_demo_records_detections() {
    let out = run(&ExperimentSpec::robust_demo(0)).unwrap();
    assert_eq!(out.detections.len(), 1);
    let d = &out.detections[0];
    assert!(!d.injected.is_empty());
    assert_eq!(d.missed(), 0);
}

#[test]
fn timing_is_non_negative() {
    let (v, secs) = time_method(|| (0..1000).sum::<u64>());
    assert_eq!(v, 499_500);
    assert!(secs >= 0.0);
}

#[test]
fn invalid_specs_are_rejected() {
    let spec = ExperimentSpec {
        sample_counts: vec![5000],
        ..ExperimentSpec::noise_sweep(0)
    };
    assert!(run(&spec).is_err());
    let spec = ExperimentSpec {
        lambda: 0.0,
        ..ExperimentSpec::noise_sweep(0)
    };
    assert!(run(&spec).is_err());
}
