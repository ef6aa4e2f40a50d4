use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orbitope::bench::{
    emit_csv, load_cloud, run, run_method, write_rows, BenchError, ExperimentSpec, Input, Method, RunOutput,
    TrialInstance,
};
use orbitope::estimation::residual;
use orbitope::geometry::RigidPose;
use orbitope::{CorrespondenceSet, ProjectionSpec};

#[derive(Parser)]
#[command(
    name = "orbitope-bench",
    version,
    about = "Pose estimation over the convex hull of SE(3)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean error against noise level at a fixed sample count.
    SweepNoise(SweepArgs),
    /// Mean error against sample count at a fixed noise level.
    SweepSamples(SweepArgs),
    /// Ear outliers shifted by (2, 2, 2); compares the robust estimator.
    RobustDemo(SweepArgs),
    /// Estimate the pose between a model file and an observation file.
    Estimate(EstimateArgs),
}

#[derive(Args)]
struct Common {
    /// Comma-separated subset of orbitope,horn,pca,lm,robust.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Weight of the l1 outlier penalty.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Noise standard deviations.
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// Sample counts.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, env = "ORBITOPE_SEED", default_value_t = 0)]
    seed: u64,
    /// Model cloud (.ply or .csv); the built-in synthetic cloud otherwise.
    #[arg(long)]
    input: Option<PathBuf>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run trials on all cores.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    /// Model points (.ply or .csv).
    #[arg(long)]
    model: PathBuf,
    /// Observed points, paired with the model by index.
    #[arg(long)]
    observations: PathBuf,
}

fn sweep(base: ExperimentSpec, args: SweepArgs) -> Result<(), BenchError> {
    let mut spec = base;
    if let Some(m) = args.common.methods {
        spec.methods = m;
    }
    if let Some(l) = args.common.lambda {
        spec.lambda = l;
    }
    if let Some(d) = args.delta {
        spec.deltas = d;
    }
    let explicit_n = args.n.is_some();
    if let Some(n) = args.n {
        spec.sample_counts = n;
    }
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    spec.parallel = args.parallel;
    if let Some(path) = &args.input {
        let cloud = load_cloud(path)?;
        if !explicit_n {
            spec.sample_counts.retain(|&n| n < cloud.len());
            spec.sample_counts.push(cloud.len());
        }
        spec.input = Input::Cloud(cloud);
    }
    let out = run(&spec)?;
    match &args.out {
        Some(path) => emit_csv(&out.rows, path)?,
        None => write_rows(&out.rows, io::stdout().lock()).map_err(|source| BenchError::Io {
            path: "<stdout>".into(),
            source,
        })?,
    }
    report(&out);
    Ok(())
}

fn report(out: &RunOutput) {
    let mut err = io::stderr().lock();
    let _ = writeln!(
        err,
        "{:<9} {:>8} {:>6} {:>14} {:>14} {:>14}",
        "method", "delta", "n", "mean", "min", "max"
    );
    for c in &out.summary {
        let _ = writeln!(
            err,
            "{:<9} {:>8} {:>6} {:>14.6e} {:>14.6e} {:>14.6e}",
            c.method.name(),
            c.delta,
            c.n,
            c.mean,
            c.min,
            c.max
        );
    }
    for d in &out.detections {
        let _ = writeln!(
            err,
            "outliers delta={} n={} trial={}: injected {}, flagged {}, missed {}, false positives {}",
            d.delta,
            d.n,
            d.trial,
            d.injected.len(),
            d.flagged.len(),
            d.missed(),
            d.false_positives()
        );
    }
}

fn format_pose(pose: &RigidPose) -> (String, String) {
    let r = pose.rotation();
    let rot: Vec<String> = (0..r.nrows())
        .flat_map(|i| (0..r.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| r[(i, j)].to_string())
        .collect();
    let t: Vec<String> = pose.translation().iter().map(f64::to_string).collect();
    (rot.join(" "), t.join(" "))
}

fn estimate(args: EstimateArgs) -> Result<(), BenchError> {
    let model = load_cloud(&args.model)?;
    let obs = load_cloud(&args.observations)?;
    let corr = CorrespondenceSet::new(model.points().clone(), obs.points().clone(), None)
        .map_err(|e| BenchError::Spec(e.to_string()))?;
    let mut spec = ExperimentSpec::single(0);
    spec.methods = args.common.methods.unwrap_or_else(|| Method::ALL.to_vec());
    if let Some(l) = args.common.lambda {
        spec.lambda = l;
    }
    spec.validate()?;
    let proj = ProjectionSpec::identity(corr.dim());
    let inst = TrialInstance {
        truth: RigidPose::identity(corr.dim()),
        corr,
        injected: Vec::new(),
    };
    let mut stdout = io::stdout().lock();
    let io_err = |source| BenchError::Io {
        path: "<stdout>".into(),
        source,
    };
    writeln!(stdout, "method,residual,exact,wall_time_s,rotation,translation").map_err(io_err)?;
    for &method in &spec.methods {
        let out = run_method(method, &inst, &spec)?;
        let res = residual(&inst.corr, &proj, &out.pose).map_err(|source| BenchError::Method { method, source })?;
        let (rot, t) = format_pose(&out.pose);
        writeln!(stdout, "{method},{res},{},{},{rot},{t}", out.exact, out.wall_time_s).map_err(io_err)?;
    }
    Ok(())
}

fn error_kind(e: &BenchError) -> &'static str {
    match e {
        BenchError::Spec(_) => "spec",
        BenchError::Io { .. } => "io",
        BenchError::Parse { .. } | BenchError::Cloud(_) => "input",
        BenchError::Method { .. } => "method",
    }
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error: usage: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::SweepNoise(a) => sweep(ExperimentSpec::noise_sweep(a.seed), a),
        Command::SweepSamples(a) => sweep(ExperimentSpec::sample_sweep(a.seed), a),
        Command::RobustDemo(a) => sweep(ExperimentSpec::robust_demo(a.seed), a),
        Command::Estimate(a) => estimate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", error_kind(&e), one_line(&e.to_string()));
            ExitCode::from(1)
        }
    }
}
