//! Command-line front end for the `isopca` library.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};

use isopca::demo::unit_circle_demo;
use isopca::evaluation::{
    affine_invariance_experiment, baseline_comparison, repeated_trials, sample_error, TrialBudget, TrialRow,
};
use isopca::fisher::overlap_report;
use isopca::io::{read_json, read_mixture, read_points, to_json, write_points_to};
use isopca::mixture::{
    isotropic_params, parallel_pancakes, random_mixture, random_separable_mixture, symmetric_balanced_mixture,
};
use isopca::rng::rng_from;
use isopca::{
    classify, exact_mixture_moments, linalg, sample_reweighted_moments, unravel, AffineMap, Error,
    GaussianMixture, LabeledSample, PolyhedralPartition, UnravelConfig,
};

#[derive(Debug, Parser)]
#[command(name = "isopca", version, about = "Affine-invariant clustering of Gaussian mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a mixture from a preset and optionally sample from it.
    Generate(GenerateArgs),
    /// Overlap, Fisher basis and within-component spectrum of a mixture.
    Analyze(AnalyzeArgs),
    /// Partition a point set.
    Cluster(ClusterArgs),
    /// Assign points to the leaves of a saved partition.
    Classify(ClassifyArgs),
    /// Compare exact and sampled reweighted moments.
    Moments(MomentsArgs),
    /// Run a seeded experiment suite and write one CSV row per trial and arm.
    Experiment(ExperimentArgs),
    /// Points on two parallel segments, rotated and projected to the unit circle.
    Demo2d(DemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Pancakes,
    Random,
    Separable,
    Balanced,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Half the distance between pancake means.
    #[arg(long, default_value_t = 1.0)]
    pub d: f64,
    /// Standard deviation of the pancakes along the separating axis.
    #[arg(long, default_value_t = 0.008)]
    pub sigma: f64,
    /// Weight of the first pancake.
    #[arg(long, default_value_t = 0.5)]
    pub w1: f64,
    /// Target overlap for the separable preset.
    #[arg(long, default_value_t = 1e-3)]
    pub overlap: f64,
    /// Scale of the within-component spread along the means for the balanced preset.
    #[arg(long, default_value_t = 0.1)]
    pub thinness: f64,
    /// Put the mixture in isotropic position before writing it.
    #[arg(long)]
    pub isotropic: bool,
    /// Mixture JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of labeled points to draw.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Points CSV output; stdout when `--samples` is given without it.
    #[arg(long)]
    pub points: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub mix: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlgorithmArgs {
    #[arg(long)]
    pub k: usize,
    /// Lower bound on the component weights; defaults to `1/k`.
    #[arg(long)]
    pub wmin: Option<f64>,
    /// Reweighting scale; defaults to `n / wmin` at every node.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 20_000)]
    pub m1: usize,
    #[arg(long, default_value_t = 10_000)]
    pub m2: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    pub eps_floor: f64,
}

impl AlgorithmArgs {
    fn config(&self) -> UnravelConfig {
        let mut c = UnravelConfig::new(self.k, self.wmin.unwrap_or(1.0 / self.k.max(1) as f64), self.m1, self.m2, self.seed);
        c.alpha = self.alpha;
        c.eps_floor = self.eps_floor;
        if let Some(d) = self.max_depth {
            c.max_depth = d;
        }
        c
    }
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub points: PathBuf,
    #[command(flatten)]
    pub algo: AlgorithmArgs,
    /// Partition JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Error report JSON output, written when the points carry labels.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub partition: PathBuf,
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[arg(long)]
    pub mix: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 200_000)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Same samples before and after an ill-conditioned affine map, plus the baseline.
    Invariance,
    /// Repeated runs on parallel pancakes.
    Pancake,
    /// The algorithm against the principal-component splitter on shared samples.
    Baseline,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    /// Samples per trial.
    #[arg(long, default_value_t = 30_000)]
    pub m: usize,
    #[arg(long, default_value_t = 100_000)]
    pub m_eval: usize,
    /// Condition number of the map in the invariance suite.
    #[arg(long, default_value_t = 1e3)]
    pub cond: f64,
    /// Pancake thickness along the separating axis.
    #[arg(long, default_value_t = 0.008)]
    pub sigma: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 2_000)]
    pub m: usize,
    /// Rotation in radians.
    #[arg(long, default_value_t = 0.6)]
    pub angle: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit
/// code: 0 on success, 2 for bad arguments or input files, 1 for numerical failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                2
            } else {
                1
            }
        }
    }
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Analyze(a) => analyze(a),
        Command::Cluster(a) => cluster(a),
        Command::Classify(a) => classify_cmd(a),
        Command::Moments(a) => moments(a),
        Command::Experiment(a) => experiment(a),
        Command::Demo2d(a) => demo2d(a),
    }
}

fn check_output(path: &Option<PathBuf>) -> Result<(), Error> {
    if let Some(p) = path {
        let parent = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(Error::InvalidArgument(format!("output directory {} does not exist", parent.display())));
        }
    }
    Ok(())
}

fn check_input(path: &Path) -> Result<(), Error> {
    if !path.is_file() {
        return Err(Error::InvalidArgument(format!("input file {} not found", path.display())));
    }
    Ok(())
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn emit_text(path: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    let mut out = open_output(path)?;
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn positive(name: &str, value: usize) -> Result<(), Error> {
    if value == 0 {
        return Err(Error::InvalidArgument(format!("{name} must be positive")));
    }
    Ok(())
}

fn build_mixture(a: &GenerateArgs) -> Result<GaussianMixture, Error> {
    let mix = match a.preset {
        Preset::Pancakes => parallel_pancakes(a.n, a.d, a.sigma, a.w1)?,
        Preset::Random => random_mixture(a.k, a.n, a.seed)?,
        Preset::Separable => random_separable_mixture(a.k, a.n, a.overlap, a.seed)?,
        Preset::Balanced => symmetric_balanced_mixture(a.k, a.n, a.thinness, a.seed)?,
    };
    Ok(if a.isotropic { isotropic_params(&mix)?.1 } else { mix })
}

fn generate(a: GenerateArgs) -> Result<(), Error> {
    check_output(&a.out)?;
    check_output(&a.points)?;
    if a.points.is_some() && a.samples.is_none() {
        return Err(Error::InvalidArgument("--points requires --samples".into()));
    }
    let mix = build_mixture(&a)?;
    if let Some(m) = a.samples {
        positive("samples", m)?;
        let sample = mix.sample(m, a.seed);
        write_points_to(open_output(&a.points)?, &sample.points, Some(&sample.labels))?;
    }
    if a.out.is_some() || a.samples.is_none() {
        emit_text(&a.out, &isopca::io::mixture_to_json(&mix))?;
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<(), Error> {
    check_input(&a.mix)?;
    check_output(&a.out)?;
    let report = overlap_report(&read_mixture(&a.mix)?)?;
    emit_text(&a.out, &to_json(&report)?)
}

fn cluster(a: ClusterArgs) -> Result<(), Error> {
    check_input(&a.points)?;
    check_output(&a.out)?;
    check_output(&a.report)?;
    let config = a.algo.config();
    let file = read_points(&a.points)?;
    config.validate(file.points.ncols())?;
    let partition = unravel(&file.points, &config)?;
    log::info!("{} leaves, depth {}", partition.leaves(), partition.depth());
    emit_text(&a.out, &to_json(&partition)?)?;
    match (file.labels, &a.report) {
        (Some(labels), Some(_)) => {
            let k = labels.iter().max().map_or(0, |m| m + 1).max(config.k);
            let sample = LabeledSample { points: file.points, labels };
            emit_text(&a.report, &to_json(&sample_error(&partition, &sample, k)?)?)
        }
        (None, Some(_)) => Err(Error::InvalidArgument("--report needs a label column in the points file".into())),
        _ => Ok(()),
    }
}

fn classify_cmd(a: ClassifyArgs) -> Result<(), Error> {
    check_input(&a.partition)?;
    check_input(&a.points)?;
    check_output(&a.out)?;
    let partition: PolyhedralPartition = read_json(&a.partition)?;
    let file = read_points(&a.points)?;
    if file.points.ncols() != partition.dim() {
        return Err(Error::DimensionMismatch {
            expected: partition.dim(),
            got: file.points.ncols(),
        });
    }
    let mut text = String::from("leaf\n");
    for row in file.points.row_iter() {
        text.push_str(&classify(&partition, &row.transpose())?.to_string());
        text.push('\n');
    }
    let mut out = open_output(&a.out)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn moments(a: MomentsArgs) -> Result<(), Error> {
    check_input(&a.mix)?;
    check_output(&a.out)?;
    positive("m", a.m)?;
    let mix = read_mixture(&a.mix)?;
    let alpha = a.alpha.unwrap_or(mix.n() as f64 / mix.min_weight());
    let exact = exact_mixture_moments(&mix, alpha)?;
    let sampled = sample_reweighted_moments(&mix.sample(a.m, a.seed).points, alpha)?;
    let mut w = csv::Writer::from_writer(open_output(&a.out)?);
    w.write_record(["quantity", "exact", "sampled", "abs_diff"])?;
    let mut record = |name: String, x: f64, y: f64| w.write_record([name, x.to_string(), y.to_string(), (x - y).abs().to_string()]);
    record("alpha".into(), alpha, sampled.alpha)?;
    record("u_norm".into(), exact.u.norm(), sampled.u.norm())?;
    record("m_norm".into(), linalg::spectral_norm(&exact.m), linalg::spectral_norm(&sampled.m))?;
    record("u_error".into(), 0.0, (&sampled.u - &exact.u).norm())?;
    record("m_error".into(), 0.0, linalg::spectral_norm(&(&sampled.m - &exact.m)))?;
    for i in 0..mix.n() {
        record(format!("u[{i}]"), exact.u[i], sampled.u[i])?;
    }
    for i in 0..mix.n() {
        for j in i..mix.n() {
            record(format!("m[{i}][{j}]"), exact.m[(i, j)], sampled.m[(i, j)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `U diag(cond^(i/(n-1))) V^T + b` with Haar-random `U`, `V` and Gaussian `b`.
fn ill_conditioned_map(n: usize, cond: f64, seed: u64) -> Result<AffineMap, Error> {
    let mut rng = rng_from(seed, &[0x004D_4150]);
    let u = linalg::random_orthogonal(n, &mut rng);
    let v = linalg::random_orthogonal(n, &mut rng);
    let s = DVector::from_fn(n, |i, _| cond.powf(i as f64 / (n.max(2) - 1) as f64));
    let b = linalg::gaussian_vector(n, &mut rng);
    AffineMap::new(u * DMatrix::from_diagonal(&s) * v.transpose(), b)
}

fn experiment(a: ExperimentArgs) -> Result<(), Error> {
    check_output(&a.out)?;
    positive("trials", a.trials)?;
    positive("m", a.m)?;
    if !(a.cond >= 1.0) {
        return Err(Error::InvalidArgument(format!("cond must be at least 1, got {}", a.cond)));
    }
    let m1 = 2 * a.m / 3;
    let budget = TrialBudget { trials: a.trials, m: a.m, m_eval: a.m_eval };
    let pancakes = || parallel_pancakes(a.n, 1.0, a.sigma, 0.5);
    let rows: Vec<TrialRow> = match a.suite {
        Suite::Invariance => {
            let mix = pancakes()?;
            let config = UnravelConfig::new(2, 0.45, m1, a.m - m1, a.seed);
            config.validate(a.n)?;
            affine_invariance_experiment(&mix, &ill_conditioned_map(a.n, a.cond, a.seed)?, &config, budget)?.rows
        }
        Suite::Pancake => {
            let config = UnravelConfig::new(2, 0.45, m1, a.m - m1, a.seed);
            config.validate(a.n)?;
            repeated_trials(&pancakes()?, &config, budget)?.into_iter().map(|(r, _)| r).collect()
        }
        Suite::Baseline => {
            let config = UnravelConfig::new(2, 0.45, m1, a.m - m1, a.seed);
            config.validate(a.n)?;
            baseline_comparison(&pancakes()?, &config, budget)?
        }
    };
    let mut w = csv::Writer::from_writer(open_output(&a.out)?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn demo2d(a: DemoArgs) -> Result<(), Error> {
    check_output(&a.out)?;
    let demo = unit_circle_demo(a.m, a.angle, a.seed)?;
    log::info!(
        "recovered axis ({}, {}), error {} rad",
        demo.recovered_axis[0],
        demo.recovered_axis[1],
        demo.axis_error
    );
    let mut w = csv::Writer::from_writer(open_output(&a.out)?);
    w.write_record(["x", "y", "px", "py"])?;
    for (p, q) in demo.points.row_iter().zip(demo.projected.row_iter()) {
        w.write_record([p[0], p[1], q[0], q[1]].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
