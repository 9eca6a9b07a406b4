mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use exgl::data::{DesignMatrix, GroupAllocation, ResponseVector, SignConstraint, Task};
use exgl::egl::{EglConfig, Loss, SolverKind};
use exgl::experiments::{self, HarnessConfig, StabilityPenalty, TablePlan, Target};
use exgl::io::{self, Report, ReportFile, ReportFormat};
use exgl::selection::{
    append_artificial, oracle_allocation, random_allocation, stability_select, strip_artificial,
    AllocationPolicy, ArtificialMode, ArtificialSpec, StabilityConfig, ThresholdMode, WeightLaw,
};
use exgl::synth::{CovarianceFamily, SignPattern, SynthSpec};
use exgl::{f_measure, kkt_violation, lasso, rng, SelectionOutcome};

use config::{require, FileConfig};

/// Bad invocation; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(
    name = "exgl",
    version,
    about = "Exclusive group Lasso feature selection"
)]
struct Cli {
    /// TOML experiment file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: EXGL_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and its ground-truth sidecar.
    Generate(GenerateArgs),
    /// Run one solver on a dataset.
    Fit(FitArgs),
    /// Stability selection.
    Stability(StabilityArgs),
    /// Re-run a benchmark table or figure.
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct SynthArgs {
    /// pairwise, random-pairwise, block-diagonal or erdos-renyi.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Number of informative features.
    #[arg(long)]
    ns: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    /// Magnitude of the informative weights.
    #[arg(long)]
    ws: Option<f64>,
    #[arg(long)]
    noise_var: Option<f64>,
    /// Blocks for block-diagonal.
    #[arg(long)]
    blocks: Option<usize>,
    /// Edge probability for erdos-renyi.
    #[arg(long)]
    p_connect: Option<f64>,
    /// Coupled irrelevant features for random-pairwise.
    #[arg(long)]
    coupled: Option<usize>,
    /// Equal numbers of positive and negative weights.
    #[arg(long)]
    balanced: bool,
}

impl SynthArgs {
    fn any(&self) -> bool {
        self.family.is_some()
            || self.m.is_some()
            || self.n.is_some()
            || self.ns.is_some()
            || self.rho.is_some()
            || self.ws.is_some()
    }

    fn spec(&self, file: &FileConfig, seed: u64) -> anyhow::Result<SynthSpec> {
        let s = file.synth.clone().unwrap_or_default();
        let family_name = require("family", [self.family.clone(), s.family.clone()])?;
        let family = match family_name.as_str() {
            "pairwise" => CovarianceFamily::Pairwise,
            "random-pairwise" => CovarianceFamily::RandomPairwise {
                n_coupled: self.coupled.or(s.coupled).unwrap_or(20),
                partners: 2,
                coupling: None,
            },
            "block-diagonal" => CovarianceFamily::BlockDiagonal {
                n_blocks: self.blocks.or(s.blocks).unwrap_or(5),
            },
            "erdos-renyi" => CovarianceFamily::ErdosRenyi {
                p_connect: self.p_connect.or(s.p_connect).unwrap_or(5.0 / 29.0),
            },
            other => return Err(usage(format!("unknown family {other:?}"))),
        };
        let spec = SynthSpec {
            m: require("m", [self.m, s.m])?,
            n: require("n", [self.n, s.n])?,
            n_s: require("ns", [self.ns, s.ns])?,
            rho: require("rho", [self.rho, s.rho])?,
            w_s: require("ws", [self.ws, s.ws])?,
            noise_var: self.noise_var.or(s.noise_var).unwrap_or(1.0),
            family,
            sign_pattern: if self.balanced || s.balanced.unwrap_or(false) {
                SignPattern::Balanced
            } else {
                SignPattern::Random
            },
            rng_seed: seed,
        };
        spec.validate().map_err(|e| usage(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset CSV; the truth sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset CSV (header row, response in the last column).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Ground-truth sidecar; defaults to `<data>.truth.json` when present.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// regression or classification.
    #[arg(long)]
    task: Option<String>,
    /// Fit on the raw columns instead of standardized ones.
    #[arg(long)]
    no_standardize: bool,
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// lasso, egl-reweight, egl-iterative or egl-activeset.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Number of random groups.
    #[arg(long)]
    groups: Option<usize>,
    /// One group per informative feature, taken from the truth sidecar.
    #[arg(long)]
    fixed_groups: bool,
    /// Forbid negative weights (re-weighting solver only).
    #[arg(long)]
    constrain_sign: bool,
    #[arg(long)]
    max_outer_iter: Option<usize>,
    #[arg(long)]
    outer_tol: Option<f64>,
    #[arg(long)]
    kkt_tol: Option<f64>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Report path; `.csv` selects the per-feature table, otherwise JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StabilityArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    iterations: Option<usize>,
    /// Redraw the random groups in every iteration.
    #[arg(long)]
    reshuffle: bool,
    /// Add one artificial feature per random group.
    #[arg(long)]
    artificial: bool,
    /// Variance of the artificial weights (regression).
    #[arg(long)]
    artificial_weight_var: Option<f64>,
    /// kmeans or fixed:<pi>.
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    /// fig2, fig3, table3-trend, table4, table5, table6 or table7.
    target: String,
    /// Multiplies the reference replicate counts.
    #[arg(long)]
    scale: Option<f64>,
    /// Exact replicate count, overriding --scale.
    #[arg(long)]
    replicates: Option<usize>,
    /// Restrict table targets to these example numbers.
    #[arg(long, value_delimiter = ',')]
    examples: Vec<usize>,
    /// Restrict table targets to these weight magnitudes.
    #[arg(long, value_delimiter = ',')]
    ws: Vec<f64>,
    /// Restrict table targets to these method labels, e.g. "Lasso(S)".
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Time the re-weighting solver to convergence on every penalty.
    #[arg(long)]
    full_timing: bool,
    /// Feature counts for table3-trend.
    #[arg(long = "n", value_delimiter = ',')]
    n_values: Vec<usize>,
    /// Penalty of EGL stability runs: group-count or cv.
    #[arg(long)]
    stability_penalty: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Truth {
    support: Vec<usize>,
    w_true: Vec<f64>,
    spec: SynthSpec,
}

fn truth_path(data: &Path) -> PathBuf {
    data.with_extension("truth.json")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = config::load(cli.config.as_deref())?;
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => match std::env::var("EXGL_THREADS") {
            Ok(v) => Some(
                v.parse()
                    .map_err(|_| usage(format!("EXGL_THREADS={v:?} is not a count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Generate(a) => generate(a, &file),
        Command::Fit(a) => fit(a, &file),
        Command::Stability(a) => stability(a, &file),
        Command::Reproduce(a) => reproduce(a, &file),
    }
}

fn generate(a: GenerateArgs, file: &FileConfig) -> anyhow::Result<()> {
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let spec = a.synth.spec(file, seed)?;
    let out = require("out", [a.out.clone(), file.out.clone()])?;
    let data = exgl::generate(&spec)?;
    io::save_dataset(&out, &data.x, &data.y, None)?;
    let truth = Truth {
        support: data.support.clone(),
        w_true: data.w_true.0.to_vec(),
        spec,
    };
    let sidecar = truth_path(&out);
    std::fs::write(&sidecar, serde_json::to_string_pretty(&truth)?)
        .with_context(|| format!("writing {}", sidecar.display()))?;
    println!(
        "wrote {} ({} x {}) and {}",
        out.display(),
        data.x.n_samples(),
        data.x.n_features(),
        sidecar.display()
    );
    Ok(())
}

/// Prepared inputs of a fit or stability run.
struct Loaded {
    x: DesignMatrix,
    y: ResponseVector,
    truth: Option<Truth>,
    source: String,
    seed: u64,
}

fn load_data(a: &DataArgs, file: &FileConfig) -> anyhow::Result<Loaded> {
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let task = match a
        .task
        .as_deref()
        .or(file.task.as_deref())
        .unwrap_or("regression")
    {
        "regression" => Task::Regression,
        "classification" => Task::BinaryClassification,
        other => return Err(usage(format!("unknown task {other:?}"))),
    };
    let path = a.data.clone().or_else(|| file.data.clone());
    let synth_given = a.synth.any() || file.synth.is_some();
    let (x, y, truth, source) = match (path, synth_given) {
        (Some(_), true) => {
            return Err(usage(
                "give either --data or synthetic-data options, not both",
            ))
        }
        (None, false) => {
            return Err(usage(
                "missing data source: --data or synthetic-data options",
            ))
        }
        (Some(p), false) => {
            let ds = io::load_dataset(&p, task)?;
            let tp = a.truth.clone().or_else(|| file.truth.clone());
            let truth = match tp {
                Some(t) => Some(read_truth(&t)?),
                None if truth_path(&p).exists() => Some(read_truth(&truth_path(&p))?),
                None => None,
            };
            (ds.x, ds.y, truth, p.display().to_string())
        }
        (None, true) => {
            let spec = a.synth.spec(file, seed)?;
            let d = exgl::generate(&spec)?;
            let truth = Truth {
                support: d.support,
                w_true: d.w_true.0.to_vec(),
                spec,
            };
            (d.x, d.y, Some(truth), "synthetic".to_string())
        }
    };
    if let Some(t) = &truth {
        if t.support.iter().any(|&j| j >= x.n_features()) {
            bail!("truth support does not fit {} features", x.n_features());
        }
    }
    let standardize = !a.no_standardize && file.standardize.unwrap_or(true);
    let (x, y) = if standardize {
        (x.standardize()?, y.centered())
    } else {
        (x, y)
    };
    Ok(Loaded {
        x,
        y,
        truth,
        source,
        seed,
    })
}

fn read_truth(path: &Path) -> anyhow::Result<Truth> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

struct Model {
    solver: SolverKind,
    cfg: EglConfig,
    n_groups: Option<usize>,
    fixed: bool,
}

fn model(m: &ModelArgs, file: &FileConfig, default_solver: SolverKind) -> anyhow::Result<Model> {
    let solver = match m.solver.as_deref().or(file.solver.as_deref()) {
        None => default_solver,
        Some(s) => SolverKind::parse(s).ok_or_else(|| usage(format!("unknown solver {s:?}")))?,
    };
    let lambda = require("lambda", [m.lambda, file.lambda])?;
    let mut cfg = EglConfig::new(lambda);
    let e = file.egl.clone().unwrap_or_default();
    if let Some(v) = m.max_outer_iter.or(e.max_outer_iter) {
        cfg.max_outer_iter = v;
    }
    if let Some(v) = m.outer_tol.or(e.outer_tol) {
        cfg.outer_tol = v;
    }
    if let Some(v) = m.kkt_tol.or(e.kkt_tol) {
        cfg.kkt_tol = v;
    }
    if let Some(v) = e.bisection_tol {
        cfg.bisection_tol = v;
    }
    if let Some(v) = e.eps_clamp {
        cfg.eps_clamp = v;
    }
    let constrain = m.constrain_sign
        || file
            .stability
            .as_ref()
            .and_then(|s| s.constrain_sign)
            .unwrap_or(false);
    if constrain {
        cfg.sign_constraint = SignConstraint::forbid(-1)?;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(Model {
        solver,
        cfg,
        n_groups: m.groups.or(file.groups),
        fixed: m.fixed_groups || file.fixed_groups.unwrap_or(false),
    })
}

fn loss_for(y: &ResponseVector) -> Loss {
    match y.task() {
        Task::Regression => Loss::Square,
        Task::BinaryClassification => Loss::Logistic,
    }
}

/// Group structure for a single fit.
fn fit_groups(model: &Model, data: &Loaded) -> anyhow::Result<GroupAllocation> {
    let n = data.x.n_features();
    if model.solver == SolverKind::Lasso {
        return Ok(GroupAllocation::single(n));
    }
    let mut r = rng::seeded(rng::derive_seed(data.seed, &[1]));
    match (model.fixed, model.n_groups, &data.truth) {
        (true, _, Some(t)) => Ok(oracle_allocation(n, &t.support, &mut r)?),
        (true, _, None) => Err(usage("--fixed-groups needs a truth sidecar")),
        (false, Some(k), _) => Ok(random_allocation(n, k, &mut r)?),
        (false, None, _) => Err(usage("EGL solvers need --groups or --fixed-groups")),
    }
}

fn report_format(path: &Path) -> ReportFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => ReportFormat::Csv,
        _ => ReportFormat::Json,
    }
}

fn f_line(selected: &[usize], truth: &Option<Truth>, n: usize) -> anyhow::Result<Option<f64>> {
    match truth {
        None => Ok(None),
        Some(t) => {
            let o = SelectionOutcome::new(selected.iter().copied(), t.support.iter().copied(), n)?;
            Ok(Some(f_measure(&o)?))
        }
    }
}

fn fit(a: FitArgs, file: &FileConfig) -> anyhow::Result<()> {
    let data = load_data(&a.data, file)?;
    let model = model(&a.model, file, SolverKind::EglActiveset)?;
    let groups = fit_groups(&model, &data)?;
    let loss = loss_for(&data.y);
    let t = Instant::now();
    let result = exgl::egl::fit(model.solver, &data.x, &data.y, &groups, &model.cfg, loss)?;
    let secs = t.elapsed().as_secs_f64();
    let lambda = model.cfg.lambda;
    let (objective, kkt) = match (model.solver, loss) {
        (SolverKind::Lasso, _) => {
            let r = &data.y.values() - &data.x.predict(result.weights.view());
            let obj = r.dot(&r) + lambda * result.weights.0.iter().map(|v| v.abs()).sum::<f64>();
            (
                obj,
                Some(lasso::lasso_kkt_violation(
                    &data.x,
                    &data.y,
                    result.weights.view(),
                    lambda,
                )?),
            )
        }
        (_, Loss::Square) => (
            exgl::egl_objective(&data.x, &data.y, result.weights.view(), &groups, lambda)?,
            Some(kkt_violation(
                &data.x,
                &data.y,
                result.weights.view(),
                &groups,
                lambda,
            )?),
        ),
        (_, Loss::Logistic) => (result.final_objective().unwrap_or(f64::NAN), None),
    };
    println!("solver      {}", model.solver.name());
    println!(
        "data        {} ({} x {})",
        data.source,
        data.x.n_samples(),
        data.x.n_features()
    );
    println!("lambda      {lambda}");
    println!("objective   {objective:.10e}");
    println!("active set  {}", result.active_set.len());
    println!("converged   {}", result.converged);
    println!("iterations  {}", result.n_iterations);
    println!("wall time   {secs:.3}s");
    match kkt {
        Some(v) => println!("kkt         {v:.3e}"),
        None => println!("kkt         n/a"),
    }
    if let Some(f) = f_line(&result.active_set, &data.truth, data.x.n_features())? {
        println!("f measure   {f:.4}");
    }
    let out = a
        .out
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("fit.json"));
    let echo = serde_json::json!({
        "command": "fit",
        "data": data.source,
        "solver": model.solver,
        "egl": model.cfg,
        "groups": groups.groups(),
        "truth": data.truth.as_ref().map(|t| &t.spec),
    });
    let seeds = BTreeMap::from([("seed".to_string(), data.seed)]);
    io::save_report(
        &ReportFile::new(Report::Fit(result), echo, seeds),
        &out,
        report_format(&out),
    )?;
    println!("report      {}", out.display());
    Ok(())
}

fn parse_threshold(s: &str) -> anyhow::Result<ThresholdMode> {
    if s == "kmeans" {
        return Ok(ThresholdMode::KMeans);
    }
    match s.strip_prefix("fixed:").map(str::parse::<f64>) {
        Some(Ok(pi)) if (0.0..=1.0).contains(&pi) => Ok(ThresholdMode::Fixed(pi)),
        _ => Err(usage(format!(
            "threshold must be kmeans or fixed:<pi in [0,1]>, got {s:?}"
        ))),
    }
}

fn stability(a: StabilityArgs, file: &FileConfig) -> anyhow::Result<()> {
    let data = load_data(&a.data, file)?;
    let mut model = model(&a.model, file, SolverKind::EglActiveset)?;
    if model.solver == SolverKind::Lasso {
        model.fixed = false;
        model.n_groups = Some(1);
    }
    let s = file.stability.clone().unwrap_or_default();
    let iterations = a.iterations.or(s.iterations).unwrap_or(50);
    let reshuffle = a.reshuffle || s.reshuffle.unwrap_or(false);
    let artificial = a.artificial || s.artificial.unwrap_or(false);
    let threshold = match a.threshold.as_deref().or(s.threshold.as_deref()) {
        Some(t) => parse_threshold(t)?,
        None => ThresholdMode::KMeans,
    };
    let n_real = data.x.n_features();
    let loss = loss_for(&data.y);
    let mut r = rng::seeded(rng::derive_seed(data.seed, &[1]));

    let (policy, n_groups) = match (model.solver, model.fixed, model.n_groups) {
        (SolverKind::Lasso, ..) => (AllocationPolicy::Fixed(GroupAllocation::single(n_real)), 1),
        (_, true, _) => {
            let t = data
                .truth
                .as_ref()
                .ok_or_else(|| usage("--fixed-groups needs a truth sidecar"))?;
            let g = oracle_allocation(n_real, &t.support, &mut r)?;
            let k = g.n_groups();
            (AllocationPolicy::Fixed(g), k)
        }
        (_, false, Some(k)) if reshuffle || artificial => (AllocationPolicy::Random, k),
        (_, false, Some(k)) => (
            AllocationPolicy::Fixed(random_allocation(n_real, k, &mut r)?),
            k,
        ),
        (_, false, None) => return Err(usage("EGL solvers need --groups or --fixed-groups")),
    };
    if artificial && !matches!(policy, AllocationPolicy::Random) {
        return Err(usage("--artificial needs random groups"));
    }

    let artificial_seed = rng::derive_seed(data.seed, &[2]);
    let (x, y, anchors) = if artificial {
        let mode = match data.y.task() {
            Task::Regression => ArtificialMode::Regression {
                feature_mean: 0.0,
                feature_var: 1.0,
                weight: WeightLaw::Normal {
                    mean: 0.0,
                    var: a
                        .artificial_weight_var
                        .or(s.artificial_weight_var)
                        .unwrap_or(0.05),
                },
            },
            Task::BinaryClassification => ArtificialMode::Classification {
                positive_mean: 0.1,
                positive_var: 0.5,
                negative_mean: 0.0,
                negative_var: 1.0,
            },
        };
        let spec = ArtificialSpec {
            mode,
            n_artificial: n_groups,
            rng_seed: artificial_seed,
        };
        let aug = append_artificial(&data.x, &data.y, &spec)?;
        let x = if a.data.no_standardize {
            aug.x
        } else {
            aug.x.standardize()?
        };
        let y = if a.data.no_standardize {
            aug.y
        } else {
            aug.y.centered()
        };
        (x, y, aug.artificial_indices)
    } else {
        (data.x.clone(), data.y.clone(), Vec::new())
    };
    let policy = if anchors.is_empty() {
        policy
    } else {
        AllocationPolicy::RandomAnchored {
            anchors: anchors.clone(),
        }
    };
    let stability_seed = rng::derive_seed(data.seed, &[3]);
    let cfg = StabilityConfig {
        n_iterations: iterations,
        n_groups,
        reshuffle_groups: reshuffle || artificial,
        rng_seed: stability_seed,
        threshold_mode: threshold,
    };
    let t = Instant::now();
    let report = stability_select(&x, &y, &policy, model.solver, &model.cfg, loss, &cfg)?;
    let secs = t.elapsed().as_secs_f64();
    let report = strip_artificial(&report, &anchors);

    println!("solver       {}", model.solver.name());
    println!(
        "data         {} ({} x {})",
        data.source,
        data.x.n_samples(),
        n_real
    );
    println!("iterations   {iterations}");
    println!("artificial   {}", anchors.len());
    println!("threshold    {:.4}", report.threshold);
    println!("stable set   {}", report.stable_set.len());
    println!("unconverged  {}", report.n_nonconverged);
    println!("wall time    {secs:.3}s");
    if let Some(f) = f_line(&report.stable_set, &data.truth, n_real)? {
        println!("f measure    {f:.4}");
    }
    if let Some(t) = &data.truth {
        let truth: std::collections::BTreeSet<usize> = t.support.iter().copied().collect();
        let (p_in, p_out) = exgl::metrics::probability_summary(&report.probabilities, &truth);
        println!("mean prob    informative {p_in:.3}, irrelevant {p_out:.3}");
    }
    let out = a
        .out
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("stability.json"));
    let echo = serde_json::json!({
        "command": "stability",
        "data": data.source,
        "solver": model.solver,
        "egl": model.cfg,
        "stability": cfg,
        "policy": policy,
        "artificial": artificial,
        "truth": data.truth.as_ref().map(|t| &t.spec),
    });
    let seeds = BTreeMap::from([
        ("seed".to_string(), data.seed),
        ("stability".to_string(), stability_seed),
        ("artificial".to_string(), artificial_seed),
    ]);
    io::save_report(
        &ReportFile::new(Report::Stability(report), echo, seeds),
        &out,
        report_format(&out),
    )?;
    println!("report       {}", out.display());
    Ok(())
}

fn reproduce(a: ReproduceArgs, file: &FileConfig) -> anyhow::Result<()> {
    let target = Target::parse(&a.target).ok_or_else(|| {
        let names: Vec<&str> = Target::ALL.iter().map(|t| t.name()).collect();
        usage(format!(
            "unknown target {:?}; expected one of {}",
            a.target,
            names.join(", ")
        ))
    })?;
    let r = file.reproduce.clone().unwrap_or_default();
    let scale = a.scale.or(r.scale).unwrap_or(experiments::DEFAULT_SCALE);
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(usage(format!("--scale must lie in (0, 1], got {scale}")));
    }
    let n_rep = a
        .replicates
        .or(r.replicates)
        .unwrap_or_else(|| experiments::replicates(target.reference_replicates(), scale));
    let stability_penalty = match a.stability_penalty.as_deref() {
        None | Some("group-count") => StabilityPenalty::GroupCount,
        Some("cv") => StabilityPenalty::CrossValidated,
        Some(other) => {
            return Err(usage(format!(
                "--stability-penalty must be group-count or cv, got {other:?}"
            )))
        }
    };
    let hc = HarnessConfig {
        seed: a
            .seed
            .or(file.seed)
            .unwrap_or(HarnessConfig::default().seed),
        stability_penalty,
        ..HarnessConfig::default()
    };
    let dir = a
        .out
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let csv = dir.join(format!("{}.csv", target.name()));
    let t = Instant::now();
    let mut echo = serde_json::json!({
        "target": target.name(),
        "scale": scale,
        "replicates": n_rep,
        "harness": hc,
    });
    match target {
        Target::Fig2 => {
            let settings = experiments::Fig2Settings::default();
            let pts = experiments::fig2(&settings, n_rep, &hc)?;
            println!(
                "{:>6} {:>10} {:>10} {:>6} {:>8}",
                "rho", "mean_fdr", "se", "n", "flagged"
            );
            for p in &pts {
                println!(
                    "{:>6} {:>10.4} {:>10.4} {:>6} {:>8}",
                    p.rho, p.mean_fdr, p.se_fdr, p.n_datasets, p.n_flagged
                );
            }
            experiments::write_csv(&pts, &csv)?;
            echo["settings"] = serde_json::to_value(&settings)?;
        }
        Target::Fig3 => {
            let settings = experiments::Fig3Settings::default();
            let pts = experiments::fig3(&settings, n_rep, &hc)?;
            println!(
                "{:>10} {:>7} {:>7} {:>7} {:>7}",
                "lambda/m", "p1", "p2", "p3", "p4"
            );
            for p in &pts {
                println!(
                    "{:>10.4} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
                    p.lambda_per_sample, p.p1, p.p2, p.p3, p.p4
                );
            }
            experiments::write_csv(&pts, &csv)?;
            echo["settings"] = serde_json::to_value(&settings)?;
        }
        Target::Table3Trend => {
            let mut settings = experiments::TimingSettings::default();
            if a.full_timing {
                settings.reweight_budget = None;
            }
            if !a.n_values.is_empty() {
                settings.n_values = a.n_values.clone();
            }
            let rows = experiments::timing(&settings, &hc)?;
            println!(
                "{:>6} {:>6} {:>5} {:>10} {:>10} {:>9}",
                "m", "n", "n_S", "EGL-AS", "EGL-RW", "complete"
            );
            for r in &rows {
                println!(
                    "{:>6} {:>6} {:>5} {:>10.2} {:>10.2} {:>9}",
                    r.m, r.n, r.n_s, r.activeset_seconds, r.reweight_seconds, r.reweight_complete
                );
            }
            experiments::write_csv(&rows, &csv)?;
            echo["settings"] = serde_json::to_value(&settings)?;
        }
        _ => {
            let mut plan = TablePlan::for_target(target).expect("table target");
            if !a.examples.is_empty() {
                plan = plan.retain_examples(&a.examples);
            }
            if !a.ws.is_empty() {
                plan = plan.retain_w_s(&a.ws);
            }
            if !a.methods.is_empty() {
                let labels: Vec<&str> = a.methods.iter().map(String::as_str).collect();
                plan = plan.retain_methods(&labels);
            }
            if plan.settings.is_empty() || plan.methods.is_empty() {
                return Err(usage("the filters leave no cells to run"));
            }
            let cells = experiments::run_table(&plan, n_rep, &hc)?;
            println!(
                "{:>7} {:>5} {:>10} {:>4} {:>7} {:>7} {:>7} {:>7}",
                "example", "w_S", "method", "n", "F", "se", "P(I)", "P(IR)"
            );
            let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
            for c in &cells {
                println!(
                    "{:>7} {:>5} {:>10} {:>4} {:>7.3} {:>7.3} {:>7} {:>7}",
                    c.example,
                    c.w_s,
                    c.method,
                    c.n_replicates,
                    c.f_mean,
                    c.f_se,
                    opt(c.prob_informative_mean),
                    opt(c.prob_irrelevant_mean)
                );
            }
            experiments::write_csv(&cells, &csv)?;
            echo["plan"] = serde_json::to_value(&plan)?;
        }
    }
    let cfg_path = dir.join(format!("{}.config.json", target.name()));
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&echo)?)
        .with_context(|| format!("writing {}", cfg_path.display()))?;
    println!(
        "wrote {} in {:.1}s",
        csv.display(),
        t.elapsed().as_secs_f64()
    );
    Ok(())
}
