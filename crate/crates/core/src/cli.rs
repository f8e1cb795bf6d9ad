//! Command-line entry points.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dcm::io::{load_model, load_observations, model_to_toml, parse_spec, save_observations, EstimationMetadata};
use crate::dcm::{estimate, k_fold_cv, predict_accuracy, ChoiceModel, CvReport, EstimateOptions, Grouping, UtilitySpec};
use crate::engine::{
    audit_log, replicate_map, replication_seed, write_summaries, EngineError, EventLog, Policy, PolicyName, RunOptions,
    Scenario, ScenarioFile,
};
use crate::eval::{
    arrivals, compare, route_counts, write_series_table, ArrivalSeries, MetricsReport, ReplicationMetrics, RouteShare,
    DEFAULT_BIN_WIDTH_S,
};
use crate::synth::{reference_arrivals, synthetic_observations, FeatureDesign};

const EXIT_OK: i32 = 0;
const EXIT_INVALID: i32 = 1;
const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "crowdroute", version, about = "Route-choice estimation and pedestrian flow simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a logit model to observations and report k-fold accuracy.
    Estimate(EstimateArgs),
    /// k-fold cross-validation report.
    Cv(CvArgs),
    /// Run scenario replications and write event logs.
    Simulate(SimulateArgs),
    /// Compare simulated arrivals with a reference series.
    Evaluate(EvaluateArgs),
    /// Estimate, simulate with the fitted model, then evaluate.
    Pipeline(PipelineArgs),
    /// Generate synthetic observations or a reference arrival series.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "CROWDROUTE_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ObservationArgs {
    /// Observation table (CSV).
    #[arg(long)]
    observations: PathBuf,
    /// Utility specification (TOML); defaults to the table header.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    obs: ObservationArgs,
    /// Seed of the fold assignment.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[command(flatten)]
    obs: ObservationArgs,
    /// Seed of the fold assignment.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Clone, Args)]
struct ScenarioArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Network file replacing the scenario's.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Model file replacing the scenario's.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    policy: Option<PolicyName>,
    #[arg(long)]
    replications: Option<usize>,
    /// Base seed; replication i runs with seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Check kinematic safety every tick and audit each log.
    #[arg(long)]
    audit: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct MetricArgs {
    /// Reference arrival series (CSV).
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH_S)]
    bin_width: f64,
    /// Compare cumulative arrivals instead of per-bin counts.
    #[arg(long)]
    cumulative: bool,
    /// Count scripted agents in route shares.
    #[arg(long)]
    include_scripted: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    logs: PathBuf,
    #[command(flatten)]
    metrics: MetricArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[command(flatten)]
    obs: ObservationArgs,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    metrics: MetricArgs,
    /// Seed of the run that produces the reference when none is given.
    #[arg(long, default_value_t = crate::scenarios::FIREWORK_TRUTH_SEED)]
    truth_seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Observations with choices sampled from a model.
    Observations {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Arrival series of one truth run of a logit-policy scenario.
    Reference {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = crate::scenarios::FIREWORK_TRUTH_SEED)]
        truth_seed: u64,
        #[arg(long, default_value_t = DEFAULT_BIN_WIDTH_S)]
        bin_width: f64,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Runtime(String),
}

type CliResult<T> = Result<T, CliError>;

fn invalid<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Invalid(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Cv(a) => cmd_cv(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Pipeline(a) => cmd_pipeline(&a),
        Command::Synth(s) => cmd_synth(&s),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INVALID
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn create_file(path: &Path) -> CliResult<std::io::BufWriter<fs::File>> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_inputs(a: &ObservationArgs) -> CliResult<(UtilitySpec, Vec<crate::dcm::ChoiceObservation>)> {
    let spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            Some(parse_spec(&text).map_err(invalid)?)
        }
        None => None,
    };
    load_observations(&a.observations, spec.as_ref()).map_err(invalid)
}

fn cross_validate(
    spec: &UtilitySpec,
    obs: &[crate::dcm::ChoiceObservation],
    a: &ObservationArgs,
    seed: u64,
) -> CliResult<CvReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    k_fold_cv(spec, obs, a.folds, Grouping::ByIndividual, &mut rng, &EstimateOptions::default()).map_err(invalid)
}

/// Fits, cross-validates, prints the parameter table and writes `model.toml`.
fn fit(a: &ObservationArgs, seed: u64, out: &Path) -> CliResult<ChoiceModel> {
    let (spec, obs) = load_inputs(a)?;
    let est = estimate(&spec, &obs, &EstimateOptions::default()).map_err(invalid)?;
    let model = est.model(&spec);
    let cv = cross_validate(&spec, &obs, a, seed)?;
    let accuracy = predict_accuracy(&model, &obs).map_err(invalid)?;

    let mut header: Vec<String> = spec.free_labels();
    header.push("accuracy".into());
    let mut values: Vec<String> = est.params.to_free(&spec).iter().map(|v| format!("{v:.3}")).collect();
    values.push(format!("{:.1} %", 100.0 * cv.mean_accuracy));
    let widths: Vec<usize> = header.iter().zip(&values).map(|(h, v)| h.len().max(v.len())).collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    println!("{}", line(&header));
    println!("{}", line(&values));
    println!();
    println!("observations         {}", obs.len());
    println!("log-likelihood       {:.3} (null {:.3})", est.log_likelihood, est.report.null_log_likelihood);
    println!("rho squared          {:.4}", est.rho_squared());
    println!(
        "converged            {} after {} iterations",
        est.report.converged, est.report.iterations
    );
    if let Some(s) = &est.report.separation {
        println!("warning              {s}");
    }
    println!("in-sample accuracy   {:.1} %", 100.0 * accuracy);
    println!(
        "{:<20} {:.1} % mean, {:.1} % pooled",
        format!("{}-fold accuracy", cv.k),
        100.0 * cv.mean_accuracy,
        100.0 * cv.pooled_accuracy
    );

    let mut meta = EstimationMetadata::from_estimate(&est, obs.len());
    meta.cv_mean_accuracy = Some(cv.mean_accuracy);
    meta.cv_pooled_accuracy = Some(cv.pooled_accuracy);
    create_dir(out)?;
    let path = out.join("model.toml");
    write_file(&path, model_to_toml(&model, Some(&meta)))?;
    println!("model written to     {}", path.display());
    Ok(model)
}

fn cmd_estimate(a: &EstimateArgs) -> CliResult<()> {
    fit(&a.obs, a.seed, &a.out.out).map(|_| ())
}

fn cmd_cv(a: &CvArgs) -> CliResult<()> {
    let (spec, obs) = load_inputs(&a.obs)?;
    let cv = cross_validate(&spec, &obs, &a.obs, a.seed)?;
    println!("fold  train  test  converged  train acc  test acc");
    for (i, f) in cv.folds.iter().enumerate() {
        println!(
            "{i:>4}  {:>5}  {:>4}  {:>9}  {:>8.1}%  {:>7.1}%",
            f.n_train,
            f.n_test,
            f.converged,
            100.0 * f.train_accuracy,
            100.0 * f.test_accuracy
        );
    }
    println!("mean held-out accuracy   {:.1} %", 100.0 * cv.mean_accuracy);
    println!("pooled held-out accuracy {:.1} %", 100.0 * cv.pooled_accuracy);
    create_dir(&a.out.out)?;
    write_file(
        &a.out.out.join("cv.json"),
        serde_json::to_string_pretty(&cv).expect("report serialises"),
    )
}

fn scenario_error(e: EngineError) -> CliError {
    match e {
        EngineError::Threads(_) => runtime(e),
        _ => invalid(e),
    }
}

fn load_scenario(a: &ScenarioArgs, model_override: Option<ChoiceModel>) -> CliResult<Scenario> {
    let path = &a.scenario;
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let file: ScenarioFile = toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let network = a.network.clone();
    let mut sc = Scenario::from_toml_with(&text, |rel| {
        let p = match &network {
            Some(n) if rel == file.network => n.clone(),
            _ => dir.join(rel),
        };
        fs::read_to_string(&p).map_err(|e| EngineError::Io(format!("{}: {e}", p.display())))
    })
    .map_err(scenario_error)?;

    let model = match (model_override, &a.model) {
        (Some(m), _) => Some(m),
        (None, Some(p)) => Some(load_model(p).map_err(invalid)?.0),
        (None, None) => None,
    };
    if let Some(m) = &model {
        let mut h = Sha256::new();
        h.update(sc.config_hash.as_bytes());
        h.update(model_to_toml(m, None).as_bytes());
        sc.config_hash = hex::encode(h.finalize())[..16].to_string();
    }
    let current = match &sc.policy {
        Policy::Dcm(m) => Some(m.clone()),
        _ => None,
    };
    let name = a.policy.unwrap_or(sc.policy.name());
    let policy = match name {
        PolicyName::Sp => Policy::ShortestPath,
        PolicyName::Follow => Policy::Follow,
        PolicyName::Dcm => match model.map(Arc::new).or(current) {
            Some(m) => Policy::Dcm(m),
            None => return Err(invalid("the dcm policy needs a model (--model or the scenario's model)")),
        },
    };
    sc = sc.with_policy(policy).map_err(scenario_error)?;
    if let Some(n) = a.replications {
        sc.replications = n;
    }
    if let Some(s) = a.seed {
        sc.base_seed = s;
    }
    sc.validate().map_err(scenario_error)?;
    Ok(sc)
}

fn threads(a: &ScenarioArgs) -> usize {
    a.threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

/// What `simulate` records next to its logs for later evaluation.
#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    scenario: String,
    policy: String,
    config_hash: String,
    base_seed: u64,
    seeds: Vec<u64>,
    logs: Vec<String>,
    /// Junction id and alternative names.
    junctions: Vec<(String, Vec<String>)>,
    stats: Vec<crate::engine::RunStats>,
}

fn simulate(sc: &Scenario, a: &ScenarioArgs, out: &Path) -> CliResult<RunManifest> {
    create_dir(out)?;
    let options = RunOptions { audit: a.audit };
    let total = sc.replications;
    let results = replicate_map(sc, threads(a), &options, |i, run| -> CliResult<_> {
        let name = format!("rep_{i:03}.csv");
        let mut w = create_file(&out.join(&name))?;
        run.log.write_csv(&mut w).map_err(runtime)?;
        let w = create_file(&out.join(format!("agents_{i:03}.csv")))?;
        write_summaries(w, &run.agents).map_err(runtime)?;
        if a.audit {
            let report = audit_log(&run.log, &sc.network, sc.mode);
            let kinematic = run.stats.audit.as_ref().is_some_and(|k| k.is_clean());
            if !report.is_clean() || !kinematic {
                return Err(runtime(format!(
                    "replication {i} failed the audit: {:?} {:?}",
                    report.violations, run.stats.audit
                )));
            }
        }
        println!(
            "replication {}/{total} seed {} done: {} boarded, {} exited, t = {:.1} s{}",
            i + 1,
            run.seed,
            run.stats.boarded,
            run.stats.exited,
            run.stats.end_time_s,
            if run.stats.truncated { ", truncated" } else { "" }
        );
        Ok((name, run.stats))
    })
    .map_err(scenario_error)?;
    let mut logs = Vec::new();
    let mut stats = Vec::new();
    for r in results {
        let (name, s) = r?;
        logs.push(name);
        stats.push(s);
    }
    let manifest = RunManifest {
        scenario: sc.name.clone(),
        policy: sc.policy.name().to_string(),
        config_hash: sc.config_hash.clone(),
        base_seed: sc.base_seed,
        seeds: (0..sc.replications).map(|i| replication_seed(sc.base_seed, i)).collect(),
        logs,
        junctions: sc
            .network
            .junctions()
            .iter()
            .map(|j| (j.id.clone(), j.alternatives.iter().map(|x| x.name.clone()).collect()))
            .collect(),
        stats,
    };
    write_file(
        &out.join("run.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serialises"),
    )?;
    Ok(manifest)
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    let sc = load_scenario(&a.scenario, None)?;
    let m = simulate(&sc, &a.scenario, &a.out.out)?;
    println!(
        "{} replications of {} ({} policy, config {}) written to {}",
        m.seeds.len(),
        m.scenario,
        m.policy,
        m.config_hash,
        a.out.out.display()
    );
    Ok(())
}

fn evaluate(logs_dir: &Path, reference: &ArrivalSeries, a: &MetricArgs, out: &Path) -> CliResult<MetricsReport> {
    let manifest_path = logs_dir.join("run.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| invalid(format!("{}: {e}", manifest_path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", manifest_path.display())))?;
    if (a.bin_width - reference.bin_width_s()).abs() > 1e-9 * reference.bin_width_s() {
        return Err(invalid(format!(
            "bin widths differ: reference {} s, requested {} s",
            reference.bin_width_s(),
            a.bin_width
        )));
    }
    let mut reps = Vec::new();
    let mut series = Vec::new();
    let mut counts: Vec<Vec<Vec<u64>>> = vec![Vec::new(); manifest.junctions.len()];
    for (name, &seed) in manifest.logs.iter().zip(&manifest.seeds) {
        let log = EventLog::load(&logs_dir.join(name)).map_err(invalid)?;
        let s = arrivals(&log, a.bin_width).map_err(invalid)?;
        let m = compare(reference, &s, a.cumulative).map_err(invalid)?;
        reps.push(ReplicationMetrics {
            seed,
            mae: m.mae,
            rmse: m.rmse,
            arrivals: s.total(),
            truncated: log.is_truncated(),
        });
        for (j, (id, alts)) in manifest.junctions.iter().enumerate() {
            counts[j].push(route_counts(&log, id, alts.len(), a.include_scripted));
        }
        series.push(s);
    }
    let shares = manifest
        .junctions
        .iter()
        .zip(counts)
        .map(|((id, alts), c)| RouteShare::from_counts(id, alts.clone(), c))
        .collect();
    let report = MetricsReport::new(
        &manifest.scenario,
        &manifest.policy,
        &manifest.config_hash,
        manifest.base_seed,
        a.bin_width,
        a.cumulative,
        reps,
        shares,
    );
    create_dir(out)?;
    write_file(&out.join("metrics.json"), report.to_json())?;
    write_series_table(create_file(&out.join("series.csv"))?, reference, &series).map_err(runtime)?;
    print!("{report}");
    Ok(report)
}

fn load_reference(path: &Path) -> CliResult<ArrivalSeries> {
    ArrivalSeries::load(path).map_err(invalid)
}

fn cmd_evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let Some(path) = &a.metrics.reference else {
        return Err(invalid("evaluate needs --reference"));
    };
    let reference = load_reference(path)?;
    evaluate(&a.logs, &reference, &a.metrics, &a.out.out).map(|_| ())
}

fn cmd_pipeline(a: &PipelineArgs) -> CliResult<()> {
    let out = &a.out.out;
    println!("== estimate");
    let model = fit(&a.obs, a.scenario.seed.unwrap_or(0), &out.join("model"))?;
    let reference = match &a.metrics.reference {
        Some(p) => load_reference(p)?,
        None => {
            let truth = load_scenario(&a.scenario, None)?;
            if !matches!(truth.policy, Policy::Dcm(_)) {
                return Err(invalid("without --reference the scenario needs a model for the truth run"));
            }
            println!("== reference from truth run, seed {}", a.truth_seed);
            let r = reference_arrivals(&truth, a.truth_seed, a.metrics.bin_width).map_err(runtime)?;
            create_dir(out)?;
            r.write_csv(create_file(&out.join("reference.csv"))?).map_err(runtime)?;
            r
        }
    };
    println!("== simulate");
    let mut sc_args = a.scenario.clone();
    sc_args.policy = Some(PolicyName::Dcm);
    let sc = load_scenario(&sc_args, Some(model))?;
    let logs = out.join("logs");
    simulate(&sc, &sc_args, &logs)?;
    println!("== evaluate");
    evaluate(&logs, &reference, &a.metrics, out).map(|_| ())
}

fn cmd_synth(s: &SynthCommand) -> CliResult<()> {
    match s {
        SynthCommand::Observations { model, n, seed, out } => {
            let (model, _) = load_model(model).map_err(invalid)?;
            let design = FeatureDesign::for_spec(model.spec());
            let obs = synthetic_observations(&model, &design, *n, *seed).map_err(invalid)?;
            create_dir(&out.out)?;
            let path = out.out.join("observations.csv");
            save_observations(&path, model.spec(), &obs).map_err(runtime)?;
            println!("{n} observations written to {}", path.display());
            Ok(())
        }
        SynthCommand::Reference {
            scenario,
            model,
            truth_seed,
            bin_width,
            out,
        } => {
            let args = ScenarioArgs {
                scenario: scenario.clone(),
                network: None,
                model: model.clone(),
                policy: Some(PolicyName::Dcm),
                replications: None,
                seed: None,
                threads: None,
                audit: false,
            };
            let sc = load_scenario(&args, None)?;
            let r = reference_arrivals(&sc, *truth_seed, *bin_width).map_err(runtime)?;
            create_dir(&out.out)?;
            let path = out.out.join("reference.csv");
            r.write_csv(create_file(&path)?).map_err(runtime)?;
            println!(
                "reference of {} arrivals in {} bins written to {}",
                r.total(),
                r.len(),
                path.display()
            );
            Ok(())
        }
    }
}
