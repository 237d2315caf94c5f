//! Batch command-line front end. [`run_cli`] parses arguments, runs one
//! subcommand and returns the process exit code.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use locomode_core::alignment::{evaluate_map, fit_cycles, map_frames, MappingWeights};
use locomode_core::eval::{
    evaluate_trials, icf_population_stats, labeled_icf_sets, load_trial_csv, prepare_frames, replay, write_trial_csv,
    ColumnMap, EvalConfig, EvaluationReport, Trial,
};
use locomode_core::fsm::write_detection_csv;
use locomode_core::gp::{gp_fit, GpHyper};
use locomode_core::learn::{train_logistic_1d, train_stump_1d, LogisticConfig};
use locomode_core::sba::tune_threshold_set;
use locomode_core::signal::{detect_events, DetectorConfig};
use locomode_core::synth::{descent_personalization_trials, generate_synthetic_trial, ScenarioParams};
use locomode_core::thresholds::Threshold;
use locomode_core::transition::EventKind;
use locomode_core::tuning::{
    acquisition_lattice, bo_optimize, grid_search, split_train_eval, BoConfig, ObjectiveConfig, SearchSpace,
    ThresholdObjective, TuneMethod, TuneResult,
};
use locomode_core::{Error, LocomotionState, SystemTag, ThresholdSet, Transition, TransitionPair};
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Effective settings for one run. Precedence: flags, then the `--config`
/// file, then the built-in defaults for the selected system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemTag,
    /// Overrides the system's detector defaults.
    pub detector: Option<DetectorConfig>,
    /// Threshold-set JSON; the system defaults when absent.
    pub thresholds: Option<PathBuf>,
    /// Overrides the per-pair objective defaults.
    pub objective: Option<ObjectiveConfig>,
    pub seed: u64,
    pub budget: usize,
    pub pair: Option<TransitionPair>,
    /// Seconds; detection window fallback.
    pub step_period: f64,
    pub excluded_subjects: Vec<String>,
    pub columns: ColumnMap,
    pub inputs: Vec<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemTag::Ewalk,
            detector: None,
            thresholds: None,
            objective: None,
            seed: 0,
            budget: 30,
            pair: None,
            step_period: 1.4,
            excluded_subjects: Vec::new(),
            columns: ColumnMap::default(),
            inputs: Vec::new(),
            output: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn detector_config(&self) -> DetectorConfig {
        self.detector.unwrap_or_else(|| self.system.detector_config())
    }

    pub fn threshold_set(&self) -> Result<ThresholdSet, Error> {
        match &self.thresholds {
            Some(p) => ThresholdSet::from_json(&read(p)?),
            None => Ok(ThresholdSet::defaults(self.system)),
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            detector: self.detector_config(),
            step_period: self.step_period,
            excluded_subjects: self.excluded_subjects.clone(),
        }
    }

    /// Referenced files must exist.
    pub fn validate(&self) -> Result<(), Error> {
        for p in self.inputs.iter().chain(&self.thresholds) {
            if !p.is_file() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("{} does not exist", p.display()),
                )));
            }
        }
        self.detector_config().validate()?;
        if let Some(o) = &self.objective {
            o.validate()?;
        }
        Ok(())
    }
}

#[derive(Parser, Debug)]
#[command(name = "locomode", version, about = "Locomotion transition detection and threshold personalization")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// ewalk, autonomyo or custom.
    #[arg(long, global = true)]
    system: Option<SystemTag>,
    /// Threshold-set JSON.
    #[arg(long, global = true)]
    thresholds: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Io {
    /// Input trial CSV files.
    #[arg(long = "in", num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit alignment weights from measured trials to reference trials.
    FitMap {
        #[command(flatten)]
        io: Io,
        /// Reference trials, one per measured trial, sample-aligned.
        #[arg(long, num_args = 1.., required = true)]
        reference: Vec<PathBuf>,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Rewrite a trial with its angle passed through alignment weights.
    ApplyMap {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        weights: PathBuf,
    },
    /// Replay a trial through the detectors and state machine; writes the detection log.
    RunFsm {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Transition accuracy over labeled trials.
    Evaluate {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Also write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Learn thresholds from labeled trials.
    TrainThresholds {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_enum, default_value_t = Method::Logistic)]
        method: Method,
    },
    /// Threshold tuning: population rescaling, Bayesian optimization or grid search.
    #[command(subcommand)]
    Tune(Tune),
    /// Generate synthetic labeled trials.
    Synth {
        #[arg(long, value_enum, default_value_t = Scenario::All)]
        scenario: Scenario,
        /// Scenario parameters JSON; overrides --scenario.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Angle noise standard deviation in degrees.
        #[arg(long)]
        noise: Option<f64>,
        /// Output CSV, or a directory for multi-trial scenarios.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn result files into plot-ready CSV/JSON series.
    ExportPlots {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum Tune {
    /// Rescale thresholds from training and subject ICF statistics.
    Sba {
        #[command(flatten)]
        io: Io,
        /// Trials of the training population.
        #[arg(long, num_args = 1.., required = true)]
        training: Vec<PathBuf>,
    },
    /// Bayesian optimization of one threshold pair.
    Bo {
        #[command(flatten)]
        opt: OptArgs,
        /// Stop after this many evaluations without improvement.
        #[arg(long)]
        patience: Option<usize>,
    },
    /// Exhaustive grid search of one threshold pair.
    Grid {
        #[command(flatten)]
        opt: OptArgs,
    },
}

#[derive(Args, Debug)]
struct OptArgs {
    #[command(flatten)]
    io: Io,
    /// ws, wsa or wsd.
    #[arg(long)]
    pair: Option<TransitionPair>,
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Logistic,
    Stump,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scenario {
    All,
    Walk,
    Sit,
    Sa,
    Sd,
    Personalized,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

type CliResult<T> = Result<T, Failure>;

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) | Error::ObjectiveFailed { .. } => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

/// Runs the tool on `argv` (program name first) and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_out(path: Option<&Path>, content: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, content)?;
        }
        None => std::io::stdout().write_all(content)?,
    }
    Ok(())
}

fn resolve(cli: &Cli, io: Option<&Io>) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_json(&read(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.system {
        cfg.system = s;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = &cli.thresholds {
        cfg.thresholds = Some(t.clone());
    }
    if let Some(io) = io {
        if !io.inputs.is_empty() {
            cfg.inputs = io.inputs.clone();
        }
        if io.out.is_some() {
            cfg.output = io.out.clone();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_trials(cfg: &RunConfig, paths: &[PathBuf]) -> CliResult<Vec<Trial>> {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            load_trial_csv(p, &cfg.columns, cfg.system, i).map_err(|e| match e {
                Error::Load { row, message } => Error::Load {
                    row,
                    message: format!("{}: {message}", p.display()),
                },
                other => other,
            })
        })
        .collect::<Result<_, _>>()
        .map_err(Failure::from)
}

fn require_inputs(cfg: &RunConfig, what: &str) -> CliResult<()> {
    if cfg.inputs.is_empty() {
        return Err(Failure::Usage(format!("{what} needs at least one --in file")));
    }
    Ok(())
}

fn load_weights(path: Option<&PathBuf>) -> CliResult<Option<MappingWeights>> {
    path.map(|p| MappingWeights::from_json(&read(p)?)).transpose().map_err(Failure::from)
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::FitMap { io, reference, points } => {
            let cfg = resolve(&cli, Some(io))?;
            require_inputs(&cfg, "fit-map")?;
            fit_map(&cfg, reference, *points)
        }
        Command::ApplyMap { io, weights } => {
            let cfg = resolve(&cli, Some(io))?;
            require_inputs(&cfg, "apply-map")?;
            let w = MappingWeights::from_json(&read(weights)?)?;
            let trial = &load_trials(&cfg, &cfg.inputs[..1])?[0];
            let frames = prepare_frames(trial, &cfg.detector_config(), None)?;
            let mut buf = Vec::new();
            write_trial_csv(&mut buf, &map_frames(&w, &frames)?)?;
            write_out(cfg.output.as_deref(), &buf)
        }
        Command::RunFsm { io, weights } => {
            let cfg = resolve(&cli, Some(io))?;
            require_inputs(&cfg, "run-fsm")?;
            let w = load_weights(weights.as_ref())?;
            let trial = &load_trials(&cfg, &cfg.inputs[..1])?[0];
            let r = replay(trial, &cfg.threshold_set()?, &cfg.detector_config(), w.as_ref())?;
            let mut buf = Vec::new();
            write_detection_csv(&mut buf, &r.detections)?;
            write_out(cfg.output.as_deref(), &buf)
        }
        Command::Evaluate { io, weights, csv } => {
            let cfg = resolve(&cli, Some(io))?;
            require_inputs(&cfg, "evaluate")?;
            let w = load_weights(weights.as_ref())?;
            let trials = load_trials(&cfg, &cfg.inputs)?;
            let report = evaluate_trials(&trials, &cfg.threshold_set()?, &cfg.eval_config(), w.as_ref())?;
            if let Some(p) = csv {
                let mut buf = Vec::new();
                report.write_csv(&mut buf)?;
                write_out(Some(p), &buf)?;
            }
            write_out(cfg.output.as_deref(), &json(&report))
        }
        Command::TrainThresholds { io, method } => {
            let cfg = resolve(&cli, Some(io))?;
            require_inputs(&cfg, "train-thresholds")?;
            train_thresholds(&cfg, *method)
        }
        Command::Tune(Tune::Sba { io, training }) => {
            let mut cfg = resolve(&cli, Some(io))?;
            require_inputs(&cfg, "tune sba")?;
            cfg.inputs.extend(training.iter().cloned());
            cfg.validate()?;
            let det = cfg.detector_config();
            let n_subject = io.inputs.len().max(1).min(cfg.inputs.len());
            let subject = load_trials(&cfg, &cfg.inputs[..n_subject])?;
            let train = load_trials(&cfg, training)?;
            let out = tune_threshold_set(
                &cfg.threshold_set()?,
                &icf_population_stats(&train, &det, None)?,
                &icf_population_stats(&subject, &det, None)?,
            );
            for (tr, why) in &out.skipped {
                eprintln!("warning: {tr} unchanged: {why}");
            }
            write_out(cfg.output.as_deref(), format!("{}\n", out.thresholds.to_json()).as_bytes())
        }
        Command::Tune(Tune::Bo { opt, patience }) => tune(&cli, opt, TuneMethod::Bo, *patience),
        Command::Tune(Tune::Grid { opt }) => tune(&cli, opt, TuneMethod::Grid, None),
        Command::Synth { scenario, params, noise, out } => {
            let cfg = resolve(&cli, None)?;
            synth(&cfg, *scenario, params.as_deref(), *noise, out.as_deref())
        }
        Command::ExportPlots { results, out } => export_plots(results, out),
    }
}

/// Cycles between consecutive detected heel strikes.
fn hs_cycles(frames: &[locomode_core::KinematicFrame], det: &DetectorConfig) -> Result<Vec<(usize, usize)>, Error> {
    let hs: Vec<usize> = detect_events(frames, det)?
        .iter()
        .filter(|e| e.kind == EventKind::Hs)
        .map(|e| e.index)
        .collect();
    Ok(hs.windows(2).map(|w| (w[0], w[1])).collect())
}

fn fit_map(cfg: &RunConfig, reference: &[PathBuf], points: usize) -> CliResult<()> {
    if reference.len() != cfg.inputs.len() {
        return Err(Failure::Usage(format!(
            "{} measured trials but {} reference trials",
            cfg.inputs.len(),
            reference.len()
        )));
    }
    let det = cfg.detector_config();
    let measured = load_trials(cfg, &cfg.inputs)?;
    let refs = load_trials(cfg, reference)?;
    let (mut m_cycles, mut r_cycles) = (Vec::new(), Vec::new());
    for (m, r) in measured.iter().zip(&refs) {
        if m.frames.len() != r.frames.len() {
            return Err(Error::InvalidInput(format!(
                "measured trial has {} samples, reference has {}",
                m.frames.len(),
                r.frames.len()
            ))
            .into());
        }
        let frames = prepare_frames(m, &det, None)?;
        for (a, b) in hs_cycles(&frames, &det)? {
            m_cycles.push(frames[a..b].to_vec());
            r_cycles.push(r.frames[a..b].iter().map(|f| f.theta_th).collect::<Vec<_>>());
        }
    }
    if m_cycles.is_empty() {
        return Err(Error::InvalidInput("no complete gait cycles found".into()).into());
    }
    let fit = fit_cycles(&m_cycles, &r_cycles, points)?;
    let report = evaluate_map(&fit.weights, &m_cycles, &r_cycles)?;
    eprintln!(
        "RMSE {:.4} -> {:.4} deg, MHF mean {:.2} -> {:.2} deg (reference {:.2})",
        report.rmse_before, report.rmse_after, report.mhf_mean_before, report.mhf_mean_after, report.mhf_mean_reference
    );
    if fit.rank_deficient {
        eprintln!("warning: design matrix is rank deficient; minimum-norm weights used");
    }
    write_out(cfg.output.as_deref(), format!("{}\n", fit.weights.to_json()).as_bytes())
}

fn train_thresholds(cfg: &RunConfig, method: Method) -> CliResult<()> {
    let trials = load_trials(cfg, &cfg.inputs)?;
    let sets = labeled_icf_sets(&trials, &cfg.detector_config(), cfg.step_period, None)?;
    let mut out = cfg.threshold_set()?;
    for set in &sets {
        let tr = set.transition;
        if let Err(e) = set.validate() {
            eprintln!("warning: {tr} kept at {}: {e}", out.value(tr));
            continue;
        }
        let (th, orientation) = match method {
            Method::Logistic => {
                let b = train_logistic_1d(set, &LogisticConfig::default())?;
                (b.threshold, b.orientation)
            }
            Method::Stump => {
                let s = train_stump_1d(set)?;
                (s.threshold, s.orientation)
            }
        };
        if orientation != tr.default_bound() {
            eprintln!("warning: {tr}: learned orientation {orientation:?} differs from the configured bound");
        }
        *out.get_mut(tr) = Threshold::new(th, tr.default_bound());
    }
    write_out(cfg.output.as_deref(), format!("{}\n", out.to_json()).as_bytes())
}

/// Built-in trials for a pair when no inputs are given.
fn builtin_trials(pair: TransitionPair, seed: u64) -> Result<Vec<Trial>, Error> {
    if pair == TransitionPair::WsdSdw {
        return descent_personalization_trials(&[9.0, 12.0, 9.0, 9.0, 9.0], seed);
    }
    let mode = pair.target_state();
    (0..5)
        .map(|i| {
            let mut p = ScenarioParams::round_trip(mode, 4);
            p.stride_jitter = 0.3;
            p.seed = seed.wrapping_add(i);
            p.index = i as usize;
            generate_synthetic_trial(&p)
        })
        .collect()
}

fn tune(cli: &Cli, opt: &OptArgs, method: TuneMethod, patience: Option<usize>) -> CliResult<()> {
    let mut cfg = resolve(cli, Some(&opt.io))?;
    if let Some(p) = opt.pair {
        cfg.pair = Some(p);
    }
    if let Some(b) = opt.budget {
        cfg.budget = b;
    }
    let pair = cfg
        .pair
        .ok_or_else(|| Failure::Usage("--pair is required (ws, wsa or wsd)".into()))?;
    let trials = if cfg.inputs.is_empty() {
        builtin_trials(pair, cfg.seed)?
    } else {
        load_trials(&cfg, &cfg.inputs)?
    };
    let train = if trials.len() >= 5 {
        split_train_eval(&trials, None)?.0
    } else {
        trials
    };
    let objective = ThresholdObjective::new(
        &train,
        pair,
        cfg.objective.unwrap_or_else(|| ObjectiveConfig::for_pair(pair)),
        cfg.threshold_set()?,
        &cfg.detector_config(),
        None,
    )?;
    let space = SearchSpace::for_pair(pair);
    let f = |th: [f64; 2]| Ok(objective.evaluate(th));
    let result = match method {
        TuneMethod::Bo => bo_optimize(
            f,
            &space,
            &BoConfig {
                budget: cfg.budget,
                seed: cfg.seed,
                patience,
                ..BoConfig::default()
            },
        )?,
        TuneMethod::Grid => grid_search(f, &space)?,
    };
    eprintln!(
        "best J = {:.6} at [{:.3}, {:.3}] after {} evaluations",
        result.best_j, result.best_th[0], result.best_th[1], result.evaluations
    );
    write_out(cfg.output.as_deref(), &json(&result))
}

fn synth(cfg: &RunConfig, scenario: Scenario, params: Option<&Path>, noise: Option<f64>, out: Option<&Path>) -> CliResult<()> {
    let trials = match (params, scenario) {
        (Some(p), _) => {
            let mut sp: ScenarioParams = serde_json::from_str(&read(p)?).map_err(Error::from)?;
            if cfg.seed != 0 {
                sp.seed = cfg.seed;
            }
            if let Some(n) = noise {
                sp.noise_std = n;
            }
            vec![generate_synthetic_trial(&sp)?]
        }
        (None, Scenario::Personalized) => descent_personalization_trials(&[9.0, 12.0, 9.0, 9.0, 9.0], cfg.seed)?,
        (None, s) => {
            let mut sp = match s {
                Scenario::Walk => ScenarioParams::walk_only(10),
                Scenario::Sit => ScenarioParams::round_trip(LocomotionState::Sit, 0),
                Scenario::Sa => ScenarioParams::round_trip(LocomotionState::StairAscent, 4),
                Scenario::Sd => ScenarioParams::round_trip(LocomotionState::StairDescent, 4),
                _ => ScenarioParams::all_transitions(),
            };
            sp.seed = cfg.seed;
            sp.system = cfg.system;
            sp.noise_std = noise.unwrap_or(0.0);
            vec![generate_synthetic_trial(&sp)?]
        }
    };
    if trials.len() == 1 {
        let mut buf = Vec::new();
        write_trial_csv(&mut buf, &trials[0].frames)?;
        return write_out(out, &buf);
    }
    let dir = out.ok_or_else(|| Failure::Usage("multi-trial scenarios need --out DIR".into()))?;
    fs::create_dir_all(dir)?;
    for t in &trials {
        let mut buf = Vec::new();
        write_trial_csv(&mut buf, &t.frames)?;
        fs::write(dir.join(format!("trial_{}.csv", t.index + 1)), buf)?;
    }
    Ok(())
}

enum Artifact {
    Tune(TuneResult),
    Report(EvaluationReport),
    Thresholds(ThresholdSet),
}

fn parse_artifact(text: &str) -> Option<Artifact> {
    if let Ok(r) = serde_json::from_str::<TuneResult>(text) {
        return Some(Artifact::Tune(r));
    }
    if let Ok(r) = serde_json::from_str::<EvaluationReport>(text) {
        return Some(Artifact::Report(r));
    }
    ThresholdSet::from_json(text).ok().map(Artifact::Thresholds)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Serialize)]
struct MethodSummary {
    file: String,
    best_th: [f64; 2],
    best_j: f64,
    evaluations: usize,
}

#[derive(Serialize)]
struct Comparison {
    pair: TransitionPair,
    bo: MethodSummary,
    grid: MethodSummary,
    /// Largest per-axis distance between the two minima, degrees.
    distance: f64,
}

fn export_plots(results: &Path, out: &Path) -> CliResult<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(results)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    let mut artifacts = Vec::new();
    for p in entries {
        if let Some(a) = parse_artifact(&read(&p)?) {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            artifacts.push((stem, a));
        }
    }
    if artifacts.is_empty() {
        return Err(Error::InvalidInput(format!("no result artifacts in {}", results.display())).into());
    }
    fs::create_dir_all(out)?;

    let mut counts = Vec::new();
    let mut accuracy = Vec::new();
    let mut thresholds = Vec::new();
    let mut tunes: Vec<(&str, &TuneResult)> = Vec::new();
    for (stem, a) in &artifacts {
        match a {
            Artifact::Tune(r) => {
                tunes.push((stem, r));
                counts.push(vec![
                    stem.clone(),
                    format!("{:?}", r.method).to_lowercase(),
                    r.pair.code().to_string(),
                    r.evaluations.to_string(),
                    r.best_j.to_string(),
                ]);
                let rows = r.trace.iter().enumerate().scan(f64::INFINITY, |best, (i, p)| {
                    *best = best.min(p.j);
                    Some(vec![
                        (i + 1).to_string(),
                        p.th[0].to_string(),
                        p.th[1].to_string(),
                        p.j.to_string(),
                        best.to_string(),
                    ])
                });
                let name = match r.method {
                    TuneMethod::Grid => format!("{stem}_lattice.csv"),
                    TuneMethod::Bo => format!("{stem}_trace.csv"),
                };
                fs::write(out.join(name), csv_bytes(&["evaluation", "th1", "th2", "j", "best_j"], rows))?;
                if r.method == TuneMethod::Bo {
                    fs::write(out.join(format!("{stem}_acquisition.csv")), bo_surface(r)?)?;
                }
            }
            Artifact::Report(rep) => {
                let subjects = rep
                    .per_subject
                    .iter()
                    .map(|(s, m)| (s.as_str(), m))
                    .chain(std::iter::once(("all", &rep.pooled)));
                for (subject, scores) in subjects {
                    for (tr, s) in scores {
                        accuracy.push(vec![
                            stem.clone(),
                            subject.to_string(),
                            tr.code().to_string(),
                            s.n_cdt.to_string(),
                            s.n_tt.to_string(),
                            s.accuracy.map(|a| a.to_string()).unwrap_or_default(),
                        ]);
                    }
                }
            }
            Artifact::Thresholds(set) => {
                for tr in Transition::ALL {
                    thresholds.push(vec![stem.clone(), tr.code().to_string(), set.value(tr).to_string()]);
                }
            }
        }
    }
    if !counts.is_empty() {
        fs::write(
            out.join("evaluation_counts.csv"),
            csv_bytes(&["run", "method", "pair", "evaluations", "best_j"], counts),
        )?;
    }
    if !accuracy.is_empty() {
        fs::write(
            out.join("accuracy.csv"),
            csv_bytes(&["run", "subject", "transition", "n_cdt", "n_tt", "accuracy"], accuracy),
        )?;
    }
    if !thresholds.is_empty() {
        fs::write(out.join("thresholds.csv"), csv_bytes(&["run", "transition", "value"], thresholds))?;
    }
    for pair in TransitionPair::ALL {
        let pick = |m: TuneMethod| tunes.iter().find(|(_, r)| r.pair == pair && r.method == m);
        if let (Some((bs, b)), Some((gs, g))) = (pick(TuneMethod::Bo), pick(TuneMethod::Grid)) {
            let summary = |file: &str, r: &TuneResult| MethodSummary {
                file: file.to_string(),
                best_th: r.best_th,
                best_j: r.best_j,
                evaluations: r.evaluations,
            };
            let cmp = Comparison {
                pair,
                distance: (b.best_th[0] - g.best_th[0]).abs().max((b.best_th[1] - g.best_th[1]).abs()),
                bo: summary(bs, b),
                grid: summary(gs, g),
            };
            fs::write(out.join(format!("comparison_{}.json", pair.code())), json(&cmp))?;
        }
    }
    Ok(())
}

/// Posterior and acquisition of a GP refit on a BO trace, on a 51 x 51 lattice.
fn bo_surface(r: &TuneResult) -> CliResult<Vec<u8>> {
    let space = SearchSpace::for_pair(r.pair);
    let x: Vec<Vec<f64>> = r.trace.iter().map(|p| space.normalize(p.th).to_vec()).collect();
    let y: Vec<f64> = r.trace.iter().map(|p| p.j).collect();
    let model = gp_fit(&x, &y, &GpHyper::for_observations(&y))?;
    let k = BoConfig::default().k;
    let rows = acquisition_lattice(&model, &space, 51, k).into_iter().map(|p| {
        vec![
            p.th[0].to_string(),
            p.th[1].to_string(),
            p.mean.to_string(),
            p.std.to_string(),
            p.acquisition.to_string(),
        ]
    });
    Ok(csv_bytes(&["th1", "th2", "mean", "std", "acquisition"], rows))
}
