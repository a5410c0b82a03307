//! Command-line front end. Exit codes: 0 success, 1 usage error,
//! 2 numerical failure, 3 input-file parse error.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::estimate::{
    bayes_update, least_squares_fit, linspace, synthesize_data, EstimateError, Experiment, FitOptions, FreeParam, PosteriorGrid,
    DEFAULT_GRID_CELLS,
};
use crate::ident::{fisher_cramer_rao_with_tol, gram_matrix_with_tol, sensitivity_trajectories, IdentError, DEFAULT_GRAM_TOL};
use crate::io::{self, IoError};
use crate::lti::{
    default_ridge, deconvolve_impulse, find_similarity, io_equivalent, sampled_responses, steady_state_gain, LtiError,
    SampledFunction, DEFAULT_EQUIV_TOL,
};
use crate::model_file::{load_model, LoadedModel, ModelFileError};
use crate::signals::{InputSignal, SignalError};
use crate::sim::{integrate, SimError, SolverConfig, DEFAULT_STEP};
use crate::systems::{LinearSystem, ParamMap, SystemError};

#[derive(Debug, Parser)]
#[command(name = "ioident", version, about = "Simulate input/output ODE models and analyze parameter identifiability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a model under an input signal and write the trajectory CSV.
    Simulate(SimulateArgs),
    /// Impulse and step responses of a linear system.
    Respond(RespondArgs),
    /// Steady-state gain -c A^{-1} b.
    Gain(LtiArgs),
    /// Decide input/output equivalence of two linear systems.
    Equiv(EquivArgs),
    /// Gram matrix, null directions and Cramér–Rao bounds along one experiment.
    Identify(IdentifyArgs),
    /// Least-squares fit of free parameters to experiment CSVs.
    Fit(FitArgs),
    /// Grid posterior over parameters given experiment CSVs.
    Posterior(PosteriorArgs),
    /// Simulated, optionally noisy, samples in experiment CSV form.
    Synthesize(SynthesizeArgs),
    /// Recover an impulse response from sampled output and input.
    Deconvolve(DeconvolveArgs),
    /// Reproduce the worked examples.
    Demo {
        #[arg(value_enum)]
        which: DemoKind,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DemoKind {
    Paper,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Registry id or path to a JSON model file.
    #[arg(long, short)]
    model: String,
    /// Parameter value, `name=value`; repeatable. Overrides model defaults.
    #[arg(long = "param", short = 'p', value_name = "NAME=VALUE")]
    params: Vec<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Input signal spec, e.g. `step:1`, `pulse:1,0,1`, `ramp:1`.
    #[arg(long, short)]
    signal: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    t0: f64,
    #[arg(long, default_value_t = 10.0)]
    t1: f64,
    /// Integration step.
    #[arg(long, default_value_t = DEFAULT_STEP)]
    h: f64,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LtiArgs {
    /// Decay rate `a` (A = [-a]), or a matrix A as `[r11,r12;r21,r22]`.
    #[arg(long, allow_hyphen_values = true)]
    a: String,
    /// Input vector, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    b: String,
    /// Output vector, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    c: String,
}

#[derive(Debug, Args)]
struct RespondArgs {
    #[command(flatten)]
    lti: LtiArgs,
    #[arg(long, default_value_t = 5.0)]
    t1: f64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    h: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EquivArgs {
    /// Scalar triple `a,b,c` (dx/dt = -a x + b u, y = c x) or a JSON file {"a": [[..]], "b": [..], "c": [..]}.
    #[arg(long, allow_hyphen_values = true)]
    first: String,
    #[arg(long, allow_hyphen_values = true)]
    second: String,
    /// Relative tolerance on Markov parameters.
    #[arg(long, default_value_t = DEFAULT_EQUIV_TOL)]
    tol: f64,
}

#[derive(Debug, Args)]
struct IdentifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, short)]
    signal: String,
    #[arg(long, default_value_t = 10.0)]
    t1: f64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    h: f64,
    /// Parameters treated as unknown, comma separated; all by default.
    #[arg(long, value_delimiter = ',')]
    free: Vec<String>,
    /// Measurement noise for the Cramér–Rao bounds.
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    /// Relative eigenvalue threshold for rank decisions.
    #[arg(long, default_value_t = DEFAULT_GRAM_TOL)]
    tol: f64,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// `SIGNAL@FILE` pairing a signal spec with a `t,observation` CSV; repeatable.
    #[arg(long = "experiment", short = 'e', required = true)]
    experiments: Vec<String>,
    /// Free parameter `name=initial` or `name=initial:lower:upper`; repeatable.
    #[arg(long = "free", short = 'f', required = true)]
    free: Vec<String>,
    /// Noise standard deviation of the data (0 for exact data).
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    h: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

#[derive(Debug, Args)]
struct PosteriorArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Uniform prior axis `name=lower:upper[:cells]`; repeatable.
    #[arg(long = "prior", required = true)]
    priors: Vec<String>,
    #[arg(long = "experiment", short = 'e', required = true)]
    experiments: Vec<String>,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    h: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthesizeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, short)]
    signal: String,
    /// Sample times as `start:end:count`.
    #[arg(long, default_value = "0.1:5:50")]
    times: String,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    h: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DeconvolveArgs {
    /// Sampled output, `t,value` CSV on a uniform grid from t = 0.
    #[arg(long)]
    output: PathBuf,
    /// Sampled input CSV; alternatively give `--signal`.
    #[arg(long, conflicts_with = "signal")]
    input: Option<PathBuf>,
    #[arg(long, short)]
    signal: Option<String>,
    /// Ridge weight; defaults to 1e-8 trace(M^T M)/m. Zero selects the exact minimum-norm solution.
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numerical(String),
    Parse(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Parse(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) | CliError::Parse(m) => m,
        }
    }
}

impl From<SystemError> for CliError {
    fn from(e: SystemError) -> Self {
        match e {
            SystemError::UnboundParameter(_) | SystemError::UnknownParameter(_) | SystemError::UnknownModel(_) => {
                CliError::Usage(e.to_string())
            }
            SystemError::Expr(_) => CliError::Parse(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::System(s) => s.into(),
            SimError::InvalidSpan { .. } | SimError::InvalidStep { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<IdentError> for CliError {
    fn from(e: IdentError) -> Self {
        match e {
            IdentError::Sim(s) => s.into(),
            IdentError::System(s) => s.into(),
            IdentError::UnknownParameter(_) | IdentError::InvalidNoise(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::Sim(s) => s.into(),
            EstimateError::System(s) => s.into(),
            EstimateError::Ident(s) => s.into(),
            EstimateError::UnknownParameter(_)
            | EstimateError::InitialOutOfBounds { .. }
            | EstimateError::InvalidGrid(_)
            | EstimateError::InvalidNoise(_)
            | EstimateError::NoExperiments => CliError::Usage(e.to_string()),
            EstimateError::InvalidExperiment(_) => CliError::Parse(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<LtiError> for CliError {
    fn from(e: LtiError) -> Self {
        match e {
            LtiError::Sim(s) => s.into(),
            LtiError::GridMismatch(_)
            | LtiError::InvalidSamples(_)
            | LtiError::NegativeTime(_)
            | LtiError::Singular(_)
            | LtiError::NotMinimal(_)
            | LtiError::ZeroInput
            | LtiError::ZeroScale => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        match e {
            ModelFileError::NotFound(..) => CliError::Usage(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}

type CliResult = Result<i32, CliError>;

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run_command<S: AsRef<str>>(argv: &[S], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv.iter().map(|s| s.as_ref())) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    match cmd {
        Command::Simulate(a) => simulate(a, out),
        Command::Respond(a) => respond(a, out),
        Command::Gain(a) => gain(a, out),
        Command::Equiv(a) => equiv(a, out),
        Command::Identify(a) => identify(a, out),
        Command::Fit(a) => fit(a, out, err),
        Command::Posterior(a) => posterior(a, out),
        Command::Synthesize(a) => synthesize(a, out),
        Command::Deconvolve(a) => deconvolve(a, out),
        Command::Demo { which: DemoKind::Paper } => {
            let report = crate::demo::run_paper_demo();
            write!(out, "{}", report.render())?;
            Ok(if report.all_passed() { 0 } else { 2 })
        }
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64, CliError> {
    s.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("{what}: `{s}` is not a number")))
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',').map(|v| parse_f64(v, what)).collect()
}

fn split_pair<'a>(s: &'a str, sep: char, what: &str) -> Result<(&'a str, &'a str), CliError> {
    s.split_once(sep)
        .map(|(a, b)| (a.trim(), b.trim()))
        .ok_or_else(|| CliError::Usage(format!("{what}: expected `{sep}` in `{s}`")))
}

fn model_with_params(args: &ModelArgs) -> Result<(LoadedModel, ParamMap), CliError> {
    let model = load_model(&args.model)?;
    let mut params = model.defaults.clone();
    for p in &args.params {
        let (name, value) = split_pair(p, '=', "--param")?;
        if model.system.param_index(name).is_none() {
            return Err(CliError::Usage(format!("model {} has no parameter `{name}`", model.name)));
        }
        params.insert(name.to_string(), parse_f64(value, "--param")?);
    }
    Ok((model, params))
}

fn signal(spec: &str) -> Result<InputSignal, CliError> {
    Ok(spec.parse::<InputSignal>()?)
}

fn emit(path: Option<&Path>, out: &mut dyn Write, f: impl FnOnce(&mut dyn Write) -> Result<(), IoError>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut file = File::create(p).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", p.display())))?;
            f(&mut file)?;
        }
        None => f(out)?,
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Parse(format!("cannot open {}: {e}", path.display())))
}

/// Up to 12 significant digits, trailing zeros trimmed.
fn short(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let digits = (11 - v.abs().log10().floor() as i32).max(0) as usize;
    let s = format!("{v:.digits$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
    inner.split(';').map(|row| parse_list(row, "matrix")).collect()
}

fn lti_from_args(a: &LtiArgs) -> Result<LinearSystem, CliError> {
    let b = parse_list(&a.b, "--b")?;
    let c = parse_list(&a.c, "--c")?;
    let sys = if a.a.trim_start().starts_with('[') {
        LinearSystem::from_rows(&parse_matrix(&a.a)?, &b, &c)
    } else {
        let rate = parse_f64(&a.a, "--a")?;
        if b.len() != 1 || c.len() != 1 {
            return Err(CliError::Usage("a scalar --a needs scalar --b and --c".into()));
        }
        LinearSystem::scalar(rate, b[0], c[0])
    };
    sys.map_err(|e| CliError::Usage(e.to_string()))
}

#[derive(serde::Deserialize)]
struct LtiFile {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
}

fn lti_from_spec(spec: &str) -> Result<LinearSystem, CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        let file: LtiFile = serde_json::from_reader(open(path)?).map_err(|e| CliError::Parse(e.to_string()))?;
        return LinearSystem::from_rows(&file.a, &file.b, &file.c).map_err(|e| CliError::Parse(e.to_string()));
    }
    let v = parse_list(spec, "system")?;
    match v.as_slice() {
        [a, b, c] => LinearSystem::scalar(*a, *b, *c).map_err(|e| CliError::Usage(e.to_string())),
        _ => Err(CliError::Usage(format!("`{spec}` is neither a triple a,b,c nor a JSON file"))),
    }
}

fn format_matrix(m: &DMatrix<f64>) -> String {
    if m.len() == 1 {
        return short(m[(0, 0)]);
    }
    // round-off below 1e-12 of the largest entry prints as 0
    let scale = m.amax();
    let fmt = |v: f64| short(if v.abs() <= 1e-12 * scale { 0.0 } else { v });
    let rows: Vec<String> = m.row_iter().map(|r| r.iter().map(|&v| fmt(v)).collect::<Vec<_>>().join(",")).collect();
    format!("[{}]", rows.join(";"))
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> CliResult {
    let (model, params) = model_with_params(&a.model)?;
    let traj = integrate(&model.system, &params, &signal(&a.signal)?, (a.t0, a.t1), &SolverConfig::with_step(a.h))?;
    emit(a.out.as_deref(), out, |w| io::write_trajectory(&traj, w))?;
    Ok(0)
}

fn respond(a: RespondArgs, out: &mut dyn Write) -> CliResult {
    let sys = lti_from_args(&a.lti)?;
    if !(a.h > 0.0 && a.t1 >= a.h) {
        return Err(CliError::Usage("need 0 < h <= t1".into()));
    }
    let len = (a.t1 / a.h).round() as usize + 1;
    let (k, big_k) = sampled_responses(&sys, a.h, len)?;
    emit(a.out.as_deref(), out, |w| {
        writeln!(w, "t,impulse,step")?;
        for ((t, kv), kk) in k.times().zip(k.values()).zip(big_k.values()) {
            writeln!(w, "{},{},{}", io::fmt_f64(t), io::fmt_f64(*kv), io::fmt_f64(*kk))?;
        }
        Ok(())
    })?;
    Ok(0)
}

fn gain(a: LtiArgs, out: &mut dyn Write) -> CliResult {
    let g = steady_state_gain(&lti_from_args(&a)?)?;
    writeln!(out, "{}", short(g))?;
    Ok(0)
}

fn equiv(a: EquivArgs, out: &mut dyn Write) -> CliResult {
    let (s1, s2) = (lti_from_spec(&a.first)?, lti_from_spec(&a.second)?);
    if !io_equivalent(&s1, &s2, a.tol)? {
        writeln!(out, "not equivalent")?;
        return Ok(0);
    }
    match find_similarity(&s1, &s2, a.tol) {
        Ok(t) => writeln!(out, "equivalent, T={}", format_matrix(&t))?,
        Err(e) => writeln!(out, "equivalent (no similarity certificate: {e})")?,
    }
    Ok(0)
}

fn identify(a: IdentifyArgs, out: &mut dyn Write) -> CliResult {
    let (model, params) = model_with_params(&a.model)?;
    let s = sensitivity_trajectories(&model.system, &params, &signal(&a.signal)?, (0.0, a.t1), &SolverConfig::with_step(a.h))?;
    let s = if a.free.is_empty() { s } else { s.select(&a.free)? };
    let gram = gram_matrix_with_tol(&s, a.tol)?;
    let crb = fisher_cramer_rao_with_tol(&s, a.sigma, a.tol)?;
    io::write_identifiability_report(&gram, Some(&crb), out)?;
    Ok(0)
}

fn parse_free(spec: &str) -> Result<FreeParam, CliError> {
    let (name, rest) = split_pair(spec, '=', "--free")?;
    let parts: Vec<&str> = rest.split(':').collect();
    match parts.as_slice() {
        [init] => Ok(FreeParam::unbounded(name, parse_f64(init, "--free")?)),
        [init, lo, hi] => Ok(FreeParam::new(name, parse_f64(init, "--free")?, parse_f64(lo, "--free")?, parse_f64(hi, "--free")?)),
        _ => Err(CliError::Usage(format!("--free: expected name=initial[:lower:upper], got `{spec}`"))),
    }
}

fn load_experiments(specs: &[String], sigma: f64) -> Result<Vec<Experiment>, CliError> {
    specs
        .iter()
        .map(|spec| {
            let (sig, path) = spec
                .rsplit_once('@')
                .ok_or_else(|| CliError::Usage(format!("--experiment: expected SIGNAL@FILE, got `{spec}`")))?;
            Ok(io::read_experiment(open(Path::new(path))?, signal(sig)?, sigma)?)
        })
        .collect()
}

fn fit(a: FitArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let (model, params) = model_with_params(&a.model)?;
    let free = a.free.iter().map(|f| parse_free(f)).collect::<Result<Vec<_>, _>>()?;
    let experiments = load_experiments(&a.experiments, a.sigma)?;
    let opts = FitOptions { max_iterations: a.max_iter, ..FitOptions::default() };
    let (result, code) = match least_squares_fit(&model.system, &experiments, &params, &free, &SolverConfig::with_step(a.h), &opts) {
        Ok(r) => (r, 0),
        Err(EstimateError::NotConverged { best }) => {
            writeln!(err, "warning: no convergence after {} iterations; reporting best estimate", best.iterations)?;
            (*best, 2)
        }
        Err(e) => return Err(e.into()),
    };
    writeln!(out, "parameter,estimate,std")?;
    for (j, (n, v)) in result.names.iter().zip(&result.estimate).enumerate() {
        writeln!(out, "{n},{},{}", io::fmt_f64(*v), io::fmt_f64(result.covariance.variance(j).sqrt()))?;
    }
    writeln!(out, "# cost {} after {} iterations, converged: {}", io::fmt_f64(result.cost), result.iterations, result.converged)?;
    for v in result.covariance.null_directions() {
        let v: Vec<String> = v.iter().map(|&x| short(x)).collect();
        writeln!(out, "# flat direction ({})", v.join(", "))?;
    }
    Ok(code)
}

fn parse_prior(spec: &str) -> Result<(String, Vec<f64>), CliError> {
    let (name, rest) = split_pair(spec, '=', "--prior")?;
    let parts: Vec<&str> = rest.split(':').collect();
    let (lo, hi, n) = match parts.as_slice() {
        [lo, hi] => (parse_f64(lo, "--prior")?, parse_f64(hi, "--prior")?, DEFAULT_GRID_CELLS),
        [lo, hi, n] => (
            parse_f64(lo, "--prior")?,
            parse_f64(hi, "--prior")?,
            n.parse::<usize>().map_err(|_| CliError::Usage(format!("--prior: bad cell count `{n}`")))?,
        ),
        _ => return Err(CliError::Usage(format!("--prior: expected name=lower:upper[:cells], got `{spec}`"))),
    };
    if !(lo <= hi) || n == 0 {
        return Err(CliError::Usage(format!("--prior: empty range in `{spec}`")));
    }
    Ok((name.to_string(), linspace(lo, hi, n)))
}

fn posterior(a: PosteriorArgs, out: &mut dyn Write) -> CliResult {
    let (model, params) = model_with_params(&a.model)?;
    let priors = a.priors.iter().map(|p| parse_prior(p)).collect::<Result<Vec<_>, _>>()?;
    let names: Vec<&str> = priors.iter().map(|p| p.0.as_str()).collect();
    let mut grid = PosteriorGrid::uniform(&names, priors.iter().map(|p| p.1.clone()).collect())?;
    let cfg = SolverConfig::with_step(a.h);
    for e in load_experiments(&a.experiments, a.sigma)? {
        grid = bayes_update(&grid, &e, &model.system, &params, &cfg)?;
    }
    emit(a.out.as_deref(), out, |w| io::write_posterior(&grid, w))?;
    if a.out.is_some() {
        for (k, n) in grid.names.iter().enumerate() {
            writeln!(out, "{n}: mode {}, mean {}, std {}", short(grid.mode()[k]), short(grid.mean(k)), short(grid.std(k)))?;
        }
    }
    Ok(0)
}

fn synthesize(a: SynthesizeArgs, out: &mut dyn Write) -> CliResult {
    let (model, params) = model_with_params(&a.model)?;
    let parts: Vec<&str> = a.times.split(':').collect();
    let times = match parts.as_slice() {
        [lo, hi, n] => linspace(
            parse_f64(lo, "--times")?,
            parse_f64(hi, "--times")?,
            n.parse::<usize>().map_err(|_| CliError::Usage(format!("--times: bad count `{n}`")))?,
        ),
        _ => return Err(CliError::Usage(format!("--times: expected start:end:count, got `{}`", a.times))),
    };
    let e = synthesize_data(&model.system, &params, &signal(&a.signal)?, &times, a.sigma, a.seed, &SolverConfig::with_step(a.h))
        .map_err(|e| match e {
            EstimateError::InvalidExperiment(m) => CliError::Usage(m),
            other => other.into(),
        })?;
    emit(a.out.as_deref(), out, |w| io::write_experiment(&e, w))?;
    Ok(0)
}

fn deconvolve(a: DeconvolveArgs, out: &mut dyn Write) -> CliResult {
    let y = io::read_sampled(open(&a.output)?)?;
    let u = match (&a.input, &a.signal) {
        (Some(p), _) => io::read_sampled(open(p)?)?,
        (None, Some(s)) => SampledFunction::from_signal(&signal(s)?, y.h(), y.len())?,
        (None, None) => return Err(CliError::Usage("give --input or --signal".into())),
    };
    let ridge = a.ridge.unwrap_or_else(|| default_ridge(&u));
    let k = deconvolve_impulse(&y, &u, ridge)?;
    emit(a.out.as_deref(), out, |w| io::write_sampled(&k, w))?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let argv: Vec<&str> = std::iter::once("ioident").chain(args.iter().copied()).collect();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_command(&argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn gain_and_equiv() {
        assert_eq!(run(&["gain", "--a", "2", "--b", "1", "--c", "2"]).1, "1\n");
        assert_eq!(run(&["gain", "--a", "[-1,0;0,-2]", "--b", "1,1", "--c", "1,2"]).1, "2\n");
        assert_eq!(run(&["equiv", "--first", "1,2,3", "--second", "1,6,1"]).1, "equivalent, T=3\n");
        assert_eq!(run(&["equiv", "--first", "1,2,3", "--second", "2,2,3"]).1, "not equivalent\n");
    }

    #[test]
    fn short_formatting() {
        assert_eq!(short(1.0), "1");
        assert_eq!(short(3.0000000000000004), "3");
        assert_eq!(short(0.125), "0.125");
        assert_eq!(short(-2.5e-7), "-0.00000025");
        assert_eq!(short(1234567.0), "1234567");
        assert_eq!(short(-0.0), "0");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(&[]).0, 1);
        assert_eq!(run(&["bogus"]).0, 1);
        assert_eq!(run(&["--help"]).0, 0);
        assert_eq!(run(&["simulate", "--model", "scalar-lti", "--signal", "wobble:1"]).0, 1);
        assert_eq!(run(&["simulate", "--model", "scalar-lti", "--signal", "step:1", "-p", "q=1"]).0, 1);
        assert_eq!(run(&["simulate", "--model", "scalar-lti", "--signal", "step:1", "-p", "a=-50", "--t1", "100"]).0, 2);
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, "{ not json").unwrap();
        assert_eq!(run(&["simulate", "--model", bad.to_str().unwrap(), "--signal", "step:1"]).0, 3);
    }
}
