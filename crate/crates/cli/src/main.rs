//! `bllt`: reproducible runs of the balanced-walk laboratory.
//!
//! Exit status: 0 on success, 1 when an asserted inequality is violated, 2 on usage,
//! parameter or window errors, 3 on I/O failures.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bllt::diagnostics::{required_radius, run_all};
use bllt::evolution::{
    empirical_pmf, forward_pmf, kolmogorov_normal, pmf_mean_variance, poisson_weights, poissonized,
    reversed_a, reversed_a_heatstep, reversed_b, sample_endpoints, sampler_generator_name,
    total_variation,
};
use bllt::llt::{
    convergence_curve, figure1_annotated, CurveVariant, DiscreteVariant, GaussianRef, GrefChoice,
    Interval,
};
use bllt::{Environment, Error, Law, Window, GENERATOR_NAME};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

/// Environment variable consulted when no `--seed` / `--sample-seed` is given.
const SEED_VAR: &str = "BLLT_SEED";

#[derive(Parser, Debug, Serialize)]
#[command(name = "bllt", version, about = "Exact evolution and local-limit diagnostics for balanced random walks")]
struct Cli {
    /// key=value file of flag defaults for the subcommand; explicit flags win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Generate an environment and write it to a file.
    GenEnv(GenEnvArgs),
    /// Evolve one kernel and write the snapshot as CSV.
    Evolve(EvolveArgs),
    /// Sup-errors against the modulated Gaussian limit.
    Llt(LltArgs),
    /// Run every diagnostic and write a JSON report.
    Diagnose(DiagnoseArgs),
    /// Distribution figure: pmf, fitted Gaussian and normalized heat kernel.
    Figure1(Figure1Args),
    /// Simulated endpoints compared with the exact pmf.
    Montecarlo(MonteCarloArgs),
}

/// Where the environment comes from: a file, or a law generated inline.
#[derive(Args, Debug, Serialize)]
struct EnvSource {
    /// Environment file written by `gen-env`.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["law", "window"])]
    env: Option<PathBuf>,
    /// Law, e.g. `constant:0.5`, `uniform:0.1,0.5`, `discrete:0.25,0.5;0.5,0.5`,
    /// `periodic:1/4,1/2`.
    #[arg(long)]
    law: Option<String>,
    /// Seed for random laws (falls back to $BLLT_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Window `lo,hi`; defaults to the smallest symmetric window the run needs.
    #[arg(long, allow_hyphen_values = true, value_name = "LO,HI")]
    window: Option<String>,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct GenEnvArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: EnvSource,
    /// Output file.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum KindArg {
    /// Law of X_n.
    Forward,
    /// a(n,·) by repeated P.
    A,
    /// a(n,·) by the explicit heat update.
    Heat,
    /// b(n,·) = (a(n) + a(n+1))/2.
    B,
    /// The continuous-time kernel at time t.
    Poissonized,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct EvolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: EnvSource,
    #[arg(long, value_enum, default_value = "forward")]
    kind: KindArg,
    /// Step count (discrete kinds).
    #[arg(long)]
    n: Option<u64>,
    /// Time (poissonized kind).
    #[arg(long)]
    t: Option<f64>,
    /// Poisson tail mass dropped.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// CSV output; stdout if absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
enum VariantArg {
    /// Two-step average g_n.
    G,
    /// The pmf at n.
    A,
    /// Continuous time, t = n.
    Continuous,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
enum GrefArg {
    /// μ̂ from the cell average of 1/ω over the interval at scale √n; σ̂² = 2/μ̂.
    Mu,
    /// σ̂² = Var(X_n)/n; μ̂ = 2/σ̂².
    Variance,
    /// --sigma2 and --mu as given.
    Fixed,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct LltArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: EnvSource,
    /// Time, or a strictly increasing comma-separated list of times.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<u64>,
    #[arg(long, default_value = "-2,2", allow_hyphen_values = true, value_name = "A,B")]
    interval: String,
    #[arg(long, value_enum, default_value = "g")]
    variant: VariantArg,
    #[arg(long, value_enum, default_value = "mu")]
    gref: GrefArg,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Poisson tail mass dropped (continuous variant).
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// CSV output of the convergence table.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct DiagnoseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: EnvSource,
    /// Horizon N; the environment must cover [−2N−2, 2N+2].
    #[arg(long)]
    horizon: u64,
    /// JSON report; stdout if absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct Figure1Args {
    #[command(flatten)]
    #[serde(flatten)]
    source: EnvSource,
    #[arg(long)]
    n: u64,
    /// Output prefix: writes <prefix>_pmf.csv, _gauss.csv, _heat.csv and <prefix>.svg.
    #[arg(long, value_name = "PREFIX")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct MonteCarloArgs {
    #[command(flatten)]
    #[serde(flatten)]
    source: EnvSource,
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 100_000)]
    count: usize,
    /// Seed of the sampler (falls back to $BLLT_SEED).
    #[arg(long)]
    sample_seed: Option<u64>,
    #[arg(long, default_value = "-2,2", allow_hyphen_values = true, value_name = "A,B")]
    interval: String,
    /// Per-site histogram CSV `k,count,empirical,exact`.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// Effective configuration, echoed into every artifact.
struct Echo(BTreeMap<String, Value>);

impl Echo {
    fn new(command: &str, args: &impl Serialize, jobs: Option<usize>) -> Self {
        let mut map = BTreeMap::new();
        map.insert("command".to_string(), json!(command));
        map.insert("jobs".to_string(), json!(jobs));
        if let Value::Object(obj) = serde_json::to_value(args).expect("arguments serialize") {
            map.extend(obj);
        }
        Echo(map)
    }

    fn set(&mut self, key: &str, value: impl Serialize) {
        self.0.insert(key.to_string(), json!(value));
    }

    fn environment(&mut self, env: &Environment) {
        self.set("env_law", env.law().to_string());
        self.set("env_seed", env.seed());
        self.set("env_window", [env.lo(), env.hi()]);
        self.set("env_fingerprint", env.fingerprint());
        self.set("generator", GENERATOR_NAME);
    }

    /// `key=value` lines in key order.
    fn lines(&self) -> Vec<String> {
        self.0
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => format!("{k}={s}"),
                other => format!("{k}={other}"),
            })
            .collect()
    }

    fn comments(&self) -> String {
        self.lines().iter().map(|l| format!("# {l}\n")).collect()
    }

    fn value(&self) -> Value {
        json!(self.0)
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn env_seed(flag: Option<u64>) -> Result<Option<u64>, Error> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_VAR) {
        Ok(s) => s
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|e| usage(format!("${SEED_VAR} = `{s}` is not a seed: {e}"))),
        Err(_) => Ok(None),
    }
}

impl EnvSource {
    /// Loads or generates the environment; inline windows default to `[−radius, radius]`.
    fn resolve(&self, radius: i64, echo: &mut Echo) -> Result<Environment, Error> {
        let env = if let Some(path) = &self.env {
            Environment::load(path)?
        } else {
            let law: Law = self
                .law
                .as_deref()
                .ok_or_else(|| usage("give --env <path> or --law"))?
                .parse()?;
            let seed = env_seed(self.seed)?;
            echo.set("seed", seed);
            let window = match &self.window {
                Some(w) => w.parse::<Window>()?,
                None => Window::symmetric(radius.max(1)),
            };
            echo.set("window", format!("{},{}", window.lo, window.hi));
            Environment::generate(law, window, seed)?
        };
        echo.environment(&env);
        Ok(env)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

/// Whether the run found an asserted violation.
type Verdict = bool;

fn gen_env(args: &GenEnvArgs, mut echo: Echo) -> Result<Verdict, Error> {
    if args.source.env.is_some() {
        return Err(usage("gen-env generates from --law; it does not read --env"));
    }
    if args.source.window.is_none() {
        return Err(usage("gen-env needs --window lo,hi"));
    }
    let env = args.source.resolve(0, &mut echo)?;
    write_file(&args.out, &(echo.comments() + &env.to_text()))?;
    print_json(&echo.value());
    Ok(false)
}

fn evolve(args: &EvolveArgs, mut echo: Echo) -> Result<Verdict, Error> {
    let snapshot = match args.kind {
        KindArg::Poissonized => {
            let t = args.t.ok_or_else(|| usage("the poissonized kind needs --t"))?;
            let order = poisson_weights(t, args.tol)?.len() as i64;
            let env = args.source.resolve(order, &mut echo)?;
            poissonized(&env, t, args.tol)?
        }
        kind => {
            let n = args.n.ok_or_else(|| usage("discrete kinds need --n"))?;
            let env = args.source.resolve(n as i64 + 1, &mut echo)?;
            match kind {
                KindArg::Forward => forward_pmf(&env, n)?,
                KindArg::A => reversed_a(&env, n)?,
                KindArg::Heat => reversed_a_heatstep(&env, n)?,
                KindArg::B => reversed_b(&env, n)?,
                KindArg::Poissonized => unreachable!("handled above"),
            }
        }
    };
    let csv = echo.comments() + &snapshot.to_csv();
    match &args.out {
        Some(path) => {
            write_file(path, &csv)?;
            let mut summary = json!({
                "config": echo.value(),
                "kind": snapshot.kind.name(),
                "time": snapshot.time.value(),
                "sum": snapshot.f.sum(),
                "window": [snapshot.f.lo(), snapshot.f.hi()],
            });
            if let Ok((mean, variance)) = pmf_mean_variance(&snapshot) {
                summary["mean"] = json!(mean);
                summary["variance"] = json!(variance);
            }
            print_json(&summary);
        }
        None => print!("{csv}"),
    }
    Ok(false)
}

fn llt(args: &LltArgs, mut echo: Echo) -> Result<Verdict, Error> {
    let interval: Interval = args.interval.parse()?;
    let n_max = *args.n.last().ok_or_else(|| usage("--n needs at least one time"))?;
    let reach = |n: u64| (interval.a.abs().max(interval.b.abs()) * (n as f64).sqrt()).ceil() as i64 + 1;
    let variant = match args.variant {
        VariantArg::G => CurveVariant::Discrete(DiscreteVariant::G),
        VariantArg::A => CurveVariant::Discrete(DiscreteVariant::Pmf),
        VariantArg::Continuous => CurveVariant::Continuous { tol: args.tol },
    };
    let radius = match variant {
        CurveVariant::Continuous { tol } => poisson_weights(n_max as f64, tol)?.len() as i64,
        CurveVariant::Discrete(_) => n_max as i64 + 1,
    }
    .max(reach(n_max));
    let gref = match args.gref {
        GrefArg::Mu => GrefChoice::FromMu,
        GrefArg::Variance => GrefChoice::FromVariance,
        GrefArg::Fixed => match (args.sigma2, args.mu) {
            (Some(s), Some(m)) => GrefChoice::Fixed(GaussianRef::new(s, m)?),
            _ => return Err(usage("--gref fixed needs --sigma2 and --mu")),
        },
    };
    if args.gref != GrefArg::Fixed && (args.sigma2.is_some() || args.mu.is_some()) {
        return Err(usage("--sigma2/--mu only apply with --gref fixed"));
    }
    let env = args.source.resolve(radius, &mut echo)?;
    let table = convergence_curve(&env, &args.n, interval, gref, variant)?;
    if let Some(path) = &args.out {
        write_file(path, &(echo.comments() + &table.to_csv()))?;
    }
    print_json(&json!({ "config": echo.value(), "rows": table.rows }));
    Ok(false)
}

fn diagnose(args: &DiagnoseArgs, mut echo: Echo) -> Result<Verdict, Error> {
    let env = args.source.resolve(required_radius(args.horizon), &mut echo)?;
    let report = run_all(&env, args.horizon)?;
    let violations = report.lemma_violations();
    let mut value = serde_json::to_value(&report).expect("report serializes");
    value["config"] = echo.value();
    let text = serde_json::to_string_pretty(&value).expect("report serializes");
    match &args.out {
        Some(path) => {
            write_file(path, &text)?;
            print_json(&json!({
                "checks": report.checks.len(),
                "lemma_violations": violations,
                "constants": report.constants,
            }));
        }
        None => println!("{text}"),
    }
    for c in report.checks.iter().filter(|c| c.is_violation()) {
        eprintln!("violation: {} exceeds its bound by {:e}", c.name, c.violation);
    }
    Ok(violations > 0)
}

fn figure1(args: &Figure1Args, mut echo: Echo) -> Result<Verdict, Error> {
    let env = args.source.resolve(args.n as i64, &mut echo)?;
    let out = figure1_annotated(&env, args.n, &args.out, &echo.lines())?;
    print_json(&json!({ "config": echo.value(), "figure": out }));
    Ok(false)
}

fn montecarlo(args: &MonteCarloArgs, mut echo: Echo) -> Result<Verdict, Error> {
    let interval: Interval = args.interval.parse()?;
    let sample_seed =
        env_seed(args.sample_seed)?.ok_or_else(|| usage(format!("give --sample-seed or set ${SEED_VAR}")))?;
    echo.set("sample_seed", sample_seed);
    echo.set("sampler", sampler_generator_name());
    let env = args.source.resolve(args.n as i64, &mut echo)?;
    let samples = sample_endpoints(&env, args.n, args.count, sample_seed)?;
    let exact = forward_pmf(&env, args.n)?;
    let empirical = empirical_pmf(&samples)?;
    let tv = total_variation(&empirical, &exact.f);
    let mu_hat = env.average_inverse_omega(interval.a, interval.b, (args.n as f64).sqrt())?;
    let sigma2_hat = 2.0 / mu_hat;
    let (_, variance) = pmf_mean_variance(&exact)?;
    let ks = kolmogorov_normal(&samples, args.n, sigma2_hat)?;
    let mean = samples.iter().map(|&x| x as f64).sum::<f64>() / samples.len() as f64;
    if let Some(path) = &args.out {
        let lo = exact.f.lo().min(empirical.lo());
        let hi = exact.f.hi().max(empirical.hi());
        let mut csv = echo.comments() + "k,count,empirical,exact\n";
        for k in lo..=hi {
            let e = empirical.get(k);
            let count = (e * args.count as f64).round() as u64;
            csv.push_str(&format!("{k},{count},{e:.16e},{:.16e}\n", exact.f.get(k)));
        }
        write_file(path, &csv)?;
    }
    print_json(&json!({
        "config": echo.value(),
        "total_variation": tv,
        "kolmogorov_normal": ks,
        "mu_hat": mu_hat,
        "sigma2_hat": sigma2_hat,
        "variance_per_step": variance / args.n as f64,
        "sample_mean": mean,
    }));
    Ok(false)
}

fn run(cli: &Cli) -> Result<Verdict, Error> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| usage(format!("cannot size the worker pool: {e}")))?;
    }
    let jobs = cli.jobs;
    match &cli.command {
        Command::GenEnv(a) => gen_env(a, Echo::new("gen-env", a, jobs)),
        Command::Evolve(a) => evolve(a, Echo::new("evolve", a, jobs)),
        Command::Llt(a) => llt(a, Echo::new("llt", a, jobs)),
        Command::Diagnose(a) => diagnose(a, Echo::new("diagnose", a, jobs)),
        Command::Figure1(a) => figure1(a, Echo::new("figure1", a, jobs)),
        Command::Montecarlo(a) => montecarlo(a, Echo::new("montecarlo", a, jobs)),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let args = match config::merge(args, &Cli::command()) {
        Ok(a) => a,
        Err(config::ConfigError::Usage(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
        Err(config::ConfigError::Io(path, e)) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(3);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
