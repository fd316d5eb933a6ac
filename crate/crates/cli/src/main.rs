use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mbt_core::aut::{parse_aut_with, write_aut, LabelConvention};
use mbt_core::bench::{self, BenchOutput, BenchSpec, Executor};
use mbt_core::engine::{self, EngineConfig};
use mbt_core::generator::{gen_model, GenParams, LabelMode};
use mbt_core::iolts::{Iolts, Severity};
use mbt_core::sim::{serve_tcp, FaultSpec, Simulator, TcpPort, TimeMode};
use mbt_core::strategy::{StrategyKind, DEFAULT_DEPTH};

const ENV_PREFIX: &str = "MBT_";

#[derive(Parser)]
#[command(name = "mbt", version, about = "Online ioco model-based testing with greedy test selection")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by all subcommands. Unset flags fall back to the config
/// file, then to `MBT_SEED`, `MBT_JOBS`, `MBT_OUT_DIR` and `MBT_FORMAT`.
#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for benchmark cells.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random run-to-completion model (.aut plus .meta.json).
    Generate(GenerateArgs),
    /// Check a model's well-formedness; exits with 1 on any error.
    Validate(ValidateArgs),
    /// Rewrite a model in canonical .aut form.
    Convert(ConvertArgs),
    /// Serve a simulator of a model over the TCP line protocol.
    Serve(ServeArgs),
    /// Run one test and print the report as JSON.
    Run(RunArgs),
    /// Mutation-detection benchmark.
    BenchMutants(BenchArgs),
    /// State-coverage benchmark.
    BenchCoverage(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// States per component.
    #[arg(long = "N", visible_alias = "n")]
    n: usize,
    #[arg(long)]
    lambda: usize,
    #[arg(long)]
    r: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 1000)]
    max_attempts: u32,
    /// Draw action names from this many symbols instead of fresh names.
    #[arg(long)]
    small_alphabet: Option<u32>,
    /// Keep the largest strongly connected part instead of retrying.
    #[arg(long)]
    extract_scc: bool,
    /// File stem of the written model.
    #[arg(long, default_value = "model")]
    name: String,
}

#[derive(Args)]
struct ValidateArgs {
    model: PathBuf,
    /// Also reject tau transitions.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    labels: LabelArgs,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long, default_value = "?")]
    input_prefix: String,
    #[arg(long, default_value = "!")]
    output_prefix: String,
    #[arg(long, default_value = "delta")]
    delta_name: String,
}

impl LabelArgs {
    fn convention(&self) -> LabelConvention {
        LabelConvention {
            input_prefix: self.input_prefix.clone(),
            output_prefix: self.output_prefix.clone(),
            delta_name: self.delta_name.clone(),
            ..LabelConvention::default()
        }
    }
}

#[derive(Args)]
struct ConvertArgs {
    input: PathBuf,
    /// Written to stdout if absent.
    output: Option<PathBuf>,
    #[arg(long)]
    delta_complete: bool,
    #[arg(long, conflicts_with = "delta_complete")]
    strip_delta: bool,
    #[command(flatten)]
    labels: LabelArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Logical,
    WallClock,
}

impl From<Mode> for TimeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Logical => TimeMode::Logical,
            Mode::WallClock => TimeMode::WallClock,
        }
    }
}

#[derive(Args)]
struct ServeArgs {
    model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7878")]
    bind: String,
    #[arg(long, value_enum, default_value = "logical")]
    mode: Mode,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Random,
    Greedy,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    /// Test a server at this address instead of an in-process simulator.
    #[arg(long)]
    connect: Option<String>,
    #[arg(long, value_enum, default_value = "greedy")]
    strategy: StrategyArg,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: u32,
    /// Coverage fraction to stop at; 0 disables the coverage goal.
    #[arg(long, default_value_t = 1.0)]
    target: f64,
    #[arg(long, default_value_t = 100_000)]
    max_transitions: u64,
    #[arg(long, default_value_t = 0)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 0.5)]
    input_bias: f64,
    /// JSON fault to install in the in-process simulator.
    #[arg(long)]
    fault: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON bench specification.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `runs_per_cell`.
    #[arg(long)]
    runs: Option<usize>,
    /// Run cells one after another.
    #[arg(long)]
    sequential: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn env_value<T: std::str::FromStr>(name: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match std::env::var(format!("{ENV_PREFIX}{name}")) {
        Ok(v) => v.parse().map(Some).map_err(|e| anyhow::anyhow!("{ENV_PREFIX}{name}={v}: {e}")),
        Err(_) => Ok(None),
    }
}

/// Common flags after applying environment defaults.
struct Settings {
    seed: Option<u64>,
    jobs: Option<usize>,
    out_dir: Option<PathBuf>,
    format: Format,
}

impl Settings {
    fn resolve(c: &Common) -> Result<Self> {
        let format = match (c.format, env_value::<String>("FORMAT")?) {
            (Some(f), _) => f,
            (None, Some(s)) => Format::from_str(&s, true).map_err(|e| anyhow::anyhow!("{ENV_PREFIX}FORMAT: {e}"))?,
            (None, None) => Format::Json,
        };
        Ok(Settings {
            seed: c.seed,
            jobs: c.jobs.or(env_value("JOBS")?),
            out_dir: c.out_dir.clone(),
            format,
        })
    }

    fn seed(&self) -> Result<u64> {
        Ok(self.seed.or(env_value("SEED")?).unwrap_or(0))
    }

    fn out_dir(&self) -> Result<PathBuf> {
        Ok(self.out_dir.clone().or(env_value("OUT_DIR")?).unwrap_or_else(|| PathBuf::from(".")))
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let settings = Settings::resolve(&cli.common)?;
    match cli.command {
        Command::Generate(a) => generate(&settings, a),
        Command::Validate(a) => validate(&settings, a),
        Command::Convert(a) => convert(a),
        Command::Serve(a) => serve(&settings, a),
        Command::Run(a) => run(&settings, a),
        Command::BenchMutants(a) => bench_cmd(&settings, a, false),
        Command::BenchCoverage(a) => bench_cmd(&settings, a, true),
    }
}

fn load(path: &Path, labels: &LabelConvention) -> Result<Iolts> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_aut_with(&text, labels).with_context(|| format!("cannot parse {}", path.display()))
}

fn generate(s: &Settings, a: GenerateArgs) -> Result<ExitCode> {
    let mut params = GenParams::new(a.n, a.lambda, a.r, a.p, s.seed()?);
    params.max_attempts = a.max_attempts;
    params.extract_scc = a.extract_scc;
    if let Some(k) = a.small_alphabet {
        params.labels = LabelMode::SmallAlphabet { symbols: k };
    }
    let g = gen_model(&params)?;
    let dir = s.out_dir()?;
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let aut = dir.join(format!("{}.aut", a.name));
    let meta = dir.join(format!("{}.meta.json", a.name));
    fs::write(&aut, write_aut(&g.model)).with_context(|| format!("cannot write {}", aut.display()))?;
    fs::write(&meta, serde_json::to_string_pretty(&g.metadata())? + "\n")
        .with_context(|| format!("cannot write {}", meta.display()))?;
    println!("{}", aut.display());
    println!("{}", meta.display());
    Ok(ExitCode::SUCCESS)
}

fn validate(s: &Settings, a: ValidateArgs) -> Result<ExitCode> {
    let model = load(&a.model, &a.labels.convention())?;
    let violations = model.validate(a.strict);
    match s.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&violations)?),
        Format::Csv => {
            println!("rule,severity,message");
            for v in &violations {
                let severity = match v.severity() {
                    Severity::Error => "error",
                    Severity::Warning => "warning",
                };
                println!("{},{},\"{}\"", v.code(), severity, v.to_string().replace('"', "\"\""));
            }
        }
    }
    Ok(if violations.iter().any(|v| v.is_error()) { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn convert(a: ConvertArgs) -> Result<ExitCode> {
    let mut model = load(&a.input, &a.labels.convention())?;
    if a.delta_complete && !model.has_delta() {
        model = model.delta_completion()?;
    }
    if a.strip_delta {
        model = model.strip_delta();
    }
    let text = write_aut(&model);
    match a.output {
        Some(path) => fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(s: &Settings, a: ServeArgs) -> Result<ExitCode> {
    eprintln!("serving {} on {}", a.model.display(), a.bind);
    serve_tcp(&a.model, &a.bind, a.mode.into(), s.seed()?)?;
    Ok(ExitCode::SUCCESS)
}

fn run(s: &Settings, a: RunArgs) -> Result<ExitCode> {
    let mut model = load(&a.model, &LabelConvention::default())?;
    if !model.has_delta() {
        model = model.delta_completion()?;
    }
    let cfg = EngineConfig {
        strategy: match a.strategy {
            StrategyArg::Random => StrategyKind::Random,
            StrategyArg::Greedy => StrategyKind::Greedy { depth: a.depth },
        },
        coverage_target: (a.target > 0.0).then_some(a.target),
        max_transitions: a.max_transitions,
        timeout_millis: a.timeout_ms,
        input_bias: a.input_bias,
        seed: s.seed()?,
    };
    let report = match &a.connect {
        Some(addr) => {
            if a.fault.is_some() {
                bail!("--fault applies to the in-process simulator only");
            }
            let mut port = TcpPort::connect(addr.as_str()).with_context(|| format!("cannot connect to {addr}"))?;
            engine::run(&model, &mut port, &cfg)?
        }
        None => {
            let model = Arc::new(model);
            let mut sim = Simulator::new(model.clone(), TimeMode::Logical, cfg.seed)?;
            if let Some(json) = &a.fault {
                let fault: FaultSpec = serde_json::from_str(json).context("bad --fault")?;
                sim.mutate(&fault)?;
            }
            engine::run(&model, &mut sim, &cfg)?
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

/// Reads a bench spec; the config's own `seed` and `out_dir` sit between the
/// command line and the environment.
fn read_spec(s: &Settings, a: &BenchArgs) -> Result<BenchSpec> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("cannot read {}", a.config.display()))?;
    let raw: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("bad JSON in {}", a.config.display()))?;
    let mut spec: BenchSpec =
        serde_json::from_value(raw.clone()).with_context(|| format!("bad bench spec in {}", a.config.display()))?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    for m in &mut spec.models {
        match m {
            bench::ModelSource::File(p) => *p = base.join(&*p),
            bench::ModelSource::WithMutants { path, mutants } => {
                *path = base.join(&*path);
                for f in mutants {
                    *f = base.join(&*f);
                }
            }
            bench::ModelSource::Generate(_) => {}
        }
    }
    if let Some(seed) = s.seed {
        spec.seed = seed;
    } else if raw.get("seed").is_none() {
        spec.seed = s.seed()?;
    }
    if let Some(dir) = &s.out_dir {
        spec.out_dir = dir.clone();
    } else if raw.get("out_dir").is_none() {
        if let Some(dir) = env_value::<PathBuf>("OUT_DIR")? {
            spec.out_dir = dir;
        }
    }
    if let Some(runs) = a.runs {
        spec.runs_per_cell = runs;
    }
    Ok(spec)
}

fn bench_cmd(s: &Settings, a: BenchArgs, coverage: bool) -> Result<ExitCode> {
    let spec = read_spec(s, &a)?;
    let exec = if a.sequential { Executor::Sequential } else { Executor::Parallel };
    let out: BenchOutput = if coverage {
        bench::run_coverage_spec(&spec, exec, s.jobs)?
    } else {
        bench::run_mutants_spec(&spec, exec, s.jobs)?
    };
    match s.format {
        Format::Csv => bench::write_rows_csv(&out.rows, std::io::stdout().lock())?,
        Format::Json => println!("{}", serde_json::to_string_pretty(&out)?),
    }
    for m in &out.strategies {
        match m.mean_of_means {
            Some(v) => eprintln!("{}: mean {:.1} over {} cells, {} censored runs", m.strategy, v, m.cells, m.censored_runs),
            None => eprintln!("{}: no uncensored runs, {} censored", m.strategy, m.censored_runs),
        }
    }
    Ok(ExitCode::SUCCESS)
}
