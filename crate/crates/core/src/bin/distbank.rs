use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use distbank::acceptance::{self, VerifyOptions};
use distbank::bounds::{BoundCalculator, BoundQuery, BoundRule, Theorem, LOG2_E};
use distbank::error::SimError;
use distbank::protocol::{ClerkPolicy, DbMode};
use distbank::sim::{
    fresh_seed, run_sweep, write_sweep_csv, Experiment, ExperimentConfig, ExperimentResult, Mode, SizeSpec,
    StrategyKind, SweepGrid,
};
use distbank::strategies::build_fixed_assignment;

/// Version stamped into every JSON document this tool writes.
const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "distbank", version, about = "Clerk-set bounds, constructions and double-spend experiments")]
struct Cli {
    /// Worker threads for trials (default: all cores).
    #[arg(long, global = true, env = "DISTBANK_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a clerk-set size bound.
    Bounds(BoundsArgs),
    /// Build and check the fixed grid assignment.
    Construct(ConstructArgs),
    /// Run a seeded Monte Carlo experiment.
    Simulate(SimulateArgs),
    /// Run a cartesian grid of experiments, one CSV row per point.
    Sweep(SweepArgs),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
    Table,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "table")]
    out: OutFormat,
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    theorem: Theorem,
    #[arg(long, default_value_t = 0)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    f: usize,
    #[arg(long, default_value_t = 0)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    r: usize,
    #[arg(long, default_value_t = 6)]
    secpar: u32,
    /// Clerk-space size for t6; derived from n, f, d when omitted.
    #[arg(long)]
    beta: Option<usize>,
    #[arg(long, hide = true)]
    inject_log_e: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ConstructArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    f: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    #[arg(long, value_enum, default_value = "combinatorial")]
    mode: ModeArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    f: usize,
    #[arg(long, default_value_t = 0)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    r: usize,
    #[arg(long, default_value_t = 6)]
    secpar: u32,
    /// Clerk-set size, or `from-theorem`.
    #[arg(long, default_value = "from-theorem")]
    b: SizeSpec,
    /// Clerk-space size, or `from-theorem`.
    #[arg(long, default_value = "from-theorem")]
    beta: SizeSpec,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// 64-bit seed; a fresh one is drawn and reported when omitted.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "both")]
    clerk_policy: PolicyArg,
    #[arg(long, value_enum, default_value = "full")]
    db_mode: DbModeArg,
    /// Exit with status 1 unless rate <= 2^-secpar.
    #[arg(long)]
    assert_bound: bool,
    /// Write sampled populations, receivers and clerk sets as JSON lines.
    #[arg(long)]
    emit_population: Option<PathBuf>,
    /// Write protocol transcripts as JSON lines (protocol mode).
    #[arg(long)]
    emit_transcripts: Option<PathBuf>,
    /// How many trials the emit options record.
    #[arg(long, default_value_t = 100)]
    emit_limit: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum, value_delimiter = ',')]
    strategy: Vec<StrategyArg>,
    #[arg(long, value_enum, default_value = "combinatorial")]
    mode: ModeArg,
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    f: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    d: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    r: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "6")]
    secpar: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "from-theorem")]
    b: Vec<SizeSpec>,
    #[arg(long, value_delimiter = ',', default_value = "from-theorem")]
    beta: Vec<SizeSpec>,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also search for the smallest uniform b with rate <= 2^-secpar.
    #[arg(long)]
    min_safe_b: bool,
    #[arg(long, value_enum, default_value = "csv")]
    out: OutFormat,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Reduced-trial variant.
    #[arg(long)]
    quick: bool,
    /// Only run these criteria (1-8).
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Replace log2(e) in the bound formulas; for mutation checks.
    #[arg(long, hide = true)]
    inject_log_e: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Fixed,
    #[value(alias = "uniform-random")]
    Uniform,
    CoinSpace,
}

impl From<StrategyArg> for StrategyKind {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Fixed => StrategyKind::Fixed,
            StrategyArg::Uniform => StrategyKind::UniformRandom,
            StrategyArg::CoinSpace => StrategyKind::CoinSpace,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Protocol,
    Combinatorial,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Protocol => Mode::Protocol,
            ModeArg::Combinatorial => Mode::Combinatorial,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    SuppressReply,
    SkipStore,
    Both,
}

impl From<PolicyArg> for ClerkPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::SuppressReply => ClerkPolicy::SuppressReply,
            PolicyArg::SkipStore => ClerkPolicy::SkipStore,
            PolicyArg::Both => ClerkPolicy::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DbModeArg {
    Full,
    Compacted,
}

impl From<DbModeArg> for DbMode {
    fn from(m: DbModeArg) -> Self {
        match m {
            DbModeArg::Full => DbMode::Full,
            DbModeArg::Compacted => DbMode::Compacted,
        }
    }
}

#[derive(Debug)]
enum Failure {
    /// Ran fine but an assertion did not hold.
    Assertion(String),
    /// Bad input or an infeasible instance.
    Usage(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(format!("i/o error: {e}"))
    }
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

fn sink(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(w: &mut dyn Write, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, &Versioned { schema_version: SCHEMA_VERSION, body: value })?;
    writeln!(w)
}

fn calculator(inject: Option<f64>) -> BoundCalculator {
    BoundCalculator { log2_e: inject.unwrap_or(LOG2_E) }
}

#[derive(Serialize)]
struct BoundsOutput {
    query: BoundQuery,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<usize>,
    raw: f64,
    feasible: bool,
    rule: BoundRule,
    #[serde(skip_serializing_if = "Option::is_none")]
    assumption_holds: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
}

fn cmd_bounds(a: BoundsArgs) -> Result<(), Failure> {
    let calc = calculator(a.inject_log_e);
    let query = BoundQuery { theorem: a.theorem, n: a.n, f: a.f, d: a.d, secpar: a.secpar, r: a.r, beta: a.beta };
    let bound = calc.evaluate(&query).map_err(|e| Failure::Usage(e.to_string()))?;
    let (beta, b) = match a.theorem {
        Theorem::T5 => (Some(bound.value), None),
        Theorem::T6 => {
            let beta = match a.beta {
                Some(v) => v,
                None => calc.coin_space(a.n, a.f, a.d, a.secpar).map_err(|e| Failure::Usage(e.to_string()))?.value,
            };
            (Some(beta), Some(bound.value))
        }
        _ => (None, Some(bound.value)),
    };
    let out = BoundsOutput {
        query,
        beta,
        b,
        raw: bound.raw,
        feasible: bound.feasible,
        rule: bound.rule,
        assumption_holds: bound.assumption_holds,
        warning: bound.warning.clone(),
    };
    let mut w = sink(&a.output.output)?;
    let show = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    match a.output.out {
        OutFormat::Json => write_json(&mut w, &out)?,
        OutFormat::Csv => {
            writeln!(w, "theorem,n,f,d,r,secpar,beta,b,raw,feasible,rule")?;
            writeln!(
                w,
                "{:?},{},{},{},{},{},{},{},{},{},{}",
                a.theorem,
                a.n,
                a.f,
                a.d,
                a.r,
                a.secpar,
                show(beta),
                show(b),
                out.raw,
                out.feasible,
                out.rule
            )?;
        }
        OutFormat::Table => {
            writeln!(w, "theorem   {:?}", a.theorem)?;
            if let Some(v) = beta {
                writeln!(w, "beta      {v}")?;
            }
            if let Some(v) = b {
                writeln!(w, "b         {v}")?;
            }
            writeln!(w, "raw       {:.6}", out.raw)?;
            writeln!(w, "feasible  {}", out.feasible)?;
            writeln!(w, "rule      {}", out.rule)?;
            if let Some(h) = out.assumption_holds {
                writeln!(w, "side condition holds  {h}")?;
            }
            if let Some(msg) = &out.warning {
                writeln!(w, "warning   {msg}")?;
            }
        }
    }
    w.flush()?;
    if out.feasible {
        Ok(())
    } else {
        Err(Failure::Usage(format!("infeasible: formula gives {:.3}, more than the pool allows", out.raw)))
    }
}

fn cmd_construct(a: ConstructArgs) -> Result<(), Failure> {
    let assignment = build_fixed_assignment(a.n, a.f).map_err(|e| Failure::Usage(e.to_string()))?;
    let check = assignment.check();
    if !check.ok() {
        return Err(Failure::Assertion(format!("assignment failed its self-check: {check:?}")));
    }
    let mut w = sink(&a.output.output)?;
    match a.output.out {
        OutFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                assignment: &'a distbank::strategies::FixedAssignment,
                check: &'a distbank::strategies::AssignmentCheck,
            }
            write_json(&mut w, &Doc { assignment: &assignment, check: &check })?;
        }
        OutFormat::Csv => {
            writeln!(w, "node,clerks")?;
            for (i, set) in assignment.sets.iter().enumerate() {
                let ids: Vec<String> = set.iter().map(|x| x.to_string()).collect();
                writeln!(w, "{i},{}", ids.join(" "))?;
            }
        }
        OutFormat::Table => {
            writeln!(
                w,
                "n={} f={} grid {}x{} supernodes={}",
                a.n,
                a.f,
                assignment.grid_rows,
                assignment.grid_cols,
                assignment.supernodes.len()
            )?;
            writeln!(
                w,
                "min intersection {} (need {}), max set size {} (limit {})",
                check.min_intersection,
                a.f + 1,
                check.max_set_size,
                check.size_limit
            )?;
            writeln!(w, "verified")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_result_table(w: &mut dyn Write, r: &ExperimentResult) -> io::Result<()> {
    writeln!(w, "strategy     {:?}", r.config.strategy)?;
    writeln!(w, "mode         {:?}", r.config.mode)?;
    writeln!(w, "n f d r      {} {} {} {}", r.config.n, r.config.f, r.config.d, r.config.r)?;
    writeln!(w, "secpar       {}", r.config.secpar)?;
    if let Some(beta) = r.beta_used {
        writeln!(w, "beta         {beta}")?;
    }
    writeln!(w, "b            {}", r.b_used)?;
    writeln!(w, "seed         {}", r.seed)?;
    writeln!(w, "failures     {} / {}", r.failures, r.trials)?;
    writeln!(w, "rate         {:.6}", r.rate)?;
    writeln!(w, "ci_upper_95  {:.6}", r.ci_upper_95)?;
    writeln!(w, "bound        {:.6}", r.bound)?;
    writeln!(w, "feasible     {}", r.feasible)?;
    writeln!(w, "wall_time    {:.3}s", r.wall_time)
}

fn emit_lines(exp: &Experiment, path: &Path, limit: u64, transcripts: bool) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in 0..limit.min(exp.config.trials) {
        let rep = exp.run_trial_report(t, transcripts)?;
        if transcripts {
            #[derive(Serialize)]
            struct Line<'a> {
                trial: u64,
                evaded: bool,
                transcripts: &'a Option<Vec<distbank::protocol::SpendTranscript>>,
            }
            serde_json::to_writer(&mut w, &Line { trial: t, evaded: rep.evaded, transcripts: &rep.transcripts })
                .map_err(io::Error::from)?;
        } else {
            serde_json::to_writer(&mut w, &rep.instance).map_err(io::Error::from)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let seed = a.seed.unwrap_or_else(fresh_seed);
    let config = ExperimentConfig {
        strategy: a.strategy.into(),
        mode: a.mode.into(),
        n: a.n,
        f: a.f,
        d: a.d,
        r: a.r,
        secpar: a.secpar,
        b: a.b,
        beta: a.beta,
        trials: a.trials,
        seed,
        clerk_policy: a.clerk_policy.into(),
        db_mode: a.db_mode.into(),
    };
    let exp = Experiment::new(config)?;
    if let Some(path) = &a.emit_population {
        emit_lines(&exp, path, a.emit_limit, false)?;
    }
    if let Some(path) = &a.emit_transcripts {
        if exp.config.mode != Mode::Protocol {
            return Err(Failure::Usage("--emit-transcripts needs --mode protocol".into()));
        }
        emit_lines(&exp, path, a.emit_limit, true)?;
    }
    let result = exp.run()?;
    let mut w = sink(&a.output.output)?;
    match a.output.out {
        OutFormat::Json => write_json(&mut w, &result)?,
        OutFormat::Csv => {
            writeln!(w, "strategy,mode,n,f,d,r,secpar,b,beta,trials,seed,failures,rate,ci_upper_95,bound,feasible")?;
            let c = &result.config;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                serde_json::to_value(c.strategy).unwrap_or_default().as_str().unwrap_or_default(),
                serde_json::to_value(c.mode).unwrap_or_default().as_str().unwrap_or_default(),
                c.n,
                c.f,
                c.d,
                c.r,
                c.secpar,
                result.b_used,
                result.beta_used.map(|v| v.to_string()).unwrap_or_default(),
                result.trials,
                result.seed,
                result.failures,
                result.rate,
                result.ci_upper_95,
                result.bound,
                result.feasible
            )?;
        }
        OutFormat::Table => write_result_table(&mut w, &result)?,
    }
    w.flush()?;
    if a.assert_bound && !result.within_bound() {
        return Err(Failure::Assertion(format!("rate {} exceeds bound {}", result.rate, result.bound)));
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let grid = SweepGrid {
        strategy: a.strategy.into_iter().map(Into::into).collect(),
        mode: a.mode.into(),
        n: a.n,
        f: a.f,
        d: a.d,
        r: a.r,
        secpar: a.secpar,
        b: a.b,
        beta: a.beta,
        trials: a.trials,
        seed: a.seed,
        search_min_b: a.min_safe_b,
    };
    if grid.trials == 0 {
        return Err(Failure::Usage("trials must be at least 1".into()));
    }
    let rows = run_sweep(&grid);
    let mut w = sink(&a.output)?;
    match a.out {
        OutFormat::Json => write_json(&mut w, &serde_json::json!({ "rows": rows }))?,
        _ => write_sweep_csv(&rows, &mut w).map_err(|e| Failure::Usage(e.to_string()))?,
    }
    w.flush()?;
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<(), Failure> {
    let opts = VerifyOptions { quick: a.quick, calculator: calculator(a.inject_log_e), seed: a.seed };
    let ids: Vec<u8> = if a.only.is_empty() { acceptance::CRITERIA.iter().map(|c| c.0).collect() } else { a.only };
    let mut w = sink(&a.output.output)?;
    let mut reports = Vec::new();
    for id in ids {
        let rep = acceptance::run_criterion(id, &opts).ok_or_else(|| Failure::Usage(format!("no criterion {id}")))?;
        if a.output.out == OutFormat::Table {
            writeln!(w, "{rep}")?;
            w.flush()?;
        }
        reports.push(rep);
    }
    match a.output.out {
        OutFormat::Json => write_json(&mut w, &serde_json::json!({ "criteria": reports }))?,
        OutFormat::Csv => {
            writeln!(w, "id,name,passed,wall_time")?;
            for r in &reports {
                writeln!(w, "{},{},{},{:.3}", r.id, r.name, r.passed, r.wall_time)?;
            }
        }
        OutFormat::Table => {}
    }
    w.flush()?;
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(format!("criteria failed: {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Bounds(a) => cmd_bounds(a),
        Command::Construct(a) => cmd_construct(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
