use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};

use rca_forge_core::eval::{evaluate_dataset, render_aggregate, EvalError, EvalReport, SolverSpec};
use rca_forge_core::exec::Exec;
use rca_forge_core::forge::{
    assemble_dataset, check_dataset, write_dataset, GeneratorConfig, RuleCatalog,
};
use rca_forge_core::orchestrator::{
    render_progress, run_loop, LoopConfig, LoopError, RunManifest, MANIFEST_FILE, SELF_TOKEN,
};
use rca_forge_core::reference;
use rca_forge_core::solver::{solve, Program, Stage};

/// Synthesize graded root-cause-analysis benchmarks, evaluate solvers on
/// them and run the evaluate-analyze-repair loop.
#[derive(Parser, Debug)]
#[command(name = "rca-forge", version)]
struct Cli {
    /// Overrides the generator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for generation and evaluation (1 = sequential).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset.
    Gen(GenArgs),
    /// Check every scenario of a dataset.
    Validate(ValidateArgs),
    /// Evaluate a solver on a dataset.
    Eval(EvalArgs),
    /// Run the repair loop.
    Loop(LoopArgs),
    /// Render the progress table of a loop run.
    Report(ReportArgs),
    /// Run a solver program on one input document.
    Solve(SolveArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Generator config; the built-in reference config when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rule catalog; overrides the config's catalog.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Dataset directory.
    #[arg(long)]
    dataset: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Solver command line; the input path is appended. `{self}` stands for
    /// this executable.
    #[arg(long)]
    solver: String,
    /// Score only the first k causes per alarm.
    #[arg(long)]
    k: Option<usize>,
    /// Per-scenario solver timeout in seconds.
    #[arg(long, default_value_t = rca_forge_core::eval::DEFAULT_TIMEOUT_SECONDS)]
    timeout: u64,
    /// Report file to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LoopArgs {
    /// Loop config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset directory; overrides the config's dataset_dir.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Overrides the number of repair rounds.
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run manifest, or the loop output directory holding it.
    #[arg(long)]
    manifest: PathBuf,
    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("which").required(true).args(["program", "stage", "check"])))]
struct SolveArgs {
    /// Solver program file.
    #[arg(long)]
    program: Option<PathBuf>,
    /// Built-in reference program: v0, v1 or v2.
    #[arg(long)]
    stage: Option<String>,
    /// Only check that this program file parses.
    #[arg(long)]
    check: Option<PathBuf>,
    /// Input document.
    #[arg(required_unless_present = "check")]
    input: Option<PathBuf>,
}

/// Failure with its exit status: 2 for bad data or config, 3 for runtime
/// failures.
enum Failure {
    Data(anyhow::Error),
    Runtime(anyhow::Error),
}

type CmdResult = Result<(), Failure>;

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

struct Ctx {
    exec: Exec,
    seed: Option<u64>,
    quiet: bool,
}

impl Ctx {
    fn say(&self, text: &str) {
        if !self.quiet {
            print!("{text}");
            let _ = std::io::stdout().flush();
        }
    }
}

fn self_exe() -> Result<PathBuf, Failure> {
    std::env::current_exe()
        .context("locating the running executable")
        .map_err(runtime)
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(data)
}

fn write(path: &Path, text: &str) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))
            .map_err(runtime)?;
    }
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

fn cmd_gen(ctx: &Ctx, args: &GenArgs) -> CmdResult {
    let (mut config, base) = match &args.config {
        Some(path) => {
            let text = read(path)?;
            let config = GeneratorConfig::from_json(&text)
                .map_err(|e| data(anyhow::anyhow!("parsing {}: {e}", path.display())))?;
            (
                config,
                path.parent().map(Path::to_owned).unwrap_or_default(),
            )
        }
        None => (reference::generator_config(), PathBuf::new()),
    };
    if let Some(seed) = ctx.seed {
        config.seed = seed;
    }
    let catalog_path = match (&args.catalog, &args.config) {
        (Some(c), _) => Some(c.clone()),
        (None, Some(_)) => config.catalog.as_ref().map(|c| base.join(c)),
        (None, None) => None,
    };
    let catalog = match catalog_path {
        Some(path) => {
            let text = read(&path)?;
            RuleCatalog::from_json(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(data)?
        }
        None => reference::catalog(),
    };
    let dataset = assemble_dataset(&config, &catalog, ctx.exec).map_err(data)?;
    write_dataset(&args.out, &dataset).map_err(runtime)?;
    let split = &dataset.manifest.split;
    ctx.say(&format!(
        "wrote {} scenarios to {}: {} simple, {} difficult ({:.1}% difficult)\n",
        dataset.scenarios.len(),
        args.out.display(),
        split.simple,
        split.difficult,
        100.0 * split.difficult_fraction
    ));
    Ok(())
}

fn cmd_validate(ctx: &Ctx, args: &ValidateArgs) -> CmdResult {
    let problems = check_dataset(&args.dataset).map_err(data)?;
    for p in &problems {
        eprintln!("{p}");
    }
    if !problems.is_empty() {
        return Err(data(anyhow::anyhow!(
            "{} violation(s) in {}",
            problems.len(),
            args.dataset.display()
        )));
    }
    ctx.say(&format!("{}: 0 violations\n", args.dataset.display()));
    Ok(())
}

fn solver_spec(command: &str, timeout: u64) -> Result<SolverSpec, Failure> {
    let mut spec = SolverSpec::from_command_line(command).map_err(|e| data(anyhow::anyhow!(e)))?;
    if spec.command.iter().any(|a| a.contains(SELF_TOKEN)) {
        let exe = self_exe()?.to_string_lossy().into_owned();
        for arg in &mut spec.command {
            *arg = arg.replace(SELF_TOKEN, &exe);
        }
    }
    Ok(spec.with_timeout(timeout))
}

fn cmd_eval(ctx: &Ctx, args: &EvalArgs) -> CmdResult {
    if args.k == Some(0) {
        return Err(data(anyhow::anyhow!("--k must be at least 1")));
    }
    let spec = solver_spec(&args.solver, args.timeout)?;
    let evaluation =
        evaluate_dataset(&spec, &args.dataset, args.k, ctx.exec).map_err(|e| match e {
            EvalError::SolverMissing(_) => runtime(e),
            _ => data(e),
        })?;
    if let Some(out) = &args.out {
        write(out, &EvalReport::new(&evaluation, args.k).to_json())?;
    }
    ctx.say(&render_aggregate(&evaluation.report));
    ctx.say(&format!(
        "bad cases: {} of {}\n",
        evaluation.bad_case_count(),
        evaluation.cases.len()
    ));
    Ok(())
}

fn cmd_loop(ctx: &Ctx, args: &LoopArgs) -> CmdResult {
    let mut config = LoopConfig::load(&args.config).map_err(data)?;
    if let Some(r) = args.rounds {
        config.rounds = r;
    }
    if let Some(d) = &args.dataset {
        config.dataset_dir = std::path::absolute(d).map_err(runtime)?;
    }
    if let Some(jobs) = ctx_jobs(ctx) {
        config.jobs = Some(jobs);
    }
    config.validate().map_err(data)?;
    let out = match (&args.out, &config.out_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => config.resolve(o),
        (None, None) => {
            return Err(data(anyhow::anyhow!(
                "no output directory: pass --out or set out_dir"
            )))
        }
    };
    let exe = self_exe()?;
    let manifest = run_loop(&config, &out, Some(&exe)).map_err(|e| match e {
        LoopError::Config(_) | LoopError::Backend(_) => data(e),
        LoopError::Eval(EvalError::SolverMissing(_)) | LoopError::Io { .. } => runtime(e),
        LoopError::Eval(_) => data(e),
    })?;
    ctx.say(&render_progress(&manifest));
    Ok(())
}

fn ctx_jobs(ctx: &Ctx) -> Option<usize> {
    match ctx.exec {
        Exec::Sequential => Some(1),
        Exec::Parallel { jobs } => Some(jobs),
        Exec::Auto => None,
    }
}

fn cmd_report(ctx: &Ctx, args: &ReportArgs) -> CmdResult {
    let path = if args.manifest.is_dir() {
        args.manifest.join(MANIFEST_FILE)
    } else {
        args.manifest.clone()
    };
    let manifest = RunManifest::read(&path).map_err(data)?;
    manifest
        .check()
        .map_err(|e| data(anyhow::anyhow!("{}: {e}", path.display())))?;
    let table = render_progress(&manifest);
    if let Some(out) = &args.out {
        write(out, &table)?;
    }
    ctx.say(&table);
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> CmdResult {
    if let Some(path) = &args.check {
        let text = read(path)?;
        return Program::parse(&text)
            .map(|_| ())
            .map_err(|e| data(anyhow::anyhow!("{}: {e}", path.display())));
    }
    let program = match (&args.program, &args.stage) {
        (Some(path), _) => {
            let text = read(path)?;
            Program::parse(&text).map_err(|e| data(anyhow::anyhow!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => Stage::parse(name)
            .ok_or_else(|| {
                data(anyhow::anyhow!(
                    "unknown stage `{name}`; expected v0, v1 or v2"
                ))
            })?
            .program(),
        (None, None) => unreachable!("clap requires one of the program sources"),
    };
    let input_path = args.input.as_ref().expect("clap requires an input");
    let input = read(input_path)?;
    let out = solve(&program, &input)
        .map_err(|e| data(anyhow::anyhow!("{}: {e}", input_path.display())))?;
    print!("{out}");
    Ok(())
}

/// The error chain joined by ": ", skipping causes already spelled out by
/// the message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet {
        "warn"
    } else {
        "info"
    }))
    .format_timestamp(None)
    .init();
    let ctx = Ctx {
        exec: cli.jobs.map_or(Exec::Auto, Exec::with_jobs),
        seed: cli.seed,
        quiet: cli.quiet,
    };
    if cli.jobs == Some(0) {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(&ctx, a),
        Command::Validate(a) => cmd_validate(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Loop(a) => cmd_loop(&ctx, a),
        Command::Report(a) => cmd_report(&ctx, a),
        Command::Solve(a) => cmd_solve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(3)
        }
    }
}
