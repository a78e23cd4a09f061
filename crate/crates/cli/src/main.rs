//! `eik`: command-line driver for the factored eikonal solver.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use factored_eikonal::analytic::{default_params, AnalyticCase, CaseKind};
use factored_eikonal::bench::{convergence_study, measure_work_unit};
use factored_eikonal::io::{load_field, load_inversion_config, load_survey, read_field_csv, save_field, save_survey, write_field_csv};
use factored_eikonal::sensitivity::assemble_operator;
use factored_eikonal::tomography::{
    desk64, forward_data, gauss_newton, synthesize_survey, DataMatrix, InversionConfig, StopReason, Survey,
};
use factored_eikonal::{
    build_distance_factor, fm_solve, linf_error, mean_l2_error, EikonalError, Field, FmConfig, Grid, Mode, Order,
    SourceSpec,
};

#[derive(Parser)]
#[command(name = "eik", version, about = "Fast Marching for the factored eikonal equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one point-source problem.
    Solve(SolveArgs),
    /// Run an analytic case on several spacings and report errors.
    Convergence(ConvergenceArgs),
    /// Run a Gauss-Newton travel-time inversion.
    Invert(InvertArgs),
    /// Time one residual evaluation on a grid.
    Workunit(WorkunitArgs),
    /// Write the sensitivity operator of one solve as `row col value` lines.
    DumpOperator(DumpArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Factored,
    Plain,
}

#[derive(Args)]
struct ProblemArgs {
    /// Analytic case: cgss2d, cgv2d, gauss2d, cgss3d, cgv3d, gauss3d, const1 or const1-3d.
    #[arg(long, conflicts_with = "model")]
    case: Option<String>,
    /// Squared slowness field (EIKFIELD binary, or CSV when the name ends in .csv).
    #[arg(long, requires = "source")]
    model: Option<PathBuf>,
    /// Source node as comma-separated indices; defaults to the case source.
    #[arg(long)]
    source: Option<String>,
    /// Grid spacing for analytic cases.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    order: u8,
    #[arg(long, value_enum, default_value_t = ModeArg::Factored)]
    mode: ModeArg,
    /// Revert to the plain operator where the factored one breaks monotonicity.
    #[arg(long)]
    monotone: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Output prefix; writes `<prefix>.tau.fld` and, in factored mode, `<prefix>.tau1.fld`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the outputs as CSV (`<prefix>.tau.csv`, `<prefix>.tau1.csv`).
    #[arg(long, requires = "out")]
    csv: bool,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long)]
    case: String,
    /// Comma-separated spacings; defaults to 1/40,1/80,1/160 in 2D and 1/20,1/40 in 3D.
    #[arg(long)]
    h: Option<String>,
    #[arg(long, default_value = "1,2")]
    orders: String,
    /// CSV report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InvertArgs {
    /// Built-in synthetic problem.
    #[arg(long, value_parser = ["desk64"], conflicts_with = "survey")]
    synthetic: Option<String>,
    /// Survey file (EIKSURV); needs `--init` and `--config`.
    #[arg(long, requires_all = ["init", "config"])]
    survey: Option<PathBuf>,
    /// Initial squared slowness; for synthetic runs also `truth` or `reference`.
    #[arg(long)]
    init: Option<String>,
    /// Inversion settings (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Relative noise level of synthetic data.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// Output prefix.
    #[arg(long, default_value = "inversion")]
    out: PathBuf,
}

#[derive(Args)]
struct WorkunitArgs {
    /// Grid size as comma-separated node counts.
    #[arg(long, default_value = "641,1281")]
    n: String,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<EikonalError> for Failure {
    fn from(e: EikonalError) -> Self {
        let code = match &e {
            EikonalError::Internal(_) => 1,
            // the reader went away, e.g. `eik dump-operator | head`
            EikonalError::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe => 0,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        EikonalError::from(e).into()
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: msg.into(),
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn parse_case(name: &str) -> CliResult<AnalyticCase<f64>> {
    let lower = name.to_ascii_lowercase();
    match lower.as_str() {
        "const1" | "const1-2d" => return Ok(AnalyticCase::homogeneous(2, 1.0)?),
        "const1-3d" => return Ok(AnalyticCase::homogeneous(3, 1.0)?),
        _ => {}
    }
    let (kind, dim) = lower
        .strip_suffix("2d")
        .map(|k| (k, 2))
        .or_else(|| lower.strip_suffix("3d").map(|k| (k, 3)))
        .ok_or_else(|| usage(format!("unknown case `{name}`")))?;
    let kind: CaseKind = kind.parse()?;
    Ok(default_params(kind, dim)?)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| usage(format!("bad {what} `{p}`"))))
        .collect()
}

/// Accepts plain numbers and fractions such as `1/40`.
fn parse_spacing(s: &str) -> CliResult<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| usage(format!("bad spacing `{s}`")))?;
            let b: f64 = b.trim().parse().map_err(|_| usage(format!("bad spacing `{s}`")))?;
            a / b
        }
        None => s.parse().map_err(|_| usage(format!("bad spacing `{s}`")))?,
    };
    if v <= 0.0 || !v.is_finite() {
        return Err(usage(format!("spacing must be positive, got `{s}`")));
    }
    Ok(v)
}

/// Prefixes a failure with the file it concerns.
fn in_file<T>(path: &Path, r: Result<T, EikonalError>) -> CliResult<T> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn load_model(path: &Path) -> CliResult<Field> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let field = if is_csv {
        File::open(path).map_err(EikonalError::from).and_then(read_field_csv)
    } else {
        load_field(path)
    };
    in_file(path, field)
}

fn fm_config(p: &ProblemArgs) -> CliResult<FmConfig> {
    let order = Order::from_u8(p.order)?;
    Ok(match p.mode {
        ModeArg::Factored => FmConfig::factored(order).with_monotonicity(p.monotone),
        ModeArg::Plain => FmConfig::plain(order),
    })
}

/// Squared slowness, source and (for analytic cases) exact travel times.
struct Setup {
    m: Field,
    source: SourceSpec,
    exact: Option<Field>,
}

fn setup(p: &ProblemArgs) -> CliResult<Setup> {
    let explicit_source = match &p.source {
        Some(s) => {
            let idx = parse_list::<usize>(s, "source index")?;
            if !(2..=3).contains(&idx.len()) {
                return Err(usage("--source needs 2 or 3 indices"));
            }
            Some(SourceSpec::new(&idx))
        }
        None => None,
    };
    if let Some(path) = &p.model {
        let m = load_model(path)?;
        let source = explicit_source.ok_or_else(|| usage("--model needs --source"))?;
        source.linear(m.grid())?;
        return Ok(Setup { m, source, exact: None });
    }
    let name = p.case.as_deref().ok_or_else(|| usage("give --case or --model"))?;
    let case = parse_case(name)?;
    let h = p.h.unwrap_or(if case.dim == 2 { 1.0 / 40.0 } else { 1.0 / 20.0 });
    let grid = case.grid(h)?;
    let fields = case.eval(&grid)?;
    let (source, exact) = match explicit_source {
        Some(s) if s != fields.source => (s, None),
        _ => (fields.source, Some(fields.tau)),
    };
    Ok(Setup {
        m: fields.m,
        source,
        exact,
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_solve(args: &SolveArgs) -> CliResult {
    let s = setup(&args.problem)?;
    let cfg = fm_config(&args.problem)?;
    let grid = *s.m.grid();
    let start = Instant::now();
    let dist = build_distance_factor(&grid, &s.source)?;
    let sol = fm_solve(&grid, &s.m, &s.source, &dist, &cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    let dims: Vec<String> = grid.counts().iter().map(|c| c.to_string()).collect();
    println!("grid {} h {:e} order {}", dims.join("x"), grid.spacing(), cfg.order.as_u8());
    if let Some(exact) = &s.exact {
        let linf = linf_error(&sol.tau, exact)?;
        let l2 = mean_l2_error(&sol.tau, exact)?;
        println!("errors [{linf:.3e}, {l2:.3e}]");
    }
    println!("time {seconds:.3}s");
    if let Some(prefix) = &args.out {
        let mut outputs = vec![("tau", &sol.tau)];
        if cfg.mode == Mode::Factored {
            outputs.push(("tau1", &sol.tau1));
        }
        for (name, field) in outputs {
            save_field(field, with_suffix(prefix, &format!(".{name}.fld")))?;
            if args.csv {
                let file = File::create(with_suffix(prefix, &format!(".{name}.csv")))?;
                write_field_csv(field, BufWriter::new(file))?;
            }
        }
    }
    Ok(())
}

fn cmd_convergence(args: &ConvergenceArgs) -> CliResult {
    let case = parse_case(&args.case)?;
    let hs = match &args.h {
        Some(list) => list.split(',').map(parse_spacing).collect::<CliResult<Vec<_>>>()?,
        None if case.dim == 2 => vec![1.0 / 40.0, 1.0 / 80.0, 1.0 / 160.0],
        None => vec![1.0 / 20.0, 1.0 / 40.0],
    };
    let orders = parse_list::<u8>(&args.orders, "order")?
        .into_iter()
        .map(Order::from_u8)
        .collect::<Result<Vec<_>, _>>()?;
    let report = convergence_study(&case, &hs, &orders)?;
    println!("{:>10} {:>12} {:>5} {:>11} {:>11} {:>9} {:>10}", "h", "n", "order", "linf", "mean_l2", "seconds", "work");
    for r in &report.rows {
        println!(
            "{:>10.6} {:>12} {:>5} {:>11.3e} {:>11.3e} {:>9.3} {:>10.1}",
            r.h, r.n, r.order, r.linf, r.mean_l2, r.seconds, r.work_units
        );
    }
    for order in report.orders() {
        let fmt = |s: Option<f64>| s.map_or_else(|| "NA".to_string(), |v| format!("{v:.3}"));
        let (a, b) = report.slopes(order);
        println!("order {order} slopes: linf {} mean_l2 {}", fmt(a), fmt(b));
    }
    if let Some(path) = &args.out {
        report.write_csv(BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn write_matrix(path: &Path, d: &DataMatrix<f64>) -> CliResult {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..d.n_src() {
        let row: Vec<String> = d.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_invert(args: &InvertArgs) -> CliResult {
    let (survey, cfg, m_init, m_true) = match (&args.synthetic, &args.survey) {
        (Some(_), _) => {
            let p = desk64::<f64>()?;
            // without an explicit reference the initial model is used
            let cfg = match &args.config {
                Some(path) => in_file(path, load_inversion_config(path))?,
                None => InversionConfig::new(p.bounds),
            };
            let survey = synthesize_survey(&p.m_true, &p.geometry, args.noise, args.seed, &cfg.fm)?;
            let init = match args.init.as_deref() {
                None | Some("reference") => p.m_init.clone(),
                Some("truth") => p.m_true.clone(),
                Some(path) => load_model(Path::new(path))?,
            };
            save_survey(&survey, with_suffix(&args.out, ".survey"))?;
            (survey, cfg, init, Some(p.m_true))
        }
        (None, Some(path)) => {
            let survey: Survey<f64> = in_file(path, load_survey(path))?;
            let config = args.config.as_ref().ok_or_else(|| usage("--survey needs --config"))?;
            let cfg = in_file(config, load_inversion_config(config))?;
            let init = load_model(Path::new(args.init.as_deref().ok_or_else(|| usage("--survey needs --init"))?))?;
            (survey, cfg, init, None)
        }
        (None, None) => return Err(usage("give --synthetic or --survey")),
    };
    if m_init.grid() != &survey.grid {
        return Err(usage("initial model and survey are on different grids"));
    }
    let mp_init = cfg.bounds.inverse_field(&m_init)?;
    let result = gauss_newton(&survey, &cfg, &mp_init)?;

    let mut h = BufWriter::new(File::create(with_suffix(&args.out, ".history.csv"))?);
    writeln!(h, "iteration,misfit,reg,objective,mu")?;
    for r in &result.history {
        writeln!(h, "{},{:?},{:?},{:?},{:?}", r.iteration, r.misfit, r.reg, r.objective, r.mu)?;
        println!(
            "iter {:>2}  misfit {:.6e}  reg {:.6e}  objective {:.6e}  mu {}",
            r.iteration, r.misfit, r.reg, r.objective, r.mu
        );
    }
    h.flush()?;
    save_field(&result.m_final, with_suffix(&args.out, ".m.fld"))?;
    let predicted = forward_data(&result.m_final, &survey.geometry, &cfg.fm)?;
    write_matrix(&with_suffix(&args.out, ".observed.csv"), &survey.d_obs)?;
    write_matrix(&with_suffix(&args.out, ".predicted.csv"), &predicted)?;
    write_matrix(&with_suffix(&args.out, ".residual.csv"), &predicted.sub(&survey.d_obs)?)?;
    if let Some(truth) = m_true {
        let clean = forward_data(&truth, &survey.geometry, &cfg.fm)?;
        let floor = survey.d_obs.sub(&clean)?.half_norm2();
        println!("noise floor {floor:.6e}");
    }
    match result.stop {
        StopReason::Completed => println!("stopped after {} iterations", cfg.n_gn),
        StopReason::Converged => println!("converged"),
        StopReason::LineSearchFailed => println!("line search found no decrease; kept the best model"),
    }
    Ok(())
}

fn cmd_workunit(args: &WorkunitArgs) -> CliResult {
    let counts = parse_list::<usize>(&args.n, "node count")?;
    let h = 1.0 / (counts[0].max(2) - 1) as f64;
    let grid = Grid::new(&counts, h, &vec![0.0; counts.len()])?;
    let unit = measure_work_unit(&grid);
    println!("work unit {:.6e}s on {} nodes", unit.seconds, grid.len());
    Ok(())
}

fn cmd_dump(args: &DumpArgs) -> CliResult {
    let s = setup(&args.problem)?;
    let cfg = fm_config(&args.problem)?;
    if cfg.mode != Mode::Factored {
        return Err(usage("the sensitivity operator is defined for the factored solver"));
    }
    let grid = *s.m.grid();
    let dist = build_distance_factor(&grid, &s.source)?;
    let sol = fm_solve(&grid, &s.m, &s.source, &dist, &cfg)?;
    let op = assemble_operator(&sol, &dist)?;
    match &args.out {
        Some(path) => op.write_coordinates(BufWriter::new(File::create(path)?))?,
        None => op.write_coordinates(std::io::stdout().lock())?,
    }
    Ok(())
}

/// Caps the worker pool when `EIK_THREADS` is set.
fn configure_threads() -> CliResult {
    if let Ok(v) = std::env::var("EIK_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("EIK_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    configure_threads()?;
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Convergence(a) => cmd_convergence(a),
        Command::Invert(a) => cmd_invert(a),
        Command::Workunit(a) => cmd_workunit(a),
        Command::DumpOperator(a) => cmd_dump(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) if f.code == 0 => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

