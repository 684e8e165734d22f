use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use helm_core::helm::{compute_series, SeriesSet};
use helm_core::netmodel::{parse_network, validate, BusKind, Network};
use helm_core::nr::{nr_solve, NrConfig, NrResult};
use helm_core::numerics::Precision;
use helm_core::pade::{pade_from_series, zero_pole, ZeroPoleSet};
use helm_core::solver::{default_precision, residual, solve, sweep, SolveConfig, SweepSpec, Verdict};
use helm_core::Complex64;
use serde::Serialize;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

/// Holomorphic embedding power flow with voltage-magnitude buses.
#[derive(Debug, Parser)]
#[command(name = "helm-pf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one operating point and classify its feasibility.
    Solve(SolveArgs),
    /// Flat-start Newton-Raphson baseline in polar form.
    Nr(NrArgs),
    /// Solve over a range of one network field and bracket the
    /// feasibility boundaries.
    Sweep(SweepArgs),
    /// Dump the power series coefficients of every bus.
    Series(SeriesArgs),
    /// Zeros and poles of the diagonal Padé approximant of one bus voltage.
    Zeropole(ZeropoleArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Network description (JSON).
    network: PathBuf,
    /// Override a numeric field, e.g. `bus6.p_gen=1.0`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Output file, written atomically. Standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Args)]
struct SeriesOpts {
    /// Highest series order N.
    #[arg(long, default_value_t = 200)]
    order: usize,
    /// Working precision in bits [default: 256, or 2.5 N rounded up to a
    /// multiple of 64 when larger].
    #[arg(long, env = "HELM_PF_PRECISION", value_name = "BITS")]
    precision: Option<u32>,
}

impl SeriesOpts {
    fn precision(&self) -> Precision {
        self.precision.map_or_else(|| default_precision(self.order), Precision::new)
    }
}

#[derive(Debug, Args)]
struct Tolerances {
    /// Agreement required between the top diagonal Padé values at s = 1.
    #[arg(long, default_value = "1e-8")]
    eps_sol: f64,
    /// Largest admissible power-flow residual.
    #[arg(long, default_value = "1e-8")]
    eps_res: f64,
    /// Half-width of the real-axis pole window beyond s = 1.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    series: SeriesOpts,
    #[command(flatten)]
    tol: Tolerances,
}

#[derive(Debug, Args)]
struct NrArgs {
    #[command(flatten)]
    common: Common,
    /// Convergence threshold on the infinity norm of the mismatch.
    #[arg(long, default_value = "1e-10")]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    series: SeriesOpts,
    #[command(flatten)]
    tol: Tolerances,
    /// `BUS.FIELD:FROM:TO:STEP`, e.g. `bus6.p_gen:0:1.2:0.01`.
    #[arg(long, value_name = "SPEC")]
    sweep: SweepSpec,
    /// Points solved concurrently [default: all cores].
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct SeriesArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    series: SeriesOpts,
}

#[derive(Debug, Args)]
struct ZeropoleArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    series: SeriesOpts,
    /// Bus id (`bus6` or `6`).
    #[arg(long)]
    bus: String,
    /// Diagonal degree M [default: (order - 1) / 2].
    #[arg(long)]
    degree: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Solve(a) => run_solve(a),
        Command::Nr(a) => run_nr(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Series(a) => run_series(a),
        Command::Zeropole(a) => run_zeropole(a),
    }
}

fn load(common: &Common) -> Result<Network> {
    let text = std::fs::read_to_string(&common.network)
        .with_context(|| format!("reading {}", common.network.display()))?;
    let mut net = parse_network(&text).with_context(|| format!("parsing {}", common.network.display()))?;
    for item in &common.set {
        let (path, value) = item
            .split_once('=')
            .with_context(|| format!("--set expects PATH=VALUE, got `{item}`"))?;
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("--set {path}: `{value}` is not a number"))?;
        net.set_field(path.trim(), value).with_context(|| format!("--set {path}"))?;
    }
    let problems = validate(&net);
    if !problems.is_empty() {
        let list: Vec<String> = problems.iter().map(ToString::to_string).collect();
        bail!("invalid network: {}", list.join("; "));
    }
    Ok(net)
}

fn solve_config(series: &SeriesOpts, tol: &Tolerances) -> Result<SolveConfig> {
    let mut cfg = SolveConfig::with_order(series.order);
    cfg.precision = series.precision();
    cfg.eps_sol = tol.eps_sol;
    cfg.eps_res = tol.eps_res;
    cfg.delta = tol.delta;
    cfg.validate()?;
    Ok(cfg)
}

/// Writes to `out` through a temporary file in the same directory, or to
/// standard output.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    let Some(path) = out else {
        std::io::stdout().write_all(text.as_bytes())?;
        return Ok(());
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating file in {}", dir.display()))?;
    tmp.write_all(text.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn run_solve(a: SolveArgs) -> Result<u8> {
    let net = load(&a.common)?;
    let cfg = solve_config(&a.series, &a.tol)?;
    let report = solve(&net, &cfg)?;
    eprintln!(
        "{}: order {}, degree {}, {} bits, {:.3} s",
        report.verdict,
        report.order,
        report.pade_degree,
        report.precision,
        report.timing.as_secs_f64()
    );
    if let Some(g) = &report.guidance {
        eprintln!("{g}");
    }
    let text = match a.common.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut s = String::from("bus,kind,v_re,v_im,vmag,q_gen\n");
            for b in &report.buses {
                s += &format!(
                    "{},{},{:e},{:e},{:e},{}\n",
                    b.id,
                    kind_name(b.kind),
                    b.voltage.re,
                    b.voltage.im,
                    b.magnitude,
                    b.q_gen.map(|q| format!("{q:e}")).unwrap_or_default()
                );
            }
            s
        }
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(match report.verdict {
        Verdict::Feasible => EXIT_OK,
        Verdict::Infeasible => EXIT_INFEASIBLE,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

fn kind_name(kind: BusKind) -> &'static str {
    match kind {
        BusKind::Slack => "slack",
        BusKind::PQ => "pq",
        BusKind::PV => "pv",
    }
}

#[derive(Serialize)]
struct NrBus {
    id: String,
    kind: BusKind,
    voltage: Complex64,
    magnitude: f64,
}

#[derive(Serialize)]
struct NrReport<'a> {
    method: &'static str,
    converged: bool,
    iterations: usize,
    singular_jacobian: bool,
    mismatch_history: &'a [f64],
    max_residual: f64,
    slack_power: Complex64,
    buses: Vec<NrBus>,
}

fn run_nr(a: NrArgs) -> Result<u8> {
    let net = load(&a.common)?;
    if !(a.tol > 0.0) {
        bail!("--tol must be positive");
    }
    let result: NrResult = nr_solve(
        &net,
        None,
        NrConfig {
            tol: a.tol,
            max_iter: a.max_iter,
        },
    );
    let v = result.state.voltages();
    let (mism, slack_power) = residual(&net, &v);
    let report = NrReport {
        method: "newton-raphson",
        converged: result.converged,
        iterations: result.iterations,
        singular_jacobian: result.singular_jacobian,
        mismatch_history: &result.history,
        max_residual: mism.iter().flatten().map(|m| m.worst()).fold(0.0, f64::max),
        slack_power,
        buses: net
            .buses()
            .iter()
            .zip(&v)
            .map(|(b, z)| NrBus {
                id: b.id.clone(),
                kind: b.kind,
                voltage: *z,
                magnitude: z.norm(),
            })
            .collect(),
    };
    eprintln!(
        "newton-raphson: {} after {} iterations",
        if result.converged { "converged" } else { "did not converge" },
        result.iterations
    );
    let text = match a.common.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut s = String::from("bus,kind,v_re,v_im,vmag\n");
            for b in &report.buses {
                s += &format!("{},{},{:e},{:e},{:e}\n", b.id, kind_name(b.kind), b.voltage.re, b.voltage.im, b.magnitude);
            }
            s
        }
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(if result.converged { EXIT_OK } else { EXIT_INCONCLUSIVE })
}

fn run_sweep(a: SweepArgs) -> Result<u8> {
    let net = load(&a.common)?;
    let cfg = solve_config(&a.series, &a.tol)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = a.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        pool = pool.num_threads(jobs);
    }
    let result = pool.build()?.install(|| sweep(&net, &a.sweep, &cfg))?;
    for p in &result.points {
        if let Some(e) = &p.error {
            eprintln!("{} = {}: {e}", result.path, p.value);
        }
    }
    for b in &result.boundaries {
        eprintln!(
            "boundary of {}: {:.6} (feasible at {}, not at {})",
            result.path, b.estimate, b.inside, b.outside
        );
    }
    let text = match a.common.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&result)?,
        Format::Csv => result.to_csv(&net),
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

fn series_for(net: &Network, opts: &SeriesOpts) -> Result<SeriesSet> {
    if opts.order < 1 {
        bail!("--order must be at least 1");
    }
    Ok(compute_series(net, opts.precision(), opts.order)?)
}

#[derive(Serialize)]
struct SeriesDump {
    bus: String,
    series: &'static str,
    coefficients: Vec<Complex64>,
}

fn run_series(a: SeriesArgs) -> Result<u8> {
    let net = load(&a.common)?;
    let set = series_for(&net, &a.series)?;
    let text = match a.common.format.unwrap_or(Format::Csv) {
        Format::Csv => set.to_csv(),
        Format::Json => {
            let dump: Vec<SeriesDump> = set
                .buses()
                .iter()
                .flat_map(|b| {
                    helm_core::helm::SeriesKind::ALL.iter().filter_map(move |&k| {
                        let c = b.series(k);
                        (!c.is_empty()).then(|| SeriesDump {
                            bus: b.id.clone(),
                            series: k.name(),
                            coefficients: c.iter().map(|z| z.to_c64()).collect(),
                        })
                    })
                })
                .collect();
            to_json(&dump)?
        }
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct RootDump {
    kind: &'static str,
    value: Complex64,
    froissart: bool,
}

fn run_zeropole(a: ZeropoleArgs) -> Result<u8> {
    let net = load(&a.common)?;
    let bus = net.resolve_bus(&a.bus)?;
    if net.bus(bus).kind == BusKind::Slack {
        bail!("bus `{}` is the slack bus; its voltage is fixed", a.bus);
    }
    let degree = a.degree.unwrap_or(a.series.order.saturating_sub(1) / 2);
    let opts = SeriesOpts {
        order: a.series.order.max(2 * degree),
        precision: a.series.precision,
    };
    let set = series_for(&net, &opts)?;
    let pa = pade_from_series(&set.bus(bus).c, degree, degree)?;
    let mut zp: ZeroPoleSet = zero_pole(&pa)?;
    zp.bus = Some(net.bus(bus).id.clone());
    eprintln!(
        "{}: PA[{}/{}], {} zeros, {} poles ({} genuine)",
        net.bus(bus).id,
        zp.l,
        zp.m,
        zp.zeros.len(),
        zp.poles.len(),
        zp.genuine_poles().count()
    );
    let text = match a.common.format.unwrap_or(Format::Csv) {
        Format::Csv => format!("{}{}", ZeroPoleSet::csv_header(), zp.csv_rows()),
        Format::Json => {
            let roots: Vec<RootDump> = [("zero", &zp.zeros), ("pole", &zp.poles)]
                .into_iter()
                .flat_map(|(kind, rs)| {
                    rs.iter().map(move |r| RootDump {
                        kind,
                        value: r.value.to_c64(),
                        froissart: r.froissart,
                    })
                })
                .collect();
            to_json(&roots)?
        }
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}
