//! Command-line driver shared by the `csform` binary and the tests.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use crate::diagnostics::{certify, CertificateReport};
use crate::integrator::{convergence_study, Method, Termination};
use crate::model::Kernel;
use crate::scenarios::ScenarioKind;

use super::config::{load_config, Format, KernelName, RunConfig};
use super::{execute, RunError};

#[derive(Debug, Parser)]
#[command(name = "csform", version, about = "Cucker-Smale swarms with decentralized formation control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write states, diagnostics, events and a summary.
    Run(RunArgs),
    /// Evaluate the analytical conditions on the initial data only.
    Certify(CertifyArgs),
    /// List the built-in scenarios.
    ListScenarios,
    /// Fixed-step RK4 dt-halving study on a smooth, uncontrolled run.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
    /// Output directory (default: $CSFORM_OUTPUT_ROOT/<scenario>, root `runs`).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Write every k-th accepted step.
    #[arg(long)]
    cadence: Option<usize>,
    /// Comma-separated subset of `csv,summary`.
    #[arg(long, value_delimiter = ',', value_parser = kebab::<Format>)]
    formats: Option<Vec<Format>>,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
    /// Print the machine-readable TOML document instead of the text report.
    #[arg(long)]
    toml: bool,
}

#[derive(Debug, Args)]
struct ConvergenceArgs {
    /// Scenario providing the initial data.
    #[arg(default_value = "bird")]
    scenario: String,
    /// Coarsest step.
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    /// Number of halvings compared.
    #[arg(long, default_value_t = 4)]
    levels: usize,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    /// Alignment kernel exponent of the regular kernel.
    #[arg(long, default_value_t = 1.1)]
    alpha: f64,
}

#[derive(Debug, Args)]
struct Source {
    /// Built-in scenario name (see `list-scenarios`).
    scenario: Option<String>,
    /// Configuration document; command-line flags override its keys.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    radius: Option<f64>,
    /// Swap the starting corners of agents 3 and 4 (degenerate-square).
    #[arg(long)]
    swapped: bool,
    #[arg(long, value_parser = kebab::<KernelName>)]
    kernel: Option<KernelName>,
    /// Shift of the `shifted` kernel.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Alignment gain K.
    #[arg(long = "k")]
    k: Option<f64>,
    /// Control gain M.
    #[arg(long = "m")]
    m: Option<f64>,
    #[arg(long, value_parser = kebab::<Method>)]
    method: Option<Method>,
    #[arg(long)]
    dt_init: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    dt_min: Option<f64>,
    #[arg(long)]
    collision_eps: Option<f64>,
    #[arg(long)]
    near_collision_eps: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
}

/// Parse a kebab-case enum through its serde representation.
fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s)).map_err(|e| e.to_string())
}

fn assemble(source: &Source, o: &Overrides) -> Result<RunConfig, RunError> {
    let mut cfg = match &source.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    cfg.merge(RunConfig {
        scenario: source.scenario.clone(),
        n: o.n,
        seed: o.seed,
        radius: o.radius,
        swapped: o.swapped.then_some(true),
        kernel: o.kernel,
        delta: o.delta,
        alpha: o.alpha,
        beta: o.beta,
        k: o.k,
        m: o.m,
        method: o.method,
        dt_init: o.dt_init,
        rel_tol: o.rel_tol,
        abs_tol: o.abs_tol,
        dt_min: o.dt_min,
        collision_eps: o.collision_eps,
        near_collision_eps: o.near_collision_eps,
        t_end: o.t_end,
        ..RunConfig::default()
    });
    if source.scenario.is_some() {
        // a scenario named on the command line replaces inline data
        cfg.x = None;
        cfg.v = None;
        cfg.z = None;
    }
    Ok(cfg)
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), RunError> {
    out.write_all(text.as_bytes()).map_err(|source| RunError::Write {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<u8, RunError> {
    let mut cfg = assemble(&args.source, &args.overrides)?;
    cfg.merge(RunConfig {
        output_dir: args.output.clone(),
        cadence: args.cadence,
        formats: args.formats.clone(),
        ..RunConfig::default()
    });
    let run = cfg.resolve()?;
    let summary = execute(&run)?;
    let t = &summary.terminal;
    let text = format!(
        "{}: {} at t = {} after {} steps ({} rejected)\n  pattern_error {:.6e}  v_diameter {:.6e}  min_dist {:.6e}\n  events: {} near collision, {} numerical collision, {} step floor\n  energy identity error {:.3e}\n  output: {}\n",
        summary.scenario,
        termination_name(summary.termination),
        t.t,
        summary.stats.accepted,
        summary.stats.rejected,
        t.pattern_error,
        t.v_diameter,
        summary.min_dist_overall,
        summary.events.near_collision,
        summary.events.numerical_collision,
        summary.events.step_floor,
        summary.energy.identity_error,
        run.output_dir.display(),
    );
    write_out(out, &text)?;
    if summary.failed_numerically() {
        return Err(RunError::Numerical(format!(
            "step size fell below dt_min = {} at t = {}",
            run.scenario.cfg.dt_min, t.t
        )));
    }
    Ok(0)
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Completed => "completed",
        Termination::Collision => "stopped on collision",
        Termination::StepFloor => "stopped at the step floor",
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.6e}"))
}

pub fn certificate_text(r: &CertificateReport) -> String {
    let mut s = String::new();
    let yes = |b: bool| if b { "yes" } else { "no" };
    s += &format!("E0                    {:.6e}\n", r.e0);
    s += &format!("v-diameter ceiling    {:.6e}\n", r.v_diameter_ceiling);
    s += &format!("C0*                   {:.6e}\n", r.c0_star);
    match (r.d_m, &r.d_m_failure) {
        (Some(d), _) => s += &format!("d_M                   {d:.6e}\n"),
        (None, Some(f)) => s += &format!("d_M                   none ({f})\n"),
        (None, None) => s += "d_M                   none\n",
    }
    s += &format!("energy-balance root   {}\n", fmt_opt(r.d_m_equation_root));
    s += &format!("per-link energy bound {}\n", fmt_opt(r.energy_link_bound));
    s += &format!("C0                    {}\n", fmt_opt(r.c0));
    s += &format!("psi_m                 {}\n", fmt_opt(r.psi_m));
    let f = &r.flocking;
    s += &format!(
        "flocking hypothesis   (i) {}  (ii) {}  applicable {}\n",
        yes(f.holds_i),
        yes(f.holds_ii),
        yes(f.applicable)
    );
    if let Some(apt) = r.apt_holds {
        s += &format!(
            "capacity condition    {} (capacity {})\n",
            yes(apt),
            fmt_opt(f.capacity)
        );
    }
    match &r.corollary {
        Some(c) => {
            let failing = c.pairs.iter().filter(|p| !p.holds).count();
            s += &format!(
                "min-distance test     {} ({} of {} pairs fail)\n",
                yes(c.overall),
                failing,
                c.pairs.len()
            );
        }
        None => s += "min-distance test     not applicable (needs 0 < beta < 1)\n",
    }
    s += &format!("chain delta           {}\n", r.chain_delta);
    s
}

fn cmd_certify(args: &CertifyArgs, out: &mut dyn Write) -> Result<u8, RunError> {
    let run = assemble(&args.source, &args.overrides)?.resolve()?;
    let s = &run.scenario;
    let report = certify(&s.initial, &s.formation, &s.params)?;
    let text = if args.toml {
        toml::to_string(&report).map_err(|e| RunError::Numerical(e.to_string()))?
    } else {
        format!("{} (n = {}, d = {})\n{}", s.name, s.initial.n(), s.initial.dim(), certificate_text(&report))
    };
    write_out(out, &text)?;
    Ok(0)
}

fn cmd_list(out: &mut dyn Write) -> Result<u8, RunError> {
    let mut text = String::new();
    for kind in ScenarioKind::ALL {
        text += &format!("{:<18} {}\n", kind.name(), kind.description());
    }
    write_out(out, &text)?;
    Ok(0)
}

fn cmd_convergence(args: &ConvergenceArgs, out: &mut dyn Write) -> Result<u8, RunError> {
    let cfg = RunConfig {
        scenario: Some(args.scenario.clone()),
        kernel: Some(KernelName::Regular),
        alpha: Some(args.alpha),
        m: Some(0.0),
        t_end: Some(args.t_end),
        ..RunConfig::default()
    };
    let run = cfg.resolve()?;
    let s = &run.scenario;
    debug_assert_eq!(s.params.kernel, Kernel::Regular);
    let study = convergence_study(&s.initial, &s.params, &s.formation, &s.cfg, args.dt, args.levels)?;
    let mut text = format!(
        "{}: RK4, regular kernel, M = 0, t_end = {}, reference dt = {:e}\n{:>12} {:>14} {:>8}\n",
        s.name, args.t_end, study.reference_dt, "dt", "error", "ratio"
    );
    for (k, (dt, err)) in study.dts.iter().zip(&study.errors).enumerate() {
        let ratio = if k == 0 { String::new() } else { format!("{:.3}", study.ratios[k - 1]) };
        text += &format!("{dt:>12.6e} {err:>14.6e} {ratio:>8}\n");
    }
    write_out(out, &text)?;
    Ok(0)
}

/// Run the CLI on `args` (including the program name) and return the exit status.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Certify(a) => cmd_certify(a, out),
        Command::ListScenarios => cmd_list(out),
        Command::Convergence(a) => cmd_convergence(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
