//! `mswi`: simulation, inversion, filter estimation, scenario pipelines and
//! self-checks for 2D acoustic transmission experiments.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use mswi::filter::{self, AlphaTrial};
use mswi::optimizer::StopReason;
use mswi::scenarios::{self, ModelKind, ObjectiveKind, Problem, StageSpec, StageStart};
use mswi::{sgf, verify, DataVolume, Simulator};

use config::{schema_help, RunConfig};

/// Exit codes: 0 success, 1 verification failure, 2 usage or configuration
/// error, 3 numerical failure.
#[derive(Debug)]
enum Failure {
    Verify(String),
    Usage(anyhow::Error),
    Numeric(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verify(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn usage(self) -> CliResult<T>;
    /// Numerical library failures exit with 3, everything else with 2.
    fn runtime(self) -> CliResult<T>;
}

impl<T> Classify<T> for anyhow::Result<T> {
    fn usage(self) -> CliResult<T> {
        self.map_err(Failure::Usage)
    }

    fn runtime(self) -> CliResult<T> {
        self.map_err(|e| match e.downcast_ref::<mswi::Error>() {
            Some(m) if m.is_numerical() => Failure::Numeric(e),
            _ => Failure::Usage(e),
        })
    }
}

impl<T> Classify<T> for mswi::Result<T> {
    fn usage(self) -> CliResult<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> CliResult<T> {
        self.map_err(|e| if e.is_numerical() { Failure::Numeric(e.into()) } else { Failure::Usage(e.into()) })
    }
}

#[derive(Parser)]
#[command(name = "mswi", version, about, after_long_help = schema_help())]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// INI configuration file (keys listed in `mswi --help`).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Grid resolution factor, overriding `[grid] scale`.
    #[arg(long)]
    scale: Option<f64>,
}

impl Common {
    fn load(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).usage()?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.scale {
            cfg.set("grid", "scale", s.to_string()).usage()?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate pressure gathers for a bulk-modulus model.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Bulk-modulus model (SGF, GPa).
        #[arg(long, short)]
        model: PathBuf,
        /// Output gather (SGF).
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Invert data with FWI or MSWI from a starting model.
    Invert {
        #[command(flatten)]
        common: Common,
        /// Observed gather (SGF); its time axis overrides `[acquisition]`.
        #[arg(long, short)]
        data: PathBuf,
        /// Starting bulk-modulus model (SGF).
        #[arg(long, short)]
        model: PathBuf,
        /// Objective: fwi or mswi.
        #[arg(long, default_value = "fwi")]
        mode: String,
        /// Output directory (default: $MSWI_OUT/invert).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Estimate adaptive filters matching predicted to observed data.
    Filter {
        #[command(flatten)]
        common: Common,
        /// Observed gather (SGF).
        #[arg(long, short)]
        data: PathBuf,
        /// Predicted gather (SGF).
        #[arg(long, short)]
        predicted: PathBuf,
        /// Output filter (SGF).
        #[arg(long, short)]
        out: PathBuf,
        /// Also sweep alpha = 10^k for k in LO:HI and report the selection.
        #[arg(long, value_name = "LO:HI", allow_hyphen_values = true)]
        sweep: Option<String>,
    },
    /// Run a built-in scenario, a scenario config file, or `list`.
    Scenario {
        #[command(flatten)]
        common: Common,
        /// Built-in name, path to an INI file with a [scenario] section, or `list`.
        target: String,
        /// Output root (default: $MSWI_OUT, then ./out).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the self-check suites: dots, grads, oracles or all.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Write the source pulse of the configuration.
    Wavelet {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Write a built-in bulk-modulus model: homogeneous, circular, oblate or camembert.
    Model {
        #[command(flatten)]
        common: Common,
        kind: String,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn output_root() -> PathBuf {
    std::env::var_os("MSWI_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

fn read_model(path: &Path) -> CliResult<mswi::ModelGrid> {
    let a = sgf::read_sgf(path).usage()?;
    sgf::model_from_sgf(&a, scenarios::BUOYANCY).with_context(|| format!("model {}", path.display())).usage()
}

fn read_data(path: &Path) -> CliResult<DataVolume> {
    let a = sgf::read_sgf(path).usage()?;
    sgf::data_from_sgf(&a).with_context(|| format!("gather {}", path.display())).usage()
}

fn simulate(common: &Common, model: &Path, out: &Path) -> CliResult {
    let cfg = common.load()?;
    let m = read_model(model)?;
    let acq = cfg.acquisition(None).usage()?;
    let fd = cfg.fd().usage()?;
    let t = Instant::now();
    let sim = Simulator::new(&m, &acq, &fd).runtime()?;
    let d = sim.forward().runtime()?;
    sgf::write_sgf(&sgf::data_to_sgf(&d).usage()?, out).usage()?;
    println!("grid {} x {} at {} m x {} m", m.geom.nx, m.geom.nz, m.geom.dx, m.geom.dz);
    println!("dt_fd {:.6e} s, {} steps, {} shots x {} receivers", sim.dt(), sim.nsteps(), acq.ns(), acq.nr());
    println!("wrote {} in {:.1} s", out.display(), t.elapsed().as_secs_f64());
    Ok(())
}

fn invert(common: &Common, data: &Path, model: &Path, mode: &str, out: Option<PathBuf>) -> CliResult {
    let objective: ObjectiveKind = mode.parse::<ObjectiveKind>().usage()?;
    let cfg = common.load()?;
    let d = read_data(data)?;
    let m0 = read_model(model)?;
    let acq = cfg.acquisition(Some(d.time)).usage()?;
    if d.ns != acq.ns() || d.nr != acq.nr() {
        return Err(Failure::Usage(anyhow!(
            "gather has {} shots x {} receivers but the acquisition has {} x {}",
            d.ns,
            d.nr,
            acq.ns(),
            acq.nr()
        )));
    }
    let (fd, penalty, mut lbfgs, logistic) =
        (cfg.fd().usage()?, cfg.penalty().usage()?, cfg.lbfgs().usage()?, cfg.logistic().usage()?);
    if objective == ObjectiveKind::Fwi {
        // SGF samples are single precision; residuals below their rounding are not resolved.
        lbfgs.value_floor = 0.5 * (f64::from(f32::EPSILON) * d.norm()).powi(2);
    }
    let mut stage = StageSpec::new(objective.name(), objective, StageStart::Homogeneous, 1, lbfgs.max_iters);
    stage.smoothing = cfg.smoothing().usage()?;
    stage.param = cfg.parameterization().usage()?;
    if stage.param != scenarios::Parameterization::Kappa {
        logistic.validate(&fd).usage()?;
    }
    let problem = Problem { acq: &acq, observed: &d, base: &m0, fd: &fd, penalty: &penalty, lbfgs: &lbfgs, logistic };
    let o = scenarios::run_stage(&problem, &stage, &m0.kappa).map_err(|e| match e {
        mswi::Error::VelocityBounds { .. } => Failure::Numeric(anyhow!("{e}{BOUNDS_HINT}")),
        e => Err::<(), _>(e).runtime().unwrap_err(),
    })?;
    let out = out.unwrap_or_else(|| output_root().join("invert"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display())).usage()?;
    let m = m0.with_kappa(o.kappa.clone()).usage()?;
    sgf::write_sgf(&sgf::kappa_to_sgf(&m).usage()?, out.join("model.sgf")).usage()?;
    sgf::write_sgf(&sgf::data_to_sgf(&o.end.predicted).usage()?, out.join("data.sgf")).usage()?;
    o.outcome.log.save(out.join("iters.csv")).usage()?;
    if let (Some(u), Some(t)) = (&o.end.filter, &o.end.terms) {
        sgf::write_sgf(&sgf::filter_to_sgf(u).usage()?, out.join("filter.sgf")).usage()?;
        let text =
            format!("term,value\nmisfit,{:e}\nlagpen,{:e}\nreg,{:e}\nfocus,{:e}\n", t.misfit, t.lagpen, t.reg, t.focus);
        std::fs::write(out.join("penalty.csv"), text).context("writing penalty.csv").usage()?;
    }
    let log = &o.outcome.log;
    let (j0, j1) = (log.first_value().unwrap_or(0.0), log.last_value().unwrap_or(0.0));
    let (g0, g1) =
        (log.records.first().map_or(0.0, |r| r.gnorm_weighted), log.records.last().map_or(0.0, |r| r.gnorm_weighted));
    println!("{} iterations ({}) in the {} variable", log.iterations(), o.outcome.stop, o.param_used);
    println!("objective {j0:.6e} -> {j1:.6e} (ratio {:.4e})", if j0 > 0.0 { j1 / j0 } else { 0.0 });
    println!("weighted gradient {g0:.4e} -> {g1:.4e} (ratio {:.4e})", if g0 > 0.0 { g1 / g0 } else { 0.0 });
    println!("wrote {}", out.display());
    if let StopReason::Evaluation(e) = &o.outcome.stop {
        let hint = if matches!(e, mswi::Error::VelocityBounds { .. }) { BOUNDS_HINT } else { "" };
        return Err(Failure::Numeric(anyhow!("inversion stopped early: {e}{hint}")));
    }
    Ok(())
}

const BOUNDS_HINT: &str = "; set `parameterization = logistic` in [lbfgs] to keep velocities in bounds";

fn parse_sweep(s: &str) -> CliResult<(i32, i32)> {
    let bad = || Failure::Usage(anyhow!("sweep must read LO:HI with integer exponents, got {s:?}"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let (lo, hi): (i32, i32) = (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn print_sweep(table: &[AlphaTrial], best: Option<f64>) {
    println!("{:>10} {:>12} {:>12} {:>8} {:>6}", "alpha", "rel_error", "|t u|", "focus", "cg");
    for t in table {
        if t.diverged {
            println!("{:>10.1e} {:>12}", t.alpha, "CG diverged");
        } else {
            println!(
                "{:>10.1e} {:>12.4e} {:>12.4e} {:>8.4} {:>6}",
                t.alpha, t.rel_error, t.lag_moment, t.focus, t.cg_iters
            );
        }
    }
    match best {
        Some(a) => println!("selected alpha {a:.1e} (largest with relative error below 0.05)"),
        None => println!("no alpha meets the 0.05 relative error target"),
    }
}

fn estimate_filter(common: &Common, data: &Path, predicted: &Path, out: &Path, sweep: Option<&str>) -> CliResult {
    let cfg = common.load()?;
    let penalty = cfg.penalty().usage()?;
    let d = read_data(data)?;
    let p = read_data(predicted)?;
    p.check_same_shape(&d, "filter estimation").usage()?;
    if let Some(s) = sweep {
        let (lo, hi) = parse_sweep(s)?;
        let (table, best) = filter::choose_alpha(&p, &d, &penalty, &filter::alpha_sweep(lo, hi), 0.05).runtime()?;
        print_sweep(&table, best);
    }
    let sol = filter::solve_normal(&p, &d, &penalty).runtime()?;
    let t = filter::penalty_terms(&sol.u, &p, &d, &penalty).runtime()?;
    sgf::write_sgf(&sgf::filter_to_sgf(&sol.u).usage()?, out).usage()?;
    println!("cg iterations {}, relative normal residual {:.3e}", sol.cg_iters, sol.rel_residual);
    println!("misfit {:.6e}, lagpen {:.6e}, reg {:.6e}, focus {:.4}", t.misfit, t.lagpen, t.reg, t.focus);
    println!("wrote {}", out.display());
    Ok(())
}

fn scenario(common: &Common, target: &str, out: Option<PathBuf>) -> CliResult {
    if target == "list" {
        for n in scenarios::builtin_names() {
            let s = scenarios::builtin(n, 1.0).usage()?;
            let stages: Vec<String> = s.stages.iter().map(|s| s.to_string()).collect();
            println!("{n}: {} model, {} acquisition, stages {}", s.model, s.acquisition, stages.join(", "));
        }
        return Ok(());
    }
    let as_file = Path::new(target);
    let (cfg, builtin) = if scenarios::builtin_names().contains(&target) {
        (common.load()?, Some(target))
    } else if as_file.is_file() {
        if common.config.is_some() {
            return Err(Failure::Usage(anyhow!("give either a scenario file or --config, not both")));
        }
        let mut cfg = RunConfig::load(as_file).usage()?;
        if let Some(s) = common.scale {
            cfg.set("grid", "scale", s.to_string()).usage()?;
        }
        (cfg, None)
    } else {
        return Err(Failure::Usage(anyhow!(
            "{target:?} is neither a built-in scenario ({}) nor a file",
            scenarios::builtin_names().join(", ")
        )));
    };
    let spec = cfg.scenario(builtin).usage()?;
    let root = out.unwrap_or_else(output_root);
    let t = Instant::now();
    let report = scenarios::run_scenario(&spec, &root).runtime()?;
    for (k, v) in report.metrics() {
        println!("{k} = {v:.6e}");
    }
    println!("wrote {} in {:.0} s", root.join(&spec.name).display(), t.elapsed().as_secs_f64());
    if let Some(h) = report.halted {
        return Err(Failure::Numeric(anyhow!("pipeline halted: {h}")));
    }
    Ok(())
}

fn run_verify(suite: &str) -> CliResult {
    let suite: verify::Suite = suite.parse::<verify::Suite>().usage()?;
    let checks = verify::run(suite).runtime()?;
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Verify(format!("{failed} of {} checks failed", checks.len())));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}

fn wavelet(common: &Common, out: &Path) -> CliResult {
    let cfg = common.load()?;
    let time = cfg.time().usage()?;
    let (band, center) = cfg.band().usage()?;
    let w = mswi::wavelet::make_wavelet(band, time, center).usage()?;
    sgf::write_sgf(&sgf::trace_to_sgf(&time, &w).usage()?, out).usage()?;
    let peak = mswi::wavelet::envelope_peak_time(&w, &time).unwrap_or(f64::NAN);
    println!("{} samples at {} s, envelope peak at {peak:.4} s", time.nt, time.dt);
    println!("wrote {}", out.display());
    Ok(())
}

fn model(common: &Common, kind: &str, out: &Path) -> CliResult {
    let kind: ModelKind = kind.parse::<ModelKind>().usage()?;
    let cfg = common.load()?;
    let geom = scenarios::paper_grid(cfg.scale().usage()?).usage()?;
    let m = scenarios::build_model(kind, geom).usage()?;
    sgf::write_sgf(&sgf::kappa_to_sgf(&m).usage()?, out).usage()?;
    println!("{kind}: {} x {} at {} m, wrote {}", geom.nx, geom.nz, geom.dx, out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage(anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Usage(e.into()))?;
    }
    match &cli.command {
        Command::Simulate { common, model, out } => simulate(common, model, out),
        Command::Invert { common, data, model, mode, out } => invert(common, data, model, mode, out.clone()),
        Command::Filter { common, data, predicted, out, sweep } => {
            estimate_filter(common, data, predicted, out, sweep.as_deref())
        }
        Command::Scenario { common, target, out } => scenario(common, target, out.clone()),
        Command::Verify { suite } => run_verify(suite),
        Command::Wavelet { common, out } => wavelet(common, out),
        Command::Model { common, kind, out } => model(common, kind, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Verify(msg) => eprintln!("error: {msg}"),
                Failure::Usage(e) | Failure::Numeric(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}
