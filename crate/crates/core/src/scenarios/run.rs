//! Stage pipeline and artifact output.

use std::path::{Path, PathBuf};

use super::metrics::{self, PeakStats};
use super::noise::calibrate_noise;
use super::{build_model, ModelKind, ObjectiveKind, Parameterization, ScenarioSpec, StageSpec, StageStart};
use crate::error::{Error, Result};
use crate::filter::PenaltyConfig;
use crate::filter::{self, PenaltyTerms};
use crate::model::{Acquisition, DataVolume, FilterField, GridGeometry, ModelGrid, VELOCITY_SQ_PER_GPA_CM3_G};
use crate::objectives::{self, chainrule_kappa_to_gamma, gamma_to_kappa, kappa_to_gamma, LogisticParam};
use crate::optimizer::{self, Evaluation, GridMetric, IterationLog, LbfgsConfig, StopReason};
use crate::sgf;
use crate::wave_sim::FdConfig;
use crate::wave_sim::Simulator;

/// Result of one optimisation stage.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub spec: StageSpec,
    /// Variable actually optimised (`kappa` or `logistic`).
    pub param_used: Parameterization,
    pub stop: String,
    /// False when the stage ended on an evaluation or line-search failure.
    pub clean: bool,
    pub log: IterationLog,
    pub kappa: Vec<f64>,
    /// `0.5 |F[m] - d|^2` at the start and end of the stage.
    pub fwi_start: f64,
    pub fwi_end: f64,
    /// `|F[m] - d| / |d|` at the start and end.
    pub rel_rms_start: f64,
    pub rel_rms_end: f64,
    /// `|F[m] - d|` at the end relative to the homogeneous-model residual.
    pub rel_rms_end_vs_initial: f64,
    pub focus_start: Option<f64>,
    pub focus_end: Option<f64>,
    pub peaks_start: Option<PeakStats>,
    pub terms_start: Option<PenaltyTerms>,
    pub terms_end: Option<PenaltyTerms>,
    /// RMS bulk-modulus error against the true model (GPa).
    pub kappa_rms_error: f64,
}

impl StageReport {
    pub fn iterations(&self) -> usize {
        self.log.iterations()
    }

    pub fn value_start(&self) -> f64 {
        self.log.first_value().unwrap_or(f64::NAN)
    }

    pub fn value_end(&self) -> f64 {
        self.log.last_value().unwrap_or(f64::NAN)
    }

    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut m = vec![
            ("iterations".to_string(), self.iterations() as f64),
            ("objective_start".into(), self.value_start()),
            ("objective_end".into(), self.value_end()),
            ("objective_ratio".into(), self.value_end() / self.value_start()),
            ("fwi_start".into(), self.fwi_start),
            ("fwi_end".into(), self.fwi_end),
            ("rel_rms_start".into(), self.rel_rms_start),
            ("rel_rms_end".into(), self.rel_rms_end),
            ("rel_rms_end_vs_initial".into(), self.rel_rms_end_vs_initial),
            ("kappa_rms_error".into(), self.kappa_rms_error),
            ("logistic".into(), if self.param_used == Parameterization::Logistic { 1.0 } else { 0.0 }),
            ("clean".into(), if self.clean { 1.0 } else { 0.0 }),
        ];
        if let (Some(first), Some(last)) = (self.log.records.first(), self.log.records.last()) {
            m.push(("gnorm_weighted_ratio".into(), last.gnorm_weighted / first.gnorm_weighted));
        }
        let opt = |m: &mut Vec<(String, f64)>, k: &str, v: Option<f64>| {
            if let Some(v) = v {
                m.push((k.to_string(), v));
            }
        };
        opt(&mut m, "focus_start", self.focus_start);
        opt(&mut m, "focus_end", self.focus_end);
        opt(&mut m, "peaks_start_median", self.peaks_start.map(|p| p.median));
        opt(&mut m, "peaks_start_multi_fraction", self.peaks_start.map(|p| p.multi_fraction));
        opt(&mut m, "misfit_end", self.terms_end.map(|t| t.misfit));
        opt(&mut m, "lagpen_end", self.terms_end.map(|t| t.lagpen));
        opt(&mut m, "reg_end", self.terms_end.map(|t| t.reg));
        m
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub name: String,
    pub stages: Vec<StageReport>,
    pub data_norm: f64,
    /// `|F[m_homogeneous] - d|`
    pub initial_residual_norm: f64,
    pub noise_amplitude: Option<f64>,
    pub noise_fraction: Option<f64>,
    pub true_kappa: Vec<f64>,
    pub files: Vec<PathBuf>,
    /// Set when a stage failed and the pipeline stopped early.
    pub halted: Option<String>,
}

impl ScenarioReport {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.spec.name == name)
    }

    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut m = vec![
            ("data_norm".to_string(), self.data_norm),
            ("initial_residual_norm".to_string(), self.initial_residual_norm),
        ];
        if let (Some(a), Some(f)) = (self.noise_amplitude, self.noise_fraction) {
            m.push(("noise_amplitude".into(), a));
            m.push(("noise_fraction".into(), f));
        }
        for s in &self.stages {
            for (k, v) in s.metrics() {
                m.push((format!("{}.{}", s.spec.name, k), v));
            }
        }
        m
    }
}

/// Data, acquisition and solver settings shared by the stages of a run.
pub struct Problem<'a> {
    pub acq: &'a Acquisition,
    pub observed: &'a DataVolume,
    /// Supplies the grid and buoyancy of every trial model.
    pub base: &'a ModelGrid,
    pub fd: &'a FdConfig,
    pub penalty: &'a PenaltyConfig,
    pub lbfgs: &'a LbfgsConfig,
    pub logistic: LogisticParam,
}

/// Prediction, filter and penalty terms at one model.
#[derive(Debug, Clone)]
pub struct StagePoint {
    pub predicted: DataVolume,
    pub filter: Option<FilterField>,
    pub terms: Option<PenaltyTerms>,
}

/// Raw result of [`run_stage`].
#[derive(Debug)]
pub struct StageOutcome {
    /// Variable actually optimised (`kappa` or `logistic`).
    pub param_used: Parameterization,
    pub outcome: optimizer::Outcome,
    pub kappa: Vec<f64>,
    pub start: StagePoint,
    pub end: StagePoint,
}

impl Problem<'_> {
    /// Model with the given bulk modulus, failing with a bound violation
    /// instead of an invalid-field error when a cell leaves the velocity range.
    pub fn bounded_model(&self, kappa: Vec<f64>) -> Result<ModelGrid> {
        let (fd, m0) = (self.fd, self.base);
        for (i, (&k, &b)) in kappa.iter().zip(&m0.beta).enumerate() {
            let c = (k.max(0.0) * b * VELOCITY_SQ_PER_GPA_CM3_G).sqrt();
            if !(c >= fd.vmin && c <= fd.vmax) {
                return Err(Error::VelocityBounds {
                    ix: i / m0.geom.nz,
                    iz: i % m0.geom.nz,
                    velocity: c,
                    vmin: fd.vmin,
                    vmax: fd.vmax,
                });
            }
        }
        m0.with_kappa(kappa)
    }

    pub fn point(&self, objective: ObjectiveKind, m: &ModelGrid) -> Result<StagePoint> {
        let predicted = Simulator::new(m, self.acq, self.fd)?.forward()?;
        match objective {
            ObjectiveKind::Fwi => Ok(StagePoint { predicted, filter: None, terms: None }),
            ObjectiveKind::Mswi => {
                let sol = filter::solve_normal(&predicted, self.observed, self.penalty)?;
                let terms = filter::penalty_terms(&sol.u, &predicted, self.observed, self.penalty)?;
                Ok(StagePoint { predicted, filter: Some(sol.u), terms: Some(terms) })
            }
        }
    }

    fn evaluate(&self, objective: ObjectiveKind, m: &ModelGrid) -> Result<objectives::ObjectiveReport> {
        match objective {
            ObjectiveKind::Fwi => objectives::fwi_value_grad(m, self.observed, self.acq, self.fd),
            ObjectiveKind::Mswi => objectives::mswi_value_grad(m, self.observed, self.acq, self.fd, self.penalty),
        }
    }

    fn optimise(&self, stage: &StageSpec, start: &[f64], logistic: bool) -> Result<StageOutcome> {
        let lp = self.logistic;
        let x0 = if logistic { kappa_to_gamma(&lp, start)? } else { start.to_vec() };
        let to_kappa = |x: &[f64]| if logistic { gamma_to_kappa(&lp, x) } else { x.to_vec() };
        let mut first: Option<StagePoint> = None;
        let mut last: Option<(Vec<f64>, StagePoint)> = None;
        let metric = GridMetric { geom: self.base.geom, smoothing: stage.smoothing };
        let cfg = LbfgsConfig { max_iters: stage.max_iters, ..self.lbfgs.clone() };
        let outcome = optimizer::minimize(
            |x: &[f64]| {
                let m = self.bounded_model(to_kappa(x))?;
                let rep = self.evaluate(stage.objective, &m)?;
                let point = StagePoint { predicted: rep.predicted, filter: rep.filter, terms: rep.terms };
                if first.is_none() {
                    first = Some(point.clone());
                }
                last = Some((x.to_vec(), point));
                let gradient = if logistic { chainrule_kappa_to_gamma(&lp, x, &rep.gradient) } else { rep.gradient };
                Ok(Evaluation { value: rep.value, gradient, cg_iters: rep.cg_iters })
            },
            &x0,
            &metric,
            &cfg,
        )?;
        let kappa = to_kappa(&outcome.x);
        let start = first.expect("the optimiser evaluates the starting point");
        let end = match last {
            Some((x, point)) if x == outcome.x => point,
            _ => self.point(stage.objective, &self.bounded_model(kappa.clone())?)?,
        };
        let param_used = if logistic { Parameterization::Logistic } else { Parameterization::Kappa };
        Ok(StageOutcome { param_used, outcome, kappa, start, end })
    }
}

/// Optimises one stage from the bulk modulus `start`. With
/// [`Parameterization::Auto`] a bound violation restarts the stage in the
/// logistic variable.
pub fn run_stage(problem: &Problem<'_>, stage: &StageSpec, start: &[f64]) -> Result<StageOutcome> {
    let attempt = problem.optimise(stage, start, stage.param == Parameterization::Logistic)?;
    if stage.param == Parameterization::Auto {
        if let StopReason::Evaluation(Error::VelocityBounds { .. }) = &attempt.outcome.stop {
            log::warn!("stage {}: {}; restarting in the logistic variable", stage.name, attempt.outcome.stop);
            return problem.optimise(stage, start, true);
        }
    }
    Ok(attempt)
}

struct Reference<'a> {
    data_norm: f64,
    initial_residual_norm: f64,
    true_kappa: &'a [f64],
    focus_window: f64,
}

fn stage_report(r: &Reference<'_>, observed: &DataVolume, stage: &StageSpec, o: &StageOutcome) -> StageReport {
    let resid_start = metrics::relative_rms(&o.start.predicted, observed, 1.0);
    let resid_end = metrics::relative_rms(&o.end.predicted, observed, 1.0);
    let focus = |p: &StagePoint| p.filter.as_ref().map(|u| filter::focus_fraction(u, r.focus_window));
    StageReport {
        spec: stage.clone(),
        param_used: o.param_used,
        stop: o.outcome.stop.to_string(),
        clean: o.outcome.converged_cleanly(),
        log: o.outcome.log.clone(),
        fwi_start: 0.5 * resid_start * resid_start,
        fwi_end: 0.5 * resid_end * resid_end,
        rel_rms_start: resid_start / r.data_norm,
        rel_rms_end: resid_end / r.data_norm,
        rel_rms_end_vs_initial: resid_end / r.initial_residual_norm,
        focus_start: focus(&o.start),
        focus_end: focus(&o.end),
        peaks_start: o.start.filter.as_ref().map(metrics::central_peak_stats),
        terms_start: o.start.terms,
        terms_end: o.end.terms,
        kappa_rms_error: metrics::field_rms(&o.kappa, r.true_kappa),
        kappa: o.kappa.clone(),
    }
}

fn write_summary(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "value"])?;
    for (k, v) in rows {
        w.write_record([k.as_str(), &format!("{v:e}")])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_geometry(path: &Path, acq: &Acquisition) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "index", "x", "z"])?;
    for (kind, list) in [("source", &acq.sources), ("receiver", &acq.receivers)] {
        for (i, (x, z)) in list.iter().enumerate() {
            w.write_record([kind, &i.to_string(), &x.to_string(), &z.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

struct Files {
    list: Vec<PathBuf>,
}

impl Files {
    fn sgf(&mut self, path: PathBuf, a: &sgf::SgfArray) -> Result<()> {
        sgf::write_sgf(a, &path)?;
        self.list.push(path);
        Ok(())
    }
}

fn write_stage(
    dir: &Path,
    geom: &GridGeometry,
    observed: &DataVolume,
    rep: &StageReport,
    o: &StageOutcome,
    files: &mut Files,
) -> Result<()> {
    let (first, end) = (&o.start, &o.end);
    files.sgf(dir.join("model.sgf"), &sgf::grid_field_to_sgf(&geom, &rep.kappa)?)?;
    files.sgf(dir.join("data.sgf"), &sgf::data_to_sgf(&end.predicted)?)?;
    files.sgf(dir.join("resid.sgf"), &sgf::data_to_sgf(&end.predicted.minus(observed)?)?)?;
    if let Some(u) = &end.filter {
        files.sgf(dir.join("filter.sgf"), &sgf::filter_to_sgf(u)?)?;
    }
    if let Some(u) = &first.filter {
        files.sgf(dir.join("filter_start.sgf"), &sgf::filter_to_sgf(u)?)?;
    }
    let iters = dir.join("iters.csv");
    rep.log.save(&iters)?;
    files.list.push(iters);
    let summary = dir.join("summary.csv");
    write_summary(&summary, &rep.metrics())?;
    files.list.push(summary);
    Ok(())
}

fn write_manifest(path: &Path, report: &ScenarioReport, root: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["entry", "status"])?;
    for s in &report.stages {
        let status = if s.clean { "ok".to_string() } else { format!("failed: {}", s.stop) };
        w.write_record([format!("stage:{}", s.spec.name), status])?;
    }
    if let Some(h) = &report.halted {
        w.write_record(["pipeline".to_string(), format!("halted: {h}")])?;
    }
    for f in &report.files {
        let rel = f.strip_prefix(root).unwrap_or(f);
        w.write_record([rel.display().to_string(), "written".to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Runs every stage of `spec`, writing artifacts under `outdir/<name>/`.
pub fn run_scenario(spec: &ScenarioSpec, outdir: &Path) -> Result<ScenarioReport> {
    spec.validate()?;
    let root = outdir.join(&spec.name);
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let geom = spec.grid()?;
    let acq = spec.build_acquisition()?;
    let truth = build_model(spec.model, geom)?;
    let homogeneous = build_model(ModelKind::Homogeneous, geom)?;
    log::info!(
        "{}: {}x{} grid at {} m, {} shots x {} receivers",
        spec.name,
        geom.nx,
        geom.nz,
        geom.dx,
        acq.ns(),
        acq.nr()
    );
    let clean = Simulator::new(&truth, &acq, &spec.fd)?.forward()?;
    let (observed, noise_amplitude, noise_fraction) = match &spec.noise {
        Some(ns) => {
            let cal = calibrate_noise(&clean, &homogeneous, &acq, &spec.fd, ns)?;
            log::info!("{}: noise amplitude {:.4} GPa, fraction {:.4}", spec.name, cal.amplitude, cal.fraction);
            (cal.noisy, Some(cal.amplitude), Some(cal.fraction))
        }
        None => (clean.clone(), None, None),
    };
    let f0 = Simulator::new(&homogeneous, &acq, &spec.fd)?.forward()?;
    let data_norm = observed.norm();
    let initial_residual_norm = f0.minus(&observed)?.norm();

    let mut files = Files { list: Vec::new() };
    files.sgf(root.join("true_model.sgf"), &sgf::kappa_to_sgf(&truth)?)?;
    files.sgf(root.join("observed.sgf"), &sgf::data_to_sgf(&observed)?)?;
    if spec.noise.is_some() {
        files.sgf(root.join("clean.sgf"), &sgf::data_to_sgf(&clean)?)?;
    }
    files.sgf(root.join("initial_data.sgf"), &sgf::data_to_sgf(&f0)?)?;
    files.sgf(root.join("wavelet.sgf"), &sgf::trace_to_sgf(&acq.time, &acq.wavelet)?)?;
    let geometry = root.join("geometry.csv");
    write_geometry(&geometry, &acq)?;
    files.list.push(geometry);

    let problem = Problem {
        acq: &acq,
        observed: &observed,
        base: &homogeneous,
        fd: &spec.fd,
        penalty: &spec.penalty,
        lbfgs: &spec.lbfgs,
        logistic: spec.logistic,
    };
    let reference = Reference {
        data_norm,
        initial_residual_norm,
        true_kappa: &truth.kappa,
        focus_window: spec.penalty.focus_window,
    };
    let mut report = ScenarioReport {
        name: spec.name.clone(),
        stages: Vec::new(),
        data_norm,
        initial_residual_norm,
        noise_amplitude,
        noise_fraction,
        true_kappa: truth.kappa.clone(),
        files: Vec::new(),
        halted: None,
    };
    let mut previous = homogeneous.kappa.clone();
    for stage in &spec.stages {
        let start = match stage.start {
            StageStart::Homogeneous => homogeneous.kappa.clone(),
            StageStart::Previous => previous.clone(),
        };
        log::info!("{}: stage {} ({}, {} iterations)", spec.name, stage.name, stage.objective, stage.max_iters);
        let outcome = match run_stage(&problem, stage, &start) {
            Ok(o) => o,
            Err(e) => {
                report.halted = Some(format!("stage {}: {e}", stage.name));
                break;
            }
        };
        let rep = stage_report(&reference, &observed, stage, &outcome);
        write_stage(&root.join(&stage.name), &geom, &observed, &rep, &outcome, &mut files)?;
        log::info!(
            "{}: stage {} done after {} iterations ({}), objective {:.4e} -> {:.4e}, relative residual {:.4}",
            spec.name,
            stage.name,
            rep.iterations(),
            rep.stop,
            rep.value_start(),
            rep.value_end(),
            rep.rel_rms_end
        );
        previous = rep.kappa.clone();
        let failed = matches!(outcome.outcome.stop, StopReason::Evaluation(_));
        report.stages.push(rep);
        if failed {
            report.halted = Some(format!("stage {} failed", stage.name));
            break;
        }
    }
    let summary = root.join("summary.csv");
    write_summary(&summary, &report.metrics())?;
    files.list.push(summary);
    report.files = files.list;
    write_manifest(&root.join("manifest.csv"), &report, &root)?;
    if let Some(h) = &report.halted {
        log::warn!("{}: pipeline halted: {h}", spec.name);
    }
    Ok(report)
}
