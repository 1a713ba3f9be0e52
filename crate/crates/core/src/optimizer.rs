//! Limited-memory BFGS in a weighted inner product with backtracking.
//!
//! The inverse weight enters as the initial inverse Hessian of the two-loop
//! recursion, so the first search direction is the smoothed gradient
//! `-W^{-1} g`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::GridGeometry;
use crate::objectives::SmoothingOp;

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tol_rel: f64,
    pub ls_shrink: f64,
    pub ls_c1: f64,
    pub ls_max: usize,
    /// First trial step moves the iterate by at most this fraction of its
    /// largest magnitude (or of 1, whichever is larger).
    pub step0: f64,
    /// Stop once the objective is at or below this value.
    pub value_floor: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 5,
            max_iters: 12,
            grad_tol_rel: 0.01,
            ls_shrink: 0.5,
            ls_c1: 1e-4,
            ls_max: 20,
            step0: 0.05,
            value_floor: 0.0,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ls_shrink > 0.0 && self.ls_shrink < 1.0) {
            return Err(Error::invalid(format!("ls_shrink must lie in (0, 1), got {}", self.ls_shrink)));
        }
        if !(self.ls_c1 > 0.0 && self.ls_c1 < 1.0) {
            return Err(Error::invalid(format!("ls_c1 must lie in (0, 1), got {}", self.ls_c1)));
        }
        if !(self.step0 > 0.0) || !(self.grad_tol_rel >= 0.0) {
            return Err(Error::invalid("step0 must be positive and grad_tol_rel non-negative"));
        }
        Ok(())
    }
}

/// Inner product on the optimisation variable and the inverse weight.
pub trait Metric {
    fn dot(&self, a: &[f64], b: &[f64]) -> f64;
    fn inverse_weight(&self, g: &[f64]) -> Vec<f64>;
}

/// Plain sum inner product and identity weight.
#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl Metric for Euclidean {
    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        linalg::dot(a, b)
    }

    fn inverse_weight(&self, g: &[f64]) -> Vec<f64> {
        g.to_vec()
    }
}

/// Cell-area inner product on a model grid with a smoothing inverse weight.
#[derive(Debug, Clone, Copy)]
pub struct GridMetric {
    pub geom: GridGeometry,
    pub smoothing: SmoothingOp,
}

impl Metric for GridMetric {
    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.geom.dot(a, b)
    }

    fn inverse_weight(&self, g: &[f64]) -> Vec<f64> {
        self.smoothing.apply(&self.geom, g)
    }
}

/// A diagonal inverse weight, used for small analytic problems.
#[derive(Debug, Clone)]
pub struct DiagonalMetric(pub Vec<f64>);

impl Metric for DiagonalMetric {
    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        linalg::dot(a, b)
    }

    fn inverse_weight(&self, g: &[f64]) -> Vec<f64> {
        g.iter().zip(&self.0).map(|(a, w)| a * w).collect()
    }
}

/// Objective value and gradient at a point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub cg_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub value: f64,
    pub gnorm_euclid: f64,
    pub gnorm_weighted: f64,
    pub step: f64,
    pub backtracks: usize,
    pub cg_iters: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationLog {
    pub records: Vec<IterationRecord>,
}

impl IterationLog {
    pub const HEADER: [&'static str; 7] =
        ["iteration", "value", "gnorm_euclid", "gnorm_weighted", "step", "backtracks", "cg_iters"];

    pub fn first_value(&self) -> Option<f64> {
        self.records.first().map(|r| r.value)
    }

    pub fn last_value(&self) -> Option<f64> {
        self.records.last().map(|r| r.value)
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(Self::HEADER)?;
        for r in &self.records {
            wr.write_record([
                r.iteration.to_string(),
                format!("{:e}", r.value),
                format!("{:e}", r.gnorm_euclid),
                format!("{:e}", r.gnorm_weighted),
                format!("{:e}", r.step),
                r.backtracks.to_string(),
                r.cg_iters.to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

#[derive(Debug)]
pub enum StopReason {
    GradientTolerance,
    ValueFloor,
    MaxIterations,
    LineSearch,
    /// The objective failed (bound violation, instability, CG abort).
    Evaluation(Error),
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopReason::GradientTolerance => write!(f, "gradient tolerance reached"),
            StopReason::ValueFloor => write!(f, "objective at its floor"),
            StopReason::MaxIterations => write!(f, "iteration limit reached"),
            StopReason::LineSearch => write!(f, "line search failed"),
            StopReason::Evaluation(e) => write!(f, "objective evaluation failed: {e}"),
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    /// Best iterate found.
    pub x: Vec<f64>,
    pub value: f64,
    pub log: IterationLog,
    pub stop: StopReason,
}

impl Outcome {
    /// True unless the run ended on a failure.
    pub fn converged_cleanly(&self) -> bool {
        matches!(self.stop, StopReason::GradientTolerance | StopReason::MaxIterations)
    }
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn two_loop<M: Metric>(metric: &M, g: &[f64], pairs: &[Pair]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; pairs.len()];
    for (i, p) in pairs.iter().enumerate().rev() {
        alphas[i] = p.rho * metric.dot(&p.s, &q);
        linalg::axpy(-alphas[i], &p.y, &mut q);
    }
    let mut r = metric.inverse_weight(&q);
    if let Some(last) = pairs.last() {
        let wy = metric.inverse_weight(&last.y);
        let gamma = metric.dot(&last.s, &last.y) / metric.dot(&last.y, &wy);
        linalg::scale(gamma, &mut r);
    }
    for (i, p) in pairs.iter().enumerate() {
        let beta = p.rho * metric.dot(&p.y, &r);
        linalg::axpy(alphas[i] - beta, &p.s, &mut r);
    }
    linalg::scale(-1.0, &mut r);
    r
}

/// Minimises `f` from `x0`. An objective failure ends the run with the best
/// iterate so far and [`StopReason::Evaluation`].
pub fn minimize<F, M>(mut f: F, x0: &[f64], metric: &M, cfg: &LbfgsConfig) -> Result<Outcome>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
    M: Metric,
{
    cfg.validate()?;
    let mut x = x0.to_vec();
    let mut cur = f(&x)?;
    if !cur.value.is_finite() {
        return Err(Error::Unstable("objective is not finite at the starting point".into()));
    }
    let norms = |g: &[f64]| {
        let wg = metric.inverse_weight(g);
        (metric.dot(g, g).max(0.0).sqrt(), metric.dot(g, &wg).max(0.0).sqrt())
    };
    let (ge, gw) = norms(&cur.gradient);
    let gw0 = gw;
    let mut log = IterationLog::default();
    log.records.push(IterationRecord {
        iteration: 0,
        value: cur.value,
        gnorm_euclid: ge,
        gnorm_weighted: gw,
        step: 0.0,
        backtracks: 0,
        cg_iters: cur.cg_iters,
    });
    let mut pairs: Vec<Pair> = Vec::new();
    let scale0 = linalg::max_abs(x0).max(1.0);
    let finish = |x: Vec<f64>, value: f64, log: IterationLog, stop: StopReason| Ok(Outcome { x, value, log, stop });
    if cur.value <= cfg.value_floor {
        return finish(x, cur.value, log, StopReason::ValueFloor);
    }
    if gw0 == 0.0 {
        return finish(x, cur.value, log, StopReason::GradientTolerance);
    }
    for iter in 1..=cfg.max_iters {
        let mut dir = two_loop(metric, &cur.gradient, &pairs);
        let mut slope = metric.dot(&cur.gradient, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            dir = two_loop(metric, &cur.gradient, &pairs);
            slope = metric.dot(&cur.gradient, &dir);
        }
        let mut step =
            if pairs.is_empty() { cfg.step0 * scale0 / linalg::max_abs(&dir).max(f64::MIN_POSITIVE) } else { 1.0 };
        let mut backtracks = 0;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let ev = match f(&trial) {
                Ok(ev) => ev,
                Err(e) => return finish(x, cur.value, log, StopReason::Evaluation(e)),
            };
            if ev.value.is_finite() && ev.value <= cur.value + cfg.ls_c1 * step * slope {
                break Some((trial, ev));
            }
            if backtracks == cfg.ls_max {
                break None;
            }
            backtracks += 1;
            step *= cfg.ls_shrink;
        };
        let Some((x_new, ev)) = accepted else {
            return finish(x, cur.value, log, StopReason::LineSearch);
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = ev.gradient.iter().zip(&cur.gradient).map(|(a, b)| a - b).collect();
        let sy = metric.dot(&s, &y);
        let (ns, ny) = (metric.dot(&s, &s).sqrt(), metric.dot(&y, &y).sqrt());
        if cfg.memory > 0 && sy > 1e-12 * ns * ny {
            if pairs.len() == cfg.memory {
                pairs.remove(0);
            }
            pairs.push(Pair { s, y, rho: 1.0 / sy });
        }
        x = x_new;
        cur = ev;
        let (ge, gw) = norms(&cur.gradient);
        log.records.push(IterationRecord {
            iteration: iter,
            value: cur.value,
            gnorm_euclid: ge,
            gnorm_weighted: gw,
            step,
            backtracks,
            cg_iters: cur.cg_iters,
        });
        log::info!("iteration {iter}: value {:.6e}, weighted gradient {:.3e}", cur.value, gw);
        if cur.value <= cfg.value_floor {
            return finish(x, cur.value, log, StopReason::ValueFloor);
        }
        if gw < cfg.grad_tol_rel * gw0 {
            return finish(x, cur.value, log, StopReason::GradientTolerance);
        }
    }
    finish(x, cur.value, log, StopReason::MaxIterations)
}
