//! Self-checks on small built-in problems: adjoint dot tests, finite
//! difference gradient checks and dense oracles for the inner solve.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filter::{self, PenaltyConfig};
use crate::linalg;
use crate::model::{Acquisition, DataVolume, FilterField, GridGeometry, ModelGrid, TimeAxis};
use crate::objectives::{self, SmoothingOp};
use crate::optimizer::{self, DiagonalMetric, Evaluation, LbfgsConfig};
use crate::wave_sim::spline::SplineResampler;
use crate::wave_sim::{FdConfig, Simulator};
use crate::wavelet::{make_wavelet, Trapezoid};

/// Outcome of one check: `value` is compared against `tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// True when the check passes with `value < tolerance` (false: `value > tolerance`).
    pub below: bool,
    pub passed: bool,
}

impl Check {
    fn below(suite: &'static str, name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { suite, name: name.into(), value, tolerance, below: true, passed: value < tolerance }
    }

    fn above(suite: &'static str, name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { suite, name: name.into(), value, tolerance, below: false, passed: value > tolerance }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}/{}: {:.3e} ({} {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.value,
            if self.below { "<" } else { ">" },
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Dots,
    Grads,
    Oracles,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dots" => Ok(Suite::Dots),
            "grads" => Ok(Suite::Grads),
            "oracles" => Ok(Suite::Oracles),
            "all" => Ok(Suite::All),
            _ => Err(Error::invalid(format!("unknown suite {s:?}; expected dots, grads, oracles or all"))),
        }
    }
}

pub fn run(suite: Suite) -> Result<Vec<Check>> {
    Ok(match suite {
        Suite::Dots => dots()?,
        Suite::Grads => grads()?,
        Suite::Oracles => oracles()?,
        Suite::All => {
            let mut all = dots()?;
            all.extend(grads()?);
            all.extend(oracles()?);
            all
        }
    })
}

const DOT_TOL: f64 = 1e-10;

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Raised-cosine low-modulus lens on a background of 4 GPa.
fn lens(geom: GridGeometry, cx: f64, cz: f64, radius: f64, depth: f64) -> Result<ModelGrid> {
    let mut kappa = vec![4.0; geom.len()];
    for ix in 0..geom.nx {
        for iz in 0..geom.nz {
            let r = ((geom.x(ix) - cx).powi(2) + (geom.z(iz) - cz).powi(2)).sqrt() / radius;
            if r < 1.0 {
                kappa[geom.index(ix, iz)] -= depth * 0.5 * (1.0 + (std::f64::consts::PI * r).cos());
            }
        }
    }
    ModelGrid::new(geom, kappa, vec![1.0; geom.len()])
}

/// Small transmission problem on an `nx x nz` grid at 20 m whose time axis
/// spans exactly `nsteps` simulator steps.
pub struct Toy {
    pub model: ModelGrid,
    pub acq: Acquisition,
    pub fd: FdConfig,
}

impl Toy {
    pub fn new(nx: usize, nz: usize, nsteps: usize) -> Result<Self> {
        let h = 20.0;
        let geom = GridGeometry::new(nx, nz, h, h, 0.0, 0.0)?;
        let (w, d) = geom.extent();
        let model = lens(geom, 0.5 * w, 0.5 * d, 0.25 * d, 1.0)?;
        let fd = FdConfig { boundary_width: 10, ..FdConfig::default() };
        let dt_fd = fd.stable_dt(h, h)?;
        let nt = nsteps / 2 + 1;
        let time = TimeAxis::new(nt, 2.0 * dt_fd * (1.0 - 1e-9), 0.0)?;
        let wavelet = make_wavelet(Trapezoid([4.0, 8.0, 20.0, 30.0]), time, 0.1)?;
        let sx = 0.12 * w;
        let rx = 0.88 * w;
        let acq = Acquisition::new(
            vec![(sx, 0.3 * d), (sx + 7.0, 0.62 * d)],
            vec![(rx, 0.2 * d), (rx, 0.5 * d + 3.0), (rx - 4.0, 0.8 * d)],
            time,
            wavelet,
        )?;
        Ok(Self { model, acq, fd })
    }

    pub fn simulator(&self) -> Result<Simulator> {
        Simulator::new(&self.model, &self.acq, &self.fd)
    }

    /// Observed data from a shifted, deeper lens.
    pub fn observed(&self) -> Result<DataVolume> {
        let g = self.model.geom;
        let (w, d) = g.extent();
        let truth = lens(g, 0.52 * w, 0.47 * d, 0.3 * d, 1.4)?;
        Simulator::new(&truth, &self.acq, &self.fd)?.forward()
    }
}

pub fn dots() -> Result<Vec<Check>> {
    let s = "dots";
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let toy = Toy::new(60, 40, 200)?;
    let sim = toy.simulator()?;
    let geom = toy.model.geom;
    let mut out = Vec::new();

    let field = random(&mut rng, sim.padded_len());
    let vals = random(&mut rng, toy.acq.nr());
    let lhs = linalg::dot(&sim.sample_receivers(&field), &vals);
    let rhs = linalg::dot(&field, &sim.spread_receivers(&vals));
    out.push(Check::below(s, "injection_sampling", rel_gap(lhs, rhs), DOT_TOL));

    let dk = random(&mut rng, geom.len());
    let born = sim.born(&dk)?;
    let mut r = born.zeros_like();
    r.traces = random(&mut rng, r.traces.len());
    let g = sim.adjoint(&r)?;
    out.push(Check::below(s, "born_adjoint", rel_gap(born.dot(&r), geom.dot(&dk, &g)), DOT_TOL));

    let time = TimeAxis::new(80, 0.004, 0.0)?;
    let (ns, nr, nu) = (2, 3, 31);
    let data = |rng: &mut ChaCha8Rng| DataVolume::from_traces(ns, nr, time, random(rng, ns * nr * time.nt));
    let p = data(&mut rng)?;
    let r = data(&mut rng)?;
    let mut u = FilterField::zeros(ns, nr, nu, time.dt)?;
    u.traces = random(&mut rng, u.traces.len());
    let lhs = filter::apply_filter(&u, &p)?.dot(&r);
    let rhs = p.dot(&filter::adjoint_filter_data(&u, &r)?);
    out.push(Check::below(s, "filter_data", rel_gap(lhs, rhs), DOT_TOL));
    let rhs = u.dot(&filter::adjoint_filter_u(&p, &r, nu)?);
    out.push(Check::below(s, "filter_lags", rel_gap(lhs, rhs), DOT_TOL));

    let times: Vec<f64> = (0..57).map(|k| 0.013 + k as f64 * 0.0171).collect();
    let sp = SplineResampler::new(90, 0.0, 0.0113, &times)?;
    let y = random(&mut rng, sp.n_in());
    let z = random(&mut rng, sp.n_out());
    let mut ay = vec![0.0; sp.n_out()];
    sp.apply(&y, &mut ay);
    let mut atz = vec![0.0; sp.n_in()];
    sp.apply_transpose(&z, &mut atz);
    out.push(Check::below(s, "spline_resampler", rel_gap(linalg::dot(&ay, &z), linalg::dot(&y, &atz)), DOT_TOL));

    let a = random(&mut rng, geom.len());
    let b = random(&mut rng, geom.len());
    let op = SmoothingOp::default();
    let lhs = geom.dot(&op.apply(&geom, &a), &b);
    let rhs = geom.dot(&a, &op.apply(&geom, &b));
    out.push(Check::below(s, "smoothing", rel_gap(lhs, rhs), DOT_TOL));
    Ok(out)
}

/// Worst relative error of central differences against the gradient along
/// three random smooth directions.
fn fd_gradient_error<F>(m: &ModelGrid, grad: &[f64], value: F, seed: u64) -> Result<f64>
where
    F: Fn(&ModelGrid) -> Result<f64>,
{
    let geom = m.geom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = f64::EPSILON.cbrt() * linalg::max_abs(&m.kappa);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let dir = SmoothingOp::default().apply(&geom, &random(&mut rng, geom.len()));
        let scale = 1.0 / linalg::max_abs(&dir);
        let dir: Vec<f64> = dir.iter().map(|v| v * scale).collect();
        let shifted = |sgn: f64| -> Result<f64> {
            let k: Vec<f64> = m.kappa.iter().zip(&dir).map(|(a, b)| a + sgn * h * b).collect();
            value(&m.with_kappa(k)?)
        };
        let fd = (shifted(1.0)? - shifted(-1.0)?) / (2.0 * h);
        let an = geom.dot(grad, &dir);
        worst = worst.max(rel_gap(fd, an));
    }
    Ok(worst)
}

pub fn grads() -> Result<Vec<Check>> {
    let s = "grads";
    let toy = Toy::new(60, 40, 200)?;
    let d = toy.observed()?;
    let mut out = Vec::new();

    let rep = objectives::fwi_value_grad(&toy.model, &d, &toy.acq, &toy.fd)?;
    let err = fd_gradient_error(
        &toy.model,
        &rep.gradient,
        |m| Ok(objectives::fwi_value_grad(m, &d, &toy.acq, &toy.fd)?.value),
        11,
    )?;
    out.push(Check::below(s, "fwi_gradient", err, 1e-4));

    let pcfg = PenaltyConfig { rho: 1e-10, max_cg_iters: 5000, lag_halfwidth: 0.1, ..PenaltyConfig::default() };
    let rep = objectives::mswi_value_grad(&toy.model, &d, &toy.acq, &toy.fd, &pcfg)?;
    let err = fd_gradient_error(
        &toy.model,
        &rep.gradient,
        |m| Ok(objectives::mswi_value_grad(m, &d, &toy.acq, &toy.fd, &pcfg)?.value),
        12,
    )?;
    out.push(Check::below(s, "mswi_gradient", err, 1e-3));

    out.push(Check::above(s, "born_taylor_slope", born_taylor_slope()?, 1.9));
    Ok(out)
}

/// Observed order of `|F[m + h dm] - F[m] - h DF dm|` in `h`.
pub fn born_taylor_slope() -> Result<f64> {
    let toy = Toy::new(100, 50, 300)?;
    let sim = toy.simulator()?;
    let geom = toy.model.geom;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dk = SmoothingOp::default().apply(&geom, &random(&mut rng, geom.len()));
    let scale = 0.5 / linalg::max_abs(&dk);
    let dk: Vec<f64> = dk.iter().map(|v| v * scale).collect();
    let f0 = sim.forward()?;
    let born = sim.born(&dk)?;
    let remainder = |h: f64| -> Result<f64> {
        let k: Vec<f64> = toy.model.kappa.iter().zip(&dk).map(|(a, b)| a + h * b).collect();
        let fh = Simulator::new(&toy.model.with_kappa(k)?, &toy.acq, &toy.fd)?.forward()?;
        Ok(fh.minus(&f0)?.minus(&born.scaled(h))?.norm())
    };
    let (r1, r2) = (remainder(0.4)?, remainder(0.2)?);
    Ok((r1 / r2).log2())
}

pub fn oracles() -> Result<Vec<Check>> {
    let s = "oracles";
    let mut out = Vec::new();
    out.push(Check::below(s, "inner_dense_solve", inner_dense_error(3)?, 1e-8));
    let lags = alpha_sweep_lag_moments(4)?;
    let worst_rise = lags
        .windows(2)
        .map(|w| w[1] - w[0])
        .map(|v| if v.is_nan() { f64::INFINITY } else { v })
        .fold(f64::NEG_INFINITY, f64::max);
    out.push(Check::below(s, "alpha_sweep_monotone", worst_rise, 0.0));
    out.push(Check::below(s, "cg_energy_monotone", cg_energy_rise(6)?, 1e-14));

    let toy = Toy::new(60, 40, 200)?;
    let sim = toy.simulator()?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut r = DataVolume::zeros(toy.acq.ns(), toy.acq.nr(), toy.acq.time);
    r.traces = random(&mut rng, r.traces.len());
    let full = sim.adjoint(&r)?;
    let ck = Simulator::new(&toy.model, &toy.acq, &FdConfig { snapshot_budget: 20, ..toy.fd.clone() })?;
    let diff = full.iter().zip(ck.adjoint(&r)?).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(Check::below(s, "checkpoint_vs_store_all", diff / linalg::max_abs(&full), 1e-12));

    out.push(Check::below(s, "lbfgs_newton_step", lbfgs_newton_error()?, 1e-10));
    Ok(out)
}

/// Single-trace normal equation: CG to a tight tolerance against a dense
/// LU solve of the matrix assembled column by column.
pub fn inner_dense_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nt, nu) = (32, 9);
    let time = TimeAxis::new(nt, 0.01, 0.0)?;
    let p = DataVolume::from_traces(1, 1, time, random(&mut rng, nt))?;
    let d = DataVolume::from_traces(1, 1, time, random(&mut rng, nt))?;
    let cfg = PenaltyConfig {
        alpha: 2.0,
        sigma: 0.05,
        rho: 1e-14,
        max_cg_iters: 200,
        lag_halfwidth: (nu / 2) as f64 * time.dt,
        ..PenaltyConfig::default()
    };
    let sol = filter::solve_normal(&p, &d, &cfg)?;
    let mut a = vec![0.0; nu * nu];
    for k in 0..nu {
        let mut e = FilterField::zeros(1, 1, nu, time.dt)?;
        e.traces[k] = 1.0;
        let col = filter::normal_operator(&p, &e, cfg.alpha, cfg.sigma)?;
        for j in 0..nu {
            a[j * nu + k] = col.traces[j];
        }
    }
    let b = filter::adjoint_filter_u(&p, &d, nu)?;
    let exact = linalg::lu_solve(a, b.traces).ok_or_else(|| Error::invalid("singular normal matrix"))?;
    Ok(sol.u.traces.iter().zip(&exact).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// `|t u|` over a sweep of increasing `alpha` on a time-shifted trace pair.
pub fn alpha_sweep_lag_moments(seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let time = TimeAxis::new(120, 0.01, 0.0)?;
    let w = make_wavelet(Trapezoid([2.0, 4.0, 12.0, 18.0]), time, 0.5)?;
    let shift = 9;
    let mut p = vec![0.0; 3 * time.nt];
    let mut d = vec![0.0; 3 * time.nt];
    for tr in 0..3 {
        let amp = 1.0 + 0.2 * rng.gen_range(-1.0..1.0);
        for i in 0..time.nt {
            p[tr * time.nt + i] = w[i];
            if i >= shift + tr {
                d[tr * time.nt + i] = amp * w[i - shift - tr];
            }
        }
    }
    let p = DataVolume::from_traces(1, 3, time, p)?;
    let d = DataVolume::from_traces(1, 3, time, d)?;
    let cfg = PenaltyConfig { rho: 1e-12, max_cg_iters: 2000, lag_halfwidth: 0.3, ..PenaltyConfig::default() };
    let (table, _) = filter::choose_alpha(&p, &d, &cfg, &filter::alpha_sweep(-4, 1), 0.05)?;
    Ok(table.iter().map(|t| t.lag_moment).collect())
}

/// Largest increase of the CG quadratic model between iterations.
pub fn cg_energy_rise(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let time = TimeAxis::new(64, 0.01, 0.0)?;
    let p = DataVolume::from_traces(2, 2, time, random(&mut rng, 4 * time.nt))?;
    let d = DataVolume::from_traces(2, 2, time, random(&mut rng, 4 * time.nt))?;
    let cfg = PenaltyConfig { alpha: 0.5, sigma: 0.01, rho: 1e-10, lag_halfwidth: 0.1, ..PenaltyConfig::default() };
    let sol = filter::solve_normal(&p, &d, &cfg)?;
    let scale = sol.energy.iter().fold(0.0f64, |m, e| m.max(e.abs())).max(f64::MIN_POSITIVE);
    Ok(sol.energy.windows(2).map(|w| (w[1] - w[0]) / scale).fold(f64::NEG_INFINITY, f64::max))
}

/// `0.5 x^T A x` with `A = diag(1, 100)` and `W^{-1} = A^{-1}`: one line
/// search lands on the minimiser.
pub fn lbfgs_newton_error() -> Result<f64> {
    let a = [1.0, 100.0];
    let f = |x: &[f64]| {
        let gradient: Vec<f64> = x.iter().zip(&a).map(|(x, a)| a * x).collect();
        Ok(Evaluation { value: 0.5 * linalg::dot(x, &gradient), gradient, cg_iters: 0 })
    };
    let metric = DiagonalMetric(a.iter().map(|v| 1.0 / v).collect());
    let cfg = LbfgsConfig { max_iters: 1, step0: 1.0, grad_tol_rel: 0.0, ..LbfgsConfig::default() };
    let x0 = [1.0, 1.0];
    let outcome = optimizer::minimize(f, &x0, &metric, &cfg)?;
    Ok(linalg::norm(&outcome.x))
}
