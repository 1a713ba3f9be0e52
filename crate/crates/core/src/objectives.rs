//! Objective functions of the bulk modulus, the smoothing operator that
//! defines the weighted gradient, and the logistic velocity map.

use crate::error::{Error, Result};
use crate::filter::{self, PenaltyConfig, PenaltyTerms};
use crate::model::{Acquisition, DataVolume, FilterField, GridGeometry, ModelGrid};
use crate::wave_sim::{FdConfig, Simulator};

/// An objective value with its gradient in the grid inner product.
#[derive(Debug, Clone)]
pub struct ObjectiveReport {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub predicted: DataVolume,
    /// Inner-problem breakdown of the matched-source objective.
    pub terms: Option<PenaltyTerms>,
    pub filter: Option<FilterField>,
    pub cg_iters: usize,
}

/// `0.5 |F[m] - d|^2` and its gradient.
pub fn fwi_value_grad(m: &ModelGrid, d: &DataVolume, acq: &Acquisition, cfg: &FdConfig) -> Result<ObjectiveReport> {
    let sim = Simulator::new(m, acq, cfg)?;
    check_data(&sim, d, acq)?;
    let (pred, gradient) = sim.forward_and_adjoint(|is, p| p.iter().zip(d.shot(is)).map(|(a, b)| a - b).collect())?;
    let value = 0.5 * pred.minus(d)?.norm_sq();
    Ok(ObjectiveReport { value, gradient, predicted: pred, terms: None, filter: None, cg_iters: 0 })
}

/// Reduced matched-source objective with the variable-projection gradient
/// `DF^T K[u]^T (K[u]F[m] - d)` at the inexact inner solution.
pub fn mswi_value_grad(
    m: &ModelGrid,
    d: &DataVolume,
    acq: &Acquisition,
    cfg: &FdConfig,
    pcfg: &PenaltyConfig,
) -> Result<ObjectiveReport> {
    let sim = Simulator::new(m, acq, cfg)?;
    check_data(&sim, d, acq)?;
    sim.check_schedule()?;
    let pred = sim.forward()?;
    let sol = filter::solve_normal(&pred, d, pcfg)?;
    let terms = filter::penalty_terms(&sol.u, &pred, d, pcfg)?;
    let resid = filter::apply_filter(&sol.u, &pred)?.minus(d)?;
    let back = filter::adjoint_filter_data(&sol.u, &resid)?;
    let gradient = sim.adjoint(&back)?;
    Ok(ObjectiveReport {
        value: terms.total(),
        gradient,
        predicted: pred,
        terms: Some(terms),
        filter: Some(sol.u),
        cg_iters: sol.cg_iters,
    })
}

fn check_data(sim: &Simulator, d: &DataVolume, acq: &Acquisition) -> Result<()> {
    if d.ns != sim.ns() || d.nr != acq.nr() || d.nt() != acq.time.nt {
        return Err(Error::AxisMismatch(format!(
            "data volume {}x{}x{} does not match the acquisition {}x{}x{}",
            d.ns,
            d.nr,
            d.nt(),
            acq.ns(),
            acq.nr(),
            acq.time.nt
        )));
    }
    Ok(())
}

/// Inverse weight `W^{-1}`: moving averages along x and z followed by their
/// transposes, repeated. A length of 1 is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoothingOp {
    /// Moving-average length in samples.
    pub length: usize,
    pub repeats: usize,
}

impl Default for SmoothingOp {
    fn default() -> Self {
        Self { length: 10, repeats: 2 }
    }
}

impl SmoothingOp {
    pub const IDENTITY: SmoothingOp = SmoothingOp { length: 1, repeats: 1 };
    pub const HI_RES: SmoothingOp = SmoothingOp { length: 2, repeats: 2 };

    pub fn is_identity(&self) -> bool {
        self.length <= 1 || self.repeats == 0
    }

    pub fn apply(&self, geom: &GridGeometry, g: &[f64]) -> Vec<f64> {
        let mut out = g.to_vec();
        if self.is_identity() {
            return out;
        }
        let (nx, nz) = (geom.nx, geom.nz);
        let mut line = Vec::new();
        let mut buf = Vec::new();
        for _ in 0..self.repeats {
            for transpose in [false, true] {
                let axes: [bool; 2] = if transpose { [false, true] } else { [true, false] };
                for along_x in axes {
                    let (n, count) = if along_x { (nx, nz) } else { (nz, nx) };
                    for k in 0..count {
                        line.clear();
                        for i in 0..n {
                            let idx = if along_x { i * nz + k } else { k * nz + i };
                            line.push(out[idx]);
                        }
                        buf.resize(n, 0.0);
                        moving_average(&line, self.length, transpose, &mut buf);
                        for i in 0..n {
                            let idx = if along_x { i * nz + k } else { k * nz + i };
                            out[idx] = buf[i];
                        }
                    }
                }
            }
        }
        out
    }
}

/// `(M a)_i = mean(a_{i-off} .. a_{i-off+len-1})` with zero padding, or its
/// transpose.
fn moving_average(a: &[f64], len: usize, transpose: bool, out: &mut [f64]) {
    let n = a.len() as isize;
    let off = (len / 2) as isize;
    let inv = 1.0 / len as f64;
    for (i, o) in out.iter_mut().enumerate() {
        let i = i as isize;
        let (lo, hi) =
            if transpose { (i + off - len as isize + 1, i + off) } else { (i - off, i - off + len as isize - 1) };
        let mut s = 0.0;
        for j in lo.max(0)..=hi.min(n - 1) {
            s += a[j as usize];
        }
        *o = s * inv;
    }
}

/// `c = a + b * gamma / sqrt(1 + gamma^2)`, `kappa = rho * c^2` (GPa).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticParam {
    pub a: f64,
    pub b: f64,
    pub rho_density: f64,
}

impl Default for LogisticParam {
    fn default() -> Self {
        Self { a: 2000.0, b: 900.0, rho_density: 1.0 }
    }
}

const GPA_PER_PA: f64 = 1e-6;

impl LogisticParam {
    pub fn validate(&self, fd: &FdConfig) -> Result<()> {
        if !(self.b > 0.0 && self.rho_density > 0.0) {
            return Err(Error::invalid("logistic half-range and density must be positive"));
        }
        if !(self.a - self.b > fd.vmin && self.a + self.b < fd.vmax) {
            return Err(Error::invalid(format!(
                "logistic range ({}, {}) must lie strictly inside the velocity bounds ({}, {})",
                self.a - self.b,
                self.a + self.b,
                fd.vmin,
                fd.vmax
            )));
        }
        Ok(())
    }

    pub fn velocity(&self, gamma: f64) -> f64 {
        self.a + self.b * gamma / (1.0 + gamma * gamma).sqrt()
    }

    pub fn kappa(&self, gamma: f64) -> f64 {
        self.rho_density * self.velocity(gamma).powi(2) * GPA_PER_PA
    }

    pub fn dkappa_dgamma(&self, gamma: f64) -> f64 {
        2.0 * self.rho_density * self.velocity(gamma) * self.b * (1.0 + gamma * gamma).powf(-1.5) * GPA_PER_PA
    }

    /// Inverse map; fails for moduli outside the open logistic range.
    pub fn gamma_of_kappa(&self, kappa: f64) -> Result<f64> {
        let c = (kappa / (self.rho_density * GPA_PER_PA)).sqrt();
        let s = (c - self.a) / self.b;
        if !(s.abs() < 1.0) {
            return Err(Error::invalid(format!(
                "velocity {c:.1} m/s outside the logistic range ({}, {})",
                self.a - self.b,
                self.a + self.b
            )));
        }
        Ok(s / (1.0 - s * s).sqrt())
    }
}

pub fn gamma_to_kappa(p: &LogisticParam, gamma: &[f64]) -> Vec<f64> {
    gamma.iter().map(|&g| p.kappa(g)).collect()
}

pub fn kappa_to_gamma(p: &LogisticParam, kappa: &[f64]) -> Result<Vec<f64>> {
    kappa.iter().map(|&k| p.gamma_of_kappa(k)).collect()
}

pub fn chainrule_kappa_to_gamma(p: &LogisticParam, gamma: &[f64], gkappa: &[f64]) -> Vec<f64> {
    gamma.iter().zip(gkappa).map(|(&g, &gk)| gk * p.dkappa_dgamma(g)).collect()
}
