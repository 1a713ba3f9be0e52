//! Staggered-grid acoustic simulator: the forward map, its Born
//! linearisation in the bulk modulus, and the adjoint-state transpose.
//!
//! The discrete system is leapfrog in time (order 2) with half-point
//! stencils in space:
//!
//! ```text
//! v^{n+1/2} = eta * (v^{n-1/2} - dt * b * D+ p^n)
//! p^{n+1}   = eta * (p^n - dt * kappa * D- v^{n+1/2}) + dt * W(t_{n+1/2}) * s
//! ```
//!
//! where `eta` is the sponge taper, `W` the running integral of the source
//! pulse and `s` the bilinear injection stencil scaled by `SOURCE_UNIT/(dx*dz)`. The
//! physical grid is padded by `boundary_width` cells on every side, with the
//! model extended by edge replication. Receivers sample `p^n` bilinearly and
//! a natural cubic spline resamples the traces onto the data time axis.
//!
//! Inner products: data `dt * sum`, model `dx*dz * sum`. [`Simulator::adjoint`]
//! is the exact transpose of [`Simulator::born`] with respect to them.

pub mod checkpoint;
pub mod spline;
pub mod stencil;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Acquisition, DataVolume, GridGeometry, ModelGrid, VELOCITY_SQ_PER_GPA_CM3_G};
use checkpoint::Reversible;
use spline::SplineResampler;
use stencil::{Layout, Stencil};

/// Source amplitude unit: a unit pulse is read in metre-millisecond units,
/// giving pressures of order 1e-2 GPa a few kilometres from the source.
pub const SOURCE_UNIT: f64 = VELOCITY_SQ_PER_GPA_CM3_G;

/// Amplitude reflection targeted by the sponge profile.
const SPONGE_REFLECTION: f64 = 0.03;

#[derive(Debug, Clone, PartialEq)]
pub struct FdConfig {
    pub space_order: usize,
    pub time_order: usize,
    pub cfl_safety: f64,
    /// Velocity bounds (m/s) the model must respect.
    pub vmin: f64,
    pub vmax: f64,
    /// Sponge thickness in grid cells, added outside the physical grid.
    pub boundary_width: usize,
    /// Stored time levels for the adjoint; 0 stores everything.
    pub snapshot_budget: usize,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            space_order: 8,
            time_order: 2,
            cfl_safety: 0.9,
            vmin: 1000.0,
            vmax: 3000.0,
            boundary_width: 50,
            snapshot_budget: 0,
        }
    }
}

impl FdConfig {
    pub fn validate(&self) -> Result<()> {
        stencil::coefficients(self.space_order)?;
        if self.time_order != 2 {
            return Err(Error::invalid(format!(
                "only second-order time stepping is available, got {}",
                self.time_order
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Unstable(format!("cfl_safety {} outside (0, 1]", self.cfl_safety)));
        }
        if !(self.vmin > 0.0 && self.vmin < self.vmax) {
            return Err(Error::invalid(format!(
                "velocity bounds must satisfy 0 < vmin < vmax (got {}, {})",
                self.vmin, self.vmax
            )));
        }
        Ok(())
    }

    /// Stable leapfrog step for spacing `h` and this stencil order.
    pub fn stable_dt(&self, dx: f64, dz: f64) -> Result<f64> {
        let csum: f64 = stencil::coefficients(self.space_order)?.iter().map(|c| c.abs()).sum();
        Ok(self.cfl_safety * dx.min(dz) / (self.vmax * csum * 2f64.sqrt()))
    }

    /// Fails with the first cell whose velocity leaves `[vmin, vmax]`.
    pub fn check_velocity(&self, m: &ModelGrid) -> Result<()> {
        for (i, c) in m.velocity().into_iter().enumerate() {
            if !(c >= self.vmin && c <= self.vmax) {
                return Err(Error::VelocityBounds {
                    ix: i / m.geom.nz,
                    iz: i % m.geom.nz,
                    velocity: c,
                    vmin: self.vmin,
                    vmax: self.vmax,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Tap4 {
    idx: [usize; 4],
    w: [f64; 4],
}

impl Tap4 {
    #[inline]
    fn sample(&self, f: &[f64]) -> f64 {
        (0..4).map(|c| self.w[c] * f[self.idx[c]]).sum()
    }

    #[inline]
    fn inject(&self, f: &mut [f64], amp: f64) {
        for c in 0..4 {
            f[self.idx[c]] += self.w[c] * amp;
        }
    }
}

#[derive(Clone)]
struct Fields {
    p: Vec<f64>,
    vx: Vec<f64>,
    vz: Vec<f64>,
}

impl Fields {
    fn new(lay: &Layout) -> Self {
        Self { p: lay.zeros(), vx: lay.zeros(), vz: lay.zeros() }
    }
}

/// A simulator prepared for one model and acquisition.
pub struct Simulator {
    geom: GridGeometry,
    pad: usize,
    lay: Layout,
    stencil: Stencil,
    dt: f64,
    nsteps: usize,
    snapshot_budget: usize,
    kappa: Vec<f64>,
    neg_dt_kappa: Vec<f64>,
    neg_dt_bx: Vec<f64>,
    neg_dt_bz: Vec<f64>,
    bx: Vec<f64>,
    bz: Vec<f64>,
    fill_dt: Vec<f64>,
    eta: Vec<f64>,
    sources: Vec<Tap4>,
    receivers: Vec<Tap4>,
    /// `dt * W(t_{n+1/2}) / (dx*dz)` per step.
    source_amp: Vec<f64>,
    resampler: SplineResampler,
    data_time: crate::model::TimeAxis,
    nr: usize,
}

impl Simulator {
    pub fn new(m: &ModelGrid, acq: &Acquisition, cfg: &FdConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.check_velocity(m)?;
        let geom = m.geom;
        acq.validate_on(&geom, cfg.space_order / 2)?;
        let pad = cfg.boundary_width;
        let lay = Layout::new(geom.nx + 2 * pad, geom.nz + 2 * pad);
        let stencil = Stencil::new(cfg.space_order, geom.dx, geom.dz)?;
        let dt = cfg.stable_dt(geom.dx, geom.dz)?;
        let time = acq.time;
        let span = time.t_last() - time.t0;
        let nsteps = ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;

        let kappa = extend_field(&geom, pad, &lay, &m.kappa);
        let beta = extend_field(&geom, pad, &lay, &m.beta);
        let mut bx = lay.zeros();
        let mut bz = lay.zeros();
        for ix in 0..lay.nx {
            for iz in 0..lay.nz {
                let i = lay.idx(ix, iz);
                let ixp = if ix + 1 < lay.nx { lay.idx(ix + 1, iz) } else { i };
                let izp = if iz + 1 < lay.nz { lay.idx(ix, iz + 1) } else { i };
                bx[i] = 0.5 * (beta[i] + beta[ixp]) * VELOCITY_SQ_PER_GPA_CM3_G;
                bz[i] = 0.5 * (beta[i] + beta[izp]) * VELOCITY_SQ_PER_GPA_CM3_G;
            }
        }
        let neg_dt_kappa = kappa.iter().map(|k| -dt * k).collect();
        let neg_dt_bx = bx.iter().map(|b| -dt * b).collect();
        let neg_dt_bz = bz.iter().map(|b| -dt * b).collect();
        let mut fill_dt = lay.zeros();
        for ix in 0..lay.nx {
            for iz in 0..lay.nz {
                fill_dt[lay.idx(ix, iz)] = dt;
            }
        }
        let eta = sponge(&geom, pad, &lay, cfg.vmax, dt);

        let tap = |&(x, z): &(f64, f64), scale: f64| bilinear(&geom, pad, &lay, x, z, scale);
        let area = geom.cell_area();
        let sources = acq.sources.iter().map(|p| tap(p, SOURCE_UNIT / area)).collect();
        let receivers = acq.receivers.iter().map(|p| tap(p, 1.0)).collect();

        // running integral of the pulse, then onto the half steps
        let mut integ = vec![0.0; time.nt];
        for k in 1..time.nt {
            integ[k] = integ[k - 1] + 0.5 * time.dt * (acq.wavelet[k - 1] + acq.wavelet[k]);
        }
        let half_times: Vec<f64> = (0..nsteps).map(|n| time.t0 + (n as f64 + 0.5) * dt).collect();
        let inside: Vec<f64> = half_times.iter().copied().filter(|&t| t <= time.t_last()).collect();
        let mut source_amp = vec![*integ.last().unwrap(); nsteps];
        if time.nt >= 2 && !inside.is_empty() {
            let sp = SplineResampler::new(time.nt, time.t0, time.dt, &inside)?;
            sp.apply(&integ, &mut source_amp[..inside.len()]);
        }
        source_amp.iter_mut().for_each(|a| *a *= dt);

        let data_times: Vec<f64> = (0..time.nt).map(|k| time.t(k)).collect();
        let resampler = SplineResampler::new(nsteps + 1, time.t0, dt, &data_times)?;

        Ok(Self {
            geom,
            pad,
            lay,
            stencil,
            dt,
            nsteps,
            snapshot_budget: cfg.snapshot_budget,
            kappa,
            neg_dt_kappa,
            neg_dt_bx,
            neg_dt_bz,
            bx,
            bz,
            fill_dt,
            eta,
            sources,
            receivers,
            source_amp,
            resampler,
            data_time: time,
            nr: acq.receivers.len(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nsteps(&self) -> usize {
        self.nsteps
    }

    pub fn ns(&self) -> usize {
        self.sources.len()
    }

    pub fn padded_shape(&self) -> (usize, usize) {
        (self.lay.nx, self.lay.nz)
    }

    fn uses_checkpoints(&self) -> bool {
        self.snapshot_budget > 0 && self.snapshot_budget < self.nsteps
    }

    /// Feasibility of the adjoint storage schedule for this step count.
    pub fn check_schedule(&self) -> Result<()> {
        if self.uses_checkpoints() {
            checkpoint::check_feasible(self.nsteps, self.snapshot_budget)?;
        }
        Ok(())
    }

    // -- time stepping ------------------------------------------------------

    fn velocity_step(&self, f: &mut Fields) {
        self.stencil.grad_update(&self.lay, &f.p, &self.neg_dt_bx, &self.neg_dt_bz, &self.eta, &mut f.vx, &mut f.vz);
    }

    /// One forward step; leaves `D- v^{n+1/2}` in `div`.
    fn step(&self, f: &mut Fields, n: usize, shot: Option<usize>, div: &mut [f64]) {
        self.velocity_step(f);
        self.stencil.divergence(&self.lay, &f.vx, &f.vz, div);
        for ((p, &e), (&k, &d)) in f.p.iter_mut().zip(&self.eta).zip(self.neg_dt_kappa.iter().zip(div.iter())) {
            *p = e * (*p + k * d);
        }
        if let Some(is) = shot {
            self.sources[is].inject(&mut f.p, self.source_amp[n]);
        }
    }

    fn record(&self, p: &[f64], level: usize, rec: &mut [f64]) {
        let nl = self.nsteps + 1;
        for (ir, tap) in self.receivers.iter().enumerate() {
            rec[ir * nl + level] = tap.sample(p);
        }
    }

    /// Resamples receiver traces from the internal step onto data times.
    fn to_data(&self, rec: &[f64]) -> Vec<f64> {
        let nl = self.nsteps + 1;
        let nt = self.data_time.nt;
        let mut out = vec![0.0; self.nr * nt];
        for ir in 0..self.nr {
            self.resampler.apply(&rec[ir * nl..(ir + 1) * nl], &mut out[ir * nt..(ir + 1) * nt]);
        }
        out
    }

    fn check_finite(&self, v: &[f64]) -> Result<()> {
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Unstable("non-finite pressure samples".into()))
        }
    }

    /// Receiver traces of one shot on the data axis (receiver-major).
    pub fn forward_shot(&self, is: usize) -> Result<Vec<f64>> {
        let mut f = Fields::new(&self.lay);
        let mut div = self.lay.zeros();
        let mut rec = vec![0.0; self.nr * (self.nsteps + 1)];
        for n in 0..self.nsteps {
            self.step(&mut f, n, Some(is), &mut div);
            self.record(&f.p, n + 1, &mut rec);
        }
        let out = self.to_data(&rec);
        self.check_finite(&out)?;
        Ok(out)
    }

    pub fn forward(&self) -> Result<DataVolume> {
        let shots: Vec<Vec<f64>> =
            (0..self.ns()).into_par_iter().map(|is| self.forward_shot(is)).collect::<Result<_>>()?;
        DataVolume::from_traces(self.ns(), self.nr, self.data_time, shots.concat())
    }

    /// Padded copy of a physical grid field with edge replication.
    pub fn extend(&self, phys: &[f64]) -> Vec<f64> {
        extend_field(&self.geom, self.pad, &self.lay, phys)
    }

    /// Transpose of [`extend`](Self::extend).
    pub fn fold(&self, padded: &[f64]) -> Vec<f64> {
        let g = &self.geom;
        let mut out = vec![0.0; g.len()];
        for ix in 0..self.lay.nx {
            let jx = ix.saturating_sub(self.pad).min(g.nx - 1);
            for iz in 0..self.lay.nz {
                let jz = iz.saturating_sub(self.pad).min(g.nz - 1);
                out[g.index(jx, jz)] += padded[self.lay.idx(ix, iz)];
            }
        }
        out
    }

    pub fn born_shot(&self, is: usize, dkappa_pad: &[f64]) -> Result<Vec<f64>> {
        let mut bg = Fields::new(&self.lay);
        let mut dp = Fields::new(&self.lay);
        let mut div_bg = self.lay.zeros();
        let mut div_dp = self.lay.zeros();
        let scale: Vec<f64> = dkappa_pad.iter().map(|k| -self.dt * k).collect();
        let mut rec = vec![0.0; self.nr * (self.nsteps + 1)];
        for n in 0..self.nsteps {
            self.step(&mut bg, n, Some(is), &mut div_bg);
            self.velocity_step(&mut dp);
            self.stencil.divergence(&self.lay, &dp.vx, &dp.vz, &mut div_dp);
            for i in 0..dp.p.len() {
                dp.p[i] = self.eta[i] * (dp.p[i] + self.neg_dt_kappa[i] * div_dp[i] + scale[i] * div_bg[i]);
            }
            self.record(&dp.p, n + 1, &mut rec);
        }
        let out = self.to_data(&rec);
        self.check_finite(&out)?;
        Ok(out)
    }

    /// Directional derivative of the forward map along `dkappa` (GPa).
    pub fn born(&self, dkappa: &[f64]) -> Result<DataVolume> {
        if dkappa.len() != self.geom.len() {
            return Err(Error::AxisMismatch(format!(
                "perturbation has {} samples, grid has {}",
                dkappa.len(),
                self.geom.len()
            )));
        }
        let dk = self.extend(dkappa);
        let shots: Vec<Vec<f64>> =
            (0..self.ns()).into_par_iter().map(|is| self.born_shot(is, &dk)).collect::<Result<_>>()?;
        DataVolume::from_traces(self.ns(), self.nr, self.data_time, shots.concat())
    }

    /// Adjoint sources per receiver on the internal axis, `A^T (dt * r)`.
    fn adjoint_sources(&self, resid: &[f64]) -> Vec<f64> {
        let nl = self.nsteps + 1;
        let nt = self.data_time.nt;
        let mut out = vec![0.0; self.nr * nl];
        let mut weighted = vec![0.0; nt];
        for ir in 0..self.nr {
            for (w, r) in weighted.iter_mut().zip(&resid[ir * nt..(ir + 1) * nt]) {
                *w = self.data_time.dt * r;
            }
            self.resampler.apply_transpose(&weighted, &mut out[ir * nl..(ir + 1) * nl]);
        }
        out
    }

    /// Physical-grid gradient of one shot for a residual on the data axis.
    pub fn adjoint_shot(&self, is: usize, resid: &[f64]) -> Result<Vec<f64>> {
        if resid.len() != self.nr * self.data_time.nt {
            return Err(Error::AxisMismatch("residual shot has the wrong number of samples".into()));
        }
        let adj = AdjointState::new(self, is, self.adjoint_sources(resid));
        let grad = if self.uses_checkpoints() { self.reverse_checkpointed(adj)? } else { self.reverse_stored(adj) };
        let mut g = self.fold(&grad);
        let inv_area = 1.0 / self.geom.cell_area();
        g.iter_mut().for_each(|v| *v *= inv_area);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Unstable("non-finite gradient".into()));
        }
        Ok(g)
    }

    fn reverse_stored(&self, mut adj: AdjointState<'_>) -> Vec<f64> {
        let len = self.lay.len();
        let mut f = Fields::new(&self.lay);
        let mut divs = vec![0.0; len * self.nsteps];
        for n in 0..self.nsteps {
            self.step(&mut f, n, Some(adj.shot), &mut divs[n * len..(n + 1) * len]);
        }
        drop(f);
        adj.inject_level(self.nsteps);
        for n in (0..self.nsteps).rev() {
            adj.step_back(&divs[n * len..(n + 1) * len], n);
        }
        adj.grad
    }

    fn reverse_checkpointed(&self, mut adj: AdjointState<'_>) -> Result<Vec<f64>> {
        adj.inject_level(self.nsteps);
        let mut sweep = CheckpointSweep { adj, scratch: Fields::new(&self.lay), div: self.lay.zeros() };
        checkpoint::reverse_sweep(&mut sweep, Fields::new(&self.lay), self.nsteps, self.snapshot_budget)?;
        Ok(sweep.adj.grad)
    }

    /// Gradient-shaped transpose of [`born`](Self::born) for a data residual.
    pub fn adjoint(&self, resid: &DataVolume) -> Result<Vec<f64>> {
        if resid.ns != self.ns() || resid.nr != self.nr || resid.nt() != self.data_time.nt {
            return Err(Error::AxisMismatch("residual does not match the acquisition".into()));
        }
        self.check_schedule()?;
        let per_shot: Vec<Vec<f64>> =
            (0..self.ns()).into_par_iter().map(|is| self.adjoint_shot(is, resid.shot(is))).collect::<Result<_>>()?;
        Ok(sum_in_order(self.geom.len(), &per_shot))
    }

    /// Forward modelling followed by the adjoint shot by shot, with the
    /// residual of each shot produced by `residual(shot, predicted)`.
    pub fn forward_and_adjoint<F>(&self, residual: F) -> Result<(DataVolume, Vec<f64>)>
    where
        F: Fn(usize, &[f64]) -> Vec<f64> + Sync,
    {
        self.check_schedule()?;
        let per_shot: Vec<(Vec<f64>, Vec<f64>)> = (0..self.ns())
            .into_par_iter()
            .map(|is| {
                let pred = self.forward_shot(is)?;
                let r = residual(is, &pred);
                let g = self.adjoint_shot(is, &r)?;
                Ok((pred, g))
            })
            .collect::<Result<_>>()?;
        let grads: Vec<Vec<f64>> = per_shot.iter().map(|(_, g)| g.clone()).collect();
        let traces: Vec<f64> = per_shot.into_iter().flat_map(|(p, _)| p).collect();
        let data = DataVolume::from_traces(self.ns(), self.nr, self.data_time, traces)?;
        Ok((data, sum_in_order(self.geom.len(), &grads)))
    }

    /// Receiver sampling of a padded field (for adjointness checks).
    pub fn sample_receivers(&self, field: &[f64]) -> Vec<f64> {
        self.receivers.iter().map(|t| t.sample(field)).collect()
    }

    /// Transpose of [`sample_receivers`](Self::sample_receivers).
    pub fn spread_receivers(&self, values: &[f64]) -> Vec<f64> {
        let mut f = self.lay.zeros();
        for (t, &v) in self.receivers.iter().zip(values) {
            t.inject(&mut f, v);
        }
        f
    }

    /// Layout index of padded cell `(ix, iz)`, for building test fields.
    pub fn padded_index(&self, ix: usize, iz: usize) -> usize {
        self.lay.idx(ix, iz)
    }

    pub fn padded_len(&self) -> usize {
        self.lay.len()
    }

    /// The internal-to-data time resampler.
    pub fn resampler(&self) -> &SplineResampler {
        &self.resampler
    }
}

fn sum_in_order(n: usize, parts: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for g in parts {
        for (o, v) in out.iter_mut().zip(g) {
            *o += v;
        }
    }
    out
}

struct AdjointState<'a> {
    sim: &'a Simulator,
    shot: usize,
    sources: Vec<f64>,
    lp: Vec<f64>,
    lvx: Vec<f64>,
    lvz: Vec<f64>,
    tmp: Vec<f64>,
    tx: Vec<f64>,
    tz: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a> AdjointState<'a> {
    fn new(sim: &'a Simulator, shot: usize, sources: Vec<f64>) -> Self {
        let z = || sim.lay.zeros();
        Self { sim, shot, sources, lp: z(), lvx: z(), lvz: z(), tmp: z(), tx: z(), tz: z(), grad: z() }
    }

    fn inject_level(&mut self, level: usize) {
        let nl = self.sim.nsteps + 1;
        for (ir, tap) in self.sim.receivers.iter().enumerate() {
            tap.inject(&mut self.lp, self.sources[ir * nl + level]);
        }
    }

    /// Transpose of forward step `n` given its background divergence.
    fn step_back(&mut self, div_bg: &[f64], n: usize) {
        let s = self.sim;
        let dt = s.dt;
        for i in 0..self.lp.len() {
            let mu = s.eta[i] * self.lp[i];
            self.lp[i] = mu;
            self.grad[i] -= dt * mu * div_bg[i];
            self.tmp[i] = s.kappa[i] * mu;
        }
        s.stencil.grad_update(&s.lay, &self.tmp, &s.fill_dt, &s.fill_dt, &s.eta, &mut self.lvx, &mut self.lvz);
        for i in 0..self.lp.len() {
            self.tx[i] = s.bx[i] * self.lvx[i];
            self.tz[i] = s.bz[i] * self.lvz[i];
        }
        s.stencil.divergence(&s.lay, &self.tx, &self.tz, &mut self.tmp);
        for (l, d) in self.lp.iter_mut().zip(&self.tmp) {
            *l += dt * d;
        }
        self.inject_level(n);
    }
}

struct CheckpointSweep<'a> {
    adj: AdjointState<'a>,
    scratch: Fields,
    div: Vec<f64>,
}

impl Reversible for CheckpointSweep<'_> {
    type State = Fields;

    fn advance(&mut self, state: &mut Fields, n: usize) {
        let sim = self.adj.sim;
        sim.step(state, n, Some(self.adj.shot), &mut self.div);
    }

    fn reverse(&mut self, state: &Fields, n: usize) {
        let sim = self.adj.sim;
        self.scratch.p.copy_from_slice(&state.p);
        self.scratch.vx.copy_from_slice(&state.vx);
        self.scratch.vz.copy_from_slice(&state.vz);
        sim.velocity_step(&mut self.scratch);
        sim.stencil.divergence(&sim.lay, &self.scratch.vx, &self.scratch.vz, &mut self.div);
        let div = std::mem::take(&mut self.div);
        self.adj.step_back(&div, n);
        self.div = div;
    }
}

fn extend_field(geom: &GridGeometry, pad: usize, lay: &Layout, phys: &[f64]) -> Vec<f64> {
    let mut out = lay.zeros();
    for ix in 0..lay.nx {
        let jx = ix.saturating_sub(pad).min(geom.nx - 1);
        for iz in 0..lay.nz {
            let jz = iz.saturating_sub(pad).min(geom.nz - 1);
            out[lay.idx(ix, iz)] = phys[geom.index(jx, jz)];
        }
    }
    out
}

/// Per-step multiplicative taper `exp(-d(x) dt)` with a quadratic damping
/// profile across the padding.
fn sponge(geom: &GridGeometry, pad: usize, lay: &Layout, vmax: f64, dt: f64) -> Vec<f64> {
    let mut eta = lay.zeros();
    let profile = |i: usize, n: usize, h: f64| -> f64 {
        if pad == 0 {
            return 0.0;
        }
        let depth = if i < pad {
            (pad - i) as f64
        } else if i >= pad + n {
            (i + 1 - pad - n) as f64
        } else {
            0.0
        };
        let width = pad as f64 * h;
        let dmax = 3.0 * vmax * (1.0 / SPONGE_REFLECTION).ln() / (2.0 * width);
        dmax * (depth / pad as f64).powi(2)
    };
    for ix in 0..lay.nx {
        let dxp = profile(ix, geom.nx, geom.dx);
        for iz in 0..lay.nz {
            let dzp = profile(iz, geom.nz, geom.dz);
            eta[lay.idx(ix, iz)] = (-(dxp + dzp) * dt).exp();
        }
    }
    eta
}

fn bilinear(geom: &GridGeometry, pad: usize, lay: &Layout, x: f64, z: f64, scale: f64) -> Tap4 {
    let fx = (x - geom.ox) / geom.dx;
    let fz = (z - geom.oz) / geom.dz;
    let ix = (fx.floor().max(0.0) as usize).min(geom.nx.saturating_sub(2));
    let iz = (fz.floor().max(0.0) as usize).min(geom.nz.saturating_sub(2));
    let wx = (fx - ix as f64).clamp(0.0, 1.0);
    let wz = (fz - iz as f64).clamp(0.0, 1.0);
    let (px, pz) = (ix + pad, iz + pad);
    Tap4 {
        idx: [lay.idx(px, pz), lay.idx(px + 1, pz), lay.idx(px, pz + 1), lay.idx(px + 1, pz + 1)],
        w: [scale * (1.0 - wx) * (1.0 - wz), scale * wx * (1.0 - wz), scale * (1.0 - wx) * wz, scale * wx * wz],
    }
}

/// `F[m]` for every shot.
pub fn forward(m: &ModelGrid, acq: &Acquisition, cfg: &FdConfig) -> Result<DataVolume> {
    Simulator::new(m, acq, cfg)?.forward()
}

/// `D F[m] dkappa`.
pub fn born(m: &ModelGrid, dkappa: &[f64], acq: &Acquisition, cfg: &FdConfig) -> Result<DataVolume> {
    Simulator::new(m, acq, cfg)?.born(dkappa)
}

/// `D F[m]^T r` as a bulk-modulus field.
pub fn adjoint(m: &ModelGrid, r: &DataVolume, acq: &Acquisition, cfg: &FdConfig) -> Result<Vec<f64>> {
    Simulator::new(m, acq, cfg)?.adjoint(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TimeAxis;
    use crate::wavelet::{make_wavelet, Trapezoid};

    fn setup() -> (ModelGrid, Acquisition, FdConfig) {
        let geom = GridGeometry::new(48, 36, 40.0, 40.0, 0.0, 0.0).unwrap();
        let mut kappa = vec![4.0; geom.len()];
        for ix in 0..geom.nx {
            for iz in 0..geom.nz {
                let r = ((geom.x(ix) - 900.0).powi(2) + (geom.z(iz) - 700.0).powi(2)).sqrt();
                if r < 400.0 {
                    kappa[geom.index(ix, iz)] = 4.0 - 1.2 * 0.5 * (1.0 + (std::f64::consts::PI * r / 400.0).cos());
                }
            }
        }
        let m = ModelGrid::new(geom, kappa, vec![1.0; geom.len()]).unwrap();
        let time = TimeAxis::new(120, 0.008, 0.0).unwrap();
        let w = make_wavelet(Trapezoid::PAPER_BAND, time, 0.3).unwrap();
        let acq = Acquisition::new(
            vec![(300.0, 500.0), (310.0, 910.0)],
            vec![(1500.0, 400.0), (1500.0, 700.0), (1490.0, 1010.0)],
            time,
            w,
        )
        .unwrap();
        let cfg = FdConfig { boundary_width: 12, ..FdConfig::default() };
        (m, acq, cfg)
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn adjoint_matches_born() {
        let (m, acq, cfg) = setup();
        let sim = Simulator::new(&m, &acq, &cfg).unwrap();
        let dk = pseudo(m.geom.len(), 3);
        let bd = sim.born(&dk).unwrap();
        let mut r = bd.zeros_like();
        r.traces = pseudo(r.traces.len(), 5);
        let g = sim.adjoint(&r).unwrap();
        let lhs = bd.dot(&r);
        let rhs = m.geom.dot(&dk, &g);
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs(), "{lhs} vs {rhs}");
    }

    #[test]
    fn checkpointed_gradient_is_identical() {
        let (m, acq, cfg) = setup();
        let full = Simulator::new(&m, &acq, &cfg).unwrap();
        let mut r = DataVolume::zeros(acq.ns(), acq.nr(), acq.time);
        r.traces = pseudo(r.traces.len(), 9);
        let g_full = full.adjoint(&r).unwrap();
        for budget in [7, 40] {
            let ck = Simulator::new(&m, &acq, &FdConfig { snapshot_budget: budget, ..cfg.clone() }).unwrap();
            assert!(ck.uses_checkpoints());
            assert_eq!(ck.adjoint(&r).unwrap(), g_full);
        }
    }

    #[test]
    fn born_matches_central_difference() {
        let (m, acq, cfg) = setup();
        let sim = Simulator::new(&m, &acq, &cfg).unwrap();
        let dk: Vec<f64> = pseudo(m.geom.len(), 11).iter().map(|v| 0.1 * v).collect();
        let bd = sim.born(&dk).unwrap();
        let h = 1e-3;
        let shifted = |s: f64| {
            let k: Vec<f64> = m.kappa.iter().zip(&dk).map(|(a, b)| a + s * b).collect();
            forward(&m.with_kappa(k).unwrap(), &acq, &cfg).unwrap()
        };
        let fd = shifted(h).minus(&shifted(-h)).unwrap().scaled(0.5 / h);
        let err = fd.minus(&bd).unwrap().norm() / bd.norm();
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn velocity_bounds_are_enforced() {
        let (m, acq, cfg) = setup();
        let mut k = m.kappa.clone();
        k[m.geom.index(5, 7)] = 16.0;
        let err = Simulator::new(&m.with_kappa(k).unwrap(), &acq, &cfg).err().unwrap();
        match err {
            Error::VelocityBounds { ix, iz, .. } => assert_eq!((ix, iz), (5, 7)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn infeasible_schedule_is_rejected() {
        let (m, acq, cfg) = setup();
        let sim = Simulator::new(&m, &acq, &FdConfig { snapshot_budget: 1, ..cfg }).unwrap();
        let r = DataVolume::zeros(acq.ns(), acq.nr(), acq.time);
        assert!(matches!(sim.adjoint(&r), Err(Error::Schedule(_))));
    }
}
