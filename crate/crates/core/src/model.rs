//! Model grids, acquisition geometry, trace volumes and filter fields.
//!
//! Grid fields are stored with z as the fast axis: sample `(ix, iz)` lives at
//! `ix * nz + iz`. Trace volumes store time fastest, then receiver, then
//! source. All norms carry their quadrature weight (`dt`, `du` or `dx*dz`).

use crate::error::{Error, Result};

/// Conversion factor from GPa·cm³/g to m²/s².
pub const VELOCITY_SQ_PER_GPA_CM3_G: f64 = 1.0e6;

/// Geometry of a regular 2D grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub dz: f64,
    pub ox: f64,
    pub oz: f64,
}

impl GridGeometry {
    pub fn new(nx: usize, nz: usize, dx: f64, dz: f64, ox: f64, oz: f64) -> Result<Self> {
        if nx == 0 || nz == 0 {
            return Err(Error::invalid(format!("grid must have nx, nz >= 1 (got {nx}x{nz})")));
        }
        if !(dx > 0.0 && dz > 0.0) {
            return Err(Error::invalid(format!("grid spacing must be positive (dx={dx}, dz={dz})")));
        }
        Ok(Self { nx, nz, dx, dz, ox, oz })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iz: usize) -> usize {
        ix * self.nz + iz
    }

    #[inline]
    pub fn x(&self, ix: usize) -> f64 {
        self.ox + ix as f64 * self.dx
    }

    #[inline]
    pub fn z(&self, iz: usize) -> f64 {
        self.oz + iz as f64 * self.dz
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dz
    }

    /// Quadrature inner product `dx*dz * sum(a*b)`.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_area() * crate::linalg::dot(a, b)
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.dot(a, a).sqrt()
    }

    /// Largest x and z coordinates covered by the grid.
    pub fn extent(&self) -> (f64, f64) {
        (self.x(self.nx - 1), self.z(self.nz - 1))
    }
}

/// Bulk modulus (GPa) and buoyancy (cm³/g) on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrid {
    pub geom: GridGeometry,
    pub kappa: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ModelGrid {
    pub fn new(geom: GridGeometry, kappa: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let n = geom.len();
        if kappa.len() != n || beta.len() != n {
            return Err(Error::invalid(format!(
                "model fields must have {n} samples (kappa {}, beta {})",
                kappa.len(),
                beta.len()
            )));
        }
        for (name, field) in [("kappa", &kappa), ("beta", &beta)] {
            if let Some(i) = field.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
                let (ix, iz) = (i / geom.nz, i % geom.nz);
                return Err(Error::invalid(format!(
                    "{name} must be strictly positive; cell ({ix}, {iz}) holds {}",
                    field[i]
                )));
            }
        }
        Ok(Self { geom, kappa, beta })
    }

    pub fn homogeneous(geom: GridGeometry, kappa: f64, beta: f64) -> Result<Self> {
        Self::new(geom, vec![kappa; geom.len()], vec![beta; geom.len()])
    }

    /// Same geometry and buoyancy, new bulk modulus.
    pub fn with_kappa(&self, kappa: Vec<f64>) -> Result<Self> {
        Self::new(self.geom, kappa, self.beta.clone())
    }

    /// Wave speed in m/s for every cell.
    pub fn velocity(&self) -> Vec<f64> {
        self.kappa.iter().zip(&self.beta).map(|(k, b)| (k * b * VELOCITY_SQ_PER_GPA_CM3_G).sqrt()).collect()
    }
}

/// Source and receiver positions, recording time axis and source pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub sources: Vec<(f64, f64)>,
    pub receivers: Vec<(f64, f64)>,
    pub time: TimeAxis,
    pub wavelet: Vec<f64>,
}

/// Uniform time sampling `t0 + k*dt`, `k < nt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAxis {
    pub nt: usize,
    pub dt: f64,
    pub t0: f64,
}

impl TimeAxis {
    pub fn new(nt: usize, dt: f64, t0: f64) -> Result<Self> {
        if nt == 0 || !(dt > 0.0) {
            return Err(Error::invalid(format!("time axis needs nt >= 1 and dt > 0 (nt={nt}, dt={dt})")));
        }
        Ok(Self { nt, dt, t0 })
    }

    #[inline]
    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_last(&self) -> f64 {
        self.t(self.nt - 1)
    }
}

impl Acquisition {
    pub fn new(
        sources: Vec<(f64, f64)>,
        receivers: Vec<(f64, f64)>,
        time: TimeAxis,
        wavelet: Vec<f64>,
    ) -> Result<Self> {
        if sources.is_empty() || receivers.is_empty() {
            return Err(Error::invalid("acquisition needs at least one source and one receiver"));
        }
        if wavelet.len() != time.nt {
            return Err(Error::invalid(format!("wavelet has {} samples, time axis has {}", wavelet.len(), time.nt)));
        }
        Ok(Self { sources, receivers, time, wavelet })
    }

    pub fn ns(&self) -> usize {
        self.sources.len()
    }

    pub fn nr(&self) -> usize {
        self.receivers.len()
    }

    /// Checks that every position lies at least `margin` cells inside the grid.
    pub fn validate_on(&self, geom: &GridGeometry, margin: usize) -> Result<()> {
        let m = margin as f64;
        let (xmax, zmax) = geom.extent();
        let inside = |&(x, z): &(f64, f64)| {
            x >= geom.ox + m * geom.dx - 1e-9
                && x <= xmax - m * geom.dx + 1e-9
                && z >= geom.oz + m * geom.dz - 1e-9
                && z <= zmax - m * geom.dz + 1e-9
        };
        for (kind, list) in [("source", &self.sources), ("receiver", &self.receivers)] {
            if let Some((i, p)) = list.iter().enumerate().find(|(_, p)| !inside(p)) {
                return Err(Error::invalid(format!(
                    "{kind} {i} at ({}, {}) is not at least {margin} cells inside the grid",
                    p.0, p.1
                )));
            }
        }
        Ok(())
    }

    /// Same geometry with a different source pulse.
    pub fn with_wavelet(&self, wavelet: Vec<f64>) -> Result<Self> {
        Self::new(self.sources.clone(), self.receivers.clone(), self.time, wavelet)
    }

    /// Only the listed shots.
    pub fn subset_sources(&self, keep: &[usize]) -> Self {
        Self { sources: keep.iter().map(|&i| self.sources[i]).collect(), ..self.clone() }
    }
}

/// Pressure traces indexed by (source, receiver, time).
#[derive(Debug, Clone, PartialEq)]
pub struct DataVolume {
    pub ns: usize,
    pub nr: usize,
    pub time: TimeAxis,
    pub traces: Vec<f64>,
}

impl DataVolume {
    pub fn zeros(ns: usize, nr: usize, time: TimeAxis) -> Self {
        Self { ns, nr, time, traces: vec![0.0; ns * nr * time.nt] }
    }

    pub fn from_traces(ns: usize, nr: usize, time: TimeAxis, traces: Vec<f64>) -> Result<Self> {
        if traces.len() != ns * nr * time.nt {
            return Err(Error::invalid(format!(
                "data volume of {ns}x{nr}x{} needs {} samples, got {}",
                time.nt,
                ns * nr * time.nt,
                traces.len()
            )));
        }
        Ok(Self { ns, nr, time, traces })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.ns, self.nr, self.time)
    }

    pub fn nt(&self) -> usize {
        self.time.nt
    }

    pub fn ntraces(&self) -> usize {
        self.ns * self.nr
    }

    pub fn trace(&self, is: usize, ir: usize) -> &[f64] {
        let nt = self.time.nt;
        let start = (is * self.nr + ir) * nt;
        &self.traces[start..start + nt]
    }

    pub fn trace_mut(&mut self, is: usize, ir: usize) -> &mut [f64] {
        let nt = self.time.nt;
        let start = (is * self.nr + ir) * nt;
        &mut self.traces[start..start + nt]
    }

    /// All traces of one shot, receiver-major.
    pub fn shot(&self, is: usize) -> &[f64] {
        let n = self.nr * self.time.nt;
        &self.traces[is * n..(is + 1) * n]
    }

    pub fn shot_mut(&mut self, is: usize) -> &mut [f64] {
        let n = self.nr * self.time.nt;
        &mut self.traces[is * n..(is + 1) * n]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.ns == other.ns
            && self.nr == other.nr
            && self.time.nt == other.time.nt
            && (self.time.dt - other.time.dt).abs() <= 1e-12 * self.time.dt
    }

    pub fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::AxisMismatch(format!(
                "{what}: {}x{}x{} (dt {}) vs {}x{}x{} (dt {})",
                self.ns, self.nr, self.time.nt, self.time.dt, other.ns, other.nr, other.time.nt, other.time.dt
            )))
        }
    }

    /// `dt * sum(a*b)`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.time.dt * crate::linalg::dot(&self.traces, &other.traces)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.traces.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self - other`, shapes must agree.
    pub fn minus(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "difference")?;
        let mut out = self.clone();
        out.traces.iter_mut().zip(&other.traces).for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sum")?;
        let mut out = self.clone();
        out.traces.iter_mut().zip(&other.traces).for_each(|(a, b)| *a += b);
        Ok(out)
    }
}

/// One adaptive filter trace per source-receiver pair on a symmetric lag axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterField {
    pub ns: usize,
    pub nr: usize,
    /// Number of lags, always odd.
    pub nu: usize,
    /// Lag sampling interval, equal to the data interval.
    pub du: f64,
    pub traces: Vec<f64>,
}

impl FilterField {
    pub fn zeros(ns: usize, nr: usize, nu: usize, du: f64) -> Result<Self> {
        if nu % 2 == 0 {
            return Err(Error::invalid(format!("filter lag count must be odd, got {nu}")));
        }
        if !(du > 0.0) {
            return Err(Error::invalid("filter lag interval must be positive"));
        }
        Ok(Self { ns, nr, nu, du, traces: vec![0.0; ns * nr * nu] })
    }

    /// Filter with `halfwidth` seconds of support either side of zero lag.
    pub fn zeros_for(data: &DataVolume, halfwidth: f64) -> Result<Self> {
        let half = (halfwidth / data.time.dt).round() as usize;
        Self::zeros(data.ns, data.nr, 2 * half + 1, data.time.dt)
    }

    /// The identity filter: `1/du` at zero lag on every trace.
    pub fn delta(ns: usize, nr: usize, nu: usize, du: f64) -> Result<Self> {
        let mut f = Self::zeros(ns, nr, nu, du)?;
        let h = f.half();
        for tr in f.traces.chunks_mut(nu) {
            tr[h] = 1.0 / du;
        }
        Ok(f)
    }

    pub fn zeros_like(&self) -> Self {
        Self { traces: vec![0.0; self.traces.len()], ..self.clone() }
    }

    /// Index of the zero lag.
    #[inline]
    pub fn half(&self) -> usize {
        (self.nu - 1) / 2
    }

    #[inline]
    pub fn lag(&self, j: usize) -> f64 {
        (j as f64 - self.half() as f64) * self.du
    }

    pub fn trace(&self, is: usize, ir: usize) -> &[f64] {
        let s = (is * self.nr + ir) * self.nu;
        &self.traces[s..s + self.nu]
    }

    pub fn trace_mut(&mut self, is: usize, ir: usize) -> &mut [f64] {
        let s = (is * self.nr + ir) * self.nu;
        &mut self.traces[s..s + self.nu]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.du * crate::linalg::dot(&self.traces, &other.traces)
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    /// Checks that this filter pairs with `data`.
    pub fn check_pairs_with(&self, data: &DataVolume) -> Result<()> {
        if self.ns != data.ns || self.nr != data.nr {
            return Err(Error::AxisMismatch(format!(
                "filter has {}x{} traces, data has {}x{}",
                self.ns, self.nr, data.ns, data.nr
            )));
        }
        if (self.du - data.time.dt).abs() > 1e-12 * data.time.dt {
            return Err(Error::AxisMismatch(format!(
                "filter lag interval {} differs from data dt {}",
                self.du, data.time.dt
            )));
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.ns == other.ns && self.nr == other.nr && self.nu == other.nu
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> GridGeometry {
        GridGeometry::new(5, 4, 10.0, 20.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn rejects_non_positive_fields() {
        let g = geom();
        let mut k = vec![4.0; g.len()];
        k[7] = 0.0;
        let err = ModelGrid::new(g, k, vec![1.0; g.len()]).unwrap_err().to_string();
        assert!(err.contains("(1, 3)"), "{err}");
        assert!(ModelGrid::new(g, vec![4.0; 3], vec![1.0; g.len()]).is_err());
        assert!(GridGeometry::new(0, 3, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(GridGeometry::new(3, 3, -1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn background_velocity_is_2000() {
        let m = ModelGrid::homogeneous(geom(), 4.0, 1.0).unwrap();
        assert!(m.velocity().iter().all(|&c| (c - 2000.0).abs() < 1e-9));
    }

    #[test]
    fn norm_scales_linearly() {
        let t = TimeAxis::new(7, 0.01, 0.0).unwrap();
        let d = DataVolume::from_traces(1, 2, t, (0..14).map(|i| (i as f64).sin()).collect()).unwrap();
        for c in [-3.0, 0.0, 0.5, 2.0] {
            assert!((d.scaled(c).norm() - c.abs() * d.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn acquisition_margin() {
        let g = GridGeometry::new(101, 51, 20.0, 20.0, 0.0, 0.0).unwrap();
        let t = TimeAxis::new(4, 0.1, 0.0).unwrap();
        let a = Acquisition::new(vec![(100.0, 100.0)], vec![(1000.0, 80.0)], t, vec![0.0; 4]).unwrap();
        assert!(a.validate_on(&g, 4).is_ok());
        assert!(a.validate_on(&g, 5).is_err());
    }

    #[test]
    fn delta_filter_layout() {
        let f = FilterField::delta(2, 3, 5, 0.5).unwrap();
        assert_eq!(f.trace(1, 2), &[0.0, 0.0, 2.0, 0.0, 0.0]);
        assert!((f.lag(0) + 1.0).abs() < 1e-15);
        assert!(FilterField::zeros(1, 1, 4, 0.1).is_err());
    }
}
