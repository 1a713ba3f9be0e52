//! The numerical experiments: model and acquisition builders, coherent
//! model noise, stage pipelines (matched-source and plain FWI chains) and
//! the summary metrics their acceptance is judged on.

mod builtin;
pub mod metrics;
mod noise;
mod run;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::filter::PenaltyConfig;
use crate::model::{Acquisition, GridGeometry, ModelGrid, TimeAxis};
use crate::objectives::{LogisticParam, SmoothingOp};
use crate::optimizer::LbfgsConfig;
use crate::wave_sim::FdConfig;
use crate::wavelet::{make_wavelet, Trapezoid};

pub use builtin::{builtin, builtin_names};
pub use noise::{add_model_noise, calibrate_noise, NoiseCalibration, NoiseSpec};
pub use run::{run_scenario, run_stage, Problem, ScenarioReport, StageOutcome, StagePoint, StageReport};

/// Background bulk modulus (GPa).
pub const BACKGROUND_KAPPA: f64 = 4.0;
/// Buoyancy everywhere (cm^3/g).
pub const BUOYANCY: f64 = 1.0;

/// Inner CG tolerance of the built-in scenarios.
pub const SCENARIO_CG_RHO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Homogeneous,
    Circular,
    Oblate,
    Camembert,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] =
        [ModelKind::Homogeneous, ModelKind::Circular, ModelKind::Oblate, ModelKind::Camembert];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Homogeneous => "homogeneous",
            ModelKind::Circular => "circular",
            ModelKind::Oblate => "oblate",
            ModelKind::Camembert => "camembert",
        }
    }
}

macro_rules! named_enum {
    ($t:ty, $what:literal) => {
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                let s = s.trim();
                <$t>::ALL.iter().copied().find(|k| k.name() == s).ok_or_else(|| {
                    let names: Vec<&str> = <$t>::ALL.iter().map(|k| k.name()).collect();
                    Error::invalid(format!(
                        concat!("unknown ", $what, " {:?} (expected one of {})"),
                        s,
                        names.join(", ")
                    ))
                })
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum!(ModelKind, "model");

/// Paper grid (8 km by 4 km at 20 m) refined or coarsened by `scale`.
pub fn paper_grid(scale: f64) -> Result<GridGeometry> {
    if !(scale > 0.0) {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    let h = 20.0 / scale;
    let nx = (400.0 * scale).round() as usize + 1;
    let nz = (200.0 * scale).round() as usize + 1;
    GridGeometry::new(nx, nz, h, h, 0.0, 0.0)
}

fn raised_cosine(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * r).cos())
    }
}

/// Bulk modulus (GPa) of a built-in model at `(x, z)`.
pub fn model_kappa(kind: ModelKind, x: f64, z: f64) -> f64 {
    let bg = BACKGROUND_KAPPA;
    match kind {
        ModelKind::Homogeneous => bg,
        ModelKind::Circular => {
            let r = ((x - 4000.0).powi(2) + (z - 2000.0).powi(2)).sqrt() / 1000.0;
            bg - (bg - 2.4) * raised_cosine(r)
        }
        ModelKind::Oblate => {
            let r = (((x - 4000.0) / 1500.0).powi(2) + ((z - 2400.0) / 800.0).powi(2)).sqrt();
            bg - (bg - 2.0) * raised_cosine(r)
        }
        ModelKind::Camembert => {
            let r = ((x - 4000.0).powi(2) + (z - 2000.0).powi(2)).sqrt();
            if r <= 1250.0 {
                4.8
            } else {
                bg
            }
        }
    }
}

pub fn build_model(kind: ModelKind, geom: GridGeometry) -> Result<ModelGrid> {
    let mut kappa = vec![0.0; geom.len()];
    for ix in 0..geom.nx {
        for iz in 0..geom.nz {
            kappa[geom.index(ix, iz)] = model_kappa(kind, geom.x(ix), geom.z(iz));
        }
    }
    ModelGrid::new(geom, kappa, vec![BUOYANCY; geom.len()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcquisitionKind {
    Near,
    Far,
}

impl AcquisitionKind {
    pub const ALL: [AcquisitionKind; 2] = [AcquisitionKind::Near, AcquisitionKind::Far];

    pub fn name(&self) -> &'static str {
        match self {
            AcquisitionKind::Near => "near",
            AcquisitionKind::Far => "far",
        }
    }

    /// Source and receiver line abscissae (m).
    pub fn lines(&self) -> (f64, f64) {
        match self {
            AcquisitionKind::Near => (3000.0, 5000.0),
            AcquisitionKind::Far => (2000.0, 6000.0),
        }
    }
}

named_enum!(AcquisitionKind, "acquisition");

/// Recording window of the experiments: 626 samples at 8 ms.
pub fn paper_time() -> TimeAxis {
    TimeAxis { nt: 626, dt: 0.008, t0: 0.0 }
}

/// Twenty sources 150 m apart from z = 500 m and receivers from z = 200 m,
/// 181 of them at 20 m on the paper grid (spacing follows the grid at other
/// scales).
pub fn build_acquisition(kind: AcquisitionKind, scale: f64, time: TimeAxis, wavelet: Vec<f64>) -> Result<Acquisition> {
    if !(scale > 0.0) {
        return Err(Error::invalid(format!("scale must be positive, got {scale}")));
    }
    let (xs, xr) = kind.lines();
    let sources = (0..20).map(|i| (xs, 500.0 + 150.0 * i as f64)).collect();
    let nr = (180.0 * scale).round() as usize + 1;
    let dr = 3600.0 / (nr - 1).max(1) as f64;
    let receivers = (0..nr).map(|i| (xr, 200.0 + dr * i as f64)).collect();
    Acquisition::new(sources, receivers, time, wavelet)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Fwi,
    Mswi,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 2] = [ObjectiveKind::Fwi, ObjectiveKind::Mswi];

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::Fwi => "fwi",
            ObjectiveKind::Mswi => "mswi",
        }
    }
}

named_enum!(ObjectiveKind, "objective");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStart {
    Homogeneous,
    Previous,
}

impl StageStart {
    pub const ALL: [StageStart; 2] = [StageStart::Homogeneous, StageStart::Previous];

    pub fn name(&self) -> &'static str {
        match self {
            StageStart::Homogeneous => "homogeneous",
            StageStart::Previous => "previous",
        }
    }
}

named_enum!(StageStart, "stage start");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    Kappa,
    Logistic,
    /// Bulk modulus, restarted in the logistic variable after a bound violation.
    Auto,
}

impl Parameterization {
    pub const ALL: [Parameterization; 3] =
        [Parameterization::Kappa, Parameterization::Logistic, Parameterization::Auto];

    pub fn name(&self) -> &'static str {
        match self {
            Parameterization::Kappa => "kappa",
            Parameterization::Logistic => "logistic",
            Parameterization::Auto => "auto",
        }
    }
}

named_enum!(Parameterization, "parameterization");

#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    pub name: String,
    pub objective: ObjectiveKind,
    pub start: StageStart,
    pub param: Parameterization,
    pub smoothing: SmoothingOp,
    pub max_iters: usize,
}

impl StageSpec {
    pub fn new(
        name: &str,
        objective: ObjectiveKind,
        start: StageStart,
        smoothing_length: usize,
        max_iters: usize,
    ) -> Self {
        Self {
            name: name.to_string(),
            objective,
            start,
            param: Parameterization::Auto,
            smoothing: SmoothingOp { length: smoothing_length, repeats: 2 },
            max_iters,
        }
    }
}

impl FromStr for StageSpec {
    type Err = Error;

    /// `name:objective:start:parameterization:smoothing_length:max_iters`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(Error::invalid(format!(
                "stage {s:?} must read name:objective:start:parameterization:smoothing:iterations"
            )));
        }
        let num = |v: &str, what: &str| -> Result<usize> {
            v.parse().map_err(|_| Error::invalid(format!("stage {s:?}: bad {what} {v:?}")))
        };
        if parts[0].is_empty() || parts[0].contains(['/', '\\']) {
            return Err(Error::invalid(format!("stage {s:?}: name must be a plain, non-empty word")));
        }
        Ok(Self {
            name: parts[0].to_string(),
            objective: parts[1].parse()?,
            start: parts[2].parse()?,
            param: parts[3].parse()?,
            smoothing: SmoothingOp { length: num(parts[4], "smoothing length")?.max(1), repeats: 2 },
            max_iters: num(parts[5], "iteration count")?,
        })
    }
}

impl fmt::Display for StageSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}:{}:{}",
            self.name, self.objective, self.start, self.param, self.smoothing.length, self.max_iters
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub model: ModelKind,
    pub acquisition: AcquisitionKind,
    pub band: Trapezoid,
    pub center: f64,
    pub time: TimeAxis,
    pub penalty: PenaltyConfig,
    pub lbfgs: LbfgsConfig,
    pub fd: FdConfig,
    pub logistic: LogisticParam,
    pub stages: Vec<StageSpec>,
    pub noise: Option<NoiseSpec>,
    pub scale: f64,
}

impl ScenarioSpec {
    /// A scenario with the paper's acquisition settings and no stages.
    pub fn paper(name: &str, model: ModelKind, acquisition: AcquisitionKind) -> Self {
        Self {
            name: name.to_string(),
            model,
            acquisition,
            band: Trapezoid::PAPER_BAND,
            center: 1.0,
            time: paper_time(),
            penalty: PenaltyConfig { rho: SCENARIO_CG_RHO, ..PenaltyConfig::default() },
            lbfgs: LbfgsConfig::default(),
            fd: FdConfig::default(),
            logistic: LogisticParam::default(),
            stages: Vec::new(),
            noise: None,
            scale: 1.0,
        }
    }

    /// Applies a resolution scale: grid spacing, receiver spacing and sponge
    /// width follow it.
    pub fn with_scale(mut self, scale: f64) -> Self {
        let base = (self.fd.boundary_width as f64 / self.scale).round();
        self.scale = scale;
        self.fd.boundary_width = ((base * scale).round() as usize).max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::invalid(format!("scenario {} has no stages", self.name)));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::invalid("scenario name must be a plain, non-empty word"));
        }
        if self.stages[0].start == StageStart::Previous {
            return Err(Error::invalid(format!(
                "first stage {} of {} cannot start from a previous stage",
                self.stages[0].name, self.name
            )));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if self.stages[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::invalid(format!("stage name {} used twice", s.name)));
            }
        }
        self.penalty.validate()?;
        self.lbfgs.validate()?;
        self.fd.validate()?;
        if self.stages.iter().any(|s| s.param != Parameterization::Kappa) {
            self.logistic.validate(&self.fd)?;
        }
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        paper_grid(self.scale)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<GridGeometry> {
        paper_grid(self.scale)
    }

    pub fn build_acquisition(&self) -> Result<Acquisition> {
        let w = make_wavelet(self.band, self.time, self.center)?;
        build_acquisition(self.acquisition, self.scale, self.time, w)
    }
}
