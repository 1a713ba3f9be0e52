//! INI run configuration. [`KEYS`] is the schema: parsing, defaults and the
//! help text all come from it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use mswi::filter::PenaltyConfig;
use mswi::objectives::{LogisticParam, SmoothingOp};
use mswi::optimizer::LbfgsConfig;
use mswi::scenarios::{self, AcquisitionKind, ModelKind, Parameterization, ScenarioSpec, StageSpec};
use mswi::wavelet::{make_wavelet, Trapezoid};
use mswi::{Acquisition, FdConfig, TimeAxis};

pub struct Key {
    pub section: &'static str,
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(section: &'static str, name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { section, name, default, help }
}

pub const KEYS: &[Key] = &[
    key("grid", "scale", "1", "resolution factor of the 8 km x 4 km grid (1 = 20 m cells)"),
    key(
        "acquisition",
        "kind",
        "near",
        "geometry: near (sources at x = 3000 m, receivers at x = 5000 m) or far (2000 m and 6000 m)",
    ),
    key("acquisition", "nt", "626", "samples per trace"),
    key("acquisition", "dt", "0.008", "sample interval (s)"),
    key("acquisition", "t0", "0", "first sample time (s)"),
    key("wavelet", "f1", "1", "band corner 1 (Hz), gain 0 below"),
    key("wavelet", "f2", "2.5", "band corner 2 (Hz), gain 1 from here"),
    key("wavelet", "f3", "7.5", "band corner 3 (Hz), gain 1 up to here"),
    key("wavelet", "f4", "12.5", "band corner 4 (Hz), gain 0 above"),
    key("wavelet", "center", "1", "time of the pulse envelope peak (s)"),
    key("fd", "order", "8", "spatial stencil order (2, 4, 6 or 8)"),
    key("fd", "cfl", "0.9", "fraction of the stable time step"),
    key("fd", "vmin", "1000", "lowest admissible velocity (m/s)"),
    key("fd", "vmax", "3000", "highest admissible velocity (m/s), sets the time step and sponge"),
    key("fd", "boundary_width", "50", "sponge width in cells at scale 1 (scaled with the grid)"),
    key("fd", "snapshot_budget", "0", "stored states for the adjoint sweep (0 = store every step)"),
    key("penalty", "alpha", "1e-4", "lag penalty weight"),
    key("penalty", "sigma", "1e-5", "filter regularisation weight"),
    key("penalty", "rho", "1e-4", "relative normal-residual reduction that stops CG"),
    key("penalty", "max_cg_iters", "500", "CG iteration cap"),
    key("penalty", "lag_halfwidth", "0.4", "filter half-length (s)"),
    key("penalty", "focus_window", "0.085", "lag window of the focus metric (s)"),
    key("lbfgs", "memory", "5", "stored correction pairs"),
    key("lbfgs", "max_iters", "12", "iteration limit for invert"),
    key("lbfgs", "grad_tol_rel", "0.01", "stop when the weighted gradient norm falls below this fraction"),
    key("lbfgs", "ls_shrink", "0.5", "backtracking factor"),
    key("lbfgs", "ls_c1", "1e-4", "sufficient-decrease constant"),
    key("lbfgs", "ls_max", "20", "backtracks before the line search fails"),
    key("lbfgs", "step0", "0.05", "first step as a fraction of the largest model value"),
    key("lbfgs", "smoothing_length", "10", "moving-average length of the inverse weight (samples at scale 1)"),
    key("lbfgs", "smoothing_repeats", "2", "passes of the inverse weight"),
    key("lbfgs", "parameterization", "auto", "kappa, logistic, or auto (logistic after a bound violation)"),
    key("lbfgs", "logistic_a", "2000", "logistic velocity midpoint (m/s)"),
    key("lbfgs", "logistic_b", "900", "logistic velocity half-range (m/s)"),
    key("scenario", "name", "custom", "scenario name (output folder)"),
    key("scenario", "builtin", "", "start from this built-in scenario"),
    key("scenario", "model", "circular", "true model: homogeneous, circular, oblate or camembert"),
    key("scenario", "stages", "", "comma-separated name:objective:start:parameterization:smoothing:iterations"),
    key("scenario", "noise", "false", "add calibrated model noise to the observed data"),
    key("scenario", "noise_fraction", "0.32", "target noise norm over data norm"),
    key("scenario", "noise_tolerance", "0.02", "accepted deviation from the target fraction"),
    key("scenario", "seed", "20240601", "noise seed"),
];

pub fn schema_help() -> String {
    let mut s = String::from("Configuration keys (INI sections):\n");
    let mut section = "";
    for k in KEYS {
        if k.section != section {
            section = k.section;
            let _ = writeln!(s, "  [{section}]");
        }
        let default = if k.default.is_empty() { "unset" } else { k.default };
        let _ = writeln!(s, "    {:<18} {} (default {})", k.name, k.help, default);
    }
    s
}

/// Raw key values after schema validation.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<(String, String), String>,
}

fn lookup(section: &str, name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.section == section && k.name == name)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ini = ini::Ini::load_from_str(text).map_err(|e| anyhow!("{e}"))?;
        let mut cfg = Self::default();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            if !props.is_empty() && !KEYS.iter().any(|k| k.section == section) {
                bail!("unknown section [{section}]");
            }
            for (name, value) in props.iter() {
                if lookup(section, name).is_none() {
                    bail!("unknown key {name:?} in section [{section}]");
                }
                cfg.values.insert((section.to_string(), name.to_string()), value.trim().to_string());
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, section: &str, name: &str, value: impl Into<String>) -> Result<()> {
        if lookup(section, name).is_none() {
            bail!("unknown key {name:?} in section [{section}]");
        }
        self.values.insert((section.to_string(), name.to_string()), value.into());
        Ok(())
    }

    pub fn is_set(&self, section: &str, name: &str) -> bool {
        self.values.contains_key(&(section.to_string(), name.to_string()))
    }

    fn raw(&self, section: &str, name: &str) -> &str {
        let k = lookup(section, name).unwrap_or_else(|| panic!("key [{section}] {name} missing from the schema"));
        self.values.get(&(section.to_string(), name.to_string())).map(String::as_str).unwrap_or(k.default)
    }

    pub fn get<T>(&self, section: &str, name: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let v = self.raw(section, name);
        v.parse().map_err(|e| anyhow!("[{section}] {name} = {v:?}: {e}"))
    }

    pub fn scale(&self) -> Result<f64> {
        let s: f64 = self.get("grid", "scale")?;
        if !(s > 0.0) {
            bail!("[grid] scale must be positive, got {s}");
        }
        Ok(s)
    }

    pub fn time(&self) -> Result<TimeAxis> {
        Ok(TimeAxis::new(
            self.get("acquisition", "nt")?,
            self.get("acquisition", "dt")?,
            self.get("acquisition", "t0")?,
        )?)
    }

    pub fn band(&self) -> Result<(Trapezoid, f64)> {
        let f = |n| self.get::<f64>("wavelet", n);
        Ok((Trapezoid([f("f1")?, f("f2")?, f("f3")?, f("f4")?]), f("center")?))
    }

    pub fn acquisition_kind(&self) -> Result<AcquisitionKind> {
        self.get("acquisition", "kind")
    }

    /// Acquisition on the configured time axis, or on `time` when given.
    pub fn acquisition(&self, time: Option<TimeAxis>) -> Result<Acquisition> {
        let time = match time {
            Some(t) => t,
            None => self.time()?,
        };
        let (band, center) = self.band()?;
        let w = make_wavelet(band, time, center)?;
        Ok(scenarios::build_acquisition(self.acquisition_kind()?, self.scale()?, time, w)?)
    }

    pub fn fd(&self) -> Result<FdConfig> {
        let base: usize = self.get("fd", "boundary_width")?;
        let cfg = FdConfig {
            space_order: self.get("fd", "order")?,
            cfl_safety: self.get("fd", "cfl")?,
            vmin: self.get("fd", "vmin")?,
            vmax: self.get("fd", "vmax")?,
            boundary_width: ((base as f64 * self.scale()?).round() as usize).max(1),
            snapshot_budget: self.get("fd", "snapshot_budget")?,
            ..FdConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn penalty(&self) -> Result<PenaltyConfig> {
        let cfg = PenaltyConfig {
            alpha: self.get("penalty", "alpha")?,
            sigma: self.get("penalty", "sigma")?,
            rho: self.get("penalty", "rho")?,
            max_cg_iters: self.get("penalty", "max_cg_iters")?,
            lag_halfwidth: self.get("penalty", "lag_halfwidth")?,
            focus_window: self.get("penalty", "focus_window")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn lbfgs(&self) -> Result<LbfgsConfig> {
        let cfg = LbfgsConfig {
            memory: self.get("lbfgs", "memory")?,
            max_iters: self.get("lbfgs", "max_iters")?,
            grad_tol_rel: self.get("lbfgs", "grad_tol_rel")?,
            ls_shrink: self.get("lbfgs", "ls_shrink")?,
            ls_c1: self.get("lbfgs", "ls_c1")?,
            ls_max: self.get("lbfgs", "ls_max")?,
            step0: self.get("lbfgs", "step0")?,
            ..LbfgsConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn logistic(&self) -> Result<LogisticParam> {
        Ok(LogisticParam { a: self.get("lbfgs", "logistic_a")?, b: self.get("lbfgs", "logistic_b")?, rho_density: 1.0 })
    }

    pub fn parameterization(&self) -> Result<Parameterization> {
        self.get("lbfgs", "parameterization")
    }

    /// Inverse weight with its length following the grid scale.
    pub fn smoothing(&self) -> Result<SmoothingOp> {
        let len: usize = self.get("lbfgs", "smoothing_length")?;
        Ok(SmoothingOp {
            length: ((len as f64 * self.scale()?).round() as usize).max(1),
            repeats: self.get("lbfgs", "smoothing_repeats")?,
        })
    }

    /// Scenario from `[scenario]`, starting from a built-in when named.
    /// Explicitly set keys of the other sections override its settings.
    pub fn scenario(&self, builtin: Option<&str>) -> Result<ScenarioSpec> {
        let scale = self.scale()?;
        let from = builtin.map(str::to_string).or_else(|| {
            let b = self.raw("scenario", "builtin");
            (!b.is_empty()).then(|| b.to_string())
        });
        let mut spec = match &from {
            Some(name) => scenarios::builtin(name, scale)?,
            None => {
                let model: ModelKind = self.get("scenario", "model")?;
                ScenarioSpec::paper(self.raw("scenario", "name"), model, self.acquisition_kind()?).with_scale(scale)
            }
        };
        if from.is_none() || self.is_set("scenario", "name") {
            spec.name = self.raw("scenario", "name").to_string();
        }
        if from.is_none() || self.is_set("scenario", "model") {
            spec.model = self.get("scenario", "model")?;
        }
        if self.is_set("acquisition", "kind") {
            spec.acquisition = self.acquisition_kind()?;
        }
        let section_set = |s: &str| KEYS.iter().any(|k| k.section == s && self.is_set(s, k.name));
        if section_set("acquisition") {
            spec.time = self.time()?;
        }
        if section_set("wavelet") {
            (spec.band, spec.center) = self.band()?;
        }
        if section_set("fd") {
            spec.fd = self.fd()?;
        }
        if section_set("penalty") {
            spec.penalty = self.penalty()?;
        }
        if section_set("lbfgs") {
            spec.lbfgs = self.lbfgs()?;
            spec.logistic = self.logistic()?;
        }
        let stages = self.raw("scenario", "stages");
        if !stages.is_empty() {
            spec.stages = stages
                .split(',')
                .map(|s| {
                    let mut st: StageSpec = s.parse()?;
                    st.smoothing.length = ((st.smoothing.length as f64 * scale).round() as usize).max(1);
                    Ok(st)
                })
                .collect::<Result<_>>()
                .context("[scenario] stages")?;
        }
        let enabled = if self.is_set("scenario", "noise") {
            self.get::<bool>("scenario", "noise")?
        } else {
            spec.noise.is_some()
        };
        spec.noise = if enabled {
            let mut n = spec.noise.unwrap_or_default();
            if self.is_set("scenario", "noise_fraction") {
                n.fraction = self.get("scenario", "noise_fraction")?;
            }
            if self.is_set("scenario", "noise_tolerance") {
                n.tolerance = self.get("scenario", "noise_tolerance")?;
            }
            if self.is_set("scenario", "seed") {
                n.seed = self.get("scenario", "seed")?;
            }
            Some(n)
        } else {
            None
        };
        spec.validate()?;
        Ok(spec)
    }
}
