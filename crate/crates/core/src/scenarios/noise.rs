//! Coherent noise from a randomly perturbed homogeneous model.
//!
//! The noise is the scattered field `F[m0 + a U] - F[m0]` of i.i.d. uniform
//! `[-1, 1]` draws `U` per cell (ChaCha8 stream seeded from `seed`), so a zero
//! amplitude adds nothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Acquisition, DataVolume, ModelGrid, VELOCITY_SQ_PER_GPA_CM3_G};
use crate::wave_sim::{FdConfig, Simulator};

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    /// Target `|noise| / |d_clean|`.
    pub fraction: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { fraction: 0.32, tolerance: 0.02, seed: 20240601 }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.tolerance > 0.0 && self.tolerance < self.fraction) {
            return Err(Error::invalid("noise fraction and tolerance must satisfy 0 < tolerance < fraction"));
        }
        Ok(())
    }
}

/// Uniform `[-1, 1]` draws, one per grid cell.
pub fn uniform_field(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Largest amplitude keeping `m0 + a U` inside the velocity bounds.
pub fn max_amplitude(m0: &ModelGrid, cfg: &FdConfig) -> f64 {
    m0.kappa
        .iter()
        .zip(&m0.beta)
        .map(|(&k, &b)| {
            let s = b * VELOCITY_SQ_PER_GPA_CM3_G;
            let (lo, hi) = (cfg.vmin * cfg.vmin / s, cfg.vmax * cfg.vmax / s);
            (k - lo).min(hi - k)
        })
        .fold(f64::INFINITY, f64::min)
}

struct NoiseModel<'a> {
    m0: &'a ModelGrid,
    acq: &'a Acquisition,
    cfg: &'a FdConfig,
    draws: Vec<f64>,
    background: DataVolume,
}

impl<'a> NoiseModel<'a> {
    fn new(m0: &'a ModelGrid, acq: &'a Acquisition, cfg: &'a FdConfig, seed: u64) -> Result<Self> {
        let background = Simulator::new(m0, acq, cfg)?.forward()?;
        Ok(Self { m0, acq, cfg, draws: uniform_field(m0.geom.len(), seed), background })
    }

    fn noise(&self, amplitude: f64) -> Result<DataVolume> {
        if amplitude == 0.0 {
            return Ok(self.background.zeros_like());
        }
        let kappa = self.m0.kappa.iter().zip(&self.draws).map(|(k, u)| k + amplitude * u).collect();
        let m = self.m0.with_kappa(kappa)?;
        Simulator::new(&m, self.acq, self.cfg)?.forward()?.minus(&self.background)
    }
}

/// Adds the scattered field of amplitude `amplitude` (GPa) to `d_clean` and
/// returns the noisy data with the achieved noise fraction.
pub fn add_model_noise(
    d_clean: &DataVolume,
    m0: &ModelGrid,
    acq: &Acquisition,
    cfg: &FdConfig,
    amplitude: f64,
    seed: u64,
) -> Result<(DataVolume, f64)> {
    if amplitude == 0.0 {
        return Ok((d_clean.clone(), 0.0));
    }
    let nm = NoiseModel::new(m0, acq, cfg, seed)?;
    let noise = nm.noise(amplitude)?;
    let noisy = d_clean.plus(&noise)?;
    Ok((noisy, noise.norm() / d_clean.norm()))
}

#[derive(Debug, Clone)]
pub struct NoiseCalibration {
    pub amplitude: f64,
    pub fraction: f64,
    pub noisy: DataVolume,
    /// `(amplitude, fraction)` for every trial.
    pub trials: Vec<(f64, f64)>,
}

/// Safeguarded secant search (falling back to bisection) on the amplitude
/// until the noise fraction is within
/// `tolerance / 4` of the target (or the bracket collapses), then checked
/// against the full tolerance.
pub fn calibrate_noise(
    d_clean: &DataVolume,
    m0: &ModelGrid,
    acq: &Acquisition,
    cfg: &FdConfig,
    spec: &NoiseSpec,
) -> Result<NoiseCalibration> {
    spec.validate()?;
    let nm = NoiseModel::new(m0, acq, cfg, spec.seed)?;
    let dn = d_clean.norm();
    let mut trials = Vec::new();
    let mut eval = |a: f64| -> Result<(f64, DataVolume)> {
        let n = nm.noise(a)?;
        let f = n.norm() / dn;
        trials.push((a, f));
        log::info!("noise amplitude {a:.5} GPa gives fraction {f:.4}");
        Ok((f, n))
    };
    let (mut lo, mut hi) = (0.0, 0.999 * max_amplitude(m0, cfg));
    // the paper's unit draws first, since the fraction is close to linear
    let mut a = 1.0f64.min(hi);
    let mut best: Option<(f64, f64, DataVolume)> = None;
    for _ in 0..40 {
        let (f, n) = eval(a)?;
        let err = f - spec.fraction;
        if best.as_ref().map_or(true, |b| (b.1 - spec.fraction).abs() > err.abs()) {
            best = Some((a, f, n));
        }
        if err.abs() < 0.25 * spec.tolerance {
            break;
        }
        if err > 0.0 {
            hi = a;
        } else {
            lo = a;
        }
        // secant guess from the origin, kept inside the bracket
        let guess = a * spec.fraction / f.max(f64::MIN_POSITIVE);
        a = if guess > lo && guess < hi { guess } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-9 {
            break;
        }
    }
    let (amplitude, fraction, noise) = best.expect("at least one trial");
    if (fraction - spec.fraction).abs() > spec.tolerance {
        return Err(Error::invalid(format!(
            "noise fraction {fraction:.3} at amplitude {amplitude:.3} GPa misses the target {} by more than {}",
            spec.fraction, spec.tolerance
        )));
    }
    Ok(NoiseCalibration { amplitude, fraction, noisy: d_clean.plus(&noise)?, trials })
}
