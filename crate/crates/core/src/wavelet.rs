//! Trapezoidal band-pass source pulses and a few trace utilities.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::TimeAxis;

/// Corner frequencies `[f1, f2, f3, f4]` of a trapezoidal pass band (Hz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trapezoid(pub [f64; 4]);

impl Trapezoid {
    pub const PAPER_BAND: Trapezoid = Trapezoid([1.0, 2.5, 7.5, 12.5]);

    /// Amplitude response at `f` (Hz, sign ignored).
    pub fn gain(&self, f: f64) -> f64 {
        let [f1, f2, f3, f4] = self.0;
        let f = f.abs();
        if f <= f1 || f >= f4 {
            0.0
        } else if f < f2 {
            (f - f1) / (f2 - f1)
        } else if f <= f3 {
            1.0
        } else {
            (f4 - f) / (f4 - f3)
        }
    }

    fn validate(&self, dt: f64) -> Result<()> {
        let [f1, f2, f3, f4] = self.0;
        let nyquist = 0.5 / dt;
        if !(0.0 <= f1 && f1 < f2 && f2 < f3 && f3 < f4) {
            return Err(Error::invalid(format!(
                "corner frequencies must satisfy 0 <= f1 < f2 < f3 < f4, got {:?}",
                self.0
            )));
        }
        if f4 >= nyquist {
            return Err(Error::invalid(format!("f4 = {f4} Hz is not below the Nyquist frequency {nyquist} Hz")));
        }
        Ok(())
    }
}

/// Zero-phase trapezoidal pulse centred at `center`, normalised to unit peak.
///
/// The spectrum is built on the DFT grid of the recording window and shifted
/// by a linear phase, so the pulse is periodic over the window and has exactly
/// zero mean whenever `f1 > 0`.
pub fn make_wavelet(band: Trapezoid, time: TimeAxis, center: f64) -> Result<Vec<f64>> {
    band.validate(time.dt)?;
    let n = time.nt;
    let shift = center - time.t0;
    let df = 1.0 / (n as f64 * time.dt);
    let mut spec: Vec<Complex64> = (0..n)
        .map(|k| {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let f = kk * df;
            let phase = -2.0 * std::f64::consts::PI * f * shift;
            Complex64::from_polar(band.gain(f), phase)
        })
        .collect();
    if n % 2 == 0 {
        // the Nyquist bin has to stay real for a real pulse
        spec[n / 2] = Complex64::new(spec[n / 2].re, 0.0);
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let mut w: Vec<f64> = spec.iter().map(|c| c.re / n as f64).collect();
    let peak = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::invalid("pass band contains no DFT frequency for this window"));
    }
    w.iter_mut().for_each(|v| *v /= peak);
    Ok(w)
}

/// Amplitude spectrum `|dt * DFT(x)|` on bins `k/(n*dt)`, `k <= n/2`.
pub fn amplitude_spectrum(x: &[f64], dt: f64) -> Vec<(f64, f64)> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (0..=n / 2).map(|k| (k as f64 / (n as f64 * dt), dt * buf[k].norm())).collect()
}

/// Hilbert envelope, computed on a zero-padded copy to limit wrap-around.
pub fn envelope(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let m = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(m, Complex64::new(0.0, 0.0));
    planner.plan_fft_forward(m).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        if k == 0 || k == m / 2 {
            continue;
        }
        if k < m / 2 {
            *c *= 2.0;
        } else {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    buf[..n].iter().map(|c| c.norm() / m as f64).collect()
}

/// Location of the global maximum of `y`, refined with a three-point parabola.
pub fn refined_peak(y: &[f64]) -> Option<f64> {
    let (i, _) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if i == 0 || i + 1 == y.len() {
        return Some(i as f64);
    }
    let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
    let denom = a - 2.0 * b + c;
    if denom.abs() < f64::MIN_POSITIVE {
        return Some(i as f64);
    }
    Some(i as f64 + 0.5 * (a - c) / denom)
}

/// Time of the envelope maximum of a trace.
///
/// The envelope is invariant under constant phase rotation, so for a 2D
/// far-field arrival it peaks at the travel time plus the pulse centre.
pub fn envelope_peak_time(trace: &[f64], time: &TimeAxis) -> Option<f64> {
    refined_peak(&envelope(trace)).map(|k| time.t0 + k * time.dt)
}

/// Local maxima of `y` above `rel` times the global maximum, at least
/// `min_sep` samples apart (larger peak wins).
pub fn significant_peaks(y: &[f64], rel: f64, min_sep: usize) -> Vec<usize> {
    let ymax = y.iter().fold(0.0f64, |m, v| m.max(*v));
    if ymax <= 0.0 {
        return Vec::new();
    }
    let mut cands: Vec<usize> = (0..y.len())
        .filter(|&i| {
            let l = if i > 0 { y[i - 1] } else { f64::NEG_INFINITY };
            let r = if i + 1 < y.len() { y[i + 1] } else { f64::NEG_INFINITY };
            y[i] >= rel * ymax && y[i] >= l && y[i] > r
        })
        .collect();
    cands.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    let mut kept: Vec<usize> = Vec::new();
    for c in cands {
        if kept.iter().all(|&k| k.abs_diff(c) >= min_sep) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept
}
