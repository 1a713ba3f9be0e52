//! Natural cubic spline resampling from a uniform fine axis onto arbitrary
//! output times, as an explicit linear operator with an exact transpose.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SplineResampler {
    n_in: usize,
    h: f64,
    // Thomas factorisation of tridiag(1, 4, 1) on the interior knots
    cprime: Vec<f64>,
    denom: Vec<f64>,
    taps: Vec<Tap>,
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    j: usize,
    a: f64,
    b: f64,
    ma: f64,
    mb: f64,
}

impl SplineResampler {
    /// Input samples at `s0 + j*h` for `j < n_in`; outputs at `times`.
    /// Output times must lie inside the input span (up to rounding).
    pub fn new(n_in: usize, s0: f64, h: f64, times: &[f64]) -> Result<Self> {
        if n_in < 2 || !(h > 0.0) {
            return Err(Error::invalid("spline needs at least two knots and positive spacing"));
        }
        let s_last = s0 + (n_in - 1) as f64 * h;
        let tol = 1e-9 * h;
        let mut taps = Vec::with_capacity(times.len());
        for &t in times {
            if t < s0 - tol || t > s_last + tol {
                return Err(Error::invalid(format!("output time {t} outside spline span [{s0}, {s_last}]")));
            }
            let x = ((t - s0) / h).clamp(0.0, (n_in - 1) as f64);
            let j = (x.floor() as usize).min(n_in - 2);
            let b = x - j as f64;
            let a = 1.0 - b;
            let c = h * h / 6.0;
            taps.push(Tap { j, a, b, ma: (a * a * a - a) * c, mb: (b * b * b - b) * c });
        }
        let m = n_in.saturating_sub(2);
        let mut cprime = vec![0.0; m];
        let mut denom = vec![0.0; m];
        for i in 0..m {
            let prev = if i == 0 { 0.0 } else { cprime[i - 1] };
            denom[i] = 4.0 - prev;
            cprime[i] = 1.0 / denom[i];
        }
        Ok(Self { n_in, h, cprime, denom, taps })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.taps.len()
    }

    fn solve_tridiag(&self, rhs: &mut [f64]) {
        let m = rhs.len();
        if m == 0 {
            return;
        }
        rhs[0] /= self.denom[0];
        for i in 1..m {
            rhs[i] = (rhs[i] - rhs[i - 1]) / self.denom[i];
        }
        for i in (0..m - 1).rev() {
            rhs[i] -= self.cprime[i] * rhs[i + 1];
        }
    }

    /// Second derivatives at the knots (natural end conditions).
    fn curvature(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n_in;
        let mut mm = vec![0.0; n];
        if n > 2 {
            let s = 6.0 / (self.h * self.h);
            let interior = &mut mm[1..n - 1];
            for (i, v) in interior.iter_mut().enumerate() {
                *v = s * (y[i] - 2.0 * y[i + 1] + y[i + 2]);
            }
            self.solve_tridiag(interior);
        }
        mm
    }

    pub fn apply(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.n_in);
        assert_eq!(out.len(), self.taps.len());
        let mm = self.curvature(y);
        for (o, tap) in out.iter_mut().zip(&self.taps) {
            let j = tap.j;
            *o = tap.a * y[j] + tap.b * y[j + 1] + tap.ma * mm[j] + tap.mb * mm[j + 1];
        }
    }

    /// Exact transpose of [`apply`](Self::apply), accumulated into `y`.
    pub fn apply_transpose(&self, z: &[f64], y: &mut [f64]) {
        assert_eq!(z.len(), self.taps.len());
        assert_eq!(y.len(), self.n_in);
        let n = self.n_in;
        let mut mbar = vec![0.0; n];
        for (zk, tap) in z.iter().zip(&self.taps) {
            let j = tap.j;
            y[j] += tap.a * zk;
            y[j + 1] += tap.b * zk;
            mbar[j] += tap.ma * zk;
            mbar[j + 1] += tap.mb * zk;
        }
        if n > 2 {
            let s = 6.0 / (self.h * self.h);
            let interior = &mut mbar[1..n - 1];
            // the system matrix is symmetric, so its inverse transpose is itself
            self.solve_tridiag(interior);
            for (i, r) in interior.iter().enumerate() {
                y[i] += s * r;
                y[i + 1] -= 2.0 * s * r;
                y[i + 2] += s * r;
            }
        }
    }
}
