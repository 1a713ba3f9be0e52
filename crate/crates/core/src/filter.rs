//! Trace-wise adaptive filters: the truncated convolution `K[u]p`, its two
//! transposes, and the regularised normal equation
//! `(S^T S + alpha^2 t^2 + sigma^2) u = S^T d` with `S u = K[u] p`.
//!
//! Per trace, with `h` the zero-lag index,
//! `(K[u]p)_i = du * sum_j u_j p_{i-j+h}` over indices inside the window.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{DataVolume, FilterField};

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub alpha: f64,
    pub sigma: f64,
    /// Relative reduction of the normal residual that stops CG.
    pub rho: f64,
    pub max_cg_iters: usize,
    /// Filter half-support (s).
    pub lag_halfwidth: f64,
    /// Lag window (s) of the focus diagnostic.
    pub focus_window: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self { alpha: 1e-4, sigma: 1e-5, rho: 0.01, max_cg_iters: 500, lag_halfwidth: 0.4, focus_window: 0.085 }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::invalid(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.lag_halfwidth >= 0.0) || !(self.focus_window >= 0.0) {
            return Err(Error::invalid("lag windows must be non-negative"));
        }
        Ok(())
    }
}

fn conv_trace(u: &[f64], p: &[f64], du: f64, out: &mut [f64]) {
    let (nt, nu, h) = (p.len(), u.len(), u.len() / 2);
    for (i, o) in out.iter_mut().enumerate() {
        // j with 0 <= i - j + h < nt
        let jlo = (i + h + 1).saturating_sub(nt);
        let jhi = (i + h).min(nu - 1);
        let mut s = 0.0;
        for j in jlo..=jhi {
            s += u[j] * p[i + h - j];
        }
        *o = du * s;
    }
}

fn conv_transpose_data(u: &[f64], r: &[f64], du: f64, out: &mut [f64]) {
    let (nt, nu, h) = (r.len(), u.len(), u.len() / 2);
    for (k, o) in out.iter_mut().enumerate() {
        // j with 0 <= k + j - h < nt
        let jlo = h.saturating_sub(k);
        let jhi = (nt + h - 1 - k).min(nu - 1);
        let mut s = 0.0;
        for j in jlo..=jhi {
            s += u[j] * r[k + j - h];
        }
        *o = du * s;
    }
}

fn correlate_trace(p: &[f64], r: &[f64], dt: f64, out: &mut [f64]) {
    let (nt, h) = (p.len(), out.len() / 2);
    for (j, o) in out.iter_mut().enumerate() {
        // i with 0 <= i - j + h < nt
        let ilo = j.saturating_sub(h);
        let ihi = (nt + j).saturating_sub(h + 1).min(nt - 1);
        let mut s = 0.0;
        if ilo <= ihi {
            for i in ilo..=ihi {
                s += r[i] * p[i + h - j];
            }
        }
        *o = dt * s;
    }
}

fn check_filter_data(u: &FilterField, p: &DataVolume) -> Result<()> {
    u.check_pairs_with(p)?;
    if u.nu > 2 * p.nt() - 1 {
        return Err(Error::AxisMismatch(format!("filter with {} lags is longer than the traces allow", u.nu)));
    }
    Ok(())
}

/// `K[u] p`, trace by trace.
pub fn apply_filter(u: &FilterField, p: &DataVolume) -> Result<DataVolume> {
    check_filter_data(u, p)?;
    let nt = p.nt();
    let mut out = p.zeros_like();
    out.traces
        .par_chunks_mut(nt)
        .enumerate()
        .for_each(|(k, o)| conv_trace(&u.traces[k * u.nu..(k + 1) * u.nu], &p.traces[k * nt..(k + 1) * nt], u.du, o));
    Ok(out)
}

/// `K[u]^T r`: transpose of [`apply_filter`] in its data argument.
pub fn adjoint_filter_data(u: &FilterField, r: &DataVolume) -> Result<DataVolume> {
    check_filter_data(u, r)?;
    let nt = r.nt();
    let mut out = r.zeros_like();
    out.traces.par_chunks_mut(nt).enumerate().for_each(|(k, o)| {
        conv_transpose_data(&u.traces[k * u.nu..(k + 1) * u.nu], &r.traces[k * nt..(k + 1) * nt], u.du, o)
    });
    Ok(out)
}

/// `S^T r` for `S u = K[u] p`: a lag-windowed correlation with `nu` lags.
pub fn adjoint_filter_u(p: &DataVolume, r: &DataVolume, nu: usize) -> Result<FilterField> {
    p.check_same_shape(r, "filter correlation")?;
    let mut out = FilterField::zeros(p.ns, p.nr, nu, p.time.dt)?;
    check_filter_data(&out, p)?;
    let nt = p.nt();
    let dt = p.time.dt;
    out.traces
        .par_chunks_mut(nu)
        .enumerate()
        .for_each(|(k, o)| correlate_trace(&p.traces[k * nt..(k + 1) * nt], &r.traces[k * nt..(k + 1) * nt], dt, o));
    Ok(out)
}

/// Normal operator `(S^T S + alpha^2 t^2 + sigma^2) u` at fixed `p`.
pub fn normal_operator(p: &DataVolume, u: &FilterField, alpha: f64, sigma: f64) -> Result<FilterField> {
    check_filter_data(u, p)?;
    let nt = p.nt();
    let (nu, du, dt) = (u.nu, u.du, p.time.dt);
    let h = u.half();
    let (a2, s2) = (alpha * alpha, sigma * sigma);
    let mut out = u.zeros_like();
    out.traces.par_chunks_mut(nu).enumerate().for_each_init(
        || vec![0.0; nt],
        |buf, (k, o)| {
            let pk = &p.traces[k * nt..(k + 1) * nt];
            let uk = &u.traces[k * nu..(k + 1) * nu];
            conv_trace(uk, pk, du, buf);
            correlate_trace(pk, buf, dt, o);
            for (j, (oj, &uj)) in o.iter_mut().zip(uk).enumerate() {
                let t = (j as f64 - h as f64) * du;
                *oj += (a2 * t * t + s2) * uj;
            }
        },
    );
    Ok(out)
}

/// Per-trace matrices of the normal operator, `nu x nu` each, row-major.
struct NormalMatrices {
    nu: usize,
    mats: Vec<f64>,
}

impl NormalMatrices {
    /// `(S^T S)_{jk} = dt du sum_m p_m p_{m+j-k}` over the window rows, built
    /// from running sums of lagged products, plus the diagonal penalty.
    fn new(p: &DataVolume, nu: usize, du: f64, alpha: f64, sigma: f64) -> Self {
        let nt = p.nt();
        let (h, dt) = (nu / 2, p.time.dt);
        let (a2, s2) = (alpha * alpha, sigma * sigma);
        let mut mats = vec![0.0; p.ntraces() * nu * nu];
        mats.par_chunks_mut(nu * nu).enumerate().for_each_init(
            || vec![0.0; nt + 1],
            |run, (k, g)| {
                let pk = &p.traces[k * nt..(k + 1) * nt];
                for delta in 0..nu.min(nt) {
                    run[0] = 0.0;
                    for m in 0..nt - delta {
                        run[m + 1] = run[m] + pk[m] * pk[m + delta];
                    }
                    for j in delta..nu {
                        let kk = j - delta;
                        let lo = h.saturating_sub(j);
                        let hi = (nt - delta).min(nt + h - j);
                        let v = if lo < hi { dt * du * (run[hi] - run[lo]) } else { 0.0 };
                        g[j * nu + kk] = v;
                        g[kk * nu + j] = v;
                    }
                }
                for j in 0..nu {
                    let t = (j as f64 - h as f64) * du;
                    g[j * nu + j] += a2 * t * t + s2;
                }
            },
        );
        Self { nu, mats }
    }

    fn apply(&self, u: &FilterField, out: &mut FilterField) {
        let nu = self.nu;
        out.traces.par_chunks_mut(nu).zip(u.traces.par_chunks(nu)).zip(self.mats.par_chunks(nu * nu)).for_each(
            |((o, uk), g)| {
                for (j, oj) in o.iter_mut().enumerate() {
                    *oj = g[j * nu..(j + 1) * nu].iter().zip(uk).map(|(a, b)| a * b).sum();
                }
            },
        );
    }
}

#[derive(Debug, Clone)]
pub struct FilterSolve {
    pub u: FilterField,
    pub cg_iters: usize,
    /// Final normal-residual norm relative to the initial one.
    pub rel_residual: f64,
    /// Quadratic model `0.5 <u, A u> - <u, b>` after each iteration.
    pub energy: Vec<f64>,
}

/// Conjugate gradients on the normal equation, all traces jointly, from `u = 0`.
pub fn solve_normal(p: &DataVolume, d: &DataVolume, cfg: &PenaltyConfig) -> Result<FilterSolve> {
    cfg.validate()?;
    p.check_same_shape(d, "filter estimation")?;
    let half = (cfg.lag_halfwidth / p.time.dt).round() as usize;
    let nu = 2 * half + 1;
    let b = adjoint_filter_u(p, d, nu)?;
    let mut u = b.zeros_like();
    let r0 = b.norm_sq().sqrt();
    if r0 == 0.0 {
        return Ok(FilterSolve { u, cg_iters: 0, rel_residual: 0.0, energy: Vec::new() });
    }
    let mut r = b.clone();
    let mut dir = b.clone();
    let mut rr = r0 * r0;
    let mut energy = Vec::new();
    let mut iters = 0;
    let op = NormalMatrices::new(p, nu, p.time.dt, cfg.alpha, cfg.sigma);
    let mut ad = b.zeros_like();
    while iters < cfg.max_cg_iters && rr.sqrt() >= cfg.rho * r0 {
        op.apply(&dir, &mut ad);
        let dad = dir.dot(&ad);
        if !(dad > 0.0) {
            return Err(Error::CgDiverged { ratio: rr.sqrt() / r0 });
        }
        let step = rr / dad;
        for i in 0..u.traces.len() {
            u.traces[i] += step * dir.traces[i];
            r.traces[i] -= step * ad.traces[i];
        }
        let rr_new = r.norm_sq();
        iters += 1;
        // A u = b - r, so the quadratic model is -<u, b + r> / 2
        energy.push(-0.5 * (u.dot(&b) + u.dot(&r)));
        let ratio = rr_new.sqrt() / r0;
        if !ratio.is_finite() || ratio > 10.0 {
            return Err(Error::CgDiverged { ratio });
        }
        let beta = rr_new / rr;
        for i in 0..dir.traces.len() {
            dir.traces[i] = r.traces[i] + beta * dir.traces[i];
        }
        rr = rr_new;
    }
    Ok(FilterSolve { u, cg_iters: iters, rel_residual: rr.sqrt() / r0, energy })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyTerms {
    /// `0.5 |K[u]p - d|^2`
    pub misfit: f64,
    /// `0.5 alpha^2 |t u|^2`
    pub lagpen: f64,
    /// `0.5 sigma^2 |u|^2`
    pub reg: f64,
    /// Share of filter energy inside the focus window.
    pub focus: f64,
}

impl PenaltyTerms {
    pub fn total(&self) -> f64 {
        self.misfit + self.lagpen + self.reg
    }
}

/// `|t u|` with the lag quadrature.
pub fn lag_moment(u: &FilterField) -> f64 {
    let mut s = 0.0;
    for tr in u.traces.chunks(u.nu) {
        for (j, v) in tr.iter().enumerate() {
            s += (u.lag(j) * v).powi(2);
        }
    }
    (u.du * s).sqrt()
}

/// Fraction of `sum |u|^2` carried by lags with `|t| <= window`.
pub fn focus_fraction(u: &FilterField, window: f64) -> f64 {
    let tol = 1e-9 * u.du;
    let (mut inside, mut total) = (0.0, 0.0);
    for tr in u.traces.chunks(u.nu) {
        for (j, v) in tr.iter().enumerate() {
            let e = v * v;
            total += e;
            if u.lag(j).abs() <= window + tol {
                inside += e;
            }
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        0.0
    }
}

pub fn penalty_terms(u: &FilterField, p: &DataVolume, d: &DataVolume, cfg: &PenaltyConfig) -> Result<PenaltyTerms> {
    p.check_same_shape(d, "penalty evaluation")?;
    let res = apply_filter(u, p)?.minus(d)?;
    Ok(PenaltyTerms {
        misfit: 0.5 * res.norm_sq(),
        lagpen: 0.5 * (cfg.alpha * lag_moment(u)).powi(2),
        reg: 0.5 * cfg.sigma * cfg.sigma * u.norm_sq(),
        focus: focus_fraction(u, cfg.focus_window),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaTrial {
    pub alpha: f64,
    /// `|K[u]p - d| / |d|`
    pub rel_error: f64,
    pub lag_moment: f64,
    pub focus: f64,
    pub cg_iters: usize,
    /// CG aborted; the other columns are NaN.
    pub diverged: bool,
}

/// Solves the inner problem for each `alpha` and returns the table together
/// with the largest `alpha` whose filtered prediction misses `d` by less
/// than `tol * |d|`. Trials whose CG diverges are kept as rejected rows.
pub fn choose_alpha(
    p: &DataVolume,
    d: &DataVolume,
    cfg: &PenaltyConfig,
    alphas: &[f64],
    tol: f64,
) -> Result<(Vec<AlphaTrial>, Option<f64>)> {
    let dn = d.norm();
    let mut table = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let c = PenaltyConfig { alpha, ..cfg.clone() };
        let sol = match solve_normal(p, d, &c) {
            Ok(sol) => sol,
            Err(Error::CgDiverged { .. }) => {
                let nan = f64::NAN;
                table.push(AlphaTrial {
                    alpha,
                    rel_error: nan,
                    lag_moment: nan,
                    focus: nan,
                    cg_iters: 0,
                    diverged: true,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let res = apply_filter(&sol.u, p)?.minus(d)?;
        table.push(AlphaTrial {
            alpha,
            rel_error: if dn > 0.0 { res.norm() / dn } else { 0.0 },
            lag_moment: lag_moment(&sol.u),
            focus: focus_fraction(&sol.u, cfg.focus_window),
            cg_iters: sol.cg_iters,
            diverged: false,
        });
    }
    let best = table
        .iter()
        .filter(|t| t.rel_error < tol)
        .map(|t| t.alpha)
        .fold(None, |m: Option<f64>, a| Some(m.map_or(a, |m| m.max(a))));
    Ok((table, best))
}

/// `alpha = 10^k` for `k` in `lo..=hi`.
pub fn alpha_sweep(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 10f64.powi(k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TimeAxis;

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    fn data(ns: usize, nr: usize, nt: usize, seed: u64) -> DataVolume {
        let t = TimeAxis::new(nt, 0.01, 0.0).unwrap();
        DataVolume::from_traces(ns, nr, t, pseudo(ns * nr * nt, seed)).unwrap()
    }

    #[test]
    fn delta_is_identity() {
        let p = data(2, 3, 40, 1);
        let u = FilterField::delta(2, 3, 11, 0.01).unwrap();
        let q = apply_filter(&u, &p).unwrap();
        for (a, b) in q.traces.iter().zip(&p.traces) {
            assert!((a - b).abs() < 1e-14);
        }
        let q = adjoint_filter_data(&u, &p).unwrap();
        for (a, b) in q.traces.iter().zip(&p.traces) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn normal_matrices_match_operator() {
        for (nt, nu) in [(40, 11), (12, 23), (30, 1)] {
            let p = data(2, 2, nt, 7);
            let mut u = FilterField::zeros(2, 2, nu, 0.01).unwrap();
            u.traces = pseudo(4 * nu, 8);
            let direct = normal_operator(&p, &u, 0.3, 0.02).unwrap();
            let mats = NormalMatrices::new(&p, nu, 0.01, 0.3, 0.02);
            let mut out = u.zeros_like();
            mats.apply(&u, &mut out);
            let scale = direct.norm_sq().sqrt();
            for (a, b) in out.traces.iter().zip(&direct.traces) {
                assert!((a - b).abs() < 1e-13 * scale, "nt {nt} nu {nu}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn matches_direct_double_loop() {
        let p = data(1, 1, 50, 2);
        let mut u = FilterField::zeros(1, 1, 21, 0.01).unwrap();
        u.traces = pseudo(21, 3);
        let q = apply_filter(&u, &p).unwrap();
        for i in 0..50i64 {
            let mut s = 0.0;
            for j in 0..21i64 {
                let k = i - (j - 10);
                if (0..50).contains(&k) {
                    s += u.traces[j as usize] * p.traces[k as usize] * 0.01;
                }
            }
            assert!((q.traces[i as usize] - s).abs() < 1e-12 * s.abs().max(1e-3));
        }
    }

    #[test]
    fn transposes_pass_dot_tests() {
        let p = data(2, 2, 37, 4);
        let r = data(2, 2, 37, 5);
        let mut u = FilterField::zeros(2, 2, 15, 0.01).unwrap();
        u.traces = pseudo(u.traces.len(), 6);
        let lhs = apply_filter(&u, &p).unwrap().dot(&r);
        let rhs = p.dot(&adjoint_filter_data(&u, &r).unwrap());
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());
        let rhs = u.dot(&adjoint_filter_u(&p, &r, 15).unwrap());
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());
    }

    #[test]
    fn zero_rhs_returns_zero_filter() {
        let p = data(1, 2, 30, 7);
        let d = p.zeros_like();
        let sol = solve_normal(&p, &d, &PenaltyConfig { lag_halfwidth: 0.05, ..Default::default() }).unwrap();
        assert_eq!(sol.cg_iters, 0);
        assert!(sol.u.traces.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn energy_decreases() {
        let p = data(2, 2, 64, 8);
        let d = data(2, 2, 64, 9);
        let cfg = PenaltyConfig { alpha: 0.3, sigma: 1e-2, rho: 1e-8, lag_halfwidth: 0.1, ..Default::default() };
        let sol = solve_normal(&p, &d, &cfg).unwrap();
        assert!(sol.energy.windows(2).all(|w| w[1] <= w[0]));
        assert!(sol.rel_residual < 1e-8);
    }

    #[test]
    fn focus_of_delta_is_one() {
        let u = FilterField::delta(1, 2, 51, 0.008).unwrap();
        assert_eq!(focus_fraction(&u, 0.085), 1.0);
        assert_eq!(lag_moment(&u), 0.0);
        assert!(PenaltyConfig { sigma: 0.0, ..Default::default() }.validate().is_err());
    }
}
