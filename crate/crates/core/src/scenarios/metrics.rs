//! Summary measures of inversion results.

use crate::model::{DataVolume, FilterField, GridGeometry};
use crate::wavelet::{envelope, significant_peaks};

/// `|a - b| / |reference|`.
pub fn relative_rms(a: &DataVolume, b: &DataVolume, reference: f64) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.traces.iter().zip(&b.traces) {
        s += (x - y) * (x - y);
    }
    (a.time.dt * s).sqrt() / reference
}

/// Root-mean-square difference of two grid fields.
pub fn field_rms(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (s / a.len().max(1) as f64).sqrt()
}

/// Traces of the middle sources and middle receivers (central half of each line).
pub fn central_pairs(ns: usize, nr: usize) -> Vec<(usize, usize)> {
    let span = |n: usize| (n / 4, n - n / 4);
    let ((s0, s1), (r0, r1)) = (span(ns), span(nr));
    (s0..s1.max(s0 + 1)).flat_map(|s| (r0..r1.max(r0 + 1)).map(move |r| (s, r))).collect()
}

/// Number of separated envelope maxima of one filter trace above `rel`
/// times its largest envelope value.
pub fn filter_peak_count(trace: &[f64], du: f64, rel: f64, min_sep: f64) -> usize {
    let env = envelope(trace);
    let sep = ((min_sep / du).round() as usize).max(1);
    significant_peaks(&env, rel, sep).len()
}

/// Statistics of per-trace peak counts over the central traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakStats {
    pub median: f64,
    pub mean: f64,
    /// Share of central traces with two or more peaks.
    pub multi_fraction: f64,
}

pub const PEAK_REL: f64 = 0.3;
pub const PEAK_SEPARATION: f64 = 0.12;

pub fn central_peak_stats(u: &FilterField) -> PeakStats {
    let mut counts: Vec<usize> = central_pairs(u.ns, u.nr)
        .into_iter()
        .map(|(s, r)| filter_peak_count(u.trace(s, r), u.du, PEAK_REL, PEAK_SEPARATION))
        .collect();
    counts.sort_unstable();
    let n = counts.len().max(1) as f64;
    let median = if counts.is_empty() {
        0.0
    } else if counts.len() % 2 == 1 {
        counts[counts.len() / 2] as f64
    } else {
        0.5 * (counts[counts.len() / 2 - 1] + counts[counts.len() / 2]) as f64
    };
    PeakStats {
        median,
        mean: counts.iter().sum::<usize>() as f64 / n,
        multi_fraction: counts.iter().filter(|&&c| c >= 2).count() as f64 / n,
    }
}

/// Sum of `|Δκ|` along a grid line over the samples whose coordinate lies
/// within `half` of `at` (a discrete line integral of `|∂κ/∂s|`).
fn line_variation(values: &[f64], coord: impl Fn(usize) -> f64, at: f64, half: f64) -> f64 {
    let mut s = 0.0;
    for i in 1..values.len() {
        let mid = 0.5 * (coord(i - 1) + coord(i));
        if (mid - at).abs() <= half {
            s += (values[i] - values[i - 1]).abs();
        }
    }
    s
}

/// Edge contrasts of a disc of radius `radius` centred at `(cx, cz)`:
/// `(top + bottom, left + right)` variations through the centre.
pub fn disc_edge_contrast(geom: &GridGeometry, kappa: &[f64], cx: f64, cz: f64, radius: f64, half: f64) -> (f64, f64) {
    let ix = (((cx - geom.ox) / geom.dx).round() as usize).min(geom.nx - 1);
    let iz = (((cz - geom.oz) / geom.dz).round() as usize).min(geom.nz - 1);
    let column: Vec<f64> = (0..geom.nz).map(|j| kappa[geom.index(ix, j)]).collect();
    let row: Vec<f64> = (0..geom.nx).map(|i| kappa[geom.index(i, iz)]).collect();
    let z = |j: usize| geom.z(j);
    let x = |i: usize| geom.x(i);
    let vertical = line_variation(&column, z, cz - radius, half) + line_variation(&column, z, cz + radius, half);
    let horizontal = line_variation(&row, x, cx - radius, half) + line_variation(&row, x, cx + radius, half);
    (vertical, horizontal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sharp_disc_has_equal_contrasts() {
        let g = GridGeometry::new(401, 201, 20.0, 20.0, 0.0, 0.0).unwrap();
        let mut k = vec![4.0; g.len()];
        for ix in 0..g.nx {
            for iz in 0..g.nz {
                if ((g.x(ix) - 4000.0).powi(2) + (g.z(iz) - 2000.0).powi(2)).sqrt() <= 1250.0 {
                    k[g.index(ix, iz)] = 4.8;
                }
            }
        }
        let (v, h) = disc_edge_contrast(&g, &k, 4000.0, 2000.0, 1250.0, 250.0);
        assert!((v - 1.6).abs() < 1e-12 && (h - 1.6).abs() < 1e-12, "{v} {h}");
    }

    #[test]
    fn central_pairs_cover_middle() {
        let p = central_pairs(20, 91);
        assert_eq!(p.first(), Some(&(5, 22)));
        assert_eq!(p.len(), 10 * 47);
    }
}
