//! Staggered first-derivative stencils on halo-padded arrays.
//!
//! Arrays hold `(nx + 2H) * (nz + 2H)` values with z fastest and a halo of
//! `H` zeros that is never written, so the forward difference `D+` (samples
//! at half points) and the backward difference `D-` satisfy `D- = -(D+)^T`
//! exactly.

use crate::error::{Error, Result};

pub const HALO: usize = 4;

/// Taylor coefficients of the half-point first-derivative stencil.
pub fn coefficients(order: usize) -> Result<&'static [f64]> {
    const C2: [f64; 1] = [1.0];
    const C4: [f64; 2] = [9.0 / 8.0, -1.0 / 24.0];
    const C6: [f64; 3] = [75.0 / 64.0, -25.0 / 384.0, 3.0 / 640.0];
    const C8: [f64; 4] = [1225.0 / 1024.0, -245.0 / 3072.0, 49.0 / 5120.0, -5.0 / 7168.0];
    match order {
        2 => Ok(&C2),
        4 => Ok(&C4),
        6 => Ok(&C6),
        8 => Ok(&C8),
        _ => Err(Error::invalid(format!("spatial order must be 2, 4, 6 or 8, got {order}"))),
    }
}

/// Shape of a halo-padded field.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub nx: usize,
    pub nz: usize,
    pub stride: usize,
}

impl Layout {
    pub fn new(nx: usize, nz: usize) -> Self {
        Self { nx, nz, stride: nz + 2 * HALO }
    }

    pub fn len(&self) -> usize {
        (self.nx + 2 * HALO) * self.stride
    }

    #[inline]
    pub fn idx(&self, ix: usize, iz: usize) -> usize {
        (ix + HALO) * self.stride + iz + HALO
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.len()]
    }

    #[inline]
    fn row(&self, ix: usize) -> usize {
        (ix + HALO) * self.stride + HALO
    }
}

/// Scaled stencil coefficients `c_k / dx`, `c_k / dz`.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub cx: [f64; 4],
    pub cz: [f64; 4],
    pub half: usize,
}

impl Stencil {
    pub fn new(order: usize, dx: f64, dz: f64) -> Result<Self> {
        let c = coefficients(order)?;
        let mut cx = [0.0; 4];
        let mut cz = [0.0; 4];
        for (k, &ck) in c.iter().enumerate() {
            cx[k] = ck / dx;
            cz[k] = ck / dz;
        }
        Ok(Self { cx, cz, half: c.len() })
    }

    /// `vx = eta * (vx + sx * Dx+ src)`, `vz = eta * (vz + sz * Dz+ src)`.
    ///
    /// `sx`, `sz` are per-point scale fields (already including the sign and
    /// the time step).
    pub fn grad_update(
        &self,
        lay: &Layout,
        src: &[f64],
        sx: &[f64],
        sz: &[f64],
        eta: &[f64],
        vx: &mut [f64],
        vz: &mut [f64],
    ) {
        let (nz, st) = (lay.nz, lay.stride);
        let cx = self.cx;
        let cz = self.cz;
        for ix in 0..lay.nx {
            let r = lay.row(ix);
            let s0 = &src[r - HALO..r + nz + HALO];
            let sp1 = &src[r + st..r + st + nz];
            let sp2 = &src[r + 2 * st..r + 2 * st + nz];
            let sp3 = &src[r + 3 * st..r + 3 * st + nz];
            let sp4 = &src[r + 4 * st..r + 4 * st + nz];
            let sm1 = &src[r - st..r - st + nz];
            let sm2 = &src[r - 2 * st..r - 2 * st + nz];
            let sm3 = &src[r - 3 * st..r - 3 * st + nz];
            let vxr = &mut vx[r..r + nz];
            let sxr = &sx[r..r + nz];
            let er = &eta[r..r + nz];
            for iz in 0..nz {
                let d = cx[0] * (sp1[iz] - s0[iz + HALO])
                    + cx[1] * (sp2[iz] - sm1[iz])
                    + cx[2] * (sp3[iz] - sm2[iz])
                    + cx[3] * (sp4[iz] - sm3[iz]);
                vxr[iz] = er[iz] * (vxr[iz] + sxr[iz] * d);
            }
            let vzr = &mut vz[r..r + nz];
            let szr = &sz[r..r + nz];
            for iz in 0..nz {
                let c = iz + HALO;
                let d = cz[0] * (s0[c + 1] - s0[c])
                    + cz[1] * (s0[c + 2] - s0[c - 1])
                    + cz[2] * (s0[c + 3] - s0[c - 2])
                    + cz[3] * (s0[c + 4] - s0[c - 3]);
                vzr[iz] = er[iz] * (vzr[iz] + szr[iz] * d);
            }
        }
    }

    /// `out = Dx- vx + Dz- vz` on the interior.
    pub fn divergence(&self, lay: &Layout, vx: &[f64], vz: &[f64], out: &mut [f64]) {
        let (nz, st) = (lay.nz, lay.stride);
        let cx = self.cx;
        let cz = self.cz;
        for ix in 0..lay.nx {
            let r = lay.row(ix);
            let x0 = &vx[r..r + nz];
            let xp1 = &vx[r + st..r + st + nz];
            let xp2 = &vx[r + 2 * st..r + 2 * st + nz];
            let xp3 = &vx[r + 3 * st..r + 3 * st + nz];
            let xm1 = &vx[r - st..r - st + nz];
            let xm2 = &vx[r - 2 * st..r - 2 * st + nz];
            let xm3 = &vx[r - 3 * st..r - 3 * st + nz];
            let xm4 = &vx[r - 4 * st..r - 4 * st + nz];
            let z0 = &vz[r - HALO..r + nz + HALO];
            let o = &mut out[r..r + nz];
            for iz in 0..nz {
                let c = iz + HALO;
                let dxv = cx[0] * (x0[iz] - xm1[iz])
                    + cx[1] * (xp1[iz] - xm2[iz])
                    + cx[2] * (xp2[iz] - xm3[iz])
                    + cx[3] * (xp3[iz] - xm4[iz]);
                let dzv = cz[0] * (z0[c] - z0[c - 1])
                    + cz[1] * (z0[c + 1] - z0[c - 2])
                    + cz[2] * (z0[c + 2] - z0[c - 3])
                    + cz[3] * (z0[c + 3] - z0[c - 4]);
                o[iz] = dxv + dzv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fill(lay: &Layout, seed: u64) -> Vec<f64> {
        let mut v = lay.zeros();
        let mut s = seed;
        for ix in 0..lay.nx {
            for iz in 0..lay.nz {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v[lay.idx(ix, iz)] = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            }
        }
        v
    }

    #[test]
    fn backward_difference_is_minus_transpose() {
        let lay = Layout::new(13, 9);
        let st = Stencil::new(8, 3.0, 5.0).unwrap();
        let p = fill(&lay, 1);
        let qx = fill(&lay, 2);
        let qz = fill(&lay, 3);
        let ones = {
            let mut o = lay.zeros();
            for ix in 0..lay.nx {
                for iz in 0..lay.nz {
                    o[lay.idx(ix, iz)] = 1.0;
                }
            }
            o
        };
        // gx = D+ p via the update kernel with zero start
        let (mut gx, mut gz) = (lay.zeros(), lay.zeros());
        st.grad_update(&lay, &p, &ones, &ones, &ones, &mut gx, &mut gz);
        let mut div = lay.zeros();
        st.divergence(&lay, &qx, &qz, &mut div);
        let lhs: f64 =
            gx.iter().zip(&qx).map(|(a, b)| a * b).sum::<f64>() + gz.iter().zip(&qz).map(|(a, b)| a * b).sum::<f64>();
        let rhs: f64 = -p.iter().zip(&div).map(|(a, b)| a * b).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn eighth_order_derivative_of_polynomial() {
        // D+ of a cubic in x is exact at half points
        let lay = Layout::new(20, 3);
        let st = Stencil::new(8, 0.5, 1.0).unwrap();
        let mut p = lay.zeros();
        let f = |x: f64| 0.3 * x * x * x - x * x + 2.0 * x;
        let df = |x: f64| 0.9 * x * x - 2.0 * x + 2.0;
        for ix in 0..lay.nx {
            for iz in 0..lay.nz {
                p[lay.idx(ix, iz)] = f(0.5 * ix as f64);
            }
        }
        let mut ones = lay.zeros();
        ones.iter_mut().for_each(|v| *v = 1.0);
        let (mut gx, mut gz) = (lay.zeros(), lay.zeros());
        st.grad_update(&lay, &p, &ones, &ones, &ones, &mut gx, &mut gz);
        for ix in 4..lay.nx - 5 {
            let x = 0.5 * (ix as f64 + 0.5);
            assert!((gx[lay.idx(ix, 1)] - df(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn unsupported_order() {
        assert!(coefficients(10).is_err());
        assert!(coefficients(2).is_ok());
    }
}
