//! Simple Grid Format.
//!
//! An ASCII header of `key=value` lines terminated by one blank line, then
//! little-endian `f32` samples with axis 1 fastest. Recognised keys are
//! `n1..n3`, `d1..d3`, `o1..o3`, `label1..label3` and `unit1..unit3`; only
//! `n1` is required, missing axes default to `n=1, d=1, o=0`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{DataVolume, FilterField, GridGeometry, ModelGrid, TimeAxis};

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub n: usize,
    pub d: f64,
    pub o: f64,
    pub label: String,
    pub unit: String,
}

impl Default for Axis {
    fn default() -> Self {
        Self { n: 1, d: 1.0, o: 0.0, label: String::new(), unit: String::new() }
    }
}

impl Axis {
    pub fn new(n: usize, d: f64, o: f64) -> Self {
        Self { n, d, o, ..Default::default() }
    }

    pub fn labeled(mut self, label: &str, unit: &str) -> Self {
        self.label = label.to_string();
        self.unit = unit.to_string();
        self
    }

    fn is_default(&self) -> bool {
        *self == Axis::default()
    }
}

/// Up to three axes of `f32` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SgfArray {
    pub axes: [Axis; 3],
    pub samples: Vec<f32>,
}

impl SgfArray {
    pub fn new(axes: Vec<Axis>, samples: Vec<f32>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(Error::invalid(format!("SGF supports 1 to 3 axes, got {}", axes.len())));
        }
        let mut full: [Axis; 3] = Default::default();
        for (slot, a) in full.iter_mut().zip(axes) {
            *slot = a;
        }
        let expected: usize = full.iter().map(|a| a.n).product();
        if expected != samples.len() {
            return Err(Error::invalid(format!("axes describe {expected} samples but {} were given", samples.len())));
        }
        Ok(Self { axes: full, samples })
    }

    pub fn from_f64(axes: Vec<Axis>, samples: &[f64]) -> Result<Self> {
        Self::new(axes, samples.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&v| v as f64).collect()
    }

    /// Number of leading axes that are written to the header.
    pub fn ndim(&self) -> usize {
        let mut k = 3;
        while k > 1 && self.axes[k - 1].is_default() {
            k -= 1;
        }
        k
    }

    pub fn header(&self) -> String {
        let nd = self.ndim();
        let mut lines = Vec::new();
        for (i, a) in self.axes[..nd].iter().enumerate() {
            lines.push(format!("n{}={}", i + 1, a.n));
        }
        for (i, a) in self.axes[..nd].iter().enumerate() {
            lines.push(format!("d{}={}", i + 1, a.d));
        }
        for (i, a) in self.axes[..nd].iter().enumerate() {
            if a.o != 0.0 || a.o.is_sign_negative() {
                lines.push(format!("o{}={}", i + 1, a.o));
            }
        }
        for (i, a) in self.axes[..nd].iter().enumerate() {
            if !a.label.is_empty() {
                lines.push(format!("label{}={}", i + 1, a.label));
            }
        }
        for (i, a) in self.axes[..nd].iter().enumerate() {
            if !a.unit.is_empty() {
                lines.push(format!("unit{}={}", i + 1, a.unit));
            }
        }
        let mut h = lines.join("\n");
        h.push_str("\n\n");
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header().into_bytes();
        out.reserve(4 * self.samples.len());
        for v in &self.samples {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn parse(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::Sgf { path: path.to_path_buf(), msg };
        let end = find_header_end(bytes).ok_or_else(|| bad("no blank line terminating the header".into()))?;
        let text = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not valid UTF-8".into()))?;
        let mut axes: [Axis; 3] = Default::default();
        let mut have_n1 = false;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key=value, got {line:?}", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            let (name, idx) = split_key(key).ok_or_else(|| bad(format!("unknown key {key:?}")))?;
            let axis = &mut axes[idx];
            let num =
                |v: &str| -> Result<f64> { v.parse::<f64>().map_err(|_| bad(format!("key {key}: bad number {v:?}"))) };
            match name {
                "n" => {
                    axis.n = value.parse().map_err(|_| bad(format!("key {key}: bad count {value:?}")))?;
                    if idx == 0 {
                        have_n1 = true;
                    }
                }
                "d" => axis.d = num(value)?,
                "o" => axis.o = num(value)?,
                "label" => axis.label = value.to_string(),
                "unit" => axis.unit = value.to_string(),
                _ => unreachable!(),
            }
        }
        if !have_n1 {
            return Err(bad("required key n1 missing".into()));
        }
        let count: usize = axes.iter().map(|a| a.n).product();
        let payload = &bytes[end..];
        if payload.len() < 4 * count {
            return Err(bad(format!("truncated payload: expected {} bytes, found {}", 4 * count, payload.len())));
        }
        if payload.len() > 4 * count {
            return Err(bad(format!("payload has {} trailing bytes", payload.len() - 4 * count)));
        }
        let samples = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        Ok(Self { axes, samples })
    }
}

/// Offset of the first payload byte (just past "\n\n").
fn find_header_end(bytes: &[u8]) -> Option<usize> {
    if bytes.first() == Some(&b'\n') {
        return Some(1);
    }
    bytes.windows(2).position(|w| w == b"\n\n").map(|p| p + 2)
}

fn split_key(key: &str) -> Option<(&'static str, usize)> {
    for name in ["label", "unit", "n", "d", "o"] {
        if let Some(rest) = key.strip_prefix(name) {
            return match rest {
                "1" => Some((name, 0)),
                "2" => Some((name, 1)),
                "3" => Some((name, 2)),
                _ => None,
            };
        }
    }
    None
}

pub fn write_sgf(array: &SgfArray, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let expected: usize = array.axes.iter().map(|a| a.n).product();
    if expected != array.samples.len() {
        return Err(Error::invalid(format!(
            "{}: axes describe {expected} samples but array holds {}",
            path.display(),
            array.samples.len()
        )));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&array.to_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_sgf(path: impl AsRef<Path>) -> Result<SgfArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    SgfArray::parse(&bytes, path)
}

// Conversions between the toolkit's types and SGF arrays.

pub fn grid_axes(g: &GridGeometry) -> Vec<Axis> {
    vec![Axis::new(g.nz, g.dz, g.oz).labeled("z", "m"), Axis::new(g.nx, g.dx, g.ox).labeled("x", "m")]
}

pub fn grid_field_to_sgf(g: &GridGeometry, values: &[f64]) -> Result<SgfArray> {
    SgfArray::from_f64(grid_axes(g), values)
}

pub fn kappa_to_sgf(m: &ModelGrid) -> Result<SgfArray> {
    grid_field_to_sgf(&m.geom, &m.kappa)
}

/// Grid geometry encoded in a 2-axis SGF array (z fast, x slow).
pub fn sgf_grid_geometry(a: &SgfArray) -> Result<GridGeometry> {
    let (z, x) = (&a.axes[0], &a.axes[1]);
    if a.axes[2].n != 1 {
        return Err(Error::invalid("model file must have two axes"));
    }
    GridGeometry::new(x.n, z.n, x.d, z.d, x.o, z.o)
}

/// Bulk modulus file plus constant buoyancy.
pub fn model_from_sgf(a: &SgfArray, beta: f64) -> Result<ModelGrid> {
    let geom = sgf_grid_geometry(a)?;
    ModelGrid::new(geom, a.to_f64(), vec![beta; geom.len()])
}

pub fn data_to_sgf(d: &DataVolume) -> Result<SgfArray> {
    SgfArray::from_f64(
        vec![
            Axis::new(d.time.nt, d.time.dt, d.time.t0).labeled("time", "s"),
            Axis::new(d.nr, 1.0, 0.0).labeled("receiver", "index"),
            Axis::new(d.ns, 1.0, 0.0).labeled("source", "index"),
        ],
        &d.traces,
    )
}

pub fn data_from_sgf(a: &SgfArray) -> Result<DataVolume> {
    let t = &a.axes[0];
    let time = TimeAxis::new(t.n, t.d, t.o)?;
    DataVolume::from_traces(a.axes[2].n, a.axes[1].n, time, a.to_f64())
}

pub fn filter_to_sgf(u: &FilterField) -> Result<SgfArray> {
    let h = u.half() as f64;
    SgfArray::from_f64(
        vec![
            Axis::new(u.nu, u.du, -h * u.du).labeled("lag", "s"),
            Axis::new(u.nr, 1.0, 0.0).labeled("receiver", "index"),
            Axis::new(u.ns, 1.0, 0.0).labeled("source", "index"),
        ],
        &u.traces,
    )
}

pub fn filter_from_sgf(a: &SgfArray) -> Result<FilterField> {
    let lag = &a.axes[0];
    let mut u = FilterField::zeros(a.axes[2].n, a.axes[1].n, lag.n, lag.d)?;
    u.traces = a.to_f64();
    Ok(u)
}

pub fn trace_to_sgf(time: &TimeAxis, samples: &[f64]) -> Result<SgfArray> {
    SgfArray::from_f64(vec![Axis::new(time.nt, time.dt, time.t0).labeled("time", "s")], samples)
}
