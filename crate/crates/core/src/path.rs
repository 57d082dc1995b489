//! Fields sampled on a uniform time grid `t_n = n·dt`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{GridSpec, SpectralField};

/// A path `n ↦ u(n·dt)` of fields on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPath {
    dt: f64,
    fields: Vec<SpectralField>,
}

impl FieldPath {
    pub fn new(dt: f64, fields: Vec<SpectralField>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let Some(first) = fields.first() else {
            return Err(Error::ShortPath(0));
        };
        let grid = first.grid();
        if let Some(f) = fields.iter().find(|f| f.grid() != grid) {
            return Err(Error::GridMismatch(grid.n_modes(), f.grid().n_modes()));
        }
        Ok(Self { dt, fields })
    }

    /// `n_steps + 1` zero fields.
    pub fn zeros(grid: GridSpec, dt: f64, n_steps: usize) -> Result<Self> {
        Self::new(dt, vec![SpectralField::zeros(grid); n_steps + 1])
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> GridSpec {
        self.fields[0].grid()
    }

    /// Number of samples, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.fields.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps() as f64
    }

    pub fn at(&self, n: usize) -> &SpectralField {
        &self.fields[n]
    }

    pub fn last(&self) -> &SpectralField {
        self.fields.last().expect("paths are nonempty")
    }

    pub fn fields(&self) -> &[SpectralField] {
        &self.fields
    }

    pub fn into_fields(self) -> Vec<SpectralField> {
        self.fields
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.time(n)).collect()
    }

    /// Every `every`-th sample, with time step `every·dt`.
    pub fn subsample(&self, every: usize) -> Result<Self> {
        if every == 0 {
            return Err(Error::Config("subsample stride must be positive".into()));
        }
        let fields = self.fields.iter().step_by(every).cloned().collect();
        Self::new(self.dt * every as f64, fields)
    }

    /// The first `n_steps + 1` samples.
    pub fn truncate(&self, n_steps: usize) -> Self {
        let end = (n_steps + 1).min(self.len());
        Self { dt: self.dt, fields: self.fields[..end].to_vec() }
    }

    /// Errors unless both paths share grid, time step and length.
    pub fn check_aligned(&self, other: &Self) -> Result<()> {
        if self.grid() != other.grid() {
            return Err(Error::GridMismatch(self.grid().n_modes(), other.grid().n_modes()));
        }
        if self.len() != other.len() || (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(Error::Misaligned(format!(
                "{} samples at dt={} vs {} samples at dt={}",
                self.len(),
                self.dt,
                other.len(),
                other.dt
            )));
        }
        Ok(())
    }

    /// Samplewise combination of two aligned paths.
    pub fn zip_map(
        &self,
        other: &Self,
        mut f: impl FnMut(&SpectralField, &SpectralField) -> SpectralField,
    ) -> Result<Self> {
        self.check_aligned(other)?;
        let fields = self.fields.iter().zip(&other.fields).map(|(a, b)| f(a, b)).collect();
        Self::new(self.dt, fields)
    }

    pub fn map(&self, f: impl FnMut(&SpectralField) -> SpectralField) -> Self {
        Self { dt: self.dt, fields: self.fields.iter().map(f).collect() }
    }

    /// Samplewise sum of aligned paths.
    pub fn sum(paths: &[&FieldPath]) -> Result<Self> {
        let (first, rest) = paths.split_first().ok_or(Error::ShortPath(0))?;
        let mut out = (*first).clone();
        for p in rest {
            out.check_aligned(p)?;
            for (a, b) in out.fields.iter_mut().zip(&p.fields) {
                *a += b;
            }
        }
        Ok(out)
    }

    /// Indices of at most `max` samples spread evenly over the path, always keeping both ends.
    pub fn thin_indices(&self, max: usize) -> Vec<usize> {
        let n = self.n_steps();
        let m = max.max(2) - 1;
        if n <= m {
            return (0..=n).collect();
        }
        let mut idx: Vec<usize> = (0..=m).map(|i| (i * n + m / 2) / m).collect();
        idx.dedup();
        idx
    }
}

// FILES
// ================================================================================================

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct PathHeader {
    n_modes: usize,
    n_times: usize,
    dt: f64,
    layout: String,
    dtype: String,
}

const LAYOUT: &str = "time-major,fft-order";
const DTYPE: &str = "f64le-interleaved-complex";

/// One JSON header line, then `n_times·N` complex coefficients as little-endian doubles.
pub fn write_path<W: Write>(mut w: W, p: &FieldPath) -> Result<()> {
    let header = PathHeader {
        n_modes: p.grid().n_modes(),
        n_times: p.len(),
        dt: p.dt,
        layout: LAYOUT.into(),
        dtype: DTYPE.into(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for f in &p.fields {
        let mut bytes = Vec::with_capacity(16 * f.coeffs().len());
        for c in f.coeffs() {
            bytes.extend_from_slice(&c.re.to_le_bytes());
            bytes.extend_from_slice(&c.im.to_le_bytes());
        }
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_path<R: BufRead>(mut r: R) -> Result<FieldPath> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let h: PathHeader = serde_json::from_str(line.trim_end())?;
    if h.layout != LAYOUT || h.dtype != DTYPE || h.n_times == 0 {
        return Err(Error::Format(format!("unsupported path header {line}")));
    }
    let grid = GridSpec::new(h.n_modes)?;
    let mut fields = Vec::with_capacity(h.n_times);
    let mut bytes = vec![0u8; 16 * h.n_modes];
    for _ in 0..h.n_times {
        r.read_exact(&mut bytes)?;
        let coeffs = bytes
            .chunks_exact(16)
            .map(|b| {
                let re = f64::from_le_bytes(b[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(b[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect();
        fields.push(SpectralField::from_raw(grid, coeffs));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    FieldPath::new(h.dt, fields)
}

pub fn save_path(path: impl AsRef<Path>, p: &FieldPath) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_path(&mut w, p)?;
    w.flush()?;
    Ok(())
}

pub fn load_path(path: impl AsRef<Path>) -> Result<FieldPath> {
    read_path(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> FieldPath {
        let g = GridSpec::new(8).unwrap();
        let fields = (0..=n)
            .map(|i| SpectralField::from_positive_modes(g, |k| Complex64::new(i as f64, k as f64)))
            .collect();
        FieldPath::new(0.1, fields).unwrap()
    }

    #[test]
    fn bookkeeping() {
        let p = path(10);
        assert_eq!(p.len(), 11);
        assert!((p.horizon() - 1.0).abs() < 1e-15);
        let s = p.subsample(5).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.at(2), p.at(10));
        assert!((s.dt() - 0.5).abs() < 1e-15);
        assert_eq!(p.truncate(3).len(), 4);
        assert_eq!(p.thin_indices(4), vec![0, 3, 7, 10]);
        assert_eq!(p.thin_indices(50).len(), 11);
        assert!(p.check_aligned(&p.truncate(3)).is_err());
        let twice = FieldPath::sum(&[&p, &p]).unwrap();
        assert_eq!(twice.at(4), &(p.at(4) * 2.0));
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let p = path(4);
        let mut buf = Vec::new();
        write_path(&mut buf, &p).unwrap();
        assert_eq!(read_path(&buf[..]).unwrap(), p);
        buf.push(0);
        assert!(read_path(&buf[..]).is_err());
    }
}
