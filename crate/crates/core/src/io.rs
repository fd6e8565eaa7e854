//! Binary snapshots and CSV reports.
//!
//! Snapshot layout (little endian): the magic `DOQS1`, an optional kind
//! byte (`N` for director fields; densities carry none), `i32` d, n,
//! lmax, nphi, `f64` t, eps, then site-major `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::TorusGrid;
use crate::kinetic::{DensityField, EnergyReport};
use crate::limit::{DirectorField, LimitCoefficients};
use crate::sphere::build_grid;

pub const MAGIC: &[u8; 5] = b"DOQS1";
pub const DIRECTOR_TAG: u8 = b'N';

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotKind {
    Density,
    Director,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub kind: SnapshotKind,
    pub d: usize,
    pub n: usize,
    pub lmax: usize,
    pub nphi: usize,
    pub t: f64,
    pub eps: f64,
    pub values: Vec<f64>,
}

fn write_header<W: Write>(w: &mut W, dims: [usize; 4], t: f64, eps: f64) -> Result<()> {
    for v in dims {
        let v = i32::try_from(v).map_err(|_| Error::Format(format!("header value {v} exceeds i32")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&t.to_le_bytes())?;
    w.write_all(&eps.to_le_bytes())?;
    Ok(())
}

pub fn write_density<P: AsRef<Path>>(path: P, f: &DensityField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_header(&mut w, [f.torus.d, f.torus.n, f.sphere.lmax(), f.sphere.nphi()], f.t, f.eps)?;
    for v in &f.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_director<P: AsRef<Path>>(path: P, n: &DirectorField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[DIRECTOR_TAG])?;
    write_header(&mut w, [n.torus.d, n.torus.n, 0, 0], n.t, 0.0)?;
    for v in n.values.iter().flatten() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_i32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    let v = i32::from_le_bytes(b);
    usize::try_from(v).map_err(|_| Error::Format(format!("negative header value {v}")))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_snapshot<P: AsRef<Path>>(path: P) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() < 6 || &bytes[..5] != MAGIC {
        return Err(Error::Format("missing DOQS1 magic".into()));
    }
    let (kind, mut rest) = if bytes[5] == DIRECTOR_TAG {
        (SnapshotKind::Director, &bytes[6..])
    } else {
        (SnapshotKind::Density, &bytes[5..])
    };
    let short = |e: Error| match e {
        Error::Io(_) => Error::Format("truncated header".into()),
        e => e,
    };
    let d = read_i32(&mut rest).map_err(short)?;
    let n = read_i32(&mut rest).map_err(short)?;
    let lmax = read_i32(&mut rest).map_err(short)?;
    let nphi = read_i32(&mut rest).map_err(short)?;
    let t = read_f64(&mut rest).map_err(short)?;
    let eps = read_f64(&mut rest).map_err(short)?;
    if !(1..=3).contains(&d) || n == 0 {
        return Err(Error::Format(format!("invalid grid d = {d}, n = {n}")));
    }
    let sites = n.pow(d as u32);
    let per_site = match kind {
        SnapshotKind::Director => 3,
        SnapshotKind::Density => {
            let grid = build_grid(lmax).map_err(|e| Error::Format(e.to_string()))?;
            if grid.nphi() != nphi {
                return Err(Error::Format(format!("nphi {nphi} does not match lmax {lmax}")));
            }
            grid.num_nodes()
        }
    };
    if rest.len() != 8 * sites * per_site {
        return Err(Error::Format(format!("payload has {} bytes, expected {}", rest.len(), 8 * sites * per_site)));
    }
    let values = rest.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    Ok(Snapshot { kind, d, n, lmax, nphi, t, eps, values })
}

impl Snapshot {
    /// Rebuilds the density; the torus length is not stored in the file.
    pub fn into_density(self, length: f64) -> Result<DensityField> {
        if self.kind != SnapshotKind::Density {
            return Err(Error::Format("snapshot holds a director field".into()));
        }
        let torus = TorusGrid::new(self.d, length, self.n)?;
        DensityField::new(torus, build_grid(self.lmax)?, self.values, self.t, self.eps)
    }

    pub fn into_director(self, length: f64) -> Result<DirectorField> {
        if self.kind != SnapshotKind::Director {
            return Err(Error::Format("snapshot holds a density".into()));
        }
        let torus = TorusGrid::new(self.d, length, self.n)?;
        let values = self.values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        DirectorField::new(torus, values, self.t)
    }
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer<P: AsRef<Path>>(path: P) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

pub const ENERGY_HEADER: [&str; 6] = ["t", "bulk_excess", "doubled_term", "modulated_total", "dissipation", "cumulative_dissipation"];
pub const COEFFICIENT_HEADER: [&str; 8] = ["alpha", "eta", "S2", "Z", "E0", "gamma", "mu", "Lambda"];
pub const BIFURCATION_HEADER: [&str; 4] = ["alpha", "eta_roots", "s2", "E0"];

pub fn write_energy_csv<P: AsRef<Path>>(path: P, rows: &[EnergyReport]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(ENERGY_HEADER)?;
    for r in rows {
        w.write_record([r.t, r.bulk_excess, r.doubled_term, r.modulated_total, r.dissipation, r.cumulative_dissipation].map(fmt_f64))?;
    }
    w.flush()?;
    Ok(())
}

pub fn coefficient_record(c: &LimitCoefficients) -> [String; 8] {
    [c.alpha, c.eta, c.s2, c.z, c.e0, c.gamma, c.mu, c.lambda].map(fmt_f64)
}

pub fn write_coefficients_csv<P: AsRef<Path>>(path: P, rows: &[LimitCoefficients]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(COEFFICIENT_HEADER)?;
    for c in rows {
        w.write_record(coefficient_record(c))?;
    }
    w.flush()?;
    Ok(())
}

/// One line of the bifurcation scan: all roots of `η = α s₂(η)` and the
/// order parameter and energy of the selected branch.
#[derive(Clone, Debug, PartialEq)]
pub struct BifurcationRow {
    pub alpha: f64,
    pub roots: Vec<f64>,
    pub s2: f64,
    pub e0: f64,
}

pub fn write_bifurcation_csv<P: AsRef<Path>>(path: P, rows: &[BifurcationRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(BIFURCATION_HEADER)?;
    for r in rows {
        let roots = r.roots.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";");
        w.write_record([fmt_f64(r.alpha), roots, fmt_f64(r.s2), fmt_f64(r.e0)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a header and rows of floats.
pub fn write_table<P: AsRef<Path>>(path: P, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}
