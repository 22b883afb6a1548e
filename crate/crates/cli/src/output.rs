//! Deterministic output writers.
//!
//! CSV documents start with commented `# key: value` metadata lines so a file
//! records the exact parameters, cutoffs, and tool version that produced it.
//! Values print with 17 significant digits, enough to reproduce every f64
//! bit-exactly. Phase-space grids are written as a little-endian binary block
//! whose sha256 trailer lets a reader detect truncation or corruption.
//! Neither format embeds timestamps or absolute paths, so rerunning the same
//! scenario yields byte-identical artifacts.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use quasibell::{
    Branch, Complex64, GridRule, GridSpec, QGrid, QMethod, Result as CoreResult, SystemParams,
};

/// Formats one value with 17 significant digits (round-trip exact for f64).
pub fn g17(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV document with commented metadata, assembled in memory and written
/// in one pass.
pub struct CsvDoc {
    meta: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvDoc {
    pub fn new() -> Self {
        CsvDoc {
            meta: Vec::new(),
            columns: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Appends one `# key: value` metadata line.
    pub fn meta(&mut self, key: &str, value: impl Into<String>) {
        self.meta.push((key.to_string(), value.into()));
    }

    /// Sets the header row.
    pub fn columns(&mut self, names: &[&str]) {
        self.columns = names.iter().map(|s| s.to_string()).collect();
    }

    /// Appends one data row, which must match the header width.
    pub fn push_row(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    /// Renders the document to a string.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Writes the document to a file.
    pub fn write_to(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.render())
    }
}

impl Default for CsvDoc {
    fn default() -> Self {
        Self::new()
    }
}

const GRID_MAGIC: &[u8; 8] = b"QBGRID\x00\x01";

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

/// Serializes a phase-space grid: magic, shape, parameters, node and weight
/// arrays, sample values, and a sha256 trailer over everything before it.
pub fn write_grid(path: &Path, grid: &QGrid) -> std::io::Result<()> {
    let spec = &grid.spec;
    let p = &grid.params;
    let mut buf = Vec::with_capacity(64 + 8 * grid.values.len());
    buf.extend_from_slice(GRID_MAGIC);
    push_u32(&mut buf, spec.n_re as u32);
    push_u32(&mut buf, spec.n_im as u32);
    push_u32(
        &mut buf,
        match spec.rule {
            GridRule::GaussLegendre => 0,
            GridRule::Trapezoid => 1,
        },
    );
    push_u32(
        &mut buf,
        match grid.method {
            QMethod::Series => 0,
            QMethod::Linear => 1,
        },
    );
    push_f64(&mut buf, spec.center.re);
    push_f64(&mut buf, spec.center.im);
    push_f64(&mut buf, spec.half_width);
    push_f64(&mut buf, grid.t);
    push_f64(&mut buf, p.omega);
    push_f64(&mut buf, p.delta);
    push_f64(&mut buf, p.epsilon);
    push_f64(&mut buf, p.lambda);
    push_f64(&mut buf, p.alpha.re);
    push_f64(&mut buf, p.alpha.im);
    push_u32(
        &mut buf,
        match grid.branch {
            Branch::Plus => 0,
            Branch::Minus => 1,
        },
    );
    push_u32(&mut buf, grid.n_modes as u32);
    for &x in grid
        .re_nodes
        .iter()
        .chain(grid.re_weights.iter())
        .chain(grid.im_nodes.iter())
        .chain(grid.im_weights.iter())
        .chain(grid.values.iter())
    {
        push_f64(&mut buf, x);
    }
    let digest = Sha256::digest(&buf);
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    file.write_all(&digest)?;
    Ok(())
}

/// A grid read back from its binary serialization.
#[derive(Debug)]
pub struct GridFile {
    pub n_re: usize,
    pub n_im: usize,
    pub rule: GridRule,
    pub method: QMethod,
    pub center: Complex64,
    pub half_width: f64,
    pub t: f64,
    pub omega: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub alpha: Complex64,
    pub branch: Branch,
    pub n_modes: usize,
    pub re_nodes: Vec<f64>,
    pub re_weights: Vec<f64>,
    pub im_nodes: Vec<f64>,
    pub im_weights: Vec<f64>,
    pub values: Vec<f64>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.pos + n > self.buf.len() {
            return Err("grid file is truncated".into());
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>, String> {
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Reads and verifies a binary grid file.
pub fn read_grid(path: &Path) -> Result<GridFile, String> {
    let data = fs::read(path).map_err(|e| format!("read {}: {e}", path.display()))?;
    if data.len() < GRID_MAGIC.len() + 32 {
        return Err("grid file is too short".into());
    }
    let (body, trailer) = data.split_at(data.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != trailer {
        return Err("grid file hash mismatch".into());
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(GRID_MAGIC.len())? != GRID_MAGIC {
        return Err("bad grid file magic".into());
    }
    let n_re = r.u32()? as usize;
    let n_im = r.u32()? as usize;
    let rule = match r.u32()? {
        0 => GridRule::GaussLegendre,
        1 => GridRule::Trapezoid,
        other => return Err(format!("unknown grid rule tag {other}")),
    };
    let method = match r.u32()? {
        0 => QMethod::Series,
        1 => QMethod::Linear,
        other => return Err(format!("unknown evaluator tag {other}")),
    };
    let center = Complex64::new(r.f64()?, r.f64()?);
    let half_width = r.f64()?;
    let t = r.f64()?;
    let omega = r.f64()?;
    let delta = r.f64()?;
    let epsilon = r.f64()?;
    let lambda = r.f64()?;
    let alpha = Complex64::new(r.f64()?, r.f64()?);
    let branch = match r.u32()? {
        0 => Branch::Plus,
        1 => Branch::Minus,
        other => return Err(format!("unknown branch tag {other}")),
    };
    let n_modes = r.u32()? as usize;
    let re_nodes = r.f64_vec(n_re)?;
    let re_weights = r.f64_vec(n_re)?;
    let im_nodes = r.f64_vec(n_im)?;
    let im_weights = r.f64_vec(n_im)?;
    let values = r.f64_vec(n_re * n_im)?;
    if r.pos != body.len() {
        return Err("grid file has trailing bytes".into());
    }
    Ok(GridFile {
        n_re,
        n_im,
        rule,
        method,
        center,
        half_width,
        t,
        omega,
        delta,
        epsilon,
        lambda,
        alpha,
        branch,
        n_modes,
        re_nodes,
        re_weights,
        im_nodes,
        im_weights,
        values,
    })
}

impl GridFile {
    /// Integrates the stored samples with the stored product weights.
    pub fn integrate(&self) -> f64 {
        let mut total = 0.0;
        for (i, wi) in self.im_weights.iter().enumerate() {
            let mut row = 0.0;
            for (j, wj) in self.re_weights.iter().enumerate() {
                row += wj * self.values[i * self.n_re + j];
            }
            total += wi * row;
        }
        total
    }

    /// Rebuilds the system parameters stored in the header.
    pub fn params(&self) -> CoreResult<SystemParams> {
        SystemParams::derive(self.omega, self.delta, self.epsilon, self.lambda, self.alpha)
    }

    /// Rebuilds the grid shape stored in the header.
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            n_re: self.n_re,
            n_im: self.n_im,
            half_width: self.half_width,
            center: self.center,
            rule: self.rule,
        }
    }
}
