//! File formats.
//!
//! * Field files: a text header `EIKFIELD v1 dim n1 n2 [n3] h ox oy [oz]`
//!   terminated by a newline, followed by the node values as little-endian
//!   `f64` in linear index order.
//! * Survey files: a header `EIKSURV v1 dim n1 n2 [n3] h ox oy [oz] nsrc nrec`,
//!   then the source and receiver node indices as little-endian `u64` and the
//!   observed times as little-endian `f64`, one source row after another.
//! * CSV fields with columns `i,j[,k],x,y[,z],value` for small grids.
//! * TOML inversion settings.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{EikonalError, Result};
use crate::fm::{FmConfig, Order};
use crate::grid::{RegularGrid, ScalarField, SourceSpec};
use crate::scalar::Real;
use crate::tomography::{BoundMap, DataMatrix, Geometry, InversionConfig, Survey};

const FIELD_MAGIC: &str = "EIKFIELD";
const SURVEY_MAGIC: &str = "EIKSURV";
const VERSION: &str = "v1";

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(EikonalError::Format(msg.into()))
}

fn grid_header<T: Real>(grid: &RegularGrid<T>) -> String {
    let mut parts = vec![grid.dim().to_string()];
    parts.extend(grid.counts().iter().map(|n| n.to_string()));
    parts.push(format!("{:?}", grid.spacing().to_f64_lossy()));
    parts.extend(grid.origin().iter().map(|o| format!("{:?}", o.to_f64_lossy())));
    parts.join(" ")
}

/// Parses the grid part of a header; returns the grid and the tokens left over.
fn parse_grid<'a, T: Real>(tokens: &'a [&'a str]) -> Result<(RegularGrid<T>, &'a [&'a str])> {
    let int = |s: &str| s.parse::<usize>().map_err(|_| EikonalError::Format(format!("bad integer {s:?} in header")));
    let real = |s: &str| s.parse::<f64>().map_err(|_| EikonalError::Format(format!("bad number {s:?} in header")));
    let Some(first) = tokens.first() else {
        return format_err("header is missing the dimension");
    };
    let dim = int(first)?;
    if !(2..=3).contains(&dim) {
        return format_err(format!("dimension must be 2 or 3, got {dim}"));
    }
    let need = 1 + dim + 1 + dim;
    if tokens.len() < need {
        return format_err(format!("header needs {need} grid entries, got {}", tokens.len()));
    }
    let counts = tokens[1..=dim].iter().map(|s| int(s)).collect::<Result<Vec<_>>>()?;
    let h = real(tokens[1 + dim])?;
    let origin = tokens[2 + dim..need]
        .iter()
        .map(|s| real(s).map(T::lit))
        .collect::<Result<Vec<_>>>()?;
    let grid = RegularGrid::new(&counts, T::lit(h), &origin)?;
    Ok((grid, &tokens[need..]))
}

fn read_header_line<R: BufRead>(reader: &mut R, magic: &str) -> Result<String> {
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    let Ok(line) = String::from_utf8(line) else {
        return format_err("header is not valid text");
    };
    let mut it = line.split_whitespace();
    if it.next() != Some(magic) {
        return format_err(format!("missing {magic} header"));
    }
    match it.next() {
        Some(VERSION) => {}
        other => return format_err(format!("unsupported {magic} version {other:?}")),
    }
    Ok(it.collect::<Vec<_>>().join(" "))
}

fn read_f64s<R: Read>(reader: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    reader.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => EikonalError::Format(format!("expected {n} values, file is truncated")),
        _ => EikonalError::Io(e),
    })?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

fn read_u64s<R: Read>(reader: &mut R, n: usize) -> Result<Vec<u64>> {
    let mut buf = vec![0u8; 8 * n];
    reader.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => EikonalError::Format(format!("expected {n} indices, file is truncated")),
        _ => EikonalError::Io(e),
    })?;
    Ok(buf.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

fn expect_end<R: Read>(reader: &mut R) -> Result<()> {
    let mut extra = [0u8; 1];
    if reader.read(&mut extra)? != 0 {
        return format_err("unexpected trailing bytes");
    }
    Ok(())
}

pub fn write_field<T: Real, W: Write>(field: &ScalarField<T>, mut out: W) -> Result<()> {
    writeln!(out, "{FIELD_MAGIC} {VERSION} {}", grid_header(field.grid()))?;
    for v in field.values() {
        out.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_field<T: Real, R: Read>(reader: R) -> Result<ScalarField<T>> {
    let mut reader = BufReader::new(reader);
    let header = read_header_line(&mut reader, FIELD_MAGIC)?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let (grid, rest) = parse_grid::<T>(&tokens)?;
    if !rest.is_empty() {
        return format_err(format!("unexpected header entries {rest:?}"));
    }
    let values = read_f64s(&mut reader, grid.len())?;
    expect_end(&mut reader)?;
    ScalarField::new(grid, values.into_iter().map(T::lit).collect())
}

pub fn save_field<T: Real>(field: &ScalarField<T>, path: impl AsRef<Path>) -> Result<()> {
    write_field(field, BufWriter::new(File::create(path)?))
}

pub fn load_field<T: Real>(path: impl AsRef<Path>) -> Result<ScalarField<T>> {
    read_field(File::open(path)?)
}

const AXES: [&str; 3] = ["i", "j", "k"];
const COORDS: [&str; 3] = ["x", "y", "z"];

pub fn write_field_csv<T: Real, W: Write>(field: &ScalarField<T>, out: W) -> Result<()> {
    let grid = field.grid();
    let dim = grid.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = AXES[..dim].to_vec();
    header.extend(&COORDS[..dim]);
    header.push("value");
    w.write_record(&header)?;
    for (k, v) in field.values().iter().enumerate() {
        let idx = grid.delinearize(k);
        let x = grid.coord(k);
        let mut rec: Vec<String> = idx[..dim].iter().map(|i| i.to_string()).collect();
        rec.extend(x[..dim].iter().map(|c| format!("{:?}", c.to_f64_lossy())));
        rec.push(format!("{:?}", v.to_f64_lossy()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV field. The grid is recovered from the indices and
/// coordinates, and every node must appear exactly once.
pub fn read_field_csv<T: Real, R: Read>(reader: R) -> Result<ScalarField<T>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let dim = match headers.len() {
        5 => 2,
        7 => 3,
        n => return format_err(format!("CSV field needs 5 or 7 columns, got {n}")),
    };
    let mut expected: Vec<&str> = AXES[..dim].to_vec();
    expected.extend(&COORDS[..dim]);
    expected.push("value");
    if headers != expected {
        return format_err(format!("CSV header must be {}", expected.join(",")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("").trim().to_string();
        let mut idx = [0usize; 3];
        for (a, slot) in idx.iter_mut().enumerate().take(dim) {
            *slot = field(a)
                .parse()
                .map_err(|_| EikonalError::Format(format!("bad index {:?}", field(a))))?;
        }
        let mut vals = [0.0f64; 4];
        for (c, slot) in vals.iter_mut().enumerate().take(dim + 1) {
            *slot = field(dim + c)
                .parse()
                .map_err(|_| EikonalError::Format(format!("bad number {:?}", field(dim + c))))?;
        }
        rows.push((idx, vals));
    }
    if rows.is_empty() {
        return format_err("CSV field has no rows");
    }
    let mut counts = vec![0usize; dim];
    for (idx, _) in &rows {
        for a in 0..dim {
            counts[a] = counts[a].max(idx[a] + 1);
        }
    }
    let n: usize = counts.iter().product();
    if n != rows.len() {
        return format_err(format!("CSV field has {} rows for a grid of {n} nodes", rows.len()));
    }
    // spacing from any pair of nodes that differ along the first axis
    let (i0, v0) = rows.iter().min_by_key(|(idx, _)| idx[..dim].to_vec()).expect("nonempty");
    if i0[..dim].iter().any(|&i| i != 0) {
        return format_err("CSV field has no node at index 0");
    }
    let far = rows.iter().find(|(idx, _)| idx[0] > 0).map(|(idx, v)| (v[0] - v0[0]) / idx[0] as f64);
    let Some(h) = far else {
        return format_err("cannot infer spacing from CSV field");
    };
    let origin: Vec<T> = v0[..dim].iter().map(|&o| T::lit(o)).collect();
    let grid = RegularGrid::new(&counts, T::lit(h), &origin)?;
    let mut values = vec![T::nan(); n];
    let mut seen = vec![false; n];
    for (idx, v) in &rows {
        let k = grid.linearize(&idx[..dim]).expect("index inside counts");
        if seen[k] {
            return format_err(format!("node {:?} appears twice", &idx[..dim]));
        }
        let x = grid.coord(k);
        for a in 0..dim {
            let tol = 1e-9 * (1.0 + v[a].abs()) + 1e-6 * h;
            if (x[a].to_f64_lossy() - v[a]).abs() > tol {
                return format_err(format!("coordinates of node {:?} do not lie on a uniform grid", &idx[..dim]));
            }
        }
        seen[k] = true;
        values[k] = T::lit(v[dim]);
    }
    ScalarField::new(grid, values)
}

pub fn write_survey<T: Real, W: Write>(survey: &Survey<T>, mut out: W) -> Result<()> {
    let g = &survey.geometry;
    writeln!(
        out,
        "{SURVEY_MAGIC} {VERSION} {} {} {}",
        grid_header(&survey.grid),
        g.sources.len(),
        g.receivers.len()
    )?;
    for s in &g.sources {
        out.write_all(&(s.linear(&survey.grid)? as u64).to_le_bytes())?;
    }
    for &r in &g.receivers {
        out.write_all(&(r as u64).to_le_bytes())?;
    }
    for v in survey.d_obs.values() {
        out.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_survey<T: Real, R: Read>(reader: R) -> Result<Survey<T>> {
    let mut reader = BufReader::new(reader);
    let header = read_header_line(&mut reader, SURVEY_MAGIC)?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let (grid, rest) = parse_grid::<T>(&tokens)?;
    let [nsrc, nrec] = rest else {
        return format_err("survey header needs source and receiver counts");
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| EikonalError::Format(format!("bad count {s:?}")));
    let (nsrc, nrec) = (parse(nsrc)?, parse(nrec)?);
    let to_node = |v: u64| -> Result<usize> {
        usize::try_from(v)
            .ok()
            .filter(|&k| k < grid.len())
            .ok_or_else(|| EikonalError::Format(format!("node index {v} is outside the grid")))
    };
    let sources = read_u64s(&mut reader, nsrc)?
        .into_iter()
        .map(|v| to_node(v).and_then(|k| SourceSpec::at_linear(&grid, k)))
        .collect::<Result<Vec<_>>>()?;
    let receivers = read_u64s(&mut reader, nrec)?
        .into_iter()
        .map(to_node)
        .collect::<Result<Vec<_>>>()?;
    let data = read_f64s(&mut reader, nsrc * nrec)?;
    expect_end(&mut reader)?;
    let d_obs = DataMatrix::new(nsrc, nrec, data.into_iter().map(T::lit).collect())?;
    Survey::new(grid, Geometry { sources, receivers }, d_obs)
}

pub fn save_survey<T: Real>(survey: &Survey<T>, path: impl AsRef<Path>) -> Result<()> {
    write_survey(survey, BufWriter::new(File::create(path)?))
}

pub fn load_survey<T: Real>(path: impl AsRef<Path>) -> Result<Survey<T>> {
    read_survey(File::open(path)?)
}

/// Inversion settings as written in a TOML file. Missing keys take the
/// defaults of [`InversionConfig::new`]; the bounds are required.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InversionSettings {
    pub alpha: Option<f64>,
    pub n_gn: Option<usize>,
    pub n_cg: Option<usize>,
    pub ls_factor: Option<f64>,
    pub ls_max_halvings: Option<usize>,
    pub armijo: Option<f64>,
    pub m_low: f64,
    pub m_high: f64,
    pub order: Option<u8>,
    /// Field file with the reference squared slowness, relative to the
    /// settings file.
    pub m_ref: Option<String>,
}

impl InversionSettings {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| EikonalError::Format(format!("inversion settings: {e}")))
    }

    /// Builds the configuration; `base` resolves a relative `m_ref` path.
    pub fn to_config<T: Real>(&self, base: &Path) -> Result<InversionConfig<T>> {
        let mut cfg = InversionConfig::new(BoundMap::new(T::lit(self.m_low), T::lit(self.m_high))?);
        if let Some(a) = self.alpha {
            cfg.alpha = T::lit(a);
        }
        if let Some(n) = self.n_gn {
            cfg.n_gn = n;
        }
        if let Some(n) = self.n_cg {
            cfg.n_cg = n;
        }
        if let Some(f) = self.ls_factor {
            cfg.ls_factor = T::lit(f);
        }
        if let Some(n) = self.ls_max_halvings {
            cfg.ls_max_halvings = n;
        }
        if let Some(c) = self.armijo {
            cfg.armijo = T::lit(c);
        }
        if let Some(o) = self.order {
            cfg.fm = FmConfig::factored(Order::from_u8(o)?);
        }
        if let Some(p) = &self.m_ref {
            cfg.m_ref = Some(load_field(base.join(p))?);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_inversion_config<T: Real>(path: impl AsRef<Path>) -> Result<InversionConfig<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    InversionSettings::parse(&text)?.to_config(base)
}
