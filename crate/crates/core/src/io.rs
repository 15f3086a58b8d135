//! Raw field files: interleaved little-endian `f64` (re, im) in row-major
//! order, plus a `key=value` text sidecar describing the lattice.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::grid::{make_grid, DensityMatrix, GridSpec, PhaseField};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Phase,
    Density,
}

impl FieldKind {
    fn name(self) -> &'static str {
        match self {
            FieldKind::Phase => "phase",
            FieldKind::Density => "density",
        }
    }
}

/// A field read back from disk.
#[derive(Clone, Debug)]
pub enum StoredField {
    Phase(PhaseField),
    Density(DensityMatrix),
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("txt")
}

fn write_raw(path: &Path, kind: FieldKind, grid: &GridSpec, k: usize, data: &ArrayD<C64>) -> Result<()> {
    let mut buf = Vec::with_capacity(16 * data.len());
    for z in data.as_standard_layout().iter() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::write(path, buf)?;
    let shape: Vec<String> = data.shape().iter().map(|s| s.to_string()).collect();
    let mut f = fs::File::create(sidecar(path))?;
    writeln!(f, "kind={}", kind.name())?;
    writeln!(f, "d={}", grid.d)?;
    writeln!(f, "n={}", grid.n)?;
    // round-trip exact decimal
    writeln!(f, "lx={:?}", grid.lx)?;
    writeln!(f, "lv={:?}", grid.lv)?;
    writeln!(f, "particles={k}")?;
    writeln!(f, "shape={}", shape.join(","))?;
    writeln!(f, "layout=row-major complex f64 little-endian")?;
    Ok(())
}

pub fn write_phase(path: &Path, f: &PhaseField) -> Result<()> {
    write_raw(path, FieldKind::Phase, &f.grid, 1, &f.data)
}

pub fn write_density(path: &Path, g: &DensityMatrix) -> Result<()> {
    write_raw(path, FieldKind::Density, &g.grid, g.k, &g.data)
}

fn parse_sidecar(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Io(format!("sidecar line {}: expected key=value", no + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn lookup<'a>(kv: &'a [(String, String)], key: &str) -> Result<&'a str> {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Io(format!("sidecar missing `{key}`")))
}

fn num<T: std::str::FromStr>(kv: &[(String, String)], key: &str) -> Result<T> {
    lookup(kv, key)?
        .parse()
        .map_err(|_| Error::Io(format!("sidecar `{key}` is not a number")))
}

pub fn read_field(path: &Path) -> Result<StoredField> {
    let kv = parse_sidecar(&fs::read_to_string(sidecar(path))?)?;
    let grid = make_grid(num(&kv, "d")?, num(&kv, "n")?, num(&kv, "lx")?, Some(num(&kv, "lv")?))?;
    let k: usize = num(&kv, "particles")?;
    let shape: Vec<usize> = lookup(&kv, "shape")?
        .split(',')
        .map(|s| s.parse().map_err(|_| Error::Io("bad shape".into())))
        .collect::<Result<_>>()?;
    let bytes = fs::read(path)?;
    let len: usize = shape.iter().product();
    if bytes.len() != 16 * len {
        return Err(Error::Io(format!("{} holds {} bytes, expected {}", path.display(), bytes.len(), 16 * len)));
    }
    let vals: Vec<C64> = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect();
    let data = ArrayD::from_shape_vec(IxDyn(&shape), vals).map_err(|e| Error::Shape(e.to_string()))?;
    match lookup(&kv, "kind")? {
        "phase" => Ok(StoredField::Phase(PhaseField::from_data(grid, data)?)),
        "density" => Ok(StoredField::Density(DensityMatrix::from_data(grid, k, data)?)),
        other => Err(Error::Io(format!("unknown field kind `{other}`"))),
    }
}
