//! Binary container, CSV exports and small file helpers.
//!
//! Container layout (all integers and floats little-endian):
//!
//! | field            | type                                      |
//! |------------------|-------------------------------------------|
//! | magic            | 6 bytes `MSNAP1`                          |
//! | model name       | `u16` length + UTF-8                      |
//! | `N`              | `u64` spatial dimension                   |
//! | `d`              | `u64` number of stacked fields            |
//! | `Δt`             | `f64`                                     |
//! | `N_t`            | `u64` number of time levels (0 if none)   |
//! | metadata         | `u32` length + UTF-8 JSON object          |
//! | block count      | `u32`                                     |
//! | each block       | `u16` name length + name, `u64` rows, `u64` cols, column-major `f64` data |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::fom::SnapshotSet;
use crate::grid::Grid;
use crate::model::ModelKind;
use crate::opinf::{LearnedRom, TrainConfig};
use crate::pod::PodBasis;
use crate::rom::RomTrajectory;
use crate::snapshots::ExtendedSnapshots;

pub const MAGIC: &[u8; 6] = b"MSNAP1";

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub model: String,
    pub n: u64,
    pub d: u64,
    pub dt: f64,
    pub n_t: u64,
    pub metadata: Map<String, Value>,
    pub blocks: Vec<(String, DMatrix<f64>)>,
}

fn put_str<W: Write>(w: &mut W, s: &str, wide: bool) -> Result<()> {
    let bytes = s.as_bytes();
    if wide {
        let len = u32::try_from(bytes.len()).map_err(|_| Error::Format("string too long".into()))?;
        w.write_all(&len.to_le_bytes())?;
    } else {
        let len = u16::try_from(bytes.len()).map_err(|_| Error::Format("name too long".into()))?;
        w.write_all(&len.to_le_bytes())?;
    }
    w.write_all(bytes)?;
    Ok(())
}

fn get<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated container: {e}")))?;
    Ok(b)
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(get::<8, _>(r)?))
}

fn get_str<R: Read>(r: &mut R, wide: bool) -> Result<String> {
    let len = if wide {
        u32::from_le_bytes(get::<4, _>(r)?) as usize
    } else {
        u16::from_le_bytes(get::<2, _>(r)?) as usize
    };
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated container: {e}")))?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

impl Container {
    pub fn block(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Format(format!("missing block {name:?}")))
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.metadata
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Format(format!("missing metadata {key:?}")))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        put_str(w, &self.model, false)?;
        w.write_all(&self.n.to_le_bytes())?;
        w.write_all(&self.d.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&self.n_t.to_le_bytes())?;
        put_str(w, &serde_json::to_string(&self.metadata)?, true)?;
        let count = u32::try_from(self.blocks.len()).map_err(|_| Error::Format("too many blocks".into()))?;
        w.write_all(&count.to_le_bytes())?;
        for (name, m) in &self.blocks {
            put_str(w, name, false)?;
            w.write_all(&(m.nrows() as u64).to_le_bytes())?;
            w.write_all(&(m.ncols() as u64).to_le_bytes())?;
            let mut buf = Vec::with_capacity(8 * m.len());
            for x in m.as_slice() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        if &get::<6, _>(r)? != MAGIC {
            return Err(Error::Format("bad magic, expected MSNAP1".into()));
        }
        let model = get_str(r, false)?;
        let n = get_u64(r)?;
        let d = get_u64(r)?;
        let dt = f64::from_le_bytes(get::<8, _>(r)?);
        let n_t = get_u64(r)?;
        let metadata = match serde_json::from_str(&get_str(r, true)?)? {
            Value::Object(m) => m,
            _ => return Err(Error::Format("metadata is not a JSON object".into())),
        };
        let count = u32::from_le_bytes(get::<4, _>(r)?);
        let mut blocks = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name = get_str(r, false)?;
            let rows = get_u64(r)? as usize;
            let cols = get_u64(r)? as usize;
            let len = rows
                .checked_mul(cols)
                .and_then(|l| l.checked_mul(8))
                .ok_or_else(|| Error::Format("block too large".into()))?;
            let mut buf = Vec::new();
            r.take(len as u64).read_to_end(&mut buf)?;
            if buf.len() != len {
                return Err(Error::Format(format!("truncated block {name:?}")));
            }
            let data: Vec<f64> = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            blocks.push((name, DMatrix::from_vec(rows, cols, data)));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after last block".into()));
        }
        Ok(Container {
            model,
            n,
            d,
            dt,
            n_t,
            metadata,
            blocks,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

fn kind_of(c: &Container, want: &str) -> Result<()> {
    let got = c.meta_str("kind")?;
    if got != want {
        return Err(Error::Format(format!("container holds {got:?}, expected {want:?}")));
    }
    Ok(())
}

fn meta(pairs: Value) -> Map<String, Value> {
    match pairs {
        Value::Object(m) => m,
        _ => unreachable!("metadata literal is an object"),
    }
}

impl From<&SnapshotSet> for Container {
    fn from(s: &SnapshotSet) -> Self {
        let mut blocks = vec![("u".to_string(), s.u.clone())];
        blocks.extend(s.aux.iter().cloned());
        Container {
            model: s.model.name().into(),
            n: s.u.nrows() as u64,
            d: blocks.len() as u64,
            dt: s.dt,
            n_t: s.n_t() as u64,
            metadata: meta(json!({
                "kind": "snapshots",
                "grid": s.grid,
                "fingerprint": s.fingerprint,
            })),
            blocks,
        }
    }
}

impl TryFrom<&Container> for SnapshotSet {
    type Error = Error;
    fn try_from(c: &Container) -> Result<Self> {
        kind_of(c, "snapshots")?;
        let grid: Grid = serde_json::from_value(c.metadata.get("grid").cloned().unwrap_or(Value::Null))?;
        let mut blocks = c.blocks.iter();
        let (first, u) = blocks.next().ok_or_else(|| Error::Format("no snapshot blocks".into()))?;
        if first != "u" {
            return Err(Error::Format("first snapshot block must be \"u\"".into()));
        }
        Ok(SnapshotSet {
            model: c.model.parse::<ModelKind>()?,
            grid,
            dt: c.dt,
            u: u.clone(),
            aux: blocks.cloned().collect(),
            fingerprint: c.meta_str("fingerprint")?.to_string(),
        })
    }
}

pub fn extended_to_container(e: &ExtendedSnapshots, model: ModelKind, dt: f64) -> Container {
    Container {
        model: model.name().into(),
        n: e.z.nrows() as u64,
        d: e.labels.len() as u64,
        dt,
        n_t: e.n_t() as u64,
        metadata: meta(json!({
            "kind": "extended",
            "labels": e.labels,
            "source_fingerprint": e.source_fingerprint,
        })),
        blocks: vec![("z".into(), e.z.clone())],
    }
}

pub fn extended_from_container(c: &Container) -> Result<ExtendedSnapshots> {
    kind_of(c, "extended")?;
    let labels: Vec<String> = serde_json::from_value(c.metadata.get("labels").cloned().unwrap_or(Value::Null))?;
    if labels.is_empty() {
        return Err(Error::Format("extended snapshots without labels".into()));
    }
    Ok(ExtendedSnapshots {
        z: c.block("z")?.clone(),
        labels,
        source_fingerprint: c.meta_str("source_fingerprint")?.to_string(),
    })
}

pub fn basis_to_container(b: &PodBasis, model: ModelKind, source_fingerprint: &str) -> Container {
    Container {
        model: model.name().into(),
        n: b.n() as u64,
        d: b.d as u64,
        dt: 0.0,
        n_t: 0,
        metadata: meta(json!({
            "kind": "basis",
            "r": b.r(),
            "retained_energy": b.retained_energy(),
            "source_fingerprint": source_fingerprint,
        })),
        blocks: vec![
            ("v".into(), b.v.clone()),
            ("sigma".into(), DMatrix::from_column_slice(b.sigma.len(), 1, &b.sigma)),
        ],
    }
}

pub fn basis_from_container(c: &Container) -> Result<PodBasis> {
    kind_of(c, "basis")?;
    Ok(PodBasis {
        v: c.block("v")?.clone(),
        sigma: c.block("sigma")?.as_slice().to_vec(),
        d: c.d as usize,
    })
}

pub fn operators_to_container(rom: &LearnedRom, dt: f64) -> Container {
    let mut blocks = vec![("dx".to_string(), rom.dx.clone())];
    if let Some(dy) = &rom.dy {
        blocks.push(("dy".into(), dy.clone()));
    }
    Container {
        model: rom.model.name().into(),
        n: rom.r() as u64,
        d: blocks.len() as u64,
        dt,
        n_t: 0,
        metadata: meta(json!({
            "kind": "operators",
            "fingerprint": rom.fingerprint(),
            "basis_fingerprint": rom.basis_fingerprint,
        })),
        blocks,
    }
}

/// JSON sidecar stored next to the operator container.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RomSidecar {
    pub model: ModelKind,
    pub constants: crate::model::Constants,
    pub train: Option<TrainConfig>,
    pub loss_normalization: String,
    pub loss_history: Vec<f64>,
    pub lr_trace: Vec<f64>,
    pub best_epoch: usize,
    pub best_loss: Option<f64>,
    pub basis_fingerprint: String,
    pub operator_fingerprint: String,
}

impl RomSidecar {
    pub fn new(rom: &LearnedRom, train: Option<&TrainConfig>) -> Self {
        RomSidecar {
            model: rom.model,
            constants: rom.constants.clone(),
            train: train.cloned(),
            loss_normalization: "mean of squared residual entries".into(),
            loss_history: rom.loss_history.clone(),
            lr_trace: rom.lr_trace.clone(),
            best_epoch: rom.best_epoch,
            best_loss: rom.best_loss.is_finite().then_some(rom.best_loss),
            basis_fingerprint: rom.basis_fingerprint.clone(),
            operator_fingerprint: rom.fingerprint(),
        }
    }
}

pub fn save_learned_rom(rom: &LearnedRom, dt: f64, train: Option<&TrainConfig>, bin: &Path, json: &Path) -> Result<()> {
    operators_to_container(rom, dt).save(bin)?;
    write_json(json, &RomSidecar::new(rom, train))
}

pub fn load_learned_rom(bin: &Path, json: &Path) -> Result<LearnedRom> {
    let c = Container::load(bin)?;
    kind_of(&c, "operators")?;
    let side: RomSidecar = serde_json::from_slice(&fs::read(json)?)?;
    let dy = c.blocks.iter().find(|(n, _)| n == "dy").map(|(_, m)| m.clone());
    let rom = LearnedRom {
        model: c.model.parse()?,
        dx: c.block("dx")?.clone(),
        dy,
        constants: side.constants,
        loss_history: side.loss_history,
        lr_trace: side.lr_trace,
        best_epoch: side.best_epoch,
        best_loss: side.best_loss.unwrap_or(f64::NAN),
        basis_fingerprint: side.basis_fingerprint,
    };
    if rom.fingerprint() != side.operator_fingerprint {
        return Err(Error::Format("operator container does not match its sidecar".into()));
    }
    Ok(rom)
}

pub fn trajectory_to_container(t: &RomTrajectory, model: ModelKind) -> Container {
    Container {
        model: model.name().into(),
        n: t.ut.nrows() as u64,
        d: 1,
        dt: t.dt,
        n_t: t.n_t() as u64,
        metadata: meta(json!({
            "kind": "rom_trajectory",
            "operator_fingerprint": t.operator_fingerprint,
        })),
        blocks: vec![("ut".into(), t.ut.clone())],
    }
}

pub fn trajectory_from_container(c: &Container) -> Result<RomTrajectory> {
    kind_of(c, "rom_trajectory")?;
    Ok(RomTrajectory {
        ut: c.block("ut")?.clone(),
        dt: c.dt,
        operator_fingerprint: c.meta_str("operator_fingerprint")?.to_string(),
    })
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|x| x.to_string())).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// Snapshot matrix as CSV: one row per node, one column per time level.
///
/// Header: `x` (and `y` in 2D) followed by the time of each column.
pub fn write_snapshot_csv(path: &Path, s: &SnapshotSet) -> Result<()> {
    let times = s.times();
    let coords: Vec<Vec<f64>> = match s.grid {
        Grid::OneD(g) => g.nodes().into_iter().map(|x| vec![x]).collect(),
        Grid::TwoD(g) => g.nodes().into_iter().map(|(x, y)| vec![x, y]).collect(),
    };
    let mut header: Vec<String> = if coords.first().map_or(1, Vec::len) == 2 {
        vec!["x".into(), "y".into()]
    } else {
        vec!["x".into()]
    };
    header.extend(times.iter().map(|t| t.to_string()));
    let rows = coords.into_iter().enumerate().map(|(j, mut row)| {
        row.extend(s.u.row(j).iter());
        row
    });
    atomic_write(path, &csv_bytes(&header, rows)?)
}

/// `t,value` series.
pub fn write_series_csv(path: &Path, t: &[f64], values: &[f64]) -> Result<()> {
    write_series_csv_with(path, "t", t, values)
}

/// Two-column series `key,value`.
pub fn write_series_csv_with(path: &Path, key: &str, t: &[f64], values: &[f64]) -> Result<()> {
    if t.len() != values.len() {
        return Err(Error::DimensionMismatch {
            context: "series csv",
            expected: t.len(),
            got: values.len(),
        });
    }
    let header = [key.to_string(), "value".to_string()];
    let rows = t.iter().zip(values).map(|(a, b)| vec![*a, *b]);
    atomic_write(path, &csv_bytes(&header, rows)?)
}

/// Long-format field `x,t,value` (1D) or `x,y,t,value` (2D), x fastest.
pub fn write_field_csv(path: &Path, grid: &Grid, t: &[f64], field: &DMatrix<f64>) -> Result<()> {
    if field.ncols() != t.len() || field.nrows() != grid.dim() {
        return Err(Error::DimensionMismatch {
            context: "field csv",
            expected: grid.dim() * t.len(),
            got: field.len(),
        });
    }
    let coords: Vec<Vec<f64>> = match grid {
        Grid::OneD(g) => g.nodes().into_iter().map(|x| vec![x]).collect(),
        Grid::TwoD(g) => g.nodes().into_iter().map(|(x, y)| vec![x, y]).collect(),
    };
    let mut header: Vec<String> = match grid {
        Grid::OneD(_) => vec!["x".into()],
        Grid::TwoD(_) => vec!["x".into(), "y".into()],
    };
    header.extend(["t".to_string(), "value".to_string()]);
    let rows = (0..t.len()).flat_map(|n| {
        coords.iter().enumerate().map(move |(j, c)| {
            let mut row = c.clone();
            row.push(t[n]);
            row.push(field[(j, n)]);
            row
        })
    });
    atomic_write(path, &csv_bytes(&header, rows)?)
}

/// Checks that a CSV file has exactly `header`, consistent row widths, at least one row
/// and only finite numbers. Returns the row count.
pub fn validate_csv(path: &Path, header: &[&str]) -> Result<usize> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    let got: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if got != header {
        return Err(Error::Format(format!("{}: header {got:?}, expected {header:?}", path.display())));
    }
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        for field in rec.iter() {
            let x: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("{}: non-numeric entry {field:?}", path.display())))?;
            if !x.is_finite() {
                return Err(Error::Format(format!("{}: non-finite entry", path.display())));
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Format(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}
