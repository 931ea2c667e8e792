//! Field dumps.
//!
//! CSV: header `index,x0,..,x{d-1},value` then one row per node or cell, with
//! coordinates of the node or cell center.
//!
//! Binary: `<name>.bin` holds the values as little-endian `f64`, and
//! `<name>.json` holds `{ "grid": GridSpec, "location": "node"|"cell", "len": n }`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec, Location, ScalarField};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpHeader {
    pub grid: GridSpec,
    pub location: Location,
    pub len: usize,
}

pub fn write_csv(field: &ScalarField, path: &Path) -> Result<()> {
    let g = field.grid();
    let d = g.dim();
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "index")?;
    for a in 0..d {
        write!(w, ",x{a}")?;
    }
    writeln!(w, ",value")?;
    for (i, v) in field.values().iter().enumerate() {
        let p = match field.location() {
            Location::Node => g.node_coords(&g.node_multi(i)),
            Location::Cell => g.cell_center(&g.cell_multi(i)),
        };
        write!(w, "{i}")?;
        for x in &p[..d] {
            write!(w, ",{x}")?;
        }
        writeln!(w, ",{v:e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(grid: &Grid, location: Location, path: &Path) -> Result<ScalarField> {
    let r = BufReader::new(File::open(path)?);
    let mut values = Vec::new();
    for line in r.lines().skip(1) {
        let line = line?;
        let v = line
            .rsplit(',')
            .next()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::ShapeMismatch(format!("bad csv row `{line}`")))?;
        values.push(v);
    }
    ScalarField::new(grid.clone(), location, values)
}

/// Writes `<stem>.bin` and `<stem>.json` under `dir`.
pub fn write_binary(field: &ScalarField, dir: &Path, stem: &str) -> Result<()> {
    let header = DumpHeader {
        grid: field.grid().spec().clone(),
        location: field.location(),
        len: field.values().len(),
    };
    serde_json::to_writer_pretty(File::create(dir.join(format!("{stem}.json")))?, &header)?;
    let mut w = BufWriter::new(File::create(dir.join(format!("{stem}.bin")))?);
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary(dir: &Path, stem: &str) -> Result<ScalarField> {
    let header: DumpHeader =
        serde_json::from_reader(File::open(dir.join(format!("{stem}.json")))?)?;
    let mut bytes = Vec::new();
    File::open(dir.join(format!("{stem}.bin")))?.read_to_end(&mut bytes)?;
    if bytes.len() != header.len * 8 {
        return Err(Error::ShapeMismatch(format!(
            "{stem}.bin has {} bytes, header says {} values",
            bytes.len(),
            header.len
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    ScalarField::new(Grid::new(header.grid)?, header.location, values)
}
