//! `t,displacement,force` CSV files.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{BraceRecord, Series};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    t: f64,
    displacement: f64,
    force: f64,
}

pub fn write_record<W: Write>(record: &BraceRecord, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let rows = record
        .displacement
        .times()
        .zip(record.displacement.values())
        .zip(record.force.values());
    for ((t, &displacement), &force) in rows {
        w.serialize(Row {
            t,
            displacement,
            force,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))
}

pub fn write_record_file(record: &BraceRecord, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_record(record, std::io::BufWriter::new(file))
}

/// Parses an oracle CSV. The sample interval is recovered from the `t`
/// column, which must be uniform.
pub fn read_record<R: Read>(input: R) -> Result<BraceRecord> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers().map_err(csv_err)?.clone();
    let expected = ["t", "displacement", "force"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Format(format!(
            "expected header `t,displacement,force`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut t = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(csv_err)?;
        t.push(row.t);
        x.push(row.displacement);
        y.push(row.force);
    }
    if t.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            available: t.len(),
        });
    }
    let dt = t[1] - t[0];
    let tol = 1e-6 * dt.abs().max(1e-12);
    for (i, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > tol.max(1e-9 * w[1].abs()) {
            return Err(Error::Format(format!(
                "non-uniform sampling at row {}: step {} vs {dt}",
                i + 1,
                w[1] - w[0]
            )));
        }
    }
    BraceRecord::new(Series::displacement(dt, x)?, Series::force(dt, y)?)
}

pub fn read_record_file(path: &Path) -> Result<BraceRecord> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_record(std::io::BufReader::new(file))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
