//! Sample files: CSV with header `y,x1,...,xp` and a JSON truth sidecar.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use quadfun_core::RegressionSample;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Generating parameters stored next to a synthetic sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub theta: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

pub fn write_sample<W: Write>(sample: &RegressionSample, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let p = sample.dim();
    let mut header = Vec::with_capacity(p + 1);
    header.push("y".to_string());
    header.extend((1..=p).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(p + 1);
    for i in 0..sample.rows() {
        row.clear();
        row.push(sample.y[i].to_string());
        row.extend((0..p).map(|j| sample.x[(i, j)].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io("<csv output>", e))?;
    Ok(())
}

pub fn read_sample<R: Read>(input: R) -> Result<RegressionSample> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let p = header.len().saturating_sub(1);
    if p == 0 || &header[0] != "y" {
        return Err(HarnessError::Sample("header must be `y,x1,...,xp`".into()));
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("x{}", j + 1) {
            return Err(HarnessError::Sample(format!("column {} should be `x{}`, found `{name}`", j + 2, j + 1)));
        }
    }
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            rec[k]
                .trim()
                .parse::<f64>()
                .map_err(|_| HarnessError::Sample(format!("row {}: `{}` is not a number", line + 1, &rec[k])))
        };
        ys.push(parse(0)?);
        for k in 1..=p {
            xs.push(parse(k)?);
        }
    }
    let n = ys.len();
    if n == 0 {
        return Err(HarnessError::Sample("no data rows".into()));
    }
    let x = DMatrix::from_row_slice(n, p, &xs);
    Ok(RegressionSample::new(x, DVector::from_vec(ys))?)
}

pub fn write_sample_file(sample: &RegressionSample, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_sample(sample, std::io::BufWriter::new(file))
}

pub fn read_sample_file(path: &Path) -> Result<RegressionSample> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_sample(std::io::BufReader::new(file))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
