//! Per-candidate trace records and their CSV form.
//!
//! Columns: `k,selected,n_k,score,threshold,phi[,efficiency]`. `selected`
//! is `0` or `1`; undefined values are written as `NaN`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub k: u64,
    pub selected: bool,
    pub n_k: u64,
    pub score: f64,
    pub threshold: f64,
    pub phi: f64,
    pub efficiency: Option<f64>,
}

const HEADER: &str = "k,selected,n_k,score,threshold,phi";

pub struct TraceWriter<W: Write> {
    out: W,
    with_efficiency: bool,
    last_k: u64,
}

impl TraceWriter<BufWriter<File>> {
    pub fn create(path: &Path, with_efficiency: bool) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("cannot create trace {}", path.display()))?;
        TraceWriter::new(BufWriter::new(file), with_efficiency)
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, with_efficiency: bool) -> Result<Self> {
        if with_efficiency {
            writeln!(out, "{HEADER},efficiency")?;
        } else {
            writeln!(out, "{HEADER}")?;
        }
        Ok(TraceWriter { out, with_efficiency, last_k: 0 })
    }

    pub fn write(&mut self, r: &TraceRecord) -> Result<()> {
        ensure!(r.k > self.last_k, "trace records must have increasing k ({} after {})", r.k, self.last_k);
        self.last_k = r.k;
        write!(self.out, "{},{},{},{:?},{:?},{:?}", r.k, u8::from(r.selected), r.n_k, r.score, r.threshold, r.phi)?;
        if self.with_efficiency {
            write!(self.out, ",{:?}", r.efficiency.unwrap_or(f64::NAN))?;
        }
        writeln!(self.out)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn parse_f64(field: &str) -> Result<f64> {
    Ok(field.parse::<f64>()?)
}

/// Reads a trace written by [`TraceWriter`].
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let file = File::open(path).with_context(|| format!("cannot open trace {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => bail!("{} is empty", path.display()),
    };
    let with_efficiency = match header.trim() {
        HEADER => false,
        h if h == format!("{HEADER},efficiency") => true,
        h => bail!("{}: unexpected trace header {h:?}", path.display()),
    };
    let width = 6 + usize::from(with_efficiency);
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.trim().split(',').collect();
        let ctx = || format!("{}:{}", path.display(), i + 2);
        ensure!(fields.len() == width, "{}: expected {width} fields", ctx());
        let selected = match fields[1] {
            "0" => false,
            "1" => true,
            other => bail!("{}: bad selected flag {other:?}", ctx()),
        };
        out.push(TraceRecord {
            k: fields[0].parse().with_context(ctx)?,
            selected,
            n_k: fields[2].parse().with_context(ctx)?,
            score: parse_f64(fields[3]).with_context(ctx)?,
            threshold: parse_f64(fields[4]).with_context(ctx)?,
            phi: parse_f64(fields[5]).with_context(ctx)?,
            efficiency: if with_efficiency { Some(parse_f64(fields[6]).with_context(ctx)?) } else { None },
        });
    }
    Ok(out)
}
