//! Epanechnikov kernel density tables for scalar selections.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{ensure, Context, Result};

fn kernel(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Bandwidth used when none is given: the sample range over 1000.
pub fn default_bandwidth(points: &[f64]) -> f64 {
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    (hi - lo) / 1000.0
}

/// Density estimate on a regular grid over `[min - h, max + h]`, returned
/// as `(x, density)` rows. The default grid has spacing `h / 8`.
pub fn epanechnikov(points: &[f64], bandwidth: Option<f64>, grid: Option<usize>) -> Result<Vec<(f64, f64)>> {
    ensure!(!points.is_empty(), "no points to smooth");
    ensure!(points.iter().all(|x| x.is_finite()), "non-finite point");
    let h = bandwidth.unwrap_or_else(|| default_bandwidth(points));
    ensure!(h > 0.0 && h.is_finite(), "bandwidth must be positive (degenerate samples need an explicit one)");
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[0] - h;
    let hi = sorted[sorted.len() - 1] + h;
    let g = match grid {
        Some(g) => g,
        None => ((hi - lo) / (h / 8.0)).ceil() as usize + 1,
    };
    ensure!(g >= 2, "grid needs at least two points");
    let scale = 1.0 / (sorted.len() as f64 * h);
    Ok((0..g)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (g - 1) as f64;
            let from = sorted.partition_point(|&v| v < x - h);
            let to = sorted.partition_point(|&v| v <= x + h);
            let s: f64 = sorted[from..to].iter().map(|&v| kernel((x - v) / h)).sum();
            (x, s * scale)
        })
        .collect())
}

/// Trapezoid integral of a density table.
pub fn integrate_table(table: &[(f64, f64)]) -> f64 {
    table.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

pub fn write_table(path: &Path, table: &[(f64, f64)]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "x,density")?;
    for (x, d) in table {
        writeln!(w, "{x:?},{d:?}")?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_bump() {
        let t = epanechnikov(&[0.0], Some(0.5), Some(1001)).unwrap();
        assert_eq!(t.first().unwrap().0, -0.5);
        assert_eq!(t.last().unwrap().0, 0.5);
        assert!((t[500].1 - 1.5).abs() < 1e-12);
        for i in 0..t.len() {
            assert!((t[i].1 - t[t.len() - 1 - i].1).abs() < 1e-12);
        }
        assert!((integrate_table(&t) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn errors() {
        assert!(epanechnikov(&[], None, None).is_err());
        assert!(epanechnikov(&[1.0, 1.0], None, None).is_err());
    }
}
