//! CSV input and output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use gridcopula::grid::rank_transform;
use gridcopula::{CellCounts, PseudoSample, ThetaGrid, TieMode};

use crate::DataMode;

/// Reads a headered two-column numeric CSV. Errors name the offending line.
pub fn read_pairs(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("{}: malformed CSV", path.display()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            bail!(
                "{}: line {line}: expected 2 columns, found {}",
                path.display(),
                rec.len()
            );
        }
        let parse = |i: usize| -> Result<f64> {
            let v: f64 = rec[i].parse().with_context(|| {
                format!(
                    "{}: line {line}: `{}` is not a number",
                    path.display(),
                    &rec[i]
                )
            })?;
            if !v.is_finite() {
                bail!("{}: line {line}: non-finite value", path.display());
            }
            Ok(v)
        };
        let (a, b) = (parse(0)?, parse(1)?);
        x.push(a);
        y.push(b);
    }
    if x.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok((x, y))
}

/// Pseudo-observations from raw columns: used as they are in raw mode, rank
/// transformed in rank mode.
pub fn pseudo_sample(x: &[f64], y: &[f64], mode: DataMode, ties: TieMode) -> Result<PseudoSample> {
    Ok(match mode {
        DataMode::Raw => PseudoSample::new(x.iter().copied().zip(y.iter().copied()).collect())
            .context("raw mode needs data in (0, 1]; use --mode rank for other scales")?,
        DataMode::Rank => rank_transform(x, y, ties)?,
    })
}

pub fn load_counts(path: &Path, m: usize, mode: DataMode, ties: TieMode) -> Result<CellCounts> {
    let (x, y) = read_pairs(path)?;
    let s = pseudo_sample(&x, &y, mode, ties)?;
    Ok(CellCounts::from_sample(&s, m)?)
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create directory {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_pairs(path: &Path, sample: &PseudoSample) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["u", "v"])?;
    for (u, v) in sample.points() {
        w.write_record([format!("{u:?}"), format!("{v:?}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Cell values as `j,k,density` with one-based indices.
pub fn write_cells(path: &Path, grid: &ThetaGrid) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["j", "k", "density"])?;
    let m = grid.m();
    for j in 0..m {
        for k in 0..m {
            w.write_record([
                (j + 1).to_string(),
                (k + 1).to_string(),
                format!("{:?}", cell_density(grid, j, k)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn cell_density(grid: &ThetaGrid, j: usize, k: usize) -> f64 {
    let m = grid.m() as f64;
    m * m * grid.get(j, k)
}

/// `(u, v, C(u, v))` on a `(points + 1)^2` lattice.
pub fn write_cdf_surface(path: &Path, grid: &ThetaGrid, points: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["u", "v", "cdf"])?;
    for i in 0..=points {
        for j in 0..=points {
            let (u, v) = (i as f64 / points as f64, j as f64 / points as f64);
            w.write_record([
                format!("{u:?}"),
                format!("{v:?}"),
                format!("{:?}", grid.cdf(u, v)?),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
