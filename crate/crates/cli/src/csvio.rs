//! Fixed CSV layouts shared by the oracle, evaluate and compare commands.
//!
//! * `stats.csv`: `probe,coord0,coord1,mean,std,n`
//! * `samples.csv`: `probe,member,value` in long form, probe-major
//! * `pdf.csv`: `probe,abscissa,density,bandwidth`
//! * `loss.csv`: `iteration,loss`

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use rpde_core::stats::{FieldStats, PdfEstimate};

use crate::error::{CliError, CliResult};

pub const STATS_HEADER: [&str; 6] = ["probe", "coord0", "coord1", "mean", "std", "n"];
pub const SAMPLES_HEADER: [&str; 3] = ["probe", "member", "value"];
pub const PDF_HEADER: [&str; 4] = ["probe", "abscissa", "density", "bandwidth"];
pub const LOSS_HEADER: [&str; 2] = ["iteration", "loss"];

#[derive(Debug, Serialize, Deserialize)]
struct StatsRow {
    probe: usize,
    coord0: f64,
    coord1: f64,
    mean: f64,
    std: f64,
    n: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    probe: usize,
    member: usize,
    value: f64,
}

#[derive(Debug, Serialize)]
struct PdfRow {
    probe: usize,
    abscissa: f64,
    density: f64,
    bandwidth: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LossRow {
    pub iteration: u64,
    pub loss: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Schema(format!("{}: {other:?}", path.display())),
    }
}

/// Writes the header explicitly so that an empty table still carries it.
fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let found = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::Schema(format!(
            "{}: header '{}' is not '{}'",
            path.display(),
            found.iter().collect::<Vec<_>>().join(","),
            header.join(",")
        )));
    }
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn write_stats(path: &Path, stats: &FieldStats) -> CliResult<()> {
    write_rows(
        path,
        &STATS_HEADER,
        stats.probes.iter().enumerate().map(|(q, p)| StatsRow {
            probe: q,
            coord0: p[0],
            coord1: p[1],
            mean: stats.mean[q],
            std: stats.std[q],
            n: stats.count,
        }),
    )
}

pub fn read_stats(path: &Path) -> CliResult<FieldStats> {
    let rows: Vec<StatsRow> = read_rows(path, &STATS_HEADER)?;
    if rows.is_empty() {
        return Err(CliError::Schema(format!("{}: no probes", path.display())));
    }
    let count = rows[0].n;
    for (q, r) in rows.iter().enumerate() {
        if r.probe != q || r.n != count {
            return Err(CliError::Schema(format!(
                "{}: row {q} is out of sequence",
                path.display()
            )));
        }
    }
    Ok(FieldStats {
        probes: rows.iter().map(|r| vec![r.coord0, r.coord1]).collect(),
        mean: rows.iter().map(|r| r.mean).collect(),
        std: rows.iter().map(|r| r.std).collect(),
        count,
    })
}

/// Writes a `members x probes` matrix in long form.
pub fn write_samples(path: &Path, values: &Array2<f64>) -> CliResult<()> {
    let (m, q) = values.dim();
    write_rows(
        path,
        &SAMPLES_HEADER,
        (0..q).flat_map(|probe| {
            (0..m).map(move |member| SampleRow {
                probe,
                member,
                value: values[[member, probe]],
            })
        }),
    )
}

pub fn read_samples(path: &Path) -> CliResult<Array2<f64>> {
    let rows: Vec<SampleRow> = read_rows(path, &SAMPLES_HEADER)?;
    let probes = rows.iter().map(|r| r.probe + 1).max().unwrap_or(0);
    let members = rows.iter().map(|r| r.member + 1).max().unwrap_or(0);
    if probes * members != rows.len() || rows.is_empty() {
        return Err(CliError::Schema(format!("{}: incomplete sample table", path.display())));
    }
    let mut out = Array2::from_elem((members, probes), f64::NAN);
    for r in &rows {
        out[[r.member, r.probe]] = r.value;
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(CliError::Schema(format!(
            "{}: duplicated or missing samples",
            path.display()
        )));
    }
    Ok(out)
}

/// Densities keyed by probe index; probes without a density are simply absent.
pub fn write_pdfs(path: &Path, pdfs: &[(usize, PdfEstimate)]) -> CliResult<()> {
    write_rows(
        path,
        &PDF_HEADER,
        pdfs.iter().flat_map(|&(probe, ref pdf)| {
            pdf.abscissae
                .iter()
                .zip(&pdf.density)
                .map(move |(&abscissa, &density)| PdfRow {
                    probe,
                    abscissa,
                    density,
                    bandwidth: pdf.bandwidth,
                })
        }),
    )
}

pub fn write_loss(path: &Path, rows: &[LossRow]) -> CliResult<()> {
    write_rows(path, &LOSS_HEADER, rows)
}

pub fn read_loss(path: &Path) -> CliResult<Vec<LossRow>> {
    read_rows(path, &LOSS_HEADER)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_and_samples_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stats = FieldStats {
            probes: vec![vec![0.5, 0.1], vec![1.0, 0.3]],
            mean: vec![0.1 + 0.2, -1.0 / 3.0],
            std: vec![1e-300, 2.5],
            count: 3,
        };
        let path = dir.path().join("stats.csv");
        write_stats(&path, &stats).unwrap();
        assert_eq!(read_stats(&path).unwrap(), stats);

        let values = Array2::from_shape_fn((3, 2), |(m, q)| (m as f64 + 0.1) * (q as f64 - 0.7));
        let path = dir.path().join("samples.csv");
        write_samples(&path, &values).unwrap();
        assert_eq!(read_samples(&path).unwrap(), values);
    }

    #[test]
    fn corrupted_header_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.csv");
        std::fs::write(&path, "probe,x,y,mean,std,n\n0,0,0,1,1,3\n").unwrap();
        let err = read_stats(&path).unwrap_err();
        assert!(matches!(err, CliError::Schema(_)));
        assert_eq!(err.exit_code(), 2);
        std::fs::write(&path, "probe,coord0,coord1,mean,std,n\n0,0,0,one,1,3\n").unwrap();
        assert!(matches!(read_stats(&path), Err(CliError::Schema(_))));
    }

    #[test]
    fn empty_loss_log_keeps_its_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        write_loss(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "iteration,loss\n");
        assert!(read_loss(&path).unwrap().is_empty());
    }
}
