//! `metrics.csv` reading and writing.

use reboot_core::sim::{Method, MetricsRow};
use std::io::{Read, Write};
use thiserror::Error;

pub const HEADER: [&str; 9] = [
    "scenario",
    "method",
    "m",
    "n",
    "replications_used",
    "failures",
    "mse",
    "mse_se",
    "bias",
];

#[derive(Debug, Error)]
pub enum TableError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("record {record}: {message}")]
    Field { record: usize, message: String },
}

/// Writes the header and one record per row. Floats use Rust's shortest
/// round-trip formatting.
pub fn write_metrics<W: Write>(rows: &[MetricsRow], out: W) -> Result<(), TableError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(HEADER)?;
    for r in rows {
        writer.write_record([
            r.scenario.clone(),
            r.method.name().to_string(),
            r.m.to_string(),
            r.n.to_string(),
            r.replications_used.to_string(),
            r.failures.to_string(),
            r.mse.to_string(),
            r.mse_se.to_string(),
            r.bias.to_string(),
        ])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn metrics_to_string(rows: &[MetricsRow]) -> String {
    let mut buf = Vec::new();
    write_metrics(rows, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is UTF-8")
}

pub fn read_metrics<R: Read>(input: R) -> Result<Vec<MetricsRow>, TableError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(TableError::Header(header));
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |i: usize| TableError::Field {
            record: idx + 1,
            message: format!("cannot parse `{}` as {}", field(i), HEADER[i]),
        };
        let int = |i: usize| field(i).parse::<usize>().map_err(|_| bad(i));
        let real = |i: usize| field(i).parse::<f64>().map_err(|_| bad(i));
        rows.push(MetricsRow {
            scenario: field(0).to_string(),
            method: field(1).parse::<Method>().map_err(|_| bad(1))?,
            m: int(2)?,
            n: int(3)?,
            replications_used: int(4)?,
            failures: int(5)?,
            mse: real(6)?,
            mse_se: real(7)?,
            bias: real(8)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mse: f64) -> MetricsRow {
        MetricsRow {
            scenario: "logistic_p5".into(),
            method: Method::Reboot,
            m: 30,
            n: 200,
            replications_used: 199,
            failures: 1,
            mse,
            mse_se: 1.25e-5,
            bias: 0.1,
        }
    }

    #[test]
    fn exact_layout() {
        let text = metrics_to_string(&[row(0.0038)]);
        assert_eq!(
            text,
            "scenario,method,m,n,replications_used,failures,mse,mse_se,bias\n\
             logistic_p5,reboot,30,200,199,1,0.0038,0.0000125,0.1\n"
        );
    }

    #[test]
    fn header_present_without_rows() {
        assert_eq!(metrics_to_string(&[]), format!("{}\n", HEADER.join(",")));
    }

    #[test]
    fn round_trip() {
        let rows = vec![row(1.0 / 3.0), row(2.5e-300)];
        let back = read_metrics(metrics_to_string(&rows).as_bytes()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(matches!(read_metrics("a,b\n1,2\n".as_bytes()), Err(TableError::Header(_))));
    }
}
