//! Metrics CSV: `step,episode,episode_return,loss,mean_abs_sigma,kl_term,wallclock_ms`.
//!
//! Floats use the shortest representation that parses back to the same
//! value; absent values are empty fields.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use sanex_core::agent::MetricsRow;

use crate::CliError;

pub const METRICS_HEADER: [&str; 7] = [
    "step",
    "episode",
    "episode_return",
    "loss",
    "mean_abs_sigma",
    "kl_term",
    "wallclock_ms",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn write_metrics_to<W: Write>(rows: &[MetricsRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.episode.to_string(),
            opt(r.episode_return),
            opt(r.loss),
            opt(r.mean_abs_sigma),
            opt(r.kl_term),
            r.wallclock_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_metrics_to(rows, file).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::format(path, line, format!("{other:?}")),
    }
}

pub fn read_metrics_from<R: Read>(input: R, path: &Path) -> Result<Vec<MetricsRow>, CliError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(CliError::format(path, 1, "unexpected metrics header"));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |field: &str| CliError::format(path, line, format!("bad value in column {field}"));
        let int = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(METRICS_HEADER[i]));
        let float = |i: usize| -> Result<Option<f64>, CliError> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                rec[i].parse::<f64>().map(Some).map_err(|_| bad(METRICS_HEADER[i]))
            }
        };
        rows.push(MetricsRow {
            step: int(0)?,
            episode: int(1)?,
            episode_return: float(2)?,
            loss: float(3)?,
            mean_abs_sigma: float(4)?,
            kl_term: float(5)?,
            wallclock_ms: int(6)?,
        });
    }
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_metrics_from(file, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_rows_give_header_only() {
        let mut buf = Vec::new();
        write_metrics_to(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,episode,episode_return,loss,mean_abs_sigma,kl_term,wallclock_ms\n"
        );
    }

    #[test]
    fn absent_values_are_empty_fields() {
        let row = MetricsRow {
            step: 7,
            episode: 2,
            episode_return: None,
            loss: Some(0.1),
            mean_abs_sigma: None,
            kl_term: Some(1e-300),
            wallclock_ms: 0,
        };
        let mut buf = Vec::new();
        write_metrics_to(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1), Some("7,2,,0.1,,1e-300,0"));
    }

    fn opt_f64() -> impl Strategy<Value = Option<f64>> {
        prop_oneof![Just(None), any::<f64>().prop_filter("finite", |x| x.is_finite()).prop_map(Some)]
    }

    proptest! {
        #[test]
        fn round_trip(step in any::<u64>(), ep in any::<u64>(), a in opt_f64(), b in opt_f64(), c in opt_f64(), d in opt_f64(), ms in any::<u64>()) {
            let row = MetricsRow { step, episode: ep, episode_return: a, loss: b, mean_abs_sigma: c, kl_term: d, wallclock_ms: ms };
            let mut buf = Vec::new();
            write_metrics_to(std::slice::from_ref(&row), &mut buf).unwrap();
            let back = read_metrics_from(&buf[..], Path::new("m.csv")).unwrap();
            prop_assert_eq!(back, vec![row]);
        }
    }
}
