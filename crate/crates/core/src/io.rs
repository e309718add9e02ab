//! Canonical JSON and CSV artifacts.
//!
//! JSON goes through `serde_json::Value`, whose maps are ordered by key, and is
//! pretty-printed with a trailing newline. CSV files start with `# key=value`
//! lines echoing the run configuration, followed by a header row and data.

use std::io::{BufRead, Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::acpf::ResidualVector;
use crate::Result;

/// A result together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<C, R> {
    pub config: C,
    pub result: R,
}

/// Key-sorted, pretty-printed JSON with a trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<()> {
    out.write_all(to_canonical_json(value)?.as_bytes())?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned, R: Read>(input: R) -> Result<T> {
    Ok(serde_json::from_reader(input)?)
}

/// Writes `# key=value` lines, then the rows with a header.
pub fn write_csv<S: Serialize, W: Write>(config: &[(String, String)], rows: &[S], mut out: W) -> Result<()> {
    for (k, v) in config {
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes only the header row when `rows` is empty, which `csv` skips.
pub fn write_csv_with_header<S: Serialize, W: Write>(
    config: &[(String, String)],
    header: &[&str],
    rows: &[S],
    mut out: W,
) -> Result<()> {
    if rows.is_empty() {
        for (k, v) in config {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "{}", header.join(","))?;
        return Ok(());
    }
    write_csv(config, rows, out)
}

/// `# key=value` pairs from the top of a CSV file.
pub type CsvConfig = Vec<(String, String)>;

/// Reads a file written by [`write_csv`]: the config lines and the rows.
pub fn read_csv<T: DeserializeOwned, R: BufRead>(input: R) -> Result<(CsvConfig, Vec<T>)> {
    let mut config = Vec::new();
    let mut body = String::new();
    for line in input.lines() {
        let line = line?;
        match line.strip_prefix("# ") {
            Some(kv) if body.is_empty() => {
                let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
                config.push((k.to_string(), v.to_string()));
            }
            _ => {
                body.push_str(&line);
                body.push('\n');
            }
        }
    }
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok((config, rows))
}

pub const GAP_CSV_HEADER: [&str; 7] = [
    "run_id",
    "load_factor_mean",
    "total_load",
    "dc_total_gen",
    "ac_total_gen",
    "gap",
    "ac_converged",
];

pub const RESIDUAL_CSV_HEADER: [&str; 3] = ["bus_id", "p_residual", "q_residual"];

pub const TRACE_CSV_HEADER: [&str; 5] = ["iteration", "barrier", "kkt_norm", "feas_norm", "objective"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub bus_id: usize,
    pub p_residual: f64,
    pub q_residual: f64,
}

pub fn residual_rows(r: &ResidualVector) -> Vec<ResidualRow> {
    r.bus_ids
        .iter()
        .zip(&r.p_residual)
        .zip(&r.q_residual)
        .map(|((&bus_id, &p), &q)| ResidualRow { bus_id, p_residual: p, q_residual: q })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acopf::TraceRow;
    use crate::feasgap::GapExperimentRow;

    fn config() -> Vec<(String, String)> {
        vec![("seed".into(), "42".into()), ("case".into(), "case14.m".into())]
    }

    #[test]
    fn gap_csv_round_trip_and_header() {
        let rows = vec![
            GapExperimentRow {
                run_id: 0,
                load_factor_mean: 0.9,
                total_load: 2.3,
                dc_total_gen: Some(2.3),
                ac_total_gen: Some(2.41),
                gap: Some(0.11),
                ac_converged: true,
            },
            GapExperimentRow {
                run_id: 1,
                load_factor_mean: 1.1,
                total_load: 2.9,
                dc_total_gen: Some(2.9),
                ac_total_gen: None,
                gap: None,
                ac_converged: false,
            },
        ];
        let mut buf = Vec::new();
        write_csv(&config(), &rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed=42");
        assert_eq!(lines[2], GAP_CSV_HEADER.join(","));
        assert_eq!(lines[4], "1,1.1,2.9,2.9,,,false");
        let (cfg, back): (_, Vec<GapExperimentRow>) = read_csv(buf.as_slice()).unwrap();
        assert_eq!(cfg, config());
        assert_eq!(back, rows);
    }

    #[test]
    fn residual_and_trace_round_trip() {
        let res = ResidualVector { bus_ids: vec![1, 4], p_residual: vec![0.5, -1e-7], q_residual: vec![0.0, 2.0] };
        let rows = residual_rows(&res);
        let mut buf = Vec::new();
        write_csv(&[], &rows, &mut buf).unwrap();
        assert!(buf.starts_with(RESIDUAL_CSV_HEADER.join(",").as_bytes()));
        let (_, back): (_, Vec<ResidualRow>) = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);

        let trace = vec![TraceRow { iteration: 0, barrier: 0.1, kkt_norm: 3.0, feas_norm: 1.0, objective: 10.0 }];
        let mut buf = Vec::new();
        write_csv(&config(), &trace, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains(&TRACE_CSV_HEADER.join(",")));
        let (_, back): (_, Vec<TraceRow>) = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn empty_rows_still_get_a_header() {
        let mut buf = Vec::new();
        write_csv_with_header::<ResidualRow, _>(&config(), &RESIDUAL_CSV_HEADER, &[], &mut buf).unwrap();
        let (cfg, back): (_, Vec<ResidualRow>) = read_csv(buf.as_slice()).unwrap();
        assert_eq!(cfg.len(), 2);
        assert!(back.is_empty());
    }

    #[test]
    fn json_is_key_sorted_and_round_trips() {
        let env = Envelope { config: serde_json::json!({"seed": 42, "case": "x"}), result: vec![1.5, 2.0] };
        let s = to_canonical_json(&env).unwrap();
        assert!(s.find("\"case\"").unwrap() < s.find("\"seed\"").unwrap());
        assert!(s.ends_with('\n'));
        let back: Envelope<serde_json::Value, Vec<f64>> = read_json(s.as_bytes()).unwrap();
        assert_eq!(back, env);
        assert_eq!(to_canonical_json(&back).unwrap(), s);
    }

    #[test]
    fn floats_survive_a_json_round_trip_exactly() {
        let v = vec![0.1 + 0.2, 2.6851115631318394, 7.771561172376096e-16, -1.0 / 3.0];
        let s = to_canonical_json(&v).unwrap();
        let back: Vec<f64> = read_json(s.as_bytes()).unwrap();
        assert_eq!(back, v);
    }
}
