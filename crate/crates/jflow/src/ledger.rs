//! JSON-lines ledgers: one object per record time, plus the CSV and
//! plot-data exports driven by `jflow report`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::monitors::MonitorReport;

/// One ledger row. Key names are part of the external interface.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LedgerRow {
    pub t: f64,
    pub dt: f64,
    pub sup_dphidt: f64,
    pub inf_dphidt: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub w_max: f64,
    #[serde(rename = "J")]
    pub j: Vec<f64>,
    pub combined: f64,
    pub dissipation: f64,
    pub violations: Vec<String>,
}

/// Assemble ledger rows from a trajectory and its monitor report.
pub fn rows_from_trajectory(traj: &Trajectory, report: &MonitorReport) -> Vec<LedgerRow> {
    traj.records
        .iter()
        .enumerate()
        .map(|(k, rec)| LedgerRow {
            t: rec.t,
            dt: rec.dt,
            sup_dphidt: rec.sup_dphidt,
            inf_dphidt: rec.inf_dphidt,
            ratio_min: rec.ratio_min,
            ratio_max: rec.ratio_max,
            phi_min: rec.phi_min,
            phi_max: rec.phi_max,
            w_max: rec.w_max,
            j: rec.functional.j.clone(),
            combined: rec.functional.combined,
            dissipation: rec.functional.dissipation,
            violations: report
                .rows
                .get(k)
                .map(|r| r.violations.clone())
                .unwrap_or_default(),
        })
        .collect()
}

pub fn write_jsonl(w: &mut impl Write, rows: &[LedgerRow]) -> Result<()> {
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| Error::argument(format!("ledger row serialization failed: {e}")))?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parse a JSON-lines ledger, reporting the byte offset of the first
/// malformed line (e.g. a truncated tail).
pub fn parse_jsonl(bytes: &[u8]) -> Result<Vec<LedgerRow>> {
    let mut rows = Vec::new();
    let mut offset = 0usize;
    while offset < bytes.len() {
        let rest = &bytes[offset..];
        let line_end = rest.iter().position(|&b| b == b'\n');
        let (line, consumed) = match line_end {
            Some(e) => (&rest[..e], e + 1),
            None => (rest, rest.len()),
        };
        if !line.is_empty() {
            let row: LedgerRow = serde_json::from_slice(line).map_err(|e| Error::Format {
                byte_offset: offset as u64,
                what: format!("ledger row does not parse: {e}"),
            })?;
            rows.push(row);
        }
        offset += consumed;
    }
    Ok(rows)
}

/// CSV export: one row per record, columns matching the JSON keys with the
/// J array flattened to J_0..J_n and violations joined by ';'.
pub fn to_csv(rows: &[LedgerRow]) -> String {
    let mut out = String::new();
    let nj = rows.first().map_or(0, |r| r.j.len());
    let mut header = vec![
        "t",
        "dt",
        "sup_dphidt",
        "inf_dphidt",
        "ratio_min",
        "ratio_max",
        "phi_min",
        "phi_max",
        "w_max",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    for i in 0..nj {
        header.push(format!("J_{i}"));
    }
    header.push("combined".to_string());
    header.push("dissipation".to_string());
    header.push("violations".to_string());
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        let mut cols = vec![
            r.t.to_string(),
            r.dt.to_string(),
            r.sup_dphidt.to_string(),
            r.inf_dphidt.to_string(),
            r.ratio_min.to_string(),
            r.ratio_max.to_string(),
            r.phi_min.to_string(),
            r.phi_max.to_string(),
            r.w_max.to_string(),
        ];
        for v in &r.j {
            cols.push(v.to_string());
        }
        cols.push(r.combined.to_string());
        cols.push(r.dissipation.to_string());
        cols.push(r.violations.join(";"));
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

/// Plot-data export: t vs combined, J_n drift, sup |∂ₜφ| and w_max.
pub fn plot_data(rows: &[LedgerRow]) -> String {
    let mut out = String::from("t,combined,jn_drift,sup_abs_dphidt,w_max\n");
    let jn0 = rows
        .first()
        .and_then(|r| r.j.last().copied())
        .unwrap_or(0.0);
    for r in rows {
        let jn = r.j.last().copied().unwrap_or(0.0);
        let drift = (jn - jn0) / jn0.abs().max(1.0);
        let sup_abs = r.sup_dphidt.abs().max(r.inf_dphidt.abs());
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.t, r.combined, drift, sup_abs, r.w_max
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> Vec<LedgerRow> {
        (0..4)
            .map(|k| LedgerRow {
                t: k as f64 * 0.25,
                dt: 0.01,
                sup_dphidt: 0.1 / (k + 1) as f64,
                inf_dphidt: -0.2 / (k + 1) as f64,
                ratio_min: 1.9,
                ratio_max: 2.1,
                phi_min: -0.3,
                phi_max: 0.4,
                w_max: 4.2,
                j: vec![0.01, 0.02, 0.03],
                combined: -0.5 + 0.01 * k as f64,
                dissipation: 1e-3,
                violations: if k == 2 {
                    vec!["c0_upper: test".to_string()]
                } else {
                    Vec::new()
                },
            })
            .collect()
    }

    #[test]
    fn jsonl_roundtrip() {
        let rows = sample_rows();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &rows).unwrap();
        let back = parse_jsonl(&buf).unwrap();
        assert_eq!(rows, back);
        // serde_json prints shortest round-trip floats, so re-serialization
        // is byte-identical
        let mut buf2 = Vec::new();
        write_jsonl(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn truncated_tail_reports_byte_offset() {
        let rows = sample_rows();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &rows).unwrap();
        // cut into the middle of the final line
        let cut = buf.len() - 10;
        buf.truncate(cut);
        match parse_jsonl(&buf) {
            Err(Error::Format { byte_offset, .. }) => {
                // offset points at the start of the broken line
                let line_starts: Vec<usize> = std::iter::once(0)
                    .chain(
                        buf.iter()
                            .enumerate()
                            .filter(|&(_, &b)| b == b'\n')
                            .map(|(i, _)| i + 1),
                    )
                    .collect();
                assert!(line_starts.contains(&(byte_offset as usize)));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn csv_has_one_row_per_record_and_flattened_j() {
        let rows = sample_rows();
        let csv = to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), rows.len() + 1);
        assert!(lines[0].contains("J_0,J_1,J_2"));
        assert!(lines[3].contains("c0_upper"));
    }

    #[test]
    fn plot_data_drift_starts_at_zero() {
        let rows = sample_rows();
        let text = plot_data(&rows);
        let first_data = text.lines().nth(1).unwrap();
        let cols: Vec<&str> = first_data.split(',').collect();
        assert_eq!(cols[2].parse::<f64>().unwrap(), 0.0);
    }
}
