//! Snapshot files: one JSON header line followed by raw little-endian
//! float64 arrays in row-major grid order.
//!
//! Header keys: {schema: "jflow-field/1", n, m, N, t, c, kind} plus the
//! optional `arrays` list (defaulted from `kind`) and a `closed` tag for
//! form fields. ScalarField payloads are one array of N^n values; form
//! fields store n² interleaved real/imag pairs per point.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FormField, PeriodicGrid, ScalarField};
use crate::smallmat::C64;

pub const SCHEMA: &str = "jflow-field/1";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SnapshotMeta {
    pub schema: String,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "N")]
    pub points_per_axis: usize,
    pub t: f64,
    pub c: f64,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arrays: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed: Option<bool>,
}

impl SnapshotMeta {
    pub fn new(kind: &str, n: usize, m: usize, points_per_axis: usize, t: f64, c: f64) -> Self {
        SnapshotMeta {
            schema: SCHEMA.to_string(),
            n,
            m,
            points_per_axis,
            t,
            c,
            kind: kind.to_string(),
            arrays: None,
            closed: None,
        }
    }

    fn array_names(&self) -> Vec<String> {
        if let Some(a) = &self.arrays {
            return a.clone();
        }
        match self.kind.as_str() {
            "setup" => vec![
                "chi".to_string(),
                "chi_tilde".to_string(),
                "omega".to_string(),
            ],
            other => vec![other.to_string()],
        }
    }
}

#[derive(Debug, Clone)]
pub enum SnapshotPayload {
    Scalar(ScalarField),
    Setup {
        chi: FormField,
        chi_tilde: FormField,
        omega: FormField,
    },
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub meta: SnapshotMeta,
    pub payload: SnapshotPayload,
}

fn write_f64s(w: &mut impl Write, vals: impl Iterator<Item = f64>) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Serialize a scalar snapshot (kind "phi", "psi", ...).
pub fn write_scalar(w: &mut impl Write, meta: &SnapshotMeta, field: &ScalarField) -> Result<()> {
    let mut header = serde_json::to_string(meta)
        .map_err(|e| Error::argument(format!("header serialization failed: {e}")))?;
    header.push('\n');
    w.write_all(header.as_bytes())?;
    write_f64s(w, field.data().iter().copied())?;
    Ok(())
}

fn write_form_payload(w: &mut impl Write, field: &FormField) -> Result<()> {
    write_f64s(
        w,
        field.data().iter().flat_map(|z| [z.re, z.im].into_iter()),
    )
}

/// Serialize a full setup snapshot (χ, χ̃, ω back to back).
pub fn write_setup(
    w: &mut impl Write,
    meta: &SnapshotMeta,
    chi: &FormField,
    chi_tilde: &FormField,
    omega: &FormField,
) -> Result<()> {
    let mut m = meta.clone();
    m.kind = "setup".to_string();
    m.arrays = Some(vec![
        "chi".to_string(),
        "chi_tilde".to_string(),
        "omega".to_string(),
    ]);
    m.closed = Some(chi.closed() && chi_tilde.closed());
    let mut header = serde_json::to_string(&m)
        .map_err(|e| Error::argument(format!("header serialization failed: {e}")))?;
    header.push('\n');
    w.write_all(header.as_bytes())?;
    write_form_payload(w, chi)?;
    write_form_payload(w, chi_tilde)?;
    write_form_payload(w, omega)?;
    Ok(())
}

/// Parse a snapshot from raw bytes (also the fuzzing entry point).
pub fn parse_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format {
            byte_offset: bytes.len() as u64,
            what: "missing header line terminator".to_string(),
        })?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|e| Error::Format {
        byte_offset: e.valid_up_to() as u64,
        what: "header is not valid UTF-8".to_string(),
    })?;
    let meta: SnapshotMeta = serde_json::from_str(header).map_err(|e| Error::Format {
        byte_offset: 0,
        what: format!("header does not parse: {e}"),
    })?;
    if meta.schema != SCHEMA {
        return Err(Error::Format {
            byte_offset: 0,
            what: format!("unknown schema `{}`", meta.schema),
        });
    }
    if meta.n < 1 || meta.n > crate::grid::MAX_DIM {
        return Err(Error::Format {
            byte_offset: 0,
            what: format!("dimension n = {} out of range", meta.n),
        });
    }
    let grid = PeriodicGrid::new(meta.n, meta.points_per_axis).map_err(|e| Error::Format {
        byte_offset: 0,
        what: format!("bad grid: {e}"),
    })?;
    let total = grid.total_points();
    let payload = &bytes[newline + 1..];
    let names = meta.array_names();

    let take_f64s = |payload: &[u8], offset: &mut usize, count: usize| -> Result<Vec<f64>> {
        let need = count.checked_mul(8).ok_or_else(|| Error::Format {
            byte_offset: 0,
            what: "payload length overflows".to_string(),
        })?;
        if payload.len() < *offset + need {
            return Err(Error::Format {
                byte_offset: (newline + 1 + payload.len()) as u64,
                what: format!(
                    "payload truncated: need {} bytes at offset {}, have {}",
                    need,
                    *offset,
                    payload.len() - (*offset).min(payload.len())
                ),
            });
        }
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let base = *offset + i * 8;
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&payload[base..base + 8]);
            out.push(f64::from_le_bytes(buf));
        }
        *offset += need;
        Ok(out)
    };

    let mut offset = 0usize;
    if meta.kind == "setup" {
        if names.len() != 3 {
            return Err(Error::Format {
                byte_offset: 0,
                what: format!("setup snapshot expects 3 arrays, header lists {}", names.len()),
            });
        }
        let nn = meta.n * meta.n;
        let closed = meta.closed.unwrap_or(false);
        let mut read_form = |closed: bool| -> Result<FormField> {
            let raw = take_f64s(payload, &mut offset, total * nn * 2)?;
            let data: Vec<C64> = raw
                .chunks_exact(2)
                .map(|p| C64::new(p[0], p[1]))
                .collect();
            if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Format {
                    byte_offset: 0,
                    what: "form field contains non-finite entries".to_string(),
                });
            }
            FormField::surrogate(grid, data, closed)
        };
        let chi = read_form(closed)?;
        let chi_tilde = read_form(closed)?;
        let omega = read_form(true)?;
        if offset != payload.len() {
            return Err(Error::Format {
                byte_offset: (newline + 1 + offset) as u64,
                what: format!("{} trailing bytes after payload", payload.len() - offset),
            });
        }
        Ok(Snapshot {
            meta,
            payload: SnapshotPayload::Setup {
                chi,
                chi_tilde,
                omega,
            },
        })
    } else {
        let raw = take_f64s(payload, &mut offset, total)?;
        if offset != payload.len() {
            return Err(Error::Format {
                byte_offset: (newline + 1 + offset) as u64,
                what: format!("{} trailing bytes after payload", payload.len() - offset),
            });
        }
        let field = ScalarField::new(grid, raw).map_err(|e| Error::Format {
            byte_offset: (newline + 1) as u64,
            what: format!("bad scalar payload: {e}"),
        })?;
        Ok(Snapshot {
            meta,
            payload: SnapshotPayload::Scalar(field),
        })
    }
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = std::fs::read(path)?;
    parse_snapshot(&bytes)
}

pub fn write_scalar_file(path: &Path, meta: &SnapshotMeta, field: &ScalarField) -> Result<()> {
    let mut buf = Vec::new();
    write_scalar(&mut buf, meta, field)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn write_setup_file(
    path: &Path,
    meta: &SnapshotMeta,
    chi: &FormField,
    chi_tilde: &FormField,
    omega: &FormField,
) -> Result<()> {
    let mut buf = Vec::new();
    write_setup(&mut buf, meta, chi, chi_tilde, omega)?;
    std::fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{build_scenario, ScenarioSpec};
    use crate::herm::HermForm;
    use proptest::prelude::*;

    #[test]
    fn scalar_roundtrip_is_bit_exact() {
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let field = ScalarField::from_fn(grid, |x| {
            (std::f64::consts::TAU * x[0]).cos() * 0.3 + x[1] * 1e-9
        })
        .unwrap();
        let meta = SnapshotMeta::new("phi", 2, 1, 8, 1.5, 2.0);
        let mut buf = Vec::new();
        write_scalar(&mut buf, &meta, &field).unwrap();
        let snap = parse_snapshot(&buf).unwrap();
        match &snap.payload {
            SnapshotPayload::Scalar(f) => {
                for (a, b) in field.data().iter().zip(f.data()) {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
                // write → read → write is byte-identical
                let mut buf2 = Vec::new();
                write_scalar(&mut buf2, &snap.meta, f).unwrap();
                assert_eq!(buf, buf2);
            }
            _ => panic!("unexpected payload"),
        }
    }

    #[test]
    fn setup_roundtrip_from_scenario() {
        let sc = build_scenario(&ScenarioSpec::named("boundary", 2, 1, 8, 3)).unwrap();
        let meta = SnapshotMeta::new("setup", 2, 1, 8, 0.0, sc.setup.c);
        let mut buf = Vec::new();
        write_setup(
            &mut buf,
            &meta,
            &sc.setup.chi,
            &sc.setup.chi_tilde,
            &sc.setup.omega,
        )
        .unwrap();
        let snap = parse_snapshot(&buf).unwrap();
        match &snap.payload {
            SnapshotPayload::Setup {
                chi,
                chi_tilde,
                omega,
            } => {
                assert_eq!(chi.data(), sc.setup.chi.data());
                assert_eq!(chi_tilde.data(), sc.setup.chi_tilde.data());
                assert_eq!(omega.data(), sc.setup.omega.data());
                assert!(chi.closed());
                // re-serialize: byte identical
                let mut buf2 = Vec::new();
                write_setup(&mut buf2, &snap.meta, chi, chi_tilde, omega).unwrap();
                assert_eq!(buf, buf2);
            }
            _ => panic!("unexpected payload"),
        }
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let grid = PeriodicGrid::new(2, 4).unwrap();
        let field = ScalarField::zeros(grid);
        let meta = SnapshotMeta::new("phi", 2, 1, 4, 0.0, 1.0);
        let mut buf = Vec::new();
        write_scalar(&mut buf, &meta, &field).unwrap();
        buf.truncate(buf.len() - 5);
        match parse_snapshot(&buf) {
            Err(Error::Format { what, .. }) => assert!(what.contains("truncated"), "{what}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn garbage_header_is_rejected() {
        assert!(parse_snapshot(b"not json\n").is_err());
        assert!(parse_snapshot(b"").is_err());
        assert!(parse_snapshot(br#"{"schema":"other/1","n":2,"m":1,"N":4,"t":0,"c":1,"kind":"phi"}"#.as_slice()).is_err());
    }

    #[test]
    fn identity_form_survives_roundtrip_via_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("setup.snap");
        let grid = PeriodicGrid::new(2, 4).unwrap();
        let omega = FormField::constant(grid, &HermForm::identity(2)).unwrap();
        let meta = SnapshotMeta::new("setup", 2, 1, 4, 0.0, 2.0);
        write_setup_file(&path, &meta, &omega, &omega, &omega).unwrap();
        let snap = read_snapshot(&path).unwrap();
        match snap.payload {
            SnapshotPayload::Setup { omega: o, .. } => assert!(o.is_identity()),
            _ => panic!(),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn arbitrary_scalar_payload_roundtrips(values in proptest::collection::vec(-1e12f64..1e12, 16)) {
            let grid = PeriodicGrid::new(2, 4).unwrap();
            let field = ScalarField::new(grid, values).unwrap();
            let meta = SnapshotMeta::new("phi", 2, 1, 4, 0.25, 1.0);
            let mut buf = Vec::new();
            write_scalar(&mut buf, &meta, &field).unwrap();
            let snap = parse_snapshot(&buf).unwrap();
            match snap.payload {
                SnapshotPayload::Scalar(f) => {
                    for (a, b) in field.data().iter().zip(f.data()) {
                        prop_assert_eq!(a.to_bits(), b.to_bits());
                    }
                }
                _ => prop_assert!(false),
            }
        }
    }
}
