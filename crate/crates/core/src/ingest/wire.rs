//! Newline-delimited wire records, one JSON object per sample.

use std::io::Write;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{VitalKind, VitalSample};

pub const MAX_LINE_BYTES: usize = 1024;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    patient: String,
    kind: VitalKind,
    ts_ms: i64,
    value: f64,
    seq: u64,
}

fn parse_error(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

/// Parse one record. A trailing `\n` or `\r\n` is ignored.
pub fn parse_line(line: &str) -> Result<VitalSample> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.len() > MAX_LINE_BYTES {
        return Err(parse_error(
            MAX_LINE_BYTES,
            format!("line of {} bytes exceeds {MAX_LINE_BYTES}", line.len()),
        ));
    }
    let rec: WireRecord = serde_json::from_str(line).map_err(|e| {
        // serde_json reports a 1-based column in bytes on the only line.
        parse_error(e.column().saturating_sub(1), e.to_string())
    })?;
    if !rec.value.is_finite() {
        let offset = line.find("\"value\"").unwrap_or(0);
        return Err(parse_error(offset, "non-finite value"));
    }
    if rec.patient.is_empty() {
        let offset = line.find("\"patient\"").unwrap_or(0);
        return Err(parse_error(offset, "empty patient id"));
    }
    Ok(VitalSample {
        patient_id: rec.patient,
        kind: rec.kind,
        ts_ms: rec.ts_ms,
        value: rec.value,
        seq: rec.seq,
    })
}

/// Serialize without the trailing newline.
pub fn to_line(s: &VitalSample) -> String {
    serde_json::to_string(s).expect("samples always serialize")
}

pub fn write_samples<'a, W: Write>(
    mut out: W,
    samples: impl IntoIterator<Item = &'a VitalSample>,
) -> Result<usize> {
    let mut n = 0;
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_example_record() {
        let line = r#"{"patient":"p-001","kind":"heart_rate","ts_ms":1700000000000,"value":72.0,"seq":17}"#;
        let s = parse_line(line).unwrap();
        assert_eq!(
            s,
            VitalSample {
                patient_id: "p-001".into(),
                kind: VitalKind::HeartRate,
                ts_ms: 1_700_000_000_000,
                value: 72.0,
                seq: 17
            }
        );
        assert_eq!(to_line(&s), line);
        assert_eq!(parse_line(&format!("{line}\r\n")).unwrap(), s);
    }

    #[test]
    fn rejects_unknown_kind() {
        let e = parse_line(r#"{"patient":"p-001","kind":"xyz","ts_ms":1,"value":1.0,"seq":1}"#)
            .unwrap_err();
        match e {
            Error::Parse { offset, .. } => assert!(offset > 0 && offset < 40, "offset {offset}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_and_malformed() {
        assert!(parse_line(r#"{"patient":"p-001","kind":"blood_ph","ts_ms":1,"value":"NaN","seq":1}"#).is_err());
        assert!(parse_line(r#"{"patient":"p-001","kind":"blood_ph","ts_ms":1,"value":1e999,"seq":1}"#).is_err());
        assert!(parse_line(r#"{"patient":"p-001","kind":"blood_ph","ts_ms":1,"value":7.4}"#).is_err());
        assert!(parse_line(r#"{"patient":"p-001","kind":"blood_ph","ts_ms":1,"value":7.4,"seq":-1}"#).is_err());
        assert!(parse_line(r#"{"patient":"p-001","kind":"blood_ph","ts_ms":1,"value":7.4,"seq":1,"x":0}"#).is_err());
        assert!(parse_line(r#"{"patient":"p-001","kind":"blood_ph","#).is_err());
        assert!(parse_line("").is_err());
    }

    #[test]
    fn rejects_overlong_line() {
        let long = format!(
            r#"{{"patient":"{}","kind":"blood_ph","ts_ms":1,"value":7.4,"seq":1}}"#,
            "p".repeat(1100)
        );
        assert!(matches!(parse_line(&long), Err(Error::Parse { offset: MAX_LINE_BYTES, .. })));
    }
}
