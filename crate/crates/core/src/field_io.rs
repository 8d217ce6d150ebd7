//! Field files: a JSON header plus a value payload in a sibling file.
//!
//! The payload is either raw little-endian `f64` values or one CSV row per
//! cell, in both cases ordered by row-major cell index with the `n`
//! components of a cell adjacent.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::sampled_field::{GridSpec, NormExponent, SampledFunction};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadFormat {
    F64le,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub grid: GridSpec,
    pub n: usize,
    pub q: NormExponent,
    pub format: PayloadFormat,
    /// Payload path, relative to the header's directory.
    pub payload: String,
}

fn payload_path(header_path: &Path, payload: &str) -> PathBuf {
    header_path
        .parent()
        .map(|p| p.join(payload))
        .unwrap_or_else(|| PathBuf::from(payload))
}

pub fn encode_f64le(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_f64le(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format("payload length is not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn encode_csv(f: &SampledFunction) -> String {
    let mut out = String::new();
    for c in 0..f.num_cells() {
        let row: Vec<String> = f.value(c).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn decode_csv(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        for tok in line.split(',') {
            out.push(tok.trim().parse::<f64>().map_err(|e| {
                Error::Format(format!("line {}: {e}", line_no + 1))
            })?);
        }
    }
    Ok(out)
}

/// Writes `header_path` and its payload next to it (`<stem>.bin` or `<stem>.csv`).
pub fn write_field(header_path: &Path, f: &SampledFunction, format: PayloadFormat) -> Result<()> {
    let stem = header_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("field");
    let payload = match format {
        PayloadFormat::F64le => format!("{stem}.bin"),
        PayloadFormat::Csv => format!("{stem}.csv"),
    };
    let header = FieldHeader {
        grid: f.grid.clone(),
        n: f.n,
        q: f.q,
        format,
        payload: payload.clone(),
    };
    let ppath = payload_path(header_path, &payload);
    match format {
        PayloadFormat::F64le => fs::write(&ppath, encode_f64le(f.values()))?,
        PayloadFormat::Csv => fs::write(&ppath, encode_csv(f))?,
    }
    fs::write(header_path, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn read_field(header_path: &Path) -> Result<SampledFunction> {
    let header: FieldHeader = serde_json::from_str(&fs::read_to_string(header_path)?)?;
    let ppath = payload_path(header_path, &header.payload);
    let values = match header.format {
        PayloadFormat::F64le => decode_f64le(&fs::read(&ppath)?)?,
        PayloadFormat::Csv => decode_csv(&fs::read_to_string(&ppath)?)?,
    };
    SampledFunction::new(header.grid, header.n, header.q, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn little_endian_layout() {
        let bytes = encode_f64le(&[1.0]);
        assert_eq!(bytes, vec![0, 0, 0, 0, 0, 0, 0xf0, 0x3f]);
        assert_eq!(decode_f64le(&bytes).unwrap(), vec![1.0]);
        assert!(decode_f64le(&[0u8; 7]).is_err());
    }

    #[test]
    fn csv_rows_are_cells() {
        let f = SampledFunction::new(
            GridSpec::unit(1, 1),
            2,
            NormExponent::Infinity,
            vec![1.0, -2.5, 0.125, 3.0],
        )
        .unwrap();
        let text = encode_csv(&f);
        assert_eq!(text, "1.0,-2.5\n0.125,3.0\n");
        assert_eq!(decode_csv(&text).unwrap(), f.values());
    }
}
