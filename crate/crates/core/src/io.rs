//! Plain-text output helpers. Every table is comma-separated with a header
//! row, LF line endings and `.` as the decimal mark.

use std::io::{self, Write};

use crate::field::ScalarField;

/// Shortest round-trip representation. Very small or very large magnitudes
/// switch to exponent notation so no value expands to hundreds of digits.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Minimal CSV table writer.
pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
    line: String,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, header: &[&str]) -> io::Result<Self> {
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out, columns: header.len(), line: String::new() })
    }

    pub fn row(&mut self, values: &[f64]) -> io::Result<()> {
        debug_assert_eq!(values.len(), self.columns);
        self.line.clear();
        for (k, v) in values.iter().enumerate() {
            if k > 0 {
                self.line.push(',');
            }
            self.line.push_str(&fmt_f64(*v));
        }
        writeln!(self.out, "{}", self.line)
    }

    /// Row whose leading integer columns are printed without a decimal point.
    pub fn row_with_ids(&mut self, ids: &[u64], values: &[f64]) -> io::Result<()> {
        debug_assert_eq!(ids.len() + values.len(), self.columns);
        self.line.clear();
        for (k, id) in ids.iter().enumerate() {
            if k > 0 {
                self.line.push(',');
            }
            self.line.push_str(&id.to_string());
        }
        for v in values {
            self.line.push(',');
            self.line.push_str(&fmt_f64(*v));
        }
        writeln!(self.out, "{}", self.line)
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Writes `(x, <column>)` pairs for one field.
pub fn write_field_csv<W: Write>(out: W, field: &ScalarField, column: &str) -> io::Result<()> {
    let mut w = CsvWriter::new(out, &["x", column])?;
    for (x, v) in field.grid().coords().into_iter().zip(field.values()) {
        w.row(&[x, *v])?;
    }
    w.finish().map(drop)
}

/// Density snapshot with columns `(x, rho)`.
pub fn write_density_csv<W: Write>(out: W, rho: &ScalarField) -> io::Result<()> {
    write_field_csv(out, rho, "rho")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips() {
        for v in [0.0, 1.0, -0.125, 1e-300, 3.0e20, 0.1 + 0.2, f64::MIN_POSITIVE, 12345.678] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
            assert!(s.len() < 30, "{s}");
            assert!(!s.contains(','));
        }
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(2.0), "2");
    }

    #[test]
    fn writer_layout() {
        let mut w = CsvWriter::new(Vec::new(), &["step", "walker_id", "x"]).unwrap();
        w.row_with_ids(&[3, 7], &[0.25]).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        assert_eq!(text, "step,walker_id,x\n3,7,0.25\n");
    }
}
