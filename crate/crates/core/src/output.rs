//! Plain CSV writing with a fixed 17-significant-digit float format.

use std::io::Write;

use crate::error::{Error, Result};

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write equally long columns under a header row.
pub fn write_columns<W: Write>(out: W, headers: &[&str], columns: &[&[f64]]) -> Result<()> {
    if headers.len() != columns.len() {
        return Err(Error::Dimension {
            op: "write_columns",
            detail: format!("{} headers for {} columns", headers.len(), columns.len()),
        });
    }
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Dimension {
            op: "write_columns",
            detail: "columns differ in length".into(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(headers)?;
    for i in 0..n {
        w.write_record(columns.iter().map(|c| fmt_f64(c[i])))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-13, 1e300, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn header_and_rows() {
        let mut buf = Vec::new();
        write_columns(&mut buf, &["a", "b"], &[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("a,b\n1.0000000000000000e0,3.0000000000000000e0\n"));
    }
}
