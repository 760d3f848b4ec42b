use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Result, ScoreError};
use crate::kernels::SampleMatrix;

/// Writes one row per line under a `{prefix}1,…,{prefix}d` header, values in
/// round-trip `{:.16e}` form.
pub fn write_matrix_csv<W: Write>(out: W, data: ArrayView2<'_, f64>, prefix: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((1..=data.ncols()).map(|i| format!("{prefix}{i}")))?;
    for row in data.outer_iter() {
        w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headed numeric CSV. Errors name the offending line.
pub fn read_matrix_csv<R: Read>(input: R) -> Result<Array2<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let cols = r.headers()?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ScoreError::input(format!("line {line}: {e}")))?;
        if rec.len() != cols {
            return Err(ScoreError::input(format!("line {line}: {} fields, header has {cols}", rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| ScoreError::input(format!("line {line}: not a number: {field:?}")))?;
            values.push(v);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols), values).map_err(|e| ScoreError::input(format!("bad CSV shape: {e}")))
}

/// Samples as CSV with header `x1,…,xd`.
pub fn write_samples_csv(path: &Path, samples: ArrayView2<'_, f64>) -> Result<()> {
    write_matrix_csv(std::fs::File::create(path)?, samples, "x")
}

pub fn read_samples_csv(path: &Path) -> Result<SampleMatrix> {
    SampleMatrix::new(read_matrix_csv(std::fs::File::open(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_exact() {
        let a = array![[0.1, -1.0 / 3.0], [1e-300, 6.02e23]];
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, a.view(), "x").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2\n"));
        assert_eq!(read_matrix_csv(&buf[..]).unwrap(), a);
    }

    #[test]
    fn malformed_lines_are_reported() {
        let err = read_matrix_csv("x1,x2\n1,2\n3,abc\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = read_matrix_csv("x1,x2\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
