use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// One sample per CSV row, returned as one sample per column.
pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(open(path)?);
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::parse(path, line, format!("expected {w} values, found {}", record.len())))
            }
            _ => {}
        }
        for cell in record.iter() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(path, line, format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, line, format!("non-finite value {cell:?}")));
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = width.ok_or_else(|| Error::parse(path, 1, "no data rows"))?;
    // row-major samples are exactly a column-major dim × n matrix
    Ok(Matrix::from_column_slice(cols, rows, &data))
}

pub fn save_matrix_csv(path: impl AsRef<Path>, x: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for col in x.column_iter() {
        let line: Vec<String> = col.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// One positive integer per line; blank lines and `#` comments are skipped.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let l: usize = t
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("not a class id: {t:?}")))?;
        if l == 0 {
            return Err(Error::parse(path, i + 1, "class ids start at 1"));
        }
        out.push(l);
    }
    if out.is_empty() {
        return Err(Error::parse(path, 1, "no labels"));
    }
    Ok(out)
}

pub fn save_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for l in labels {
        writeln!(w, "{l}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Matrix and labels, checked against each other.
pub fn load_dataset(data: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<super::Dataset> {
    let x = load_matrix_csv(&data)?;
    let l = load_labels(&labels)?;
    if l.len() != x.ncols() {
        return Err(Error::input(format!(
            "{} has {} samples but {} has {} labels",
            data.as_ref().display(),
            x.ncols(),
            labels.as_ref().display(),
            l.len()
        )));
    }
    super::Dataset::new(x, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn transposes_rows_to_columns() {
        let d = tempfile::tempdir().unwrap();
        let m = load_matrix_csv(write(&d, "a.csv", "1,2\n3,4\n")).unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]));
        let m = load_matrix_csv(write(&d, "b.csv", "1, 2, 3\n\n4,5,6")).unwrap();
        assert_eq!(m.shape(), (3, 2));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let d = tempfile::tempdir().unwrap();
        assert!(load_matrix_csv(write(&d, "e.csv", "")).is_err());
        let e = load_matrix_csv(write(&d, "r.csv", "1,2\n3\n")).unwrap_err().to_string();
        assert!(e.contains(":2:"), "{e}");
        let e = load_matrix_csv(write(&d, "n.csv", "1,2\n3,4\nx,5\n")).unwrap_err().to_string();
        assert!(e.contains(":3:") && e.contains("\"x\""), "{e}");
        let e = load_labels(write(&d, "l.txt", "1\n2\nfoo\n")).unwrap_err().to_string();
        assert!(e.contains(":3:"), "{e}");
        assert!(load_labels(write(&d, "z.txt", "0\n")).is_err());
        assert!(load_matrix_csv(d.path().join("missing.csv")).is_err());
    }

    #[test]
    fn dataset_from_files() {
        let d = tempfile::tempdir().unwrap();
        let x = write(&d, "x.csv", "1,0\n0,1\n1,1\n");
        let ds = load_dataset(&x, write(&d, "y.txt", "1\n2\n1\n")).unwrap();
        assert_eq!(ds.class_index[&1], vec![0, 2]);
        assert_eq!(ds.class_index[&2], vec![1]);
        assert!(load_dataset(&x, write(&d, "short.txt", "1\n2\n")).is_err());
    }

    #[test]
    fn round_trip_exact() {
        let d = tempfile::tempdir().unwrap();
        let m = crate::numerics::Rng::new(3).normal_matrix(4, 5);
        let p = d.path().join("m.csv");
        save_matrix_csv(&p, &m).unwrap();
        assert_eq!(load_matrix_csv(&p).unwrap(), m);
        let q = d.path().join("l.txt");
        save_labels(&q, &[3, 1, 2]).unwrap();
        assert_eq!(load_labels(&q).unwrap(), vec![3, 1, 2]);
    }
}
