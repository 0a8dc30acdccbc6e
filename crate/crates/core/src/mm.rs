//! Matrix Market reading and writing (real `coordinate` and `array`
//! formats, `general` and `symmetric` qualifiers) plus plain vector files.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_header(line: &str) -> Result<(Layout, Symmetry)> {
    let tokens: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'"));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(parse_err(1, format!("unsupported format '{other}'"))),
    };
    if tokens[3] != "real" && tokens[3] != "double" {
        return Err(parse_err(1, format!("unsupported field '{}'", tokens[3])));
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };
    Ok((layout, symmetry))
}

fn parse_usize(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what}")))
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64> {
    let v: f64 = tok
        .ok_or_else(|| parse_err(line, "missing value"))?
        .parse()
        .map_err(|_| parse_err(line, "invalid value"))?;
    if !v.is_finite() {
        return Err(parse_err(line, "non-finite value"));
    }
    Ok(v)
}

/// Parses Matrix Market text. Symmetric files are expanded to full storage.
pub fn parse_matrix_market(text: &str) -> Result<SparseMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let (layout, symmetry) = parse_header(header)?;

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = body.next().ok_or_else(|| parse_err(2, "missing size line"))?;
    let mut tok = size.split_whitespace();
    let n_rows = parse_usize(tok.next(), size_line, "row count")?;
    let n_cols = parse_usize(tok.next(), size_line, "column count")?;
    if symmetry == Symmetry::Symmetric && n_rows != n_cols {
        return Err(parse_err(size_line, "symmetric matrix must be square"));
    }

    let mut triplets = Vec::new();
    match layout {
        Layout::Coordinate => {
            let nnz = parse_usize(tok.next(), size_line, "entry count")?;
            let mut seen = 0;
            for (ln, l) in body {
                let mut t = l.split_whitespace();
                let i = parse_usize(t.next(), ln, "row index")?;
                let j = parse_usize(t.next(), ln, "column index")?;
                let v = parse_f64(t.next(), ln)?;
                if i == 0 || j == 0 || i > n_rows || j > n_cols {
                    return Err(Error::IndexOutOfBounds {
                        row: i.wrapping_sub(1),
                        col: j.wrapping_sub(1),
                        n_rows,
                        n_cols,
                    });
                }
                let (i, j) = (i - 1, j - 1);
                // Either triangle is accepted; storing both halves of a pair
                // surfaces as a duplicate entry.
                if symmetry == Symmetry::Symmetric && i != j {
                    triplets.push((j, i, v));
                }
                triplets.push((i, j, v));
                seen += 1;
            }
            if seen != nnz {
                return Err(parse_err(size_line, format!("declared {nnz} entries, found {seen}")));
            }
        }
        Layout::Array => {
            // Column-major; symmetric arrays store the lower triangle only.
            let mut values = Vec::new();
            for (ln, l) in body {
                for t in l.split_whitespace() {
                    values.push(parse_f64(Some(t), ln)?);
                }
            }
            let expected = match symmetry {
                Symmetry::General => n_rows * n_cols,
                Symmetry::Symmetric => n_rows * (n_rows + 1) / 2,
            };
            if values.len() != expected {
                return Err(parse_err(
                    size_line,
                    format!("array expects {expected} values, found {}", values.len()),
                ));
            }
            let mut it = values.into_iter();
            for j in 0..n_cols {
                let first = if symmetry == Symmetry::Symmetric { j } else { 0 };
                for i in first..n_rows {
                    let v = it.next().expect("length checked");
                    if v == 0.0 {
                        continue;
                    }
                    triplets.push((i, j, v));
                    if symmetry == Symmetry::Symmetric && i != j {
                        triplets.push((j, i, v));
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(n_rows, n_cols, triplets)
}

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    parse_matrix_market(&read_to_string(path.as_ref())?)
}

/// Coordinate/general text with shortest round-trip value formatting.
pub fn format_matrix_market(m: &SparseMatrix) -> String {
    let mut s = String::with_capacity(32 * m.nnz() + 64);
    s.push_str("%%MatrixMarket matrix coordinate real general\n");
    s.push_str(&format!("{} {} {}\n", m.n_rows(), m.n_cols(), m.nnz()));
    for (i, j, v) in m.triplets() {
        s.push_str(&format!("{} {} {:?}\n", i + 1, j + 1, v));
    }
    s
}

pub fn write_matrix_market(m: &SparseMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), format_matrix_market(m).as_bytes())
}

/// Reads a vector stored either one value per line or as a Matrix Market
/// dense array with a single column.
pub fn load_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    parse_vector(&read_to_string(path.as_ref())?)
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    if text.trim_start().starts_with("%%MatrixMarket") {
        let m = parse_matrix_market(text)?;
        if m.n_cols() != 1 {
            return Err(parse_err(2, "vector file must have exactly one column"));
        }
        let mut v = vec![0.0; m.n_rows()];
        for (i, _, x) in m.triplets() {
            v[i] = x;
        }
        return Ok(v);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('%') && !t.starts_with('#')
        })
        .map(|(i, l)| parse_f64(Some(l.trim()), i + 1))
        .collect()
}

pub fn write_vector(v: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::with_capacity(24 * v.len());
    for x in v {
        s.push_str(&format!("{x:?}\n"));
    }
    write_file(path.as_ref(), s.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_coordinate() {
        let m = parse_matrix_market(
            "%%MatrixMarket matrix coordinate real general\n% comment\n2 2 2\n1 1 1.0\n2 2 1.0\n",
        )
        .unwrap();
        assert_eq!(m, SparseMatrix::identity(2));
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn symmetric_lower_triangle_is_expanded() {
        let m = parse_matrix_market(
            "%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 1\n2 1 0.5\n2 2 1\n",
        )
        .unwrap();
        assert_eq!(m.nnz(), 4);
        assert!(m.is_symmetric());
        assert_eq!(m.get(0, 1), Some(0.5));
    }

    #[test]
    fn out_of_bounds_entry() {
        let r = parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n");
        assert!(matches!(r, Err(Error::IndexOutOfBounds { .. })));
    }

    #[test]
    fn duplicate_entry() {
        let r = parse_matrix_market(
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n1 1 2.0\n",
        );
        assert!(matches!(r, Err(Error::DuplicateEntry { row: 0, col: 0 })));
    }

    #[test]
    fn malformed_inputs() {
        for text in [
            "",
            "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1.0\n",
            "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 2 1.0\n2 1 1.0\n",
            "not a header\n",
        ] {
            assert!(parse_matrix_market(text).is_err(), "accepted: {text:?}");
        }
    }

    #[test]
    fn array_formats() {
        let g = parse_matrix_market("%%MatrixMarket matrix array real general\n2 2\n1\n0.5\n0.5\n1\n")
            .unwrap();
        let s = parse_matrix_market("%%MatrixMarket matrix array real symmetric\n2 2\n1\n0.5\n1\n")
            .unwrap();
        assert_eq!(g, s);
        assert!(s.is_symmetric());
        let rect = parse_matrix_market("%%MatrixMarket matrix array real general\n3 1\n1\n0\n2\n")
            .unwrap();
        assert_eq!(rect.nnz(), 2);
    }

    #[test]
    fn vectors() {
        assert_eq!(parse_vector("1\n2.5\n\n-3e-1\n").unwrap(), vec![1.0, 2.5, -0.3]);
        assert_eq!(
            parse_vector("%%MatrixMarket matrix array real general\n3 1\n1\n0\n2\n").unwrap(),
            vec![1.0, 0.0, 2.0]
        );
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mtx");
        let m = SparseMatrix::from_triplets(3, 2, [(0, 0, 0.1), (2, 1, -1.0 / 3.0), (1, 0, 1e-300)])
            .unwrap();
        write_matrix_market(&m, &path).unwrap();
        assert_eq!(load_matrix_market(&path).unwrap(), m);

        let vpath = dir.path().join("v.txt");
        let v = vec![0.1, 1.0 / 3.0, -2.5e17];
        write_vector(&v, &vpath).unwrap();
        assert_eq!(load_vector(&vpath).unwrap(), v);

        assert!(matches!(
            load_matrix_market(dir.path().join("missing.mtx")),
            Err(Error::Io { .. })
        ));
    }
}
