//! CSV ingestion, atomic file writes and the 12-significant-digit output
//! format.

use std::fs;
use std::io::Write;
use std::path::Path;

use csib_core::data::Dataset;
use csib_core::{Matrix, SampleMatrix};
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// A numeric CSV table with its header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub values: Matrix,
}

/// Reads a comma-separated file with a header row and numeric cells.
/// Locations in errors count the header as line 1.
pub fn read_table(path: &Path) -> CliResult<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(CliError::parse(path, "file is empty or has no header row"));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = r + 2;
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::parse(
                    path,
                    format!("line {line}, column {} ({}): {cell:?} is not a number", c + 1, headers[c]),
                )
            })?;
            if !v.is_finite() {
                return Err(CliError::parse(path, format!("line {line}, column {}: non-finite value", c + 1)));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::parse(path, "no data rows"));
    }
    let values = Matrix::from_vec(rows, headers.len(), data)?;
    Ok(Table { headers, values })
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let located = e.position().map(|p| format!("line {}: ", p.line()));
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => CliError::parse(
            path,
            format!("{}expected {expected_len} fields, found {len}", located.unwrap_or_default()),
        ),
        other => CliError::parse(path, format!("{}{other:?}", located.unwrap_or_default())),
    }
}

/// Every column as a sample matrix.
pub fn load_samples(path: &Path) -> CliResult<SampleMatrix> {
    Ok(SampleMatrix::new(read_table(path)?.values)?)
}

/// Features are every column except `target` (the last column when
/// `None`), in file order.
pub fn load_csv(path: &Path, target: Option<&str>) -> CliResult<(Dataset, Vec<String>, String)> {
    let t = read_table(path)?;
    if t.headers.len() < 2 {
        return Err(CliError::parse(path, "need at least one feature column and a target column"));
    }
    let ti = match target {
        Some(name) => t
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::parse(path, format!("target column {name:?} not found")))?,
        None => t.headers.len() - 1,
    };
    let n = t.values.rows();
    let feat_cols: Vec<usize> = (0..t.headers.len()).filter(|&c| c != ti).collect();
    let features = Matrix::from_fn(n, feat_cols.len(), |i, j| t.values[(i, feat_cols[j])]);
    let targets = Matrix::from_fn(n, 1, |i, _| t.values[(i, ti)]);
    let names = feat_cols.iter().map(|&c| t.headers[c].clone()).collect();
    let ds = Dataset::new(SampleMatrix::new(features)?, SampleMatrix::new(targets)?)?;
    Ok((ds, names, t.headers[ti].clone()))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// `v` rounded to 12 significant digits.
pub fn round12(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().expect("formatted float parses")
}

/// CSV cell text: 12 significant digits, `inf`/`-inf` spelled out, empty
/// for absent values.
pub fn cell(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) if x == f64::NEG_INFINITY => "-inf".into(),
        Some(x) => round12(x).to_string(),
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round12(n.as_f64().expect("f64 number"));
            *v = serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number);
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

/// JSON value with every float at 12 significant digits. Fields listed in
/// `floats` that are infinite become `null`, and a nonempty list adds an
/// `"infinite"` flag.
pub fn json_record<T: Serialize>(value: &T, floats: &[(&str, f64)]) -> Value {
    let mut v = serde_json::to_value(value).expect("serializable record");
    round_value(&mut v);
    let inf = floats.iter().any(|(_, x)| x.is_infinite());
    if floats.is_empty() {
        return v;
    }
    if let Value::Object(o) = &mut v {
        for (name, x) in floats {
            if x.is_infinite() {
                o.insert((*name).to_owned(), Value::Null);
            }
        }
        o.insert("infinite".into(), Value::Bool(inf));
    }
    v
}

/// One compact JSON line ending in a newline.
pub fn json_line(v: &Value) -> String {
    let mut s = serde_json::to_string(v).expect("JSON value serializes");
    s.push('\n');
    s
}

pub fn csv_text(headers: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headers).map_err(|e| CliError::Usage(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Deserializes JSON, naming the offending field on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> CliResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        CliError::parse(path, format!("field `{field}`: {}", e.inner()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn three_row_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,y,b\n1,10,2\n3,30,4\n5,50,6\n");
        let (ds, names, target) = load_csv(&p, Some("y")).unwrap();
        assert_eq!(names, ["a", "b"]);
        assert_eq!(target, "y");
        assert_eq!(ds.features.matrix().as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(ds.targets.matrix().as_slice(), &[10.0, 30.0, 50.0]);
        let (last, _, t) = load_csv(&p, None).unwrap();
        assert_eq!(t, "b");
        assert_eq!(last.targets.matrix().as_slice(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn parse_errors_name_the_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "bad.csv", "a,y\n1,2\n3,oops\n");
        let e = load_csv(&p, None).unwrap_err().to_string();
        assert!(e.contains("line 3, column 2 (y)"), "{e}");
        let p = write(&dir, "empty.csv", "");
        assert!(matches!(load_csv(&p, None), Err(CliError::Parse { .. })));
        let p = write(&dir, "ok.csv", "a,y\n1,2\n");
        assert!(load_csv(&p, Some("z")).unwrap_err().to_string().contains("not found"));
        let p = write(&dir, "ragged.csv", "a,y\n1,2\n3\n");
        assert!(matches!(load_csv(&p, None), Err(CliError::Parse { .. })));
    }

    #[test]
    fn rounding_and_cells() {
        assert_eq!(round12(0.1 + 0.2), 0.3);
        assert_eq!(round12(1.0 / 3.0), 0.333333333333);
        assert_eq!(cell(Some(f64::INFINITY)), "inf");
        assert_eq!(cell(None), "");
        assert_eq!(cell(Some(2.5)), "2.5");
    }

    #[test]
    fn infinite_fields_become_null() {
        #[derive(Serialize)]
        struct R {
            a: f64,
            b: f64,
        }
        let v = json_record(&R { a: 1.0 / 3.0, b: f64::INFINITY }, &[("b", f64::INFINITY)]);
        assert_eq!(json_line(&v), "{\"a\":0.333333333333,\"b\":null,\"infinite\":true}\n");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
