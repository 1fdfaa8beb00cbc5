//! File formats: mixture JSON, point CSV, and JSON reports.
//!
//! Floats are written with the shortest representation that parses back to the
//! same value, so every write/read round trip is exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;

/// `DVector` as a flat JSON array.
pub mod vector_format {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// `DMatrix` as an array of rows.
pub mod matrix_format {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::matrix_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::matrix_from_rows(&rows).map_err(D::Error::custom)
    }
}

/// `Vec<DVector>` as an array of arrays.
pub mod vectors_format {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
        Ok(Vec::<Vec<f64>>::deserialize(d)?
            .into_iter()
            .map(DVector::from_vec)
            .collect())
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Builds a matrix from rows; a zero-row input yields a `0 x 0` matrix.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(format!("row {i} has {} entries, expected {cols}", rows[i].len()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn mixture_to_value(mix: &GaussianMixture) -> Value {
    json!({
        "k": mix.k(),
        "n": mix.n(),
        "weights": mix.weights(),
        "means": mix.means().iter().map(|m| m.as_slice().to_vec()).collect::<Vec<_>>(),
        "covariances": mix.covariances().iter().map(matrix_rows).collect::<Vec<_>>(),
    })
}

pub fn mixture_to_json(mix: &GaussianMixture) -> String {
    serde_json::to_string_pretty(&mixture_to_value(mix)).expect("mixture serializes")
}

fn field<'a>(obj: &'a Value, name: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| Error::schema(name, "missing field"))
}

fn as_count(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .filter(|&c| c > 0)
        .map(|c| c as usize)
        .ok_or_else(|| Error::schema(path, "expected a positive integer"))
}

fn as_array<'a>(v: &'a Value, path: &str, len: usize) -> Result<&'a Vec<Value>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::schema(path, "expected an array"))?;
    if arr.len() != len {
        return Err(Error::schema(path, format!("expected {len} entries, found {}", arr.len())));
    }
    Ok(arr)
}

fn as_floats(v: &Value, path: &str, len: usize) -> Result<Vec<f64>> {
    as_array(v, path, len)?
        .iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_f64()
                .filter(|f| f.is_finite())
                .ok_or_else(|| Error::schema(format!("{path}[{i}]"), "expected a finite number"))
        })
        .collect()
}

/// Parses and validates the mixture schema
/// `{"k", "n", "weights": [k], "means": [k][n], "covariances": [k][n][n]}`.
/// Errors carry the path of the offending field, e.g. `covariances[1][0][2]`.
pub fn mixture_from_value(v: &Value) -> Result<GaussianMixture> {
    if !v.is_object() {
        return Err(Error::schema("$", "expected an object"));
    }
    let k = as_count(field(v, "k")?, "k")?;
    let n = as_count(field(v, "n")?, "n")?;
    let weights = as_floats(field(v, "weights")?, "weights", k)?;
    let means = as_array(field(v, "means")?, "means", k)?
        .iter()
        .enumerate()
        .map(|(i, m)| as_floats(m, &format!("means[{i}]"), n).map(DVector::from_vec))
        .collect::<Result<Vec<_>>>()?;
    let mut covariances = Vec::with_capacity(k);
    for (i, c) in as_array(field(v, "covariances")?, "covariances", k)?.iter().enumerate() {
        let path = format!("covariances[{i}]");
        let rows = as_array(c, &path, n)?
            .iter()
            .enumerate()
            .map(|(r, row)| as_floats(row, &format!("{path}[{r}]"), n))
            .collect::<Result<Vec<_>>>()?;
        for r in 0..n {
            for s in r + 1..n {
                let (a, b) = (rows[r][s], rows[s][r]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::schema(
                        format!("{path}[{r}][{s}]"),
                        format!("not symmetric: [{r}][{s}] = {a} but [{s}][{r}] = {b}"),
                    ));
                }
            }
        }
        covariances.push(matrix_from_rows(&rows).map_err(|e| Error::schema(&path, e))?);
    }
    GaussianMixture::new(weights, means, covariances)
}

pub fn mixture_from_json(text: &str) -> Result<GaussianMixture> {
    mixture_from_value(&serde_json::from_str(text)?)
}

pub fn write_mixture(path: &Path, mix: &GaussianMixture) -> Result<()> {
    write_text(path, &mixture_to_json(mix))
}

pub fn read_mixture(path: &Path) -> Result<GaussianMixture> {
    mixture_from_json(&std::fs::read_to_string(path)?)
}

/// Point set read from CSV, with labels when a `label` column is present.
#[derive(Debug, Clone, PartialEq)]
pub struct PointsFile {
    pub points: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
}

/// Writes a header `x0,...,x{n-1}[,label]` and one row per point.
pub fn write_points_to<W: Write>(out: W, points: &DMatrix<f64>, labels: Option<&[usize]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != points.nrows() {
            return Err(Error::DimensionMismatch {
                expected: points.nrows(),
                got: l.len(),
            });
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..points.ncols()).map(|j| format!("x{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, row) in points.row_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_points(path: &Path, points: &DMatrix<f64>, labels: Option<&[usize]>) -> Result<()> {
    write_points_to(BufWriter::new(File::create(path)?), points, labels)
}

pub fn read_points_from<R: std::io::Read>(input: R) -> Result<PointsFile> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let label_col = header.iter().position(|h| h.trim() == "label");
    if let Some(c) = label_col {
        if c != header.len() - 1 {
            return Err(Error::schema("header", "the label column must be last"));
        }
    }
    let n = header.len() - usize::from(label_col.is_some());
    if n == 0 {
        return Err(Error::schema("header", "no coordinate columns"));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        for j in 0..n {
            let cell = rec.get(j).unwrap_or("").trim();
            let x: f64 = cell
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| Error::schema(format!("line {line}, column {}", header.get(j).unwrap_or("?")), format!("bad number {cell:?}")))?;
            data.push(x);
        }
        if label_col.is_some() {
            let cell = rec.get(n).unwrap_or("").trim();
            let l: usize = cell
                .parse()
                .map_err(|_| Error::schema(format!("line {line}, column label"), format!("bad label {cell:?}")))?;
            labels.push(l);
        }
    }
    let m = data.len() / n;
    Ok(PointsFile {
        points: DMatrix::from_row_slice(m, n, &data),
        labels: label_col.map(|_| labels),
    })
}

pub fn read_points(path: &Path) -> Result<PointsFile> {
    read_points_from(BufReader::new(File::open(path)?))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::random_mixture;

    #[test]
    fn mixture_round_trip_is_exact() {
        let mix = random_mixture(3, 4, 11).unwrap();
        let back = mixture_from_json(&mixture_to_json(&mix)).unwrap();
        assert_eq!(mix, back);
    }

    #[test]
    fn asymmetric_covariance_names_indices() {
        let mut v = mixture_to_value(&random_mixture(2, 3, 1).unwrap());
        v["covariances"][1][0][2] = json!(5.0);
        let err = mixture_from_value(&v).unwrap_err().to_string();
        assert!(err.contains("covariances[1][0][2]"), "{err}");
    }

    #[test]
    fn wrong_lengths_and_types() {
        let base = mixture_to_value(&random_mixture(2, 3, 1).unwrap());
        let mut v = base.clone();
        v["means"][0] = json!([1.0, 2.0]);
        assert!(mixture_from_value(&v).unwrap_err().to_string().contains("means[0]"));
        let mut v = base.clone();
        v["weights"][1] = json!("x");
        assert!(mixture_from_value(&v).unwrap_err().to_string().contains("weights[1]"));
        let mut v = base;
        v.as_object_mut().unwrap().remove("k");
        assert!(matches!(mixture_from_value(&v), Err(Error::Schema { .. })));
    }

    #[test]
    fn csv_round_trip_with_and_without_labels() {
        let s = random_mixture(2, 3, 4).unwrap().sample(50, 9);
        let mut buf = Vec::new();
        write_points_to(&mut buf, &s.points, Some(&s.labels)).unwrap();
        let back = read_points_from(buf.as_slice()).unwrap();
        assert_eq!(back.points, s.points);
        assert_eq!(back.labels.as_deref(), Some(&s.labels[..]));

        let mut buf = Vec::new();
        write_points_to(&mut buf, &s.points, None).unwrap();
        let back = read_points_from(buf.as_slice()).unwrap();
        assert_eq!(back.points, s.points);
        assert!(back.labels.is_none());
    }

    #[test]
    fn csv_bad_cell() {
        let text = "x0,x1\n1.0,2.0\n3.0,abc\n";
        let err = read_points_from(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn matrix_format_is_row_major() {
        #[derive(Serialize, serde::Deserialize, PartialEq, Debug)]
        struct Wrap {
            #[serde(with = "matrix_format")]
            m: DMatrix<f64>,
        }
        let w = Wrap {
            m: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        };
        let text = serde_json::to_string(&w).unwrap();
        assert_eq!(text, r#"{"m":[[1.0,2.0,3.0],[4.0,5.0,6.0]]}"#);
        assert_eq!(serde_json::from_str::<Wrap>(&text).unwrap(), w);
    }
}
