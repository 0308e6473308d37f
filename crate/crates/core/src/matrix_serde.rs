//! Serialize `Array2<f64>` as a row-major array of arrays.

use ndarray::Array2;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.outer_iter().map(|r| r.to_vec()).collect();
    rows.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
    let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
    rows_to_matrix(rows).map_err(D::Error::custom)
}

pub(crate) fn rows_to_matrix(rows: Vec<Vec<f64>>) -> Result<Array2<f64>, String> {
    let n = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err("ragged matrix rows".into());
    }
    Array2::from_shape_vec((n, c), rows.into_iter().flatten().collect()).map_err(|e| e.to_string())
}
