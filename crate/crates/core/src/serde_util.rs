//! Serde adapters for complex matrices (rows of `[re, im]` pairs).

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::CMat;

fn to_rows(m: &CMat) -> Vec<Vec<Complex64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

fn from_rows<E: serde::de::Error>(rows: Vec<Vec<Complex64>>) -> Result<CMat, E> {
    let n = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(E::custom("ragged matrix rows"));
    }
    Ok(CMat::from_fn(n, cols, |r, c| rows[r][c]))
}

pub mod cmat_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[CMat], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Vec<Complex64>>> = v.iter().map(to_rows).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
        let raw: Vec<Vec<Vec<Complex64>>> = Vec::deserialize(d)?;
        raw.into_iter().map(from_rows).collect()
    }
}
