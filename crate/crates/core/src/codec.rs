//! JSON encoding of complex data: a scalar is `[re, im]`, a vector is a list of
//! scalars, a matrix is a list of rows.

use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serializer};

use crate::quantum::{CMatrix, CVector, QuantumState, C64};

pub type Pair = [f64; 2];

pub fn to_pair(z: C64) -> Pair {
    [z.re, z.im]
}

pub fn from_pair(p: Pair) -> C64 {
    C64::new(p[0], p[1])
}

pub fn vector_to_pairs(v: &CVector) -> Vec<Pair> {
    v.iter().map(|z| to_pair(*z)).collect()
}

pub fn matrix_to_rows(m: &CMatrix) -> Vec<Vec<Pair>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| to_pair(m[(r, c)])).collect())
        .collect()
}

/// Row-major nested rows to a matrix; `None` when rows are ragged.
pub fn rows_to_matrix(rows: &[Vec<Pair>]) -> Option<CMatrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(CMatrix::from_fn(rows.len(), ncols, |r, c| from_pair(rows[r][c])))
}

pub fn serialize_vector<S: Serializer>(v: &CVector, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|z| to_pair(*z)))
}

pub fn deserialize_vector<'de, D: Deserializer<'de>>(d: D) -> Result<CVector, D::Error> {
    let pairs = Vec::<Pair>::deserialize(d)?;
    Ok(CVector::from_iterator(pairs.len(), pairs.into_iter().map(from_pair)))
}

pub fn serialize_matrix<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(matrix_to_rows(m))
}

pub fn serialize_states<S: Serializer>(states: &[QuantumState], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(states.len()))?;
    for st in states {
        seq.serialize_element(&vector_to_pairs(st.amplitudes()))?;
    }
    seq.end()
}
