//! Plain-array serialization for nalgebra vectors.

use alloc::vec::Vec;
use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serializer};

pub(crate) fn serialize_dvector<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

pub(crate) fn deserialize_dvector<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
    let values = Vec::<f64>::deserialize(d)?;
    Ok(DVector::from_vec(values))
}
