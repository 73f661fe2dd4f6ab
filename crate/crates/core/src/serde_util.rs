//! Serde adapters writing nalgebra types as flat JSON arrays.

pub mod dvector {
    use nalgebra::DVector;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }
}

pub mod opt_matrix3 {
    use nalgebra::Matrix3;
    use serde::Serializer;

    /// Row-major nine-element array, or `null`.
    pub fn serialize<S: Serializer>(m: &Option<Matrix3<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => s.collect_seq((0..3).flat_map(|r| (0..3).map(move |c| m[(r, c)]))),
            None => s.serialize_none(),
        }
    }
}
