//! Number formatting shared by the CSV and JSON writers.

use serde::Serializer;

/// Formats `x` with 17 significant digits in scientific notation, which
/// round-trips every finite `f64`. Non-finite values print as `NaN`,
/// `inf` or `-inf`.
pub fn sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// `serialize_with` helper emitting a JSON number with 17 significant
/// digits; non-finite values become `null`.
pub fn serialize_sig17<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        let n: serde_json::Number = sig17(*x)
            .parse()
            .map_err(|e| serde::ser::Error::custom(format!("{e}")))?;
        serde::Serialize::serialize(&n, s)
    } else {
        s.serialize_none()
    }
}

pub fn serialize_sig17_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => serialize_sig17(v, s),
        None => s.serialize_none(),
    }
}
