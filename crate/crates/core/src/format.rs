//! Float presentation shared by every CSV and JSON writer: 9 significant digits.

use serde::Serializer;

/// Rounds `x` to 9 significant digits. Non-finite values pass through.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Text form used in CSV cells.
pub fn fmt9(x: f64) -> String {
    format!("{}", sig9(x))
}

pub fn ser_sig9<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(sig9(*x))
}

pub fn ser_sig9_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_some(&sig9(*v)),
        None => s.serialize_none(),
    }
}

pub fn ser_sig9_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|x| sig9(*x)))
}
