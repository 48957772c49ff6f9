//! Deterministic CSV number formatting shared by all emitters.

/// Formats a float with 9 significant digits in scientific notation, the
/// canonical form of every float column. Infinities (the PLOB bound at
/// zero distance) are emitted as `inf`.
pub fn sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    format!("{x:.8e}")
}
