//! Cell formatting shared by the CSV writers.

/// Shortest round-trip decimal, with exponent notation for very small or
/// large magnitudes.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        serde_json::to_string(&x).expect("finite floats serialize")
    } else {
        x.to_string()
    }
}

pub fn fmt_bool(b: bool) -> String {
    b.to_string()
}

/// Empty cell for a missing value.
pub fn fmt_opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}
