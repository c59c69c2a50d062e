//! Number formatting shared by every CSV writer.

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Parses a field written by [`num`]; empty means missing.
pub fn parse_opt(field: &str) -> anyhow::Result<Option<f64>> {
    let f = field.trim();
    if f.is_empty() {
        Ok(None)
    } else {
        Ok(Some(f.parse()?))
    }
}
