use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::CliResult;

/// Rounds to 12 significant digits. Non-finite values pass through.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Report number: rounded, non-finite becomes `null`.
pub(crate) fn num(x: f64) -> Value {
    serde_json::Number::from_f64(round12(x)).map_or(Value::Null, Value::Number)
}

/// Plain decimal in [1e-4, 1e15), exponent form otherwise.
pub(crate) fn csv_num(x: f64) -> String {
    let r = round12(x);
    let a = r.abs();
    if r == 0.0 || !r.is_finite() || (1e-4..1e15).contains(&a) {
        r.to_string()
    } else {
        format!("{r:e}")
    }
}

/// Writes `bytes` to `out` when given, else to `stdout`.
pub(crate) fn emit(bytes: &[u8], out: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => stdout.write_all(bytes)?,
    }
    Ok(())
}

pub(crate) fn emit_json(report: &Value, out: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    emit(text.as_bytes(), out, stdout)
}

/// Exact (unrounded) JSON for state and table files.
pub(crate) fn write_exact<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// CSV with a header row and LF line endings.
pub(crate) fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| crate::CliError::Runtime(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(round12(0.494_631_999_999_87), 0.494632);
        assert_eq!(round12(2.021_699_571_352_894), 2.02169957135);
        assert_eq!(round12(1e-120), 1e-120);
        assert!(round12(f64::INFINITY).is_infinite());
        assert_eq!(num(f64::NAN), Value::Null);
        assert_eq!(csv_num(1.172_102_297_534_5e-117), "1.17210229753e-117");
        assert_eq!(csv_num(0.02), "0.02");
        assert_eq!(csv_num(540.5883), "540.5883");
    }
}
