//! Shared number formatting and CSV helpers for the file formats.

use std::io::Read;

use crate::error::{Error, Result};

/// Significant digits carried by every floating value written to disk.
pub const SIG_DIGITS: usize = 12;

/// Rounds `x` to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let s = format!("{:.*e}", digits.saturating_sub(1), x);
    s.parse().unwrap_or(x)
}

/// Formats `x` with at most [`SIG_DIGITS`] significant digits, no exponent.
pub fn fmt_num(x: f64) -> String {
    let r = round_sig(x, SIG_DIGITS);
    // avoid "-0"
    if r == 0.0 {
        return "0".to_string();
    }
    format!("{r}")
}

/// Reads a headed CSV into rows of floats, skipping `#` comment lines.
///
/// Returns the header names, the numeric rows, and the comment lines
/// (without the leading `#`, trimmed).
pub(crate) fn read_numeric_csv<R: Read>(
    mut reader: R,
    expected: &[&str],
) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut comments = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(c) = line.trim_start().strip_prefix('#') {
            comments.push(c.trim().to_string());
        } else if !line.trim().is_empty() {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Format(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            headers.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {}: `{f}` is not a number", line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((rows, comments))
}
