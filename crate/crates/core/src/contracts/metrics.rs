//! Minimal plain-text metrics exposition: one `<name> <value>` pair per line.

use std::fmt::Write;

/// Renders name/value pairs, one per line, with a trailing newline.
pub fn render(samples: &[(&str, f64)]) -> String {
    let mut out = String::new();
    for (name, value) in samples {
        if value.fract() == 0.0 && value.abs() < 1e15 {
            let _ = writeln!(out, "{name} {}", *value as i64);
        } else {
            let _ = writeln!(out, "{name} {value}");
        }
    }
    out
}

/// Parses exposition text. Blank lines and `#` comments are skipped; any
/// other malformed line is an error naming its 1-based line number.
pub fn parse(text: &str) -> Result<Vec<(String, f64)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("line {}: expected `<name> <value>`", n + 1));
        };
        let value: f64 = value
            .parse()
            .map_err(|_| format!("line {}: {value:?} is not a number", n + 1))?;
        out.push((name.to_string(), value));
    }
    Ok(out)
}

/// Looks up one metric in exposition text.
pub fn lookup(text: &str, name: &str) -> Option<f64> {
    parse(text)
        .ok()?
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, v)| v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_render_without_decimal_point() {
        let text = render(&[("up", 1.0), ("http_requests_total", 42.0), ("x", 1.5)]);
        assert_eq!(text, "up 1\nhttp_requests_total 42\nx 1.5\n");
        assert_eq!(lookup(&text, "x"), Some(1.5));
        assert_eq!(lookup(&text, "missing"), None);
    }

    #[test]
    fn malformed_line_is_reported() {
        assert!(parse("up 1\nbroken\n").unwrap_err().contains("line 2"));
        assert!(parse("# HELP up\n\nup 1\n").is_ok());
    }
}
